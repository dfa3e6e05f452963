//! Shared setup for the criterion benchmarks: turns synthetic tables into
//! network nodes and run inputs without touching the filesystem.

use pdrsim_core::engine::{CountyConfig, InitialLevels, PhysicalInit};
use pdrsim_core::geo::GeoPoint;
use pdrsim_core::net::{
    build_network, HumanNode, Layer, MultilayerNetwork, NodeId, PhysicalNode, SocialNode,
};
use pdrsim_core::synth::{self, SyntheticSpec};

pub struct BenchInstance {
    pub net: MultilayerNetwork,
    pub configs: Vec<CountyConfig>,
    pub initial: InitialLevels,
}

/// Builds the default two-county synthetic instance at 1 km radius.
pub fn default_instance(seed: u64) -> BenchInstance {
    scaled_instance(seed, 1.0)
}

/// Same instance with home and POI counts scaled by `factor`.
pub fn scaled_instance(seed: u64, factor: f64) -> BenchInstance {
    let mut spec = SyntheticSpec::default();
    for c in &mut spec.counties {
        c.homes = ((c.homes as f64) * factor).round() as u32;
        c.pois = ((c.pois as f64) * factor).round() as u32;
    }
    let data = synth::generate(&spec, seed).expect("valid default recipe");

    let humans: Vec<HumanNode> = data
        .homes
        .iter()
        .enumerate()
        .map(|(i, r)| HumanNode {
            id: NodeId { layer: Layer::Human, index: i as u32 },
            location: GeoPoint::new(r.lat, r.lon).expect("generated coordinates are valid"),
            county: r.county,
            income_usd: r.income_usd,
            owns_house: r.owns_house == 1,
        })
        .collect();
    let socials: Vec<SocialNode> = data
        .pois
        .iter()
        .enumerate()
        .map(|(i, r)| SocialNode {
            id: NodeId { layer: Layer::Social, index: i as u32 },
            location: GeoPoint::new(r.lat, r.lon).expect("generated coordinates are valid"),
            county: r.county,
            baseline_daily_visits: r.baseline_daily_visits,
        })
        .collect();
    let physicals: Vec<PhysicalNode> = data
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| PhysicalNode {
            id: NodeId { layer: Layer::Physical, index: i as u32 },
            county: p.county,
            location: GeoPoint::new(p.lat, p.lon).expect("generated coordinates are valid"),
        })
        .collect();

    let initial = InitialLevels {
        human: data.homes.iter().map(|r| f64::from(r.initial_level)).collect(),
        social: data.pois.iter().map(|r| r.initial_level).collect(),
        physical: PhysicalInit::FromCurve,
    };
    let configs: Vec<CountyConfig> = data
        .params
        .iter()
        .map(|p| CountyConfig {
            county: p.county,
            dynamics: p.dynamics,
            curve: p.curve,
            model: p.model.clone(),
        })
        .collect();
    let net = build_network(humans, socials, physicals, 1.0).expect("generated instance builds");
    BenchInstance { net, configs, initial }
}
