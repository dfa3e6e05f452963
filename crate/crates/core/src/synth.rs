//! Synthetic input generation: homes, POIs, and per-county parameters.
//!
//! Each county mixes an urban component (Gaussian clusters around random
//! anchors) with a uniform background over its bounding box. Raising the
//! urban fraction concentrates nodes and raises mean intra-layer degree at
//! equal counts. All draws come from one seeded ChaCha stream, so a seed
//! fully determines the output tables.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::income_band_to_dollars;
use crate::dynamics::{self, DynamicParams, DynamicsError, LogisticCurve};
use crate::engine::ModelChoice;
use crate::io::{CountyParams, HomeRow, PoiRow};
use crate::net::CountyId;

/// Errors raised by specification validation.
#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("county {county}: {field} = {value} must lie in [0, 1]")]
    FractionOutOfRange { county: CountyId, field: &'static str, value: f64 },
    #[error("county {county}: income band weights must be non-negative and sum to 1 (sum = {sum})")]
    BadBandWeights { county: CountyId, sum: f64 },
    #[error("county {county}: bounding box must satisfy min < max on both axes")]
    EmptyBoundingBox { county: CountyId },
    #[error("county {county}: bounding box must stay within latitude 85 and a 180-degree longitude span")]
    BoundingBoxOutOfRange { county: CountyId },
    #[error("county {county}: cluster sigma must be finite and non-negative")]
    BadClusterSigma { county: CountyId },
    #[error("county {county}: urban fraction positive but cluster count is zero")]
    NoClusters { county: CountyId },
    #[error("county {county}: initial social range must satisfy 0 <= low <= high <= 1")]
    BadSocialRange { county: CountyId },
    #[error("duplicate county id {0}")]
    DuplicateCounty(CountyId),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Axis-aligned latitude/longitude box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    fn center(&self) -> (f64, f64) {
        ((self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0)
    }
}

/// Generation recipe for one county.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountySynthSpec {
    pub county: CountyId,
    pub homes: u32,
    pub pois: u32,
    pub bbox: BoundingBox,
    /// Share of nodes drawn from urban clusters instead of the uniform
    /// background.
    pub urban_fraction: f64,
    pub clusters: u32,
    pub home_cluster_sigma_deg: f64,
    pub poi_cluster_sigma_deg: f64,
    /// Probability of each of the nine household income bands; sums to 1.
    pub income_band_weights: [f64; 9],
    pub ownership_rate: f64,
    /// Share of homes starting displaced (initial level 0).
    pub evacuated_fraction: f64,
    /// Uniform range for day-0 POI levels.
    pub initial_social_range: (f64, f64),
    pub dynamics: DynamicParams,
    pub curve: LogisticCurve,
    pub model: ModelChoice,
}

/// Full synthetic-scenario recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub counties: Vec<CountySynthSpec>,
}

impl Default for SyntheticSpec {
    /// Two-county default: a dense flood-basin county and a sparser coastal
    /// county, sized so a full run stays interactive.
    ///
    /// The default growth parameters are tuned for node-level updates on
    /// networks with hundreds of neighbors per node: neighbor sums (not
    /// means) enter the social rule, so per-edge rates must be far smaller
    /// than the county-aggregate presets. The curve ceilings also sit below
    /// half the physical capacity, which keeps extra repair speed strictly
    /// beneficial to the social layer.
    fn default() -> Self {
        let uniform_bands = [1.0 / 9.0; 9];
        let dynamics_0 = DynamicParams::new(0.20, 0.736, 0.10, 0.935, dynamics::N_BAR_HARRIS)
            .expect("valid default dynamics");
        let dynamics_1 = DynamicParams::new(0.20, 0.736, 0.10, 0.935, dynamics::N_BAR_GALVESTON)
            .expect("valid default dynamics");
        SyntheticSpec {
            counties: vec![
                CountySynthSpec {
                    county: 0,
                    homes: 2200,
                    pois: 1600,
                    bbox: BoundingBox {
                        lat_min: 29.12,
                        lat_max: 29.28,
                        lon_min: -95.68,
                        lon_max: -95.52,
                    },
                    urban_fraction: 0.75,
                    clusters: 3,
                    home_cluster_sigma_deg: 0.012,
                    poi_cluster_sigma_deg: 0.014,
                    income_band_weights: uniform_bands,
                    ownership_rate: 0.6,
                    evacuated_fraction: 1.0,
                    initial_social_range: (0.40, 0.50),
                    dynamics: dynamics_0,
                    curve: LogisticCurve::new(0.07, 0.24, 1.2, 1.5).expect("valid default curve"),
                    model: ModelChoice::Harris,
                },
                CountySynthSpec {
                    county: 1,
                    homes: 2200,
                    pois: 1600,
                    bbox: BoundingBox {
                        lat_min: 29.62,
                        lat_max: 29.78,
                        lon_min: -95.68,
                        lon_max: -95.52,
                    },
                    urban_fraction: 0.35,
                    clusters: 3,
                    home_cluster_sigma_deg: 0.012,
                    poi_cluster_sigma_deg: 0.014,
                    income_band_weights: uniform_bands,
                    ownership_rate: 0.6,
                    evacuated_fraction: 1.0,
                    initial_social_range: (0.40, 0.50),
                    dynamics: dynamics_1,
                    curve: LogisticCurve::new(0.08, 0.22, 1.0, 2.0).expect("valid default curve"),
                    model: ModelChoice::Other,
                },
            ],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.counties {
            if !seen.insert(c.county) {
                return Err(SynthError::DuplicateCounty(c.county));
            }
            for (field, value) in [
                ("urban_fraction", c.urban_fraction),
                ("ownership_rate", c.ownership_rate),
                ("evacuated_fraction", c.evacuated_fraction),
            ] {
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(SynthError::FractionOutOfRange {
                        county: c.county,
                        field,
                        value,
                    });
                }
            }
            let sum: f64 = c.income_band_weights.iter().sum();
            if c.income_band_weights.iter().any(|&w| !w.is_finite() || w < 0.0)
                || (sum - 1.0).abs() > 1e-9
            {
                return Err(SynthError::BadBandWeights { county: c.county, sum });
            }
            if !(c.bbox.lat_min < c.bbox.lat_max && c.bbox.lon_min < c.bbox.lon_max) {
                return Err(SynthError::EmptyBoundingBox { county: c.county });
            }
            if c.bbox.lat_min < -85.0
                || c.bbox.lat_max > 85.0
                || c.bbox.lon_min < -180.0
                || c.bbox.lon_max > 180.0
                || c.bbox.lon_max - c.bbox.lon_min > 180.0
            {
                return Err(SynthError::BoundingBoxOutOfRange { county: c.county });
            }
            for sigma in [c.home_cluster_sigma_deg, c.poi_cluster_sigma_deg] {
                if !sigma.is_finite() || sigma < 0.0 {
                    return Err(SynthError::BadClusterSigma { county: c.county });
                }
            }
            if c.urban_fraction > 0.0 && c.clusters == 0 {
                return Err(SynthError::NoClusters { county: c.county });
            }
            let (lo, hi) = c.initial_social_range;
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(SynthError::BadSocialRange { county: c.county });
            }
            c.dynamics.validate()?;
        }
        Ok(())
    }
}

/// Generated tables, ready to write or to feed directly into loading.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub homes: Vec<HomeRow>,
    pub pois: Vec<PoiRow>,
    pub params: Vec<CountyParams>,
}

struct Anchors {
    lat: Vec<f64>,
    lon: Vec<f64>,
}

fn draw_anchors(rng: &mut ChaCha8Rng, bbox: &BoundingBox, clusters: u32) -> Anchors {
    // Keep anchors off the box edge so cluster mass stays mostly inside.
    let lat_margin = 0.15 * (bbox.lat_max - bbox.lat_min);
    let lon_margin = 0.15 * (bbox.lon_max - bbox.lon_min);
    let mut lat = Vec::with_capacity(clusters as usize);
    let mut lon = Vec::with_capacity(clusters as usize);
    for _ in 0..clusters {
        let u: f64 = rng.random();
        lat.push(bbox.lat_min + lat_margin + u * (bbox.lat_max - bbox.lat_min - 2.0 * lat_margin));
        let u: f64 = rng.random();
        lon.push(bbox.lon_min + lon_margin + u * (bbox.lon_max - bbox.lon_min - 2.0 * lon_margin));
    }
    Anchors { lat, lon }
}

fn draw_location(
    rng: &mut ChaCha8Rng,
    bbox: &BoundingBox,
    anchors: &Anchors,
    urban_fraction: f64,
    sigma_deg: f64,
) -> (f64, f64) {
    let urban = rng.random::<f64>() < urban_fraction;
    if urban && !anchors.lat.is_empty() {
        let k = rng.random_range(0..anchors.lat.len());
        let normal = Normal::new(0.0, sigma_deg.max(f64::MIN_POSITIVE)).expect("valid sigma");
        let lat = (anchors.lat[k] + normal.sample(rng)).clamp(bbox.lat_min, bbox.lat_max);
        let lon = (anchors.lon[k] + normal.sample(rng)).clamp(bbox.lon_min, bbox.lon_max);
        (lat, lon)
    } else {
        let u: f64 = rng.random();
        let lat = bbox.lat_min + u * (bbox.lat_max - bbox.lat_min);
        let u: f64 = rng.random();
        let lon = bbox.lon_min + u * (bbox.lon_max - bbox.lon_min);
        (lat, lon)
    }
}

fn draw_band(rng: &mut ChaCha8Rng, weights: &[f64; 9]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u32 + 1;
        }
    }
    9
}

/// Generates homes, POIs, and county parameters. Deterministic in `seed`.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut homes = Vec::new();
    let mut pois = Vec::new();
    let mut params = Vec::new();
    let mut next_home_id: u32 = 0;
    let mut next_poi_id: u32 = 0;

    for c in &spec.counties {
        let anchors = draw_anchors(&mut rng, &c.bbox, c.clusters);

        for _ in 0..c.homes {
            let (lat, lon) = draw_location(
                &mut rng,
                &c.bbox,
                &anchors,
                c.urban_fraction,
                c.home_cluster_sigma_deg,
            );
            let band = draw_band(&mut rng, &c.income_band_weights);
            let income_usd = income_band_to_dollars(band).expect("band in 1..=9");
            let owns_house = u8::from(rng.random::<f64>() < c.ownership_rate);
            let initial_level = u8::from(rng.random::<f64>() >= c.evacuated_fraction);
            homes.push(HomeRow {
                home_id: next_home_id,
                lat,
                lon,
                county: c.county,
                income_usd,
                owns_house,
                initial_level,
            });
            next_home_id += 1;
        }

        for _ in 0..c.pois {
            let (lat, lon) = draw_location(
                &mut rng,
                &c.bbox,
                &anchors,
                c.urban_fraction,
                c.poi_cluster_sigma_deg,
            );
            let baseline_daily_visits = 20.0 + 180.0 * rng.random::<f64>();
            let (lo, hi) = c.initial_social_range;
            let initial_level = lo + (hi - lo) * rng.random::<f64>();
            pois.push(PoiRow {
                poi_id: next_poi_id,
                lat,
                lon,
                county: c.county,
                baseline_daily_visits,
                initial_level,
            });
            next_poi_id += 1;
        }

        let (lat, lon) = c.bbox.center();
        params.push(CountyParams {
            county: c.county,
            lat,
            lon,
            dynamics: c.dynamics,
            curve: c.curve,
            model: c.model.clone(),
        });
    }

    Ok(SyntheticData { homes, pois, params })
}
