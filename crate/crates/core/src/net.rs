//! Three-layer network: households (human), points of interest (social), and
//! one infrastructure node per county (physical).
//!
//! Intra-layer edges connect nodes within `delta_km` of each other (closed
//! ball). Social nodes additionally feed the human nodes within `delta_km`
//! (directed Social to Human). The physical layer has no intra-layer edges;
//! every human and social node has exactly one incoming physical edge, from
//! the physical node of its own county, held as a county lookup rather than
//! explicit edge lists.
//!
//! Adjacency is stored as compressed neighbor lists sorted by neighbor index
//! so that iteration order, and therefore every simulation consuming the
//! network, is bitwise reproducible.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, SpatialGrid};

pub type CountyId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    Human,
    Social,
    Physical,
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Layer::Human => "human",
            Layer::Social => "social",
            Layer::Physical => "physical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub layer: Layer,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanNode {
    pub id: NodeId,
    pub location: GeoPoint,
    pub county: CountyId,
    pub income_usd: f64,
    pub owns_house: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialNode {
    pub id: NodeId,
    pub location: GeoPoint,
    pub county: CountyId,
    pub baseline_daily_visits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNode {
    pub id: NodeId,
    pub county: CountyId,
    pub location: GeoPoint,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("edge threshold must be finite and non-negative, got {0}")]
    InvalidDelta(f64),
    #[error("{layer} node at position {position} carries id index {found}; ids must equal list positions")]
    NodeIndexMismatch { layer: Layer, position: u32, found: u32 },
    #[error("human node {index} has invalid income {value}; incomes must be finite and non-negative")]
    InvalidIncome { index: u32, value: f64 },
    #[error("social node {index} has baseline_daily_visits {value}; must be finite and positive")]
    InvalidBaselineVisits { index: u32, value: f64 },
    #[error("county {county} has more than one physical node")]
    DuplicatePhysicalCounty { county: CountyId },
    #[error("{layer} node {index} references county {county}, which has no physical node")]
    MissingPhysicalNode { layer: Layer, index: u32, county: CountyId },
    #[error("degree histogram is defined for the human and social layers only")]
    PhysicalLayerHistogram,
    #[error("exponential tail fit needs at least 3 positive-count degrees, got {distinct}")]
    InsufficientHistogram { distinct: usize },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Compressed sparse neighbor lists. Row i holds the sorted neighbor indices
/// of node i.
#[derive(Debug, Clone, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    /// Builds rows 0..n from directed pairs. Each row ends up sorted.
    fn from_pairs(n: usize, pairs: &[(u32, u32)]) -> Self {
        let mut counts = vec![0usize; n];
        for &(src, _) in pairs {
            counts[src as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut targets = vec![0u32; pairs.len()];
        let mut cursor = offsets.clone();
        for &(src, dst) in pairs {
            let s = src as usize;
            targets[cursor[s]] = dst;
            cursor[s] += 1;
        }
        for i in 0..n {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Adjacency { offsets, targets }
    }

    /// Builds rows from per-row sorted neighbor lists.
    fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0usize);
        let mut targets = Vec::new();
        for row in rows {
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        let i = node as usize;
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn row_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Total directed edge count (for symmetric layers this is twice the
    /// undirected count).
    pub fn directed_edge_count(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone)]
pub struct MultilayerNetwork {
    pub humans: Vec<HumanNode>,
    pub socials: Vec<SocialNode>,
    pub physicals: Vec<PhysicalNode>,
    human_adj: Adjacency,
    social_adj: Adjacency,
    /// Row h lists the social nodes feeding human h (directed Social to Human).
    social_sources: Adjacency,
    county_physical: HashMap<CountyId, u32>,
    delta_km: f64,
}

/// Structural report: node counts, edge counts, and intra-layer degree
/// histograms, serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkSummary {
    pub delta_km: f64,
    pub human_nodes: usize,
    pub social_nodes: usize,
    pub physical_nodes: usize,
    pub human_edges: usize,
    pub social_edges: usize,
    pub social_to_human_edges: usize,
    pub human_degree_histogram: BTreeMap<u32, u64>,
    pub social_degree_histogram: BTreeMap<u32, u64>,
}

/// Finds, for every point, the neighbors within `delta_km` (excluding the
/// point itself), returned as symmetric directed pairs.
fn ball_pairs(points: &[(u32, GeoPoint)], delta_km: f64) -> Result<Vec<(u32, u32)>, NetError> {
    let cell_km = if delta_km > 0.0 { delta_km } else { 1.0 };
    let grid = SpatialGrid::build(points, cell_km)?;
    // Each unordered pair is evaluated once, from its lower index, so the
    // result is symmetric by construction rather than by trusting that the
    // distance computation is bit-symmetric.
    let mut pairs: Vec<(u32, u32)> = points
        .par_iter()
        .flat_map_iter(|&(i, p)| {
            grid.radius_query(p, delta_km)
                .into_iter()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
        .collect();
    let reversed: Vec<(u32, u32)> = pairs.iter().map(|&(i, j)| (j, i)).collect();
    pairs.extend(reversed);
    Ok(pairs)
}

/// Connects humans and socials within each layer at threshold `delta_km`,
/// links each human to the social nodes within `delta_km`, and records the
/// per-county physical node. Edge sets are identical to a brute-force
/// pairwise distance scan.
pub fn build_network(
    humans: Vec<HumanNode>,
    socials: Vec<SocialNode>,
    physicals: Vec<PhysicalNode>,
    delta_km: f64,
) -> Result<MultilayerNetwork, NetError> {
    if !delta_km.is_finite() || delta_km < 0.0 {
        return Err(NetError::InvalidDelta(delta_km));
    }
    for (pos, h) in humans.iter().enumerate() {
        if h.id.index as usize != pos || h.id.layer != Layer::Human {
            return Err(NetError::NodeIndexMismatch {
                layer: Layer::Human,
                position: pos as u32,
                found: h.id.index,
            });
        }
        if !h.income_usd.is_finite() || h.income_usd < 0.0 {
            return Err(NetError::InvalidIncome { index: h.id.index, value: h.income_usd });
        }
    }
    for (pos, s) in socials.iter().enumerate() {
        if s.id.index as usize != pos || s.id.layer != Layer::Social {
            return Err(NetError::NodeIndexMismatch {
                layer: Layer::Social,
                position: pos as u32,
                found: s.id.index,
            });
        }
        if !s.baseline_daily_visits.is_finite() || s.baseline_daily_visits <= 0.0 {
            return Err(NetError::InvalidBaselineVisits {
                index: s.id.index,
                value: s.baseline_daily_visits,
            });
        }
    }
    let mut county_physical = HashMap::new();
    for (pos, p) in physicals.iter().enumerate() {
        if p.id.index as usize != pos || p.id.layer != Layer::Physical {
            return Err(NetError::NodeIndexMismatch {
                layer: Layer::Physical,
                position: pos as u32,
                found: p.id.index,
            });
        }
        if county_physical.insert(p.county, pos as u32).is_some() {
            return Err(NetError::DuplicatePhysicalCounty { county: p.county });
        }
    }
    for h in &humans {
        if !county_physical.contains_key(&h.county) {
            return Err(NetError::MissingPhysicalNode {
                layer: Layer::Human,
                index: h.id.index,
                county: h.county,
            });
        }
    }
    for s in &socials {
        if !county_physical.contains_key(&s.county) {
            return Err(NetError::MissingPhysicalNode {
                layer: Layer::Social,
                index: s.id.index,
                county: s.county,
            });
        }
    }

    let human_points: Vec<(u32, GeoPoint)> =
        humans.iter().map(|h| (h.id.index, h.location)).collect();
    let social_points: Vec<(u32, GeoPoint)> =
        socials.iter().map(|s| (s.id.index, s.location)).collect();

    let human_adj = Adjacency::from_pairs(humans.len(), &ball_pairs(&human_points, delta_km)?);
    let social_adj = Adjacency::from_pairs(socials.len(), &ball_pairs(&social_points, delta_km)?);

    let cell_km = if delta_km > 0.0 { delta_km } else { 1.0 };
    let social_grid = SpatialGrid::build(&social_points, cell_km)?;
    let rows: Vec<Vec<u32>> = human_points
        .par_iter()
        .map(|&(_, p)| social_grid.radius_query(p, delta_km))
        .collect();
    let social_sources = Adjacency::from_rows(rows);

    Ok(MultilayerNetwork {
        humans,
        socials,
        physicals,
        human_adj,
        social_adj,
        social_sources,
        county_physical,
        delta_km,
    })
}

impl MultilayerNetwork {
    pub fn delta_km(&self) -> f64 {
        self.delta_km
    }

    /// Human neighbors of human node `h` (sorted).
    pub fn human_neighbors(&self, h: u32) -> &[u32] {
        self.human_adj.neighbors(h)
    }

    /// Social neighbors of social node `s` (sorted).
    pub fn social_neighbors(&self, s: u32) -> &[u32] {
        self.social_adj.neighbors(s)
    }

    /// Social nodes feeding human node `h` (sorted).
    pub fn social_sources_for_human(&self, h: u32) -> &[u32] {
        self.social_sources.neighbors(h)
    }

    /// The unique physical node of a county. Build validation guarantees
    /// presence for every county referenced by a human or social node.
    pub fn physical_for_county(&self, county: CountyId) -> Option<u32> {
        self.county_physical.get(&county).copied()
    }

    /// Undirected intra-layer edge counts and the directed social-to-human
    /// count.
    pub fn edge_counts(&self) -> (usize, usize, usize) {
        (
            self.human_adj.directed_edge_count() / 2,
            self.social_adj.directed_edge_count() / 2,
            self.social_sources.directed_edge_count(),
        )
    }

    /// Intra-layer degree histogram for the human or social layer. The
    /// physical layer has no intra-layer edges, so asking for it is an error
    /// rather than a degenerate all-zero histogram.
    pub fn degree_histogram(&self, layer: Layer) -> Result<BTreeMap<u32, u64>, NetError> {
        let adj = match layer {
            Layer::Human => &self.human_adj,
            Layer::Social => &self.social_adj,
            Layer::Physical => return Err(NetError::PhysicalLayerHistogram),
        };
        let mut hist = BTreeMap::new();
        for i in 0..adj.row_count() {
            let degree = adj.neighbors(i as u32).len() as u32;
            *hist.entry(degree).or_insert(0u64) += 1;
        }
        Ok(hist)
    }

    pub fn summary(&self) -> Result<NetworkSummary, NetError> {
        let (human_edges, social_edges, social_to_human_edges) = self.edge_counts();
        Ok(NetworkSummary {
            delta_km: self.delta_km,
            human_nodes: self.humans.len(),
            social_nodes: self.socials.len(),
            physical_nodes: self.physicals.len(),
            human_edges,
            social_edges,
            social_to_human_edges,
            human_degree_histogram: self.degree_histogram(Layer::Human)?,
            social_degree_histogram: self.degree_histogram(Layer::Social)?,
        })
    }
}

/// Least-squares line through (degree, ln count) over positive-count bins.
/// Returns (rate, R^2) where rate is the negated slope. R^2 is 1 when the
/// log-counts have zero variance (a constant is fit exactly).
pub fn exponential_tail_fit(histogram: &BTreeMap<u32, u64>) -> Result<(f64, f64), NetError> {
    let pts: Vec<(f64, f64)> = histogram
        .iter()
        .filter(|&(_, &c)| c > 0)
        .map(|(&d, &c)| (d as f64, (c as f64).ln()))
        .collect();
    if pts.len() < 3 {
        return Err(NetError::InsufficientHistogram { distinct: pts.len() });
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (mean_y + slope * (p.0 - mean_x))).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((-slope, r_squared))
}
