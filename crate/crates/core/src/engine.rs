//! Day-stepped simulation loop over the three-layer network.
//!
//! Each day advances in layer order physical -> social -> human. Physical
//! nodes follow a per-county logistic baseline whose day-over-day increments
//! are scaled by the scenario's physical multiplier and capped at full
//! recovery. Social nodes apply the neighborhood growth rule with the
//! scenario's social multiplier applied to the social rate. Human nodes at
//! zero draw a daily Bernoulli return trial; returned nodes are skipped
//! entirely. All per-node draws come from a counter-based generator keyed by
//! (seed, node, day), so results do not depend on thread count.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{self, BehaviorError, LogitModel};
use crate::dynamics::{self, DynamicParams, DynamicsError, HumanUpdateMode, LogisticCurve};
use crate::net::{CountyId, Layer, MultilayerNetwork};
use crate::rng;

/// Number of simulated days recorded by default (including day zero).
pub const DEFAULT_TOTAL_DAYS: u32 = 60;

/// Calendar label attached to day zero by default.
pub const DEFAULT_START_LABEL: &str = "2017-08-30";

/// Errors raised while configuring or running a simulation.
#[derive(Debug, Error)]
pub enum EngineError {
    /// Built-in scenario ids run from 1 to 9.
    #[error("unknown scenario id {0}; built-in ids are 1 through 9")]
    UnknownScenarioId(u8),
    /// Hazard multipliers model added recovery effort, never removal.
    #[error("scenario multiplier {name} = {value} must be finite and >= 1")]
    MultiplierBelowOne { name: &'static str, value: f64 },
    /// A run must record at least day zero.
    #[error("total days must be at least 1")]
    ZeroTotalDays,
    /// Every county present in the network needs dynamics, a baseline curve,
    /// and a decision model.
    #[error("no county configuration for county {0}")]
    MissingCountyConfig(CountyId),
    #[error("duplicate county configuration for county {0}")]
    DuplicateCountyConfig(CountyId),
    /// Initial level vectors must cover each node of their layer exactly.
    #[error("{layer} layer has {expected} nodes but {got} initial levels were supplied")]
    LevelCountMismatch { layer: Layer, expected: usize, got: usize },
    #[error("human node {index} starts at {value}; initial human levels must be 0 or 1")]
    NonBinaryInitialLevel { index: u32, value: f64 },
    #[error("{layer} node {index} starts at {value}, outside [0, 1]")]
    InitialLevelOutOfRange { layer: Layer, index: u32, value: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

/// Hazard scenario: multipliers applied to physical repair increments
/// (`lambda_p`) and to the social recovery rate (`lambda_s`). Both are >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Built-in preset id (1..=9) when applicable.
    pub id: Option<u8>,
    pub lambda_p: f64,
    pub lambda_s: f64,
}

/// (lambda_p, lambda_s) pairs for the nine built-in scenarios, indexed by id - 1.
const BUILTIN_SCENARIOS: [(f64, f64); 9] = [
    (1.0, 1.0),
    (2.0, 1.0),
    (4.0, 1.0),
    (1.0, 2.0),
    (1.0, 4.0),
    (2.0, 2.0),
    (2.0, 4.0),
    (4.0, 2.0),
    (4.0, 4.0),
];

impl Scenario {
    /// Returns built-in scenario `id` (1 through 9).
    pub fn builtin(id: u8) -> Result<Self, EngineError> {
        if !(1..=9).contains(&id) {
            return Err(EngineError::UnknownScenarioId(id));
        }
        let (lambda_p, lambda_s) = BUILTIN_SCENARIOS[usize::from(id) - 1];
        Ok(Scenario { id: Some(id), lambda_p, lambda_s })
    }

    /// Builds a custom scenario; both multipliers must be finite and >= 1.
    pub fn custom(lambda_p: f64, lambda_s: f64) -> Result<Self, EngineError> {
        let s = Scenario { id: None, lambda_p, lambda_s };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.lambda_p.is_finite() || self.lambda_p < 1.0 {
            return Err(EngineError::MultiplierBelowOne {
                name: "lambda_p",
                value: self.lambda_p,
            });
        }
        if !self.lambda_s.is_finite() || self.lambda_s < 1.0 {
            return Err(EngineError::MultiplierBelowOne {
                name: "lambda_s",
                value: self.lambda_s,
            });
        }
        Ok(())
    }
}

/// Which return-decision model a county's households use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// Flood-county preset (house tenure, neighbor return, business and
    /// infrastructure terms).
    Harris,
    /// Surge-county preset (income, displaced-neighbor, business closure and
    /// infrastructure terms).
    Other,
    /// Fully custom fitted model.
    Custom(LogitModel),
}

impl ModelChoice {
    fn resolve(&self) -> LogitModel {
        match self {
            ModelChoice::Harris => LogitModel::harris(),
            ModelChoice::Other => LogitModel::other(),
            ModelChoice::Custom(m) => m.clone(),
        }
    }
}

/// Per-county simulation inputs: growth-rule parameters, the physical
/// baseline curve, and the household decision model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyConfig {
    pub county: CountyId,
    pub dynamics: DynamicParams,
    pub curve: LogisticCurve,
    pub model: ModelChoice,
}

fn default_total_days() -> u32 {
    DEFAULT_TOTAL_DAYS
}

fn default_start_label() -> String {
    DEFAULT_START_LABEL.to_string()
}

/// Full simulation configuration. Serializable to JSON; unknown fields are
/// rejected so typos in config files surface as errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Number of recorded days including day zero; a run advances
    /// `total_days - 1` steps.
    #[serde(default = "default_total_days")]
    pub total_days: u32,
    /// Calendar label for day zero, carried into exports.
    #[serde(default = "default_start_label")]
    pub start_label: String,
    #[serde(default)]
    pub seed: u64,
    /// How the per-window return probability converts to a daily trial.
    #[serde(default)]
    pub mode: HumanUpdateMode,
    /// When set, each household's return probability is computed once from
    /// the day-zero state and reused every day.
    #[serde(default)]
    pub freeze_probability: bool,
    /// When set, social and human updates read all layers at the previous
    /// day instead of reading lower layers at their already-updated values.
    #[serde(default)]
    pub strict_eq7: bool,
    pub counties: Vec<CountyConfig>,
}

impl SimulationConfig {
    /// Minimal config: defaults everywhere, given county table and seed.
    pub fn new(counties: Vec<CountyConfig>, seed: u64) -> Self {
        SimulationConfig {
            total_days: DEFAULT_TOTAL_DAYS,
            start_label: DEFAULT_START_LABEL.to_string(),
            seed,
            mode: HumanUpdateMode::default(),
            freeze_probability: false,
            strict_eq7: false,
            counties,
        }
    }

    /// Checks day count, per-county parameter validity, duplicate county
    /// entries, and that every county in the network is configured.
    pub fn validate(&self, net: &MultilayerNetwork) -> Result<(), EngineError> {
        if self.total_days == 0 {
            return Err(EngineError::ZeroTotalDays);
        }
        let mut seen = BTreeSet::new();
        for cc in &self.counties {
            if !seen.insert(cc.county) {
                return Err(EngineError::DuplicateCountyConfig(cc.county));
            }
            cc.dynamics.validate()?;
        }
        for p in &net.physicals {
            if !seen.contains(&p.county) {
                return Err(EngineError::MissingCountyConfig(p.county));
            }
        }
        Ok(())
    }
}

/// How physical nodes are seeded at day zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalInit {
    /// Each county's physical node starts on its baseline curve at day zero.
    FromCurve,
    /// Explicit per-node levels in physical node order.
    Explicit(Vec<f64>),
}

/// Day-zero levels for all three layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLevels {
    /// Per-household levels, each 0 (displaced) or 1 (returned).
    pub human: Vec<f64>,
    /// Per-business levels in [0, 1].
    pub social: Vec<f64>,
    pub physical: PhysicalInit,
}

/// Layer-mean snapshot for one recorded day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayMeans {
    pub human: f64,
    pub social: f64,
    pub physical: f64,
}

/// Mutable simulation state: current day index, per-node levels, and the
/// layer-mean history (always `day + 1` entries).
#[derive(Debug, Clone)]
pub struct SimulationState {
    pub day: u32,
    pub human: Vec<f64>,
    pub social: Vec<f64>,
    pub physical: Vec<f64>,
    pub mean_history: Vec<DayMeans>,
    /// Day-zero return probabilities, present only under probability freeze.
    frozen_p: Option<Vec<f64>>,
}

impl SimulationState {
    pub fn frozen_probabilities(&self) -> Option<&[f64]> {
        self.frozen_p.as_deref()
    }
}

fn mean(levels: &[f64]) -> f64 {
    if levels.is_empty() {
        return 0.0;
    }
    levels.iter().sum::<f64>() / levels.len() as f64
}

/// Resolved per-county context, looked up by county id.
struct CountyCtx {
    dynamics: DynamicParams,
    curve: LogisticCurve,
    model: LogitModel,
}

fn county_contexts(config: &SimulationConfig) -> BTreeMap<CountyId, CountyCtx> {
    config
        .counties
        .iter()
        .map(|cc| {
            (
                cc.county,
                CountyCtx {
                    dynamics: cc.dynamics,
                    curve: cc.curve,
                    model: cc.model.resolve(),
                },
            )
        })
        .collect()
}

/// Builds the day-zero state: length and range checks on every layer, curve
/// seeding for physical nodes when requested, and probability freezing.
pub fn initialize(
    net: &MultilayerNetwork,
    config: &SimulationConfig,
    initial: &InitialLevels,
) -> Result<SimulationState, EngineError> {
    config.validate(net)?;
    let ctx = county_contexts(config);

    if initial.human.len() != net.humans.len() {
        return Err(EngineError::LevelCountMismatch {
            layer: Layer::Human,
            expected: net.humans.len(),
            got: initial.human.len(),
        });
    }
    for (i, &v) in initial.human.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(EngineError::NonBinaryInitialLevel { index: i as u32, value: v });
        }
    }

    if initial.social.len() != net.socials.len() {
        return Err(EngineError::LevelCountMismatch {
            layer: Layer::Social,
            expected: net.socials.len(),
            got: initial.social.len(),
        });
    }
    for (i, &v) in initial.social.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(EngineError::InitialLevelOutOfRange {
                layer: Layer::Social,
                index: i as u32,
                value: v,
            });
        }
    }

    let physical = match &initial.physical {
        PhysicalInit::FromCurve => net
            .physicals
            .iter()
            .map(|p| ctx[&p.county].curve.level(0.0))
            .collect::<Vec<f64>>(),
        PhysicalInit::Explicit(levels) => {
            if levels.len() != net.physicals.len() {
                return Err(EngineError::LevelCountMismatch {
                    layer: Layer::Physical,
                    expected: net.physicals.len(),
                    got: levels.len(),
                });
            }
            for (i, &v) in levels.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(EngineError::InitialLevelOutOfRange {
                        layer: Layer::Physical,
                        index: i as u32,
                        value: v,
                    });
                }
            }
            levels.clone()
        }
    };

    let mut state = SimulationState {
        day: 0,
        human: initial.human.clone(),
        social: initial.social.clone(),
        physical,
        mean_history: Vec::with_capacity(config.total_days as usize),
        frozen_p: None,
    };
    state.mean_history.push(DayMeans {
        human: mean(&state.human),
        social: mean(&state.social),
        physical: mean(&state.physical),
    });

    if config.freeze_probability {
        let mut frozen = Vec::with_capacity(state.human.len());
        for h in 0..state.human.len() as u32 {
            let county = net.humans[h as usize].county;
            let model = &ctx[&county].model;
            let features = behavior::extract_features(
                net,
                h,
                model,
                &state.human,
                &state.social,
                &state.physical,
            );
            frozen.push(behavior::return_probability(model, &features)?);
        }
        state.frozen_p = Some(frozen);
    }

    Ok(state)
}

/// Advances the state by one day in place. Physical nodes move first along
/// their scaled baseline increments, then social nodes, then human nodes.
/// By default social reads same-day physical levels and human reads same-day
/// social and physical levels; under `strict_eq7` every update reads the
/// previous day only.
pub fn step(
    state: &mut SimulationState,
    net: &MultilayerNetwork,
    config: &SimulationConfig,
    scenario: &Scenario,
) -> Result<(), EngineError> {
    scenario.validate()?;
    let ctx = county_contexts(config);
    let t = state.day;

    // Physical: increment of the county baseline over [t, t+1], scaled and
    // capped at full recovery.
    let physical_next: Vec<f64> = net
        .physicals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let curve = &ctx[&p.county].curve;
            let inc = curve.level(f64::from(t) + 1.0) - curve.level(f64::from(t));
            (state.physical[i] + scenario.lambda_p * inc).min(1.0)
        })
        .collect();

    let physical_for_social: &[f64] =
        if config.strict_eq7 { &state.physical } else { &physical_next };

    let social_prev = &state.social;
    let social_next: Vec<f64> = (0..net.socials.len() as u32)
        .into_par_iter()
        .map(|s| {
            let node = &net.socials[s as usize];
            let params = &ctx[&node.county].dynamics;
            let scaled = DynamicParams {
                beta_s: scenario.lambda_s * params.beta_s,
                ..*params
            };
            let neighbor_levels: Vec<f64> = net
                .social_neighbors(s)
                .iter()
                .map(|&n| social_prev[n as usize])
                .collect();
            let phys_index = net
                .physical_for_county(node.county)
                .expect("validated: every county has a physical node");
            let r_p = physical_for_social[phys_index as usize];
            dynamics::social_node_update(social_prev[s as usize], &neighbor_levels, r_p, &scaled)
        })
        .collect();

    let (social_for_human, physical_for_human): (&[f64], &[f64]) = if config.strict_eq7 {
        (&state.social, &state.physical)
    } else {
        (&social_next, &physical_next)
    };

    let human_prev = &state.human;
    let frozen_p = state.frozen_p.as_deref();
    let human_next: Vec<Result<f64, EngineError>> = (0..net.humans.len() as u32)
        .into_par_iter()
        .map(|h| {
            // Returned households are settled; skip them without drawing.
            if human_prev[h as usize] == 1.0 {
                return Ok(1.0);
            }
            let county = net.humans[h as usize].county;
            let model = &ctx[&county].model;
            let p_total = match frozen_p {
                Some(p) => p[h as usize],
                None => {
                    let features = behavior::extract_features(
                        net,
                        h,
                        model,
                        human_prev,
                        social_for_human,
                        physical_for_human,
                    );
                    behavior::return_probability(model, &features)?
                }
            };
            let u = rng::unit_uniform(config.seed, u64::from(h), u64::from(t));
            let level = dynamics::human_node_update(
                human_prev[h as usize],
                p_total,
                config.total_days,
                config.mode,
                u,
            )?;
            Ok(level)
        })
        .collect();
    let human_next: Vec<f64> = human_next.into_iter().collect::<Result<_, _>>()?;

    state.human = human_next;
    state.social = social_next;
    state.physical = physical_next;
    state.day = t + 1;
    state.mean_history.push(DayMeans {
        human: mean(&state.human),
        social: mean(&state.social),
        physical: mean(&state.physical),
    });
    Ok(())
}

/// Per-day per-node levels for one layer: `levels[day][node]`.
pub type LayerHistory = Vec<Vec<f64>>;

/// Complete recorded trajectory of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateHistory {
    pub human: LayerHistory,
    pub social: LayerHistory,
    pub physical: LayerHistory,
}

/// Per-county per-day layer means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyMeans {
    pub human: Vec<f64>,
    pub social: Vec<f64>,
    pub physical: Vec<f64>,
}

/// Aggregate results: per-day layer means, per-county means, and per-day
/// human-layer means by housing tenure and income band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_days: u32,
    pub start_label: String,
    pub scenario: Scenario,
    pub layer_means: Vec<DayMeans>,
    pub county_means: BTreeMap<CountyId, CountyMeans>,
    pub tenure_means: BTreeMap<String, Vec<f64>>,
    pub income_band_means: BTreeMap<String, Vec<f64>>,
}

/// Full output of a run: the per-node history and the aggregate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub history: StateHistory,
    pub summary: RunSummary,
}

/// Runs `total_days - 1` steps from the given initial levels and returns the
/// recorded history plus aggregate summary. Deterministic in (network,
/// config, scenario): rerunning with identical inputs reproduces every level
/// bit for bit regardless of thread count.
pub fn run(
    net: &MultilayerNetwork,
    config: &SimulationConfig,
    scenario: &Scenario,
    initial: &InitialLevels,
) -> Result<RunOutput, EngineError> {
    scenario.validate()?;
    let mut state = initialize(net, config, initial)?;

    let days = config.total_days as usize;
    let mut history = StateHistory {
        human: Vec::with_capacity(days),
        social: Vec::with_capacity(days),
        physical: Vec::with_capacity(days),
    };
    history.human.push(state.human.clone());
    history.social.push(state.social.clone());
    history.physical.push(state.physical.clone());

    for _ in 1..config.total_days {
        step(&mut state, net, config, scenario)?;
        history.human.push(state.human.clone());
        history.social.push(state.social.clone());
        history.physical.push(state.physical.clone());
    }

    let summary = summarize(net, config, scenario, &state, &history);
    Ok(RunOutput { history, summary })
}

/// Strata for human-layer mean trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKind {
    County,
    HousingTenure,
    IncomeBand,
}

impl std::str::FromStr for StratumKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "county" => Ok(StratumKind::County),
            "housing-tenure" | "housing_tenure" | "tenure" => Ok(StratumKind::HousingTenure),
            "income-band" | "income_band" | "income" => Ok(StratumKind::IncomeBand),
            other => Err(format!(
                "unknown stratum '{other}'; expected county, housing-tenure, or income-band"
            )),
        }
    }
}

/// Maps a dollar income to its band 1..=9: eight 15000-wide intervals from 0
/// to 120000, then a single open-ended top band.
pub fn income_band(income_usd: f64) -> u32 {
    if income_usd < 15_000.0 {
        1
    } else if income_usd >= 120_000.0 {
        9
    } else {
        (income_usd / 15_000.0) as u32 + 1
    }
}

/// Per-day mean human-layer recovery for each stratum. Keys are county ids
/// ("0"), "owner"/"renter", or "band_1".."band_9". Strata with no households
/// are absent rather than reported as zero.
pub fn stratified_means(
    net: &MultilayerNetwork,
    human_history: &LayerHistory,
    strata: StratumKind,
) -> BTreeMap<String, Vec<f64>> {
    let mut groups: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for (i, h) in net.humans.iter().enumerate() {
        let key = match strata {
            StratumKind::County => h.county.to_string(),
            StratumKind::HousingTenure => {
                if h.owns_house { "owner".to_string() } else { "renter".to_string() }
            }
            StratumKind::IncomeBand => format!("band_{}", income_band(h.income_usd)),
        };
        groups.entry(key).or_default().push(i as u32);
    }

    groups
        .into_iter()
        .map(|(key, members)| {
            let series: Vec<f64> = human_history
                .iter()
                .map(|day| {
                    members.iter().map(|&i| day[i as usize]).sum::<f64>() / members.len() as f64
                })
                .collect();
            (key, series)
        })
        .collect()
}

fn county_layer_means(
    history: &LayerHistory,
    members: &[u32],
) -> Vec<f64> {
    history
        .iter()
        .map(|day| members.iter().map(|&i| day[i as usize]).sum::<f64>() / members.len() as f64)
        .collect()
}

fn summarize(
    net: &MultilayerNetwork,
    config: &SimulationConfig,
    scenario: &Scenario,
    state: &SimulationState,
    history: &StateHistory,
) -> RunSummary {
    let mut human_by_county: BTreeMap<CountyId, Vec<u32>> = BTreeMap::new();
    for (i, h) in net.humans.iter().enumerate() {
        human_by_county.entry(h.county).or_default().push(i as u32);
    }
    let mut social_by_county: BTreeMap<CountyId, Vec<u32>> = BTreeMap::new();
    for (i, s) in net.socials.iter().enumerate() {
        social_by_county.entry(s.county).or_default().push(i as u32);
    }

    let mut county_means = BTreeMap::new();
    for (i, p) in net.physicals.iter().enumerate() {
        let human = human_by_county
            .get(&p.county)
            .map(|m| county_layer_means(&history.human, m))
            .unwrap_or_default();
        let social = social_by_county
            .get(&p.county)
            .map(|m| county_layer_means(&history.social, m))
            .unwrap_or_default();
        let physical = county_layer_means(&history.physical, &[i as u32]);
        county_means.insert(p.county, CountyMeans { human, social, physical });
    }

    RunSummary {
        total_days: config.total_days,
        start_label: config.start_label.clone(),
        scenario: *scenario,
        layer_means: state.mean_history.clone(),
        county_means,
        tenure_means: stratified_means(net, &history.human, StratumKind::HousingTenure),
        income_band_means: stratified_means(net, &history.human, StratumKind::IncomeBand),
    }
}
