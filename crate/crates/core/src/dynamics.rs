//! Recovery update rules for the three layers: the aggregate social-recovery
//! rate equation, the per-node social update derived from it, the logistic
//! physical-recovery curve, and the probabilistic human return rule.
//!
//! Level semantics: human levels are binary (0 away, 1 returned); social
//! levels are visit ratios, non-negative and allowed above 1 only as initial
//! observations (updates cap at 1); physical levels live in [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::Layer;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("{name} must be finite and positive, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("{name} must lie in (0, 1], got {value}")]
    CapacityOutOfRange { name: &'static str, value: f64 },
    #[error("curve amplitude must be finite and positive, got {0}")]
    AmplitudeNotPositive(f64),
    #[error("curve rate must be finite and positive, got {0}")]
    RateNotPositive(f64),
    #[error("curve offset must be finite and non-negative, got {0}")]
    OffsetNegative(f64),
    #[error("curve amplitude plus offset is {0}; the curve would exceed full recovery")]
    CurveExceedsFullRecovery(f64),
    #[error("curve midpoint must be finite, got {0}")]
    MidpointNotFinite(f64),
    #[error("human recovery level must be exactly 0 or 1, got {0}")]
    NonBinaryHumanLevel(f64),
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("day count must be at least 1")]
    ZeroDayCount,
    #[error("random draw must lie in [0, 1), got {0}")]
    InvalidDraw(f64),
    #[error("{layer} recovery level {value} out of range")]
    LevelOutOfRange { layer: Layer, value: f64 },
}

/// Mean intra-layer neighbor counts of the five study counties, used by the
/// aggregate rate equation.
pub const N_BAR_HARRIS: f64 = 139.1;
pub const N_BAR_FORT_BEND: f64 = 107.7;
pub const N_BAR_BRAZORIA: f64 = 79.9;
pub const N_BAR_GALVESTON: f64 = 78.5;
pub const N_BAR_JEFFERSON: f64 = 70.2;

/// Parameters of the social-recovery dynamics: growth rates and carrying
/// capacities for the social and physical coupling terms, plus the mean
/// neighbor count used only by the aggregate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicParams {
    pub beta_s: f64,
    pub k_s: f64,
    pub beta_p: f64,
    pub k_p: f64,
    pub n_bar: f64,
}

impl DynamicParams {
    pub fn new(
        beta_s: f64,
        k_s: f64,
        beta_p: f64,
        k_p: f64,
        n_bar: f64,
    ) -> Result<Self, DynamicsError> {
        let p = DynamicParams { beta_s, k_s, beta_p, k_p, n_bar };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("beta_s", self.beta_s),
            ("beta_p", self.beta_p),
            ("n_bar", self.n_bar),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(DynamicsError::NonPositiveParam { name, value });
            }
        }
        for (name, value) in [("k_s", self.k_s), ("k_p", self.k_p)] {
            if !value.is_finite() || value <= 0.0 || value > 1.0 {
                return Err(DynamicsError::CapacityOutOfRange { name, value });
            }
        }
        Ok(())
    }

    /// Fitted values for Harris County.
    pub fn harris() -> Self {
        DynamicParams { beta_s: 0.026, k_s: 0.671, beta_p: 1.432, k_p: 0.901, n_bar: N_BAR_HARRIS }
    }

    /// Fitted values shared by the four non-Harris study counties; the mean
    /// neighbor count still differs per county and is supplied by the caller.
    pub fn other(n_bar: f64) -> Self {
        DynamicParams { beta_s: 0.093, k_s: 0.736, beta_p: 1.114, k_p: 0.935, n_bar }
    }
}

/// Daily growth rate of the county-mean social recovery level: a neighbor
/// coupling term scaled by 0.001 and a physical coupling term scaled by 0.1.
/// Both constants are structural, not fitted.
pub fn aggregate_rate(r_s_mean: f64, r_p_mean: f64, p: &DynamicParams) -> f64 {
    0.001 * p.beta_s * p.n_bar * r_s_mean * (1.0 - r_s_mean / p.k_s)
        + 0.1 * p.beta_p * r_p_mean * (1.0 - r_p_mean / p.k_p)
}

/// Per-node social update: previous level plus the summed neighbor coupling
/// and the physical coupling, capped at 1 and floored at 0. The parameters of
/// the node being updated apply to all its neighbors, including cross-county
/// ones.
pub fn social_node_update(
    r_prev: f64,
    neighbor_r_prev: &[f64],
    r_phys: f64,
    p: &DynamicParams,
) -> f64 {
    let neighbor_sum: f64 = neighbor_r_prev.iter().map(|&r| r * (1.0 - r / p.k_s)).sum();
    let next = r_prev
        + 0.001 * p.beta_s * neighbor_sum
        + 0.1 * p.beta_p * r_phys * (1.0 - r_phys / p.k_p);
    next.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LogisticCurveRaw {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

/// Four-parameter logistic recovery curve for a county's physical node:
/// amplitude `a`, floor offset `b`, rate `c`, midpoint day `d`. Construction
/// enforces a > 0, c > 0, b >= 0, and a + b <= 1 (within 1e-9 of rounding);
/// deserialization revalidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogisticCurveRaw", into = "LogisticCurveRaw")]
pub struct LogisticCurve {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl TryFrom<LogisticCurveRaw> for LogisticCurve {
    type Error = DynamicsError;

    fn try_from(raw: LogisticCurveRaw) -> Result<Self, DynamicsError> {
        LogisticCurve::new(raw.a, raw.b, raw.c, raw.d)
    }
}

impl From<LogisticCurve> for LogisticCurveRaw {
    fn from(c: LogisticCurve) -> LogisticCurveRaw {
        LogisticCurveRaw { a: c.a, b: c.b, c: c.c, d: c.d }
    }
}

impl LogisticCurve {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, DynamicsError> {
        if !a.is_finite() || a <= 0.0 {
            return Err(DynamicsError::AmplitudeNotPositive(a));
        }
        if !c.is_finite() || c <= 0.0 {
            return Err(DynamicsError::RateNotPositive(c));
        }
        if !b.is_finite() || b < 0.0 {
            return Err(DynamicsError::OffsetNegative(b));
        }
        if !d.is_finite() {
            return Err(DynamicsError::MidpointNotFinite(d));
        }
        if a + b > 1.0 + 1e-9 {
            return Err(DynamicsError::CurveExceedsFullRecovery(a + b));
        }
        Ok(LogisticCurve { a, b, c, d })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Curve value at day `t`. Construction bounds the exact value to
    /// (b, a + b] within 1e-9 of [0, 1], so the clamp only strips rounding
    /// spill.
    pub fn level(&self, t: f64) -> f64 {
        let v = self.a / (1.0 + (-self.c * (t - self.d)).exp()) + self.b;
        v.clamp(0.0, 1.0)
    }
}

/// How a horizon return probability `p_total` over `m` days is converted to a
/// per-day probability: `PerDayShare` divides it evenly (p_total / m), which
/// makes the m-day cumulative probability fall short of p_total;
/// `CompoundExact` uses 1 - (1 - p_total)^(1/m) so the m-day cumulative
/// probability equals p_total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanUpdateMode {
    #[serde(rename = "paper")]
    PerDayShare,
    #[serde(rename = "exact")]
    CompoundExact,
}

impl Default for HumanUpdateMode {
    fn default() -> Self {
        HumanUpdateMode::PerDayShare
    }
}

impl std::str::FromStr for HumanUpdateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(HumanUpdateMode::PerDayShare),
            "exact" => Ok(HumanUpdateMode::CompoundExact),
            other => Err(format!("unknown human update mode '{other}'; expected paper or exact")),
        }
    }
}

impl std::fmt::Display for HumanUpdateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HumanUpdateMode::PerDayShare => "paper",
            HumanUpdateMode::CompoundExact => "exact",
        })
    }
}

/// Per-day return probability for a horizon probability `p_total` spread over
/// `m` days under the given mode.
pub fn daily_return_probability(p_total: f64, m: u32, mode: HumanUpdateMode) -> f64 {
    match mode {
        HumanUpdateMode::PerDayShare => p_total / m as f64,
        HumanUpdateMode::CompoundExact => 1.0 - (1.0 - p_total).powf(1.0 / m as f64),
    }
}

/// Human return rule: a returned resident (level 1) stays; an absent one
/// returns when the supplied uniform draw falls below the per-day
/// probability.
pub fn human_node_update(
    r_prev: f64,
    p_total: f64,
    m: u32,
    mode: HumanUpdateMode,
    u: f64,
) -> Result<f64, DynamicsError> {
    if r_prev != 0.0 && r_prev != 1.0 {
        return Err(DynamicsError::NonBinaryHumanLevel(r_prev));
    }
    if !(0.0..=1.0).contains(&p_total) {
        return Err(DynamicsError::InvalidProbability(p_total));
    }
    if m == 0 {
        return Err(DynamicsError::ZeroDayCount);
    }
    if !(0.0..1.0).contains(&u) {
        return Err(DynamicsError::InvalidDraw(u));
    }
    if r_prev == 1.0 {
        return Ok(1.0);
    }
    Ok(if u < daily_return_probability(p_total, m, mode) { 1.0 } else { 0.0 })
}

pub fn validate_level(layer: Layer, value: f64) -> Result<(), DynamicsError> {
    let ok = match layer {
        Layer::Human => value == 0.0 || value == 1.0,
        Layer::Social => value.is_finite() && value >= 0.0,
        Layer::Physical => value.is_finite() && (0.0..=1.0).contains(&value),
    };
    if ok {
        Ok(())
    } else {
        Err(DynamicsError::LevelOutOfRange { layer, value })
    }
}
