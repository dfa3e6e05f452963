//! Household return-decision model: binary logit over a household's own
//! attributes and the recovery state of its network neighborhood, plus the
//! survey preprocessing and fitting pipeline that produces such models.
//!
//! Two fitted county models ship built in: one for Harris County and one
//! shared by the other study counties. Re-fitting from survey data is
//! supported through [`preprocess_survey`] and [`fit_logit`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::MultilayerNetwork;

#[derive(Debug, Error, PartialEq)]
pub enum BehaviorError {
    #[error("duplicate feature {0} in model")]
    DuplicateFeature(&'static str),
    #[error("model uses more than one {0}-layer feature")]
    MultipleCategoryFeatures(&'static str),
    #[error("feature {0} required by the model is missing")]
    MissingFeature(&'static str),
    #[error("feature {feature} value {value} is out of range")]
    FeatureOutOfRange { feature: &'static str, value: f64 },
    #[error("variable {0} is missing in every retained record and cannot be imputed")]
    Unimputable(&'static str),
    #[error("income band {0} outside 1..=9")]
    InvalidIncomeBand(u32),
    #[error("need at least {needed} records for {features} features, got {got}")]
    TooFewRecords { needed: usize, features: usize, got: usize },
    #[error("dependent variable must be 0 or 1, got {0}")]
    NonBinaryDependent(f64),
    #[error("dependent variable is constant; coefficients are unidentifiable")]
    DegenerateDependent,
    #[error("record {record} lacks a value for {variable}; run survey preprocessing first")]
    IncompleteRecord { record: u32, variable: &'static str },
    #[error("quasi-separation: coefficient of {feature} reached {value:.1}; likelihood is unbounded")]
    QuasiSeparation { feature: &'static str, value: f64 },
    #[error("design matrix is singular; features are collinear")]
    SingularDesign,
    #[error("logit fit did not converge within {0} iterations")]
    NotConverged(u32),
}

/// Features a decision model may use. House and income come from household
/// attributes; the human/social/physical features are neighborhood recovery
/// statistics. The a/b/c/d/e variants within a layer are alternative survey
/// questions measuring the same construct, so a model picks at most one per
/// layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "q_house")]
    House,
    #[serde(rename = "q_income")]
    Income,
    #[serde(rename = "q_human_a")]
    HumanA,
    #[serde(rename = "q_human_b")]
    HumanB,
    #[serde(rename = "q_social_a")]
    SocialA,
    #[serde(rename = "q_social_b")]
    SocialB,
    #[serde(rename = "q_social_c")]
    SocialC,
    #[serde(rename = "q_social_d")]
    SocialD,
    #[serde(rename = "q_social_e")]
    SocialE,
    #[serde(rename = "q_physical_a")]
    PhysicalA,
    #[serde(rename = "q_physical_b")]
    PhysicalB,
    #[serde(rename = "q_physical_c")]
    PhysicalC,
    #[serde(rename = "q_physical_d")]
    PhysicalD,
    #[serde(rename = "q_physical_e")]
    PhysicalE,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FeatureCategory {
    House,
    Income,
    Human,
    Social,
    Physical,
}

impl Feature {
    pub const ALL: [Feature; 14] = [
        Feature::House,
        Feature::Income,
        Feature::HumanA,
        Feature::HumanB,
        Feature::SocialA,
        Feature::SocialB,
        Feature::SocialC,
        Feature::SocialD,
        Feature::SocialE,
        Feature::PhysicalA,
        Feature::PhysicalB,
        Feature::PhysicalC,
        Feature::PhysicalD,
        Feature::PhysicalE,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::House => "q_house",
            Feature::Income => "q_income",
            Feature::HumanA => "q_human_a",
            Feature::HumanB => "q_human_b",
            Feature::SocialA => "q_social_a",
            Feature::SocialB => "q_social_b",
            Feature::SocialC => "q_social_c",
            Feature::SocialD => "q_social_d",
            Feature::SocialE => "q_social_e",
            Feature::PhysicalA => "q_physical_a",
            Feature::PhysicalB => "q_physical_b",
            Feature::PhysicalC => "q_physical_c",
            Feature::PhysicalD => "q_physical_d",
            Feature::PhysicalE => "q_physical_e",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    fn category(&self) -> FeatureCategory {
        match self {
            Feature::House => FeatureCategory::House,
            Feature::Income => FeatureCategory::Income,
            Feature::HumanA | Feature::HumanB => FeatureCategory::Human,
            Feature::SocialA
            | Feature::SocialB
            | Feature::SocialC
            | Feature::SocialD
            | Feature::SocialE => FeatureCategory::Social,
            Feature::PhysicalA
            | Feature::PhysicalB
            | Feature::PhysicalC
            | Feature::PhysicalD
            | Feature::PhysicalE => FeatureCategory::Physical,
        }
    }

    fn survey_var(&self) -> SurveyVar {
        match self {
            Feature::House => SurveyVar::House,
            Feature::Income => SurveyVar::Income,
            Feature::HumanA => SurveyVar::HumanA,
            Feature::HumanB => SurveyVar::HumanB,
            Feature::SocialA => SurveyVar::SocialA,
            Feature::SocialB => SurveyVar::SocialB,
            Feature::SocialC => SurveyVar::SocialC,
            Feature::SocialD => SurveyVar::SocialD,
            Feature::SocialE => SurveyVar::SocialE,
            Feature::PhysicalA => SurveyVar::PhysicalA,
            Feature::PhysicalB => SurveyVar::PhysicalB,
            Feature::PhysicalC => SurveyVar::PhysicalC,
            Feature::PhysicalD => SurveyVar::PhysicalD,
            Feature::PhysicalE => SurveyVar::PhysicalE,
        }
    }
}

fn check_range(feature: Feature, value: f64) -> Result<(), BehaviorError> {
    let ok = match feature.category() {
        FeatureCategory::House => value == 0.0 || value == 1.0,
        FeatureCategory::Income => value.is_finite() && value >= 0.0,
        _ => value.is_finite() && (0.0..=1.0).contains(&value),
    };
    if ok {
        Ok(())
    } else {
        Err(BehaviorError::FeatureOutOfRange { feature: feature.name(), value })
    }
}

/// Named feature values feeding a decision model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    values: BTreeMap<Feature, f64>,
}

impl FeatureVector {
    pub fn new() -> Self {
        FeatureVector::default()
    }

    pub fn with(mut self, feature: Feature, value: f64) -> Self {
        self.values.insert(feature, value);
        self
    }

    pub fn insert(&mut self, feature: Feature, value: f64) {
        self.values.insert(feature, value);
    }

    pub fn get(&self, feature: Feature) -> Option<f64> {
        self.values.get(&feature).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, f64)> + '_ {
        self.values.iter().map(|(&f, &v)| (f, v))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogitModelRaw {
    intercept: f64,
    coefficients: Vec<(Feature, f64)>,
}

/// A fitted binary logit: return probability = sigmoid(intercept + coef . x).
/// Holds at most one feature per network layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogitModelRaw", into = "LogitModelRaw")]
pub struct LogitModel {
    intercept: f64,
    coefficients: Vec<(Feature, f64)>,
    income_in_model: bool,
}

impl TryFrom<LogitModelRaw> for LogitModel {
    type Error = BehaviorError;

    fn try_from(raw: LogitModelRaw) -> Result<Self, BehaviorError> {
        LogitModel::new(raw.intercept, raw.coefficients)
    }
}

impl From<LogitModel> for LogitModelRaw {
    fn from(m: LogitModel) -> LogitModelRaw {
        LogitModelRaw { intercept: m.intercept, coefficients: m.coefficients }
    }
}

impl LogitModel {
    pub fn new(intercept: f64, coefficients: Vec<(Feature, f64)>) -> Result<Self, BehaviorError> {
        let mut seen = Vec::new();
        let mut categories = Vec::new();
        for (f, _) in &coefficients {
            if seen.contains(f) {
                return Err(BehaviorError::DuplicateFeature(f.name()));
            }
            seen.push(*f);
            let cat = f.category();
            if matches!(cat, FeatureCategory::Human | FeatureCategory::Social | FeatureCategory::Physical)
            {
                if categories.contains(&cat) {
                    let name = match cat {
                        FeatureCategory::Human => "human",
                        FeatureCategory::Social => "social",
                        _ => "physical",
                    };
                    return Err(BehaviorError::MultipleCategoryFeatures(name));
                }
                categories.push(cat);
            }
        }
        let income_in_model = coefficients.iter().any(|(f, _)| *f == Feature::Income);
        Ok(LogitModel { intercept, coefficients, income_in_model })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[(Feature, f64)] {
        &self.coefficients
    }

    pub fn income_in_model(&self) -> bool {
        self.income_in_model
    }

    /// Fitted model for Harris County households.
    pub fn harris() -> Self {
        LogitModel::new(
            -1.904,
            vec![
                (Feature::House, 1.520),
                (Feature::HumanA, 1.638),
                (Feature::SocialE, -1.756),
                (Feature::PhysicalB, 1.171),
            ],
        )
        .expect("built-in model is valid")
    }

    /// Fitted model shared by the non-Harris study counties. The income
    /// coefficient applies to raw annual dollars.
    pub fn other() -> Self {
        LogitModel::new(
            -2.379,
            vec![
                (Feature::Income, 2.26e-5),
                (Feature::HumanB, 3.298),
                (Feature::SocialC, -4.845),
                (Feature::PhysicalB, 1.675),
            ],
        )
        .expect("built-in model is valid")
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Long-run return probability of a household with features `x` under
/// `model`. Features the model does not use are ignored (with a warning);
/// features it needs must be present and in range.
pub fn return_probability(model: &LogitModel, x: &FeatureVector) -> Result<f64, BehaviorError> {
    let extras: Vec<&str> = x
        .iter()
        .map(|(f, _)| f)
        .filter(|f| model.coefficients.iter().all(|(mf, _)| mf != f))
        .map(|f| f.name())
        .collect();
    if !extras.is_empty() {
        log::warn!("ignoring features not used by the model: {}", extras.join(", "));
    }
    let mut eta = model.intercept;
    for &(f, coef) in &model.coefficients {
        let value = x.get(f).ok_or(BehaviorError::MissingFeature(f.name()))?;
        check_range(f, value)?;
        eta += coef * value;
    }
    Ok(sigmoid(eta))
}

/// Builds the feature vector of human node `h` for `model`: the mean previous
/// level of its human neighbors, the mean current level of its connected
/// social nodes (capped at 1, since social levels may start above baseline),
/// the current level of its county's physical node, and the node's own house
/// and income attributes. A category with no neighbors contributes 0.
pub fn extract_features(
    net: &MultilayerNetwork,
    h: u32,
    model: &LogitModel,
    human_levels_prev: &[f64],
    social_levels_now: &[f64],
    physical_levels_now: &[f64],
) -> FeatureVector {
    let node = &net.humans[h as usize];
    let mut x = FeatureVector::new();
    for &(f, _) in &model.coefficients {
        let value = match f.category() {
            FeatureCategory::House => {
                if node.owns_house {
                    1.0
                } else {
                    0.0
                }
            }
            FeatureCategory::Income => node.income_usd,
            FeatureCategory::Human => {
                let nbrs = net.human_neighbors(h);
                if nbrs.is_empty() {
                    0.0
                } else {
                    nbrs.iter().map(|&j| human_levels_prev[j as usize]).sum::<f64>()
                        / nbrs.len() as f64
                }
            }
            FeatureCategory::Social => {
                let srcs = net.social_sources_for_human(h);
                if srcs.is_empty() {
                    0.0
                } else {
                    let mean = srcs.iter().map(|&j| social_levels_now[j as usize]).sum::<f64>()
                        / srcs.len() as f64;
                    mean.min(1.0)
                }
            }
            FeatureCategory::Physical => {
                let p = net
                    .physical_for_county(node.county)
                    .expect("network construction guarantees a physical node per county");
                physical_levels_now[p as usize]
            }
        };
        x.insert(f, value);
    }
    x
}

/// Survey variables: the model features plus demographics and the two
/// outcome flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SurveyVar {
    #[serde(rename = "q_age")]
    Age,
    #[serde(rename = "q_sex")]
    Sex,
    #[serde(rename = "q_race")]
    Race,
    #[serde(rename = "q_income")]
    Income,
    #[serde(rename = "q_house")]
    House,
    #[serde(rename = "q_human_a")]
    HumanA,
    #[serde(rename = "q_human_b")]
    HumanB,
    #[serde(rename = "q_social_a")]
    SocialA,
    #[serde(rename = "q_social_b")]
    SocialB,
    #[serde(rename = "q_social_c")]
    SocialC,
    #[serde(rename = "q_social_d")]
    SocialD,
    #[serde(rename = "q_social_e")]
    SocialE,
    #[serde(rename = "q_physical_a")]
    PhysicalA,
    #[serde(rename = "q_physical_b")]
    PhysicalB,
    #[serde(rename = "q_physical_c")]
    PhysicalC,
    #[serde(rename = "q_physical_d")]
    PhysicalD,
    #[serde(rename = "q_physical_e")]
    PhysicalE,
    #[serde(rename = "y_evacuate")]
    Evacuate,
    #[serde(rename = "y_return")]
    Return,
}

impl SurveyVar {
    pub const ALL: [SurveyVar; 19] = [
        SurveyVar::Age,
        SurveyVar::Sex,
        SurveyVar::Race,
        SurveyVar::Income,
        SurveyVar::House,
        SurveyVar::HumanA,
        SurveyVar::HumanB,
        SurveyVar::SocialA,
        SurveyVar::SocialB,
        SurveyVar::SocialC,
        SurveyVar::SocialD,
        SurveyVar::SocialE,
        SurveyVar::PhysicalA,
        SurveyVar::PhysicalB,
        SurveyVar::PhysicalC,
        SurveyVar::PhysicalD,
        SurveyVar::PhysicalE,
        SurveyVar::Evacuate,
        SurveyVar::Return,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SurveyVar::Age => "q_age",
            SurveyVar::Sex => "q_sex",
            SurveyVar::Race => "q_race",
            SurveyVar::Income => "q_income",
            SurveyVar::House => "q_house",
            SurveyVar::HumanA => "q_human_a",
            SurveyVar::HumanB => "q_human_b",
            SurveyVar::SocialA => "q_social_a",
            SurveyVar::SocialB => "q_social_b",
            SurveyVar::SocialC => "q_social_c",
            SurveyVar::SocialD => "q_social_d",
            SurveyVar::SocialE => "q_social_e",
            SurveyVar::PhysicalA => "q_physical_a",
            SurveyVar::PhysicalB => "q_physical_b",
            SurveyVar::PhysicalC => "q_physical_c",
            SurveyVar::PhysicalD => "q_physical_d",
            SurveyVar::PhysicalE => "q_physical_e",
            SurveyVar::Evacuate => "y_evacuate",
            SurveyVar::Return => "y_return",
        }
    }

    pub fn from_name(name: &str) -> Option<SurveyVar> {
        SurveyVar::ALL.into_iter().find(|v| v.name() == name)
    }
}

/// One survey response; a variable absent from `values` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub id: u32,
    values: BTreeMap<SurveyVar, f64>,
}

impl SurveyRecord {
    pub fn new(id: u32) -> Self {
        SurveyRecord { id, values: BTreeMap::new() }
    }

    pub fn with(mut self, var: SurveyVar, value: f64) -> Self {
        self.values.insert(var, value);
        self
    }

    pub fn set(&mut self, var: SurveyVar, value: f64) {
        self.values.insert(var, value);
    }

    pub fn get(&self, var: SurveyVar) -> Option<f64> {
        self.values.get(&var).copied()
    }

    pub fn is_complete(&self) -> bool {
        SurveyVar::ALL.iter().all(|v| self.values.contains_key(v))
    }
}

/// Keeps only respondents who evacuated, then fills each missing value with
/// the mean of that variable over the retained records. Returns records with
/// no missing values; a variable absent from every retained record cannot be
/// imputed and is an error.
pub fn preprocess_survey(records: &[SurveyRecord]) -> Result<Vec<SurveyRecord>, BehaviorError> {
    let mut retained: Vec<SurveyRecord> = records
        .iter()
        .filter(|r| r.get(SurveyVar::Evacuate) == Some(1.0))
        .cloned()
        .collect();
    if retained.is_empty() {
        return Ok(retained);
    }
    for var in SurveyVar::ALL {
        let present: Vec<f64> = retained.iter().filter_map(|r| r.get(var)).collect();
        if present.is_empty() {
            return Err(BehaviorError::Unimputable(var.name()));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        for r in &mut retained {
            if r.get(var).is_none() {
                r.set(var, mean);
            }
        }
    }
    Ok(retained)
}

/// Representative annual income in dollars for survey income bands 1..=9.
/// The open-ended bottom and top bands map to their boundary values; interior
/// bands map to their midpoints.
pub fn income_band_to_dollars(band: u32) -> Result<f64, BehaviorError> {
    match band {
        1 => Ok(15_000.0),
        2 => Ok(22_500.0),
        3 => Ok(37_500.0),
        4 => Ok(52_500.0),
        5 => Ok(67_500.0),
        6 => Ok(82_500.0),
        7 => Ok(97_500.0),
        8 => Ok(112_500.0),
        9 => Ok(120_000.0),
        other => Err(BehaviorError::InvalidIncomeBand(other)),
    }
}

/// Income values at band-code scale (<= 9.5) are mapped through
/// [`income_band_to_dollars`]; anything larger is taken as raw dollars.
pub fn map_income_value(value: f64) -> f64 {
    if value <= 9.5 {
        let band = value.round().clamp(1.0, 9.0) as u32;
        income_band_to_dollars(band).expect("band clamped into 1..=9")
    } else {
        value
    }
}

/// A model produced by [`fit_logit`], with inference diagnostics. Standard
/// errors are ordered intercept first, then the requested features.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogit {
    pub model: LogitModel,
    pub std_errors: Vec<f64>,
    pub mcfadden_r2: f64,
    pub log_likelihood: f64,
    pub iterations: u32,
}

const MAX_ABS_COEFFICIENT: f64 = 50.0;
const MAX_IRLS_ITERATIONS: u32 = 100;

/// Maximum-likelihood logit of y_return on the given features, by iteratively
/// reweighted least squares. Records must be complete (preprocess first).
/// Income is mapped to dollars via [`map_income_value`].
pub fn fit_logit(records: &[SurveyRecord], features: &[Feature]) -> Result<FittedLogit, BehaviorError> {
    let needed = 10 * features.len().max(1);
    if records.len() < needed {
        return Err(BehaviorError::TooFewRecords {
            needed,
            features: features.len(),
            got: records.len(),
        });
    }
    // surfaces duplicate or same-category features before any numeric work
    LogitModel::new(0.0, features.iter().map(|&f| (f, 0.0)).collect())?;

    let n = records.len();
    let p = features.len() + 1;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, r) in records.iter().enumerate() {
        let label = r.get(SurveyVar::Return).ok_or(BehaviorError::IncompleteRecord {
            record: r.id,
            variable: SurveyVar::Return.name(),
        })?;
        if label != 0.0 && label != 1.0 {
            return Err(BehaviorError::NonBinaryDependent(label));
        }
        y[i] = label;
        x[(i, 0)] = 1.0;
        for (j, f) in features.iter().enumerate() {
            let raw = r.get(f.survey_var()).ok_or(BehaviorError::IncompleteRecord {
                record: r.id,
                variable: f.survey_var().name(),
            })?;
            x[(i, j + 1)] = if *f == Feature::Income { map_income_value(raw) } else { raw };
        }
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(BehaviorError::DegenerateDependent);
    }

    let param_name = |j: usize| -> &'static str {
        if j == 0 {
            "intercept"
        } else {
            features[j - 1].name()
        }
    };

    let mut beta = DVector::zeros(p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_IRLS_ITERATIONS {
        iterations += 1;
        let eta = &x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-10));
        // X' W X and X' (y - mu) via row scaling
        let mut xtwx = DMatrix::zeros(p, p);
        let mut grad = DVector::zeros(p);
        for i in 0..n {
            let wi = w[i];
            let resid = y[i] - mu[i];
            for a in 0..p {
                grad[a] += x[(i, a)] * resid;
                for b in a..p {
                    xtwx[(a, b)] += wi * x[(i, a)] * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let delta = xtwx
            .clone()
            .lu()
            .solve(&grad)
            .ok_or(BehaviorError::SingularDesign)?;
        beta += &delta;
        for j in 0..p {
            if beta[j].abs() > MAX_ABS_COEFFICIENT {
                return Err(BehaviorError::QuasiSeparation {
                    feature: param_name(j),
                    value: beta[j],
                });
            }
        }
        if delta.amax() < 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(BehaviorError::NotConverged(MAX_IRLS_ITERATIONS));
    }

    // covariance = (X' W X)^-1 at the optimum
    let eta = &x * &beta;
    let mu = eta.map(sigmoid);
    let w = mu.map(|m| (m * (1.0 - m)).max(1e-10));
    let mut xtwx: DMatrix<f64> = DMatrix::zeros(p, p);
    for i in 0..n {
        for a in 0..p {
            for b in a..p {
                xtwx[(a, b)] += w[i] * x[(i, a)] * x[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    let cov = xtwx.try_inverse().ok_or(BehaviorError::SingularDesign)?;
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();

    let log_likelihood: f64 = (0..n)
        .map(|i| {
            if y[i] == 1.0 {
                mu[i].max(1e-300).ln()
            } else {
                (1.0 - mu[i]).max(1e-300).ln()
            }
        })
        .sum();
    let p_bar = positives as f64 / n as f64;
    let null_ll = n as f64 * (p_bar * p_bar.ln() + (1.0 - p_bar) * (1.0 - p_bar).ln());
    let mcfadden_r2 = 1.0 - log_likelihood / null_ll;

    let model = LogitModel::new(
        beta[0],
        features.iter().enumerate().map(|(j, &f)| (f, beta[j + 1])).collect(),
    )?;
    Ok(FittedLogit { model, std_errors, mcfadden_r2, log_likelihood, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::net::{build_network, HumanNode, Layer, NodeId, PhysicalNode, SocialNode};
    use crate::rng::unit_uniform;
    use proptest::prelude::*;

    #[test]
    fn harris_hand_oracle() {
        let x = FeatureVector::new()
            .with(Feature::House, 1.0)
            .with(Feature::HumanA, 1.0)
            .with(Feature::SocialE, 0.0)
            .with(Feature::PhysicalB, 1.0);
        let p = return_probability(&LogitModel::harris(), &x).unwrap();
        // sigmoid(-1.904 + 1.520 + 1.638 + 1.171) = sigmoid(2.425)
        assert!((p - 0.9187).abs() < 1e-4);
        assert!((p - 0.918713920386427).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_give_half() {
        let model = LogitModel::new(
            0.0,
            vec![(Feature::House, 0.0), (Feature::HumanA, 0.0)],
        )
        .unwrap();
        let x = FeatureVector::new().with(Feature::House, 1.0).with(Feature::HumanA, 0.3);
        assert_eq!(return_probability(&model, &x).unwrap(), 0.5);
    }

    #[test]
    fn other_model_income_oracle() {
        let x = FeatureVector::new()
            .with(Feature::Income, 120_000.0)
            .with(Feature::HumanB, 0.0)
            .with(Feature::SocialC, 0.0)
            .with(Feature::PhysicalB, 0.0);
        let p = return_probability(&LogitModel::other(), &x).unwrap();
        // sigmoid(-2.379 + 2.26e-5 * 120000) = sigmoid(0.333)
        assert!((p - 0.5825).abs() < 1e-3);
        assert!((p - 0.5824891435116022).abs() < 1e-12);
    }

    #[test]
    fn missing_and_out_of_range_features_error() {
        let model = LogitModel::harris();
        let x = FeatureVector::new().with(Feature::House, 1.0);
        assert_eq!(
            return_probability(&model, &x).unwrap_err(),
            BehaviorError::MissingFeature("q_human_a")
        );
        let x = FeatureVector::new()
            .with(Feature::House, 0.5)
            .with(Feature::HumanA, 0.0)
            .with(Feature::SocialE, 0.0)
            .with(Feature::PhysicalB, 0.0);
        assert_eq!(
            return_probability(&model, &x).unwrap_err(),
            BehaviorError::FeatureOutOfRange { feature: "q_house", value: 0.5 }
        );
        let x = FeatureVector::new()
            .with(Feature::House, 1.0)
            .with(Feature::HumanA, 0.0)
            .with(Feature::SocialE, 1.2)
            .with(Feature::PhysicalB, 0.0);
        assert!(matches!(
            return_probability(&model, &x).unwrap_err(),
            BehaviorError::FeatureOutOfRange { feature: "q_social_e", .. }
        ));
    }

    #[test]
    fn model_construction_rejects_category_duplicates() {
        assert_eq!(
            LogitModel::new(0.0, vec![(Feature::House, 1.0), (Feature::House, 2.0)]).unwrap_err(),
            BehaviorError::DuplicateFeature("q_house")
        );
        assert_eq!(
            LogitModel::new(0.0, vec![(Feature::HumanA, 1.0), (Feature::HumanB, 2.0)]).unwrap_err(),
            BehaviorError::MultipleCategoryFeatures("human")
        );
        assert_eq!(
            LogitModel::new(0.0, vec![(Feature::SocialA, 1.0), (Feature::SocialE, 2.0)])
                .unwrap_err(),
            BehaviorError::MultipleCategoryFeatures("social")
        );
    }

    #[test]
    fn model_json_round_trip() {
        let model = LogitModel::other();
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("q_income"));
        let back: LogitModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        // deserialization enforces invariants
        let bad = r#"{"intercept":0.0,"coefficients":[["q_human_a",1.0],["q_human_b",1.0]]}"#;
        assert!(serde_json::from_str::<LogitModel>(bad).is_err());
    }

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn human(index: u32, lat: f64, lon: f64, owns: bool) -> HumanNode {
        HumanNode {
            id: NodeId { layer: Layer::Human, index },
            location: pt(lat, lon),
            county: 0,
            income_usd: 60_000.0,
            owns_house: owns,
        }
    }

    fn social(index: u32, lat: f64, lon: f64) -> SocialNode {
        SocialNode {
            id: NodeId { layer: Layer::Social, index },
            location: pt(lat, lon),
            county: 0,
            baseline_daily_visits: 5.0,
        }
    }

    fn physical(index: u32, county: u32) -> PhysicalNode {
        PhysicalNode { id: NodeId { layer: Layer::Physical, index }, county, location: pt(29.5, -95.5) }
    }

    #[test]
    fn isolated_node_features() {
        let net = build_network(
            vec![human(0, 29.0, -95.0, true)],
            vec![],
            vec![physical(0, 0)],
            1.0,
        )
        .unwrap();
        let x = extract_features(&net, 0, &LogitModel::harris(), &[0.0], &[], &[1.0]);
        assert_eq!(x.get(Feature::House), Some(1.0));
        assert_eq!(x.get(Feature::HumanA), Some(0.0));
        assert_eq!(x.get(Feature::SocialE), Some(0.0));
        assert_eq!(x.get(Feature::PhysicalB), Some(1.0));
    }

    #[test]
    fn neighbor_mean_of_one_and_zero_is_half() {
        let net = build_network(
            vec![
                human(0, 29.0, -95.0, false),
                human(1, 29.0, -95.003, true),
                human(2, 29.0, -94.997, true),
            ],
            vec![],
            vec![physical(0, 0)],
            1.0,
        )
        .unwrap();
        let x = extract_features(&net, 0, &LogitModel::harris(), &[0.0, 1.0, 0.0], &[], &[0.5]);
        assert_eq!(x.get(Feature::HumanA), Some(0.5));
        assert_eq!(x.get(Feature::House), Some(0.0));
    }

    #[test]
    fn social_mean_above_one_is_capped() {
        let net = build_network(
            vec![human(0, 29.0, -95.0, true)],
            vec![social(0, 29.0, -95.002), social(1, 29.0, -94.998)],
            vec![physical(0, 0)],
            1.0,
        )
        .unwrap();
        let x = extract_features(&net, 0, &LogitModel::harris(), &[0.0], &[1.4, 1.2], &[0.5]);
        assert_eq!(x.get(Feature::SocialE), Some(1.0));
        let x = extract_features(&net, 0, &LogitModel::harris(), &[0.0], &[0.5, 0.7], &[0.5]);
        assert!((x.get(Feature::SocialE).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn twenty_node_features_match_brute_force() {
        let mut humans = Vec::new();
        let mut socials = Vec::new();
        for i in 0..20u32 {
            let u1 = unit_uniform(1, i as u64, 0);
            let u2 = unit_uniform(1, i as u64, 1);
            humans.push(human(i, 29.0 + u1 * 0.02, -95.0 + u2 * 0.02, i % 2 == 0));
            let u3 = unit_uniform(2, i as u64, 0);
            let u4 = unit_uniform(2, i as u64, 1);
            socials.push(social(i, 29.0 + u3 * 0.02, -95.0 + u4 * 0.02));
        }
        let hpos: Vec<_> = humans.iter().map(|h| h.location).collect();
        let spos: Vec<_> = socials.iter().map(|s| s.location).collect();
        let net = build_network(humans, socials, vec![physical(0, 0)], 1.0).unwrap();

        let hlv: Vec<f64> = (0..20).map(|i| f64::from(i % 3 == 0)).collect();
        let slv: Vec<f64> = (0..20).map(|i| unit_uniform(3, i, 0)).collect();
        let plv = [0.7];
        for h in 0..20u32 {
            let x = extract_features(&net, h, &LogitModel::harris(), &hlv, &slv, &plv);
            let (mut hsum, mut hcnt, mut ssum, mut scnt) = (0.0, 0u32, 0.0, 0u32);
            for j in 0..20usize {
                use crate::geo::haversine_km;
                if j as u32 != h && haversine_km(hpos[h as usize], hpos[j]) <= 1.0 {
                    hsum += hlv[j];
                    hcnt += 1;
                }
                if haversine_km(hpos[h as usize], spos[j]) <= 1.0 {
                    ssum += slv[j];
                    scnt += 1;
                }
            }
            let hexp = if hcnt == 0 { 0.0 } else { hsum / hcnt as f64 };
            let sexp = if scnt == 0 { 0.0 } else { (ssum / scnt as f64).min(1.0) };
            assert!((x.get(Feature::HumanA).unwrap() - hexp).abs() < 1e-12);
            assert!((x.get(Feature::SocialE).unwrap() - sexp).abs() < 1e-12);
            assert_eq!(x.get(Feature::PhysicalB), Some(0.7));
        }
    }

    fn complete_record(id: u32, evacuate: f64, ret: f64) -> SurveyRecord {
        let mut r = SurveyRecord::new(id);
        for var in SurveyVar::ALL {
            r.set(var, 0.0);
        }
        r.set(SurveyVar::Evacuate, evacuate);
        r.set(SurveyVar::Return, ret);
        r
    }

    #[test]
    fn non_evacuated_records_are_dropped() {
        let records = vec![complete_record(0, 0.0, 1.0), complete_record(1, 1.0, 1.0)];
        let out = preprocess_survey(&records).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 1);
    }

    #[test]
    fn mean_substitution_fills_missing() {
        let mut a = complete_record(0, 1.0, 1.0);
        a.set(SurveyVar::SocialA, 0.2);
        let mut b = complete_record(1, 1.0, 0.0);
        b.values.remove(&SurveyVar::SocialA);
        let mut c = complete_record(2, 1.0, 1.0);
        c.set(SurveyVar::SocialA, 0.6);
        let out = preprocess_survey(&[a, b, c]).unwrap();
        assert!((out[1].get(SurveyVar::SocialA).unwrap() - 0.4).abs() < 1e-15);
        assert!(out.iter().all(|r| r.is_complete()));
    }

    #[test]
    fn unimputable_variable_is_named() {
        let mut a = complete_record(0, 1.0, 1.0);
        a.values.remove(&SurveyVar::PhysicalC);
        let mut b = complete_record(1, 1.0, 0.0);
        b.values.remove(&SurveyVar::PhysicalC);
        let err = preprocess_survey(&[a, b]).unwrap_err();
        assert_eq!(err, BehaviorError::Unimputable("q_physical_c"));
        assert!(err.to_string().contains("q_physical_c"));
    }

    #[test]
    fn preprocessing_is_idempotent_on_complete_data() {
        let records = vec![complete_record(0, 1.0, 1.0), complete_record(1, 1.0, 0.0)];
        let once = preprocess_survey(&records).unwrap();
        let twice = preprocess_survey(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once, records);
    }

    #[test]
    fn imputation_preserves_variable_means() {
        let mut records = Vec::new();
        for i in 0..50u32 {
            let mut r = SurveyRecord::new(i);
            for (k, var) in SurveyVar::ALL.into_iter().enumerate() {
                r.set(var, unit_uniform(7, i as u64, k as u64));
            }
            r.set(SurveyVar::Evacuate, 1.0);
            r.set(SurveyVar::Return, f64::from(i % 2 == 0));
            // ~5% missing at random, outcomes kept present
            for (k, var) in SurveyVar::ALL.into_iter().enumerate() {
                if var != SurveyVar::Evacuate
                    && var != SurveyVar::Return
                    && unit_uniform(8, i as u64, k as u64) < 0.05
                {
                    r.values.remove(&var);
                }
            }
            records.push(r);
        }
        let before: Vec<f64> = SurveyVar::ALL
            .iter()
            .map(|&v| {
                let vals: Vec<f64> = records.iter().filter_map(|r| r.get(v)).collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect();
        let out = preprocess_survey(&records).unwrap();
        for (k, &v) in SurveyVar::ALL.iter().enumerate() {
            let mean =
                out.iter().map(|r| r.get(v).unwrap()).sum::<f64>() / out.len() as f64;
            assert!((mean - before[k]).abs() < 1e-12, "{} drifted", v.name());
        }
    }

    #[test]
    fn income_band_mapping() {
        assert_eq!(income_band_to_dollars(1).unwrap(), 15_000.0);
        assert_eq!(income_band_to_dollars(2).unwrap(), 22_500.0);
        assert_eq!(income_band_to_dollars(5).unwrap(), 67_500.0);
        assert_eq!(income_band_to_dollars(8).unwrap(), 112_500.0);
        assert_eq!(income_band_to_dollars(9).unwrap(), 120_000.0);
        assert_eq!(income_band_to_dollars(0).unwrap_err(), BehaviorError::InvalidIncomeBand(0));
        assert_eq!(income_band_to_dollars(10).unwrap_err(), BehaviorError::InvalidIncomeBand(10));
        assert_eq!(map_income_value(3.0), 37_500.0);
        assert_eq!(map_income_value(3.4), 37_500.0);
        assert_eq!(map_income_value(55_000.0), 55_000.0);
    }

    /// Synthetic survey drawn from known coefficients.
    fn synth_records(n: u32, seed: u64, true_beta: &[f64]) -> Vec<SurveyRecord> {
        // columns: intercept, q_house, q_income (dollars), q_human_b, q_social_c
        let mut out = Vec::new();
        for i in 0..n {
            let mut r = complete_record(i, 1.0, 0.0);
            let house = f64::from(unit_uniform(seed, i as u64, 0) < 0.5);
            let band = 1 + (unit_uniform(seed, i as u64, 1) * 9.0) as u32;
            let income = income_band_to_dollars(band.min(9)).unwrap();
            let human_b = unit_uniform(seed, i as u64, 2);
            let social_c = unit_uniform(seed, i as u64, 3);
            r.set(SurveyVar::House, house);
            r.set(SurveyVar::Income, income);
            r.set(SurveyVar::HumanB, human_b);
            r.set(SurveyVar::SocialC, social_c);
            let eta = true_beta[0]
                + true_beta[1] * house
                + true_beta[2] * income
                + true_beta[3] * human_b
                + true_beta[4] * social_c;
            let y = f64::from(unit_uniform(seed, i as u64, 4) < sigmoid(eta));
            r.set(SurveyVar::Return, y);
            out.push(r);
        }
        out
    }

    #[test]
    fn fit_recovers_known_coefficients_within_three_se() {
        let truth = [-1.5, 1.2, 2.0e-5, 2.5, -3.0];
        let records = synth_records(5000, 0xF17, &truth);
        let fit = fit_logit(
            &records,
            &[Feature::House, Feature::Income, Feature::HumanB, Feature::SocialC],
        )
        .unwrap();
        let mut estimates = vec![fit.model.intercept()];
        estimates.extend(fit.model.coefficients().iter().map(|(_, c)| *c));
        for (j, (&est, &se)) in estimates.iter().zip(&fit.std_errors).enumerate() {
            assert!(
                (est - truth[j]).abs() < 3.0 * se,
                "param {j}: estimate {est}, truth {}, se {se}",
                truth[j]
            );
        }
        assert!(fit.model.income_in_model());
        assert!(fit.mcfadden_r2 > 0.0 && fit.mcfadden_r2 < 1.0);
    }

    #[test]
    fn fit_gradient_vanishes_at_optimum() {
        let truth = [-0.5, 1.0, 1.5e-5, 2.0, -2.0];
        let records = synth_records(2000, 0xABC, &truth);
        let features = [Feature::House, Feature::Income, Feature::HumanB, Feature::SocialC];
        let fit = fit_logit(&records, &features).unwrap();
        let n = records.len() as f64;
        // gradient of the log-likelihood: sum over records of x * (y - mu)
        let mut grad = vec![0.0f64; 5];
        for r in &records {
            let xs = [
                1.0,
                r.get(SurveyVar::House).unwrap(),
                map_income_value(r.get(SurveyVar::Income).unwrap()),
                r.get(SurveyVar::HumanB).unwrap(),
                r.get(SurveyVar::SocialC).unwrap(),
            ];
            let mut eta = fit.model.intercept();
            for (k, (_, c)) in fit.model.coefficients().iter().enumerate() {
                eta += c * xs[k + 1];
            }
            let resid = r.get(SurveyVar::Return).unwrap() - sigmoid(eta);
            for (g, &xv) in grad.iter_mut().zip(&xs) {
                *g += xv * resid;
            }
        }
        // the income column is ~1e5 in scale, so normalize per-column
        let scales = [1.0, 1.0, 120_000.0, 1.0, 1.0];
        for (g, s) in grad.iter().zip(scales) {
            assert!((g / s).abs() < 1e-6 * n, "gradient component {g}");
        }
    }

    #[test]
    fn constant_dependent_is_rejected() {
        let records: Vec<SurveyRecord> = (0..40).map(|i| complete_record(i, 1.0, 1.0)).collect();
        assert_eq!(fit_logit(&records, &[]).unwrap_err(), BehaviorError::DegenerateDependent);
    }

    #[test]
    fn intercept_only_balanced_labels() {
        let records: Vec<SurveyRecord> =
            (0..10_000).map(|i| complete_record(i, 1.0, f64::from(i % 2 == 0))).collect();
        let fit = fit_logit(&records, &[]).unwrap();
        assert!(fit.model.intercept().abs() < 0.05);
        assert!(fit.model.coefficients().is_empty());
        assert!(fit.mcfadden_r2.abs() < 1e-9);
    }

    #[test]
    fn separation_is_detected() {
        // y perfectly determined by q_house
        let mut records = Vec::new();
        for i in 0..200u32 {
            let mut r = complete_record(i, 1.0, f64::from(i % 2 == 0));
            r.set(SurveyVar::House, f64::from(i % 2 == 0));
            records.push(r);
        }
        assert!(matches!(
            fit_logit(&records, &[Feature::House]).unwrap_err(),
            BehaviorError::QuasiSeparation { .. } | BehaviorError::NotConverged(_)
        ));
    }

    #[test]
    fn too_few_records_is_rejected() {
        let records: Vec<SurveyRecord> =
            (0..25).map(|i| complete_record(i, 1.0, f64::from(i % 2 == 0))).collect();
        assert_eq!(
            fit_logit(&records, &[Feature::House, Feature::HumanA, Feature::SocialA])
                .unwrap_err(),
            BehaviorError::TooFewRecords { needed: 30, features: 3, got: 25 }
        );
    }

    proptest! {
        #[test]
        fn translation_invariance(
            house in prop::bool::ANY,
            humanv in 0.0f64..1.0,
            socialv in 0.0f64..1.0,
            physv in 0.0f64..1.0,
            shift in -5.0f64..5.0,
        ) {
            let base = LogitModel::harris();
            let x = FeatureVector::new()
                .with(Feature::House, f64::from(house))
                .with(Feature::HumanA, humanv)
                .with(Feature::SocialE, socialv)
                .with(Feature::PhysicalB, physv);
            let p0 = return_probability(&base, &x).unwrap();

            // shift the human feature by a constant and absorb it into the
            // intercept: the probability must not move
            let coef_human = base
                .coefficients()
                .iter()
                .find(|(f, _)| *f == Feature::HumanA)
                .unwrap()
                .1;
            let shifted = LogitModel::new(
                base.intercept() - shift * coef_human,
                base.coefficients().to_vec(),
            )
            .unwrap();
            let mut eta = shifted.intercept();
            for &(f, c) in shifted.coefficients() {
                let v = x.get(f).unwrap() + if f == Feature::HumanA { shift } else { 0.0 };
                eta += c * v;
            }
            let p1 = sigmoid(eta);
            prop_assert!((p0 - p1).abs() < 1e-12);
        }

        #[test]
        fn probability_is_monotone_in_coefficient_sign(
            humanv in 0.0f64..0.9,
            bump in 0.001f64..0.1,
            socialv in 0.0f64..0.9,
        ) {
            let model = LogitModel::harris();
            let x = FeatureVector::new()
                .with(Feature::House, 1.0)
                .with(Feature::HumanA, humanv)
                .with(Feature::SocialE, socialv)
                .with(Feature::PhysicalB, 0.5);
            let p0 = return_probability(&model, &x).unwrap();
            // positive coefficient: raising the feature raises P
            let x_up = x.clone().with(Feature::HumanA, humanv + bump);
            prop_assert!(return_probability(&model, &x_up).unwrap() > p0);
            // negative coefficient: raising the feature lowers P
            let x_dn = x.clone().with(Feature::SocialE, socialv + bump);
            prop_assert!(return_probability(&model, &x_dn).unwrap() < p0);
        }
    }
}
