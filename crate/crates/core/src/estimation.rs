//! Parameter estimation: maximum-a-posteriori fitting of the aggregate
//! recovery dynamics from observed time series, constrained least-squares
//! fitting of the logistic physical-recovery curve, and the Pearson
//! correlation used as the fit-quality measure.
//!
//! Both fitters use deterministic multi-start Nelder-Mead searches; ties
//! between equally good starts break by start index, so results are
//! reproducible for a given seed regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{aggregate_rate, DynamicParams, DynamicsError, LogisticCurve};
use crate::rng::unit_uniform;

/// Likelihood noise scale (recovery-level units) used when the caller does
/// not supply one.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

const BETA_FLOOR: f64 = 1e-9;
const BETA_CEIL: f64 = 1e3;
const AMPLITUDE_FLOOR: f64 = 1e-6;
const PIN_TOLERANCE: f64 = 1e-6;
const QUALITY_GATE_RHO: f64 = 0.950;
const MULTI_STARTS: u64 = 16;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("observation days must be strictly increasing, got {later} after {earlier}")]
    NonIncreasingDays { earlier: u32, later: u32 },
    #[error("observation level {0} outside [0, 1.5]")]
    LevelOutOfRange(f64),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("series must span at least {needed} days, got {got}")]
    ShortSpan { needed: u32, got: u32 },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation is undefined for zero-variance input")]
    ZeroVariance,
    #[error("parameter {0} is unidentifiable from this data")]
    Degenerate(&'static str),
    #[error("fit quality rho = {rho:.4} does not exceed the {QUALITY_GATE_RHO} acceptance gate")]
    QualityBelowGate { rho: f64 },
    #[error("noise sigma must be finite and positive, got {0}")]
    InvalidSigma(f64),
    #[error("n_bar must be finite and positive, got {0}")]
    InvalidNBar(f64),
    #[error("prior invalid: beta scale {scale}, capacity bounds [{lower}, {upper}]")]
    InvalidPrior { scale: f64, lower: f64, upper: f64 },
    #[error("optimizer did not converge: projected gradient {gradient:.3e} exceeds {threshold:.3e}")]
    NotConverged { gradient: f64, threshold: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A recovery-level time series sampled on strictly increasing integer days.
/// Levels up to 1.5 are accepted because observed social activity can exceed
/// its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    points: Vec<(u32, f64)>,
}

impl ObservationSeries {
    pub fn new(points: Vec<(u32, f64)>) -> Result<Self, EstimationError> {
        for window in points.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(EstimationError::NonIncreasingDays {
                    earlier: window[0].0,
                    later: window[1].0,
                });
            }
        }
        for &(_, level) in &points {
            if !level.is_finite() || !(0.0..=1.5).contains(&level) {
                return Err(EstimationError::LevelOutOfRange(level));
            }
        }
        Ok(ObservationSeries { points })
    }

    pub fn points(&self) -> &[(u32, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn days(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Days from first to last observation.
    pub fn span_days(&self) -> u32 {
        match (self.points.first(), self.points.last()) {
            (Some(first), Some(last)) => last.0 - first.0,
            _ => 0,
        }
    }

    /// Piecewise-linear interpolation between observations, constant beyond
    /// the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() {
            return 0.0;
        }
        if t <= pts[0].0 as f64 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 as f64 {
            return pts[pts.len() - 1].1;
        }
        let idx = pts.partition_point(|&(d, _)| (d as f64) <= t);
        let (d0, v0) = pts[idx - 1];
        let (d1, v1) = pts[idx];
        let frac = (t - d0 as f64) / (d1 as f64 - d0 as f64);
        v0 + frac * (v1 - v0)
    }
}

/// Priors for the dynamics fit: half-Cauchy on both growth rates, uniform
/// hard bounds on both capacities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta_scale: f64,
    pub k_lower: f64,
    pub k_upper: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { beta_scale: 1.0, k_lower: 0.5, k_upper: 1.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let ok = self.beta_scale.is_finite()
            && self.beta_scale > 0.0
            && self.k_lower.is_finite()
            && self.k_upper.is_finite()
            && 0.0 < self.k_lower
            && self.k_lower < self.k_upper
            && self.k_upper <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(EstimationError::InvalidPrior {
                scale: self.beta_scale,
                lower: self.k_lower,
                upper: self.k_upper,
            })
        }
    }
}

/// Product-moment correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, EstimationError> {
    if a.len() != b.len() {
        return Err(EstimationError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EstimationError::TooFewObservations { needed: 2, got: a.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(EstimationError::ZeroVariance);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Integrates the aggregate social dynamics with daily Euler steps from
/// `start_level` at `start_day`, reading the physical level from `physical`
/// by linear interpolation. Returns levels at each day of
/// `start_day..=end_day`.
pub fn integrate_aggregate(
    start_level: f64,
    start_day: u32,
    end_day: u32,
    physical: &ObservationSeries,
    params: &DynamicParams,
) -> Vec<f64> {
    let mut out = Vec::with_capacity((end_day - start_day + 1) as usize);
    let mut r = start_level;
    out.push(r);
    for t in start_day..end_day {
        r += aggregate_rate(r, physical.value_at(t as f64), params);
        out.push(r);
    }
    out
}

/// Negative log-posterior (up to constants) of dynamics parameters given a
/// social series and an interpolated physical series: Gaussian residuals of
/// the integrated trajectory at the observation days, plus half-Cauchy
/// penalty on both growth rates. This is the objective the fitter minimizes.
pub fn dynamics_objective(
    params: &DynamicParams,
    series_s: &ObservationSeries,
    series_p: &ObservationSeries,
    prior: &PriorSpec,
    noise_sigma: f64,
) -> f64 {
    let pts = series_s.points();
    let first_day = pts[0].0;
    let last_day = pts[pts.len() - 1].0;
    let traj = integrate_aggregate(pts[0].1, first_day, last_day, series_p, params);
    let mut nll = 0.0;
    for &(day, level) in pts {
        let fitted = traj[(day - first_day) as usize];
        nll += ((fitted - level) / noise_sigma).powi(2) / 2.0;
    }
    let s = prior.beta_scale;
    nll + (1.0 + (params.beta_s / s).powi(2)).ln() + (1.0 + (params.beta_p / s).powi(2)).ln()
}

/// Result of [`fit_dynamic_params`]: the point estimate, the minimized
/// negative log-posterior, the projected-gradient convergence diagnostic,
/// and the names of any parameters pinned at a prior bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFit {
    pub params: DynamicParams,
    pub neg_log_posterior: f64,
    pub gradient_sup_norm: f64,
    pub pinned: Vec<&'static str>,
}

fn clamp_point(x: &[f64], prior: &PriorSpec) -> [f64; 4] {
    [
        x[0].clamp(BETA_FLOOR, BETA_CEIL),
        x[1].clamp(prior.k_lower, prior.k_upper),
        x[2].clamp(BETA_FLOOR, BETA_CEIL),
        x[3].clamp(prior.k_lower, prior.k_upper),
    ]
}

/// Deterministic Nelder-Mead minimizer. Stops when the simplex value spread
/// falls below 1e-14 or after `max_iter` reflections.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    steps: &[f64],
    max_iter: u32,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    for _ in 0..max_iter {
        // ascending by value; stable sort keeps insertion order on ties
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        if values[worst] - values[best] < 1e-14 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for (c, &xi) in centroid.iter_mut().zip(&simplex[i]) {
                *c += xi;
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }
        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };
        let reflected = blend(1.0);
        let f_r = f(&reflected);
        if f_r < values[best] {
            let expanded = blend(2.0);
            let f_e = f(&expanded);
            if f_e < f_r {
                simplex[worst] = expanded;
                values[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_r;
            }
        } else if f_r < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_r;
        } else {
            let contracted = if f_r < values[worst] { blend(0.5) } else { blend(-0.5) };
            let f_c = f(&contracted);
            if f_c < values[worst].min(f_r) {
                simplex[worst] = contracted;
                values[worst] = f_c;
            } else {
                // shrink toward the best vertex
                let anchor = simplex[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for (xi, &ai) in simplex[i].iter_mut().zip(&anchor) {
                        *xi = ai + 0.5 * (*xi - ai);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let mut best_idx = 0;
    for i in 1..=n {
        if values[i] < values[best_idx] {
            best_idx = i;
        }
    }
    (simplex[best_idx].clone(), values[best_idx])
}

/// Maximum-a-posteriori fit of the dynamics parameters from a social series
/// and a physical series. Multi-start Nelder-Mead over (beta_s, K_s, beta_p,
/// K_p) with capacities hard-bounded by the prior. Fails with diagnostics if
/// the projected finite-difference gradient at the best point is not small.
pub fn fit_dynamic_params(
    series_s: &ObservationSeries,
    series_p: &ObservationSeries,
    n_bar: f64,
    prior: &PriorSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<DynamicFit, EstimationError> {
    prior.validate()?;
    if !noise_sigma.is_finite() || noise_sigma <= 0.0 {
        return Err(EstimationError::InvalidSigma(noise_sigma));
    }
    if !n_bar.is_finite() || n_bar <= 0.0 {
        return Err(EstimationError::InvalidNBar(n_bar));
    }
    for series in [series_s, series_p] {
        if series.len() < 4 {
            return Err(EstimationError::TooFewObservations { needed: 4, got: series.len() });
        }
        if series.span_days() < 10 {
            return Err(EstimationError::ShortSpan { needed: 10, got: series.span_days() });
        }
    }

    let objective = |x: &[f64]| -> f64 {
        let [bs, ks, bp, kp] = clamp_point(x, prior);
        let params = DynamicParams { beta_s: bs, k_s: ks, beta_p: bp, k_p: kp, n_bar };
        dynamics_objective(&params, series_s, series_p, prior, noise_sigma)
    };

    // starts drawn from the prior: half-Cauchy rates (tail-capped so the
    // simplex starts in a useful region), uniform capacities
    let starts: Vec<[f64; 4]> = (0..MULTI_STARTS)
        .map(|k| {
            let draw = |dim: u64| unit_uniform(seed, k, dim);
            let half_cauchy =
                |u: f64| (prior.beta_scale * (std::f64::consts::FRAC_PI_2 * u).tan()).clamp(1e-3, 10.0);
            [
                half_cauchy(draw(0)),
                prior.k_lower + draw(1) * (prior.k_upper - prior.k_lower),
                half_cauchy(draw(2)),
                prior.k_lower + draw(3) * (prior.k_upper - prior.k_lower),
            ]
        })
        .collect();

    let results: Vec<(f64, usize, Vec<f64>)> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, x0)| {
            let steps: Vec<f64> =
                x0.iter().map(|&v| 0.25 * v.abs().max(0.05)).collect();
            let (x, value) = nelder_mead(&objective, x0, &steps, 800);
            (value, idx, x)
        })
        .collect();
    let (best_value, _, best_x) = results
        .into_iter()
        .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one start");

    let point = clamp_point(&best_x, prior);

    // projected central-difference gradient; a component blocked by an active
    // bound does not count against convergence
    let bounds = [
        (BETA_FLOOR, BETA_CEIL),
        (prior.k_lower, prior.k_upper),
        (BETA_FLOOR, BETA_CEIL),
        (prior.k_lower, prior.k_upper),
    ];
    let mut gradient_sup_norm = 0.0f64;
    for i in 0..4 {
        let h = 1e-6 * point[i].abs().max(1.0);
        let (lo, hi) = bounds[i];
        let mut up = point;
        let mut dn = point;
        up[i] = (point[i] + h).min(hi);
        dn[i] = (point[i] - h).max(lo);
        let width = up[i] - dn[i];
        if width <= 0.0 {
            continue;
        }
        let g = (objective(&up) - objective(&dn)) / width;
        let at_lower = point[i] - lo <= PIN_TOLERANCE;
        let at_upper = hi - point[i] <= PIN_TOLERANCE;
        let projected = if (at_lower && g > 0.0) || (at_upper && g < 0.0) { 0.0 } else { g };
        gradient_sup_norm = gradient_sup_norm.max(projected.abs());
    }
    let threshold = 1e-3 * (1.0 + best_value.abs());
    if gradient_sup_norm > threshold {
        return Err(EstimationError::NotConverged { gradient: gradient_sup_norm, threshold });
    }

    let mut pinned = Vec::new();
    for (i, name) in [(0usize, "beta_s"), (1, "k_s"), (2, "beta_p"), (3, "k_p")] {
        let (lo, hi) = bounds[i];
        if point[i] - lo <= PIN_TOLERANCE || hi - point[i] <= PIN_TOLERANCE {
            pinned.push(name);
        }
    }

    let params = DynamicParams::new(point[0], point[1], point[2], point[3], n_bar)?;
    Ok(DynamicFit {
        params,
        neg_log_posterior: best_value,
        gradient_sup_norm,
        pinned,
    })
}

/// Result of [`fit_generalized_logistic`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFit {
    pub curve: LogisticCurve,
    pub rho: f64,
    pub sse: f64,
}

fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Best constrained (amplitude, offset) for fixed (rate, midpoint):
/// minimizes sum (a*f_i + b - y_i)^2 over a in [AMPLITUDE_FLOOR, 1],
/// b in [0, 1-a]. Returns (sse, a, b).
fn profile_amplitude_offset(f: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = f.len() as f64;
    let sf: f64 = f.iter().sum();
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().sum();
    let sfy: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();

    let sse_of = |a: f64, b: f64| -> f64 {
        f.iter().zip(y).map(|(&fi, &yi)| (a * fi + b - yi).powi(2)).sum()
    };
    let feasible_b = |a: f64, b: f64| b.clamp(0.0, (1.0 - a).max(0.0));

    let mut candidates: Vec<(f64, f64)> = Vec::new();

    // unconstrained stationary point
    let det = sff * n - sf * sf;
    if det.abs() > 1e-12 {
        let a = (sfy * n - sf * sy) / det;
        let b = (sy - a * sf) / n;
        candidates.push((a, b));
    }

    // edge b = 0
    if sff > 0.0 {
        candidates.push((sfy / sff, 0.0));
    }
    // edge a + b = 1: minimize over a of sum (a(f-1) + 1 - y)^2
    let s1: f64 = f.iter().map(|&fi| (fi - 1.0).powi(2)).sum();
    if s1 > 0.0 {
        let a = f.iter().zip(y).map(|(&fi, &yi)| (1.0 - fi) * (1.0 - yi)).sum::<f64>() / s1;
        candidates.push((a, 1.0 - a));
    }
    // corners and floors
    candidates.push((1.0, 0.0));
    candidates.push((AMPLITUDE_FLOOR, (sy - AMPLITUDE_FLOOR * sf) / n));

    let mut best = (f64::INFINITY, AMPLITUDE_FLOOR, 0.0);
    for (a_raw, b_raw) in candidates {
        let a = a_raw.clamp(AMPLITUDE_FLOOR, 1.0);
        let b = feasible_b(a, b_raw);
        let sse = sse_of(a, b);
        if sse < best.0 {
            best = (sse, a, b);
        }
    }
    best
}

/// Constrained least-squares fit of the four-parameter logistic curve.
/// (amplitude, offset) are profiled exactly for each candidate (rate,
/// midpoint); the outer search is multi-start Nelder-Mead over (ln rate,
/// midpoint). Fits whose Pearson correlation with the data does not exceed
/// 0.950 are rejected.
pub fn fit_generalized_logistic(series: &ObservationSeries) -> Result<CurveFit, EstimationError> {
    if series.len() < 4 {
        return Err(EstimationError::TooFewObservations { needed: 4, got: series.len() });
    }
    let days: Vec<f64> = series.points().iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = series.levels();
    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if ymax - ymin < 1e-9 {
        return Err(EstimationError::Degenerate("C"));
    }

    // midpoint initialized at the first day reaching half rise, so the whole
    // search translates exactly with uniform day shifts
    let half = (ymin + ymax) / 2.0;
    let d0 = series
        .points()
        .iter()
        .find(|&&(_, v)| v >= half)
        .map(|&(d, _)| d as f64)
        .unwrap_or(days[days.len() / 2]);
    let span = days[days.len() - 1] - days[0];

    let objective = |z: &[f64]| -> f64 {
        let c = z[0].exp();
        let d = z[1];
        let f: Vec<f64> = days.iter().map(|&t| stable_sigmoid(c * (t - d))).collect();
        profile_amplitude_offset(&f, &y).0
    };

    let mut c_starts = vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
    if span > 0.0 {
        c_starts.push(4.0 / span);
    }
    let results: Vec<(f64, usize, Vec<f64>)> = c_starts
        .par_iter()
        .enumerate()
        .map(|(idx, &c0)| {
            let z0 = [c0.ln(), d0];
            let steps = [0.5, (span / 8.0).max(1.0)];
            let (z, value) = nelder_mead(&objective, &z0, &steps, 400);
            (value, idx, z)
        })
        .collect();
    let (sse, _, z) = results
        .into_iter()
        .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one start");

    let c = z[0].exp();
    let d = z[1];
    let f: Vec<f64> = days.iter().map(|&t| stable_sigmoid(c * (t - d))).collect();
    let (_, a, b) = profile_amplitude_offset(&f, &y);
    let curve = LogisticCurve::new(a, b, c, d)?;
    let fitted: Vec<f64> = days.iter().map(|&t| curve.level(t)).collect();
    let rho = match pearson(&y, &fitted) {
        Ok(r) => r,
        Err(EstimationError::ZeroVariance) => return Err(EstimationError::Degenerate("C")),
        Err(e) => return Err(e),
    };
    if rho <= QUALITY_GATE_RHO {
        return Err(EstimationError::QualityBelowGate { rho });
    }
    Ok(CurveFit { curve, rho, sse })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_validation() {
        assert!(ObservationSeries::new(vec![(0, 0.1), (1, 0.2), (5, 1.4)]).is_ok());
        assert_eq!(
            ObservationSeries::new(vec![(3, 0.1), (3, 0.2)]).unwrap_err(),
            EstimationError::NonIncreasingDays { earlier: 3, later: 3 }
        );
        assert_eq!(
            ObservationSeries::new(vec![(0, 1.6)]).unwrap_err(),
            EstimationError::LevelOutOfRange(1.6)
        );
        assert!(ObservationSeries::new(vec![(0, -0.1)]).is_err());
    }

    #[test]
    fn interpolation_is_linear_with_flat_ends() {
        let s = ObservationSeries::new(vec![(10, 0.2), (20, 0.6), (40, 0.8)]).unwrap();
        assert_eq!(s.value_at(5.0), 0.2);
        assert_eq!(s.value_at(10.0), 0.2);
        assert!((s.value_at(15.0) - 0.4).abs() < 1e-15);
        assert!((s.value_at(30.0) - 0.7).abs() < 1e-15);
        assert_eq!(s.value_at(40.0), 0.8);
        assert_eq!(s.value_at(99.0), 0.8);
    }

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-14);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-14);
        let b = [1.1, 1.9, 3.2, 3.8];
        // cov 4.7, sd sqrt(5) and sqrt(4.5)
        let rho = pearson(&a, &b).unwrap();
        assert!((rho - 0.9908470001860921).abs() < 1e-12);
        assert!((rho - 0.9908).abs() < 1e-3);
    }

    #[test]
    fn pearson_rejects_bad_input() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0]).unwrap_err(),
            EstimationError::LengthMismatch(2, 1)
        );
        assert_eq!(
            pearson(&[1.0], &[1.0]).unwrap_err(),
            EstimationError::TooFewObservations { needed: 2, got: 1 }
        );
        assert_eq!(
            pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            EstimationError::ZeroVariance
        );
    }

    fn curve_series(a: f64, b: f64, c: f64, d: f64, days: impl Iterator<Item = u32>) -> ObservationSeries {
        let curve = LogisticCurve::new(a, b, c, d).unwrap();
        ObservationSeries::new(days.map(|t| (t, curve.level(t as f64))).collect()).unwrap()
    }

    #[test]
    fn logistic_round_trip() {
        let series = curve_series(0.4, 0.55, 0.15, 12.0, 0..=60);
        let fit = fit_generalized_logistic(&series).unwrap();
        assert!((fit.curve.a() - 0.4).abs() < 1e-3, "a = {}", fit.curve.a());
        assert!((fit.curve.b() - 0.55).abs() < 1e-3, "b = {}", fit.curve.b());
        assert!((fit.curve.c() - 0.15).abs() < 1e-3, "c = {}", fit.curve.c());
        assert!((fit.curve.d() - 12.0).abs() < 1e-2, "d = {}", fit.curve.d());
        assert!(fit.rho > 0.9999);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let series = ObservationSeries::new((0..10).map(|t| (t, 0.4)).collect()).unwrap();
        assert_eq!(
            fit_generalized_logistic(&series).unwrap_err(),
            EstimationError::Degenerate("C")
        );
    }

    #[test]
    fn oscillating_series_fails_the_quality_gate() {
        let series = ObservationSeries::new(
            (0..8).map(|i| (i * 5, if i % 2 == 0 { 0.2 } else { 0.8 })).collect(),
        )
        .unwrap();
        assert!(matches!(
            fit_generalized_logistic(&series).unwrap_err(),
            EstimationError::QualityBelowGate { .. }
        ));
    }

    #[test]
    fn day_shift_moves_midpoint_only() {
        let base = curve_series(0.3, 0.5, 0.2, 20.0, 0..=50);
        let fit0 = fit_generalized_logistic(&base).unwrap();
        let shifted = ObservationSeries::new(
            base.points().iter().map(|&(d, v)| (d + 17, v)).collect(),
        )
        .unwrap();
        let fit1 = fit_generalized_logistic(&shifted).unwrap();
        assert!((fit1.curve.d() - fit0.curve.d() - 17.0).abs() < 1e-6);
        assert!((fit1.curve.a() - fit0.curve.a()).abs() < 1e-6);
        assert!((fit1.curve.b() - fit0.curve.b()).abs() < 1e-6);
        assert!((fit1.curve.c() - fit0.curve.c()).abs() < 1e-6);
    }

    /// Step-shaped physical series plus the trajectory it induces under known
    /// parameters: an identifiable design for the dynamics fit.
    fn dynamics_test_data(params: &DynamicParams) -> (ObservationSeries, ObservationSeries) {
        let series_p = ObservationSeries::new(
            (0..=60).map(|t| (t, if t < 30 { 0.25 } else { 0.85 })).collect(),
        )
        .unwrap();
        let traj = integrate_aggregate(0.3, 0, 60, &series_p, params);
        let series_s = ObservationSeries::new(
            (0..=60).map(|t| (t, traj[t as usize].clamp(0.0, 1.5))).collect(),
        )
        .unwrap();
        (series_s, series_p)
    }

    #[test]
    fn dynamics_fit_recovers_generating_params() {
        let truth = DynamicParams::other(80.0);
        let (series_s, series_p) = dynamics_test_data(&truth);
        let fit = fit_dynamic_params(&series_s, &series_p, 80.0, &PriorSpec::default(), 0.001, 11)
            .unwrap();
        for (name, got, want) in [
            ("beta_s", fit.params.beta_s, truth.beta_s),
            ("k_s", fit.params.k_s, truth.k_s),
            ("beta_p", fit.params.beta_p, truth.beta_p),
            ("k_p", fit.params.k_p, truth.k_p),
        ] {
            assert!(
                ((got - want) / want).abs() < 0.10,
                "{name}: got {got}, want {want}"
            );
        }
        assert!(fit.pinned.is_empty(), "unexpected pins: {:?}", fit.pinned);
    }

    #[test]
    fn short_series_is_rejected() {
        let s = ObservationSeries::new(vec![(0, 0.3), (2, 0.35), (4, 0.4), (6, 0.42)]).unwrap();
        let p = ObservationSeries::new((0..=20).map(|t| (t, 0.5)).collect()).unwrap();
        assert_eq!(
            fit_dynamic_params(&s, &p, 80.0, &PriorSpec::default(), 0.05, 1).unwrap_err(),
            EstimationError::ShortSpan { needed: 10, got: 6 }
        );
    }

    #[test]
    fn capacity_outside_prior_bounds_is_pinned_and_flagged() {
        // generating capacity 0.3 sits below the prior bound 0.5
        let truth = DynamicParams::new(0.5, 0.3, 0.2, 0.9, 80.0).unwrap();
        let (series_s, series_p) = dynamics_test_data(&truth);
        let fit = fit_dynamic_params(&series_s, &series_p, 80.0, &PriorSpec::default(), 0.001, 3)
            .unwrap();
        assert!(fit.pinned.contains(&"k_s"), "pins: {:?}", fit.pinned);
        assert!((fit.params.k_s - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn map_objective_beats_prior_draws() {
        let truth = DynamicParams::other(80.0);
        let (series_s, series_p) = dynamics_test_data(&truth);
        let prior = PriorSpec::default();
        let fit =
            fit_dynamic_params(&series_s, &series_p, 80.0, &prior, 0.001, 42).unwrap();
        for k in 0..100u64 {
            let draw = |dim: u64| crate::rng::unit_uniform(0xD12A, k, dim);
            let hc = |u: f64| {
                (prior.beta_scale * (std::f64::consts::FRAC_PI_2 * u).tan()).clamp(1e-3, 10.0)
            };
            let candidate = DynamicParams {
                beta_s: hc(draw(0)),
                k_s: prior.k_lower + draw(1) * (prior.k_upper - prior.k_lower),
                beta_p: hc(draw(2)),
                k_p: prior.k_lower + draw(3) * (prior.k_upper - prior.k_lower),
                n_bar: 80.0,
            };
            let value = dynamics_objective(&candidate, &series_s, &series_p, &prior, 0.001);
            assert!(
                fit.neg_log_posterior <= value + 1e-9,
                "draw {k} beats the optimum: {value} < {}",
                fit.neg_log_posterior
            );
        }
    }

    #[test]
    fn invalid_auxiliary_inputs_are_rejected() {
        let s = ObservationSeries::new((0..=20).map(|t| (t, 0.3 + 0.01 * t as f64)).collect())
            .unwrap();
        let p = ObservationSeries::new((0..=20).map(|t| (t, 0.5)).collect()).unwrap();
        assert_eq!(
            fit_dynamic_params(&s, &p, 80.0, &PriorSpec::default(), 0.0, 1).unwrap_err(),
            EstimationError::InvalidSigma(0.0)
        );
        assert_eq!(
            fit_dynamic_params(&s, &p, -1.0, &PriorSpec::default(), 0.05, 1).unwrap_err(),
            EstimationError::InvalidNBar(-1.0)
        );
        let bad = PriorSpec { beta_scale: 1.0, k_lower: 0.9, k_upper: 0.5 };
        assert!(matches!(
            fit_dynamic_params(&s, &p, 80.0, &bad, 0.05, 1).unwrap_err(),
            EstimationError::InvalidPrior { .. }
        ));
    }
}
