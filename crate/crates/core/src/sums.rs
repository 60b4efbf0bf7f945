//! Partial-sum processes and their limits: the decorated limit built from a
//! limit point process, stable-law parameters from the cluster shape or the
//! forward spectral process, and Monte Carlo experiments on suprema and on
//! the local-maximum characterization of M2 convergence.

use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::espace::{
    add_continuous, cell_extremes, embed_cadlag, local_max, window_extremes, DecoratedPath, Decoration,
    PiecewiseLinear, StepPath,
};
use crate::limitpp::{sample_limit_pp, LimitPointProcess, LimitSpec, QSampler};
use crate::models::{quantile_an, LinearModel, ModelSpec, RegVarLaw, SeriesSample};
use crate::quad::Composite;
use crate::rng::{derive_seed, stream};
use crate::seqspace::Cluster;
use crate::stats::{ks_statistic, levy_distance, median, Estimate};

/// `S_n(t) = sum_{i <= nt} X_i / a_n`.
pub fn partial_sum_path(sample: &SeriesSample, a_n: f64) -> Result<StepPath> {
    centered_levels(&sample.values, a_n, 0.0)
}

fn centered_levels(x: &[f64], a_n: f64, m: f64) -> Result<StepPath> {
    if !(a_n > 0.0) {
        return Err(invalid("a_n must be positive"));
    }
    let n = x.len() as f64;
    let mut s = 0.0;
    StepPath::from_levels(
        0.0,
        x.iter().enumerate().map(|(i, v)| {
            s += v / a_n - m;
            ((i + 1) as f64 / n, s)
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMode {
    None,
    TruncatedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSource {
    /// Closed form for a Pareto marginal.
    Analytic,
    /// Plug-in mean of the observed series.
    Empirical,
}

/// Centering of partial sums (`alpha >= 1`) and the truncation level of the
/// matching limit construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenteringSpec {
    pub mode: CenteringMode,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_source")]
    pub source: MeanSource,
}

fn default_source() -> MeanSource {
    MeanSource::Analytic
}

impl CenteringSpec {
    pub fn none() -> Self {
        Self { mode: CenteringMode::None, epsilon: 0.0, source: MeanSource::Analytic }
    }

    pub fn truncated(epsilon: f64, source: MeanSource) -> Self {
        Self { mode: CenteringMode::TruncatedMean, epsilon, source }
    }

    /// The mode the limit theory uses at tail index `alpha`.
    pub fn for_alpha(alpha: f64, epsilon: f64, source: MeanSource) -> Self {
        if alpha < 1.0 {
            Self::none()
        } else {
            Self::truncated(epsilon, source)
        }
    }

    fn check(&self, alpha: f64) -> Result<()> {
        match self.mode {
            CenteringMode::None if alpha >= 1.0 => {
                Err(invalid(format!("alpha={alpha} >= 1 needs truncated-mean centering")))
            }
            CenteringMode::TruncatedMean if alpha < 1.0 => {
                Err(invalid(format!("alpha={alpha} < 1 takes no centering")))
            }
            CenteringMode::TruncatedMean if !(self.epsilon > 0.0) => {
                Err(invalid("truncated-mean centering needs epsilon > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// A centered partial-sum path with the per-step mean that was removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredPath {
    pub path: StepPath,
    /// `E[(X / a_n) 1{|X| <= a_n}]`, analytic or plug-in
    pub mean: f64,
    /// Plug-in mean from fewer than 1000 observations.
    pub precision_warning: bool,
}

const PLUGIN_MIN_LEN: usize = 1000;

fn pareto_law(model: &ModelSpec) -> Result<RegVarLaw> {
    match model {
        ModelSpec::Iid { law } => Ok(*law),
        _ => Err(LabError::Unsupported(
            "analytic truncated mean needs a Pareto marginal; use the empirical source".into(),
        )),
    }
}

/// `E[(X / a_n) 1{|X| <= a_n level}]` from the chosen source.
fn truncated_mean(sample: &SeriesSample, a_n: f64, level: f64, source: MeanSource) -> Result<f64> {
    match source {
        MeanSource::Analytic => Ok(pareto_law(&sample.model)?.truncated_mean(a_n * level) / a_n),
        MeanSource::Empirical => {
            let thr = a_n * level;
            let total: f64 = sample.values.iter().filter(|v| v.abs() <= thr).sum();
            Ok(total / (sample.len() as f64 * a_n))
        }
    }
}

/// `V_n(t) = S_n(t) - floor(nt) E[(X / a_n) 1{|X| <= a_n}]`.
pub fn centered_path(sample: &SeriesSample, a_n: f64, spec: &CenteringSpec) -> Result<CenteredPath> {
    if let Some(alpha) = sample.model.alpha() {
        spec.check(alpha)?;
    }
    let (mean, precision_warning) = match spec.mode {
        CenteringMode::None => (0.0, false),
        CenteringMode::TruncatedMean => (
            truncated_mean(sample, a_n, 1.0, spec.source)?,
            spec.source == MeanSource::Empirical && sample.len() < PLUGIN_MIN_LEN,
        ),
    };
    Ok(CenteredPath { path: centered_levels(&sample.values, a_n, mean)?, mean, precision_warning })
}

/// `int_{eps < |x| <= 1} x mu(dx)` for the limit measure with tail balance `p`.
pub fn centering_drift(alpha: f64, p: f64, epsilon: f64) -> f64 {
    let abs_part = if (alpha - 1.0).abs() < 1e-12 {
        (1.0 / epsilon).ln()
    } else {
        alpha / (alpha - 1.0) * (epsilon.powf(1.0 - alpha) - 1.0)
    };
    (2.0 * p - 1.0) * abs_part
}

/// `(total, inf_k, sup_k)` of the partial sums `sum_{j <= k} x_j`, the empty
/// sum included.
fn partial_sum_range(xs: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut s, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for x in xs {
        s += x;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (s, lo, hi)
}

/// The decorated limit `V'` from a limit point process on `[0, 1]`.
///
/// For `alpha < 1` each point adds `P sum_j Q_j` and is decorated by
/// `V(T-) + P [inf_k sum_{j<=k} Q_j, sup_k sum_{j<=k} Q_j]`. For `alpha >= 1`
/// coordinates of modulus at most `epsilon` are dropped from every cluster
/// and the drift `-t int_{eps < |x| <= 1} x mu(dx)` is added; this needs the
/// process to be sampled with floor `p_min = epsilon` and the marginal tail
/// balance `p`.
pub fn limit_decorated_path(
    pp: &LimitPointProcess,
    alpha: f64,
    p: f64,
    centering: &CenteringSpec,
) -> Result<DecoratedPath> {
    centering.check(alpha)?;
    if (pp.t_max - 1.0).abs() > 1e-12 {
        return Err(invalid("limit paths live on [0, 1]; sample with t_max = 1"));
    }
    let eps = match centering.mode {
        CenteringMode::None => 0.0,
        CenteringMode::TruncatedMean => {
            if (pp.p_min - centering.epsilon).abs() > 1e-12 * centering.epsilon {
                return Err(invalid(format!(
                    "point floor p_min={} must equal the truncation level epsilon={}",
                    pp.p_min, centering.epsilon
                )));
            }
            centering.epsilon
        }
    };
    let mut v = 0.0;
    let mut jumps = Vec::with_capacity(pp.len());
    let mut decorations = Vec::with_capacity(pp.len());
    for pt in &pp.points {
        let t = if pt.t > 0.0 { pt.t } else { f64::MIN_POSITIVE };
        let coords = pt.q.values().iter().map(|q| pt.p * q).filter(|x| x.abs() > eps);
        let (total, lo, hi) = partial_sum_range(coords);
        decorations.push(Decoration { t, lo: v + lo, hi: v + hi });
        v += total;
        jumps.push((t, v));
    }
    let step = StepPath::new(0.0, jumps)?;
    let path = DecoratedPath::new(step, decorations)?;
    Ok(match centering.mode {
        CenteringMode::None => path,
        CenteringMode::TruncatedMean => {
            add_continuous(&path, &PiecewiseLinear::affine(0.0, -centering_drift(alpha, p, eps)))
        }
    })
}

// ---------------------------------------------------------------------------
// stable parameters

/// `int_0^1 (sin y - y) y^-2 dy`, smooth on the closed interval.
fn c0_head(order: usize, pieces: usize) -> f64 {
    let f = |y: f64| {
        if y < 1e-4 {
            // sin y - y = -y^3/6 + y^5/120 - ...
            -y / 6.0 + y * y * y / 120.0
        } else {
            (y.sin() - y) / (y * y)
        }
    };
    Composite::new(order).integrate(f, 0.0, 1.0, pieces)
}

/// `c0 = int_0^inf (sin y - y 1{y <= 1}) y^-2 dy` by quadrature of the
/// oscillatory tail over half periods up to `N pi`, with the two leading
/// asymptotic terms of the remainder.
pub fn c0_by_periods() -> f64 {
    const HALF_PERIODS: usize = 4000;
    let rule = Composite::new(12);
    let f = |y: f64| y.sin() / (y * y);
    let mut tail = rule.integrate(f, 1.0, std::f64::consts::PI, 2);
    for k in 1..HALF_PERIODS {
        let a = k as f64 * std::f64::consts::PI;
        tail += rule.integrate(f, a, a + std::f64::consts::PI, 1);
    }
    // int_Y^inf sin y / y^2 dy = cos Y / Y^2 - 6 cos Y / Y^4 + ... at Y = N pi
    let y = HALF_PERIODS as f64 * std::f64::consts::PI;
    let cos_y = if HALF_PERIODS % 2 == 0 { 1.0 } else { -1.0 };
    tail += cos_y / (y * y) - 6.0 * cos_y / y.powi(4);
    c0_head(10, 8) + tail
}

/// `c0` again, with the tail integrated by parts and the remaining
/// `int_1^inf cos y / y dy` rotated onto the imaginary axis, where it
/// becomes `cos 1 int_0^inf t e^-t/(1+t^2) dt - sin 1 int_0^inf e^-t/(1+t^2) dt`.
pub fn c0_by_contour() -> f64 {
    let rule = Composite::new(20);
    let a1 = rule.integrate(|t: f64| (-t).exp() / (1.0 + t * t), 0.0, 60.0, 120);
    let a2 = rule.integrate(|t: f64| t * (-t).exp() / (1.0 + t * t), 0.0, 60.0, 120);
    let one = 1.0f64;
    c0_head(20, 3) + one.sin() + one.cos() * a2 - one.sin() * a1
}

/// `c0`, computed once.
pub fn c0() -> f64 {
    static C0: OnceLock<f64> = OnceLock::new();
    *C0.get_or_init(c0_by_periods)
}

/// Parameters of the stable law of `V(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub b: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableEstimate {
    pub params: StableParams,
    pub sigma: Estimate,
    pub beta: Estimate,
    pub b: Estimate,
    /// `theta E[sum_j Q_j |Q_j|^(alpha-1)] - (2p - 1)`; reported by the
    /// cluster-shape route only.
    pub dh95_residual: Option<Estimate>,
    /// A sampled moment was not finite.
    pub moment_warning: bool,
}

/// Weighted draws of a vector of per-sample statistics.
struct Draws {
    rows: Vec<[f64; 4]>,
    weights: Vec<f64>,
    exact: bool,
}

impl Draws {
    fn mean(&self, i: usize) -> f64 {
        self.rows.iter().zip(&self.weights).map(|(r, w)| w * r[i]).sum()
    }

    /// Covariance of the means of columns `i` and `j` (0 when exact).
    fn cov(&self, i: usize, j: usize) -> f64 {
        if self.exact {
            return 0.0;
        }
        let m = self.rows.len() as f64;
        let (mi, mj) = (self.mean(i), self.mean(j));
        self.rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / ((m - 1.0) * m)
    }

    fn finite(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

fn signed_pow(x: f64, alpha: f64) -> f64 {
    x.signum() * x.abs().powf(alpha)
}

fn x_log_abs(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.abs().ln()
    }
}

/// Turns the column means `(A, B, C)` into `(sigma, beta, b)` where
/// `sigma^alpha = scale * E[A]`, `beta = E[B] / E[A]` and `b = b_factor * E[C]`.
fn assemble(alpha: f64, scale: f64, b_factor: f64, d: &Draws) -> (Estimate, Estimate, Estimate) {
    let (ma, mb, mc) = (d.mean(0), d.mean(1), d.mean(2));
    let sigma_alpha = scale * ma;
    let sigma = sigma_alpha.max(0.0).powf(1.0 / alpha);
    let sigma_se = if ma > 0.0 { sigma / (alpha * ma) * d.cov(0, 0).sqrt() } else { 0.0 };
    let (beta, beta_se) = if ma > 0.0 {
        let beta = mb / ma;
        let var = (d.cov(1, 1) - 2.0 * beta * d.cov(0, 1) + beta * beta * d.cov(0, 0)) / (ma * ma);
        (beta, var.max(0.0).sqrt())
    } else {
        (0.0, 0.0)
    };
    let b = Estimate { value: b_factor * mc, se: b_factor.abs() * d.cov(2, 2).sqrt() };
    (Estimate { value: sigma, se: sigma_se }, Estimate { value: beta, se: beta_se }, b)
}

fn finish(alpha: f64, sigma: Estimate, beta: Estimate, b: Estimate, dh: Option<Estimate>, warn: bool) -> StableEstimate {
    StableEstimate {
        params: StableParams { alpha, sigma: sigma.value, beta: beta.value, b: b.value, c0: c0() },
        sigma,
        beta,
        b,
        dh95_residual: dh,
        moment_warning: warn,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(invalid(format!("stable limits need 0 < alpha < 2, got {alpha}")));
    }
    Ok(())
}

/// Exact enumeration of the support when `mc_samples == 0`, else Monte Carlo.
fn draw_weighted<T: Clone>(
    support: Vec<(T, f64)>,
    sample: impl Fn(&mut crate::rng::LabRng) -> T,
    mc_samples: usize,
    seed: u64,
) -> (Vec<T>, Vec<f64>, bool) {
    if mc_samples == 0 {
        let (items, weights) = support.into_iter().unzip();
        (items, weights, true)
    } else {
        let mut rng = stream(seed, 0);
        let items = (0..mc_samples).map(|_| sample(&mut rng)).collect();
        (items, vec![1.0 / mc_samples as f64; mc_samples], false)
    }
}

/// Stable parameters from the cluster shape law:
/// `sigma^alpha = theta E|sum Q_j|^alpha`,
/// `beta = E[(sum Q_j)^<alpha>] / E|sum Q_j|^alpha`, and `b` equal to 0,
/// `alpha/(alpha-1) theta E[sum Q_j^<alpha>]` or, for `alpha = 1`,
/// `theta (c0 E[sum Q] - E[sum Q log|sum Q|] - E[sum Q_j log(1/|Q_j|)])`.
/// `p` is the marginal tail balance used by the identity residual.
/// With `mc_samples == 0` the (finite) shape law is enumerated exactly.
pub fn stable_params_from_q(
    alpha: f64,
    theta: f64,
    q: &QSampler,
    p: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<StableEstimate> {
    check_alpha(alpha)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid(format!("theta must lie in (0, 1], got {theta}")));
    }
    let (shapes, weights, exact) = draw_weighted(q.support(), |r| q.sample(r), mc_samples, seed);
    let alpha_one = (alpha - 1.0).abs() < 1e-12;
    let c0v = c0();
    let rows = shapes
        .iter()
        .map(|c: &Cluster| {
            let s = c.sum();
            let dh: f64 = c.values().iter().map(|&v| signed_pow(v, alpha)).sum();
            let loc = if alpha_one {
                let self_log: f64 = c.values().iter().map(|&v| -x_log_abs(v)).sum();
                c0v * s - x_log_abs(s) - self_log
            } else {
                dh
            };
            [s.abs().powf(alpha), signed_pow(s, alpha), loc, dh]
        })
        .collect();
    let d = Draws { rows, weights, exact };
    let b_factor = if alpha < 1.0 {
        0.0
    } else if alpha_one {
        theta
    } else {
        alpha / (alpha - 1.0) * theta
    };
    let (sigma, beta, b) = assemble(alpha, theta, b_factor, &d);
    let dh = Estimate { value: theta * d.mean(3) - (2.0 * p - 1.0), se: theta * d.cov(3, 3).sqrt() };
    Ok(finish(alpha, sigma, beta, b, Some(dh), !d.finite()))
}

/// Law of the forward spectral process `(Theta_0, Theta_1, ...)`, finitely
/// supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForwardSampler {
    /// Forward spectral process of a moving average: the extreme comes from
    /// the innovation at lag `K` with `P(K = j)` proportional to `|c_j|^alpha`,
    /// and `Theta_t = sign(xi) c_{t+K} / |c_K|`.
    Linear { model: LinearModel },
    /// Explicit sequences with positive weights.
    Discrete { atoms: Vec<(Vec<f64>, f64)> },
}

impl ForwardSampler {
    pub fn support(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        match self {
            ForwardSampler::Linear { model } => {
                model.validate()?;
                let a = model.alpha();
                let total = model.abs_alpha_sum();
                let p = model.innovation.p;
                let c = &model.coeffs;
                let mut out = Vec::new();
                for (k, &ck) in c.iter().enumerate() {
                    if ck == 0.0 {
                        continue;
                    }
                    let w = ck.abs().powf(a) / total;
                    let seq: Vec<f64> = c[k..].iter().map(|cj| cj / ck.abs()).collect();
                    for (sign, ps) in [(1.0, p), (-1.0, 1.0 - p)] {
                        if ps > 0.0 {
                            out.push((seq.iter().map(|v| sign * v).collect(), w * ps));
                        }
                    }
                }
                Ok(out)
            }
            ForwardSampler::Discrete { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|(s, w)| s.is_empty() || !(*w > 0.0)) {
                    return Err(invalid("forward atoms need nonempty sequences and positive weights"));
                }
                if atoms.iter().any(|(s, _)| (s[0].abs() - 1.0).abs() > 1e-12) {
                    return Err(invalid("forward sequences must start with |Theta_0| = 1"));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                Ok(atoms.iter().map(|(s, w)| (s.clone(), w / total)).collect())
            }
        }
    }
}

/// Stable parameters from the forward spectral process:
/// `sigma^alpha = E[|S_0|^alpha - |S_1|^alpha]` with `S_m = sum_{j>=m} Theta_j`,
/// `beta = sigma^-alpha E[S_0^<alpha> - S_1^<alpha>]`, and `b` equal to 0,
/// `alpha/(alpha-1) E[Theta_0]` or, for `alpha = 1`,
/// `c0 E[Theta_0] - E[S_0 log|S_0| - S_1 log|S_1|]`.
pub fn stable_params_from_forward_theta(
    alpha: f64,
    sampler: &ForwardSampler,
    mc_samples: usize,
    seed: u64,
) -> Result<StableEstimate> {
    check_alpha(alpha)?;
    let support = sampler.support()?;
    let cum: Vec<f64> = support
        .iter()
        .scan(0.0, |acc, (_, w)| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let pick = |r: &mut crate::rng::LabRng| {
        let u: f64 = r.random();
        let i = cum.partition_point(|c| *c <= u).min(support.len() - 1);
        support[i].0.clone()
    };
    let (seqs, weights, exact) = draw_weighted(support.clone(), pick, mc_samples, seed);
    let alpha_one = (alpha - 1.0).abs() < 1e-12;
    let c0v = c0();
    let rows = seqs
        .iter()
        .map(|th: &Vec<f64>| {
            let s0: f64 = th.iter().sum();
            let s1: f64 = th[1..].iter().sum();
            let loc = if alpha_one { c0v * th[0] - (x_log_abs(s0) - x_log_abs(s1)) } else { th[0] };
            [
                s0.abs().powf(alpha) - s1.abs().powf(alpha),
                signed_pow(s0, alpha) - signed_pow(s1, alpha),
                loc,
                0.0,
            ]
        })
        .collect();
    let d = Draws { rows, weights, exact };
    let b_factor = if alpha < 1.0 {
        0.0
    } else if alpha_one {
        1.0
    } else {
        alpha / (alpha - 1.0)
    };
    let (sigma, beta, b) = assemble(alpha, 1.0, b_factor, &d);
    Ok(finish(alpha, sigma, beta, b, None, !d.finite()))
}

// ---------------------------------------------------------------------------
// M2 condition and small jumps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2Condition {
    pub fraction: f64,
    pub per_sample: Vec<bool>,
}

/// Whether `inf_k sum_{j<=k} Q_j = -(sum Q)_-` and
/// `sup_k sum_{j<=k} Q_j = (sum Q)_+` for each shape, partial sums taken from
/// before the support (the empty sum) to after it.
pub fn m2_condition_check(q_samples: &[Cluster]) -> M2Condition {
    let per_sample: Vec<bool> = q_samples
        .iter()
        .map(|q| {
            let (s, lo, hi) = partial_sum_range(q.values().iter().copied());
            let tol = 1e-12 * q.abs_sum();
            (lo - s.min(0.0)).abs() <= tol && (hi - s.max(0.0)).abs() <= tol
        })
        .collect();
    let fraction = if per_sample.is_empty() {
        1.0
    } else {
        per_sample.iter().filter(|b| **b).count() as f64 / per_sample.len() as f64
    };
    M2Condition { fraction, per_sample }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallJumpPoint {
    pub epsilon: f64,
    pub value: f64,
}

/// `max_k |sum_{i<=k} (X_i 1{|X_i| <= a_n eps} - E[X 1{|X| <= a_n eps}])| / a_n`
/// over a grid of `eps`.
pub fn small_jump_diagnostic(
    sample: &SeriesSample,
    a_n: f64,
    epsilons: &[f64],
    source: MeanSource,
) -> Result<Vec<SmallJumpPoint>> {
    if !(a_n > 0.0) {
        return Err(invalid("a_n must be positive"));
    }
    epsilons
        .iter()
        .map(|&eps| {
            if !(eps > 0.0) {
                return Err(invalid("epsilon must be positive"));
            }
            let m = truncated_mean(sample, a_n, eps, source)?;
            let thr = a_n * eps;
            let (mut s, mut worst) = (0.0f64, 0.0f64);
            for &x in &sample.values {
                let kept = if x.abs() <= thr { x / a_n } else { 0.0 };
                s += kept - m;
                worst = worst.max(s.abs());
            }
            Ok(SmallJumpPoint { epsilon: eps, value: worst })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// experiments

/// Empirical partial sums and the matching limit for a model with a
/// closed-form limit.
struct SumsSetup {
    model: ModelSpec,
    alpha: f64,
    p: f64,
    limit: LimitSpec,
    source: MeanSource,
    p_min: f64,
    /// Mean of the clusters dropped below `p_min` for `alpha < 1`, added
    /// back as a drift.
    compensation: f64,
}

impl SumsSetup {
    fn new(model: &ModelSpec, p_min: f64) -> Result<Self> {
        model.validate()?;
        let limit = LimitSpec::from_model(model)?;
        let alpha = limit.alpha;
        check_alpha(alpha)?;
        if !(p_min > 0.0 && p_min < 1.0) {
            return Err(invalid("p_min must lie in (0, 1)"));
        }
        let p = model.tail_balance().ok_or_else(|| LabError::Unsupported("tail balance unknown".into()))?;
        let source = match model {
            ModelSpec::Iid { .. } => MeanSource::Analytic,
            _ => MeanSource::Empirical,
        };
        // points below p_min add theta E[sum Q] int_0^p_min y alpha y^-alpha-1 dy
        let compensation = if alpha < 1.0 {
            let mean_sum: f64 = limit.q.support().iter().map(|(c, w)| w * c.sum()).sum();
            limit.theta * mean_sum * alpha / (1.0 - alpha) * p_min.powf(1.0 - alpha)
        } else {
            0.0
        };
        Ok(Self { model: model.clone(), alpha, p, limit, source, p_min, compensation })
    }

    fn centering(&self) -> CenteringSpec {
        CenteringSpec::for_alpha(self.alpha, self.p_min, self.source)
    }

    fn empirical_path(&self, n: usize, seed: u64) -> Result<DecoratedPath> {
        let s = self.model.simulate(n, seed)?;
        let a_n = quantile_an(&self.model, n)?;
        Ok(embed_cadlag(centered_path(&s, a_n, &self.centering())?.path))
    }

    /// `sup_{s <= 1} V_n(s)` straight from the series.
    fn empirical_sup(&self, n: usize, seed: u64) -> Result<f64> {
        let s = self.model.simulate(n, seed)?;
        let a_n = quantile_an(&self.model, n)?;
        let m = match self.centering().mode {
            CenteringMode::None => 0.0,
            CenteringMode::TruncatedMean => truncated_mean(&s, a_n, 1.0, self.source)?,
        };
        let (mut acc, mut best) = (0.0f64, 0.0f64);
        for x in &s.values {
            acc += x / a_n - m;
            best = best.max(acc);
        }
        Ok(best)
    }

    fn limit_path(&self, seed: u64) -> Result<DecoratedPath> {
        let pp = sample_limit_pp(self.limit.theta, self.alpha, &self.limit.q, self.p_min, 1.0, seed)?;
        let path = limit_decorated_path(&pp, self.alpha, self.p, &self.centering())?;
        Ok(if self.compensation != 0.0 {
            add_continuous(&path, &PiecewiseLinear::affine(0.0, self.compensation))
        } else {
            path
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupLawConfig {
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub limit_replications: usize,
    /// Magnitude floor of the sampled limit points (and truncation level for
    /// `alpha >= 1`).
    pub p_min: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupLawRow {
    pub n: usize,
    pub ks: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupLawReport {
    pub rows: Vec<SupLawRow>,
    pub replications: usize,
    pub limit_replications: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Two-sample KS distance between `sup_{s<=1} V_n(s)` over replications and
/// `sup_{s<=1} V^+(s)` from limit samples, where `V^+` takes the upper
/// decoration endpoint at cluster times.
pub fn sup_law_experiment(model: &ModelSpec, config: &SupLawConfig, seed: u64) -> Result<SupLawReport> {
    if config.replications == 0 {
        return Ok(SupLawReport {
            rows: Vec::new(),
            replications: 0,
            limit_replications: config.limit_replications,
            tolerance: config.tolerance,
            pass: true,
        });
    }
    let setup = SumsSetup::new(model, config.p_min)?;
    let limit_seed = derive_seed(seed, 0x5e9);
    let limit: Vec<f64> = (0..config.limit_replications)
        .into_par_iter()
        .map(|r| local_max(&setup.limit_path(derive_seed(limit_seed, r as u64))?, 0.0, 1.0))
        .collect::<Result<_>>()?;
    let rows = config
        .n_grid
        .iter()
        .map(|&n| {
            let nseed = derive_seed(seed, n as u64);
            let emp: Vec<f64> = (0..config.replications)
                .into_par_iter()
                .map(|r| setup.empirical_sup(n, derive_seed(nseed, r as u64)))
                .collect::<Result<_>>()?;
            let ks = ks_statistic(&emp, &limit);
            Ok(SupLawRow { n, ks, pass: ks < config.tolerance })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(SupLawReport {
        rows,
        replications: config.replications,
        limit_replications: config.limit_replications,
        tolerance: config.tolerance,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct M2ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub limit_replications: usize,
    pub p_min: f64,
    /// Windows are `[i/k, j/k]`.
    pub cells: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2WindowGap {
    pub t1: f64,
    pub t2: f64,
    /// Levy distance between the laws of the window maximum.
    pub max_gap: f64,
    /// Same for the window minimum.
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2ExperimentRow {
    pub n: usize,
    pub median_gap: f64,
    pub windows: Vec<M2WindowGap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2ExperimentReport {
    pub rows: Vec<M2ExperimentRow>,
    pub monotone: bool,
    pub final_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Window extremes `(min, max)` over `[i/k, j/k]` for every window, flattened.
fn window_profile(path: &DecoratedPath, k: usize) -> Result<Vec<(f64, f64)>> {
    let cells = cell_extremes(path, k)?;
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i + 1..=k {
            out.push(window_extremes(&cells, i, j));
        }
    }
    Ok(out)
}

/// Distribution-level version of the local-maximum characterization: for each
/// window the laws of `M_{t1,t2}(V_n)` and `M_{t1,t2}(-V_n)` over
/// replications are matched against those of the decorated limit by their
/// Levy distance (quantiles matched up to a common horizontal and vertical
/// offset). Reports the median gap over windows for each `n`.
pub fn m2_distribution_experiment(
    model: &ModelSpec,
    config: &M2ExperimentConfig,
    seed: u64,
) -> Result<M2ExperimentReport> {
    if config.cells == 0 || config.replications < 2 || config.limit_replications < 2 {
        return Err(invalid("need cells >= 1 and at least two replications on each side"));
    }
    let setup = SumsSetup::new(model, config.p_min)?;
    let k = config.cells;
    let limit_seed = derive_seed(seed, 0x2ad);
    let lim: Vec<Vec<(f64, f64)>> = (0..config.limit_replications)
        .into_par_iter()
        .map(|r| window_profile(&setup.limit_path(derive_seed(limit_seed, r as u64))?, k))
        .collect::<Result<_>>()?;
    let windows: Vec<(f64, f64)> = crate::espace::window_grid(k);
    let column = |rows: &[Vec<(f64, f64)>], w: usize, upper: bool| -> Vec<f64> {
        rows.iter().map(|r| if upper { r[w].1 } else { r[w].0 }).collect()
    };
    let rows = config
        .n_grid
        .iter()
        .map(|&n| {
            let nseed = derive_seed(seed, n as u64);
            let emp: Vec<Vec<(f64, f64)>> = (0..config.replications)
                .into_par_iter()
                .map(|r| window_profile(&setup.empirical_path(n, derive_seed(nseed, r as u64))?, k))
                .collect::<Result<_>>()?;
            let gaps: Vec<M2WindowGap> = windows
                .iter()
                .enumerate()
                .map(|(w, &(t1, t2))| M2WindowGap {
                    t1,
                    t2,
                    max_gap: levy_distance(&column(&emp, w, true), &column(&lim, w, true)),
                    min_gap: levy_distance(&column(&emp, w, false), &column(&lim, w, false)),
                })
                .collect();
            let all: Vec<f64> = gaps.iter().flat_map(|g| [g.max_gap, g.min_gap]).collect();
            Ok(M2ExperimentRow { n, median_gap: median(&all), windows: gaps })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].median_gap < w[0].median_gap);
    let final_gap = rows.last().map_or(f64::NAN, |r| r.median_gap);
    Ok(M2ExperimentReport {
        pass: monotone && final_gap < config.tolerance,
        rows,
        monotone,
        final_gap,
        tolerance: config.tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KaramataCheck {
    pub epsilon: f64,
    /// `alpha eps^(1-alpha) / (1-alpha)`
    pub limit: f64,
    /// `(n/a_n) E[|X| 1{|X| <= a_n eps}]` in closed form at this `n`
    pub exact: f64,
    pub monte_carlo: Estimate,
}

/// `(n / a_n) E[|X| 1{|X| <= a_n eps}]` for Pareto `alpha < 1`: closed form,
/// Monte Carlo over `samples` draws, and the Karamata limit.
pub fn karamata_check(law: RegVarLaw, n: usize, epsilon: f64, samples: usize, seed: u64) -> Result<KaramataCheck> {
    law.validate()?;
    let alpha = law.alpha;
    if !(alpha < 1.0) || !(epsilon > 0.0) || samples < 2 {
        return Err(invalid("needs alpha < 1, epsilon > 0 and at least two samples"));
    }
    let a_n = (n as f64).powf(1.0 / alpha);
    let scale = n as f64 / a_n;
    let thr = a_n * epsilon;
    let mut rng = stream(seed, 0);
    let (mut s, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = law.draw(&mut rng).abs();
        let v = if x <= thr { scale * x } else { 0.0 };
        s += v;
        s2 += v * v;
    }
    let m = samples as f64;
    let mean = s / m;
    let var = (s2 / m - mean * mean) * m / (m - 1.0);
    Ok(KaramataCheck {
        epsilon,
        limit: alpha * epsilon.powf(1.0 - alpha) / (1.0 - alpha),
        exact: scale * law.truncated_abs_mean(thr),
        monte_carlo: Estimate { value: mean, se: (var / m).sqrt() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limitpp::LimitPoint;

    fn iid(alpha: f64, p: f64) -> ModelSpec {
        ModelSpec::Iid { law: RegVarLaw::new(alpha, p).unwrap() }
    }

    fn pp_of(points: Vec<(f64, f64, Vec<f64>)>, p_min: f64) -> LimitPointProcess {
        LimitPointProcess {
            points: points.into_iter().map(|(t, p, q)| LimitPoint { t, p, q: Cluster::new(q) }).collect(),
            theta: 1.0,
            alpha: 0.5,
            p_min,
            t_max: 1.0,
        }
    }

    #[test]
    fn partial_sums() {
        let s = SeriesSample::from_values(vec![0.0; 5], iid(0.5, 1.0));
        assert_eq!(partial_sum_path(&s, 1.0).unwrap(), StepPath::constant(0.0));
        let s = SeriesSample::from_values(vec![10.0, 0.0, 0.0, 0.0], iid(0.5, 1.0));
        let p = partial_sum_path(&s, 10.0).unwrap();
        assert_eq!(p.jumps(), &[(0.25, 1.0)]);
        let x = vec![1.0, -2.0, 3.5, 0.25];
        let s = SeriesSample::from_values(x.clone(), iid(0.5, 1.0));
        let p = partial_sum_path(&s, 2.0).unwrap();
        let mut acc = 0.0;
        for (i, v) in x.iter().enumerate() {
            acc += v / 2.0;
            assert_eq!(p.value((i + 1) as f64 / 4.0), acc);
        }
        assert!(partial_sum_path(&s, 0.0).is_err());
    }

    #[test]
    fn centering_examples() {
        let s = SeriesSample::from_values(vec![1.5, 2.0, -3.0], iid(0.5, 1.0));
        let c = centered_path(&s, 1.0, &CenteringSpec::none()).unwrap();
        assert_eq!(c.path, partial_sum_path(&s, 1.0).unwrap());
        assert!(centered_path(&s, 1.0, &CenteringSpec::truncated(0.1, MeanSource::Analytic)).is_err());

        let sym = SeriesSample::from_values(vec![1.5; 10], iid(1.5, 0.5));
        let c = centered_path(&sym, 100.0, &CenteringSpec::truncated(0.1, MeanSource::Analytic)).unwrap();
        assert_eq!(c.mean, 0.0);

        // alpha = 1.5, p = 1: int_1^a x 1.5 x^-2.5 dx / a = 3 (1 - a^-0.5) / a
        let pos = SeriesSample::from_values(vec![1.5; 10], iid(1.5, 1.0));
        let a = 400.0;
        let c = centered_path(&pos, a, &CenteringSpec::truncated(0.1, MeanSource::Analytic)).unwrap();
        let quad = Composite::new(20).integrate(|x: f64| x * 1.5 * x.powf(-2.5), 1.0, a, 200) / a;
        assert!((c.mean - 3.0 * (1.0 - a.powf(-0.5)) / a).abs() < 1e-14);
        assert!((c.mean - quad).abs() < 1e-8);
        let e = centered_path(&pos, a, &CenteringSpec::truncated(0.1, MeanSource::Empirical)).unwrap();
        assert!(e.precision_warning);
        assert!((e.mean - 1.5 / a).abs() < 1e-15);
    }

    #[test]
    fn limit_path_examples() {
        let none = CenteringSpec::none();
        let p = limit_decorated_path(&pp_of(vec![(0.5, 1.0, vec![1.0])], 0.1), 0.5, 1.0, &none).unwrap();
        assert_eq!(p.step().value(0.5), 1.0);
        assert_eq!(p.decorations(), &[Decoration { t: 0.5, lo: 0.0, hi: 1.0 }]);

        let p = limit_decorated_path(&pp_of(vec![(0.3, 1.0, vec![1.0]), (0.5, 2.0, vec![1.0, -1.0])], 0.1), 0.5, 1.0, &none)
            .unwrap();
        assert_eq!(p.step().value(0.5), 1.0);
        assert_eq!(p.decorations()[1], Decoration { t: 0.5, lo: 1.0, hi: 3.0 });

        let empty = limit_decorated_path(&pp_of(vec![], 0.1), 0.5, 1.0, &none).unwrap();
        assert!(empty.decorations().is_empty());
        assert_eq!(empty.step().value(1.0), 0.0);
    }

    #[test]
    fn limit_path_above_one() {
        let pp = pp_of(vec![(0.5, 2.0, vec![1.0, 0.01, -0.5])], 0.1);
        assert!(limit_decorated_path(&pp, 1.5, 1.0, &CenteringSpec::none()).is_err());
        assert!(limit_decorated_path(&pp, 1.5, 1.0, &CenteringSpec::truncated(0.2, MeanSource::Analytic)).is_err());
        let spec = CenteringSpec::truncated(0.1, MeanSource::Analytic);
        let path = limit_decorated_path(&pp, 1.5, 1.0, &spec).unwrap();
        let m = centering_drift(1.5, 1.0, 0.1);
        // coordinate 0.02 falls below epsilon and is dropped
        assert!((path.step().value(1.0) - (2.0 - 1.0 - m)).abs() < 1e-14);
        let d = path.decorations()[0];
        assert!((d.hi - (2.0 - 0.5 * m)).abs() < 1e-14);
        assert!((d.lo - (-0.5 * m)).abs() < 1e-14);
        assert_eq!(centering_drift(1.0, 0.5, 0.1), 0.0);
        assert!((centering_drift(1.0, 1.0, 0.1) - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn c0_schemes_agree_with_euler_constant() {
        // int_0^inf (sin y - y 1{y<=1}) / y^2 dy = 1 - gamma
        let target = 1.0 - 0.577_215_664_901_532_9;
        let (a, b) = (c0_by_periods(), c0_by_contour());
        assert!((a - target).abs() < 1e-9, "{a}");
        assert!((b - target).abs() < 1e-9, "{b}");
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn stable_degenerate_shape() {
        let q = QSampler::single_point(1.0).unwrap();
        for alpha in [0.5, 1.0, 1.5] {
            let e = stable_params_from_q(alpha, 1.0, &q, 1.0, 0, 0).unwrap();
            assert!((e.params.sigma - 1.0).abs() < 1e-15);
            assert_eq!(e.params.beta, 1.0);
            assert!(e.dh95_residual.unwrap().value.abs() < 1e-15);
        }
        assert_eq!(stable_params_from_q(0.5, 1.0, &q, 1.0, 0, 0).unwrap().params.b, 0.0);
        assert!((stable_params_from_q(1.5, 1.0, &q, 1.0, 0, 0).unwrap().params.b - 3.0).abs() < 1e-14);
        assert!((stable_params_from_q(1.0, 1.0, &q, 1.0, 0, 0).unwrap().params.b - c0()).abs() < 1e-15);
    }

    #[test]
    fn stable_linear_closed_forms() {
        let m = LinearModel::causal(&[1.0, 0.7], RegVarLaw::new(0.7, 1.0).unwrap()).unwrap();
        let spec = ModelSpec::Linear { model: m.clone() };
        let lim = LimitSpec::from_model(&spec).unwrap();
        let e = stable_params_from_q(0.7, lim.theta, &lim.q, m.tail_balance(), 0, 0).unwrap();
        let want = 1.7f64.powf(0.7) / (1.0 + 0.7f64.powf(0.7));
        assert!((e.params.sigma.powf(0.7) - want).abs() < 1e-14);

        let m = LinearModel::causal(&[1.0, -1.0], RegVarLaw::new(1.5, 0.5).unwrap()).unwrap();
        let spec = ModelSpec::Linear { model: m.clone() };
        let lim = LimitSpec::from_model(&spec).unwrap();
        let e = stable_params_from_q(1.5, lim.theta, &lim.q, m.tail_balance(), 0, 0).unwrap();
        assert_eq!(e.params.sigma, 0.0);
    }

    #[test]
    fn forward_iid_and_positive() {
        let f = ForwardSampler::Discrete { atoms: vec![(vec![1.0], 1.0)] };
        let e = stable_params_from_forward_theta(0.8, &f, 0, 0).unwrap();
        assert_eq!(e.params.sigma, 1.0);
        assert_eq!(e.params.beta, 1.0);
        let m = LinearModel::causal(&[1.0, 0.5, 0.2], RegVarLaw::new(1.2, 1.0).unwrap()).unwrap();
        let e = stable_params_from_forward_theta(1.2, &ForwardSampler::Linear { model: m }, 0, 0).unwrap();
        assert!((e.params.beta - 1.0).abs() < 1e-14);
        assert!(ForwardSampler::Discrete { atoms: vec![(vec![0.5], 1.0)] }.support().is_err());
    }

    #[test]
    fn forward_matches_shape_route_exactly() {
        for (c, alpha, p) in [(vec![1.0, 0.7], 0.7, 1.0), (vec![1.0, -0.6], 1.0, 0.8), (vec![0.4, 1.0], 1.5, 0.3)] {
            let m = LinearModel::causal(&c, RegVarLaw::new(alpha, p).unwrap()).unwrap();
            let spec = ModelSpec::Linear { model: m.clone() };
            let lim = LimitSpec::from_model(&spec).unwrap();
            let a = stable_params_from_q(alpha, lim.theta, &lim.q, m.tail_balance(), 0, 0).unwrap();
            let b = stable_params_from_forward_theta(alpha, &ForwardSampler::Linear { model: m }, 0, 0).unwrap();
            assert!((a.params.sigma - b.params.sigma).abs() < 1e-12, "{c:?}");
            assert!((a.params.beta - b.params.beta).abs() < 1e-12, "{c:?}");
            assert!((a.params.b - b.params.b).abs() < 1e-12, "{c:?} {} {}", a.params.b, b.params.b);
            assert!(a.dh95_residual.unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn m2_condition_examples() {
        let r = m2_condition_check(&[
            Cluster::new(vec![1.0, 0.7]),
            Cluster::new(vec![1.0, -0.7]),
            Cluster::single(-1.0),
        ]);
        assert_eq!(r.per_sample, vec![true, false, true]);
        assert!((r.fraction - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn small_jump_examples() {
        // everything is a big jump: only the centering remains
        let s = SeriesSample::from_values(vec![50.0; 4], iid(1.5, 1.0));
        let r = small_jump_diagnostic(&s, 10.0, &[0.5], MeanSource::Empirical).unwrap();
        assert_eq!(r[0].value, 0.0);
        let r = small_jump_diagnostic(&s, 10.0, &[0.5], MeanSource::Analytic).unwrap();
        let m = RegVarLaw::new(1.5, 1.0).unwrap().truncated_mean(5.0) / 10.0;
        assert!((r[0].value - 4.0 * m).abs() < 1e-14);
    }

    #[test]
    fn empty_sup_report() {
        let cfg = SupLawConfig { n_grid: vec![100], replications: 0, limit_replications: 10, p_min: 0.01, tolerance: 0.1 };
        let r = sup_law_experiment(&iid(0.7, 1.0), &cfg, 0).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn karamata_closed_form_converges() {
        let law = RegVarLaw::new(0.7, 1.0).unwrap();
        let k = karamata_check(law, 1_000_000, 0.1, 1000, 1).unwrap();
        assert!((k.exact - k.limit).abs() / k.limit < 0.01);
        assert!(karamata_check(RegVarLaw::new(1.2, 1.0).unwrap(), 10, 0.1, 10, 1).is_err());
    }
}
