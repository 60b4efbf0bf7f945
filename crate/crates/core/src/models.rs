//! Stationary heavy-tailed models: two-sided Pareto innovations, finite moving
//! averages, GARCH(1,1), plus closed-form extremal quantities of the moving
//! averages.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::rng::{stream, LabRng};
use crate::seqspace::Cluster;

/// Two-sided Pareto law: `P(|X| > x) = x^-alpha` for `x >= 1`, sign `+` with
/// probability `p`, independent of `|X|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegVarLaw {
    pub alpha: f64,
    pub p: f64,
}

impl RegVarLaw {
    pub fn new(alpha: f64, p: f64) -> Result<Self> {
        let law = Self { alpha, p };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("tail index must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("sign probability must lie in [0,1], got {}", self.p)));
        }
        Ok(())
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        let mag = (-u.ln() / self.alpha).exp();
        let positive = if self.p >= 1.0 {
            true
        } else if self.p <= 0.0 {
            false
        } else {
            rng.random::<f64>() < self.p
        };
        if positive {
            mag
        } else {
            -mag
        }
    }

    /// `P(|X| > x)`.
    pub fn abs_tail(&self, x: f64) -> f64 {
        if x < 1.0 {
            1.0
        } else {
            x.powf(-self.alpha)
        }
    }

    /// `E[X 1{|X| <= level}]`.
    pub fn truncated_mean(&self, level: f64) -> f64 {
        if level <= 1.0 {
            return 0.0;
        }
        let a = self.alpha;
        let abs_part = if (a - 1.0).abs() < 1e-12 {
            level.ln()
        } else {
            a / (1.0 - a) * (level.powf(1.0 - a) - 1.0)
        };
        (2.0 * self.p - 1.0) * abs_part
    }

    /// `E[|X| 1{|X| <= level}]`.
    pub fn truncated_abs_mean(&self, level: f64) -> f64 {
        RegVarLaw { alpha: self.alpha, p: 1.0 }.truncated_mean(level)
    }
}

/// Finite moving average `X_t = sum_j c_j xi_{t-j}`, `j = first_lag ..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub first_lag: i64,
    pub innovation: RegVarLaw,
}

impl LinearModel {
    pub fn new(coeffs: Vec<f64>, first_lag: i64, innovation: RegVarLaw) -> Result<Self> {
        let m = Self { coeffs, first_lag, innovation };
        m.validate()?;
        Ok(m)
    }

    /// Causal model `X_t = c_0 xi_t + c_1 xi_{t-1} + ...`.
    pub fn causal(coeffs: &[f64], innovation: RegVarLaw) -> Result<Self> {
        Self::new(coeffs.to_vec(), 0, innovation)
    }

    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        match self.coeff(0) {
            Some(c0) if c0 != 0.0 => Ok(()),
            _ => Err(invalid("the lag-0 coefficient must be present and nonzero")),
        }
    }

    pub fn coeff(&self, j: i64) -> Option<f64> {
        let i = j - self.first_lag;
        (i >= 0).then(|| self.coeffs.get(i as usize).copied()).flatten()
    }

    pub fn last_lag(&self) -> i64 {
        self.first_lag + self.coeffs.len() as i64 - 1
    }

    pub fn alpha(&self) -> f64 {
        self.innovation.alpha
    }

    /// `sum_j |c_j|^alpha`, the tail-equivalence constant.
    pub fn abs_alpha_sum(&self) -> f64 {
        let a = self.alpha();
        self.coeffs.iter().map(|c| c.abs().powf(a)).sum()
    }

    fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Positive-tail fraction `p` of the marginal of `X` (not of the innovations).
    pub fn tail_balance(&self) -> f64 {
        let a = self.alpha();
        let p = self.innovation.p;
        let num: f64 = self
            .coeffs
            .iter()
            .map(|&c| {
                let w = c.abs().powf(a);
                if c > 0.0 {
                    p * w
                } else if c < 0.0 {
                    (1.0 - p) * w
                } else {
                    0.0
                }
            })
            .sum();
        num / self.abs_alpha_sum()
    }

    /// Cluster shape `c / max |c|` (sign `+`).
    pub fn q_shape(&self) -> Cluster {
        let m = self.max_abs();
        Cluster::with_offset(self.coeffs.iter().map(|c| c / m).collect(), self.first_lag)
    }

    /// Whether the nonzero coefficients are pairwise distinct (needed for the
    /// record limit to be non-degenerate).
    pub fn has_distinct_coefficients(&self) -> bool {
        let mut nz: Vec<f64> = self.coeffs.iter().copied().filter(|c| *c != 0.0).collect();
        nz.sort_by(f64::total_cmp);
        nz.windows(2).all(|w| w[0] != w[1])
    }
}

/// GARCH(1,1): `X_t = sigma_t Z_t`, `sigma_t^2 = a0 + a1 X_{t-1}^2 + b1 sigma_{t-1}^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchModel {
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
    #[serde(default)]
    pub tail_alpha_hint: Option<f64>,
}

impl GarchModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.a1 > 0.0 && self.b1 > 0.0) {
            return Err(invalid("GARCH parameters a0, a1, b1 must be positive"));
        }
        if let Some(a) = self.tail_alpha_hint {
            if !(a > 0.0) {
                return Err(invalid("tail_alpha_hint must be positive"));
            }
        }
        Ok(())
    }

    /// Initial conditional variance: stationary variance when it exists.
    pub fn initial_variance(&self) -> f64 {
        if self.a1 + self.b1 < 1.0 {
            self.a0 / (1.0 - self.a1 - self.b1)
        } else {
            self.a0
        }
    }
}

pub const DEFAULT_GARCH_BURNIN: usize = 1000;

fn default_burnin() -> usize {
    DEFAULT_GARCH_BURNIN
}

/// Model descriptor as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Iid { law: RegVarLaw },
    Linear { model: LinearModel },
    Garch {
        model: GarchModel,
        #[serde(default = "default_burnin")]
        burnin: usize,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Iid { law } => law.validate(),
            ModelSpec::Linear { model } => model.validate(),
            ModelSpec::Garch { model, .. } => model.validate(),
        }
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<SeriesSample> {
        match self {
            ModelSpec::Iid { law } => sample_regvar(*law, n, seed),
            ModelSpec::Linear { model } => simulate_linear(model, n, seed),
            ModelSpec::Garch { model, burnin } => simulate_garch(*model, n, *burnin, seed),
        }
    }

    /// Tail index, if known without estimation.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ModelSpec::Iid { law } => Some(law.alpha),
            ModelSpec::Linear { model } => Some(model.alpha()),
            ModelSpec::Garch { model, .. } => model.tail_alpha_hint,
        }
    }

    /// Extremal index when available in closed form.
    pub fn theta(&self) -> Option<f64> {
        match self {
            ModelSpec::Iid { .. } => Some(1.0),
            ModelSpec::Linear { model } => Some(theta_linear(model)),
            ModelSpec::Garch { .. } => None,
        }
    }

    /// Deterministic cluster shape and sign probability of the limit cluster,
    /// for models where the shape is known in closed form.
    pub fn q_shape(&self) -> Option<(Cluster, f64)> {
        match self {
            ModelSpec::Iid { law } => Some((Cluster::single(1.0), law.p)),
            ModelSpec::Linear { model } => Some((model.q_shape(), model.innovation.p)),
            ModelSpec::Garch { .. } => None,
        }
    }

    /// Positive-tail fraction of the marginal.
    pub fn tail_balance(&self) -> Option<f64> {
        match self {
            ModelSpec::Iid { law } => Some(law.p),
            ModelSpec::Linear { model } => Some(model.tail_balance()),
            ModelSpec::Garch { .. } => None,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            ModelSpec::Iid { law } => law.p >= 1.0,
            ModelSpec::Linear { model } => {
                model.innovation.p >= 1.0 && model.coeffs.iter().all(|c| *c >= 0.0)
            }
            ModelSpec::Garch { .. } => false,
        }
    }
}

/// A simulated path together with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSample {
    pub values: Vec<f64>,
    pub model: ModelSpec,
    pub seed: u64,
}

impl SeriesSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Wraps externally produced values (no regeneration possible).
    pub fn from_values(values: Vec<f64>, model: ModelSpec) -> Self {
        Self { values, model, seed: 0 }
    }

    /// CSV with a single `x` column.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 20 + 2);
        s.push_str("x\n");
        for v in &self.values {
            s.push_str(&format!("{v}\n"));
        }
        s
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("series length must be at least 1"))
    } else {
        Ok(())
    }
}

pub(crate) fn draw_innovations(law: &RegVarLaw, n: usize, rng: &mut LabRng) -> Vec<f64> {
    (0..n).map(|_| law.draw(rng)).collect()
}

/// i.i.d. draws from the two-sided Pareto law.
pub fn sample_regvar(law: RegVarLaw, n: usize, seed: u64) -> Result<SeriesSample> {
    law.validate()?;
    check_len(n)?;
    let mut rng = stream(seed, 0);
    Ok(SeriesSample {
        values: draw_innovations(&law, n, &mut rng),
        model: ModelSpec::Iid { law },
        seed,
    })
}

/// Tail quantile `a_n` with `n P(|X_0| > a_n) = 1`.
pub fn quantile_an(model: &ModelSpec, n: usize) -> Result<f64> {
    check_len(n)?;
    model.validate()?;
    let n = n as f64;
    match model {
        ModelSpec::Iid { law } => Ok(n.powf(1.0 / law.alpha)),
        ModelSpec::Linear { model } => Ok((n * model.abs_alpha_sum()).powf(1.0 / model.alpha())),
        ModelSpec::Garch { .. } => Err(LabError::Unsupported(
            "a_n for GARCH needs a tail index; estimate one with hill_estimate".into(),
        )),
    }
}

/// Applies the moving-average filter to an innovation sequence. The output has
/// `innovations.len() - coeffs.len() + 1` entries, each fully formed.
pub fn filter_linear(coeffs: &[f64], innovations: &[f64]) -> Vec<f64> {
    let l = coeffs.len();
    if innovations.len() < l {
        return Vec::new();
    }
    let n = innovations.len() - l + 1;
    (0..n)
        .map(|t| {
            // innovations[t + l - 1 - i] carries lag i of coefficient i
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * innovations[t + l - 1 - i])
                .sum()
        })
        .collect()
}

/// Stationary moving-average path of length `n`.
pub fn simulate_linear(model: &LinearModel, n: usize, seed: u64) -> Result<SeriesSample> {
    model.validate()?;
    check_len(n)?;
    let mut rng = stream(seed, 0);
    let xi = draw_innovations(&model.innovation, n + model.coeffs.len() - 1, &mut rng);
    Ok(SeriesSample {
        values: filter_linear(&model.coeffs, &xi),
        model: ModelSpec::Linear { model: model.clone() },
        seed,
    })
}

/// GARCH(1,1) path with Gaussian innovations after discarding `burnin` steps.
/// Explosive parameter sets (`a1 + b1` large) are simulated as given.
pub fn simulate_garch(model: GarchModel, n: usize, burnin: usize, seed: u64) -> Result<SeriesSample> {
    model.validate()?;
    check_len(n)?;
    let mut rng = stream(seed, 0);
    let mut var = model.initial_variance();
    let mut values = Vec::with_capacity(n);
    for t in 0..(burnin + n) {
        let z: f64 = rng.sample(StandardNormal);
        let x = var.sqrt() * z;
        if t >= burnin {
            values.push(x);
        }
        var = model.a0 + model.a1 * x * x + model.b1 * var;
    }
    Ok(SeriesSample { values, model: ModelSpec::Garch { model, burnin }, seed })
}

/// Hill estimator of the tail index from the `k` largest `|X|`.
pub fn hill_estimate(sample: &SeriesSample, k: usize) -> Result<f64> {
    let n = sample.len();
    if k == 0 || k >= n {
        return Err(invalid(format!("Hill needs 1 <= k < n, got k={k}, n={n}")));
    }
    let mut abs: Vec<f64> = sample.values.iter().map(|v| v.abs()).collect();
    // abs[..=k] become the k+1 largest values, abs[k] the (k+1)-th largest
    abs.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = abs[k];
    if !(threshold > 0.0) {
        return Err(LabError::Degenerate("order statistic at k is zero".into()));
    }
    let mean_log: f64 = abs[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if mean_log <= 0.0 {
        return Err(LabError::Degenerate("zero log-spacings in the upper tail".into()));
    }
    Ok(1.0 / mean_log)
}

/// Extremal index `max_j |c_j|^alpha / sum_j |c_j|^alpha`.
pub fn theta_linear(model: &LinearModel) -> f64 {
    let a = model.alpha();
    model.max_abs().powf(a) / model.abs_alpha_sum()
}

/// One draw of the limit cluster `Theta^xi c / max |c|`.
pub fn q_sequence_linear(model: &LinearModel, seed: u64) -> Cluster {
    let mut rng = stream(seed, 0);
    let shape = model.q_shape();
    if rng.random::<f64>() < model.innovation.p {
        shape
    } else {
        shape.scaled(-1.0)
    }
}

/// Self-normalized windows `(X_{i-m..=i+m}) / |X_i|` around every exceedance
/// `|X_i| > u` whose window fits inside the series.
pub fn spectral_tail_empirical(sample: &SeriesSample, u: f64, m: usize) -> Result<Vec<Vec<f64>>> {
    const MIN_EXCEEDANCES: usize = 100;
    let x = &sample.values;
    let n = x.len();
    let mut rows = Vec::new();
    if n > 2 * m {
        for i in m..(n - m) {
            let xi = x[i].abs();
            if xi > u {
                rows.push(x[i - m..=i + m].iter().map(|v| v / xi).collect());
            }
        }
    }
    if rows.len() < MIN_EXCEEDANCES {
        return Err(LabError::Insufficient {
            what: "exceedances for the spectral tail estimate",
            got: rows.len(),
            need: MIN_EXCEEDANCES,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ma1() -> LinearModel {
        LinearModel::causal(&[1.0, 0.7], RegVarLaw::new(0.7, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn parameter_errors() {
        assert!(RegVarLaw::new(0.0, 0.5).is_err());
        assert!(RegVarLaw::new(1.0, 1.5).is_err());
        assert!(LinearModel::new(vec![0.0, 1.0], 0, RegVarLaw::new(1.0, 1.0).unwrap()).is_err());
        assert!(LinearModel::new(vec![1.0], 1, RegVarLaw::new(1.0, 1.0).unwrap()).is_err());
        assert!(sample_regvar(RegVarLaw::new(1.0, 1.0).unwrap(), 0, 1).is_err());
    }

    #[test]
    fn degenerate_sign() {
        let s = sample_regvar(RegVarLaw::new(1.5, 1.0).unwrap(), 1000, 3).unwrap();
        assert!(s.values.iter().all(|v| *v >= 1.0));
        let s = sample_regvar(RegVarLaw::new(1.5, 0.0).unwrap(), 1000, 3).unwrap();
        assert!(s.values.iter().all(|v| *v <= -1.0));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let spec = ModelSpec::Linear { model: ma1() };
        assert_eq!(spec.simulate(500, 9).unwrap(), spec.simulate(500, 9).unwrap());
        assert_ne!(spec.simulate(500, 9).unwrap().values, spec.simulate(500, 10).unwrap().values);
        let g = ModelSpec::Garch {
            model: GarchModel { a0: 0.01, a1: 0.2, b1: 0.7, tail_alpha_hint: None },
            burnin: 10,
        };
        assert_eq!(g.simulate(100, 1).unwrap(), g.simulate(100, 1).unwrap());
    }

    #[test]
    fn quantile_examples() {
        let iid = |a| ModelSpec::Iid { law: RegVarLaw::new(a, 1.0).unwrap() };
        assert!((quantile_an(&iid(1.0), 100).unwrap() - 100.0).abs() < 1e-9);
        assert!((quantile_an(&iid(2.0), 4).unwrap() - 2.0).abs() < 1e-12);
        let expected = (1000.0 * (1.0 + 0.7f64.powf(0.7))).powf(1.0 / 0.7);
        let got = quantile_an(&ModelSpec::Linear { model: ma1() }, 1000).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
        let g = ModelSpec::Garch {
            model: GarchModel { a0: 0.01, a1: 0.2, b1: 0.7, tail_alpha_hint: None },
            burnin: 10,
        };
        assert!(matches!(quantile_an(&g, 10), Err(LabError::Unsupported(_))));
    }

    #[test]
    fn identity_and_telescoping_filters() {
        let xi = [3.0, -1.0, 4.0, 1.5];
        assert_eq!(filter_linear(&[1.0], &xi), xi.to_vec());
        assert_eq!(filter_linear(&[1.0, -1.0], &[2.5; 6]), vec![0.0; 5]);
        // X_t = xi_t + 0.5 xi_{t-1}
        assert_eq!(filter_linear(&[1.0, 0.5], &[2.0, 4.0, 8.0]), vec![5.0, 10.0]);
        let law = RegVarLaw::new(1.0, 0.5).unwrap();
        let m = LinearModel::causal(&[1.0], law).unwrap();
        let s = simulate_linear(&m, 50, 4).unwrap();
        assert_eq!(s.values, sample_regvar(law, 50, 4).unwrap().values);
    }

    #[test]
    fn theta_examples() {
        let law1 = RegVarLaw::new(1.0, 1.0).unwrap();
        assert_eq!(theta_linear(&LinearModel::causal(&[1.0], law1).unwrap()), 1.0);
        assert!((theta_linear(&LinearModel::causal(&[1.0, -1.0], law1).unwrap()) - 0.5).abs() < 1e-15);
        let t = theta_linear(&ma1());
        assert!((t - 1.0 / (1.0 + 0.7f64.powf(0.7))).abs() < 1e-15);
    }

    #[test]
    fn q_sequence_examples() {
        assert_eq!(q_sequence_linear(&ma1(), 1), Cluster::new(vec![1.0, 0.7]));
        let law = RegVarLaw::new(1.0, 1.0).unwrap();
        assert_eq!(q_sequence_linear(&LinearModel::causal(&[1.0], law).unwrap(), 2), Cluster::single(1.0));
        let q = q_sequence_linear(&LinearModel::causal(&[2.0, -1.0], law).unwrap(), 3);
        assert_eq!(q, Cluster::new(vec![1.0, -0.5]));
        assert_eq!(q.sup_norm(), 1.0);
    }

    #[test]
    fn tail_balance_of_signed_coefficients() {
        let law = RegVarLaw::new(1.0, 1.0).unwrap();
        let m = LinearModel::causal(&[1.0, -1.0], law).unwrap();
        assert!((m.tail_balance() - 0.5).abs() < 1e-15);
        assert_eq!(ma1().tail_balance(), 1.0);
    }

    #[test]
    fn truncated_mean_closed_form() {
        let law = RegVarLaw::new(1.5, 1.0).unwrap();
        let a: f64 = 100.0;
        assert!((law.truncated_mean(a) - 3.0 * (1.0 - a.powf(-0.5))).abs() < 1e-12);
        assert_eq!(RegVarLaw::new(1.5, 0.5).unwrap().truncated_mean(a), 0.0);
        assert!((RegVarLaw::new(1.0, 1.0).unwrap().truncated_mean(a) - a.ln()).abs() < 1e-12);
    }

    #[test]
    fn hill_rejects_constant_input() {
        let s = SeriesSample::from_values(vec![2.0; 100], ModelSpec::Iid { law: RegVarLaw::new(1.0, 1.0).unwrap() });
        assert!(matches!(hill_estimate(&s, 10), Err(LabError::Degenerate(_))));
        assert!(hill_estimate(&s, 0).is_err());
        assert!(hill_estimate(&s, 100).is_err());
    }

    #[test]
    fn spectral_rows_are_self_normalized() {
        let s = simulate_linear(&ma1(), 20_000, 5).unwrap();
        let rows = spectral_tail_empirical(&s, 50.0, 2).unwrap();
        assert!(rows.iter().all(|r| r[2].abs() == 1.0));
        assert!(matches!(
            spectral_tail_empirical(&s, 1e12, 2),
            Err(LabError::Insufficient { got: 0, .. })
        ));
    }

    #[test]
    fn csv_export() {
        let s = SeriesSample::from_values(vec![1.5, -2.0], ModelSpec::Iid { law: RegVarLaw::new(1.0, 1.0).unwrap() });
        assert_eq!(s.to_csv(), "x\n1.5\n-2\n");
    }
}
