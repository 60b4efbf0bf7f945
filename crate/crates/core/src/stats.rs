//! Small statistical toolkit shared by the diagnostics: Monte Carlo means,
//! two-sample Kolmogorov–Smirnov, chi-square goodness of fit.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// z-score of `self - other` using the combined standard error.
    /// Returns 0 when both values agree and both are exact.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let diff = self.value - other.value;
        let se = self.se.hypot(other.se);
        if se == 0.0 {
            if diff.abs() <= 1e-12 * (1.0 + self.value.abs()) {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            }
        } else {
            diff / se
        }
    }

    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        self.z_against(&Estimate::exact(target)).abs() <= k
    }
}

/// Sample mean and the standard error of the mean.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { value: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { value: mean, se: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate { value: mean, se: (var / n as f64).sqrt() }
}

/// Binomial proportion with its standard error.
pub fn proportion(successes: usize, trials: usize) -> Estimate {
    if trials == 0 {
        return Estimate { value: f64::NAN, se: f64::NAN };
    }
    let p = successes as f64 / trials as f64;
    Estimate { value: p, se: (p * (1.0 - p) / trials as f64).sqrt() }
}

fn sorted_finite(xs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`. Non-finite
/// values are dropped.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted_finite(a);
    let b = sorted_finite(b);
    ks_statistic_sorted(&a, &b)
}

pub(crate) fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return f64::NAN;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    d
}

/// `sup_x (F_a(x) - F_b(x + eps))` over the jump points of `F_a`.
fn levy_excess(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut j = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut i = 0usize;
    while i < a.len() {
        let x = a[i];
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x + eps {
            j += 1;
        }
        worst = worst.max(i as f64 / na - j as f64 / nb);
    }
    worst
}

/// Levy distance between the empirical laws of two samples: the smallest
/// `eps` with `F_b(x - eps) - eps <= F_a(x) <= F_b(x + eps) + eps` for all
/// `x`. Unlike KS it metrizes weak convergence, so an atom matched by mass
/// nearby costs only the horizontal offset. Non-finite values are dropped.
pub fn levy_distance(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted_finite(a);
    let b = sorted_finite(b);
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let ok = |eps: f64| levy_excess(&a, &b, eps) <= eps && levy_excess(&b, &a, eps) <= eps;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if ok(0.0) {
        return 0.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small arguments.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * c).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value of the two-sample KS test (Stephens' small-sample
/// correction).
pub fn ks_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    if !d.is_finite() || na == 0 || nb == 0 {
        return f64::NAN;
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square goodness of fit of observed category counts against expected
/// probabilities. Adjacent categories are pooled from the right until every
/// pooled bin has expected count at least 5.
pub fn chi_square_gof(observed: &[usize], probs: &[f64]) -> ChiSquareResult {
    assert_eq!(observed.len(), probs.len());
    let total: usize = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * total as f64;
        if e_acc >= 5.0 {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => bins.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = bins
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic)
    };
    ChiSquareResult { statistic, dof, p_value }
}

/// Poisson probabilities `P(N = k)` for `k < kmax` plus the upper tail mass
/// `P(N >= kmax)` in the last slot.
pub fn poisson_probs(lambda: f64, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut pk = (-lambda).exp();
    let mut acc = 0.0;
    for k in 0..kmax {
        out.push(pk);
        acc += pk;
        pk *= lambda / (k + 1) as f64;
    }
    out.push((1.0 - acc).max(0.0));
    out
}

/// Empirical quantile with linear interpolation on a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted_finite(xs), 0.5)
}

/// Pearson correlation with the large-sample standard error `(1 - r^2)/sqrt(n)`.
pub fn correlation(x: &[f64], y: &[f64]) -> Estimate {
    let n = x.len().min(y.len());
    if n < 3 {
        return Estimate { value: f64::NAN, se: f64::NAN };
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Estimate { value: 0.0, se: 0.0 };
    }
    let r = sxy / (sxx * syy).sqrt();
    Estimate { value: r, se: (1.0 - r * r) / (n as f64).sqrt() }
}
