//! Empirical cluster machinery: blocking a series into the point process of
//! scaled blocks, extremal-index and anticlustering diagnostics, the empirical
//! law of (cluster size, cluster shape), and cluster functionals.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::functionals::ClusterFunctional;
use crate::models::{ModelSpec, SeriesSample};
use crate::rng::{derive_seed, stream};
use crate::seqspace::Cluster;
use crate::stats::{ks_pvalue, median, proportion, Estimate};

/// How a series of length `n` is cut into `k_n = floor(n / r_n)` blocks and
/// scaled by `a_n`. Exceedance thresholds are `a_n * u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockingPlan {
    pub n: usize,
    pub r_n: usize,
    pub k_n: usize,
    pub a_n: f64,
    pub u: f64,
}

impl BlockingPlan {
    pub fn new(n: usize, r_n: usize, a_n: f64, u: f64) -> Result<Self> {
        if r_n == 0 || r_n > n {
            return Err(invalid(format!("block length must satisfy 1 <= r_n <= n, got r_n={r_n}, n={n}")));
        }
        if !(a_n > 0.0) || !(u > 0.0) {
            return Err(invalid("a_n and u must be positive"));
        }
        Ok(Self { n, r_n, k_n: n / r_n, a_n, u })
    }

    /// `r_n = floor(sqrt(n))`, `u = 1`.
    pub fn with_default_blocks(n: usize, a_n: f64) -> Result<Self> {
        Self::new(n, ((n as f64).sqrt().floor() as usize).max(1), a_n, 1.0)
    }

    pub fn threshold(&self) -> f64 {
        self.a_n * self.u
    }

    fn check_sample(&self, sample: &SeriesSample) -> Result<()> {
        if sample.len() != self.n {
            return Err(invalid(format!(
                "blocking plan expects n={}, sample has {}",
                self.n,
                sample.len()
            )));
        }
        Ok(())
    }

    fn blocks<'a>(&self, values: &'a [f64]) -> impl Iterator<Item = &'a [f64]> {
        values[..self.k_n * self.r_n].chunks_exact(self.r_n)
    }
}

/// Scaled blocks `X_{n,i}` placed at times `i / k_n`; zero blocks omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPP {
    pub points: Vec<(f64, Cluster)>,
    pub plan: BlockingPlan,
}

impl ClusterPP {
    pub fn iter_points(&self) -> impl Iterator<Item = (f64, &Cluster)> {
        self.points.iter().map(|(t, c)| (*t, c))
    }
}

pub fn block_series(sample: &SeriesSample, plan: &BlockingPlan) -> Result<ClusterPP> {
    plan.check_sample(sample)?;
    let inv = 1.0 / plan.a_n;
    let points = plan
        .blocks(&sample.values)
        .enumerate()
        .filter_map(|(i, block)| {
            let c = Cluster::with_offset(
                block.iter().map(|v| v * inv).collect(),
                (i * plan.r_n) as i64,
            );
            (!c.is_zero()).then(|| ((i + 1) as f64 / plan.k_n as f64, c))
        })
        .collect();
    Ok(ClusterPP { points, plan: *plan })
}

/// Exceedance counts behind the extremal-index estimate; counts from
/// independent replications can be merged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaCounts {
    pub blocks: usize,
    pub block_exceedances: usize,
    pub observations: usize,
    pub marginal_exceedances: usize,
    pub r_n: usize,
}

impl ThetaCounts {
    pub fn from_sample(sample: &SeriesSample, plan: &BlockingPlan) -> Result<Self> {
        plan.check_sample(sample)?;
        let thr = plan.threshold();
        let mut counts = ThetaCounts { r_n: plan.r_n, ..Default::default() };
        for block in plan.blocks(&sample.values) {
            let exc = block.iter().filter(|v| v.abs() > thr).count();
            counts.blocks += 1;
            counts.observations += block.len();
            counts.marginal_exceedances += exc;
            counts.block_exceedances += usize::from(exc > 0);
        }
        Ok(counts)
    }

    pub fn merge(mut self, other: &ThetaCounts) -> Self {
        self.blocks += other.blocks;
        self.block_exceedances += other.block_exceedances;
        self.observations += other.observations;
        self.marginal_exceedances += other.marginal_exceedances;
        self.r_n = self.r_n.max(other.r_n);
        self
    }

    pub fn estimate(&self) -> Result<ThetaEstimate> {
        if self.marginal_exceedances == 0 {
            return Err(LabError::Insufficient {
                what: "marginal exceedances for the extremal index",
                got: 0,
                need: 1,
            });
        }
        let block_freq = self.block_exceedances as f64 / self.blocks as f64;
        let marg_freq = self.marginal_exceedances as f64 / self.observations as f64;
        Ok(ThetaEstimate {
            estimate: block_freq / (self.r_n as f64 * marg_freq),
            block_exceedances: self.block_exceedances,
            marginal_exceedances: self.marginal_exceedances,
            low_count_warning: self.block_exceedances < 30,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub estimate: f64,
    pub block_exceedances: usize,
    pub marginal_exceedances: usize,
    /// Fewer than 30 blocks with an exceedance.
    pub low_count_warning: bool,
}

/// Block-maximum exceedance frequency over `r_n` times the marginal
/// exceedance frequency, at threshold `a_n u`.
pub fn empirical_theta(sample: &SeriesSample, plan: &BlockingPlan) -> Result<ThetaEstimate> {
    ThetaCounts::from_sample(sample, plan)?.estimate()
}

/// Pooled extremal-index estimate over independent replications of `model`.
pub fn empirical_theta_replicated(
    model: &ModelSpec,
    plan: &BlockingPlan,
    replications: usize,
    seed: u64,
) -> Result<ThetaEstimate> {
    let counts: Vec<ThetaCounts> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let s = model.simulate(plan.n, derive_seed(seed, r as u64))?;
            ThetaCounts::from_sample(&s, plan)
        })
        .collect::<Result<_>>()?;
    counts
        .iter()
        .fold(ThetaCounts::default(), |acc, c| acc.merge(c))
        .estimate()
}

/// Conditional frequency of another exceedance at lags `m <= |i| <= r_n`
/// given an exceedance at lag 0, over anchors whose full window fits.
pub fn anticluster_diagnostic(sample: &SeriesSample, plan: &BlockingPlan, m: usize, u: f64) -> Result<Estimate> {
    if m == 0 || m >= plan.r_n {
        return Err(invalid(format!("lag m must satisfy 1 <= m < r_n, got m={m}, r_n={}", plan.r_n)));
    }
    if !(u > 0.0) {
        return Err(invalid("u must be positive"));
    }
    let x = &sample.values;
    let r = plan.r_n;
    let thr = plan.a_n * u;
    let (mut anchors, mut hits) = (0usize, 0usize);
    if x.len() > 2 * r {
        for i in r..(x.len() - r) {
            if x[i].abs() <= thr {
                continue;
            }
            anchors += 1;
            let far = x[i - r..=i - m].iter().chain(&x[i + m..=i + r]).any(|v| v.abs() > thr);
            hits += usize::from(far);
        }
    }
    if anchors == 0 {
        return Err(LabError::Insufficient { what: "exceedance anchors", got: 0, need: 1 });
    }
    Ok(proportion(hits, anchors))
}

/// One qualifying block: `l = M / (a_n u)` and shape `q = block / M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLawPoint {
    pub l: f64,
    pub q: Cluster,
}

/// Blocks whose maximum modulus exceeds `a_n u`, in polar form.
pub fn empirical_cluster_law(sample: &SeriesSample, plan: &BlockingPlan) -> Result<Vec<ClusterLawPoint>> {
    plan.check_sample(sample)?;
    let thr = plan.threshold();
    let out: Vec<ClusterLawPoint> = plan
        .blocks(&sample.values)
        .enumerate()
        .filter_map(|(i, block)| {
            let m = block.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (m > thr).then(|| ClusterLawPoint {
                l: m / thr,
                q: Cluster::with_offset(block.iter().map(|v| v / m).collect(), (i * plan.r_n) as i64),
            })
        })
        .collect();
    if out.is_empty() {
        return Err(LabError::Insufficient { what: "qualifying blocks", got: 0, need: 1 });
    }
    Ok(out)
}

/// CSV export of cluster-law samples: `L` and the JSON-encoded shape.
pub fn cluster_law_csv(points: &[ClusterLawPoint]) -> String {
    let mut s = String::from("L,Q\n");
    for p in points {
        let q = serde_json::to_string(&p.q).expect("finite cluster");
        s.push_str(&format!("{},\"{}\"\n", p.l, q.replace('"', "\"\"")));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n_high: usize,
    pub n_low: usize,
    /// The statistic was constant on the sample.
    pub degenerate: bool,
}

pub const MIN_LQ_PAIRS: usize = 500;

/// Two-sample KS comparison of `g(Q)` on `{L > median}` against
/// `{L <= median}`. Ties in `g` are broken by independent uniform keys drawn
/// from `seed`, which keeps the null distribution of the statistic exact for
/// discrete `g`.
pub fn independence_test_lq(pairs: &[ClusterLawPoint], g: &dyn ClusterFunctional, seed: u64) -> Result<LqTest> {
    if pairs.len() < MIN_LQ_PAIRS {
        return Err(LabError::Insufficient { what: "(L, Q) pairs", got: pairs.len(), need: MIN_LQ_PAIRS });
    }
    let ls: Vec<f64> = pairs.iter().map(|p| p.l).collect();
    let v = median(&ls);
    let mut rng = stream(seed, 0);
    let mut pooled: Vec<(f64, f64, bool)> = pairs
        .iter()
        .map(|p| (g.eval(&p.q), rng.random::<f64>(), p.l > v))
        .collect();
    let n_high = pooled.iter().filter(|p| p.2).count();
    let n_low = pooled.len() - n_high;
    let first = pooled[0].0;
    if pooled.iter().all(|p| p.0 == first) {
        return Ok(LqTest { statistic: 0.0, p_value: 1.0, n_high, n_low, degenerate: true });
    }
    if n_high == 0 || n_low == 0 {
        return Err(LabError::Degenerate("all L values on one side of the median".into()));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (mut ch, mut cl) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    for p in &pooled {
        if p.2 {
            ch += 1;
        } else {
            cl += 1;
        }
        d = d.max((ch as f64 / n_high as f64 - cl as f64 / n_low as f64).abs());
    }
    Ok(LqTest { statistic: d, p_value: ks_pvalue(d, n_high, n_low), n_high, n_low, degenerate: false })
}

/// Per-block values of `f` on the scaled blocks; blocks whose maximum lies
/// below the functional's floor contribute 0 without being materialized.
fn block_values(sample: &[f64], plan: &BlockingPlan, f: &dyn ClusterFunctional) -> Vec<f64> {
    let inv = 1.0 / plan.a_n;
    let floor = f.floor();
    let mut scratch = Vec::with_capacity(plan.r_n);
    plan.blocks(sample)
        .map(|block| {
            if let Some(eps) = floor {
                let m = block.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if m * inv <= eps {
                    return 0.0;
                }
            }
            scratch.clear();
            scratch.extend(block.iter().map(|v| v * inv));
            f.eval_slice(&scratch)
        })
        .collect()
}

/// `nu_n(f) = k_n * mean_i f(X_{n,i})`.
pub fn cluster_functional_nu(sample: &SeriesSample, plan: &BlockingPlan, f: &dyn ClusterFunctional) -> Result<f64> {
    plan.check_sample(sample)?;
    Ok(block_values(&sample.values, plan, f).iter().sum())
}

/// `nu_n(f)` with a standard error that treats blocks as independent.
pub fn cluster_functional_nu_se(sample: &SeriesSample, plan: &BlockingPlan, f: &dyn ClusterFunctional) -> Result<Estimate> {
    plan.check_sample(sample)?;
    let vals = block_values(&sample.values, plan, f);
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(Estimate { value: mean * k, se: (var * k).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceGap {
    /// `E[exp(-N_n(f))] - prod_i E[exp(-f(X_{n,i}))]`
    pub gap: f64,
    pub se: f64,
    pub joint: f64,
    pub product: f64,
    pub replications: usize,
    pub precision_warning: bool,
}

const LAPLACE_BOOTSTRAP: usize = 200;

/// Compares the Laplace functional of the block point process with the one it
/// would have if blocks were independent. The product term averages each
/// block position over replications, which is the expectation under
/// independent per-block resampling across replications. The standard error
/// comes from a bootstrap over replications.
pub fn laplace_gap_diagnostic(
    model: &ModelSpec,
    plan: &BlockingPlan,
    f: &dyn ClusterFunctional,
    replications: usize,
    seed: u64,
) -> Result<LaplaceGap> {
    if f.floor().is_none() {
        return Err(invalid("Laplace gap needs a functional with a support floor"));
    }
    if replications < 2 {
        return Err(invalid("Laplace gap needs at least two replications"));
    }
    // per replication: sparse (block, 1 - exp(-f)) entries
    let reps: Vec<Vec<(usize, f64)>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let s = model.simulate(plan.n, derive_seed(seed, r as u64))?;
            let vals = block_values(&s.values, plan, f);
            if vals.iter().any(|v| *v < 0.0) {
                return Err(invalid("Laplace gap needs a nonnegative functional"));
            }
            Ok(vals
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, 1.0 - (-v).exp()))
                .collect())
        })
        .collect::<Result<_>>()?;

    let gap_of = |idx: &[usize]| -> (f64, f64, f64) {
        let rr = idx.len() as f64;
        let mut joint = 0.0;
        let mut deficits: HashMap<usize, f64> = HashMap::new();
        for &r in idx {
            let mut log_joint = 0.0;
            for &(i, d) in &reps[r] {
                log_joint += (1.0 - d).ln();
                *deficits.entry(i).or_default() += d;
            }
            joint += log_joint.exp();
        }
        joint /= rr;
        let log_prod: f64 = deficits.values().map(|d| (1.0 - d / rr).ln()).sum();
        let product = log_prod.exp();
        (joint - product, joint, product)
    };

    let all: Vec<usize> = (0..replications).collect();
    let (gap, joint, product) = gap_of(&all);
    let mut rng = stream(derive_seed(seed, 0x1a91ace), 0);
    let boots: Vec<f64> = (0..LAPLACE_BOOTSTRAP)
        .map(|_| {
            let idx: Vec<usize> = (0..replications).map(|_| rng.random_range(0..replications)).collect();
            gap_of(&idx).0
        })
        .collect();
    let bm = boots.iter().sum::<f64>() / boots.len() as f64;
    let se = (boots.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    Ok(LaplaceGap {
        gap,
        se,
        joint,
        product,
        replications,
        precision_warning: replications < 50,
    })
}
