//! The Poisson limit of the cluster point process: points `(T_i, P_i Q_i)`
//! with `T` uniform in time, `P` Pareto above a floor and `Q` an independent
//! unit-norm shape.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusters::{cluster_functional_nu, cluster_functional_nu_se, BlockingPlan, ClusterLawPoint};
use crate::error::{domain, invalid, LabError, Result};
use crate::functionals::{ClusterFunctional, Functional};
use crate::models::{ModelSpec, SeriesSample};
use crate::quad::Composite;
use crate::rng::{derive_seed, stream, LabRng};
use crate::seqspace::{polar, Cluster};
use crate::stats::{mean_se, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedShape {
    pub shape: Cluster,
    pub weight: f64,
}

/// Law of the unit-norm cluster shape `Q`. Every variant has finite support;
/// shapes are renormalized to sup-norm 1 on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QSampler {
    /// `shape` with probability `p`, `-shape` otherwise.
    FixedShape { shape: Cluster, p: f64 },
    /// Finitely many shapes with positive weights (renormalized to sum 1).
    Discrete { atoms: Vec<WeightedShape> },
    /// Uniform resampling of observed shapes.
    Empirical { shapes: Vec<Cluster> },
}

fn unit(shape: &Cluster) -> Result<Cluster> {
    polar(shape).map(|(_, q)| q).map_err(|_| domain("cluster shapes must be nonzero"))
}

impl QSampler {
    pub fn fixed(shape: Cluster, p: f64) -> Result<Self> {
        QSampler::FixedShape { shape, p }.normalized()
    }

    pub fn single_point(p: f64) -> Result<Self> {
        Self::fixed(Cluster::single(1.0), p)
    }

    pub fn discrete(atoms: Vec<WeightedShape>) -> Result<Self> {
        QSampler::Discrete { atoms }.normalized()
    }

    pub fn empirical(shapes: Vec<Cluster>) -> Result<Self> {
        QSampler::Empirical { shapes }.normalized()
    }

    /// Shapes observed in blocks, as emitted by the empirical cluster law.
    pub fn from_cluster_law(points: &[ClusterLawPoint]) -> Result<Self> {
        Self::empirical(points.iter().map(|p| p.q.clone()).collect())
    }

    /// Closed-form shape law of an iid or linear model.
    pub fn from_model(model: &ModelSpec) -> Result<Self> {
        let (shape, p) = model
            .q_shape()
            .ok_or_else(|| LabError::Unsupported("cluster shape is not known in closed form for this model".into()))?;
        Self::fixed(shape, p)
    }

    /// Validates the parameters and rescales every shape to sup-norm 1.
    pub fn normalized(self) -> Result<Self> {
        Ok(match self {
            QSampler::FixedShape { shape, p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("sign probability must lie in [0, 1], got {p}")));
                }
                QSampler::FixedShape { shape: unit(&shape)?, p }
            }
            QSampler::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(invalid("discrete shape law needs at least one atom"));
                }
                if atoms.iter().any(|a| !(a.weight > 0.0) || !a.weight.is_finite()) {
                    return Err(invalid("shape weights must be positive and finite"));
                }
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                let atoms = atoms
                    .into_iter()
                    .map(|a| Ok(WeightedShape { shape: unit(&a.shape)?, weight: a.weight / total }))
                    .collect::<Result<_>>()?;
                QSampler::Discrete { atoms }
            }
            QSampler::Empirical { shapes } => {
                if shapes.is_empty() {
                    return Err(invalid("empirical shape law needs at least one shape"));
                }
                QSampler::Empirical { shapes: shapes.iter().map(unit).collect::<Result<_>>()? }
            }
        })
    }

    pub fn sample(&self, rng: &mut LabRng) -> Cluster {
        match self {
            QSampler::FixedShape { shape, p } => {
                if rng.random::<f64>() < *p {
                    shape.clone()
                } else {
                    shape.scaled(-1.0)
                }
            }
            QSampler::Discrete { atoms } => {
                let mut u = rng.random::<f64>();
                for a in atoms {
                    if u < a.weight {
                        return a.shape.clone();
                    }
                    u -= a.weight;
                }
                atoms[atoms.len() - 1].shape.clone()
            }
            QSampler::Empirical { shapes } => shapes[rng.random_range(0..shapes.len())].clone(),
        }
    }

    /// The law as a list of (shape, probability); zero-probability atoms dropped.
    pub fn support(&self) -> Vec<(Cluster, f64)> {
        match self {
            QSampler::FixedShape { shape, p } => [(shape.clone(), *p), (shape.scaled(-1.0), 1.0 - p)]
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .collect(),
            QSampler::Discrete { atoms } => atoms.iter().map(|a| (a.shape.clone(), a.weight)).collect(),
            QSampler::Empirical { shapes } => {
                let w = 1.0 / shapes.len() as f64;
                shapes.iter().map(|s| (s.clone(), w)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub t: f64,
    pub p: f64,
    pub q: Cluster,
}

impl LimitPoint {
    /// The cluster `P Q`.
    pub fn cluster(&self) -> Cluster {
        self.q.scaled(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPointProcess {
    /// Sorted by time.
    pub points: Vec<LimitPoint>,
    pub theta: f64,
    pub alpha: f64,
    pub p_min: f64,
    pub t_max: f64,
}

impl LimitPointProcess {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points with magnitude above `p_floor`.
    pub fn thinned(&self, p_floor: f64) -> Result<Self> {
        if p_floor < self.p_min {
            return Err(invalid("cannot thin below the sampling floor"));
        }
        Ok(Self {
            points: self.points.iter().filter(|pt| pt.p > p_floor).cloned().collect(),
            p_min: p_floor,
            ..self.clone()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,P,Q\n");
        for pt in &self.points {
            let q = serde_json::to_string(&pt.q).expect("finite cluster");
            s.push_str(&format!("{},{},\"{}\"\n", pt.t, pt.p, q.replace('"', "\"\"")));
        }
        s
    }
}

/// Expected number of points of the truncated limit process.
pub fn limit_intensity(theta: f64, alpha: f64, p_min: f64, t_max: f64) -> f64 {
    t_max * theta * p_min.powf(-alpha)
}

pub fn sample_limit_pp(
    theta: f64,
    alpha: f64,
    q: &QSampler,
    p_min: f64,
    t_max: f64,
    seed: u64,
) -> Result<LimitPointProcess> {
    if !(theta > 0.0) || !(alpha > 0.0) || !(t_max > 0.0) {
        return Err(invalid("theta, alpha and t_max must be positive"));
    }
    if p_min == 0.0 {
        return Err(LabError::InfiniteIntensity("magnitude floor p_min = 0".into()));
    }
    if !(p_min > 0.0) {
        return Err(invalid("p_min must be positive"));
    }
    let mut rng = stream(seed, 0);
    let lambda = limit_intensity(theta, alpha, p_min, t_max);
    let count = Poisson::new(lambda)
        .map_err(|e| invalid(format!("point intensity {lambda}: {e}")))?
        .sample(&mut rng) as usize;
    let mut points: Vec<LimitPoint> = (0..count)
        .map(|_| {
            let t = t_max * rng.random::<f64>();
            let u = 1.0 - rng.random::<f64>();
            let p = p_min * u.powf(-1.0 / alpha);
            LimitPoint { t, p, q: q.sample(&mut rng) }
        })
        .collect();
    points.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(LimitPointProcess { points, theta, alpha, p_min, t_max })
}

const QUAD_ORDER: usize = 10;
const QUAD_PANEL: f64 = 0.5;
const TAIL_DECAY: f64 = 40.0;

/// `int_eps^inf f(y q) alpha y^{-alpha-1} dy` for one unit-norm shape, by
/// Gauss–Legendre in `s = ln(y / eps)` split at the functional's breakpoints.
fn magnitude_integral(f: &dyn ClusterFunctional, q: &Cluster, alpha: f64, eps: f64, rule: &Composite) -> f64 {
    let xs = q.values();
    let s_max = TAIL_DECAY / (alpha - f.growth());
    let mut cuts: Vec<f64> = f
        .scale_breakpoints(xs)
        .into_iter()
        .filter(|y| *y > eps)
        .map(|y| (y / eps).ln())
        .filter(|s| *s < s_max)
        .collect();
    cuts.push(0.0);
    cuts.push(s_max);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut scratch = vec![0.0; xs.len()];
    let mut integrand = |s: f64| {
        let y = eps * s.exp();
        for (d, x) in scratch.iter_mut().zip(xs) {
            *d = y * x;
        }
        f.eval_slice(&scratch) * alpha * (-alpha * s).exp()
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / QUAD_PANEL).ceil().max(1.0) as usize;
        total += rule.integrate(&mut integrand, w[0], w[1], pieces);
    }
    total * eps.powf(-alpha)
}

/// `theta * int_0^inf E[f(y Q)] alpha y^{-alpha-1} dy`.
///
/// Closed forms are used when the functional has one. Otherwise the
/// magnitude integral is computed by quadrature; the expectation over `Q` is
/// exact when `mc_samples` is 0 or the shape law has at most that many
/// atoms, and Monte Carlo otherwise.
pub fn nu_limit(
    f: &dyn ClusterFunctional,
    theta: f64,
    alpha: f64,
    q: &QSampler,
    mc_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(theta > 0.0) || !(alpha > 0.0) {
        return Err(invalid("theta and alpha must be positive"));
    }
    let eps = f
        .floor()
        .ok_or_else(|| invalid(format!("functional {} has no support floor", f.name())))?;
    if let Some(v) = f.analytic_nu(theta, alpha) {
        return Ok(Estimate::exact(v));
    }
    if eps.is_infinite() {
        return Ok(Estimate::exact(0.0));
    }
    if f.growth() >= alpha {
        return Err(domain(format!("{} is not integrable against the limit measure at alpha={alpha}", f.name())));
    }
    let rule = Composite::new(QUAD_ORDER);
    let support = q.support();
    if mc_samples == 0 || support.len() <= mc_samples {
        let v: f64 = support.iter().map(|(s, w)| w * magnitude_integral(f, s, alpha, eps, &rule)).sum();
        return Ok(Estimate::exact(theta * v));
    }
    let mut rng = stream(seed, 0);
    let vals: Vec<f64> = (0..mc_samples)
        .map(|_| magnitude_integral(f, &q.sample(&mut rng), alpha, eps, &rule))
        .collect();
    let e = mean_se(&vals);
    Ok(Estimate { value: theta * e.value, se: theta * e.se })
}

/// Parameters of a candidate limit process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub theta: f64,
    pub alpha: f64,
    pub q: QSampler,
}

impl LimitSpec {
    /// Closed-form limit of an iid or linear model.
    pub fn from_model(model: &ModelSpec) -> Result<Self> {
        let theta = model.theta().ok_or_else(|| LabError::Unsupported("extremal index not known in closed form".into()))?;
        let alpha = model.alpha().ok_or_else(|| LabError::Unsupported("tail index unknown".into()))?;
        Ok(Self { theta, alpha, q: QSampler::from_model(model)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub functional: String,
    pub empirical: Estimate,
    pub limit: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub n: usize,
    pub r_n: usize,
    pub u: f64,
    pub replications: usize,
}

impl ComparisonReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.z.abs()))
    }
}

fn check_positive_class(functionals: &[Functional]) -> Result<()> {
    for f in functionals {
        if f.floor().is_none() {
            return Err(invalid(format!("functional {} has no support floor", f.name())));
        }
    }
    Ok(())
}

fn assemble(
    per_rep: Vec<Vec<f64>>,
    single: Option<Vec<Estimate>>,
    plan: &BlockingPlan,
    limit: &LimitSpec,
    functionals: &[Functional],
    mc_samples: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    let replications = per_rep.len();
    let rows = functionals
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let empirical = match &single {
                Some(e) => e[j],
                None => mean_se(&per_rep.iter().map(|r| r[j]).collect::<Vec<_>>()),
            };
            let lim = nu_limit(f, limit.theta, limit.alpha, &limit.q, mc_samples, derive_seed(seed, j as u64))?;
            Ok(ComparisonRow { functional: f.name(), empirical, limit: lim, z: empirical.z_against(&lim) })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonReport { rows, n: plan.n, r_n: plan.r_n, u: plan.u, replications })
}

/// Empirical `nu_n(f)` against the limit `nu(f)` for each functional. With
/// several samples the empirical standard error is taken across samples;
/// with one sample blocks are treated as independent.
pub fn compare_empirical_limit(
    samples: &[SeriesSample],
    plan: &BlockingPlan,
    limit: &LimitSpec,
    functionals: &[Functional],
    mc_samples: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    check_positive_class(functionals)?;
    if samples.is_empty() {
        return Err(invalid("no samples to compare"));
    }
    let per_rep = samples
        .iter()
        .map(|s| functionals.iter().map(|f| cluster_functional_nu(s, plan, f)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let single = if samples.len() == 1 {
        Some(functionals.iter().map(|f| cluster_functional_nu_se(&samples[0], plan, f)).collect::<Result<_>>()?)
    } else {
        None
    };
    assemble(per_rep, single, plan, limit, functionals, mc_samples, seed)
}

/// As [`compare_empirical_limit`] over fresh replications of `model`,
/// without keeping the series in memory.
pub fn compare_model_limit(
    model: &ModelSpec,
    plan: &BlockingPlan,
    limit: &LimitSpec,
    functionals: &[Functional],
    replications: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    check_positive_class(functionals)?;
    if replications < 2 {
        return Err(invalid("need at least two replications"));
    }
    let per_rep = (0..replications)
        .into_par_iter()
        .map(|r| {
            let s = model.simulate(plan.n, derive_seed(seed, r as u64))?;
            functionals.iter().map(|f| cluster_functional_nu(&s, plan, f)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(per_rep, None, plan, limit, functionals, mc_samples, derive_seed(seed, u64::MAX))
}
