//! Records: record counts within a cluster, record times of a series, the
//! record measure of a cluster point process and its compound Poisson limit.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusters::ClusterPP;
use crate::error::{invalid, LabError, Result};
use crate::limitpp::{LimitPointProcess, QSampler};
use crate::models::ModelSpec;
use crate::rng::{derive_seed, stream};
use crate::seqspace::Cluster;
use crate::stats::{chi_square_gof, poisson_probs, proportion, ChiSquareResult, Estimate};

/// Counting measure on `(0, inf)`: atoms `(time, multiplicity)` with strictly
/// increasing times and multiplicities at least one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeasure {
    pub atoms: Vec<(f64, usize)>,
}

impl RecordMeasure {
    pub fn new(atoms: Vec<(f64, usize)>) -> Result<Self> {
        if atoms.iter().any(|&(t, m)| !(t > 0.0) || m == 0) {
            return Err(invalid("record atoms need positive times and multiplicities"));
        }
        if atoms.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("record atom times must increase strictly"));
        }
        Ok(Self { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> usize {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,multiplicity\n");
        for (t, m) in &self.atoms {
            s.push_str(&format!("{t},{m}\n"));
        }
        s
    }
}

/// `R^x(y)`: coordinates exceeding both `y` and every earlier coordinate.
/// Ties are not records.
pub fn cluster_records(x: &Cluster, y: f64) -> usize {
    let mut running = y;
    let mut count = 0;
    for &v in x.values() {
        if v > running {
            count += 1;
            running = v;
        }
    }
    count
}

/// 1-based indices `i` with `X_i > max_{j<i} X_j`; the first index is
/// always a record.
pub fn series_record_times(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > running {
            out.push(i + 1);
            running = v;
        }
    }
    out
}

/// Anything that can be read as a list of `(time, cluster)` points.
pub trait ClusterPoints {
    fn cluster_points(&self) -> Vec<(f64, Cluster)>;
}

impl ClusterPoints for ClusterPP {
    fn cluster_points(&self) -> Vec<(f64, Cluster)> {
        self.points.clone()
    }
}

impl ClusterPoints for LimitPointProcess {
    fn cluster_points(&self) -> Vec<(f64, Cluster)> {
        self.points.iter().map(|pt| (pt.t, pt.cluster())).collect()
    }
}

impl ClusterPoints for [(f64, Cluster)] {
    fn cluster_points(&self) -> Vec<(f64, Cluster)> {
        self.to_vec()
    }
}

/// `R_gamma`: at each cluster time, the records of the cluster above the
/// running maximum of earlier sup-norms. Atoms of multiplicity zero are
/// dropped.
pub fn record_pp_from_clusters<P: ClusterPoints + ?Sized>(pp: &P) -> Result<RecordMeasure> {
    let mut points = pp.cluster_points();
    if points.iter().any(|(_, c)| c.values().iter().any(|v| *v < 0.0)) {
        return Err(LabError::Domain("records need nonnegative cluster coordinates".into()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    if points.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(invalid("cluster times must be distinct"));
    }
    let mut running = 0.0f64;
    let mut atoms = Vec::new();
    for (t, c) in &points {
        let m = cluster_records(c, running);
        if m > 0 {
            atoms.push((*t, m));
        }
        running = running.max(c.sup_norm());
    }
    RecordMeasure::new(atoms)
}

fn check_window(s: f64, t: f64) -> Result<()> {
    if s == 0.0 {
        return Err(LabError::InfiniteIntensity("record times accumulate at 0; need s > 0".into()));
    }
    if !(s > 0.0 && t >= s && t.is_finite()) {
        return Err(invalid(format!("record window needs 0 < s <= T, got [{s}, {t}]")));
    }
    Ok(())
}

/// One draw of `kappa = R^Q(1 / varsigma)` with `varsigma` Pareto(`alpha`).
fn draw_kappa(alpha: f64, q: &QSampler, rng: &mut crate::rng::LabRng) -> usize {
    let shape = q.sample(rng);
    let u: f64 = 1.0 - rng.random::<f64>();
    cluster_records(&shape, u.powf(1.0 / alpha))
}

/// The compound scale-invariant Poisson limit on `[s, T]`: `Poisson(ln(T/s))`
/// atoms at times `s (T/s)^U` carrying i.i.d. multiplicities
/// `R^Q(1/varsigma)`.
pub fn simulate_limit_records(alpha: f64, q: &QSampler, s: f64, t: f64, seed: u64) -> Result<RecordMeasure> {
    check_window(s, t)?;
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let lambda = (t / s).ln();
    let mut rng = stream(seed, 0);
    let count = if lambda > 0.0 {
        Poisson::new(lambda).map_err(|e| invalid(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count).map(|_| s * (t / s).powf(rng.random::<f64>())).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let atoms = times
        .into_iter()
        .map(|time| (time, draw_kappa(alpha, q, &mut rng)))
        .filter(|a| a.1 > 0)
        .collect();
    RecordMeasure::new(atoms)
}

/// Exact law of `kappa = R^Q(1/varsigma)` over a finitely supported shape
/// law with nonnegative shapes of maximum one: `P(kappa >= k)` is
/// `r^alpha` for the `k`-th largest record value `r` of the shape read
/// from zero. Entry `k` of the result is `P(kappa = k)`.
pub fn kappa_law(alpha: f64, q: &QSampler) -> Result<Vec<f64>> {
    let mut law = vec![0.0];
    for (shape, w) in q.support() {
        if shape.values().iter().any(|v| *v < 0.0) || (shape.sup_norm() - 1.0).abs() > 1e-12 {
            return Err(LabError::Domain("kappa law needs nonnegative shapes with maximum 1".into()));
        }
        let mut running = 0.0;
        let mut values = Vec::new();
        for &v in shape.values() {
            if v > running {
                values.push(v);
                running = v;
            }
        }
        // values[m-k] is the k-th largest record value
        let m = values.len();
        if law.len() < m + 1 {
            law.resize(m + 1, 0.0);
        }
        for k in 1..=m {
            let at_least = values[m - k].powf(alpha);
            let above = if k < m { values[m - k - 1].powf(alpha) } else { 0.0 };
            law[k] += w * (at_least - above);
        }
    }
    Ok(law)
}

/// `{1: 1 - c^-alpha, 2: c^-alpha}` for the moving average
/// `X_t = xi_t + c xi_{t-1}`, `c > 1`.
pub fn ma1_kappa_law(c: f64, alpha: f64) -> Result<Vec<(usize, f64)>> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(LabError::Domain(format!("needs c > 1, got {c}")));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let two = c.powf(-alpha);
    Ok(vec![(1, 1.0 - two), (2, two)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordExperimentConfig {
    pub n_grid: Vec<usize>,
    /// Scaled time window `[s, T]`; series of length `ceil(T n)` are simulated.
    pub window: (f64, f64),
    pub replications: usize,
    /// Records in the same block of this length form one atom.
    pub block_length: usize,
    #[serde(default = "default_alpha_level")]
    pub level: f64,
}

fn default_alpha_level() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordExperimentRow {
    pub n: usize,
    pub atoms: usize,
    pub mean_atom_count: Estimate,
    pub atom_count_test: ChiSquareResult,
    /// Observed `P(kappa = k)` for `k = 1, 2, ...`
    pub multiplicity_freq: Vec<f64>,
    pub multiplicity_test: ChiSquareResult,
    pub p_kappa2: Estimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordExperimentReport {
    pub rows: Vec<RecordExperimentRow>,
    pub expected_atoms: f64,
    /// Limit `P(kappa = k)`, index `k`.
    pub kappa_law: Vec<f64>,
    /// Nonzero shape coordinates that tie; the limit assumes none.
    pub tie_warning: bool,
    pub pass: bool,
}

/// Record atoms of one series in the scaled window, records of the same
/// block merged.
fn series_record_atoms(values: &[f64], n: usize, s: f64, t: f64, block: usize) -> Vec<(f64, usize)> {
    let mut atoms: Vec<(usize, usize)> = Vec::new();
    for i in series_record_times(values) {
        let time = i as f64 / n as f64;
        if time <= s || time > t {
            continue;
        }
        let b = (i - 1) / block;
        match atoms.last_mut() {
            Some(last) if last.0 == b => last.1 += 1,
            _ => atoms.push((b, 1)),
        }
    }
    atoms.into_iter().map(|(b, m)| ((b + 1) as f64 * block as f64 / n as f64, m)).collect()
}

/// Record measures of simulated series on a scaled window against the
/// compound Poisson limit: the per-replication atom count against
/// `Poisson(ln(T/s))` and the pooled multiplicities against the exact law of
/// `kappa`, both by chi-square.
pub fn record_convergence_experiment(
    model: &ModelSpec,
    config: &RecordExperimentConfig,
    seed: u64,
) -> Result<RecordExperimentReport> {
    model.validate()?;
    if !model.is_nonnegative() {
        return Err(LabError::Domain("record experiments need a nonnegative model".into()));
    }
    let (s, t) = config.window;
    check_window(s, t)?;
    let alpha = model.alpha().ok_or_else(|| LabError::Unsupported("tail index unknown".into()))?;
    let q = QSampler::from_model(model)?;
    let law = kappa_law(alpha, &q)?;
    let tie_warning = match model {
        ModelSpec::Linear { model } => !model.has_distinct_coefficients(),
        _ => false,
    };
    let expected_atoms = (t / s).ln();
    if config.replications == 0 || t == s {
        return Ok(RecordExperimentReport { rows: Vec::new(), expected_atoms, kappa_law: law, tie_warning, pass: true });
    }
    if config.block_length == 0 {
        return Err(invalid("block_length must be positive"));
    }
    let rows = config
        .n_grid
        .iter()
        .map(|&n| {
            let len = (t * n as f64).ceil() as usize;
            let nseed = derive_seed(seed, n as u64);
            let per_rep: Vec<Vec<usize>> = (0..config.replications)
                .into_par_iter()
                .map(|r| {
                    let x = model.simulate(len, derive_seed(nseed, r as u64))?;
                    Ok(series_record_atoms(&x.values, n, s, t, config.block_length)
                        .into_iter()
                        .map(|a| a.1)
                        .collect())
                })
                .collect::<Result<_>>()?;
            Ok(summarize(n, &per_rep, expected_atoms, &law, config.level))
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(RecordExperimentReport { rows, expected_atoms, kappa_law: law, tie_warning, pass })
}

fn summarize(n: usize, per_rep: &[Vec<usize>], lambda: f64, law: &[f64], level: f64) -> RecordExperimentRow {
    let kmax = per_rep.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let mut counts = vec![0usize; kmax + 1];
    for r in per_rep {
        counts[r.len()] += 1;
    }
    let atom_count_test = chi_square_gof(&counts, &poisson_probs(lambda, kmax));
    let mult: Vec<usize> = per_rep.iter().flatten().copied().collect();
    let mmax = mult.iter().copied().max().unwrap_or(1).max(law.len() - 1);
    let mut observed = vec![0usize; mmax];
    for &m in &mult {
        observed[m - 1] += 1;
    }
    let probs: Vec<f64> = (1..=mmax).map(|k| law.get(k).copied().unwrap_or(0.0)).collect();
    let multiplicity_test = chi_square_gof(&observed, &probs);
    let total = mult.len();
    let multiplicity_freq = observed.iter().map(|&o| o as f64 / total.max(1) as f64).collect();
    let reps = per_rep.len() as f64;
    let mean = mult.len() as f64 / reps;
    let var = per_rep.iter().map(|r| (r.len() as f64 - mean).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
    RecordExperimentRow {
        n,
        atoms: total,
        mean_atom_count: Estimate { value: mean, se: (var / reps).sqrt() },
        pass: atom_count_test.p_value > level && multiplicity_test.p_value > level,
        atom_count_test,
        multiplicity_freq,
        multiplicity_test,
        p_kappa2: proportion(observed.get(1).copied().unwrap_or(0), total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearModel, RegVarLaw};

    fn c(v: &[f64]) -> Cluster {
        Cluster::new(v.to_vec())
    }

    #[test]
    fn cluster_record_examples() {
        assert_eq!(cluster_records(&c(&[1.0, 2.0, 3.0]), 0.0), 3);
        assert_eq!(cluster_records(&c(&[3.0, 2.0, 1.0]), 0.0), 1);
        assert_eq!(cluster_records(&c(&[1.0, 2.0, 3.0]), 2.5), 1);
        assert_eq!(cluster_records(&c(&[0.0, 0.0]), 0.0), 0);
        assert_eq!(cluster_records(&c(&[1.0, 1.0]), 0.0), 1);
    }

    #[test]
    fn series_record_examples() {
        assert_eq!(series_record_times(&[1.0, 2.0, 3.0]), vec![1, 2, 3]);
        assert_eq!(series_record_times(&[5.0; 4]), vec![1]);
        assert!(series_record_times(&[]).is_empty());
    }

    #[test]
    fn record_pp_examples() {
        let one = [(0.5, c(&[1.0, 3.0, 2.0, 4.0]))];
        assert_eq!(record_pp_from_clusters(&one[..]).unwrap().atoms, vec![(0.5, 3)]);
        let two = [(0.2, c(&[5.0])), (0.7, c(&[1.0, 4.0]))];
        assert_eq!(record_pp_from_clusters(&two[..]).unwrap().atoms, vec![(0.2, 1)]);
        let inc = [(0.1, c(&[1.0])), (0.2, c(&[2.0])), (0.3, c(&[3.0]))];
        assert_eq!(record_pp_from_clusters(&inc[..]).unwrap().atoms, vec![(0.1, 1), (0.2, 1), (0.3, 1)]);
        let dup = [(0.1, c(&[1.0])), (0.1, c(&[2.0]))];
        assert!(record_pp_from_clusters(&dup[..]).is_err());
        let neg = [(0.1, c(&[-1.0]))];
        assert!(record_pp_from_clusters(&neg[..]).is_err());
    }

    #[test]
    fn limit_record_window() {
        let q = QSampler::single_point(1.0).unwrap();
        assert!(matches!(simulate_limit_records(1.0, &q, 0.0, 1.0, 0), Err(LabError::InfiniteIntensity(_))));
        assert!(simulate_limit_records(1.0, &q, 2.0, 2.0, 0).unwrap().is_empty());
        let r = simulate_limit_records(1.0, &q, 1.0, 1e6, 3).unwrap();
        assert!(r.atoms.iter().all(|a| a.1 == 1 && a.0 >= 1.0 && a.0 <= 1e6));
    }

    #[test]
    fn kappa_laws() {
        assert_eq!(ma1_kappa_law(2.0, 1.0).unwrap(), vec![(1, 0.5), (2, 0.5)]);
        assert_eq!(ma1_kappa_law(2.0, 2.0).unwrap(), vec![(1, 0.75), (2, 0.25)]);
        assert!(ma1_kappa_law(1.0, 1.0).is_err());
        let big = ma1_kappa_law(1e12, 1.0).unwrap();
        assert!(big[1].1 < 1e-11);
        for (cc, a) in [(2.0, 1.0), (3.0, 0.7), (1.5, 2.0)] {
            let m = LinearModel::causal(&[1.0, cc], RegVarLaw::new(a, 1.0).unwrap()).unwrap();
            let q = QSampler::from_model(&ModelSpec::Linear { model: m }).unwrap();
            let law = kappa_law(a, &q).unwrap();
            let ma1 = ma1_kappa_law(cc, a).unwrap();
            assert!((law[1] - ma1[0].1).abs() < 1e-14 && (law[2] - ma1[1].1).abs() < 1e-14);
        }
    }

    #[test]
    fn block_merging() {
        // records at 1, 2, 5, 9 with n = 10, blocks of 4 in window (0.1, 1]
        let x = [1.0, 2.0, 0.5, 0.1, 3.0, 0.0, 0.0, 0.0, 4.0, 0.0];
        let atoms = series_record_atoms(&x, 10, 0.1, 1.0, 4);
        assert_eq!(atoms, vec![(0.4, 1), (0.8, 1), (1.2, 1)]);
        let atoms = series_record_atoms(&x, 10, 0.0, 1.0, 4);
        assert_eq!(atoms[0], (0.4, 2));
    }

    #[test]
    fn degenerate_window_gives_empty_report() {
        let model = ModelSpec::Iid { law: RegVarLaw::new(1.0, 1.0).unwrap() };
        let cfg = RecordExperimentConfig { n_grid: vec![100], window: (1.0, 1.0), replications: 5, block_length: 1, level: 0.01 };
        assert!(record_convergence_experiment(&model, &cfg, 0).unwrap().rows.is_empty());
        let signed = ModelSpec::Iid { law: RegVarLaw::new(1.0, 0.5).unwrap() };
        assert!(record_convergence_experiment(&signed, &cfg, 0).is_err());
    }
}
