use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use tailclust::clusters::{
    cluster_law_csv, empirical_cluster_law, empirical_theta_replicated, independence_test_lq, BlockingPlan,
    ClusterLawPoint,
};
use tailclust::espace::{embed_cadlag, graph, m2_distance, DecoratedPath, Decoration, StepPath};
use tailclust::limitpp::{compare_model_limit, LimitSpec};
use tailclust::models::{quantile_an, GarchModel, LinearModel, ModelSpec, RegVarLaw, SeriesSample};
use tailclust::records::{record_convergence_experiment, RecordExperimentConfig};
use tailclust::rng::{derive_seed, stream};
use tailclust::seqspace::{shift_metric, Cluster};
use tailclust::stats::proportion;
use tailclust::sums::{
    m2_distribution_experiment, partial_sum_path, stable_params_from_forward_theta, stable_params_from_q,
    sup_law_experiment, ForwardSampler, M2ExperimentConfig, SupLawConfig,
};
use tailclust::Functional;

use crate::config::{ExperimentConfig, RecordsConfig, SumsConfig};

pub struct Experiment {
    pub name: &'static str,
    pub description: &'static str,
    pub anchor: &'static str,
}

pub const CATALOG: &[Experiment] = &[
    Experiment {
        name: "theta",
        description: "pooled block estimate of the extremal index against its closed form",
        anchor: "extremal index of a moving average: max|c|^alpha / sum |c|^alpha",
    },
    Experiment {
        name: "cluster-law",
        description: "Pareto law of the block maximum and its independence from the block shape",
        anchor: "block cluster law: L Pareto(alpha), independent of Q",
    },
    Experiment {
        name: "nu",
        description: "cluster functionals of the block point process against the limit measure",
        anchor: "regular variation of the cluster: nu_n(f) -> nu(f)",
    },
    Experiment {
        name: "sums",
        description: "supremum law and window extremes of partial sums against the decorated stable limit",
        anchor: "partial sums converge in E with the M2 topology",
    },
    Experiment {
        name: "records",
        description: "block-merged record times against the compound scale-invariant Poisson limit",
        anchor: "record times: compound Poisson limit with multiplicities R^Q(1/varsigma)",
    },
    Experiment {
        name: "metric-selftest",
        description: "metric axioms for the shift-invariant sequence distance and the M2 graph distance",
        anchor: "shift-quotient sequence space and Hausdorff distance between completed graphs",
    },
    Experiment {
        name: "figures",
        description: "graph segments of partial-sum paths for plotting",
        anchor: "sample paths of S_n for a moving average, a GARCH(1,1) and a block-collapsed path",
    },
];

pub fn lookup(name: &str) -> Option<&'static Experiment> {
    CATALOG.iter().find(|e| e.name == name)
}

/// Output of one run before it is written to disk.
pub struct Outcome {
    pub results: Value,
    pub pass: bool,
    pub files: Vec<(String, String)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn model(cfg: &ExperimentConfig) -> Result<&ModelSpec> {
    cfg.model.as_ref().ok_or_else(|| anyhow!("model: required for experiment {}", cfg.experiment))
}

fn plan_for(cfg: &ExperimentConfig, model: &ModelSpec, n: usize) -> Result<BlockingPlan> {
    let a_n = quantile_an(model, n)?;
    let r_n = cfg.blocking.r_n.unwrap_or(((n as f64).sqrt().floor() as usize).max(1));
    Ok(BlockingPlan::new(n, r_n, a_n, cfg.blocking.u.unwrap_or(1.0))?)
}

fn limit_for(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<LimitSpec> {
    let base = LimitSpec::from_model(model);
    let lc = cfg.limit.as_ref();
    let theta = lc.and_then(|l| l.theta).or(base.as_ref().ok().map(|b| b.theta));
    let alpha = lc.and_then(|l| l.alpha).or(base.as_ref().ok().map(|b| b.alpha));
    let q = lc.and_then(|l| l.q.clone()).or(base.as_ref().ok().map(|b| b.q.clone()));
    match (theta, alpha, q) {
        (Some(theta), Some(alpha), Some(q)) => Ok(LimitSpec { theta, alpha, q }),
        _ => bail!("limit: theta, alpha and q must be given for this model"),
    }
}

/// Fills in every default so the report carries the configuration that ran.
pub fn resolve(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    cfg.seed = seed.or(cfg.seed).or(Some(0));
    if cfg.n_grid.is_empty() {
        cfg.n_grid = match cfg.experiment.as_str() {
            "metric-selftest" => vec![],
            "figures" => vec![1000],
            "sums" => vec![1000, 10_000, 100_000],
            _ => vec![1_000_000],
        };
    }
    match cfg.experiment.as_str() {
        "nu" | "cluster-law" if cfg.functionals.is_empty() => {
            cfg.functionals = if cfg.experiment == "nu" {
                vec![
                    Functional::SupExceeds { level: 1.0 },
                    Functional::SupExceeds { level: 2.0 },
                    Functional::CappedAbsSum { cap: 5.0, level: 1.0 },
                ]
            } else {
                vec![Functional::CountAbove { level: 0.5 }]
            };
        }
        "sums" if cfg.sums.is_none() => cfg.sums = Some(SumsConfig::default()),
        _ => {}
    }
    if cfg.tolerance.is_none() {
        cfg.tolerance = match cfg.experiment.as_str() {
            "theta" => Some(0.05),
            "nu" | "cluster-law" => Some(3.0),
            "metric-selftest" => Some(1e-9),
            _ => None,
        };
    }
    cfg
}

/// Checks everything that can be checked without running.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if lookup(&cfg.experiment).is_none() {
        bail!("experiment: unknown experiment {:?}", cfg.experiment);
    }
    if let Some(m) = &cfg.model {
        m.validate().context("model")?;
    }
    let needs_model = !matches!(cfg.experiment.as_str(), "metric-selftest" | "figures");
    if needs_model && cfg.model.is_none() {
        bail!("model: required for experiment {}", cfg.experiment);
    }
    if cfg.experiment == "records" && cfg.records.is_none() {
        bail!("records: window required for experiment records");
    }
    if cfg.replications == 0 {
        bail!("replications: must be positive");
    }
    Ok(())
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seed = cfg.seed.unwrap_or(0);
    match cfg.experiment.as_str() {
        "theta" => run_theta(cfg, seed),
        "cluster-law" => run_cluster_law(cfg, seed),
        "nu" => run_nu(cfg, seed),
        "sums" => run_sums(cfg, seed),
        "records" => run_records(cfg, seed),
        "metric-selftest" => run_metric_selftest(cfg, seed),
        "figures" => run_figures(cfg, seed),
        other => bail!("experiment: unknown experiment {other:?}"),
    }
}

fn run_theta(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let model = model(cfg)?;
    let tol = cfg.tolerance.unwrap_or(0.05);
    let target = model.theta();
    let mut rows = Vec::new();
    let mut pass = true;
    for &n in &cfg.n_grid {
        let plan = plan_for(cfg, model, n)?;
        let est = empirical_theta_replicated(model, &plan, cfg.replications, derive_seed(seed, n as u64))?;
        let ok = target.map_or(true, |t| (est.estimate - t).abs() < tol);
        pass &= ok;
        rows.push(json!({
            "name": "theta", "estimate": est.estimate, "se": Value::Null, "n": n, "r_n": plan.r_n, "u": plan.u,
            "target": target, "block_exceedances": est.block_exceedances,
            "marginal_exceedances": est.marginal_exceedances, "low_count_warning": est.low_count_warning, "pass": ok,
        }));
    }
    Ok(Outcome { results: json!({ "rows": rows }), pass, files: Vec::new() })
}

fn run_cluster_law(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let model = model(cfg)?;
    let alpha = model.alpha().ok_or_else(|| anyhow!("model: tail index unknown"))?;
    let k = cfg.tolerance.unwrap_or(3.0);
    let g = cfg.functionals.first().cloned().unwrap_or(Functional::CountAbove { level: 0.5 });
    let mut rows = Vec::new();
    let mut files = Vec::new();
    let mut pass = true;
    for &n in &cfg.n_grid {
        let plan = plan_for(cfg, model, n)?;
        let nseed = derive_seed(seed, n as u64);
        let points: Vec<ClusterLawPoint> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let s = model.simulate(n, derive_seed(nseed, r as u64))?;
                empirical_cluster_law(&s, &plan)
            })
            .collect::<tailclust::Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let above = points.iter().filter(|p| p.l > 2.0).count();
        let est = proportion(above, points.len());
        let target = 2f64.powf(-alpha);
        let ok = est.within_sigmas(target, k);
        let lq = independence_test_lq(&points, &g, derive_seed(nseed, u64::MAX)).ok();
        pass &= ok;
        rows.push(json!({
            "name": "P(L > 2)", "estimate": est.value, "se": est.se, "n": n, "r_n": plan.r_n, "u": plan.u,
            "target": target, "blocks": points.len(), "lq_test": lq, "pass": ok,
        }));
        files.push((format!("cluster_law_n{n}.csv"), cluster_law_csv(&points)));
    }
    Ok(Outcome { results: json!({ "rows": rows }), pass, files })
}

fn run_nu(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let model = model(cfg)?;
    let limit = limit_for(cfg, model)?;
    let mc = cfg.limit.as_ref().map_or(20_000, |l| l.mc_samples);
    let k = cfg.tolerance.unwrap_or(3.0);
    let mut reports = Vec::new();
    let mut pass = true;
    for &n in &cfg.n_grid {
        let plan = plan_for(cfg, model, n)?;
        let reps = cfg.replications.max(2);
        let report =
            compare_model_limit(model, &plan, &limit, &cfg.functionals, reps, mc, derive_seed(seed, n as u64))?;
        pass &= report.max_abs_z() <= k;
        reports.push(to_value(&report));
    }
    Ok(Outcome { results: json!({ "reports": reports }), pass, files: Vec::new() })
}

fn forward_sampler(model: &ModelSpec) -> Option<ForwardSampler> {
    match model {
        ModelSpec::Iid { law } => Some(ForwardSampler::Discrete { atoms: single_forward(law.p) }),
        ModelSpec::Linear { model } => Some(ForwardSampler::Linear { model: model.clone() }),
        ModelSpec::Garch { .. } => None,
    }
}

fn single_forward(p: f64) -> Vec<(Vec<f64>, f64)> {
    [(vec![1.0], p), (vec![-1.0], 1.0 - p)].into_iter().filter(|a| a.1 > 0.0).collect()
}

fn run_sums(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let model = model(cfg)?;
    let limit = limit_for(cfg, model)?;
    let sc = cfg.sums.clone().unwrap_or_default();
    let p = model.tail_balance().ok_or_else(|| anyhow!("model: tail balance unknown"))?;
    let from_q = stable_params_from_q(limit.alpha, limit.theta, &limit.q, p, 0, seed)?;
    let from_forward = forward_sampler(model)
        .map(|f| stable_params_from_forward_theta(limit.alpha, &f, 0, seed))
        .transpose()?;
    let sup = sup_law_experiment(
        model,
        &SupLawConfig {
            n_grid: cfg.n_grid.clone(),
            replications: cfg.replications,
            limit_replications: sc.limit_replications,
            p_min: sc.p_min,
            tolerance: sc.sup_tolerance,
        },
        derive_seed(seed, 1),
    )?;
    let m2 = m2_distribution_experiment(
        model,
        &M2ExperimentConfig {
            n_grid: cfg.n_grid.clone(),
            replications: cfg.replications.max(2),
            limit_replications: sc.limit_replications.max(2),
            p_min: sc.p_min,
            cells: sc.cells,
            tolerance: sc.m2_tolerance,
        },
        derive_seed(seed, 2),
    )?;
    let pass = sup.pass && m2.pass;
    let results = json!({
        "stable_from_q": from_q,
        "stable_from_forward": from_forward,
        "sup_law": sup,
        "m2": { "median_gaps": m2.rows.iter().map(|r| json!({"n": r.n, "median_gap": r.median_gap})).collect::<Vec<_>>(),
                "monotone": m2.monotone, "final_gap": m2.final_gap, "tolerance": m2.tolerance, "pass": m2.pass },
    });
    Ok(Outcome { results, pass, files: Vec::new() })
}

fn run_records(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let model = model(cfg)?;
    let rc: &RecordsConfig = cfg.records.as_ref().ok_or_else(|| anyhow!("records: window required"))?;
    let report = record_convergence_experiment(
        model,
        &RecordExperimentConfig {
            n_grid: cfg.n_grid.clone(),
            window: rc.window,
            replications: cfg.replications,
            block_length: rc.block_length,
            level: rc.level,
        },
        seed,
    )?;
    Ok(Outcome { pass: report.pass, results: to_value(&report), files: Vec::new() })
}

fn random_cluster(rng: &mut impl Rng) -> Cluster {
    let len = rng.random_range(1..=6);
    let values = (0..len)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-3.0..3.0) })
        .collect();
    Cluster::with_offset(values, rng.random_range(-5..5))
}

fn random_path(rng: &mut impl Rng) -> DecoratedPath {
    let k = rng.random_range(0..5);
    let mut times: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let jumps: Vec<(f64, f64)> = times.iter().map(|&t| (t, rng.random_range(-2.0..2.0))).collect();
    let step = StepPath::new(rng.random_range(-1.0..1.0), jumps).expect("sorted distinct times");
    let mut decs = Vec::new();
    for (i, &(t, v)) in step.jumps().iter().enumerate() {
        if rng.random_bool(0.5) {
            let before = if i == 0 { step.initial() } else { step.jumps()[i - 1].1 };
            decs.push(Decoration { t, lo: before.min(v) - rng.random_range(0.0..1.0), hi: before.max(v) + rng.random_range(0.0..1.0) });
        }
    }
    DecoratedPath::new(step, decs).expect("decorations cover the jumps")
}

fn run_metric_selftest(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let slack = cfg.tolerance.unwrap_or(1e-9);
    let triples = 10_000 * cfg.replications;
    let mut rng = stream(seed, 0);
    let (mut tri_seq, mut sym_seq, mut shift_seq) = (0usize, 0usize, 0usize);
    for _ in 0..triples {
        let (a, b, c) = (random_cluster(&mut rng), random_cluster(&mut rng), random_cluster(&mut rng));
        let (ab, bc, ac) = (shift_metric(&a, &b), shift_metric(&b, &c), shift_metric(&a, &c));
        tri_seq += usize::from(ac > ab + bc + slack);
        sym_seq += usize::from(ab != shift_metric(&b, &a));
        let k = rng.random_range(-20..20);
        shift_seq += usize::from(shift_metric(&a.shifted(k), &b) != ab);
    }
    let paths = triples / 10;
    let mut rng = stream(seed, 1);
    let (mut tri_m2, mut sym_m2, mut id_m2) = (0usize, 0usize, 0usize);
    for _ in 0..paths {
        let (x, y, z) = (random_path(&mut rng), random_path(&mut rng), random_path(&mut rng));
        let (xy, yz, xz) = (m2_distance(&x, &y), m2_distance(&y, &z), m2_distance(&x, &z));
        tri_m2 += usize::from(xz > xy + yz + slack);
        sym_m2 += usize::from((xy - m2_distance(&y, &x)).abs() > slack);
        id_m2 += usize::from(m2_distance(&x, &x) != 0.0);
    }
    let violations = tri_seq + sym_seq + shift_seq + tri_m2 + sym_m2 + id_m2;
    let results = json!({
        "sequence_triples": triples,
        "path_triples": paths,
        "slack": slack,
        "violations": {
            "sequence_triangle": tri_seq, "sequence_symmetry": sym_seq, "sequence_shift": shift_seq,
            "m2_triangle": tri_m2, "m2_symmetry": sym_m2, "m2_identity": id_m2,
        },
    });
    Ok(Outcome { results, pass: violations == 0, files: Vec::new() })
}

/// `(1 - 1/n)` empirical quantile of `|X|`, for models without a closed form.
fn empirical_an(sample: &SeriesSample) -> f64 {
    let mut abs: Vec<f64> = sample.values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    abs[abs.len().saturating_sub(2)]
}

/// Collapses each block of `r` steps to one jump at the block end,
/// decorated by the range of the path inside the block.
fn block_collapsed(x: &[f64], a_n: f64, r: usize) -> Result<DecoratedPath> {
    let k = x.len() / r;
    let mut s = 0.0;
    let mut jumps = Vec::with_capacity(k);
    let mut decs = Vec::with_capacity(k);
    for (i, block) in x[..k * r].chunks_exact(r).enumerate() {
        let (mut lo, mut hi) = (s, s);
        for v in block {
            s += v / a_n;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        let t = (i + 1) as f64 / k as f64;
        jumps.push((t, s));
        decs.push(Decoration { t, lo, hi });
    }
    Ok(DecoratedPath::new(StepPath::new(0.0, jumps)?, decs)?)
}

fn run_figures(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let n = cfg.n_grid.first().copied().unwrap_or(1000);
    let ma = ModelSpec::Linear { model: LinearModel::causal(&[1.0, -0.7], RegVarLaw::new(0.7, 0.5)?)? };
    let ma_sample = ma.simulate(n, derive_seed(seed, 1))?;
    let ma_path = embed_cadlag(partial_sum_path(&ma_sample, quantile_an(&ma, n)?)?);
    let garch = ModelSpec::Garch { model: GarchModel { a0: 0.01, a1: 1.45, b1: 0.1, tail_alpha_hint: None }, burnin: 1000 };
    let garch_sample = garch.simulate(n, derive_seed(seed, 2))?;
    let garch_path = embed_cadlag(partial_sum_path(&garch_sample, empirical_an(&garch_sample))?);
    let r = cfg.blocking.r_n.unwrap_or(((n as f64).sqrt().floor() as usize).max(1));
    let a_n = quantile_an(&ma, n)?;
    let collapsed = block_collapsed(&ma_sample.values, a_n, r)?;
    let files = vec![
        ("figure_ma1_path.csv".to_string(), graph(&ma_path).to_csv()),
        ("figure_garch_path.csv".to_string(), graph(&garch_path).to_csv()),
        ("figure_blocked_path.csv".to_string(), graph(&collapsed).to_csv()),
    ];
    let results = json!({
        "n": n,
        "r_n": r,
        "segments": files.iter().map(|(name, csv)| json!({"file": name, "segments": csv.lines().count() - 1})).collect::<Vec<_>>(),
        "m2_distance_path_to_blocked": m2_distance(&ma_path, &collapsed),
        "block_time_bound": 2.0 * r as f64 / n as f64,
    });
    Ok(Outcome { results, pass: true, files })
}

pub fn write_outputs(dir: &Path, report: &Value, files: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = serde_json::to_string_pretty(report)? + "\n";
    std::fs::write(dir.join("report.json"), text)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
