//! The space of decorated càdlàg paths on `[0, 1]`: step paths with an
//! optional continuous piecewise-linear drift, decorations by closed
//! intervals, their graphs and the metrics between them.

mod graph;

pub use graph::{directed_hausdorff, hausdorff_graphs, point_segment_distance, GraphSet, Segment};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

const CONTAINMENT_SLACK: f64 = 1e-12;

/// Continuous piecewise-linear function on `[0, 1]` given by its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = LabError;

    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(knots)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.knots
    }
}

impl PiecewiseLinear {
    /// Knots `(t, value)` with strictly increasing `t` from 0 to 1.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 || knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(invalid("piecewise-linear knots must start at t=0 and end at t=1"));
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) || knots.iter().any(|k| !k.1.is_finite()) {
            return Err(invalid("knot times must increase strictly and values be finite"));
        }
        Ok(Self { knots })
    }

    pub fn constant(c: f64) -> Self {
        Self { knots: vec![(0.0, c), (1.0, c)] }
    }

    /// `t -> a + b t`.
    pub fn affine(a: f64, b: f64) -> Self {
        Self { knots: vec![(0.0, a), (1.0, a + b)] }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        let i = k.partition_point(|p| p.0 <= t).clamp(1, k.len() - 1);
        let (t0, v0) = k[i - 1];
        let (t1, v1) = k[i];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn merged_times(&self, other: &Self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.knots.iter().chain(&other.knots).map(|k| k.0).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn add(&self, other: &Self) -> Self {
        let knots = self
            .merged_times(other)
            .into_iter()
            .map(|t| (t, self.eval(t) + other.eval(t)))
            .collect();
        Self { knots }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { knots: self.knots.iter().map(|&(t, v)| (t, c * v)).collect() }
    }

    /// `sup_t |self(t) - other(t)|`, attained at a knot of either function.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.merged_times(other)
            .into_iter()
            .map(|t| (self.eval(t) - other.eval(t)).abs())
            .fold(0.0, f64::max)
    }

    fn is_zero(&self) -> bool {
        self.knots.iter().all(|k| k.1 == 0.0)
    }
}

/// Right-continuous path `level(t) + drift(t)`, where `level` is piecewise
/// constant with jumps at the listed times in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPath {
    initial: f64,
    /// `(t, level from t on)`
    jumps: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<PiecewiseLinear>,
}

impl StepPath {
    pub fn new(initial: f64, jumps: Vec<(f64, f64)>) -> Result<Self> {
        if !initial.is_finite() || jumps.iter().any(|j| !j.1.is_finite()) {
            return Err(invalid("path values must be finite"));
        }
        if jumps.iter().any(|j| !(j.0 > 0.0 && j.0 <= 1.0)) {
            return Err(invalid("jump times must lie in (0, 1]"));
        }
        if jumps.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("jump times must increase strictly"));
        }
        Ok(Self { initial, jumps, drift: None })
    }

    pub fn constant(c: f64) -> Self {
        Self { initial: c, jumps: Vec::new(), drift: None }
    }

    /// Adds a continuous drift (replacing a zero drift by `None`).
    pub fn with_drift(mut self, drift: PiecewiseLinear) -> Self {
        let total = match self.drift.take() {
            Some(d) => d.add(&drift),
            None => drift,
        };
        self.drift = (!total.is_zero()).then_some(total);
        self
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    pub fn drift(&self) -> Option<&PiecewiseLinear> {
        self.drift.as_ref()
    }

    pub fn is_step(&self) -> bool {
        self.drift.is_none()
    }

    fn drift_at(&self, t: f64) -> f64 {
        self.drift.as_ref().map_or(0.0, |d| d.eval(t))
    }

    fn level_at(&self, t: f64) -> f64 {
        match self.jumps.partition_point(|j| j.0 <= t) {
            0 => self.initial,
            i => self.jumps[i - 1].1,
        }
    }

    fn level_before(&self, t: f64) -> f64 {
        match self.jumps.partition_point(|j| j.0 < t) {
            0 => self.initial,
            i => self.jumps[i - 1].1,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.level_at(t) + self.drift_at(t)
    }

    /// `x(t-)`; equals `x(0)` at `t = 0`.
    pub fn left_limit(&self, t: f64) -> f64 {
        self.level_before(t) + self.drift_at(t)
    }

    /// Times where the path actually jumps.
    pub fn discontinuities(&self) -> Vec<f64> {
        let mut prev = self.initial;
        let mut out = Vec::new();
        for &(t, v) in &self.jumps {
            if v != prev {
                out.push(t);
            }
            prev = v;
        }
        out
    }

    /// 0, 1, jump times and drift knots, sorted.
    fn breakpoints(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = vec![0.0, 1.0];
        ts.extend(self.jumps.iter().map(|j| j.0));
        if let Some(d) = &self.drift {
            ts.extend(d.knots().iter().map(|k| k.0));
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn negated(&self) -> Self {
        Self {
            initial: -self.initial,
            jumps: self.jumps.iter().map(|&(t, v)| (t, -v)).collect(),
            drift: self.drift.as_ref().map(|d| d.scaled(-1.0)),
        }
    }

    /// Path with the given values at `0` and at every jump time, keeping only
    /// times where the level changes.
    pub fn from_levels(initial: f64, levels: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut prev = initial;
        let mut jumps = Vec::new();
        for (t, v) in levels {
            if v != prev {
                jumps.push((t, v));
                prev = v;
            }
        }
        Self::new(initial, jumps)
    }
}

/// A closed interval attached to a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoration {
    pub t: f64,
    pub lo: f64,
    pub hi: f64,
}

/// A path together with interval decorations; every jump of the path is
/// decorated and every decoration contains `x(t-)` and `x(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct DecoratedPath {
    step: StepPath,
    decorations: Vec<Decoration>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRepr {
    initial: f64,
    jumps: Vec<(f64, f64)>,
    decorations: Vec<(f64, f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<PiecewiseLinear>,
}

impl TryFrom<PathRepr> for DecoratedPath {
    type Error = LabError;

    fn try_from(r: PathRepr) -> Result<Self> {
        let mut step = StepPath::new(r.initial, r.jumps)?;
        if let Some(d) = r.drift {
            step = step.with_drift(d);
        }
        let decs = r.decorations.into_iter().map(|(t, lo, hi)| Decoration { t, lo, hi }).collect();
        DecoratedPath::new(step, decs)
    }
}

impl From<DecoratedPath> for PathRepr {
    fn from(p: DecoratedPath) -> Self {
        PathRepr {
            initial: p.step.initial,
            jumps: p.step.jumps,
            decorations: p.decorations.iter().map(|d| (d.t, d.lo, d.hi)).collect(),
            drift: p.step.drift,
        }
    }
}

impl DecoratedPath {
    /// Validates the decorations and adds `[min, max]` of `x(t-), x(t)` at
    /// every undecorated jump. Decorations that miss the path values by
    /// rounding-level amounts are widened.
    pub fn new(step: StepPath, mut decorations: Vec<Decoration>) -> Result<Self> {
        decorations.sort_by(|a, b| a.t.total_cmp(&b.t));
        if decorations.windows(2).any(|w| w[0].t == w[1].t) {
            return Err(invalid("decoration times must be distinct"));
        }
        for d in &mut decorations {
            if !(0.0..=1.0).contains(&d.t) || !(d.lo <= d.hi) {
                return Err(invalid(format!("bad decoration at t={}: [{}, {}]", d.t, d.lo, d.hi)));
            }
            let (a, b) = (step.left_limit(d.t), step.value(d.t));
            let (mn, mx) = (a.min(b), a.max(b));
            let tol = CONTAINMENT_SLACK * (1.0 + mn.abs().max(mx.abs()));
            if d.lo > mn + tol || d.hi < mx - tol {
                return Err(invalid(format!(
                    "decoration [{}, {}] at t={} must contain x(t-)={a} and x(t)={b}",
                    d.lo, d.hi, d.t
                )));
            }
            d.lo = d.lo.min(mn);
            d.hi = d.hi.max(mx);
        }
        let mut extra = Vec::new();
        for t in step.discontinuities() {
            if decorations.binary_search_by(|d| d.t.total_cmp(&t)).is_err() {
                let (a, b) = (step.left_limit(t), step.value(t));
                extra.push(Decoration { t, lo: a.min(b), hi: a.max(b) });
            }
        }
        decorations.extend(extra);
        decorations.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { step, decorations })
    }

    pub fn step(&self) -> &StepPath {
        &self.step
    }

    pub fn decorations(&self) -> &[Decoration] {
        &self.decorations
    }

    fn decoration_at(&self, t: f64) -> Option<&Decoration> {
        self.decorations
            .binary_search_by(|d| d.t.total_cmp(&t))
            .ok()
            .map(|i| &self.decorations[i])
    }

    /// The interval `x'(t)`: the decoration if any, else `{x(t)}`.
    pub fn interval_at(&self, t: f64) -> (f64, f64) {
        match self.decoration_at(t) {
            Some(d) => (d.lo, d.hi),
            None => {
                let v = self.step.value(t);
                (v, v)
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut ts = self.step.breakpoints();
        ts.extend(self.decorations.iter().map(|d| d.t));
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn negated(&self) -> Self {
        Self {
            step: self.step.negated(),
            decorations: self.decorations.iter().map(|d| Decoration { t: d.t, lo: -d.hi, hi: -d.lo }).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite path")
    }
}

/// Decorates exactly the jumps of `step` with `[x(t-), x(t)]`.
pub fn embed_cadlag(step: StepPath) -> DecoratedPath {
    DecoratedPath::new(step, Vec::new()).expect("no user decorations to validate")
}

/// The graph: one segment per piece between breakpoints and one vertical
/// segment per decoration.
pub fn graph(path: &DecoratedPath) -> GraphSet {
    let s = &path.step;
    let ts = s.breakpoints();
    let mut segs: Vec<Segment> = ts
        .windows(2)
        .map(|w| Segment::new(w[0], s.value(w[0]), w[1], s.left_limit(w[1])))
        .collect();
    segs.extend(path.decorations.iter().map(|d| Segment::new(d.t, d.lo, d.t, d.hi)));
    if segs.is_empty() {
        let v = s.value(0.0);
        segs.push(Segment::new(0.0, v, 0.0, v));
    }
    GraphSet::new(segs)
}

/// The M2 distance: Hausdorff distance between the graphs.
pub fn m2_distance(p1: &DecoratedPath, p2: &DecoratedPath) -> f64 {
    hausdorff_graphs(&graph(p1), &graph(p2)).expect("graphs are never empty")
}

fn interval_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// `sup_t m(x'(t), y'(t))`. Between breakpoints both paths are continuous
/// and linear, so the supremum is reached at a breakpoint or as a one-sided
/// limit into one.
pub fn uniform_metric(p1: &DecoratedPath, p2: &DecoratedPath) -> f64 {
    let mut ts = p1.breakpoints();
    ts.extend(p2.breakpoints());
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut m = ts
        .iter()
        .map(|&t| interval_distance(p1.interval_at(t), p2.interval_at(t)))
        .fold(0.0, f64::max);
    for &t in &ts[1..] {
        m = m.max((p1.step.left_limit(t) - p2.step.left_limit(t)).abs());
    }
    m
}

fn check_window(t1: f64, t2: f64) -> Result<()> {
    if !(0.0 <= t1 && t1 < t2 && t2 <= 1.0) {
        return Err(invalid(format!("window needs 0 <= t1 < t2 <= 1, got [{t1}, {t2}]")));
    }
    Ok(())
}

/// `sup { z : z in x'(t), t1 <= t <= t2 }`.
pub fn local_max(path: &DecoratedPath, t1: f64, t2: f64) -> Result<f64> {
    check_window(t1, t2)?;
    let s = &path.step;
    let mut m = path.interval_at(t1).1.max(path.interval_at(t2).1).max(s.left_limit(t2));
    for t in path.breakpoints() {
        if t > t1 && t < t2 {
            m = m.max(path.interval_at(t).1).max(s.left_limit(t));
        }
    }
    Ok(m)
}

/// `inf { z : z in x'(t), t1 <= t <= t2 }`.
pub fn local_min(path: &DecoratedPath, t1: f64, t2: f64) -> Result<f64> {
    Ok(-local_max(&path.negated(), t1, t2)?)
}

/// Running supremum `t -> sup { z : z in x'(s), s <= t }` of a path without
/// drift.
pub fn sup_path(path: &DecoratedPath) -> Result<StepPath> {
    if !path.step.is_step() {
        return Err(LabError::Unsupported("running supremum of a path with drift".into()));
    }
    let mut m = path.interval_at(0.0).1;
    let initial = m;
    let levels: Vec<(f64, f64)> = path
        .breakpoints()
        .into_iter()
        .filter(|t| *t > 0.0)
        .map(|t| {
            m = m.max(path.interval_at(t).1);
            (t, m)
        })
        .collect();
    StepPath::from_levels(initial, levels)
}

/// Running infimum, `-sup_path(-x)`.
pub fn inf_path(path: &DecoratedPath) -> Result<StepPath> {
    Ok(sup_path(&path.negated())?.negated())
}

/// `x' + b`: the path shifted by `b` and each decoration by `b(t)`.
pub fn add_continuous(path: &DecoratedPath, b: &PiecewiseLinear) -> DecoratedPath {
    let step = path.step.clone().with_drift(b.clone());
    let decorations = path
        .decorations
        .iter()
        .map(|d| {
            let shift = b.eval(d.t);
            Decoration { t: d.t, lo: d.lo + shift, hi: d.hi + shift }
        })
        .collect();
    DecoratedPath { step, decorations }
}

/// `(inf, sup)` of `x'` over each cell `[i/k, (i+1)/k]`, in one sweep over
/// the path's breakpoints. Window extremes over `[i/k, j/k]` are the extremes
/// over cells `i..j`.
pub fn cell_extremes(path: &DecoratedPath, k: usize) -> Result<Vec<(f64, f64)>> {
    if k == 0 {
        return Err(invalid("need at least one cell"));
    }
    let bounds: Vec<f64> = (0..=k).map(|j| j as f64 / k as f64).collect();
    let s = &path.step;
    let mut times = path.breakpoints();
    times.extend(&bounds);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut cells = vec![(f64::INFINITY, f64::NEG_INFINITY); k];
    let mut put = |c: usize, lo: f64, hi: f64| {
        let e = &mut cells[c];
        e.0 = e.0.min(lo);
        e.1 = e.1.max(hi);
    };
    let (mut ji, mut di) = (0usize, 0usize);
    let mut level = s.initial;
    for &t in &times {
        let drift = s.drift_at(t);
        if t > 0.0 {
            let left = level + drift;
            let c = bounds.partition_point(|b| *b < t) - 1;
            put(c, left, left);
        }
        while ji < s.jumps.len() && s.jumps[ji].0 <= t {
            level = s.jumps[ji].1;
            ji += 1;
        }
        while di < path.decorations.len() && path.decorations[di].t < t {
            di += 1;
        }
        let (lo, hi) = match path.decorations.get(di) {
            Some(d) if d.t == t => (d.lo, d.hi),
            _ => (level + drift, level + drift),
        };
        let c = (bounds.partition_point(|b| *b <= t) - 1).min(k - 1);
        put(c, lo, hi);
        if c > 0 && bounds[c] == t {
            put(c - 1, lo, hi);
        }
    }
    Ok(cells)
}

/// Extremes over cells `i..j` as produced by [`cell_extremes`].
pub fn window_extremes(cells: &[(f64, f64)], i: usize, j: usize) -> (f64, f64) {
    cells[i..j].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.0), b.max(c.1)))
}

/// Gaps of one window across a sequence of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGaps {
    pub t1: f64,
    pub t2: f64,
    /// `|M(x_k) - M(x)|` per path
    pub max_gaps: Vec<f64>,
    /// `|M(-x_k) - M(-x)|` per path
    pub min_gaps: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2Report {
    pub windows: Vec<WindowGaps>,
    pub tolerance: f64,
    pub converged: bool,
}

fn last_quartile_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let start = xs.len() - xs.len().div_ceil(4);
    let tail = &xs[start..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Local-maximum characterization of M2 convergence: tracks
/// `M_{t1,t2}(+-x_k)` against the limit over a grid of windows and flags
/// windows whose last-quartile mean gap exceeds `tolerance`.
pub fn m2_convergence_check(
    paths: &[DecoratedPath],
    limit: &DecoratedPath,
    grid: &[(f64, f64)],
    tolerance: f64,
) -> Result<M2Report> {
    if !grid.iter().any(|w| w.0 == 0.0) || !grid.iter().any(|w| w.1 == 1.0) {
        return Err(invalid("window grid must contain a window starting at 0 and one ending at 1"));
    }
    let neg_limit = limit.negated();
    let windows = grid
        .iter()
        .map(|&(t1, t2)| {
            let target_max = local_max(limit, t1, t2)?;
            let target_min = local_max(&neg_limit, t1, t2)?;
            let max_gaps = paths
                .iter()
                .map(|p| Ok((local_max(p, t1, t2)? - target_max).abs()))
                .collect::<Result<Vec<_>>>()?;
            let min_gaps = paths
                .iter()
                .map(|p| Ok((local_max(&p.negated(), t1, t2)? - target_min).abs()))
                .collect::<Result<Vec<_>>>()?;
            let converged =
                last_quartile_mean(&max_gaps) <= tolerance && last_quartile_mean(&min_gaps) <= tolerance;
            Ok(WindowGaps { t1, t2, max_gaps, min_gaps, converged })
        })
        .collect::<Result<Vec<_>>>()?;
    let converged = windows.iter().all(|w| w.converged);
    Ok(M2Report { windows, tolerance, converged })
}

/// Windows `[i/k, j/k]` for `0 <= i < j <= k`.
pub fn window_grid(k: usize) -> Vec<(f64, f64)> {
    let mut g = Vec::new();
    for i in 0..k {
        for j in i + 1..=k {
            g.push((i as f64 / k as f64, j as f64 / k as f64));
        }
    }
    g
}
