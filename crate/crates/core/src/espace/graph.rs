//! Graphs of decorated paths as finite unions of segments, and the exact
//! Hausdorff distance between them under the sup-norm on the plane.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Closed segment from `(x1, z1)` to `(x2, z2)`; a point when both ends agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x1: f64,
    pub z1: f64,
    pub x2: f64,
    pub z2: f64,
}

impl Segment {
    pub fn new(x1: f64, z1: f64, x2: f64, z2: f64) -> Self {
        Self { x1, z1, x2, z2 }
    }

    pub fn is_vertical(&self) -> bool {
        self.x1 == self.x2 && self.z1 != self.z2
    }

    fn dir(&self) -> (f64, f64) {
        (self.x2 - self.x1, self.z2 - self.z1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSet {
    pub segments: Vec<Segment>,
}

impl GraphSet {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Largest and smallest `z` over the set.
    pub fn z_range(&self) -> (f64, f64) {
        self.segments.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.z1).min(s.z2), hi.max(s.z1).max(s.z2))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,z1,x2,z2\n");
        for s in &self.segments {
            out.push_str(&format!("{},{},{},{}\n", s.x1, s.z1, s.x2, s.z2));
        }
        out
    }
}

/// `d(P + s u, B) = max_w (w . (P + s u) - sigma_B(w))` over the vertices `w`
/// of the unit l1 ball split along the normal of `B`; returned as
/// `(intercept, slope)` lines in `s`.
fn distance_lines(src: &Segment, dst: &Segment, out: &mut Vec<(f64, f64)>) {
    out.clear();
    let (ux, uz) = src.dir();
    let (vx, vz) = dst.dir();
    let mut push = |wx: f64, wz: f64| {
        let sigma = (wx * dst.x1 + wz * dst.z1).max(wx * dst.x2 + wz * dst.z2);
        out.push((wx * src.x1 + wz * src.z1 - sigma, wx * ux + wz * uz));
    };
    push(1.0, 0.0);
    push(-1.0, 0.0);
    push(0.0, 1.0);
    push(0.0, -1.0);
    let norm = vx.abs() + vz.abs();
    if norm > 0.0 {
        push(vz / norm, -vx / norm);
        push(-vz / norm, vx / norm);
    }
}

fn eval_max(lines: &[(f64, f64)], s: f64) -> f64 {
    lines.iter().fold(0.0f64, |m, (a, b)| m.max(a + b * s))
}

fn crossing(l1: (f64, f64), l2: (f64, f64)) -> Option<f64> {
    let db = l1.1 - l2.1;
    if db == 0.0 {
        return None;
    }
    let s = (l2.0 - l1.0) / db;
    (s > 0.0 && s < 1.0).then_some(s)
}

/// `sup_{a in src} d(a, dst)` for one source segment.
fn directed_segment(src: &Segment, dst: &GraphSet) -> f64 {
    let mut scratch = Vec::with_capacity(6);
    let mut all: Vec<Vec<(f64, f64)>> = Vec::with_capacity(dst.len());
    for d in &dst.segments {
        distance_lines(src, d, &mut scratch);
        all.push(scratch.clone());
    }
    // Each d_k is convex in s, so max(d_k(0), d_k(1)) bounds the envelope
    // from above and segments whose minimum exceeds that bound never matter.
    let upper = all
        .iter()
        .map(|l| eval_max(l, 0.0).max(eval_max(l, 1.0)))
        .fold(f64::INFINITY, f64::min);
    let live: Vec<&Vec<(f64, f64)>> = all
        .iter()
        .filter(|lines| {
            let mut lo = eval_max(lines, 0.0).min(eval_max(lines, 1.0));
            for i in 0..lines.len() {
                for j in i + 1..lines.len() {
                    if let Some(s) = crossing(lines[i], lines[j]) {
                        lo = lo.min(eval_max(lines, s));
                    }
                }
            }
            lo <= upper
        })
        .collect();
    let envelope = |s: f64| live.iter().map(|l| eval_max(l, s)).fold(f64::INFINITY, f64::min);
    let mut best = envelope(0.0).max(envelope(1.0));
    for (a, la) in live.iter().enumerate() {
        for lb in &live[a + 1..] {
            for &x in la.iter() {
                for &y in lb.iter() {
                    if let Some(s) = crossing(x, y) {
                        best = best.max(envelope(s));
                    }
                }
            }
        }
    }
    best
}

/// `sup_{a in g1} inf_{b in g2} |a - b|_inf`.
pub fn directed_hausdorff(g1: &GraphSet, g2: &GraphSet) -> Result<f64> {
    if g1.is_empty() || g2.is_empty() {
        return Err(domain("Hausdorff distance needs nonempty graphs"));
    }
    Ok(g1.segments.iter().map(|s| directed_segment(s, g2)).fold(0.0, f64::max))
}

/// Hausdorff distance between two graphs under the sup-norm on the plane.
pub fn hausdorff_graphs(g1: &GraphSet, g2: &GraphSet) -> Result<f64> {
    Ok(directed_hausdorff(g1, g2)?.max(directed_hausdorff(g2, g1)?))
}

/// Sup-norm distance from a point to a segment, by direct minimization over
/// the segment parameter.
pub fn point_segment_distance(x: f64, z: f64, seg: &Segment) -> f64 {
    let g = GraphSet::new(vec![*seg]);
    directed_segment(&Segment::new(x, z, x, z), &g)
}
