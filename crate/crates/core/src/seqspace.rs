//! Finite-support two-sided sequences modulo shifts.
//!
//! A [`Cluster`] stores the nonzero window of a sequence that vanishes outside
//! a finite range. Leading and trailing zeros are trimmed on construction, so
//! two clusters are equal exactly when their trimmed value vectors coincide;
//! the `offset` of the first stored coordinate is bookkeeping and never takes
//! part in equality, hashing or any metric.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, invalid, Result};

#[derive(Debug, Clone, Default)]
pub struct Cluster {
    values: Vec<f64>,
    offset: i64,
}

impl Cluster {
    /// Builds a cluster anchored at index 0.
    pub fn new(values: Vec<f64>) -> Self {
        Self::with_offset(values, 0)
    }

    /// Builds a cluster whose first coordinate sits at `offset`.
    pub fn with_offset(mut values: Vec<f64>, offset: i64) -> Self {
        let first = values.iter().position(|v| *v != 0.0);
        let Some(first) = first else {
            return Self::zero();
        };
        let last = values.iter().rposition(|v| *v != 0.0).unwrap_or(first);
        values.truncate(last + 1);
        values.drain(..first);
        for v in values.iter_mut() {
            // keep -0.0 out of the canonical form
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        Self { values, offset: offset + first as i64 }
    }

    /// The zero element (empty support).
    pub fn zero() -> Self {
        Self { values: Vec::new(), offset: 0 }
    }

    pub fn single(value: f64) -> Self {
        Self::new(vec![value])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same class, representative moved by `k` positions.
    pub fn shifted(&self, k: i64) -> Self {
        Self { values: self.values.clone(), offset: self.offset + k }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::with_offset(self.values.iter().map(|v| v * c).collect(), self.offset)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::with_offset(self.values.iter().map(|&v| f(v)).collect(), self.offset)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

impl PartialEq for Cluster {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl Hash for Cluster {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.values.len().hash(state);
        for v in &self.values {
            v.to_bits().hash(state);
        }
    }
}

impl Serialize for Cluster {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Cluster {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("cluster values must be finite"));
        }
        Ok(Cluster::new(values))
    }
}

/// Sup-distance between `a` and `b` when `b`'s first stored coordinate is
/// placed at position `k` of `a`'s stored window.
fn aligned_distance(a: &[f64], b: &[f64], k: i64) -> f64 {
    let la = a.len() as i64;
    let lb = b.len() as i64;
    let lo = 0.min(k);
    let hi = la.max(k + lb);
    let mut d: f64 = 0.0;
    for i in lo..hi {
        let x = if (0..la).contains(&i) { a[i as usize] } else { 0.0 };
        let j = i - k;
        let y = if (0..lb).contains(&j) { b[j as usize] } else { 0.0 };
        d = d.max((x - y).abs());
    }
    d
}

/// Shift-invariant distance `inf_{k,l} ||shift^k a - shift^l b||_inf`.
///
/// The infimum is attained: every relative alignment with overlapping supports
/// is scanned, and the disjoint-support value `max(|a|, |b|)` is included.
pub fn shift_metric(a: &Cluster, b: &Cluster) -> f64 {
    let (av, bv) = (a.values(), b.values());
    let disjoint = a.sup_norm().max(b.sup_norm());
    if av.is_empty() || bv.is_empty() {
        return disjoint;
    }
    let (la, lb) = (av.len() as i64, bv.len() as i64);
    let mut best = disjoint;
    for k in (-lb + 1)..la {
        best = best.min(aligned_distance(av, bv, k));
        if best == 0.0 {
            break;
        }
    }
    best
}

/// `(d(a,b) ∧ 1) ∨ |1/|a| - 1/|b||`, defined away from the zero element.
pub fn boundedness_metric(a: &Cluster, b: &Cluster) -> Result<f64> {
    if a.is_zero() || b.is_zero() {
        return Err(domain("boundedness metric is undefined at the zero cluster"));
    }
    let d = shift_metric(a, b).min(1.0);
    Ok(d.max((1.0 / a.sup_norm() - 1.0 / b.sup_norm()).abs()))
}

/// Zeroes every coordinate with modulus at most `zeta`.
pub fn truncate(a: &Cluster, zeta: f64) -> Result<Cluster> {
    if !(zeta > 0.0) {
        return Err(invalid(format!("truncation level must be positive, got {zeta}")));
    }
    Ok(a.map(|v| if v.abs() <= zeta { 0.0 } else { v }))
}

/// Polar decomposition `a = magnitude * shape` with `|shape|_inf = 1`.
pub fn polar(a: &Cluster) -> Result<(f64, Cluster)> {
    if a.is_zero() {
        return Err(domain("polar decomposition of the zero cluster"));
    }
    let m = a.sup_norm();
    Ok((m, a.scaled(1.0 / m)))
}
