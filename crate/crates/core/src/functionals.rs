//! Functionals on clusters.
//!
//! Diagnostics evaluate functionals on blocks of a scaled series and on limit
//! clusters `y * Q`. A functional declares a support floor `eps` when it
//! vanishes on every cluster with sup-norm at most `eps`; that floor is what
//! makes the limit measure integrable.

use serde::{Deserialize, Serialize};

use crate::seqspace::Cluster;

pub trait ClusterFunctional: Sync {
    /// Value on the sequence whose (shift-representative) coordinates are `xs`.
    fn eval_slice(&self, xs: &[f64]) -> f64;

    fn eval(&self, x: &Cluster) -> f64 {
        self.eval_slice(x.values())
    }

    /// `Some(eps)` if the functional vanishes whenever `sup |x_j| <= eps`.
    fn floor(&self) -> Option<f64>;

    /// Polynomial growth order in the cluster scale (0 for bounded functionals).
    fn growth(&self) -> f64 {
        0.0
    }

    /// Closed form of `theta * int E[f(yQ)] alpha y^{-alpha-1} dy` when it does
    /// not depend on the law of `Q`.
    fn analytic_nu(&self, _theta: f64, _alpha: f64) -> Option<f64> {
        None
    }

    /// Scales `y > 0` at which `y -> f(y * xs)` may fail to be smooth.
    /// Quadrature over `y` splits at these points.
    fn scale_breakpoints(&self, _xs: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn name(&self) -> String;
}

fn sup_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Built-in functionals that can be named in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    Zero,
    /// `1{sup |x_j| > level}`
    SupExceeds { level: f64 },
    /// `(sum |x_j| ∧ cap) 1{sup |x_j| > level}`
    CappedAbsSum { cap: f64, level: f64 },
    /// `sup |x_j| 1{sup |x_j| > level}`
    SupAbove { level: f64 },
    /// `#{j : |x_j| > level}`
    CountAbove { level: f64 },
    /// Sign of the coordinate with the largest modulus (first one on ties).
    PeakSign,
}

impl ClusterFunctional for Functional {
    fn eval_slice(&self, xs: &[f64]) -> f64 {
        match *self {
            Functional::Zero => 0.0,
            Functional::SupExceeds { level } => f64::from(u8::from(sup_abs(xs) > level)),
            Functional::CappedAbsSum { cap, level } => {
                if sup_abs(xs) > level {
                    xs.iter().map(|v| v.abs()).sum::<f64>().min(cap)
                } else {
                    0.0
                }
            }
            Functional::SupAbove { level } => {
                let s = sup_abs(xs);
                if s > level {
                    s
                } else {
                    0.0
                }
            }
            Functional::CountAbove { level } => xs.iter().filter(|v| v.abs() > level).count() as f64,
            Functional::PeakSign => {
                let mut best = 0.0f64;
                for &v in xs {
                    if v.abs() > best.abs() {
                        best = v;
                    }
                }
                if best == 0.0 {
                    0.0
                } else {
                    best.signum()
                }
            }
        }
    }

    fn floor(&self) -> Option<f64> {
        match *self {
            Functional::Zero => Some(f64::INFINITY),
            Functional::SupExceeds { level }
            | Functional::CappedAbsSum { level, .. }
            | Functional::SupAbove { level }
            | Functional::CountAbove { level } => (level > 0.0).then_some(level),
            Functional::PeakSign => None,
        }
    }

    fn growth(&self) -> f64 {
        match self {
            Functional::SupAbove { .. } => 1.0,
            _ => 0.0,
        }
    }

    fn analytic_nu(&self, theta: f64, alpha: f64) -> Option<f64> {
        match *self {
            Functional::Zero => Some(0.0),
            Functional::SupExceeds { level } if level > 0.0 => Some(theta * level.powf(-alpha)),
            Functional::SupAbove { level } if level > 0.0 && alpha > 1.0 => {
                Some(theta * alpha / (alpha - 1.0) * level.powf(1.0 - alpha))
            }
            _ => None,
        }
    }

    fn scale_breakpoints(&self, xs: &[f64]) -> Vec<f64> {
        let sup = sup_abs(xs);
        if sup == 0.0 {
            return Vec::new();
        }
        match *self {
            Functional::SupExceeds { level } | Functional::SupAbove { level } => vec![level / sup],
            Functional::CappedAbsSum { cap, level } => {
                let total: f64 = xs.iter().map(|v| v.abs()).sum();
                vec![level / sup, cap / total]
            }
            Functional::CountAbove { level } => {
                xs.iter().filter(|v| **v != 0.0).map(|v| level / v.abs()).collect()
            }
            Functional::Zero | Functional::PeakSign => Vec::new(),
        }
    }

    fn name(&self) -> String {
        match self {
            Functional::Zero => "zero".into(),
            Functional::SupExceeds { level } => format!("1{{sup>{level}}}"),
            Functional::CappedAbsSum { cap, level } => format!("(sum|x|^{cap})1{{sup>{level}}}"),
            Functional::SupAbove { level } => format!("sup*1{{sup>{level}}}"),
            Functional::CountAbove { level } => format!("#{{|x|>{level}}}"),
            Functional::PeakSign => "peak_sign".into(),
        }
    }
}
