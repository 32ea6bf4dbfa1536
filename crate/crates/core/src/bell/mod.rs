//! The CHSH expression, its bound hierarchy, local-polytope membership and
//! axis optimization for correlation models.

mod local;
mod optimize;

pub use local::{deterministic_vertices, is_local, LocalityCertificate, ResponseFn, Vertex};
pub use optimize::{max_chsh_over_axes, max_chsh_over_axes_with, AxisSearch, MaxChsh};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::boxes::ConditionalBox;
use crate::correlations::{correlators_at, AxisConfiguration, CorrelationModel};
use crate::error::{Error, Result};

/// Bound on `|S|` for local hidden variable models.
pub const LOCAL_BOUND: f64 = 2.0;
/// Bound on `|S|` for quantum correlations, `2√2`.
pub const QUANTUM_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;
/// Bound on `|S|` for any box with correlators in `[-1, 1]`.
pub const NO_SIGNALING_BOUND: f64 = 4.0;

/// Slack added to each bound in [`classify`] so that values computed in
/// floating point at exactly a bound stay in the lower class.
pub const CLASSIFY_SLACK: f64 = 1e-12;

/// Signs over `[E(A,B), E(A,B'), E(A',B), E(A',B')]`.
pub const CHSH_SIGNS: [f64; 4] = [1.0, 1.0, 1.0, -1.0];

/// `E(A,B) + E(A,B') + E(A',B) - E(A',B')`.
pub fn chsh_value(e_ab: f64, e_abp: f64, e_apb: f64, e_apbp: f64) -> Result<f64> {
    for e in [e_ab, e_abp, e_apb, e_apbp] {
        if !e.is_finite() || e.abs() > 1.0 {
            return Err(Error::CorrelationOutOfRange(e));
        }
    }
    Ok(chsh_sum([e_ab, e_abp, e_apb, e_apbp]))
}

pub(crate) fn chsh_sum(e: [f64; 4]) -> f64 {
    e[0] + e[1] + e[2] - e[3]
}

/// CHSH sum of a box with `x = 0 ↦ A`, `x = 1 ↦ A'`, `y = 0 ↦ B`, `y = 1 ↦ B'`.
pub fn chsh_of_box(b: &ConditionalBox) -> f64 {
    chsh_sum(b.correlators())
}

/// CHSH sum of `model` at `axes`.
pub fn chsh_from_model(model: CorrelationModel, axes: &AxisConfiguration) -> f64 {
    chsh_sum(correlators_at(model, axes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundClass {
    /// `|S| ≤ 2`
    Local,
    /// `2 < |S| ≤ 2√2`
    QuantumOnly,
    /// `2√2 < |S| ≤ 4`
    SuperquantumOnly,
    /// `|S| > 4`
    Impossible,
}

impl fmt::Display for BoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundClass::Local => "Local",
            BoundClass::QuantumOnly => "QuantumOnly",
            BoundClass::SuperquantumOnly => "SuperquantumOnly",
            BoundClass::Impossible => "Impossible",
        };
        f.write_str(s)
    }
}

/// Places a CHSH value in the bound hierarchy. Boundaries belong to the
/// lower class.
pub fn classify(s: f64) -> Result<BoundClass> {
    if !s.is_finite() {
        return Err(Error::NonFinite(s));
    }
    let s = s.abs();
    Ok(if s <= LOCAL_BOUND + CLASSIFY_SLACK {
        BoundClass::Local
    } else if s <= QUANTUM_BOUND + CLASSIFY_SLACK {
        BoundClass::QuantumOnly
    } else if s <= NO_SIGNALING_BOUND + CLASSIFY_SLACK {
        BoundClass::SuperquantumOnly
    } else {
        BoundClass::Impossible
    })
}

/// One of the eight CHSH sign variants: an odd number of minus signs over
/// the four correlators, up to overall sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshVariant {
    /// Signs over `[E00, E01, E10, E11]`.
    pub signs: [i8; 4],
    pub value: f64,
}

impl ChshVariant {
    /// All eight variants evaluated on `correlators`.
    pub fn all(correlators: [f64; 4]) -> [ChshVariant; 8] {
        std::array::from_fn(|i| {
            let minus_at = i % 4;
            let overall: i8 = if i < 4 { 1 } else { -1 };
            let signs: [i8; 4] =
                std::array::from_fn(|k| if k == minus_at { -overall } else { overall });
            let value = signs
                .iter()
                .zip(correlators)
                .map(|(&s, e)| s as f64 * e)
                .sum();
            ChshVariant { signs, value }
        })
    }

    /// The variant with the largest value; ties go to the earliest variant,
    /// which for equal values is the standard orientation `(+, +, +, -)`.
    pub fn strongest(correlators: [f64; 4]) -> ChshVariant {
        let all = Self::all(correlators);
        let mut best = all[3];
        for v in all {
            if v.value > best.value {
                best = v;
            }
        }
        best
    }
}

impl fmt::Display for ChshVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const TERMS: [&str; 4] = ["E(A,B)", "E(A,B')", "E(A',B)", "E(A',B')"];
        for (i, (&s, t)) in self.signs.iter().zip(TERMS).enumerate() {
            let op = match (i, s > 0) {
                (0, true) => "",
                (0, false) => "-",
                (_, true) => " + ",
                (_, false) => " - ",
            };
            write!(f, "{op}{t}")?;
        }
        write!(f, " = {}", self.value)
    }
}
