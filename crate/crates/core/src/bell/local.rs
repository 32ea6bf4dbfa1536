use std::fmt;
use std::str::FromStr;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::ChshVariant;
use crate::boxes::{check_tolerance, ConditionalBox, Outcome};
use crate::error::{Error, Result};

/// A deterministic response `f: {0, 1} → {+1, -1}`, encoded in two bits:
/// bit `i` set means `f(i) = -1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResponseFn(pub u8);

impl ResponseFn {
    pub const ALL: [ResponseFn; 4] = [ResponseFn(0), ResponseFn(1), ResponseFn(2), ResponseFn(3)];

    pub fn respond(self, input: usize) -> Outcome {
        if self.0 >> input & 1 == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }
}

/// A deterministic local strategy: Alice answers with `f`, Bob with `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub f: ResponseFn,
    pub g: ResponseFn,
}

impl Vertex {
    pub fn index(self) -> usize {
        4 * self.f.0 as usize + self.g.0 as usize
    }

    pub fn from_index(i: usize) -> Vertex {
        assert!(i < 16, "vertex index {i} out of range");
        Vertex {
            f: ResponseFn((i / 4) as u8),
            g: ResponseFn((i % 4) as u8),
        }
    }

    pub fn to_box(self) -> ConditionalBox {
        ConditionalBox::from_fn(|x, y, a, b| {
            if a == self.f.respond(x) && b == self.g.respond(y) {
                1.0
            } else {
                0.0
            }
        })
        .expect("deterministic table is valid")
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "det-{}{}", self.f.0, self.g.0)
    }
}

impl FromStr for Vertex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .strip_prefix("det-")
            .ok_or_else(|| Error::parse(format!("'{s}' is not a vertex name")))?;
        let d: Vec<u32> = digits.chars().filter_map(|c| c.to_digit(10)).collect();
        match d.as_slice() {
            [f, g] if digits.len() == 2 && *f < 4 && *g < 4 => Ok(Vertex {
                f: ResponseFn(*f as u8),
                g: ResponseFn(*g as u8),
            }),
            _ => Err(Error::parse(format!(
                "'{s}' is not a vertex name (expected det-<f><g> with f, g in 0..4)"
            ))),
        }
    }
}

/// The 16 deterministic boxes, ordered by `(f, g)`.
pub fn deterministic_vertices() -> Vec<ConditionalBox> {
    (0..16).map(|i| Vertex::from_index(i).to_box()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityCertificate {
    pub is_local: bool,
    /// Weights over the 16 vertices in [`Vertex::index`] order, present iff local.
    pub weights: Option<Vec<f64>>,
    /// Strongest CHSH variant, present iff nonlocal.
    pub violated_inequality: Option<ChshVariant>,
    /// Entrywise distance between the box and the closest local box found.
    pub residual: f64,
    /// Set when the box fails the no-signaling check, which by itself rules
    /// out a local model.
    pub signaling: bool,
    pub tolerance: f64,
}

impl LocalityCertificate {
    /// Recombines the weights into a box.
    pub fn recombine(&self) -> Option<ConditionalBox> {
        self.weights.as_deref().map(combine)
    }

    /// Nonzero weights with their vertices.
    pub fn support(&self) -> Vec<(Vertex, f64)> {
        self.weights
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (Vertex::from_index(i), w))
            .collect()
    }
}

pub(crate) fn combine(weights: &[f64]) -> ConditionalBox {
    let vertices = deterministic_vertices();
    let mut table = crate::boxes::ProbTable::default();
    for (v, &w) in vertices.iter().zip(weights) {
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        table[x][y][a][b] += w * v.table()[x][y][a][b];
                    }
                }
            }
        }
    }
    ConditionalBox::from_table_unchecked(table)
}

/// Decides whether `b` is a convex combination of the deterministic vertices.
///
/// Solves `min t` subject to `Σ w = 1`, `w ≥ 0`, `|Σ w_k V_k - p| ≤ t`
/// entrywise. The box is local when the optimum, re-checked by recombining
/// the cleaned weights, is within `tol`.
pub fn is_local(b: &ConditionalBox, tol: f64) -> Result<LocalityCertificate> {
    check_tolerance(tol)?;

    let vertices = deterministic_vertices();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = (0..16)
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));

    lp.add_constraint(w.iter().map(|&v| (v, 1.0)), ComparisonOp::Eq, 1.0);
    for (entry, p) in b.entries().enumerate() {
        let row: Vec<_> = vertices
            .iter()
            .zip(&w)
            .map(|(v, &var)| (var, v.entries().nth(entry).unwrap()))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        lp.add_constraint(row.iter().copied().chain([(t, -1.0)]), ComparisonOp::Le, p);
        lp.add_constraint(row.iter().copied().chain([(t, 1.0)]), ComparisonOp::Ge, p);
    }

    let solution = lp
        .solve()
        .map_err(|e| Error::Solver(format!("{e:?}")))?
        .into_solution()
        .map_err(|_| Error::Solver("interrupted".into()))?;

    let mut weights: Vec<f64> = w.iter().map(|&v| solution.var_value(v).max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|x| *x /= total);
    let residual = combine(&weights).max_abs_diff(b);

    let signaling = !b.check_no_signaling(tol)?.holds;
    if residual <= tol && !signaling {
        Ok(LocalityCertificate {
            is_local: true,
            weights: Some(weights),
            violated_inequality: None,
            residual,
            signaling,
            tolerance: tol,
        })
    } else {
        Ok(LocalityCertificate {
            is_local: false,
            weights: None,
            violated_inequality: Some(ChshVariant::strongest(b.correlators())),
            residual: residual.max(solution.objective()),
            signaling,
            tolerance: tol,
        })
    }
}
