//! Bipartite conditional probability boxes `p(a, b | x, y)`.
//!
//! Two parties, two binary inputs each, outcomes in `{+1, -1}`. Input `x = 0`
//! is Alice's observable `A` and `x = 1` is `A'`; likewise `y = 0, 1` map to
//! Bob's `B, B'`. Outcomes are stored with index 0 for `+1` and index 1 for
//! `-1`.
//!
//! A [`ConditionalBox`] is always valid: every entry is nonnegative and each
//! setting's four outcome probabilities sum to one. Raw tables that may be
//! invalid are inspected with [`validate_box`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw probability table indexed as `[x][y][a][b]`.
pub type ProbTable = [[[[f64; 2]; 2]; 2]; 2];

/// Normalization tolerance for boxes built in code.
pub const EXACT_TOL: f64 = 1e-12;
/// Normalization tolerance for boxes read from files.
pub const FILE_TOL: f64 = 1e-9;
/// Default tolerance for marginal comparisons.
pub const DEFAULT_SIGNALING_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    /// Outcomes in table order.
    pub const ALL: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn from_index(i: usize) -> Outcome {
        match i {
            0 => Outcome::Plus,
            1 => Outcome::Minus,
            _ => panic!("outcome index {i} out of range"),
        }
    }

    /// The `±1` value of the outcome.
    pub fn value(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn sign_char(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub const ALL: [Party; 2] = [Party::Alice, Party::Bob];
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Alice => f.write_str("alice"),
            Party::Bob => f.write_str("bob"),
        }
    }
}

/// Single-party outcome distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalDistribution {
    pub p_plus: f64,
    pub p_minus: f64,
}

impl MarginalDistribution {
    pub fn distance(&self, other: &MarginalDistribution) -> f64 {
        (self.p_plus - other.p_plus)
            .abs()
            .max((self.p_minus - other.p_minus).abs())
    }
}

/// One failed constraint of a raw probability table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonFinite {
        x: usize,
        y: usize,
        a: Outcome,
        b: Outcome,
    },
    Negative {
        x: usize,
        y: usize,
        a: Outcome,
        b: Outcome,
        value: f64,
    },
    Normalization {
        x: usize,
        y: usize,
        sum: f64,
        deviation: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NonFinite { x, y, a, b } => write!(
                f,
                "p({}{}|{x}{y}) is not finite",
                a.sign_char(),
                b.sign_char()
            ),
            Violation::Negative { x, y, a, b, value } => write!(
                f,
                "p({}{}|{x}{y}) = {value} is negative",
                a.sign_char(),
                b.sign_char()
            ),
            Violation::Normalization {
                x,
                y,
                sum,
                deviation,
            } => write!(f, "setting ({x},{y}) sums to {sum} (off by {deviation:e})"),
        }
    }
}

/// Result of [`validate_box`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks nonnegativity and per-setting normalization of a raw table.
///
/// Every violation is listed with its magnitude; nothing panics.
pub fn validate_box(table: &ProbTable, tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    for x in 0..2 {
        for y in 0..2 {
            let mut sum = 0.0;
            let mut finite = true;
            for a in 0..2 {
                for b in 0..2 {
                    let p = table[x][y][a][b];
                    let (a, b) = (Outcome::from_index(a), Outcome::from_index(b));
                    if !p.is_finite() {
                        finite = false;
                        violations.push(Violation::NonFinite { x, y, a, b });
                    } else if p < 0.0 {
                        violations.push(Violation::Negative {
                            x,
                            y,
                            a,
                            b,
                            value: p,
                        });
                    }
                    sum += p;
                }
            }
            if finite && (sum - 1.0).abs() > tol {
                violations.push(Violation::Normalization {
                    x,
                    y,
                    sum,
                    deviation: (sum - 1.0).abs(),
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Which party, local input and pair of remote inputs a marginal discrepancy
/// was measured on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingWitness {
    pub party: Party,
    pub local_input: usize,
    pub remote_inputs: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoSignalingReport {
    pub holds: bool,
    pub worst_violation: f64,
    pub witness: SignalingWitness,
    pub tolerance: f64,
}

/// A valid conditional probability box. Immutable; operations return new boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalBox {
    probs: ProbTable,
}

impl ConditionalBox {
    /// Wraps a table after validating it at `tol`.
    pub fn from_table(probs: ProbTable, tol: f64) -> Result<Self> {
        let report = validate_box(&probs, tol);
        if report.is_valid() {
            Ok(ConditionalBox { probs })
        } else {
            Err(Error::InvalidBox(report))
        }
    }

    /// Builds a box from `f(x, y, a, b)`, validated at [`EXACT_TOL`].
    pub fn from_fn(f: impl Fn(usize, usize, Outcome, Outcome) -> f64) -> Result<Self> {
        let mut probs = ProbTable::default();
        for (x, row) in probs.iter_mut().enumerate() {
            for (y, setting) in row.iter_mut().enumerate() {
                for (a, pa) in setting.iter_mut().enumerate() {
                    for (b, p) in pa.iter_mut().enumerate() {
                        *p = f(x, y, Outcome::from_index(a), Outcome::from_index(b));
                    }
                }
            }
        }
        Self::from_table(probs, EXACT_TOL)
    }

    /// Every entry `1/4`.
    pub fn uniform() -> Self {
        ConditionalBox {
            probs: [[[[0.25; 2]; 2]; 2]; 2],
        }
    }

    /// The box with correlators `(1, 1, 1, -1)`: equal outcomes except at
    /// `(x, y) = (1, 1)`, where they always differ, each allowed pair with
    /// probability `1/2`.
    pub fn pr() -> Self {
        Self::from_fn(|x, y, a, b| {
            let same = a == b;
            if same != (x == 1 && y == 1) {
                0.5
            } else {
                0.0
            }
        })
        .expect("PR table is valid")
    }

    /// The symmetric box with correlators `[E00, E01, E10, E11]`.
    ///
    /// Per setting, `p(++) = p(--) = (1 + E)/4` and `p(+-) = p(-+) = (1 - E)/4`.
    /// All marginals are exactly `(1/2, 1/2)`.
    pub fn from_correlations(correlators: [f64; 4]) -> Result<Self> {
        for &e in &correlators {
            if !e.is_finite() || e.abs() > 1.0 {
                return Err(Error::CorrelationOutOfRange(e));
            }
        }
        Self::from_fn(|x, y, a, b| {
            let e = correlators[2 * x + y];
            if a == b {
                (1.0 + e) / 4.0
            } else {
                (1.0 - e) / 4.0
            }
        })
    }

    pub fn table(&self) -> &ProbTable {
        &self.probs
    }

    pub fn prob(&self, x: usize, y: usize, a: Outcome, b: Outcome) -> f64 {
        self.probs[x][y][a.index()][b.index()]
    }

    /// Outcome probabilities at one setting in `(++, +-, -+, --)` order.
    pub fn setting_probs(&self, x: usize, y: usize) -> [f64; 4] {
        let s = &self.probs[x][y];
        [s[0][0], s[0][1], s[1][0], s[1][1]]
    }

    /// Marginal of `party` when it uses `local_input` and the other party
    /// uses `remote_input`.
    pub fn marginal(
        &self,
        party: Party,
        local_input: usize,
        remote_input: usize,
    ) -> MarginalDistribution {
        let (x, y) = match party {
            Party::Alice => (local_input, remote_input),
            Party::Bob => (remote_input, local_input),
        };
        let s = &self.probs[x][y];
        match party {
            Party::Alice => MarginalDistribution {
                p_plus: s[0][0] + s[0][1],
                p_minus: s[1][0] + s[1][1],
            },
            Party::Bob => MarginalDistribution {
                p_plus: s[0][0] + s[1][0],
                p_minus: s[0][1] + s[1][1],
            },
        }
    }

    /// `Σ a·b·p(a, b | x, y)`.
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        let s = &self.probs[x][y];
        (s[0][0] + s[1][1]) - (s[0][1] + s[1][0])
    }

    /// Correlators in `[E00, E01, E10, E11]` order.
    pub fn correlators(&self) -> [f64; 4] {
        [
            self.correlator(0, 0),
            self.correlator(0, 1),
            self.correlator(1, 0),
            self.correlator(1, 1),
        ]
    }

    /// Compares each party's marginal across the two remote inputs.
    pub fn check_no_signaling(&self, tol: f64) -> Result<NoSignalingReport> {
        check_tolerance(tol)?;
        let mut worst = -1.0;
        let mut witness = None;
        for party in Party::ALL {
            for local in 0..2 {
                let d = self
                    .marginal(party, local, 0)
                    .distance(&self.marginal(party, local, 1));
                if d > worst {
                    worst = d;
                    witness = Some(SignalingWitness {
                        party,
                        local_input: local,
                        remote_inputs: (0, 1),
                    });
                }
            }
        }
        Ok(NoSignalingReport {
            holds: worst <= tol,
            worst_violation: worst,
            witness: witness.expect("four marginals compared"),
            tolerance: tol,
        })
    }

    /// Entrywise `w·self + (1 - w)·other`.
    pub fn mix(&self, other: &ConditionalBox, w: f64) -> Result<ConditionalBox> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::WeightOutOfRange(w));
        }
        let mut probs = self.probs;
        for (x, row) in probs.iter_mut().enumerate() {
            for (y, setting) in row.iter_mut().enumerate() {
                for (a, pa) in setting.iter_mut().enumerate() {
                    for (b, p) in pa.iter_mut().enumerate() {
                        *p = w * *p + (1.0 - w) * other.probs[x][y][a][b];
                    }
                }
            }
        }
        Ok(ConditionalBox { probs })
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &ConditionalBox) -> f64 {
        self.entries()
            .zip(other.entries())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    /// The 16 entries in `[x][y][a][b]` order.
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.probs.iter().flatten().flatten().flatten().copied()
    }

    /// True when setting `(x, y)` puts all its mass on one outcome pair.
    pub fn is_deterministic_at(&self, x: usize, y: usize) -> bool {
        self.setting_probs(x, y).contains(&1.0)
    }

    pub(crate) fn from_table_unchecked(probs: ProbTable) -> Self {
        ConditionalBox { probs }
    }
}

pub(crate) fn check_tolerance(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::BadTolerance(tol))
    }
}
