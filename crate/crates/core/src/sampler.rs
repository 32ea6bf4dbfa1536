//! Monte Carlo measurement rounds on a box.
//!
//! Randomness comes from ChaCha8 keyed by the plan seed. Round `i` reads
//! exactly [`WORDS_PER_ROUND`] 32-bit words starting at word position
//! `i * WORDS_PER_ROUND` of stream 0: one `u64` for the setting draw and one
//! for the outcome draw. A round's draws therefore depend only on
//! `(seed, i)`, and batches can run on any number of threads with
//! bit-identical tallies.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{ConditionalBox, Outcome, Party};
use crate::error::{Error, Result};

pub const WORDS_PER_ROUND: u128 = 4;
/// Stream used for measurement rounds; other streams are free for
/// independent per-round draws (see the jamming button schedule).
pub const ROUND_STREAM: u64 = 0;
/// Rounds per parallel batch.
const BATCH: usize = 1 << 14;

/// Settings below this many rounds are flagged by [`empirical_no_signaling`].
pub const MIN_ROUNDS_PER_SETTING: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SettingSchedule {
    /// Each round draws `(x, y)` uniformly from the four settings.
    UniformRandom,
    Fixed {
        x: usize,
        y: usize,
    },
    /// Round `i` uses setting `i mod 4` in `(0,0), (0,1), (1,0), (1,1)` order.
    RoundRobin,
}

impl fmt::Display for SettingSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingSchedule::UniformRandom => f.write_str("uniform"),
            SettingSchedule::Fixed { x, y } => write!(f, "fixed:{x},{y}"),
            SettingSchedule::RoundRobin => f.write_str("round-robin"),
        }
    }
}

impl FromStr for SettingSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "uniform" | "uniform-random" => return Ok(SettingSchedule::UniformRandom),
            "round-robin" => return Ok(SettingSchedule::RoundRobin),
            _ => {}
        }
        let bad = || {
            Error::parse(format!(
                "bad schedule '{s}' (expected uniform, round-robin or fixed:X,Y)"
            ))
        };
        let rest = s.strip_prefix("fixed:").ok_or_else(bad)?;
        let (x, y) = rest.split_once(',').ok_or_else(bad)?;
        let bit = |v: &str| match v.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(bad()),
        };
        Ok(SettingSchedule::Fixed {
            x: bit(x)?,
            y: bit(y)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub rounds: u64,
    pub schedule: SettingSchedule,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(rounds: u64, schedule: SettingSchedule, seed: u64) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::NoRounds);
        }
        Ok(ExperimentPlan {
            rounds,
            schedule,
            seed,
        })
    }
}

/// Outcome counts indexed as `[x][y][a][b]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub counts: [[[[u64; 2]; 2]; 2]; 2],
}

impl Tally {
    pub fn record(&mut self, x: usize, y: usize, a: Outcome, b: Outcome) {
        self.counts[x][y][a.index()][b.index()] += 1;
    }

    pub fn rounds_per_setting(&self) -> [[u64; 2]; 2] {
        let mut out = [[0; 2]; 2];
        for (x, row) in self.counts.iter().enumerate() {
            for (y, s) in row.iter().enumerate() {
                out[x][y] = s.iter().flatten().sum();
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().flatten().flatten().sum()
    }

    pub fn count(&self, x: usize, y: usize, a: Outcome, b: Outcome) -> u64 {
        self.counts[x][y][a.index()][b.index()]
    }

    /// Rows `(x, y, a, b, count)` with `a, b` as `±1`, in table order.
    pub fn rows(&self) -> Vec<(usize, usize, i32, i32, u64)> {
        let mut rows = Vec::with_capacity(16);
        for x in 0..2 {
            for y in 0..2 {
                for a in Outcome::ALL {
                    for b in Outcome::ALL {
                        rows.push((x, y, a.value(), b.value(), self.count(x, y, a, b)));
                    }
                }
            }
        }
        rows
    }

    /// `x,y,a,b,count` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,a,b,count\n");
        for (x, y, a, b, c) in self.rows() {
            out.push_str(&format!("{x},{y},{a:+},{b:+},{c}\n"));
        }
        out
    }
}

impl AddAssign<&Tally> for Tally {
    fn add_assign(&mut self, rhs: &Tally) {
        for (l, r) in self
            .counts
            .iter_mut()
            .flatten()
            .flatten()
            .flatten()
            .zip(rhs.counts.iter().flatten().flatten().flatten())
        {
            *l += r;
        }
    }
}

pub(crate) fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// ChaCha8 positioned at the first word of `round` on `stream`.
pub(crate) fn keyed_rng(seed: u64, stream: u64, round: u64, words_per_round: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(round as u128 * words_per_round);
    rng
}

/// Draws one outcome pair from `p(·,·|x,y)` by inverse CDF over
/// `(+,+), (+,-), (-,+), (-,-)`, consuming one `u64`.
pub fn sample_round<R: RngCore + ?Sized>(
    b: &ConditionalBox,
    x: usize,
    y: usize,
    rng: &mut R,
) -> (Outcome, Outcome) {
    let u = unit_f64(rng.next_u64());
    let probs = b.setting_probs(x, y);
    let mut cum = 0.0;
    let mut last_supported = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_supported = k;
        }
        cum += p;
        if u < cum {
            return split_pair(k);
        }
    }
    split_pair(last_supported)
}

fn split_pair(k: usize) -> (Outcome, Outcome) {
    (Outcome::from_index(k / 2), Outcome::from_index(k % 2))
}

/// Setting and outcomes of one round, read from a positioned generator.
pub(crate) fn draw_round<R: RngCore>(
    b: &ConditionalBox,
    schedule: SettingSchedule,
    round: u64,
    rng: &mut R,
) -> (usize, usize, Outcome, Outcome) {
    let setting_word = rng.next_u64();
    let (x, y) = match schedule {
        SettingSchedule::UniformRandom => {
            let s = (setting_word >> 62) as usize;
            (s / 2, s % 2)
        }
        SettingSchedule::Fixed { x, y } => (x, y),
        SettingSchedule::RoundRobin => {
            let s = (round % 4) as usize;
            (s / 2, s % 2)
        }
    };
    let (a, o) = sample_round(b, x, y, rng);
    (x, y, a, o)
}

/// Splits `0..rounds` into fixed batches, processes them in parallel and
/// folds the results in batch order.
pub(crate) fn par_batches<T, F>(rounds: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    let batches = rounds.div_ceil(BATCH as u64);
    (0..batches)
        .into_par_iter()
        .map(|i| {
            let start = i * BATCH as u64;
            f(start, (start + BATCH as u64).min(rounds))
        })
        .collect()
}

/// Runs `plan.rounds` rounds on `b`. Deterministic in `(b, plan)`.
pub fn run_experiment(b: &ConditionalBox, plan: &ExperimentPlan) -> Tally {
    par_batches(plan.rounds, |start, end| {
        let mut rng = keyed_rng(plan.seed, ROUND_STREAM, start, WORDS_PER_ROUND);
        let mut tally = Tally::default();
        for round in start..end {
            let (x, y, a, o) = draw_round(b, plan.schedule, round, &mut rng);
            tally.record(x, y, a, o);
        }
        tally
    })
    .iter()
    .fold(Tally::default(), |mut acc, t| {
        acc += t;
        acc
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub rounds: u64,
}

/// Sample mean of `a·b` with its standard error per setting, in
/// `[E00, E01, E10, E11]` order. Unsampled settings are `None`.
pub fn estimate_correlators(tally: &Tally) -> [Option<CorrelatorEstimate>; 4] {
    std::array::from_fn(|s| {
        let c = &tally.counts[s / 2][s % 2];
        let n = c.iter().flatten().sum::<u64>();
        if n == 0 {
            return None;
        }
        let same = c[0][0] + c[1][1];
        let mean = (2.0 * same as f64 - n as f64) / n as f64;
        let standard_error = if n > 1 {
            // Σ(ab - mean)² = n(1 - mean²) for ab ∈ {±1}
            let var = (n as f64 * (1.0 - mean * mean)).max(0.0) / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Some(CorrelatorEstimate {
            estimate: mean,
            standard_error,
            rounds: n,
        })
    })
}

/// CHSH estimate and its combined standard error, when every setting was sampled.
pub fn estimate_chsh(tally: &Tally) -> Result<(f64, f64)> {
    let est = estimate_correlators(tally);
    let missing: Vec<_> = (0..4)
        .filter(|&s| est[s].is_none())
        .map(|s| (s / 2, s % 2))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSettings(missing));
    }
    let e = est.map(|e| e.expect("checked above"));
    let value = crate::bell::chsh_sum(e.map(|e| e.estimate));
    let se = e
        .iter()
        .map(|e| e.standard_error * e.standard_error)
        .sum::<f64>()
        .sqrt();
    Ok((value, se))
}

/// Two-proportion z statistic for `k1/n1` against `k2/n2` with pooled variance.
pub fn two_proportion_z(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    if var == 0.0 {
        0.0
    } else {
        (p1 - p2) / var.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalZ {
    pub party: Party,
    pub local_input: usize,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSignalingReport {
    pub z_scores: Vec<MarginalZ>,
    pub max_abs_z: f64,
    /// Settings with fewer than [`MIN_ROUNDS_PER_SETTING`] rounds.
    pub insufficient: Vec<(usize, usize)>,
}

/// `+1` count of `party` at `(x, y)`.
fn plus_count(tally: &Tally, party: Party, x: usize, y: usize) -> u64 {
    let c = &tally.counts[x][y];
    match party {
        Party::Alice => c[0][0] + c[0][1],
        Party::Bob => c[0][0] + c[1][0],
    }
}

/// Compares each party's empirical marginal across the two remote inputs.
pub fn empirical_no_signaling(tally: &Tally) -> Result<EmpiricalSignalingReport> {
    let per = tally.rounds_per_setting();
    let missing: Vec<_> = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .filter(|&(x, y)| per[x][y] == 0)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSettings(missing));
    }
    let insufficient = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .filter(|&(x, y)| per[x][y] < MIN_ROUNDS_PER_SETTING)
        .collect();

    let mut z_scores = Vec::with_capacity(4);
    for party in Party::ALL {
        for local in 0..2 {
            let at = |remote: usize| match party {
                Party::Alice => (local, remote),
                Party::Bob => (remote, local),
            };
            let (s0, s1) = (at(0), at(1));
            let z = two_proportion_z(
                plus_count(tally, party, s0.0, s0.1),
                per[s0.0][s0.1],
                plus_count(tally, party, s1.0, s1.1),
                per[s1.0][s1.1],
            );
            z_scores.push(MarginalZ {
                party,
                local_input: local,
                z,
            });
        }
    }
    let max_abs_z = z_scores.iter().map(|z| z.z.abs()).fold(0.0, f64::max);
    Ok(EmpiricalSignalingReport {
        z_scores,
        max_abs_z,
        insufficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn det_plus() -> ConditionalBox {
        ConditionalBox::from_fn(|_, _, a, b| {
            if a == Outcome::Plus && b == Outcome::Plus {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    fn signaling_box() -> ConditionalBox {
        ConditionalBox::from_fn(|x, y, a, _| {
            let pa = if x == 0 && y == 0 { 0.6 } else { 0.5 };
            0.5 * if a == Outcome::Plus { pa } else { 1.0 - pa }
        })
        .unwrap()
    }

    #[test]
    fn point_mass_always_wins() {
        let b = det_plus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(
                sample_round(&b, 1, 0, &mut rng),
                (Outcome::Plus, Outcome::Plus)
            );
        }
    }

    #[test]
    fn pr_outcomes_differ_at_one_one() {
        let pr = ConditionalBox::pr();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let (a, b) = sample_round(&pr, 1, 1, &mut rng);
            assert_ne!(a, b);
            let (a, b) = sample_round(&pr, 0, 1, &mut rng);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_box_passes_chi_square() {
        let u = ConditionalBox::uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0u64; 4];
        let n = 100_000;
        for _ in 0..n {
            let (a, b) = sample_round(&u, 0, 0, &mut rng);
            counts[2 * a.index() + b.index()] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    }

    #[test]
    fn fixed_schedule_bookkeeping() {
        let plan = ExperimentPlan::new(100, SettingSchedule::Fixed { x: 0, y: 0 }, 1).unwrap();
        let t = run_experiment(&ConditionalBox::pr(), &plan);
        assert_eq!(t.rounds_per_setting(), [[100, 0], [0, 0]]);
        assert_eq!(t.total(), 100);
    }

    #[test]
    fn round_robin_is_balanced() {
        let plan = ExperimentPlan::new(40_001, SettingSchedule::RoundRobin, 1).unwrap();
        let t = run_experiment(&ConditionalBox::uniform(), &plan);
        assert_eq!(t.rounds_per_setting(), [[10_001, 10_000], [10_000, 10_000]]);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(matches!(
            ExperimentPlan::new(0, SettingSchedule::RoundRobin, 0),
            Err(Error::NoRounds)
        ));
    }

    #[test]
    fn reruns_and_thread_counts_agree() {
        let plan = ExperimentPlan::new(100_000, SettingSchedule::UniformRandom, 77).unwrap();
        let pr = ConditionalBox::pr()
            .mix(&ConditionalBox::uniform(), 0.3)
            .unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_experiment(&pr, &plan))
        };
        let t1 = run(1);
        assert_eq!(t1, run(1));
        assert_eq!(t1, run(3));
        assert_eq!(t1, run(8));
        let other = ExperimentPlan { seed: 78, ..plan };
        assert_ne!(t1, run_experiment(&pr, &other));
    }

    #[test]
    fn batch_boundaries_do_not_shift_draws() {
        // first rounds of a long run equal a short run with the same seed
        let b = ConditionalBox::from_correlations([0.3, -0.2, 0.9, 0.1]).unwrap();
        let short =
            ExperimentPlan::new(BATCH as u64 + 7, SettingSchedule::UniformRandom, 5).unwrap();
        let mut rng = keyed_rng(5, ROUND_STREAM, 0, WORDS_PER_ROUND);
        let mut manual = Tally::default();
        for r in 0..short.rounds {
            let (x, y, a, o) = draw_round(&b, short.schedule, r, &mut rng);
            manual.record(x, y, a, o);
        }
        assert_eq!(run_experiment(&b, &short), manual);
    }

    #[test]
    fn uniform_schedule_concentrates() {
        let plan = ExperimentPlan::new(1_000_000, SettingSchedule::UniformRandom, 11).unwrap();
        let t = run_experiment(&ConditionalBox::uniform(), &plan);
        let sigma = (1e6f64 * 0.25 * 0.75).sqrt();
        for row in t.rounds_per_setting() {
            for n in row {
                assert!((n as f64 - 250_000.0).abs() < 4.0 * sigma, "{n}");
            }
        }
    }

    #[test]
    fn estimates_for_reference_boxes() {
        let plan = ExperimentPlan::new(1_000_000, SettingSchedule::UniformRandom, 42).unwrap();
        let pr = run_experiment(&ConditionalBox::pr(), &plan);
        for (e, want) in estimate_correlators(&pr).iter().zip([1.0, 1.0, 1.0, -1.0]) {
            let e = e.unwrap();
            assert_eq!(e.estimate, want);
            assert_eq!(e.standard_error, 0.0);
        }

        let u = run_experiment(&ConditionalBox::uniform(), &plan);
        for e in estimate_correlators(&u) {
            let e = e.unwrap();
            assert!(e.estimate.abs() < 4.0 * e.standard_error, "{e:?}");
        }
        let (s, se) = estimate_chsh(&u).unwrap();
        assert!(s.abs() < 4.0 * se);

        let det = run_experiment(&det_plus(), &plan);
        for e in estimate_correlators(&det) {
            assert_eq!(e.unwrap().estimate, 1.0);
            assert_eq!(e.unwrap().standard_error, 0.0);
        }
    }

    #[test]
    fn missing_settings_are_reported() {
        let plan = ExperimentPlan::new(10, SettingSchedule::Fixed { x: 1, y: 0 }, 0).unwrap();
        let t = run_experiment(&ConditionalBox::uniform(), &plan);
        let est = estimate_correlators(&t);
        assert!(est[0].is_none() && est[1].is_none() && est[3].is_none());
        assert!(est[2].is_some());
        assert!(matches!(estimate_chsh(&t), Err(Error::MissingSettings(m)) if m.len() == 3));
        assert!(empirical_no_signaling(&t).is_err());
    }

    #[test]
    fn empirical_signaling_detection() {
        let plan = ExperimentPlan::new(1_000_000, SettingSchedule::UniformRandom, 42).unwrap();
        let pr = empirical_no_signaling(&run_experiment(&ConditionalBox::pr(), &plan)).unwrap();
        assert!(pr.max_abs_z < 5.0, "{pr:?}");
        assert!(pr.insufficient.is_empty());

        let sig = empirical_no_signaling(&run_experiment(&signaling_box(), &plan)).unwrap();
        assert!(sig.max_abs_z > 10.0, "{sig:?}");

        let product = ConditionalBox::from_fn(|x, y, a, b| {
            let pa = [1.0, 0.0][x];
            let qb = [0.0, 1.0][y];
            (if a == Outcome::Plus { pa } else { 1.0 - pa })
                * (if b == Outcome::Plus { qb } else { 1.0 - qb })
        })
        .unwrap();
        let prod = empirical_no_signaling(&run_experiment(&product, &plan)).unwrap();
        assert_eq!(prod.max_abs_z, 0.0);
    }

    #[test]
    fn few_rounds_are_flagged() {
        let plan = ExperimentPlan::new(40, SettingSchedule::RoundRobin, 0).unwrap();
        let r = empirical_no_signaling(&run_experiment(&ConditionalBox::pr(), &plan)).unwrap();
        assert_eq!(r.insufficient.len(), 4);
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(
            "uniform".parse::<SettingSchedule>().unwrap(),
            SettingSchedule::UniformRandom
        );
        assert_eq!(
            "round-robin".parse::<SettingSchedule>().unwrap(),
            SettingSchedule::RoundRobin
        );
        assert_eq!(
            "fixed:1,0".parse::<SettingSchedule>().unwrap(),
            SettingSchedule::Fixed { x: 1, y: 0 }
        );
        assert!("fixed:2,0".parse::<SettingSchedule>().is_err());
        assert!("sometimes".parse::<SettingSchedule>().is_err());
        for s in [
            SettingSchedule::UniformRandom,
            SettingSchedule::RoundRobin,
            SettingSchedule::Fixed { x: 0, y: 1 },
        ] {
            assert_eq!(s.to_string().parse::<SettingSchedule>().unwrap(), s);
        }
    }

    #[test]
    fn csv_layout() {
        let plan = ExperimentPlan::new(8, SettingSchedule::RoundRobin, 0).unwrap();
        let t = run_experiment(&ConditionalBox::pr(), &plan);
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], "x,y,a,b,count");
        assert!(lines[1].starts_with("0,0,+1,+1,"));
        assert!(lines[16].starts_with("1,1,-1,-1,"));
    }
}
