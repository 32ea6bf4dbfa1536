//! Jamming in 1+1 dimensional Minkowski space (`c = 1`).
//!
//! Alice measures at event `A`, Bob at `B`, and a jammer presses a button at
//! `J`, which switches the shared correlations from `box_off` to `box_on`.
//! Such a scenario is admissible when the three events are pairwise
//! spacelike, neither party's marginals reveal the button (unary condition),
//! and the overlap of the forward cones of `A` and `B` lies inside the
//! forward cone of `J` (binary condition).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::bell::Vertex;
use crate::boxes::{check_tolerance, ConditionalBox, Outcome, Party, DEFAULT_SIGNALING_TOL};
use crate::error::{Error, Result};
use crate::sampler::{
    draw_round, empirical_no_signaling, estimate_chsh, keyed_rng, par_batches, two_proportion_z,
    unit_f64, EmpiricalSignalingReport, ExperimentPlan, MarginalZ, Tally, ROUND_STREAM,
    WORDS_PER_ROUND,
};

/// Stream for the Bernoulli button draws.
pub const BUTTON_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeEvent {
    pub t: f64,
    pub x: f64,
}

impl SpacetimeEvent {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        for v in [t, x] {
            if !v.is_finite() {
                return Err(Error::NonFinite(v));
            }
        }
        Ok(SpacetimeEvent { t, x })
    }
}

impl fmt::Display for SpacetimeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t={}, x={})", self.t, self.x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalClass {
    Timelike,
    Lightlike,
    Spacelike,
}

/// Sign of `Δt² - Δx²`, computed as `|Δt|` against `|Δx|`.
pub fn interval_class(e1: &SpacetimeEvent, e2: &SpacetimeEvent) -> IntervalClass {
    let dt = (e1.t - e2.t).abs();
    let dx = (e1.x - e2.x).abs();
    match dt.partial_cmp(&dx).expect("finite coordinates") {
        Ordering::Greater => IntervalClass::Timelike,
        Ordering::Equal => IntervalClass::Lightlike,
        Ordering::Less => IntervalClass::Spacelike,
    }
}

/// Closed forward cone: `t_p - t_apex ≥ |x_p - x_apex|`.
pub fn in_forward_cone(p: &SpacetimeEvent, apex: &SpacetimeEvent) -> bool {
    p.t - apex.t >= (p.x - apex.x).abs()
}

/// Apex of the cone equal to the intersection of the forward cones of `a`
/// and `b`.
///
/// In light-cone coordinates `u = t - x`, `v = t + x` a forward cone is the
/// quadrant `u ≥ u0, v ≥ v0`, so the intersection is the quadrant at the
/// componentwise maximum. For spacelike or lightlike pairs with
/// `x_a ≤ x_b` this is `((t_a + t_b + x_b - x_a)/2, (x_a + x_b + t_b - t_a)/2)`;
/// for timelike pairs it is the later event.
pub fn forward_cone_intersection_apex(a: &SpacetimeEvent, b: &SpacetimeEvent) -> SpacetimeEvent {
    if in_forward_cone(b, a) {
        return *b;
    }
    if in_forward_cone(a, b) {
        return *a;
    }
    let u = (a.t - a.x).max(b.t - b.x);
    let v = (a.t + a.x).max(b.t + b.x);
    SpacetimeEvent {
        t: (u + v) / 2.0,
        x: (v - u) / 2.0,
    }
}

/// The overlap of the forward cones of `a` and `b` lies within the forward
/// cone of `j`.
pub fn binary_condition(a: &SpacetimeEvent, b: &SpacetimeEvent, j: &SpacetimeEvent) -> bool {
    in_forward_cone(&forward_cone_intersection_apex(a, b), j)
}

/// Largest difference between any single-party marginal of the two boxes.
pub fn marginal_discrepancy(box_on: &ConditionalBox, box_off: &ConditionalBox) -> f64 {
    let mut worst = 0.0f64;
    for party in Party::ALL {
        for local in 0..2 {
            for remote in 0..2 {
                worst = worst.max(
                    box_on
                        .marginal(party, local, remote)
                        .distance(&box_off.marginal(party, local, remote)),
                );
            }
        }
    }
    worst
}

/// Neither party can tell from its own marginals which box is in use.
pub fn unary_condition(
    box_on: &ConditionalBox,
    box_off: &ConditionalBox,
    tol: f64,
) -> Result<bool> {
    check_tolerance(tol)?;
    Ok(marginal_discrepancy(box_on, box_off) <= tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct JammingScenario {
    pub event_a: SpacetimeEvent,
    pub event_b: SpacetimeEvent,
    pub event_j: SpacetimeEvent,
    pub box_off: ConditionalBox,
    pub box_on: ConditionalBox,
}

impl JammingScenario {
    /// Both boxes must be no-signaling at [`DEFAULT_SIGNALING_TOL`].
    pub fn new(
        event_a: SpacetimeEvent,
        event_b: SpacetimeEvent,
        event_j: SpacetimeEvent,
        box_off: ConditionalBox,
        box_on: ConditionalBox,
    ) -> Result<Self> {
        for (which, b) in [("box_off", &box_off), ("box_on", &box_on)] {
            let report = b.check_no_signaling(DEFAULT_SIGNALING_TOL)?;
            if !report.holds {
                return Err(Error::SignalingBox {
                    which,
                    worst_violation: report.worst_violation,
                });
            }
        }
        Ok(JammingScenario {
            event_a,
            event_b,
            event_j,
            box_off,
            box_on,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separations {
    pub a_b: IntervalClass,
    pub a_j: IntervalClass,
    pub b_j: IntervalClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub spacelike_ok: bool,
    pub unary_ok: bool,
    pub binary_ok: bool,
    pub admissible: bool,
    pub separations: Separations,
    pub cone_apex: SpacetimeEvent,
    pub marginal_discrepancy: f64,
    /// Lightlike `A–J` or `B–J` pairs, accepted but reported.
    pub warnings: Vec<String>,
}

impl ConditionReport {
    /// Names of the failed conditions: `spacelike`, `unary`, `binary`.
    pub fn failed(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.spacelike_ok {
            out.push("spacelike");
        }
        if !self.unary_ok {
            out.push("unary");
        }
        if !self.binary_ok {
            out.push("binary");
        }
        out
    }
}

pub fn check_scenario(s: &JammingScenario, tol: f64) -> Result<ConditionReport> {
    let separations = Separations {
        a_b: interval_class(&s.event_a, &s.event_b),
        a_j: interval_class(&s.event_a, &s.event_j),
        b_j: interval_class(&s.event_b, &s.event_j),
    };
    let mut warnings = Vec::new();
    let mut spacelike_ok = separations.a_b == IntervalClass::Spacelike;
    for (name, class) in [("A-J", separations.a_j), ("B-J", separations.b_j)] {
        match class {
            IntervalClass::Spacelike => {}
            IntervalClass::Lightlike => {
                warnings.push(format!("{name} is lightlike, not strictly spacelike"))
            }
            IntervalClass::Timelike => spacelike_ok = false,
        }
    }
    let discrepancy = marginal_discrepancy(&s.box_on, &s.box_off);
    let unary_ok = unary_condition(&s.box_on, &s.box_off, tol)?;
    let binary_ok = binary_condition(&s.event_a, &s.event_b, &s.event_j);
    Ok(ConditionReport {
        spacelike_ok,
        unary_ok,
        binary_ok,
        admissible: spacelike_ok && unary_ok && binary_ok,
        separations,
        cone_apex: forward_cone_intersection_apex(&s.event_a, &s.event_b),
        marginal_discrepancy: discrepancy,
        warnings,
    })
}

/// Deterministic vertices that, used as `box_on` against `box_off` at the
/// given events, give an admissible scenario while changing some marginal.
pub fn admissible_deterministic_targets(
    box_off: &ConditionalBox,
    events: [SpacetimeEvent; 3],
    tol: f64,
) -> Result<Vec<Vertex>> {
    let mut out = Vec::new();
    for i in 0..16 {
        let v = Vertex::from_index(i);
        let on = v.to_box();
        let scenario = JammingScenario::new(events[0], events[1], events[2], box_off.clone(), on)?;
        let report = check_scenario(&scenario, tol)?;
        if report.admissible && report.marginal_discrepancy > tol {
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "p")]
pub enum ButtonSchedule {
    All,
    None,
    /// Pressed on even rounds.
    Alternate,
    Bernoulli(f64),
}

impl ButtonSchedule {
    /// Per-round button states. Bernoulli draws come from stream
    /// [`BUTTON_STREAM`] of the seeded generator, one `u64` per round.
    pub fn expand(&self, rounds: u64, seed: u64) -> Vec<bool> {
        match *self {
            ButtonSchedule::All => vec![true; rounds as usize],
            ButtonSchedule::None => vec![false; rounds as usize],
            ButtonSchedule::Alternate => (0..rounds).map(|i| i % 2 == 0).collect(),
            ButtonSchedule::Bernoulli(p) => {
                let mut rng = keyed_rng(seed, BUTTON_STREAM, 0, 2);
                (0..rounds).map(|_| unit_f64(rng.next_u64()) < p).collect()
            }
        }
    }
}

impl fmt::Display for ButtonSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ButtonSchedule::All => f.write_str("all"),
            ButtonSchedule::None => f.write_str("none"),
            ButtonSchedule::Alternate => f.write_str("alternate"),
            ButtonSchedule::Bernoulli(p) => write!(f, "bernoulli:{p}"),
        }
    }
}

impl FromStr for ButtonSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(ButtonSchedule::All),
            "none" => Ok(ButtonSchedule::None),
            "alternate" => Ok(ButtonSchedule::Alternate),
            other => {
                let p: f64 = other
                    .strip_prefix("bernoulli:")
                    .and_then(|p| p.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::parse(format!(
                            "bad button schedule '{other}' (expected all, none, alternate or bernoulli:P)"
                        ))
                    })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::parse(format!(
                        "button probability {p} outside [0, 1]"
                    )));
                }
                Ok(ButtonSchedule::Bernoulli(p))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JamRound {
    pub x: u8,
    pub y: u8,
    pub a: Outcome,
    pub b: Outcome,
    pub pressed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub rounds: Vec<JamRound>,
}

/// Estimate with standard error; absent when some setting had no rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub value: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JamSummary {
    pub pressed_rounds: u64,
    pub unpressed_rounds: u64,
    pub pressed_chsh: Option<ChshEstimate>,
    pub unpressed_chsh: Option<ChshEstimate>,
    /// `|pressed - unpressed|` CHSH difference in combined standard errors.
    pub chsh_difference_z: Option<f64>,
    /// Pressed against unpressed marginals, per party and local input,
    /// pooled over the remote input as each party sees them.
    pub unary_z_scores: Vec<MarginalZ>,
    pub max_unary_z: f64,
    pub no_signaling_pressed: Option<EmpiricalSignalingReport>,
    pub no_signaling_unpressed: Option<EmpiricalSignalingReport>,
}

impl Transcript {
    /// Tallies of the `(pressed, unpressed)` subsets.
    pub fn split_tallies(&self) -> (Tally, Tally) {
        let mut on = Tally::default();
        let mut off = Tally::default();
        for r in &self.rounds {
            let t = if r.pressed { &mut on } else { &mut off };
            t.record(r.x as usize, r.y as usize, r.a, r.b);
        }
        (on, off)
    }

    /// What one party sees: its input and outcome per round.
    pub fn party_view(&self, party: Party) -> Vec<(u8, Outcome)> {
        self.rounds
            .iter()
            .map(|r| match party {
                Party::Alice => (r.x, r.a),
                Party::Bob => (r.y, r.b),
            })
            .collect()
    }

    pub fn summary(&self) -> JamSummary {
        let (on, off) = self.split_tallies();
        let chsh = |t: &Tally| {
            estimate_chsh(t)
                .ok()
                .map(|(value, standard_error)| ChshEstimate {
                    value,
                    standard_error,
                })
        };
        let (pressed_chsh, unpressed_chsh) = (chsh(&on), chsh(&off));
        let chsh_difference_z = match (pressed_chsh, unpressed_chsh) {
            (Some(p), Some(u)) => {
                let se = p.standard_error.hypot(u.standard_error);
                let d = (p.value - u.value).abs();
                Some(if se > 0.0 {
                    d / se
                } else if d > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                })
            }
            _ => None,
        };

        let view = |t: &Tally, party: Party, local: usize| -> (u64, u64) {
            let mut plus = 0;
            let mut n = 0;
            for remote in 0..2 {
                let (x, y) = match party {
                    Party::Alice => (local, remote),
                    Party::Bob => (remote, local),
                };
                let c = &t.counts[x][y];
                n += c.iter().flatten().sum::<u64>();
                plus += match party {
                    Party::Alice => c[0][0] + c[0][1],
                    Party::Bob => c[0][0] + c[1][0],
                };
            }
            (plus, n)
        };
        let mut unary_z_scores = Vec::new();
        for party in Party::ALL {
            for local in 0..2 {
                let (k1, n1) = view(&on, party, local);
                let (k2, n2) = view(&off, party, local);
                unary_z_scores.push(MarginalZ {
                    party,
                    local_input: local,
                    z: two_proportion_z(k1, n1, k2, n2),
                });
            }
        }
        let max_unary_z = unary_z_scores.iter().map(|z| z.z.abs()).fold(0.0, f64::max);

        JamSummary {
            pressed_rounds: on.total(),
            unpressed_rounds: off.total(),
            pressed_chsh,
            unpressed_chsh,
            chsh_difference_z,
            unary_z_scores,
            max_unary_z,
            no_signaling_pressed: empirical_no_signaling(&on).ok(),
            no_signaling_unpressed: empirical_no_signaling(&off).ok(),
        }
    }
}

/// Runs the plan, drawing each round from `box_on` when the button is
/// pressed that round and from `box_off` otherwise.
///
/// Refuses inadmissible scenarios, naming the failed conditions.
pub fn simulate_jamming(
    s: &JammingScenario,
    plan: &ExperimentPlan,
    button: &[bool],
    tol: f64,
) -> Result<Transcript> {
    let report = check_scenario(s, tol)?;
    if !report.admissible {
        return Err(Error::Inadmissible(report.failed()));
    }
    if button.len() as u64 != plan.rounds {
        return Err(Error::ScheduleLength {
            expected: plan.rounds as usize,
            got: button.len(),
        });
    }
    let rounds = par_batches(plan.rounds, |start, end| {
        let mut rng = keyed_rng(plan.seed, ROUND_STREAM, start, WORDS_PER_ROUND);
        (start..end)
            .map(|round| {
                let pressed = button[round as usize];
                let b = if pressed { &s.box_on } else { &s.box_off };
                let (x, y, a, o) = draw_round(b, plan.schedule, round, &mut rng);
                JamRound {
                    x: x as u8,
                    y: y as u8,
                    a,
                    b: o,
                    pressed,
                }
            })
            .collect::<Vec<_>>()
    })
    .concat();
    Ok(Transcript { rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SettingSchedule;
    use proptest::prelude::*;

    fn ev(t: f64, x: f64) -> SpacetimeEvent {
        SpacetimeEvent::new(t, x).unwrap()
    }

    /// No-signaling box whose Alice marginal at `x = 0` is `(0.6, 0.4)`.
    fn biased() -> ConditionalBox {
        ConditionalBox::from_fn(|x, _, a, _| {
            let pa = if x == 0 { 0.6 } else { 0.5 };
            0.5 * if a == Outcome::Plus { pa } else { 1.0 - pa }
        })
        .unwrap()
    }

    fn scenario(j: SpacetimeEvent, on: ConditionalBox) -> JammingScenario {
        JammingScenario::new(ev(0.0, -1.0), ev(0.0, 1.0), j, ConditionalBox::pr(), on).unwrap()
    }

    #[test]
    fn interval_examples() {
        let o = ev(0.0, 0.0);
        assert_eq!(interval_class(&o, &ev(1.0, 0.0)), IntervalClass::Timelike);
        assert_eq!(interval_class(&o, &ev(0.0, 1.0)), IntervalClass::Spacelike);
        assert_eq!(interval_class(&o, &ev(1.0, 1.0)), IntervalClass::Lightlike);
        assert_eq!(interval_class(&o, &ev(-1.0, 1.0)), IntervalClass::Lightlike);
    }

    #[test]
    fn cone_examples() {
        let o = ev(0.0, 0.0);
        assert!(in_forward_cone(&o, &o));
        assert!(in_forward_cone(&ev(2.0, 1.0), &o));
        assert!(!in_forward_cone(&ev(1.0, 2.0), &o));
        assert!(in_forward_cone(&ev(1.0, -1.0), &o));
        assert!(!in_forward_cone(&ev(-1.0, 0.0), &o));
    }

    #[test]
    fn apex_examples() {
        let apex = forward_cone_intersection_apex(&ev(0.0, -1.0), &ev(0.0, 1.0));
        assert_eq!(apex, ev(1.0, 0.0));
        let a = ev(0.3, 0.7);
        assert_eq!(forward_cone_intersection_apex(&a, &a), a);
        assert_eq!(
            forward_cone_intersection_apex(&ev(0.0, 0.0), &ev(5.0, 0.0)),
            ev(5.0, 0.0)
        );
        // argument order does not matter
        assert_eq!(
            forward_cone_intersection_apex(&ev(0.0, 1.0), &ev(0.0, -1.0)),
            ev(1.0, 0.0)
        );
    }

    #[test]
    fn apex_closed_form_for_spacelike_pairs() {
        let (a, b) = (ev(0.5, -2.0), ev(1.0, 3.0));
        let apex = forward_cone_intersection_apex(&a, &b);
        assert_eq!(apex.t, (a.t + b.t + b.x - a.x) / 2.0);
        assert_eq!(apex.x, (a.x + b.x + b.t - a.t) / 2.0);
    }

    #[test]
    fn binary_examples() {
        let (a, b) = (ev(0.0, -1.0), ev(0.0, 1.0));
        assert!(binary_condition(&a, &b, &ev(-1.0, 0.0)));
        assert!(binary_condition(&a, &b, &ev(-0.5, 0.0)));
        assert!(!binary_condition(&a, &b, &ev(2.0, 0.0)));
        assert!(binary_condition(&a, &b, &a));
        assert!(binary_condition(&a, &b, &b));
    }

    #[test]
    fn unary_examples() {
        let pr = ConditionalBox::pr();
        assert!(unary_condition(&ConditionalBox::uniform(), &pr, 1e-9).unwrap());
        assert!(!unary_condition(&biased(), &pr, 1e-9).unwrap());
        assert!(unary_condition(&pr, &pr, 1e-9).unwrap());
        assert!(unary_condition(&pr, &pr, 0.0).is_err());
    }

    #[test]
    fn scenario_examples() {
        let ok = check_scenario(&scenario(ev(-0.5, 0.0), ConditionalBox::uniform()), 1e-9).unwrap();
        assert!(ok.admissible, "{ok:?}");
        assert!(ok.warnings.is_empty());
        assert_eq!(ok.cone_apex, ev(1.0, 0.0));

        let lightlike =
            check_scenario(&scenario(ev(-1.0, 0.0), ConditionalBox::uniform()), 1e-9).unwrap();
        assert!(lightlike.admissible);
        assert_eq!(lightlike.warnings.len(), 2);

        let late =
            check_scenario(&scenario(ev(2.0, 0.0), ConditionalBox::uniform()), 1e-9).unwrap();
        assert!(!late.admissible);
        assert!(late.failed().contains(&"binary"));

        let biased = check_scenario(&scenario(ev(-0.5, 0.0), biased()), 1e-9).unwrap();
        assert_eq!(biased.failed(), vec!["unary"]);

        let early =
            check_scenario(&scenario(ev(-5.0, 0.0), ConditionalBox::uniform()), 1e-9).unwrap();
        assert_eq!(early.failed(), vec!["spacelike"]);
    }

    #[test]
    fn signaling_boxes_are_rejected() {
        let sig = ConditionalBox::from_fn(|x, y, a, _| {
            let pa = if x == 0 && y == 0 { 0.6 } else { 0.5 };
            0.5 * if a == Outcome::Plus { pa } else { 1.0 - pa }
        })
        .unwrap();
        let err = JammingScenario::new(
            ev(0.0, -1.0),
            ev(0.0, 1.0),
            ev(-0.5, 0.0),
            ConditionalBox::pr(),
            sig,
        );
        assert!(matches!(
            err,
            Err(Error::SignalingBox {
                which: "box_on",
                ..
            })
        ));
    }

    #[test]
    fn no_deterministic_jamming_target_exists() {
        let events = [ev(0.0, -1.0), ev(0.0, 1.0), ev(-0.5, 0.0)];
        let targets =
            admissible_deterministic_targets(&ConditionalBox::pr(), events, 1e-9).unwrap();
        assert!(targets.is_empty());
        // a deterministic box_off only admits itself, which alters nothing
        let v = Vertex::from_index(6).to_box();
        assert!(admissible_deterministic_targets(&v, events, 1e-9)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn simulation_refuses_inadmissible() {
        let plan = ExperimentPlan::new(10, SettingSchedule::RoundRobin, 0).unwrap();
        let s = scenario(ev(2.0, 0.0), ConditionalBox::uniform());
        assert!(matches!(
            simulate_jamming(&s, &plan, &[true; 10], 1e-9),
            Err(Error::Inadmissible(f)) if f == vec!["spacelike", "binary"]
        ));
        let s = scenario(ev(-0.5, 0.0), ConditionalBox::uniform());
        assert!(matches!(
            simulate_jamming(&s, &plan, &[true; 9], 1e-9),
            Err(Error::ScheduleLength { .. })
        ));
    }

    #[test]
    fn all_pressed_and_never_pressed() {
        let s = scenario(ev(-0.5, 0.0), ConditionalBox::uniform());
        let plan = ExperimentPlan::new(200_000, SettingSchedule::UniformRandom, 8).unwrap();

        let all = ButtonSchedule::All.expand(plan.rounds, plan.seed);
        let t = simulate_jamming(&s, &plan, &all, 1e-9).unwrap().summary();
        let on = t.pressed_chsh.unwrap();
        assert!(on.value.abs() < 4.0 * on.standard_error, "{on:?}");
        assert!(t.unpressed_chsh.is_none());

        let none = ButtonSchedule::None.expand(plan.rounds, plan.seed);
        let t = simulate_jamming(&s, &plan, &none, 1e-9).unwrap().summary();
        let off = t.unpressed_chsh.unwrap();
        assert_eq!(off.value, 4.0);
        assert_eq!(t.pressed_rounds, 0);
    }

    #[test]
    fn half_pressed_views_hide_the_button() {
        let s = scenario(ev(-0.5, 0.0), ConditionalBox::uniform());
        let plan = ExperimentPlan::new(200_000, SettingSchedule::UniformRandom, 21).unwrap();
        let button = ButtonSchedule::Bernoulli(0.5).expand(plan.rounds, plan.seed);
        let transcript = simulate_jamming(&s, &plan, &button, 1e-9).unwrap();
        let sum = transcript.summary();
        assert!(sum.max_unary_z < 5.0, "{:?}", sum.unary_z_scores);
        assert!(sum.chsh_difference_z.unwrap() > 10.0);
        assert_eq!(transcript.party_view(Party::Bob).len(), 200_000);
    }

    #[test]
    fn button_schedules() {
        assert_eq!(
            ButtonSchedule::Alternate.expand(4, 0),
            vec![true, false, true, false]
        );
        let b = ButtonSchedule::Bernoulli(0.25).expand(100_000, 3);
        let k = b.iter().filter(|&&p| p).count() as f64;
        assert!((k - 25_000.0).abs() < 4.0 * (1e5f64 * 0.25 * 0.75).sqrt());
        assert_eq!(b, ButtonSchedule::Bernoulli(0.25).expand(100_000, 3));
        for s in ["all", "none", "alternate", "bernoulli:0.5"] {
            assert_eq!(s.parse::<ButtonSchedule>().unwrap().to_string(), s);
        }
        assert!("bernoulli:1.5".parse::<ButtonSchedule>().is_err());
        assert!("often".parse::<ButtonSchedule>().is_err());
    }

    fn dyadic() -> impl Strategy<Value = f64> {
        (-4000i32..4000).prop_map(|v| v as f64 / 4.0)
    }

    proptest! {
        #[test]
        fn moving_the_jammer_earlier_keeps_binary(
            at in dyadic(), ax in dyadic(), bt in dyadic(), bx in dyadic(),
            jt in dyadic(), jx in dyadic(), back in 0i32..400, side in -400i32..400,
        ) {
            let (a, b, j) = (ev(at, ax), ev(bt, bx), ev(jt, jx));
            // J' in the backward cone of J
            let dt = back as f64;
            let dx = (side as f64).clamp(-dt, dt);
            let earlier = ev(jt - dt, jx + dx);
            if binary_condition(&a, &b, &j) {
                prop_assert!(binary_condition(&a, &b, &earlier));
            }
        }

        #[test]
        fn unary_is_symmetric(es in prop::array::uniform4(-1.0f64..=1.0), fs in prop::array::uniform4(-1.0f64..=1.0)) {
            let p = ConditionalBox::from_correlations(es).unwrap();
            let q = biased().mix(&ConditionalBox::from_correlations(fs).unwrap(), 0.5).unwrap();
            prop_assert_eq!(unary_condition(&p, &q, 1e-9).unwrap(), unary_condition(&q, &p, 1e-9).unwrap());
            prop_assert!(unary_condition(&q, &q, 1e-9).unwrap());
        }
    }
}
