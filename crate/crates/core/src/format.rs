//! File formats and named inputs.
//!
//! Text box format: sixteen records `x y a b p`, whitespace separated, with
//! `a, b` written `+1`/`-1` and `#` starting a comment. Structured format: a
//! JSON object
//!
//! ```json
//! { "kind": "conditional-box",
//!   "settings": { "00": { "++": 0.5, "+-": 0.0, "-+": 0.0, "--": 0.5 }, ... } }
//! ```
//!
//! keyed by setting `xy` and then outcome pair. Both writers emit the
//! shortest decimal that parses back to the same `f64`, so a write/read
//! cycle reproduces every entry exactly.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bell::{LocalityCertificate, Vertex};
use crate::boxes::{ConditionalBox, Outcome, ProbTable};
use crate::error::{Error, Result};
use crate::jamming::{ButtonSchedule, SpacetimeEvent};

pub const BOX_KIND: &str = "conditional-box";

/// Built-in box names accepted wherever a box source is expected.
pub const BUILTIN_NAMES: [&str; 3] = ["pr", "uniform", "quantum-2sqrt2"];

fn outcome_token(s: &str) -> Option<Outcome> {
    match s {
        "+1" | "1" | "+" => Some(Outcome::Plus),
        "-1" | "-" => Some(Outcome::Minus),
        _ => None,
    }
}

fn bit_token(s: &str) -> Option<usize> {
    match s {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

/// Parses the text format into a raw table without validating it.
pub fn parse_text_table(text: &str) -> Result<ProbTable> {
    let mut table = ProbTable::default();
    let mut seen = [[[[false; 2]; 2]; 2]; 2];
    let mut records = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::parse(format!("line {}: {msg}: '{line}'", lineno + 1));
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [x, y, a, b, p] = tokens.as_slice() else {
            return Err(err("expected 5 fields `x y a b p`"));
        };
        let x = bit_token(x).ok_or_else(|| err("x must be 0 or 1"))?;
        let y = bit_token(y).ok_or_else(|| err("y must be 0 or 1"))?;
        let a = outcome_token(a).ok_or_else(|| err("a must be +1 or -1"))?;
        let b = outcome_token(b).ok_or_else(|| err("b must be +1 or -1"))?;
        let p: f64 = p.parse().map_err(|_| err("probability is not a number"))?;
        let slot = &mut seen[x][y][a.index()][b.index()];
        if *slot {
            return Err(err("duplicate record"));
        }
        *slot = true;
        table[x][y][a.index()][b.index()] = p;
        records += 1;
    }
    if records != 16 {
        return Err(Error::parse(format!(
            "expected 16 records, found {records}"
        )));
    }
    Ok(table)
}

pub fn write_text(b: &ConditionalBox) -> String {
    let mut out = String::from("# x y a b p\n");
    for x in 0..2 {
        for y in 0..2 {
            for a in Outcome::ALL {
                for o in Outcome::ALL {
                    out.push_str(&format!(
                        "{x} {y} {:+} {:+} {}\n",
                        a.value(),
                        o.value(),
                        b.prob(x, y, a, o)
                    ));
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct StructuredBox {
    kind: String,
    settings: BTreeMap<String, BTreeMap<String, f64>>,
}

fn pair_key(a: Outcome, b: Outcome) -> String {
    format!("{}{}", a.sign_char(), b.sign_char())
}

/// Parses the structured format into a raw table without validating it.
pub fn parse_structured_table(text: &str) -> Result<ProbTable> {
    let doc: StructuredBox =
        serde_json::from_str(text).map_err(|e| Error::parse(format!("structured box: {e}")))?;
    if doc.kind != BOX_KIND {
        return Err(Error::parse(format!(
            "structured box: kind '{}' is not '{BOX_KIND}'",
            doc.kind
        )));
    }
    let mut table = ProbTable::default();
    for x in 0..2 {
        for y in 0..2 {
            let key = format!("{x}{y}");
            let setting = doc
                .settings
                .get(&key)
                .ok_or_else(|| Error::parse(format!("structured box: missing setting '{key}'")))?;
            if setting.len() != 4 {
                return Err(Error::parse(format!(
                    "structured box: setting '{key}' needs exactly the four pairs ++, +-, -+, --"
                )));
            }
            for a in Outcome::ALL {
                for b in Outcome::ALL {
                    let k = pair_key(a, b);
                    table[x][y][a.index()][b.index()] = *setting.get(&k).ok_or_else(|| {
                        Error::parse(format!("structured box: setting '{key}' lacks '{k}'"))
                    })?;
                }
            }
        }
    }
    if doc.settings.len() != 4 {
        return Err(Error::parse(
            "structured box: expected settings 00, 01, 10, 11",
        ));
    }
    Ok(table)
}

pub fn write_structured(b: &ConditionalBox) -> String {
    let mut settings = BTreeMap::new();
    for x in 0..2 {
        for y in 0..2 {
            let mut pairs = BTreeMap::new();
            for a in Outcome::ALL {
                for o in Outcome::ALL {
                    pairs.insert(pair_key(a, o), b.prob(x, y, a, o));
                }
            }
            settings.insert(format!("{x}{y}"), pairs);
        }
    }
    let doc = StructuredBox {
        kind: BOX_KIND.into(),
        settings,
    };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

/// Parses either format, choosing structured when the text starts with `{`.
pub fn parse_table(text: &str) -> Result<ProbTable> {
    if text.trim_start().starts_with('{') {
        parse_structured_table(text)
    } else {
        parse_text_table(text)
    }
}

/// A built-in box by name: `pr`, `uniform`, `quantum-2sqrt2` or `det-<f><g>`.
pub fn builtin_box(name: &str) -> Option<ConditionalBox> {
    match name {
        "pr" => Some(ConditionalBox::pr()),
        "uniform" => Some(ConditionalBox::uniform()),
        "quantum-2sqrt2" => Some(
            ConditionalBox::from_correlations([
                FRAC_1_SQRT_2,
                FRAC_1_SQRT_2,
                FRAC_1_SQRT_2,
                -FRAC_1_SQRT_2,
            ])
            .expect("in range"),
        ),
        other => other.parse::<Vertex>().ok().map(Vertex::to_box),
    }
}

/// Where a box came from, with the bytes used for the input digest.
#[derive(Clone, Debug)]
pub struct BoxSource {
    pub label: String,
    pub bytes: Vec<u8>,
    pub table: ProbTable,
}

/// Resolves a built-in name or reads a file (relative to `base` if given),
/// returning the raw table for the caller to validate.
pub fn load_box_source(source: &str, base: Option<&Path>) -> Result<BoxSource> {
    if let Some(b) = builtin_box(source) {
        return Ok(BoxSource {
            label: source.to_string(),
            bytes: format!("builtin:{source}").into_bytes(),
            table: *b.table(),
        });
    }
    let path = match base {
        Some(dir) if Path::new(source).is_relative() => dir.join(source),
        _ => Path::new(source).to_path_buf(),
    };
    let bytes = std::fs::read(&path).map_err(|e| {
        Error::parse(format!(
            "'{source}' is neither a built-in box ({}, det-<f><g>) nor a readable file: {e}",
            BUILTIN_NAMES.join(", ")
        ))
    })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::parse(format!("{}: not UTF-8", path.display())))?;
    let table = parse_table(&text)?;
    Ok(BoxSource {
        label: path.display().to_string(),
        bytes,
        table,
    })
}

/// Loads and validates a box at `tol`.
pub fn load_box(source: &str, base: Option<&Path>, tol: f64) -> Result<ConditionalBox> {
    ConditionalBox::from_table(load_box_source(source, base)?.table, tol)
}

/// Parses an angle: a rational multiple of π (`pi/4`, `3pi/4`, `-pi`,
/// `2*pi/3`) or plain radians (`0.785`).
pub fn parse_angle(s: &str) -> Result<f64> {
    let t: String = s.trim().chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || {
        Error::parse(format!(
            "bad angle '{s}' (expected e.g. pi/4, 3pi/4 or radians)"
        ))
    };
    if let Some(idx) = t.find("pi") {
        let (num, rest) = t.split_at(idx);
        let rest = &rest[2..];
        let num = num.strip_suffix('*').unwrap_or(num);
        let num: f64 = match num {
            "" | "+" => 1.0,
            "-" => -1.0,
            n => n.parse::<i64>().map_err(|_| bad())? as f64,
        };
        let den: f64 = match rest {
            "" => 1.0,
            r => {
                let d = r.strip_prefix('/').ok_or_else(bad)?;
                let d: u64 = d.parse().map_err(|_| bad())?;
                if d == 0 {
                    return Err(bad());
                }
                d as f64
            }
        };
        return Ok(PI * num / den);
    }
    let v: f64 = t.parse().map_err(|_| bad())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Scenario config: labeled events `A`, `B`, `J`, box references and the
/// button schedule.
///
/// ```json
/// { "events": [ {"label": "A", "t": 0, "x": -1},
///               {"label": "B", "t": 0, "x": 1},
///               {"label": "J", "t": -0.5, "x": 0} ],
///   "box_off": "pr", "box_on": "uniform", "button": "bernoulli:0.5" }
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub events: Vec<LabeledEvent>,
    pub box_off: String,
    #[serde(default = "default_box_on")]
    pub box_on: String,
    #[serde(default)]
    pub button: Option<String>,
}

fn default_box_on() -> String {
    "uniform".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledEvent {
    pub label: String,
    pub t: f64,
    pub x: f64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(format!("scenario: {e}")))
    }

    /// Events `[A, B, J]`.
    pub fn events(&self) -> Result<[SpacetimeEvent; 3]> {
        let find = |label: &str| {
            let mut hits = self.events.iter().filter(|e| e.label == label);
            match (hits.next(), hits.next()) {
                (Some(e), None) => SpacetimeEvent::new(e.t, e.x)
                    .map_err(|_| Error::parse(format!("scenario: event {label} is not finite"))),
                (None, _) => Err(Error::parse(format!("scenario: missing event {label}"))),
                _ => Err(Error::parse(format!("scenario: event {label} given twice"))),
            }
        };
        if let Some(e) = self
            .events
            .iter()
            .find(|e| !["A", "B", "J"].contains(&e.label.as_str()))
        {
            return Err(Error::parse(format!(
                "scenario: unknown event label '{}'",
                e.label
            )));
        }
        Ok([find("A")?, find("B")?, find("J")?])
    }

    pub fn button(&self) -> Result<Option<ButtonSchedule>> {
        self.button.as_deref().map(str::parse).transpose()
    }
}

/// Certificate rendering with weights listed by response-function pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub is_local: bool,
    pub weights: Option<Vec<WeightEntry>>,
    pub violated_inequality: Option<ViolatedDoc>,
    pub residual: f64,
    pub signaling: bool,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightEntry {
    pub vertex: String,
    pub f: u8,
    pub g: u8,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViolatedDoc {
    pub signs: [i8; 4],
    pub value: f64,
    pub expression: String,
}

impl From<&LocalityCertificate> for CertificateDoc {
    fn from(c: &LocalityCertificate) -> Self {
        CertificateDoc {
            is_local: c.is_local,
            weights: c.weights.as_ref().map(|w| {
                w.iter()
                    .enumerate()
                    .map(|(i, &weight)| {
                        let v = Vertex::from_index(i);
                        WeightEntry {
                            vertex: v.to_string(),
                            f: v.f.0,
                            g: v.g.0,
                            weight,
                        }
                    })
                    .collect()
            }),
            violated_inequality: c.violated_inequality.map(|v| ViolatedDoc {
                signs: v.signs,
                value: v.value,
                expression: v.to_string(),
            }),
            residual: c.residual,
            signaling: c.signaling,
            tolerance: c.tolerance,
        }
    }
}
