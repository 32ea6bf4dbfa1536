//! The `nonlocal` command-line tool.
//!
//! Every command prints a JSON envelope with the command echo, a SHA-256
//! digest of its input, the results and provenance (version, seed,
//! tolerance). Exit codes: 0 success, 1 constraint violation, 2 parse or
//! usage error, 3 nonlocal box, 4 inadmissible jamming scenario.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bell::{
    chsh_from_model, chsh_of_box, classify, is_local, CLASSIFY_SLACK, LOCAL_BOUND,
    NO_SIGNALING_BOUND, QUANTUM_BOUND,
};
use crate::boxes::{validate_box, ConditionalBox, FILE_TOL};
use crate::correlations::{correlators_at, AxisConfiguration, CorrelationModel};
use crate::error::Error;
use crate::format::{
    load_box_source, parse_angle, write_structured, write_text, CertificateDoc, ScenarioConfig,
};
use crate::jamming::{check_scenario, simulate_jamming, ButtonSchedule, JammingScenario};
use crate::sampler::{
    empirical_no_signaling, estimate_chsh, estimate_correlators, run_experiment, ExperimentPlan,
    SettingSchedule,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_NONLOCAL: u8 = 3;
pub const EXIT_INADMISSIBLE: u8 = 4;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "NONLOCAL_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "nonlocal",
    version,
    about = "Nonlocal boxes, CHSH bounds and jamming checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a box and check that it does not signal.
    BoxCheck(BoxArgs),
    /// CHSH value and bound class of a box or of a correlation model at given axes.
    Chsh(ChshArgs),
    /// Decide membership in the local polytope.
    Local(BoxArgs),
    /// Simulate measurement rounds and estimate correlators.
    Sample(SampleArgs),
    /// Check a jamming scenario and simulate it when admissible.
    Jam(JamArgs),
    /// Write a box in the text or structured format.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct BoxArgs {
    /// Built-in name (pr, uniform, quantum-2sqrt2, det-<f><g>) or file path.
    #[arg(long = "box")]
    pub source: String,
    #[arg(long, default_value_t = FILE_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ChshArgs {
    #[arg(long = "box", conflicts_with_all = ["model", "spacing", "angles"])]
    pub source: Option<String>,
    /// classical, quantum or superquantum.
    #[arg(long, required_unless_present = "source")]
    pub model: Option<String>,
    /// Successive angle between axes a', b, a, b' (e.g. pi/4).
    #[arg(long, conflicts_with = "angles")]
    pub spacing: Option<String>,
    /// Axis directions a',b,a,b' separated by commas.
    #[arg(long)]
    pub angles: Option<String>,
    #[arg(long, default_value_t = FILE_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SampleFormat {
    Csv,
    Structured,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoxFormat {
    Text,
    Structured,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "box")]
    pub source: String,
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Defaults to the plan file, then $NONLOCAL_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// uniform, round-robin or fixed:X,Y.
    #[arg(long)]
    pub schedule: Option<String>,
    /// JSON plan file with any of `rounds`, `schedule`, `seed`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SampleFormat::Structured)]
    pub format: SampleFormat,
    /// Write the tally here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-setting estimates as CSV.
    #[arg(long)]
    pub estimates_out: Option<PathBuf>,
    #[arg(long, default_value_t = FILE_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct JamArgs {
    /// Scenario config (JSON).
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub rounds: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Button schedule: all, none, alternate or bernoulli:P.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Measurement setting schedule.
    #[arg(long, default_value = "uniform")]
    pub settings: String,
    #[arg(long, default_value_t = FILE_TOL)]
    pub tol: f64,
    /// Write the transcript as `x,y,a,b,pressed` CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "box")]
    pub source: String,
    #[arg(long, value_enum, default_value_t = BoxFormat::Structured)]
    pub format: BoxFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = FILE_TOL)]
    pub tol: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutputEnvelope {
    pub command: String,
    pub input_digest: String,
    pub results: Value,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub exit_code: u8,
}

/// Captured result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    code: u8,
    message: String,
    results: Option<Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidBox(_) | Error::SignalingBox { .. } => EXIT_VIOLATION,
            Error::Inadmissible(_) => EXIT_INADMISSIBLE,
            _ => EXIT_PARSE,
        };
        Failure {
            code,
            message: e.to_string(),
            results: None,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

struct Success {
    code: u8,
    digest_input: Vec<u8>,
    results: Value,
    seed: Option<u64>,
    tolerance: Option<f64>,
    /// Written to stdout instead of the envelope, which then goes to stderr.
    raw_stdout: Option<String>,
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn check_tol(tol: f64) -> Result<f64, Failure> {
    crate::boxes::check_tolerance(tol)?;
    Ok(tol)
}

fn load(source: &str, base: Option<&Path>, tol: f64) -> Result<(ConditionalBox, Vec<u8>), Failure> {
    let src = load_box_source(source, base)?;
    let report = validate_box(&src.table, tol);
    if !report.is_valid() {
        return Err(Failure {
            code: EXIT_VIOLATION,
            message: format!("invalid box {}: {report}", src.label),
            results: Some(json!({ "valid": false, "validation": report })),
        });
    }
    let b = ConditionalBox::from_table(src.table, tol)?;
    Ok((b, src.bytes))
}

fn seed_or_env(seed: Option<u64>, fallback: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = seed.or(fallback) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Failure::from(Error::parse(format!(
                "{SEED_ENV}='{v}' is not an unsigned integer"
            )))
        }),
        Err(_) => Ok(0),
    }
}

fn correlator_json(e: [f64; 4]) -> Value {
    json!({ "E(A,B)": e[0], "E(A,B')": e[1], "E(A',B)": e[2], "E(A',B')": e[3] })
}

fn cmd_box_check(args: &BoxArgs) -> Result<Success, Failure> {
    let tol = check_tol(args.tol)?;
    let (b, bytes) = load(&args.source, None, tol)?;
    let ns = b.check_no_signaling(tol)?;
    let code = if ns.holds { EXIT_OK } else { EXIT_VIOLATION };
    Ok(Success {
        code,
        digest_input: bytes,
        results: json!({
            "valid": true,
            "validation": validate_box(b.table(), tol),
            "no_signaling": ns,
        }),
        seed: None,
        tolerance: Some(tol),
        raw_stdout: None,
    })
}

fn cmd_chsh(args: &ChshArgs) -> Result<Success, Failure> {
    let tol = check_tol(args.tol)?;
    let (value, correlators, digest_input, extra) = if let Some(source) = &args.source {
        let (b, bytes) = load(source, None, tol)?;
        (
            chsh_of_box(&b),
            b.correlators(),
            bytes,
            json!({ "box": source }),
        )
    } else {
        let name = args
            .model
            .as_deref()
            .expect("clap requires model without box");
        let model: CorrelationModel = name.parse()?;
        let axes = match (&args.spacing, &args.angles) {
            (Some(s), None) => AxisConfiguration::from_spacing(parse_angle(s)?)?,
            (None, Some(list)) => {
                let parts: Vec<f64> = list.split(',').map(parse_angle).collect::<Result<_, _>>()?;
                let [ap, b, a, bp] = parts.as_slice() else {
                    return Err(Error::parse("--angles needs four values a',b,a,b'").into());
                };
                AxisConfiguration::new(*ap, *b, *a, *bp)?
            }
            (None, None) => AxisConfiguration::quarter_pi(),
            (Some(_), Some(_)) => unreachable!("clap rejects --spacing with --angles"),
        };
        let input = format!(
            "model:{model};axes:{},{},{},{}",
            axes.a_prime, axes.b, axes.a, axes.b_prime
        );
        (
            chsh_from_model(model, &axes),
            correlators_at(model, &axes),
            input.into_bytes(),
            json!({ "model": model.name(), "axes": axes, "setting_angles": axes.setting_angles() }),
        )
    };
    let class = classify(value)?;
    Ok(Success {
        code: EXIT_OK,
        digest_input,
        results: json!({
            "chsh": value,
            "class": class.to_string(),
            "correlators": correlator_json(correlators),
            "bounds": { "local": LOCAL_BOUND, "quantum": QUANTUM_BOUND, "no_signaling": NO_SIGNALING_BOUND },
            "classify_slack": CLASSIFY_SLACK,
            "source": extra,
        }),
        seed: None,
        tolerance: Some(tol),
        raw_stdout: None,
    })
}

fn cmd_local(args: &BoxArgs) -> Result<Success, Failure> {
    let tol = check_tol(args.tol)?;
    let (b, bytes) = load(&args.source, None, tol)?;
    let cert = is_local(&b, tol)?;
    let doc = CertificateDoc::from(&cert);
    let recombination_error = cert.recombine().map(|r| r.max_abs_diff(&b));
    Ok(Success {
        code: if cert.is_local {
            EXIT_OK
        } else {
            EXIT_NONLOCAL
        },
        digest_input: bytes,
        results: json!({
            "certificate": doc,
            "recombination_error": recombination_error,
            "chsh": chsh_of_box(&b),
        }),
        seed: None,
        tolerance: Some(tol),
        raw_stdout: None,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    rounds: Option<u64>,
    schedule: Option<String>,
    seed: Option<u64>,
}

fn cmd_sample(args: &SampleArgs) -> Result<Success, Failure> {
    let tol = check_tol(args.tol)?;
    let plan_file = match &args.plan {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::parse(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<PlanFile>(&text)
                .map_err(|e| Error::parse(format!("plan {}: {e}", p.display())))?
        }
        None => PlanFile::default(),
    };
    let rounds = args.rounds.or(plan_file.rounds).unwrap_or(100_000);
    let schedule: SettingSchedule = args
        .schedule
        .as_deref()
        .or(plan_file.schedule.as_deref())
        .unwrap_or("uniform")
        .parse()?;
    let seed = seed_or_env(args.seed, plan_file.seed)?;
    let plan = ExperimentPlan::new(rounds, schedule, seed)?;

    let (b, bytes) = load(&args.source, None, tol)?;
    let tally = run_experiment(&b, &plan);
    let estimates = estimate_correlators(&tally);
    let missing: Vec<(usize, usize)> = (0..4)
        .filter(|&s| estimates[s].is_none())
        .map(|s| (s / 2, s % 2))
        .collect();
    let chsh = estimate_chsh(&tally)
        .ok()
        .map(|(v, se)| json!({ "estimate": v, "standard_error": se }));
    let signaling = empirical_no_signaling(&tally).ok();

    if let Some(path) = &args.estimates_out {
        let mut csv = String::from("x,y,estimate,standard_error,rounds\n");
        for (s, e) in estimates.iter().enumerate() {
            if let Some(e) = e {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s / 2,
                    s % 2,
                    e.estimate,
                    e.standard_error,
                    e.rounds
                ));
            }
        }
        std::fs::write(path, csv)?;
    }

    let tally_text = match args.format {
        SampleFormat::Csv => tally.to_csv(),
        SampleFormat::Structured => {
            serde_json::to_string_pretty(&json!({ "kind": "tally", "rows": tally.rows() }))
                .expect("serializable")
                + "\n"
        }
    };
    let mut raw_stdout = None;
    match &args.out {
        Some(path) => std::fs::write(path, &tally_text)?,
        None if matches!(args.format, SampleFormat::Csv) => raw_stdout = Some(tally_text),
        None => {}
    }

    Ok(Success {
        code: EXIT_OK,
        digest_input: bytes,
        results: json!({
            "plan": plan,
            "rounds_per_setting": tally.rounds_per_setting(),
            "tally": tally.rows(),
            "estimates": estimates,
            "missing_settings": missing,
            "chsh": chsh,
            "empirical_no_signaling": signaling,
        }),
        seed: Some(seed),
        tolerance: Some(tol),
        raw_stdout,
    })
}

fn cmd_jam(args: &JamArgs) -> Result<Success, Failure> {
    let tol = check_tol(args.tol)?;
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| Error::parse(format!("{}: {e}", args.scenario.display())))?;
    let cfg = ScenarioConfig::parse(&text)?;
    let base = args.scenario.parent();
    let [a, b, j] = cfg.events()?;
    let (off, off_bytes) = load(&cfg.box_off, base, tol)?;
    let (on, on_bytes) = load(&cfg.box_on, base, tol)?;
    let button: ButtonSchedule = match &args.schedule {
        Some(s) => s.parse()?,
        None => cfg.button()?.unwrap_or(ButtonSchedule::Bernoulli(0.5)),
    };
    let settings: SettingSchedule = args.settings.parse()?;
    let seed = seed_or_env(args.seed, None)?;
    let plan = ExperimentPlan::new(args.rounds, settings, seed)?;

    let mut digest_input = text.into_bytes();
    digest_input.extend(off_bytes);
    digest_input.extend(on_bytes);

    let scenario = JammingScenario::new(a, b, j, off, on)?;
    let report = check_scenario(&scenario, tol)?;
    if !report.admissible {
        let failed = report.failed();
        return Err(Failure {
            code: EXIT_INADMISSIBLE,
            message: format!("inadmissible scenario: failed {}", failed.join(", ")),
            results: Some(json!({ "conditions": report, "failed": failed })),
        });
    }

    let pressed = button.expand(plan.rounds, plan.seed);
    let transcript = simulate_jamming(&scenario, &plan, &pressed, tol)?;
    if let Some(path) = &args.out {
        let mut csv = String::from("x,y,a,b,pressed\n");
        for r in &transcript.rounds {
            csv.push_str(&format!(
                "{},{},{:+},{:+},{}\n",
                r.x,
                r.y,
                r.a.value(),
                r.b.value(),
                u8::from(r.pressed)
            ));
        }
        std::fs::write(path, csv)?;
    }
    Ok(Success {
        code: EXIT_OK,
        digest_input,
        results: json!({
            "conditions": report,
            "plan": plan,
            "button": button.to_string(),
            "summary": transcript.summary(),
        }),
        seed: Some(seed),
        tolerance: Some(tol),
        raw_stdout: None,
    })
}

fn cmd_export(args: &ExportArgs) -> Result<Success, Failure> {
    let tol = check_tol(args.tol)?;
    let (b, bytes) = load(&args.source, None, tol)?;
    let text = match args.format {
        BoxFormat::Text => write_text(&b),
        BoxFormat::Structured => write_structured(&b),
    };
    let raw_stdout = match &args.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            None
        }
        None => Some(text),
    };
    Ok(Success {
        code: EXIT_OK,
        digest_input: bytes,
        results: json!({ "written": args.out }),
        seed: None,
        tolerance: Some(tol),
        raw_stdout,
    })
}

fn render(envelope: &OutputEnvelope) -> String {
    serde_json::to_string_pretty(envelope).expect("serializable") + "\n"
}

/// Runs one command in-process. `args` excludes the program name.
pub fn execute<I, S>(args: I) -> Invocation
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(std::iter::once("nonlocal".to_string()).chain(args.clone()))
    {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Invocation {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Invocation {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let echo = args.join(" ");
    let outcome = match &cli.command {
        Command::BoxCheck(a) => cmd_box_check(a),
        Command::Chsh(a) => cmd_chsh(a),
        Command::Local(a) => cmd_local(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Jam(a) => cmd_jam(a),
        Command::Export(a) => cmd_export(a),
    };
    let version = env!("CARGO_PKG_VERSION").to_string();
    match outcome {
        Ok(s) => {
            let envelope = OutputEnvelope {
                command: echo,
                input_digest: digest(&s.digest_input),
                results: s.results,
                provenance: Provenance {
                    version,
                    seed: s.seed,
                    tolerance: s.tolerance,
                    exit_code: s.code,
                },
            };
            match s.raw_stdout {
                Some(raw) => Invocation {
                    code: s.code,
                    stdout: raw,
                    stderr: render(&envelope),
                },
                None => Invocation {
                    code: s.code,
                    stdout: render(&envelope),
                    stderr: String::new(),
                },
            }
        }
        Err(f) => {
            let stdout = f
                .results
                .map(|results| {
                    render(&OutputEnvelope {
                        command: echo,
                        input_digest: String::new(),
                        results,
                        provenance: Provenance {
                            version,
                            seed: None,
                            tolerance: None,
                            exit_code: f.code,
                        },
                    })
                })
                .unwrap_or_default();
            Invocation {
                code: f.code,
                stdout,
                stderr: format!("error: {}\n", f.message),
            }
        }
    }
}

pub fn main() -> ExitCode {
    let inv = execute(std::env::args().skip(1));
    print!("{}", inv.stdout);
    eprint!("{}", inv.stderr);
    ExitCode::from(inv.code)
}
