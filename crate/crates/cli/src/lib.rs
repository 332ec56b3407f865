//! Command handling for the `pbrlab` binary, callable in-process.
//!
//! [`run`] parses an argument vector, executes one command and returns the
//! exit code together with everything destined for standard output and
//! standard error. The binary only prints and exits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pbrlab_core::feasibility::{self, ConstraintSystem, FeasibilityError, NoGoReport, PbrOptions};
use pbrlab_core::ontmodel::{self, OntologicalModel};
use pbrlab_core::rqm::{self, RqmError, ScenarioConfig, ScenarioReport, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

/// Directory for reports written without an explicit absolute path.
pub const OUT_DIR_ENV: &str = "PBRLAB_OUT_DIR";

const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "pbrlab",
    version,
    about = "PBR no-go and relational quantum mechanics checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// The PBR theorem and its relaxations.
    #[command(subcommand)]
    Pbr(PbrCommand),
    /// Relational scenarios.
    #[command(subcommand)]
    Rqm(RqmCommand),
    /// Ontological model inspection.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Subcommand)]
enum PbrCommand {
    /// Run the no-go check. Without relaxation flags all three
    /// configurations are run.
    Verify(VerifyArgs),
    /// Solve a constraint system read from a JSON file.
    Feasibility {
        system: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Subcommand)]
enum RqmCommand {
    /// Run a named scenario: third-person, relational-pbr-single or
    /// relational-pbr-alice-bob.
    Run(RunArgs),
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Classify a model and compare its predictions with the Born rule.
    Check {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL, value_parser = parse_tol)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the JSON report to this path, or to standard output with `-`.
    #[arg(long, value_name = "PATH")]
    json: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    no_preparation_independence: bool,
    #[arg(long)]
    no_overlap: bool,
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = parse_tol)]
    tol: f64,
    /// Recorded in the report. The verification itself draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    scenario: String,
    /// JSON scenario configuration; missing fields take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    collapse_indices: bool,
    #[command(flatten)]
    out: OutputArgs,
}

fn parse_tol(text: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!(
            "tolerance must be a positive finite number, got {text:?}"
        )),
    }
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn fail(code: i32, message: impl std::fmt::Display) -> Self {
        Outcome {
            code,
            stdout: String::new(),
            stderr: format!("error: {message}\n"),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match cli.command {
        Command::Pbr(PbrCommand::Verify(args)) => pbr_verify(&args),
        Command::Pbr(PbrCommand::Feasibility { system, out }) => pbr_feasibility(&system, &out),
        Command::Rqm(RqmCommand::Run(args)) => rqm_run(&args),
        Command::Model(ModelCommand::Check { model, tol, out }) => model_check(&model, tol, &out),
    }
}

/// Either a file path, standard output, or nowhere.
fn report_target(out: &OutputArgs, default_name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    match (&out.json, dir) {
        (Some(p), _) if p == "-" => None,
        (Some(p), Some(dir)) if Path::new(p).is_relative() => Some(dir.join(p)),
        (Some(p), _) => Some(PathBuf::from(p)),
        (None, Some(dir)) => Some(dir.join(default_name)),
        (None, None) => None,
    }
}

/// Serializes `report` and routes it. With `--json -` standard output
/// carries only the JSON; otherwise it carries the human summary.
fn emit<R: Serialize>(
    code: i32,
    summary: String,
    report: &R,
    out: &OutputArgs,
    default_name: &str,
) -> Outcome {
    let mut json = serde_json::to_string_pretty(report).expect("reports serialize");
    json.push('\n');
    if out.json.as_deref() == Some("-") {
        return Outcome {
            code,
            stdout: json,
            stderr: String::new(),
        };
    }
    if let Some(path) = report_target(out, default_name) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            if let Err(e) = std::fs::create_dir_all(parent) {
                return Outcome::fail(
                    EXIT_INTERNAL,
                    format!("cannot create {}: {e}", parent.display()),
                );
            }
        }
        if let Err(e) = std::fs::write(&path, json) {
            return Outcome::fail(
                EXIT_INTERNAL,
                format!("cannot write {}: {e}", path.display()),
            );
        }
    }
    Outcome {
        code,
        stdout: summary,
        stderr: String::new(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Outcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Outcome::fail(EXIT_DATA, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Outcome::fail(EXIT_DATA, format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct VerifyReport {
    command: &'static str,
    seed: Option<u64>,
    tol: f64,
    runs: Vec<NoGoReport>,
    all_hold: bool,
}

fn pbr_verify(args: &VerifyArgs) -> Outcome {
    let configs: Vec<(bool, bool)> = if args.no_preparation_independence || args.no_overlap {
        vec![(!args.no_preparation_independence, !args.no_overlap)]
    } else {
        vec![(true, true), (false, true), (true, false)]
    };
    let mut runs = Vec::new();
    for (pi, overlap) in configs {
        let options = PbrOptions {
            preparation_independence: pi,
            overlap,
            tol: args.tol,
            ..PbrOptions::default()
        };
        match feasibility::pbr_no_go(&options) {
            Ok(r) => runs.push(r),
            // Orthogonality or Born-zero validation failed: an internal inconsistency.
            Err(e) => return Outcome::fail(EXIT_INTERNAL, e),
        }
    }
    let all_hold = runs.iter().all(|r| r.holds);
    let mut summary = String::new();
    if let Some(first) = runs.first() {
        let o = &first.orthogonality;
        let _ = writeln!(
            summary,
            "orthogonality: max |<omega_k|chi_k>| = {:.3e}, Gram defect = {:.3e}, {}",
            o.overlaps.iter().cloned().fold(0.0, f64::max),
            o.gram_defect,
            if o.holds { "OK" } else { "FAILED" }
        );
    }
    for r in &runs {
        let _ = writeln!(
            summary,
            "preparation independence {}, overlap {}: {} (expected {}), {} variables, {} constraints",
            on_off(r.preparation_independence),
            on_off(r.overlap),
            r.verdict.status,
            r.expected,
            r.variables,
            r.constraints
        );
        if let Some(cert) = &r.certificate_constraints {
            let _ = writeln!(summary, "  certificate ({} constraints):", cert.len());
            for c in cert {
                let _ = writeln!(summary, "    {c}");
            }
        }
        if let Some(w) = &r.witness {
            let _ = write!(
                summary,
                "  witness {}: zero predictions {}, supports disjoint {}",
                w.kind,
                ok(w.zero_predictions),
                w.supports_disjoint
            );
            if let Some(d) = w.born_max_deviation {
                let _ = write!(summary, ", Born max deviation {d:.3e}");
            }
            summary.push('\n');
        }
    }
    let _ = writeln!(
        summary,
        "{}",
        if all_hold {
            "all expected verdicts hold"
        } else {
            "verdict mismatch"
        }
    );
    let report = VerifyReport {
        command: "pbr verify",
        seed: args.seed,
        tol: args.tol,
        runs,
        all_hold,
    };
    let code = if all_hold { EXIT_OK } else { EXIT_MISMATCH };
    emit(code, summary, &report, &args.out, "pbr-verify.json")
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "OK"
    } else {
        "FAILED"
    }
}

#[derive(Debug, Serialize)]
struct FeasibilityReport {
    command: &'static str,
    variables: usize,
    constraints: usize,
    verdict: feasibility::FeasibilityVerdict,
}

fn pbr_feasibility(path: &Path, out: &OutputArgs) -> Outcome {
    let system: ConstraintSystem = match read_json(path) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let verdict = match feasibility::solve(&system) {
        Ok(v) => v,
        Err(e @ FeasibilityError::TooLarge { .. }) => return Outcome::fail(EXIT_DATA, e),
        Err(e) => return Outcome::fail(EXIT_INTERNAL, e),
    };
    let mut summary = format!(
        "{}: {} variables, {} constraints\n",
        verdict.status,
        system.variables().len(),
        system.constraints().len()
    );
    if let Some(cert) = &verdict.certificate {
        let _ = writeln!(summary, "certificate ({} constraints):", cert.len());
        for id in cert {
            if let Some(c) = system.constraint(id) {
                let _ = writeln!(summary, "  {c}");
            }
        }
    }
    if let Some(w) = &verdict.witness {
        let _ = writeln!(summary, "witness:");
        for (k, v) in w {
            let _ = writeln!(summary, "  {k} = {v}");
        }
    }
    let report = FeasibilityReport {
        command: "pbr feasibility",
        variables: system.variables().len(),
        constraints: system.constraints().len(),
        verdict,
    };
    emit(EXIT_OK, summary, &report, out, "pbr-feasibility.json")
}

fn rqm_run(args: &RunArgs) -> Outcome {
    if !rqm::SCENARIOS.contains(&args.scenario.as_str()) {
        return Outcome::fail(
            EXIT_USAGE,
            format!(
                "unknown scenario {:?}; expected one of {}",
                args.scenario,
                rqm::SCENARIOS.join(", ")
            ),
        );
    }
    let mut config: ScenarioConfig = match &args.config {
        Some(p) => match read_json(p) {
            Ok(c) => c,
            Err(o) => return o,
        },
        None => ScenarioConfig::default(),
    };
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    config.collapse_indices |= args.collapse_indices;
    let report = match rqm::run_scenario(&args.scenario, &config) {
        Ok(r) => r,
        Err(e @ RqmError::UnknownScenario(_)) => return Outcome::fail(EXIT_USAGE, e),
        Err(
            e @ (RqmError::BadConfig(_)
            | RqmError::ImpossibleOutcome(_)
            | RqmError::NotAnEigenvalue(_)),
        ) => return Outcome::fail(EXIT_DATA, e),
        Err(e) => return Outcome::fail(EXIT_INTERNAL, e),
    };
    let summary = scenario_summary(&report);
    let code = if report.verdict == Verdict::Pass {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    };
    emit(
        code,
        summary,
        &report,
        &args.out,
        &format!("rqm-{}.json", args.scenario),
    )
}

fn scenario_summary(report: &ScenarioReport) -> String {
    let mut s = format!("scenario {}\n", report.scenario);
    for a in &report.assertions {
        let tag = match a.outcome {
            rqm::AssertionOutcome::Pass => "PASS",
            rqm::AssertionOutcome::Fail => "FAIL",
            rqm::AssertionOutcome::NotApplicable => "N/A ",
        };
        let _ = writeln!(s, "  [{tag}] {}: {} ({})", a.id, a.description, a.detail);
    }
    for (name, section) in [
        ("feasibility", &report.feasibility),
        ("reduction", &report.reduction),
    ] {
        if let Some(f) = section {
            let _ = writeln!(
                s,
                "  {name}: {} ({} variables, {} constraints, indices [{}])",
                f.verdict.status,
                f.variables,
                f.constraints,
                f.observers.join(", ")
            );
            if let Some(cert) = &f.certificate_constraints {
                for c in cert {
                    let _ = writeln!(s, "    {c}");
                }
            }
        }
    }
    for n in &report.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    let _ = writeln!(
        s,
        "verdict: {}",
        if report.verdict == Verdict::Pass {
            "PASS"
        } else {
            "FAIL"
        }
    );
    s
}

#[derive(Debug, Serialize)]
struct ModelReport {
    command: &'static str,
    taxonomy: ontmodel::Taxonomy,
    born: ontmodel::BornCheck,
    tol: f64,
}

fn model_check(path: &Path, tol: f64, out: &OutputArgs) -> Outcome {
    let model: OntologicalModel = match read_json(path) {
        Ok(m) => m,
        Err(o) => return o,
    };
    let taxonomy = match ontmodel::taxonomy(&model) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(EXIT_DATA, e),
    };
    let born = match ontmodel::reproduces_born(&model, tol) {
        Ok(b) => b,
        Err(e) => return Outcome::fail(EXIT_DATA, e),
    };
    let mut summary = taxonomy.class.to_string();
    if taxonomy.psi_complete {
        summary.push_str(", psi_complete");
    } else if taxonomy.psi_supplemented {
        summary.push_str(", psi_supplemented");
    }
    let _ = write!(
        summary,
        ", Born {} (max dev {:.3e}, tol {tol:e})",
        if born.reproduces { "OK" } else { "MISMATCH" },
        born.max_deviation
    );
    if let Some(w) = &taxonomy.witness {
        let _ = write!(
            summary,
            "\noverlap: {} and {} share {}",
            w.prep_a, w.prep_b, w.ontic_state
        );
    }
    summary.push('\n');
    let report = ModelReport {
        command: "model check",
        taxonomy,
        born,
        tol,
    };
    emit(EXIT_OK, summary, &report, out, "model-check.json")
}
