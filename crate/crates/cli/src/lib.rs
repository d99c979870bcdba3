//! Command-line front end: `solve`, `eval`, `augment-prompt`, `kto-loss`,
//! `sft-build`, `kto-build`, plus `check` and `exec` for local artifacts.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use formopt_agent::eval::{load_dataset, render_table, run_eval, EvalError, EvalOptions, TableRow};
use formopt_agent::gateway::{ChatClient, HttpChatClient, MockChatClient, RateLimited, RateLimiter};
use formopt_agent::pipeline::{run_pipeline, FinalStatus, PipelineTrace};
use formopt_core::compiler::{compile, SolveSpec};
use formopt_core::five_element::parse_five_element;
use formopt_core::solver::{execute_spec, solve, SolveOutcome, SolveStatus};
use formopt_train::alignment::{kto_breakdown, KtoParams, PreferenceRecord, ZRefMode};
use formopt_train::forge::{build_kto_dataset, build_sft_dataset, make_augmentation_prompt, LabeledRecord, SeedProblem};
use formopt_train::{parse_jsonl, to_jsonl};

use config::{Backend, FileConfig, Overrides, Settings, ENV_API_KEY, ENV_CONFIG, ENV_ENDPOINT, ENV_MODEL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EXHAUSTED: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_IO: i32 = 74;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Parser)]
#[command(name = "formopt", version, about = "Formulate, solve and evaluate optimization problems with a language model")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = ENV_CONFIG)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline on one problem.
    Solve(SolveArgs),
    /// Run the pipeline over a JSONL dataset and report ER, SA and AST.
    Eval(EvalArgs),
    /// Print the augmentation prompt for a seed problem.
    AugmentPrompt(AugmentArgs),
    /// Score a preference batch with the KTO objective.
    KtoLoss(KtoArgs),
    /// Build SFT pairs from labeled records.
    SftBuild(BuildArgs),
    /// Build KTO triples from labeled records.
    KtoBuild(BuildArgs),
    /// Parse, compile and solve a five-element model file.
    Check(FileArg),
    /// Execute a solve-spec JSON file.
    Exec(FileArg),
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Chat-completions endpoint (base URL or full URL).
    #[arg(long, env = ENV_ENDPOINT)]
    pub endpoint: Option<String>,
    #[arg(long, env = ENV_API_KEY, hide_env_values = true)]
    pub api_key: Option<String>,
    #[arg(long, env = ENV_MODEL)]
    pub model: Option<String>,
    /// JSON mock script used instead of a live endpoint.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Maximum number of solver executions per problem.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Generate the solve-spec directly from the problem text.
    #[arg(long)]
    pub skip_five_element: bool,
    /// Single attempt: no judging, no retries.
    #[arg(long)]
    pub no_self_correction: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// File holding the problem description.
    pub problem_file: Option<PathBuf>,
    /// Problem description given inline.
    #[arg(long, conflicts_with = "problem_file")]
    pub text: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the full trace as JSON to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Print the trace JSON on stdout instead of the summary.
    #[arg(long)]
    pub json: bool,
    /// Keep solver wall times in the trace.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL dataset of `{id, problem, answer, type}` records.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Independent single-attempt repeats per problem.
    #[arg(long)]
    pub best_of: Option<usize>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Write the report JSON to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Row label in the table.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Rule number, 1 to 7.
    #[arg(long)]
    pub rule: u8,
    /// File holding the seed problem.
    #[arg(long)]
    pub seed: PathBuf,
    /// Second seed, required by rule 3.
    #[arg(long)]
    pub partner: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KtoArgs {
    /// JSONL of `{id, policy_logprobs, ref_logprobs, desirable}`.
    pub records: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_d: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_u: f64,
    /// Use this reference point instead of the batch estimate.
    #[arg(long)]
    pub z_ref: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// JSONL of labeled records.
    pub records: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FileArg {
    pub path: PathBuf,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn config_err(message: impl Into<String>) -> Failure {
    fail(EXIT_CONFIG, message)
}

fn data_err(message: impl Into<String>) -> Failure {
    fail(EXIT_DATA, message)
}

fn read(path: &Path, code: i32) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(code, format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| fail(EXIT_IO, format!("cannot write {}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(|e| fail(EXIT_IO, e.to_string())),
    }
}

/// Parses `args` and runs the command, writing to `out` and `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(config_err)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Solve(a) => cmd_solve(&a, &file, out),
        Command::Eval(a) => cmd_eval(&a, &file, out),
        Command::AugmentPrompt(a) => cmd_augment(&a, out),
        Command::KtoLoss(a) => cmd_kto_loss(&a, out),
        Command::SftBuild(a) => cmd_build(&a, false, out),
        Command::KtoBuild(a) => cmd_build(&a, true, out),
        Command::Check(a) => cmd_check(&a.path, out),
        Command::Exec(a) => cmd_exec(&a.path, out),
    }
}

fn overrides(b: &BackendArgs, p: &PipelineArgs) -> Overrides {
    Overrides {
        endpoint: b.endpoint.clone(),
        api_key: b.api_key.clone(),
        model: b.model.clone(),
        mock_script: b.mock.clone(),
        cap: p.cap,
        skip_five_element: p.skip_five_element,
        no_self_correction: p.no_self_correction,
        temperature: p.temperature,
        timeout_secs: b.timeout_secs,
        ..Overrides::default()
    }
}

fn build_client(settings: &Settings) -> Result<Box<dyn ChatClient>, Failure> {
    match &settings.backend {
        Backend::Mock(path) => Ok(Box::new(MockChatClient::from_file(path).map_err(|e| config_err(e.to_string()))?)),
        Backend::Http { url, api_key, model, timeout_secs, requests_per_minute } => {
            let client = HttpChatClient::new(url, api_key.clone(), model)
                .map_err(|e| config_err(e.to_string()))?
                .timeout(Duration::from_secs(*timeout_secs));
            Ok(Box::new(RateLimited {
                inner: client,
                limiter: RateLimiter::new(settings.workers, *requests_per_minute),
            }))
        }
    }
}

fn strip_timings(outcome: &mut SolveOutcome) {
    outcome.stats.wall_time_ms = 0.0;
}

fn write_outcome(outcome: &SolveOutcome, out: &mut dyn Write) -> std::io::Result<()> {
    if let Some(obj) = outcome.objective {
        writeln!(out, "objective: {obj}")?;
        for (name, v) in &outcome.assignment {
            writeln!(out, "  {name} = {v}")?;
        }
    }
    for line in &outcome.log {
        writeln!(out, "  {line}")?;
    }
    Ok(())
}

pub fn cmd_solve(a: &SolveArgs, file: &FileConfig, out: &mut dyn Write) -> Result<i32, Failure> {
    let settings = config::resolve(&overrides(&a.backend, &a.pipeline), file).map_err(config_err)?;
    let problem = match (&a.problem_file, &a.text) {
        (Some(p), _) => read(p, EXIT_DATA)?,
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(config_err("give a problem file or --text")),
    };
    if problem.trim().is_empty() {
        return Err(data_err("problem description is empty"));
    }
    let client = build_client(&settings)?;
    let mut trace: PipelineTrace = run_pipeline(problem.trim(), client.as_ref(), &settings.pipeline);
    if !a.timings {
        trace.attempts.iter_mut().filter_map(|at| at.outcome.as_mut()).for_each(strip_timings);
        trace.final_outcome.iter_mut().for_each(strip_timings);
    }
    let json = serde_json::to_string_pretty(&trace).expect("trace serializes") + "\n";
    if let Some(p) = &a.trace {
        write_output(Some(p), &json, out)?;
    }
    let io = |e: std::io::Error| fail(EXIT_IO, e.to_string());
    if a.json {
        out.write_all(json.as_bytes()).map_err(io)?;
    } else {
        let status = match trace.status {
            FinalStatus::Solved => "solved",
            FinalStatus::ExhaustedRetries => "exhausted retries",
            FinalStatus::Aborted => "aborted",
        };
        writeln!(out, "status: {status}").map_err(io)?;
        writeln!(out, "solving times: {}", trace.solving_times).map_err(io)?;
        if let Some(o) = &trace.final_outcome {
            writeln!(out, "solver status: {}", o.status).map_err(io)?;
            write_outcome(o, out).map_err(io)?;
        }
        if let Some(e) = &trace.error {
            writeln!(out, "error: {e}").map_err(io)?;
        }
    }
    Ok(match trace.status {
        FinalStatus::Solved => EXIT_OK,
        FinalStatus::ExhaustedRetries => EXIT_EXHAUSTED,
        FinalStatus::Aborted => EXIT_ABORTED,
    })
}

pub fn cmd_eval(a: &EvalArgs, file: &FileConfig, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut flags = overrides(&a.backend, &a.pipeline);
    flags.workers = a.workers;
    flags.best_of = a.best_of;
    flags.abs_tol = a.abs_tol;
    flags.rel_tol = a.rel_tol;
    let settings = config::resolve(&flags, file).map_err(config_err)?;
    let records = load_dataset(&a.dataset).map_err(|e| data_err(format!("{}: {e}", a.dataset.display())))?;
    let client = build_client(&settings)?;

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    // A second handler cannot be installed in the same process; the first
    // one stays in effect.
    let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));

    let options = EvalOptions {
        pipeline: settings.pipeline,
        tolerance: settings.tolerance,
        workers: settings.workers,
        best_of: settings.best_of,
    };
    let report = match run_eval(&records, client.as_ref(), &options, &cancel) {
        Ok(r) => r,
        Err(EvalError::EmptyRowSet) => {
            return Err(fail(EXIT_INTERRUPTED, "interrupted before any problem finished"));
        }
        Err(e) => return Err(data_err(e.to_string())),
    };
    if let Some(p) = &a.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write_output(Some(p), &json, out)?;
    }
    let name = a.dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let label = a.label.clone().unwrap_or_else(|| default_label(&settings));
    let mut text = render_table(&[&name], &[TableRow { label, reports: vec![Some(&report)] }]);
    if report.incomplete {
        text.push_str(&format!("incomplete: {} of {} problems finished\n", report.rows.len(), records.len()));
    }
    if report.unlabeled > 0 {
        text.push_str(&format!("unlabeled: {} problems without ground truth\n", report.unlabeled));
    }
    write_output(None, &text, out)?;
    Ok(if report.incomplete { EXIT_INTERRUPTED } else { EXIT_OK })
}

fn default_label(s: &Settings) -> String {
    let mut parts = Vec::new();
    if s.pipeline.skip_five_element {
        parts.push("w/o five-element".to_string());
    }
    if let Some(n) = s.best_of {
        parts.push(format!("best-of-{n}"));
    } else if s.pipeline.no_self_correction {
        parts.push("w/o self-correction".to_string());
    }
    if parts.is_empty() {
        "full".into()
    } else {
        parts.join(", ")
    }
}

fn seed_from(path: &Path) -> Result<SeedProblem, Failure> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(SeedProblem { id, problem: read(path, EXIT_DATA)?, source: None })
}

pub fn cmd_augment(a: &AugmentArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    use formopt_train::forge::ForgeError;
    let seed = seed_from(&a.seed)?;
    let partner = a.partner.as_deref().map(seed_from).transpose()?;
    let prompt = make_augmentation_prompt(&seed, a.rule, partner.as_ref()).map_err(|e| match e {
        ForgeError::EmptyProblem(_) => data_err(e.to_string()),
        _ => config_err(e.to_string()),
    })?;
    write_output(None, &format!("{prompt}\n"), out)?;
    Ok(EXIT_OK)
}

pub fn cmd_kto_loss(a: &KtoArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let params = KtoParams {
        beta: a.beta,
        lambda_d: a.lambda_d,
        lambda_u: a.lambda_u,
        z_ref: a.z_ref.map_or(ZRefMode::Batch, ZRefMode::Fixed),
    };
    params.validate().map_err(|e| config_err(e.to_string()))?;
    let records: Vec<PreferenceRecord> = parse_jsonl(&read(&a.records, EXIT_DATA)?).map_err(|e| data_err(e.to_string()))?;
    let batch = records
        .iter()
        .map(|r| r.scored().map_err(|e| data_err(format!("record `{}`: {e}", r.id))))
        .collect::<Result<Vec<_>, _>>()?;
    let b = kto_breakdown(&batch, &params).map_err(|e| data_err(e.to_string()))?;
    let text = if a.json {
        let rows: Vec<serde_json::Value> = records
            .iter()
            .zip(b.rewards.iter().zip(&b.values))
            .map(|(r, (reward, value))| serde_json::json!({"id": r.id, "desirable": r.desirable, "reward": reward, "value": value}))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({"z_ref": b.z_ref, "records": rows, "loss": b.loss})).unwrap() + "\n"
    } else {
        let mut t = format!("z_ref: {:.6}\n", b.z_ref);
        for (r, (reward, value)) in records.iter().zip(b.rewards.iter().zip(&b.values)) {
            t.push_str(&format!("{}\tdesirable={}\treward={:.6}\tvalue={:.6}\n", r.id, r.desirable, reward, value));
        }
        t.push_str(&format!("loss: {:.6}\n", b.loss));
        t
    };
    write_output(None, &text, out)?;
    Ok(EXIT_OK)
}

pub fn cmd_build(a: &BuildArgs, kto: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let records: Vec<LabeledRecord> = parse_jsonl(&read(&a.records, EXIT_DATA)?).map_err(|e| data_err(e.to_string()))?;
    let text = if kto {
        to_jsonl(&build_kto_dataset(&records).map_err(|e| data_err(e.to_string()))?)
    } else {
        to_jsonl(&build_sft_dataset(&records).map_err(|e| data_err(e.to_string()))?)
    };
    write_output(a.output.as_deref(), &text, out)?;
    Ok(EXIT_OK)
}

fn outcome_code(o: &SolveOutcome) -> i32 {
    if o.status == SolveStatus::NotExecutable {
        EXIT_DATA
    } else {
        EXIT_OK
    }
}

pub fn cmd_check(path: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let text = read(path, EXIT_DATA)?;
    let model = parse_five_element(&text).map_err(|d| {
        data_err(d.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
    })?;
    let canonical = compile(&model).map_err(|e| data_err(e.to_string()))?;
    let outcome = solve(&canonical);
    let io = |e: std::io::Error| fail(EXIT_IO, e.to_string());
    writeln!(out, "status: {}", outcome.status).map_err(io)?;
    write_outcome(&outcome, out).map_err(io)?;
    Ok(outcome_code(&outcome))
}

pub fn cmd_exec(path: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let spec = SolveSpec::parse(&read(path, EXIT_DATA)?).map_err(|e| data_err(e.to_string()))?;
    let outcome = execute_spec(&spec);
    let io = |e: std::io::Error| fail(EXIT_IO, e.to_string());
    writeln!(out, "status: {}", outcome.status).map_err(io)?;
    write_outcome(&outcome, out).map_err(io)?;
    Ok(outcome_code(&outcome))
}
