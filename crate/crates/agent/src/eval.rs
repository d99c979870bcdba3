//! Dataset loading, run scoring, ER/SA/AST aggregation and report tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::gateway::ChatClient;
use crate::pipeline::{run_pipeline, FinalStatus, PipelineConfig, PipelineTrace};
use formopt_core::solver::SolveStatus;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("cannot read dataset: {0}")]
    Io(String),
    #[error("line {0} is not a valid record: {1}")]
    MalformedLine(usize, String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("no rows to aggregate")]
    EmptyRowSet,
}

fn id_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<f64>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

/// Parses JSONL records `{id, problem, answer?, type?, scenario?}`. Blank
/// lines are skipped; line numbers in errors are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<ProblemRecord>, EvalError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ProblemRecord =
            serde_json::from_str(line).map_err(|e| EvalError::MalformedLine(n + 1, e.to_string()))?;
        if record.answer.is_some_and(|a| !a.is_finite()) {
            return Err(EvalError::MalformedLine(n + 1, "answer must be finite".into()));
        }
        if !seen.insert(record.id.clone()) {
            return Err(EvalError::DuplicateId(record.id));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<ProblemRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub abs: f64,
    pub rel: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec { abs: 1e-6, rel: 1e-4 }
    }
}

impl ToleranceSpec {
    pub fn matches(&self, value: f64, truth: f64) -> bool {
        (value - truth).abs() <= self.abs.max(self.rel * truth.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub id: String,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub status: FinalStatus,
    pub executable: bool,
    pub correct: bool,
    pub solving_times: usize,
    pub objective: Option<f64>,
    pub truth: Option<f64>,
}

/// Scores one run. A run that never reached execution is charged the full
/// cap of solving times, the same as a run that executed and failed every
/// time.
pub fn score_run(trace: &PipelineTrace, record: &ProblemRecord, tol: &ToleranceSpec) -> RunRow {
    let executable = trace.executed().any(|o| o.status != SolveStatus::NotExecutable);
    let objective = trace.objective();
    let correct = match (objective, record.answer) {
        (Some(v), Some(truth)) => tol.matches(v, truth),
        _ => false,
    };
    let solving_times = if trace.solving_times == 0 { trace.config.effective_cap() } else { trace.solving_times };
    RunRow {
        id: record.id.clone(),
        kind: record.kind.clone(),
        status: trace.status,
        executable,
        correct,
        solving_times,
        objective,
        truth: record.answer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub er: f64,
    pub sa: f64,
    pub ast: f64,
}

impl Metrics {
    fn of<'a>(rows: impl IntoIterator<Item = &'a RunRow>) -> Option<Metrics> {
        let (mut n, mut exec, mut correct, mut times) = (0usize, 0usize, 0usize, 0usize);
        for r in rows {
            n += 1;
            exec += usize::from(r.executable);
            correct += usize::from(r.correct);
            times += r.solving_times;
        }
        (n > 0).then(|| Metrics {
            count: n,
            er: exec as f64 / n as f64,
            sa: correct as f64 / n as f64,
            ast: times as f64 / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<RunRow>,
    pub metrics: Metrics,
    pub per_type: BTreeMap<String, Metrics>,
    /// Rows whose record had no ground truth; these always count as incorrect.
    pub unlabeled: usize,
    pub config: Option<PipelineConfig>,
    pub best_of: Option<usize>,
    /// True when the run was interrupted before every problem finished.
    pub incomplete: bool,
}

pub fn aggregate(rows: Vec<RunRow>) -> Result<EvalReport, EvalError> {
    let metrics = Metrics::of(&rows).ok_or(EvalError::EmptyRowSet)?;
    let mut kinds: BTreeMap<String, Vec<&RunRow>> = BTreeMap::new();
    for r in &rows {
        if let Some(k) = &r.kind {
            kinds.entry(k.clone()).or_default().push(r);
        }
    }
    let per_type = kinds.into_iter().filter_map(|(k, rs)| Some((k, Metrics::of(rs)?))).collect();
    let unlabeled = rows.iter().filter(|r| r.truth.is_none()).count();
    Ok(EvalReport { rows, metrics, per_type, unlabeled, config: None, best_of: None, incomplete: false })
}

impl EvalReport {
    /// Recomputes every aggregate from the per-problem rows.
    pub fn reaggregate(&self) -> Result<EvalReport, EvalError> {
        let mut r = aggregate(self.rows.clone())?;
        r.config = self.config;
        r.best_of = self.best_of;
        r.incomplete = self.incomplete;
        Ok(r)
    }

    pub fn self_correction_disabled(&self) -> bool {
        self.best_of.is_some() || self.config.is_some_and(|c| c.no_self_correction)
    }
}

/// One labeled row of a results table, e.g. a configuration or ablation.
pub struct TableRow<'a> {
    pub label: String,
    /// One report per dataset column, `None` where the cell is empty.
    pub reports: Vec<Option<&'a EvalReport>>,
}

/// Renders reports as a text table with ER, SA and AST columns per dataset,
/// three datasets per block. AST is shown in parentheses when self-correction
/// was disabled, since it is 1 by construction.
pub fn render_table(datasets: &[&str], rows: &[TableRow<'_>]) -> String {
    const CELL: usize = 24;
    let label_width = rows.iter().map(|r| r.label.len()).chain(["Metrics".len()]).max().unwrap_or(7) + 2;
    let mut out = String::new();
    let rule = |cols: usize| "-".repeat(label_width + cols * (CELL + 3));
    for (block, names) in datasets.chunks(3).enumerate() {
        let offset = block * 3;
        if block > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{:<label_width$}", "Dataset");
        for name in names {
            let _ = write!(out, " | {name:^CELL$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<label_width$}", "Metrics");
        for _ in names {
            let _ = write!(out, " | {:>7} {:>7} {:>8}", "ER", "SA", "AST");
        }
        out.push('\n');
        out.push_str(&rule(names.len()));
        out.push('\n');
        for row in rows {
            let _ = write!(out, "{:<label_width$}", row.label);
            for k in 0..names.len() {
                match row.reports.get(offset + k).copied().flatten() {
                    Some(r) => {
                        let ast = if r.self_correction_disabled() {
                            format!("({:.2})", r.metrics.ast)
                        } else {
                            format!("{:.2}", r.metrics.ast)
                        };
                        let _ = write!(
                            out,
                            " | {:>7} {:>7} {:>8}",
                            format!("{:.1}%", r.metrics.er * 100.0),
                            format!("{:.1}%", r.metrics.sa * 100.0),
                            ast
                        );
                    }
                    None => {
                        let _ = write!(out, " | {:>7} {:>7} {:>8}", "-", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOfN {
    pub traces: Vec<PipelineTrace>,
    pub correct: bool,
    /// First repeat that was correct, or the first executable one.
    pub selected: Option<usize>,
}

/// Runs `n` independent single-attempt pipelines; the problem counts as solved
/// if any repeat is correct.
pub fn run_best_of_n<C: ChatClient + ?Sized>(
    record: &ProblemRecord,
    n: usize,
    client: &C,
    config: &PipelineConfig,
    tol: &ToleranceSpec,
) -> BestOfN {
    let single = PipelineConfig { no_self_correction: true, ..*config };
    let mut traces = Vec::with_capacity(n.max(1));
    let mut correct_at = None;
    for k in 0..n.max(1) {
        let trace = run_pipeline(&record.problem, client, &single);
        if correct_at.is_none() && score_run(&trace, record, tol).correct {
            correct_at = Some(k);
        }
        traces.push(trace);
    }
    let selected = correct_at.or_else(|| traces.iter().position(|t| t.executed().any(|o| o.status != SolveStatus::NotExecutable)));
    BestOfN { traces, correct: correct_at.is_some(), selected }
}

fn score_best_of(record: &ProblemRecord, best: &BestOfN, tol: &ToleranceSpec) -> RunRow {
    let pick = best.selected.unwrap_or(0);
    let mut row = score_run(&best.traces[pick], record, tol);
    row.correct = best.correct;
    row.executable = best.traces.iter().any(|t| t.executed().any(|o| o.status != SolveStatus::NotExecutable));
    row.solving_times = 1;
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub pipeline: PipelineConfig,
    pub tolerance: ToleranceSpec,
    pub workers: usize,
    pub best_of: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { pipeline: PipelineConfig::default(), tolerance: ToleranceSpec::default(), workers: 1, best_of: None }
    }
}

/// Evaluates every record with up to `workers` concurrent pipelines. Setting
/// `cancel` stops workers from starting new problems; in-flight problems
/// finish and the report is marked incomplete.
pub fn run_eval<C: ChatClient + ?Sized>(
    records: &[ProblemRecord],
    client: &C,
    options: &EvalOptions,
    cancel: &AtomicBool,
) -> Result<EvalReport, EvalError> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunRow>>> = Mutex::new(vec![None; records.len()]);
    let worker = || loop {
        if cancel.load(Ordering::SeqCst) {
            return;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(record) = records.get(i) else { return };
        let row = match options.best_of {
            Some(n) => score_best_of(record, &run_best_of_n(record, n, client, &options.pipeline, &options.tolerance), &options.tolerance),
            None => score_run(&run_pipeline(&record.problem, client, &options.pipeline), record, &options.tolerance),
        };
        results.lock().unwrap()[i] = Some(row);
    };
    std::thread::scope(|s| {
        for _ in 0..options.workers.max(1) {
            s.spawn(worker);
        }
    });
    let results = results.into_inner().unwrap();
    let incomplete = results.iter().any(Option::is_none);
    let mut report = aggregate(results.into_iter().flatten().collect())?;
    report.config = Some(options.pipeline);
    report.best_of = options.best_of;
    report.incomplete = incomplete;
    Ok(report)
}
