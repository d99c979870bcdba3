//! The formulate → spec → execute → judge loop with routed retries.

use serde::{Deserialize, Serialize};

use formopt_core::compiler::SolveSpec;
use formopt_core::five_element::{extract_document, parse_five_element};
use formopt_core::solver::{execute_spec, SolveOutcome, SolveStatus};

use crate::gateway::{
    bindings, parse_judgment, render_prompt, Bindings, ChatClient, GatewayError, Judgment, PromptKind,
    DEFAULT_TEMPERATURE, ERRORS, FIVE_ELEMENT, OUTPUT, PROBLEM, SOLVER_CODE,
};

pub const DEFAULT_CAP: usize = 12;

/// Stands in for the five-element block of the judge prompt when formulation
/// is skipped.
pub const NO_FIVE_ELEMENT: &str = "(no five-element formulation: the solver code was written from the problem description)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Maximum number of executions; also the cap on parse failures per stage.
    pub cap: usize,
    pub skip_five_element: bool,
    pub no_self_correction: bool,
    pub temperature: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { cap: DEFAULT_CAP, skip_five_element: false, no_self_correction: false, temperature: DEFAULT_TEMPERATURE }
    }
}

impl PipelineConfig {
    /// The cap actually enforced: 1 when self-correction is disabled.
    pub fn effective_cap(&self) -> usize {
        if self.no_self_correction {
            1
        } else {
            self.cap.max(1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Formulate,
    SpecGen,
    Execute,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Solved,
    ExhaustedRetries,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub stage: Stage,
    pub prompt_kind: Option<PromptKind>,
    pub bindings: Bindings,
    pub prompt: Option<String>,
    pub response: Option<String>,
    /// The extracted five-element text or solve-spec JSON, when parsing succeeded.
    pub artifact: Option<String>,
    pub diagnostics: Vec<String>,
    pub outcome: Option<SolveOutcome>,
    pub judgment: Option<Judgment>,
}

impl Attempt {
    fn new(stage: Stage) -> Self {
        Attempt {
            stage,
            prompt_kind: None,
            bindings: Bindings::new(),
            prompt: None,
            response: None,
            artifact: None,
            diagnostics: Vec::new(),
            outcome: None,
            judgment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub problem: String,
    pub attempts: Vec<Attempt>,
    pub status: FinalStatus,
    pub solving_times: usize,
    /// Last Optimal execution if any, else the last execution.
    pub final_outcome: Option<SolveOutcome>,
    pub config: PipelineConfig,
    /// Set when the run stopped on a gateway failure.
    pub error: Option<String>,
}

impl PipelineTrace {
    pub fn stages(&self) -> Vec<Stage> {
        self.attempts.iter().map(|a| a.stage).collect()
    }

    pub fn executed(&self) -> impl Iterator<Item = &SolveOutcome> {
        self.attempts.iter().filter_map(|a| a.outcome.as_ref())
    }

    pub fn objective(&self) -> Option<f64> {
        self.final_outcome.as_ref().filter(|o| o.status == SolveStatus::Optimal).and_then(|o| o.objective)
    }
}

struct Run<'c, C: ?Sized> {
    client: &'c C,
    config: PipelineConfig,
    trace: PipelineTrace,
}

impl<C: ChatClient + ?Sized> Run<'_, C> {
    /// Renders and sends a prompt, recording the exchange as a new attempt.
    fn ask(&mut self, stage: Stage, kind: PromptKind, b: Bindings) -> Result<String, GatewayError> {
        let mut attempt = Attempt::new(stage);
        let prompt = render_prompt(kind, &b)?;
        attempt.prompt_kind = Some(kind);
        attempt.bindings = b;
        attempt.prompt = Some(prompt.clone());
        let result = self.client.complete(&prompt, self.config.temperature);
        match result {
            Ok(exchange) => {
                let response = exchange.response.unwrap_or_default();
                attempt.response = Some(response.clone());
                self.trace.attempts.push(attempt);
                Ok(response)
            }
            Err(e) => {
                attempt.diagnostics.push(e.to_string());
                self.trace.attempts.push(attempt);
                Err(e)
            }
        }
    }

    fn last(&mut self) -> &mut Attempt {
        self.trace.attempts.last_mut().expect("an attempt was just recorded")
    }

    fn finish(mut self, status: FinalStatus) -> PipelineTrace {
        self.trace.status = status;
        let outcomes: Vec<&SolveOutcome> = self.trace.executed().collect();
        self.trace.final_outcome = outcomes
            .iter()
            .rev()
            .find(|o| o.status == SolveStatus::Optimal)
            .or(outcomes.last())
            .map(|o| (*o).clone());
        self.trace
    }
}

/// Runs the loop on one problem. Gateway failures end the run as `Aborted`;
/// every other failure is absorbed as a routed retry.
pub fn run_pipeline<C: ChatClient + ?Sized>(problem: &str, client: &C, config: &PipelineConfig) -> PipelineTrace {
    let mut config = *config;
    config.cap = config.effective_cap();
    let cap = config.cap;
    let mut run = Run {
        client,
        config,
        trace: PipelineTrace {
            problem: problem.to_string(),
            attempts: Vec::new(),
            status: FinalStatus::ExhaustedRetries,
            solving_times: 0,
            final_outcome: None,
            config,
            error: None,
        },
    };
    let spec_stage_entry = |five: &Option<String>| match five {
        Some(f) => (PromptKind::SpecFromFiveElement, bindings([(FIVE_ELEMENT, f.as_str())])),
        None => (PromptKind::SpecFromProblem, bindings([(PROBLEM, problem)])),
    };

    let mut stage = if config.skip_five_element { Stage::SpecGen } else { Stage::Formulate };
    let mut five: Option<String> = None;
    let mut spec: Option<(SolveSpec, String)> = None;
    let (mut formulate_failures, mut spec_failures) = (0, 0);

    macro_rules! ask {
        ($stage:expr, $kind:expr, $b:expr) => {
            match run.ask($stage, $kind, $b) {
                Ok(r) => r,
                Err(e) => {
                    run.trace.error = Some(e.to_string());
                    return run.finish(FinalStatus::Aborted);
                }
            }
        };
    }

    loop {
        match stage {
            Stage::Formulate => {
                if formulate_failures >= cap {
                    return run.finish(FinalStatus::ExhaustedRetries);
                }
                let response = ask!(Stage::Formulate, PromptKind::FormulateFiveElement, bindings([(PROBLEM, problem)]));
                let (doc, _) = extract_document(&response);
                match parse_five_element(doc) {
                    Ok(_) => {
                        let text = doc.trim().to_string();
                        run.last().artifact = Some(text.clone());
                        five = Some(text);
                        stage = Stage::SpecGen;
                    }
                    Err(diags) => {
                        run.last().diagnostics = diags.0.iter().map(|d| d.to_string()).collect();
                        formulate_failures += 1;
                    }
                }
            }
            Stage::SpecGen => {
                if spec_failures >= cap {
                    return run.finish(FinalStatus::ExhaustedRetries);
                }
                let (kind, b) = spec_stage_entry(&five);
                let response = ask!(Stage::SpecGen, kind, b);
                match SolveSpec::parse(&response) {
                    Ok(parsed) => {
                        let json = parsed.to_json();
                        run.last().artifact = Some(json.clone());
                        spec = Some((parsed, json));
                        stage = Stage::Execute;
                    }
                    Err(e) => {
                        run.last().diagnostics = vec![e.to_string()];
                        spec_failures += 1;
                    }
                }
            }
            Stage::Execute => {
                let (parsed, _) = spec.as_ref().expect("spec generated before execution");
                run.trace.solving_times += 1;
                let outcome = execute_spec(parsed);
                let optimal = outcome.status == SolveStatus::Optimal;
                let mut attempt = Attempt::new(Stage::Execute);
                attempt.outcome = Some(outcome);
                run.trace.attempts.push(attempt);
                if config.no_self_correction {
                    let status = if optimal { FinalStatus::Solved } else { FinalStatus::ExhaustedRetries };
                    return run.finish(status);
                }
                stage = Stage::Judge;
            }
            Stage::Judge => {
                let (_, json) = spec.as_ref().expect("spec generated before judging");
                let outcome = run.trace.attempts.iter().rev().find_map(|a| a.outcome.clone()).expect("executed");
                let (output, errors) = execution_report(&outcome);
                let five_text = five.clone().unwrap_or_else(|| NO_FIVE_ELEMENT.to_string());
                let b = bindings([
                    (PROBLEM, problem),
                    (FIVE_ELEMENT, five_text.as_str()),
                    (SOLVER_CODE, json.as_str()),
                    (OUTPUT, output.as_str()),
                    (ERRORS, errors.as_str()),
                ]);
                let response = ask!(Stage::Judge, PromptKind::SelfCorrect, b);
                let judgment = parse_judgment(&response);
                run.last().judgment = Some(judgment.clone());
                if judgment.five_element_ok && judgment.spec_ok && outcome.status == SolveStatus::Optimal {
                    return run.finish(FinalStatus::Solved);
                }
                if run.trace.solving_times >= cap {
                    return run.finish(FinalStatus::ExhaustedRetries);
                }
                stage = if !judgment.five_element_ok && !config.skip_five_element {
                    Stage::Formulate
                } else {
                    Stage::SpecGen
                };
            }
        }
    }
}

/// Same loop with ablation flags applied on top of `config`.
pub fn run_pipeline_ablated<C: ChatClient + ?Sized>(
    problem: &str,
    client: &C,
    config: &PipelineConfig,
    skip_five_element: bool,
    no_self_correction: bool,
) -> PipelineTrace {
    let config = PipelineConfig {
        skip_five_element: config.skip_five_element || skip_five_element,
        no_self_correction: config.no_self_correction || no_self_correction,
        ..*config
    };
    run_pipeline(problem, client, &config)
}

/// Splits an outcome into the output and error blocks of the judge prompt.
pub fn execution_report(outcome: &SolveOutcome) -> (String, String) {
    let mut output = format!("status: {}\n", outcome.status);
    if let Some(obj) = outcome.objective {
        output.push_str(&format!("objective value: {obj}\n"));
        for (name, v) in &outcome.assignment {
            output.push_str(&format!("{name} = {v}\n"));
        }
    }
    let errors = match outcome.status {
        SolveStatus::Optimal => String::new(),
        _ => {
            let mut e = outcome.log.join("\n");
            if e.is_empty() {
                e = format!("the model is {}", outcome.status);
            }
            e
        }
    };
    (output.trim_end().to_string(), errors)
}
