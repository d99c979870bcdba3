mod common;

use common::*;
use formopt_agent::gateway::{
    parse_judgment, render_prompt, ChatClient, ChatExchange, GatewayError, MockChatClient, PromptKind, FORMULATE_ANCHOR,
    JUDGE_ANCHOR, SPEC_ANCHOR,
};
use formopt_agent::pipeline::{run_pipeline, run_pipeline_ablated, FinalStatus, PipelineConfig, Stage};
use formopt_core::fixtures;
use formopt_core::solver::SolveStatus;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> PipelineConfig {
    PipelineConfig::default()
}

#[test]
fn happy_path() {
    let client = knapsack_script(&[(true, true)]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    assert_eq!(trace.status, FinalStatus::Solved);
    assert_eq!(trace.solving_times, 1);
    assert_eq!(trace.stages(), vec![Stage::Formulate, Stage::SpecGen, Stage::Execute, Stage::Judge]);
    assert_eq!(trace.objective(), Some(550.0));
}

#[test]
fn spec_rejected_twice_reenters_spec_generation_only() {
    let client = knapsack_script(&[(true, false), (true, false), (true, true)]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    assert_eq!(trace.status, FinalStatus::Solved);
    assert_eq!(trace.solving_times, 3);
    let formulations = trace.stages().iter().filter(|s| **s == Stage::Formulate).count();
    let specs = trace.stages().iter().filter(|s| **s == Stage::SpecGen).count();
    assert_eq!((formulations, specs), (1, 3));
}

#[test]
fn always_rejected_spec_exhausts_at_cap() {
    let client = knapsack_script(&[(true, false)]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    assert_eq!(trace.status, FinalStatus::ExhaustedRetries);
    assert_eq!(trace.solving_times, 12);
    // The last Optimal execution is reported.
    assert_eq!(trace.objective(), Some(550.0));
}

#[test]
fn rejected_formulation_goes_back_to_formulate() {
    let client = knapsack_script(&[(false, true), (true, true)]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    assert_eq!(
        trace.stages(),
        vec![
            Stage::Formulate, Stage::SpecGen, Stage::Execute, Stage::Judge,
            Stage::Formulate, Stage::SpecGen, Stage::Execute, Stage::Judge
        ]
    );
    assert_eq!(trace.status, FinalStatus::Solved);
}

#[test]
fn unparseable_formulation_retries_the_stage_up_to_cap() {
    let client = MockChatClient::from_pairs([(FORMULATE_ANCHOR, "I think x should be large.")]);
    let cfg = PipelineConfig { cap: 5, ..config() };
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &cfg);
    assert_eq!(trace.status, FinalStatus::ExhaustedRetries);
    assert_eq!(trace.solving_times, 0);
    assert_eq!(trace.stages(), vec![Stage::Formulate; 5]);
    assert!(trace.attempts.iter().all(|a| !a.diagnostics.is_empty()));
}

#[test]
fn unparseable_spec_retries_spec_generation() {
    let client = MockChatClient::from_pairs([
        (FORMULATE_ANCHOR.to_string(), fenced("", fixtures::KNAPSACK)),
        (SPEC_ANCHOR.to_string(), "not json".to_string()),
        (SPEC_ANCHOR.to_string(), fenced("json", &knapsack_spec())),
        (JUDGE_ANCHOR.to_string(), judgment(true, true)),
    ]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    assert_eq!(trace.status, FinalStatus::Solved);
    assert_eq!(trace.stages()[..3], [Stage::Formulate, Stage::SpecGen, Stage::SpecGen]);
}

#[test]
fn non_optimal_outcomes_are_judged_and_rerouted() {
    let infeasible = knapsack_spec().replace("\"rhs\": 5.0", "\"rhs\": -1.0");
    assert_ne!(infeasible, knapsack_spec());
    let client = MockChatClient::from_pairs([
        (FORMULATE_ANCHOR.to_string(), fenced("", fixtures::KNAPSACK)),
        (SPEC_ANCHOR.to_string(), fenced("json", &infeasible)),
        (SPEC_ANCHOR.to_string(), fenced("json", &knapsack_spec())),
        (JUDGE_ANCHOR.to_string(), judgment(true, true)),
    ]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    let outcomes: Vec<SolveStatus> = trace.executed().map(|o| o.status).collect();
    assert_eq!(outcomes, vec![SolveStatus::Infeasible, SolveStatus::Optimal]);
    assert_eq!(trace.status, FinalStatus::Solved);
    let judge_prompt = trace.attempts[3].prompt.as_deref().unwrap();
    assert!(judge_prompt.contains("status: infeasible"));
}

#[test]
fn ablations() {
    let client = knapsack_script(&[(true, true)]);
    let trace = run_pipeline_ablated(KNAPSACK_PROBLEM, &client, &config(), true, false);
    assert_eq!(trace.status, FinalStatus::Solved);
    assert!(!trace.stages().contains(&Stage::Formulate));
    assert_eq!(trace.attempts[0].prompt_kind, Some(PromptKind::SpecFromProblem));

    let failing = MockChatClient::from_pairs([
        (FORMULATE_ANCHOR.to_string(), fenced("", fixtures::KNAPSACK)),
        (SPEC_ANCHOR.to_string(), "{\"variables\": [], \"objective\": {\"linear\": true}, \"constraints\": []}".to_string()),
    ]);
    let trace = run_pipeline_ablated(KNAPSACK_PROBLEM, &failing, &config(), false, true);
    assert_eq!(trace.status, FinalStatus::ExhaustedRetries);
    assert_eq!(trace.solving_times, 1);
    assert_eq!(trace.executed().next().unwrap().status, SolveStatus::NotExecutable);

    let client = knapsack_script(&[]);
    let trace = run_pipeline_ablated(KNAPSACK_PROBLEM, &client, &config(), true, true);
    assert_eq!(trace.status, FinalStatus::Solved);
    assert_eq!(trace.stages(), vec![Stage::SpecGen, Stage::Execute]);
}

struct Down;

impl ChatClient for Down {
    fn complete(&self, _: &str, _: f64) -> Result<ChatExchange, GatewayError> {
        Err(GatewayError::Timeout)
    }
}

#[test]
fn gateway_failure_aborts() {
    let trace = run_pipeline(KNAPSACK_PROBLEM, &Down, &config());
    assert_eq!(trace.status, FinalStatus::Aborted);
    assert_eq!(trace.attempts.len(), 1);
    assert!(trace.error.is_some());
}

#[test]
fn prompts_rerender_from_recorded_bindings() {
    let client = knapsack_script(&[(false, false), (true, false), (true, true)]);
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &config());
    assert_eq!(client.calls().len(), trace.attempts.iter().filter(|a| a.prompt.is_some()).count());
    for a in trace.attempts.iter().filter(|a| a.prompt.is_some()) {
        assert_eq!(render_prompt(a.prompt_kind.unwrap(), &a.bindings).unwrap(), *a.prompt.as_ref().unwrap());
    }
}

fn check_routing(judgments: &[(bool, bool)], cap: usize, skip: bool) -> Result<(), TestCaseError> {
    let client = knapsack_script(judgments);
    let cfg = PipelineConfig { cap, skip_five_element: skip, ..config() };
    let trace = run_pipeline(KNAPSACK_PROBLEM, &client, &cfg);
    prop_assert!(trace.solving_times <= cap);
    prop_assert!(trace.attempts.iter().filter(|a| a.prompt.is_some()).count() <= 5 * cap);
    for (k, a) in trace.attempts.iter().enumerate() {
        let Some(j) = &a.judgment else { continue };
        let Some(next) = trace.attempts.get(k + 1) else { continue };
        if !j.five_element_ok {
            prop_assert_eq!(next.stage, if skip { Stage::SpecGen } else { Stage::Formulate });
        } else if !j.spec_ok {
            prop_assert_eq!(next.stage, Stage::SpecGen);
        }
    }
    match trace.status {
        FinalStatus::Solved => {
            let last = trace.attempts.last().unwrap().judgment.as_ref().unwrap();
            prop_assert!(last.five_element_ok && last.spec_ok);
        }
        FinalStatus::ExhaustedRetries => prop_assert_eq!(trace.solving_times, cap),
        FinalStatus::Aborted => prop_assert!(false, "mock never fails"),
    }
    Ok(())
}

#[test]
fn routing_over_random_judgment_scripts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let len = rng.gen_range(1..16);
        let judgments: Vec<(bool, bool)> = (0..len).map(|_| (rng.gen_bool(0.7), rng.gen_bool(0.5))).collect();
        let cap = rng.gen_range(1..=12);
        check_routing(&judgments, cap, rng.gen_bool(0.3)).unwrap();
    }
}

proptest! {
    #[test]
    fn cap_safety(judgments in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..20), cap in 1usize..=12, skip in any::<bool>()) {
        check_routing(&judgments, cap, skip)?;
    }

    #[test]
    fn judgment_parse_is_total_and_idempotent(text in "\\PC{0,200}") {
        let once = parse_judgment(&text);
        let twice = parse_judgment(&formopt_agent::gateway::render_judgment(&once));
        prop_assert_eq!(once.five_element_ok, twice.five_element_ok);
        prop_assert_eq!(once.spec_ok, twice.spec_ok);
        prop_assert_eq!(once.analysis.trim(), twice.analysis);
    }

    #[test]
    fn judgment_round_trip(five in any::<bool>(), code in any::<bool>(), analysis in "[a-zA-Z0-9 .,]{0,80}") {
        let j = formopt_agent::gateway::Judgment { five_element_ok: five, spec_ok: code, analysis: analysis.trim().to_string() };
        prop_assert_eq!(parse_judgment(&formopt_agent::gateway::render_judgment(&j)), j);
    }
}
