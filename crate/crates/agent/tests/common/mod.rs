#![allow(dead_code)]

use formopt_agent::gateway::{render_judgment, Judgment, MockChatClient, FORMULATE_ANCHOR, JUDGE_ANCHOR, SPEC_ANCHOR};
use formopt_core::compiler::{compile, SolveSpec};
use formopt_core::fixtures;
use formopt_core::five_element::parse_five_element;

pub const KNAPSACK_PROBLEM: &str = "A hiker chooses among four items with weights 4, 3, 1 and 1 and values 300, 200, 150 and 200. The bag holds at most 5. Maximize the total value.";

pub fn knapsack_spec() -> String {
    SolveSpec::from_model(&compile(&parse_five_element(fixtures::KNAPSACK).unwrap()).unwrap()).to_json()
}

pub fn fenced(lang: &str, body: &str) -> String {
    format!("Here is the result.\n```{lang}\n{body}\n```\n")
}

pub fn judgment(five: bool, code: bool) -> String {
    render_judgment(&Judgment { five_element_ok: five, spec_ok: code, analysis: "checked".into() })
}

/// Script answering formulation with the knapsack model and spec generation
/// with its solve-spec, and judging with `judgments` in order.
pub fn knapsack_script(judgments: &[(bool, bool)]) -> MockChatClient {
    let mut pairs = vec![
        (FORMULATE_ANCHOR.to_string(), fenced("", fixtures::KNAPSACK)),
        (SPEC_ANCHOR.to_string(), fenced("json", &knapsack_spec())),
    ];
    pairs.extend(judgments.iter().map(|&(f, c)| (JUDGE_ANCHOR.to_string(), judgment(f, c))));
    MockChatClient::from_pairs(pairs)
}
