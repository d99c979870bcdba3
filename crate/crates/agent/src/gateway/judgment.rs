use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub five_element_ok: bool,
    pub spec_ok: bool,
    pub analysis: String,
}

fn patterns() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"(?i)the\s+five-element\s+is\s+\[?\s*(true|false)\b").unwrap(),
            Regex::new(r"(?i)the\s+code\s+is\s+\[?\s*(true|false)\b").unwrap(),
            Regex::new(r"(?is)analysis\s*:(.*)$").unwrap(),
        )
    })
}

/// Extracts the two verdicts and the analysis from a judge response. When
/// either verdict is missing both default to false and the analysis is the
/// whole response.
pub fn parse_judgment(response: &str) -> Judgment {
    let (five, code, analysis) = patterns();
    let verdict = |re: &Regex| re.captures(response).map(|c| c[1].eq_ignore_ascii_case("true"));
    match (verdict(five), verdict(code)) {
        (Some(f), Some(c)) => Judgment {
            five_element_ok: f,
            spec_ok: c,
            analysis: analysis.captures(response).map(|c| c[1].trim().to_string()).unwrap_or_default(),
        },
        _ => Judgment { five_element_ok: false, spec_ok: false, analysis: response.to_string() },
    }
}

/// Inverse of [`parse_judgment`] for well-formed judgments.
pub fn render_judgment(j: &Judgment) -> String {
    let word = |b: bool| if b { "True" } else { "False" };
    format!(
        "The five-element is {}.\n\nThe code is {}.\n\nAnalysis:\n{}",
        word(j.five_element_ok),
        word(j.spec_ok),
        j.analysis
    )
}
