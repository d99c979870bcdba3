use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GatewayError;

pub const PROBLEM: &str = "PROBLEM DESCRIPTION";
pub const FIVE_ELEMENT: &str = "FIVE-Element";
pub const SOLVER_CODE: &str = "SOLVER CODE";
pub const OUTPUT: &str = "OUTPUT INFORMATIONS";
pub const ERRORS: &str = "ERROR INFORMATIONS";
pub const ORIGINAL: &str = "ORIGINAL OPTIMIZATION PROBLEM DESCRIPTION";

/// Phrases that occur in exactly one prompt kind; mock scripts match on them.
pub const FORMULATE_ANCHOR: &str = "You need to write the corresponding five-element model";
pub const SPEC_ANCHOR: &str = "Please write the corresponding solve-spec JSON";
pub const JUDGE_ANCHOR: &str = "Please judge whether the above five-element and code are correct";

const FORMULATE: &str = include_str!("../../templates/formulate.txt");
const SPEC_FROM_FIVE_ELEMENT: &str = include_str!("../../templates/spec_from_five_element.txt");
const SPEC_FROM_PROBLEM: &str = include_str!("../../templates/spec_from_problem.txt");
const SPEC_SCHEMA: &str = include_str!("../../templates/spec_schema.txt");
const SELF_CORRECT: &str = include_str!("../../templates/self_correct.txt");
const AUGMENT: &str = include_str!("../../templates/augment.txt");
const AUGMENT_RULES: &str = include_str!("../../templates/augment_rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    FormulateFiveElement,
    SpecFromFiveElement,
    SpecFromProblem,
    SelfCorrect,
    /// Augmentation rule 1 to 7.
    Augment(u8),
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptKind::FormulateFiveElement => f.write_str("formulate-five-element"),
            PromptKind::SpecFromFiveElement => f.write_str("spec-from-five-element"),
            PromptKind::SpecFromProblem => f.write_str("spec-from-problem"),
            PromptKind::SelfCorrect => f.write_str("self-correct"),
            PromptKind::Augment(r) => write!(f, "augment-rule-{r}"),
        }
    }
}

impl PromptKind {
    /// Placeholders the caller must bind, in template order.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptKind::FormulateFiveElement | PromptKind::SpecFromProblem => &[PROBLEM],
            PromptKind::SpecFromFiveElement => &[FIVE_ELEMENT],
            PromptKind::SelfCorrect => &[PROBLEM, FIVE_ELEMENT, SOLVER_CODE, OUTPUT, ERRORS],
            PromptKind::Augment(_) => &[ORIGINAL],
        }
    }

    fn template(self) -> &'static str {
        match self {
            PromptKind::FormulateFiveElement => FORMULATE,
            PromptKind::SpecFromFiveElement => SPEC_FROM_FIVE_ELEMENT,
            PromptKind::SpecFromProblem => SPEC_FROM_PROBLEM,
            PromptKind::SelfCorrect => SELF_CORRECT,
            PromptKind::Augment(_) => AUGMENT,
        }
    }
}

/// Text of augmentation rule `rule` (1-based), without its number.
pub fn augment_rule(rule: u8) -> Option<&'static str> {
    AUGMENT_RULES.lines().nth(usize::from(rule).checked_sub(1)?)
}

pub type Bindings = BTreeMap<String, String>;

pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Fills a template in one left-to-right pass, so placeholder-like text inside
/// bound values is never substituted again. Braces that do not name a known
/// placeholder (set literals, JSON) are copied through.
pub fn render_prompt(kind: PromptKind, bindings: &Bindings) -> Result<String, GatewayError> {
    let rule_text = match kind {
        PromptKind::Augment(r) => Some(augment_rule(r).ok_or(GatewayError::UnknownRule(r))?),
        _ => None,
    };
    for name in kind.placeholders() {
        if !bindings.contains_key(*name) {
            return Err(GatewayError::MissingPlaceholder(name.to_string()));
        }
    }
    if let Some(extra) = bindings.keys().find(|k| !kind.placeholders().contains(&k.as_str())) {
        return Err(GatewayError::UnexpectedPlaceholder(extra.clone()));
    }
    let template = kind.template();
    let mut out = String::with_capacity(template.len() + bindings.values().map(String::len).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        let replacement = match name {
            Some("SPEC SCHEMA") => Some(SPEC_SCHEMA.trim_end()),
            Some("RULE") => rule_text,
            Some(n) => bindings.get(n).map(String::as_str),
            None => None,
        };
        match (replacement, close) {
            (Some(text), Some(c)) => {
                out.push_str(text);
                rest = &after[c + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values_are_not_rescanned() {
        let b = bindings([(PROBLEM, "uses {FIVE-Element} literally and {1, 2}")]);
        let p = render_prompt(PromptKind::FormulateFiveElement, &b).unwrap();
        assert!(p.contains("uses {FIVE-Element} literally and {1, 2}"));
        assert!(p.contains("`I = {1, 2, 3}`"));
    }

    #[test]
    fn missing_and_unexpected_placeholders() {
        let b = bindings([(PROBLEM, "p"), (FIVE_ELEMENT, "f"), (SOLVER_CODE, "c"), (ERRORS, "")]);
        assert_eq!(render_prompt(PromptKind::SelfCorrect, &b), Err(GatewayError::MissingPlaceholder(OUTPUT.into())));
        let b = bindings([(PROBLEM, "p"), (SOLVER_CODE, "c")]);
        assert_eq!(
            render_prompt(PromptKind::FormulateFiveElement, &b),
            Err(GatewayError::UnexpectedPlaceholder(SOLVER_CODE.into()))
        );
        assert_eq!(render_prompt(PromptKind::Augment(8), &bindings([(ORIGINAL, "p")])), Err(GatewayError::UnknownRule(8)));
    }

    #[test]
    fn rules_are_numbered_one_to_seven() {
        assert!(augment_rule(0).is_none());
        assert!(augment_rule(7).unwrap().contains("without changing the meaning"));
        assert!(augment_rule(8).is_none());
    }
}
