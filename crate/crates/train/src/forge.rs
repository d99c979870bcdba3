//! Augmentation prompts for seed problems and SFT/KTO dataset construction
//! from reviewed records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use formopt_agent::gateway::{bindings, render_prompt, GatewayError, PromptKind, FIVE_ELEMENT, ORIGINAL, PROBLEM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForgeError {
    #[error("rule 3 combines two problems and needs a partner seed")]
    PartnerRequired,
    #[error("rule {0} takes a single seed; no partner allowed")]
    PartnerForbidden(u8),
    #[error("unknown augmentation rule {0} (expected 1 to 7)")]
    UnknownRule(u8),
    #[error("seed `{0}` has empty problem text")]
    EmptyProblem(String),
    #[error("record `{id}` is invalid: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("no record is labeled desirable")]
    NoDesirableRecords,
    #[error("no model-authored record has been reviewed")]
    NoReviewedRecords,
    #[error("template error: {0}")]
    Template(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProblem {
    pub id: String,
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// The augmentation prompt for `seed` under `rule`. Rule 3 places the seed as
/// problem A and `partner` as problem B.
pub fn make_augmentation_prompt(seed: &SeedProblem, rule: u8, partner: Option<&SeedProblem>) -> Result<String, ForgeError> {
    if !(1..=7).contains(&rule) {
        return Err(ForgeError::UnknownRule(rule));
    }
    for s in std::iter::once(seed).chain(partner) {
        if s.problem.trim().is_empty() {
            return Err(ForgeError::EmptyProblem(s.id.clone()));
        }
    }
    let original = match (rule, partner) {
        (3, Some(b)) => format!("Problem A:\n{}\n\nProblem B:\n{}", seed.problem.trim(), b.problem.trim()),
        (3, None) => return Err(ForgeError::PartnerRequired),
        (r, Some(_)) => return Err(ForgeError::PartnerForbidden(r)),
        (_, None) => seed.problem.trim().to_string(),
    };
    Ok(render_prompt(PromptKind::Augment(rule), &bindings([(ORIGINAL, original.as_str())]))?)
}

/// A generated problem after expert review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedProblem {
    pub id: String,
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub accepted: bool,
}

/// Keeps accepted problems with non-empty text as new seeds, sorted by id.
pub fn import_augmented(problems: &[AugmentedProblem]) -> Vec<SeedProblem> {
    let mut seeds: Vec<SeedProblem> = problems
        .iter()
        .filter(|p| p.accepted && !p.problem.trim().is_empty())
        .map(|p| SeedProblem { id: p.id.clone(), problem: p.problem.clone(), source: p.source.clone() })
        .collect();
    seeds.sort_by(|a, b| a.id.cmp(&b.id));
    seeds
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    FiveElement,
    SolveSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    Expert,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Desirability {
    True,
    False,
    Unreviewed,
}

impl Serialize for Desirability {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Desirability::True => s.serialize_bool(true),
            Desirability::False => s.serialize_bool(false),
            Desirability::Unreviewed => s.serialize_str("unreviewed"),
        }
    }
}

impl<'de> Deserialize<'de> for Desirability {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            B(bool),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::B(true) => Ok(Desirability::True),
            Raw::B(false) => Ok(Desirability::False),
            Raw::S(s) => match s.to_ascii_lowercase().as_str() {
                "true" => Ok(Desirability::True),
                "false" => Ok(Desirability::False),
                "unreviewed" => Ok(Desirability::Unreviewed),
                other => Err(serde::de::Error::custom(format!("unknown desirability `{other}`"))),
            },
        }
    }
}

fn unreviewed() -> Desirability {
    Desirability::Unreviewed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub problem: String,
    pub kind: ArtifactKind,
    pub completion: String,
    pub author: Author,
    #[serde(default = "unreviewed")]
    pub desirability: Desirability,
}

impl LabeledRecord {
    /// Expert completions are ground truth and must be labeled desirable.
    pub fn validate(&self) -> Result<(), ForgeError> {
        let invalid = |reason: &str| Err(ForgeError::InvalidRecord { id: self.id.clone(), reason: reason.into() });
        if self.problem.trim().is_empty() {
            return invalid("empty problem text");
        }
        if self.completion.trim().is_empty() {
            return invalid("empty completion");
        }
        if self.author == Author::Expert && self.desirability != Desirability::True {
            return invalid("expert records must be labeled desirable");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SftExample {
    pub instruction: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KtoExample {
    pub instruction: String,
    pub completion: String,
    pub desirable: bool,
}

fn formulate_instruction(problem: &str) -> Result<String, ForgeError> {
    Ok(render_prompt(PromptKind::FormulateFiveElement, &bindings([(PROBLEM, problem)]))?)
}

fn spec_instruction(problem: &str) -> Result<String, ForgeError> {
    Ok(render_prompt(PromptKind::SpecFromProblem, &bindings([(PROBLEM, problem)]))?)
}

fn spec_from_five_instruction(five: &str) -> Result<String, ForgeError> {
    Ok(render_prompt(PromptKind::SpecFromFiveElement, &bindings([(FIVE_ELEMENT, five)]))?)
}

/// Instruction for a record's own shape: problem to five-element or problem
/// to solve-spec.
fn direct_instruction(r: &LabeledRecord) -> Result<String, ForgeError> {
    match r.kind {
        ArtifactKind::FiveElement => formulate_instruction(&r.problem),
        ArtifactKind::SolveSpec => spec_instruction(&r.problem),
    }
}

fn sorted_valid(records: &[LabeledRecord]) -> Result<Vec<&LabeledRecord>, ForgeError> {
    records.iter().try_for_each(LabeledRecord::validate)?;
    let mut sorted: Vec<&LabeledRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(sorted)
}

/// SFT pairs from desirable records, ordered by record id. Each record yields
/// its direct pair; each solve-spec record additionally yields a
/// five-element-to-spec pair for every desirable five-element record of the
/// same problem. Exact duplicates are emitted once.
pub fn build_sft_dataset(records: &[LabeledRecord]) -> Result<Vec<SftExample>, ForgeError> {
    let desirable: Vec<&LabeledRecord> =
        sorted_valid(records)?.into_iter().filter(|r| r.desirability == Desirability::True).collect();
    if desirable.is_empty() {
        return Err(ForgeError::NoDesirableRecords);
    }
    let mut five_by_problem: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in desirable.iter().filter(|r| r.kind == ArtifactKind::FiveElement) {
        five_by_problem.entry(r.problem.trim()).or_default().push(&r.completion);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |ex: SftExample| {
        if seen.insert(ex.clone()) {
            out.push(ex);
        }
    };
    for r in &desirable {
        push(SftExample { instruction: direct_instruction(r)?, completion: r.completion.clone() });
        if r.kind == ArtifactKind::SolveSpec {
            for five in five_by_problem.get(r.problem.trim()).into_iter().flatten() {
                push(SftExample { instruction: spec_from_five_instruction(five)?, completion: r.completion.clone() });
            }
        }
    }
    Ok(out)
}

/// KTO triples from reviewed model-authored records, ordered by record id.
/// Instructions follow the SFT shapes. An undesirable pair identical to a
/// desirable SFT pair from the same records is dropped.
pub fn build_kto_dataset(records: &[LabeledRecord]) -> Result<Vec<KtoExample>, ForgeError> {
    let sorted = sorted_valid(records)?;
    let reviewed: Vec<&LabeledRecord> = sorted
        .iter()
        .copied()
        .filter(|r| r.author == Author::Model && r.desirability != Desirability::Unreviewed)
        .collect();
    if reviewed.is_empty() {
        return Err(ForgeError::NoReviewedRecords);
    }
    let sft: BTreeSet<SftExample> = match build_sft_dataset(records) {
        Ok(pairs) => pairs.into_iter().collect(),
        Err(ForgeError::NoDesirableRecords) => BTreeSet::new(),
        Err(e) => return Err(e),
    };
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in reviewed {
        let desirable = r.desirability == Desirability::True;
        let pair = SftExample { instruction: direct_instruction(r)?, completion: r.completion.clone() };
        if !desirable && sft.contains(&pair) {
            continue;
        }
        let ex = KtoExample { instruction: pair.instruction, completion: pair.completion, desirable };
        if seen.insert(ex.clone()) {
            out.push(ex);
        }
    }
    Ok(out)
}
