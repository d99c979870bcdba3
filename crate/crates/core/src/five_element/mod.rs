//! The five-element intermediate representation.
//!
//! A model is a plain-text document with five `##` sections (Sets, Parameters,
//! Variables, Objective, Constraints). This module owns the typed form of that
//! document, the parser that produces it, the canonical renderer, and the
//! structural validator. The grammar itself is documented in `GRAMMAR.md` at
//! the repository root.

mod lexer;
mod parser;
mod render;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{extract_document, parse_five_element};
pub use render::render_five_element;
pub use validate::{validate, Diagnostic, DiagnosticKind, Diagnostics};

/// Section titles, in canonical order.
pub const SECTION_NAMES: [&str; 5] = ["Sets", "Parameters", "Variables", "Objective", "Constraints"];

/// Highest number of index sets a parameter may carry.
pub const MAX_PARAM_DIMS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveElementModel {
    pub sets: Vec<SetDecl>,
    pub parameters: Vec<ParamDecl>,
    pub variables: Vec<VarDecl>,
    pub objective: Objective,
    pub constraints: Vec<ConstraintDecl>,
}

impl FiveElementModel {
    pub fn set(&self, name: &str) -> Option<&SetDecl> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn parameter(&self, name: &str) -> Option<&ParamDecl> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VarDecl> {
        self.variables.iter().find(|v| v.name == name)
    }
}

/// A set member. Integer members keep their numeric label; symbolic members
/// keep their identifier. Either way a member is addressed downstream by its
/// 0-based position in the declaring set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Member {
    Int(i64),
    Symbol(String),
}

impl Member {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::Int(v) => write!(f, "{v}"),
            Member::Symbol(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDecl {
    pub name: String,
    pub members: Vec<Member>,
    #[serde(default)]
    pub description: String,
}

impl SetDecl {
    pub fn position(&self, label: &str) -> Option<usize> {
        self.members.iter().position(|m| m.label() == label)
    }
}

/// A parameter entry. Symbolic entries are accepted by the parser and
/// rejected by the compiler when used numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Symbol(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Num(v) => Some(*v),
            Scalar::Symbol(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Scalar(Scalar),
    /// Dense values in row-major order over the index sets.
    Array(Vec<Scalar>),
}

impl ParamValue {
    pub fn len(&self) -> usize {
        match self {
            ParamValue::Scalar(_) => 1,
            ParamValue::Array(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub index: Vec<String>,
    pub value: ParamValue,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Continuous,
    Integer,
    Binary,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Continuous => "continuous",
            Domain::Integer => "integer",
            Domain::Binary => "binary",
        })
    }
}

/// Names the positional indices of a variable declaration so a condition can
/// exclude some index tuples, e.g. `x[i in I, j in I | i != j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFilter {
    pub names: Vec<String>,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub index: Vec<String>,
    pub filter: Option<IndexFilter>,
    pub domain: Domain,
    /// Declared `(lower, upper)` bounds; either side may be infinite.
    pub bounds: Option<(f64, f64)>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: Sense,
    pub expr: Expr,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + tol,
            Relation::Ge => lhs >= rhs - tol,
            Relation::Eq => (lhs - rhs).abs() <= tol,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDecl {
    pub lhs: Expr,
    pub relation: Relation,
    pub rhs: Expr,
    pub quantifier: Option<IndexDomain>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub var: String,
    pub set: String,
}

/// `i in I, j in J | cond` as used by `sum{...}` and `forall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDomain {
    pub bindings: Vec<Binding>,
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

/// One side of an index comparison: an index name or a literal member label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub left: String,
    pub op: CmpOp,
    pub right: String,
}

/// A conjunction of index comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition(pub Vec<Comparison>);

impl Condition {
    /// Evaluates the condition with `lookup` mapping index names to member
    /// labels. Names that are not bound index variables compare as literals.
    pub fn holds(&self, lookup: impl Fn(&str) -> Option<String>) -> bool {
        self.0.iter().all(|c| {
            let l = lookup(&c.left).unwrap_or_else(|| c.left.clone());
            let r = lookup(&c.right).unwrap_or_else(|| c.right.clone());
            match c.op {
                CmpOp::Eq => l == r,
                CmpOp::Ne => l != r,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    /// Parameter or variable reference; subscripts are index names or member labels.
    Ref { name: String, index: Vec<String> },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Parsed so that it can be reported; the compiler rejects it.
    Mod(Box<Expr>, Box<Expr>),
    Sum { domain: IndexDomain, body: Box<Expr> },
}

impl Expr {
    pub fn reference(name: &str, index: &[&str]) -> Expr {
        Expr::Ref { name: name.to_string(), index: index.iter().map(|s| s.to_string()).collect() }
    }

    /// Visits every `Ref` node with the set of index names bound around it.
    pub fn walk_refs<'a>(&'a self, bound: &mut Vec<&'a str>, f: &mut impl FnMut(&'a str, &'a [String], &[&'a str])) {
        match self {
            Expr::Num(_) => {}
            Expr::Ref { name, index } => f(name, index, bound),
            Expr::Neg(e) => e.walk_refs(bound, f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Mod(a, b) => {
                a.walk_refs(bound, f);
                b.walk_refs(bound, f);
            }
            Expr::Sum { domain, body } => {
                let depth = bound.len();
                bound.extend(domain.bindings.iter().map(|b| b.var.as_str()));
                body.walk_refs(bound, f);
                bound.truncate(depth);
            }
        }
    }
}
