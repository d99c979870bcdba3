use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Serialize, Serializer};

use super::{Condition, Expr, FiveElementModel, IndexDomain, ParamValue, MAX_PARAM_DIMS};

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    MissingSection(String),
    SyntaxError,
    UnresolvedReference(String),
    ShapeMismatch { param: String, expected: usize, actual: usize },
    DuplicateName(String),
    NoVariables,
    ObjectiveHasNoVariable,
    ArityMismatch { name: String, expected: usize, actual: usize },
    IndexRebound(String),
    TooManyIndices(String),
    InvalidBounds(String),
    DuplicateMember { set: String, member: String },
}

impl DiagnosticKind {
    pub fn code(&self) -> &'static str {
        match self {
            DiagnosticKind::MissingSection(_) => "MissingSection",
            DiagnosticKind::SyntaxError => "SyntaxError",
            DiagnosticKind::UnresolvedReference(_) => "UnresolvedReference",
            DiagnosticKind::ShapeMismatch { .. } => "ShapeMismatch",
            DiagnosticKind::DuplicateName(_) => "DuplicateName",
            DiagnosticKind::NoVariables => "NoVariables",
            DiagnosticKind::ObjectiveHasNoVariable => "ObjectiveHasNoVariable",
            DiagnosticKind::ArityMismatch { .. } => "ArityMismatch",
            DiagnosticKind::IndexRebound(_) => "IndexRebound",
            DiagnosticKind::TooManyIndices(_) => "TooManyIndices",
            DiagnosticKind::InvalidBounds(_) => "InvalidBounds",
            DiagnosticKind::DuplicateMember { .. } => "DuplicateMember",
        }
    }
}

/// Which declaration a diagnostic points at; the parser turns this into a
/// source line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum DeclRef {
    Set(usize),
    Param(usize),
    Var(usize),
    Objective,
    Constraint(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub(crate) origin: Option<DeclRef>,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic { kind, message: message.into(), line: None, column: None, origin: None }
    }

    pub fn at(kind: DiagnosticKind, message: impl Into<String>, line: usize, column: usize) -> Self {
        Diagnostic { kind, message: message.into(), line: Some(line), column: Some(column), origin: None }
    }

    fn from(origin: DeclRef, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic { origin: Some(origin), ..Diagnostic::new(kind, message) }
    }

    pub fn code(&self) -> &'static str {
        self.kind.code()
    }
}

impl Serialize for Diagnostic {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            code: &'a str,
            message: &'a str,
            line: Option<usize>,
            column: Option<usize>,
        }
        Wire { code: self.code(), message: &self.message, line: self.line, column: self.column }.serialize(serializer)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{}: {}: {}", l, c, self.code(), self.message),
            (Some(l), None) => write!(f, "{}: {}: {}", l, self.code(), self.message),
            _ => write!(f, "{}: {}", self.code(), self.message),
        }
    }
}

/// A non-empty list of diagnostics, returned when a document does not parse
/// into a valid model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn first(&self) -> &Diagnostic {
        &self.0[0]
    }

    pub fn kinds(&self) -> Vec<&DiagnosticKind> {
        self.0.iter().map(|d| &d.kind).collect()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

/// Checks the structural invariants of a model. An empty result means the
/// model is valid.
pub fn validate(model: &FiveElementModel) -> Vec<Diagnostic> {
    Validator::new(model).run()
}

struct Validator<'m> {
    model: &'m FiveElementModel,
    sets: HashMap<&'m str, HashSet<String>>,
    out: Vec<Diagnostic>,
}

enum Symbol {
    Param(usize),
    Var(usize),
}

impl<'m> Validator<'m> {
    fn new(model: &'m FiveElementModel) -> Self {
        let sets = model
            .sets
            .iter()
            .map(|s| (s.name.as_str(), s.members.iter().map(|m| m.label()).collect()))
            .collect();
        Validator { model, sets, out: Vec::new() }
    }

    fn run(mut self) -> Vec<Diagnostic> {
        self.check_names();
        self.check_sets();
        self.check_params();
        self.check_vars();
        self.check_objective();
        for (i, c) in self.model.constraints.iter().enumerate() {
            let origin = DeclRef::Constraint(i);
            let mut bound: Vec<&str> = Vec::new();
            if let Some(q) = &c.quantifier {
                self.check_domain(origin, q, &mut bound);
            }
            self.check_expr(origin, &c.lhs, &mut bound);
            self.check_expr(origin, &c.rhs, &mut bound);
        }
        self.out
    }

    fn check_names(&mut self) {
        let m = self.model;
        let mut seen = HashSet::new();
        let names = m
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| (DeclRef::Set(i), &s.name))
            .chain(m.parameters.iter().enumerate().map(|(i, p)| (DeclRef::Param(i), &p.name)))
            .chain(m.variables.iter().enumerate().map(|(i, v)| (DeclRef::Var(i), &v.name)));
        for (origin, name) in names {
            if !seen.insert(name.as_str()) {
                self.out.push(Diagnostic::from(
                    origin,
                    DiagnosticKind::DuplicateName(name.clone()),
                    format!("`{name}` is declared more than once"),
                ));
            }
        }
    }

    fn check_sets(&mut self) {
        for (i, set) in self.model.sets.iter().enumerate() {
            let mut seen = HashSet::new();
            for m in &set.members {
                let label = m.label();
                if !seen.insert(label.clone()) {
                    self.out.push(Diagnostic::from(
                        DeclRef::Set(i),
                        DiagnosticKind::DuplicateMember { set: set.name.clone(), member: label.clone() },
                        format!("set `{}` lists member `{label}` twice", set.name),
                    ));
                }
            }
        }
    }

    fn unresolved(&mut self, origin: DeclRef, name: &str, what: &str) {
        self.out.push(Diagnostic::from(
            origin,
            DiagnosticKind::UnresolvedReference(name.to_string()),
            format!("{what} `{name}` is not declared"),
        ));
    }

    /// Returns the cardinality product if every index set resolves.
    fn index_sets(&mut self, origin: DeclRef, index: &[String]) -> Option<usize> {
        let mut product = Some(1usize);
        for set in index {
            match self.sets.get(set.as_str()) {
                Some(members) => product = product.map(|p| p * members.len()),
                None => {
                    self.unresolved(origin, set, "set");
                    product = None;
                }
            }
        }
        product
    }

    fn check_params(&mut self) {
        for (i, p) in self.model.parameters.iter().enumerate() {
            let origin = DeclRef::Param(i);
            if p.index.len() > MAX_PARAM_DIMS {
                self.out.push(Diagnostic::from(
                    origin,
                    DiagnosticKind::TooManyIndices(p.name.clone()),
                    format!("parameter `{}` has {} index sets; at most {MAX_PARAM_DIMS} are supported", p.name, p.index.len()),
                ));
            }
            let Some(expected) = self.index_sets(origin, &p.index) else { continue };
            let actual = p.value.len();
            let shape_ok = match &p.value {
                ParamValue::Scalar(_) => p.index.is_empty() || expected == 1,
                ParamValue::Array(_) => actual == expected,
            };
            if !shape_ok {
                self.out.push(Diagnostic::from(
                    origin,
                    DiagnosticKind::ShapeMismatch { param: p.name.clone(), expected, actual },
                    format!("parameter `{}` expects {expected} values but has {actual}", p.name),
                ));
            }
        }
    }

    fn check_vars(&mut self) {
        if self.model.variables.is_empty() {
            self.out.push(Diagnostic::new(DiagnosticKind::NoVariables, "no decision variables are declared"));
        }
        for (i, v) in self.model.variables.iter().enumerate() {
            let origin = DeclRef::Var(i);
            self.index_sets(origin, &v.index);
            if let Some(filter) = &v.filter {
                if filter.names.len() != v.index.len() {
                    self.out.push(Diagnostic::from(
                        origin,
                        DiagnosticKind::ArityMismatch {
                            name: v.name.clone(),
                            expected: v.index.len(),
                            actual: filter.names.len(),
                        },
                        format!("variable `{}` names {} indices for {} sets", v.name, filter.names.len(), v.index.len()),
                    ));
                }
                let bound: Vec<&str> = filter.names.iter().map(String::as_str).collect();
                self.check_condition(origin, &filter.condition, &bound);
            }
            if let Some((lo, hi)) = v.bounds {
                if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                    self.out.push(Diagnostic::from(
                        origin,
                        DiagnosticKind::InvalidBounds(v.name.clone()),
                        format!("variable `{}` has empty bound interval {lo}..{hi}", v.name),
                    ));
                }
            }
        }
    }

    fn check_objective(&mut self) {
        let mut bound = Vec::new();
        let expr = &self.model.objective.expr;
        self.check_expr(DeclRef::Objective, expr, &mut bound);
        let mut has_var = false;
        expr.walk_refs(&mut Vec::new(), &mut |name, _, _| {
            has_var |= self.model.variable(name).is_some();
        });
        if !has_var {
            self.out.push(Diagnostic::from(
                DeclRef::Objective,
                DiagnosticKind::ObjectiveHasNoVariable,
                "the objective does not reference any decision variable",
            ));
        }
    }

    fn is_member_anywhere(&self, label: &str) -> bool {
        self.sets.values().any(|m| m.contains(label))
    }

    fn check_condition(&mut self, origin: DeclRef, cond: &Condition, bound: &[&str]) {
        for cmp in &cond.0 {
            for operand in [&cmp.left, &cmp.right] {
                if !bound.contains(&operand.as_str()) && !self.is_member_anywhere(operand) {
                    self.unresolved(origin, operand, "index");
                }
            }
        }
    }

    fn check_domain<'e>(&mut self, origin: DeclRef, domain: &'e IndexDomain, bound: &mut Vec<&'e str>) {
        for b in &domain.bindings {
            if !self.sets.contains_key(b.set.as_str()) {
                self.unresolved(origin, &b.set, "set");
            }
            if bound.contains(&b.var.as_str()) {
                self.out.push(Diagnostic::from(
                    origin,
                    DiagnosticKind::IndexRebound(b.var.clone()),
                    format!("index `{}` is bound more than once", b.var),
                ));
            }
            bound.push(&b.var);
        }
        if let Some(cond) = &domain.condition {
            self.check_condition(origin, cond, bound);
        }
    }

    fn check_expr<'e>(&mut self, origin: DeclRef, expr: &'e Expr, bound: &mut Vec<&'e str>) {
        match expr {
            Expr::Num(_) => {}
            Expr::Ref { name, index } => self.check_ref(origin, name, index, bound),
            Expr::Neg(e) => self.check_expr(origin, e, bound),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Mod(a, b) => {
                self.check_expr(origin, a, bound);
                self.check_expr(origin, b, bound);
            }
            Expr::Sum { domain, body } => {
                let depth = bound.len();
                self.check_domain(origin, domain, bound);
                self.check_expr(origin, body, bound);
                bound.truncate(depth);
            }
        }
    }

    fn check_ref(&mut self, origin: DeclRef, name: &str, index: &[String], bound: &[&str]) {
        let symbol = if let Some(i) = self.model.parameters.iter().position(|p| p.name == name) {
            Symbol::Param(i)
        } else if let Some(i) = self.model.variables.iter().position(|v| v.name == name) {
            Symbol::Var(i)
        } else {
            self.unresolved(origin, name, "symbol");
            return;
        };
        let sets = match symbol {
            Symbol::Param(i) => &self.model.parameters[i].index,
            Symbol::Var(i) => &self.model.variables[i].index,
        };
        if sets.len() != index.len() {
            self.out.push(Diagnostic::from(
                origin,
                DiagnosticKind::ArityMismatch { name: name.to_string(), expected: sets.len(), actual: index.len() },
                format!("`{name}` takes {} subscripts but {} were given", sets.len(), index.len()),
            ));
            return;
        }
        for (sub, set) in index.iter().zip(sets) {
            if bound.contains(&sub.as_str()) {
                continue;
            }
            // An undeclared set was already reported on the declaration.
            let Some(members) = self.sets.get(set.as_str()) else { continue };
            if !members.contains(sub) {
                self.unresolved(origin, sub, "index");
            }
        }
    }
}
