//! Grounding of five-element models into canonical `min f(x) s.t. G(x) ≤ c`
//! instances, plus the solve-spec JSON form of those instances.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::GroundExpr;
use crate::five_element::{
    validate, Condition, Diagnostics, Domain, Expr, FiveElementModel, IndexDomain, ParamValue, Relation, Scalar,
    Sense,
};

/// Absolute tolerance for row feasibility in [`evaluate`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub const DEFAULT_GROUNDING_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("model is not valid:\n{0}")]
    Invalid(Diagnostics),
    #[error("`{param}` has no entry for index {index}")]
    IndexOutOfRange { param: String, index: String },
    #[error("parameter `{0}` is used as a number but holds a symbol")]
    NonNumericParameter(String),
    #[error("grounding produced more than {cap} rows")]
    GroundingExplosion { cap: usize },
    #[error("unsupported operation `{0}`")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub grounding_cap: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { grounding_cap: DEFAULT_GROUNDING_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalVar {
    pub name: String,
    pub domain: Domain,
    pub lower: f64,
    pub upper: f64,
}

impl CanonicalVar {
    pub fn is_integral(&self) -> bool {
        self.domain != Domain::Continuous
    }
}

/// Sparse affine form `Σ coeffs + constant`, sorted by variable index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearForm {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalObjective {
    /// Always in minimize form.
    pub expr: GroundExpr,
    /// Present iff the objective is linear.
    pub linear: Option<LinearForm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowBody {
    Linear(Vec<(usize, f64)>),
    Expr(GroundExpr),
}

/// One grounded row: `body relation rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRow {
    pub body: RowBody,
    pub relation: Relation,
    pub rhs: f64,
}

impl CanonicalRow {
    pub fn lhs_value(&self, x: &[f64]) -> f64 {
        match &self.body {
            RowBody::Linear(coeffs) => coeffs.iter().map(|&(j, a)| a * x[j]).sum(),
            RowBody::Expr(e) => e.eval(x),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.body, RowBody::Linear(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarOrigin {
    pub name: String,
    pub index: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowOrigin {
    /// Position of the source constraint in the five-element model.
    pub constraint: usize,
    pub description: String,
    /// Quantifier bindings `(index, member)` that produced this row.
    pub bindings: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// True when the source objective was a maximization and has been negated.
    pub negated_objective: bool,
    pub variables: Vec<VarOrigin>,
    pub rows: Vec<RowOrigin>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalModel {
    pub variables: Vec<CanonicalVar>,
    pub objective: CanonicalObjective,
    pub constraints: Vec<CanonicalRow>,
    pub provenance: Provenance,
}

impl CanonicalModel {
    pub fn is_linear(&self) -> bool {
        self.objective.linear.is_some() && self.constraints.iter().all(CanonicalRow::is_linear)
    }

    pub fn has_integers(&self) -> bool {
        self.variables.iter().any(CanonicalVar::is_integral)
    }

    /// Converts a canonical (minimize) objective value back to the sense of
    /// the source model.
    pub fn original_objective(&self, canonical: f64) -> f64 {
        if self.provenance.negated_objective {
            -canonical
        } else {
            canonical
        }
    }
}

pub fn compile(model: &FiveElementModel) -> Result<CanonicalModel, CompileError> {
    compile_with(model, &CompileOptions::default())
}

pub fn compile_with(model: &FiveElementModel, options: &CompileOptions) -> Result<CanonicalModel, CompileError> {
    let diags = validate(model);
    if !diags.is_empty() {
        return Err(CompileError::Invalid(Diagnostics(diags)));
    }
    Grounder::new(model, options).run()
}

type Env = Vec<(String, String)>;

struct Grounder<'m> {
    model: &'m FiveElementModel,
    options: &'m CompileOptions,
    set_labels: HashMap<&'m str, Vec<String>>,
    /// (variable name, member positions) -> flat index
    var_index: HashMap<(&'m str, Vec<usize>), usize>,
    variables: Vec<CanonicalVar>,
    origins: Vec<VarOrigin>,
}

impl<'m> Grounder<'m> {
    fn new(model: &'m FiveElementModel, options: &'m CompileOptions) -> Self {
        let set_labels =
            model.sets.iter().map(|s| (s.name.as_str(), s.members.iter().map(|m| m.label()).collect())).collect();
        Grounder {
            model,
            options,
            set_labels,
            var_index: HashMap::new(),
            variables: Vec::new(),
            origins: Vec::new(),
        }
    }

    fn labels(&self, set: &str) -> &[String] {
        &self.set_labels[set]
    }

    fn position(&self, set: &str, label: &str) -> Option<usize> {
        self.labels(set).iter().position(|l| l == label)
    }

    fn run(mut self) -> Result<CanonicalModel, CompileError> {
        let mut notes = Vec::new();
        for decl in &self.model.variables {
            let (lower, upper) = match (decl.domain, decl.bounds) {
                (Domain::Binary, Some((lo, hi))) => (lo.max(0.0), hi.min(1.0)),
                (Domain::Binary, None) => (0.0, 1.0),
                (_, Some(b)) => b,
                (_, None) => (0.0, f64::INFINITY),
            };
            if decl.domain == Domain::Integer && lower == 1.0 && upper == f64::INFINITY {
                notes.push(format!("`{}` read as positive integers (lower bound 1)", decl.name));
            }
            let names: Vec<String> = match &decl.filter {
                Some(f) => f.names.clone(),
                None => (0..decl.index.len()).map(|k| format!("#{k}")).collect(),
            };
            let sets: Vec<&str> = decl.index.iter().map(String::as_str).collect();
            for tuple in self.product(&sets) {
                let labels: Vec<String> = tuple.iter().zip(&sets).map(|(&p, s)| self.labels(s)[p].clone()).collect();
                if let Some(f) = &decl.filter {
                    let lookup = |n: &str| names.iter().position(|x| x == n).map(|k| labels[k].clone());
                    if !f.condition.holds(lookup) {
                        continue;
                    }
                }
                let name =
                    if labels.is_empty() { decl.name.clone() } else { format!("{}[{}]", decl.name, labels.join(",")) };
                self.var_index.insert((decl.name.as_str(), tuple), self.variables.len());
                self.variables.push(CanonicalVar { name, domain: decl.domain, lower, upper });
                self.origins.push(VarOrigin { name: decl.name.clone(), index: labels });
            }
        }

        let negate = self.model.objective.sense == Sense::Maximize;
        let mut objective = self.ground(&self.model.objective.expr, &mut Vec::new())?;
        if negate {
            objective = GroundExpr::Neg(Box::new(objective)).simplify();
        }
        let objective_linear = objective.linear_form();

        let mut constraints = Vec::new();
        let mut row_origins = Vec::new();
        for (ci, c) in self.model.constraints.iter().enumerate() {
            let envs = match &c.quantifier {
                Some(q) => self.expand_domain(q, &Vec::new())?,
                None => vec![Vec::new()],
            };
            for mut env in envs {
                if constraints.len() >= self.options.grounding_cap {
                    return Err(CompileError::GroundingExplosion { cap: self.options.grounding_cap });
                }
                let lhs = self.ground(&c.lhs, &mut env)?;
                let rhs = self.ground(&c.rhs, &mut env)?;
                constraints.push(make_row(lhs, c.relation, rhs));
                row_origins.push(RowOrigin { constraint: ci, description: c.description.clone(), bindings: env });
            }
        }
        if negate {
            notes.push("objective negated: source model maximizes".to_string());
        }
        Ok(CanonicalModel {
            variables: self.variables,
            objective: CanonicalObjective { expr: objective, linear: objective_linear },
            constraints,
            provenance: Provenance { negated_objective: negate, variables: self.origins, rows: row_origins, notes },
        })
    }

    /// All position tuples of the given sets, last set varying fastest.
    fn product(&self, sets: &[&str]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for s in sets {
            let n = self.labels(s).len();
            out = out.into_iter().flat_map(|t| (0..n).map(move |p| [t.clone(), vec![p]].concat())).collect();
        }
        out
    }

    fn expand_domain(&self, domain: &IndexDomain, env: &Env) -> Result<Vec<Env>, CompileError> {
        let mut envs = vec![env.clone()];
        for b in &domain.bindings {
            let labels = self.labels(&b.set);
            let mut next = Vec::with_capacity(envs.len() * labels.len());
            for e in &envs {
                for l in labels {
                    let mut e = e.clone();
                    e.push((b.var.clone(), l.clone()));
                    next.push(e);
                }
            }
            if next.len() > self.options.grounding_cap.saturating_mul(16).max(1 << 20) {
                return Err(CompileError::GroundingExplosion { cap: self.options.grounding_cap });
            }
            envs = next;
        }
        if let Some(cond) = &domain.condition {
            envs.retain(|e| holds(cond, e));
        }
        Ok(envs)
    }

    fn resolve(&self, name: &str, subs: &[String], sets: &[String], env: &Env) -> Result<Vec<usize>, CompileError> {
        subs.iter()
            .zip(sets)
            .map(|(sub, set)| {
                let label = lookup(env, sub).unwrap_or(sub.as_str());
                self.position(set, label).ok_or_else(|| CompileError::IndexOutOfRange {
                    param: name.to_string(),
                    index: format!("[{}]", subs.iter().map(|s| lookup(env, s).unwrap_or(s)).collect::<Vec<_>>().join(",")),
                })
            })
            .collect()
    }

    fn ground(&self, e: &Expr, env: &mut Env) -> Result<GroundExpr, CompileError> {
        Ok(match e {
            Expr::Num(v) => GroundExpr::Const(*v),
            Expr::Ref { name, index } => {
                if let Some(p) = self.model.parameter(name) {
                    let pos = self.resolve(name, index, &p.index, env)?;
                    let flat = pos.iter().zip(&p.index).fold(0, |acc, (&k, s)| acc * self.labels(s).len() + k);
                    let scalar = match &p.value {
                        ParamValue::Scalar(s) => s,
                        ParamValue::Array(values) => &values[flat],
                    };
                    match scalar {
                        Scalar::Num(v) => GroundExpr::Const(*v),
                        Scalar::Symbol(_) => return Err(CompileError::NonNumericParameter(name.clone())),
                    }
                } else {
                    let v = self.model.variable(name).expect("validated reference");
                    let pos = self.resolve(name, index, &v.index, env)?;
                    match self.var_index.get(&(v.name.as_str(), pos)) {
                        Some(&j) => GroundExpr::Var(j),
                        None => {
                            return Err(CompileError::IndexOutOfRange {
                                param: name.clone(),
                                index: format!(
                                    "[{}] (excluded by the declaration's condition)",
                                    index.iter().map(|s| lookup(env, s).unwrap_or(s)).collect::<Vec<_>>().join(",")
                                ),
                            })
                        }
                    }
                }
            }
            Expr::Neg(a) => GroundExpr::Neg(Box::new(self.ground(a, env)?)),
            Expr::Add(a, b) => GroundExpr::Add(vec![self.ground(a, env)?, self.ground(b, env)?]),
            Expr::Sub(a, b) => GroundExpr::Sub(Box::new(self.ground(a, env)?), Box::new(self.ground(b, env)?)),
            Expr::Mul(a, b) => GroundExpr::Mul(Box::new(self.ground(a, env)?), Box::new(self.ground(b, env)?)),
            Expr::Div(a, b) => GroundExpr::Div(Box::new(self.ground(a, env)?), Box::new(self.ground(b, env)?)),
            Expr::Mod(..) => return Err(CompileError::Unsupported("mod".to_string())),
            Expr::Sum { domain, body } => {
                let envs = self.expand_domain(domain, env)?;
                let terms = envs
                    .into_iter()
                    .map(|mut inner| self.ground(body, &mut inner))
                    .collect::<Result<Vec<_>, _>>()?;
                GroundExpr::Add(terms)
            }
        }
        .simplify())
    }
}

fn lookup<'e>(env: &'e Env, name: &str) -> Option<&'e str> {
    env.iter().rev().find(|(n, _)| n == name).map(|(_, l)| l.as_str())
}

fn holds(cond: &Condition, env: &Env) -> bool {
    cond.holds(|n| lookup(env, n).map(str::to_string))
}

fn make_row(lhs: GroundExpr, relation: Relation, rhs: GroundExpr) -> CanonicalRow {
    let diff = GroundExpr::Sub(Box::new(lhs), Box::new(rhs)).simplify();
    match diff.linear_form() {
        Some(form) => CanonicalRow { body: RowBody::Linear(form.coeffs), relation, rhs: -form.constant },
        None => CanonicalRow { body: RowBody::Expr(diff), relation, rhs: 0.0 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowReport {
    pub row: usize,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// Objective in canonical (minimize) form.
    pub objective: f64,
    pub rows: Vec<RowReport>,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.rows.iter().all(|r| r.satisfied)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("assignment has {actual} values but the model has {expected} variables")]
pub struct LengthMismatch {
    pub expected: usize,
    pub actual: usize,
}

/// Evaluates the objective tree and every row at `assignment`.
pub fn evaluate(model: &CanonicalModel, assignment: &[f64]) -> Result<Evaluation, LengthMismatch> {
    if assignment.len() != model.variables.len() {
        return Err(LengthMismatch { expected: model.variables.len(), actual: assignment.len() });
    }
    let objective = model.objective.expr.eval(assignment);
    let rows = model
        .constraints
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let lhs = r.lhs_value(assignment);
            RowReport { row: i, lhs, relation: r.relation, rhs: r.rhs, satisfied: r.relation.holds(lhs, r.rhs, FEASIBILITY_TOL) }
        })
        .collect();
    Ok(Evaluation { objective, rows })
}

/// Variable bounds are checked separately from rows.
pub fn within_bounds(model: &CanonicalModel, assignment: &[f64], tol: f64) -> bool {
    model.variables.iter().zip(assignment).all(|(v, &x)| {
        x >= v.lower - tol
            && x <= v.upper + tol
            && (!v.is_integral() || (x - x.round()).abs() <= tol.max(1e-6))
    })
}

// ---------------------------------------------------------------------------
// solve-spec JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecVariable {
    pub name: String,
    pub domain: Domain,
    /// `null` means unbounded below.
    #[serde(default)]
    pub lo: Option<f64>,
    /// `null` means unbounded above.
    #[serde(default)]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecObjective {
    #[serde(default)]
    pub sense: Option<Sense>,
    pub linear: bool,
    #[serde(default)]
    pub coeffs: Vec<(usize, f64)>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<GroundExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConstraint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<(usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<GroundExpr>,
    pub relation: Relation,
    pub rhs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// The structured stand-in for generated solver code: a flat, fully grounded
/// model that the embedded solvers execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub variables: Vec<SpecVariable>,
    pub objective: SpecObjective,
    pub constraints: Vec<SpecConstraint>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("solve-spec is not valid JSON: {0}")]
    Json(String),
    #[error("variable index {index} out of range in {place} ({count} variables)")]
    BadIndex { place: String, index: usize, count: usize },
    #[error("{0}")]
    Inconsistent(String),
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl SolveSpec {
    pub fn from_model(model: &CanonicalModel) -> SolveSpec {
        let variables = model
            .variables
            .iter()
            .map(|v| SpecVariable {
                name: v.name.clone(),
                domain: v.domain,
                lo: finite_or_null(v.lower),
                hi: finite_or_null(v.upper),
            })
            .collect();
        let sense = if model.provenance.negated_objective { Sense::Maximize } else { Sense::Minimize };
        let objective = match &model.objective.linear {
            Some(form) => {
                let sign = if model.provenance.negated_objective { -1.0 } else { 1.0 };
                SpecObjective {
                    sense: Some(sense),
                    linear: true,
                    coeffs: form.coeffs.iter().map(|&(j, a)| (j, sign * a)).collect(),
                    constant: sign * form.constant,
                    expr: None,
                }
            }
            None => {
                let expr = if model.provenance.negated_objective {
                    GroundExpr::Neg(Box::new(model.objective.expr.clone())).simplify()
                } else {
                    model.objective.expr.clone()
                };
                SpecObjective { sense: Some(sense), linear: false, coeffs: Vec::new(), constant: 0.0, expr: Some(expr) }
            }
        };
        let constraints = model
            .constraints
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (coeffs, expr) = match &r.body {
                    RowBody::Linear(c) => (Some(c.clone()), None),
                    RowBody::Expr(e) => (None, Some(e.clone())),
                };
                let label = model.provenance.rows.get(i).map(|o| row_label(model, o));
                SpecConstraint { coeffs, expr, relation: r.relation, rhs: r.rhs, label }
            })
            .collect();
        SolveSpec { variables, objective, constraints }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solve-spec serializes")
    }

    /// Parses a solve-spec from text. Surrounding prose and code fences are
    /// tolerated: the last fenced block that parses wins, else the outermost
    /// `{ ... }` span.
    pub fn parse(text: &str) -> Result<SolveSpec, SpecError> {
        let mut last_err = None;
        for candidate in json_candidates(text) {
            match serde_json::from_str::<SolveSpec>(candidate) {
                Ok(spec) => return Ok(spec),
                Err(e) => last_err = Some(e.to_string()),
            }
        }
        Err(SpecError::Json(last_err.unwrap_or_else(|| "no JSON object found".to_string())))
    }

    /// Builds the canonical model this solve-spec describes, checking index ranges
    /// and bound consistency.
    pub fn to_model(&self) -> Result<CanonicalModel, SpecError> {
        let n = self.variables.len();
        if n == 0 {
            return Err(SpecError::Inconsistent("solve-spec declares no variables".into()));
        }
        let check = |place: &str, coeffs: &[(usize, f64)]| -> Result<(), SpecError> {
            for &(j, a) in coeffs {
                if j >= n {
                    return Err(SpecError::BadIndex { place: place.to_string(), index: j, count: n });
                }
                if !a.is_finite() {
                    return Err(SpecError::Inconsistent(format!("non-finite coefficient in {place}")));
                }
            }
            Ok(())
        };
        let mut variables = Vec::with_capacity(n);
        for v in &self.variables {
            let (dlo, dhi) = if v.domain == Domain::Binary { (0.0, 1.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            let lower = v.lo.unwrap_or(dlo);
            let upper = v.hi.unwrap_or(dhi);
            if lower > upper || lower.is_nan() || upper.is_nan() {
                return Err(SpecError::Inconsistent(format!("variable `{}` has bounds {lower} > {upper}", v.name)));
            }
            variables.push(CanonicalVar { name: v.name.clone(), domain: v.domain, lower, upper });
        }
        let negate = self.objective.sense == Some(Sense::Maximize);
        let sign = if negate { -1.0 } else { 1.0 };
        let objective = if self.objective.linear {
            check("objective", &self.objective.coeffs)?;
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, a) in &self.objective.coeffs {
                *merged.entry(j).or_default() += sign * a;
            }
            let form = LinearForm { coeffs: merged.into_iter().collect(), constant: sign * self.objective.constant };
            CanonicalObjective { expr: GroundExpr::from_linear(&form), linear: Some(form) }
        } else {
            let expr = self
                .objective
                .expr
                .clone()
                .ok_or_else(|| SpecError::Inconsistent("nonlinear objective needs `expr`".into()))?;
            check_expr_indices("objective", &expr, n)?;
            let expr = if negate { GroundExpr::Neg(Box::new(expr)).simplify() } else { expr };
            let linear = expr.linear_form();
            CanonicalObjective { expr, linear }
        };
        let mut constraints = Vec::with_capacity(self.constraints.len());
        let mut rows = Vec::with_capacity(self.constraints.len());
        for (i, c) in self.constraints.iter().enumerate() {
            let place = format!("constraint {i}");
            if !c.rhs.is_finite() {
                return Err(SpecError::Inconsistent(format!("{place} has a non-finite right-hand side")));
            }
            let body = match (&c.coeffs, &c.expr) {
                (Some(coeffs), None) => {
                    check(&place, coeffs)?;
                    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
                    for &(j, a) in coeffs {
                        *merged.entry(j).or_default() += a;
                    }
                    RowBody::Linear(merged.into_iter().collect())
                }
                (None, Some(e)) => {
                    check_expr_indices(&place, e, n)?;
                    match e.linear_form() {
                        Some(form) => {
                            constraints.push(CanonicalRow {
                                body: RowBody::Linear(form.coeffs),
                                relation: c.relation,
                                rhs: c.rhs - form.constant,
                            });
                            rows.push(RowOrigin { constraint: i, description: c.label.clone().unwrap_or_default(), bindings: Vec::new() });
                            continue;
                        }
                        None => RowBody::Expr(e.clone()),
                    }
                }
                _ => return Err(SpecError::Inconsistent(format!("{place} needs exactly one of `coeffs` or `expr`"))),
            };
            constraints.push(CanonicalRow { body, relation: c.relation, rhs: c.rhs });
            rows.push(RowOrigin { constraint: i, description: c.label.clone().unwrap_or_default(), bindings: Vec::new() });
        }
        let origins = self.variables.iter().map(|v| VarOrigin { name: v.name.clone(), index: Vec::new() }).collect();
        Ok(CanonicalModel {
            variables,
            objective,
            constraints,
            provenance: Provenance { negated_objective: negate, variables: origins, rows, notes: Vec::new() },
        })
    }
}

fn row_label(model: &CanonicalModel, origin: &RowOrigin) -> String {
    let _ = model;
    let mut label = if origin.description.is_empty() {
        format!("constraint {}", origin.constraint + 1)
    } else {
        origin.description.clone()
    };
    if !origin.bindings.is_empty() {
        let b: Vec<String> = origin.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        label.push_str(&format!(" [{}]", b.join(", ")));
    }
    label
}

fn check_expr_indices(place: &str, e: &GroundExpr, n: usize) -> Result<(), SpecError> {
    match e.max_var() {
        Some(j) if j >= n => Err(SpecError::BadIndex { place: place.to_string(), index: j, count: n }),
        _ => Ok(()),
    }
}

fn json_candidates(text: &str) -> Vec<&str> {
    let mut fenced = Vec::new();
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            match open.take() {
                None => open = Some(offset + line.len()),
                Some(start) => fenced.push(&text[start..offset]),
            }
        }
        offset += line.len();
    }
    let mut out: Vec<&str> = fenced.into_iter().rev().collect();
    if let (Some(a), Some(b)) = (text.find('{'), text.rfind('}')) {
        if a < b {
            out.push(&text[a..=b]);
        }
    }
    out.push(text);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::five_element::parse_five_element;

    fn compiled(doc: &str) -> CanonicalModel {
        compile(&parse_five_element(doc).unwrap()).unwrap()
    }

    #[test]
    fn knapsack_compiles_to_negated_linear_form() {
        let m = compiled(fixtures::KNAPSACK);
        assert_eq!(m.variables.len(), 4);
        assert!(m.variables.iter().all(|v| v.domain == Domain::Binary && v.lower == 0.0 && v.upper == 1.0));
        let obj = m.objective.linear.as_ref().unwrap();
        assert_eq!(obj.coeffs, vec![(0, -300.0), (1, -200.0), (2, -150.0), (3, -200.0)]);
        assert_eq!(obj.constant, 0.0);
        assert_eq!(m.constraints.len(), 1);
        let row = &m.constraints[0];
        assert_eq!(row.body, RowBody::Linear(vec![(0, 4.0), (1, 3.0), (2, 1.0), (3, 1.0)]));
        assert_eq!((row.relation, row.rhs), (Relation::Le, 5.0));
        assert!(m.provenance.negated_objective);
    }

    #[test]
    fn tsp_grounding_counts() {
        let m = compiled(fixtures::TSP);
        let routes = m.provenance.variables.iter().filter(|v| v.name == "x").count();
        let orders = m.provenance.variables.iter().filter(|v| v.name == "u").count();
        assert_eq!((routes, orders), (12, 4));
        let degree = m.provenance.rows.iter().filter(|r| r.constraint < 2).count();
        let subtour = m.provenance.rows.iter().filter(|r| r.constraint == 2).count();
        assert_eq!((degree, subtour), (8, 6));
        assert_eq!(m.variables[0].name, "x[A,B]");
    }

    #[test]
    fn product_objective_is_nonlinear() {
        let doc = "## Sets:\n## Parameters:\n## Variables:\nx : continuous\n## Objective:\nminimize x * x\n## Constraints:\nx >= 1\n";
        let m = compiled(doc);
        assert!(m.objective.linear.is_none());
        assert!(!m.is_linear());
    }

    #[test]
    fn knapsack_evaluation() {
        let m = compiled(fixtures::KNAPSACK);
        let e = evaluate(&m, &[0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(e.objective, -550.0);
        assert!(e.feasible());
        let e = evaluate(&m, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(!e.rows[0].satisfied);
        assert_eq!(e.rows[0].lhs, 7.0);
        assert_eq!(evaluate(&m, &[0.0; 3]).unwrap_err(), LengthMismatch { expected: 4, actual: 3 });
    }

    #[test]
    fn zero_assignment_violates_positive_lower_rows() {
        let doc = "## Sets:\nI = {1, 2, 3}\n## Parameters:\nb[I] = (1, 2, 3)\n## Variables:\nx[I] : continuous\n## Objective:\nminimize sum{i in I} x[i]\n## Constraints:\nx[i] >= b[i] forall i in I\n";
        let m = compiled(doc);
        let e = evaluate(&m, &[0.0; 3]).unwrap();
        assert_eq!(e.rows.len(), 3);
        assert!(e.rows.iter().all(|r| !r.satisfied));
    }

    #[test]
    fn positive_integer_bound_is_noted() {
        let m = compiled(fixtures::WORKFORCE);
        assert!(m.variables.iter().all(|v| v.lower == 1.0 && v.upper.is_infinite()));
        assert!(m.provenance.notes.iter().any(|n| n.contains("positive integers")));
    }

    #[test]
    fn compile_errors() {
        let doc = "## Sets:\n## Parameters:\n## Variables:\ny : integer in 1..24\n## Objective:\nminimize y mod 12\n## Constraints:\n";
        let err = compile(&parse_five_element(doc).unwrap()).unwrap_err();
        assert_eq!(err, CompileError::Unsupported("mod".into()));

        let doc = "## Sets:\n## Parameters:\nk = abc\n## Variables:\ny : integer\n## Objective:\nminimize k * y\n## Constraints:\n";
        let err = compile(&parse_five_element(doc).unwrap()).unwrap_err();
        assert_eq!(err, CompileError::NonNumericParameter("k".into()));

        // J is not a subset of I: member 9 has no entry in `w`.
        let doc = "## Sets:\nI = {1, 2}\nJ = {1, 9}\n## Parameters:\nw[I] = (1, 2)\n## Variables:\nx[I] : continuous\n## Objective:\nminimize sum{j in J} w[j] * x[1]\n## Constraints:\n";
        let err = compile(&parse_five_element(doc).unwrap()).unwrap_err();
        assert!(matches!(err, CompileError::IndexOutOfRange { ref param, .. } if param == "w"));
    }

    #[test]
    fn grounding_cap_is_enforced() {
        let doc = "## Sets:\nI = {1..50}\n## Parameters:\n## Variables:\nx[I] : continuous\n## Objective:\nminimize sum{i in I} x[i]\n## Constraints:\nx[i] + x[j] >= 1 forall i in I, j in I\n";
        let model = parse_five_element(doc).unwrap();
        let err = compile_with(&model, &CompileOptions { grounding_cap: 1000 }).unwrap_err();
        assert_eq!(err, CompileError::GroundingExplosion { cap: 1000 });
        assert_eq!(compile(&model).unwrap().constraints.len(), 2500);
    }

    #[test]
    fn solve_spec_round_trip_preserves_model_semantics() {
        for doc in fixtures::ALL {
            let m = compiled(doc);
            let spec = SolveSpec::from_model(&m);
            let json = spec.to_json();
            let back = SolveSpec::parse(&format!("Here you go:\n```json\n{json}\n```\n")).unwrap();
            assert_eq!(back, spec);
            let rebuilt = back.to_model().unwrap();
            assert_eq!(rebuilt.variables, m.variables);
            assert_eq!(rebuilt.constraints, m.constraints);
            assert_eq!(rebuilt.objective.linear, m.objective.linear);
            assert_eq!(rebuilt.provenance.negated_objective, m.provenance.negated_objective);
        }
    }

    #[test]
    fn solve_spec_rejects_bad_indices() {
        let json = r#"{"variables":[{"name":"x","domain":"continuous","lo":0,"hi":null}],
            "objective":{"linear":true,"coeffs":[[3,1.0]],"constant":0},"constraints":[]}"#;
        let spec = SolveSpec::parse(json).unwrap();
        assert!(matches!(spec.to_model(), Err(SpecError::BadIndex { index: 3, .. })));
        assert!(matches!(SolveSpec::parse("no json here"), Err(SpecError::Json(_))));
    }
}
