//! Random model generators shared by property tests, the acceptance suite and
//! benchmarks. Every generated model passes `validate`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::five_element::{
    Binding, CmpOp, Comparison, Condition, ConstraintDecl, Domain, Expr, FiveElementModel, IndexDomain, IndexFilter,
    Member, Objective, ParamDecl, ParamValue, Relation, Scalar, Sense, SetDecl, VarDecl,
};

const WORDS: [&str; 12] =
    ["cost", "of", "each", "item", "total", "units", "per", "shift", "demand", "store", "capacity", "route"];

fn description<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.4) {
        return String::new();
    }
    let n = rng.gen_range(1..5);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn quarter<R: Rng>(rng: &mut R, lo: i32, hi: i32) -> f64 {
    f64::from(rng.gen_range(lo..=hi)) / 4.0
}

struct Scope {
    /// (index name, set name)
    bound: Vec<(String, String)>,
    fresh: usize,
}

struct Gen<'m> {
    model: &'m FiveElementModel,
    max_depth: usize,
}

impl Gen<'_> {
    fn members(&self, set: &str) -> Vec<String> {
        self.model.set(set).unwrap().members.iter().map(Member::label).collect()
    }

    fn subscript<R: Rng>(&self, rng: &mut R, set: &str, scope: &Scope) -> String {
        let candidates: Vec<&String> = scope.bound.iter().filter(|(_, s)| s == set).map(|(n, _)| n).collect();
        if !candidates.is_empty() && rng.gen_bool(0.8) {
            candidates.choose(rng).unwrap().to_string()
        } else {
            self.members(set).choose(rng).unwrap().clone()
        }
    }

    fn reference<R: Rng>(&self, rng: &mut R, want_var: bool, scope: &Scope) -> Expr {
        let (name, index) = if want_var || self.model.parameters.is_empty() {
            let v = self.model.variables.choose(rng).unwrap();
            (v.name.clone(), v.index.clone())
        } else {
            let p = self.model.parameters.choose(rng).unwrap();
            (p.name.clone(), p.index.clone())
        };
        let index = index.iter().map(|s| self.subscript(rng, s, scope)).collect();
        Expr::Ref { name, index }
    }

    fn domain<R: Rng>(&self, rng: &mut R, scope: &mut Scope) -> IndexDomain {
        let n = rng.gen_range(1..=2);
        let mut bindings = Vec::new();
        for _ in 0..n {
            let set = self.model.sets.choose(rng).unwrap().name.clone();
            let var = format!("i{}", scope.fresh);
            scope.fresh += 1;
            bindings.push(Binding { var, set });
        }
        let condition = rng.gen_bool(0.3).then(|| {
            let b = bindings.choose(rng).unwrap();
            let right = if let Some(other) = bindings.iter().find(|o| o.var != b.var && o.set == b.set) {
                other.var.clone()
            } else {
                self.members(&b.set).choose(rng).unwrap().clone()
            };
            let op = if rng.gen_bool(0.5) { CmpOp::Ne } else { CmpOp::Eq };
            Condition(vec![Comparison { left: b.var.clone(), op, right }])
        });
        IndexDomain { bindings, condition }
    }

    fn expr<R: Rng>(&self, rng: &mut R, depth: usize, need_var: bool, scope: &mut Scope) -> Expr {
        if depth >= self.max_depth || (!need_var && rng.gen_bool(0.3)) {
            if need_var || rng.gen_bool(0.5) {
                let want_var = need_var || rng.gen_bool(0.5);
                return self.reference(rng, want_var, scope);
            }
            return Expr::Num(quarter(rng, -400, 400));
        }
        let b = |e: Expr| Box::new(e);
        match rng.gen_range(0..9) {
            0 => Expr::Neg(b(self.expr(rng, depth + 1, need_var, scope))),
            1 | 2 => {
                let first = rng.gen_bool(0.5);
                Expr::Add(
                    b(self.expr(rng, depth + 1, need_var && first, scope)),
                    b(self.expr(rng, depth + 1, need_var && !first, scope)),
                )
            }
            3 => {
                let first = rng.gen_bool(0.5);
                Expr::Sub(
                    b(self.expr(rng, depth + 1, need_var && first, scope)),
                    b(self.expr(rng, depth + 1, need_var && !first, scope)),
                )
            }
            4 | 5 => {
                let first = rng.gen_bool(0.5);
                Expr::Mul(
                    b(self.expr(rng, depth + 1, need_var && first, scope)),
                    b(self.expr(rng, depth + 1, need_var && !first, scope)),
                )
            }
            6 => Expr::Div(b(self.expr(rng, depth + 1, need_var, scope)), b(self.expr(rng, depth + 1, false, scope))),
            7 if rng.gen_bool(0.2) => {
                Expr::Mod(b(self.expr(rng, depth + 1, need_var, scope)), b(self.expr(rng, depth + 1, false, scope)))
            }
            _ => {
                let domain = self.domain(rng, scope);
                let saved = scope.bound.len();
                scope.bound.extend(domain.bindings.iter().map(|b| (b.var.clone(), b.set.clone())));
                let body = self.expr(rng, depth + 1, need_var, scope);
                scope.bound.truncate(saved);
                Expr::Sum { domain, body: b(body) }
            }
        }
    }
}

/// A random structurally valid model exercising every grammar feature:
/// integer and symbolic sets, scalar/vector/matrix parameters, filtered and
/// bounded variables, sums with conditions, quantified constraints and `mod`.
pub fn random_model<R: Rng>(rng: &mut R) -> FiveElementModel {
    let nsets = rng.gen_range(1..=3);
    let sets: Vec<SetDecl> = (0..nsets)
        .map(|k| {
            let size = rng.gen_range(1..=4);
            let members = if rng.gen_bool(0.5) {
                let start = rng.gen_range(-2..3);
                (0..size).map(|m| Member::Int(start + m)).collect()
            } else {
                (0..size).map(|m| Member::Symbol(format!("m{k}{m}"))).collect()
            };
            SetDecl { name: format!("S{k}"), members, description: description(rng) }
        })
        .collect();
    let set_sizes: Vec<usize> = sets.iter().map(|s| s.members.len()).collect();

    let nparams = rng.gen_range(0..=4);
    let parameters = (0..nparams)
        .map(|k| {
            let dims = rng.gen_range(0..=2);
            let index: Vec<usize> = (0..dims).map(|_| rng.gen_range(0..nsets)).collect();
            let value = if index.is_empty() {
                if rng.gen_bool(0.1) {
                    ParamValue::Scalar(Scalar::Symbol("unknown".into()))
                } else {
                    ParamValue::Scalar(Scalar::Num(quarter(rng, -400, 400)))
                }
            } else {
                let len: usize = index.iter().map(|&s| set_sizes[s]).product();
                ParamValue::Array((0..len).map(|_| Scalar::Num(quarter(rng, -400, 400))).collect())
            };
            ParamDecl {
                name: format!("p{k}"),
                index: index.iter().map(|&s| format!("S{s}")).collect(),
                value,
                description: description(rng),
            }
        })
        .collect();

    let nvars = rng.gen_range(1..=3);
    let variables = (0..nvars)
        .map(|k| {
            let dims = rng.gen_range(0..=2);
            let index: Vec<String> = (0..dims).map(|_| format!("S{}", rng.gen_range(0..nsets))).collect();
            let filter = (dims == 2 && index[0] == index[1] && rng.gen_bool(0.5)).then(|| IndexFilter {
                names: vec!["a".into(), "b".into()],
                condition: Condition(vec![Comparison { left: "a".into(), op: CmpOp::Ne, right: "b".into() }]),
            });
            let domain = *[Domain::Continuous, Domain::Integer, Domain::Binary].choose(rng).unwrap();
            let bounds = rng.gen_bool(0.5).then(|| {
                let lo = if rng.gen_bool(0.2) { f64::NEG_INFINITY } else { quarter(rng, -40, 40) };
                let hi = if rng.gen_bool(0.2) {
                    f64::INFINITY
                } else {
                    let base = if lo.is_finite() { lo } else { 0.0 };
                    base + quarter(rng, 0, 40)
                };
                (lo, hi)
            });
            VarDecl { name: format!("x{k}"), index, filter, domain, bounds, description: description(rng) }
        })
        .collect();

    let mut model = FiveElementModel {
        sets,
        parameters,
        variables,
        objective: Objective { sense: Sense::Minimize, expr: Expr::Num(0.0), description: String::new() },
        constraints: Vec::new(),
    };
    let gen = Gen { model: &model, max_depth: 4 };
    let mut scope = Scope { bound: Vec::new(), fresh: 0 };
    let objective = Objective {
        sense: if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize },
        expr: gen.expr(rng, 0, true, &mut scope),
        description: description(rng),
    };
    let nconstraints = rng.gen_range(0..=4);
    let constraints = (0..nconstraints)
        .map(|_| {
            let mut scope = Scope { bound: Vec::new(), fresh: 0 };
            let quantifier = rng.gen_bool(0.5).then(|| gen.domain(rng, &mut scope));
            if let Some(q) = &quantifier {
                scope.bound.extend(q.bindings.iter().map(|b| (b.var.clone(), b.set.clone())));
            }
            let relation = *[Relation::Le, Relation::Ge, Relation::Eq].choose(rng).unwrap();
            ConstraintDecl {
                lhs: gen.expr(rng, 1, false, &mut scope),
                relation,
                rhs: gen.expr(rng, 1, false, &mut scope),
                quantifier,
                description: description(rng),
            }
        })
        .collect();
    model.objective = objective;
    model.constraints = constraints;
    model
}

/// A random linear model over `n ≤ max_binaries` binaries plus up to two small
/// integer variables, with at most `max_rows` rows of mixed relations. Every
/// variable domain is finite, so the enumerator can always decide it.
pub fn random_finite_linear_model<R: Rng>(rng: &mut R, max_binaries: usize, max_rows: usize) -> FiveElementModel {
    let n = rng.gen_range(1..=max_binaries);
    let m = rng.gen_range(0..=max_rows);
    let ints = rng.gen_range(0..=2);
    let int_set: Vec<String> = (1..=ints).map(|k| format!("K{k}")).collect();
    let mut text = format!("## Sets:\nI = {{1..{n}}}\n");
    if ints > 0 {
        text.push_str(&format!("K = {{{}}}\n", int_set.join(", ")));
    }
    let coeffs = |rng: &mut R, len: usize| -> String {
        (0..len).map(|_| rng.gen_range(-9..=9).to_string()).collect::<Vec<_>>().join(", ")
    };
    text.push_str("\n## Parameters:\n");
    text.push_str(&format!("c[I] = ({})\n", coeffs(rng, n)));
    if ints > 0 {
        text.push_str(&format!("e[K] = ({})\n", coeffs(rng, ints)));
    }
    for r in 0..m {
        text.push_str(&format!("a{r}[I] = ({})\n", coeffs(rng, n)));
        if ints > 0 {
            text.push_str(&format!("g{r}[K] = ({})\n", coeffs(rng, ints)));
        }
        text.push_str(&format!("b{r} = {}\n", rng.gen_range(-5..=n as i64 * 4)));
    }
    text.push_str("\n## Variables:\nx[I] : binary\n");
    if ints > 0 {
        text.push_str(&format!("y[K] : integer in {}..{}\n", -rng.gen_range(0..=2), rng.gen_range(0..=3)));
    }
    let sense = if rng.gen_bool(0.5) { "minimize" } else { "maximize" };
    let int_term = |name: &str| if ints > 0 { format!(" + sum{{k in K}} {name}[k] * y[k]") } else { String::new() };
    text.push_str(&format!("\n## Objective:\n{sense} sum{{i in I}} c[i] * x[i]{}\n", int_term("e")));
    text.push_str("\n## Constraints:\n");
    for r in 0..m {
        let rel = ["<=", ">=", "=="][if rng.gen_bool(0.15) { 2 } else { rng.gen_range(0..2) }];
        text.push_str(&format!("sum{{i in I}} a{r}[i] * x[i]{} {rel} b{r}\n", int_term(&format!("g{r}"))));
    }
    crate::five_element::parse_five_element(&text).expect("generated model parses")
}
