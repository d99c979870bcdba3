use std::fmt::Write;

use super::{
    CmpOp, Condition, Expr, FiveElementModel, IndexDomain, ParamValue, Relation, Scalar, Sense, SECTION_NAMES,
};

/// Renders a model in the canonical text layout. Re-parsing the output yields
/// a structurally equal model.
pub fn render_five_element(model: &FiveElementModel) -> String {
    let mut out = String::new();
    let section = |out: &mut String, idx: usize, lines: Vec<(String, &str)>| {
        if idx > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "## {}:", SECTION_NAMES[idx]);
        for (code, description) in lines {
            out.push_str(&code);
            let description = description.replace(['\n', '\r'], " ");
            let description = description.trim();
            if !description.is_empty() {
                let _ = write!(out, "  # {description}");
            }
            out.push('\n');
        }
    };

    let sets = model
        .sets
        .iter()
        .map(|s| {
            let members: Vec<String> = s.members.iter().map(|m| m.label()).collect();
            (format!("{} = {{{}}}", s.name, members.join(", ")), s.description.as_str())
        })
        .collect();
    section(&mut out, 0, sets);

    let params = model
        .parameters
        .iter()
        .map(|p| {
            let mut code = p.name.clone();
            if !p.index.is_empty() {
                let _ = write!(code, "[{}]", p.index.join(", "));
            }
            code.push_str(" = ");
            match &p.value {
                ParamValue::Scalar(s) => code.push_str(&scalar(s)),
                ParamValue::Array(values) => {
                    let values: Vec<String> = values.iter().map(scalar).collect();
                    let _ = write!(code, "({})", values.join(", "));
                }
            }
            (code, p.description.as_str())
        })
        .collect();
    section(&mut out, 1, params);

    let vars = model
        .variables
        .iter()
        .map(|v| {
            let mut code = v.name.clone();
            match &v.filter {
                Some(filter) => {
                    let domain = IndexDomain {
                        bindings: filter
                            .names
                            .iter()
                            .zip(&v.index)
                            .map(|(n, s)| super::Binding { var: n.clone(), set: s.clone() })
                            .collect(),
                        condition: (!filter.condition.0.is_empty()).then(|| filter.condition.clone()),
                    };
                    let _ = write!(code, "[{}]", index_domain(&domain));
                }
                None if !v.index.is_empty() => {
                    let _ = write!(code, "[{}]", v.index.join(", "));
                }
                None => {}
            }
            let _ = write!(code, " : {}", v.domain);
            if let Some((lo, hi)) = v.bounds {
                let _ = write!(code, " in {}..{}", number(lo), number(hi));
            }
            (code, v.description.as_str())
        })
        .collect();
    section(&mut out, 2, vars);

    let sense = match model.objective.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize",
    };
    let objective = vec![(format!("{sense} {}", expr(&model.objective.expr)), model.objective.description.as_str())];
    section(&mut out, 3, objective);

    let constraints = model
        .constraints
        .iter()
        .map(|c| {
            let mut code = format!("{} {} {}", expr(&c.lhs), relation(c.relation), expr(&c.rhs));
            if let Some(q) = &c.quantifier {
                let _ = write!(code, " forall {}", index_domain(q));
            }
            (code, c.description.as_str())
        })
        .collect();
    section(&mut out, 4, constraints);
    out
}

fn relation(r: Relation) -> &'static str {
    r.symbol()
}

fn number(v: f64) -> String {
    format!("{v}")
}

fn scalar(s: &Scalar) -> String {
    match s {
        Scalar::Num(v) => number(*v),
        Scalar::Symbol(s) => s.clone(),
    }
}

fn condition(c: &Condition) -> String {
    c.0.iter()
        .map(|cmp| {
            let op = match cmp.op {
                CmpOp::Eq => "==",
                CmpOp::Ne => "!=",
            };
            format!("{} {op} {}", cmp.left, cmp.right)
        })
        .collect::<Vec<_>>()
        .join(" and ")
}

fn index_domain(d: &IndexDomain) -> String {
    let mut s = d.bindings.iter().map(|b| format!("{} in {}", b.var, b.set)).collect::<Vec<_>>().join(", ");
    if let Some(c) = &d.condition {
        let _ = write!(s, " | {}", condition(c));
    }
    s
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) | Expr::Mod(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Sum { .. } => 2,
        Expr::Num(_) | Expr::Ref { .. } => 4,
    }
}

pub(crate) fn expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn wrapped(out: &mut String, e: &Expr, paren: bool) {
    if paren {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(v) => out.push_str(&number(*v)),
        Expr::Ref { name, index } => {
            out.push_str(name);
            if !index.is_empty() {
                let _ = write!(out, "[{}]", index.join(", "));
            }
        }
        Expr::Neg(inner) => {
            out.push('-');
            // A bare literal would be folded into a negative number on re-parse.
            let paren = matches!(**inner, Expr::Num(_) | Expr::Sum { .. }) || precedence(inner) < 3;
            wrapped(out, inner, paren);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let op = if matches!(e, Expr::Add(..)) { " + " } else { " - " };
            wrapped(out, a, precedence(a) < 1);
            out.push_str(op);
            wrapped(out, b, precedence(b) <= 1 && !matches!(**b, Expr::Sum { .. }));
        }
        Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Mod(a, b) => {
            let op = match e {
                Expr::Mul(..) => " * ",
                Expr::Div(..) => " / ",
                _ => " mod ",
            };
            // A summation extends to the end of its term, so it is always
            // parenthesized inside a product.
            wrapped(out, a, precedence(a) < 2 || matches!(**a, Expr::Sum { .. }));
            out.push_str(op);
            wrapped(out, b, precedence(b) <= 2);
        }
        Expr::Sum { domain, body } => {
            let _ = write!(out, "sum{{{}}} ", index_domain(domain));
            wrapped(out, body, precedence(body) < 2);
        }
    }
}
