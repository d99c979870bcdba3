//! Grounded expression trees over flat variable indices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compiler::LinearForm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundExpr {
    Const(f64),
    Var(usize),
    Neg(Box<GroundExpr>),
    Add(Vec<GroundExpr>),
    Sub(Box<GroundExpr>, Box<GroundExpr>),
    Mul(Box<GroundExpr>, Box<GroundExpr>),
    Div(Box<GroundExpr>, Box<GroundExpr>),
}

impl GroundExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            GroundExpr::Const(v) => *v,
            GroundExpr::Var(j) => x[*j],
            GroundExpr::Neg(a) => -a.eval(x),
            GroundExpr::Add(terms) => terms.iter().map(|t| t.eval(x)).sum(),
            GroundExpr::Sub(a, b) => a.eval(x) - b.eval(x),
            GroundExpr::Mul(a, b) => a.eval(x) * b.eval(x),
            GroundExpr::Div(a, b) => a.eval(x) / b.eval(x),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            GroundExpr::Const(_) => None,
            GroundExpr::Var(j) => Some(*j),
            GroundExpr::Neg(a) => a.max_var(),
            GroundExpr::Add(terms) => terms.iter().filter_map(GroundExpr::max_var).max(),
            GroundExpr::Sub(a, b) | GroundExpr::Mul(a, b) | GroundExpr::Div(a, b) => a.max_var().max(b.max_var()),
        }
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            GroundExpr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Folds constant subtrees and flattens nested sums. Does not change the
    /// value at any point.
    pub fn simplify(self) -> GroundExpr {
        match self {
            GroundExpr::Neg(a) => match a.simplify() {
                GroundExpr::Const(v) => GroundExpr::Const(-v),
                GroundExpr::Neg(inner) => *inner,
                other => GroundExpr::Neg(Box::new(other)),
            },
            GroundExpr::Add(terms) => {
                let mut flat = Vec::with_capacity(terms.len());
                let mut constant = 0.0;
                let mut has_constant = false;
                for t in terms {
                    match t.simplify() {
                        GroundExpr::Add(inner) => {
                            for u in inner {
                                match u {
                                    GroundExpr::Const(v) => {
                                        constant += v;
                                        has_constant = true;
                                    }
                                    other => flat.push(other),
                                }
                            }
                        }
                        GroundExpr::Const(v) => {
                            constant += v;
                            has_constant = true;
                        }
                        other => flat.push(other),
                    }
                }
                if flat.is_empty() {
                    return GroundExpr::Const(constant);
                }
                if has_constant && constant != 0.0 {
                    flat.push(GroundExpr::Const(constant));
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    GroundExpr::Add(flat)
                }
            }
            GroundExpr::Sub(a, b) => match (a.simplify(), b.simplify()) {
                (GroundExpr::Const(x), GroundExpr::Const(y)) => GroundExpr::Const(x - y),
                (a, GroundExpr::Const(0.0)) => a,
                (a, b) => GroundExpr::Sub(Box::new(a), Box::new(b)),
            },
            GroundExpr::Mul(a, b) => match (a.simplify(), b.simplify()) {
                (GroundExpr::Const(x), GroundExpr::Const(y)) => GroundExpr::Const(x * y),
                (a, b) => GroundExpr::Mul(Box::new(a), Box::new(b)),
            },
            GroundExpr::Div(a, b) => match (a.simplify(), b.simplify()) {
                (GroundExpr::Const(x), GroundExpr::Const(y)) => GroundExpr::Const(x / y),
                (a, b) => GroundExpr::Div(Box::new(a), Box::new(b)),
            },
            leaf => leaf,
        }
    }

    /// Affine form of the expression, or `None` if it is not affine (a product
    /// of two variable-dependent factors or a variable denominator).
    pub fn linear_form(&self) -> Option<LinearForm> {
        let mut coeffs = BTreeMap::new();
        let constant = self.collect(1.0, &mut coeffs)?;
        let coeffs = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        Some(LinearForm { coeffs, constant })
    }

    fn collect(&self, scale: f64, coeffs: &mut BTreeMap<usize, f64>) -> Option<f64> {
        match self {
            GroundExpr::Const(v) => Some(scale * v),
            GroundExpr::Var(j) => {
                *coeffs.entry(*j).or_insert(0.0) += scale;
                Some(0.0)
            }
            GroundExpr::Neg(a) => a.collect(-scale, coeffs),
            GroundExpr::Add(terms) => terms.iter().try_fold(0.0, |acc, t| Some(acc + t.collect(scale, coeffs)?)),
            GroundExpr::Sub(a, b) => Some(a.collect(scale, coeffs)? + b.collect(-scale, coeffs)?),
            GroundExpr::Mul(a, b) => {
                if let Some(k) = a.constant_value() {
                    b.collect(scale * k, coeffs)
                } else if let Some(k) = b.constant_value() {
                    a.collect(scale * k, coeffs)
                } else {
                    None
                }
            }
            GroundExpr::Div(a, b) => {
                let k = b.constant_value()?;
                a.collect(scale / k, coeffs)
            }
        }
    }

    /// Value of a variable-free subtree.
    fn constant_value(&self) -> Option<f64> {
        if self.max_var().is_none() {
            Some(self.eval(&[]))
        } else {
            self.as_const()
        }
    }

    pub fn from_linear(form: &LinearForm) -> GroundExpr {
        let mut terms: Vec<GroundExpr> = form
            .coeffs
            .iter()
            .map(|&(j, a)| {
                if a == 1.0 {
                    GroundExpr::Var(j)
                } else {
                    GroundExpr::Mul(Box::new(GroundExpr::Const(a)), Box::new(GroundExpr::Var(j)))
                }
            })
            .collect();
        if form.constant != 0.0 || terms.is_empty() {
            terms.push(GroundExpr::Const(form.constant));
        }
        if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            GroundExpr::Add(terms)
        }
    }
}
