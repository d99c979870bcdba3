//! Best-first branch-and-bound over the simplex relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{solve_relaxation, LpError, LpResult};
use crate::compiler::CanonicalModel;

#[derive(Debug, Clone, PartialEq)]
pub enum MilpResult {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    NodeLimit { incumbent: Option<(Vec<f64>, f64)> },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MilpStats {
    pub nodes: usize,
    pub iterations: usize,
}

struct Node {
    bound: f64,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed so the max-heap pops the smallest (bound, id).
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Most fractional integral variable, ties broken by lowest index.
fn branching_variable(model: &CanonicalModel, x: &[f64], int_tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in model.variables.iter().enumerate() {
        if !v.is_integral() {
            continue;
        }
        let frac = x[j] - x[j].floor();
        let dist = frac.min(1.0 - frac);
        if dist > int_tol && best.is_none_or(|(_, d)| dist > d + 1e-12) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

pub fn branch_and_bound(
    model: &CanonicalModel,
    int_tol: f64,
    node_limit: usize,
    iteration_limit: usize,
    log: &mut Vec<String>,
) -> Result<(MilpResult, MilpStats), LpError> {
    let mut stats = MilpStats::default();
    let root_lower: Vec<f64> =
        model.variables.iter().map(|v| if v.is_integral() { v.lower.ceil() } else { v.lower }).collect();
    let root_upper: Vec<f64> =
        model.variables.iter().map(|v| if v.is_integral() { v.upper.floor() } else { v.upper }).collect();

    let solve = |lower: &[f64], upper: &[f64], stats: &mut MilpStats| -> Result<LpResult, LpError> {
        stats.nodes += 1;
        let (result, iters) = solve_relaxation(model, lower, upper, iteration_limit)?;
        stats.iterations += iters;
        Ok(result)
    };

    let root = solve(&root_lower, &root_upper, &mut stats)?;
    let (x, bound) = match root {
        LpResult::Infeasible => return Ok((MilpResult::Infeasible, stats)),
        LpResult::Unbounded => return Ok((MilpResult::Unbounded, stats)),
        LpResult::Optimal { x, objective } => (x, objective),
    };
    log.push(format!("branch-and-bound: root relaxation bound {bound}"));

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    heap.push(Node { bound, id: next_id, lower: root_lower, upper: root_upper, x });
    next_id += 1;

    let prune = |bound: f64, incumbent: &Option<(Vec<f64>, f64)>| {
        incumbent.as_ref().is_some_and(|(_, best)| bound >= best - 1e-9 * best.abs().max(1.0))
    };

    while let Some(node) = heap.pop() {
        if prune(node.bound, &incumbent) {
            continue;
        }
        let Some(j) = branching_variable(model, &node.x, int_tol) else {
            log.push(format!("branch-and-bound: incumbent {} at node {}", node.bound, node.id));
            incumbent = Some((node.x, node.bound));
            continue;
        };
        let v = node.x[j];
        for down in [true, false] {
            if stats.nodes >= node_limit {
                log.push(format!("branch-and-bound: node limit {node_limit} reached"));
                return Ok((MilpResult::NodeLimit { incumbent }, stats));
            }
            let (mut lower, mut upper) = (node.lower.clone(), node.upper.clone());
            if down {
                upper[j] = v.floor();
            } else {
                lower[j] = v.ceil();
            }
            match solve(&lower, &upper, &mut stats)? {
                LpResult::Infeasible => {}
                // A bounded parent cannot have an unbounded child.
                LpResult::Unbounded => return Ok((MilpResult::Unbounded, stats)),
                LpResult::Optimal { x, objective } => {
                    if !prune(objective, &incumbent) {
                        heap.push(Node { bound: objective, id: next_id, lower, upper, x });
                        next_id += 1;
                    }
                }
            }
        }
    }

    Ok(match incumbent {
        Some((mut x, objective)) => {
            for (xj, v) in x.iter_mut().zip(&model.variables) {
                if v.is_integral() {
                    *xj = xj.round();
                }
            }
            (MilpResult::Optimal { x, objective }, stats)
        }
        None => (MilpResult::Infeasible, stats),
    })
}
