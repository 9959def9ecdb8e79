use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use log::{debug, trace};

use super::model::MilpModel;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::lp::{solve_lp_with, LpOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Objective value including its constant; `-inf` when infeasible.
    pub value: f64,
    /// Proven upper bound on the optimum; equals `value` unless the search
    /// stopped within the optimality gap.
    pub bound: f64,
    /// Best integral point found (empty when infeasible).
    pub point: Vec<f64>,
    /// Number of node relaxations solved.
    pub nodes: usize,
}

struct Node {
    /// Parent relaxation value, an upper bound for this subtree.
    bound: f64,
    id: usize,
    fixes: Vec<(usize, f64)>,
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
    // max-heap: larger bound first, then older node
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    tol: Tolerances,
    binaries: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    tried_patterns: HashSet<Vec<bool>>,
    nodes: usize,
}

impl Search<'_> {
    fn bounds_with(&self, fixes: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.model.lower.clone();
        let mut hi = self.model.upper.clone();
        for &(v, x) in fixes {
            lo[v] = x;
            hi[v] = x;
        }
        (lo, hi)
    }

    fn solve(&self, fixes: &[(usize, f64)]) -> Result<LpOutcome> {
        let (lo, hi) = self.bounds_with(fixes);
        solve_lp_with(&self.model.relaxation(&self.model.objective, &lo, &hi), &self.tol)
    }

    fn offer(&mut self, value: f64, point: Vec<f64>) {
        if self.incumbent.as_ref().is_none_or(|(v, _)| value > *v) {
            trace!("new incumbent {value}");
            self.incumbent = Some((value, point));
        }
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(v, _)| *v)
    }

    /// Re-solves with every binary fixed to its value in `point`.
    fn polish(&mut self, point: &[f64]) -> Result<()> {
        let pattern: Vec<bool> = self.binaries.iter().map(|&v| point[v] > 0.5).collect();
        if !self.tried_patterns.insert(pattern.clone()) {
            return Ok(());
        }
        let fixes: Vec<(usize, f64)> =
            self.binaries.iter().zip(&pattern).map(|(&v, &b)| (v, if b { 1.0 } else { 0.0 })).collect();
        if let LpOutcome::Optimal { value, point } = self.solve(&fixes)? {
            self.offer(value, point);
        }
        Ok(())
    }

    /// Evaluates the network exactly at the relaxation's inputs and polishes
    /// the resulting activation pattern.
    fn heuristic(&mut self, point: &[f64]) -> Result<()> {
        if self.model.relus.is_empty() || self.model.inputs.is_empty() {
            return Ok(());
        }
        let lifted = self.model.lift_inputs(point);
        if self.model.violation(&lifted) <= 1e-7 {
            self.polish(&lifted)?;
        }
        Ok(())
    }
}

/// Best-first branch and bound over the binary variables of `m`.
pub fn solve_milp(m: &MilpModel) -> Result<BnbResult> {
    solve_milp_with(m, &Tolerances::DEFAULT)
}

pub fn solve_milp_with(m: &MilpModel, tol: &Tolerances) -> Result<BnbResult> {
    let mut s = Search {
        model: m,
        tol: *tol,
        binaries: m.binaries(),
        incumbent: None,
        tried_patterns: HashSet::new(),
        nodes: 0,
    };
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::INFINITY, id: 0, fixes: Vec::new() });
    let mut next_id = 1;
    let mut open_bound = f64::NEG_INFINITY;
    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &s.incumbent {
            let inc = *inc;
            if node.bound <= inc + tol.prune || node.bound - inc <= tol.gap * (1.0 + inc.abs()) {
                // best-first: every remaining node is bounded by this one
                open_bound = node.bound;
                break;
            }
        }
        s.nodes += 1;
        let (value, point) = match s.solve(&node.fixes)? {
            LpOutcome::Optimal { value, point } => (value, point),
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded => return Err(Error::Unbounded),
        };
        if value <= s.incumbent_value() + tol.prune {
            continue;
        }
        // most fractional binary, lowest index on ties
        let mut branch: Option<(usize, f64)> = None;
        for &v in &s.binaries {
            let frac = point[v].min(1.0 - point[v]);
            if frac > tol.integrality && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((v, frac));
            }
        }
        match branch {
            None => {
                s.polish(&point)?;
                s.offer(value, point);
            }
            Some((v, _)) => {
                s.heuristic(&point)?;
                for x in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((v, x));
                    heap.push(Node { bound: value, id: next_id, fixes });
                    next_id += 1;
                }
            }
        }
    }
    debug!("branch and bound: {} nodes, {} binaries", s.nodes, s.binaries.len());
    let c = m.objective.constant;
    Ok(match s.incumbent {
        Some((value, point)) => BnbResult {
            status: BnbStatus::Optimal,
            value: value + c,
            bound: value.max(open_bound) + c,
            point,
            nodes: s.nodes,
        },
        None => BnbResult {
            status: BnbStatus::Infeasible,
            value: f64::NEG_INFINITY,
            bound: f64::NEG_INFINITY,
            point: Vec::new(),
            nodes: s.nodes,
        },
    })
}
