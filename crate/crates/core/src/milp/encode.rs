use log::debug;

use rayon::prelude::*;

use super::bnb::{solve_milp_with, BnbStatus};
use super::bounds::interval_affine;
use super::model::{LinExpr, MilpModel};
use crate::config::Tolerances;
use crate::control::LtiSystem;
use crate::error::{dim_err, Error, Result};
use crate::lp::{solve_lp_with, LpOutcome};
use crate::network::ReluNetwork;
use crate::polytope::Polytope;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOptions {
    /// Multiplies every big-M constant; values above 1 only loosen the
    /// relaxation.
    pub big_m_scale: f64,
    /// Tighten interval bounds of undecided neurons with two LPs each.
    pub lp_tightening: bool,
    /// Seed each step with the exact bounding box of the reachable states
    /// (one small MILP per coordinate and sign) instead of the box of the
    /// LP relaxation.
    pub exact_state_bounds: bool,
    pub tol: Tolerances,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { big_m_scale: 1.0, lp_tightening: true, exact_state_bounds: true, tol: Tolerances::DEFAULT }
    }
}

/// Bound widening applied to LP-derived bounds so solver round-off never
/// cuts off a feasible point.
fn pad(v: f64) -> f64 {
    1e-7 * (1.0 + v.abs())
}

/// `[min, max]` of `expr` over the LP relaxation of `model`.
fn expr_range(model: &MilpModel, expr: &LinExpr, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut neg = expr.clone();
    neg.terms.values_mut().for_each(|c| *c = -*c);
    let mut out = [0.0; 2];
    for (slot, obj) in out.iter_mut().zip([expr, &neg]) {
        let lp = model.relaxation(obj, &model.lower, &model.upper);
        *slot = match solve_lp_with(&lp, tol)? {
            LpOutcome::Optimal { value, .. } => value,
            LpOutcome::Infeasible => return Err(Error::EmptyInput),
            LpOutcome::Unbounded => f64::INFINITY,
        };
    }
    Ok((-out[1] + expr.constant, out[0] + expr.constant))
}

/// Adds `x₀ ∈ x_in` and returns its expressions and bounding box.
fn add_input(model: &mut MilpModel, x_in: &Polytope) -> Result<(Vec<LinExpr>, Vec<(f64, f64)>)> {
    let bbox = x_in.bounding_box()?;
    let vars: Vec<usize> =
        bbox.iter().enumerate().map(|(i, &(l, h))| model.add_continuous(format!("x0_{i}"), l, h)).collect();
    let exprs: Vec<LinExpr> = vars.iter().map(|&v| LinExpr::var(v)).collect();
    for r in 0..x_in.num_constraints() {
        model.add_le(&LinExpr::combine(x_in.f().row(r), &exprs, 0.0), x_in.g()[r]);
    }
    model.inputs = vars;
    Ok((exprs, bbox))
}

/// Encodes the hidden layers and the output layer of `net` on top of
/// `input`, whose values lie in `in_box`. Returns the output expressions.
fn encode_network(
    model: &mut MilpModel,
    net: &ReluNetwork,
    input: &[LinExpr],
    in_box: &[(f64, f64)],
    tag: &str,
    opts: &EncodeOptions,
) -> Result<Vec<LinExpr>> {
    let mut cur = input.to_vec();
    let (mut cur_lo, mut cur_hi): (Vec<f64>, Vec<f64>) = in_box.iter().copied().unzip();
    let mut binaries = 0;
    for (l, layer) in net.layers()[..net.num_hidden()].iter().enumerate() {
        let (ilo, ihi) = interval_affine(&layer.weights, &layer.b, &cur_lo, &cur_hi);
        let mut next = Vec::with_capacity(layer.b.len());
        let mut next_lo = Vec::with_capacity(layer.b.len());
        let mut next_hi = Vec::with_capacity(layer.b.len());
        for i in 0..layer.b.len() {
            let pre = LinExpr::combine(layer.weights.row(i), &cur, layer.b[i]);
            let (mut lo, mut hi) = (ilo[i], ihi[i]);
            if opts.lp_tightening && lo < 0.0 && hi > 0.0 && !pre.terms.is_empty() {
                let (plo, phi) = expr_range(model, &pre, &opts.tol)?;
                lo = lo.max(plo - pad(plo));
                hi = hi.min(phi + pad(phi));
            }
            if hi <= 0.0 {
                next.push(LinExpr::constant(0.0));
                next_lo.push(0.0);
                next_hi.push(0.0);
            } else if lo >= 0.0 {
                next.push(pre);
                next_lo.push(lo);
                next_hi.push(hi);
            } else {
                let s = opts.big_m_scale;
                let z = model.add_relu(&format!("{tag}_{}_{i}", l + 1), &pre, -lo * s, hi * s);
                binaries += 1;
                next.push(LinExpr::var(z));
                next_lo.push(0.0);
                next_hi.push(hi);
            }
        }
        cur = next;
        cur_lo = next_lo;
        cur_hi = next_hi;
    }
    debug!("encoded network {tag}: {binaries} undecided neurons");
    let out = net.output_layer();
    Ok((0..out.b.len()).map(|i| LinExpr::combine(out.weights.row(i), &cur, out.b[i])).collect())
}

fn set_direction(model: &mut MilpModel, direction: &[f64], exprs: &[LinExpr]) -> Result<()> {
    if direction.len() != exprs.len() {
        return Err(dim_err(format!("direction of length {}, expected {}", direction.len(), exprs.len())));
    }
    model.objective = LinExpr::combine(direction, exprs, 0.0);
    Ok(())
}

/// `max direction·net(x)` over `x ∈ x_in`.
pub fn encode_output_range(net: &ReluNetwork, x_in: &Polytope, direction: &[f64]) -> Result<MilpModel> {
    encode_output_range_with(net, x_in, direction, &EncodeOptions::default())
}

pub fn encode_output_range_with(
    net: &ReluNetwork,
    x_in: &Polytope,
    direction: &[f64],
    opts: &EncodeOptions,
) -> Result<MilpModel> {
    if x_in.dim() != net.input_dim() {
        return Err(dim_err(format!("input set of dimension {}, network expects {}", x_in.dim(), net.input_dim())));
    }
    if direction.len() != net.output_dim() {
        return Err(dim_err(format!("direction of length {}, network has {} outputs", direction.len(), net.output_dim())));
    }
    let mut model = MilpModel::new();
    let (x0, bbox) = add_input(&mut model, x_in)?;
    let u = encode_network(&mut model, net, &x0, &bbox, "s0", opts)?;
    set_direction(&mut model, direction, &u)?;
    Ok(model)
}

/// Incrementally built encoding of `x_{j+1} = A x_j + B net(x_j)` from
/// `x₀ ∈ X_in`. Each extension reuses the bounds of the earlier steps.
#[derive(Debug, Clone)]
pub struct ClosedLoopEncoder {
    sys: LtiSystem,
    net: ReluNetwork,
    opts: EncodeOptions,
    model: MilpModel,
    states: Vec<Vec<LinExpr>>,
    /// `(vars, rows)` of the model once `x_j` is defined.
    marks: Vec<(usize, usize)>,
    boxes: Vec<Vec<(f64, f64)>>,
}

impl ClosedLoopEncoder {
    pub fn new(sys: &LtiSystem, net: &ReluNetwork, x_in: &Polytope, opts: EncodeOptions) -> Result<Self> {
        if net.input_dim() != sys.nx() || net.output_dim() != sys.nu() {
            return Err(dim_err(format!(
                "network maps {} -> {}, system has nx={}, nu={}",
                net.input_dim(),
                net.output_dim(),
                sys.nx(),
                sys.nu()
            )));
        }
        if x_in.dim() != sys.nx() {
            return Err(dim_err(format!("input set of dimension {}, system has nx={}", x_in.dim(), sys.nx())));
        }
        let mut model = MilpModel::new();
        let (x0, bbox) = add_input(&mut model, x_in)?;
        let marks = vec![(model.num_vars(), model.num_rows())];
        Ok(Self {
            sys: sys.clone(),
            net: net.clone(),
            opts,
            model,
            states: vec![x0],
            marks,
            boxes: vec![bbox],
        })
    }

    pub fn options(&self) -> EncodeOptions {
        self.opts
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// Bounding box of `x_j` used to seed the step-`j` network encoding.
    pub fn state_box(&self, j: usize) -> Option<&[(f64, f64)]> {
        self.boxes.get(j).map(Vec::as_slice)
    }

    pub fn extend_to(&mut self, k: usize) -> Result<()> {
        while self.horizon() < k {
            let j = self.horizon();
            if j > 0 {
                let bbox = if self.opts.exact_state_bounds { self.exact_box(j)? } else { self.relaxed_box(j)? };
                self.boxes.push(bbox);
            }
            let x = self.states[j].clone();
            let u = encode_network(&mut self.model, &self.net, &x, &self.boxes[j], &format!("s{j}"), &self.opts)?;
            let next: Vec<LinExpr> = (0..self.sys.nx())
                .map(|i| {
                    let mut e = LinExpr::combine(self.sys.a.row(i), &x, 0.0);
                    e.add_scaled(&LinExpr::combine(self.sys.b.row(i), &u, 0.0), 1.0);
                    e
                })
                .collect();
            self.states.push(next);
            self.marks.push((self.model.num_vars(), self.model.num_rows()));
        }
        Ok(())
    }

    fn relaxed_box(&self, j: usize) -> Result<Vec<(f64, f64)>> {
        let mut bbox = Vec::with_capacity(self.sys.nx());
        for e in &self.states[j] {
            let (lo, hi) = expr_range(&self.model, e, &self.opts.tol)?;
            bbox.push((lo - pad(lo), hi + pad(hi)));
        }
        Ok(bbox)
    }

    fn exact_box(&self, j: usize) -> Result<Vec<(f64, f64)>> {
        let jobs: Vec<(usize, f64)> = (0..self.sys.nx()).flat_map(|i| [(i, 1.0), (i, -1.0)]).collect();
        let tol = self.opts.tol;
        let vals: Vec<f64> = jobs
            .par_iter()
            .map(|&(i, sign)| {
                let mut m = self.model.clone();
                m.objective = LinExpr::combine(&[sign], &self.states[j][i..=i], 0.0);
                let r = solve_milp_with(&m, &tol)?;
                if r.status == BnbStatus::Infeasible {
                    return Err(Error::EmptyInput);
                }
                Ok(r.bound + pad(r.bound))
            })
            .collect::<Result<_>>()?;
        Ok(vals.chunks(2).map(|c| (-c[1], c[0])).collect())
    }

    /// `max direction·x_k` over the `k`-step encoding.
    pub fn model_for(&mut self, k: usize, direction: &[f64]) -> Result<MilpModel> {
        if k == 0 {
            return Err(Error::InvalidValue("horizon must be at least 1".into()));
        }
        self.extend_to(k)?;
        let (vars, rows) = self.marks[k];
        let mut model = self.model.truncated(vars, rows);
        set_direction(&mut model, direction, &self.states[k])?;
        Ok(model)
    }
}

/// `max direction·x_k` for the closed loop started in `x_in`.
pub fn encode_reach(
    sys: &LtiSystem,
    net: &ReluNetwork,
    x_in: &Polytope,
    k: usize,
    direction: &[f64],
) -> Result<MilpModel> {
    ClosedLoopEncoder::new(sys, net, x_in, EncodeOptions::default())?.model_for(k, direction)
}
