//! Exact output-range and reachability analysis of ReLU networks.
//!
//! A network is encoded as a mixed-binary program with one indicator per
//! undecided neuron (`t = 1` means inactive):
//!
//! ```text
//! z >= pre,   z <= pre + M⁻ t,   z <= M⁺ (1 - t),   z >= 0
//! ```
//!
//! where `M⁻ >= -lo` and `M⁺ >= hi` bound the pre-activation. Neurons whose
//! interval excludes zero are replaced by `0` or `pre` without a binary.
//! States and inputs stay affine expressions of the model variables, so the
//! plant equations never appear as constraints.

mod bnb;
mod bounds;
mod encode;
mod model;

pub use bnb::{solve_milp, solve_milp_with, BnbResult, BnbStatus};
pub use bounds::{interval_affine, propagate_bounds, propagate_box, NeuronBounds};
pub use encode::{
    encode_output_range, encode_output_range_with, encode_reach, ClosedLoopEncoder, EncodeOptions,
};
pub use model::{LinExpr, MilpModel, ReluRecord};

use rayon::prelude::*;

use crate::control::LtiSystem;
use crate::error::{dim_err, Error, Result};
use crate::network::ReluNetwork;
use crate::numerics::Matrix;
use crate::polytope::Polytope;

/// Optimum of one query direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub value: f64,
    /// Proven upper bound, at most the optimality gap above `value`.
    pub bound: f64,
    /// Initial state of the maximizer.
    pub x0: Vec<f64>,
    pub nodes: usize,
}

fn finish(model: &MilpModel, opts: &EncodeOptions) -> Result<DirectionResult> {
    let r = solve_milp_with(model, &opts.tol)?;
    match r.status {
        BnbStatus::Infeasible => Err(Error::EmptyInput),
        BnbStatus::Optimal => Ok(DirectionResult {
            value: r.value,
            bound: r.bound,
            x0: model.inputs.iter().map(|&v| r.point[v]).collect(),
            nodes: r.nodes,
        }),
    }
}

fn check_directions(directions: &Matrix, dim: usize) -> Result<()> {
    if directions.rows() > 0 && directions.cols() != dim {
        return Err(dim_err(format!("directions have {} columns, expected {dim}", directions.cols())));
    }
    Ok(())
}

/// `c*_i = max { d_i·net(x) : x ∈ x_in }` for every row `d_i`.
pub fn output_range(net: &ReluNetwork, x_in: &Polytope, directions: &Matrix) -> Result<Vec<f64>> {
    Ok(output_range_with(net, x_in, directions, &EncodeOptions::default())?.into_iter().map(|r| r.value).collect())
}

pub fn output_range_with(
    net: &ReluNetwork,
    x_in: &Polytope,
    directions: &Matrix,
    opts: &EncodeOptions,
) -> Result<Vec<DirectionResult>> {
    check_directions(directions, net.output_dim())?;
    (0..directions.rows())
        .into_par_iter()
        .map(|i| finish(&encode_output_range_with(net, x_in, directions.row(i), opts)?, opts))
        .collect()
}

/// `c*_i = max { d_i·x_k : x₀ ∈ x_in }` for the closed loop.
pub fn reach_set(
    sys: &LtiSystem,
    net: &ReluNetwork,
    x_in: &Polytope,
    k: usize,
    directions: &Matrix,
) -> Result<Vec<f64>> {
    let mut enc = ClosedLoopEncoder::new(sys, net, x_in, EncodeOptions::default())?;
    Ok(reach_set_with(&mut enc, k, directions)?.into_iter().map(|r| r.value).collect())
}

/// Like [`reach_set`] on a shared encoder, so several horizons and direction
/// sets reuse the same bounds.
pub fn reach_set_with(enc: &mut ClosedLoopEncoder, k: usize, directions: &Matrix) -> Result<Vec<DirectionResult>> {
    enc.extend_to(k)?;
    let models: Vec<MilpModel> =
        (0..directions.rows()).map(|i| enc.model_for(k, directions.row(i))).collect::<Result<_>>()?;
    let opts = enc.options();
    models.par_iter().map(|m| finish(m, &opts)).collect()
}
