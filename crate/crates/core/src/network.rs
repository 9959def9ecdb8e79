//! Feed-forward ReLU networks and their activation-pattern algebra.
//!
//! A network with `L` hidden layers computes
//! `f_{L+1} ∘ σ ∘ f_L ∘ … ∘ σ ∘ f_1`, each `f_l(ξ) = W_l ξ + b_l`. Fixing which
//! hidden neurons are active turns it into an affine map on a polytopic
//! region of the input space; this module builds those maps and regions,
//! the saturation wrapper for box-constrained outputs, and the output-layer
//! retrofit that reproduces a given linear feedback around the origin.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{check_finite, dot, eq_constrained_lsq, rank, Matrix};
use crate::polytope::Polytope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "W")]
    pub weights: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Matrix, b: Vec<f64>) -> Self {
        Self { weights, b }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.b.len()).map(|i| dot(self.weights.row(i), x) + self.b[i]).collect()
    }
}

/// ReLU network `ℝ^{n_x} → ℝ^{n_u}`; the last layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct ReluNetwork {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    layers: Vec<Layer>,
}

impl TryFrom<NetworkRepr> for ReluNetwork {
    type Error = Error;
    fn try_from(r: NetworkRepr) -> Result<Self> {
        ReluNetwork::new(r.layers)
    }
}

impl From<ReluNetwork> for NetworkRepr {
    fn from(n: ReluNetwork) -> Self {
        NetworkRepr { layers: n.layers }
    }
}

/// Per hidden layer, which neurons are active (`true` ⇔ pre-activation ≥ 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct ActivationPattern(pub Vec<Vec<bool>>);

impl From<Vec<Vec<u8>>> for ActivationPattern {
    fn from(v: Vec<Vec<u8>>) -> Self {
        ActivationPattern(v.into_iter().map(|l| l.into_iter().map(|b| b != 0).collect()).collect())
    }
}

impl From<ActivationPattern> for Vec<Vec<u8>> {
    fn from(p: ActivationPattern) -> Self {
        p.0.into_iter().map(|l| l.into_iter().map(u8::from).collect()).collect()
    }
}

impl ActivationPattern {
    pub fn layers(&self) -> &[Vec<bool>] {
        &self.0
    }

    /// Flattened layer by layer.
    pub fn flat(&self) -> Vec<bool> {
        self.0.iter().flatten().copied().collect()
    }
}

/// `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.b.len()).map(|i| dot(self.w.row(i), x) + self.b[i]).collect()
    }
}

impl ReluNetwork {
    /// Validates dimension chaining; at least one hidden layer is required.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(dim_err("a network needs at least one hidden layer and an output layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.rows() != layer.b.len() {
                return Err(dim_err(format!(
                    "layer {l}: W has {} rows, b has {} entries",
                    layer.weights.rows(),
                    layer.b.len()
                )));
            }
            check_finite(&layer.b, "bias")?;
            if l > 0 && layer.weights.cols() != layers[l - 1].weights.rows() {
                return Err(dim_err(format!(
                    "layer {l} expects {} inputs but layer {} emits {}",
                    layer.weights.cols(),
                    l - 1,
                    layers[l - 1].weights.rows()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.output_layer().b.len()
    }

    /// Number of hidden layers `L`.
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.num_hidden()].iter().map(|l| l.b.len()).collect()
    }

    pub fn num_neurons(&self) -> usize {
        self.hidden_widths().iter().sum()
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("validated")
    }

    /// Same hidden layers, new affine output layer.
    pub fn with_output_layer(&self, weights: Matrix, b: Vec<f64>) -> Result<ReluNetwork> {
        let mut layers = self.layers.clone();
        *layers.last_mut().expect("validated") = Layer::new(weights, b);
        ReluNetwork::new(layers)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(dim_err(format!("input of length {}, network expects {}", x.len(), self.input_dim())));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut xi = x.to_vec();
        for layer in &self.layers[..self.num_hidden()] {
            xi = layer.apply(&xi).into_iter().map(|v| v.max(0.0)).collect();
        }
        Ok(self.output_layer().apply(&xi))
    }

    /// Pre-activation values of every hidden layer at `x`.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut out = Vec::with_capacity(self.num_hidden());
        let mut xi = x.to_vec();
        for layer in &self.layers[..self.num_hidden()] {
            let pre = layer.apply(&xi);
            xi = pre.iter().map(|v| v.max(0.0)).collect();
            out.push(pre);
        }
        Ok(out)
    }

    /// Active iff the pre-activation is `>= 0`.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<ActivationPattern> {
        let pre = self.pre_activations(x)?;
        Ok(ActivationPattern(pre.into_iter().map(|l| l.into_iter().map(|v| v >= 0.0).collect()).collect()))
    }

    fn check_pattern(&self, pattern: &ActivationPattern) -> Result<()> {
        let widths: Vec<usize> = pattern.0.iter().map(Vec::len).collect();
        if widths != self.hidden_widths() {
            return Err(dim_err(format!("pattern widths {widths:?}, network widths {:?}", self.hidden_widths())));
        }
        Ok(())
    }

    /// Pre-activation of layer `layer` (1-based, up to `L+1`) as an affine
    /// function of `x`, with earlier layers masked by `pattern`.
    fn pre_affine(&self, pattern: &ActivationPattern, layer: usize) -> Result<AffineMap> {
        let n = self.input_dim();
        let mut w = Matrix::identity(n);
        let mut b = vec![0.0; n];
        for l in 0..layer {
            let lw = &self.layers[l].weights;
            let mut nw = lw.matmul(&w)?;
            let mut nb = lw.mul_vec(&b)?;
            for (v, &c) in nb.iter_mut().zip(&self.layers[l].b) {
                *v += c;
            }
            if l + 1 < layer {
                for (i, &on) in pattern.0[l].iter().enumerate() {
                    if !on {
                        nw.row_mut(i).fill(0.0);
                        nb[i] = 0.0;
                    }
                }
            }
            w = nw;
            b = nb;
        }
        Ok(AffineMap { w, b })
    }

    /// Output of layer `layer` (1-based) under `pattern` as an affine map of
    /// the input: masked hidden output for `layer <= L`, the network output
    /// for `layer == L + 1`.
    pub fn affine_map(&self, pattern: &ActivationPattern, layer: usize) -> Result<AffineMap> {
        self.check_pattern(pattern)?;
        if layer == 0 || layer > self.layers.len() {
            return Err(dim_err(format!("layer index {layer} outside 1..={}", self.layers.len())));
        }
        let mut map = self.pre_affine(pattern, layer)?;
        if layer <= self.num_hidden() {
            for (i, &on) in pattern.0[layer - 1].iter().enumerate() {
                if !on {
                    map.w.row_mut(i).fill(0.0);
                    map.b[i] = 0.0;
                }
            }
        }
        Ok(map)
    }

    /// Hyperplanes of every hidden neuron, oriented by `pattern`, without
    /// redundancy removal.
    pub fn pattern_constraints(&self, pattern: &ActivationPattern) -> Result<Polytope> {
        self.check_pattern(pattern)?;
        let n = self.input_dim();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut g = Vec::new();
        for l in 0..self.num_hidden() {
            let pre = self.pre_affine(pattern, l + 1)?;
            for (j, &on) in pattern.0[l].iter().enumerate() {
                let s = if on { -1.0 } else { 1.0 };
                rows.push(pre.w.row(j).iter().map(|v| s * v).collect());
                g.push(-s * pre.b[j]);
            }
        }
        if rows.is_empty() {
            return Ok(Polytope::whole_space(n));
        }
        Polytope::new(Matrix::from_rows(&rows)?, g)
    }

    /// Closed polytope on which the network follows `pattern`. Active neurons
    /// contribute `W x + b >= 0`, inactive ones `W x + b <= 0`.
    pub fn region_of_pattern(&self, pattern: &ActivationPattern) -> Result<Polytope> {
        match self.pattern_constraints(pattern)?.remove_redundant() {
            Err(Error::EmptyInput) => Err(Error::EmptyRegion),
            r => r,
        }
    }

    /// Pattern at the origin and its region.
    pub fn equilibrium_region(&self) -> Result<(ActivationPattern, Polytope)> {
        let pattern = self.activation_pattern(&vec![0.0; self.input_dim()])?;
        let region = self.region_of_pattern(&pattern)?;
        Ok((pattern, region))
    }

    /// Wraps the output in two extra hidden layers so every output is clamped
    /// to `[lb, ub]`; outputs already inside the box are unchanged.
    pub fn saturate(&self, lb: &[f64], ub: &[f64]) -> Result<ReluNetwork> {
        let nu = self.output_dim();
        if lb.len() != nu || ub.len() != nu {
            return Err(dim_err(format!("bounds of length {}/{} for {nu} outputs", lb.len(), ub.len())));
        }
        if let Some(i) = (0..nu).find(|&i| !(lb[i] < ub[i])) {
            return Err(Error::InvalidBounds(format!("lb[{i}] = {} is not below ub[{i}] = {}", lb[i], ub[i])));
        }
        let out = self.output_layer();
        let mut layers = self.layers[..self.num_hidden()].to_vec();
        layers.push(Layer::new(
            out.weights.scale(-1.0),
            ub.iter().zip(&out.b).map(|(u, b)| u - b).collect(),
        ));
        layers.push(Layer::new(
            Matrix::identity(nu).scale(-1.0),
            ub.iter().zip(lb).map(|(u, l)| u - l).collect(),
        ));
        layers.push(Layer::new(Matrix::identity(nu), lb.to_vec()));
        ReluNetwork::new(layers)
    }

    /// `2^(Σ n_l)`, the number of distinct activation patterns.
    pub fn max_patterns(&self) -> Result<u64> {
        let neurons = self.num_neurons();
        if neurons > 62 {
            return Err(Error::Overflow { neurons });
        }
        Ok(1u64 << neurons)
    }
}

/// Output of [`retrofit_lqr`].
#[derive(Debug, Clone)]
pub struct Retrofit {
    pub network: ReluNetwork,
    /// Squared change of the output-layer parameters.
    pub cost: f64,
}

/// Replaces the output layer by the closest one (in squared parameter
/// change) whose feedback on the equilibrium region equals `-K x`.
pub fn retrofit_lqr(net: &ReluNetwork, k: &Matrix) -> Result<Retrofit> {
    let nu = net.output_dim();
    let nx = net.input_dim();
    if k.rows() != nu || k.cols() != nx {
        return Err(dim_err(format!("gain is {}x{}, network maps {nx} -> {nu}", k.rows(), k.cols())));
    }
    let pattern = net.activation_pattern(&vec![0.0; nx])?;
    let hidden = net.affine_map(&pattern, net.num_hidden())?;
    let nl = hidden.b.len();

    // Ŵ W_Γ = -K row by row: W_Γᵀ ŵ_i = -K_iᵀ
    let wt = hidden.w.transpose();
    let rank_w = rank(&wt, 1e-10);
    for i in 0..nu {
        let neg_k: Vec<f64> = k.row(i).iter().map(|v| -v).collect();
        let aug = wt.hstack(&Matrix::column_vector(&neg_k))?;
        if rank(&aug, 1e-10) > rank_w {
            return Err(Error::RankDeficient(format!(
                "rank consistency: row {i} of -K is not in the row space of the equilibrium hidden map (rank {rank_w})"
            )));
        }
    }
    if nu * nl < nu * rank_w {
        return Err(Error::RankDeficient(format!(
            "variable count: {} free weights for a system of rank {}",
            nu * nl,
            nu * rank_w
        )));
    }

    let nvar = nu * nl + nu;
    let mut target = Vec::with_capacity(nvar);
    target.extend_from_slice(net.output_layer().weights.as_slice());
    target.extend_from_slice(&net.output_layer().b);
    let ncons = nu * nx + nu;
    let mut aeq = Matrix::zeros(ncons, nvar);
    let mut beq = vec![0.0; ncons];
    for i in 0..nu {
        for c in 0..nx {
            let r = i * nx + c;
            for j in 0..nl {
                aeq[(r, i * nl + j)] = hidden.w[(j, c)];
            }
            beq[r] = -k[(i, c)];
        }
        let r = nu * nx + i;
        for j in 0..nl {
            aeq[(r, i * nl + j)] = hidden.b[j];
        }
        aeq[(r, nu * nl + i)] = 1.0;
    }
    let v = eq_constrained_lsq(&Matrix::identity(nvar), &target, &aeq, &beq)?;
    let cost = v.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
    let w = Matrix::new(nu, nl, v[..nu * nl].to_vec())?;
    let b = v[nu * nl..].to_vec();
    Ok(Retrofit { network: net.with_output_layer(w, b)?, cost })
}

/// A full-dimensional cell of the input space on which the network is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub pattern: ActivationPattern,
    pub polytope: Polytope,
}

/// Largest neuron count accepted by [`enumerate_regions`].
pub const REGION_NEURON_CAP: usize = 20;

/// Chebyshev radius below which a cell counts as lower-dimensional.
const MIN_RADIUS: f64 = 1e-9;

/// Realizable patterns whose region meets `within` in a full-dimensional
/// set, found by depth-first search over neurons with pruning of empty or
/// flat partial cells.
pub fn enumerate_regions(net: &ReluNetwork, within: &Polytope) -> Result<Vec<Region>> {
    let neurons = net.num_neurons();
    if neurons > REGION_NEURON_CAP {
        return Err(Error::TooManyNeurons { neurons, cap: REGION_NEURON_CAP });
    }
    if within.dim() != net.input_dim() {
        return Err(dim_err(format!("set of dimension {}, network expects {}", within.dim(), net.input_dim())));
    }
    let order: Vec<(usize, usize)> =
        net.hidden_widths().iter().enumerate().flat_map(|(l, &w)| (0..w).map(move |i| (l, i))).collect();
    let mut out = Vec::new();
    let mut pattern: Vec<Vec<bool>> = vec![Vec::new()];
    dfs(net, &order, 0, &mut pattern, within.clone(), &mut out)?;
    Ok(out)
}

fn full_dimensional(p: &Polytope) -> Result<bool> {
    Ok(matches!(p.chebyshev_ball()?, Some((_, r)) if r > MIN_RADIUS))
}

fn dfs(
    net: &ReluNetwork,
    order: &[(usize, usize)],
    depth: usize,
    pattern: &mut Vec<Vec<bool>>,
    cell: Polytope,
    out: &mut Vec<Region>,
) -> Result<()> {
    if depth == order.len() {
        out.push(Region { pattern: ActivationPattern(pattern.clone()), polytope: cell.remove_redundant()? });
        return Ok(());
    }
    let (l, i) = order[depth];
    let pre = net.pre_affine(&ActivationPattern(pattern.clone()), l + 1)?;
    for active in [true, false] {
        let s = if active { -1.0 } else { 1.0 };
        let row: Vec<f64> = pre.w.row(i).iter().map(|v| s * v).collect();
        let half = Polytope::new(Matrix::row_vector(&row), vec![-s * pre.b[i]])?;
        let next = cell.stack(&half)?;
        if !full_dimensional(&next)? {
            continue;
        }
        pattern[l].push(active);
        let layer_done = pattern[l].len() == net.hidden_widths()[l];
        if layer_done && l + 1 < net.num_hidden() {
            pattern.push(Vec::new());
        }
        dfs(net, order, depth + 1, pattern, next, out)?;
        if layer_done && l + 1 < net.num_hidden() {
            pattern.pop();
        }
        pattern[l].pop();
    }
    Ok(())
}

/// An offset for [`synth_lqr_net`] that keeps both neurons of every pair
/// stable on `set`: one more than the largest coordinate magnitude.
pub fn offset_beyond(set: &Polytope) -> Result<f64> {
    Ok(set.bounding_box()?.iter().fold(0.0f64, |a, &(l, h)| a.max(l.abs()).max(h.abs())) + 1.0)
}

/// One hidden layer of width `2 n_x` computing `relu(x_i - a)` and
/// `relu(a - x_i)` per coordinate, so that `x_i = p_i - q_i + a`, followed
/// by the output layer `-K x`. `offset = 0` is the plain identity pair.
pub fn synth_lqr_net(k: &Matrix, offset: f64) -> Result<ReluNetwork> {
    let (nu, nx) = (k.rows(), k.cols());
    let mut w1 = Matrix::zeros(2 * nx, nx);
    let mut b1 = vec![0.0; 2 * nx];
    for i in 0..nx {
        w1[(2 * i, i)] = 1.0;
        b1[2 * i] = -offset;
        w1[(2 * i + 1, i)] = -1.0;
        b1[2 * i + 1] = offset;
    }
    let mut w2 = Matrix::zeros(nu, 2 * nx);
    let mut b2 = vec![0.0; nu];
    for r in 0..nu {
        for i in 0..nx {
            w2[(r, 2 * i)] = -k[(r, i)];
            w2[(r, 2 * i + 1)] = k[(r, i)];
            b2[r] -= k[(r, i)] * offset;
        }
    }
    ReluNetwork::new(vec![Layer::new(w1, b1), Layer::new(w2, b2)])
}

/// [`synth_lqr_net`] followed by [`ReluNetwork::saturate`]:
/// `x ↦ clamp(-K x, lb, ub)`.
pub fn synth_satlqr(k: &Matrix, lb: &[f64], ub: &[f64], offset: f64) -> Result<ReluNetwork> {
    synth_lqr_net(k, offset)?.saturate(lb, ub)
}

/// Residuals of the equilibrium feedback: `max |Ŵ b_Γ + b̂|` and, if a
/// reference gain is given, `max |Ŵ W_Γ + K|`.
pub fn feedback_residuals(net: &ReluNetwork, k_ref: Option<&Matrix>) -> Result<(f64, Option<f64>)> {
    let pattern = net.activation_pattern(&vec![0.0; net.input_dim()])?;
    let hidden = net.affine_map(&pattern, net.num_hidden())?;
    let out = net.output_layer();
    let bias = out.weights.mul_vec(&hidden.b)?;
    let bias_residual = bias.iter().zip(&out.b).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    let gain = out.weights.matmul(&hidden.w)?;
    let matched = match k_ref {
        Some(k) => Some(gain.add(k)?.max_abs()),
        None => None,
    };
    Ok((bias_residual, matched))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn identity_pair() -> ReluNetwork {
        ReluNetwork::new(vec![
            Layer::new(Matrix::from_rows(&[[1.0], [-1.0]]).unwrap(), vec![0.0, 0.0]),
            Layer::new(Matrix::from_rows(&[[1.0, -1.0]]).unwrap(), vec![0.0]),
        ])
        .unwrap()
    }

    fn pattern(v: &[&[u8]]) -> ActivationPattern {
        ActivationPattern::from(v.iter().map(|l| l.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn eval_examples() {
        let zero = ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(3, 2), vec![0.0; 3]),
            Layer::new(Matrix::zeros(1, 3), vec![0.7]),
        ])
        .unwrap();
        assert_eq!(zero.eval(&[5.0, -2.0]).unwrap(), vec![0.7]);
        let net = identity_pair();
        assert_eq!(net.eval(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(net.eval(&[-3.0]).unwrap(), vec![-3.0]);
        assert!(matches!(net.eval(&[1.0, 2.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn patterns_and_tie_rule() {
        let net = identity_pair();
        assert_eq!(net.activation_pattern(&[2.0]).unwrap(), pattern(&[&[1, 0]]));
        assert_eq!(net.activation_pattern(&[0.0]).unwrap(), pattern(&[&[1, 1]]));
        assert_eq!(net.activation_pattern(&[-1.0]).unwrap(), pattern(&[&[0, 1]]));
    }

    #[test]
    fn affine_map_examples() {
        let net = identity_pair();
        let out = net.affine_map(&pattern(&[&[1, 0]]), 2).unwrap();
        assert_eq!(out.w, Matrix::from_rows(&[[1.0]]).unwrap());
        assert_eq!(out.b, vec![0.0]);
        let first = net.affine_map(&pattern(&[&[1, 1]]), 1).unwrap();
        assert_eq!(first.w, net.layers()[0].weights);
        assert!(net.affine_map(&pattern(&[&[1, 1]]), 3).is_err());
    }

    #[test]
    fn regions_of_identity_pair() {
        let net = identity_pair();
        let pos = net.region_of_pattern(&pattern(&[&[1, 0]])).unwrap();
        assert!(pos.same_set_within(&Polytope::new(Matrix::from_rows(&[[-1.0]]).unwrap(), vec![0.0]).unwrap(), 1e-12).unwrap());
        let origin = net.region_of_pattern(&pattern(&[&[0, 0]])).unwrap();
        assert!(origin.contains_point(&[0.0], 0.0));
        assert!(!origin.contains_point(&[1e-6], 1e-9));
        assert!(!origin.contains_point(&[-1e-6], 1e-9));
        let (eq, region) = net.equilibrium_region().unwrap();
        assert_eq!(eq, pattern(&[&[1, 1]]));
        assert_eq!(region.bounding_box().unwrap(), vec![(0.0, 0.0)]);
    }

    #[test]
    fn unrealizable_pattern() {
        // both neurons read x with a gap: x >= 1 and x <= -1 cannot hold together
        let net = ReluNetwork::new(vec![
            Layer::new(Matrix::from_rows(&[[1.0], [-1.0]]).unwrap(), vec![-1.0, -1.0]),
            Layer::new(Matrix::from_rows(&[[1.0, 1.0]]).unwrap(), vec![0.0]),
        ])
        .unwrap();
        assert!(matches!(net.region_of_pattern(&pattern(&[&[1, 1]])), Err(Error::EmptyRegion)));
    }

    #[test]
    fn saturation_cases() {
        let net = identity_pair();
        let sat = net.saturate(&[-1.0], &[1.0]).unwrap();
        assert_eq!(sat.num_hidden(), 3);
        assert_eq!(sat.eval(&[2.0]).unwrap(), vec![1.0]);
        assert_eq!(sat.eval(&[0.5]).unwrap(), vec![0.5]);
        assert_eq!(sat.eval(&[-3.0]).unwrap(), vec![-1.0]);
        assert!(matches!(net.saturate(&[1.0], &[1.0]), Err(Error::InvalidBounds(_))));
    }

    #[test]
    fn pattern_counts() {
        assert_eq!(identity_pair().max_patterns().unwrap(), 4);
        let ten = ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(10, 2), vec![0.0; 10]),
            Layer::new(Matrix::zeros(1, 10), vec![0.0]),
        ])
        .unwrap();
        assert_eq!(ten.max_patterns().unwrap(), 1024);
        let deep = ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(3, 2), vec![0.0; 3]),
            Layer::new(Matrix::zeros(3, 3), vec![0.0; 3]),
            Layer::new(Matrix::zeros(1, 3), vec![0.0]),
        ])
        .unwrap();
        assert_eq!(deep.max_patterns().unwrap(), 64);
        let wide = ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(63, 1), vec![0.0; 63]),
            Layer::new(Matrix::zeros(1, 63), vec![0.0]),
        ])
        .unwrap();
        assert!(matches!(wide.max_patterns(), Err(Error::Overflow { neurons: 63 })));
    }

    fn hand_fixture() -> ReluNetwork {
        let w1 = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        ReluNetwork::new(vec![Layer::new(w1, vec![0.0; 4]), Layer::new(Matrix::zeros(1, 4), vec![0.0])]).unwrap()
    }

    #[test]
    fn retrofit_hand_fixture() {
        let k = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let r = retrofit_lqr(&hand_fixture(), &k).unwrap();
        let out = r.network.output_layer();
        for (got, want) in out.weights.as_slice().iter().zip([-0.5, 0.5, -0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(out.b[0].abs() < 1e-12);
        assert!((r.cost - 1.0).abs() < 1e-9);
    }

    #[test]
    fn retrofit_is_noop_when_already_matching() {
        let k = Matrix::from_rows(&[[0.3, -0.2]]).unwrap();
        let net = synth_lqr_net(&k, 0.75).unwrap();
        let r = retrofit_lqr(&net, &k).unwrap();
        assert!(r.cost < 1e-20, "{}", r.cost);
    }

    #[test]
    fn retrofit_reports_rank_condition() {
        // hidden map only sees x₁, so a gain on x₂ cannot be matched
        let net = ReluNetwork::new(vec![
            Layer::new(Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap(), vec![0.0; 2]),
            Layer::new(Matrix::zeros(1, 2), vec![0.0]),
        ])
        .unwrap();
        let err = retrofit_lqr(&net, &Matrix::from_rows(&[[0.0, 1.0]]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(ref s) if s.contains("rank consistency")));
    }

    #[test]
    fn synth_satlqr_matches_clamp() {
        let k = Matrix::from_rows(&[[0.2501, 0.8290]]).unwrap();
        for offset in [0.0, 2.0, 10.0] {
            let net = synth_satlqr(&k, &[-1.0], &[1.0], offset).unwrap();
            let u = net.eval(&[0.1, 0.1]).unwrap()[0];
            assert!((u + 0.10791).abs() < 1e-12, "{u}");
            assert_eq!(net.eval(&[0.0, 0.0]).unwrap(), vec![0.0]);
            assert_eq!(net.eval(&[10.0, 10.0]).unwrap(), vec![-1.0]);
            assert_eq!(net.eval(&[-10.0, -10.0]).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn synth_equilibrium_region_has_interior() {
        let k = Matrix::from_rows(&[[0.2501, 0.8290]]).unwrap();
        let net = synth_satlqr(&k, &[-1.0], &[1.0], 2.0).unwrap();
        let (_, region) = net.equilibrium_region().unwrap();
        assert!(region.contains_point(&[0.0, 0.0], 0.0));
        let (_, r) = region.chebyshev_ball().unwrap().unwrap();
        assert!(r > 0.1);
    }

    #[test]
    fn network_json_roundtrip_is_bit_exact() {
        let k = Matrix::from_rows(&[[0.1 + 0.2, 1.0 / 3.0]]).unwrap();
        let net = synth_satlqr(&k, &[-1.0], &[std::f64::consts::PI], 0.3).unwrap();
        let s = serde_json::to_string(&net).unwrap();
        let back: ReluNetwork = serde_json::from_str(&s).unwrap();
        assert_eq!(back, net);
        assert!(s.starts_with(r#"{"layers":[{"W":"#));
    }

    #[test]
    fn identity_pair_regions() {
        // lifted to two inputs by a zero column
        let net = ReluNetwork::new(vec![
            Layer::new(Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap(), vec![0.0, 0.0]),
            Layer::new(Matrix::from_rows(&[[1.0, -1.0]]).unwrap(), vec![0.0]),
        ])
        .unwrap();
        let regions = enumerate_regions(&net, &Polytope::hypercube(2, 1.0)).unwrap();
        let patterns: Vec<ActivationPattern> = regions.iter().map(|r| r.pattern.clone()).collect();
        assert_eq!(patterns, vec![pattern(&[&[1, 0]]), pattern(&[&[0, 1]])]);
    }

    #[test]
    fn regions_cover_the_set() {
        let k = Matrix::from_rows(&[[0.2501, 0.8290]]).unwrap();
        let net = synth_satlqr(&k, &[-1.0], &[1.0], 2.0).unwrap();
        let x_in = Polytope::hypercube(2, 5.0);
        let regions = enumerate_regions(&net, &x_in).unwrap();
        assert!(regions.len() as u64 <= net.max_patterns().unwrap());
        assert!(regions.len() > 1);
        for i in 0..=20 {
            for j in 0..=20 {
                let x = [-5.0 + 0.5 * i as f64, -5.0 + 0.5 * j as f64];
                assert!(regions.iter().any(|r| r.polytope.contains_point(&x, 1e-9)), "{x:?}");
            }
        }
        let too_big = ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(21, 2), vec![0.0; 21]),
            Layer::new(Matrix::zeros(1, 21), vec![0.0]),
        ])
        .unwrap();
        assert!(matches!(enumerate_regions(&too_big, &x_in), Err(Error::TooManyNeurons { neurons: 21, cap: 20 })));
    }

    #[test]
    fn offset_clears_the_box() {
        assert_eq!(offset_beyond(&Polytope::from_box(&[-5.0, -1.0], &[2.0, 3.0]).unwrap()).unwrap(), 6.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_net() -> impl Strategy<Value = ReluNetwork> {
            (1usize..=3, prop::collection::vec(1usize..=4, 1..=2), 1usize..=2).prop_flat_map(|(nx, widths, nu)| {
                let mut dims = vec![nx];
                dims.extend(widths);
                dims.push(nu);
                let layers: Vec<_> = dims
                    .windows(2)
                    .map(|w| {
                        let (cols, rows) = (w[0], w[1]);
                        (
                            prop::collection::vec(-2.0f64..2.0, rows * cols),
                            prop::collection::vec(-1.0f64..1.0, rows),
                        )
                            .prop_map(move |(wd, b)| Layer::new(Matrix::new(rows, cols, wd).unwrap(), b))
                    })
                    .collect();
                layers.prop_map(|l| ReluNetwork::new(l).unwrap())
            })
        }

        fn arb_net_and_x() -> impl Strategy<Value = (ReluNetwork, Vec<f64>)> {
            arb_net().prop_flat_map(|n| {
                let nx = n.input_dim();
                (Just(n), prop::collection::vec(-3.0f64..3.0, nx))
            })
        }

        proptest! {
            #[test]
            fn pattern_map_reproduces_eval((net, x) in arb_net_and_x()) {
                let p = net.activation_pattern(&x).unwrap();
                let y = net.affine_map(&p, net.num_hidden() + 1).unwrap().apply(&x);
                let want = net.eval(&x).unwrap();
                for (a, b) in y.iter().zip(&want) {
                    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                }
                let region = net.pattern_constraints(&p).unwrap();
                prop_assert!(region.max_violation(&x) <= 1e-9);
            }

            #[test]
            fn saturation_is_clamp((net, x) in arb_net_and_x(), lo in -1.0f64..0.0, width in 0.1f64..2.0) {
                let nu = net.output_dim();
                let lb = vec![lo; nu];
                let ub = vec![lo + width; nu];
                let sat = net.saturate(&lb, &ub).unwrap();
                let raw = net.eval(&x).unwrap();
                let got = sat.eval(&x).unwrap();
                for i in 0..nu {
                    let want = raw[i].clamp(lb[i], ub[i]);
                    prop_assert!((got[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
                }
            }
        }
    }
}
