//! Brute-force oracles shared by the integration tests.
//!
//! Every activation pattern (or sequence of patterns) is fixed in turn, which
//! makes the network affine on the corresponding cell, and a single LP per
//! cell gives the exact maximum. Nothing here goes through the MILP code.

#![allow(dead_code)]

use certnn::lp::{solve_lp, LinearProgram, LpOutcome};
use certnn::network::{Layer, ReluNetwork};
use certnn::{Matrix, Polytope};
use rand::Rng;

/// Affine map of the initial state: `rows[i]·x + c[i]`.
#[derive(Clone, Debug)]
pub struct Aff {
    pub rows: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

impl Aff {
    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Aff { rows, c: vec![0.0; n] }
    }

    fn nvars(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// `M self + v`.
    pub fn map(&self, m: &Matrix, v: &[f64]) -> Aff {
        let n = self.nvars();
        let mut rows = vec![vec![0.0; n]; m.rows()];
        let mut c = v.to_vec();
        for i in 0..m.rows() {
            for k in 0..m.cols() {
                let w = m.row(i)[k];
                for j in 0..n {
                    rows[i][j] += w * self.rows[k][j];
                }
                c[i] += w * self.c[k];
            }
        }
        Aff { rows, c }
    }

    pub fn add(&self, other: &Aff) -> Aff {
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let c = self.c.iter().zip(&other.c).map(|(x, y)| x + y).collect();
        Aff { rows, c }
    }

    fn dot(&self, d: &[f64]) -> (Vec<f64>, f64) {
        let mut row = vec![0.0; self.nvars()];
        let mut c = 0.0;
        for (i, &di) in d.iter().enumerate() {
            for (r, v) in row.iter_mut().zip(&self.rows[i]) {
                *r += di * v;
            }
            c += di * self.c[i];
        }
        (row, c)
    }
}

/// Linear constraints `row·x <= rhs` on the initial state.
pub type Cons = Vec<(Vec<f64>, f64)>;

/// Pushes `input` through the hidden layers with the units fixed by `mask`
/// (one bit per neuron, first layer first), recording the cell constraints
/// of that pattern.
pub fn hidden(net: &ReluNetwork, input: &Aff, mask: u64, cons: &mut Cons) -> Aff {
    let layers = net.layers();
    let mut y = input.clone();
    let mut bit = 0;
    for layer in &layers[..layers.len() - 1] {
        let pre = y.map(&layer.weights, &layer.b);
        let mut post = pre.clone();
        for i in 0..pre.c.len() {
            let active = mask >> bit & 1 == 1;
            bit += 1;
            if active {
                cons.push((pre.rows[i].iter().map(|v| -v).collect(), pre.c[i]));
            } else {
                cons.push((pre.rows[i].clone(), -pre.c[i]));
                post.rows[i].iter_mut().for_each(|v| *v = 0.0);
                post.c[i] = 0.0;
            }
        }
        y = post;
    }
    y
}

/// Output map of the network on the cell of `mask`.
pub fn forward(net: &ReluNetwork, input: &Aff, mask: u64, cons: &mut Cons) -> Aff {
    let out = &net.layers()[net.layers().len() - 1];
    hidden(net, input, mask, cons).map(&out.weights, &out.b)
}

/// Pattern bits of the point `x`, with zero pre-activations counted active.
pub fn mask_at(net: &ReluNetwork, x: &[f64]) -> u64 {
    let layers = net.layers();
    let mut y = x.to_vec();
    let mut mask = 0u64;
    let mut bit = 0;
    for layer in &layers[..layers.len() - 1] {
        let mut next = Vec::with_capacity(layer.b.len());
        for i in 0..layer.b.len() {
            let pre = dot(layer.weights.row(i), &y) + layer.b[i];
            if pre >= 0.0 {
                mask |= 1 << bit;
            }
            bit += 1;
            next.push(pre.max(0.0));
        }
        y = next;
    }
    mask
}

fn lp_max(x_in: &Polytope, cons: &Cons, obj: &Aff, d: &[f64]) -> Option<f64> {
    let (row, c) = obj.dot(d);
    let mut rows: Vec<Vec<f64>> = (0..x_in.num_constraints()).map(|i| x_in.f().row(i).to_vec()).collect();
    let mut rhs = x_in.g().to_vec();
    for (r, g) in cons {
        rows.push(r.clone());
        rhs.push(*g);
    }
    let lp = LinearProgram::new(row, Matrix::from_rows(&rows).unwrap(), rhs);
    match solve_lp(&lp).unwrap() {
        LpOutcome::Optimal { value, .. } => Some(value + c),
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => panic!("oracle LP unbounded; X_in must be bounded"),
    }
}

fn feasible(x_in: &Polytope, cons: &Cons) -> bool {
    let zero = Aff { rows: vec![vec![0.0; x_in.dim()]], c: vec![0.0] };
    lp_max(x_in, cons, &zero, &[0.0]).is_some()
}

/// `max d·net(x)` over `x ∈ x_in`.
pub fn range_max(net: &ReluNetwork, x_in: &Polytope, d: &[f64]) -> f64 {
    let n = net.num_neurons();
    let id = Aff::identity(x_in.dim());
    let mut best = f64::NEG_INFINITY;
    for mask in 0..1u64 << n {
        let mut cons = Cons::new();
        let out = forward(net, &id, mask, &mut cons);
        if let Some(v) = lp_max(x_in, &cons, &out, d) {
            best = best.max(v);
        }
    }
    best
}

/// `max d·x_k` over closed-loop trajectories `x⁺ = A x + B net(x)` from `x_in`.
pub fn reach_max(a: &Matrix, b: &Matrix, net: &ReluNetwork, x_in: &Polytope, k: usize, d: &[f64]) -> f64 {
    fn rec(a: &Matrix, b: &Matrix, net: &ReluNetwork, x_in: &Polytope, x: &Aff, cons: &Cons, left: usize, d: &[f64]) -> f64 {
        if left == 0 {
            return lp_max(x_in, cons, x, d).unwrap_or(f64::NEG_INFINITY);
        }
        let mut best = f64::NEG_INFINITY;
        for mask in 0..1u64 << net.num_neurons() {
            let mut c = cons.clone();
            let u = forward(net, x, mask, &mut c);
            if !feasible(x_in, &c) {
                continue;
            }
            let next = x.map(a, &vec![0.0; a.rows()]).add(&u.map(b, &vec![0.0; b.rows()]));
            best = best.max(rec(a, b, net, x_in, &next, &c, left - 1, d));
        }
        best
    }
    rec(a, b, net, x_in, &Aff::identity(x_in.dim()), &Cons::new(), k, d)
}

/// `n` unit directions spread over the circle.
pub fn fan(n: usize) -> Matrix {
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Random network with the given hidden widths.
pub fn random_net(rng: &mut impl Rng, nx: usize, widths: &[usize], nu: usize) -> ReluNetwork {
    let mut dims = vec![nx];
    dims.extend_from_slice(widths);
    dims.push(nu);
    let layers = dims
        .windows(2)
        .map(|w| Layer::new(random_matrix(rng, w[1], w[0], 1.0), (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect()))
        .collect();
    ReluNetwork::new(layers).unwrap()
}

/// Rejection sample from a bounded polytope.
pub fn sample(rng: &mut impl Rng, p: &Polytope) -> Vec<f64> {
    let bbox = p.bounding_box().unwrap();
    loop {
        let x: Vec<f64> = bbox.iter().map(|&(l, h)| rng.gen_range(l..=h)).collect();
        if p.contains_point(&x, 0.0) {
            return x;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
