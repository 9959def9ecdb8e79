//! Polytopes in H-representation `{x : F x <= g}`.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{dim_err, Error, Result};
use crate::lp::{solve_lp_with, LinearProgram, LpOutcome};
use crate::numerics::{dot, norm2, Matrix};

/// `{x ∈ ℝⁿ : F x <= g}`. A polytope without rows is the whole space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct Polytope {
    f: Matrix,
    g: Vec<f64>,
    dim: usize,
}

/// On-disk layout: `{"F": [[...]], "g": [...]}`. `dim` is only written when
/// `F` has no rows and the dimension cannot be read off the matrix.
#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl TryFrom<PolytopeRepr> for Polytope {
    type Error = Error;
    fn try_from(r: PolytopeRepr) -> Result<Self> {
        if r.f.is_empty() {
            let dim = r.dim.ok_or_else(|| dim_err("polytope without rows needs \"dim\""))?;
            if !r.g.is_empty() {
                return Err(dim_err("g has entries but F has no rows"));
            }
            return Ok(Polytope::whole_space(dim));
        }
        let f = Matrix::from_rows(&r.f)?;
        if let Some(d) = r.dim {
            if d != f.cols() {
                return Err(dim_err(format!("dim {d} but F has {} columns", f.cols())));
            }
        }
        Polytope::new(f, r.g)
    }
}

impl From<Polytope> for PolytopeRepr {
    fn from(p: Polytope) -> Self {
        let dim = (p.f.rows() == 0).then_some(p.dim);
        PolytopeRepr { f: p.f.to_rows(), g: p.g, dim }
    }
}

impl Polytope {
    pub fn new(f: Matrix, g: Vec<f64>) -> Result<Self> {
        if f.rows() != g.len() {
            return Err(dim_err(format!("F has {} rows, g has {} entries", f.rows(), g.len())));
        }
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite offset {v}")));
        }
        let dim = f.cols();
        Ok(Self { f, g, dim })
    }

    pub fn whole_space(dim: usize) -> Self {
        Self { f: Matrix::zeros(0, dim), g: Vec::new(), dim }
    }

    /// `{x : lb <= x <= ub}`.
    pub fn from_box(lb: &[f64], ub: &[f64]) -> Result<Self> {
        if lb.len() != ub.len() {
            return Err(dim_err("box bounds of different length"));
        }
        let n = lb.len();
        let mut f = Matrix::zeros(2 * n, n);
        let mut g = Vec::with_capacity(2 * n);
        for i in 0..n {
            f[(2 * i, i)] = 1.0;
            g.push(ub[i]);
            f[(2 * i + 1, i)] = -1.0;
            g.push(-lb[i]);
        }
        Polytope::new(f, g)
    }

    /// `[-r, r]ⁿ`.
    pub fn hypercube(n: usize, r: f64) -> Self {
        Self::from_box(&vec![-r; n], &vec![r; n]).expect("consistent box")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_constraints(&self) -> usize {
        self.g.len()
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim && (0..self.g.len()).all(|i| dot(self.f.row(i), x) <= self.g[i] + tol)
    }

    /// Largest violation `max_i (F_i x - g_i)`, or `-inf` for the whole space.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.g.len()).map(|i| dot(self.f.row(i), x) - self.g[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rows scaled to unit Euclidean norm. Zero rows with `g >= 0` are dropped,
    /// zero rows with `g < 0` are kept verbatim (they make the set empty).
    pub fn normalized(&self) -> Polytope {
        let mut rows = Vec::new();
        let mut g = Vec::new();
        for i in 0..self.g.len() {
            let r = self.f.row(i);
            let n = norm2(r);
            if n <= 1e-12 {
                if self.g[i] < 0.0 {
                    rows.push(r.to_vec());
                    g.push(self.g[i]);
                }
                continue;
            }
            rows.push(r.iter().map(|v| v / n).collect::<Vec<_>>());
            g.push(self.g[i] / n);
        }
        self.with_rows(rows, g)
    }

    fn with_rows(&self, rows: Vec<Vec<f64>>, g: Vec<f64>) -> Polytope {
        if rows.is_empty() {
            return Polytope::whole_space(self.dim);
        }
        Polytope { f: Matrix::from_rows(&rows).expect("rows share the dimension"), g, dim: self.dim }
    }

    fn check_dim(&self, other: &Polytope) -> Result<()> {
        if self.dim != other.dim {
            return Err(dim_err(format!("polytopes in dimension {} and {}", self.dim, other.dim)));
        }
        Ok(())
    }

    fn lp(&self, objective: Vec<f64>, slack: f64) -> LinearProgram {
        let g = self.g.iter().map(|v| v + slack).collect();
        LinearProgram::new(objective, self.f.clone(), g)
    }

    pub fn is_empty(&self) -> Result<bool> {
        self.is_empty_with(&Tolerances::DEFAULT)
    }

    /// True iff no point satisfies `F x <= g + tol.emptiness`.
    pub fn is_empty_with(&self, tol: &Tolerances) -> Result<bool> {
        let out = solve_lp_with(&self.lp(vec![0.0; self.dim], tol.emptiness), tol)?;
        Ok(matches!(out, LpOutcome::Infeasible))
    }

    /// `max d·x` over the polytope.
    pub fn support(&self, d: &[f64]) -> Result<f64> {
        self.support_with(d, &Tolerances::DEFAULT)
    }

    pub fn support_with(&self, d: &[f64], tol: &Tolerances) -> Result<f64> {
        Ok(self.maximize(d, tol)?.0)
    }

    /// Maximizer and value of `d·x`.
    pub fn maximize(&self, d: &[f64], tol: &Tolerances) -> Result<(f64, Vec<f64>)> {
        if d.len() != self.dim {
            return Err(dim_err(format!("direction of length {} in dimension {}", d.len(), self.dim)));
        }
        match solve_lp_with(&self.lp(d.to_vec(), 0.0), tol)? {
            LpOutcome::Optimal { value, point } => Ok((value, point)),
            LpOutcome::Infeasible => Err(Error::EmptyInput),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }

    pub fn remove_redundant(&self) -> Result<Polytope> {
        self.remove_redundant_with(&Tolerances::DEFAULT)
    }

    /// Drops every row implied by the others; the result has unit-norm rows.
    pub fn remove_redundant_with(&self, tol: &Tolerances) -> Result<Polytope> {
        if self.is_empty_with(tol)? {
            return Err(Error::EmptyInput);
        }
        let p = self.normalized();
        let m = p.g.len();
        let mut keep = vec![true; m];
        for i in 0..m {
            let others: Vec<usize> = (0..m).filter(|&j| j != i && keep[j]).collect();
            let mut f = p.f.select_rows(&others);
            let mut g: Vec<f64> = others.iter().map(|&j| p.g[j]).collect();
            // cap the tested row so the LP stays bounded in its own direction
            f = f.vstack(&Matrix::row_vector(p.f.row(i)))?;
            g.push(p.g[i] + 1.0);
            let lp = LinearProgram::new(p.f.row(i).to_vec(), f, g);
            match solve_lp_with(&lp, tol)? {
                LpOutcome::Optimal { value, .. } => {
                    if value <= p.g[i] + tol.redundancy {
                        keep[i] = false;
                    }
                }
                LpOutcome::Unbounded => {}
                LpOutcome::Infeasible => return Err(Error::EmptyInput),
            }
        }
        let rows = (0..m).filter(|&i| keep[i]).map(|i| p.f.row(i).to_vec()).collect();
        let g = (0..m).filter(|&i| keep[i]).map(|i| p.g[i]).collect();
        Ok(p.with_rows(rows, g))
    }

    /// Row-stacks both descriptions and removes redundancy. An empty
    /// intersection is returned as the (normalized) raw stack.
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        self.intersect_with(other, &Tolerances::DEFAULT)
    }

    pub fn intersect_with(&self, other: &Polytope, tol: &Tolerances) -> Result<Polytope> {
        self.check_dim(other)?;
        let stacked = self.stack(other)?;
        match stacked.remove_redundant_with(tol) {
            Err(Error::EmptyInput) => Ok(stacked.normalized()),
            r => r,
        }
    }

    /// Row-stack without any reduction.
    pub fn stack(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other)?;
        let f = self.f.vstack(&other.f)?;
        let mut g = self.g.clone();
        g.extend_from_slice(&other.g);
        Ok(Polytope { f, g, dim: self.dim })
    }

    /// True iff `inner ⊆ self`, testing every row of `self` with a support LP.
    pub fn contains_set(&self, inner: &Polytope) -> Result<bool> {
        self.contains_set_within(inner, Tolerances::DEFAULT.containment)
    }

    /// Containment with an explicit slack, scaled by each row's norm.
    pub fn contains_set_within(&self, inner: &Polytope, slack: f64) -> Result<bool> {
        self.check_dim(inner)?;
        let tol = Tolerances::DEFAULT;
        for i in 0..self.g.len() {
            let row = self.f.row(i);
            match inner.support_with(row, &tol) {
                Ok(s) => {
                    if s > self.g[i] + slack * norm2(row).max(1e-300) {
                        return Ok(false);
                    }
                }
                Err(Error::Unbounded) => return Ok(false),
                Err(Error::EmptyInput) => return Ok(true),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// Mutual containment.
    pub fn same_set_within(&self, other: &Polytope, slack: f64) -> Result<bool> {
        Ok(self.contains_set_within(other, slack)? && other.contains_set_within(self, slack)?)
    }

    /// `{x : A x ∈ self}`.
    pub fn preimage(&self, a: &Matrix) -> Result<Polytope> {
        if a.rows() != self.dim {
            return Err(dim_err(format!("map with {} rows into dimension {}", a.rows(), self.dim)));
        }
        let f = if self.f.rows() == 0 { Matrix::zeros(0, a.cols()) } else { self.f.matmul(a)? };
        Ok(Polytope { f, g: self.g.clone(), dim: a.cols() })
    }

    /// Per-coordinate `[lo, hi]` from support LPs.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>> {
        let tol = Tolerances::DEFAULT;
        (0..self.dim)
            .map(|i| {
                let mut e = vec![0.0; self.dim];
                e[i] = 1.0;
                let hi = self.support_with(&e, &tol);
                e[i] = -1.0;
                let lo = self.support_with(&e, &tol);
                match (lo, hi) {
                    (Ok(lo), Ok(hi)) => Ok((-lo, hi)),
                    (Err(Error::Unbounded), _) | (_, Err(Error::Unbounded)) => Err(Error::UnboundedInput(i)),
                    (Err(e), _) | (_, Err(e)) => Err(e),
                }
            })
            .collect()
    }

    /// Center and radius of the largest inscribed ball, radius capped at 1e6.
    /// `None` when the polytope is empty.
    pub fn chebyshev_ball(&self) -> Result<Option<(Vec<f64>, f64)>> {
        let n = self.dim;
        let m = self.g.len();
        let mut f = Matrix::zeros(m, n + 1);
        for i in 0..m {
            f.row_mut(i)[..n].copy_from_slice(self.f.row(i));
            f[(i, n)] = norm2(self.f.row(i));
        }
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        let mut lower = vec![f64::NEG_INFINITY; n + 1];
        let mut upper = vec![f64::INFINITY; n + 1];
        lower[n] = 0.0;
        upper[n] = 1e6;
        let lp = LinearProgram::new(obj, f, self.g.clone()).with_bounds(lower, upper);
        match solve_lp_with(&lp, &Tolerances::DEFAULT)? {
            LpOutcome::Optimal { point, .. } => Ok(Some((point[..n].to_vec(), point[n]))),
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => unreachable!("radius is bounded"),
        }
    }

    /// Vertices of a bounded 2-D polytope in counter-clockwise order.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Err(dim_err(format!("vertex listing needs dimension 2, got {}", self.dim)));
        }
        let p = self.normalized();
        let m = p.g.len();
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (p.f.row(i), p.f.row(j));
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (p.g[i] * b[1] - a[1] * p.g[j]) / det;
                let y = (a[0] * p.g[j] - p.g[i] * b[0]) / det;
                if p.contains_point(&[x, y], 1e-9) && !pts.iter().any(|q| (q[0] - x).abs() + (q[1] - y).abs() < 1e-9) {
                    pts.push([x, y]);
                }
            }
        }
        if pts.is_empty() {
            return Ok(pts);
        }
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
        pts.sort_by(|a, b| {
            let ta = (a[1] - cy).atan2(a[0] - cx);
            let tb = (b[1] - cy).atan2(b[0] - cx);
            ta.total_cmp(&tb)
        });
        Ok(pts)
    }
}

/// Largest `Ω ⊆ P` with `A_cl Ω ⊆ Ω`, by the preimage fixpoint
/// `Ω_{k+1} = Ω_k ∩ {x : A_cl x ∈ Ω_k}` (cap 500 iterations).
pub fn max_positively_invariant(a_cl: &Matrix, p: &Polytope) -> Result<Polytope> {
    max_positively_invariant_with(a_cl, p, 500, &Tolerances::DEFAULT)
}

pub fn max_positively_invariant_with(a_cl: &Matrix, p: &Polytope, cap: usize, tol: &Tolerances) -> Result<Polytope> {
    if a_cl.rows() != p.dim() || a_cl.cols() != p.dim() {
        return Err(dim_err(format!(
            "closed-loop matrix {}x{} for polytope in dimension {}",
            a_cl.rows(),
            a_cl.cols(),
            p.dim()
        )));
    }
    let mut omega = p.remove_redundant_with(tol)?;
    for _ in 0..cap {
        let pre = omega.preimage(a_cl)?;
        // Ω_{k+1} ⊆ Ω_k always holds, so a fixpoint is Ω_k ⊆ pre(Ω_k)
        if pre.contains_set_within(&omega, tol.containment)? {
            return Ok(omega);
        }
        omega = omega.intersect_with(&pre, tol)?;
        if omega.is_empty_with(tol)? {
            return Err(Error::EmptyInput);
        }
    }
    Err(Error::NoConvergence { what: "invariant set fixpoint", iterations: cap })
}
