//! Dense two-phase primal simplex.
//!
//! Problems are stated as `maximize c·x  s.t.  A x <= b,  lower <= x <= upper`
//! where bounds may be infinite. Internally every variable is shifted or
//! split so it is nonnegative, finite upper bounds become explicit rows,
//! and the resulting standard form is solved on a full tableau.

use log::trace;

use crate::config::Tolerances;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{dot, norm_inf, Matrix};

/// `maximize objective·x  s.t.  a x <= b,  lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a: Matrix,
    pub b: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// All variables free.
    pub fn new(objective: Vec<f64>, a: Matrix, b: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, a, b, lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(dim_err(format!(
                "{n} variables but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.a.rows() != self.b.len() {
            return Err(dim_err(format!("{} constraint rows, {} rhs entries", self.a.rows(), self.b.len())));
        }
        if self.a.rows() > 0 && self.a.cols() != n {
            return Err(dim_err(format!("constraint matrix has {} columns, expected {n}", self.a.cols())));
        }
        if self.objective.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite objective or rhs".into()));
        }
        if self.lower.iter().any(|&l| l == f64::INFINITY) || self.upper.iter().any(|&u| u == f64::NEG_INFINITY) {
            return Err(Error::InvalidValue("lower bound +inf or upper bound -inf".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }
}

pub fn solve_lp(p: &LinearProgram) -> Result<LpOutcome> {
    solve_lp_with(p, &Tolerances::DEFAULT)
}

/// How an original variable is recovered from the internal nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// x = offset + sign * y[col]
    Shifted { col: usize, offset: f64, sign: f64 },
    /// x = y[pos] - y[neg]
    Split { pos: usize, neg: usize },
}

pub fn solve_lp_with(p: &LinearProgram, tol: &Tolerances) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.num_vars();
    let m0 = p.b.len();

    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut rhs = p.b.clone();
    // extra rows y[col] <= ub
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        if l > u {
            if l - u > tol.lp_feasibility * (1.0 + l.abs().max(u.abs())) {
                return Ok(LpOutcome::Infeasible);
            }
        }
        let map = if l.is_finite() && u.is_finite() && u - l <= 0.0 {
            VarMap::Fixed(l)
        } else if l.is_finite() {
            let col = ncols;
            ncols += 1;
            if u.is_finite() {
                bound_rows.push((col, u - l));
            }
            VarMap::Shifted { col, offset: l, sign: 1.0 }
        } else if u.is_finite() {
            let col = ncols;
            ncols += 1;
            VarMap::Shifted { col, offset: u, sign: -1.0 }
        } else {
            ncols += 2;
            VarMap::Split { pos: ncols - 2, neg: ncols - 1 }
        };
        match map {
            VarMap::Fixed(v) | VarMap::Shifted { offset: v, .. } => {
                if v != 0.0 {
                    for (i, r) in rhs.iter_mut().enumerate() {
                        *r -= p.a[(i, j)] * v;
                    }
                }
            }
            VarMap::Split { .. } => {}
        }
        maps.push(map);
    }

    let m = m0 + bound_rows.len();
    let mut cons = Matrix::zeros(m, ncols);
    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        match *map {
            VarMap::Fixed(_) => {}
            VarMap::Shifted { col, sign, .. } => {
                cost[col] = sign * p.objective[j];
                for i in 0..m0 {
                    cons[(i, col)] = sign * p.a[(i, j)];
                }
            }
            VarMap::Split { pos, neg } => {
                cost[pos] = p.objective[j];
                cost[neg] = -p.objective[j];
                for i in 0..m0 {
                    cons[(i, pos)] = p.a[(i, j)];
                    cons[(i, neg)] = -p.a[(i, j)];
                }
            }
        }
    }
    for (r, &(col, ub)) in bound_rows.iter().enumerate() {
        cons[(m0 + r, col)] = 1.0;
        rhs.push(ub);
    }

    let y = match Tableau::solve(&cons, &rhs, &cost, tol)? {
        Standard::Optimal(y) => y,
        Standard::Infeasible => return Ok(LpOutcome::Infeasible),
        Standard::Unbounded => return Ok(LpOutcome::Unbounded),
    };
    let point: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Fixed(v) => v,
            VarMap::Shifted { col, offset, sign } => offset + sign * y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let value = dot(&p.objective, &point);
    Ok(LpOutcome::Optimal { value, point })
}

enum Standard {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

/// Full simplex tableau for `max c·y, cons·y <= rhs, y >= 0`.
struct Tableau {
    m: usize,
    /// structural + slack + artificial columns
    width: usize,
    n_struct: usize,
    n_art: usize,
    /// row-major `m x (width + 1)`; the last column is the rhs
    t: Vec<f64>,
    basis: Vec<usize>,
    /// reduced costs, length `width`
    d: Vec<f64>,
    value: f64,
    bland: bool,
    degenerate: usize,
    iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Tableau {
    fn solve(cons: &Matrix, rhs: &[f64], cost: &[f64], tol: &Tolerances) -> Result<Standard> {
        let m = rhs.len();
        let n = cost.len();
        let negative: Vec<usize> = (0..m).filter(|&i| rhs[i] < 0.0).collect();
        let n_art = negative.len();
        let width = n + m + n_art;
        let stride = width + 1;
        let mut t = vec![0.0; m * stride];
        let mut basis = vec![0usize; m];
        let mut art = 0;
        for i in 0..m {
            let row = &mut t[i * stride..(i + 1) * stride];
            let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            if m > 0 && n > 0 {
                for j in 0..n {
                    row[j] = sign * cons[(i, j)];
                }
            }
            row[n + i] = sign;
            row[width] = sign * rhs[i];
            if sign < 0.0 {
                row[n + m + art] = 1.0;
                basis[i] = n + m + art;
                art += 1;
            } else {
                basis[i] = n + i;
            }
        }
        let mut tab = Tableau {
            m,
            width,
            n_struct: n,
            n_art,
            t,
            basis,
            d: vec![0.0; width],
            value: 0.0,
            bland: false,
            degenerate: 0,
            iterations: 0,
        };
        let scale = 1.0 + norm_inf(rhs);

        if n_art > 0 {
            let mut c1 = vec![0.0; width];
            for c in c1.iter_mut().skip(n + m) {
                *c = -1.0;
            }
            tab.set_costs(&c1);
            loop {
                match tab.step(true, tol)? {
                    Step::Pivoted => {}
                    Step::Optimal => break,
                    // phase one is bounded by zero
                    Step::Unbounded => unreachable!("phase one objective is bounded"),
                }
            }
            if tab.value < -tol.lp_feasibility * scale {
                trace!("phase one ended with infeasibility {}", -tab.value);
                return Ok(Standard::Infeasible);
            }
            tab.drive_out_artificials();
        }

        let mut c2 = vec![0.0; width];
        c2[..n].copy_from_slice(cost);
        tab.set_costs(&c2);
        tab.bland = false;
        tab.degenerate = 0;
        loop {
            match tab.step(false, tol)? {
                Step::Pivoted => {}
                Step::Optimal => break,
                Step::Unbounded => return Ok(Standard::Unbounded),
            }
        }
        let mut y = vec![0.0; n];
        let stride = width + 1;
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                y[b] = tab.t[i * stride + width].max(0.0);
            }
        }
        Ok(Standard::Optimal(y))
    }

    #[inline]
    fn stride(&self) -> usize {
        self.width + 1
    }

    fn set_costs(&mut self, c: &[f64]) {
        let stride = self.stride();
        self.d.copy_from_slice(c);
        self.value = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * stride..(i + 1) * stride];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
            self.value += cb * row[self.width];
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct + self.m
    }

    fn step(&mut self, phase_one: bool, tol: &Tolerances) -> Result<Step> {
        let cap = 50 * (self.m + self.width) + 1000;
        if self.iterations > cap {
            return Err(Error::CycleDetected);
        }
        if !self.bland && self.degenerate > 5 * (self.m + self.width) {
            trace!("switching to Bland's rule after {} degenerate pivots", self.degenerate);
            self.bland = true;
        }
        let limit = if phase_one { self.width } else { self.width - self.n_art };
        let mut enter = None;
        let mut best = tol.lp_optimality;
        for j in 0..limit {
            let dj = self.d[j];
            if dj > best {
                enter = Some(j);
                if self.bland {
                    break;
                }
                best = dj;
            }
        }
        let Some(col) = enter else {
            return Ok(Step::Optimal);
        };
        let stride = self.stride();
        let pivot_tol = 1e-9;
        let mut leave: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * stride + col];
            if a <= pivot_tol {
                continue;
            }
            let ratio = self.t[i * stride + self.width].max(0.0) / a;
            leave = match leave {
                None => Some((i, ratio, a)),
                Some((bi, br, ba)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    if ratio < br && !tie {
                        Some((i, ratio, a))
                    } else if tie {
                        let better = if self.bland { self.basis[i] < self.basis[bi] } else { a > ba };
                        if better {
                            Some((i, ratio, a))
                        } else {
                            Some((bi, br, ba))
                        }
                    } else {
                        Some((bi, br, ba))
                    }
                }
            };
        }
        let Some((row, ratio, _)) = leave else {
            return Ok(Step::Unbounded);
        };
        if ratio <= 1e-12 {
            self.degenerate += 1;
        }
        self.pivot(row, col);
        self.iterations += 1;
        Ok(Step::Pivoted)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let stride = self.stride();
        let p = self.t[row * stride + col];
        {
            let r = &mut self.t[row * stride..(row + 1) * stride];
            for v in r.iter_mut() {
                *v /= p;
            }
            r[col] = 1.0;
        }
        let prow: Vec<f64> = self.t[row * stride..(row + 1) * stride].to_vec();
        let nz: Vec<usize> = (0..stride).filter(|&j| prow[j] != 0.0).collect();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.t[i * stride + col];
            if f == 0.0 {
                continue;
            }
            let r = &mut self.t[i * stride..(i + 1) * stride];
            for &j in &nz {
                r[j] -= f * prow[j];
            }
            r[col] = 0.0;
        }
        let f = self.d[col];
        if f != 0.0 {
            for &j in &nz {
                if j < self.width {
                    self.d[j] -= f * prow[j];
                }
            }
            self.d[col] = 0.0;
            self.value += f * prow[self.width];
        }
        self.basis[row] = col;
    }

    /// Pivots zero-level artificials out of the basis where possible. Rows
    /// where that is impossible are linearly dependent and keep their
    /// artificial at zero for the rest of the solve.
    fn drive_out_artificials(&mut self) {
        let stride = self.stride();
        for i in 0..self.m {
            if !self.is_artificial(self.basis[i]) {
                continue;
            }
            let limit = self.n_struct + self.m;
            let best = (0..limit)
                .map(|j| (j, self.t[i * stride + j].abs()))
                .fold((usize::MAX, 1e-9), |b, c| if c.1 > b.1 { c } else { b });
            if best.0 != usize::MAX {
                self.pivot(i, best.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        let a = if a.is_empty() { Matrix::zeros(0, c.len()) } else { Matrix::from_rows(a).unwrap() };
        LinearProgram::new(c.to_vec(), a, b.to_vec())
    }

    #[test]
    fn simple_bounds() {
        let out = solve_lp(&lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, 1.0])).unwrap();
        assert_eq!(out.value(), Some(1.0));
    }

    #[test]
    fn two_vars() {
        let out = solve_lp(&lp(&[1.0, 1.0], &[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0])).unwrap();
        assert_eq!(out.value(), Some(2.0));
        assert_eq!(out.point().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn contradictory() {
        let out = solve_lp(&lp(&[1.0], &[&[1.0], &[-1.0]], &[-1.0, -1.0])).unwrap();
        assert_eq!(out, LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded() {
        let out = solve_lp(&lp(&[1.0, 0.0], &[&[0.0, 1.0]], &[1.0])).unwrap();
        assert_eq!(out, LpOutcome::Unbounded);
    }

    #[test]
    fn variable_bounds_and_fixed_vars() {
        let p = lp(&[1.0, 2.0, 3.0], &[&[1.0, 1.0, 1.0]], &[10.0])
            .with_bounds(vec![-1.0, f64::NEG_INFINITY, 2.0], vec![4.0, -3.0, 2.0]);
        let out = solve_lp(&p).unwrap();
        // x0 = 4, x1 = -3, x2 = 2
        assert!((out.value().unwrap() - 4.0).abs() < 1e-12, "{out:?}");
        let crossed = lp(&[1.0], &[], &[]).with_bounds(vec![1.0], vec![0.0]);
        assert_eq!(solve_lp(&crossed).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn redundant_equalities_via_pairs() {
        // x + y = 1 written twice as pairs of inequalities, maximize x
        let p = lp(
            &[1.0, 0.0],
            &[&[1.0, 1.0], &[-1.0, -1.0], &[2.0, 2.0], &[-2.0, -2.0], &[0.0, -1.0]],
            &[1.0, -1.0, 2.0, -2.0, 0.0],
        );
        let out = solve_lp(&p).unwrap();
        assert!((out.value().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under naive Dantzig pricing with lowest-index ties.
        let p = lp(
            &[0.75, -150.0, 0.02, -6.0],
            &[&[0.25, -60.0, -0.04, 9.0], &[0.5, -90.0, -0.02, 3.0], &[0.0, 0.0, 1.0, 0.0]],
            &[0.0, 0.0, 1.0],
        )
        .with_bounds(vec![0.0; 4], vec![f64::INFINITY; 4]);
        let out = solve_lp(&p).unwrap();
        assert!((out.value().unwrap() - 0.05).abs() < 1e-9, "{out:?}");
    }

    #[test]
    fn rejects_bad_dimensions() {
        let p = LinearProgram::new(vec![1.0, 1.0], Matrix::zeros(1, 3), vec![1.0]);
        assert!(matches!(solve_lp(&p), Err(Error::DimensionMismatch(_))));
    }
}
