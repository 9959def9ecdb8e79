use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::lp::LinearProgram;
use crate::numerics::Matrix;

/// Sparse affine expression `Σ c_i v_i + constant` over model variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: BTreeMap<usize, f64>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: BTreeMap::new(), constant: c }
    }

    pub fn var(v: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(v, 1.0);
        Self { terms, constant: 0.0 }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &LinExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        for (&v, &c) in &other.terms {
            *self.terms.entry(v).or_insert(0.0) += s * c;
        }
        self.constant += s * other.constant;
    }

    pub fn add_term(&mut self, v: usize, c: f64) {
        *self.terms.entry(v).or_insert(0.0) += c;
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(&v, &c)| c * point[v]).sum::<f64>() + self.constant
    }

    /// Linear combination `Σ w_i e_i + b`.
    pub fn combine(weights: &[f64], exprs: &[LinExpr], bias: f64) -> LinExpr {
        let mut out = LinExpr::constant(bias);
        for (w, e) in weights.iter().zip(exprs) {
            out.add_scaled(e, *w);
        }
        out
    }

    fn dense(&self, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; n];
        for (&v, &c) in &self.terms {
            if v < n {
                row[v] += c;
            }
        }
        row
    }
}

/// One ReLU neuron with an indicator binary (`t = 1` ⇔ inactive).
#[derive(Debug, Clone, PartialEq)]
pub struct ReluRecord {
    pub z: usize,
    pub t: usize,
    pub pre: LinExpr,
    /// Constant multiplying `t` in `z <= pre + m_lo t`.
    pub m_lo: f64,
    /// Constant in `z <= m_hi (1 - t)`.
    pub m_hi: f64,
}

/// Mixed-binary linear program `max objective  s.t.  rows <= rhs, bounds`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    pub rows: Vec<LinExpr>,
    pub rhs: Vec<f64>,
    pub objective: LinExpr,
    /// Free input variables (`x₀`), in coordinate order.
    pub inputs: Vec<usize>,
    /// ReLU neurons in creation order; each refers only to earlier variables.
    pub relus: Vec<ReluRecord>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lo);
        self.upper.push(hi);
        self.binary.push(false);
        self.names.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        let v = self.add_continuous(name, 0.0, 1.0);
        self.binary[v] = true;
        v
    }

    /// `expr <= rhs`; the expression's constant moves to the right.
    pub fn add_le(&mut self, expr: &LinExpr, rhs: f64) {
        let mut row = expr.clone();
        let c = row.constant;
        row.constant = 0.0;
        self.rows.push(row);
        self.rhs.push(rhs - c);
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.num_vars()).filter(|&v| self.binary[v]).collect()
    }

    /// Adds `z = relu(pre)` with pre-activation bounds `lo < 0 < hi` and
    /// returns `z`.
    pub fn add_relu(&mut self, name: &str, pre: &LinExpr, m_lo: f64, m_hi: f64) -> usize {
        let z = self.add_continuous(format!("z_{name}"), 0.0, m_hi);
        let t = self.add_binary(format!("t_{name}"));
        // z >= pre
        let mut r = pre.clone();
        r.add_term(z, -1.0);
        self.add_le(&r, 0.0);
        // z <= pre + m_lo t
        let mut r = LinExpr::var(z);
        r.add_scaled(pre, -1.0);
        r.add_term(t, -m_lo);
        self.add_le(&r, 0.0);
        // z <= m_hi (1 - t)
        let mut r = LinExpr::var(z);
        r.add_term(t, m_hi);
        self.add_le(&r, m_hi);
        self.relus.push(ReluRecord { z, t, pre: pre.clone(), m_lo, m_hi });
        z
    }

    /// LP relaxation with the given variable bounds (binaries relaxed to
    /// their interval).
    pub fn relaxation(&self, objective: &LinExpr, lower: &[f64], upper: &[f64]) -> LinearProgram {
        let n = self.num_vars();
        let mut data = Vec::with_capacity(self.rows.len() * n);
        for row in &self.rows {
            data.extend(row.dense(n));
        }
        let a = Matrix::new(self.rows.len(), n, data).expect("rows are finite");
        LinearProgram::new(objective.dense(n), a, self.rhs.clone()).with_bounds(lower.to_vec(), upper.to_vec())
    }

    /// Keeps the first `vars` variables and `rows` rows; used to cut a
    /// closed-loop model back to a shorter horizon.
    pub fn truncated(&self, vars: usize, rows: usize) -> MilpModel {
        MilpModel {
            names: self.names[..vars].to_vec(),
            lower: self.lower[..vars].to_vec(),
            upper: self.upper[..vars].to_vec(),
            binary: self.binary[..vars].to_vec(),
            rows: self.rows[..rows].to_vec(),
            rhs: self.rhs[..rows].to_vec(),
            objective: LinExpr::default(),
            inputs: self.inputs.clone(),
            relus: self.relus.iter().filter(|r| r.z < vars && r.t < vars).cloned().collect(),
        }
    }

    /// Largest violation of rows, bounds and integrality at `point`.
    pub fn violation(&self, point: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            worst = worst.max(row.eval(point) - b);
        }
        for v in 0..self.num_vars() {
            worst = worst.max(self.lower[v] - point[v]).max(point[v] - self.upper[v]);
            if self.binary[v] {
                worst = worst.max(point[v].min(1.0 - point[v]).abs());
            }
        }
        worst
    }

    /// Completes a point from its input coordinates by evaluating every ReLU
    /// exactly. Other continuous variables keep their values from `point`.
    pub fn lift_inputs(&self, point: &[f64]) -> Vec<f64> {
        let mut out = point.to_vec();
        for r in &self.relus {
            let pre = r.pre.eval(&out);
            out[r.z] = pre.max(0.0);
            out[r.t] = if pre < 0.0 { 1.0 } else { 0.0 };
        }
        out
    }

    /// CPLEX LP text: objective, rows, bounds and binary markers. Numbers use
    /// the shortest decimal that round-trips.
    pub fn to_lp_text(&self) -> String {
        let mut s = String::new();
        let term_list = |e: &LinExpr| {
            let mut t = String::new();
            for (&v, &c) in &e.terms {
                if c != 0.0 {
                    let _ = write!(t, " {} {:?} {}", if c < 0.0 { "-" } else { "+" }, c.abs(), self.names[v]);
                }
            }
            if t.is_empty() {
                t.push_str(" 0 ");
                t.push_str(self.names.first().map(String::as_str).unwrap_or("x"));
            }
            t
        };
        let _ = writeln!(s, "\\ objective constant {:?}", self.objective.constant);
        let _ = writeln!(s, "Maximize\n obj:{}", term_list(&self.objective));
        let _ = writeln!(s, "Subject To");
        for (i, (row, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
            let _ = writeln!(s, " c{i}:{} <= {:?}", term_list(row), b);
        }
        let _ = writeln!(s, "Bounds");
        for v in 0..self.num_vars() {
            if self.binary[v] {
                continue;
            }
            let lo = if self.lower[v].is_finite() { format!("{:?}", self.lower[v]) } else { "-inf".into() };
            let hi = if self.upper[v].is_finite() { format!("{:?}", self.upper[v]) } else { "+inf".into() };
            let _ = writeln!(s, " {lo} <= {} <= {hi}", self.names[v]);
        }
        let _ = writeln!(s, "Binary");
        for v in self.binaries() {
            let _ = writeln!(s, " {}", self.names[v]);
        }
        s.push_str("End\n");
        s
    }
}
