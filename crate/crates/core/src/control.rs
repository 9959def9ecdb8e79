//! LTI plant, discrete LQR and closed-loop simulation.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::network::ReluNetwork;
use crate::numerics::{eigenvalues, Lu, Matrix};
use crate::polytope::{max_positively_invariant, Polytope};

const RICCATI_TOL: f64 = 1e-10;
const RICCATI_CAP: usize = 100_000;

/// `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: Matrix,
    pub b: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(dim_err(format!("A is {}x{}", a.rows(), a.cols())));
        }
        if b.rows() != a.rows() {
            return Err(dim_err(format!("B has {} rows, A has {}", b.rows(), a.rows())));
        }
        Ok(Self { a, b })
    }

    pub fn nx(&self) -> usize {
        self.a.rows()
    }

    pub fn nu(&self) -> usize {
        self.b.cols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.mul_vec(x)?;
        let bu = self.b.mul_vec(u)?;
        Ok(ax.iter().zip(&bu).map(|(p, q)| p + q).collect())
    }

    /// `A - B K`.
    pub fn closed_loop(&self, k: &Matrix) -> Result<Matrix> {
        self.a.sub(&self.b.matmul(k)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub k: Matrix,
    pub p: Matrix,
}

fn min_symmetric_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(&m.symmetrized())?.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
}

fn riccati_gain(sys: &LtiSystem, p: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    let bt = sys.b.transpose();
    let btp = bt.matmul(p)?;
    let s = r.add(&btp.matmul(&sys.b)?)?;
    let k = Lu::factor(&s)?.solve_matrix(&btp.matmul(&sys.a)?)?;
    Ok((k, s))
}

/// Infinite-horizon discrete LQR by backward Riccati iteration from `P = Q`.
pub fn lqr(sys: &LtiSystem, q: &Matrix, r: &Matrix) -> Result<LqrSolution> {
    let (nx, nu) = (sys.nx(), sys.nu());
    if q.rows() != nx || q.cols() != nx || r.rows() != nu || r.cols() != nu {
        return Err(dim_err(format!(
            "Q is {}x{}, R is {}x{} for nx={nx}, nu={nu}",
            q.rows(),
            q.cols(),
            r.rows(),
            r.cols()
        )));
    }
    let q = q.symmetrized();
    let r = r.symmetrized();
    if min_symmetric_eigenvalue(&q)? < -1e-12 * (1.0 + q.max_abs()) {
        return Err(Error::InvalidValue("Q is not positive semidefinite".into()));
    }
    if min_symmetric_eigenvalue(&r)? <= 0.0 {
        return Err(Error::InvalidValue("R is not positive definite".into()));
    }
    let at = sys.a.transpose();
    let mut p = q.clone();
    for _ in 0..RICCATI_CAP {
        let (k, _) = riccati_gain(sys, &p, &r)?;
        // Q + Aᵀ P (A - B K)
        let next = q.add(&at.matmul(&p)?.matmul(&sys.closed_loop(&k)?)?)?.symmetrized();
        let diff = next.sub(&p)?.max_abs();
        p = next;
        if !p.as_slice().iter().all(|v| v.is_finite()) {
            break;
        }
        if diff <= RICCATI_TOL {
            let (k, _) = riccati_gain(sys, &p, &r)?;
            return Ok(LqrSolution { k, p });
        }
    }
    Err(Error::NoConvergence { what: "Riccati iteration", iterations: RICCATI_CAP })
}

/// `‖P - (Q + AᵀPA - AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖_∞`.
pub fn riccati_residual(sys: &LtiSystem, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    let (k, _) = riccati_gain(sys, p, r)?;
    let at = sys.a.transpose();
    let rhs = q.add(&at.matmul(p)?.matmul(&sys.closed_loop(&k)?)?)?;
    Ok(p.sub(&rhs)?.max_abs())
}

/// Largest set inside `X` on which `u = -K x` respects `U` forever.
pub fn lqr_admissible_set(sys: &LtiSystem, k: &Matrix, x: &Polytope, u: &Polytope) -> Result<Polytope> {
    if k.rows() != sys.nu() || k.cols() != sys.nx() {
        return Err(dim_err(format!("gain is {}x{} for nx={}, nu={}", k.rows(), k.cols(), sys.nx(), sys.nu())));
    }
    if x.dim() != sys.nx() || u.dim() != sys.nu() {
        return Err(dim_err("constraint set dimensions do not match the system"));
    }
    // C_u (-K x) <= c_u
    let input_rows = Polytope::new(u.f().matmul(&k.scale(-1.0))?, u.g().to_vec())?;
    let admissible = x.stack(&input_rows)?;
    max_positively_invariant(&sys.closed_loop(k)?, &admissible)
}

/// States `x_0..x_k` and inputs `u_0..u_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

pub fn simulate(sys: &LtiSystem, net: &ReluNetwork, x0: &[f64], steps: usize) -> Result<Trajectory> {
    if net.input_dim() != sys.nx() || net.output_dim() != sys.nu() {
        return Err(dim_err(format!(
            "network maps {} -> {}, system has nx={}, nu={}",
            net.input_dim(),
            net.output_dim(),
            sys.nx(),
            sys.nu()
        )));
    }
    if x0.len() != sys.nx() {
        return Err(dim_err(format!("x0 has length {}, system has nx={}", x0.len(), sys.nx())));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    states.push(x0.to_vec());
    for j in 0..steps {
        let u = net.eval(&states[j])?;
        let next = sys.step(&states[j], &u)?;
        inputs.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, inputs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSet {
    Box(InputBox),
    Polytope(Polytope),
}

/// On-disk system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "X")]
    pub x: Polytope,
    #[serde(rename = "U_box", alias = "U")]
    pub u: InputSet,
    #[serde(rename = "Q")]
    pub q: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
}

impl SystemSpec {
    pub fn system(&self) -> Result<LtiSystem> {
        LtiSystem::new(self.a.clone(), self.b.clone())
    }

    /// Checks every dimension against `A` and `B`.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system()?;
        let (nx, nu) = (sys.nx(), sys.nu());
        if self.x.dim() != nx {
            return Err(dim_err(format!("X has dimension {}, A is {nx}x{nx}", self.x.dim())));
        }
        if self.input_polytope()?.dim() != nu {
            return Err(dim_err(format!("U does not have dimension {nu}")));
        }
        if self.q.rows() != nx || self.q.cols() != nx || self.r.rows() != nu || self.r.cols() != nu {
            return Err(dim_err("Q or R has the wrong shape"));
        }
        Ok(())
    }

    pub fn input_polytope(&self) -> Result<Polytope> {
        match &self.u {
            InputSet::Box(b) => Polytope::from_box(&b.lb, &b.ub),
            InputSet::Polytope(p) => Ok(p.clone()),
        }
    }

    /// Box bounds used for output saturation; the bounding box when `U` is a
    /// general polytope.
    pub fn input_bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.u {
            InputSet::Box(b) => Ok((b.lb.clone(), b.ub.clone())),
            InputSet::Polytope(p) => Ok(p.bounding_box()?.into_iter().unzip()),
        }
    }

    pub fn lqr(&self) -> Result<LqrSolution> {
        lqr(&self.system()?, &self.q, &self.r)
    }
}
