//! Certification pipeline: input constraints, invariance of the initial set,
//! the equilibrium conditions and the k-step entry into the stability set.
//!
//! Every MILP comparison uses the solver's proven bound rather than its
//! incumbent, so a passing check bounds the true optimum.

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::control::{lqr_admissible_set, LtiSystem};
use crate::error::{dim_err, Error, Result};
use crate::milp::{output_range_with, reach_set_with, ClosedLoopEncoder, DirectionResult, EncodeOptions};
use crate::network::{feedback_residuals, ReluNetwork};
use crate::numerics::{spectral_radius, Matrix};
use crate::polytope::{max_positively_invariant, Polytope};

/// Compares proven bounds with the facet offsets, allowing for the prune
/// tolerance and LP round-off.
fn all_within(results: &[DirectionResult], g: &[f64], tol: &Tolerances) -> bool {
    results.iter().zip(g).all(|(r, &b)| r.bound <= b + tol.prune * (1.0 + b.abs()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub milp_solves: usize,
    pub nodes: usize,
}

impl SolverStats {
    fn record(&mut self, results: &[DirectionResult]) {
        self.milp_solves += results.len();
        self.nodes += results.iter().map(|r| r.nodes).sum::<usize>();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCheck {
    pub ok: bool,
    /// Optimal values per facet of `U`.
    pub c_star: Vec<f64>,
    /// `{u : C_u u <= c*}`.
    pub set: Polytope,
}

/// A concrete initial state whose successor leaves the certified facet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub direction: usize,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    /// `C_i x1 - c_i`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub ok: bool,
    pub c_star: Vec<f64>,
    /// One-step reach set `{x : C_in x <= c*}`.
    pub set: Polytope,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConditions {
    pub bias_residual: f64,
    pub spectral_radius: f64,
    pub lqr_match_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    #[serde(flatten)]
    pub conditions: StabilityConditions,
    pub r_eq: Option<Polytope>,
    pub r_as: Option<Polytope>,
    pub k_star: Option<usize>,
    /// Reach set at `k_star` (or at `k_max` when no horizon succeeded).
    pub reach_k: Option<Polytope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    InputOnly,
    Invariant,
    AsymptoticallyStable,
    LqrOptimalNearEq,
    Failed(String),
}

impl Verdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, Verdict::AsymptoticallyStable | Verdict::LqrOptimalNearEq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub input: InputCheck,
    pub invariance: Option<InvarianceCheck>,
    pub stability: StabilityReport,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub k_max: usize,
    /// Tolerance on the bias and LQR-match residuals.
    pub residual_tol: f64,
    pub k_ref: Option<Matrix>,
    pub encode: EncodeOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { k_max: 25, residual_tol: Tolerances::DEFAULT.certificate, k_ref: None, encode: EncodeOptions::default() }
    }
}

fn check_dims(sys: &LtiSystem, net: &ReluNetwork) -> Result<()> {
    if net.input_dim() != sys.nx() || net.output_dim() != sys.nu() {
        return Err(dim_err(format!(
            "network maps {} -> {}, system has nx={}, nu={}",
            net.input_dim(),
            net.output_dim(),
            sys.nx(),
            sys.nu()
        )));
    }
    Ok(())
}

/// `max C_u net(x)` over `x_in` compared facet by facet with `c_u`.
pub fn verify_input(net: &ReluNetwork, x_in: &Polytope, u: &Polytope) -> Result<InputCheck> {
    input_check(net, x_in, u, &EncodeOptions::default(), &mut SolverStats::default())
}

fn input_check(
    net: &ReluNetwork,
    x_in: &Polytope,
    u: &Polytope,
    opts: &EncodeOptions,
    stats: &mut SolverStats,
) -> Result<InputCheck> {
    let results = output_range_with(net, x_in, u.f(), opts)?;
    stats.record(&results);
    let ok = all_within(&results, u.g(), &opts.tol);
    let c_star: Vec<f64> = results.iter().map(|r| r.value).collect();
    let set = Polytope::new(u.f().clone(), c_star.clone())?;
    Ok(InputCheck { ok, c_star, set })
}

/// Input check plus `X*_1 ⊆ X_in` with the facets of `X_in` as directions.
pub fn verify_invariance(sys: &LtiSystem, net: &ReluNetwork, x_in: &Polytope, u: &Polytope) -> Result<InvarianceCheck> {
    check_dims(sys, net)?;
    let mut stats = SolverStats::default();
    let opts = EncodeOptions::default();
    let input = input_check(net, x_in, u, &opts, &mut stats)?;
    let mut enc = ClosedLoopEncoder::new(sys, net, x_in, opts)?;
    let mut check = invariance_check(sys, net, x_in, &mut enc, &mut stats)?;
    check.ok &= input.ok;
    Ok(check)
}

fn invariance_check(
    sys: &LtiSystem,
    net: &ReluNetwork,
    x_in: &Polytope,
    enc: &mut ClosedLoopEncoder,
    stats: &mut SolverStats,
) -> Result<InvarianceCheck> {
    let tol = enc.options().tol;
    let results = reach_set_with(enc, 1, x_in.f())?;
    stats.record(&results);
    let ok = all_within(&results, x_in.g(), &tol);
    let mut witness = None;
    if !ok {
        let (i, r) = results
            .iter()
            .enumerate()
            .max_by(|a, b| (a.1.value - x_in.g()[a.0]).total_cmp(&(b.1.value - x_in.g()[b.0])))
            .expect("at least one violated facet");
        let x1 = sys.step(&r.x0, &net.eval(&r.x0)?)?;
        let excess = crate::numerics::dot(x_in.f().row(i), &x1) - x_in.g()[i];
        witness = Some(Witness { direction: i, x0: r.x0.clone(), x1, excess });
    }
    let c_star: Vec<f64> = results.iter().map(|r| r.value).collect();
    let set = Polytope::new(x_in.f().clone(), c_star.clone())?;
    Ok(InvarianceCheck { ok, c_star, set, witness })
}

/// Bias of the equilibrium feedback, spectral radius of the equilibrium
/// closed loop and, with a reference gain, the gain mismatch.
pub fn check_stability_conditions(
    sys: &LtiSystem,
    net: &ReluNetwork,
    k_ref: Option<&Matrix>,
) -> Result<StabilityConditions> {
    check_dims(sys, net)?;
    let (bias_residual, lqr_match_residual) = feedback_residuals(net, k_ref)?;
    let k_net = equilibrium_gain(net)?;
    let rho = spectral_radius(&sys.closed_loop(&k_net)?)?;
    Ok(StabilityConditions { bias_residual, spectral_radius: rho, lqr_match_residual })
}

/// `K_net = -W_{L+1} W_Γ` for the pattern at the origin.
pub fn equilibrium_gain(net: &ReluNetwork) -> Result<Matrix> {
    let pattern = net.activation_pattern(&vec![0.0; net.input_dim()])?;
    let hidden = net.affine_map(&pattern, net.num_hidden())?;
    Ok(net.output_layer().weights.matmul(&hidden.w)?.scale(-1.0))
}

/// Equilibrium region and the largest set inside it (and inside the
/// admissible set of the equilibrium feedback) that this feedback keeps
/// invariant.
pub fn stability_set(sys: &LtiSystem, net: &ReluNetwork, x: &Polytope, u: &Polytope) -> Result<(Polytope, Polytope)> {
    check_dims(sys, net)?;
    let (_, r_eq) = net.equilibrium_region()?;
    let k_net = equilibrium_gain(net)?;
    let r_k = match lqr_admissible_set(sys, &k_net, x, u) {
        Err(Error::EmptyInput) => return Err(Error::EmptyStabilitySet),
        r => r?,
    };
    let both = r_eq.stack(&r_k)?;
    if both.is_empty()? {
        return Err(Error::EmptyStabilitySet);
    }
    let r_as = match max_positively_invariant(&sys.closed_loop(&k_net)?, &both) {
        Err(Error::EmptyInput) => return Err(Error::EmptyStabilitySet),
        r => r?,
    };
    if r_as.is_empty()? {
        return Err(Error::EmptyStabilitySet);
    }
    Ok((r_eq, r_as))
}

/// Runs the full pipeline and summarizes it in a verdict.
pub fn verify_stability(
    sys: &LtiSystem,
    net: &ReluNetwork,
    x_in: &Polytope,
    x: &Polytope,
    u: &Polytope,
    opts: &VerifyOptions,
) -> Result<Certificate> {
    check_dims(sys, net)?;
    let mut stats = SolverStats::default();
    let input = input_check(net, x_in, u, &opts.encode, &mut stats)?;
    info!("input constraints: {}", if input.ok { "satisfied" } else { "violated" });
    let conditions = check_stability_conditions(sys, net, opts.k_ref.as_ref())?;
    let mut stability =
        StabilityReport { conditions, r_eq: None, r_as: None, k_star: None, reach_k: None };
    let mut cert = Certificate { verdict: Verdict::InputOnly, input, invariance: None, stability: stability.clone(), stats };
    let fail = |mut cert: Certificate, stability: StabilityReport, reason: &str| {
        cert.verdict = Verdict::Failed(reason.into());
        cert.stability = stability;
        Ok(cert)
    };

    if !cert.input.ok {
        return fail(cert, stability, "input constraints");
    }
    if conditions.bias_residual > opts.residual_tol {
        return fail(cert, stability, "bias annihilation");
    }
    if conditions.spectral_radius >= 1.0 {
        return fail(cert, stability, "spectral radius");
    }
    match stability_set(sys, net, x, u) {
        Ok((r_eq, r_as)) => {
            stability.r_eq = Some(r_eq);
            stability.r_as = Some(r_as);
        }
        Err(Error::EmptyStabilitySet) => return fail(cert, stability, "empty stability set"),
        Err(e) => return Err(e),
    }

    let mut enc = ClosedLoopEncoder::new(sys, net, x_in, opts.encode)?;
    let inv = invariance_check(sys, net, x_in, &mut enc, &mut cert.stats)?;
    info!("invariance of the initial set: {}", if inv.ok { "certified" } else { "not certified" });
    let invariant = inv.ok;
    cert.invariance = Some(inv);
    if !invariant {
        cert.stability = stability;
        cert.verdict = Verdict::InputOnly;
        return Ok(cert);
    }

    let r_as = stability.r_as.clone().expect("set above");
    let tol = opts.encode.tol;
    for k in 1..=opts.k_max {
        let results = reach_set_with(&mut enc, k, r_as.f())?;
        cert.stats.record(&results);
        let c_star: Vec<f64> = results.iter().map(|r| r.value).collect();
        stability.reach_k = Some(Polytope::new(r_as.f().clone(), c_star)?);
        let inside = all_within(&results, r_as.g(), &tol);
        info!("k = {k}: reach set {} the stability set", if inside { "inside" } else { "not inside" });
        if inside {
            stability.k_star = Some(k);
            break;
        }
    }
    cert.verdict = match (stability.k_star, conditions.lqr_match_residual) {
        (None, _) => Verdict::Invariant,
        (Some(_), Some(m)) if m <= opts.residual_tol => Verdict::LqrOptimalNearEq,
        (Some(_), _) => Verdict::AsymptoticallyStable,
    };
    cert.stability = stability;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::network::{synth_lqr_net, synth_satlqr, Layer};

    fn zero_net(nx: usize) -> ReluNetwork {
        ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(2, nx), vec![0.0; 2]),
            Layer::new(Matrix::zeros(1, 2), vec![0.0]),
        ])
        .unwrap()
    }

    fn diag(a: f64) -> LtiSystem {
        LtiSystem::new(Matrix::from_diag(&[a, a]), Matrix::from_rows(&[[1.0], [0.0]]).unwrap()).unwrap()
    }

    fn unit_u() -> Polytope {
        Polytope::from_box(&[-1.0], &[1.0]).unwrap()
    }

    #[test]
    fn input_examples() {
        let k = benchmark::lqr_gain();
        let sat = synth_satlqr(&k, &[-1.0], &[1.0], 2.0).unwrap();
        let big = Polytope::hypercube(2, 5.0);
        let r = verify_input(&sat, &big, &unit_u()).unwrap();
        assert!(r.ok);
        assert!((r.c_star[0] - 1.0).abs() < 1e-7 && (r.c_star[1] - 1.0).abs() < 1e-7);
        assert!(!verify_input(&synth_lqr_net(&k, 0.0).unwrap(), &big, &unit_u()).unwrap().ok);
        assert!(verify_input(&zero_net(2), &big, &unit_u()).unwrap().ok);
    }

    #[test]
    fn invariance_examples() {
        let x_in = Polytope::hypercube(2, 1.0);
        let r = verify_invariance(&diag(0.5), &zero_net(2), &x_in, &unit_u()).unwrap();
        assert!(r.ok);
        assert!(r.c_star.iter().all(|c| (c - 0.5).abs() < 1e-9));
        let r = verify_invariance(&diag(2.0), &zero_net(2), &x_in, &unit_u()).unwrap();
        assert!(!r.ok);
        let w = r.witness.unwrap();
        assert!(x_in.contains_point(&w.x0, 1e-9));
        assert!(w.excess > 0.9);
    }

    #[test]
    fn conditions_examples() {
        let spec = benchmark::system();
        let sys = spec.system().unwrap();
        let k = spec.lqr().unwrap().k;
        let net = synth_satlqr(&k, &[-1.0], &[1.0], 2.0).unwrap();
        let c = check_stability_conditions(&sys, &net, Some(&k)).unwrap();
        assert!(c.bias_residual <= 1e-12);
        assert!(c.spectral_radius < 1.0);
        assert!(c.lqr_match_residual.unwrap() <= 1e-12);
        let z = check_stability_conditions(&diag(0.5), &zero_net(2), None).unwrap();
        assert_eq!(z.bias_residual, 0.0);
        assert!((z.spectral_radius - 0.5).abs() < 1e-12);
        assert_eq!(z.lqr_match_residual, None);
    }

    #[test]
    fn stability_set_of_benchmark_net() {
        let spec = benchmark::system();
        let sys = spec.system().unwrap();
        let k = spec.lqr().unwrap().k;
        let net = synth_satlqr(&k, &[-1.0], &[1.0], 2.0).unwrap();
        let u = spec.input_polytope().unwrap();
        let (r_eq, r_as) = stability_set(&sys, &net, &spec.x, &u).unwrap();
        assert!(r_as.contains_point(&[0.0, 0.0], 0.0));
        let r_lqr = lqr_admissible_set(&sys, &k, &spec.x, &u).unwrap();
        assert!(r_eq.contains_set(&r_as).unwrap());
        assert!(r_lqr.contains_set(&r_as).unwrap());
        let a_cl = sys.closed_loop(&k).unwrap();
        assert!(r_as.preimage(&a_cl).unwrap().contains_set(&r_as).unwrap());
    }

    #[test]
    fn inactive_constraints_give_equilibrium_region() {
        // offset pair with K = 0.1 I on a contracting plant: only R_eq and X
        // bind, and their intersection is already invariant
        let sys = LtiSystem::new(Matrix::from_diag(&[0.5, 0.5]), Matrix::identity(2)).unwrap();
        let k = Matrix::from_diag(&[0.1, 0.1]);
        let net = synth_lqr_net(&k, 1.0).unwrap();
        let x = Polytope::hypercube(2, 10.0);
        let u = Polytope::hypercube(2, 10.0);
        let (r_eq, r_as) = stability_set(&sys, &net, &x, &u).unwrap();
        assert!(r_as.same_set_within(&r_eq.stack(&x).unwrap(), 1e-9).unwrap());
    }

    #[test]
    fn verdict_examples() {
        let x_in = Polytope::hypercube(2, 1.0);
        let x = Polytope::hypercube(2, 5.0);
        let cert = verify_stability(&diag(0.5), &zero_net(2), &x_in, &x, &unit_u(), &VerifyOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::AsymptoticallyStable);
        let cert = verify_stability(&diag(2.0), &zero_net(2), &x_in, &x, &unit_u(), &VerifyOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Failed("spectral radius".into()));
        let biased = ReluNetwork::new(vec![
            Layer::new(Matrix::zeros(2, 2), vec![0.0; 2]),
            Layer::new(Matrix::zeros(1, 2), vec![0.01]),
        ])
        .unwrap();
        let cert = verify_stability(&diag(0.5), &biased, &x_in, &x, &unit_u(), &VerifyOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Failed("bias annihilation".into()));
        let s = serde_json::to_string(&cert).unwrap();
        assert_eq!(serde_json::from_str::<Certificate>(&s).unwrap(), cert);
    }
}
