//! Numerical tolerances shared by every module.

/// One record holding every tolerance used by the crate.
///
/// [`Tolerances::DEFAULT`] is what all the plain entry points use; the
/// `*_with` variants accept an explicit record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Smallest acceptable LU pivot magnitude.
    pub pivot: f64,
    /// Relative residual bound for linear solves.
    pub residual: f64,
    /// Absolute accuracy target for eigenvalue moduli.
    pub eigen: f64,
    /// Primal feasibility tolerance of the simplex method.
    pub lp_feasibility: f64,
    /// Reduced-cost optimality tolerance of the simplex method.
    pub lp_optimality: f64,
    /// Slack used by emptiness tests (`F x <= g + slack`).
    pub emptiness: f64,
    /// A row is redundant when its support over the other rows is at most `g + redundancy`.
    pub redundancy: f64,
    /// Containment and fixpoint tolerance.
    pub containment: f64,
    /// Binary variables closer than this to 0 or 1 count as integral.
    pub integrality: f64,
    /// Nodes whose bound does not beat the incumbent by this much are pruned.
    pub prune: f64,
    /// Relative optimality gap at which branch-and-bound stops.
    pub gap: f64,
    /// Tolerance for the bias-annihilation and LQR-match residuals.
    pub certificate: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        pivot: 1e-12,
        residual: 1e-9,
        eigen: 1e-8,
        lp_feasibility: 1e-7,
        lp_optimality: 1e-9,
        emptiness: 1e-7,
        redundancy: 1e-9,
        containment: 1e-7,
        integrality: 1e-6,
        prune: 1e-9,
        gap: 1e-6,
        certificate: 1e-6,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
