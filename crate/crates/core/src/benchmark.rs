//! Published two-state benchmark: plant, constraints and reference sets.
//!
//! Numbers are kept exactly as printed, including their rounding
//! asymmetries. The equilibrium region and stability set belong to a trained
//! network whose weights are not available; they are kept for comparison
//! only.

use crate::control::{InputBox, InputSet, SystemSpec};
use crate::numerics::Matrix;
use crate::polytope::Polytope;

fn poly(f: &[[f64; 2]], g: &[f64]) -> Polytope {
    Polytope::new(Matrix::from_rows(f).expect("static data"), g.to_vec()).expect("static data")
}

pub fn system() -> SystemSpec {
    SystemSpec {
        a: Matrix::from_rows(&[[0.5403, -0.8415], [0.8415, 0.5403]]).expect("static data"),
        b: Matrix::from_rows(&[[-0.4597], [0.8415]]).expect("static data"),
        x: poly(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], &[5.0; 4]),
        u: InputSet::Box(InputBox { lb: vec![-1.0], ub: vec![1.0] }),
        q: Matrix::from_diag(&[2.0, 2.0]),
        r: Matrix::identity(1),
    }
}

pub fn initial_set() -> Polytope {
    poly(
        &[
            [0.0707, -0.9975],
            [-0.1509, -0.9885],
            [-0.8011, -0.5984],
            [-0.9797, 0.2004],
            [0.8776, -0.4795],
            [0.9797, -0.2004],
            [0.8012, 0.5984],
            [0.1509, 0.9885],
            [-0.0707, 0.9975],
            [-0.8776, 0.4754],
        ],
        &[3.0297, 2.9401, 3.5051, 3.2918, 3.3082, 3.2918, 3.5051, 2.9401, 3.0297, 3.3082],
    )
}

/// Reported LQR gain.
pub fn lqr_gain() -> Matrix {
    Matrix::from_rows(&[[0.2501, 0.8290]]).expect("static data")
}

/// Reported LQR admissible region.
pub fn lqr_region() -> Polytope {
    poly(&[[-0.6870, 0.24566], [0.6870, -0.2456], [-0.2501, -0.8290], [0.2501, 0.8290]], &[1.0; 4])
}

/// Equilibrium region of the trained network.
pub fn trained_equilibrium_region() -> Polytope {
    poly(
        &[[-0.2527, -0.7318], [0.2646, 0.0201], [-0.3536, 0.4097], [0.3115, 0.6526]],
        &[0.9025, 0.2673, 0.2484, 0.8415],
    )
}

/// Stability set reported for the trained network.
pub fn trained_stability_set() -> Polytope {
    poly(
        &[
            [-0.3264, -0.9452],
            [-0.6533, 0.7571],
            [-0.2889, -0.9574],
            [0.9971, 0.0759],
            [0.8301, -0.5576],
            [-0.2888, -0.9574],
            [0.4307, 0.9025],
        ],
        &[1.1657, 0.4590, 1.1548, 1.0070, 1.1920, 1.1549, 1.1637],
    )
}

/// Reported retrofit cost of the trained network.
pub const TRAINED_RETROFIT_COST: f64 = 5.4836e-4;

/// Reported horizon at which the reach set entered the stability set.
pub const TRAINED_K_STAR: usize = 6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sets_are_consistent() {
        // stability set sits inside both the equilibrium and LQR regions
        let r_as = trained_stability_set();
        assert!(lqr_region().contains_set_within(&r_as, 1e-3).unwrap());
        assert!(trained_equilibrium_region().contains_set_within(&r_as, 1e-3).unwrap());
        assert!(system().x.contains_set(&initial_set()).unwrap());
        assert!(initial_set().contains_point(&[0.0, 0.0], 0.0));
    }
}
