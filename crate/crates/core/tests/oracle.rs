mod common;

use certnn::control::{simulate, LtiSystem};
use certnn::milp::{output_range, output_range_with, reach_set, reach_set_with, ClosedLoopEncoder, EncodeOptions};
use certnn::network::{synth_satlqr, ReluNetwork};
use certnn::verify::verify_invariance;
use certnn::{benchmark, Matrix, Polytope};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_net(rng: &mut ChaCha8Rng) -> ReluNetwork {
    let widths: Vec<usize> = if rng.gen_bool(0.5) { vec![rng.gen_range(1..=4)] } else { vec![2, rng.gen_range(1..=2)] };
    random_net(rng, 2, &widths, 1)
}

fn box2(r: f64) -> Polytope {
    Polytope::hypercube(2, r)
}

fn stable_system(rng: &mut ChaCha8Rng) -> LtiSystem {
    let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let s = rng.gen_range(0.3..0.8);
    let a = Matrix::from_rows(&[[s * t.cos(), -s * t.sin()], [s * t.sin(), s * t.cos()]]).unwrap();
    LtiSystem::new(a, random_matrix(rng, 2, 1, 0.3)).unwrap()
}

#[test]
fn output_range_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dirs = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
    for _ in 0..15 {
        let net = small_net(&mut rng);
        let x_in = box2(rng.gen_range(0.5..2.0));
        let got = output_range(&net, &x_in, &dirs).unwrap();
        for (i, g) in got.iter().enumerate() {
            let want = range_max(&net, &x_in, dirs.row(i));
            assert!((g - want).abs() <= 1e-6 * (1.0 + want.abs()), "{g} vs {want}");
        }
    }
}

#[test]
fn two_step_reach_matches_pattern_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dirs = fan(4);
    for _ in 0..4 {
        let w = rng.gen_range(1..=3);
        let net = random_net(&mut rng, 2, &[w], 1);
        let sys = stable_system(&mut rng);
        let x_in = box2(1.0);
        let got = reach_set(&sys, &net, &x_in, 2, &dirs).unwrap();
        for (i, g) in got.iter().enumerate() {
            let want = reach_max(&sys.a, &sys.b, &net, &x_in, 2, dirs.row(i));
            assert!((g - want).abs() <= 1e-6 * (1.0 + want.abs()), "{g} vs {want}");
        }
    }
}

#[test]
fn simulated_points_never_exceed_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dirs = fan(8);
    let net = random_net(&mut rng, 2, &[3, 2], 1);
    let sys = stable_system(&mut rng);
    let x_in = box2(1.5);
    let c3 = reach_set(&sys, &net, &x_in, 3, &dirs).unwrap();
    for _ in 0..1000 {
        let x0 = sample(&mut rng, &x_in);
        let x3 = &simulate(&sys, &net, &x0, 3).unwrap().states[3];
        for (i, c) in c3.iter().enumerate() {
            assert!(dot(dirs.row(i), x3) <= c + 1e-9);
        }
    }
}

#[test]
fn larger_big_m_gives_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let dirs = fan(6);
    let loose = EncodeOptions { big_m_scale: 2.0, lp_tightening: false, exact_state_bounds: false, ..EncodeOptions::default() };
    for _ in 0..5 {
        let net = random_net(&mut rng, 2, &[3, 3], 2);
        let x_in = box2(1.0);
        let dirs2 = Matrix::from_rows(&[[1.0, 0.5], [-0.3, 1.0]]).unwrap();
        let a = output_range_with(&net, &x_in, &dirs2, &EncodeOptions::default()).unwrap();
        let b = output_range_with(&net, &x_in, &dirs2, &loose).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).abs() <= 1e-6 * (1.0 + x.value.abs()));
        }
        let sys = stable_system(&mut rng);
        let net1 = random_net(&mut rng, 2, &[3], 1);
        let mut e1 = ClosedLoopEncoder::new(&sys, &net1, &x_in, EncodeOptions::default()).unwrap();
        let mut e2 = ClosedLoopEncoder::new(&sys, &net1, &x_in, loose).unwrap();
        let r1 = reach_set_with(&mut e1, 3, &dirs).unwrap();
        let r2 = reach_set_with(&mut e2, 3, &dirs).unwrap();
        for (x, y) in r1.iter().zip(&r2) {
            assert!((x.value - y.value).abs() <= 1e-6 * (1.0 + x.value.abs()));
        }
    }
}

#[test]
fn bounds_grow_with_the_initial_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let dirs = fan(8);
    for _ in 0..5 {
        let net = small_net(&mut rng);
        let sys = stable_system(&mut rng);
        let small = reach_set(&sys, &net, &box2(0.5), 2, &dirs).unwrap();
        let large = reach_set(&sys, &net, &box2(1.0), 2, &dirs).unwrap();
        for (s, l) in small.iter().zip(&large) {
            assert!(s <= &(l + 1e-9));
        }
    }
}

#[test]
fn invariance_verdicts_agree_with_rollouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let u = Polytope::hypercube(1, 10.0);
    for _ in 0..10 {
        let net = small_net(&mut rng);
        let sys = stable_system(&mut rng);
        let x_in = box2(1.0);
        let inv = verify_invariance(&sys, &net, &x_in, &u).unwrap();
        if inv.ok {
            for _ in 0..300 {
                let x0 = sample(&mut rng, &x_in);
                let traj = simulate(&sys, &net, &x0, 30).unwrap();
                assert!(traj.states.iter().all(|x| x_in.contains_point(x, 1e-9)));
            }
        } else {
            let w = inv.witness.expect("a failing check carries a witness");
            assert!(x_in.contains_point(&w.x0, 1e-7));
            let x1 = sys.step(&w.x0, &net.eval(&w.x0).unwrap()).unwrap();
            let excess = dot(x_in.f().row(w.direction), &x1) - x_in.g()[w.direction];
            assert!(excess > 0.0 && (excess - w.excess).abs() <= 1e-6);
        }
    }
}

#[test]
fn one_step_set_contains_sampled_images() {
    let spec = benchmark::system();
    let sys = spec.system().unwrap();
    let k = spec.lqr().unwrap().k;
    let net = synth_satlqr(&k, &[-1.0], &[1.0], 6.0).unwrap();
    let x_in = benchmark::initial_set();
    let inv = verify_invariance(&sys, &net, &x_in, &spec.input_polytope().unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let x0 = sample(&mut rng, &x_in);
        let x1 = sys.step(&x0, &net.eval(&x0).unwrap()).unwrap();
        assert!(inv.set.contains_point(&x1, 1e-9));
    }
}

#[test]
fn published_initial_set_leaks_at_a_vertex() {
    // The vertex cut out by facets 2 and 3 maps outside facet 1 even with the
    // largest admissible input, so no controller can keep the set invariant.
    let spec = benchmark::system();
    let sys = spec.system().unwrap();
    let x_in = benchmark::initial_set();
    let f = x_in.f();
    let g = x_in.g();
    let m = Matrix::from_rows(&[f.row(2), f.row(3)]).unwrap();
    let v = certnn::numerics::solve_linear(&m, &[g[2], g[3]]).unwrap();
    assert!(x_in.contains_point(&v, 1e-9));
    for u in [-1.0, 0.0, 1.0] {
        let x1 = sys.step(&v, &[u]).unwrap();
        assert!(dot(f.row(1), &x1) - g[1] > 9e-5);
    }
    let k = spec.lqr().unwrap().k;
    let net = synth_satlqr(&k, &[-1.0], &[1.0], 6.0).unwrap();
    let inv = verify_invariance(&sys, &net, &x_in, &spec.input_polytope().unwrap()).unwrap();
    assert!(!inv.ok);
    assert_eq!(inv.witness.unwrap().direction, 1);
}
