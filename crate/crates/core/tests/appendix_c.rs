use nalgebra::{DMatrix, DVector};
use rnnlab::cells::appendix_c;
use rnnlab::statespace::{
    estimate_lipschitz_f, lyapunov_exponent, simulate, DynamicalModel, Region, Trajectory,
};

const GOLDEN: &str = include_str!("data/appendix_c_golden.csv");

fn no_input(n: usize) -> DMatrix<f64> {
    DMatrix::zeros(n, 0)
}

#[test]
fn golden_trajectory_is_bitwise() {
    let cell = appendix_c::cell();
    let tr = simulate(&cell, &appendix_c::initial_state(), &no_input(200)).unwrap();
    let golden = Trajectory::from_csv(GOLDEN).unwrap();
    assert_eq!(golden.len(), 200);
    for (a, b) in tr.states.iter().zip(golden.states.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in tr.outputs.iter().zip(golden.outputs.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let again = Trajectory::from_csv(&tr.to_csv()).unwrap();
    assert_eq!(again.states, golden.states);
}

#[test]
fn first_step_matches_hand_evaluation() {
    // h = c = (0.5, 0.5): preactivations are half the row sums
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let c1 = sig(2.0) * 0.5 + sig(1.5) * (-3.5f64).tanh();
    let c2 = sig(-3.0) * 0.5 + sig(-2.5) * (-1.5f64).tanh();
    let h1 = sig(2.5) * c1.tanh();
    let h2 = sig(-1.0) * c2.tanh();
    let x1 = appendix_c::cell().step(&appendix_c::initial_state(), &DVector::zeros(0));
    for (got, want) in x1.iter().zip([h1, h2, c1, c2]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn aperiodic_at_unit_scale() {
    let cell = appendix_c::cell();
    let tr = simulate(&cell, &appendix_c::initial_state(), &no_input(200)).unwrap();
    let mut tail: Vec<[u64; 2]> = (100..200)
        .map(|t| [tr.outputs[(t, 0)].to_bits(), tr.outputs[(t, 1)].to_bits()])
        .collect();
    tail.sort();
    tail.dedup();
    assert_eq!(tail.len(), 100);
    // neutral within the resolution of a 2000-step average
    let l = lyapunov_exponent(&cell, &appendix_c::initial_state(), &DVector::zeros(0), 100, 2000)
        .unwrap();
    assert!(l.abs() < 1e-2, "{l}");
}

#[test]
fn positive_exponent_inside_band() {
    let x0 = appendix_c::initial_state();
    let l = lyapunov_exponent(&appendix_c::scaled(1.15), &x0, &DVector::zeros(0), 100, 2000)
        .unwrap();
    assert!(l > 0.05, "{l}");
}

#[test]
fn contracts_at_small_scale() {
    let cell = appendix_c::scaled(0.1);
    let tr = simulate(&cell, &appendix_c::initial_state(), &no_input(201)).unwrap();
    let diff = (tr.state(200) - tr.state(199)).norm();
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn lipschitz_above_one_on_attractor() {
    let cell = appendix_c::cell();
    let tr = simulate(&cell, &appendix_c::initial_state(), &no_input(400)).unwrap();
    let region = Region::around(&tr, 100);
    let l = estimate_lipschitz_f(&cell, &region, &DVector::zeros(0), 500, 0).unwrap();
    assert!(l > 1.0, "{l}");
}
