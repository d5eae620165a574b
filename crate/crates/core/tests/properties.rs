use std::f64::consts::PI;

use fockforge::analysis::{fock_probability, gain_db, gain_from_db, mean_photons, signal_marginal};
use fockforge::dynamics::{
    evolve_decoupled, evolve_lindblad, evolve_schrodinger, NoiseParams, PulseSequence, Tolerances,
};
use fockforge::jc::{apply_jc, jc_oracle, JcParams};
use fockforge::linalg::expm;
use fockforge::optimizer::{sweep_three_pulse, Axis, GridSpec, PairState, SweepOptions};
use fockforge::squeeze::{dense_generator, SqueezeOperator};
use fockforge::{DensityState, FockBasis, HybridState, Level, ParametricGain};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(basis: FockBasis, rng: &mut impl Rng) -> HybridState {
    let amps: Vec<C64> = (0..basis.dimension())
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    HybridState::from_amplitudes(basis, amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn dense_apply(m: &nalgebra::DMatrix<C64>, s: &HybridState) -> HybridState {
    let v = m * DVector::from_column_slice(s.amplitudes());
    HybridState::from_amplitudes(s.basis(), v.iter().cloned().collect()).unwrap()
}

#[test]
fn squeeze_blocks_match_dense_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let basis = FockBasis::new(4 + k % 9);
        let r = ParametricGain::new(rng.random_range(0.0..1.2), rng.random_range(-PI..PI)).unwrap();
        let s = random_state(basis, &mut rng);
        let fast = SqueezeOperator::new(basis, r).apply(&s).unwrap();
        let slow = dense_apply(&expm(&dense_generator(basis, r)), &s);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-10, "state {k}");
    }
}

#[test]
fn jc_rotations_match_dense_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..100 {
        let basis = FockBasis::new(2 + k % 11);
        let p = JcParams::new(rng.random_range(0.0..4.0), rng.random_range(0.0..2.0)).unwrap();
        let s = random_state(basis, &mut rng);
        let fast = apply_jc(&s, p);
        let slow = jc_oracle(&s, p).unwrap();
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-10, "state {k}");
    }
}

#[test]
fn pure_cavity_loss_decays_exponentially() {
    let basis = FockBasis::new(3);
    let rho = DensityState::from_pure(&HybridState::basis_state(basis, 1, 1, Level::Ground).unwrap());
    let gamma = 0.05;
    for t in [0.5, 1.0, 2.0] {
        let seq = PulseSequence::empty().with_rabi(0.0).with_final_flight(t);
        let out = evolve_lindblad(&rho, &seq, NoiseParams::cavity(gamma), 2, Tolerances::lindblad()).unwrap();
        let expected = (-2.0 * PI * gamma * t).exp();
        let (ni, ns) = mean_photons(&out.state);
        assert!((ni / expected - 1.0).abs() < 1e-3, "idler {ni} vs {expected}");
        assert!((ns / expected - 1.0).abs() < 1e-3, "signal {ns} vs {expected}");
        assert!(out.max_trace_drift < 1e-6);
    }
}

#[test]
fn opposite_pulses_undo_each_other_without_emitter() {
    let seq = PulseSequence::from_gains(&[(0.6, 0.0), (0.6, PI)], &[0.2])
        .unwrap()
        .with_rabi(0.0);
    let vac = HybridState::vacuum(FockBasis::new(20));
    let out = evolve_schrodinger(&vac, &seq, 10, Tolerances::schrodinger()).unwrap();
    assert!(out.state.fidelity(&vac).unwrap() > 1.0 - 1e-4);
    let dec = evolve_decoupled(&vac, &seq).unwrap();
    assert!(dec.state.fidelity(&vac).unwrap() > 1.0 - 1e-6);
}

#[test]
fn lindblad_without_rates_is_the_projector() {
    let seq = PulseSequence::from_gains(&[(0.5, 0.0), (0.4, PI)], &[0.3]).unwrap();
    let basis = FockBasis::new(8);
    let pure = evolve_schrodinger(&HybridState::vacuum(basis), &seq, 5, Tolerances::schrodinger()).unwrap();
    let mixed = evolve_lindblad(&DensityState::vacuum(basis), &seq, NoiseParams::none(), 5, Tolerances::lindblad())
        .unwrap();
    assert!(mixed.state.max_abs_diff_from_pure(&pure.state).unwrap() < 1e-6);
    assert!(mixed.max_trace_drift < 1e-6);
    assert!(mixed.min_eigenvalue > -1e-6);
}

#[test]
fn decoupled_agreement_improves_with_shorter_pulses() {
    let basis = FockBasis::new(12);
    let base = PulseSequence::from_gains(&[(0.58, 0.0), (0.58, PI)], &[0.59]).unwrap();
    let dec = evolve_decoupled(&HybridState::vacuum(basis), &base).unwrap().state;
    let err = |width: f64| {
        let seq = base.clone().with_width(width);
        let full = evolve_schrodinger(&HybridState::vacuum(basis), &seq, 2, Tolerances::schrodinger()).unwrap();
        (0..=4)
            .map(|n| (fock_probability(&full.state, n).unwrap() - fock_probability(&dec, n).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(5e-3), err(1e-3));
    assert!(coarse < 1e-2, "{coarse}");
    assert!(fine < coarse, "{fine} vs {coarse}");
}

fn small_grid() -> GridSpec {
    GridSpec::uniform(Axis::new(0.0, 13.0, 7), Axis::new(0.0, 1.4, 6))
}

fn opts(cutoff: usize) -> SweepOptions {
    SweepOptions {
        cutoff,
        keep_tensor: true,
        workers: Some(1),
        ..Default::default()
    }
}

#[test]
fn sweep_tensor_matches_direct_evolution() {
    let grid = small_grid();
    let res = sweep_three_pulse(&grid, 2, &opts(30)).unwrap();
    let tensor = res.tensor.as_ref().unwrap();
    assert!(res.argmax_consistent());
    assert!(tensor.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let vac = HybridState::vacuum(FockBasis::new(30));
    for _ in 0..100 {
        let idx = rng.random_range(0..tensor.len());
        let seq = grid.sequence(&res.point(idx)).unwrap();
        let direct = fock_probability(&evolve_decoupled(&vac, &seq).unwrap().state, 2).unwrap();
        assert!((direct - tensor[idx]).abs() < 1e-12, "index {idx}");
    }
}

#[test]
fn sweep_is_deterministic() {
    let grid = small_grid();
    let a = sweep_three_pulse(&grid, 1, &opts(20)).unwrap();
    let b = sweep_three_pulse(&grid, 1, &SweepOptions { workers: None, ..opts(20) }).unwrap();
    let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.tensor.as_ref().unwrap()), bits(b.tensor.as_ref().unwrap()));
}

#[test]
fn finer_grid_never_loses_the_maximum() {
    let coarse = GridSpec::uniform(Axis::new(0.0, 12.0, 5), Axis::new(0.0, 1.2, 4));
    let fine = GridSpec::uniform(Axis::new(0.0, 12.0, 9), Axis::new(0.0, 1.2, 7));
    for n in 1..=3 {
        let a = sweep_three_pulse(&coarse, n, &opts(25)).unwrap().best_probability();
        let b = sweep_three_pulse(&fine, n, &opts(25)).unwrap().best_probability();
        assert!(b >= a - 1e-9, "n = {n}: {b} < {a}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_and_triple_are_inverse(cutoff in 0usize..40, seed in any::<u64>()) {
        let b = FockBasis::new(cutoff);
        let idx = (seed % b.dimension() as u64) as usize;
        let (ni, ns, l) = b.triple_of(idx).unwrap();
        prop_assert_eq!(b.index_of(ni, ns, l).unwrap(), idx);
    }

    #[test]
    fn decoupled_evolution_preserves_norm_and_sector(
        z1 in 0.0f64..1.2, z2 in 0.0f64..1.5, z3 in 0.0f64..1.5,
        t1 in 0.0f64..1.5, t2 in 0.0f64..1.5,
        p2 in -PI..PI,
    ) {
        let seq = PulseSequence::from_gains(&[(z1, 0.0), (z2, p2), (z3, 0.0)], &[t1, t2]).unwrap();
        let out = evolve_decoupled(&HybridState::vacuum(FockBasis::new(40)), &seq).unwrap();
        prop_assert!(out.state.norm_defect().abs() < 1e-10);
        prop_assert!(PairState::from_state(&out.state, 1e-12).is_ok());
        let m = signal_marginal(&out.state);
        let total: f64 = m.probabilities.iter().sum::<f64>() + m.residual;
        prop_assert!((total - 1.0).abs() < 1e-8);
        for n in 0..6 {
            let p = fock_probability(&out.state, n).unwrap();
            prop_assert!(p >= 0.0 && p <= m.get(n) + 1e-15);
        }
    }

    #[test]
    fn jc_flights_compose(theta1 in 0.0f64..3.0, theta2 in 0.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(FockBasis::new(6), &mut rng);
        let both = apply_jc(&apply_jc(&s, JcParams::new(1.0, theta1).unwrap()), JcParams::new(1.0, theta2).unwrap());
        let once = apply_jc(&s, JcParams::new(1.0, theta1 + theta2).unwrap());
        prop_assert!(both.max_abs_diff(&once).unwrap() < 1e-12);
        prop_assert!((both.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn squeezing_conserves_pair_difference(z in 0.0f64..1.0, phi in -PI..PI, d in -3i64..=3) {
        let basis = FockBasis::new(10);
        let (ni, ns) = if d >= 0 { (0, d as usize) } else { ((-d) as usize, 0) };
        let s = HybridState::basis_state(basis, ni, ns, Level::Excited).unwrap();
        let out = SqueezeOperator::new(basis, ParametricGain::new(z, phi).unwrap()).apply(&s).unwrap();
        for (idx, a) in out.amplitudes().iter().enumerate() {
            let (m, n, l) = basis.triple_of(idx).unwrap();
            if n as i64 - m as i64 != d || l != Level::Excited {
                prop_assert!(a.norm() == 0.0);
            }
        }
    }

    #[test]
    fn gain_units_round_trip(db in 0.0f64..15.0) {
        prop_assert!((gain_db(gain_from_db(db).unwrap()) - db).abs() < 1e-12);
    }
}
