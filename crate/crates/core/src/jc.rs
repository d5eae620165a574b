//! Resonant Jaynes–Cummings free flight between pulses.
//!
//! `exp[g T (a_i σ† − a_i† σ)]` rotates every doublet
//! `{|n, n_s, g⟩, |n−1, n_s, e⟩}` by the angle `√n g T`:
//!
//! ```text
//! |n,g⟩   → cos θ |n,g⟩ + sin θ |n−1,e⟩
//! |n−1,e⟩ → −sin θ |n,g⟩ + cos θ |n−1,e⟩
//! ```
//!
//! `g` is the coefficient of `a_i σ†` in the interaction Hamiltonian, i.e.
//! half the single-photon Rabi frequency.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{FockBasis, HybridState, Level};
use crate::linalg::expm;

/// Largest cutoff the dense oracle accepts.
pub const ORACLE_MAX_CUTOFF: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JcParams {
    coupling: f64,
    duration: f64,
}

impl JcParams {
    pub fn new(coupling: f64, duration: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "JC coupling must be finite and non-negative, got {coupling}"
            )));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "flight duration must be finite and non-negative, got {duration}"
            )));
        }
        Ok(JcParams { coupling, duration })
    }

    /// Flight for `periods` single-photon Rabi periods `2π/Ω` at relative
    /// Rabi frequency `rabi` (1 = reference emitter, 0 = no emitter).
    pub fn from_periods(rabi: f64, periods: f64) -> Result<Self> {
        JcParams::new(std::f64::consts::PI * rabi, periods)
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Rotation angle of the doublet with `n` idler photons in the ground
    /// component.
    pub fn angle(&self, n: usize) -> f64 {
        (n as f64).sqrt() * self.coupling * self.duration
    }
}

pub fn apply_jc(state: &HybridState, p: JcParams) -> HybridState {
    let mut out = state.clone();
    apply_jc_in_place(&mut out, p);
    out
}

pub fn apply_jc_in_place(state: &mut HybridState, p: JcParams) {
    let theta0 = p.coupling * p.duration;
    if theta0 == 0.0 {
        return;
    }
    let basis = state.basis();
    let amps = state.amplitudes_mut();
    for n in 1..=basis.cutoff() {
        let (s, c) = ((n as f64).sqrt() * theta0).sin_cos();
        for n_s in 0..=basis.cutoff() {
            let ig = basis.index_unchecked(n, n_s, Level::Ground);
            let ie = basis.index_unchecked(n - 1, n_s, Level::Excited);
            let (g, e) = (amps[ig], amps[ie]);
            amps[ig] = g * c - e * s;
            amps[ie] = g * s + e * c;
        }
    }
}

/// `a_i σ† − a_i† σ` on the full composite basis.
pub fn jc_generator(basis: FockBasis) -> DMatrix<C64> {
    let dim = basis.dimension();
    let mut g = DMatrix::zeros(dim, dim);
    for n in 1..=basis.cutoff() {
        let amp = (n as f64).sqrt();
        for n_s in 0..=basis.cutoff() {
            let ig = basis.index_unchecked(n, n_s, Level::Ground);
            let ie = basis.index_unchecked(n - 1, n_s, Level::Excited);
            g[(ie, ig)] += C64::new(amp, 0.0);
            g[(ig, ie)] -= C64::new(amp, 0.0);
        }
    }
    g
}

/// Brute-force reference: dense exponential of the full generator.
pub fn jc_oracle(state: &HybridState, p: JcParams) -> Result<HybridState> {
    let basis = state.basis();
    if basis.cutoff() > ORACLE_MAX_CUTOFF {
        return Err(Error::BasisTooLarge {
            cutoff: basis.cutoff(),
            limit: ORACLE_MAX_CUTOFF,
        });
    }
    let u = expm(&(jc_generator(basis) * C64::new(p.coupling * p.duration, 0.0)));
    let v = nalgebra::DVector::from_column_slice(state.amplitudes());
    HybridState::from_amplitudes(basis, (u * v).iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::make_basis;
    use std::f64::consts::PI;

    fn rotate(theta: f64) -> JcParams {
        JcParams::new(1.0, theta).unwrap()
    }

    #[test]
    fn single_pair_swaps_into_excited_state() {
        let b = make_basis(4);
        let s = HybridState::basis_state(b, 1, 1, Level::Ground).unwrap();
        let out = apply_jc(&s, rotate(PI / 2.0));
        assert!((out.amplitude(0, 1, Level::Excited).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(out.amplitude(1, 1, Level::Ground).unwrap().norm() < 1e-15);
    }

    #[test]
    fn vacuum_is_stationary() {
        let v = HybridState::vacuum(make_basis(5));
        assert_eq!(apply_jc(&v, rotate(3.7)), v);
    }

    #[test]
    fn four_pairs_pick_up_a_sign() {
        let b = make_basis(6);
        let s = HybridState::basis_state(b, 4, 4, Level::Ground).unwrap();
        let out = apply_jc(&s, rotate(PI / 2.0));
        assert!((out.amplitude(4, 4, Level::Ground).unwrap() + C64::new(1.0, 0.0)).norm() < 1e-14);
        let oracle = jc_oracle(&s, rotate(PI / 2.0)).unwrap();
        assert!(out.max_abs_diff(&oracle).unwrap() < 1e-10);
    }

    #[test]
    fn two_photon_doublet_quarter_turn() {
        let b = make_basis(4);
        let s = HybridState::basis_state(b, 2, 0, Level::Ground).unwrap();
        let t = PI / (2.0 * 2f64.sqrt());
        let oracle = jc_oracle(&s, rotate(t)).unwrap();
        assert!((oracle.amplitude(1, 0, Level::Excited).unwrap().norm() - 1.0).abs() < 1e-10);
        assert!(apply_jc(&s, rotate(t)).max_abs_diff(&oracle).unwrap() < 1e-10);
    }

    #[test]
    fn zero_duration_is_identity() {
        let b = make_basis(3);
        let s = HybridState::basis_state(b, 2, 1, Level::Excited).unwrap();
        assert_eq!(jc_oracle(&s, rotate(0.0)).unwrap().max_abs_diff(&s).unwrap(), 0.0);
    }

    #[test]
    fn oracle_refuses_large_basis() {
        let s = HybridState::vacuum(make_basis(13));
        assert!(matches!(
            jc_oracle(&s, rotate(1.0)),
            Err(Error::BasisTooLarge { .. })
        ));
    }

    #[test]
    fn rejects_negative_duration() {
        assert!(JcParams::new(1.0, -1.0).is_err());
        assert!(JcParams::new(-1.0, 1.0).is_err());
    }
}
