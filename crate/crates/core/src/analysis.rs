//! Observables and analytic reference results.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityState, FockBasis, HybridState, Level};

/// Anything with basis-state populations.
pub trait Populations {
    fn basis(&self) -> FockBasis;
    fn population(&self, index: usize) -> f64;
}

impl Populations for HybridState {
    fn basis(&self) -> FockBasis {
        HybridState::basis(self)
    }

    fn population(&self, index: usize) -> f64 {
        self.amplitudes()[index].norm_sqr()
    }
}

impl Populations for DensityState {
    fn basis(&self) -> FockBasis {
        DensityState::basis(self)
    }

    fn population(&self, index: usize) -> f64 {
        DensityState::population(self, index)
    }
}

pub fn basis_population<S: Populations>(
    state: &S,
    n_i: usize,
    n_s: usize,
    level: Level,
) -> Result<f64> {
    Ok(state.population(state.basis().index_of(n_i, n_s, level)?))
}

/// `P(|n,n,g⟩) + P(|n−1,n,e⟩)`; only `|0,0,g⟩` for `n = 0`.
pub fn fock_probability<S: Populations>(state: &S, n: usize) -> Result<f64> {
    let mut p = basis_population(state, n, n, Level::Ground)?;
    if n > 0 {
        p += basis_population(state, n - 1, n, Level::Excited)?;
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalDistribution {
    pub probabilities: Vec<f64>,
    /// `1 − ΣP`: weight missing from the truncated basis.
    pub residual: f64,
}

impl SignalDistribution {
    pub fn get(&self, n: usize) -> f64 {
        self.probabilities.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }
}

/// Signal-mode photon statistics with the idler and the emitter traced out.
pub fn signal_marginal<S: Populations>(state: &S) -> SignalDistribution {
    let basis = state.basis();
    let mut probabilities = vec![0.0; basis.levels()];
    for level in Level::ALL {
        for n_i in 0..=basis.cutoff() {
            for (n_s, p) in probabilities.iter_mut().enumerate() {
                *p += state.population(basis.index_unchecked(n_i, n_s, level));
            }
        }
    }
    let total: f64 = probabilities.iter().sum();
    SignalDistribution {
        probabilities,
        residual: 1.0 - total,
    }
}

/// Mean idler and signal photon numbers.
pub fn mean_photons<S: Populations>(state: &S) -> (f64, f64) {
    let basis = state.basis();
    let (mut ni, mut ns) = (0.0, 0.0);
    for idx in 0..basis.dimension() {
        let (a, b, _) = basis.triple_unchecked(idx);
        let p = state.population(idx);
        ni += a as f64 * p;
        ns += b as f64 * p;
    }
    (ni, ns)
}

pub const PHASE_THRESHOLD: f64 = 1e-12;

/// `arg⟨n,n,g|ψ⟩ − arg⟨0,0,g|ψ⟩`, wrapped to `(−π, π]`.
pub fn relative_phase(state: &HybridState, n: usize) -> Result<f64> {
    let reference = state.amplitude(0, 0, Level::Ground)?;
    if reference.norm() <= PHASE_THRESHOLD {
        return Err(Error::UndefinedPhase {
            n: 0,
            magnitude: reference.norm(),
        });
    }
    let target = state.amplitude(n, n, Level::Ground)?;
    if target.norm() <= PHASE_THRESHOLD {
        return Err(Error::UndefinedPhase {
            n,
            magnitude: target.norm(),
        });
    }
    Ok(crate::squeeze::wrap_phase(target.arg() - reference.arg()))
}

/// `ζ[dB] = −10 log₁₀ e^{−2ζ}`
pub fn gain_db(zeta: f64) -> f64 {
    20.0 * zeta / LN_10
}

pub fn gain_from_db(db: f64) -> Result<f64> {
    if !(db.is_finite() && db >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gain in dB must be finite and non-negative, got {db}"
        )));
    }
    Ok(db * LN_10 / 20.0)
}

/// Single-pair probability after the idealised two-pulse phase-flip
/// sequence: `4 tanh²ζ / cosh⁴ζ`.
pub fn phase_flip_bound(zeta: f64) -> f64 {
    4.0 * zeta.tanh().powi(2) / zeta.cosh().powi(4)
}

/// `|⟨n,n|TMSV(ζ)⟩|² = tanh^{2n}ζ / cosh²ζ`
pub fn tmsv_pair_probability(zeta: f64, n: usize) -> f64 {
    zeta.tanh().powi(2 * n as i32) / zeta.cosh().powi(2)
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

pub const ZETA_TOLERANCE: f64 = 1e-8;

/// Maximum over ζ of `|⟨n,n|TMSV(ζ)⟩|²`, located numerically.
pub fn tmsv_max_pair_probability(n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "pair probability maximum needs n ≥ 1".into(),
        ));
    }
    Ok(golden_section_max(
        |z| tmsv_pair_probability(z, n),
        0.0,
        6.0,
        ZETA_TOLERANCE,
    ))
}

/// `nⁿ / (n+1)ⁿ⁺¹`
pub fn tmsv_max_closed_form(n: usize) -> f64 {
    let n = n as f64;
    (n / (n + 1.0)).powf(n) / (n + 1.0)
}

pub fn phase_flip_optimum() -> (f64, f64) {
    golden_section_max(phase_flip_bound, 0.0, 3.0, ZETA_TOLERANCE)
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Emitter free-space decay rate Γ₀ [1/s].
    pub emitter_decay: f64,
    /// Emitter / idler wavelength λ₀ [m].
    pub wavelength: f64,
    /// Cavity mode volume V [m³].
    pub mode_volume: f64,
    /// Cavity quality factor.
    pub quality_factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalEstimates {
    /// Ω = √(3cΓ₀λ₀²/(2πV)) [1/s]
    pub rabi_frequency: f64,
    /// γ_c = 2πc/(λ₀Q) [1/s]
    pub cavity_decay: f64,
    /// F = (3/4π²)·Q/(V/λ₀³)
    pub purcell_factor: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.emitter_decay,
            self.wavelength,
            self.mode_volume,
            self.quality_factor,
        ];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "physical parameters must be positive: {self:?}"
            )))
        }
    }
}

pub fn rabi_frequency(emitter_decay: f64, wavelength: f64, mode_volume: f64) -> f64 {
    (3.0 * SPEED_OF_LIGHT * emitter_decay * wavelength.powi(2) / (2.0 * PI * mode_volume)).sqrt()
}

/// `Q = 2πc/(λ₀γ_c)`; inverse of the decay-rate relation.
pub fn quality_factor(wavelength: f64, cavity_decay: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (wavelength * cavity_decay)
}

pub fn purcell_factor(quality_factor: f64, mode_volume: f64, wavelength: f64) -> f64 {
    3.0 / (4.0 * PI * PI) * quality_factor / (mode_volume / wavelength.powi(3))
}

pub fn physical_estimators(p: &PhysicalParams) -> Result<PhysicalEstimates> {
    p.validate()?;
    Ok(PhysicalEstimates {
        rabi_frequency: rabi_frequency(p.emitter_decay, p.wavelength, p.mode_volume),
        cavity_decay: 2.0 * PI * SPEED_OF_LIGHT / (p.wavelength * p.quality_factor),
        purcell_factor: purcell_factor(p.quality_factor, p.mode_volume, p.wavelength),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::make_basis;
    use num_complex::Complex64 as C64;

    #[test]
    fn fock_probability_of_basis_states() {
        let b = make_basis(4);
        let s = HybridState::basis_state(b, 1, 1, Level::Ground).unwrap();
        assert_eq!(fock_probability(&s, 1).unwrap(), 1.0);
        assert_eq!(fock_probability(&s, 0).unwrap(), 0.0);
        assert!(fock_probability(&s, 5).is_err());
        let v = HybridState::vacuum(b);
        assert_eq!(fock_probability(&v, 0).unwrap(), 1.0);
        assert_eq!(signal_marginal(&v).get(0), 1.0);
    }

    #[test]
    fn superposition_with_excited_partner() {
        let b = make_basis(3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![C64::new(0.0, 0.0); b.dimension()];
        amps[b.index_of(1, 1, Level::Ground).unwrap()] = C64::new(h, 0.0);
        amps[b.index_of(0, 1, Level::Excited).unwrap()] = C64::new(0.0, h);
        let s = HybridState::from_amplitudes(b, amps).unwrap();
        assert!((signal_marginal(&s).get(1) - 1.0).abs() < 1e-15);
        assert!((fock_probability(&s, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_phase_of_vacuum_is_undefined() {
        let v = HybridState::vacuum(make_basis(3));
        assert!(matches!(
            relative_phase(&v, 1),
            Err(Error::UndefinedPhase { n: 1, .. })
        ));
    }

    #[test]
    fn decibel_conversion() {
        assert_eq!(gain_db(0.0), 0.0);
        assert!((gain_db(0.66) - 5.73).abs() < 5e-3);
        assert!((gain_from_db(15.0).unwrap() - 1.7269).abs() < 1e-4);
        assert!(gain_from_db(-1.0).is_err());
        for z in [0.0, 0.1, 0.58, 1.7] {
            assert!((gain_from_db(gain_db(z)).unwrap() - z).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_flip_values() {
        assert_eq!(phase_flip_bound(0.0), 0.0);
        let expected = 4.0 * 0.66f64.tanh().powi(2) / 0.66f64.cosh().powi(4);
        assert!((phase_flip_bound(0.66) - expected).abs() < 1e-15);
        assert!((phase_flip_bound(0.66) - 0.5926).abs() < 1e-3);
    }

    #[test]
    fn tmsv_maxima_low_orders() {
        let (z, p) = tmsv_max_pair_probability(1).unwrap();
        assert!((p - 0.25).abs() < 1e-12);
        assert!((z.tanh().powi(2) - 0.5).abs() < 1e-7);
        assert!((z - 0.5f64.sqrt().atanh()).abs() < 1e-7);
        let (_, p2) = tmsv_max_pair_probability(2).unwrap();
        assert!((p2 - 4.0 / 27.0).abs() < 1e-12);
        assert!(tmsv_max_pair_probability(0).is_err());
    }

    #[test]
    fn tmsv_maxima_approach_inverse_en() {
        let n = 400;
        let p = tmsv_max_closed_form(n);
        let asym = 1.0 / (std::f64::consts::E * n as f64);
        assert!((p - asym).abs() / asym < 5e-3);
    }

    #[test]
    fn physical_estimates_match_reported_orders() {
        let lambda = 600e-9;
        let v = 10.0 * lambda * lambda * lambda;
        let omega = rabi_frequency(1e9, lambda, v);
        assert!((omega - 1.6e11).abs() / 1.6e11 < 0.05, "Ω = {omega:e}");
        let f = purcell_factor(6.5e5, v, lambda);
        assert!((f - 5e3).abs() / 5e3 < 0.05, "F = {f:e}");
        let q = quality_factor(lambda, 0.001 * omega);
        assert!((q - 1.9e7).abs() / 1.9e7 < 0.10, "Q = {q:e}");
        let est = physical_estimators(&PhysicalParams {
            emitter_decay: 1e9,
            wavelength: lambda,
            mode_volume: v,
            quality_factor: q,
        })
        .unwrap();
        assert!((est.cavity_decay - 0.001 * omega).abs() / (0.001 * omega) < 1e-12);
        assert!(physical_estimators(&PhysicalParams {
            emitter_decay: -1.0,
            wavelength: lambda,
            mode_volume: v,
            quality_factor: 1.0,
        })
        .is_err());
    }
}
