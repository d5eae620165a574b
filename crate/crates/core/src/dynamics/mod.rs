//! Pulse sequences and the three propagators: decoupled (instantaneous
//! pulses between exact Jaynes–Cummings flights), full time-dependent
//! Schrödinger integration, and Lindblad integration with cavity loss and
//! emitter dephasing.
//!
//! Units are dimensionless: time is measured in single-photon Rabi periods
//! `2π/Ω` of the reference emitter, rates in units of `Ω`, and the nonlinear
//! coupling Γ defaults to 1.

mod decoupled;
mod hamiltonian;
pub mod integrator;
mod lindblad;
mod schrodinger;
mod trajectory;

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jc::JcParams;
use crate::squeeze::ParametricGain;

pub use decoupled::{
    evolve_decoupled, evolve_decoupled_with, sample_decoupled, DecoupledFlag, DecoupledOptions,
    DecoupledOutcome,
};
pub use hamiltonian::SparseMatrix;
pub use integrator::{IntegrationStats, Tolerances};
pub use lindblad::{evolve_lindblad, DEFAULT_MAX_ENTRIES, evolve_lindblad_with, LindbladOptions, LindbladOutcome};
pub use schrodinger::{evolve_schrodinger, evolve_schrodinger_with, SchrodingerOptions, SchrodingerOutcome};
pub use trajectory::{Column, ObservableSet, RunMetadata, Trajectory, SCHEMA_VERSION};

/// Pump width used throughout, in units of `2π/Ω`.
pub const DEFAULT_WIDTH: f64 = 5e-3;

/// Half-span of a pulse window, in widths.
pub const PULSE_HALF_SPAN: f64 = 8.0;

/// Minimum separation of pulse centers, in widths.
pub const MIN_SEPARATION: f64 = 6.0;

/// Minimum integrator steps per pulse width.
pub const STEPS_PER_WIDTH: f64 = 20.0;

pub const DEFAULT_SAMPLES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpPulse {
    pub gain: ParametricGain,
    /// Free flight preceding this pulse (center to center).
    pub delay_before: f64,
    /// Gaussian standard deviation τ.
    pub width: f64,
    /// Nonlinear coupling constant Γ.
    #[serde(default = "unit")]
    pub coupling: f64,
}

fn unit() -> f64 {
    1.0
}

impl PumpPulse {
    pub fn new(gain: ParametricGain, delay_before: f64) -> Self {
        PumpPulse {
            gain,
            delay_before,
            width: DEFAULT_WIDTH,
            coupling: 1.0,
        }
    }

    pub fn with_width(mut self, width: f64) -> Self {
        self.width = width;
        self
    }

    fn validate(&self, j: usize) -> Result<()> {
        let ok = self.delay_before.is_finite()
            && self.delay_before >= 0.0
            && self.width.is_finite()
            && self.width > 0.0
            && self.coupling.is_finite()
            && self.coupling > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "pulse {j}: delay ≥ 0, width > 0 and Γ > 0 required, got {self:?}"
            )))
        }
    }
}

/// Complex envelope `𝓔(t)` normalised so that `Γ∫𝓔 dt = ζ e^{iφ}`.
pub fn pump_envelope(p: &PumpPulse, t: f64, center: f64) -> C64 {
    let z = p.gain.magnitude();
    if z == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let x = (t - center) / p.width;
    let amp = z / (p.coupling * (2.0 * PI).sqrt() * p.width) * (-0.5 * x * x).exp();
    C64::from_polar(amp, p.gain.phase())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub pulses: Vec<PumpPulse>,
    /// Rabi frequency relative to the reference emitter; 0 removes the
    /// emitter coupling.
    #[serde(default = "unit")]
    pub rabi: f64,
    /// Flight after the last pulse.
    #[serde(default)]
    pub final_flight: f64,
}

impl Default for PulseSequence {
    fn default() -> Self {
        PulseSequence::empty()
    }
}

impl PulseSequence {
    pub fn empty() -> Self {
        PulseSequence {
            pulses: Vec::new(),
            rabi: 1.0,
            final_flight: 0.0,
        }
    }

    pub fn new(pulses: Vec<PumpPulse>) -> Self {
        PulseSequence {
            pulses,
            ..PulseSequence::empty()
        }
    }

    /// Pulses of gains `(ζ_j, φ_j)` with flights `delays[j]` between pulse
    /// `j` and `j+1`; the first pulse fires at t = 0.
    pub fn from_gains(gains: &[(f64, f64)], delays: &[f64]) -> Result<Self> {
        if delays.len() + 1 != gains.len() && !(gains.is_empty() && delays.is_empty()) {
            return Err(Error::InvalidParameter(format!(
                "{} gains need {} delays, got {}",
                gains.len(),
                gains.len().saturating_sub(1),
                delays.len()
            )));
        }
        let mut pulses = Vec::with_capacity(gains.len());
        for (j, &(z, phi)) in gains.iter().enumerate() {
            let delay = if j == 0 { 0.0 } else { delays[j - 1] };
            pulses.push(PumpPulse::new(ParametricGain::new(z, phi)?, delay));
        }
        Ok(PulseSequence::new(pulses))
    }

    pub fn with_rabi(mut self, rabi: f64) -> Self {
        self.rabi = rabi;
        self
    }

    pub fn with_final_flight(mut self, t: f64) -> Self {
        self.final_flight = t;
        self
    }

    pub fn with_width(mut self, width: f64) -> Self {
        for p in &mut self.pulses {
            p.width = width;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (j, p) in self.pulses.iter().enumerate() {
            p.validate(j)?;
        }
        if !(self.rabi.is_finite() && self.rabi >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "relative Rabi frequency must be ≥ 0, got {}",
                self.rabi
            )));
        }
        if !(self.final_flight.is_finite() && self.final_flight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "final flight must be ≥ 0, got {}",
                self.final_flight
            )));
        }
        Ok(())
    }

    /// Pulse center times, measured from the start of the first flight.
    pub fn centers(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.pulses
            .iter()
            .map(|p| {
                t += p.delay_before;
                t
            })
            .collect()
    }

    /// Indices `j` where pulses `j` and `j+1` are closer than six widths.
    pub fn overlapping_pairs(&self) -> Vec<usize> {
        let c = self.centers();
        (1..self.pulses.len())
            .filter(|&j| {
                let w = self.pulses[j].width.max(self.pulses[j - 1].width);
                c[j] - c[j - 1] < MIN_SEPARATION * w
            })
            .map(|j| j - 1)
            .collect()
    }

    /// Coefficient `g` of `a_i σ†` per unit time: half the Rabi frequency,
    /// i.e. π per period.
    pub fn jc_coupling(&self) -> f64 {
        PI * self.rabi
    }

    pub fn flight(&self, duration: f64) -> Result<JcParams> {
        JcParams::new(self.jc_coupling(), duration)
    }

    /// Sum of `Γ_j 𝓔_j(t)`.
    pub fn drive(&self, t: f64, centers: &[f64]) -> C64 {
        self.pulses
            .iter()
            .zip(centers)
            .filter(|(p, c)| (t - **c).abs() <= 12.0 * p.width)
            .map(|(p, c)| pump_envelope(p, t, *c) * p.coupling)
            .sum()
    }

    /// Time span covered by the continuous integrators: first pulse tail to
    /// the later of the final flight and the last pulse tail.
    pub fn timeline(&self) -> (f64, f64) {
        let centers = self.centers();
        let mut start: f64 = 0.0;
        let mut end = centers.last().copied().unwrap_or(0.0) + self.final_flight;
        for (p, c) in self.pulses.iter().zip(&centers) {
            start = start.min(c - PULSE_HALF_SPAN * p.width);
            end = end.max(c + PULSE_HALF_SPAN * p.width);
        }
        (start, end)
    }

    /// Time at which the decoupled propagator stops.
    pub fn decoupled_end(&self) -> f64 {
        self.centers().last().copied().unwrap_or(0.0) + self.final_flight
    }

    /// Sum of all flights.
    pub fn total_delay(&self) -> f64 {
        self.pulses.iter().map(|p| p.delay_before).sum::<f64>() + self.final_flight
    }

    pub(crate) fn windows(&self) -> Vec<integrator::Window> {
        self.pulses
            .iter()
            .zip(self.centers())
            .filter(|(p, _)| p.gain.magnitude() > 0.0)
            .map(|(p, c)| integrator::Window {
                start: c - PULSE_HALF_SPAN * p.width,
                end: c + PULSE_HALF_SPAN * p.width,
                max_step: p.width / STEPS_PER_WIDTH,
            })
            .collect()
    }
}

/// Cavity loss (both modes) and pure emitter dephasing, in units of `Ω`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub cavity_decay: f64,
    pub dephasing: f64,
}

impl NoiseParams {
    pub fn none() -> Self {
        NoiseParams::default()
    }

    pub fn cavity(gamma: f64) -> Self {
        NoiseParams {
            cavity_decay: gamma,
            dephasing: 0.0,
        }
    }

    pub fn dephasing(gamma: f64) -> Self {
        NoiseParams {
            cavity_decay: 0.0,
            dephasing: gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.cavity_decay, self.dephasing]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("noise rates must be ≥ 0: {self:?}")))
        }
    }

    /// `(γ_c, γ_d)` per unit of the period `2π/Ω`.
    pub fn rates_per_period(&self) -> (f64, f64) {
        (2.0 * PI * self.cavity_decay, 2.0 * PI * self.dephasing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> C64, a: f64, b: f64, n: usize) -> C64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += f(a + k as f64 * h) * w;
        }
        s * (h / 3.0)
    }

    #[test]
    fn envelope_peak_and_area() {
        let p = PumpPulse::new(ParametricGain::new(0.58, 0.7).unwrap(), 0.0);
        let peak = pump_envelope(&p, 1.0, 1.0);
        let expected = 0.58 / ((2.0 * PI).sqrt() * p.width);
        assert!((peak.norm() - expected).abs() < 1e-12);
        assert!((peak.arg() - 0.7).abs() < 1e-12);
        let tau = p.width;
        let area = simpson(|t| pump_envelope(&p, t, 0.0) * p.coupling, -8.0 * tau, 8.0 * tau, 4000);
        assert!((area - p.gain.value()).norm() < 1e-10, "{area}");
    }

    #[test]
    fn zero_gain_envelope_vanishes() {
        let p = PumpPulse::new(ParametricGain::zero(), 0.0);
        for t in [-1.0, 0.0, 1e-3] {
            assert_eq!(pump_envelope(&p, t, 0.0), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn centers_and_overlap() {
        let seq = PulseSequence::from_gains(&[(0.5, 0.0), (0.5, PI), (0.2, 0.0)], &[0.59, 0.01])
            .unwrap();
        assert_eq!(seq.centers(), vec![0.0, 0.59, 0.6]);
        assert_eq!(seq.overlapping_pairs(), vec![1]);
        let (start, end) = seq.timeline();
        assert!((start + 8.0 * DEFAULT_WIDTH).abs() < 1e-15);
        assert!((end - 0.6 - 8.0 * DEFAULT_WIDTH).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut seq = PulseSequence::from_gains(&[(0.5, 0.0)], &[]).unwrap();
        assert!(seq.validate().is_ok());
        seq.pulses[0].width = 0.0;
        assert!(seq.validate().is_err());
        assert!(PulseSequence::from_gains(&[(0.5, 0.0)], &[1.0]).is_err());
        assert!(NoiseParams::cavity(-0.1).validate().is_err());
    }
}
