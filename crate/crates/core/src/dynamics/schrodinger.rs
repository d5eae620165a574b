//! Time-dependent Schrödinger integration with finite-width pump pulses.

use super::hamiltonian::{apply_minus_i_h, full_generators};
use super::integrator::integrate;
use super::trajectory::uniform_grid;
use super::{
    IntegrationStats, ObservableSet, PulseSequence, RunMetadata, Tolerances, Trajectory,
    DEFAULT_SAMPLES,
};
use crate::error::Result;
use crate::hilbert::HybridState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchrodingerOptions {
    pub samples: usize,
    pub tolerances: Tolerances,
    pub observables: ObservableSet,
}

impl Default for SchrodingerOptions {
    fn default() -> Self {
        SchrodingerOptions {
            samples: DEFAULT_SAMPLES,
            tolerances: Tolerances::schrodinger(),
            observables: ObservableSet::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchrodingerOutcome {
    pub trajectory: Trajectory,
    pub state: HybridState,
    pub stats: IntegrationStats,
    pub tolerances: Tolerances,
    pub max_leakage: f64,
}

impl SchrodingerOutcome {
    pub fn metadata(&self, seq: &PulseSequence) -> RunMetadata {
        RunMetadata {
            mode: "schrodinger".into(),
            cutoff: self.state.basis().cutoff(),
            sequence: seq.clone(),
            noise: None,
            tolerances: Some(self.tolerances),
            max_leakage: self.max_leakage,
            stats: Some(self.stats),
            flags: Vec::new(),
        }
    }
}

pub fn evolve_schrodinger(
    initial: &HybridState,
    seq: &PulseSequence,
    samples: usize,
    tol: Tolerances,
) -> Result<SchrodingerOutcome> {
    evolve_schrodinger_with(
        initial,
        seq,
        SchrodingerOptions {
            samples,
            tolerances: tol,
            ..Default::default()
        },
    )
}

pub fn evolve_schrodinger_with(
    initial: &HybridState,
    seq: &PulseSequence,
    opts: SchrodingerOptions,
) -> Result<SchrodingerOutcome> {
    seq.validate()?;
    let basis = initial.basis();
    let gens = full_generators(basis);
    let centers = seq.centers();
    let g = seq.jc_coupling();
    let (t0, t1) = seq.timeline();
    let grid = uniform_grid(t0, t1, opts.samples);
    let set = opts.observables;
    let mut traj = Trajectory::new(set.names(basis, true), centers.clone());
    let mut max_leakage: f64 = 0.0;

    let mut y = initial.amplitudes().to_vec();
    let stats = integrate(
        |t, x, dx| apply_minus_i_h(&gens, seq.drive(t, &centers), g, x, dx),
        &mut y,
        t0,
        t1,
        &grid,
        &seq.windows(),
        opts.tolerances,
        |_, t, y| {
            let norm: f64 = y.iter().map(|z| z.norm_sqr()).sum();
            let row = set.evaluate(basis, |i| y[i].norm_sqr(), Some(y), norm);
            max_leakage = max_leakage.max(*row.last().unwrap());
            traj.push(t, row);
            Ok(())
        },
    )?;
    let state = HybridState::from_amplitudes(basis, y)?;
    max_leakage = max_leakage.max(state.edge_population() + state.norm_defect());
    Ok(SchrodingerOutcome {
        trajectory: traj,
        state,
        stats,
        tolerances: opts.tolerances,
        max_leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::make_basis;
    use crate::squeeze::{tmsv_amplitude, ParametricGain};

    #[test]
    fn single_pulse_without_emitter_is_tmsv() {
        let b = make_basis(16);
        let seq = PulseSequence::from_gains(&[(0.58, 0.0)], &[]).unwrap().with_rabi(0.0);
        let out = evolve_schrodinger(&HybridState::vacuum(b), &seq, 50, Tolerances::schrodinger())
            .unwrap();
        let r = ParametricGain::real(0.58).unwrap();
        for n in 0..8 {
            let a = out.state.amplitude(n, n, crate::hilbert::Level::Ground).unwrap();
            assert!((a - tmsv_amplitude(r, n)).norm() < 1e-6, "n={n}: {a}");
        }
        let norm = out.trajectory.column("norm").unwrap();
        assert!(norm.iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert_eq!(out.trajectory.len(), 50);
    }
}
