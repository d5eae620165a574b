//! Instantaneous pulses separated by exact Jaynes–Cummings flights.

use serde::{Deserialize, Serialize};

use super::trajectory::uniform_grid;
use super::{ObservableSet, PulseSequence, Trajectory};
use crate::error::Result;
use crate::hilbert::HybridState;
use crate::jc::apply_jc_in_place;
use crate::squeeze::SqueezeCache;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoupledOptions {
    /// Leakage (edge population plus norm defect) above which the result is
    /// flagged.
    pub leakage_threshold: f64,
}

impl Default for DecoupledOptions {
    fn default() -> Self {
        DecoupledOptions {
            leakage_threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoupledFlag {
    /// Pulses `first` and `first + 1` are closer than six widths.
    PulsesOverlap { first: usize },
    Leakage { pulse: usize, leakage: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoupledOutcome {
    pub state: HybridState,
    /// Cumulative leakage right after each pulse.
    pub leakage_after_pulse: Vec<f64>,
    pub flags: Vec<DecoupledFlag>,
}

impl DecoupledOutcome {
    pub fn leakage(&self) -> f64 {
        self.state.edge_population() + self.state.norm_defect()
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

pub fn evolve_decoupled(initial: &HybridState, seq: &PulseSequence) -> Result<DecoupledOutcome> {
    evolve_decoupled_with(initial, seq, DecoupledOptions::default())
}

struct Walker<'a> {
    seq: &'a PulseSequence,
    centers: Vec<f64>,
    state: HybridState,
    time: f64,
    next_pulse: usize,
    leakage: Vec<f64>,
    flags: Vec<DecoupledFlag>,
    opts: DecoupledOptions,
}

impl<'a> Walker<'a> {
    fn new(initial: &HybridState, seq: &'a PulseSequence, opts: DecoupledOptions) -> Result<Self> {
        seq.validate()?;
        let flags = seq
            .overlapping_pairs()
            .into_iter()
            .map(|first| DecoupledFlag::PulsesOverlap { first })
            .collect();
        Ok(Walker {
            seq,
            centers: seq.centers(),
            state: initial.clone(),
            time: 0.0,
            next_pulse: 0,
            leakage: Vec::with_capacity(seq.pulses.len()),
            flags,
            opts,
        })
    }

    fn fly_to(&mut self, t: f64) -> Result<()> {
        if t > self.time {
            apply_jc_in_place(&mut self.state, self.seq.flight(t - self.time)?);
            self.time = t;
        }
        Ok(())
    }

    /// Advances to `t`, firing every pulse centered at or before it.
    fn advance(&mut self, t: f64) -> Result<()> {
        while self.next_pulse < self.centers.len() && self.centers[self.next_pulse] <= t {
            let j = self.next_pulse;
            self.fly_to(self.centers[j])?;
            let p = &self.seq.pulses[j];
            if p.gain.magnitude() > 0.0 {
                let op = SqueezeCache::global().get(self.state.basis(), p.gain);
                op.apply_in_place(&mut self.state)?;
            }
            let leak = self.state.edge_population() + self.state.norm_defect();
            if leak > self.opts.leakage_threshold {
                self.flags.push(DecoupledFlag::Leakage { pulse: j, leakage: leak });
            }
            self.leakage.push(leak);
            self.next_pulse += 1;
        }
        self.fly_to(t)
    }

    fn finish(self) -> DecoupledOutcome {
        DecoupledOutcome {
            state: self.state,
            leakage_after_pulse: self.leakage,
            flags: self.flags,
        }
    }
}

pub fn evolve_decoupled_with(
    initial: &HybridState,
    seq: &PulseSequence,
    opts: DecoupledOptions,
) -> Result<DecoupledOutcome> {
    let mut w = Walker::new(initial, seq, opts)?;
    w.advance(seq.decoupled_end())?;
    Ok(w.finish())
}

/// Decoupled evolution sampled on a uniform grid over `[0, end]`. A sample
/// that coincides with a pulse center sees the state after the pulse.
pub fn sample_decoupled(
    initial: &HybridState,
    seq: &PulseSequence,
    samples: usize,
    observables: ObservableSet,
    opts: DecoupledOptions,
) -> Result<(Trajectory, DecoupledOutcome)> {
    let mut w = Walker::new(initial, seq, opts)?;
    let basis = initial.basis();
    let mut traj = Trajectory::new(observables.names(basis, true), w.centers.clone());
    for t in uniform_grid(0.0, seq.decoupled_end(), samples) {
        w.advance(t)?;
        let a = w.state.amplitudes();
        let row = observables.evaluate(basis, |i| a[i].norm_sqr(), Some(a), w.state.norm_sqr());
        traj.push(t, row);
    }
    w.advance(seq.decoupled_end())?;
    Ok((traj, w.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fock_probability;
    use crate::hilbert::make_basis;
    use crate::squeeze::apply_squeeze;
    use std::f64::consts::PI;

    #[test]
    fn empty_sequence_is_identity() {
        let v = HybridState::vacuum(make_basis(8));
        let out = evolve_decoupled(&v, &PulseSequence::empty()).unwrap();
        assert_eq!(out.state, v);
        assert!(!out.is_flagged());
    }

    #[test]
    fn opposite_pulses_without_emitter_cancel() {
        let b = make_basis(30);
        let seq = PulseSequence::from_gains(&[(0.58, 0.0), (0.58, PI)], &[0.59])
            .unwrap()
            .with_rabi(0.0);
        let out = evolve_decoupled(&HybridState::vacuum(b), &seq).unwrap();
        let v = HybridState::vacuum(b);
        assert!(out.state.max_abs_diff(&v).unwrap() < 1e-8);
    }

    #[test]
    fn single_pulse_equals_squeeze() {
        let b = make_basis(20);
        let seq = PulseSequence::from_gains(&[(0.4, 0.3)], &[]).unwrap();
        let v = HybridState::vacuum(b);
        let out = evolve_decoupled(&v, &seq).unwrap();
        let direct = apply_squeeze(&v, seq.pulses[0].gain).unwrap();
        assert!(out.state.max_abs_diff(&direct).unwrap() < 1e-14);
    }

    #[test]
    fn blockade_pair_reaches_one_half() {
        let b = make_basis(30);
        let seq = PulseSequence::from_gains(&[(0.58, 0.0), (0.58, PI)], &[0.59]).unwrap();
        let out = evolve_decoupled(&HybridState::vacuum(b), &seq).unwrap();
        let p = fock_probability(&out.state, 1).unwrap();
        assert!((p - 0.5).abs() < 0.05, "{p}");
    }

    #[test]
    fn overlap_and_leakage_are_flagged() {
        let b = make_basis(6);
        let seq = PulseSequence::from_gains(&[(1.5, 0.0), (0.1, 0.0)], &[0.001]).unwrap();
        let out = evolve_decoupled(&HybridState::vacuum(b), &seq).unwrap();
        assert!(out.flags.contains(&DecoupledFlag::PulsesOverlap { first: 0 }));
        assert!(out.flags.iter().any(|f| matches!(f, DecoupledFlag::Leakage { .. })));
        assert_eq!(out.leakage_after_pulse.len(), 2);
    }

    #[test]
    fn sampled_endpoint_matches_direct_run() {
        let b = make_basis(20);
        let seq = PulseSequence::from_gains(&[(0.58, 0.0), (0.58, PI)], &[0.59])
            .unwrap()
            .with_final_flight(0.3);
        let v = HybridState::vacuum(b);
        let (traj, out) =
            sample_decoupled(&v, &seq, 101, ObservableSet::default(), DecoupledOptions::default())
                .unwrap();
        let direct = evolve_decoupled(&v, &seq).unwrap();
        assert!(out.state.max_abs_diff(&direct.state).unwrap() < 1e-13);
        assert_eq!(traj.len(), 101);
        let last = traj.final_value("fock_1").unwrap();
        assert!((last - fock_probability(&direct.state, 1).unwrap()).abs() < 1e-13);
        assert!(traj.is_monotone());
    }
}
