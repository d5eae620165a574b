//! Grid searches over pulse parameters and basis-size convergence studies.
//!
//! Sequences starting from vacuum never leave the pair sector, so sweeps
//! run on [`PairState`] and evaluate the last pulse for a whole batch of
//! prefixes with one dense product per batch.

mod converge;
mod pair;
mod sweep;

use std::f64::consts::PI;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{gain_db, gain_from_db};
use crate::dynamics::PulseSequence;
use crate::error::{Error, Result};
use crate::hilbert::DEFAULT_CUTOFF;

pub use converge::{convergence_study, ConvergenceOptions, ConvergenceRow, ConvergenceTable};
pub use pair::{FinalStage, PairFlight, PairSqueeze, PairState};
pub use sweep::{
    optimize_three_pulse, refine_three_pulse, sweep_three_pulse, sweep_three_pulse_targets,
    sweep_two_pulse, Candidate, NamedAxis, SweepKind, SweepResult,
};

/// Largest gain considered experimentally reachable, in dB.
pub const MAX_GAIN_DB: f64 = 15.0;

/// Longest total flight, in periods.
pub const MAX_TOTAL_DELAY: f64 = 3.0;

const BOUND_SLACK: f64 = 1e-9;

/// Inclusive, evenly spaced axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(start: f64, stop: f64, steps: usize) -> Self {
        Axis { start, stop, steps }
    }

    pub fn fixed(value: f64) -> Self {
        Axis::new(value, value, 1)
    }

    /// `steps` phases on `(−π, π]`, ending at π.
    pub fn phase(steps: usize) -> Self {
        Axis::new(-PI + 2.0 * PI / steps as f64, PI, steps)
    }

    pub fn step(&self) -> f64 {
        if self.steps > 1 {
            (self.stop - self.start) / (self.steps - 1) as f64
        } else {
            0.0
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps && self.steps > 1 {
                    self.stop
                } else {
                    self.start + k as f64 * h
                }
            })
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.start.min(self.stop)
    }

    pub fn max(&self) -> f64 {
        self.start.max(self.stop)
    }

    fn validate(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter(format!("axis {name} needs at least one step")));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::InvalidParameter(format!("axis {name} has non-finite bounds")));
        }
        if self.min() < lo - BOUND_SLACK || self.max() > hi + BOUND_SLACK {
            return Err(Error::InvalidParameter(format!(
                "axis {name} spans [{}, {}], allowed [{lo}, {hi}]",
                self.min(),
                self.max()
            )));
        }
        Ok(())
    }

    /// Axis of spacing `step / factor` covering `center ± span·step`,
    /// clipped to this axis' range.
    fn around(&self, center: f64, factor: usize, span: usize) -> Axis {
        let h = self.step();
        if h == 0.0 || factor == 0 {
            return Axis::fixed(center);
        }
        let fine = h / factor as f64;
        let reach = (span * factor) as i64;
        let mut lo = -reach;
        let mut hi = reach;
        while lo < 0 && center + lo as f64 * fine < self.min() - BOUND_SLACK {
            lo += 1;
        }
        while hi > 0 && center + hi as f64 * fine > self.max() + BOUND_SLACK {
            hi -= 1;
        }
        Axis::new(
            center + lo as f64 * fine,
            center + hi as f64 * fine,
            (hi - lo) as usize + 1,
        )
    }
}

/// Three-pulse search grid. Gains are in dB, delays in periods `2π/Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub zeta1_db: Axis,
    pub t1: Axis,
    pub zeta2_db: Axis,
    pub t2: Axis,
    pub zeta3_db: Axis,
    pub phases: [f64; 3],
}

/// Gain lattice step, `1.7/31` nats (≈ 0.476 dB).
pub const LATTICE_GAIN_STEP: f64 = 1.7 / 31.0;

impl Default for GridSpec {
    /// Gains `k · 1.7/31` nats for `k = 0..=28` (0 to 13.34 dB) and delays on
    /// 40 points of `[0, 1.49]`.
    fn default() -> Self {
        let gains = Axis::new(0.0, gain_db(28.0 * LATTICE_GAIN_STEP), 29);
        let delays = Axis::new(0.0, 1.49, 40);
        GridSpec::uniform(gains, delays)
    }
}

impl GridSpec {
    /// Same gain axis for every pulse and same delay axis for both flights,
    /// phases `(0, π, 0)`.
    pub fn uniform(gains_db: Axis, delays: Axis) -> Self {
        GridSpec {
            zeta1_db: gains_db,
            t1: delays,
            zeta2_db: gains_db,
            t2: delays,
            zeta3_db: gains_db,
            phases: [0.0, PI, 0.0],
        }
    }

    /// 0 to 15 dB in 32 steps and 0 to 1.5 periods in 21 steps.
    pub fn wide() -> Self {
        GridSpec::uniform(Axis::new(0.0, MAX_GAIN_DB, 32), Axis::new(0.0, 1.5, 21))
    }

    pub fn axes(&self) -> [&Axis; 5] {
        [&self.zeta1_db, &self.t1, &self.zeta2_db, &self.t2, &self.zeta3_db]
    }

    pub fn shape(&self) -> [usize; 5] {
        self.axes().map(|a| a.steps)
    }

    pub fn size(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ax) in [("zeta1", &self.zeta1_db), ("zeta2", &self.zeta2_db), ("zeta3", &self.zeta3_db)] {
            ax.validate(name, 0.0, MAX_GAIN_DB)?;
        }
        self.t1.validate("t1", 0.0, MAX_TOTAL_DELAY)?;
        self.t2.validate("t2", 0.0, MAX_TOTAL_DELAY)?;
        if self.t1.max() + self.t2.max() > MAX_TOTAL_DELAY + BOUND_SLACK {
            return Err(Error::InvalidParameter(format!(
                "total delay up to {} exceeds {MAX_TOTAL_DELAY}",
                self.t1.max() + self.t2.max()
            )));
        }
        if self.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        Ok(())
    }

    /// Local grid `factor` times finer covering `±span` coarse steps around
    /// `point = [ζ₁ dB, T₁, ζ₂ dB, T₂, ζ₃ dB]`, clipped to this grid.
    pub fn around(&self, point: &[f64], factor: usize, span: usize) -> GridSpec {
        GridSpec {
            zeta1_db: self.zeta1_db.around(point[0], factor, span),
            t1: self.t1.around(point[1], factor, span),
            zeta2_db: self.zeta2_db.around(point[2], factor, span),
            t2: self.t2.around(point[3], factor, span),
            zeta3_db: self.zeta3_db.around(point[4], factor, span),
            phases: self.phases,
        }
    }

    /// Sequence for `point = [ζ₁ dB, T₁, ζ₂ dB, T₂, ζ₃ dB]`.
    pub fn sequence(&self, point: &[f64]) -> Result<PulseSequence> {
        let z = |db: f64| gain_from_db(db);
        PulseSequence::from_gains(
            &[
                (z(point[0])?, self.phases[0]),
                (z(point[2])?, self.phases[1]),
                (z(point[4])?, self.phases[2]),
            ],
            &[point[1], point[3]],
        )
    }
}

/// Two-pulse landscape: first gain fixed, second gain and phase and the
/// delay scanned. Gains in nats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPulseSpec {
    pub zeta1: f64,
    pub phi1: f64,
    pub zeta2: Axis,
    pub phi2: Axis,
    pub t1: Axis,
}

impl TwoPulseSpec {
    pub fn validate(&self) -> Result<()> {
        let max_nats = gain_from_db(MAX_GAIN_DB)?;
        Axis::fixed(self.zeta1).validate("zeta1", 0.0, max_nats)?;
        self.zeta2.validate("zeta2", 0.0, max_nats)?;
        self.phi2.validate("phi2", -10.0 * PI, 10.0 * PI)?;
        self.t1.validate("t1", 0.0, MAX_TOTAL_DELAY)?;
        if !self.phi1.is_finite() {
            return Err(Error::InvalidParameter("phi1 must be finite".into()));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.zeta2.steps * self.phi2.steps * self.t1.steps
    }

    /// Sequence for `point = [ζ₂, φ₂, T₁]`.
    pub fn sequence(&self, point: &[f64]) -> Result<PulseSequence> {
        PulseSequence::from_gains(&[(self.zeta1, self.phi1), (point[0], point[1])], &[point[2]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub cutoff: usize,
    /// Relative Rabi frequency of the emitter.
    pub rabi: f64,
    pub top_k: usize,
    /// Keep the full probability tensor.
    pub keep_tensor: bool,
    pub max_tensor_entries: usize,
    pub time_budget: Option<Duration>,
    pub workers: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            cutoff: DEFAULT_CUTOFF,
            rabi: 1.0,
            top_k: 10,
            keep_tensor: false,
            max_tensor_entries: 1 << 26,
            time_budget: None,
            workers: None,
        }
    }
}

/// Local refinement around the best coarse candidates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub candidates: usize,
    pub factor: usize,
    pub span: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            candidates: 10,
            factor: 5,
            span: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values_hit_both_ends() {
        let a = Axis::new(0.0, 1.49, 40);
        let v = a.values();
        assert_eq!(v.len(), 40);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[39], 1.49);
        assert!((v[29] - 1.49 * 29.0 / 39.0).abs() < 1e-15);
        assert_eq!(Axis::fixed(0.3).values(), vec![0.3]);
        let p = Axis::phase(8).values();
        assert_eq!(*p.last().unwrap(), PI);
        assert!(p[0] > -PI);
    }

    #[test]
    fn default_lattice_contains_table_gains() {
        let g = GridSpec::default();
        let v = g.zeta1_db.values();
        for db in [4.76, 7.15, 8.10, 9.53, 10.96, 12.39, 12.86, 13.34] {
            assert!(v.iter().any(|x| (x - db).abs() < 0.006), "{db}");
        }
        let t = g.t1.values();
        for d in [0.19, 0.34, 0.50, 0.65, 0.80, 0.95, 1.11, 1.26, 1.41, 1.49] {
            assert!(t.iter().any(|x| (x - d).abs() < 0.006), "{d}");
        }
        assert!(g.validate().is_ok());
        assert!(GridSpec::wide().validate().is_ok());
    }

    #[test]
    fn constraints_are_enforced() {
        let mut g = GridSpec::default();
        g.zeta2_db = Axis::new(0.0, 16.0, 3);
        assert!(g.validate().is_err());
        let mut g = GridSpec::default();
        g.t1 = Axis::new(0.0, 2.0, 3);
        g.t2 = Axis::new(0.0, 1.5, 3);
        assert!(g.validate().is_err());
        let mut g = GridSpec::default();
        g.t1.steps = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn local_grid_is_clipped() {
        let a = Axis::new(0.0, 1.0, 11);
        let l = a.around(0.0, 5, 1);
        assert_eq!(l.start, 0.0);
        assert!((l.stop - 0.1).abs() < 1e-15);
        assert_eq!(l.steps, 6);
        let m = a.around(0.5, 5, 1);
        assert_eq!(m.steps, 11);
        assert!(m.values().iter().any(|v| (v - 0.5).abs() < 1e-15));
    }
}
