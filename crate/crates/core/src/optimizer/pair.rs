//! States confined to the pair sector `{|n,n,g⟩, |n−1,n,e⟩}` reached from
//! vacuum by any pulse sequence, and the batched last-pulse stage used by
//! the sweeps.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{FockBasis, HybridState, Level};
use crate::squeeze::{ladder_block, ParametricGain};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Squeezing restricted to the pair sector: the `n_s = n_i` ladder acts on
/// the ground part and the `n_s = n_i + 1` ladder on the excited part.
#[derive(Clone, Debug)]
pub struct PairSqueeze {
    ground: DMatrix<C64>,
    excited: DMatrix<C64>,
}

impl PairSqueeze {
    pub fn new(cutoff: usize, gain: ParametricGain) -> Self {
        PairSqueeze {
            ground: ladder_block(cutoff, 0, gain),
            excited: ladder_block(cutoff, 1, gain),
        }
    }
}

/// `cos`/`sin` of the doublet angles for one flight.
#[derive(Clone, Debug)]
pub struct PairFlight {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl PairFlight {
    /// Flight of `duration` periods at JC coupling `g` (π per period for the
    /// reference emitter).
    pub fn new(cutoff: usize, g: f64, duration: f64) -> Self {
        let (sin, cos) = (1..=cutoff)
            .map(|n| ((n as f64).sqrt() * g * duration).sin_cos())
            .unzip();
        PairFlight { cos, sin }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairState {
    /// Amplitudes of `|n,n,g⟩`, `n = 0..=cutoff`.
    ground: Vec<C64>,
    /// Amplitudes of `|n−1,n,e⟩`, `n = 1..=cutoff`.
    excited: Vec<C64>,
}

fn matvec(m: &DMatrix<C64>, x: &[C64], out: &mut [C64]) {
    out.iter_mut().for_each(|v| *v = ZERO);
    for (c, xc) in x.iter().enumerate() {
        if *xc == ZERO {
            continue;
        }
        for (o, v) in out.iter_mut().zip(m.column(c).iter()) {
            *o += v * xc;
        }
    }
}

impl PairState {
    pub fn vacuum(cutoff: usize) -> Self {
        let mut ground = vec![ZERO; cutoff + 1];
        ground[0] = C64::new(1.0, 0.0);
        PairState {
            ground,
            excited: vec![ZERO; cutoff],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.excited.len()
    }

    /// Projects a full state onto the pair sector; fails if more than `tol`
    /// of its weight lies outside.
    pub fn from_state(state: &HybridState, tol: f64) -> Result<Self> {
        let b = state.basis();
        let c = b.cutoff();
        let mut p = PairState {
            ground: vec![ZERO; c + 1],
            excited: vec![ZERO; c],
        };
        let mut inside = 0.0;
        for n in 0..=c {
            p.ground[n] = state.amplitudes()[b.index_unchecked(n, n, Level::Ground)];
            inside += p.ground[n].norm_sqr();
            if n > 0 {
                p.excited[n - 1] = state.amplitudes()[b.index_unchecked(n - 1, n, Level::Excited)];
                inside += p.excited[n - 1].norm_sqr();
            }
        }
        let outside = (state.norm_sqr() - inside).max(0.0);
        if outside > tol {
            return Err(Error::OutsidePairSector { weight: outside });
        }
        Ok(p)
    }

    pub fn to_state(&self) -> HybridState {
        let b = FockBasis::new(self.cutoff());
        let mut amps = vec![ZERO; b.dimension()];
        for (n, a) in self.ground.iter().enumerate() {
            amps[b.index_unchecked(n, n, Level::Ground)] = *a;
        }
        for (j, a) in self.excited.iter().enumerate() {
            amps[b.index_unchecked(j, j + 1, Level::Excited)] = *a;
        }
        HybridState::from_amplitudes(b, amps).expect("length matches basis")
    }

    pub fn squeezed(&self, op: &PairSqueeze) -> Self {
        let mut out = PairState {
            ground: vec![ZERO; self.ground.len()],
            excited: vec![ZERO; self.excited.len()],
        };
        matvec(&op.ground, &self.ground, &mut out.ground);
        matvec(&op.excited, &self.excited, &mut out.excited);
        out
    }

    pub fn flown(&self, f: &PairFlight) -> Self {
        let mut out = self.clone();
        for j in 0..self.excited.len() {
            let (g, e) = (self.ground[j + 1], self.excited[j]);
            out.ground[j + 1] = g * f.cos[j] - e * f.sin[j];
            out.excited[j] = g * f.sin[j] + e * f.cos[j];
        }
        out
    }

    /// `P(n_s = n)`.
    pub fn probability(&self, n: usize) -> f64 {
        let g = self.ground.get(n).map_or(0.0, |a| a.norm_sqr());
        let e = if n > 0 {
            self.excited.get(n - 1).map_or(0.0, |a| a.norm_sqr())
        } else {
            0.0
        };
        g + e
    }

    /// Population with `n_s = cutoff`.
    pub fn edge_population(&self) -> f64 {
        self.probability(self.cutoff())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.ground.iter().chain(&self.excited).map(|a| a.norm_sqr()).sum()
    }
}

/// Batched evaluation of `P(n_s = n)` for several targets after a last
/// pulse drawn from a list of gains, for many input states at once.
///
/// Rows are grouped per gain: `targets.len()` target rows followed by one
/// edge row.
#[derive(Clone, Debug)]
pub struct FinalStage {
    ground_rows: DMatrix<C64>,
    excited_rows: DMatrix<C64>,
    gains: usize,
    per_gain: usize,
}

impl FinalStage {
    pub fn new(cutoff: usize, gains: &[ParametricGain], targets: &[usize]) -> Self {
        let per_gain = targets.len() + 1;
        let rows = gains.len() * per_gain;
        let mut ground_rows = DMatrix::zeros(rows, cutoff + 1);
        let mut excited_rows = DMatrix::zeros(rows, cutoff);
        for (k, &r) in gains.iter().enumerate() {
            let op = PairSqueeze::new(cutoff, r);
            for (t, &n) in targets.iter().chain(std::iter::once(&cutoff)).enumerate() {
                let row = k * per_gain + t;
                ground_rows.row_mut(row).copy_from(&op.ground.row(n));
                if n > 0 {
                    excited_rows.row_mut(row).copy_from(&op.excited.row(n - 1));
                }
            }
        }
        FinalStage {
            ground_rows,
            excited_rows,
            gains: gains.len(),
            per_gain,
        }
    }

    pub fn gains(&self) -> usize {
        self.gains
    }

    /// Probabilities indexed `[(gain · per_gain + target, state)]`; the last
    /// row of each gain group is the edge population.
    pub fn evaluate(&self, states: &[PairState]) -> DMatrix<f64> {
        let n = states.len();
        let c = self.excited_rows.ncols();
        let ground = DMatrix::from_fn(c + 1, n, |r, k| states[k].ground[r]);
        let excited = DMatrix::from_fn(c, n, |r, k| states[k].excited[r]);
        let yg = &self.ground_rows * ground;
        let ye = &self.excited_rows * excited;
        DMatrix::from_fn(yg.nrows(), n, |r, k| yg[(r, k)].norm_sqr() + ye[(r, k)].norm_sqr())
    }

    pub fn row(&self, gain: usize, target: usize) -> usize {
        gain * self.per_gain + target
    }

    pub fn edge_row(&self, gain: usize) -> usize {
        gain * self.per_gain + self.per_gain - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fock_probability;
    use crate::jc::{apply_jc, JcParams};
    use crate::squeeze::apply_squeeze;
    use std::f64::consts::PI;

    #[test]
    fn matches_full_basis_evolution() {
        let c = 18;
        let r1 = ParametricGain::new(0.58, 0.0).unwrap();
        let r2 = ParametricGain::new(0.7, PI).unwrap();
        let full = apply_squeeze(&HybridState::vacuum(FockBasis::new(c)), r1).unwrap();
        let full = apply_jc(&full, JcParams::new(PI, 0.37).unwrap());
        let full = apply_squeeze(&full, r2).unwrap();

        let p = PairState::vacuum(c)
            .squeezed(&PairSqueeze::new(c, r1))
            .flown(&PairFlight::new(c, PI, 0.37))
            .squeezed(&PairSqueeze::new(c, r2));
        assert!(p.to_state().max_abs_diff(&full).unwrap() < 1e-13);
        for n in 0..=4 {
            assert!((p.probability(n) - fock_probability(&full, n).unwrap()).abs() < 1e-13);
        }
        let back = PairState::from_state(&full, 1e-12).unwrap();
        assert!(back.to_state().max_abs_diff(&p.to_state()).unwrap() < 1e-13);
    }

    #[test]
    fn rejects_states_outside_the_sector() {
        let s = HybridState::basis_state(FockBasis::new(3), 0, 1, Level::Ground).unwrap();
        assert!(matches!(
            PairState::from_state(&s, 1e-12),
            Err(Error::OutsidePairSector { .. })
        ));
    }

    #[test]
    fn final_stage_equals_explicit_pulse() {
        let c = 12;
        let s = PairState::vacuum(c)
            .squeezed(&PairSqueeze::new(c, ParametricGain::real(0.5).unwrap()))
            .flown(&PairFlight::new(c, PI, 0.6));
        let gains = [ParametricGain::real(0.2).unwrap(), ParametricGain::new(0.9, PI).unwrap()];
        let targets = [1, 3];
        let stage = FinalStage::new(c, &gains, &targets);
        let out = stage.evaluate(std::slice::from_ref(&s));
        for (k, r) in gains.iter().enumerate() {
            let explicit = s.squeezed(&PairSqueeze::new(c, *r));
            for (t, &n) in targets.iter().enumerate() {
                assert!((out[(stage.row(k, t), 0)] - explicit.probability(n)).abs() < 1e-14);
            }
            assert!((out[(stage.edge_row(k), 0)] - explicit.edge_population()).abs() < 1e-14);
        }
    }
}
