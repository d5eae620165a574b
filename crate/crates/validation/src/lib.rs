//! Published optimal three-pulse configurations for the Fock states
//! `|1⟩..|9⟩` and the two-pulse blockade sequence, as reusable fixtures.

use std::f64::consts::PI;

use fockforge::analysis::gain_from_db;
use fockforge::dynamics::PulseSequence;
use fockforge::Result;

/// One optimal three-pulse configuration. Gains in dB, delays in periods
/// `2π/Ω`, phases `(0, π, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub target: usize,
    pub probability: f64,
    pub zeta1_db: f64,
    pub t1: f64,
    pub zeta2_db: f64,
    pub t2: f64,
    pub zeta3_db: f64,
}

pub const REFERENCES: [Reference; 9] = [
    r(1, 0.98, 4.76, 1.11, 12.86, 0.19, 12.39),
    r(2, 0.93, 8.10, 1.41, 12.86, 0.34, 10.96),
    r(3, 0.85, 9.53, 1.49, 13.34, 0.50, 10.00),
    r(4, 0.74, 9.53, 1.49, 13.34, 0.65, 9.53),
    r(5, 0.65, 8.57, 1.49, 13.34, 0.80, 9.05),
    r(6, 0.58, 8.57, 1.49, 13.34, 0.95, 8.57),
    r(7, 0.52, 9.05, 1.49, 13.34, 1.11, 8.10),
    r(8, 0.47, 9.53, 1.49, 13.34, 1.26, 7.62),
    r(9, 0.42, 10.00, 1.49, 13.34, 1.41, 7.15),
];

const fn r(target: usize, probability: f64, z1: f64, t1: f64, z2: f64, t2: f64, z3: f64) -> Reference {
    Reference {
        target,
        probability,
        zeta1_db: z1,
        t1,
        zeta2_db: z2,
        t2,
        zeta3_db: z3,
    }
}

impl Reference {
    pub fn get(target: usize) -> Option<Reference> {
        REFERENCES.iter().copied().find(|r| r.target == target)
    }

    /// `[ζ₁ dB, T₁, ζ₂ dB, T₂, ζ₃ dB]`
    pub fn point(&self) -> [f64; 5] {
        [self.zeta1_db, self.t1, self.zeta2_db, self.t2, self.zeta3_db]
    }

    pub fn sequence(&self) -> Result<PulseSequence> {
        PulseSequence::from_gains(
            &[
                (gain_from_db(self.zeta1_db)?, 0.0),
                (gain_from_db(self.zeta2_db)?, PI),
                (gain_from_db(self.zeta3_db)?, 0.0),
            ],
            &[self.t1, self.t2],
        )
    }
}

/// Two equal 0.58 nat pulses of opposite phase 0.59 periods apart: about
/// half a photon with the emitter, vacuum without it.
pub fn blockade_pair() -> PulseSequence {
    PulseSequence::from_gains(&[(0.58, 0.0), (0.58, PI)], &[0.59]).expect("valid constants")
}
