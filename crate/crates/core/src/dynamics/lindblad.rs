//! Lindblad integration with cavity loss on both modes and pure emitter
//! dephasing, carried out on charge-sector blocks of ρ.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::hamiltonian::{add_minus_i_h, sector_generators, Generators};
use super::integrator::integrate;
use super::trajectory::uniform_grid;
use super::{
    IntegrationStats, NoiseParams, ObservableSet, PulseSequence, RunMetadata, Tolerances,
    Trajectory, DEFAULT_SAMPLES,
};
use crate::error::{Error, Result};
use crate::hilbert::{DensityState, Level, Sectors};

/// Entries allowed in the block-sparse density matrix by default
/// (the integrator keeps about ten copies).
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 24;

const TRACE_FAILURE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LindbladOptions {
    pub samples: usize,
    pub tolerances: Tolerances,
    pub observables: ObservableSet,
    pub max_entries: usize,
    /// Diagonalise every `k`-th sample (and the final state) to track the
    /// smallest eigenvalue; `None` checks only the final state.
    pub positivity_stride: Option<usize>,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        LindbladOptions {
            samples: DEFAULT_SAMPLES,
            tolerances: Tolerances::lindblad(),
            observables: ObservableSet::default(),
            max_entries: DEFAULT_MAX_ENTRIES,
            positivity_stride: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladOutcome {
    pub trajectory: Trajectory,
    pub state: DensityState,
    pub stats: IntegrationStats,
    pub tolerances: Tolerances,
    pub noise: NoiseParams,
    /// Largest `|tr ρ − tr ρ₀|` over the samples.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue over the checked samples.
    pub min_eigenvalue: f64,
    pub max_leakage: f64,
}

impl LindbladOutcome {
    pub fn metadata(&self, seq: &PulseSequence) -> RunMetadata {
        RunMetadata {
            mode: "lindblad".into(),
            cutoff: self.state.basis().cutoff(),
            sequence: seq.clone(),
            noise: Some(self.noise),
            tolerances: Some(self.tolerances),
            max_leakage: self.max_leakage,
            stats: Some(self.stats),
            flags: Vec::new(),
        }
    }
}

struct SectorOps {
    gens: Generators,
    /// `n_i + n_s` per member.
    number: Vec<f64>,
    excited: Vec<bool>,
    /// `a_s†` into sector `k + 1`.
    up_s: Ladder,
    /// `a_i†` into sector `k − 1`.
    up_i: Ladder,
}

/// Target position and matrix element of a raising operator per member;
/// members at the cutoff have amplitude zero.
struct Ladder {
    pos: Vec<usize>,
    amp: Vec<f64>,
}

impl Ladder {
    fn new(entries: Vec<Option<(usize, f64)>>) -> Self {
        let (pos, amp) = entries.into_iter().map(|e| e.unwrap_or((0, 0.0))).unzip();
        Ladder { pos, amp }
    }
}

struct Block {
    row_charge: i64,
    col_charge: i64,
    offset: usize,
    rows: usize,
    cols: usize,
    from_signal: Option<usize>,
    from_idler: Option<usize>,
}

struct Layout {
    sectors: Arc<Sectors>,
    ops: BTreeMap<i64, SectorOps>,
    blocks: Vec<Block>,
    diagonal: BTreeMap<i64, usize>,
    entries: usize,
}

impl Layout {
    fn new(initial: &DensityState, max_entries: usize) -> Result<Self> {
        let sectors = initial.sectors().clone();
        let mut offsets: Vec<i64> = initial.blocks().keys().map(|(k, kp)| k - kp).collect();
        offsets.sort();
        offsets.dedup();
        let charges: Vec<i64> = sectors.charges().collect();
        let mut keys = Vec::new();
        for &d in &offsets {
            for &k in &charges {
                if sectors.contains(k - d) && sectors.size(k) > 0 && sectors.size(k - d) > 0 {
                    keys.push((k, k - d));
                }
            }
        }
        keys.sort();
        let entries: usize = keys
            .iter()
            .map(|(k, kp)| sectors.size(*k) * sectors.size(*kp))
            .sum();
        if entries > max_entries {
            return Err(Error::ResourceLimit {
                what: "density matrix",
                required: entries,
                limit: max_entries,
            });
        }

        let index: BTreeMap<(i64, i64), usize> =
            keys.iter().enumerate().map(|(j, k)| (*k, j)).collect();
        let mut blocks = Vec::with_capacity(keys.len());
        let mut diagonal = BTreeMap::new();
        let mut offset = 0;
        for (j, &(k, kp)) in keys.iter().enumerate() {
            let (rows, cols) = (sectors.size(k), sectors.size(kp));
            blocks.push(Block {
                row_charge: k,
                col_charge: kp,
                offset,
                rows,
                cols,
                from_signal: index.get(&(k + 1, kp + 1)).copied(),
                from_idler: index.get(&(k - 1, kp - 1)).copied(),
            });
            if k == kp {
                diagonal.insert(k, j);
            }
            offset += rows * cols;
        }

        let basis = sectors.basis();
        let cut = basis.cutoff();
        let mut ops = BTreeMap::new();
        for &k in &charges {
            if !keys.iter().any(|(a, b)| *a == k || *b == k) {
                continue;
            }
            let members = sectors.members(k);
            let mut number = Vec::with_capacity(members.len());
            let mut excited = Vec::with_capacity(members.len());
            let mut up_s = Vec::with_capacity(members.len());
            let mut up_i = Vec::with_capacity(members.len());
            for &g in members {
                let (n_i, n_s, level) = basis.triple_unchecked(g);
                number.push((n_i + n_s) as f64);
                excited.push(level == Level::Excited);
                up_s.push((n_s < cut).then(|| {
                    let (_, pos) = sectors.locate(basis.index_unchecked(n_i, n_s + 1, level));
                    (pos, ((n_s + 1) as f64).sqrt())
                }));
                up_i.push((n_i < cut).then(|| {
                    let (_, pos) = sectors.locate(basis.index_unchecked(n_i + 1, n_s, level));
                    (pos, ((n_i + 1) as f64).sqrt())
                }));
            }
            ops.insert(
                k,
                SectorOps {
                    gens: sector_generators(&sectors, k),
                    number,
                    excited,
                    up_s: Ladder::new(up_s),
                    up_i: Ladder::new(up_i),
                },
            );
        }
        Ok(Layout {
            sectors,
            ops,
            blocks,
            diagonal,
            entries,
        })
    }

    fn pack(&self, state: &DensityState) -> Vec<C64> {
        let mut flat = vec![C64::new(0.0, 0.0); self.entries];
        for b in &self.blocks {
            if let Some(m) = state.blocks().get(&(b.row_charge, b.col_charge)) {
                flat[b.offset..b.offset + b.rows * b.cols].copy_from_slice(m.as_slice());
            }
        }
        flat
    }

    fn unpack(&self, flat: &[C64]) -> DensityState {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let m = DMatrix::from_column_slice(b.rows, b.cols, &flat[b.offset..b.offset + b.rows * b.cols]);
                ((b.row_charge, b.col_charge), m)
            })
            .collect();
        DensityState::from_blocks(self.sectors.clone(), blocks)
    }

    fn population(&self, flat: &[C64], index: usize) -> f64 {
        let (k, pos) = self.sectors.locate(index);
        match self.diagonal.get(&k) {
            Some(&j) => {
                let b = &self.blocks[j];
                flat[b.offset + pos * b.rows + pos].re
            }
            None => 0.0,
        }
    }

    fn trace(&self, flat: &[C64]) -> f64 {
        self.diagonal
            .values()
            .map(|&j| {
                let b = &self.blocks[j];
                (0..b.rows).map(|p| flat[b.offset + p * b.rows + p].re).sum::<f64>()
            })
            .sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn rhs(&self, drive: C64, g: f64, gamma_c: f64, gamma_d: f64, x: &[C64], dx: &mut [C64]) {
        let i = C64::new(0.0, 1.0);
        for b in &self.blocks {
            let len = b.rows * b.cols;
            let rho = &x[b.offset..b.offset + len];
            let out = &mut dx[b.offset..b.offset + len];
            out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            let left = &self.ops[&b.row_charge];
            let right = &self.ops[&b.col_charge];

            let hermitian = b.row_charge == b.col_charge;
            if !hermitian {
                // -i H ρ, column by column
                for c in 0..b.cols {
                    let r = c * b.rows..(c + 1) * b.rows;
                    add_minus_i_h(&left.gens, drive, g, &rho[r.clone()], &mut out[r]);
                }
            }
            // +i ρ H with H = E P + E* P† + i g A
            if drive != C64::new(0.0, 0.0) {
                right.gens.pair.right_mul_add(i * drive, rho, out, b.rows);
                right.gens.pair_adj.right_mul_add(i * drive.conj(), rho, out, b.rows);
            }
            if g != 0.0 {
                right.gens.jc.right_mul_add(C64::new(-g, 0.0), rho, out, b.rows);
            }
            if hermitian {
                // -i[H, ρ] = Y + Y† with Y = i ρ H
                let n = b.rows;
                for c in 0..n {
                    for r in 0..=c {
                        let v = out[c * n + r] + out[r * n + c].conj();
                        out[c * n + r] = v;
                        out[r * n + c] = v.conj();
                    }
                }
            }

            if gamma_c == 0.0 && gamma_d == 0.0 {
                continue;
            }
            for c in 0..b.cols {
                for r in 0..b.rows {
                    let mut rate = 0.5 * gamma_c * (left.number[r] + right.number[c]);
                    if left.excited[r] != right.excited[c] {
                        rate += gamma_d;
                    }
                    out[c * b.rows + r] -= rho[c * b.rows + r] * rate;
                }
            }
            if gamma_c == 0.0 {
                continue;
            }
            let feed = |src: Option<usize>, lu: &Ladder, ru: &Ladder, out: &mut [C64]| {
                let Some(s) = src else { return };
                let sb = &self.blocks[s];
                let srho = &x[sb.offset..sb.offset + sb.rows * sb.cols];
                for c in 0..b.cols {
                    let ac = gamma_c * ru.amp[c];
                    if ac == 0.0 {
                        continue;
                    }
                    let scol = &srho[ru.pos[c] * sb.rows..(ru.pos[c] + 1) * sb.rows];
                    let ocol = &mut out[c * b.rows..(c + 1) * b.rows];
                    for ((o, &pr), &ar) in ocol.iter_mut().zip(&lu.pos).zip(&lu.amp) {
                        *o += scol[pr] * (ac * ar);
                    }
                }
            };
            feed(b.from_signal, &left.up_s, &right.up_s, out);
            feed(b.from_idler, &left.up_i, &right.up_i, out);
        }
    }
}

pub fn evolve_lindblad(
    initial: &DensityState,
    seq: &PulseSequence,
    noise: NoiseParams,
    samples: usize,
    tol: Tolerances,
) -> Result<LindbladOutcome> {
    evolve_lindblad_with(
        initial,
        seq,
        noise,
        LindbladOptions {
            samples,
            tolerances: tol,
            ..Default::default()
        },
    )
}

pub fn evolve_lindblad_with(
    initial: &DensityState,
    seq: &PulseSequence,
    noise: NoiseParams,
    opts: LindbladOptions,
) -> Result<LindbladOutcome> {
    seq.validate()?;
    noise.validate()?;
    let tr0 = initial.trace();
    if (tr0.re - 1.0).abs() > 1e-6 || tr0.im.abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "initial density matrix must have unit trace, got {tr0}"
        )));
    }
    let layout = Layout::new(initial, opts.max_entries)?;
    let basis = initial.basis();
    let centers = seq.centers();
    let g = seq.jc_coupling();
    let (gamma_c, gamma_d) = noise.rates_per_period();
    let (t0, t1) = seq.timeline();
    let grid = uniform_grid(t0, t1, opts.samples);
    let set = opts.observables;
    let mut traj = Trajectory::new(set.names(basis, false), centers.clone());
    let mut max_drift: f64 = 0.0;
    let mut max_leakage: f64 = 0.0;
    let mut min_eig = f64::INFINITY;

    let mut y = layout.pack(initial);
    let stats = integrate(
        |t, x, dx| layout.rhs(seq.drive(t, &centers), g, gamma_c, gamma_d, x, dx),
        &mut y,
        t0,
        t1,
        &grid,
        &seq.windows(),
        opts.tolerances,
        |j, t, y| {
            let tr = layout.trace(y);
            let drift = (tr - tr0.re).abs();
            if drift > TRACE_FAILURE {
                return Err(Error::TraceDrift { t, drift });
            }
            max_drift = max_drift.max(drift);
            let row = set.evaluate(basis, |i| layout.population(y, i), None, tr);
            max_leakage = max_leakage.max(*row.last().unwrap());
            traj.push(t, row);
            if let Some(k) = opts.positivity_stride {
                if k > 0 && j % k == 0 {
                    min_eig = min_eig.min(layout.unpack(y).min_eigenvalue());
                }
            }
            Ok(())
        },
    )?;
    let state = layout.unpack(&y);
    min_eig = min_eig.min(state.min_eigenvalue());
    Ok(LindbladOutcome {
        trajectory: traj,
        state,
        stats,
        tolerances: opts.tolerances,
        noise,
        max_trace_drift: max_drift,
        min_eigenvalue: min_eig,
        max_leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_basis, HybridState};

    #[test]
    fn photon_loss_is_exponential() {
        let b = make_basis(4);
        let s = HybridState::basis_state(b, 1, 1, Level::Ground).unwrap();
        let rho = DensityState::from_pure(&s);
        let seq = PulseSequence::empty().with_rabi(0.0).with_final_flight(2.0);
        let gamma = 0.05;
        let out = evolve_lindblad(&rho, &seq, NoiseParams::cavity(gamma), 21, Tolerances::lindblad())
            .unwrap();
        let state = &out.state;
        let mean_s: f64 = (0..b.dimension())
            .map(|i| b.triple_of(i).unwrap().1 as f64 * state.population(i))
            .sum();
        let expected = (-2.0 * std::f64::consts::PI * gamma * 2.0).exp();
        assert!((mean_s - expected).abs() < 1e-3 * expected, "{mean_s} vs {expected}");
        assert!(out.max_trace_drift < 1e-6);
        assert!(out.min_eigenvalue > -1e-6);
    }

    #[test]
    fn dephasing_damps_coherence() {
        let b = make_basis(2);
        let g = HybridState::basis_state(b, 1, 1, Level::Ground).unwrap();
        let e = HybridState::basis_state(b, 0, 1, Level::Excited).unwrap();
        let amps: Vec<C64> = g
            .amplitudes()
            .iter()
            .zip(e.amplitudes())
            .map(|(a, b)| (a + b) / 2f64.sqrt())
            .collect();
        let psi = HybridState::from_amplitudes(b, amps).unwrap();
        let seq = PulseSequence::empty().with_rabi(0.0).with_final_flight(1.0);
        let out = evolve_lindblad(
            &DensityState::from_pure(&psi),
            &seq,
            NoiseParams::dephasing(0.1),
            5,
            Tolerances::lindblad(),
        )
        .unwrap();
        let ig = b.index_of(1, 1, Level::Ground).unwrap();
        let ie = b.index_of(0, 1, Level::Excited).unwrap();
        let coh = out.state.element(ig, ie).norm();
        let expected = 0.5 * (-2.0 * std::f64::consts::PI * 0.1).exp();
        assert!((coh - expected).abs() < 1e-6, "{coh} vs {expected}");
    }

    #[test]
    fn memory_limit_is_reported() {
        let rho = DensityState::vacuum(make_basis(10));
        let seq = PulseSequence::empty();
        let opts = LindbladOptions {
            max_entries: 10,
            ..Default::default()
        };
        let err = evolve_lindblad_with(&rho, &seq, NoiseParams::none(), opts).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { required, .. } if required > 10));
    }
}
