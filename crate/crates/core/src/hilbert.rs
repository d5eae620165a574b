//! Truncated composite Hilbert space `|n_i, n_s, σ⟩` and the pure / mixed
//! state containers used by every propagator.
//!
//! Linear index order is σ outermost, then the idler photon number, then the
//! signal photon number:
//!
//! ```text
//! index = σ·N² + n_i·N + n_s,   N = cutoff + 1,  σ ∈ {g = 0, e = 1}
//! ```
//!
//! Every interaction in the model conserves the charge
//! `K = n_s − n_i − [σ = e]`: pair creation raises both photon numbers, and
//! the Jaynes–Cummings exchange trades an idler photon for an excitation.
//! [`Sectors`] groups basis states by `K`; mixed states are stored as blocks
//! between sectors.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal level of the two-level system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Ground,
    Excited,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::Ground, Level::Excited];

    pub fn index(self) -> usize {
        match self {
            Level::Ground => 0,
            Level::Excited => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Level> {
        match i {
            0 => Some(Level::Ground),
            1 => Some(Level::Excited),
            _ => None,
        }
    }

    /// Eigenvalue of `σ_z = [σ†, σ]`: +1 on `e`, −1 on `g`.
    pub fn sigma_z(self) -> f64 {
        match self {
            Level::Ground => -1.0,
            Level::Excited => 1.0,
        }
    }

    pub fn excitation(self) -> i64 {
        self.index() as i64
    }
}

/// Truncated photon-number basis: `cutoff` is the largest photon number kept
/// in each mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockBasis {
    cutoff: usize,
}

pub const DEFAULT_CUTOFF: usize = 59;

pub fn make_basis(cutoff: usize) -> FockBasis {
    FockBasis::new(cutoff)
}

impl Default for FockBasis {
    fn default() -> Self {
        FockBasis::new(DEFAULT_CUTOFF)
    }
}

impl FockBasis {
    pub fn new(cutoff: usize) -> Self {
        FockBasis { cutoff }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of Fock levels per mode.
    pub fn levels(&self) -> usize {
        self.cutoff + 1
    }

    pub fn dimension(&self) -> usize {
        2 * self.levels() * self.levels()
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, n_i: usize, n_s: usize, level: Level) -> usize {
        let n = self.levels();
        level.index() * n * n + n_i * n + n_s
    }

    pub fn index_of(&self, n_i: usize, n_s: usize, level: Level) -> Result<usize> {
        if n_i > self.cutoff || n_s > self.cutoff {
            return Err(Error::IndexOutOfRange {
                n_i,
                n_s,
                level,
                cutoff: self.cutoff,
            });
        }
        Ok(self.index_unchecked(n_i, n_s, level))
    }

    #[inline]
    pub(crate) fn triple_unchecked(&self, index: usize) -> (usize, usize, Level) {
        let n = self.levels();
        let level = if index >= n * n { Level::Excited } else { Level::Ground };
        let rem = index % (n * n);
        (rem / n, rem % n, level)
    }

    pub fn triple_of(&self, index: usize) -> Result<(usize, usize, Level)> {
        if index >= self.dimension() {
            return Err(Error::LinearIndexOutOfRange {
                index,
                dimension: self.dimension(),
            });
        }
        Ok(self.triple_unchecked(index))
    }

    pub fn charge(n_i: usize, n_s: usize, level: Level) -> i64 {
        n_s as i64 - n_i as i64 - level.excitation()
    }

    pub fn charge_of(&self, index: usize) -> i64 {
        let (n_i, n_s, level) = self.triple_unchecked(index);
        FockBasis::charge(n_i, n_s, level)
    }

    pub fn min_charge(&self) -> i64 {
        -(self.cutoff as i64) - 1
    }

    pub fn max_charge(&self) -> i64 {
        self.cutoff as i64
    }

    /// True when the state touches the truncation boundary of either mode.
    pub fn is_edge(&self, index: usize) -> bool {
        let (n_i, n_s, _) = self.triple_unchecked(index);
        n_i == self.cutoff || n_s == self.cutoff
    }

    pub(crate) fn check_same(&self, other: &FockBasis) -> Result<()> {
        if self != other {
            return Err(Error::BasisMismatch {
                expected: self.cutoff,
                found: other.cutoff,
            });
        }
        Ok(())
    }
}

/// Partition of the basis into charge sectors.
///
/// Within a sector, ground-state members come first (ascending `n_i`),
/// followed by excited-state members (ascending `n_i`).
#[derive(Clone, Debug)]
pub struct Sectors {
    basis: FockBasis,
    members: Vec<Vec<usize>>,
    // global index -> (sector slot, local position)
    location: Vec<(usize, usize)>,
}

impl Sectors {
    pub fn new(basis: FockBasis) -> Self {
        let min = basis.min_charge();
        let count = (basis.max_charge() - min + 1) as usize;
        let mut members = vec![Vec::new(); count];
        for level in Level::ALL {
            for n_i in 0..=basis.cutoff() {
                for n_s in 0..=basis.cutoff() {
                    let k = FockBasis::charge(n_i, n_s, level);
                    members[(k - min) as usize].push(basis.index_unchecked(n_i, n_s, level));
                }
            }
        }
        let mut location = vec![(0, 0); basis.dimension()];
        for (slot, list) in members.iter().enumerate() {
            for (pos, &g) in list.iter().enumerate() {
                location[g] = (slot, pos);
            }
        }
        Sectors {
            basis,
            members,
            location,
        }
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn charges(&self) -> impl Iterator<Item = i64> + '_ {
        let min = self.basis.min_charge();
        (0..self.members.len()).map(move |s| min + s as i64)
    }

    pub fn contains(&self, charge: i64) -> bool {
        charge >= self.basis.min_charge() && charge <= self.basis.max_charge()
    }

    /// Global indices of the sector; empty for charges outside the basis.
    pub fn members(&self, charge: i64) -> &[usize] {
        if !self.contains(charge) {
            return &[];
        }
        &self.members[(charge - self.basis.min_charge()) as usize]
    }

    pub fn size(&self, charge: i64) -> usize {
        self.members(charge).len()
    }

    /// `(charge, local position)` of a global index.
    pub fn locate(&self, index: usize) -> (i64, usize) {
        let (slot, pos) = self.location[index];
        (self.basis.min_charge() + slot as i64, pos)
    }
}

/// Pure state over the composite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    basis: FockBasis,
    amplitudes: Vec<C64>,
}

impl HybridState {
    pub fn vacuum(basis: FockBasis) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dimension()];
        amplitudes[basis.index_unchecked(0, 0, Level::Ground)] = C64::new(1.0, 0.0);
        HybridState { basis, amplitudes }
    }

    pub fn basis_state(basis: FockBasis, n_i: usize, n_s: usize, level: Level) -> Result<Self> {
        let idx = basis.index_of(n_i, n_s, level)?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dimension()];
        amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(HybridState { basis, amplitudes })
    }

    pub fn from_amplitudes(basis: FockBasis, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dimension() {
            return Err(Error::LengthMismatch {
                expected: basis.dimension(),
                found: amplitudes.len(),
            });
        }
        Ok(HybridState { basis, amplitudes })
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn amplitude(&self, n_i: usize, n_s: usize, level: Level) -> Result<C64> {
        Ok(self.amplitudes[self.basis.index_of(n_i, n_s, level)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `1 − ‖ψ‖²`; nonzero only through round-off or external truncation.
    pub fn norm_defect(&self) -> f64 {
        1.0 - self.norm_sqr()
    }

    /// Population on states at the truncation edge of either mode.
    pub fn edge_population(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.basis.is_edge(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn inner(&self, other: &HybridState) -> Result<C64> {
        self.basis.check_same(&other.basis)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn fidelity(&self, other: &HybridState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn max_abs_diff(&self, other: &HybridState) -> Result<f64> {
        self.basis.check_same(&other.basis)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Embed into a larger (or equal) basis; amplitudes beyond the new
    /// cutoff are an error rather than silently dropped.
    pub fn embed(&self, target: FockBasis) -> Result<HybridState> {
        let mut out = vec![C64::new(0.0, 0.0); target.dimension()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (n_i, n_s, level) = self.basis.triple_unchecked(i);
            out[target.index_of(n_i, n_s, level)?] = *a;
        }
        Ok(HybridState {
            basis: target,
            amplitudes: out,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StateRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: StateRecord = serde_json::from_str(s)?;
        rec.try_into()
    }
}

/// Flat JSON form of a pure state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateRecord {
    pub cutoff: usize,
    pub dimension: usize,
    pub index_order: String,
    pub amplitudes: Vec<(f64, f64)>,
}

pub const INDEX_ORDER: &str = "sigma,n_i,n_s";

impl From<&HybridState> for StateRecord {
    fn from(s: &HybridState) -> Self {
        StateRecord {
            cutoff: s.basis.cutoff(),
            dimension: s.basis.dimension(),
            index_order: INDEX_ORDER.to_string(),
            amplitudes: s.amplitudes.iter().map(|a| (a.re, a.im)).collect(),
        }
    }
}

impl TryFrom<StateRecord> for HybridState {
    type Error = Error;

    fn try_from(rec: StateRecord) -> Result<Self> {
        if rec.index_order != INDEX_ORDER {
            return Err(Error::InvalidParameter(format!(
                "unsupported index order {:?}",
                rec.index_order
            )));
        }
        let basis = FockBasis::new(rec.cutoff);
        if rec.dimension != basis.dimension() {
            return Err(Error::LengthMismatch {
                expected: basis.dimension(),
                found: rec.dimension,
            });
        }
        HybridState::from_amplitudes(
            basis,
            rec.amplitudes.into_iter().map(|(re, im)| C64::new(re, im)).collect(),
        )
    }
}

/// Mixed state stored as blocks between charge sectors.
///
/// Block `(k, k')` holds `⟨a|ρ|b⟩` for `a` in sector `k` and `b` in sector
/// `k'`, in the local order of [`Sectors`]. Missing blocks are zero. The
/// Hamiltonian and both loss channels only ever couple block `(k, k')` to
/// `(k ± 1, k' ± 1)`, so the offset `k − k'` of every stored block is
/// preserved by the dynamics.
#[derive(Clone, Debug)]
pub struct DensityState {
    sectors: Arc<Sectors>,
    blocks: BTreeMap<(i64, i64), DMatrix<C64>>,
}

impl DensityState {
    pub fn from_pure(state: &HybridState) -> Self {
        let sectors = Arc::new(Sectors::new(state.basis()));
        let mut vectors: BTreeMap<i64, Vec<C64>> = BTreeMap::new();
        for (i, a) in state.amplitudes().iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (k, pos) = sectors.locate(i);
            let v = vectors
                .entry(k)
                .or_insert_with(|| vec![C64::new(0.0, 0.0); sectors.size(k)]);
            v[pos] = *a;
        }
        let mut blocks = BTreeMap::new();
        for (&k, u) in &vectors {
            for (&kp, v) in &vectors {
                let m = DMatrix::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj());
                blocks.insert((k, kp), m);
            }
        }
        DensityState { sectors, blocks }
    }

    pub fn vacuum(basis: FockBasis) -> Self {
        DensityState::from_pure(&HybridState::vacuum(basis))
    }

    pub fn from_dense(basis: FockBasis, matrix: &DMatrix<C64>) -> Result<Self> {
        let dim = basis.dimension();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::LengthMismatch {
                expected: dim * dim,
                found: matrix.nrows() * matrix.ncols(),
            });
        }
        let sectors = Arc::new(Sectors::new(basis));
        let mut blocks = BTreeMap::new();
        let charges: Vec<i64> = sectors.charges().collect();
        for &k in &charges {
            for &kp in &charges {
                let rows = sectors.members(k);
                let cols = sectors.members(kp);
                let m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| matrix[(rows[r], cols[c])]);
                if m.iter().any(|z| z.norm_sqr() > 0.0) {
                    blocks.insert((k, kp), m);
                }
            }
        }
        Ok(DensityState { sectors, blocks })
    }

    pub(crate) fn from_blocks(
        sectors: Arc<Sectors>,
        blocks: BTreeMap<(i64, i64), DMatrix<C64>>,
    ) -> Self {
        DensityState { sectors, blocks }
    }

    pub fn basis(&self) -> FockBasis {
        self.sectors.basis()
    }

    pub fn sectors(&self) -> &Arc<Sectors> {
        &self.sectors
    }

    pub fn blocks(&self) -> &BTreeMap<(i64, i64), DMatrix<C64>> {
        &self.blocks
    }

    /// Number of stored complex entries.
    pub fn stored_entries(&self) -> usize {
        self.blocks.values().map(|m| m.len()).sum()
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        let (k, r) = self.sectors.locate(row);
        let (kp, c) = self.sectors.locate(col);
        self.blocks
            .get(&(k, kp))
            .map(|m| m[(r, c)])
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn population(&self, index: usize) -> f64 {
        self.element(index, index).re
    }

    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .filter(|((k, kp), _)| k == kp)
            .map(|(_, m)| m.trace())
            .sum()
    }

    pub fn edge_population(&self) -> f64 {
        let basis = self.basis();
        (0..basis.dimension())
            .filter(|&i| basis.is_edge(i))
            .map(|i| self.population(i))
            .sum()
    }

    /// Largest `|ρ_ab − conj(ρ_ba)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((k, kp), m) in &self.blocks {
            let zero;
            let mirror = match self.blocks.get(&(*kp, *k)) {
                Some(t) => t,
                None => {
                    zero = DMatrix::zeros(m.ncols(), m.nrows());
                    &zero
                }
            };
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    worst = worst.max((m[(r, c)] - mirror[(c, r)].conj()).norm());
                }
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part. Block-diagonal states are
    /// diagonalised sector by sector; anything else is assembled densely.
    pub fn min_eigenvalue(&self) -> f64 {
        let block_diagonal = self.blocks.keys().all(|(k, kp)| k == kp);
        let herm = |m: &DMatrix<C64>| (m + m.adjoint()) * C64::new(0.5, 0.0);
        if block_diagonal {
            let mut min = if self.blocks.len() < self.sectors.charges().count() {
                0.0
            } else {
                f64::INFINITY
            };
            for m in self.blocks.values() {
                let e = herm(m).symmetric_eigenvalues();
                min = e.iter().cloned().fold(min, f64::min);
            }
            min
        } else {
            let d = herm(&self.to_dense());
            d.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.basis().dimension();
        let mut out = DMatrix::zeros(dim, dim);
        for ((k, kp), m) in &self.blocks {
            let rows = self.sectors.members(*k);
            let cols = self.sectors.members(*kp);
            for (r, &gr) in rows.iter().enumerate() {
                for (c, &gc) in cols.iter().enumerate() {
                    out[(gr, gc)] = m[(r, c)];
                }
            }
        }
        out
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation_in(&self, state: &HybridState) -> Result<f64> {
        self.basis().check_same(&state.basis())?;
        let amps = state.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for ((k, kp), m) in &self.blocks {
            let rows = self.sectors.members(*k);
            let cols = self.sectors.members(*kp);
            for (r, &gr) in rows.iter().enumerate() {
                let ar = amps[gr].conj();
                if ar.norm_sqr() == 0.0 {
                    continue;
                }
                for (c, &gc) in cols.iter().enumerate() {
                    acc += ar * m[(r, c)] * amps[gc];
                }
            }
        }
        Ok(acc.re)
    }

    /// Largest elementwise deviation from the projector `|ψ⟩⟨ψ|`.
    pub fn max_abs_diff_from_pure(&self, state: &HybridState) -> Result<f64> {
        self.basis().check_same(&state.basis())?;
        let other = DensityState::from_pure(state);
        let mut keys: Vec<(i64, i64)> = self.blocks.keys().cloned().collect();
        keys.extend(other.blocks.keys().cloned());
        keys.sort();
        keys.dedup();
        let mut worst = 0.0f64;
        for key in keys {
            match (self.blocks.get(&key), other.blocks.get(&key)) {
                (Some(a), Some(b)) => worst = worst.max((a - b).camax()),
                (Some(a), None) | (None, Some(a)) => worst = worst.max(a.camax()),
                (None, None) => {}
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(make_basis(59).dimension(), 7200);
        assert_eq!(make_basis(0).dimension(), 2);
        assert_eq!(make_basis(9).dimension(), 200);
    }

    #[test]
    fn vacuum_in_smallest_basis() {
        let v = HybridState::vacuum(make_basis(0));
        assert_eq!(v.amplitudes(), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    }

    #[test]
    fn vacuum_accessors() {
        let b = make_basis(59);
        let v = HybridState::vacuum(b);
        assert_eq!(v.norm_sqr(), 1.0);
        assert_eq!(v.amplitude(0, 0, Level::Ground).unwrap(), C64::new(1.0, 0.0));
        assert_eq!(v.amplitude(1, 1, Level::Ground).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(v.amplitudes()[b.index_of(0, 0, Level::Ground).unwrap()].re, 1.0);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let v = HybridState::vacuum(make_basis(3));
        assert!(matches!(
            v.amplitude(4, 0, Level::Ground),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(make_basis(3).triple_of(32).is_err());
    }

    #[test]
    fn enumerated_small_bases_follow_declared_order() {
        for cutoff in 0..=2 {
            let b = make_basis(cutoff);
            let n = cutoff + 1;
            let mut expected = 0;
            for level in Level::ALL {
                for n_i in 0..n {
                    for n_s in 0..n {
                        assert_eq!(b.index_of(n_i, n_s, level).unwrap(), expected);
                        let st = HybridState::basis_state(b, n_i, n_s, level).unwrap();
                        assert_eq!(st.amplitudes()[expected], C64::new(1.0, 0.0));
                        expected += 1;
                    }
                }
            }
            assert_eq!(expected, b.dimension());
        }
    }

    #[test]
    fn sectors_partition_the_basis() {
        let b = make_basis(4);
        let s = Sectors::new(b);
        let total: usize = s.charges().map(|k| s.size(k)).sum();
        assert_eq!(total, b.dimension());
        for i in 0..b.dimension() {
            let (k, pos) = s.locate(i);
            assert_eq!(k, b.charge_of(i));
            assert_eq!(s.members(k)[pos], i);
        }
    }

    #[test]
    fn json_roundtrip() {
        let b = make_basis(2);
        let mut amps = vec![C64::new(0.0, 0.0); b.dimension()];
        amps[3] = C64::new(0.6, -0.1);
        amps[10] = C64::new(0.0, 0.79);
        let s = HybridState::from_amplitudes(b, amps).unwrap();
        let back = HybridState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn density_from_pure_matches_dense_projector() {
        let b = make_basis(2);
        let mut amps = vec![C64::new(0.0, 0.0); b.dimension()];
        amps[b.index_of(0, 0, Level::Ground).unwrap()] = C64::new(0.6, 0.0);
        amps[b.index_of(1, 1, Level::Ground).unwrap()] = C64::new(0.0, 0.48);
        amps[b.index_of(2, 0, Level::Excited).unwrap()] = C64::new(0.64, 0.0);
        let psi = HybridState::from_amplitudes(b, amps.clone()).unwrap();
        let rho = DensityState::from_pure(&psi);
        let dense = rho.to_dense();
        for r in 0..b.dimension() {
            for c in 0..b.dimension() {
                assert!((dense[(r, c)] - amps[r] * amps[c].conj()).norm() < 1e-15);
            }
        }
        assert!((rho.trace().re - psi.norm_sqr()).abs() < 1e-15);
        assert!(rho.hermiticity_error() < 1e-15);
        let again = DensityState::from_dense(b, &dense).unwrap();
        assert!(again.max_abs_diff_from_pure(&psi).unwrap() < 1e-15);
        assert!((rho.expectation_in(&psi).unwrap() - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
    }
}
