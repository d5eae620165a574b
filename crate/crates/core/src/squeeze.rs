//! Two-mode squeezing for a single pump pulse,
//! `U = exp[−i(r a_i†a_s† + r* a_i a_s)]`, and the closed-form two-mode
//! squeezed vacuum it produces.
//!
//! Pair creation leaves `d = n_s − n_i` and the emitter level untouched, so
//! the truncated generator splits into tridiagonal ladders
//! `|m, m+d, σ⟩, m = max(0, −d) ..= min(N−1, N−1−d)`, one per `d`, shared by
//! both levels. Each ladder is exponentiated densely.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{FockBasis, HybridState, Level};
use crate::linalg::expm;

/// Environment variable naming a directory for persisted ladder blocks.
pub const CACHE_DIR_ENV: &str = "FOCKFORGE_CACHE_DIR";

/// Default threshold on the vacuum tail beyond the cutoff.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-8;

/// Wrap an angle into `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Complex parametric gain `r = ζ e^{iφ}` of one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricGain {
    magnitude: f64,
    phase: f64,
}

impl ParametricGain {
    pub fn new(magnitude: f64, phase: f64) -> Result<Self> {
        if !magnitude.is_finite() || magnitude < 0.0 || !phase.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "parametric gain needs finite ζ ≥ 0 and finite φ, got ζ = {magnitude}, φ = {phase}"
            )));
        }
        Ok(ParametricGain {
            magnitude,
            phase: wrap_phase(phase),
        })
    }

    pub fn real(magnitude: f64) -> Result<Self> {
        ParametricGain::new(magnitude, 0.0)
    }

    pub fn zero() -> Self {
        ParametricGain {
            magnitude: 0.0,
            phase: 0.0,
        }
    }

    pub fn from_complex(r: C64) -> Self {
        ParametricGain {
            magnitude: r.norm(),
            phase: if r.norm() == 0.0 { 0.0 } else { wrap_phase(r.arg()) },
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn value(&self) -> C64 {
        C64::from_polar(self.magnitude, self.phase)
    }

    /// `−r`
    pub fn negated(&self) -> Self {
        ParametricGain {
            magnitude: self.magnitude,
            phase: wrap_phase(self.phase + PI),
        }
    }
}

/// Closed-form TMSV coefficient of `|n, n⟩`:
/// `(−i e^{iφ} tanh ζ)ⁿ / cosh ζ`.
pub fn tmsv_amplitude(r: ParametricGain, n: usize) -> C64 {
    let z = r.magnitude();
    let base = C64::new(0.0, -1.0) * C64::from_polar(z.tanh(), r.phase());
    base.powu(n as u32) / z.cosh()
}

/// Range of ladder positions `m` (idler photon number) for offset `d`.
pub fn ladder_range(cutoff: usize, d: i64) -> std::ops::RangeInclusive<usize> {
    let c = cutoff as i64;
    let lo = (-d).max(0);
    let hi = c.min(c - d);
    lo as usize..=hi as usize
}

/// Truncated generator `−i(r a_i†a_s† + r* a_i a_s)` on the ladder with
/// `n_s − n_i = d`.
pub fn ladder_generator(cutoff: usize, d: i64, r: ParametricGain) -> DMatrix<C64> {
    let range = ladder_range(cutoff, d);
    let lo = *range.start();
    let len = range.count();
    let rv = r.value();
    let mut g = DMatrix::zeros(len, len);
    for j in 0..len.saturating_sub(1) {
        let m = (lo + j) as f64;
        let amp = ((m + 1.0) * (m + d as f64 + 1.0)).sqrt();
        g[(j + 1, j)] = C64::new(0.0, -1.0) * rv * amp;
        g[(j, j + 1)] = C64::new(0.0, -1.0) * rv.conj() * amp;
    }
    g
}

pub fn ladder_block(cutoff: usize, d: i64, r: ParametricGain) -> DMatrix<C64> {
    expm(&ladder_generator(cutoff, d, r))
}

/// Full composite-space generator; used as a brute-force oracle.
pub fn dense_generator(basis: FockBasis, r: ParametricGain) -> DMatrix<C64> {
    let dim = basis.dimension();
    let rv = r.value();
    let mut g = DMatrix::zeros(dim, dim);
    for level in Level::ALL {
        for n_i in 0..basis.cutoff() {
            for n_s in 0..basis.cutoff() {
                let from = basis.index_unchecked(n_i, n_s, level);
                let to = basis.index_unchecked(n_i + 1, n_s + 1, level);
                let amp = (((n_i + 1) * (n_s + 1)) as f64).sqrt();
                g[(to, from)] += C64::new(0.0, -1.0) * rv * amp;
                g[(from, to)] += C64::new(0.0, -1.0) * rv.conj() * amp;
            }
        }
    }
    g
}

/// Squeezing unitary on a truncated basis, stored as one dense block per
/// pair difference `d`. Blocks are built on first use and then frozen.
#[derive(Debug)]
pub struct SqueezeOperator {
    basis: FockBasis,
    gain: ParametricGain,
    blocks: Vec<OnceLock<DMatrix<C64>>>,
    persist: Option<PathBuf>,
    tail_threshold: f64,
}

/// Attached when the vacuum tail beyond the cutoff exceeds the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationWarning {
    pub cutoff: usize,
    pub magnitude: f64,
    pub tail: f64,
    pub threshold: f64,
}

pub fn build_squeeze_unitary(basis: FockBasis, r: ParametricGain) -> SqueezeOperator {
    SqueezeOperator::new(basis, r)
}

impl SqueezeOperator {
    pub fn new(basis: FockBasis, gain: ParametricGain) -> Self {
        let persist = std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from);
        SqueezeOperator::with_options(basis, gain, persist, DEFAULT_TAIL_THRESHOLD)
    }

    pub fn with_options(
        basis: FockBasis,
        gain: ParametricGain,
        persist: Option<PathBuf>,
        tail_threshold: f64,
    ) -> Self {
        let count = 2 * basis.cutoff() + 1;
        SqueezeOperator {
            basis,
            gain,
            blocks: (0..count).map(|_| OnceLock::new()).collect(),
            persist,
            tail_threshold,
        }
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn gain(&self) -> ParametricGain {
        self.gain
    }

    /// Exact TMSV probability of `n > cutoff`: `tanh^{2(cutoff+1)} ζ`.
    pub fn vacuum_tail(&self) -> f64 {
        self.gain
            .magnitude()
            .tanh()
            .powi(2 * (self.basis.cutoff() as i32 + 1))
    }

    pub fn warning(&self) -> Option<TruncationWarning> {
        let tail = self.vacuum_tail();
        (tail > self.tail_threshold).then(|| TruncationWarning {
            cutoff: self.basis.cutoff(),
            magnitude: self.gain.magnitude(),
            tail,
            threshold: self.tail_threshold,
        })
    }

    /// Dense block acting on the ladder with `n_s − n_i = d`.
    pub fn block(&self, d: i64) -> &DMatrix<C64> {
        let slot = (d + self.basis.cutoff() as i64) as usize;
        self.blocks[slot].get_or_init(|| {
            let cutoff = self.basis.cutoff();
            if let Some(dir) = &self.persist {
                let path = block_path(dir, cutoff, d, self.gain);
                if let Some(m) = read_block(&path, ladder_range(cutoff, d).count()) {
                    return m;
                }
                let m = ladder_block(cutoff, d, self.gain);
                if let Err(e) = write_block(&path, &m) {
                    log::warn!("could not persist squeeze block {}: {e}", path.display());
                }
                m
            } else {
                ladder_block(cutoff, d, self.gain)
            }
        })
    }

    pub fn apply(&self, state: &HybridState) -> Result<HybridState> {
        let mut out = state.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, state: &mut HybridState) -> Result<()> {
        self.basis.check_same(&state.basis())?;
        if self.gain.magnitude() == 0.0 {
            return Ok(());
        }
        let basis = self.basis;
        let c = basis.cutoff() as i64;
        let amps = state.amplitudes_mut();
        for level in Level::ALL {
            for d in -c..=c {
                let range = ladder_range(basis.cutoff(), d);
                let idx: Vec<usize> = range
                    .map(|m| basis.index_unchecked(m, (m as i64 + d) as usize, level))
                    .collect();
                if idx.iter().all(|&i| amps[i].norm_sqr() == 0.0) {
                    continue;
                }
                let v = DVector::from_iterator(idx.len(), idx.iter().map(|&i| amps[i]));
                let w = self.block(d) * v;
                for (k, &i) in idx.iter().enumerate() {
                    amps[i] = w[k];
                }
            }
        }
        Ok(())
    }

    /// Assemble the full composite-space matrix (small bases only).
    pub fn to_dense(&self) -> DMatrix<C64> {
        let basis = self.basis;
        let mut u = DMatrix::zeros(basis.dimension(), basis.dimension());
        let c = basis.cutoff() as i64;
        for level in Level::ALL {
            for d in -c..=c {
                let idx: Vec<usize> = ladder_range(basis.cutoff(), d)
                    .map(|m| basis.index_unchecked(m, (m as i64 + d) as usize, level))
                    .collect();
                let b = self.block(d);
                for (r, &gr) in idx.iter().enumerate() {
                    for (k, &gc) in idx.iter().enumerate() {
                        u[(gr, gc)] = b[(r, k)];
                    }
                }
            }
        }
        u
    }
}

fn block_path(dir: &Path, cutoff: usize, d: i64, gain: ParametricGain) -> PathBuf {
    dir.join(format!(
        "squeeze-c{cutoff}-d{d}-z{:016x}-p{:016x}.bin",
        gain.magnitude().to_bits(),
        gain.phase().to_bits()
    ))
}

fn read_block(path: &Path, len: usize) -> Option<DMatrix<C64>> {
    let mut bytes = Vec::new();
    fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
    if bytes.len() != len * len * 16 {
        return None;
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(DMatrix::from_fn(len, len, |r, c| {
        let k = 2 * (r * len + c);
        C64::new(vals[k], vals[k + 1])
    }))
}

fn write_block(path: &Path, m: &DMatrix<C64>) -> std::io::Result<()> {
    fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    let mut bytes = Vec::with_capacity(m.len() * 16);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            bytes.extend_from_slice(&m[(r, c)].re.to_le_bytes());
            bytes.extend_from_slice(&m[(r, c)].im.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&bytes)?;
    fs::rename(tmp, path)
}

type CacheKey = (usize, i64, i64);

/// Shared read-mostly cache of squeeze operators, keyed by cutoff and the
/// gain quantized to 1e−12.
#[derive(Debug, Default)]
pub struct SqueezeCache {
    map: RwLock<HashMap<CacheKey, Arc<SqueezeOperator>>>,
}

impl SqueezeCache {
    pub fn new() -> Self {
        SqueezeCache::default()
    }

    pub fn global() -> &'static SqueezeCache {
        static CACHE: OnceLock<SqueezeCache> = OnceLock::new();
        CACHE.get_or_init(SqueezeCache::new)
    }

    fn key(basis: FockBasis, r: ParametricGain) -> CacheKey {
        let q = |x: f64| (x * 1e12).round() as i64;
        (basis.cutoff(), q(r.magnitude()), q(r.phase()))
    }

    pub fn get(&self, basis: FockBasis, r: ParametricGain) -> Arc<SqueezeOperator> {
        let key = SqueezeCache::key(basis, r);
        if let Some(op) = self.map.read().unwrap().get(&key) {
            return op.clone();
        }
        let mut map = self.map.write().unwrap();
        map.entry(key)
            .or_insert_with(|| Arc::new(SqueezeOperator::new(basis, r)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.write().unwrap().clear();
    }
}

/// Apply `U(r)` through the global cache.
pub fn apply_squeeze(state: &HybridState, r: ParametricGain) -> Result<HybridState> {
    if r.magnitude() == 0.0 {
        return Ok(state.clone());
    }
    SqueezeCache::global().get(state.basis(), r).apply(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::make_basis;

    #[test]
    fn phase_is_wrapped() {
        let g = ParametricGain::new(1.0, 3.0 * PI).unwrap();
        assert!((g.phase() - PI).abs() < 1e-12);
        let g = ParametricGain::new(1.0, -PI).unwrap();
        assert!((g.phase() - PI).abs() < 1e-12);
        assert!(ParametricGain::new(-0.1, 0.0).is_err());
        assert!(ParametricGain::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn zero_gain_amplitudes() {
        for phi in [0.0, 1.0, -2.0] {
            let r = ParametricGain::new(0.0, phi).unwrap();
            assert_eq!(tmsv_amplitude(r, 0), C64::new(1.0, 0.0));
            assert_eq!(tmsv_amplitude(r, 1).norm(), 0.0);
            assert_eq!(tmsv_amplitude(r, 4).norm(), 0.0);
        }
    }

    #[test]
    fn single_pair_probability_at_066() {
        let r = ParametricGain::real(0.66).unwrap();
        let p = tmsv_amplitude(r, 1).norm_sqr();
        let expected = 0.66f64.tanh().powi(2) / 0.66f64.cosh().powi(2);
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.22265).abs() < 1e-4);
    }

    #[test]
    fn zero_gain_operator_is_identity() {
        let b = make_basis(4);
        let op = build_squeeze_unitary(b, ParametricGain::zero());
        let u = op.to_dense();
        let id = DMatrix::<C64>::identity(b.dimension(), b.dimension());
        assert!((u - id).camax() < 1e-15);
    }

    #[test]
    fn ladder_ranges() {
        assert_eq!(ladder_range(3, 0), 0..=3);
        assert_eq!(ladder_range(3, 2), 0..=1);
        assert_eq!(ladder_range(3, -3), 3..=3);
        let total: usize = (-3..=3).map(|d| ladder_range(3, d).count()).sum();
        assert_eq!(total, 16);
    }

    #[test]
    fn tail_warning() {
        let op = SqueezeOperator::with_options(
            make_basis(5),
            ParametricGain::real(1.5).unwrap(),
            None,
            1e-8,
        );
        let w = op.warning().expect("ζ = 1.5 at cutoff 5 leaks");
        assert!(w.tail > 0.1);
        let op = SqueezeOperator::with_options(
            make_basis(59),
            ParametricGain::real(0.58).unwrap(),
            None,
            1e-8,
        );
        assert!(op.warning().is_none());
    }

    #[test]
    fn persisted_blocks_reload_identically() {
        let dir = tempfile::tempdir().unwrap();
        let r = ParametricGain::new(0.4, 0.3).unwrap();
        let b = make_basis(6);
        let first = SqueezeOperator::with_options(b, r, Some(dir.path().into()), 1e-8);
        let m1 = first.block(1).clone();
        let second = SqueezeOperator::with_options(b, r, Some(dir.path().into()), 1e-8);
        assert_eq!(&m1, second.block(1));
        assert!(fs::read_dir(dir.path()).unwrap().count() >= 1);
    }

    #[test]
    fn cache_shares_operators() {
        let cache = SqueezeCache::new();
        let b = make_basis(5);
        let a = cache.get(b, ParametricGain::real(0.3).unwrap());
        let c = cache.get(b, ParametricGain::real(0.3 + 1e-15).unwrap());
        assert!(Arc::ptr_eq(&a, &c));
        assert_eq!(cache.len(), 1);
    }
}
