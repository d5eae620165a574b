//! Sparse pieces of the interaction Hamiltonian
//! `H(t) = Γ𝓔(t) P + Γ𝓔*(t) P† + i g (a_i σ† − a_i† σ)` with `P = a_i† a_s†`.

use num_complex::Complex64 as C64;

use crate::hilbert::{FockBasis, Level, Sectors};

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// From `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push((self.col_idx[k], r, self.values[k]));
            }
        }
        SparseMatrix::from_triplets(self.cols, self.rows, t)
    }

    /// `y += s A x`.
    pub fn mul_add(&self, s: C64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col_idx[k]] * self.values[k];
            }
            *yr += acc * s;
        }
    }

    /// `Y += s X A` for column-major `X` with `m` rows and `Y` likewise.
    pub fn right_mul_add(&self, s: C64, x: &[C64], y: &mut [C64], m: usize) {
        debug_assert_eq!(x.len(), m * self.rows);
        debug_assert_eq!(y.len(), m * self.cols);
        for r in 0..self.rows {
            let xc = &x[r * m..(r + 1) * m];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let f = s * self.values[k];
                for (yv, xv) in y[c * m..(c + 1) * m].iter_mut().zip(xc) {
                    *yv += xv * f;
                }
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }
}

/// Operators on one index set (the full basis or a charge sector).
#[derive(Clone, Debug)]
pub(crate) struct Generators {
    /// `a_i† a_s†`.
    pub pair: SparseMatrix,
    /// `a_i a_s`.
    pub pair_adj: SparseMatrix,
    /// `a_i σ† − a_i† σ`, real antisymmetric.
    pub jc: SparseMatrix,
}

fn build(basis: FockBasis, members: &[usize], local: impl Fn(usize) -> Option<usize>) -> Generators {
    let n = members.len();
    let cut = basis.cutoff();
    let mut pair = Vec::new();
    let mut jc = Vec::new();
    for (col, &idx) in members.iter().enumerate() {
        let (n_i, n_s, level) = basis.triple_unchecked(idx);
        if n_i < cut && n_s < cut {
            let target = basis.index_unchecked(n_i + 1, n_s + 1, level);
            if let Some(row) = local(target) {
                pair.push((row, col, (((n_i + 1) * (n_s + 1)) as f64).sqrt()));
            }
        }
        match level {
            Level::Ground if n_i > 0 => {
                let target = basis.index_unchecked(n_i - 1, n_s, Level::Excited);
                if let Some(row) = local(target) {
                    jc.push((row, col, (n_i as f64).sqrt()));
                }
            }
            Level::Excited if n_i < cut => {
                let target = basis.index_unchecked(n_i + 1, n_s, Level::Ground);
                if let Some(row) = local(target) {
                    jc.push((row, col, -((n_i + 1) as f64).sqrt()));
                }
            }
            _ => {}
        }
    }
    let pair = SparseMatrix::from_triplets(n, n, pair);
    Generators {
        pair_adj: pair.transpose(),
        pair,
        jc: SparseMatrix::from_triplets(n, n, jc),
    }
}

pub(crate) fn full_generators(basis: FockBasis) -> Generators {
    let all: Vec<usize> = (0..basis.dimension()).collect();
    build(basis, &all, Some)
}

pub(crate) fn sector_generators(sectors: &Sectors, charge: i64) -> Generators {
    let members = sectors.members(charge);
    build(sectors.basis(), members, |idx| {
        let (k, pos) = sectors.locate(idx);
        (k == charge).then_some(pos)
    })
}

/// `y = -i H(t) x`.
pub(crate) fn apply_minus_i_h(g: &Generators, drive: C64, jc: f64, x: &[C64], y: &mut [C64]) {
    y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    add_minus_i_h(g, drive, jc, x, y);
}

/// `y += -i H(t) x`.
pub(crate) fn add_minus_i_h(g: &Generators, drive: C64, jc: f64, x: &[C64], y: &mut [C64]) {
    let minus_i = C64::new(0.0, -1.0);
    if drive != C64::new(0.0, 0.0) {
        g.pair.mul_add(minus_i * drive, x, y);
        g.pair_adj.mul_add(minus_i * drive.conj(), x, y);
    }
    if jc != 0.0 {
        // -i (i g A) = g A
        g.jc.mul_add(C64::new(jc, 0.0), x, y);
    }
}
