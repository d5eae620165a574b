use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::fock_probability;
use crate::dynamics::{
    evolve_decoupled, evolve_lindblad_with, LindbladOptions, NoiseParams, ObservableSet,
    PulseSequence, Tolerances, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::hilbert::{make_basis, DensityState, HybridState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub target: usize,
    /// Samples per Lindblad run; only the endpoint is used.
    pub samples: usize,
    pub tolerances: Tolerances,
    pub max_entries: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        let l = LindbladOptions::default();
        ConvergenceOptions {
            target: 1,
            samples: 2,
            tolerances: l.tolerances,
            max_entries: l.max_entries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cutoff: usize,
    pub probability: Option<f64>,
    /// Change from the previous row.
    pub difference: Option<f64>,
    pub leakage: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub schema_version: u32,
    pub target: usize,
    pub mode: String,
    pub sequence: PulseSequence,
    pub noise: Option<NoiseParams>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Last available successive difference.
    pub fn last_difference(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.difference)
    }

    pub fn row(&self, cutoff: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.cutoff == cutoff)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cutoff", "probability", "difference", "leakage", "error"])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([
                r.cutoff.to_string(),
                f(r.probability),
                f(r.difference),
                r.leakage.map(|x| format!("{x:.3e}")).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `P(n_s = target)` at the end of `seq` for each cutoff: decoupled for a
/// closed system, Lindblad when `noise` is given. Failures at one cutoff
/// (typically the memory limit) become error rows.
pub fn convergence_study(
    seq: &PulseSequence,
    cutoffs: &[usize],
    noise: Option<NoiseParams>,
    opts: ConvergenceOptions,
) -> Result<ConvergenceTable> {
    seq.validate()?;
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "cutoffs must be strictly ascending, got {cutoffs:?}"
        )));
    }
    if let Some(&c) = cutoffs.iter().find(|&&c| c < opts.target) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {c} is below the target {}",
            opts.target
        )));
    }
    let run = |cutoff: usize| -> Result<(f64, f64)> {
        let basis = make_basis(cutoff);
        match noise {
            None => {
                let out = evolve_decoupled(&HybridState::vacuum(basis), seq)?;
                Ok((fock_probability(&out.state, opts.target)?, out.leakage()))
            }
            Some(n) => {
                let lopts = LindbladOptions {
                    samples: opts.samples,
                    tolerances: opts.tolerances,
                    observables: ObservableSet {
                        max_photon: opts.target,
                        phases: false,
                    },
                    max_entries: opts.max_entries,
                    positivity_stride: None,
                };
                let out = evolve_lindblad_with(&DensityState::vacuum(basis), seq, n, lopts)?;
                Ok((fock_probability(&out.state, opts.target)?, out.max_leakage))
            }
        }
    };
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cutoffs.len());
    for &cutoff in cutoffs {
        let row = match run(cutoff) {
            Ok((p, leak)) => ConvergenceRow {
                cutoff,
                probability: Some(p),
                difference: rows.last().and_then(|r| r.probability).map(|q| p - q),
                leakage: Some(leak),
                error: None,
            },
            Err(e) => {
                log::warn!("convergence row at cutoff {cutoff} failed: {e}");
                ConvergenceRow {
                    cutoff,
                    probability: None,
                    difference: None,
                    leakage: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    Ok(ConvergenceTable {
        schema_version: SCHEMA_VERSION,
        target: opts.target,
        mode: if noise.is_some() { "lindblad" } else { "decoupled" }.into(),
        sequence: seq.clone(),
        noise,
        rows,
    })
}
