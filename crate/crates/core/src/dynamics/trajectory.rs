//! Sampled observables and their CSV / JSON export.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{IntegrationStats, NoiseParams, PulseSequence, Tolerances};
use crate::error::{Error, Result};
use crate::hilbert::{FockBasis, Level};

pub const SCHEMA_VERSION: u32 = 1;

/// Which observables a run records at every sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSet {
    /// Largest photon number tracked individually.
    pub max_photon: usize,
    /// Relative phases of the target components (pure states only).
    pub phases: bool,
}

impl Default for ObservableSet {
    fn default() -> Self {
        ObservableSet {
            max_photon: 10,
            phases: true,
        }
    }
}

impl ObservableSet {
    pub fn names(&self, basis: FockBasis, pure: bool) -> Vec<String> {
        let m = self.max_photon.min(basis.cutoff());
        let mut names = Vec::new();
        for n in 0..=m {
            names.push(format!("p_{n}_{n}_g"));
        }
        for n in 1..=m {
            names.push(format!("p_{}_{n}_e", n - 1));
        }
        for n in 0..=m {
            names.push(format!("fock_{n}"));
        }
        for n in 0..=m {
            names.push(format!("signal_{n}"));
        }
        if pure && self.phases {
            for n in 1..=m {
                names.push(format!("phase_{n}"));
            }
        }
        names.push("norm".into());
        names.push("edge".into());
        names
    }

    /// Values in the order of [`ObservableSet::names`]. Phases are NaN when
    /// the component is too small to define one.
    pub(crate) fn evaluate(
        &self,
        basis: FockBasis,
        pop: impl Fn(usize) -> f64,
        amplitudes: Option<&[C64]>,
        norm: f64,
    ) -> Vec<f64> {
        let m = self.max_photon.min(basis.cutoff());
        let c = basis.cutoff();
        let g = |n_i, n_s| pop(basis.index_unchecked(n_i, n_s, Level::Ground));
        let e = |n_i, n_s| pop(basis.index_unchecked(n_i, n_s, Level::Excited));
        let mut out = Vec::with_capacity(5 * (m + 1) + 2);
        for n in 0..=m {
            out.push(g(n, n));
        }
        for n in 1..=m {
            out.push(e(n - 1, n));
        }
        for n in 0..=m {
            out.push(g(n, n) + if n > 0 { e(n - 1, n) } else { 0.0 });
        }
        let mut signal = vec![0.0; m + 1];
        let mut edge = 0.0;
        for n_s in 0..=c {
            let mut row = 0.0;
            for n_i in 0..=c {
                let p = g(n_i, n_s) + e(n_i, n_s);
                row += p;
                if n_i == c || n_s == c {
                    edge += p;
                }
            }
            if n_s <= m {
                signal[n_s] = row;
            }
        }
        out.extend(signal);
        if let (Some(a), true) = (amplitudes, self.phases) {
            for n in 1..=m {
                let ag = a[basis.index_unchecked(n, n, Level::Ground)];
                let ae = a[basis.index_unchecked(n - 1, n, Level::Excited)];
                out.push(if ag.norm() < crate::analysis::PHASE_THRESHOLD
                    || ae.norm() < crate::analysis::PHASE_THRESHOLD
                {
                    f64::NAN
                } else {
                    (ae * ag.conj()).arg()
                });
            }
        }
        out.push(norm);
        out.push(edge + (1.0 - norm).max(0.0));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Observables on a uniform time grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub columns: Vec<Column>,
    /// Pulse center times, for plotting.
    pub pulse_centers: Vec<f64>,
}

/// `samples` uniform points on `[start, end]` (one point if they coincide).
pub fn uniform_grid(start: f64, end: f64, samples: usize) -> Vec<f64> {
    match samples {
        0 => Vec::new(),
        1 => vec![end],
        _ if end <= start => vec![start],
        _ => {
            let h = (end - start) / (samples - 1) as f64;
            let mut v: Vec<f64> = (0..samples).map(|k| start + k as f64 * h).collect();
            *v.last_mut().unwrap() = end;
            v
        }
    }
}

impl Trajectory {
    pub fn new(names: Vec<String>, pulse_centers: Vec<f64>) -> Self {
        Trajectory {
            times: Vec::new(),
            columns: names
                .into_iter()
                .map(|name| Column {
                    name,
                    values: Vec::new(),
                })
                .collect(),
            pulse_centers,
        }
    }

    pub(crate) fn push(&mut self, t: f64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.times.push(t);
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.values.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Last sampled value of a column.
    pub fn final_value(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }

    /// Value at the first sample with `time ≥ t`.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let col = self.column(name)?;
        let k = self.times.iter().position(|&s| s >= t)?;
        col.get(k).copied()
    }

    pub fn is_monotone(&self) -> bool {
        self.times.windows(2).all(|w| w[1] > w[0])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        wr.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut rec = vec![format!("{t:.10}")];
            rec.extend(self.columns.iter().map(|c| format!("{:.12e}", c.values[k])));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(Error::from)?;
        Ok(())
    }

    /// Reads [`write_csv`](Self::write_csv) output; lines starting with `#`
    /// are skipped.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers()?.clone();
        if header.get(0) != Some("time") {
            return Err(Error::InvalidParameter("first CSV column must be time".into()));
        }
        let mut traj = Trajectory::new(header.iter().skip(1).map(String::from).collect(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}")))
            };
            let t = parse(&rec[0])?;
            let row = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
            traj.push(t, row);
        }
        Ok(traj)
    }

    pub fn to_json(&self, meta: &RunMetadata) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            metadata: &'a RunMetadata,
            times: &'a [f64],
            pulse_centers: &'a [f64],
            columns: serde_json::Map<String, serde_json::Value>,
        }
        let columns = self
            .columns
            .iter()
            .map(|c| (c.name.clone(), serde_json::json!(c.values)))
            .collect();
        Ok(serde_json::to_string_pretty(&Doc {
            schema_version: SCHEMA_VERSION,
            metadata: meta,
            times: &self.times,
            pulse_centers: &self.pulse_centers,
            columns,
        })?)
    }
}

/// What produced a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: String,
    pub cutoff: usize,
    pub sequence: PulseSequence,
    pub noise: Option<NoiseParams>,
    pub tolerances: Option<Tolerances>,
    /// Largest edge population plus norm defect seen along the run.
    pub max_leakage: f64,
    pub stats: Option<IntegrationStats>,
    pub flags: Vec<String>,
}
