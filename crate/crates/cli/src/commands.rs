use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use fockforge::analysis::{purcell_factor, quality_factor, rabi_frequency, tmsv_max_closed_form};
use fockforge::dynamics::{
    evolve_lindblad_with, evolve_schrodinger_with, sample_decoupled, DecoupledOptions,
    LindbladOptions, ObservableSet, RunMetadata, SchrodingerOptions, Tolerances, Trajectory,
    SCHEMA_VERSION,
};
use fockforge::optimizer::{
    convergence_study, optimize_three_pulse, sweep_three_pulse_targets, sweep_two_pulse,
    ConvergenceOptions, SweepResult,
};
use fockforge::{make_basis, DensityState, HybridState};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, Mode, RunConfig, SweepKindConfig};
use crate::error::CliError;
use crate::svg::{Plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Formats {
    /// CSV and JSON when nothing is requested.
    pub fn from_list(list: &[Format]) -> Self {
        if list.is_empty() {
            return Formats {
                csv: true,
                json: true,
                svg: false,
            };
        }
        Formats {
            csv: list.contains(&Format::Csv),
            json: list.contains(&Format::Json),
            svg: list.contains(&Format::Svg),
        }
    }
}

/// Where and what to write for one command.
pub struct Context {
    pub command: Command,
    pub config: RunConfig,
    pub out: Option<PathBuf>,
    pub formats: Formats,
}

/// What a command produced, for the terminal.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Context {
    fn provenance(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "tool": "fockforge",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command.as_str(),
            "config": self.config,
        })
    }

    fn csv_preamble(&self) -> String {
        format!(
            "# schema_version: {SCHEMA_VERSION}\n# command: {}\n# config: {}\n",
            self.command.as_str(),
            serde_json::to_string(&self.config).expect("config serializes")
        )
    }

    fn document(&self, key: &str, value: Value) -> Value {
        let mut doc = self.provenance();
        doc[key] = value;
        doc
    }

    fn write(&self, report: &mut Report, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let Some(dir) = &self.out else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        report.files.push(path);
        Ok(())
    }

    fn write_json(&self, report: &mut Report, name: &str, doc: &Value) -> Result<(), CliError> {
        if self.formats.json {
            let text = serde_json::to_string_pretty(doc).map_err(fockforge::Error::from)?;
            self.write(report, name, text.as_bytes())?;
        }
        Ok(())
    }

    fn write_csv(
        &self,
        report: &mut Report,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> fockforge::Result<()>,
    ) -> Result<(), CliError> {
        if self.formats.csv {
            let mut buf = self.csv_preamble().into_bytes();
            body(&mut buf)?;
            self.write(report, name, &buf)?;
        }
        Ok(())
    }

    fn write_svg(&self, report: &mut Report, name: &str, mut plot: Plot) -> Result<(), CliError> {
        if self.formats.svg {
            plot.metadata = self.provenance().to_string();
            self.write(report, name, plot.render().as_bytes())?;
        }
        Ok(())
    }
}

pub fn run(ctx: &Context) -> Result<Report, CliError> {
    match ctx.command {
        Command::Simulate => simulate(ctx),
        Command::Sweep => sweep(ctx),
        Command::Converge => converge(ctx),
        Command::Estimate => estimate(ctx),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn simulate(ctx: &Context) -> Result<Report, CliError> {
    let cfg = &ctx.config;
    let seq = cfg.sequence()?;
    let basis = make_basis(cfg.cutoff);
    let observables = ObservableSet {
        max_photon: cfg.output.max_photon,
        phases: cfg.output.phases,
    };
    let pure = cfg.mode != Mode::Lindblad;
    let names = observables.names(basis, pure);
    if let Some(bad) = cfg.output.plot.iter().find(|p| !names.contains(p)) {
        return Err(CliError::Config(format!(
            "output.plot names unknown column {bad:?}; available: {}",
            names.join(", ")
        )));
    }
    let samples = cfg.output.samples;
    let vacuum = HybridState::vacuum(basis);
    let tolerances = cfg.tolerances();
    let (traj, meta): (Trajectory, RunMetadata) = match cfg.mode {
        Mode::Decoupled => {
            let (traj, out) =
                sample_decoupled(&vacuum, &seq, samples, observables, DecoupledOptions::default())?;
            let flags: Vec<String> = out
                .flags
                .iter()
                .map(|f| serde_json::to_string(f).expect("flag serializes"))
                .collect();
            let meta = RunMetadata {
                mode: "decoupled".into(),
                cutoff: cfg.cutoff,
                sequence: seq.clone(),
                noise: None,
                tolerances: None,
                max_leakage: out.leakage(),
                stats: None,
                flags,
            };
            (traj, meta)
        }
        Mode::Schrodinger => {
            let out = evolve_schrodinger_with(
                &vacuum,
                &seq,
                SchrodingerOptions {
                    samples,
                    tolerances: tolerances.unwrap_or_else(Tolerances::schrodinger),
                    observables,
                },
            )?;
            let meta = out.metadata(&seq);
            (out.trajectory, meta)
        }
        Mode::Lindblad => {
            let stride = cfg.lindblad.positivity_stride;
            let out = evolve_lindblad_with(
                &DensityState::vacuum(basis),
                &seq,
                cfg.noise()?,
                LindbladOptions {
                    samples,
                    tolerances: tolerances.unwrap_or_else(Tolerances::lindblad),
                    observables,
                    max_entries: cfg.lindblad.max_entries,
                    positivity_stride: (stride > 0).then_some(stride),
                },
            )?;
            let meta = out.metadata(&seq);
            (out.trajectory, meta)
        }
    };
    for f in &meta.flags {
        log::warn!("{f}");
    }

    let mut report = Report::default();
    let finals: serde_json::Map<String, Value> = (0..=cfg.output.max_photon)
        .filter_map(|n| {
            let name = format!("fock_{n}");
            traj.final_value(&name).map(|v| (name, json!(v)))
        })
        .collect();
    report.lines.push(format!(
        "{} run, cutoff {}, {} samples, max leakage {:.2e}",
        meta.mode,
        meta.cutoff,
        traj.len(),
        meta.max_leakage
    ));
    for n in 0..=cfg.output.max_photon.min(5) {
        if let Some(v) = traj.final_value(&format!("fock_{n}")) {
            report.lines.push(format!("final P(n_s = {n}) = {v:.6}"));
        }
    }

    ctx.write_csv(&mut report, "trajectory.csv", |w| traj.write_csv(w))?;
    let result: Value = serde_json::from_str(&traj.to_json(&meta)?).map_err(fockforge::Error::from)?;
    let mut doc = ctx.document("trajectory", result);
    doc["final"] = Value::Object(finals);
    ctx.write_json(&mut report, "simulate.json", &doc)?;
    let series = cfg
        .output
        .plot
        .iter()
        .filter_map(|name| {
            traj.column(name).map(|ys| Series {
                name: name.clone(),
                xs: traj.times.clone(),
                ys: ys.to_vec(),
                points: false,
            })
        })
        .collect();
    ctx.write_svg(
        &mut report,
        "trajectory.svg",
        Plot {
            title: format!("{} evolution, cutoff {}", meta.mode, meta.cutoff),
            x_label: "t [2π/Ω]".into(),
            y_label: "probability".into(),
            series,
            markers: traj.pulse_centers.clone(),
            metadata: String::new(),
        },
    )?;
    Ok(report)
}

fn describe(r: &SweepResult) -> String {
    match &r.best {
        None => format!("n = {}: no point evaluated", r.target),
        Some(b) => {
            let at: Vec<String> = r
                .axes
                .iter()
                .zip(&b.values)
                .map(|(a, v)| format!("{} = {v:.4}{}", a.name, if a.unit.is_empty() { String::new() } else { format!(" {}", a.unit) }))
                .collect();
            format!("n = {}: best P = {:.6} at {}", r.target, b.probability, at.join(", "))
        }
    }
}

pub fn sweep(ctx: &Context) -> Result<Report, CliError> {
    let cfg = &ctx.config;
    let s = cfg.sweep.as_ref().expect("resolved sweep config");
    let opts = cfg.sweep_options();
    let results = match s.kind {
        SweepKindConfig::ThreePulse => {
            let grid = s.grid.as_ref().expect("resolved grid").spec();
            if s.refine {
                optimize_three_pulse(&grid, &s.targets, &opts, cfg.refine_options())?
            } else {
                sweep_three_pulse_targets(&grid, &s.targets, &opts)?
            }
        }
        SweepKindConfig::TwoPulse => {
            let spec = s.two_pulse.as_ref().expect("resolved two-pulse config").spec();
            vec![sweep_two_pulse(&spec, s.targets[0], &opts)?]
        }
    };

    let mut report = Report::default();
    for r in &results {
        report.lines.push(describe(r));
        if r.partial {
            let msg = format!(
                "sweep for n = {} is partial: {:.1}% of the grid evaluated",
                r.target,
                100.0 * r.completed_fraction
            );
            log::warn!("{msg}");
            report.lines.push(msg);
        }
        let stem = format!("sweep_n{}", r.target);
        let result: Value =
            serde_json::from_str(&r.to_json(r.tensor.is_some())?).map_err(fockforge::Error::from)?;
        ctx.write_json(&mut report, &format!("{stem}.json"), &ctx.document("sweep", result))?;
        ctx.write_csv(&mut report, &format!("{stem}_top.csv"), |w| r.write_top_csv(w))?;
        if r.tensor.is_some() {
            ctx.write_csv(&mut report, &format!("{stem}_landscape.csv"), |w| {
                r.write_landscape_csv(w)
            })?;
        }
    }
    if ctx.formats.svg {
        let plot = match s.kind {
            SweepKindConfig::ThreePulse => three_pulse_plot(&results),
            SweepKindConfig::TwoPulse => two_pulse_plot(&results[0]),
        };
        ctx.write_svg(&mut report, "sweep.svg", plot)?;
    }
    Ok(report)
}

fn three_pulse_plot(results: &[SweepResult]) -> Plot {
    let xs: Vec<f64> = results.iter().map(|r| r.target as f64).collect();
    Plot {
        title: "best three-pulse probability per target".into(),
        x_label: "n".into(),
        y_label: "P(n_s = n)".into(),
        series: vec![
            Series {
                name: "hybrid".into(),
                xs: xs.clone(),
                ys: results.iter().map(|r| r.best_probability()).collect(),
                points: true,
            },
            Series {
                name: "TMSV bound".into(),
                xs,
                ys: results.iter().map(|r| tmsv_max_closed_form(r.target)).collect(),
                points: true,
            },
        ],
        ..Plot::default()
    }
}

/// Probability against `T₁` at the best `(ζ₂, φ₂)`.
fn two_pulse_plot(r: &SweepResult) -> Plot {
    let mut plot = Plot {
        title: format!("two-pulse landscape, n = {}", r.target),
        x_label: "T₁ [2π/Ω]".into(),
        y_label: format!("P(n_s = {})", r.target),
        ..Plot::default()
    };
    let (Some(best), Some(tensor)) = (&r.best, &r.tensor) else {
        return plot;
    };
    let shape = r.shape();
    let nearest = |axis: usize, v: f64| {
        r.axes[axis]
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
            .map_or(0, |(k, _)| k)
    };
    let (i, j) = (nearest(0, best.values[0]), nearest(1, best.values[1]));
    let base = (i * shape[1] + j) * shape[2];
    plot.series.push(Series {
        name: format!("ζ₂ = {:.3}, φ₂ = {:.3}", best.values[0], best.values[1]),
        xs: r.axes[2].values.clone(),
        ys: tensor[base..base + shape[2]].to_vec(),
        points: false,
    });
    let jpi = nearest(1, PI);
    if jpi != j {
        let base = (i * shape[1] + jpi) * shape[2];
        plot.series.push(Series {
            name: format!("ζ₂ = {:.3}, φ₂ = π", best.values[0]),
            xs: r.axes[2].values.clone(),
            ys: tensor[base..base + shape[2]].to_vec(),
            points: false,
        });
    }
    plot.markers.push(best.values[2]);
    plot
}

pub fn converge(ctx: &Context) -> Result<Report, CliError> {
    let cfg = &ctx.config;
    let c = cfg.converge.as_ref().expect("resolved converge config");
    let seq = cfg.sequence()?;
    let noise = match cfg.mode {
        Mode::Lindblad => Some(cfg.noise()?),
        _ => None,
    };
    let opts = ConvergenceOptions {
        target: c.target,
        samples: c.samples,
        tolerances: cfg.tolerances().unwrap_or_else(Tolerances::lindblad),
        max_entries: cfg.lindblad.max_entries,
    };
    let table = convergence_study(&seq, &c.cutoffs, noise, opts)?;

    let mut report = Report::default();
    for r in &table.rows {
        report.lines.push(match (&r.probability, &r.error) {
            (Some(p), _) => format!(
                "cutoff {:>4}: P(n_s = {}) = {p:.8}{}",
                r.cutoff,
                c.target,
                r.difference.map(|d| format!("  diff {d:+.2e}")).unwrap_or_default()
            ),
            (None, Some(e)) => format!("cutoff {:>4}: failed: {e}", r.cutoff),
            (None, None) => format!("cutoff {:>4}: no result", r.cutoff),
        });
    }
    ctx.write_csv(&mut report, "converge.csv", |w| table.write_csv(w))?;
    ctx.write_json(&mut report, "converge.json", &ctx.document("convergence", to_value(&table)))?;
    let ok: Vec<_> = table.rows.iter().filter(|r| r.probability.is_some()).collect();
    ctx.write_svg(
        &mut report,
        "converge.svg",
        Plot {
            title: format!("basis convergence, {} mode", table.mode),
            x_label: "cutoff".into(),
            y_label: format!("P(n_s = {})", c.target),
            series: vec![Series {
                name: table.mode.clone(),
                xs: ok.iter().map(|r| r.cutoff as f64).collect(),
                ys: ok.iter().map(|r| r.probability.unwrap_or(f64::NAN)).collect(),
                points: true,
            }],
            ..Plot::default()
        },
    )?;
    if ok.is_empty() {
        let first = table.rows.first().and_then(|r| r.error.clone()).unwrap_or_default();
        return Err(if first.starts_with("resource limit") {
            CliError::Resource(first)
        } else {
            CliError::Numerical(first)
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
struct EstimateRow {
    cavity_decay_over_omega: f64,
    cavity_decay_per_second: f64,
    quality_factor: f64,
    purcell_factor: f64,
}

pub fn estimate(ctx: &Context) -> Result<Report, CliError> {
    let e = ctx.config.estimate.as_ref().expect("resolved estimate config");
    let volume = e.mode_volume * e.wavelength.powi(3);
    let omega = rabi_frequency(e.emitter_decay, e.wavelength, volume);
    let rows: Vec<EstimateRow> = e
        .cavity_decays
        .iter()
        .map(|&g| {
            let rate = g * omega;
            let q = quality_factor(e.wavelength, rate);
            EstimateRow {
                cavity_decay_over_omega: g,
                cavity_decay_per_second: rate,
                quality_factor: q,
                purcell_factor: purcell_factor(q, volume, e.wavelength),
            }
        })
        .collect();

    let mut report = Report::default();
    report.lines.push(format!("Omega = {omega:.4e} 1/s"));
    report
        .lines
        .push(format!("{:>12} {:>14} {:>12} {:>12}", "gamma_c/Omega", "gamma_c [1/s]", "Q", "F"));
    for r in &rows {
        report.lines.push(format!(
            "{:>12} {:>14.4e} {:>12.3e} {:>12.3e}",
            r.cavity_decay_over_omega, r.cavity_decay_per_second, r.quality_factor, r.purcell_factor
        ));
    }
    let doc = ctx.document(
        "estimate",
        json!({ "rabi_frequency": omega, "mode_volume_m3": volume, "rows": rows }),
    );
    ctx.write_json(&mut report, "estimate.json", &doc)?;
    ctx.write_csv(&mut report, "estimate.csv", |w| {
        let mut wr = csv_writer(w);
        for r in &rows {
            wr.serialize(r)?;
        }
        wr.flush().map_err(fockforge::Error::from)?;
        Ok(())
    })?;
    Ok(report)
}

fn csv_writer(w: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(w)
}

/// Reads a CSV written by this tool, skipping the `#` preamble.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Trajectory::read_csv(text.as_bytes())?)
}
