//! Run configuration read from TOML.
//!
//! Gains carry a unit suffix (`"4.76 dB"`, `"0.58 nat"`) and phases one of
//! `rad`, `deg` or `pi` (`"1 pi"` is π). Times are in periods `2π/Ω`, noise
//! rates in units of `Ω`. [`RunConfig::resolve`] fills every default so the
//! canonical form written next to each output reproduces the run.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use fockforge::analysis::{gain_db, gain_from_db};
use fockforge::dynamics::{NoiseParams, PulseSequence, PumpPulse, Tolerances, DEFAULT_WIDTH};
use fockforge::optimizer::{
    Axis, GridSpec, RefineOptions, SweepOptions, TwoPulseSpec, MAX_GAIN_DB, MAX_TOTAL_DELAY,
};
use fockforge::ParametricGain;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// Largest cutoff the front-end accepts before refusing the run.
pub const MAX_CUTOFF: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gain {
    Db(f64),
    Nat(f64),
}

impl Gain {
    pub fn nats(self) -> f64 {
        match self {
            Gain::Nat(v) => v,
            Gain::Db(v) => gain_from_db(v).unwrap_or(f64::NAN),
        }
    }

    pub fn db(self) -> f64 {
        match self {
            Gain::Db(v) => v,
            Gain::Nat(v) => gain_db(v),
        }
    }
}

impl FromStr for Gain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (value, unit) = split_quantity(s)?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(format!("gain {s:?} must be finite and non-negative"));
        }
        match unit {
            "dB" | "db" => Ok(Gain::Db(value)),
            "nat" | "nats" | "Np" => Ok(Gain::Nat(value)),
            "" => Err(format!("gain {s:?} needs a unit: dB or nat")),
            u => Err(format!("unknown gain unit {u:?} in {s:?}; use dB or nat")),
        }
    }
}

impl fmt::Display for Gain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gain::Db(v) => write!(f, "{v} dB"),
            Gain::Nat(v) => write!(f, "{v} nat"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Rad(f64),
    Deg(f64),
    /// Multiples of π.
    Pi(f64),
}

impl Default for Phase {
    fn default() -> Self {
        Phase::Rad(0.0)
    }
}

impl Phase {
    pub fn radians(self) -> f64 {
        match self {
            Phase::Rad(v) => v,
            Phase::Deg(v) => v.to_radians(),
            Phase::Pi(v) => v * PI,
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (value, unit) = split_quantity(s)?;
        if !value.is_finite() {
            return Err(format!("phase {s:?} must be finite"));
        }
        match unit {
            "rad" => Ok(Phase::Rad(value)),
            "deg" => Ok(Phase::Deg(value)),
            "pi" => Ok(Phase::Pi(value)),
            "" => Err(format!("phase {s:?} needs a unit: rad, deg or pi")),
            u => Err(format!("unknown phase unit {u:?} in {s:?}; use rad, deg or pi")),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Rad(v) => write!(f, "{v} rad"),
            Phase::Deg(v) => write!(f, "{v} deg"),
            Phase::Pi(v) => write!(f, "{v} pi"),
        }
    }
}

fn split_quantity(s: &str) -> Result<(f64, &str), String> {
    let s = s.trim();
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(s.len());
    // "1e" followed by a unit letter: back off the exponent marker
    let (mut num, mut rest) = s.split_at(end);
    if num.ends_with(['e', 'E']) {
        num = &num[..num.len() - 1];
        rest = &s[num.len()..];
    }
    let value = num
        .parse::<f64>()
        .map_err(|_| format!("cannot read a number from {s:?}"))?;
    Ok((value, rest.trim()))
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Gain);
string_serde!(Phase);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Decoupled,
    Schrodinger,
    Lindblad,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Decoupled => "decoupled",
            Mode::Schrodinger => "schrodinger",
            Mode::Lindblad => "lindblad",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub gain: Gain,
    #[serde(default)]
    pub phase: Phase,
    /// Time since the previous pulse (or since `t = 0` for the first).
    #[serde(default)]
    pub delay: f64,
    /// Relative pump coupling.
    #[serde(default = "one")]
    pub coupling: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    /// Emitter Rabi frequency relative to the reference `Ω`.
    #[serde(default = "one")]
    pub rabi: f64,
    /// Gaussian pump width.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Free evolution after the last pulse.
    #[serde(default)]
    pub final_flight: f64,
    #[serde(default)]
    pub pulses: Vec<PulseConfig>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            rabi: 1.0,
            width: DEFAULT_WIDTH,
            final_flight: 0.0,
            pulses: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub cavity_decay: f64,
    #[serde(default)]
    pub dephasing: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.cavity_decay == 0.0 && self.dephasing == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub atol: f64,
    pub rtol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Highest photon number with its own trajectory columns.
    #[serde(default = "default_max_photon")]
    pub max_photon: usize,
    #[serde(default = "yes")]
    pub phases: bool,
    /// Trajectory columns drawn in the SVG.
    #[serde(default = "default_plot")]
    pub plot: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            samples: default_samples(),
            max_photon: default_max_photon(),
            phases: true,
            plot: default_plot(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    #[serde(default = "default_max_entries")]
    pub max_entries: usize,
    /// Diagonalise every k-th sample; 0 checks the final state only.
    #[serde(default)]
    pub positivity_stride: usize,
}

impl Default for LindbladConfig {
    fn default() -> Self {
        LindbladConfig {
            max_entries: default_max_entries(),
            positivity_stride: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainAxis {
    pub start: Gain,
    pub stop: Gain,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayAxis {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl From<Axis> for DelayAxis {
    fn from(a: Axis) -> Self {
        DelayAxis {
            start: a.start,
            stop: a.stop,
            steps: a.steps,
        }
    }
}

impl From<DelayAxis> for Axis {
    fn from(a: DelayAxis) -> Self {
        Axis::new(a.start, a.stop, a.steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub zeta1: GainAxis,
    pub t1: DelayAxis,
    pub zeta2: GainAxis,
    pub t2: DelayAxis,
    pub zeta3: GainAxis,
    #[serde(default = "default_phases")]
    pub phases: [Phase; 3],
}

impl GridConfig {
    fn from_spec(g: &GridSpec) -> Self {
        let gains = |a: Axis| GainAxis {
            start: Gain::Db(a.start),
            stop: Gain::Db(a.stop),
            steps: a.steps,
        };
        GridConfig {
            zeta1: gains(g.zeta1_db),
            t1: g.t1.into(),
            zeta2: gains(g.zeta2_db),
            t2: g.t2.into(),
            zeta3: gains(g.zeta3_db),
            phases: g.phases.map(Phase::Rad),
        }
    }

    pub fn spec(&self) -> GridSpec {
        let gains = |a: GainAxis| Axis::new(a.start.db(), a.stop.db(), a.steps);
        GridSpec {
            zeta1_db: gains(self.zeta1),
            t1: self.t1.into(),
            zeta2_db: gains(self.zeta2),
            t2: self.t2.into(),
            zeta3_db: gains(self.zeta3),
            phases: self.phases.map(Phase::radians),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPulseConfig {
    pub zeta1: Gain,
    #[serde(default)]
    pub phi1: Phase,
    pub zeta2: GainAxis,
    /// Phases on `(−π, π]`, the last one at π.
    pub phi2_steps: usize,
    pub t1: DelayAxis,
}

impl Default for TwoPulseConfig {
    fn default() -> Self {
        TwoPulseConfig {
            zeta1: Gain::Nat(0.58),
            phi1: Phase::Rad(0.0),
            zeta2: GainAxis {
                start: Gain::Nat(0.0),
                stop: Gain::Nat(1.2),
                steps: 121,
            },
            phi2_steps: 36,
            t1: DelayAxis {
                start: 0.0,
                stop: 1.5,
                steps: 151,
            },
        }
    }
}

impl TwoPulseConfig {
    pub fn spec(&self) -> TwoPulseSpec {
        TwoPulseSpec {
            zeta1: self.zeta1.nats(),
            phi1: self.phi1.radians(),
            zeta2: Axis::new(self.zeta2.start.nats(), self.zeta2.stop.nats(), self.zeta2.steps),
            phi2: Axis::phase(self.phi2_steps),
            t1: self.t1.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKindConfig {
    #[default]
    ThreePulse,
    TwoPulse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub kind: SweepKindConfig,
    #[serde(default = "default_targets")]
    pub targets: Vec<usize>,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub keep_tensor: bool,
    /// Wall-clock budget; an exhausted budget yields a partial result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_seconds: Option<f64>,
    #[serde(default = "default_refine_candidates")]
    pub refine_candidates: usize,
    #[serde(default = "default_refine_factor")]
    pub refine_factor: usize,
    #[serde(default = "one_usize")]
    pub refine_span: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_pulse: Option<TwoPulseConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kind: SweepKindConfig::ThreePulse,
            targets: default_targets(),
            refine: true,
            top_k: default_top_k(),
            keep_tensor: false,
            time_budget_seconds: None,
            refine_candidates: default_refine_candidates(),
            refine_factor: default_refine_factor(),
            refine_span: 1,
            grid: None,
            two_pulse: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(default = "one_usize")]
    pub target: usize,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    /// Lindblad samples per run; only the endpoint enters the table.
    #[serde(default = "default_converge_samples")]
    pub samples: usize,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            target: 1,
            cutoffs: default_cutoffs(),
            samples: default_converge_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Free-space emitter decay rate Γ₀ in 1/s.
    #[serde(default = "default_emitter_decay")]
    pub emitter_decay: f64,
    /// Wavelength λ₀ in metres.
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    /// Mode volume in units of λ₀³.
    #[serde(default = "default_mode_volume")]
    pub mode_volume: f64,
    /// Cavity decay rates in units of `Ω`.
    #[serde(default = "default_cavity_decays")]
    pub cavity_decays: Vec<f64>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            emitter_decay: default_emitter_decay(),
            wavelength: default_wavelength(),
            mode_volume: default_mode_volume(),
            cavity_decays: default_cavity_decays(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub lindblad: LindbladConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Decoupled,
            cutoff: default_cutoff(),
            workers: None,
            sequence: SequenceConfig::default(),
            noise: NoiseConfig::default(),
            tolerances: None,
            output: OutputConfig::default(),
            lindblad: LindbladConfig::default(),
            sweep: None,
            converge: None,
            estimate: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub cutoff: Option<usize>,
    pub mode: Option<Mode>,
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sweep,
    Converge,
    Estimate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Converge => "converge",
            Command::Estimate => "estimate",
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Canonical TOML text; parsing it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies overrides, fills the defaults the command depends on and
    /// checks every constraint of the underlying modules.
    pub fn resolve(mut self, command: Command, o: Overrides) -> Result<Self, CliError> {
        if let Some(c) = o.cutoff {
            self.cutoff = c;
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        match command {
            Command::Simulate => {
                self.fill_tolerances();
            }
            Command::Sweep => {
                let mut s = self.sweep.take().unwrap_or_default();
                match s.kind {
                    SweepKindConfig::ThreePulse => {
                        s.grid.get_or_insert_with(|| GridConfig::from_spec(&GridSpec::default()));
                    }
                    SweepKindConfig::TwoPulse => {
                        s.two_pulse.get_or_insert_with(TwoPulseConfig::default);
                    }
                }
                self.sweep = Some(s);
            }
            Command::Converge => {
                self.converge.get_or_insert_with(ConvergeConfig::default);
                self.fill_tolerances();
            }
            Command::Estimate => {
                self.estimate.get_or_insert_with(EstimateConfig::default);
            }
        }
        self.validate(command)?;
        Ok(self)
    }

    fn fill_tolerances(&mut self) {
        if self.tolerances.is_none() {
            let t = match self.mode {
                Mode::Lindblad => Some(Tolerances::lindblad()),
                Mode::Schrodinger => Some(Tolerances::schrodinger()),
                Mode::Decoupled => None,
            };
            self.tolerances = t.map(|t| ToleranceConfig {
                atol: t.atol,
                rtol: t.rtol,
            });
        }
    }

    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        if self.cutoff == 0 {
            return Err(CliError::Config("cutoff must be at least 1".into()));
        }
        if self.cutoff > MAX_CUTOFF {
            return Err(CliError::Resource(format!(
                "cutoff {} exceeds the limit {MAX_CUTOFF}",
                self.cutoff
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        self.sequence()?;
        self.noise()?;
        if let Some(t) = self.tolerances() {
            t.validate().map_err(config)?;
        }
        if self.output.samples == 0 {
            return Err(CliError::Config("output.samples must be at least 1".into()));
        }
        if self.lindblad.max_entries == 0 {
            return Err(CliError::Config("lindblad.max_entries must be positive".into()));
        }
        match command {
            Command::Simulate => {
                if self.mode != Mode::Lindblad && !self.noise.is_zero() {
                    return Err(CliError::Config(format!(
                        "noise rates need mode = \"lindblad\", not {:?}",
                        self.mode.as_str()
                    )));
                }
                if self.output.max_photon > self.cutoff {
                    return Err(CliError::Config(format!(
                        "output.max_photon {} exceeds the cutoff {}",
                        self.output.max_photon, self.cutoff
                    )));
                }
            }
            Command::Sweep => self.validate_sweep()?,
            Command::Converge => {
                let c = self.converge.as_ref().expect("resolved");
                if self.mode == Mode::Schrodinger {
                    return Err(CliError::Config(
                        "converge runs in decoupled or lindblad mode".into(),
                    ));
                }
                if self.mode == Mode::Decoupled && !self.noise.is_zero() {
                    return Err(CliError::Config("noise rates need mode = \"lindblad\"".into()));
                }
                if c.cutoffs.is_empty() {
                    return Err(CliError::Config("converge.cutoffs is empty".into()));
                }
                if c.cutoffs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::Config(format!(
                        "converge.cutoffs must be strictly ascending, got {:?}",
                        c.cutoffs
                    )));
                }
                if let Some(&m) = c.cutoffs.iter().max() {
                    if m > MAX_CUTOFF {
                        return Err(CliError::Resource(format!(
                            "cutoff {m} exceeds the limit {MAX_CUTOFF}"
                        )));
                    }
                }
                if c.cutoffs[0] < c.target {
                    return Err(CliError::Config(format!(
                        "cutoff {} is below the target {}",
                        c.cutoffs[0], c.target
                    )));
                }
                if c.samples == 0 {
                    return Err(CliError::Config("converge.samples must be at least 1".into()));
                }
            }
            Command::Estimate => {
                let e = self.estimate.as_ref().expect("resolved");
                let positive = [e.emitter_decay, e.wavelength, e.mode_volume];
                if !positive.iter().all(|x| x.is_finite() && *x > 0.0) {
                    return Err(CliError::Config(
                        "estimate.emitter_decay, wavelength and mode_volume must be positive".into(),
                    ));
                }
                if !e.cavity_decays.iter().all(|x| x.is_finite() && *x > 0.0) {
                    return Err(CliError::Config("estimate.cavity_decays must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn validate_sweep(&self) -> Result<(), CliError> {
        let s = self.sweep.as_ref().expect("resolved");
        if s.targets.is_empty() {
            return Err(CliError::Config("sweep.targets is empty".into()));
        }
        if let Some(&n) = s.targets.iter().find(|&&n| n == 0 || n > self.cutoff) {
            return Err(CliError::Config(format!(
                "sweep target {n} must lie in 1..={}",
                self.cutoff
            )));
        }
        if s.top_k == 0 {
            return Err(CliError::Config("sweep.top_k must be at least 1".into()));
        }
        if s.refine && (s.refine_candidates == 0 || s.refine_factor == 0) {
            return Err(CliError::Config(
                "sweep.refine_candidates and refine_factor must be at least 1".into(),
            ));
        }
        if let Some(b) = s.time_budget_seconds {
            if !(b.is_finite() && b > 0.0) {
                return Err(CliError::Config("sweep.time_budget_seconds must be positive".into()));
            }
        }
        if !(self.sequence.rabi.is_finite() && self.sequence.rabi >= 0.0) {
            return Err(CliError::Config("sequence.rabi must be non-negative".into()));
        }
        match s.kind {
            SweepKindConfig::ThreePulse => {
                let g = s.grid.as_ref().expect("resolved");
                g.spec().validate().map_err(config)?;
            }
            SweepKindConfig::TwoPulse => {
                let t = s.two_pulse.as_ref().expect("resolved");
                if t.phi2_steps == 0 {
                    return Err(CliError::Config("sweep.two_pulse.phi2_steps must be at least 1".into()));
                }
                t.spec().validate().map_err(config)?;
                if s.targets.len() != 1 {
                    return Err(CliError::Config("a two-pulse sweep takes exactly one target".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sequence(&self) -> Result<PulseSequence, CliError> {
        let s = &self.sequence;
        let pulses = s
            .pulses
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let gain = ParametricGain::new(p.gain.nats(), p.phase.radians())
                    .map_err(|e| CliError::Config(format!("pulse {k}: {e}")))?;
                if gain.magnitude() > gain_from_db(MAX_GAIN_DB).map_err(config)? + 1e-12 {
                    return Err(CliError::Config(format!(
                        "pulse {k}: gain {} exceeds {MAX_GAIN_DB} dB",
                        p.gain
                    )));
                }
                let mut pulse = PumpPulse::new(gain, p.delay).with_width(s.width);
                pulse.coupling = p.coupling;
                Ok(pulse)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seq = PulseSequence::new(pulses)
            .with_rabi(s.rabi)
            .with_final_flight(s.final_flight)
            .with_width(s.width);
        seq.validate().map_err(config)?;
        if seq.total_delay() > MAX_TOTAL_DELAY + 1e-12 {
            log::warn!(
                "total delay {} exceeds {MAX_TOTAL_DELAY} periods",
                seq.total_delay()
            );
        }
        Ok(seq)
    }

    pub fn noise(&self) -> Result<NoiseParams, CliError> {
        let n = NoiseParams {
            cavity_decay: self.noise.cavity_decay,
            dephasing: self.noise.dephasing,
        };
        n.validate().map_err(config)?;
        Ok(n)
    }

    pub fn tolerances(&self) -> Option<Tolerances> {
        self.tolerances.map(|t| Tolerances {
            atol: t.atol,
            rtol: t.rtol,
        })
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let s = self.sweep.clone().unwrap_or_default();
        SweepOptions {
            cutoff: self.cutoff,
            rabi: self.sequence.rabi,
            top_k: s.top_k.max(if s.refine { s.refine_candidates } else { 1 }),
            keep_tensor: s.keep_tensor,
            time_budget: s.time_budget_seconds.map(Duration::from_secs_f64),
            workers: self.workers,
            ..SweepOptions::default()
        }
    }

    pub fn refine_options(&self) -> RefineOptions {
        let s = self.sweep.clone().unwrap_or_default();
        RefineOptions {
            candidates: s.refine_candidates,
            factor: s.refine_factor,
            span: s.refine_span,
        }
    }
}

fn config(e: fockforge::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_width() -> f64 {
    DEFAULT_WIDTH
}
fn default_cutoff() -> usize {
    fockforge::hilbert::DEFAULT_CUTOFF
}
fn default_samples() -> usize {
    fockforge::dynamics::DEFAULT_SAMPLES
}
fn default_max_photon() -> usize {
    10
}
fn default_plot() -> Vec<String> {
    vec!["fock_1".into(), "fock_2".into(), "fock_3".into()]
}
fn default_max_entries() -> usize {
    fockforge::dynamics::DEFAULT_MAX_ENTRIES
}
fn default_phases() -> [Phase; 3] {
    [Phase::Rad(0.0), Phase::Pi(1.0), Phase::Rad(0.0)]
}
fn default_targets() -> Vec<usize> {
    vec![1]
}
fn default_top_k() -> usize {
    10
}
fn default_refine_candidates() -> usize {
    10
}
fn default_refine_factor() -> usize {
    5
}
fn default_cutoffs() -> Vec<usize> {
    vec![50, 60, 70]
}
fn default_converge_samples() -> usize {
    2
}
fn default_emitter_decay() -> f64 {
    1e9
}
fn default_wavelength() -> f64 {
    600e-9
}
fn default_mode_volume() -> f64 {
    10.0
}
fn default_cavity_decays() -> Vec<f64> {
    vec![0.001, 0.008, 0.03]
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = r#"
mode = "decoupled"
cutoff = 30

[sequence]
[[sequence.pulses]]
gain = "0.58 nat"

[[sequence.pulses]]
gain = "0.58 nat"
phase = "1 pi"
delay = 0.59
"#;

    #[test]
    fn units_parse() {
        assert_eq!("4.76 dB".parse::<Gain>().unwrap(), Gain::Db(4.76));
        assert_eq!("0.58nat".parse::<Gain>().unwrap(), Gain::Nat(0.58));
        assert_eq!("1e-1 nat".parse::<Gain>().unwrap(), Gain::Nat(0.1));
        assert!("0.58".parse::<Gain>().is_err());
        assert!("0.58 furlong".parse::<Gain>().is_err());
        assert!("-1 dB".parse::<Gain>().is_err());
        assert_eq!("180 deg".parse::<Phase>().unwrap().radians(), PI);
        assert_eq!("1 pi".parse::<Phase>().unwrap().radians(), PI);
        assert!("3.1".parse::<Phase>().is_err());
        let g = Gain::Db(10.0 * 2.0 * 1.7 / std::f64::consts::LN_10);
        assert_eq!(g.to_string().parse::<Gain>().unwrap(), g);
    }

    #[test]
    fn db_and_nats_agree() {
        let g = Gain::Db(5.7);
        assert!((g.nats() - 0.6563).abs() < 1e-3);
        assert!((Gain::Nat(g.nats()).db() - 5.7).abs() < 1e-12);
    }

    #[test]
    fn canonical_round_trip() {
        for cmd in [Command::Simulate, Command::Sweep, Command::Converge, Command::Estimate] {
            let c = RunConfig::from_toml(FIG)
                .unwrap()
                .resolve(cmd, Overrides::default())
                .unwrap();
            let text = c.to_toml();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, c, "{cmd:?}\n{text}");
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::from_toml(FIG)
            .unwrap()
            .resolve(
                Command::Simulate,
                Overrides {
                    cutoff: Some(12),
                    mode: Some(Mode::Schrodinger),
                    workers: Some(2),
                },
            )
            .unwrap();
        assert_eq!(c.cutoff, 12);
        assert_eq!(c.mode, Mode::Schrodinger);
        assert_eq!(c.workers, Some(2));
        assert_eq!(c.tolerances().unwrap(), Tolerances::schrodinger());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "cutoff = 0",
            "mode = \"quantum\"",
            "[sequence]\n[[sequence.pulses]]\ngain = \"0.5\"",
            "[sequence]\n[[sequence.pulses]]\ngain = \"20 dB\"",
            "[noise]\ncavity_decay = 0.01",
            "[noise]\ncavity_decay = -0.01\n",
            "unknown = 1",
            "[output]\nmax_photon = 80",
        ];
        for text in bad {
            let r = RunConfig::from_toml(text).and_then(|c| c.resolve(Command::Simulate, Overrides::default()));
            assert!(matches!(r, Err(CliError::Config(_))), "{text}: {r:?}");
        }
        let big = RunConfig::from_toml("cutoff = 100000")
            .unwrap()
            .resolve(Command::Simulate, Overrides::default());
        assert_eq!(big.unwrap_err().exit_code(), 4);
    }

    #[test]
    fn sweep_defaults_resolve_to_lattice() {
        let c = RunConfig::default()
            .resolve(Command::Sweep, Overrides::default())
            .unwrap();
        let grid = c.sweep.unwrap().grid.unwrap().spec();
        assert_eq!(grid, GridSpec::default());
    }

    #[test]
    fn sequence_matches_core_builder() {
        let c = RunConfig::from_toml(FIG).unwrap();
        let seq = c.sequence().unwrap();
        let direct = PulseSequence::from_gains(&[(0.58, 0.0), (0.58, PI)], &[0.59]).unwrap();
        assert_eq!(seq.centers(), direct.centers());
        assert_eq!(seq.pulses[1].gain, direct.pulses[1].gain);
    }
}
