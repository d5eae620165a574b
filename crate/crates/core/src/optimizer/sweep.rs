use std::cmp::Ordering;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pair::{FinalStage, PairFlight, PairSqueeze, PairState};
use super::{Axis, GridSpec, RefineOptions, SweepOptions, TwoPulseSpec};
use crate::analysis::gain_from_db;
use crate::dynamics::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::squeeze::ParametricGain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    TwoPulse,
    ThreePulse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedAxis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl NamedAxis {
    fn new(name: &str, unit: &str, axis: &Axis) -> Self {
        NamedAxis {
            name: name.into(),
            unit: unit.into(),
            values: axis.values(),
        }
    }
}

/// One grid point; `values` follow the result's axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub values: Vec<f64>,
    pub probability: f64,
    /// Population at the truncation edge.
    pub leakage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub kind: SweepKind,
    pub target: usize,
    pub cutoff: usize,
    pub rabi: f64,
    pub phases: Vec<f64>,
    pub axes: Vec<NamedAxis>,
    pub best: Option<Candidate>,
    /// Best point of the coarse grid when the result was refined.
    pub coarse_best: Option<Candidate>,
    pub top: Vec<Candidate>,
    /// Row-major over `axes`; NaN where not evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<Vec<f64>>,
    pub max_leakage: f64,
    pub evaluated: usize,
    pub total: usize,
    pub completed_fraction: f64,
    pub partial: bool,
    pub refined: bool,
    pub elapsed_seconds: f64,
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    pub fn best_probability(&self) -> f64 {
        self.best.as_ref().map_or(f64::NAN, |c| c.probability)
    }

    /// Axis values at a flat tensor index.
    pub fn point(&self, index: usize) -> Vec<f64> {
        unravel(index, &self.shape())
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| a.values[k])
            .collect()
    }

    /// The stored tensor maximum agrees with the reported coarse best.
    pub fn argmax_consistent(&self) -> bool {
        let Some(t) = &self.tensor else { return true };
        let coarse = self.coarse_best.as_ref().or(self.best.as_ref());
        let max = t.iter().cloned().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        match coarse {
            Some(c) => c.probability == max,
            None => t.iter().all(|v| v.is_nan()),
        }
    }

    pub fn to_json(&self, include_tensor: bool) -> Result<String> {
        if include_tensor || self.tensor.is_none() {
            Ok(serde_json::to_string_pretty(self)?)
        } else {
            let mut slim = self.clone();
            slim.tensor = None;
            Ok(serde_json::to_string_pretty(&slim)?)
        }
    }

    pub fn write_top_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["rank".to_string()];
        header.extend(self.axes.iter().map(|a| a.name.clone()));
        header.extend(["probability".into(), "leakage".into()]);
        wr.write_record(&header)?;
        for (rank, c) in self.top.iter().enumerate() {
            let mut rec = vec![(rank + 1).to_string()];
            rec.extend(c.values.iter().map(|v| format!("{v:.6}")));
            rec.push(format!("{:.8}", c.probability));
            rec.push(format!("{:.3e}", c.leakage));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Long-format landscape: one row per grid point.
    pub fn write_landscape_csv<W: Write>(&self, w: W) -> Result<()> {
        let Some(t) = &self.tensor else {
            return Err(Error::InvalidParameter(
                "landscape export needs the probability tensor".into(),
            ));
        };
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.axes.iter().map(|a| a.name.clone()).collect();
        header.push("probability".into());
        wr.write_record(&header)?;
        for (i, p) in t.iter().enumerate() {
            let mut rec: Vec<String> = self.point(i).iter().map(|v| format!("{v:.6}")).collect();
            rec.push(format!("{p:.8}"));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn unravel(mut index: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for (k, &n) in shape.iter().enumerate().rev() {
        out[k] = index % n;
        index /= n;
    }
    out
}

/// Keeps the `k` largest values; ties go to the lower index.
#[derive(Clone, Debug)]
struct TopK {
    k: usize,
    items: Vec<(f64, usize, f64)>,
}

fn rank(a: &(f64, usize, f64), b: &(f64, usize, f64)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k: k.max(1),
            items: Vec::new(),
        }
    }

    fn push(&mut self, p: f64, index: usize, leak: f64) {
        let item = (p, index, leak);
        if self.items.len() == self.k && rank(&item, self.items.last().unwrap()) != Ordering::Less {
            return;
        }
        let pos = self.items.partition_point(|x| rank(x, &item) == Ordering::Less);
        self.items.insert(pos, item);
        self.items.truncate(self.k);
    }

    fn merge(&mut self, other: &TopK) {
        for &(p, i, l) in &other.items {
            self.push(p, i, l);
        }
    }
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn check_targets(targets: &[usize], cutoff: usize) -> Result<()> {
    if cutoff == 0 {
        return Err(Error::InvalidParameter("sweeps need cutoff ≥ 1".into()));
    }
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no target photon number given".into()));
    }
    if let Some(&n) = targets.iter().find(|&&n| n >= cutoff) {
        return Err(Error::InvalidParameter(format!(
            "target {n} must be below the cutoff {cutoff}"
        )));
    }
    Ok(())
}

fn gains(axis: &Axis, phase: f64, db: bool) -> Result<Vec<ParametricGain>> {
    axis.values()
        .into_iter()
        .map(|v| ParametricGain::new(if db { gain_from_db(v)? } else { v }, phase))
        .collect()
}

struct Chunk {
    top: Vec<TopK>,
    tensor: Vec<Vec<f64>>,
    max_leak: f64,
    evaluated: usize,
}

/// Exhaustive three-pulse search for one target.
pub fn sweep_three_pulse(grid: &GridSpec, target: usize, opts: &SweepOptions) -> Result<SweepResult> {
    Ok(sweep_three_pulse_targets(grid, &[target], opts)?.remove(0))
}

/// Exhaustive three-pulse search for several targets sharing one walk.
///
/// The walk is depth first over `(ζ₁, T₁, ζ₂)` with the `(T₂, ζ₃)` leaves
/// evaluated in one batch per prefix; workers split the `ζ₁` axis.
pub fn sweep_three_pulse_targets(
    grid: &GridSpec,
    targets: &[usize],
    opts: &SweepOptions,
) -> Result<Vec<SweepResult>> {
    grid.validate()?;
    let c = opts.cutoff;
    check_targets(targets, c)?;
    let start = Instant::now();
    let deadline = opts.time_budget.map(|d| start + d);
    let shape = grid.shape();
    let total = grid.size();
    if opts.keep_tensor && total.saturating_mul(targets.len()) > opts.max_tensor_entries {
        return Err(Error::ResourceLimit {
            what: "probability tensor",
            required: total * targets.len(),
            limit: opts.max_tensor_entries,
        });
    }
    let g = PI * opts.rabi;
    let squeeze1: Vec<PairSqueeze> = gains(&grid.zeta1_db, grid.phases[0], true)?
        .into_iter()
        .map(|r| PairSqueeze::new(c, r))
        .collect();
    let squeeze2: Vec<PairSqueeze> = gains(&grid.zeta2_db, grid.phases[1], true)?
        .into_iter()
        .map(|r| PairSqueeze::new(c, r))
        .collect();
    let flights1: Vec<PairFlight> = grid.t1.values().iter().map(|&t| PairFlight::new(c, g, t)).collect();
    let flights2: Vec<PairFlight> = grid.t2.values().iter().map(|&t| PairFlight::new(c, g, t)).collect();
    let stage = FinalStage::new(c, &gains(&grid.zeta3_db, grid.phases[2], true)?, targets);
    let [_, n_t1, n_z2, n_t2, n_z3] = shape;
    let inner = n_t1 * n_z2 * n_t2 * n_z3;
    let stop = AtomicBool::new(false);

    let work = |i: usize| -> Chunk {
        let mut chunk = Chunk {
            top: vec![TopK::new(opts.top_k); targets.len()],
            tensor: if opts.keep_tensor {
                vec![vec![f64::NAN; inner]; targets.len()]
            } else {
                Vec::new()
            },
            max_leak: 0.0,
            evaluated: 0,
        };
        let s1 = PairState::vacuum(c).squeezed(&squeeze1[i]);
        for (j, f1) in flights1.iter().enumerate() {
            if stop.load(AtomicOrdering::Relaxed) || deadline.is_some_and(|d| Instant::now() > d) {
                stop.store(true, AtomicOrdering::Relaxed);
                break;
            }
            let s2 = s1.flown(f1);
            for (k, sq2) in squeeze2.iter().enumerate() {
                let s3 = s2.squeezed(sq2);
                let batch: Vec<PairState> = flights2.iter().map(|f| s3.flown(f)).collect();
                let p = stage.evaluate(&batch);
                for l in 0..n_t2 {
                    for m in 0..n_z3 {
                        let local = ((j * n_z2 + k) * n_t2 + l) * n_z3 + m;
                        let index = i * inner + local;
                        let leak = p[(stage.edge_row(m), l)];
                        chunk.max_leak = chunk.max_leak.max(leak);
                        for t in 0..targets.len() {
                            let prob = p[(stage.row(m, t), l)];
                            chunk.top[t].push(prob, index, leak);
                            if opts.keep_tensor {
                                chunk.tensor[t][local] = prob;
                            }
                        }
                    }
                }
                chunk.evaluated += n_t2 * n_z3;
            }
        }
        chunk
    };
    let chunks: Vec<Chunk> = in_pool(opts.workers, || (0..shape[0]).into_par_iter().map(work).collect())?;

    let axes = vec![
        NamedAxis::new("zeta1_db", "dB", &grid.zeta1_db),
        NamedAxis::new("t1", "2pi/Omega", &grid.t1),
        NamedAxis::new("zeta2_db", "dB", &grid.zeta2_db),
        NamedAxis::new("t2", "2pi/Omega", &grid.t2),
        NamedAxis::new("zeta3_db", "dB", &grid.zeta3_db),
    ];
    let evaluated: usize = chunks.iter().map(|c| c.evaluated).sum();
    let max_leak = chunks.iter().map(|c| c.max_leak).fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    let results = targets
        .iter()
        .enumerate()
        .map(|(t, &target)| {
            let mut top = TopK::new(opts.top_k);
            for ch in &chunks {
                top.merge(&ch.top[t]);
            }
            let tensor = opts
                .keep_tensor
                .then(|| chunks.iter().flat_map(|ch| ch.tensor[t].iter().copied()).collect());
            finish(
                SweepKind::ThreePulse,
                target,
                opts,
                grid.phases.to_vec(),
                axes.clone(),
                &top,
                tensor,
                max_leak,
                evaluated,
                total,
                elapsed,
            )
        })
        .collect();
    Ok(results)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: SweepKind,
    target: usize,
    opts: &SweepOptions,
    phases: Vec<f64>,
    axes: Vec<NamedAxis>,
    top: &TopK,
    tensor: Option<Vec<f64>>,
    max_leakage: f64,
    evaluated: usize,
    total: usize,
    elapsed: f64,
) -> SweepResult {
    let mut r = SweepResult {
        schema_version: SCHEMA_VERSION,
        kind,
        target,
        cutoff: opts.cutoff,
        rabi: opts.rabi,
        phases,
        axes,
        best: None,
        coarse_best: None,
        top: Vec::new(),
        tensor,
        max_leakage,
        evaluated,
        total,
        completed_fraction: if total == 0 { 1.0 } else { evaluated as f64 / total as f64 },
        partial: evaluated < total,
        refined: false,
        elapsed_seconds: elapsed,
    };
    r.top = top
        .items
        .iter()
        .map(|&(p, i, l)| Candidate {
            values: r.point(i),
            probability: p,
            leakage: l,
        })
        .collect();
    r.best = r.top.first().cloned();
    r
}

/// Re-searches a grid `factor` times finer within `±span` coarse steps of
/// each of the best coarse candidates. Local grids are clipped to the
/// coarse grid's range.
pub fn refine_three_pulse(
    grid: &GridSpec,
    coarse: &SweepResult,
    opts: &SweepOptions,
    refine: RefineOptions,
) -> Result<SweepResult> {
    let start = Instant::now();
    let mut out = coarse.clone();
    out.coarse_best = coarse.best.clone();
    out.refined = true;
    let mut winners: Vec<Candidate> = Vec::new();
    for cand in coarse.top.iter().take(refine.candidates) {
        let remaining = opts.time_budget.map(|b| b.saturating_sub(start.elapsed()));
        if remaining == Some(Duration::ZERO) {
            out.partial = true;
            break;
        }
        let local = grid.around(&cand.values, refine.factor, refine.span);
        let local_opts = SweepOptions {
            keep_tensor: false,
            top_k: 1,
            time_budget: remaining,
            ..*opts
        };
        let r = sweep_three_pulse(&local, coarse.target, &local_opts)?;
        out.evaluated += r.evaluated;
        out.total += r.total;
        out.partial |= r.partial;
        out.max_leakage = out.max_leakage.max(r.max_leakage);
        winners.extend(r.best);
    }
    winners.extend(coarse.best.clone());
    winners.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    winners.dedup_by(|a, b| a.values == b.values);
    out.best = winners.first().cloned();
    out.top = winners;
    out.completed_fraction = out.evaluated as f64 / out.total.max(1) as f64;
    out.elapsed_seconds += start.elapsed().as_secs_f64();
    Ok(out)
}

/// Coarse search for every target followed by local refinement.
pub fn optimize_three_pulse(
    grid: &GridSpec,
    targets: &[usize],
    opts: &SweepOptions,
    refine: RefineOptions,
) -> Result<Vec<SweepResult>> {
    let start = Instant::now();
    let coarse_opts = SweepOptions {
        top_k: opts.top_k.max(refine.candidates),
        ..*opts
    };
    let coarse = sweep_three_pulse_targets(grid, targets, &coarse_opts)?;
    coarse
        .iter()
        .map(|c| {
            let refine_opts = SweepOptions {
                time_budget: opts.time_budget.map(|b| b.saturating_sub(start.elapsed())),
                ..*opts
            };
            refine_three_pulse(grid, c, &refine_opts, refine)
        })
        .collect()
}

/// Landscape over `ζ₂ × φ₂ × T₁` after two pulses. The tensor is always
/// kept.
pub fn sweep_two_pulse(spec: &TwoPulseSpec, target: usize, opts: &SweepOptions) -> Result<SweepResult> {
    spec.validate()?;
    let c = opts.cutoff;
    check_targets(&[target], c)?;
    let start = Instant::now();
    let total = spec.size();
    if total > opts.max_tensor_entries {
        return Err(Error::ResourceLimit {
            what: "probability tensor",
            required: total,
            limit: opts.max_tensor_entries,
        });
    }
    let g = PI * opts.rabi;
    let s1 = PairState::vacuum(c).squeezed(&PairSqueeze::new(c, ParametricGain::new(spec.zeta1, spec.phi1)?));
    let batch: Vec<PairState> = spec
        .t1
        .values()
        .iter()
        .map(|&t| s1.flown(&PairFlight::new(c, g, t)))
        .collect();
    let mut second = Vec::with_capacity(spec.zeta2.steps * spec.phi2.steps);
    for z in spec.zeta2.values() {
        for phi in spec.phi2.values() {
            second.push(ParametricGain::new(z, phi)?);
        }
    }
    let n_t1 = spec.t1.steps;
    const GAINS_PER_BLOCK: usize = 256;
    let blocks: Vec<(usize, Vec<(f64, f64)>)> = in_pool(opts.workers, || {
        second
            .par_chunks(GAINS_PER_BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let stage = FinalStage::new(c, chunk, &[target]);
                let p = stage.evaluate(&batch);
                let mut vals = Vec::with_capacity(chunk.len() * n_t1);
                for m in 0..chunk.len() {
                    for l in 0..n_t1 {
                        vals.push((p[(stage.row(m, 0), l)], p[(stage.edge_row(m), l)]));
                    }
                }
                (b, vals)
            })
            .collect()
    })?;
    let mut tensor = Vec::with_capacity(total);
    let mut top = TopK::new(opts.top_k);
    let mut max_leak: f64 = 0.0;
    for (_, vals) in blocks {
        for (p, leak) in vals {
            top.push(p, tensor.len(), leak);
            max_leak = max_leak.max(leak);
            tensor.push(p);
        }
    }
    let axes = vec![
        NamedAxis::new("zeta2", "nat", &spec.zeta2),
        NamedAxis::new("phi2", "rad", &spec.phi2),
        NamedAxis::new("t1", "2pi/Omega", &spec.t1),
    ];
    Ok(finish(
        SweepKind::TwoPulse,
        target,
        opts,
        vec![spec.phi1],
        axes,
        &top,
        Some(tensor),
        max_leak,
        total,
        total,
        start.elapsed().as_secs_f64(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fock_probability;
    use crate::dynamics::evolve_decoupled;
    use crate::hilbert::{make_basis, HybridState};

    fn small_grid() -> GridSpec {
        GridSpec::uniform(Axis::new(0.0, 12.0, 4), Axis::new(0.0, 1.2, 4))
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let mut t = TopK::new(3);
        for (i, p) in [0.1, 0.5, 0.5, 0.2, 0.9, 0.05].iter().enumerate() {
            t.push(*p, i, 0.0);
        }
        let idx: Vec<usize> = t.items.iter().map(|x| x.1).collect();
        assert_eq!(idx, vec![4, 1, 2]);
    }

    #[test]
    fn sweep_points_match_direct_evolution() {
        let grid = small_grid();
        let opts = SweepOptions {
            cutoff: 16,
            keep_tensor: true,
            ..Default::default()
        };
        let r = sweep_three_pulse(&grid, 2, &opts).unwrap();
        let t = r.tensor.as_ref().unwrap();
        assert_eq!(t.len(), 4usize.pow(5));
        let v = HybridState::vacuum(make_basis(16));
        for idx in [0, 17, 300, 511, 1023] {
            let seq = grid.sequence(&r.point(idx)).unwrap();
            let direct = evolve_decoupled(&v, &seq).unwrap();
            let p = fock_probability(&direct.state, 2).unwrap();
            assert!((p - t[idx]).abs() < 1e-12, "{idx}: {p} vs {}", t[idx]);
        }
        assert!(r.argmax_consistent());
        assert!(!r.partial);
    }

    #[test]
    fn zero_gains_give_zero_probability() {
        let grid = GridSpec::uniform(Axis::fixed(0.0), Axis::new(0.0, 1.0, 3));
        let r = sweep_three_pulse_targets(&grid, &[1, 2, 5], &SweepOptions { cutoff: 10, ..Default::default() })
            .unwrap();
        for res in r {
            assert_eq!(res.best_probability(), 0.0);
        }
    }

    #[test]
    fn refinement_never_loses_the_coarse_best() {
        let grid = small_grid();
        let opts = SweepOptions {
            cutoff: 16,
            top_k: 2,
            ..Default::default()
        };
        let coarse = sweep_three_pulse(&grid, 1, &opts).unwrap();
        let refined = refine_three_pulse(
            &grid,
            &coarse,
            &opts,
            RefineOptions {
                candidates: 2,
                factor: 2,
                span: 1,
            },
        )
        .unwrap();
        assert!(refined.best_probability() >= coarse.best_probability() - 1e-12);
        assert!(refined.refined);
    }

    #[test]
    fn exhausted_budget_gives_partial_result() {
        let grid = small_grid();
        let opts = SweepOptions {
            cutoff: 12,
            time_budget: Some(Duration::ZERO),
            ..Default::default()
        };
        let r = sweep_three_pulse(&grid, 1, &opts).unwrap();
        assert!(r.partial);
        assert!(r.completed_fraction < 1.0);
    }

    #[test]
    fn oversized_tensor_is_refused() {
        let opts = SweepOptions {
            cutoff: 12,
            keep_tensor: true,
            max_tensor_entries: 100,
            ..Default::default()
        };
        assert!(matches!(
            sweep_three_pulse(&small_grid(), 1, &opts),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn two_pulse_degenerate_grid() {
        let spec = TwoPulseSpec {
            zeta1: 0.58,
            phi1: 0.0,
            zeta2: Axis::fixed(0.58),
            phi2: Axis::fixed(PI),
            t1: Axis::fixed(0.59),
        };
        let r = sweep_two_pulse(&spec, 1, &SweepOptions { cutoff: 30, ..Default::default() }).unwrap();
        assert_eq!(r.tensor.as_ref().unwrap().len(), 1);
        assert!((r.best_probability() - 0.5).abs() < 0.05);
        let mut buf = Vec::new();
        r.write_landscape_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn identical_inputs_give_identical_tensors() {
        let opts = SweepOptions {
            cutoff: 12,
            keep_tensor: true,
            ..Default::default()
        };
        let a = sweep_three_pulse(&small_grid(), 1, &opts).unwrap();
        let b = sweep_three_pulse(&small_grid(), 1, &SweepOptions { workers: Some(2), ..opts }).unwrap();
        let bits = |r: &SweepResult| r.tensor.as_ref().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
