//! Pump-probe delay scans and the trace file format.
//!
//! All points of a scan share one pump-only propagation. It is stopped at
//! the start of each probe window, and each (delay, phase) job propagates
//! from that checkpoint through its own window under the full field.
//! Once the pump is over, its continuum population is moved into a
//! collected tally so the discretised continuum cannot recur into later
//! probe windows.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_sinusoid, phase_cycle};
use crate::error::{Error, Result};
use crate::grid::{harmonic_ground_state, SpatialGrid, TimeGrid, VibronicState};
use crate::model::SystemModel;
use crate::propagator::{collect_continuum, flatten, propagate_with_collected, unflatten, PropagationOptions, SplitOperator};
use crate::pulse::{synthesize_unchecked, PulseSequence, SpectralPulse};

pub const TRACE_SCHEMA: &str = "# attoscope-trace v1";
pub const TRACE_META_SCHEMA: &str = "attoscope-trace-meta v1";
pub const TRACE_COLUMNS: [&str; 3] = ["delay_fs", "phase_rad", "yield"];

/// Numerical parameters shared by every propagation of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub grid: SpatialGrid,
    pub dt_fs: f64,
    pub absorbing_mask: bool,
    pub norm_tolerance: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { grid: SpatialGrid::default(), dt_fs: 0.005, absorbing_mask: false, norm_tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub delays_fs: Vec<f64>,
    pub phases_rad: Vec<f64>,
    pub model: SystemModel,
    /// Template sequence; its own delay and phase are ignored.
    pub pulses: PulseSequence,
    pub numerics: Numerics,
}

impl ScanSpec {
    pub fn new(delays_fs: Vec<f64>, model: SystemModel, pulses: PulseSequence) -> Self {
        Self {
            delays_fs,
            phases_rad: vec![0.0, std::f64::consts::PI],
            model,
            pulses,
            numerics: Numerics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays_fs.is_empty() {
            return Err(Error::config("scan: delay list is empty"));
        }
        if self.delays_fs.iter().any(|d| !d.is_finite()) {
            return Err(Error::config("scan: delays must be finite"));
        }
        if let Some(w) = self.delays_fs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::config(format!("scan: delays must be strictly increasing ({} then {})", w[0], w[1])));
        }
        if self.phases_rad.is_empty() || self.phases_rad.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("scan: phase list must be non-empty and finite"));
        }
        self.model.validate()?;
        self.pulses.validate()?;
        self.numerics.grid.validate()?;
        let period = std::f64::consts::TAU / self.pulses.pump.central_frequency.max(self.pulses.probe.central_frequency);
        TimeGrid::new(0.0, 1.0, self.numerics.dt_fs)?.check_resolves(period, 50.0)?;
        if !(self.numerics.norm_tolerance > 0.0) {
            return Err(Error::config("numerics: norm_tolerance must be positive"));
        }
        Ok(())
    }

    /// Non-fatal problems worth recording with the output.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let carrier = self.model.carrier_angular();
        let nyquist_step = std::f64::consts::PI / carrier;
        if let Some(step) = uniform_step(&self.delays_fs) {
            if step > nyquist_step {
                out.push(format!(
                    "delay step {step} fs undersamples the {:.1} as carrier (Nyquist step {:.4} fs)",
                    self.model.carrier_period_as(),
                    nyquist_step
                ));
            }
        }
        let h = self.pulses.half_extent();
        if self.delays_fs[0] < h {
            out.push(format!("delays below {:.1} fs have overlapping pump and probe", h));
        }
        out
    }

    pub fn n_points(&self) -> usize {
        self.delays_fs.len() * self.phases_rad.len()
    }
}

pub(crate) fn uniform_step(delays: &[f64]) -> Option<f64> {
    if delays.len() < 2 {
        return None;
    }
    let step = (delays[delays.len() - 1] - delays[0]) / (delays.len() - 1) as f64;
    delays
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-6 * step.abs().max(1e-12))
        .then_some(step)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanDiagnostics {
    pub max_norm_drift: f64,
    pub max_boundary_leakage: f64,
    /// Continuum population removed after the pump.
    pub collected_after_pump: f64,
}

/// Everything needed to interpret a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub schema: String,
    pub tool_version: String,
    /// "tdse", "analytic" or "synthetic".
    pub source: String,
    #[serde(default)]
    pub spec: Option<ScanSpec>,
    #[serde(default)]
    pub diagnostics: ScanDiagnostics,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Fully resolved run configuration, when produced by the CLI.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

impl TraceMetadata {
    pub fn new(source: &str) -> Self {
        Self {
            schema: TRACE_META_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            source: source.to_string(),
            spec: None,
            diagnostics: ScanDiagnostics::default(),
            warnings: Vec::new(),
            config: None,
        }
    }
}

/// Yield on a (delay × phase) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IonizationTrace {
    pub delays_fs: Vec<f64>,
    pub phases_rad: Vec<f64>,
    /// `yields[i][j]` at `delays_fs[i]`, `phases_rad[j]`.
    pub yields: Vec<Vec<f64>>,
    pub metadata: TraceMetadata,
}

impl IonizationTrace {
    pub fn new(delays_fs: Vec<f64>, phases_rad: Vec<f64>, yields: Vec<Vec<f64>>, metadata: TraceMetadata) -> Result<Self> {
        if yields.len() != delays_fs.len() || yields.iter().any(|r| r.len() != phases_rad.len()) {
            return Err(Error::Schema("yield array does not match the delay and phase axes".into()));
        }
        Ok(Self { delays_fs, phases_rad, yields, metadata })
    }

    /// Builds a trace by evaluating `f(delay, phase)` on the grid.
    pub fn from_fn(delays_fs: &[f64], phases_rad: &[f64], metadata: TraceMetadata, f: impl Fn(f64, f64) -> f64) -> Self {
        let yields = delays_fs.iter().map(|&d| phases_rad.iter().map(|&p| f(d, p)).collect()).collect();
        Self { delays_fs: delays_fs.to_vec(), phases_rad: phases_rad.to_vec(), yields, metadata }
    }

    /// Index of the phase column equal to `phase` modulo 2π.
    pub fn phase_index(&self, phase: f64) -> Option<usize> {
        self.phases_rad.iter().position(|&p| {
            let d = (p - phase).rem_euclid(std::f64::consts::TAU);
            d.min(std::f64::consts::TAU - d) < 1e-9
        })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.yields.iter().map(|r| r[j]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * self.delays_fs.len() * self.phases_rad.len() + 64);
        s.push_str(TRACE_SCHEMA);
        s.push('\n');
        s.push_str(&TRACE_COLUMNS.join(","));
        s.push('\n');
        for (d, row) in self.delays_fs.iter().zip(&self.yields) {
            for (p, y) in self.phases_rad.iter().zip(row) {
                let _ = writeln!(s, "{d:.16e},{p:.16e},{y:.16e}");
            }
        }
        s
    }

    /// Parses the CSV body; metadata comes from the sidecar, if any.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let tag = lines.next().ok_or_else(|| Error::Schema("empty file".into()))?;
        if tag.trim() != TRACE_SCHEMA {
            return Err(Error::Schema(format!("expected schema tag `{TRACE_SCHEMA}`, found `{}`", tag.trim())));
        }
        let header = lines.next().ok_or_else(|| Error::Schema("missing column header".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != TRACE_COLUMNS {
            let missing: Vec<&str> = TRACE_COLUMNS.iter().copied().filter(|c| !cols.contains(c)).collect();
            let extra: Vec<&str> = cols.iter().copied().filter(|c| !TRACE_COLUMNS.contains(c)).collect();
            return Err(Error::Schema(format!(
                "columns must be {}; missing [{}], unexpected [{}]",
                TRACE_COLUMNS.join(","),
                missing.join(","),
                extra.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            match vals {
                Ok(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
                _ => return Err(Error::Schema(format!("row {}: expected three numbers, got `{line}`", k + 1))),
            }
        }
        if rows.is_empty() {
            return Err(Error::Schema("no data rows".into()));
        }
        let mut delays: Vec<f64> = Vec::new();
        let mut phases: Vec<f64> = Vec::new();
        for &(d, p, _) in &rows {
            if delays.last() != Some(&d) {
                delays.push(d);
            }
            if !phases.contains(&p) {
                phases.push(p);
            }
        }
        if rows.len() != delays.len() * phases.len() {
            return Err(Error::Schema("rows do not form a complete delay × phase grid".into()));
        }
        let mut yields = vec![vec![0.0; phases.len()]; delays.len()];
        for (k, &(d, p, y)) in rows.iter().enumerate() {
            let (i, j) = (k / phases.len(), k % phases.len());
            if delays[i] != d || phases[j] != p {
                return Err(Error::Schema(format!("row {} out of delay-major order", k + 1)));
            }
            yields[i][j] = y;
        }
        Self::new(delays, phases, yields, TraceMetadata::new("unknown"))
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes the CSV and its JSON metadata sidecar.
    pub fn write(&self, csv: &Path) -> Result<()> {
        fs::write(csv, self.to_csv())?;
        fs::write(Self::sidecar_path(csv), serde_json::to_string_pretty(&self.metadata)? + "\n")?;
        Ok(())
    }

    /// Reads a trace CSV; the sidecar is used when present.
    pub fn read(csv: &Path) -> Result<Self> {
        let mut trace = Self::from_csv(&fs::read_to_string(csv)?)?;
        let side = Self::sidecar_path(csv);
        if side.exists() {
            let meta: TraceMetadata = serde_json::from_str(&fs::read_to_string(side)?)?;
            if meta.schema != TRACE_META_SCHEMA {
                return Err(Error::Schema(format!("metadata schema `{}` is not `{TRACE_META_SCHEMA}`", meta.schema)));
            }
            trace.metadata = meta;
        }
        Ok(trace)
    }
}

/// One finished (delay, phase) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub delay_index: usize,
    pub phase_index: usize,
    pub delay_fs: f64,
    pub phase_rad: f64,
    pub ionization_yield: f64,
    pub norm_drift: f64,
    pub boundary_leakage: f64,
}

/// Execution controls that do not change the result.
#[derive(Default)]
pub struct ScanOptions<'a> {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Points already computed, keyed by (delay index, phase index).
    pub completed: HashMap<(usize, usize), ScanPoint>,
    /// Called in scan order for every newly computed point.
    pub on_point: Option<Box<dyn FnMut(&ScanPoint) + 'a>>,
}

struct Checkpoint {
    step: usize,
    state: VibronicState,
    collected: f64,
}

struct JobOutput {
    ionization_yield: f64,
    drift: f64,
    leakage: f64,
}

/// Timing shared by every job of a scan.
struct ScanClock {
    t0: f64,
    dt: f64,
    half_extent: f64,
}

impl ScanClock {
    fn new(spec: &ScanSpec) -> Self {
        let h = spec.pulses.half_extent();
        Self { t0: spec.delays_fs[0].min(0.0) - h, dt: spec.numerics.dt_fs, half_extent: h }
    }

    fn step_at_or_before(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt) + 1e-9).floor().max(0.0) as usize
    }

    fn step_at_or_after(&self, t: f64) -> usize {
        (((t - self.t0) / self.dt) - 1e-9).ceil().max(0.0) as usize
    }

    fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    /// First and one-past-last step of the probe window for `delay`.
    fn window(&self, delay: f64) -> (usize, usize) {
        let start = self.step_at_or_before(delay - self.half_extent);
        let end = self.step_at_or_after(delay + self.half_extent).max(start + 1);
        (start, end)
    }

    fn pump_end_step(&self) -> usize {
        self.step_at_or_after(self.half_extent)
    }
}

fn initial_state(spec: &ScanSpec) -> Result<VibronicState> {
    harmonic_ground_state(
        &spec.numerics.grid,
        spec.model.ground.vib_frequency_cm(),
        spec.model.ground.minimum_position(),
        spec.model.n_channels(),
    )
}

fn propagation_options(spec: &ScanSpec) -> PropagationOptions {
    PropagationOptions {
        absorbing_mask: spec.numerics.absorbing_mask,
        norm_tolerance: spec.numerics.norm_tolerance,
        ..PropagationOptions::default()
    }
}

/// Field samples for steps `[start, end)`, containing only the pulses whose
/// support reaches the window.
fn window_field(clock: &ScanClock, pulses: &[(&SpectralPulse, f64)], start: usize, end: usize) -> Result<Vec<f64>> {
    let (a, b) = (clock.time(start), clock.time(end));
    let h = clock.half_extent;
    let active: Vec<(&SpectralPulse, f64)> = pulses.iter().filter(|(_, c)| c + h > a && c - h < b).copied().collect();
    if active.is_empty() {
        return Ok(vec![0.0; end - start]);
    }
    // Synthesis is periodic in time; cover the whole support of every active
    // pulse so no tail wraps into a short window.
    let lo = active.iter().map(|(_, c)| c - h).fold(a, f64::min);
    let hi = active.iter().map(|(_, c)| c + h).fold(b, f64::max);
    let before = ((a - lo) / clock.dt).ceil() as usize;
    let after = ((hi - b) / clock.dt).ceil() as usize;
    let n = end - start;
    let shapes: Vec<&SpectralPulse> = active.iter().map(|(p, _)| *p).collect();
    let t0 = a + 0.5 * clock.dt - before as f64 * clock.dt;
    let field = synthesize_unchecked(&shapes, t0, clock.dt, before + n + after)?;
    Ok(field.values[before..before + n].to_vec())
}

fn run_job(spec: &ScanSpec, clock: &ScanClock, cp: &Checkpoint, delay: f64, phase: f64) -> Result<JobOutput> {
    let seq = spec.pulses.with_delay(delay).with_phase(phase);
    let probe = seq.shaped_probe();
    let (start, end) = clock.window(delay);
    debug_assert_eq!(start, cp.step);
    let field = window_field(clock, &[(&seq.pump, 0.0), (&probe, delay)], start, end)?;
    let tg = TimeGrid::with_steps(clock.time(start), end - start, clock.dt)?;
    let sampled = crate::pulse::SampledField { t0: tg.midpoint(0), dt: clock.dt, values: field, imag_ratio: 0.0, clipped_fraction: 0.0 };
    let r = propagate_with_collected(&cp.state, cp.collected, &spec.model, &sampled, &tg, &propagation_options(spec))?;
    Ok(JobOutput {
        ionization_yield: r.ionization_yield,
        drift: r.diagnostics.max_norm_drift,
        leakage: r.diagnostics.boundary_leakage,
    })
}

/// Runs one propagation per (delay, phase) point.
pub fn run_delay_scan(spec: &ScanSpec) -> Result<IonizationTrace> {
    run_delay_scan_with(spec, ScanOptions::default())
}

pub fn run_delay_scan_with(spec: &ScanSpec, mut opts: ScanOptions<'_>) -> Result<IonizationTrace> {
    spec.validate()?;
    let pool = match opts.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("worker pool: {e}")))?,
        ),
        None => None,
    };
    let clock = ScanClock::new(spec);
    let n_phases = spec.phases_rad.len();
    let mut yields = vec![vec![f64::NAN; n_phases]; spec.delays_fs.len()];
    let mut diag = ScanDiagnostics::default();

    let model = &spec.model;
    let grid = spec.numerics.grid;
    let mut op = SplitOperator::new(&grid, model, clock.dt, spec.numerics.absorbing_mask)?;
    let mut pump_state = flatten(&initial_state(spec)?);
    let mut pump_step = 0usize;
    let mut collected = 0.0;
    let collect_step = clock.pump_end_step();
    let pump_only = [(&spec.pulses.pump, 0.0)];
    let dx = grid.dx();
    let norm0 = crate::propagator::flat_norm(&pump_state, dx);
    let template = initial_state(spec)?;
    let mut scratch = template.clone();
    let completed = std::mem::take(&mut opts.completed);

    // advance the pump-only propagation to `target`, collecting the
    // continuum when passing the end of the pump
    let mut advance = |state: &mut Vec<num_complex::Complex64>, from: &mut usize, target: usize, collected: &mut f64| -> Result<()> {
        while *from < target {
            let stop = if *from < collect_step { target.min(collect_step) } else { target };
            let field = window_field(&clock, &pump_only, *from, stop)?;
            for piece in field.chunks(4096) {
                op.evolve_flat(state, piece);
            }
            *from = stop;
            if *from == collect_step {
                unflatten(state, &mut scratch);
                *collected += collect_continuum(&mut scratch);
                *state = flatten(&scratch);
            }
        }
        Ok(())
    };

    const BLOCK: usize = 32;
    let delays = &spec.delays_fs;
    let mut i = 0;
    while i < delays.len() {
        let block_end = (i + BLOCK).min(delays.len());
        let mut checkpoints = Vec::new();
        for (k, &delay) in delays[i..block_end].iter().enumerate() {
            let idx = i + k;
            let (start, _) = clock.window(delay);
            let todo = (0..n_phases).any(|j| !completed.contains_key(&(idx, j)));
            if start < pump_step {
                // windows are monotone in the delay; only rounding can land here
                return Err(Error::config("probe windows out of order"));
            }
            advance(&mut pump_state, &mut pump_step, start, &mut collected)?;
            let drift = (crate::propagator::flat_norm(&pump_state, dx) + collected - norm0).abs();
            diag.max_norm_drift = diag.max_norm_drift.max(drift);
            if todo {
                let mut st = template.clone();
                unflatten(&pump_state, &mut st);
                checkpoints.push((idx, Checkpoint { step: start, state: st, collected }));
            }
        }
        let completed = &completed;
        let jobs: Vec<(usize, usize)> = checkpoints
            .iter()
            .enumerate()
            .flat_map(|(c, (idx, _))| (0..n_phases).filter(move |&j| !completed.contains_key(&(*idx, j))).map(move |j| (c, j)))
            .collect();
        let run = || -> Vec<Result<JobOutput>> {
            jobs.par_iter()
                .map(|&(c, j)| {
                    let (idx, cp) = &checkpoints[c];
                    let (d, p) = (delays[*idx], spec.phases_rad[j]);
                    run_job(spec, &clock, cp, d, p).map_err(|e| Error::ScanPoint { delay_fs: d, phase_rad: p, source: Box::new(e) })
                })
                .collect()
        };
        let results = match &pool {
            Some(pool) => pool.install(run),
            None => run(),
        };
        for (&(c, j), res) in jobs.iter().zip(results) {
            let out = res?;
            let idx = checkpoints[c].0;
            yields[idx][j] = out.ionization_yield;
            diag.max_norm_drift = diag.max_norm_drift.max(out.drift);
            diag.max_boundary_leakage = diag.max_boundary_leakage.max(out.leakage);
            if let Some(cb) = opts.on_point.as_mut() {
                cb(&ScanPoint {
                    delay_index: idx,
                    phase_index: j,
                    delay_fs: delays[idx],
                    phase_rad: spec.phases_rad[j],
                    ionization_yield: out.ionization_yield,
                    norm_drift: out.drift,
                    boundary_leakage: out.leakage,
                });
            }
        }
        i = block_end;
    }
    for (&(idx, j), p) in &completed {
        if idx < yields.len() && j < n_phases {
            yields[idx][j] = p.ionization_yield;
            diag.max_norm_drift = diag.max_norm_drift.max(p.norm_drift);
            diag.max_boundary_leakage = diag.max_boundary_leakage.max(p.boundary_leakage);
        }
    }
    diag.collected_after_pump = collected;
    let mut metadata = TraceMetadata::new("tdse");
    metadata.spec = Some(spec.clone());
    metadata.diagnostics = diag;
    metadata.warnings = spec.warnings();
    IonizationTrace::new(spec.delays_fs.clone(), spec.phases_rad.clone(), yields, metadata)
}

/// Propagates a single pump-probe sequence from the ground state over its
/// whole window, without checkpoints. Used as a reference for the scan.
pub fn single_point_yield(spec: &ScanSpec, delay: f64, phase: f64) -> Result<f64> {
    spec.validate()?;
    let seq = spec.pulses.with_delay(delay).with_phase(phase);
    let tg = seq.time_grid(spec.numerics.dt_fs, 0.0)?;
    let field = crate::pulse::synthesize_field(&seq, &tg)?;
    let r = crate::propagator::propagate(&initial_state(spec)?, &spec.model, &field, &tg, &propagation_options(spec))?;
    Ok(r.ionization_yield)
}

/// One refinement of [`convergence_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub name: String,
    pub amplitude_change: f64,
    pub period_change: f64,
    pub yield_change: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub baseline_amplitude: f64,
    pub baseline_period_as: f64,
    pub baseline_mean_yield: f64,
    pub refinements: Vec<RefinementResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    HalfTimeStep,
    DoubleGrid,
    DoubleContinuum,
}

impl Refinement {
    pub const ALL: [Refinement; 3] = [Refinement::HalfTimeStep, Refinement::DoubleGrid, Refinement::DoubleContinuum];

    pub fn name(self) -> &'static str {
        match self {
            Refinement::HalfTimeStep => "dt/2",
            Refinement::DoubleGrid => "grid x2",
            Refinement::DoubleContinuum => "continuum bins x2",
        }
    }

    pub fn apply(self, spec: &ScanSpec) -> ScanSpec {
        let mut s = spec.clone();
        match self {
            Refinement::HalfTimeStep => s.numerics.dt_fs *= 0.5,
            Refinement::DoubleGrid => s.numerics.grid = s.numerics.grid.refined(),
            Refinement::DoubleContinuum => s.model.continuum = s.model.continuum.with_bins(2 * s.model.continuum.n_bins),
        }
        s
    }
}

struct ConvergenceSample {
    amplitude: f64,
    period_as: f64,
    mean_yield: f64,
}

fn convergence_sample(spec: &ScanSpec) -> Result<ConvergenceSample> {
    let trace = run_delay_scan(spec)?;
    let (diff, _) = phase_cycle(&trace)?;
    let fit = fit_sinusoid(&diff.delays_fs, &diff.values, spec.model.carrier_angular())?;
    let all: Vec<f64> = trace.yields.iter().flatten().copied().collect();
    Ok(ConvergenceSample {
        amplitude: fit.amplitude,
        period_as: 1000.0 * std::f64::consts::TAU / fit.omega,
        mean_yield: all.iter().sum::<f64>() / all.len() as f64,
    })
}

/// Repeats a small scan under each refinement and reports relative changes
/// of the difference amplitude, the fitted carrier period and the mean
/// yield. A refinement passes when the period moves by less than 0.2% and
/// the amplitude and mean yield by less than 2%.
pub fn convergence_check(spec: &ScanSpec, refinements: &[Refinement]) -> Result<ConvergenceReport> {
    if spec.delays_fs.len() > 20 {
        return Err(Error::config("convergence check expects at most 20 delay points"));
    }
    if spec.phase_index_pair().is_none() {
        return Err(Error::config("convergence check needs phases 0 and pi"));
    }
    let base = convergence_sample(spec)?;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let mut out = Vec::new();
    for &r in refinements {
        let s = convergence_sample(&r.apply(spec))?;
        let amplitude_change = rel(s.amplitude, base.amplitude);
        let period_change = rel(s.period_as, base.period_as);
        let yield_change = rel(s.mean_yield, base.mean_yield);
        let passed = amplitude_change < 0.02 && period_change < 0.002 && yield_change < 0.02;
        log::info!("{}: amplitude {amplitude_change:.2e}, period {period_change:.2e}, yield {yield_change:.2e}", r.name());
        out.push(RefinementResult { name: r.name().to_string(), amplitude_change, period_change, yield_change, passed });
    }
    Ok(ConvergenceReport {
        baseline_amplitude: base.amplitude,
        baseline_period_as: base.period_as,
        baseline_mean_yield: base.mean_yield,
        passed: out.iter().all(|r| r.passed),
        refinements: out,
    })
}

impl ScanSpec {
    fn phase_index_pair(&self) -> Option<(usize, usize)> {
        let t = IonizationTrace::from_fn(&[0.0], &self.phases_rad, TraceMetadata::new("synthetic"), |_, _| 0.0);
        Some((t.phase_index(0.0)?, t.phase_index(std::f64::consts::PI)?))
    }
}
