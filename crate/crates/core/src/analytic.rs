//! Perturbative two-state model of the pump-probe signal.
//!
//! The pump leaves the molecule in `a0|0⟩χ₀ + a1|1⟩χ₁`; the probe ionises
//! both components and the yield carries an interference term
//! `2 Re[a0* a1 Q_c0* Q_c1 E0³ e^{−iφ} e^{−iω_e τ} ⟨χ₀(τ)|χ₁(τ)⟩]`.
//! The overlap is computed here by field-free grid propagation, which keeps
//! this module independent of the coupled-channel propagator.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analysis::DelayTrace;
use crate::error::{Error, Result};
use crate::grid::{harmonic_ground_state, overlap, SpatialGrid};
use crate::model::{evaluate_potential, franck_condon_progression, SystemModel};
use crate::pulse::SpectralPulse;
use crate::scan::{IonizationTrace, TraceMetadata};
use crate::units::{self, kinetic_prefactor_ev, HBAR_EV_FS};

pub const COHERENCE_SCHEMA: &str = "# attoscope-coherence v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapOptions {
    pub grid: SpatialGrid,
    pub dt_fs: f64,
    /// Sampling step of [`OverlapTable`]; a multiple of `dt_fs` is used.
    pub table_step_fs: f64,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self { grid: SpatialGrid::default(), dt_fs: 0.005, table_step_fs: 0.02 }
    }
}

/// Field-free split-operator pair: `χ₀` on the ground surface and `χ₁` on
/// the excited surface shifted down by `ħω_e`.
struct PairPropagator {
    grid: SpatialGrid,
    kinetic: Vec<Complex64>,
    half: [Vec<Complex64>; 2],
    full: [Vec<Complex64>; 2],
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    chi: [Vec<Complex64>; 2],
    /// Whether a half potential kick is still pending after the last step.
    open: bool,
}

impl PairPropagator {
    fn new(model: &SystemModel, opts: &OverlapOptions, dt: f64) -> Result<Self> {
        let grid = opts.grid;
        grid.validate()?;
        let xs = grid.positions();
        let shift = model.vertical_gap();
        let vg = evaluate_potential(&model.ground, &xs);
        let ve: Vec<f64> = evaluate_potential(&model.excited, &xs).into_iter().map(|v| v - shift).collect();
        let phase = |v: &[f64], f: f64| -> Vec<Complex64> { v.iter().map(|&e| Complex64::from_polar(1.0, -e * f * dt / HBAR_EV_FS)).collect() };
        let n = grid.n_points();
        let kp = kinetic_prefactor_ev();
        let kinetic = grid
            .momenta()
            .into_iter()
            .map(|k| Complex64::from_polar(1.0 / n as f64, -kp * k * k * dt / HBAR_EV_FS))
            .collect();
        let mut planner = FftPlanner::new();
        let chi0 = harmonic_ground_state(&grid, model.ground.vib_frequency_cm(), model.ground.minimum_position(), 1)?
            .channels
            .remove(0);
        Ok(Self {
            grid,
            kinetic,
            half: [phase(&vg, 0.5), phase(&ve, 0.5)],
            full: [phase(&vg, 1.0), phase(&ve, 1.0)],
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            chi: [chi0.clone(), chi0],
            open: false,
        })
    }

    fn step(&mut self, n: usize) {
        for _ in 0..n {
            for c in 0..2 {
                let pot = if self.open { &self.full[c] } else { &self.half[c] };
                let chi = &mut self.chi[c];
                chi.iter_mut().zip(pot).for_each(|(z, p)| *z *= p);
                self.fft.process(chi);
                chi.iter_mut().zip(&self.kinetic).for_each(|(z, k)| *z *= k);
                self.ifft.process(chi);
            }
            self.open = true;
        }
    }

    /// Overlap with the pending half kick applied to copies.
    fn overlap(&self) -> Result<Complex64> {
        if !self.open {
            return overlap(&self.grid, &self.chi[0], &self.grid, &self.chi[1]);
        }
        let close = |c: usize| -> Vec<Complex64> { self.chi[c].iter().zip(&self.half[c]).map(|(z, p)| z * p).collect() };
        overlap(&self.grid, &close(0), &self.grid, &close(1))
    }
}

/// `⟨χ₀(τ)|χ₁(τ)⟩` after vertical promotion at `τ = 0`, with the electronic
/// phase `e^{−iω_e τ}` removed (`ω_e` is the vertical gap).
pub fn vibrational_overlap(model: &SystemModel, tau: f64) -> Result<Complex64> {
    vibrational_overlap_with(model, tau, &OverlapOptions::default())
}

pub fn vibrational_overlap_with(model: &SystemModel, tau: f64, opts: &OverlapOptions) -> Result<Complex64> {
    if !(tau >= 0.0) {
        return Err(Error::config(format!("overlap delay must be non-negative, got {tau}")));
    }
    if !(opts.dt_fs > 0.0) {
        return Err(Error::config("overlap time step must be positive"));
    }
    let n = (tau / opts.dt_fs).ceil() as usize;
    if n == 0 {
        return PairPropagator::new(model, opts, opts.dt_fs)?.overlap();
    }
    let mut p = PairPropagator::new(model, opts, tau / n as f64)?;
    p.step(n);
    p.overlap()
}

/// Overlap sampled on a uniform delay grid starting at zero, with cubic
/// (Catmull-Rom) interpolation in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub step_fs: f64,
    pub values: Vec<Complex64>,
}

impl OverlapTable {
    pub fn compute(model: &SystemModel, tau_max: f64, opts: &OverlapOptions) -> Result<Self> {
        if !(tau_max >= 0.0) {
            return Err(Error::config("overlap table range must be non-negative"));
        }
        let sub = (opts.table_step_fs / opts.dt_fs).round().max(1.0) as usize;
        let step = sub as f64 * opts.dt_fs;
        let n = (tau_max / step).ceil() as usize + 3;
        let mut p = PairPropagator::new(model, opts, opts.dt_fs)?;
        let mut values = Vec::with_capacity(n + 1);
        values.push(p.overlap()?);
        for _ in 0..n {
            p.step(sub);
            values.push(p.overlap()?);
        }
        Ok(Self { step_fs: step, values })
    }

    pub fn tau_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step_fs
    }

    /// Interpolated overlap; delays outside the table are clamped to it.
    pub fn at(&self, tau: f64) -> Complex64 {
        let last = self.values.len() - 1;
        let x = (tau / self.step_fs).clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last.saturating_sub(1));
        let f = x - i as f64;
        let get = |k: isize| self.values[k.clamp(0, last as isize) as usize];
        let (p0, p1, p2, p3) = (get(i as isize - 1), get(i as isize), get(i as isize + 1), get(i as isize + 2));
        // below zero delay the overlap continues as its complex conjugate
        let p0 = if i == 0 { get(1).conj() } else { p0 };
        let f2 = f * f;
        let f3 = f2 * f;
        0.5 * (2.0 * p1 + (p2 - p0) * f + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f2 + (3.0 * p1 - p0 - 3.0 * p2 + p3) * f3)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{COHERENCE_SCHEMA}\ndelay_fs,re_overlap,im_overlap,abs_overlap\n");
        for (i, z) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", i as f64 * self.step_fs, z.re, z.im, z.norm());
        }
        s
    }
}

/// Overlap of the pump-excited and probe-excited packets for pulses of
/// finite bandwidth: each Franck-Condon line is weighted by the pump and
/// probe spectra at its frequency, phase masks included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFilterOverlap {
    /// `(ω_v − ω_e, w_v)` per vibronic line.
    pub lines: Vec<(f64, Complex64)>,
}

impl SpectralFilterOverlap {
    pub fn new(model: &SystemModel, pump: &SpectralPulse, probe: &SpectralPulse, n_levels: usize) -> Result<Self> {
        let grid = SpatialGrid::new(1024, -16.0, 16.0)?;
        let levels = franck_condon_progression(model, &grid, n_levels)?;
        let omega_e = model.carrier_angular();
        let mut lines = Vec::with_capacity(levels.len());
        let mut norm = 0.0;
        for l in &levels {
            let w = units::ev_to_angular(l.energy_ev);
            let fc2 = l.amplitude * l.amplitude;
            let a = pump.amplitude_shape(w) * probe.amplitude_shape(w);
            norm += fc2 * a;
            lines.push((w - omega_e, Complex64::from_polar(fc2 * a, pump.mask_phase(w) - probe.mask_phase(w))));
        }
        if !(norm > 0.0) {
            return Err(Error::config("pulse spectra do not overlap any vibronic line"));
        }
        lines.iter_mut().for_each(|(_, w)| *w /= norm);
        Ok(Self { lines })
    }

    /// Delta-pulse limit: plain Franck-Condon weights.
    pub fn franck_condon(model: &SystemModel, n_levels: usize) -> Result<Self> {
        let grid = SpatialGrid::new(1024, -16.0, 16.0)?;
        let levels = franck_condon_progression(model, &grid, n_levels)?;
        let omega_e = model.carrier_angular();
        Ok(Self {
            lines: levels
                .iter()
                .map(|l| (units::ev_to_angular(l.energy_ev) - omega_e, Complex64::new(l.amplitude * l.amplitude, 0.0)))
                .collect(),
        })
    }

    pub fn at(&self, tau: f64) -> Complex64 {
        self.lines.iter().map(|&(dw, w)| w * Complex64::from_polar(1.0, -dw * tau)).sum()
    }
}

/// `τ ↦ ⟨χ₀(τ)|χ₁(τ)⟩`.
#[derive(Clone)]
pub enum Overlap {
    /// Frozen nuclei.
    Unit,
    Table(Arc<OverlapTable>),
    SpectralFilter(Arc<SpectralFilterOverlap>),
    Function(Arc<dyn Fn(f64) -> Complex64 + Send + Sync>),
}

impl Overlap {
    pub fn at(&self, tau: f64) -> Complex64 {
        match self {
            Overlap::Unit => Complex64::new(1.0, 0.0),
            Overlap::Table(t) => t.at(tau),
            Overlap::SpectralFilter(s) => s.at(tau),
            Overlap::Function(f) => f(tau),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Overlap::Unit => "unit",
            Overlap::Table(_) => "franck-condon",
            Overlap::SpectralFilter(_) => "spectral-filter",
            Overlap::Function(_) => "custom",
        }
    }
}

impl std::fmt::Debug for Overlap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct TwoStateParams {
    pub a0: Complex64,
    pub a1: Complex64,
    /// `ω₁ − ω₀` (rad/fs).
    pub omega_e: f64,
    pub q_c0: Complex64,
    pub q_c1: Complex64,
    pub e0: f64,
    pub overlap: Overlap,
}

impl TwoStateParams {
    pub fn new(a0: Complex64, a1: Complex64, omega_e: f64, e0: f64, overlap: Overlap) -> Result<Self> {
        let p = Self { a0, a1, omega_e, q_c0: Complex64::new(1.0, 0.0), q_c1: Complex64::new(1.0, 0.0), e0, overlap };
        p.validate()?;
        Ok(p)
    }

    /// Sets `Q_c1/Q_c0` with `Q_c0 = 1`.
    pub fn with_q_ratio(mut self, ratio: Complex64) -> Self {
        self.q_c0 = Complex64::new(1.0, 0.0);
        self.q_c1 = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a0.norm_sqr() + self.a1.norm_sqr();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("|a0|^2 + |a1|^2 = {n}, expected 1")));
        }
        let o = self.overlap.at(0.0).norm();
        if o > 1.0 + 1e-9 {
            return Err(Error::config(format!("overlap at zero delay has magnitude {o} > 1")));
        }
        Ok(())
    }

    /// Weak-field amplitudes from the resonant pulse area of `pump`:
    /// `a1 = i sin θ`, `a0 = cos θ` with `θ = μ_ge E0 ∫env dt / 2ħ`.
    pub fn from_pulse_area(model: &SystemModel, pump: &SpectralPulse, overlap: Overlap) -> Result<Self> {
        let area = pump.field_amplitude * pump.transform_limited_duration() * (PI / (2.0 * LN_2)).sqrt();
        let theta = model.mu_ge * area / (2.0 * HBAR_EV_FS);
        Self::new(
            Complex64::new(theta.cos(), 0.0),
            Complex64::new(0.0, theta.sin()),
            model.carrier_angular(),
            pump.field_amplitude,
            overlap,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub rho01: Complex64,
    pub rho00: f64,
    pub rho11: f64,
}

/// Yield at delay `tau` and relative phase `phi`.
pub fn signal(p: &TwoStateParams, tau: f64, phi: f64) -> f64 {
    let e2 = p.e0 * p.e0;
    let cross = p.a0.conj() * p.a1 * p.q_c0.conj() * p.q_c1 * (e2 * p.e0)
        * Complex64::from_polar(1.0, -phi - p.omega_e * tau)
        * p.overlap.at(tau);
    (p.a0 * e2 * p.q_c0).norm_sqr() + (p.a1 * p.e0 * p.q_c1).norm_sqr() + 2.0 * cross.re
}

/// `ρ_mn(τ) = a_m* a_n e^{−i(ω_n−ω_m)τ} ⟨χ_m|χ_n⟩`.
pub fn density_matrix(p: &TwoStateParams, tau: f64) -> CoherencePoint {
    CoherencePoint {
        rho01: p.a0.conj() * p.a1 * Complex64::from_polar(1.0, -p.omega_e * tau) * p.overlap.at(tau),
        rho00: p.a0.norm_sqr(),
        rho11: p.a1.norm_sqr(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTrace {
    pub delays_fs: Vec<f64>,
    pub rho01: Vec<Complex64>,
    pub rho00: Vec<f64>,
    pub rho11: Vec<f64>,
}

impl CoherenceTrace {
    pub fn compute(p: &TwoStateParams, delays: &[f64]) -> Self {
        let pts: Vec<CoherencePoint> = delays.iter().map(|&t| density_matrix(p, t)).collect();
        Self {
            delays_fs: delays.to_vec(),
            rho01: pts.iter().map(|c| c.rho01).collect(),
            rho00: pts.iter().map(|c| c.rho00).collect(),
            rho11: pts.iter().map(|c| c.rho11).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{COHERENCE_SCHEMA}\ndelay_fs,re_rho01,im_rho01,rho00,rho11\n");
        for i in 0..self.delays_fs.len() {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.delays_fs[i], self.rho01[i].re, self.rho01[i].im, self.rho00[i], self.rho11[i]
            );
        }
        s
    }
}

/// Closed-form `S(τ,0) − S(τ,π)` and `S(τ,0) + S(τ,π)`.
pub fn difference_sum(p: &TwoStateParams, delays: &[f64]) -> (DelayTrace, DelayTrace) {
    let e3 = p.e0.powi(3);
    let sum = 2.0 * p.a0.norm_sqr() * (p.q_c0 * p.e0 * p.e0).norm_sqr() + 2.0 * p.a1.norm_sqr() * (p.q_c1 * p.e0).norm_sqr();
    let diff = delays
        .iter()
        .map(|&t| 4.0 * (p.q_c0.conj() * p.q_c1 * e3 * density_matrix(p, t).rho01).re)
        .collect();
    (DelayTrace { delays_fs: delays.to_vec(), values: diff }, DelayTrace { delays_fs: delays.to_vec(), values: vec![sum; delays.len()] })
}

/// Signal on a (delay, phase) grid in the same layout as a TDSE scan.
pub fn signal_trace(p: &TwoStateParams, delays: &[f64], phases: &[f64]) -> Result<IonizationTrace> {
    let mut meta = TraceMetadata::new("analytic");
    meta.warnings.push(format!("overlap model: {}", p.overlap.name()));
    Ok(IonizationTrace::from_fn(delays, phases, meta, |t, phi| signal(p, t, phi)))
}
