//! Second-order split-operator propagation of the multi-channel vibronic
//! TDSE.
//!
//! The Hamiltonian is `T + V + W(t)`: nuclear kinetic energy `T` (the same
//! in every channel), channel potentials `V(x)` and the dipole coupling
//! `W = −E(t)·M`. With Condon dipoles `M` acts on the channel index only,
//! so it commutes with `T` and both can be applied together in momentum
//! space. One Strang step is `V/2 · T·W · V/2`; the potential halves of
//! consecutive steps are fused, which leaves two FFTs per channel per step.
//!
//! `M` only touches the ground channel, the excited channel and the uniform
//! combination `u = Σ_k c_k / √N_c` of the continuum bins, so its
//! exponential reduces to a 3×3 unitary on `(g, e, u)` built from one
//! eigendecomposition per propagator.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, TimeGrid, VibronicState};
use crate::model::{SystemModel, FIRST_CONTINUUM};
use crate::pulse::SampledField;
use crate::units::{kinetic_prefactor_ev, HBAR_EV_FS};

/// Knobs for [`propagate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationOptions {
    /// Apply a cos^(1/8) absorbing mask over the outer 10% of the grid.
    pub absorbing_mask: bool,
    /// Largest tolerated change of the total norm (including absorbed and
    /// collected population) over a run.
    pub norm_tolerance: f64,
    /// Boundary population that triggers a warning.
    pub boundary_warning: f64,
    /// Record channel populations every this many steps (0 = never).
    pub record_every: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { absorbing_mask: false, norm_tolerance: 1e-8, boundary_warning: 1e-4, record_every: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_norm_drift: f64,
    pub boundary_leakage: f64,
    pub absorbed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub final_state: VibronicState,
    /// Continuum population at the end of the run plus anything collected
    /// from the continuum earlier.
    pub ionization_yield: f64,
    /// `(t, populations)` samples when requested.
    pub populations: Vec<(f64, Vec<f64>)>,
    pub diagnostics: Diagnostics,
}

/// Precomputed split-operator factors for one grid, model and time step.
///
/// `dt` may be negative, in which case every step is the exact inverse of
/// the corresponding forward step.
pub struct SplitOperator {
    n: usize,
    n_channels: usize,
    dt: f64,
    /// `exp(−iT dt/ħ) / n`, folding in the inverse FFT normalisation.
    kinetic: Vec<Complex64>,
    /// `exp(−iV dt/2ħ)`, channel-major.
    potential_half: Vec<Complex64>,
    /// `exp(−iV dt/ħ)` times the absorbing mask, channel-major.
    potential_full: Vec<Complex64>,
    /// Mask applied with the closing half step, if any.
    mask: Option<Vec<f64>>,
    /// Eigenvectors (columns) and eigenvalues of the 3×3 coupling matrix.
    coupling_vectors: Matrix3<f64>,
    coupling_values: [f64; 3],
    continuum_weight: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    sum: Vec<Complex64>,
}

impl SplitOperator {
    pub fn new(grid: &SpatialGrid, model: &SystemModel, dt: f64, absorbing_mask: bool) -> Result<Self> {
        model.validate()?;
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::config("dt must be finite and non-zero"));
        }
        let n = grid.n_points();
        let n_channels = model.n_channels();
        let t_pref = kinetic_prefactor_ev();
        let phase = |energy: f64, tau: f64| Complex64::from_polar(1.0, -energy * tau / HBAR_EV_FS);
        let inv_n = 1.0 / n as f64;
        let kinetic = grid.momenta().iter().map(|k| phase(t_pref * k * k, dt) * inv_n).collect();

        let mask: Option<Vec<f64>> = absorbing_mask.then(|| {
            let width = 0.1 * grid.extent();
            grid.positions()
                .iter()
                .map(|&x| {
                    let depth = (grid.x_min() + width - x).max(x - (grid.x_max() - width)).max(0.0);
                    (FRAC_PI_2 * depth / width).cos().abs().powf(0.125)
                })
                .collect()
        });
        let potentials = model.channel_potentials(grid);
        let mut potential_half = Vec::with_capacity(n * n_channels);
        let mut potential_full = Vec::with_capacity(n * n_channels);
        for v in &potentials {
            for (j, &e) in v.iter().enumerate() {
                potential_half.push(phase(e, 0.5 * dt));
                let m = mask.as_ref().map_or(1.0, |m| m[j]);
                potential_full.push(phase(e, dt) * m);
            }
        }

        let n_c = model.continuum.n_bins as f64;
        let w = model.continuum.coupling_weight() * n_c.sqrt();
        #[rustfmt::skip]
        let m = Matrix3::new(
            0.0, model.mu_ge, model.mu_gc_direct * w,
            model.mu_ge, 0.0, model.mu_ec * w,
            model.mu_gc_direct * w, model.mu_ec * w, 0.0,
        );
        let eig = SymmetricEigen::new(m);

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        Ok(Self {
            n,
            n_channels,
            dt,
            kinetic,
            potential_half,
            potential_full,
            mask,
            coupling_vectors: eig.eigenvectors,
            coupling_values: [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]],
            continuum_weight: 1.0 / n_c.sqrt(),
            fft,
            ifft,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            sum: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `exp(+iE dt M/ħ)` in the `(g, e, u)` basis.
    fn coupling_unitary(&self, field: f64) -> [[Complex64; 3]; 3] {
        let theta = field * self.dt / HBAR_EV_FS;
        let ph = self.coupling_values.map(|l| Complex64::from_polar(1.0, theta * l));
        let r = &self.coupling_vectors;
        let mut u = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (a, row) in u.iter_mut().enumerate() {
            for (b, z) in row.iter_mut().enumerate() {
                *z = (0..3).map(|j| ph[j] * (r[(a, j)] * r[(b, j)])).sum();
            }
        }
        u
    }

    fn multiply(buf: &mut [Complex64], factors: &[Complex64]) {
        for (z, f) in buf.iter_mut().zip(factors) {
            *z *= f;
        }
    }

    /// Kinetic phase and coupling in momentum space.
    fn kinetic_coupling(&mut self, buf: &mut [Complex64], field: f64) {
        let n = self.n;
        let u = self.coupling_unitary(field);
        let wc = self.continuum_weight;
        let (head, cont) = buf.split_at_mut(FIRST_CONTINUUM * n);
        let (g, e) = head.split_at_mut(n);
        let sum = &mut self.sum;
        sum.copy_from_slice(&cont[..n]);
        for ch in cont.chunks_exact(n).skip(1) {
            for (s, z) in sum.iter_mut().zip(ch) {
                *s += z;
            }
        }
        for x in 0..n {
            let s = sum[x] * wc;
            let (gx, ex) = (g[x], e[x]);
            let t = self.kinetic[x];
            g[x] = (u[0][0] * gx + u[0][1] * ex + u[0][2] * s) * t;
            e[x] = (u[1][0] * gx + u[1][1] * ex + u[1][2] * s) * t;
            let s2 = u[2][0] * gx + u[2][1] * ex + u[2][2] * s;
            sum[x] = (s2 - s) * wc;
        }
        for ch in cont.chunks_exact_mut(n) {
            for ((z, d), t) in ch.iter_mut().zip(sum.iter()).zip(&self.kinetic) {
                *z = (*z + d) * t;
            }
        }
    }

    /// Runs one Strang step per field sample on a flat channel-major buffer
    /// in position space. `field[j]` is the field at the midpoint of step j.
    pub fn evolve_flat(&mut self, buf: &mut [Complex64], field: &[f64]) {
        assert_eq!(buf.len(), self.n * self.n_channels);
        if field.is_empty() {
            return;
        }
        let half = std::mem::take(&mut self.potential_half);
        let full = std::mem::take(&mut self.potential_full);
        Self::multiply(buf, &half);
        for (step, &e) in field.iter().enumerate() {
            if step > 0 {
                Self::multiply(buf, &full);
            }
            self.fft.process_with_scratch(buf, &mut self.scratch);
            self.kinetic_coupling(buf, e);
            self.ifft.process_with_scratch(buf, &mut self.scratch);
        }
        Self::multiply(buf, &half);
        if let Some(mask) = &self.mask {
            for chunk in buf.chunks_exact_mut(self.n) {
                for (z, m) in chunk.iter_mut().zip(mask) {
                    *z *= *m;
                }
            }
        }
        self.potential_half = half;
        self.potential_full = full;
    }

    /// Like [`evolve_flat`](Self::evolve_flat) but stops every `chunk` steps
    /// to hand the position-space buffer to `observer`.
    pub fn evolve_chunked<F>(&mut self, buf: &mut [Complex64], field: &[f64], chunk: usize, mut observer: F)
    where
        F: FnMut(usize, &[Complex64]),
    {
        let chunk = chunk.max(1);
        let mut done = 0;
        for piece in field.chunks(chunk) {
            self.evolve_flat(buf, piece);
            done += piece.len();
            observer(done, buf);
        }
    }

    /// Evolves a [`VibronicState`] through the given field samples.
    pub fn evolve(&mut self, state: &mut VibronicState, field: &[f64]) -> Result<()> {
        if state.n_channels() != self.n_channels || state.grid.n_points() != self.n {
            return Err(Error::GridMismatch("state layout does not match the propagator".into()));
        }
        let mut buf = flatten(state);
        self.evolve_flat(&mut buf, field);
        unflatten(&buf, state);
        Ok(())
    }
}

pub(crate) fn flatten(state: &VibronicState) -> Vec<Complex64> {
    state.channels.iter().flatten().copied().collect()
}

pub(crate) fn unflatten(buf: &[Complex64], state: &mut VibronicState) {
    let n = state.grid.n_points();
    for (ch, chunk) in state.channels.iter_mut().zip(buf.chunks_exact(n)) {
        ch.copy_from_slice(chunk);
    }
}

pub(crate) fn flat_norm(buf: &[Complex64], dx: f64) -> f64 {
    buf.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx
}

pub(crate) fn flat_continuum_norm(buf: &[Complex64], n: usize, dx: f64) -> f64 {
    flat_norm(&buf[FIRST_CONTINUUM * n..], dx)
}

/// Moves all continuum population out of the state and returns it.
pub fn collect_continuum(state: &mut VibronicState) -> f64 {
    let collected: f64 = (FIRST_CONTINUUM..state.n_channels()).map(|c| state.channel_norm(c)).sum();
    for ch in state.channels.iter_mut().skip(FIRST_CONTINUUM) {
        ch.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    }
    collected
}

/// Propagates `initial` under `field` over `tg` and reads the ionisation
/// yield at the end.
pub fn propagate(
    initial: &VibronicState,
    model: &SystemModel,
    field: &SampledField,
    tg: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<PropagationResult> {
    propagate_with_collected(initial, 0.0, model, field, tg, opts)
}

/// As [`propagate`], for a state whose continuum was already partly
/// collected (`collected` is added to the yield and to the norm budget).
pub fn propagate_with_collected(
    initial: &VibronicState,
    collected: f64,
    model: &SystemModel,
    field: &SampledField,
    tg: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<PropagationResult> {
    let n_steps = tg.n_steps();
    if field.values.len() != n_steps {
        return Err(Error::config(format!(
            "field has {} samples but the time grid has {n_steps} steps",
            field.values.len()
        )));
    }
    if initial.n_channels() != model.n_channels() {
        return Err(Error::GridMismatch(format!(
            "state has {} channels, model needs {}",
            initial.n_channels(),
            model.n_channels()
        )));
    }
    let grid = initial.grid;
    let dx = grid.dx();
    let n = grid.n_points();
    let mut op = SplitOperator::new(&grid, model, tg.dt, opts.absorbing_mask)?;
    let mut buf = flatten(initial);
    let norm0 = flat_norm(&buf, dx);

    let mut populations = Vec::new();
    let mut max_drift = 0.0_f64;
    let mut absorbed = 0.0;
    let record = opts.record_every;
    let chunk = if record > 0 { record } else { 2000 };
    if record > 0 {
        populations.push((tg.t_start, channel_norms(&buf, n, dx)));
    }
    let mut prev_norm = norm0;
    op.evolve_chunked(&mut buf, &field.values, chunk, |done, b| {
        let norm = flat_norm(b, dx);
        if opts.absorbing_mask {
            absorbed += prev_norm - norm;
            prev_norm = norm;
        }
        max_drift = max_drift.max((norm + absorbed - norm0).abs());
        if record > 0 {
            populations.push((tg.t_start + done as f64 * tg.dt, channel_norms(b, n, dx)));
        }
    });

    let mut final_state = initial.clone();
    unflatten(&buf, &mut final_state);
    if max_drift > opts.norm_tolerance {
        return Err(Error::Unitarity { drift: max_drift, limit: opts.norm_tolerance });
    }
    let leakage = final_state.boundary_population(0.1);
    if leakage > opts.boundary_warning {
        log::warn!(
            "boundary population {leakage:.2e} exceeds {:.1e}; consider enabling the absorbing mask",
            opts.boundary_warning
        );
    }
    let ionization_yield = flat_continuum_norm(&buf, n, dx) + collected;
    Ok(PropagationResult {
        final_state,
        ionization_yield,
        populations,
        diagnostics: Diagnostics { max_norm_drift: max_drift, boundary_leakage: leakage, absorbed },
    })
}

fn channel_norms(buf: &[Complex64], n: usize, dx: f64) -> Vec<f64> {
    buf.chunks_exact(n).map(|c| flat_norm(c, dx)).collect()
}
