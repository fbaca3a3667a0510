//! Spatial and temporal grids and the multi-channel vibronic state.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Uniform periodic grid over the dimensionless nuclear coordinate.
///
/// Points sit at `x_min + j·dx` for `j = 0..n_points`, with
/// `dx = (x_max − x_min)/n_points`, so `x_max` itself is the periodic image
/// of `x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

impl SpatialGrid {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::config("degenerate extent"));
        }
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::config("n_points must be power of two (>= 16)"));
        }
        Ok(Self { n_points, x_min, x_max })
    }

    /// Re-checks the invariants, for grids that came from deserialisation.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.n_points, self.x_min, self.x_max).map(|_| ())
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn extent(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.extent() / self.n_points as f64
    }

    pub fn dk(&self) -> f64 {
        TAU / self.extent()
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|j| self.x_min + j as f64 * dx).collect()
    }

    /// Wavenumbers in FFT storage order (0, dk, …, −dk).
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n_points as isize;
        let dk = self.dk();
        (0..n)
            .map(|j| if j < n / 2 { j as f64 * dk } else { (j - n) as f64 * dk })
            .collect()
    }

    /// Same grid with twice the points over the same extent.
    pub fn refined(&self) -> Self {
        Self { n_points: self.n_points * 2, ..*self }
    }

    /// True if `x` lies in the outer `fraction` of the extent on either side.
    pub fn in_boundary_zone(&self, x: f64, fraction: f64) -> bool {
        let margin = fraction * self.extent();
        x < self.x_min + margin || x > self.x_max - margin
    }

    fn check_same(&self, other: &SpatialGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

impl Default for SpatialGrid {
    fn default() -> Self {
        Self { n_points: 256, x_min: -8.0, x_max: 8.0 }
    }
}

/// Uniform time grid; steps run from `t_start` in increments of `dt` until
/// `t_end` is reached or passed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        if !(t_end > t_start) {
            return Err(Error::config("t_end must exceed t_start"));
        }
        Ok(Self { t_start, t_end, dt })
    }

    /// Grid of exactly `n_steps` steps.
    pub fn with_steps(t_start: f64, n_steps: usize, dt: f64) -> Result<Self> {
        Self::new(t_start, t_start + n_steps as f64 * dt, dt)
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Time at the end of the last step.
    pub fn final_time(&self) -> f64 {
        self.t_start + self.n_steps() as f64 * self.dt
    }

    /// Midpoint of step `n`, where the field is sampled.
    pub fn midpoint(&self, n: usize) -> f64 {
        self.t_start + (n as f64 + 0.5) * self.dt
    }

    /// Returns an error unless `dt <= period / min_points_per_period`.
    pub fn check_resolves(&self, period_fs: f64, min_points_per_period: f64) -> Result<()> {
        if self.dt > period_fs / min_points_per_period {
            return Err(Error::config(format!(
                "dt = {} fs does not resolve a {period_fs} fs carrier (need <= {} fs)",
                self.dt,
                period_fs / min_points_per_period
            )));
        }
        Ok(())
    }
}

/// Multi-channel nuclear wavefunction: channel 0 is the ground electronic
/// state, 1 the excited state, the rest are continuum bins.
#[derive(Debug, Clone, PartialEq)]
pub struct VibronicState {
    pub grid: SpatialGrid,
    pub channels: Vec<Vec<Complex64>>,
}

impl VibronicState {
    pub fn zeros(grid: SpatialGrid, n_channels: usize) -> Self {
        Self { grid, channels: vec![vec![Complex64::new(0.0, 0.0); grid.n_points()]; n_channels] }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_norm(&self, channel: usize) -> f64 {
        norm_sq(&self.grid, &self.channels[channel])
    }

    pub fn channel_norms(&self) -> Vec<f64> {
        (0..self.n_channels()).map(|c| self.channel_norm(c)).collect()
    }

    pub fn total_norm(&self) -> f64 {
        self.channel_norms().iter().sum()
    }

    /// Expectation of `x` within one channel, normalised by that channel's
    /// population.
    pub fn channel_mean_position(&self, channel: usize) -> f64 {
        let xs = self.grid.positions();
        let psi = &self.channels[channel];
        let weight: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let first: f64 = psi.iter().zip(&xs).map(|(z, x)| z.norm_sqr() * x).sum();
        first / weight
    }

    /// Population in the outer `fraction` of the grid, summed over channels.
    pub fn boundary_population(&self, fraction: f64) -> f64 {
        let xs = self.grid.positions();
        let dx = self.grid.dx();
        self.channels
            .iter()
            .flat_map(|ch| ch.iter().zip(&xs))
            .filter(|(_, &x)| self.grid.in_boundary_zone(x, fraction))
            .map(|(z, _)| z.norm_sqr() * dx)
            .sum()
    }

    fn check_layout(&self) -> Result<()> {
        if self.channels.iter().any(|c| c.len() != self.grid.n_points()) {
            return Err(Error::GridMismatch("channel length differs from grid".into()));
        }
        Ok(())
    }
}

/// `∫|ψ|² dx` as a Riemann sum.
pub fn norm_sq(grid: &SpatialGrid, psi: &[Complex64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dx()
}

/// `∫ a*(x) b(x) dx` between two channels on the same grid.
pub fn overlap(
    grid_a: &SpatialGrid,
    a: &[Complex64],
    grid_b: &SpatialGrid,
    b: &[Complex64],
) -> Result<Complex64> {
    grid_a.check_same(grid_b)?;
    if a.len() != grid_a.n_points() || b.len() != grid_b.n_points() {
        return Err(Error::GridMismatch("channel length differs from grid".into()));
    }
    let sum: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok(sum * grid_a.dx())
}

/// Norm of `ψ` evaluated in momentum space with the unitary continuous
/// Fourier normalisation, `∫|ψ̃(k)|² dk`.
pub fn momentum_norm(grid: &SpatialGrid, psi: &[Complex64]) -> f64 {
    let mut buf = psi.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let scale = grid.dx() / TAU.sqrt();
    buf.iter().map(|z| (z * scale).norm_sqr()).sum::<f64>() * grid.dk()
}

/// Normalised harmonic-oscillator eigenfunction `v` of a mode with the given
/// wavenumber, centred at `center`, sampled on the grid.
pub fn harmonic_eigenfunction(grid: &SpatialGrid, wavenumber_cm: f64, center: f64, v: usize) -> Vec<f64> {
    let scale = 1.0 / units::oscillator_length(wavenumber_cm);
    let norm0 = scale.sqrt() * PI.powf(-0.25);
    grid.positions()
        .into_iter()
        .map(|x| {
            let xi = (x - center) * scale;
            let mut prev = 0.0;
            let mut cur = norm0 * (-0.5 * xi * xi).exp();
            for k in 0..v {
                let k = k as f64;
                let next = (2.0 / (k + 1.0)).sqrt() * xi * cur - (k / (k + 1.0)).sqrt() * prev;
                prev = cur;
                cur = next;
            }
            cur
        })
        .collect()
}

/// Vibronic state with the harmonic ground vibrational function in the
/// ground channel and every other channel empty.
pub fn harmonic_ground_state(
    grid: &SpatialGrid,
    omega_vib_cm: f64,
    center: f64,
    n_channels: usize,
) -> Result<VibronicState> {
    if !(omega_vib_cm > 0.0) {
        return Err(Error::config("vibrational frequency must be positive"));
    }
    if n_channels == 0 {
        return Err(Error::config("state needs at least one channel"));
    }
    if grid.in_boundary_zone(center, 0.1) {
        log::warn!("wavepacket centre {center} lies in the outer 10% of the grid; boundary contamination likely");
    }
    let mut state = VibronicState::zeros(*grid, n_channels);
    let mut psi: Vec<Complex64> = harmonic_eigenfunction(grid, omega_vib_cm, center, 0)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    // renormalise on the grid so the discrete norm is exactly one
    let n = norm_sq(grid, &psi).sqrt();
    psi.iter_mut().for_each(|z| *z /= n);
    state.channels[0] = psi;
    state.check_layout()?;
    Ok(state)
}
