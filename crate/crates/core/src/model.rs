//! Electronic surfaces, transition dipoles, and the discretised ionisation
//! continuum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{harmonic_eigenfunction, norm_sq, overlap, SpatialGrid};
use crate::units;

/// A one-dimensional potential energy curve along the nuclear coordinate.
///
/// `offset_ev` is the energy at the surface minimum relative to the ground
/// surface minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSurface {
    Harmonic {
        minimum_position: f64,
        vib_frequency_cm: f64,
        offset_ev: f64,
    },
    Morse {
        minimum_position: f64,
        vib_frequency_cm: f64,
        offset_ev: f64,
        dissociation_ev: f64,
    },
}

impl PotentialSurface {
    pub fn harmonic(minimum_position: f64, vib_frequency_cm: f64, offset_ev: f64) -> Self {
        PotentialSurface::Harmonic { minimum_position, vib_frequency_cm, offset_ev }
    }

    pub fn minimum_position(&self) -> f64 {
        match *self {
            PotentialSurface::Harmonic { minimum_position, .. }
            | PotentialSurface::Morse { minimum_position, .. } => minimum_position,
        }
    }

    pub fn vib_frequency_cm(&self) -> f64 {
        match *self {
            PotentialSurface::Harmonic { vib_frequency_cm, .. }
            | PotentialSurface::Morse { vib_frequency_cm, .. } => vib_frequency_cm,
        }
    }

    pub fn offset_ev(&self) -> f64 {
        match *self {
            PotentialSurface::Harmonic { offset_ev, .. } | PotentialSurface::Morse { offset_ev, .. } => offset_ev,
        }
    }

    pub fn is_harmonic(&self) -> bool {
        matches!(self, PotentialSurface::Harmonic { .. })
    }

    /// Same surface moved rigidly by `dx` along the coordinate and `de` in energy.
    pub fn shifted(&self, dx: f64, de: f64) -> Self {
        let mut s = *self;
        match &mut s {
            PotentialSurface::Harmonic { minimum_position, offset_ev, .. }
            | PotentialSurface::Morse { minimum_position, offset_ev, .. } => {
                *minimum_position += dx;
                *offset_ev += de;
            }
        }
        s
    }

    pub fn energy_at(&self, x: f64) -> f64 {
        match *self {
            PotentialSurface::Harmonic { minimum_position, vib_frequency_cm, offset_ev } => {
                let d = x - minimum_position;
                offset_ev + 0.5 * units::harmonic_curvature_ev(vib_frequency_cm) * d * d
            }
            PotentialSurface::Morse { minimum_position, vib_frequency_cm, offset_ev, dissociation_ev } => {
                // curvature at the minimum matches the harmonic surface of the same frequency
                let k = units::harmonic_curvature_ev(vib_frequency_cm);
                let a = (k / (2.0 * dissociation_ev)).sqrt();
                let y = 1.0 - (-a * (x - minimum_position)).exp();
                offset_ev + dissociation_ev * y * y
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.vib_frequency_cm() > 0.0) {
            return Err(Error::config(format!("{name}: vib_frequency_cm must be positive")));
        }
        if let PotentialSurface::Morse { dissociation_ev, .. } = *self {
            if !(dissociation_ev > 0.0) {
                return Err(Error::config(format!("{name}: dissociation_ev must be positive")));
            }
        }
        Ok(())
    }
}

/// Pointwise energies (eV) of a surface.
pub fn evaluate_potential(surface: &PotentialSurface, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| surface.energy_at(x)).collect()
}

/// Discretised ionisation continuum: `n_bins` photoelectron-energy bins on
/// top of a harmonic ionic surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumSpec {
    /// Ionic surface minimum above the neutral ground minimum.
    pub ionization_potential_ev: f64,
    pub n_bins: usize,
    pub epsilon_min_ev: f64,
    pub epsilon_max_ev: f64,
    pub ionic_vib_frequency_cm: f64,
    pub ionic_minimum_position: f64,
}

impl ContinuumSpec {
    pub fn bin_width(&self) -> f64 {
        (self.epsilon_max_ev - self.epsilon_min_ev) / self.n_bins as f64
    }

    /// Bin-centre photoelectron energies.
    pub fn bin_energies(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.n_bins).map(|k| self.epsilon_min_ev + (k as f64 + 0.5) * w).collect()
    }

    /// Density-of-states weight applied to every bin coupling.
    pub fn coupling_weight(&self) -> f64 {
        self.bin_width().sqrt()
    }

    pub fn ionic_surface(&self) -> PotentialSurface {
        PotentialSurface::harmonic(self.ionic_minimum_position, self.ionic_vib_frequency_cm, self.ionization_potential_ev)
    }

    /// Recurrence time `h/Δε` of the discretised continuum, in fs.
    pub fn recurrence_time_fs(&self) -> f64 {
        units::PLANCK_EV_FS / self.bin_width()
    }

    pub fn with_bins(&self, n_bins: usize) -> Self {
        Self { n_bins, ..*self }
    }

    fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::config("continuum: n_bins must be >= 1"));
        }
        if !(self.epsilon_max_ev > self.epsilon_min_ev) {
            return Err(Error::config("continuum: epsilon_max_ev must exceed epsilon_min_ev"));
        }
        if !(self.ionic_vib_frequency_cm > 0.0) {
            return Err(Error::config("continuum: ionic_vib_frequency_cm must be positive"));
        }
        Ok(())
    }
}

/// Two neutral surfaces plus a continuum, coupled by real (Condon) dipoles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemModel {
    pub ground: PotentialSurface,
    pub excited: PotentialSurface,
    pub continuum: ContinuumSpec,
    pub mu_ge: f64,
    pub mu_ec: f64,
    #[serde(default)]
    pub mu_gc_direct: f64,
}

/// Index of the ground channel.
pub const GROUND: usize = 0;
/// Index of the excited channel.
pub const EXCITED: usize = 1;
/// Index of the first continuum bin.
pub const FIRST_CONTINUUM: usize = 2;

impl SystemModel {
    pub fn validate(&self) -> Result<()> {
        self.ground.validate("ground")?;
        self.excited.validate("excited")?;
        self.continuum.validate()?;
        for (name, v) in [("mu_ge", self.mu_ge), ("mu_ec", self.mu_ec), ("mu_gc_direct", self.mu_gc_direct)] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        FIRST_CONTINUUM + self.continuum.n_bins
    }

    /// Vertical excitation energy at the ground-state minimum (eV).
    pub fn vertical_gap(&self) -> f64 {
        let x0 = self.ground.minimum_position();
        self.excited.energy_at(x0) - self.ground.energy_at(x0)
    }

    pub fn vertical_gap_thz(&self) -> f64 {
        units::ev_to_thz(self.vertical_gap())
    }

    /// Electronic carrier angular frequency (rad/fs) at the Franck-Condon point.
    pub fn carrier_angular(&self) -> f64 {
        units::ev_to_angular(self.vertical_gap())
    }

    /// Carrier period in attoseconds.
    pub fn carrier_period_as(&self) -> f64 {
        units::fs_to_as(units::thz_to_period_fs(self.vertical_gap_thz()))
    }

    pub fn excited_period_fs(&self) -> f64 {
        units::wavenumber_to_period_fs(self.excited.vib_frequency_cm())
    }

    /// Rigid shift of every surface (including the ionic one).
    pub fn shifted(&self, dx: f64, de: f64) -> Self {
        let mut m = *self;
        m.ground = m.ground.shifted(dx, de);
        m.excited = m.excited.shifted(dx, de);
        m.continuum.ionic_minimum_position += dx;
        m.continuum.ionization_potential_ev += de;
        m
    }

    /// Potential energy of every channel on the grid; continuum bins are the
    /// ionic surface plus the bin's photoelectron energy.
    pub fn channel_potentials(&self, grid: &SpatialGrid) -> Vec<Vec<f64>> {
        let xs = grid.positions();
        let mut out = vec![evaluate_potential(&self.ground, &xs), evaluate_potential(&self.excited, &xs)];
        let ion = evaluate_potential(&self.continuum.ionic_surface(), &xs);
        for eps in self.continuum.bin_energies() {
            out.push(ion.iter().map(|v| v + eps).collect());
        }
        out
    }
}

/// Dimensionless excited-state displacement that puts the `v_resonant`
/// vibronic line (from the ground vibrational level) exactly at the vertical
/// gap.
pub fn resonant_displacement(ground_cm: f64, excited_cm: f64, v_resonant: usize) -> f64 {
    let reorg = units::wavenumber_to_ev(excited_cm) * (v_resonant as f64 + 0.5) - 0.5 * units::wavenumber_to_ev(ground_cm);
    (2.0 * reorg / units::harmonic_curvature_ev(excited_cm)).sqrt()
}

/// Vertical gap of the benzene preset, h·1172 THz.
pub const BENZENE_GAP_THZ: f64 = 1172.0;
pub const BENZENE_EXCITED_CM: f64 = 925.0;
pub const BENZENE_GROUND_CM: f64 = 993.0;
pub const BENZENE_IP_EV: f64 = 9.24;

/// Benzene S₀/S₁ model along the breathing mode.
pub fn benzene_preset() -> SystemModel {
    let gap = units::thz_to_ev(BENZENE_GAP_THZ);
    let displacement = resonant_displacement(BENZENE_GROUND_CM, BENZENE_EXCITED_CM, 1);
    benzene_with_displacement(gap, displacement)
}

/// Benzene preset with an explicit excited-state displacement; the excited
/// offset is adjusted so the vertical gap stays at `gap_ev`.
pub fn benzene_with_displacement(gap_ev: f64, displacement: f64) -> SystemModel {
    let k_e = units::harmonic_curvature_ev(BENZENE_EXCITED_CM);
    let offset = gap_ev - 0.5 * k_e * displacement * displacement;
    SystemModel {
        ground: PotentialSurface::harmonic(0.0, BENZENE_GROUND_CM, 0.0),
        excited: PotentialSurface::harmonic(displacement, BENZENE_EXCITED_CM, offset),
        continuum: ContinuumSpec {
            ionization_potential_ev: BENZENE_IP_EV,
            n_bins: 16,
            epsilon_min_ev: 0.1,
            epsilon_max_ev: 0.6,
            ionic_vib_frequency_cm: BENZENE_EXCITED_CM,
            ionic_minimum_position: displacement,
        },
        mu_ge: 1.0,
        mu_ec: 1.0,
        mu_gc_direct: 0.0,
    }
}

/// One line of a Franck-Condon progression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcLevel {
    pub level: usize,
    /// Transition energy from the ground vibrational level (eV).
    pub energy_ev: f64,
    pub amplitude: f64,
}

/// Franck-Condon amplitudes `⟨v_e|0_g⟩` for excited levels `0..n_levels`,
/// evaluated by quadrature of harmonic eigenfunctions on `grid`.
pub fn franck_condon_progression(model: &SystemModel, grid: &SpatialGrid, n_levels: usize) -> Result<Vec<FcLevel>> {
    if !model.ground.is_harmonic() || !model.excited.is_harmonic() {
        return Err(Error::Unsupported("Franck-Condon progression needs harmonic surfaces".into()));
    }
    let wg = model.ground.vib_frequency_cm();
    let we = model.excited.vib_frequency_cm();
    let to_c = |v: Vec<f64>| -> Vec<Complex64> { v.into_iter().map(Complex64::from).collect() };
    let ground = to_c(harmonic_eigenfunction(grid, wg, model.ground.minimum_position(), 0));
    let g_norm = norm_sq(grid, &ground).sqrt();
    let e_quant = units::wavenumber_to_ev(we);
    let e00 = model.excited.offset_ev() + 0.5 * e_quant - model.ground.offset_ev() - 0.5 * units::wavenumber_to_ev(wg);
    (0..n_levels)
        .map(|v| {
            let ex = to_c(harmonic_eigenfunction(grid, we, model.excited.minimum_position(), v));
            let amp = overlap(grid, &ex, grid, &ground)?.re / (g_norm * norm_sq(grid, &ex).sqrt());
            Ok(FcLevel { level: v, energy_ev: e00 + v as f64 * e_quant, amplitude: amp })
        })
        .collect()
}
