//! Unit conversions.
//!
//! Internally everything runs in eV for energy, fs for time and rad/fs for
//! angular frequency. The nuclear coordinate is a dimensionless mass-weighted
//! normal coordinate, scaled by [`REFERENCE_WAVENUMBER_CM`] (see
//! [`kinetic_prefactor_ev`]).

use std::f64::consts::TAU;

/// Reduced Planck constant in eV·fs.
pub const HBAR_EV_FS: f64 = 0.658_211_956_950_907;
/// Planck constant in eV·fs.
pub const PLANCK_EV_FS: f64 = HBAR_EV_FS * TAU;
/// Speed of light in nm/fs.
pub const SPEED_OF_LIGHT_NM_PER_FS: f64 = 299.792_458;
/// Speed of light in cm/fs.
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.997_924_58e-5;
/// Attoseconds per femtosecond.
pub const AS_PER_FS: f64 = 1000.0;

/// Frequency that fixes the scale of the dimensionless nuclear coordinate.
///
/// The kinetic operator is `T = -½ ħω_ref ∂²/∂x²` and a harmonic surface of
/// wavenumber ω has `V = ½ ħω (ω/ω_ref) (x − x₀)²`.
pub const REFERENCE_WAVENUMBER_CM: f64 = 1000.0;

/// Zero-sized handle grouping the conversions; all methods are also exposed
/// as free functions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UnitSystem;

impl UnitSystem {
    pub fn wavenumber_to_ev(self, cm: f64) -> f64 {
        wavenumber_to_ev(cm)
    }
    pub fn ev_to_wavenumber(self, ev: f64) -> f64 {
        ev_to_wavenumber(ev)
    }
    pub fn thz_to_ev(self, thz: f64) -> f64 {
        thz_to_ev(thz)
    }
    pub fn ev_to_thz(self, ev: f64) -> f64 {
        ev_to_thz(ev)
    }
}

pub fn wavenumber_to_thz(cm: f64) -> f64 {
    cm * SPEED_OF_LIGHT_CM_PER_FS * 1e3
}

pub fn thz_to_wavenumber(thz: f64) -> f64 {
    thz / (SPEED_OF_LIGHT_CM_PER_FS * 1e3)
}

/// 1 THz = 1e-3 fs⁻¹.
pub fn thz_to_ev(thz: f64) -> f64 {
    PLANCK_EV_FS * thz * 1e-3
}

pub fn ev_to_thz(ev: f64) -> f64 {
    ev / PLANCK_EV_FS * 1e3
}

pub fn wavenumber_to_ev(cm: f64) -> f64 {
    thz_to_ev(wavenumber_to_thz(cm))
}

pub fn ev_to_wavenumber(ev: f64) -> f64 {
    thz_to_wavenumber(ev_to_thz(ev))
}

/// Energy (eV) to angular frequency (rad/fs).
pub fn ev_to_angular(ev: f64) -> f64 {
    ev / HBAR_EV_FS
}

pub fn angular_to_ev(omega: f64) -> f64 {
    omega * HBAR_EV_FS
}

pub fn thz_to_angular(thz: f64) -> f64 {
    TAU * thz * 1e-3
}

pub fn angular_to_thz(omega: f64) -> f64 {
    omega / TAU * 1e3
}

pub fn wavelength_nm_to_ev(nm: f64) -> f64 {
    PLANCK_EV_FS * SPEED_OF_LIGHT_NM_PER_FS / nm
}

pub fn ev_to_wavelength_nm(ev: f64) -> f64 {
    PLANCK_EV_FS * SPEED_OF_LIGHT_NM_PER_FS / ev
}

/// Oscillation period in fs of a frequency given in THz.
pub fn thz_to_period_fs(thz: f64) -> f64 {
    1e3 / thz
}

pub fn period_fs_to_thz(fs: f64) -> f64 {
    1e3 / fs
}

/// Vibrational period in fs of a mode given in cm⁻¹.
pub fn wavenumber_to_period_fs(cm: f64) -> f64 {
    thz_to_period_fs(wavenumber_to_thz(cm))
}

pub fn period_fs_to_wavenumber(fs: f64) -> f64 {
    thz_to_wavenumber(period_fs_to_thz(fs))
}

pub fn fs_to_as(fs: f64) -> f64 {
    fs * AS_PER_FS
}

pub fn as_to_fs(attoseconds: f64) -> f64 {
    attoseconds / AS_PER_FS
}

/// `ħω_ref / 2`, the prefactor of `-∂²/∂x²` in the nuclear kinetic energy.
pub fn kinetic_prefactor_ev() -> f64 {
    0.5 * wavenumber_to_ev(REFERENCE_WAVENUMBER_CM)
}

/// Curvature `k` of `V = ½ k (x − x₀)²` for a harmonic mode of the given
/// wavenumber, in eV.
pub fn harmonic_curvature_ev(wavenumber_cm: f64) -> f64 {
    wavenumber_to_ev(wavenumber_cm) * wavenumber_cm / REFERENCE_WAVENUMBER_CM
}

/// Oscillator length `sqrt(ω_ref/ω)` in the dimensionless coordinate, i.e.
/// the displacement at which the harmonic potential reaches `½ħω`.
pub fn oscillator_length(wavenumber_cm: f64) -> f64 {
    (REFERENCE_WAVENUMBER_CM / wavenumber_cm).sqrt()
}
