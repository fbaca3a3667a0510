//! Vibrational overlaps and Franck-Condon factors against a brute-force
//! quadrature oracle that shares no code with the crate.

use attoscope::analytic::vibrational_overlap;
use attoscope::model::{benzene_with_displacement, franck_condon_progression, BENZENE_EXCITED_CM, BENZENE_GROUND_CM};
use attoscope::units::{thz_to_ev, wavenumber_to_ev, HBAR_EV_FS};
use attoscope::{benzene_preset, SpatialGrid, SystemModel};
use num_complex::Complex64;

const OMEGA_REF_CM: f64 = 1000.0;

/// Normalised Hermite functions `0..n` with exponent `alpha` (so the ground
/// function is `exp(-alpha (x-c)^2 / 2)`), sampled on `xs`.
fn hermite_functions(xs: &[f64], alpha: f64, center: f64, n: usize) -> Vec<Vec<f64>> {
    let s = alpha.sqrt();
    let mut out = vec![vec![0.0; xs.len()]; n];
    for (i, &x) in xs.iter().enumerate() {
        let y = s * (x - center);
        let mut h_prev = 0.0;
        let mut h = (s / std::f64::consts::PI.sqrt()).sqrt() * (-0.5 * y * y).exp();
        for (v, row) in out.iter_mut().enumerate() {
            row[i] = h;
            let vf = v as f64;
            let next = ((2.0 / (vf + 1.0)).sqrt()) * y * h - (vf / (vf + 1.0)).sqrt() * h_prev;
            h_prev = h;
            h = next;
        }
    }
    out
}

/// Composite Simpson rule on an odd number of equally spaced points.
fn simpson(f: &[f64], h: f64) -> f64 {
    assert!(f.len() % 2 == 1);
    let n = f.len() - 1;
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// `<v_e | 0_g>` for `v = 0..n` by Simpson quadrature on a fine grid.
fn fc_amplitudes(model: &SystemModel, n: usize) -> Vec<f64> {
    let m = 16001;
    let (lo, hi) = (-25.0, 25.0);
    let h = (hi - lo) / (m - 1) as f64;
    let xs: Vec<f64> = (0..m).map(|i| lo + i as f64 * h).collect();
    let ag = model.ground.vib_frequency_cm() / OMEGA_REF_CM;
    let ae = model.excited.vib_frequency_cm() / OMEGA_REF_CM;
    let g = &hermite_functions(&xs, ag, model.ground.minimum_position(), 1)[0];
    hermite_functions(&xs, ae, model.excited.minimum_position(), n)
        .iter()
        .map(|e| simpson(&e.iter().zip(g).map(|(a, b)| a * b).collect::<Vec<_>>(), h))
        .collect()
}

/// `<chi_0(tau)|chi_1(tau)>` from the eigen-expansion: the ground packet
/// only picks up its zero-point phase, the promoted packet evolves on the
/// excited surface shifted down by the vertical gap.
fn overlap_oracle(model: &SystemModel) -> impl Fn(f64) -> Complex64 {
    let c = fc_amplitudes(model, 60);
    let model = *model;
    move |tau| overlap_sum(&model, &c, tau)
}

fn overlap_sum(model: &SystemModel, c: &[f64], tau: f64) -> Complex64 {
    let e0g = model.ground.offset_ev() + 0.5 * wavenumber_to_ev(model.ground.vib_frequency_cm());
    let q = wavenumber_to_ev(model.excited.vib_frequency_cm());
    let gap = model.vertical_gap();
    c.iter()
        .enumerate()
        .map(|(v, a)| {
            let ev = model.excited.offset_ev() + (v as f64 + 0.5) * q - gap;
            Complex64::from_polar(a * a, -(ev - e0g) * tau / HBAR_EV_FS)
        })
        .sum()
}

fn unit_displacement() -> SystemModel {
    benzene_with_displacement(thz_to_ev(1172.0), 1.0)
}

#[test]
fn oracle_is_complete() {
    // the quadrature oracle itself: the expansion is complete and obeys the
    // equal-frequency Poisson law
    let mut m = unit_displacement();
    let c = fc_amplitudes(&m, 60);
    assert!((c.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-10);
    m.ground = attoscope::PotentialSurface::harmonic(0.0, BENZENE_EXCITED_CM, 0.0);
    let c = fc_amplitudes(&m, 3);
    // Huang-Rhys factor S = (omega/omega_ref) * displacement^2 / 2
    let ratio = (c[1] * c[1]) / (c[0] * c[0]);
    assert!((ratio - 0.5 * BENZENE_EXCITED_CM / OMEGA_REF_CM).abs() < 1e-10, "{ratio}");
}

#[test]
fn grid_franck_condon_matches_quadrature() {
    let m = unit_displacement();
    let levels = franck_condon_progression(&m, &SpatialGrid::default(), 12).unwrap();
    let oracle = fc_amplitudes(&m, 12);
    let ratio = |a: &[f64]| (a[1] * a[1]) / (a[0] * a[0]);
    let grid_amps: Vec<f64> = levels.iter().map(|l| l.amplitude).collect();
    assert!((ratio(&grid_amps) - ratio(&oracle)).abs() < 1e-6);
    assert!(grid_amps.iter().map(|a| a * a).sum::<f64>() > 0.999);
    for w in levels.windows(2) {
        let spacing_cm = (w[1].energy_ev - w[0].energy_ev) / wavenumber_to_ev(1.0);
        assert!((spacing_cm - BENZENE_EXCITED_CM).abs() < 1e-9);
    }
}

#[test]
fn identical_surfaces_have_diagonal_franck_condon() {
    let mut m = benzene_with_displacement(thz_to_ev(1172.0), 0.0);
    m.ground = attoscope::PotentialSurface::harmonic(0.0, BENZENE_EXCITED_CM, 0.0);
    let levels = franck_condon_progression(&m, &SpatialGrid::default(), 5).unwrap();
    assert!((levels[0].amplitude.abs() - 1.0).abs() < 1e-10);
    assert!(levels[1..].iter().all(|l| l.amplitude.abs() < 1e-10));
}

#[test]
fn overlap_at_zero_is_unity() {
    let z = vibrational_overlap(&benzene_preset(), 0.0).unwrap();
    assert!((z.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn revival_after_one_excited_period() {
    let m = benzene_preset();
    let t = m.excited_period_fs();
    assert!((t - 36.06).abs() < 0.01);
    let z = vibrational_overlap(&m, t).unwrap();
    assert!((z.norm() - 1.0).abs() < 0.02, "{}", z.norm());
    let oracle = overlap_oracle(&m)(t);
    assert!((z - oracle).norm() < 1e-4, "{z} vs {oracle}");
}

#[test]
fn half_period_minimum_matches_oracle() {
    let m = unit_displacement();
    let half = 0.5 * m.excited_period_fs();
    let z = vibrational_overlap(&m, half).unwrap();
    let o = overlap_oracle(&m);
    let oracle = o(half);
    assert!((z.norm() - oracle.norm()).abs() < 1e-4, "{} vs {}", z.norm(), oracle.norm());
    assert!((z - oracle).norm() < 1e-4);
    // it is the minimum of the first period, up to the frequency mismatch
    let (t_min, _) = (0..=2400)
        .map(|i| 6.0 + 0.01 * i as f64)
        .map(|t| (t, o(t).norm()))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert!((t_min - half).abs() < 1.0, "minimum at {t_min}");
    assert!(z.norm() - o(t_min).norm() < 1e-3);
    assert!(z.norm() < 0.7);
}

#[test]
fn overlap_tracks_oracle_over_a_period() {
    let m = benzene_preset();
    let o = overlap_oracle(&m);
    for i in 0..=12 {
        let t = 3.0 * i as f64;
        let z = vibrational_overlap(&m, t).unwrap();
        assert!((z - o(t)).norm() < 1e-4, "tau {t}");
    }
    assert_eq!(m.ground.vib_frequency_cm(), BENZENE_GROUND_CM);
}
