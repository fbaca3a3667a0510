//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! The main TDSE scan (benzene preset, τ ∈ [60, 160] fs in 0.1 fs steps,
//! phases 0 and π, default numerics) is shared by criteria 1-5 and takes
//! about 25 minutes on one core. Set `ATTOSCOPE_ACCEPTANCE_CACHE` to a
//! directory to keep scans between runs; a cached trace is reused only if
//! its recorded scan spec equals the requested one.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use attoscope::analysis::{
    analyze, beat_spectrum, demodulate, estimate_timing_jitter, fit_sinusoid, fit_sinusoid_fixed, normalized_cross_correlation, phase_cycle,
    quadrature_envelope, AnalysisOptions, AnalysisResult, DemodulationOptions, SpectrumOptions,
};
use attoscope::analytic::{difference_sum, vibrational_overlap};
use attoscope::grid::harmonic_ground_state;
use attoscope::propagator::propagate;
use attoscope::pulse::synthesize_field;
use attoscope::scan::{convergence_check, run_delay_scan, Refinement};
use attoscope::units::{thz_to_angular, wavenumber_to_period_fs};
use attoscope::{DelayTrace, IonizationTrace, Overlap, PropagationOptions, RunConfig, ScanSpec, SpectralFilterOverlap, TwoStateParams};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const GAP_THZ: f64 = 1172.0;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    // bypass the harness capture so the line is always shown
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n} ({name}): {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn config(preset: &str, settings: &[(&str, &str)]) -> ScanSpec {
    let mut c = RunConfig::preset(preset).unwrap();
    for (k, v) in settings {
        c.set(k, v).unwrap();
    }
    c.scan_spec().unwrap()
}

fn cached_scan(name: &str, spec: &ScanSpec) -> IonizationTrace {
    let dir = std::env::var_os("ATTOSCOPE_ACCEPTANCE_CACHE").map(PathBuf::from);
    let path = dir.as_ref().map(|d| d.join(format!("{name}.csv")));
    if let Some(p) = &path {
        if let Ok(t) = IonizationTrace::read(p) {
            if t.metadata.spec.as_ref() == Some(spec) {
                return t;
            }
        }
    }
    let t = run_delay_scan(spec).unwrap();
    if let Some(p) = &path {
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        t.write(p).unwrap();
    }
    t
}

struct MainScan {
    spec: ScanSpec,
    diff: DelayTrace,
    sum: DelayTrace,
    analysis: AnalysisResult,
}

fn main_scan() -> &'static MainScan {
    static SCAN: OnceLock<MainScan> = OnceLock::new();
    SCAN.get_or_init(|| {
        let spec = config("benzene", &[("delay_start_fs", "60"), ("delay_stop_fs", "160"), ("delay_step_fs", "0.1"), ("phases", "0, pi")]);
        assert_eq!(spec.n_points(), 2002);
        let trace = cached_scan("main", &spec);
        let (diff, sum) = phase_cycle(&trace).unwrap();
        let opts = AnalysisOptions { expected_carrier_thz: Some(spec.model.vertical_gap_thz()), ..Default::default() };
        let analysis = analyze(&diff, Some(&sum), &opts).unwrap();
        MainScan { spec, diff, sum, analysis }
    })
}

#[test]
fn criterion_1_carrier_period() {
    let s = main_scan();
    let spectrum = beat_spectrum(&s.diff, &SpectrumOptions::default()).unwrap();
    let peak = spectrum.dominant().unwrap();
    let f = s.analysis.carrier_frequency_thz;
    let period = s.analysis.carrier_period_as;
    let pass = (peak.frequency_thz - GAP_THZ).abs() <= 3.0 && (f - GAP_THZ).abs() <= 3.0 && (period - 853.0).abs() <= 3.0;
    report(
        1,
        "carrier period",
        pass,
        &format!("dominant peak {:.2} THz, fitted carrier {f:.3} THz, period {period:.2} as", peak.frequency_thz),
    );
    assert!(pass);
}

#[test]
fn criterion_2_envelope_period() {
    let s = main_scan();
    let a = &s.analysis;
    let offsets: Vec<f64> = a.sideband_frequencies_thz.iter().map(|f| f - a.carrier_frequency_thz).collect();
    let side = |target: f64| offsets.iter().copied().filter(|o| (o - target).abs() <= 1.0).min_by(|x, y| (x - target).abs().total_cmp(&(y - target).abs()));
    let (lo, hi) = (side(-27.7), side(27.7));
    let pass = (a.envelope_period_fs - 36.0).abs() <= 0.5 && lo.is_some() && hi.is_some();
    report(
        2,
        "envelope period",
        pass,
        &format!("envelope {:.2} fs, sidebands {offsets:.2?} THz from carrier", a.envelope_period_fs),
    );
    assert!(pass);
}

/// Local extrema of `v` that are the largest (or smallest) within ±`half` samples.
fn extrema(t: &[f64], v: &[f64], half: usize, maxima: bool) -> Vec<f64> {
    let sign = if maxima { 1.0 } else { -1.0 };
    (half..v.len() - half)
        .filter(|&i| (i - half..=i + half).all(|j| j == i || sign * v[j] < sign * v[i]))
        .map(|i| {
            let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
            let denom = a - 2.0 * b + c;
            let off = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            t[i] + off * (t[i + 1] - t[i])
        })
        .collect()
}

#[test]
fn criterion_3_envelope_tracks_overlap() {
    let s = main_scan();
    let env = demodulate(&s.diff, s.spec.model.carrier_angular(), &DemodulationOptions::default()).unwrap().magnitude();
    let inner = env.window(68.0, 152.0);
    let overlap: Vec<f64> = inner.delays_fs.iter().map(|&t| vibrational_overlap(&s.spec.model, t).unwrap().norm()).collect();
    let half = 100; // 10 fs at 0.1 fs steps
    let env_max = extrema(&inner.delays_fs, &inner.values, half, true);
    let env_min = extrema(&inner.delays_fs, &inner.values, half, false);
    let ov_max = extrema(&inner.delays_fs, &overlap, half, true);
    let ov_min = extrema(&inner.delays_fs, &overlap, half, false);
    let nearest = |x: f64, set: &[f64]| set.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min);
    let max_err = env_max.iter().map(|&x| nearest(x, &ov_max)).fold(0.0, f64::max);
    let min_err = env_min.iter().map(|&x| nearest(x, &ov_min)).fold(0.0, f64::max);
    let peak = overlap.iter().cloned().fold(0.0, f64::max);
    // at the envelope minima the packets have separated
    let separated = env_min.iter().all(|&t| vibrational_overlap(&s.spec.model, t).unwrap().norm() < 0.5 * peak);
    let pass = !env_max.is_empty() && !env_min.is_empty() && max_err <= 1.0 && min_err <= 1.0 && separated;
    report(
        3,
        "envelope-overlap correlation",
        pass,
        &format!(
            "envelope maxima {env_max:.2?} vs overlap maxima {ov_max:.2?} (max offset {max_err:.2} fs); minima {env_min:.2?} vs {ov_min:.2?} (max offset {min_err:.2} fs)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_oracle_equivalence() {
    let s = main_scan();
    let model = s.spec.model;
    let pump = &s.spec.pulses.pump;
    let filter = SpectralFilterOverlap::new(&model, pump, &s.spec.pulses.probe, 24).unwrap();
    let base = TwoStateParams::from_pulse_area(&model, pump, Overlap::SpectralFilter(Arc::new(filter))).unwrap();
    let delays = &s.diff.delays_fs;
    let normalise = |v: &[f64]| {
        let m = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        v.iter().map(|x| x / m).collect::<Vec<_>>()
    };
    let tdse = normalise(&s.diff.values);
    // the ionisation-dipole ratio Q_c1/Q_c0 is unknown; its phase is the one
    // free parameter of the comparison
    let ncc_at = |chi: f64| {
        let p = base.clone().with_q_ratio(Complex64::from_polar(1.0, chi));
        let (d, _) = difference_sum(&p, delays);
        normalized_cross_correlation(&tdse, &normalise(&d.values))
    };
    let (mut best_chi, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..360 {
        let chi = TAU * k as f64 / 360.0;
        let c = ncc_at(chi);
        if c > best {
            best = c;
            best_chi = chi;
        }
    }
    let (mut a, mut b) = (best_chi - TAU / 360.0, best_chi + TAU / 360.0);
    for _ in 0..60 {
        let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
        if ncc_at(m1) < ncc_at(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    best_chi = 0.5 * (a + b);
    let ncc = ncc_at(best_chi);
    let p = base.clone().with_q_ratio(Complex64::from_polar(1.0, best_chi));
    let (analytic, _) = difference_sum(&p, delays);
    let w = model.carrier_angular();
    let f_tdse = fit_sinusoid(delays, &s.diff.values, w).unwrap();
    let f_an = fit_sinusoid(delays, &analytic.values, w).unwrap();
    let period_err = (f_tdse.period_fs() / f_an.period_fs() - 1.0).abs();
    let pass = ncc >= 0.99 && period_err <= 0.005;
    report(
        4,
        "oracle equivalence",
        pass,
        &format!(
            "NCC {ncc:.4} at dipole phase {best_chi:.3} rad; carrier periods {:.2} / {:.2} as ({:.3}%)",
            1000.0 * f_tdse.period_fs(),
            1000.0 * f_an.period_fs(),
            100.0 * period_err
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_phase_cycling() {
    let s = main_scan();
    let level = s.analysis.sum_carrier_level_db.unwrap();
    let mean = s.sum.values.iter().sum::<f64>() / s.sum.len() as f64;
    let spread = s.sum.values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean;
    let pass = level <= -40.0 && spread <= 0.05;
    report(
        5,
        "phase-cycling separation",
        pass,
        &format!("sum carrier {level:.1} dB relative to diff; sum deviates at most {:.2}% from its mean", 100.0 * spread),
    );
    assert!(pass);
}

#[test]
fn criterion_6_unitarity_and_convergence() {
    // one full 440 fs propagation: pump at 0, probe at 350 fs
    let spec = config("benzene", &[("norm_tolerance", "1e-10")]);
    let seq = spec.pulses.with_delay(350.0);
    let h = seq.half_extent();
    let tg = attoscope::TimeGrid::new(-h, 395.0, spec.numerics.dt_fs).unwrap();
    let field = synthesize_field(&seq, &tg).unwrap();
    let psi = harmonic_ground_state(&spec.numerics.grid, spec.model.ground.vib_frequency_cm(), 0.0, spec.model.n_channels()).unwrap();
    let r = propagate(&psi, &spec.model, &field, &tg, &PropagationOptions { norm_tolerance: 1e-10, ..Default::default() }).unwrap();
    let drift = (r.final_state.total_norm() - 1.0).abs().max(r.diagnostics.max_norm_drift);
    let span = tg.final_time() - tg.t_start;

    let small = config("benzene", &[("delay_start_fs", "100"), ("delay_stop_fs", "101.9"), ("delay_step_fs", "0.1"), ("phases", "0, pi")]);
    let conv = convergence_check(&small, &Refinement::ALL).unwrap();
    let grid_yield = conv.refinements.iter().find(|r| r.name == Refinement::DoubleGrid.name()).unwrap().yield_change;
    let pass = drift <= 1e-10 && span >= 440.0 - 1e-9 && conv.passed && grid_yield < 0.01;
    let detail: Vec<String> = conv
        .refinements
        .iter()
        .map(|r| format!("{}: period {:.1e}, yield {:.1e}, amplitude {:.1e}", r.name, r.period_change, r.yield_change, r.amplitude_change))
        .collect();
    report(6, "unitarity and convergence", pass, &format!("norm drift {drift:.1e} over {span:.0} fs; {}", detail.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_7_timing_jitter() {
    let w = thz_to_angular(GAP_THZ);
    let noise = Normal::new(0.0, 0.006).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let delays: Vec<f64> = (0..=1000).map(|i| 75.0 + 0.001 * i as f64).collect();
    let estimates: Vec<f64> = (0..100)
        .map(|_| {
            let values = delays.iter().map(|&t| 1.0 + 0.4 * (w * (t + noise.sample(&mut rng))).cos()).collect();
            estimate_timing_jitter(&DelayTrace::new(delays.clone(), values).unwrap(), w).unwrap().sigma_as
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / 100.0;
    let worst = estimates.iter().map(|e| (e / 6.0 - 1.0).abs()).fold(0.0, f64::max);
    let pass = (mean / 6.0 - 1.0).abs() <= 0.2;
    report(7, "timing-jitter estimator", pass, &format!("mean {mean:.2} as over 100 repeats, worst repeat off by {:.1}%", 100.0 * worst));
    assert!(pass);
}

/// Delay shift (fs) of the vibrational modulation of |O(τ)|, from a
/// four-phase scan; positive means the pattern moved to later delays.
fn envelope_phase(trace: &IonizationTrace, carrier: f64, omega_vib: f64) -> f64 {
    let env = quadrature_envelope(trace, carrier).unwrap();
    let mag = env.magnitude();
    let fit = fit_sinusoid_fixed(&mag.delays_fs, &mag.values, omega_vib).unwrap();
    -fit.phase / omega_vib
}

fn analytic_envelope_phase(spec: &ScanSpec, omega_vib: f64) -> f64 {
    let f = SpectralFilterOverlap::new(&spec.model, &spec.pulses.pump, &spec.pulses.probe, 24).unwrap();
    let t = &spec.delays_fs;
    let mag: Vec<f64> = t.iter().map(|&x| f.at(x).norm()).collect();
    let fit = fit_sinusoid_fixed(t, &mag, omega_vib).unwrap();
    -fit.phase / omega_vib
}

fn wrap(dt: f64, period: f64) -> f64 {
    dt - period * (dt / period).round()
}

/// Shaped-pulse scan: four phases, delays past twice the pulse support so
/// the (stretched) pump is over and collected before the probe arrives.
fn shaped(preset: &str, extra: &[(&str, &str)]) -> ScanSpec {
    let mut s: Vec<(&str, &str)> = vec![
        ("delay_stop_fs", "280"),
        ("delay_start_fs", "180"),
        ("delay_step_fs", "2"),
        ("phases", "0, pi/2, pi, 3pi/2"),
        ("dt_fs", "0.01"),
    ];
    s.extend_from_slice(extra);
    let spec = config(preset, &s);
    assert!(spec.delays_fs[0] >= 2.0 * spec.pulses.half_extent());
    spec
}

#[test]
fn criterion_8_pulse_shape_controls() {
    let t_vib = wavenumber_to_period_fs(925.0);
    let omega_vib = TAU / t_vib;

    // chirp: the resonant preset, where the pulse spectrum weights the
    // v = 0 and v = 2 lines unequally enough for a group-delay shift
    let chirps = ["-50", "0", "50"];
    let mut tdse = Vec::new();
    let mut predicted = Vec::new();
    for c in chirps {
        let spec = shaped("benzene", &[("chirp_fs2", c)]);
        let trace = cached_scan(&format!("chirp_{c}"), &spec);
        tdse.push(envelope_phase(&trace, spec.model.carrier_angular(), omega_vib));
        predicted.push(analytic_envelope_phase(&spec, omega_vib));
    }
    let rel = |v: &[f64]| v.iter().map(|x| wrap(x - v[1], t_vib)).collect::<Vec<_>>();
    let (tdse_shift, pred_shift) = (rel(&tdse), rel(&predicted));
    let monotone = (tdse_shift[0] < 0.0 && tdse_shift[2] > 0.0) || (tdse_shift[0] > 0.0 && tdse_shift[2] < 0.0);
    let same_sense = tdse_shift[2].signum() == pred_shift[2].signum() && tdse_shift[0].signum() == pred_shift[0].signum();

    // pi step at the spectrum centre: unit displacement, where the centre
    // falls between the v = 0 and v = 1 lines rather than on one
    let plain = shaped("benzene-fc", &[]);
    let gap_thz = format!("{}", plain.model.vertical_gap_thz());
    let stepped = shaped("benzene-fc", &[("pi_step_thz", gap_thz.as_str())]);
    let carrier = plain.model.carrier_angular();
    let base = envelope_phase(&cached_scan("fc_plain", &plain), carrier, omega_vib);
    let step = envelope_phase(&cached_scan("fc_pi_step", &stepped), carrier, omega_vib);
    let step_shift = wrap(step - base, t_vib).abs();
    let step_pred = wrap(analytic_envelope_phase(&stepped, omega_vib) - analytic_envelope_phase(&plain, omega_vib), t_vib).abs();
    let step_ok = (step_shift - 0.5 * t_vib).abs() <= 2.0;

    let pass = monotone && same_sense && step_ok;
    report(
        8,
        "pulse-shape controls",
        pass,
        &format!(
            "envelope shift for chirp -50/0/+50 fs^2: {:.2}/{:.2}/{:.2} fs (analytic {:.2}/{:.2}/{:.2}); pi step shift {step_shift:.2} fs vs T/2 = {:.2} fs (analytic {step_pred:.2})",
            tdse_shift[0],
            tdse_shift[1],
            tdse_shift[2],
            pred_shift[0],
            pred_shift[1],
            pred_shift[2],
            0.5 * t_vib
        ),
    );
    assert!(pass);
}
