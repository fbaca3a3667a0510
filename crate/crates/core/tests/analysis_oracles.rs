//! Trace analysis against synthetic traces with known answers.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use attoscope::analysis::{
    analyze, bandpass, beat_spectrum, demodulate, envelope_period, estimate_timing_jitter, extract_components, fit_sinusoid, phase_cycle,
    AnalysisOptions, DemodulationOptions, SpectrumOptions,
};
use attoscope::analytic::{difference_sum, signal_trace, OverlapOptions};
use attoscope::units::thz_to_angular;
use attoscope::{benzene_preset, DelayTrace, Overlap, OverlapTable, TwoStateParams};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

fn preset_params() -> TwoStateParams {
    let m = benzene_preset();
    let table = OverlapTable::compute(&m, 170.0, &OverlapOptions::default()).unwrap();
    TwoStateParams::new(Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.6), m.carrier_angular(), 0.002, Overlap::Table(Arc::new(table))).unwrap()
}

const CARRIER_THZ: f64 = 1172.0;

/// One-femtosecond, one-attosecond-step fringe with delay and amplitude noise.
fn fine_trace(rng: &mut ChaCha8Rng, delay_sigma_fs: f64, amp_sigma: f64) -> DelayTrace {
    let w = thz_to_angular(CARRIER_THZ);
    let delay_noise = Normal::new(0.0, delay_sigma_fs.max(1e-300)).unwrap();
    let amp_noise = Normal::new(0.0, amp_sigma.max(1e-300)).unwrap();
    let t = grid(80.0, 81.0, 0.001);
    let values = t
        .iter()
        .map(|&tau| {
            let dt = if delay_sigma_fs > 0.0 { delay_noise.sample(rng) } else { 0.0 };
            let da = if amp_sigma > 0.0 { amp_noise.sample(rng) } else { 0.0 };
            2.0 + (w * (tau + dt) + 0.3).cos() + da
        })
        .collect();
    DelayTrace::new(t, values).unwrap()
}

#[test]
fn monte_carlo_delay_jitter_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = thz_to_angular(CARRIER_THZ);
    let estimates: Vec<f64> = (0..100)
        .map(|_| estimate_timing_jitter(&fine_trace(&mut rng, 0.006, 0.0), w).unwrap().sigma_as)
        .collect();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    assert!((mean / 6.0 - 1.0).abs() < 0.2, "mean {mean} as");
    // every single repeat is within the band too
    assert!(estimates.iter().all(|e| (e / 6.0 - 1.0).abs() < 0.2));
}

#[test]
fn amplitude_noise_maps_through_the_slope() {
    // SNR 100; residual over mean-square slope gives sqrt(2) sigma_a / (A w)
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let w = thz_to_angular(CARRIER_THZ);
    let sigma_a = 0.01;
    let predicted_as = 1000.0 * 2f64.sqrt() * sigma_a / w;
    let mean = (0..100)
        .map(|_| estimate_timing_jitter(&fine_trace(&mut rng, 0.0, sigma_a), w).unwrap().sigma_as)
        .sum::<f64>()
        / 100.0;
    assert!((mean / predicted_as - 1.0).abs() < 0.3, "{mean} vs {predicted_as}");
}

#[test]
fn jitter_needs_fifty_samples() {
    let t = grid(80.0, 80.04, 0.001);
    let tr = DelayTrace::from_fn(&t, |x| x.cos());
    assert!(estimate_timing_jitter(&tr, thz_to_angular(CARRIER_THZ)).is_err());
}

#[test]
fn demodulation_recovers_the_overlap() {
    let p = preset_params();
    let delays = grid(60.0, 160.0, 0.1);
    let (diff, _) = difference_sum(&p, &delays);
    let env = demodulate(&diff, p.omega_e, &DemodulationOptions::default()).unwrap();
    let mag = env.magnitude();
    let truth: Vec<f64> = delays.iter().map(|&t| p.overlap.at(t).norm()).collect();
    // compare the interior, each normalised to its maximum there
    let inner = 60..(delays.len() - 60);
    let max_a = inner.clone().map(|i| mag.values[i]).fold(0.0, f64::max);
    let max_b = inner.clone().map(|i| truth[i]).fold(0.0, f64::max);
    for i in inner {
        let err = (mag.values[i] / max_a - truth[i] / max_b).abs();
        assert!(err < 0.02, "tau {} err {err}", delays[i]);
    }
}

#[test]
fn remodulation_reproduces_the_band() {
    let p = preset_params();
    let delays = grid(60.0, 160.0, 0.1);
    let (diff, _) = difference_sum(&p, &delays);
    let opts = DemodulationOptions::default();
    let band = bandpass(&diff, p.omega_e, &opts).unwrap();
    let back = demodulate(&diff, p.omega_e, &opts).unwrap().remodulate();
    let rms = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (s / n as f64).sqrt()
    };
    let err = rms(&mut band.values.iter().zip(&back.values).map(|(a, b)| a - b));
    let scale = rms(&mut band.values.iter().copied());
    assert!(err / scale < 0.01, "{}", err / scale);
    // and the band is the diff itself, which has no baseline
    let raw = rms(&mut diff.values.iter().zip(&band.values).skip(60).take(diff.len() - 120).map(|(a, b)| a - b));
    assert!(raw / scale < 0.01);
}

#[test]
fn envelope_period_is_the_excited_period() {
    let p = preset_params();
    let (diff, _) = difference_sum(&p, &grid(60.0, 160.0, 0.1));
    let env = demodulate(&diff, p.omega_e, &DemodulationOptions::default()).unwrap().magnitude();
    let period = envelope_period(&env.window(67.0, 153.0)).unwrap();
    assert!((period - 36.06).abs() < 0.5, "{period}");
}

#[test]
fn analytic_fringe_period() {
    let p = preset_params();
    let delays = grid(60.0, 100.0, 0.1);
    let (diff, _) = difference_sum(&p, &delays);
    let fit = fit_sinusoid(&delays, &diff.values, p.omega_e).unwrap();
    let period_as = 1000.0 * fit.period_fs();
    assert!((period_as - 853.2).abs() < 0.5, "{period_as}");
}

#[test]
fn sum_has_no_carrier() {
    let p = preset_params();
    let delays = grid(60.0, 160.0, 0.1);
    let trace = signal_trace(&p, &delays, &[0.0, PI]).unwrap();
    let (diff, sum) = phase_cycle(&trace).unwrap();
    let opts = SpectrumOptions::default();
    let d = beat_spectrum(&diff, &opts).unwrap();
    let s = beat_spectrum(&sum, &opts).unwrap();
    let carrier = d.dominant().unwrap();
    let level = 20.0 * (s.magnitude_at(carrier.frequency_thz) / carrier.magnitude).log10();
    assert!(level < -40.0, "{level} dB");
    // reconstruction identities
    for (i, y) in trace.yields.iter().enumerate() {
        assert!((diff.values[i] + sum.values[i] - 2.0 * y[0]).abs() <= 1e-15 * y[0].abs().max(1e-30) * 4.0);
        assert!((sum.values[i] - diff.values[i] - 2.0 * y[1]).abs() <= 1e-15 * y[1].abs().max(1e-30) * 4.0);
    }
}

#[test]
fn analysis_of_the_analytic_trace() {
    let p = preset_params();
    let delays = grid(60.0, 160.0, 0.1);
    let (diff, sum) = difference_sum(&p, &delays);
    let opts = AnalysisOptions { expected_carrier_thz: Some(CARRIER_THZ), ..Default::default() };
    let r = analyze(&diff, Some(&sum), &opts).unwrap();
    assert!((r.carrier_frequency_thz - CARRIER_THZ).abs() < 3.0);
    assert!((r.carrier_period_as - 853.2).abs() < 3.0);
    assert!((r.envelope_period_fs - 36.06).abs() < 0.5, "{}", r.envelope_period_fs);
    let offsets: Vec<f64> = r.sideband_frequencies_thz.iter().map(|f| f - r.carrier_frequency_thz).collect();
    for target in [-27.73, 27.73] {
        assert!(offsets.iter().any(|o| (o - target).abs() < 1.0), "{offsets:?}");
    }
    assert!(r.jitter_estimate_as.is_none());
}

#[test]
fn components_resolve_close_lines() {
    // a strong line with two weak neighbours 2.8 bins away
    let delays = grid(60.0, 160.0, 0.1);
    let f = [1172.0, 1144.27, 1199.73];
    let a = [1.0, 0.08, 0.05];
    let tr = DelayTrace::from_fn(&delays, |t| (0..3).map(|k| a[k] * (thz_to_angular(f[k]) * t + k as f64).cos()).sum());
    let comps = extract_components(&tr, 3, 0.01, &SpectrumOptions::default()).unwrap();
    assert_eq!(comps.len(), 3);
    for k in 0..3 {
        let c = comps.iter().min_by(|x, y| (x.frequency_thz - f[k]).abs().total_cmp(&(y.frequency_thz - f[k]).abs())).unwrap();
        assert!((c.frequency_thz - f[k]).abs() < 1e-4, "{} vs {}", c.frequency_thz, f[k]);
        assert!((c.amplitude - a[k]).abs() < 1e-4);
    }
}

#[test]
fn fine_trace_fills_the_jitter_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tr = fine_trace(&mut rng, 0.006, 0.0);
    let opts = AnalysisOptions { expected_carrier_thz: Some(CARRIER_THZ), ..Default::default() };
    let r = analyze(&tr, None, &opts).unwrap();
    let j = r.jitter_estimate_as.unwrap();
    assert!(j > 3.0 && j < 9.0, "{j}");
    assert!((r.carrier_period_as - 1000.0 * TAU / thz_to_angular(CARRIER_THZ)).abs() < 3.0);
}
