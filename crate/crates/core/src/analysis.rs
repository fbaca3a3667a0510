//! Phase cycling, beat spectra, demodulation and timing-jitter estimation
//! for delay traces.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{uniform_step, IonizationTrace};
use crate::units;

pub const DELAY_TRACE_SCHEMA: &str = "# attoscope-delay-trace v1";
pub const ANALYSIS_SCHEMA: &str = "attoscope-analysis v1";

/// A real signal sampled on a delay axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTrace {
    pub delays_fs: Vec<f64>,
    pub values: Vec<f64>,
}

impl DelayTrace {
    pub fn new(delays_fs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if delays_fs.len() != values.len() {
            return Err(Error::analysis("delay and value arrays differ in length"));
        }
        Ok(Self { delays_fs, values })
    }

    pub fn from_fn(delays_fs: &[f64], f: impl Fn(f64) -> f64) -> Self {
        Self { delays_fs: delays_fs.to_vec(), values: delays_fs.iter().map(|&d| f(d)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Uniform sampling step, or an error if the axis is not uniform.
    pub fn step(&self) -> Result<f64> {
        uniform_step(&self.delays_fs).ok_or_else(|| Error::analysis("delay axis must be uniformly sampled with at least two points"))
    }

    /// Samples with `lo <= delay <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> DelayTrace {
        let (d, v) = self
            .delays_fs
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| **d >= lo - 1e-9 && **d <= hi + 1e-9)
            .map(|(d, v)| (*d, *v))
            .unzip();
        DelayTrace { delays_fs: d, values: v }
    }

    pub fn to_csv(&self, column: &str) -> String {
        let mut s = format!("{DELAY_TRACE_SCHEMA}\ndelay_fs,{column}\n");
        for (d, v) in self.delays_fs.iter().zip(&self.values) {
            let _ = writeln!(s, "{d:.16e},{v:.16e}");
        }
        s
    }
}

/// Complex envelope on a delay axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    pub delays_fs: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Carrier used for demodulation (rad/fs).
    pub carrier: f64,
}

impl ComplexEnvelope {
    pub fn magnitude(&self) -> DelayTrace {
        DelayTrace { delays_fs: self.delays_fs.clone(), values: self.values.iter().map(|z| z.norm()).collect() }
    }

    /// `Re[O(τ) e^{−iωτ}]`, the band-limited signal the envelope came from.
    pub fn remodulate(&self) -> DelayTrace {
        DelayTrace {
            delays_fs: self.delays_fs.clone(),
            values: self
                .delays_fs
                .iter()
                .zip(&self.values)
                .map(|(&d, z)| (z * Complex64::from_polar(1.0, -self.carrier * d)).re)
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{DELAY_TRACE_SCHEMA}\ndelay_fs,re_envelope,im_envelope,abs_envelope\n");
        for (d, z) in self.delays_fs.iter().zip(&self.values) {
            let _ = writeln!(s, "{d:.16e},{:.16e},{:.16e},{:.16e}", z.re, z.im, z.norm());
        }
        s
    }
}

/// `S(τ,0) − S(τ,π)` and `S(τ,0) + S(τ,π)`.
pub fn phase_cycle(trace: &IonizationTrace) -> Result<(DelayTrace, DelayTrace)> {
    let i0 = trace.phase_index(0.0).ok_or_else(|| Error::analysis("trace has no phase-0 column"))?;
    let ipi = trace.phase_index(PI).ok_or_else(|| Error::analysis("trace has no phase-pi column"))?;
    let (diff, sum) = trace.yields.iter().map(|r| (r[i0] - r[ipi], r[i0] + r[ipi])).unzip();
    Ok((
        DelayTrace { delays_fs: trace.delays_fs.clone(), values: diff },
        DelayTrace { delays_fs: trace.delays_fs.clone(), values: sum },
    ))
}

/// Complex envelope from a four-phase trace: `[S(0) − S(π)] + i[S(π/2) − S(3π/2)]`
/// times `e^{+iωτ}`, with `ω` the reference carrier.
pub fn quadrature_envelope(trace: &IonizationTrace, carrier: f64) -> Result<ComplexEnvelope> {
    let idx = |p: f64| trace.phase_index(p).ok_or_else(|| Error::analysis(format!("trace has no phase {p:.4} column")));
    let (a, b, c, d) = (idx(0.0)?, idx(0.5 * PI)?, idx(PI)?, idx(1.5 * PI)?);
    let values = trace
        .delays_fs
        .iter()
        .zip(&trace.yields)
        .map(|(&t, r)| Complex64::new(r[a] - r[c], r[b] - r[d]) * Complex64::from_polar(1.0, carrier * t))
        .collect();
    Ok(ComplexEnvelope { delays_fs: trace.delays_fs.clone(), values, carrier })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub frequency_thz: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSpectrum {
    pub frequencies_thz: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Bin spacing of the unpadded transform, `1/(N·step)`.
    pub resolution_thz: f64,
    /// Local maxima, strongest first.
    pub peaks: Vec<SpectralPeak>,
}

impl BeatSpectrum {
    pub fn dominant(&self) -> Option<SpectralPeak> {
        self.peaks.first().copied()
    }

    /// Magnitude at the bin nearest `f`.
    pub fn magnitude_at(&self, f_thz: f64) -> f64 {
        let df = self.frequencies_thz.get(1).copied().unwrap_or(1.0);
        let k = (f_thz / df).round() as usize;
        self.magnitude.get(k).copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{DELAY_TRACE_SCHEMA}\nfrequency_thz,magnitude\n");
        for (f, m) in self.frequencies_thz.iter().zip(&self.magnitude) {
            let _ = writeln!(s, "{f:.16e},{m:.16e}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Zero-padding factor applied on top of the next power of two.
    pub zero_pad: usize,
    /// Highest frequency the trace must resolve; sampling is checked against it.
    pub max_frequency_thz: Option<f64>,
    /// Peaks below this fraction of the strongest are dropped.
    pub min_relative_peak: f64,
    /// Remove the mean before transforming.
    pub remove_mean: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { zero_pad: 8, max_frequency_thz: None, min_relative_peak: 0.02, remove_mean: true }
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n).map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Vertex of the parabola through three equally spaced samples, as an
/// offset in bins from the middle one and the interpolated height.
pub fn parabolic_peak(a: f64, b: f64, c: f64) -> (f64, f64) {
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return (0.0, b);
    }
    let p = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    (p, b - 0.25 * (a - c) * p)
}

/// Hann-windowed magnitude spectrum with parabolic peak refinement.
pub fn beat_spectrum(trace: &DelayTrace, opts: &SpectrumOptions) -> Result<BeatSpectrum> {
    let step = trace.step()?;
    if let Some(fmax) = opts.max_frequency_thz {
        let max_step = 1000.0 / (2.0 * fmax);
        if step > max_step {
            return Err(Error::analysis(format!(
                "delay step {:.1} as undersamples {fmax:.0} THz; minimum step is {:.1} as",
                1000.0 * step,
                1000.0 * max_step
            )));
        }
    }
    let n = trace.len();
    let mean = if opts.remove_mean { trace.values.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let w = hann(n);
    let size = n.next_power_of_two() * opts.zero_pad.max(1);
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (i, (v, wi)) in trace.values.iter().zip(&w).enumerate() {
        buf[i] = Complex64::new((v - mean) * wi, 0.0);
    }
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let half = size / 2 + 1;
    // window gain 1/2: a unit cosine gives a peak near 1
    let norm = 4.0 / n as f64;
    let magnitude: Vec<f64> = buf[..half].iter().map(|z| z.norm() * norm).collect();
    let df = 1000.0 / (size as f64 * step);
    let frequencies_thz: Vec<f64> = (0..half).map(|k| k as f64 * df).collect();

    let max = magnitude.iter().cloned().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for k in 1..half - 1 {
        let (a, b, c) = (magnitude[k - 1], magnitude[k], magnitude[k + 1]);
        if b > a && b >= c && b >= opts.min_relative_peak * max && b > 0.0 {
            let (p, h) = parabolic_peak(a, b, c);
            peaks.push(SpectralPeak { frequency_thz: (k as f64 + p) * df, magnitude: h });
        }
    }
    peaks.sort_by(|x, y| y.magnitude.total_cmp(&x.magnitude));
    Ok(BeatSpectrum { frequencies_thz, magnitude, resolution_thz: 1000.0 / (n as f64 * step), peaks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemodulationOptions {
    /// Low-pass cutoff as a fraction of the carrier frequency.
    pub cutoff_fraction: f64,
}

impl Default for DemodulationOptions {
    fn default() -> Self {
        Self { cutoff_fraction: 0.25 }
    }
}

/// Zero-phase FFT low-pass with a raised-cosine edge between `fc/2` and
/// `fc`. The signal is mirrored at both ends to avoid wrap-around; the
/// first and last few filter lengths still carry edge ripple.
fn lowpass(values: &[Complex64], step: f64, cutoff: f64) -> Vec<Complex64> {
    let n = values.len();
    let size = (3 * n).next_power_of_two();
    let off = (size - n) / 2;
    // even reflection about both ends, repeated out to the buffer edges
    let mut ext: Vec<Complex64> = (0..size)
        .map(|i| {
            let j = (i as i64 - off as i64).rem_euclid(2 * n as i64) as usize;
            values[if j < n { j } else { 2 * n - 1 - j }]
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut ext);
    let lo = 0.5 * cutoff;
    for (k, z) in ext.iter_mut().enumerate() {
        let kk = if k <= size / 2 { k as f64 } else { k as f64 - size as f64 };
        let f = (kk / (size as f64 * step)).abs() * TAU;
        let h = if f <= lo {
            1.0
        } else if f >= cutoff {
            0.0
        } else {
            0.5 + 0.5 * (PI * (f - lo) / (cutoff - lo)).cos()
        };
        *z *= h / size as f64;
    }
    planner.plan_fft_inverse(size).process(&mut ext);
    ext[off..off + n].to_vec()
}

/// Complex envelope `O(τ)` of `diff ≈ Re[O(τ) e^{−iωτ}]`.
pub fn demodulate(trace: &DelayTrace, carrier: f64, opts: &DemodulationOptions) -> Result<ComplexEnvelope> {
    if !(carrier > 0.0) {
        return Err(Error::analysis("carrier must be positive"));
    }
    if !(opts.cutoff_fraction > 0.0) || opts.cutoff_fraction >= 0.5 {
        return Err(Error::analysis(format!(
            "low-pass cutoff {} x carrier must lie below carrier/2",
            opts.cutoff_fraction
        )));
    }
    let step = trace.step()?;
    if step > PI / carrier {
        return Err(Error::analysis(format!("delay step {step} fs undersamples the carrier")));
    }
    let mixed: Vec<Complex64> = trace
        .delays_fs
        .iter()
        .zip(&trace.values)
        .map(|(&d, &v)| 2.0 * v * Complex64::from_polar(1.0, carrier * d))
        .collect();
    let values = lowpass(&mixed, step, opts.cutoff_fraction * carrier);
    Ok(ComplexEnvelope { delays_fs: trace.delays_fs.clone(), values, carrier })
}

/// Same pass band as [`demodulate`], applied to the real trace.
pub fn bandpass(trace: &DelayTrace, carrier: f64, opts: &DemodulationOptions) -> Result<DelayTrace> {
    demodulate(trace, carrier, opts).map(|e| e.remodulate())
}

/// Period of the strongest repeat in `trace` by unbiased autocorrelation
/// of the mean-removed signal: the first local maximum after the first
/// zero crossing, parabolically refined.
pub fn autocorrelation_period(trace: &DelayTrace) -> Result<f64> {
    let step = trace.step()?;
    let n = trace.len();
    let mean = trace.values.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = trace.values.iter().map(|v| v - mean).collect();
    let max_lag = 2 * n / 3;
    let ac: Vec<f64> = (0..max_lag)
        .map(|lag| (0..n - lag).map(|i| x[i] * x[i + lag]).sum::<f64>() / (n - lag) as f64)
        .collect();
    let first_negative = ac.iter().position(|&v| v < 0.0).ok_or_else(|| Error::analysis("autocorrelation never crosses zero"))?;
    for k in first_negative.max(1)..ac.len() - 1 {
        if ac[k] > ac[k - 1] && ac[k] >= ac[k + 1] && ac[k] > 0.0 {
            let (p, _) = parabolic_peak(ac[k - 1], ac[k], ac[k + 1]);
            return Ok((k as f64 + p) * step);
        }
    }
    Err(Error::analysis("no autocorrelation peak within two thirds of the window"))
}

/// `C + A cos(ωτ + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
    /// One-sigma uncertainty of `omega` from the residuals.
    pub omega_error: f64,
}

impl SinusoidFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * t + self.phase).cos()
    }

    pub fn period_fs(&self) -> f64 {
        TAU / self.omega
    }
}

/// Linear least squares for `C + a cos ωτ + b sin ωτ` at fixed `ω`.
fn fit_fixed(t: &[f64], y: &[f64], omega: f64) -> Result<(f64, f64, f64, f64)> {
    let n = t.len();
    let m = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (omega * t[i]).cos(),
        _ => (omega * t[i]).sin(),
    });
    let rhs = DVector::from_column_slice(y);
    let svd = m.clone().svd(true, true);
    let c = svd.solve(&rhs, 1e-12).map_err(|e| Error::analysis(format!("sinusoid fit failed: {e}")))?;
    let r = &rhs - &m * &c;
    Ok((c[0], c[1], c[2], r.norm_squared()))
}

/// Least-squares sinusoid at fixed `omega`.
pub fn fit_sinusoid_fixed(t: &[f64], y: &[f64], omega: f64) -> Result<SinusoidFit> {
    if t.len() < 4 || t.len() != y.len() {
        return Err(Error::analysis("sinusoid fit needs at least four samples"));
    }
    let (c, a, b, ss) = fit_fixed(t, y, omega)?;
    Ok(SinusoidFit {
        omega,
        amplitude: a.hypot(b),
        phase: (-b).atan2(a),
        offset: c,
        residual_rms: (ss / t.len() as f64).sqrt(),
        omega_error: 0.0,
    })
}

/// Least-squares sinusoid with the frequency refined from `omega_guess`
/// (golden-section search over ±5%, then Gauss-Newton polish).
pub fn fit_sinusoid(t: &[f64], y: &[f64], omega_guess: f64) -> Result<SinusoidFit> {
    if t.len() < 5 || t.len() != y.len() {
        return Err(Error::analysis("sinusoid fit needs at least five samples"));
    }
    let cost = |w: f64| fit_fixed(t, y, w).map(|r| r.3).unwrap_or(f64::INFINITY);
    // bracket: the cost is only unimodal within about one cycle of phase
    // drift over the window, so first scan coarsely
    let span = t[t.len() - 1] - t[0];
    let width = (0.05 * omega_guess).min(4.0 * TAU / span.max(1e-12)).max(1e-9);
    let n_scan = 64;
    let mut best = (omega_guess, cost(omega_guess));
    for k in 0..=n_scan {
        let w = omega_guess - width + 2.0 * width * k as f64 / n_scan as f64;
        let c = cost(w);
        if c < best.1 {
            best = (w, c);
        }
    }
    let h = 2.0 * width / n_scan as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 * omega_guess {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2);
        }
    }
    let omega = 0.5 * (a + b);
    let mut fit = fit_sinusoid_fixed(t, y, omega)?;
    // frequency uncertainty from the Jacobian column ∂y/∂ω
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let s2: f64 = t
        .iter()
        .map(|&ti| (fit.amplitude * (ti - tm) * (omega * ti + fit.phase).sin()).powi(2))
        .sum();
    let dof = (n - 4.0).max(1.0);
    fit.omega_error = if s2 > 0.0 { (fit.residual_rms.powi(2) * n / dof / s2).sqrt() } else { 0.0 };
    Ok(fit)
}

/// One sinusoid `A cos(2πfτ + φ)` of a multi-component fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidComponent {
    pub frequency_thz: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl SinusoidComponent {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (units::thz_to_angular(self.frequency_thz) * t + self.phase).cos()
    }
}

/// Linear least squares for `C + Σ a_k cos ω_k τ + b_k sin ω_k τ`; returns
/// `(C, [(a_k, b_k)], residual sum of squares)`.
fn fit_fixed_multi(t: &[f64], y: &[f64], omegas: &[f64]) -> Result<(f64, Vec<(f64, f64)>, f64)> {
    let n = t.len();
    let m = DMatrix::from_fn(n, 1 + 2 * omegas.len(), |i, j| {
        if j == 0 {
            return 1.0;
        }
        let w = omegas[(j - 1) / 2];
        if j % 2 == 1 {
            (w * t[i]).cos()
        } else {
            (w * t[i]).sin()
        }
    });
    let rhs = DVector::from_column_slice(y);
    let c = m
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::analysis(format!("multi-sinusoid fit failed: {e}")))?;
    let r = &rhs - &m * &c;
    let ab = (0..omegas.len()).map(|k| (c[1 + 2 * k], c[2 + 2 * k])).collect();
    Ok((c[0], ab, r.norm_squared()))
}

fn golden_min(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Strongest sinusoids of a trace, found one at a time from the spectrum of
/// the residual and then refined jointly by least squares. This removes
/// the leakage of a strong carrier into nearby weak sidebands.
/// Extraction stops at `max_components` or when the next peak falls below
/// `min_relative` of the first.
pub fn extract_components(trace: &DelayTrace, max_components: usize, min_relative: f64, opts: &SpectrumOptions) -> Result<Vec<SinusoidComponent>> {
    let step = trace.step()?;
    let n = trace.len();
    if n < 2 * max_components + 2 {
        return Err(Error::analysis("trace too short for the requested number of components"));
    }
    let span = step * (n - 1) as f64;
    let t = &trace.delays_fs;
    let mut omegas: Vec<f64> = Vec::new();
    let mut residual = trace.clone();
    let mut first = None;
    let cost = |ws: &[f64]| fit_fixed_multi(t, &trace.values, ws).map(|r| r.2).unwrap_or(f64::INFINITY);
    while omegas.len() < max_components {
        let sp = beat_spectrum(&residual, &SpectrumOptions { max_frequency_thz: None, remove_mean: true, ..*opts })?;
        let Some(peak) = sp.dominant() else { break };
        let reference = *first.get_or_insert(peak.magnitude);
        if peak.magnitude < min_relative * reference {
            break;
        }
        omegas.push(units::thz_to_angular(peak.frequency_thz));
        let half = PI / span;
        for _sweep in 0..3 {
            for k in 0..omegas.len() {
                let w0 = omegas[k];
                let mut ws = omegas.clone();
                omegas[k] = golden_min(w0 - half, w0 + half, 1e-10 * w0, |w| {
                    ws[k] = w;
                    cost(&ws)
                });
            }
        }
        let (c, ab, _) = fit_fixed_multi(t, &trace.values, &omegas)?;
        residual.values = t
            .iter()
            .zip(&trace.values)
            .map(|(&ti, &yi)| yi - c - omegas.iter().zip(&ab).map(|(w, (a, b))| a * (w * ti).cos() + b * (w * ti).sin()).sum::<f64>())
            .collect();
    }
    let (_, ab, _) = fit_fixed_multi(t, &trace.values, &omegas)?;
    let mut out: Vec<SinusoidComponent> = omegas
        .iter()
        .zip(&ab)
        .map(|(&w, &(a, b))| SinusoidComponent { frequency_thz: units::angular_to_thz(w), amplitude: a.hypot(b), phase: (-b).atan2(a) })
        .collect();
    out.sort_by(|x, y| y.amplitude.total_cmp(&x.amplitude));
    Ok(out)
}

/// Period of a slowly varying envelope: autocorrelation for a first guess,
/// then a least-squares sinusoid fit.
pub fn envelope_period(envelope: &DelayTrace) -> Result<f64> {
    let guess = autocorrelation_period(envelope)?;
    let fit = fit_sinusoid(&envelope.delays_fs, &envelope.values, TAU / guess)?;
    Ok(fit.period_fs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterEstimate {
    /// Timing jitter upper limit (as).
    pub sigma_as: f64,
    /// Equivalent carrier-phase noise (rad).
    pub sigma_phase_rad: f64,
    pub fit: SinusoidFit,
    pub n_samples: usize,
}

/// Timing-jitter upper limit from a fine delay trace.
///
/// A sinusoid at the carrier is fitted by least squares and every residual
/// is attributed to delay noise: with slopes `s_i` of the fitted curve,
/// `σ_t² = Σ r_i² / Σ s_i²` (corrected for the three fitted parameters).
/// The phase noise is `σ_φ = ω σ_t`.
pub fn estimate_timing_jitter(trace: &DelayTrace, carrier: f64) -> Result<JitterEstimate> {
    let n = trace.len();
    if n < 50 {
        return Err(Error::analysis(format!("jitter estimate needs at least 50 samples, got {n}")));
    }
    let step = trace.step()?;
    if step > 0.010 + 1e-12 {
        return Err(Error::analysis(format!("jitter estimate needs delay steps <= 10 as, got {:.1} as", 1000.0 * step)));
    }
    let span = trace.delays_fs[n - 1] - trace.delays_fs[0];
    if span < TAU / carrier * (1.0 - 1e-9) {
        return Err(Error::analysis("jitter trace must span at least one carrier period"));
    }
    let fit = fit_sinusoid_fixed(&trace.delays_fs, &trace.values, carrier)?;
    let mut rr = 0.0;
    let mut ss = 0.0;
    for (&t, &y) in trace.delays_fs.iter().zip(&trace.values) {
        rr += (y - fit.eval(t)).powi(2);
        ss += (fit.amplitude * carrier * (carrier * t + fit.phase).sin()).powi(2);
    }
    if ss == 0.0 {
        return Err(Error::analysis("fitted sinusoid has zero amplitude"));
    }
    let sigma_t = (rr / ss * n as f64 / (n as f64 - 3.0)).sqrt();
    Ok(JitterEstimate { sigma_as: 1000.0 * sigma_t, sigma_phase_rad: carrier * sigma_t, fit, n_samples: n })
}

/// Observables extracted from a difference trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub schema: String,
    pub carrier_frequency_thz: f64,
    pub carrier_frequency_error_thz: f64,
    pub carrier_period_as: f64,
    pub envelope_period_fs: f64,
    pub sideband_frequencies_thz: Vec<f64>,
    pub modulation_depth: f64,
    pub jitter_estimate_as: Option<f64>,
    /// Carrier fraction of the sum trace relative to the difference trace (dB).
    pub sum_carrier_level_db: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Carrier guess in THz; the dominant peak is used when absent.
    pub expected_carrier_thz: Option<f64>,
    pub spectrum: SpectrumOptions,
    pub demodulation: DemodulationOptions,
    /// Sidebands are searched within this distance of the carrier (THz).
    pub sideband_search_thz: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            expected_carrier_thz: None,
            spectrum: SpectrumOptions::default(),
            demodulation: DemodulationOptions::default(),
            sideband_search_thz: 80.0,
        }
    }
}

/// Full analysis of a difference (and optionally sum) trace.
pub fn analyze(diff: &DelayTrace, sum: Option<&DelayTrace>, opts: &AnalysisOptions) -> Result<AnalysisResult> {
    if diff.len() < 8 {
        return Err(Error::analysis("trace too short to analyse"));
    }
    let mut notes = Vec::new();
    let step = diff.step()?;
    let jitter_only = step <= 0.010 && (diff.delays_fs[diff.len() - 1] - diff.delays_fs[0]) < 10.0;
    let spectrum = beat_spectrum(diff, &opts.spectrum)?;
    let carrier_peak = match opts.expected_carrier_thz {
        Some(f) => spectrum
            .peaks
            .iter()
            .filter(|p| (p.frequency_thz - f).abs() < 0.05 * f)
            .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude))
            .copied()
            .or_else(|| spectrum.dominant()),
        None => spectrum.dominant(),
    }
    .ok_or_else(|| Error::analysis("difference trace has no spectral peak"))?;

    let (carrier_frequency_thz, carrier_frequency_error_thz, sideband_frequencies_thz) = if jitter_only {
        // a window of about one period biases the spectral peak, so start
        // from the known carrier when there is one
        let guess = opts.expected_carrier_thz.unwrap_or(carrier_peak.frequency_thz);
        let fit = fit_sinusoid(&diff.delays_fs, &diff.values, units::thz_to_angular(guess))?;
        (units::angular_to_thz(fit.omega), units::angular_to_thz(fit.omega_error), Vec::new())
    } else {
        let comps = extract_components(diff, 5, 0.01, &opts.spectrum)?;
        let carrier = comps
            .iter()
            .filter(|c| (c.frequency_thz - carrier_peak.frequency_thz).abs() < spectrum.resolution_thz)
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
            .copied()
            .unwrap_or(comps[0]);
        // frequency error of the carrier with the other components removed
        let others: Vec<SinusoidComponent> = comps.iter().filter(|c| **c != carrier).copied().collect();
        let cleaned: Vec<f64> = diff
            .delays_fs
            .iter()
            .zip(&diff.values)
            .map(|(&t, &y)| y - others.iter().map(|c| c.eval(t)).sum::<f64>())
            .collect();
        let fit = fit_sinusoid_fixed(&diff.delays_fs, &cleaned, units::thz_to_angular(carrier.frequency_thz))?;
        let n = diff.len() as f64;
        let span = diff.delays_fs[diff.len() - 1] - diff.delays_fs[0];
        // Cramér-Rao bound for a single sinusoid in white noise
        let sigma_w = (12.0f64).sqrt() * fit.residual_rms / (fit.amplitude * span * n.sqrt());
        let sidebands: Vec<f64> = comps
            .iter()
            .filter(|c| {
                let d = (c.frequency_thz - carrier.frequency_thz).abs();
                d > 0.5 * spectrum.resolution_thz && d < opts.sideband_search_thz && c.amplitude > 0.01 * carrier.amplitude
            })
            .map(|c| c.frequency_thz)
            .collect();
        (carrier.frequency_thz, units::angular_to_thz(sigma_w), sidebands)
    };
    let carrier_thz = carrier_frequency_thz;

    let (envelope_period_fs, modulation_depth) = if jitter_only {
        notes.push("window shorter than 10 fs: envelope analysis skipped".into());
        (f64::NAN, f64::NAN)
    } else {
        let env = demodulate(diff, units::thz_to_angular(carrier_frequency_thz), &opts.demodulation)?;
        let mag = env.magnitude();
        // drop a filter-settling margin at each end
        let margin = (units::thz_to_period_fs(carrier_frequency_thz) * 8.0 / step).ceil() as usize;
        let inner = if mag.len() > 4 * margin + 8 {
            DelayTrace { delays_fs: mag.delays_fs[margin..mag.len() - margin].to_vec(), values: mag.values[margin..mag.len() - margin].to_vec() }
        } else {
            mag
        };
        let period = match envelope_period(&inner) {
            Ok(p) => p,
            Err(e) => {
                notes.push(format!("envelope period: {e}"));
                f64::NAN
            }
        };
        let hi = inner.values.iter().cloned().fold(f64::MIN, f64::max);
        let lo = inner.values.iter().cloned().fold(f64::MAX, f64::min);
        (period, (hi - lo) / (hi + lo))
    };

    let jitter_estimate_as = if step <= 0.010 && diff.len() >= 50 {
        // a short window pins the carrier poorly; prefer the known one
        let carrier = opts.expected_carrier_thz.unwrap_or(carrier_frequency_thz);
        estimate_timing_jitter(diff, units::thz_to_angular(carrier)).ok().map(|j| j.sigma_as)
    } else {
        None
    };

    let sum_carrier_level_db = match sum {
        Some(s) if !jitter_only => {
            let ss = beat_spectrum(s, &opts.spectrum)?;
            let level = ss.magnitude_at(carrier_thz) / spectrum.magnitude_at(carrier_thz);
            Some(20.0 * level.max(1e-300).log10())
        }
        _ => None,
    };

    Ok(AnalysisResult {
        schema: ANALYSIS_SCHEMA.to_string(),
        carrier_frequency_thz,
        carrier_frequency_error_thz,
        carrier_period_as: 1e6 / carrier_frequency_thz,
        envelope_period_fs,
        sideband_frequencies_thz,
        modulation_depth,
        jitter_estimate_as,
        sum_carrier_level_db,
        notes,
    })
}

/// Writes two-column plot files of the difference trace at three zoom
/// levels: the whole window, 10 fs around its centre, and 1 fs around its
/// centre. Only every `downsample`-th point is kept. Returns the paths
/// written.
pub fn write_zoom_plots(diff: &DelayTrace, dir: &Path, stem: &str, downsample: usize) -> Result<Vec<std::path::PathBuf>> {
    let n = diff.len();
    if n == 0 {
        return Err(Error::analysis("empty trace"));
    }
    let centre = 0.5 * (diff.delays_fs[0] + diff.delays_fs[n - 1]);
    let levels = [("full", f64::INFINITY), ("zoom10fs", 5.0), ("zoom1fs", 0.5)];
    let mut out = Vec::new();
    for (name, half) in levels {
        let w = if half.is_finite() { diff.window(centre - half, centre + half) } else { diff.clone() };
        let k = downsample.max(1);
        let w = DelayTrace {
            delays_fs: w.delays_fs.iter().step_by(k).copied().collect(),
            values: w.values.iter().step_by(k).copied().collect(),
        };
        let path = dir.join(format!("{stem}_{name}.csv"));
        fs::write(&path, w.to_csv("diff"))?;
        out.push(path);
    }
    Ok(out)
}

/// Pearson correlation of two equally long series.
pub fn normalized_cross_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma) * (x - ma);
        bb += (y - mb) * (y - mb);
    }
    ab / (aa * bb).sqrt()
}
