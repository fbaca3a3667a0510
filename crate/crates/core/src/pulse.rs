//! Spectral-domain pulse shaping and Fourier synthesis of the real field.
//!
//! A pulse is a Gaussian spectral amplitude `A(ω)` times `exp(iΦ(ω))`, where
//! `Φ` is the sum of the mask terms. The real field is
//! `E(t) = Σ_ω A(ω) e^{iΦ(ω)} e^{−iωt}` over a Hermitian spectrum, so a
//! delay ramp `Φ = ωτ` moves the whole pulse, carrier included, to `t = τ`.

use std::f64::consts::{LN_2, PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseMaskTerm {
    /// Constant spectral phase (rad).
    Constant { phase_rad: f64 },
    /// Linear ramp `ωτ`.
    DelayRamp { delay_fs: f64 },
    /// Quadratic phase `½φ₂(ω − ω₀)²` about the pulse centre.
    Chirp { gdd_fs2: f64 },
    /// Adds π for every frequency above `step_rad_per_fs`.
    PiStep { step_rad_per_fs: f64 },
}

impl PhaseMaskTerm {
    /// Phase at a positive angular frequency `omega`, with `center` the
    /// pulse's central frequency.
    pub fn phase(&self, omega: f64, center: f64) -> f64 {
        match *self {
            PhaseMaskTerm::Constant { phase_rad } => phase_rad,
            PhaseMaskTerm::DelayRamp { delay_fs } => omega * delay_fs,
            PhaseMaskTerm::Chirp { gdd_fs2 } => 0.5 * gdd_fs2 * (omega - center).powi(2),
            PhaseMaskTerm::PiStep { step_rad_per_fs } => {
                if omega > step_rad_per_fs {
                    PI
                } else {
                    0.0
                }
            }
        }
    }
}

/// Gaussian-spectrum pulse with a composable phase mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralPulse {
    /// Carrier angular frequency (rad/fs).
    pub central_frequency: f64,
    /// FWHM of the spectral intensity `|A(ω)|²` (rad/fs).
    pub spectral_fwhm: f64,
    /// Peak field of the transform-limited pulse.
    pub field_amplitude: f64,
    #[serde(default)]
    pub phase_mask: Vec<PhaseMaskTerm>,
}

impl SpectralPulse {
    /// Transform-limited pulse with the given intensity FWHM duration.
    pub fn transform_limited(central_frequency: f64, duration_fs: f64, field_amplitude: f64) -> Self {
        Self {
            central_frequency,
            spectral_fwhm: 4.0 * LN_2 / duration_fs,
            field_amplitude,
            phase_mask: Vec::new(),
        }
    }

    pub fn from_wavelength(wavelength_nm: f64, duration_fs: f64, field_amplitude: f64) -> Self {
        Self::transform_limited(units::ev_to_angular(units::wavelength_nm_to_ev(wavelength_nm)), duration_fs, field_amplitude)
    }

    pub fn with_term(mut self, term: PhaseMaskTerm) -> Self {
        self.phase_mask.push(term);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spectral_fwhm > 0.0) {
            return Err(Error::config("spectral_fwhm must be positive"));
        }
        if !(self.field_amplitude >= 0.0) {
            return Err(Error::config("field_amplitude must be non-negative"));
        }
        if !(self.central_frequency > 0.0) {
            return Err(Error::config("central_frequency must be positive"));
        }
        Ok(())
    }

    /// Standard deviation `σ` of `|A(ω)| ∝ exp(−(ω−ω₀)²/2σ²)`.
    pub fn spectral_sigma(&self) -> f64 {
        self.spectral_fwhm / (2.0 * LN_2.sqrt())
    }

    /// Intensity FWHM of the transform-limited pulse (fs).
    pub fn transform_limited_duration(&self) -> f64 {
        4.0 * LN_2 / self.spectral_fwhm
    }

    /// Rough intensity FWHM including chirp broadening; a π step doubles it.
    pub fn effective_duration(&self) -> f64 {
        let t0 = self.transform_limited_duration();
        let mut t = t0;
        for term in &self.phase_mask {
            match *term {
                PhaseMaskTerm::Chirp { gdd_fs2 } => {
                    let r = 4.0 * LN_2 * gdd_fs2 / (t0 * t0);
                    t *= (1.0 + r * r).sqrt();
                }
                PhaseMaskTerm::PiStep { .. } => t *= 2.0,
                _ => {}
            }
        }
        t
    }

    /// Spectral amplitude before the mask (no normalisation).
    pub fn amplitude_shape(&self, omega: f64) -> f64 {
        let s = self.spectral_sigma();
        (-(omega - self.central_frequency).powi(2) / (2.0 * s * s)).exp()
    }

    /// Spectral intensity normalised to one at the centre.
    pub fn intensity_shape(&self, omega: f64) -> f64 {
        self.amplitude_shape(omega).powi(2)
    }

    pub fn mask_phase(&self, omega: f64) -> f64 {
        self.phase_mask.iter().map(|t| t.phase(omega, self.central_frequency)).sum()
    }
}

/// Pump and probe with the probe delayed by `delay_fs` (a spectral ramp) and
/// shifted by `relative_phase` (a constant term).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub pump: SpectralPulse,
    pub probe: SpectralPulse,
    pub delay_fs: f64,
    pub relative_phase: f64,
}

impl PulseSequence {
    /// Identical pump and probe.
    pub fn pair(pulse: SpectralPulse, delay_fs: f64, relative_phase: f64) -> Self {
        Self { pump: pulse.clone(), probe: pulse, delay_fs, relative_phase }
    }

    pub fn with_delay(&self, delay_fs: f64) -> Self {
        Self { delay_fs, ..self.clone() }
    }

    pub fn with_phase(&self, relative_phase: f64) -> Self {
        Self { relative_phase, ..self.clone() }
    }

    /// Probe as a standalone pulse with the delay and phase folded into its mask.
    pub fn shaped_probe(&self) -> SpectralPulse {
        self.probe
            .clone()
            .with_term(PhaseMaskTerm::DelayRamp { delay_fs: self.delay_fs })
            .with_term(PhaseMaskTerm::Constant { phase_rad: self.relative_phase })
    }

    /// Half-width (fs) beyond which a pulse of this sequence is treated as off.
    pub fn half_extent(&self) -> f64 {
        3.0 * self.pump.effective_duration().max(self.probe.effective_duration())
    }

    /// Window from the pump start to `readout_fwhm` pulse durations after the
    /// probe ends.
    pub fn time_grid(&self, dt: f64, readout_fwhm: f64) -> Result<TimeGrid> {
        let h = self.half_extent();
        let first = self.delay_fs.min(0.0);
        let last = self.delay_fs.max(0.0);
        let fwhm = self.pump.effective_duration().max(self.probe.effective_duration());
        TimeGrid::new(first - h, last + h + readout_fwhm * fwhm, dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.probe.validate()
    }
}

/// Field samples at the midpoints of a time grid's steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    /// Time of the first sample (fs).
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    /// Largest imaginary part of the synthesised field relative to its peak.
    pub imag_ratio: f64,
    /// Fraction of the pulse energy that falls outside the sampled window.
    pub clipped_fraction: f64,
}

impl SampledField {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |n| self.t0 + n as f64 * self.dt)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise sum of two fields on the same sampling.
    pub fn add(&self, other: &SampledField) -> Result<SampledField> {
        if self.values.len() != other.values.len() || (self.t0 - other.t0).abs() > 1e-12 || self.dt != other.dt {
            return Err(Error::config("field samplings differ"));
        }
        Ok(SampledField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            imag_ratio: self.imag_ratio.max(other.imag_ratio),
            clipped_fraction: self.clipped_fraction.max(other.clipped_fraction),
            ..*self
        })
    }

    /// Samples zeroed, same layout.
    pub fn zeros_like(&self) -> SampledField {
        SampledField { values: vec![0.0; self.values.len()], imag_ratio: 0.0, clipped_fraction: 0.0, ..*self }
    }

    /// Two-column `t_fs,E` CSV text.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# attoscope-field v1\nt_fs,E\n");
        for (t, e) in self.times().zip(&self.values) {
            s.push_str(&format!("{t:.16e},{e:.16e}\n"));
        }
        s
    }
}

/// Fourier-synthesises the real field of a set of pulses on `n` samples
/// starting at `t0` with spacing `dt`.
pub fn synthesize_pulses(pulses: &[&SpectralPulse], t0: f64, dt: f64, n: usize) -> Result<SampledField> {
    let field = synthesize_unchecked(pulses, t0, dt, n)?;
    if field.clipped_fraction > 1e-6 {
        log::warn!("time window clips {:.2e} of the pulse energy", field.clipped_fraction);
    }
    Ok(field)
}

/// As [`synthesize_pulses`] without the clipping warning, for windows that
/// deliberately cut through a pulse.
pub(crate) fn synthesize_unchecked(pulses: &[&SpectralPulse], t0: f64, dt: f64, n: usize) -> Result<SampledField> {
    if n == 0 {
        return Err(Error::config("empty time window"));
    }
    for p in pulses {
        p.validate()?;
        let period = TAU / p.central_frequency;
        let upper = p.central_frequency + 6.0 * p.spectral_sigma();
        if dt > period / 50.0 || PI / dt < upper {
            return Err(Error::config(format!(
                "dt = {dt} fs too coarse for a {period:.4} fs carrier (need <= {:.5} fs)",
                period / 50.0
            )));
        }
    }
    let size = (2 * n).next_power_of_two();
    let d_omega = TAU / (size as f64 * dt);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
    for p in pulses {
        // scale so the transform-limited peak equals field_amplitude
        let shape_sum: f64 = (1..size / 2).map(|j| p.amplitude_shape(j as f64 * d_omega)).sum();
        if shape_sum == 0.0 {
            continue;
        }
        let scale = p.field_amplitude / (2.0 * shape_sum);
        for j in 1..size / 2 {
            let omega = j as f64 * d_omega;
            let a = p.amplitude_shape(omega);
            if a < 1e-300 {
                continue;
            }
            let phase = p.mask_phase(omega) - omega * t0;
            let z = Complex64::from_polar(scale * a, phase);
            spectrum[j] += z;
            spectrum[size - j] += z.conj();
        }
    }
    FftPlanner::new().plan_fft_forward(size).process(&mut spectrum);

    let peak = spectrum.iter().fold(0.0_f64, |m, z| m.max(z.re.abs()));
    let imag = spectrum.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    let total: f64 = spectrum.iter().map(|z| z.re * z.re).sum();
    let inside: f64 = spectrum[..n].iter().map(|z| z.re * z.re).sum();
    let clipped_fraction = if total > 0.0 { ((total - inside) / total).max(0.0) } else { 0.0 };
    Ok(SampledField {
        t0,
        dt,
        values: spectrum[..n].iter().map(|z| z.re).collect(),
        imag_ratio: if peak > 0.0 { imag / peak } else { 0.0 },
        clipped_fraction,
    })
}

/// Real field of a pump-probe sequence at the step midpoints of `tg`.
pub fn synthesize_field(seq: &PulseSequence, tg: &TimeGrid) -> Result<SampledField> {
    let probe = seq.shaped_probe();
    synthesize_pulses(&[&seq.pump, &probe], tg.midpoint(0), tg.dt, tg.n_steps())
}

/// `∫E² dt`.
pub fn pulse_energy(field: &SampledField) -> f64 {
    field.values.iter().map(|e| e * e).sum::<f64>() * field.dt
}

/// One sequence per relative phase, otherwise identical to `base`.
pub fn phase_cycle_schedule(base: &PulseSequence, phases: &[f64]) -> Result<Vec<PulseSequence>> {
    if phases.is_empty() {
        return Err(Error::config("empty schedule"));
    }
    Ok(phases.iter().map(|&p| base.with_phase(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> SpectralPulse {
        SpectralPulse::transform_limited(units::thz_to_angular(1172.0), 15.0, 1.0)
    }

    fn single(p: &SpectralPulse, t0: f64, dt: f64, n: usize) -> SampledField {
        synthesize_pulses(&[p], t0, dt, n).unwrap()
    }

    /// Intensity FWHM of |analytic signal|², built by zeroing negative
    /// frequencies.
    fn envelope_fwhm(f: &SampledField) -> f64 {
        let n = f.values.len();
        let mut z: Vec<Complex64> = f.values.iter().map(|&e| Complex64::new(e, 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut z);
        for (j, c) in z.iter_mut().enumerate() {
            if j > n / 2 {
                *c = Complex64::new(0.0, 0.0);
            } else if j > 0 {
                *c *= 2.0;
            }
        }
        planner.plan_fft_inverse(n).process(&mut z);
        let env: Vec<f64> = z.iter().map(|c| c.norm_sqr()).collect();
        let max = env.iter().cloned().fold(0.0, f64::max);
        let above: Vec<usize> = (0..n).filter(|&i| env[i] >= 0.5 * max).collect();
        (above[above.len() - 1] - above[0]) as f64 * f.dt
    }

    #[test]
    fn transform_limited_duration() {
        let p = pulse();
        let f = single(&p, -60.0, 0.005, 24000);
        let idx = f.values.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
        let t_peak = f.t0 + idx as f64 * f.dt;
        assert!(t_peak.abs() < 0.3, "{t_peak}");
        assert!((f.peak() - 1.0).abs() < 1e-3);
        let fwhm = envelope_fwhm(&f);
        assert!(((fwhm - 15.0) / 15.0).abs() < 0.01, "{fwhm}");
        assert!(f.imag_ratio < 1e-12);
    }

    #[test]
    fn delay_ramp_matches_shifted_analytic_field() {
        // analytic TL field: E0 exp(-σ²t²/2) cos(ω₀t); delayed copy evaluated at t-τ
        let p = pulse();
        let sigma = p.spectral_sigma();
        let w0 = p.central_frequency;
        let analytic = |t: f64| (-0.5 * sigma * sigma * t * t).exp() * (w0 * t).cos();
        for &tau in &[10.0, 0.4276, 123.4567] {
            let d = p.clone().with_term(PhaseMaskTerm::DelayRamp { delay_fs: tau });
            let f = single(&d, tau - 60.0, 0.005, 24000);
            let err = f
                .times()
                .zip(&f.values)
                .map(|(t, e)| (e - analytic(t - tau)).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "tau={tau}: {err}");
        }
    }

    #[test]
    fn half_electronic_period_flips_the_field() {
        let p = pulse();
        let a = single(&p, -40.0, 0.005, 16000);
        let d = p.clone().with_term(PhaseMaskTerm::DelayRamp { delay_fs: 0.4276 });
        let b = single(&d, -40.0, 0.005, 16000);
        // near the peak the delayed field is the negative of the undelayed one
        let i0 = 8000 - 100;
        let num: f64 = (i0..i0 + 200).map(|i| a.values[i] * b.values[i]).sum();
        let den: f64 = (i0..i0 + 200).map(|i| a.values[i] * a.values[i]).sum();
        assert!(num / den < -0.99, "{}", num / den);
    }

    #[test]
    fn energy_scaling_and_phase_only_masks() {
        let p = pulse();
        let base = pulse_energy(&single(&p, -80.0, 0.005, 32000));
        let mut doubled = p.clone();
        doubled.field_amplitude = 2.0;
        let e2 = pulse_energy(&single(&doubled, -80.0, 0.005, 32000));
        assert!((e2 / base - 4.0).abs() < 1e-12);

        let delayed = p.clone().with_term(PhaseMaskTerm::DelayRamp { delay_fs: 13.37 });
        let ed = pulse_energy(&single(&delayed, -80.0, 0.005, 32000));
        assert!(((ed - base) / base).abs() < 1e-10);

        let stepped = p.clone().with_term(PhaseMaskTerm::PiStep { step_rad_per_fs: p.central_frequency });
        // the step leaves slow tails, so account for what falls outside the window
        let fs = single(&stepped, -80.0, 0.005, 32000);
        let es = pulse_energy(&fs) / (1.0 - fs.clipped_fraction);
        assert!(((es - base) / base).abs() < 1e-9, "{}", (es - base) / base);
    }

    #[test]
    fn coarse_dt_is_rejected() {
        assert!(synthesize_pulses(&[&pulse()], 0.0, 0.05, 100).is_err());
    }

    #[test]
    fn schedule() {
        let base = PulseSequence::pair(pulse(), 50.0, 0.0);
        let s = phase_cycle_schedule(&base, &[0.0, PI]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].relative_phase, PI);
        assert_eq!(s[0].probe, s[1].probe);
        assert_eq!(phase_cycle_schedule(&base, &[0.0, PI / 2.0, PI, 1.5 * PI]).unwrap().len(), 4);
        let err = phase_cycle_schedule(&base, &[]).unwrap_err();
        assert!(err.to_string().contains("empty schedule"));
    }

    #[test]
    fn mask_order_does_not_matter() {
        let terms = [
            PhaseMaskTerm::Chirp { gdd_fs2: 20.0 },
            PhaseMaskTerm::DelayRamp { delay_fs: 3.0 },
            PhaseMaskTerm::Constant { phase_rad: 0.3 },
            PhaseMaskTerm::PiStep { step_rad_per_fs: 7.3 },
        ];
        let mut a = pulse();
        let mut b = pulse();
        for t in terms {
            a = a.with_term(t);
        }
        for t in terms.iter().rev() {
            b = b.with_term(*t);
        }
        for &w in &[7.0, 7.2, 7.36, 7.5] {
            assert!((a.mask_phase(w) - b.mask_phase(w)).abs() < 1e-12);
        }
    }
}
