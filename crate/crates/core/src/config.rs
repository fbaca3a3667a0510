//! Run configuration: a sectioned TOML file with unit-suffixed keys.
//!
//! Every key has a default, unknown keys are rejected with a suggestion,
//! and the resolved configuration is echoed into output metadata.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{self, PotentialSurface, SystemModel};
use crate::pulse::{PhaseMaskTerm, PulseSequence, SpectralPulse};
use crate::scan::{Numerics, ScanSpec};
use crate::units;

pub const SECTIONS: [&str; 5] = ["model", "pulse", "scan", "numerics", "output"];

/// Keys accepted in each section, in file order.
pub const MODEL_KEYS: &[&str] = &[
    "preset",
    "gap_thz",
    "excited_displacement",
    "ground_wavenumber_cm",
    "excited_wavenumber_cm",
    "ionization_potential_ev",
    "ionic_wavenumber_cm",
    "ionic_displacement",
    "epsilon_min_ev",
    "epsilon_max_ev",
    "mu_ge",
    "mu_ec",
];
pub const PULSE_KEYS: &[&str] = &[
    "wavelength_nm",
    "duration_fs",
    "bandwidth_thz",
    "amplitude",
    "probe_amplitude_ratio",
    "chirp_fs2",
    "pi_step_thz",
    "mask_target",
];
pub const SCAN_KEYS: &[&str] = &["delay_start_fs", "delay_stop_fs", "delay_step_fs", "phases"];
pub const NUMERICS_KEYS: &[&str] = &[
    "grid_points",
    "x_min",
    "x_max",
    "dt_fs",
    "continuum_bins",
    "absorbing_mask",
    "norm_tolerance",
];
pub const OUTPUT_KEYS: &[&str] = &["directory", "stem", "write_field", "plot_downsample"];

/// Keys whose values are always strings on the command line.
const STRING_KEYS: &[&str] = &["preset", "mask_target", "directory", "stem", "phases"];

pub fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "model" => Some(MODEL_KEYS),
        "pulse" => Some(PULSE_KEYS),
        "scan" => Some(SCAN_KEYS),
        "numerics" => Some(NUMERICS_KEYS),
        "output" => Some(OUTPUT_KEYS),
        _ => None,
    }
}

/// Section owning `key`; keys are unique across sections.
pub fn key_section(key: &str) -> Option<&'static str> {
    SECTIONS.into_iter().find(|s| section_keys(s).is_some_and(|k| k.contains(&key)))
}

pub const PRESETS: [(&str, &str); 2] = [
    ("benzene", "S0/S1 breathing mode, displacement tuned so the v=1 line sits on the 1172 THz gap"),
    ("benzene-fc", "same surfaces with unit dimensionless displacement"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: String,
    pub gap_thz: Option<f64>,
    pub excited_displacement: Option<f64>,
    pub ground_wavenumber_cm: Option<f64>,
    pub excited_wavenumber_cm: Option<f64>,
    pub ionization_potential_ev: Option<f64>,
    pub ionic_wavenumber_cm: Option<f64>,
    pub ionic_displacement: Option<f64>,
    pub epsilon_min_ev: Option<f64>,
    pub epsilon_max_ev: Option<f64>,
    pub mu_ge: Option<f64>,
    pub mu_ec: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "benzene".into(),
            gap_thz: None,
            excited_displacement: None,
            ground_wavenumber_cm: None,
            excited_wavenumber_cm: None,
            ionization_potential_ev: None,
            ionic_wavenumber_cm: None,
            ionic_displacement: None,
            epsilon_min_ev: None,
            epsilon_max_ev: None,
            mu_ge: None,
            mu_ec: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTarget {
    Pump,
    Probe,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    /// Central wavelength; resonant with the vertical gap when absent.
    pub wavelength_nm: Option<f64>,
    /// Transform-limited intensity FWHM.
    pub duration_fs: Option<f64>,
    /// Spectral intensity FWHM; alternative to `duration_fs`.
    pub bandwidth_thz: Option<f64>,
    /// Peak pump field (eV per unit dipole).
    pub amplitude: f64,
    pub probe_amplitude_ratio: f64,
    pub chirp_fs2: f64,
    /// Position of a π phase step; none when absent.
    pub pi_step_thz: Option<f64>,
    pub mask_target: MaskTarget,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            wavelength_nm: None,
            duration_fs: None,
            bandwidth_thz: None,
            amplitude: 0.002,
            probe_amplitude_ratio: 1.0,
            chirp_fs2: 0.0,
            pi_step_thz: None,
            mask_target: MaskTarget::Pump,
        }
    }
}

pub const DEFAULT_DURATION_FS: f64 = 15.0;

/// Phase list as a comma-separated string or an array of numbers and
/// strings; both accept pi-expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseList {
    Text(String),
    Items(Vec<PhaseItem>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseItem {
    Number(f64),
    Text(String),
}

impl PhaseList {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            PhaseList::Text(s) => parse_phase_list(s),
            PhaseList::Items(items) => items
                .iter()
                .map(|i| match i {
                    PhaseItem::Number(x) => Ok(*x),
                    PhaseItem::Text(s) => parse_phase(s),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub delay_start_fs: f64,
    pub delay_stop_fs: f64,
    pub delay_step_fs: f64,
    pub phases: PhaseList,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { delay_start_fs: 60.0, delay_stop_fs: 160.0, delay_step_fs: 0.1, phases: PhaseList::Text("0, pi".into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub grid_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dt_fs: f64,
    pub continuum_bins: usize,
    pub absorbing_mask: bool,
    pub norm_tolerance: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let n = Numerics::default();
        Self {
            grid_points: n.grid.n_points(),
            x_min: n.grid.x_min(),
            x_max: n.grid.x_max(),
            dt_fs: n.dt_fs,
            continuum_bins: 16,
            absorbing_mask: n.absorbing_mask,
            norm_tolerance: n.norm_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub stem: String,
    /// Also write the pump-probe field at the first delay.
    pub write_field: bool,
    /// Keep every n-th point in plot files; 1 keeps all.
    pub plot_downsample: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), stem: "trace".into(), write_field: false, plot_downsample: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn line_of(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = Some(rest.trim_end_matches(']').trim().to_string());
            if section.is_none() && current.as_deref() == Some(key) {
                return Some(i + 1);
            }
            continue;
        }
        let k = t.split('=').next().unwrap_or("").trim().trim_matches('"');
        if section.is_some() && current.as_deref() == section && k == key {
            return Some(i + 1);
        }
    }
    None
}

/// Closest candidates for a misspelt name. Keys are also matched on
/// their leading word, so `dleay` finds the `delay_*` keys.
pub fn suggest(unknown: &str, candidates: &[&str]) -> Vec<String> {
    let u = unknown.to_ascii_lowercase();
    let score = |c: &str| {
        let head = c.split('_').next().unwrap_or(c);
        strsim::normalized_damerau_levenshtein(&u, c).max(strsim::normalized_damerau_levenshtein(&u, head))
    };
    let best = candidates.iter().map(|c| score(c)).fold(0.0, f64::max);
    if best < 0.55 {
        return Vec::new();
    }
    candidates
        .iter()
        .filter(|c| score(c) >= best - 1e-12)
        .map(|c| c.to_string())
        .collect()
}

fn unknown_key_error(src: &str, section: Option<&str>, key: &str, candidates: &[&str]) -> Error {
    let place = match section {
        Some(s) => format!("key `{key}` in [{s}]"),
        None => format!("section [{key}]"),
    };
    let line = line_of(src, section, key).map(|l| format!("line {l}: ")).unwrap_or_default();
    let hint = suggest(key, candidates);
    let hint = if hint.is_empty() {
        format!("; expected one of {}", candidates.join(", "))
    } else {
        format!("; did you mean `{}`?", hint.join("` or `"))
    };
    Error::config(format!("{line}unknown {place}{hint}"))
}

/// Rejects unknown sections and keys before typed parsing so the
/// message can carry a line number and a suggestion.
fn check_keys(src: &str, table: &toml::Table) -> Result<()> {
    for (section, value) in table {
        let Some(keys) = section_keys(section) else {
            return Err(unknown_key_error(src, None, section, &SECTIONS));
        };
        let toml::Value::Table(inner) = value else {
            return Err(Error::config(format!(
                "line {}: `{section}` must be a [section]",
                line_of(src, None, section).or_else(|| src.lines().position(|l| l.trim_start().starts_with(section.as_str())).map(|i| i + 1)).unwrap_or(0)
            )));
        };
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(unknown_key_error(src, Some(section), key, keys));
            }
        }
    }
    Ok(())
}

fn toml_error(e: toml::de::Error, src: &str) -> Error {
    let pos = e.span().map(|s| src[..s.start.min(src.len())].lines().count().max(1));
    let msg = e.message().trim().to_string();
    match pos {
        Some(l) => Error::config(format!("line {l}: {msg}")),
        None => Error::config(msg),
    }
}

/// `start:stop:step` in fs, inclusive of `stop` when it lies on the grid.
pub fn parse_range(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| Error::config(format!("bad number `{p}` in range `{s}`")));
    match parts.as_slice() {
        [a, b, c] => Ok((num(a)?, num(b)?, num(c)?)),
        [a] => {
            let x = num(a)?;
            Ok((x, x, 1.0))
        }
        _ => Err(Error::config(format!("range `{s}` must look like start:stop:step"))),
    }
}

pub fn delay_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::config("delay step must be positive and the range finite"));
    }
    if stop < start {
        return Err(Error::config(format!("delay range {start}..{stop} is empty")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Phase literal: a number or a multiple/fraction of pi, e.g. `3pi/2`,
/// `-pi/4`, `0.5*pi`, `π`.
pub fn parse_phase(s: &str) -> Result<f64> {
    let bad = || Error::config(format!("cannot parse phase `{s}`"));
    let t: String = s.trim().to_ascii_lowercase().replace('π', "pi").chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err(bad());
    }
    let Some(at) = t.find("pi") else {
        return t.parse::<f64>().map_err(|_| bad());
    };
    let (head, tail) = (&t[..at], &t[at + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let coef = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let factor = if tail.is_empty() {
        1.0
    } else if let Some(d) = tail.strip_prefix('/') {
        1.0 / d.parse::<f64>().map_err(|_| bad())?
    } else if let Some(m) = tail.strip_prefix('*') {
        m.parse::<f64>().map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    let v = coef * PI * factor;
    v.is_finite().then_some(v).ok_or_else(bad)
}

pub fn parse_phase_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_phase).collect()
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let table: toml::Table = src.parse().map_err(|e| toml_error(e, src))?;
        check_keys(src, &table)?;
        if !table.contains_key("model") {
            return Err(Error::config("missing [model] section"));
        }
        let cfg: RunConfig = toml::from_str(src).map_err(|e| toml_error(e, src))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        if !PRESETS.iter().any(|(n, _)| *n == name) {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            let hint = suggest(name, &names);
            let hint = if hint.is_empty() { String::new() } else { format!("; did you mean `{}`?", hint.join("` or `")) };
            return Err(Error::config(format!("unknown preset `{name}`{hint}")));
        }
        let mut c = RunConfig::default();
        c.model.preset = name.to_string();
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Resolved configuration as JSON, for metadata.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Replaces one key, given as `key` or `section.key`, by a value
    /// written as a TOML literal (bare words are taken as strings).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, key) = match key.split_once('.') {
            Some((s, k)) => (s.to_string(), k.to_string()),
            None => (
                key_section(key)
                    .ok_or_else(|| {
                        let all: Vec<&str> = SECTIONS.iter().flat_map(|s| section_keys(s).unwrap().iter().copied()).collect();
                        unknown_key_error("", Some("any"), key, &all)
                    })?
                    .to_string(),
                key.to_string(),
            ),
        };
        let keys = section_keys(&section).ok_or_else(|| unknown_key_error("", None, &section, &SECTIONS))?;
        if !keys.contains(&key.as_str()) {
            return Err(unknown_key_error("", Some(&section), &key, keys));
        }
        let parsed: toml::Value = if STRING_KEYS.contains(&key.as_str()) {
            toml::Value::String(value.trim_matches('"').to_string())
        } else {
            format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()))
        };
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::config(e.to_string()))?;
        root.entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("sections are tables")
            .insert(key.clone(), parsed);
        let next: RunConfig = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("{section}.{key}: {}", e.message().trim())))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scan_spec()?;
        if self.pulse.duration_fs.is_some() && self.pulse.bandwidth_thz.is_some() {
            return Err(Error::config("pulse: set either duration_fs or bandwidth_thz, not both"));
        }
        if self.output.plot_downsample == 0 {
            return Err(Error::config("output: plot_downsample must be >= 1"));
        }
        Ok(())
    }

    pub fn system_model(&self) -> Result<SystemModel> {
        let m = &self.model;
        let base_displacement = match m.preset.as_str() {
            "benzene" => model::resonant_displacement(model::BENZENE_GROUND_CM, model::BENZENE_EXCITED_CM, 1),
            "benzene-fc" => 1.0,
            other => {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                let hint = suggest(other, &names);
                let hint = if hint.is_empty() { String::new() } else { format!("; did you mean `{}`?", hint.join("` or `")) };
                return Err(Error::config(format!("model: unknown preset `{other}`{hint}")));
            }
        };
        let gap = units::thz_to_ev(m.gap_thz.unwrap_or(model::BENZENE_GAP_THZ));
        let disp = m.excited_displacement.unwrap_or(base_displacement);
        let wg = m.ground_wavenumber_cm.unwrap_or(model::BENZENE_GROUND_CM);
        let we = m.excited_wavenumber_cm.unwrap_or(model::BENZENE_EXCITED_CM);
        if !(wg > 0.0 && we > 0.0) {
            return Err(Error::config("model: wavenumbers must be positive"));
        }
        let mut sm = model::benzene_with_displacement(gap, disp);
        sm.ground = PotentialSurface::harmonic(0.0, wg, 0.0);
        let k_e = units::harmonic_curvature_ev(we);
        sm.excited = PotentialSurface::harmonic(disp, we, gap - 0.5 * k_e * disp * disp);
        let c = &mut sm.continuum;
        c.ionic_vib_frequency_cm = m.ionic_wavenumber_cm.unwrap_or(we);
        c.ionic_minimum_position = m.ionic_displacement.unwrap_or(disp);
        if let Some(v) = m.ionization_potential_ev {
            c.ionization_potential_ev = v;
        }
        if let Some(v) = m.epsilon_min_ev {
            c.epsilon_min_ev = v;
        }
        if let Some(v) = m.epsilon_max_ev {
            c.epsilon_max_ev = v;
        }
        c.n_bins = self.numerics.continuum_bins;
        if let Some(v) = m.mu_ge {
            sm.mu_ge = v;
        }
        if let Some(v) = m.mu_ec {
            sm.mu_ec = v;
        }
        sm.validate()?;
        Ok(sm)
    }

    pub fn pulses(&self) -> Result<PulseSequence> {
        let p = &self.pulse;
        let model = self.system_model()?;
        let omega = match p.wavelength_nm {
            Some(nm) if nm > 0.0 => units::ev_to_angular(units::wavelength_nm_to_ev(nm)),
            Some(nm) => return Err(Error::config(format!("pulse: wavelength_nm must be positive, got {nm}"))),
            None => model.carrier_angular(),
        };
        let duration = match (p.duration_fs, p.bandwidth_thz) {
            (Some(_), Some(_)) => return Err(Error::config("pulse: set either duration_fs or bandwidth_thz, not both")),
            (_, Some(bw)) if bw > 0.0 => 4.0 * std::f64::consts::LN_2 / units::thz_to_angular(bw),
            (Some(d), None) if d > 0.0 => d,
            (None, None) => DEFAULT_DURATION_FS,
            _ => return Err(Error::config("pulse: duration and bandwidth must be positive")),
        };
        if !(p.probe_amplitude_ratio >= 0.0) {
            return Err(Error::config("pulse: probe_amplitude_ratio must be non-negative"));
        }
        let base = SpectralPulse::transform_limited(omega, duration, p.amplitude);
        let mut shaped = base.clone();
        if p.chirp_fs2 != 0.0 {
            shaped = shaped.with_term(PhaseMaskTerm::Chirp { gdd_fs2: p.chirp_fs2 });
        }
        if let Some(f) = p.pi_step_thz {
            shaped = shaped.with_term(PhaseMaskTerm::PiStep { step_rad_per_fs: units::thz_to_angular(f) });
        }
        let (pump, mut probe) = match p.mask_target {
            MaskTarget::Pump => (shaped, base),
            MaskTarget::Probe => (base, shaped),
            MaskTarget::Both => (shaped.clone(), shaped),
        };
        probe.field_amplitude *= p.probe_amplitude_ratio;
        pump.validate()?;
        probe.validate()?;
        Ok(PulseSequence { pump, probe, delay_fs: 0.0, relative_phase: 0.0 })
    }

    pub fn delays(&self) -> Result<Vec<f64>> {
        delay_grid(self.scan.delay_start_fs, self.scan.delay_stop_fs, self.scan.delay_step_fs)
    }

    pub fn phases(&self) -> Result<Vec<f64>> {
        let p = self.scan.phases.resolve()?;
        if p.is_empty() {
            return Err(Error::config("scan: phase list is empty"));
        }
        Ok(p)
    }

    pub fn numerics(&self) -> Result<Numerics> {
        let n = &self.numerics;
        Ok(Numerics {
            grid: SpatialGrid::new(n.grid_points, n.x_min, n.x_max)?,
            dt_fs: n.dt_fs,
            absorbing_mask: n.absorbing_mask,
            norm_tolerance: n.norm_tolerance,
        })
    }

    pub fn scan_spec(&self) -> Result<ScanSpec> {
        let mut spec = ScanSpec::new(self.delays()?, self.system_model()?, self.pulses()?);
        spec.phases_rad = self.phases()?;
        spec.numerics = self.numerics()?;
        spec.validate()?;
        Ok(spec)
    }
}
