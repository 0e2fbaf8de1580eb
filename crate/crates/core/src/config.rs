//! Simulation configuration: schema, presets, dotted overrides and sweeps.
//!
//! Configs are TOML (or JSON when the file ends in `.json`). Every section is
//! optional and falls back to the reference-scale defaults; unknown keys are errors.

use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayLayout, Arrays, GainModel, WaveformConfig};
use crate::geometry::{Pose, SPEED_OF_LIGHT};
use crate::metrics::GospaConfig;
use crate::profile::{BoxSettings, DesignSettings, ProfileStrategy};
use crate::slam::{Dynamics, FilterConfig};
use crate::{Error, Result};

/// Full-size scene, array and waveform values of the reference setup.
pub const PAPER_PRESET: &str = include_str!("../presets/paper.toml");
/// Scaled-down configuration that runs in seconds.
pub const DESK_PRESET: &str = include_str!("../presets/desk.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub runs: usize,
    /// Number of update steps K.
    pub steps: usize,
    pub strategies: Vec<ProfileStrategy>,
    pub doppler_enabled: bool,
    pub environment: EnvironmentConfig,
    pub ris: RisConfig,
    pub ue: UeConfig,
    pub landmarks: LandmarkConfig,
    pub dynamics: Dynamics,
    pub sensing: SensingConfig,
    pub waveform: WaveformSettings,
    pub profile: ProfileConfig,
    pub filter: FilterSettings,
    pub metrics: GospaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub road_min: [f64; 3],
    pub road_max: [f64; 3],
    /// x coordinate of the large reflecting surface.
    pub wall_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RisConfig {
    pub position: [f64; 3],
    pub n_az: usize,
    pub n_el: usize,
    /// Element spacing in wavelengths.
    pub spacing_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UeConfig {
    pub n_az: usize,
    pub n_el: usize,
    pub spacing_wavelengths: f64,
    pub initial_position: [f64; 3],
    pub initial_heading: f64,
    pub initial_speed: f64,
    /// Position prior uncertainty as the root of the covariance trace; the
    /// prior is `diag(σ²/2, σ²/2, 0)`.
    pub prior_sigma: f64,
    pub prior_sigma_heading: f64,
    pub prior_sigma_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandmarkConfig {
    /// Horizontal scatterer positions; heights are drawn from `sp_z_range`.
    pub sp_positions: Vec<[f64; 2]>,
    pub sp_z_range: [f64; 2],
    pub rp_reflection: f64,
    pub sp_rcs: f64,
    pub ris_q0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    pub r_fov: f64,
    pub p_d: f64,
    /// Clutter intensity c(z) assumed by the filter.
    pub clutter_intensity: f64,
    /// Mean number of clutter measurements per step.
    pub clutter_mean: f64,
    pub p_s: f64,
    pub ris_miss_probability: f64,
    /// Radial velocity range of clutter draws [m/s].
    pub clutter_v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformSettings {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub cp_overhead: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub n_transmissions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub p_e: f64,
    pub dof: f64,
    pub n_samples: usize,
    /// Divide elevation offsets by t_az as printed instead of t_el.
    pub strict_paper_formula: bool,
    /// Optional fixed `[t_az, t_el]`.
    pub grid: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub measurement_inflation: f64,
    pub gate_probability: f64,
    pub p_d_floor: f64,
    pub prune_bernoulli: f64,
    pub prune_component: f64,
    pub prune_hypothesis: f64,
    pub existence_threshold: f64,
    pub divergence_trace: f64,
    pub map_after_ris: bool,
    /// Expected new reflection points per step along the wall.
    pub birth_rp_mass: f64,
    pub birth_sp_mass: f64,
    /// Expected undetected landmarks per type at the start.
    pub initial_ppp_mass: f64,
    pub initial_ppp_grid: [usize; 3],
    pub birth_components: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 500,
            steps: 20,
            strategies: vec![ProfileStrategy::Uniform, ProfileStrategy::Directional, ProfileStrategy::Random],
            doppler_enabled: true,
            environment: EnvironmentConfig::default(),
            ris: RisConfig::default(),
            ue: UeConfig::default(),
            landmarks: LandmarkConfig::default(),
            dynamics: Dynamics::default(),
            sensing: SensingConfig::default(),
            waveform: WaveformSettings::default(),
            profile: ProfileConfig::default(),
            filter: FilterSettings::default(),
            metrics: GospaConfig::default(),
        }
    }
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            min: [40.0, -30.0, 0.0],
            max: [100.0, 70.0, 40.0],
            road_min: [40.0, -20.0, 0.0],
            road_max: [60.0, 60.0, 0.0],
            wall_x: 100.0,
        }
    }
}

impl Default for RisConfig {
    fn default() -> Self {
        Self {
            position: [40.0, 0.0, 20.0],
            n_az: 50,
            n_el: 50,
            spacing_wavelengths: 0.25,
        }
    }
}

impl Default for UeConfig {
    fn default() -> Self {
        Self {
            n_az: 4,
            n_el: 4,
            spacing_wavelengths: 0.5,
            initial_position: [50.0, -17.5, 0.0],
            initial_heading: std::f64::consts::FRAC_PI_2,
            initial_speed: 5.0,
            prior_sigma: 10.0,
            prior_sigma_heading: 0.22,
            prior_sigma_speed: 6.3,
        }
    }
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        Self {
            sp_positions: vec![[40.0, -20.0], [60.0, 5.0], [40.0, 30.0], [60.0, 55.0]],
            sp_z_range: [0.0, 10.0],
            rp_reflection: 0.7,
            sp_rcs: 50.0,
            ris_q0: 0.285,
        }
    }
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            r_fov: 50.0,
            p_d: 0.95,
            clutter_intensity: 2.1e-6,
            clutter_mean: 1.0,
            p_s: 0.99,
            ris_miss_probability: 0.0,
            clutter_v_max: 20.0,
        }
    }
}

impl Default for WaveformSettings {
    fn default() -> Self {
        Self {
            carrier_hz: 30e9,
            subcarrier_spacing_hz: 120e3,
            n_subcarriers: 1600,
            cp_overhead: 0.07,
            tx_power_dbm: 20.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 8.0,
            n_transmissions: 20,
        }
    }
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            p_e: 0.99,
            dof: 2.0,
            n_samples: 1000,
            strict_paper_formula: true,
            grid: None,
        }
    }
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            measurement_inflation: 4.0,
            gate_probability: 0.99,
            p_d_floor: 1e-9,
            prune_bernoulli: 1e-5,
            prune_component: 5e-10,
            prune_hypothesis: 1e-4,
            existence_threshold: 0.4,
            divergence_trace: 1e6,
            map_after_ris: false,
            birth_rp_mass: 0.1,
            birth_sp_mass: 0.0,
            initial_ppp_mass: 5.0,
            initial_ppp_grid: [4, 4, 1],
            birth_components: 8,
        }
    }
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::config(path, message)
}

fn check(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(cfg_err(path, message))
    }
}

fn prob(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn pos(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn nonneg(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

impl Config {
    /// Checks ranges and cross-field consistency, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        check(self.runs >= 1, "runs", "must be at least 1")?;
        check(self.steps >= 1, "steps", "must be at least 1")?;
        check(!self.strategies.is_empty(), "strategies", "must not be empty")?;
        let mut seen = self.strategies.clone();
        seen.sort_by_key(|s| s.as_str());
        seen.dedup();
        check(seen.len() == self.strategies.len(), "strategies", "duplicate strategy")?;

        let e = &self.environment;
        for k in 0..3 {
            check(e.min[k] <= e.max[k], "environment.max", "must not be below environment.min")?;
            check(e.road_min[k] <= e.road_max[k], "environment.road_max", "must not be below environment.road_min")?;
        }
        check(e.wall_x.is_finite(), "environment.wall_x", "must be finite")?;

        let r = &self.ris;
        check(r.n_az >= 1 && r.n_el >= 1, "ris.n_az", "array dimensions must be positive")?;
        check(pos(r.spacing_wavelengths), "ris.spacing_wavelengths", "must be positive")?;
        check(r.position.iter().all(|v| v.is_finite()), "ris.position", "must be finite")?;

        let u = &self.ue;
        check(u.n_az >= 1 && u.n_el >= 1, "ue.n_az", "array dimensions must be positive")?;
        check(pos(u.spacing_wavelengths), "ue.spacing_wavelengths", "must be positive")?;
        check(u.initial_position.iter().all(|v| v.is_finite()), "ue.initial_position", "must be finite")?;
        check(u.initial_heading.is_finite(), "ue.initial_heading", "must be finite")?;
        check(nonneg(u.initial_speed), "ue.initial_speed", "must be non-negative")?;
        check(nonneg(u.prior_sigma), "ue.prior_sigma", "must be non-negative")?;
        check(nonneg(u.prior_sigma_heading), "ue.prior_sigma_heading", "must be non-negative")?;
        check(nonneg(u.prior_sigma_speed), "ue.prior_sigma_speed", "must be non-negative")?;
        let d = Vector3::from(u.initial_position) - Vector3::from(r.position);
        check(d.dot(&self.ris_pose().normal()) > 0.0, "ue.initial_position", "must lie in front of the RIS")?;

        let l = &self.landmarks;
        check(l.sp_z_range[0] <= l.sp_z_range[1], "landmarks.sp_z_range", "must be increasing")?;
        check(nonneg(l.rp_reflection), "landmarks.rp_reflection", "must be non-negative")?;
        check(nonneg(l.sp_rcs), "landmarks.sp_rcs", "must be non-negative")?;
        check(nonneg(l.ris_q0), "landmarks.ris_q0", "must be non-negative")?;

        let dy = &self.dynamics;
        check(pos(dy.dt), "dynamics.dt", "must be positive")?;
        check(dy.turn_rate.is_finite(), "dynamics.turn_rate", "must be finite")?;
        check(dy.sigma.iter().all(|s| nonneg(*s)), "dynamics.sigma", "must be non-negative")?;

        let s = &self.sensing;
        check(pos(s.r_fov), "sensing.r_fov", "must be positive")?;
        check(prob(s.p_d), "sensing.p_d", "must be a probability in [0, 1]")?;
        check(nonneg(s.clutter_intensity), "sensing.clutter_intensity", "must be non-negative")?;
        check(nonneg(s.clutter_mean), "sensing.clutter_mean", "must be non-negative")?;
        check(prob(s.p_s), "sensing.p_s", "must be a probability in [0, 1]")?;
        check(prob(s.ris_miss_probability), "sensing.ris_miss_probability", "must be a probability in [0, 1]")?;
        check(nonneg(s.clutter_v_max), "sensing.clutter_v_max", "must be non-negative")?;

        let w = &self.waveform;
        check(pos(w.carrier_hz), "waveform.carrier_hz", "must be positive")?;
        check(pos(w.subcarrier_spacing_hz), "waveform.subcarrier_spacing_hz", "must be positive")?;
        check(w.n_subcarriers >= 1, "waveform.n_subcarriers", "must be positive")?;
        check(nonneg(w.cp_overhead), "waveform.cp_overhead", "must be non-negative")?;
        check(w.tx_power_dbm.is_finite(), "waveform.tx_power_dbm", "must be finite")?;
        check(w.noise_psd_dbm_hz.is_finite(), "waveform.noise_psd_dbm_hz", "must be finite")?;
        check(w.noise_figure_db.is_finite(), "waveform.noise_figure_db", "must be finite")?;
        check(
            w.n_transmissions >= 2 && w.n_transmissions % 2 == 0,
            "waveform.n_transmissions",
            "must be even and positive",
        )?;

        let p = &self.profile;
        check(p.p_e > 0.0 && p.p_e < 1.0, "profile.p_e", "must lie in (0, 1)")?;
        check(pos(p.dof), "profile.dof", "must be positive")?;
        check(p.n_samples >= 1, "profile.n_samples", "must be positive")?;
        if let Some([a, b]) = p.grid {
            check(a * b == w.n_transmissions / 2, "profile.grid", "t_az·t_el must equal n_transmissions/2")?;
        }

        let f = &self.filter;
        check(pos(f.measurement_inflation), "filter.measurement_inflation", "must be positive")?;
        check(f.gate_probability > 0.0 && f.gate_probability <= 1.0, "filter.gate_probability", "must lie in (0, 1]")?;
        check(f.p_d_floor >= 0.0 && f.p_d_floor < 1.0, "filter.p_d_floor", "must lie in [0, 1)")?;
        check(nonneg(f.prune_bernoulli), "filter.prune_bernoulli", "must be non-negative")?;
        check(nonneg(f.prune_component), "filter.prune_component", "must be non-negative")?;
        check(prob(f.prune_hypothesis), "filter.prune_hypothesis", "must be a probability in [0, 1]")?;
        check(prob(f.existence_threshold), "filter.existence_threshold", "must be a probability in [0, 1]")?;
        check(pos(f.divergence_trace), "filter.divergence_trace", "must be positive")?;
        check(nonneg(f.birth_rp_mass), "filter.birth_rp_mass", "must be non-negative")?;
        check(nonneg(f.birth_sp_mass), "filter.birth_sp_mass", "must be non-negative")?;
        check(nonneg(f.initial_ppp_mass), "filter.initial_ppp_mass", "must be non-negative")?;
        check(f.initial_ppp_grid.iter().all(|g| *g >= 1), "filter.initial_ppp_grid", "must be positive")?;
        check(f.birth_components >= 1, "filter.birth_components", "must be positive")?;

        self.metrics.validate().map_err(|e| cfg_err("metrics", e.to_string()))?;
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.waveform.carrier_hz
    }

    pub fn ris_pose(&self) -> Pose {
        Pose::default_ris(Vector3::from(self.ris.position))
    }

    pub fn arrays(&self) -> Result<Arrays> {
        let lam = self.wavelength();
        Ok(Arrays {
            ue: ArrayLayout::ue_upa(self.ue.n_az, self.ue.n_el, self.ue.spacing_wavelengths * lam)?,
            ris: ArrayLayout::ris_upa(self.ris.n_az, self.ris.n_el, self.ris.spacing_wavelengths * lam)?,
        })
    }

    pub fn waveform(&self) -> Result<WaveformConfig> {
        let w = &self.waveform;
        WaveformConfig::from_link_budget(
            w.carrier_hz,
            w.subcarrier_spacing_hz,
            w.n_subcarriers,
            w.cp_overhead,
            w.tx_power_dbm,
            w.noise_psd_dbm_hz,
            w.noise_figure_db,
            w.n_transmissions,
        )
    }

    pub fn gain_model(&self) -> GainModel {
        GainModel {
            wavelength: self.wavelength(),
            carrier_hz: self.waveform.carrier_hz,
            ris_q0: self.landmarks.ris_q0,
            rp_reflection: self.landmarks.rp_reflection,
            sp_rcs: self.landmarks.sp_rcs,
        }
    }

    pub fn design_settings(&self) -> DesignSettings {
        DesignSettings {
            boxes: BoxSettings {
                p_e: self.profile.p_e,
                dof: self.profile.dof,
                n_samples: self.profile.n_samples,
            },
            strict_paper_formula: self.profile.strict_paper_formula,
            grid: self.profile.grid.map(|[a, b]| (a, b)),
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            p_d: self.sensing.p_d,
            gate_probability: self.filter.gate_probability,
            p_d_floor: self.filter.p_d_floor,
            noise_inflation: self.filter.measurement_inflation,
            clutter_intensity: self.sensing.clutter_intensity,
            survival: self.sensing.p_s,
            r_fov: self.sensing.r_fov,
            existence_threshold: self.filter.existence_threshold,
            prune_bernoulli: self.filter.prune_bernoulli,
            prune_component: self.filter.prune_component,
            prune_hypothesis: self.filter.prune_hypothesis,
            doppler: self.doppler_enabled,
            divergence_trace: self.filter.divergence_trace,
            map_after_ris: self.filter.map_after_ris,
            dynamics: self.dynamics,
        }
    }

    /// Initial UE prior covariance over `[x, y, z, heading, speed]`.
    pub fn ue_prior_cov(&self) -> DMatrix<f64> {
        let p = 0.5 * self.ue.prior_sigma * self.ue.prior_sigma;
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            p,
            p,
            0.0,
            self.ue.prior_sigma_heading.powi(2),
            self.ue.prior_sigma_speed.powi(2),
        ]))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let v: toml::Table = toml::from_str(s).map_err(|e| cfg_err("", e.message().to_string()))?;
        Self::from_value(toml::Value::Table(v), &[])
    }

    /// Resolved TOML text, suitable as a config file.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err("", e.to_string()))
    }

    /// Typed config from a parsed value with `key=value` overrides applied.
    pub fn from_value(mut value: toml::Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| cfg_err(o, "override must have the form key=value"))?;
            set_dotted(&mut value, key.trim(), parse_scalar(raw.trim()))?;
        }
        let cfg: Config = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(if path == "." { "" } else { &path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a config file (TOML, or JSON by extension) into a raw value.
pub fn load_value(path: &Path) -> Result<toml::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(&path.display().to_string(), format!("cannot read config: {e}")))?;
    parse_value(&text, path.extension().is_some_and(|e| e == "json"))
}

pub fn parse_value(text: &str, json: bool) -> Result<toml::Value> {
    if json {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| cfg_err("", e.to_string()))?;
        serde_json::from_value(v).map_err(|e| cfg_err("", e.to_string()))
    } else {
        let t: toml::Table = toml::from_str(text).map_err(|e| cfg_err("", e.message().to_string()))?;
        Ok(toml::Value::Table(t))
    }
}

/// Raw value of a named preset (`paper` or `desk`).
pub fn preset_value(name: &str) -> Result<toml::Value> {
    match name {
        "paper" => parse_value(PAPER_PRESET, false),
        "desk" => parse_value(DESK_PRESET, false),
        _ => Err(cfg_err("preset", format!("unknown preset `{name}` (expected paper or desk)"))),
    }
}

pub fn preset(name: &str) -> Result<Config> {
    Config::from_value(preset_value(name)?, &[])
}

/// TOML literal, or a bare string when the text is not a valid literal.
fn parse_scalar(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Short aliases accepted wherever a dotted key is.
fn resolve_alias(key: &str) -> &str {
    match key {
        "prior_sigma" => "ue.prior_sigma",
        "n_transmissions" => "waveform.n_transmissions",
        "tx_power_dbm" => "waveform.tx_power_dbm",
        other => other,
    }
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let key = resolve_alias(key);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(key, "empty key segment"));
    }
    let mut cur = root;
    for (i, p) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| cfg_err(&parts[..i].join("."), "is not a table"))?;
        if i + 1 == parts.len() {
            table.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = table
            .entry((*p).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

/// A parameter sweep `key=start:stop:count`, log-spaced when written `keylog=…`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<f64>,
    pub log: bool,
}

impl Sweep {
    pub fn parse(text: &str) -> Result<Self> {
        let (key, range) = text
            .split_once('=')
            .ok_or_else(|| cfg_err(text, "sweep must have the form key=start:stop:count"))?;
        let key = key.trim();
        let (key, log) = match key.strip_suffix("log") {
            Some(k) if !k.is_empty() => (k.trim_end_matches(['.', '_', ':']), true),
            _ => (key, false),
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(cfg_err(key, "sweep range must be start:stop:count"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| cfg_err(key, format!("invalid number `{s}`")));
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| cfg_err(key, format!("invalid count `{}`", parts[2])))?;
        if n == 0 || !a.is_finite() || !b.is_finite() {
            return Err(cfg_err(key, "sweep needs finite bounds and a positive count"));
        }
        if log && !(a > 0.0 && b > 0.0) {
            return Err(cfg_err(key, "log sweep bounds must be positive"));
        }
        let t = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let values = (0..n)
            .map(|i| {
                if log {
                    (a.ln() + (b.ln() - a.ln()) * t(i)).exp()
                } else {
                    a + (b - a) * t(i)
                }
            })
            .collect();
        Ok(Self {
            key: resolve_alias(key).to_string(),
            values,
            log,
        })
    }

    /// Override string setting the swept key to `value`; integers stay integers.
    pub fn override_for(&self, value: f64) -> String {
        format!("{}={}", self.key, format_number(value))
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        let p = preset("paper").unwrap();
        assert_eq!(p.ris.n_az * p.ris.n_el, 2500);
        assert_eq!(p.waveform.n_subcarriers, 1600);
        assert_eq!(p.waveform.n_transmissions, 20);
        assert_eq!(p.ris.position, [40.0, 0.0, 20.0]);
        assert_eq!(p.sensing.clutter_intensity, 2.1e-6);
        assert_eq!(p, Config::default());
        let d = preset("desk").unwrap();
        assert_eq!((d.ris.n_az, d.ris.n_el, d.waveform.n_subcarriers, d.waveform.n_transmissions), (8, 8, 64, 8));
        assert_eq!(d.runs, 25);
    }

    #[test]
    fn overrides_are_type_checked() {
        let v = preset_value("desk").unwrap();
        let c = Config::from_value(v.clone(), &["seed=7".into(), "sensing.p_d=0.5".into()]).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.sensing.p_d, 0.5);
        match Config::from_value(v.clone(), &["sensing.p_d=1.5".into()]) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sensing.p_d"),
            other => panic!("expected config error, got {other:?}"),
        }
        match Config::from_value(v.clone(), &["sensing.nope=1".into()]) {
            Err(Error::Config { path, message }) => {
                assert!(path.starts_with("sensing"), "{path}");
                assert!(message.contains("nope"), "{message}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
        match Config::from_value(v, &["runs=\"many\"".into()]) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "runs"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let c = preset("desk").unwrap();
        let back = Config::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn json_alternative() {
        let v = parse_value(r#"{"seed": 3, "sensing": {"p_d": 0.9}}"#, true).unwrap();
        let c = Config::from_value(v, &[]).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.sensing.p_d, 0.9);
    }

    #[test]
    fn sweeps() {
        let s = Sweep::parse("prior_sigma=0.01:10:20").unwrap();
        assert_eq!(s.key, "ue.prior_sigma");
        assert_eq!(s.values.len(), 20);
        assert_eq!(s.values[0], 0.01);
        assert!((s.values[19] - 10.0).abs() < 1e-12);
        let l = Sweep::parse("prior_sigmalog=0.01:10:4").unwrap();
        assert!(l.log);
        assert_eq!(l.key, "ue.prior_sigma");
        assert!((l.values[1] - 0.1).abs() < 1e-12);
        assert_eq!(Sweep::parse("n_transmissions=8:64:2").unwrap().override_for(8.0), "waveform.n_transmissions=8");
        assert!(Sweep::parse("x=1:2").is_err());
    }
}
