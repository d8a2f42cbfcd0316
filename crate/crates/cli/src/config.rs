//! Run configuration: TOML or JSON, every section optional, unknown keys rejected.
//!
//! ```toml
//! [spin]
//! d_mhz = 3480.0
//! e_mhz = 60.0
//!
//! [field]
//! bz = 3.2
//!
//! [simulation]
//! mode = "fid"
//! ```
//!
//! Parse errors and validation errors both name the offending key path.

use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use odmr_core::dynamics::{CwSettings, FidSettings};
use odmr_core::inversion::{GridSpec, InversionOptions};
use odmr_core::metrics::ThermometryParams;
use odmr_core::orientation::EnsembleSpec;
use odmr_core::simulate::{FeatureSettings, SimSettings};
use odmr_core::spectrum::{FftOptions, Window};
use odmr_core::spin::SpinParams;
use serde::{Deserialize, Serialize};

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "ODMR_CONFIG";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted key path, empty for file-level problems.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: if path == "." { String::new() } else { path.to_string() },
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldSection {
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.bx, self.by, self.bz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub b_mw_mt: f64,
    pub axis: [f64; 3],
    pub omega_start_mhz: f64,
    pub omega_stop_mhz: f64,
    pub omega_step_mhz: f64,
    /// Explicit drive frequencies; replaces the start/stop/step grid when present.
    pub omega_list_mhz: Option<Vec<f64>>,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            b_mw_mt: 0.1,
            axis: [0.0, 1.0, 0.0],
            omega_start_mhz: 3300.0,
            omega_stop_mhz: 3700.0,
            omega_step_mhz: 2.0,
            omega_list_mhz: None,
        }
    }
}

impl DriveSection {
    pub fn omega_grid(&self) -> Vec<f64> {
        if let Some(list) = &self.omega_list_mhz {
            return list.clone();
        }
        let n = ((self.omega_stop_mhz - self.omega_start_mhz) / self.omega_step_mhz + 1e-9).floor() as usize;
        (0..=n).map(|k| self.omega_start_mhz + k as f64 * self.omega_step_mhz).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Forward model name: `fid` or `cw`.
    pub mode: String,
    pub t_max_us: f64,
    /// Integration step; defaults to 1.25e-5 µs for `fid` and 1e-5 µs for `cw`.
    pub dt_us: Option<f64>,
    pub record_every: usize,
    pub window: Window,
    pub zero_pad: usize,
    pub probe_axes: Vec<[f64; 3]>,
    pub band_min_mhz: f64,
    pub band_max_mhz: f64,
    pub settle_time_us: f64,
    pub avg_window_us: f64,
    pub beta_pl: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let sim = SimSettings::default();
        let cw = CwSettings::default();
        Self {
            mode: "fid".to_string(),
            t_max_us: sim.fid.grid.t_max_us,
            dt_us: None,
            record_every: sim.fid.grid.record_every,
            window: sim.fft.window,
            zero_pad: sim.fft.zero_pad_factor,
            probe_axes: sim.fid.probe_axes_lab.iter().map(|a| [a.x, a.y, a.z]).collect(),
            band_min_mhz: sim.band_mhz.0,
            band_max_mhz: sim.band_mhz.1,
            settle_time_us: cw.settle_time_us,
            avg_window_us: cw.avg_window_us,
            beta_pl: cw.beta_pl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Line shape name: `lorentzian` or `gaussian`.
    pub line_shape: String,
    pub n_peaks: usize,
    pub half_window_mhz: f64,
    pub include_amplitudes: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let fs = FeatureSettings::default();
        Self {
            line_shape: "lorentzian".to_string(),
            n_peaks: 2,
            half_window_mhz: fs.half_window_mhz,
            include_amplitudes: fs.include_amplitudes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsSection {
    pub dir: String,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            dir: "odmr-out".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spin: SpinParams,
    pub ensemble: EnsembleSpec,
    pub field: FieldSection,
    pub drive: DriveSection,
    pub simulation: SimulationSection,
    pub fit: FitSection,
    pub calibration: GridSpec,
    pub inversion: InversionOptions,
    pub thermometry: ThermometryParams,
    /// Where files go does not change what a run computes, so manifests and config hashes leave it out.
    #[serde(skip_serializing)]
    pub outputs: OutputsSection,
}

fn check(ok: bool, path: &str, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::at(path, msg()))
    }
}

fn positive(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v > 0.0, path, || format!("must be a finite number > 0, got {v}"))
}

fn axis(v: &[f64; 3], path: &str) -> Result<(), ConfigError> {
    check(
        v.iter().all(|c| c.is_finite()) && v.iter().any(|&c| c != 0.0),
        path,
        || format!("must be a finite non-zero vector, got {v:?}"),
    )
}

impl RunConfig {
    /// Reads `path`, choosing JSON for a `.json` extension and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at("", format!("cannot read config {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    /// Parses and validates. Blank input yields the defaults.
    pub fn parse(text: &str, json: bool) -> Result<Self, ConfigError> {
        let cfg: Self = if text.trim().is_empty() {
            Self::default()
        } else if json {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::at(&e.path().to_string(), e.inner().to_string()))?
        } else {
            let de = toml::Deserializer::new(text);
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::at(&e.path().to_string(), e.inner().message().to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.spin;
        check(s.d_mhz.is_finite(), "spin.d_mhz", || "must be finite".into())?;
        check(s.e_mhz.is_finite() && s.e_mhz >= 0.0, "spin.e_mhz", || {
            format!("must be >= 0, got {}", s.e_mhz)
        })?;
        check(s.e_mhz <= s.d_mhz.abs() / 3.0, "spin.e_mhz", || {
            format!("must not exceed |d_mhz|/3 = {}", s.d_mhz.abs() / 3.0)
        })?;
        positive(s.g_factor, "spin.g_factor")?;
        positive(s.t1_us, "spin.t1_us")?;

        check(self.ensemble.n_random + self.ensemble.n_aligned >= 1, "ensemble.n_random", || {
            "n_random + n_aligned must be >= 1".into()
        })?;

        let f = &self.field;
        for (v, p) in [(f.bx, "field.bx"), (f.by, "field.by"), (f.bz, "field.bz")] {
            check(v.is_finite(), p, || format!("must be finite, got {v}"))?;
        }

        let d = &self.drive;
        check(d.b_mw_mt.is_finite() && d.b_mw_mt >= 0.0, "drive.b_mw_mt", || {
            format!("must be >= 0, got {}", d.b_mw_mt)
        })?;
        axis(&d.axis, "drive.axis")?;
        match &d.omega_list_mhz {
            Some(list) => {
                check(!list.is_empty(), "drive.omega_list_mhz", || "must not be empty".into())?;
                check(
                    list.iter().all(|w| w.is_finite() && *w > 0.0) && list.windows(2).all(|w| w[1] > w[0]),
                    "drive.omega_list_mhz",
                    || "must be positive and strictly increasing".into(),
                )?;
            }
            None => {
                positive(d.omega_start_mhz, "drive.omega_start_mhz")?;
                positive(d.omega_step_mhz, "drive.omega_step_mhz")?;
                check(d.omega_stop_mhz >= d.omega_start_mhz, "drive.omega_stop_mhz", || {
                    "must be >= omega_start_mhz".into()
                })?;
            }
        }

        let m = &self.simulation;
        check(["fid", "cw"].contains(&m.mode.as_str()), "simulation.mode", || {
            format!("must be `fid` or `cw`, got `{}`", m.mode)
        })?;
        positive(m.t_max_us, "simulation.t_max_us")?;
        if let Some(dt) = m.dt_us {
            positive(dt, "simulation.dt_us")?;
            check(dt < m.t_max_us, "simulation.dt_us", || "must be smaller than t_max_us".into())?;
        }
        check(m.record_every >= 1, "simulation.record_every", || "must be >= 1".into())?;
        check(m.zero_pad >= 1, "simulation.zero_pad", || "must be >= 1".into())?;
        check(!m.probe_axes.is_empty(), "simulation.probe_axes", || "must not be empty".into())?;
        for (i, a) in m.probe_axes.iter().enumerate() {
            axis(a, &format!("simulation.probe_axes[{i}]"))?;
        }
        check(m.band_min_mhz.is_finite() && m.band_min_mhz >= 0.0, "simulation.band_min_mhz", || {
            "must be >= 0".into()
        })?;
        check(m.band_max_mhz > m.band_min_mhz, "simulation.band_max_mhz", || {
            "must be greater than band_min_mhz".into()
        })?;
        positive(m.settle_time_us, "simulation.settle_time_us")?;
        positive(m.avg_window_us, "simulation.avg_window_us")?;
        check((0.0..=1.0).contains(&m.beta_pl), "simulation.beta_pl", || {
            format!("must be in [0, 1], got {}", m.beta_pl)
        })?;
        if m.mode == "cw" {
            check(m.settle_time_us >= 3.0 * s.t1_us, "simulation.settle_time_us", || {
                format!("must be >= 3 * t1_us = {}", 3.0 * s.t1_us)
            })?;
        } else {
            let nyquist = 0.5 / (self.dt_us() * m.record_every as f64);
            check(m.band_max_mhz < nyquist, "simulation.record_every", || {
                format!("sampling Nyquist frequency {nyquist} MHz must exceed band_max_mhz")
            })?;
        }

        let fit = &self.fit;
        check(["lorentzian", "gaussian"].contains(&fit.line_shape.as_str()), "fit.line_shape", || {
            format!("must be `lorentzian` or `gaussian`, got `{}`", fit.line_shape)
        })?;
        check((1..=4).contains(&fit.n_peaks), "fit.n_peaks", || format!("must be in 1..=4, got {}", fit.n_peaks))?;
        positive(fit.half_window_mhz, "fit.half_window_mhz")?;

        self.calibration
            .validate()
            .map_err(|e| ConfigError::at("calibration", strip(e.to_string())))?;

        let inv = &self.inversion;
        positive(inv.center_weight, "inversion.center_weight")?;
        positive(inv.amplitude_weight, "inversion.amplitude_weight")?;
        check(inv.residual_threshold >= 0.0, "inversion.residual_threshold", || "must be >= 0".into())?;
        check(inv.zero_field_mt >= 0.0, "inversion.zero_field_mt", || "must be >= 0".into())?;

        let th = &self.thermometry;
        check(th.theta_a_ghz.is_finite(), "thermometry.theta_a_ghz", || "must be finite".into())?;
        check(th.theta_c_ghz.is_finite(), "thermometry.theta_c_ghz", || "must be finite".into())?;
        positive(th.d300_mhz, "thermometry.d300_mhz")?;

        check(!self.outputs.dir.is_empty(), "outputs.dir", || "must not be empty".into())
    }

    pub fn dt_us(&self) -> f64 {
        self.simulation
            .dt_us
            .unwrap_or(if self.simulation.mode == "cw" { 1e-5 } else { 1.25e-5 })
    }

    /// Forward-model settings assembled from the `simulation` and `drive` sections.
    pub fn sim_settings(&self) -> SimSettings {
        let m = &self.simulation;
        let probes = m.probe_axes.iter().map(|a| Vector3::new(a[0], a[1], a[2])).collect();
        SimSettings {
            fid: FidSettings::new(m.t_max_us, self.dt_us())
                .with_probes(probes)
                .with_record_every(m.record_every),
            fft: FftOptions {
                window: m.window,
                zero_pad_factor: m.zero_pad,
                ..FftOptions::default()
            },
            band_mhz: (m.band_min_mhz, m.band_max_mhz),
            cw: CwSettings {
                b_mw_mt: self.drive.b_mw_mt,
                drive_axis_lab: Vector3::new(self.drive.axis[0], self.drive.axis[1], self.drive.axis[2]),
                settle_time_us: m.settle_time_us,
                avg_window_us: m.avg_window_us,
                dt_us: self.dt_us(),
                beta_pl: m.beta_pl,
            },
            omega_grid_mhz: self.drive.omega_grid(),
        }
    }

    pub fn feature_settings(&self) -> FeatureSettings {
        FeatureSettings {
            half_window_mhz: self.fit.half_window_mhz,
            include_amplitudes: self.fit.include_amplitudes,
        }
    }
}

fn strip(msg: String) -> String {
    msg.strip_prefix("invalid input: ").map(str::to_string).unwrap_or(msg)
}
