//! Subcommand bodies. Each returns its staged outputs; nothing touches the disk here.

use std::fmt::Write as _;

use odmr_core::fit::{fit_dominant_peaks, fit_peaks, line_shapes, PeakFit, PeakInit};
use odmr_core::inversion::{build_calibration, invert_field, CalibrationTable, Degeneracy, FieldEstimate};
use odmr_core::metrics::{sensitivity, zfs_shift, LatticeTable, SensitivityInputs, ThermometryParams, REFERENCE_TEMPERATURE_K};
use odmr_core::orientation::build_ensemble;
use odmr_core::simulate::{forward_models, spectral_features};
use odmr_core::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{self, mhz, mt, to_json};
use crate::{CliError, Command, FitArgs, InputRef, InvertArgs, RunOutput, SensitivityArgs, ThermometryArgs};

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<RunOutput, CliError> {
    match cmd {
        Command::Simulate => simulate(cfg),
        Command::Fit(a) => fit(cfg, a),
        Command::Sensitivity(a) => sensitivity_cmd(cfg, a),
        Command::Thermometry(a) => thermometry(cfg, a),
        Command::Calibrate => calibrate(cfg),
        Command::Invert(a) => invert(cfg, a),
    }
}

#[derive(Debug, Serialize)]
pub struct PeakReport {
    pub center_mhz: f64,
    pub fwhm_mhz: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub source: String,
    pub shape: String,
    pub n_peaks: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub resolution_mhz: f64,
    pub residual_norm: Option<f64>,
    pub peaks: Vec<PeakReport>,
    /// Distance between the outermost peaks when exactly two were requested.
    pub splitting_mhz: Option<f64>,
}

impl FitReport {
    fn new(source: &str, shape: &str, n_peaks: usize, resolution: f64, result: odmr_core::Result<Vec<PeakFit>>) -> Result<Self, CliError> {
        let (peaks, error) = match result {
            Ok(p) => (p, None),
            Err(e @ (Error::Unconverged { .. } | Error::NoSignificantPeak { .. })) => {
                let msg = e.to_string();
                let best = match e {
                    Error::Unconverged { best, .. } | Error::NoSignificantPeak { best, .. } => best,
                    _ => unreachable!(),
                };
                (best, Some(msg))
            }
            Err(e) => return Err(e.into()),
        };
        let splitting = (n_peaks == 2 && peaks.len() == 2).then(|| mhz(peaks[1].center_mhz - peaks[0].center_mhz));
        Ok(Self {
            source: source.to_string(),
            shape: shape.to_string(),
            n_peaks,
            converged: error.is_none(),
            error,
            resolution_mhz: mhz(resolution),
            residual_norm: peaks.first().map(|p| p.residual_norm),
            peaks: peaks
                .iter()
                .map(|p| PeakReport {
                    center_mhz: mhz(p.center_mhz),
                    fwhm_mhz: mhz(p.fwhm_mhz),
                    amplitude: p.amplitude,
                    baseline: p.baseline,
                })
                .collect(),
            splitting_mhz: splitting,
        })
    }

    fn summary(&self) -> String {
        let mut s = String::new();
        for p in &self.peaks {
            let _ = writeln!(s, "peak {:.6} MHz  fwhm {:.6} MHz", p.center_mhz, p.fwhm_mhz);
        }
        if let Some(d) = self.splitting_mhz {
            let _ = writeln!(s, "splitting {d:.6} MHz");
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "fit incomplete: {e}");
        }
        s
    }
}

fn simulate(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let models = forward_models();
    let model = models.get(&cfg.simulation.mode)?;
    let shapes = line_shapes();
    let shape = shapes.get(&cfg.fit.line_shape)?;
    let ensemble = build_ensemble(&cfg.ensemble)?;
    let spectrum = model.spectrum(&ensemble, &cfg.spin, &cfg.field.vector(), &cfg.sim_settings())?;
    let fitted = fit_dominant_peaks(&spectrum, cfg.fit.n_peaks, shape, cfg.fit.half_window_mhz);
    let report = FitReport::new(model.name(), shape.name(), cfg.fit.n_peaks, spectrum.spacing_mhz(), fitted)?;

    let mut out = RunOutput {
        complete: report.converged,
        summary: report.summary(),
        ..RunOutput::default()
    };
    out.staged.add("spectrum.csv", io::write_spectrum_csv(&spectrum));
    out.staged.add("peaks.json", to_json(&report));
    let mut ens = ensemble.to_json();
    ens.push('\n');
    out.staged.add("ensemble.json", ens.into_bytes());
    Ok(out)
}

fn fit(cfg: &RunConfig, a: &FitArgs) -> Result<RunOutput, CliError> {
    let n = a.n_peaks.unwrap_or(cfg.fit.n_peaks);
    if !(1..=4).contains(&n) {
        return Err(CliError::Usage(format!("--n-peaks must be in 1..=4, got {n}")));
    }
    let shapes = line_shapes();
    let shape = shapes.get(a.shape.as_deref().unwrap_or(&cfg.fit.line_shape))?;
    let (text, sha256) = io::read_input(&a.input)?;
    let source = a.input.display().to_string();
    let spectrum = io::read_spectrum_csv(&text, &source)?;
    let fitted = fit_peaks(&spectrum, n, shape, &PeakInit::Auto);
    let report = FitReport::new(&source, shape.name(), n, spectrum.spacing_mhz(), fitted)?;

    let mut out = RunOutput {
        complete: report.converged,
        summary: report.summary(),
        inputs: vec![InputRef { path: source, sha256 }],
        ..RunOutput::default()
    };
    out.staged.add("fit.json", to_json(&report));
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SensitivityReport {
    inputs: SensitivityInputs,
    g_factor: f64,
    sensitivity_ut_per_sqrt_hz: f64,
}

fn sensitivity_cmd(cfg: &RunConfig, a: &SensitivityArgs) -> Result<RunOutput, CliError> {
    let inputs = SensitivityInputs {
        p_f: a.p_f,
        linewidth_mhz: a.linewidth_mhz,
        contrast: a.contrast,
        count_rate_hz: a.rate_hz,
    };
    let g = a.g.unwrap_or(cfg.spin.g_factor);
    let eta = sensitivity(&inputs, g).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = SensitivityReport {
        inputs,
        g_factor: g,
        sensitivity_ut_per_sqrt_hz: eta,
    };
    let mut out = RunOutput {
        complete: true,
        summary: format!("sensitivity {eta:.4} uT/sqrt(Hz)\n"),
        ..RunOutput::default()
    };
    out.staged.add("sensitivity.json", to_json(&report));
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ThermometryPoint {
    temperature_k: f64,
    eta_a: f64,
    eta_c: f64,
    delta_d_mhz: f64,
    d_mhz: f64,
}

#[derive(Debug, Serialize)]
struct ThermometryReport {
    params: ThermometryParams,
    reference_temperature_k: f64,
    points: Vec<ThermometryPoint>,
}

fn thermometry(cfg: &RunConfig, a: &ThermometryArgs) -> Result<RunOutput, CliError> {
    let (text, sha256) = io::read_input(&a.lattice)?;
    let source = a.lattice.display().to_string();
    let table = LatticeTable::new(io::read_lattice_csv(&text, &source)?)?;
    let mut points = Vec::with_capacity(a.temperatures_k.len());
    let mut summary = String::new();
    for &t in &a.temperatures_k {
        let z = zfs_shift(&cfg.thermometry, &table, t)?;
        let _ = writeln!(summary, "T = {t} K: dD = {:.6} MHz, D = {:.6} MHz", z.delta_d_mhz, z.d_mhz);
        points.push(ThermometryPoint {
            temperature_k: t,
            eta_a: z.eta_a,
            eta_c: z.eta_c,
            delta_d_mhz: mhz(z.delta_d_mhz),
            d_mhz: mhz(z.d_mhz),
        });
    }
    let report = ThermometryReport {
        params: cfg.thermometry,
        reference_temperature_k: REFERENCE_TEMPERATURE_K,
        points,
    };
    let mut out = RunOutput {
        complete: true,
        summary,
        inputs: vec![InputRef { path: source, sha256 }],
        ..RunOutput::default()
    };
    out.staged.add("thermometry.json", to_json(&report));
    Ok(out)
}

fn calibrate(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let models = forward_models();
    let model = models.get(&cfg.simulation.mode)?;
    let shapes = line_shapes();
    let shape = shapes.get(&cfg.fit.line_shape)?;
    let ensemble = build_ensemble(&cfg.ensemble)?;
    let mut table = build_calibration(
        &ensemble,
        &cfg.spin,
        &cfg.calibration,
        model,
        &cfg.sim_settings(),
        shape,
        &cfg.feature_settings(),
    )?;
    let dim = table.feature_settings.dimension();
    for f in table.features.iter_mut().flatten() {
        for v in f.iter_mut().take(dim.min(2)) {
            *v = mhz(*v);
        }
    }
    let (nb, nt, np) = table.dims();
    let mut out = RunOutput {
        complete: true,
        summary: format!("calibration: {} of {} cells filled\n", table.filled(), nb * nt * np),
        ..RunOutput::default()
    };
    let mut json = table.to_json()?;
    json.push('\n');
    out.staged.add("calibration.json", json.into_bytes());
    Ok(out)
}

#[derive(Debug, Serialize)]
struct InversionReport {
    features: Vec<f64>,
    confident: bool,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    magnitude_mt: f64,
    theta_deg: f64,
    /// Absent when the azimuth is indeterminate.
    phi_deg: Option<f64>,
    b_lab_mt: [f64; 3],
    residual_mhz: f64,
    degeneracy: Degeneracy,
    equivalents_mt: Vec<[f64; 3]>,
}

impl InversionReport {
    fn new(features: Vec<f64>, est: &FieldEstimate, error: Option<String>) -> Self {
        let v = |b: &nalgebra::Vector3<f64>| [mt(b.x), mt(b.y), mt(b.z)];
        Self {
            features,
            confident: error.is_none(),
            converged: est.converged,
            error,
            magnitude_mt: mt(est.magnitude_mt),
            theta_deg: mt(est.theta_deg),
            phi_deg: (!est.degeneracy.azimuth).then(|| mt(est.phi_deg)),
            b_lab_mt: v(&est.b_lab),
            residual_mhz: mhz(est.residual),
            degeneracy: est.degeneracy,
            equivalents_mt: est.equivalents.iter().map(v).collect(),
        }
    }
}

fn invert(cfg: &RunConfig, a: &InvertArgs) -> Result<RunOutput, CliError> {
    let (text, sha256) = io::read_input(&a.table)?;
    let table = CalibrationTable::from_json(&text)?;
    let mut inputs = vec![InputRef {
        path: a.table.display().to_string(),
        sha256,
    }];
    let features = match (&a.features, &a.spectrum) {
        (Some(f), None) => f.clone(),
        (None, Some(path)) => {
            let (text, sha256) = io::read_input(path)?;
            let source = path.display().to_string();
            let spectrum = io::read_spectrum_csv(&text, &source)?;
            inputs.push(InputRef { path: source, sha256 });
            let shapes = line_shapes();
            let (_, f) = spectral_features(&spectrum, shapes.get(&table.line_shape)?, &table.feature_settings)?;
            f
        }
        _ => return Err(CliError::Usage("give exactly one of --features or --spectrum".into())),
    };
    let features: Vec<f64> = features
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < 2 { mhz(v) } else { v })
        .collect();
    let (report, ok) = match invert_field(&features, &table, &cfg.inversion) {
        Ok(est) => (InversionReport::new(features, &est, None), est.converged),
        Err(e @ Error::NoConfidentEstimate { .. }) => {
            let msg = e.to_string();
            let Error::NoConfidentEstimate { best, .. } = e else { unreachable!() };
            (InversionReport::new(features, &best, Some(msg)), false)
        }
        Err(e) => return Err(e.into()),
    };
    let mut summary = format!(
        "|B| = {:.4} mT, theta = {:.4} deg, residual {:.6} MHz\n",
        report.magnitude_mt, report.theta_deg, report.residual_mhz
    );
    if let Some(e) = &report.error {
        let _ = writeln!(summary, "{e}");
    }
    let mut out = RunOutput {
        complete: ok,
        summary,
        inputs,
        ..RunOutput::default()
    };
    out.staged.add("inversion.json", to_json(&report));
    Ok(out)
}
