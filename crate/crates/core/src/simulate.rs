//! Forward models producing a spectrum for an ensemble in a static field.
//!
//! Each mode implements [`ForwardModel`] and is looked up by name in
//! [`forward_models`]: `fid` (pulsed free induction decay + FFT) and `cw`
//! (swept continuous-wave contrast).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cw_sweep, fid_signal, CwSettings, FidSettings};
use crate::error::{ensure, Result};
use crate::fit::{fit_dominant_peaks, LineShape, PeakFit};
use crate::orientation::Ensemble;
use crate::registry::{Named, Registry};
use crate::spectrum::{fft_spectrum, FftOptions, Spectrum};
use crate::spin::SpinParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub fid: FidSettings,
    pub fft: FftOptions,
    /// Frequency band kept from FFT spectra, MHz.
    pub band_mhz: (f64, f64),
    pub cw: CwSettings,
    pub omega_grid_mhz: Vec<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            fid: FidSettings::new(1.0, 1.25e-5)
                .with_probes(vec![Vector3::x(), Vector3::y()])
                .with_record_every(8),
            fft: FftOptions::default(),
            band_mhz: (3000.0, 4000.0),
            cw: CwSettings::default(),
            omega_grid_mhz: (0..=200).map(|k| 3300.0 + 2.0 * k as f64).collect(),
        }
    }
}

pub trait ForwardModel: Named + Send + Sync {
    fn spectrum(&self, ensemble: &Ensemble, params: &SpinParams, b_lab: &Vector3<f64>, s: &SimSettings) -> Result<Spectrum>;
}

/// Pulsed mode: ensemble free induction decay, then FFT restricted to the band.
pub struct FidModel;

impl Named for FidModel {
    fn name(&self) -> &'static str {
        "fid"
    }
}

impl ForwardModel for FidModel {
    fn spectrum(&self, ensemble: &Ensemble, params: &SpinParams, b_lab: &Vector3<f64>, s: &SimSettings) -> Result<Spectrum> {
        ensure(s.band_mhz.1 > s.band_mhz.0, || "band must have hi > lo".into())?;
        let nyquist = 0.5 / (s.fid.grid.dt_us * s.fid.grid.record_every as f64);
        ensure(s.band_mhz.1 < nyquist, || {
            format!("band edge {} MHz is above the sampling Nyquist frequency {nyquist} MHz", s.band_mhz.1)
        })?;
        let traj = fid_signal(ensemble, params, b_lab, &s.fid)?;
        fft_spectrum(&traj, &s.fft)?.band(s.band_mhz.0, s.band_mhz.1)
    }
}

/// Swept mode: ODMR contrast at each drive frequency.
pub struct CwModel;

impl Named for CwModel {
    fn name(&self) -> &'static str {
        "cw"
    }
}

impl ForwardModel for CwModel {
    fn spectrum(&self, ensemble: &Ensemble, params: &SpinParams, b_lab: &Vector3<f64>, s: &SimSettings) -> Result<Spectrum> {
        cw_sweep(ensemble, params, b_lab, &s.omega_grid_mhz, &s.cw)
    }
}

pub fn forward_models() -> Registry<dyn ForwardModel> {
    let mut r: Registry<dyn ForwardModel> = Registry::new("simulation mode");
    r.register(Box::new(FidModel)).register(Box::new(CwModel));
    r
}

/// How spectral features are read off a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    /// Half width of the window fitted around each dominant maximum, MHz.
    pub half_window_mhz: f64,
    /// Append peak amplitudes relative to the larger one.
    pub include_amplitudes: bool,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            half_window_mhz: 6.0,
            include_amplitudes: false,
        }
    }
}

impl FeatureSettings {
    pub fn dimension(&self) -> usize {
        if self.include_amplitudes {
            4
        } else {
            2
        }
    }
}

/// Two dominant fitted peaks and the feature vector built from them
/// (centers descending, optionally followed by relative amplitudes in the same order).
pub fn spectral_features(s: &Spectrum, shape: &dyn LineShape, fs: &FeatureSettings) -> Result<(Vec<PeakFit>, Vec<f64>)> {
    let mut peaks = fit_dominant_peaks(s, 2, shape, fs.half_window_mhz)?;
    peaks.reverse();
    let mut features: Vec<f64> = peaks.iter().map(|p| p.center_mhz).collect();
    if fs.include_amplitudes {
        let top = peaks.iter().map(|p| p.amplitude).fold(f64::MIN, f64::max);
        features.extend(peaks.iter().map(|p| p.amplitude / top));
    }
    Ok((peaks, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_both_modes() {
        let r = forward_models();
        assert_eq!(r.names(), vec!["fid", "cw"]);
        assert!(r.get("rwa").is_err());
    }
}
