//! Sampled spectra and the FFT of recorded time signals.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::dynamics::TrajectoryRecord;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    FftAmplitude,
    FftPower,
    OdmrContrast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub source: String,
    /// Grid spacing in MHz (for FFT spectra, `1 / (N_padded · dt)`).
    pub resolution_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_mhz: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(freqs_mhz: Vec<f64>, values: Vec<f64>, kind: SpectrumKind, source: &str) -> Result<Self> {
        ensure(freqs_mhz.len() == values.len(), || {
            format!("{} frequencies but {} values", freqs_mhz.len(), values.len())
        })?;
        ensure(!freqs_mhz.is_empty(), || "spectrum is empty".into())?;
        ensure(freqs_mhz.windows(2).all(|w| w[1] > w[0]), || {
            "frequencies must be strictly increasing".into()
        })?;
        ensure(freqs_mhz.iter().chain(&values).all(|v| v.is_finite()), || {
            "spectrum contains non-finite values".into()
        })?;
        let resolution_mhz = if freqs_mhz.len() > 1 {
            (freqs_mhz[freqs_mhz.len() - 1] - freqs_mhz[0]) / (freqs_mhz.len() - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            freqs_mhz,
            values,
            kind,
            meta: SpectrumMeta {
                source: source.to_string(),
                resolution_mhz,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.freqs_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_mhz.is_empty()
    }

    /// Points with `lo <= f <= hi`.
    pub fn band(&self, lo_mhz: f64, hi_mhz: f64) -> Result<Spectrum> {
        let (freqs, values): (Vec<f64>, Vec<f64>) = self
            .freqs_mhz
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= lo_mhz && **f <= hi_mhz)
            .map(|(f, v)| (*f, *v))
            .unzip();
        if freqs.is_empty() {
            return Err(Error::InvalidInput(format!("no spectrum points in [{lo_mhz}, {hi_mhz}] MHz")));
        }
        Ok(Spectrum {
            freqs_mhz: freqs,
            values,
            kind: self.kind,
            meta: self.meta.clone(),
        })
    }

    /// Mean grid spacing.
    pub fn spacing_mhz(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        (self.freqs_mhz[self.len() - 1] - self.freqs_mhz[0]) / (self.len() - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    None,
    #[default]
    Hann,
}

/// Amplitude `|X_k|` (one-sided, scaled so a unit cosine reads 1) or its square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Amplitude,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftOptions {
    pub window: Window,
    pub zero_pad_factor: usize,
    pub scale: Scale,
}

impl Default for FftOptions {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            zero_pad_factor: 4,
            scale: Scale::Amplitude,
        }
    }
}

/// One-sided spectrum of the mean-subtracted signal.
///
/// The window is applied before zero padding. Bin `k` sits at `k / (N_padded · dt)`
/// and runs up to Nyquist `1 / (2 dt)`.
pub fn fft_spectrum(traj: &TrajectoryRecord, opts: &FftOptions) -> Result<Spectrum> {
    let n = traj.signals.len();
    ensure(n >= 16, || format!("need at least 16 samples, got {n}"))?;
    ensure(traj.times.len() == n, || "times and signals differ in length".into())?;
    ensure(opts.zero_pad_factor >= 1, || "zero_pad_factor must be >= 1".into())?;
    let dt = traj
        .uniform_step()
        .ok_or_else(|| Error::InvalidInput("time grid is not uniform".into()))?;

    let mean = traj.signals.iter().sum::<f64>() / n as f64;
    let weights: Vec<f64> = match opts.window {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (n - 1) as f64).cos())
            .collect(),
    };
    let gain: f64 = weights.iter().sum();
    let padded = n * opts.zero_pad_factor;
    let mut buf: Vec<Complex64> = traj
        .signals
        .iter()
        .zip(&weights)
        .map(|(s, w)| Complex64::from((s - mean) * w))
        .chain(std::iter::repeat(Complex64::from(0.0)))
        .take(padded)
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(padded).process(&mut buf);

    let bins = padded / 2 + 1;
    let df = 1.0 / (padded as f64 * dt);
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
    let values: Vec<f64> = (0..bins)
        .map(|k| {
            let edge = k == 0 || (padded % 2 == 0 && k == padded / 2);
            let a = buf[k].norm() / gain * if edge { 1.0 } else { 2.0 };
            match opts.scale {
                Scale::Amplitude => a,
                Scale::Power => a * a,
            }
        })
        .collect();
    let kind = match opts.scale {
        Scale::Amplitude => SpectrumKind::FftAmplitude,
        Scale::Power => SpectrumKind::FftPower,
    };
    let mut s = Spectrum::new(freqs, values, kind, &format!("fft:{}", traj.observable))?;
    s.meta.resolution_mhz = df;
    Ok(s)
}

/// Energy `Σ x²` of an unwindowed, unpadded one-sided amplitude spectrum of length-`n` data.
pub fn amplitude_spectrum_energy(s: &Spectrum, n_samples: usize) -> f64 {
    let last = s.values.len() - 1;
    let nyquist_bin = n_samples % 2 == 0;
    s.values
        .iter()
        .enumerate()
        .map(|(k, a)| {
            if k == 0 || (nyquist_bin && k == last) {
                a * a
            } else {
                a * a / 2.0
            }
        })
        .sum::<f64>()
        * n_samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn record(signal: Vec<f64>, dt: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            times: (0..signal.len()).map(|k| k as f64 * dt).collect(),
            signals: signal,
            observable: "test".into(),
        }
    }

    fn argmax(s: &Spectrum) -> f64 {
        let k = (0..s.len()).max_by(|&a, &b| s.values[a].total_cmp(&s.values[b])).unwrap();
        s.freqs_mhz[k]
    }

    #[test]
    fn cosine_peaks_at_its_frequency() {
        let dt = 1e-5;
        let sig: Vec<f64> = (0..100_000).map(|k| (TAU * 3480.0 * k as f64 * dt).cos()).collect();
        let opts = FftOptions {
            window: Window::None,
            zero_pad_factor: 1,
            scale: Scale::Amplitude,
        };
        let s = fft_spectrum(&record(sig, dt), &opts).unwrap();
        assert!((argmax(&s) - 3480.0).abs() <= s.meta.resolution_mhz);
        assert!((s.meta.resolution_mhz - 1.0).abs() < 1e-9);
        let peak = s.values.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-6, "peak {peak}");
        assert!(*s.freqs_mhz.last().unwrap() <= 1.0 / (2.0 * dt) + 1e-9);
    }

    #[test]
    fn constant_signal_has_empty_spectrum() {
        let s = fft_spectrum(&record(vec![0.7; 64], 1.0), &FftOptions::default()).unwrap();
        assert!(s.values.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn rejects_short_or_irregular_records() {
        assert!(fft_spectrum(&record(vec![1.0; 8], 1.0), &FftOptions::default()).is_err());
        let mut r = record((0..32).map(|k| k as f64).collect(), 1.0);
        r.times[5] += 0.3;
        assert!(matches!(fft_spectrum(&r, &FftOptions::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn padding_refines_grid() {
        let dt = 1e-4;
        let sig: Vec<f64> = (0..1000).map(|k| (TAU * 1234.5 * k as f64 * dt).sin()).collect();
        let r = record(sig, dt);
        let a = fft_spectrum(&r, &FftOptions { zero_pad_factor: 1, ..Default::default() }).unwrap();
        let b = fft_spectrum(&r, &FftOptions { zero_pad_factor: 8, ..Default::default() }).unwrap();
        assert!((a.meta.resolution_mhz / b.meta.resolution_mhz - 8.0).abs() < 1e-9);
        assert!((argmax(&b) - 1234.5).abs() < (argmax(&a) - 1234.5).abs() + 1e-9);
    }

    proptest! {
        #[test]
        fn parseval(sig in proptest::collection::vec(-1.0..1.0f64, 16..300)) {
            let n = sig.len();
            let mean = sig.iter().sum::<f64>() / n as f64;
            let energy: f64 = sig.iter().map(|x| (x - mean).powi(2)).sum();
            let opts = FftOptions { window: Window::None, zero_pad_factor: 1, scale: Scale::Amplitude };
            let s = fft_spectrum(&record(sig, 0.5), &opts).unwrap();
            let spec = amplitude_spectrum_energy(&s, n);
            prop_assert!((spec - energy).abs() <= 1e-6 * energy.max(1e-12));
            prop_assert!(*s.freqs_mhz.last().unwrap() <= 1.0 / (2.0 * 0.5) + 1e-12);
        }
    }
}
