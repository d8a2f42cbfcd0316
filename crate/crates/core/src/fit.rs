//! Resonance line fitting: a sum of line profiles on a constant baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::lm::{levenberg_marquardt, LeastSquaresProblem, LmConfig};
use crate::registry::{Named, Registry};
use crate::spectrum::Spectrum;

/// Unit-height line profile parameterized by center and full width at half maximum.
pub trait LineShape: Named + Send + Sync {
    /// Profile value and its derivatives with respect to center and width.
    fn eval(&self, f: f64, center: f64, fwhm: f64) -> (f64, f64, f64);

    fn value(&self, f: f64, center: f64, fwhm: f64) -> f64 {
        self.eval(f, center, fwhm).0
    }
}

pub struct Lorentzian;

impl Named for Lorentzian {
    fn name(&self) -> &'static str {
        "lorentzian"
    }
}

impl LineShape for Lorentzian {
    fn eval(&self, f: f64, center: f64, fwhm: f64) -> (f64, f64, f64) {
        let hw = 0.5 * fwhm;
        let x = (f - center) / hw;
        let v = 1.0 / (1.0 + x * x);
        let dv_dx = -2.0 * x * v * v;
        (v, -dv_dx / hw, -dv_dx * x / fwhm)
    }
}

pub struct Gaussian;

impl Named for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }
}

impl LineShape for Gaussian {
    fn eval(&self, f: f64, center: f64, fwhm: f64) -> (f64, f64, f64) {
        let k = 4.0 * std::f64::consts::LN_2;
        let u = (f - center) / fwhm;
        let v = (-k * u * u).exp();
        (v, v * 2.0 * k * u / fwhm, v * 2.0 * k * u * u / fwhm)
    }
}

/// Registry holding the built-in line shapes.
pub fn line_shapes() -> Registry<dyn LineShape> {
    let mut r: Registry<dyn LineShape> = Registry::new("line shape");
    r.register(Box::new(Lorentzian)).register(Box::new(Gaussian));
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center_mhz: f64,
    pub fwhm_mhz: f64,
    pub amplitude: f64,
    pub shape: String,
    /// Euclidean norm of the residual of the whole fit.
    pub residual_norm: f64,
    #[serde(default)]
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum PeakInit {
    /// Largest local maxima at least two bins apart; ties go to the lower frequency.
    #[default]
    Auto,
    /// Starting centers in MHz.
    Explicit(Vec<f64>),
}

/// Indices of the `n` largest interior local maxima, at least `min_sep` bins apart.
pub fn dominant_maxima(values: &[f64], n: usize, min_sep: usize) -> Vec<usize> {
    let len = values.len();
    let mut cands: Vec<usize> = (1..len.saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect();
    cands.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::with_capacity(n);
    for c in cands {
        if picked.len() == n {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(c) >= min_sep) {
            picked.push(c);
        }
    }
    picked
}

struct PeakModel<'a> {
    freqs: &'a [f64],
    values: &'a [f64],
    shape: &'a dyn LineShape,
    n: usize,
    width_bounds: (f64, f64),
    center_bounds: (f64, f64),
}

impl PeakModel<'_> {
    fn model(&self, p: &DVector<f64>, f: f64) -> f64 {
        (0..self.n).fold(p[0], |acc, i| {
            acc + p[3 + 3 * i] * self.shape.value(f, p[1 + 3 * i], p[2 + 3 * i])
        })
    }
}

impl LeastSquaresProblem for PeakModel<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.freqs.len(),
            self.freqs.iter().zip(self.values).map(|(&f, &y)| self.model(p, f) - y),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.freqs.len(), 1 + 3 * self.n);
        for (row, &f) in self.freqs.iter().enumerate() {
            j[(row, 0)] = 1.0;
            for i in 0..self.n {
                let (c, w, a) = (p[1 + 3 * i], p[2 + 3 * i], p[3 + 3 * i]);
                let (v, dc, dw) = self.shape.eval(f, c, w);
                j[(row, 1 + 3 * i)] = a * dc;
                j[(row, 2 + 3 * i)] = a * dw;
                j[(row, 3 + 3 * i)] = v;
            }
        }
        j
    }

    fn project(&self, p: &mut DVector<f64>) {
        for i in 0..self.n {
            p[1 + 3 * i] = p[1 + 3 * i].clamp(self.center_bounds.0, self.center_bounds.1);
            p[2 + 3 * i] = p[2 + 3 * i].clamp(self.width_bounds.0, self.width_bounds.1);
        }
    }
}

fn nearest_index(freqs: &[f64], f: f64) -> usize {
    (0..freqs.len())
        .min_by(|&a, &b| (freqs[a] - f).abs().total_cmp(&(freqs[b] - f).abs()))
        .unwrap_or(0)
}

/// Width at half height around index `i`, above `base`.
fn half_max_width(freqs: &[f64], values: &[f64], i: usize, base: f64) -> f64 {
    let half = base + 0.5 * (values[i] - base);
    let mut lo = i;
    while lo > 0 && values[lo] > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < values.len() && values[hi] > half {
        hi += 1;
    }
    freqs[hi] - freqs[lo]
}

/// Least-squares fit of `n_peaks` profiles plus a constant baseline, sorted by center.
pub fn fit_peaks(s: &Spectrum, n_peaks: usize, shape: &dyn LineShape, init: &PeakInit) -> Result<Vec<PeakFit>> {
    fit_peaks_from(s, n_peaks, shape, init, None)
}

/// [`fit_peaks`] with every width started at `start_width` instead of the half-maximum width.
fn fit_peaks_from(
    s: &Spectrum,
    n_peaks: usize,
    shape: &dyn LineShape,
    init: &PeakInit,
    start_width: Option<f64>,
) -> Result<Vec<PeakFit>> {
    ensure((1..=4).contains(&n_peaks), || format!("n_peaks must be in 1..=4, got {n_peaks}"))?;
    ensure(s.len() >= 10 * n_peaks, || {
        format!("need at least {} points for {n_peaks} peaks, got {}", 10 * n_peaks, s.len())
    })?;
    let freqs = &s.freqs_mhz;
    let values = &s.values;
    let bin = s.spacing_mhz();
    let span = freqs[freqs.len() - 1] - freqs[0];
    let width_bounds = (2.0 * bin, span);
    let base0 = values.iter().cloned().fold(f64::INFINITY, f64::min);

    let starts: Vec<usize> = match init {
        PeakInit::Auto => dominant_maxima(values, n_peaks, 2),
        PeakInit::Explicit(centers) => {
            ensure(centers.len() == n_peaks, || {
                format!("{} initial centers for {n_peaks} peaks", centers.len())
            })?;
            centers.iter().map(|&c| nearest_index(freqs, c)).collect()
        }
    };
    if starts.len() < n_peaks {
        return Err(Error::NoSignificantPeak {
            amplitude: 0.0,
            residual_rms: 0.0,
            best: Vec::new(),
        });
    }

    let mut p0 = vec![base0];
    for (k, &i) in starts.iter().enumerate() {
        let center = match init {
            PeakInit::Explicit(c) => c[k],
            PeakInit::Auto => freqs[i],
        };
        let w = start_width
            .unwrap_or_else(|| half_max_width(freqs, values, i, base0))
            .clamp(width_bounds.0, width_bounds.1);
        p0.extend([center, w, values[i] - base0]);
    }

    let problem = PeakModel {
        freqs,
        values,
        shape,
        n: n_peaks,
        width_bounds,
        center_bounds: (freqs[0], freqs[freqs.len() - 1]),
    };
    let out = levenberg_marquardt(&problem, DVector::from_vec(p0), &LmConfig::default());
    let residual_norm = (2.0 * out.cost).sqrt();
    let p = &out.params;
    let mut peaks: Vec<PeakFit> = (0..n_peaks)
        .map(|i| PeakFit {
            center_mhz: p[1 + 3 * i],
            fwhm_mhz: p[2 + 3 * i],
            amplitude: p[3 + 3 * i],
            shape: shape.name().to_string(),
            residual_norm,
            baseline: p[0],
        })
        .collect();
    peaks.sort_by(|a, b| a.center_mhz.total_cmp(&b.center_mhz));

    if !out.converged {
        return Err(Error::Unconverged {
            iterations: out.iterations,
            best: peaks,
        });
    }
    let rms = residual_norm / (s.len() as f64).sqrt();
    if let Some(weak) = peaks.iter().find(|pk| !(pk.amplitude > 3.0 * rms)) {
        return Err(Error::NoSignificantPeak {
            amplitude: weak.amplitude,
            residual_rms: rms,
            best: peaks,
        });
    }
    Ok(peaks)
}

/// Fits each of the `n` dominant maxima separately inside `±half_window_mhz`, sorted by center.
pub fn fit_dominant_peaks(s: &Spectrum, n: usize, shape: &dyn LineShape, half_window_mhz: f64) -> Result<Vec<PeakFit>> {
    // Windows of distinct peaks must not overlap.
    let min_sep = ((2.0 * half_window_mhz / s.spacing_mhz()).ceil() as usize).max(2);
    let starts = dominant_maxima(&s.values, n, min_sep);
    if starts.len() < n {
        return Err(Error::NoSignificantPeak {
            amplitude: 0.0,
            residual_rms: 0.0,
            best: Vec::new(),
        });
    }
    let mut out = Vec::with_capacity(n);
    for i in starts {
        let c = s.freqs_mhz[i];
        let window = s.band(c - half_window_mhz, c + half_window_mhz)?;
        // A wide start settles on the envelope of a partly resolved cluster rather than
        // on whichever sub-peak happens to be highest.
        out.extend(fit_peaks_from(&window, 1, shape, &PeakInit::Explicit(vec![c]), Some(half_window_mhz))?);
    }
    out.sort_by(|a, b| a.center_mhz.total_cmp(&b.center_mhz));
    Ok(out)
}

/// `|center₁ − center₂|` of exactly two peaks.
pub fn zeeman_splitting(peaks: &[PeakFit]) -> Result<f64> {
    ensure(peaks.len() == 2, || format!("splitting needs exactly 2 peaks, got {}", peaks.len()))?;
    Ok((peaks[0].center_mhz - peaks[1].center_mhz).abs())
}

/// `(PL_off − PL_on) / PL_off`.
pub fn odmr_contrast(pl_on: f64, pl_off: f64) -> Result<f64> {
    ensure(pl_off > 0.0 && pl_off.is_finite(), || format!("pl_off must be > 0, got {pl_off}"))?;
    ensure(pl_on.is_finite(), || "pl_on must be finite".into())?;
    Ok((pl_off - pl_on) / pl_off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn synth(shape: &dyn LineShape, peaks: &[(f64, f64, f64)], base: f64, lo: f64, hi: f64, n: usize) -> Spectrum {
        let freqs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let values = freqs
            .iter()
            .map(|&f| base + peaks.iter().map(|&(c, w, a)| a * shape.value(f, c, w)).sum::<f64>())
            .collect();
        Spectrum::new(freqs, values, SpectrumKind::OdmrContrast, "synthetic").unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn lineshape_derivatives_match_finite_differences() {
        for shape in [&Lorentzian as &dyn LineShape, &Gaussian] {
            for &(f, c, w) in &[(3400.0, 3420.0, 30.0), (3541.0, 3540.0, 5.0), (10.0, 0.0, 50.0)] {
                let (_, dc, dw) = shape.eval(f, c, w);
                let h = 1e-6;
                let fdc = (shape.value(f, c + h, w) - shape.value(f, c - h, w)) / (2.0 * h);
                let fdw = (shape.value(f, c, w + h) - shape.value(f, c, w - h)) / (2.0 * h);
                assert_abs_diff_eq!(dc, fdc, epsilon = 1e-7);
                assert_abs_diff_eq!(dw, fdw, epsilon = 1e-7);
                assert_abs_diff_eq!(shape.value(c + w / 2.0, c, w), 0.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn recovers_single_gaussian() {
        let s = synth(&Gaussian, &[(3480.0, 110.0, 0.019)], 0.0, 3000.0, 4000.0, 501);
        let fit = fit_peaks(&s, 1, &Gaussian, &PeakInit::Auto).unwrap();
        assert!(rel(fit[0].center_mhz, 3480.0) < 1e-6);
        assert!(rel(fit[0].fwhm_mhz, 110.0) < 1e-6);
        assert!(rel(fit[0].amplitude, 0.019) < 1e-6);
    }

    #[test]
    fn recovers_lorentzian_doublet() {
        let s = synth(&Lorentzian, &[(3420.0, 20.0, 1.0), (3540.0, 25.0, 0.8)], 0.05, 3300.0, 3660.0, 721);
        let fit = fit_peaks(&s, 2, &Lorentzian, &PeakInit::Auto).unwrap();
        assert_abs_diff_eq!(fit[0].center_mhz, 3420.0, epsilon = 0.1);
        assert_abs_diff_eq!(fit[1].center_mhz, 3540.0, epsilon = 0.1);
        assert_abs_diff_eq!(zeeman_splitting(&fit).unwrap(), 120.0, epsilon = 0.2);
        let windowed = fit_dominant_peaks(&s, 2, &Lorentzian, 40.0).unwrap();
        assert_abs_diff_eq!(windowed[0].center_mhz, 3420.0, epsilon = 0.5);
        assert_abs_diff_eq!(windowed[1].center_mhz, 3540.0, epsilon = 0.5);
    }

    #[test]
    fn flat_spectrum_gives_no_confident_peak() {
        let flat = synth(&Lorentzian, &[], 1.0, 0.0, 100.0, 101);
        assert!(fit_peaks(&flat, 1, &Lorentzian, &PeakInit::Auto).is_err());
        // Deterministic ripple at the 1e-6 level.
        let mut noisy = flat.clone();
        for (k, v) in noisy.values.iter_mut().enumerate() {
            *v += 1e-6 * ((k * 7919) % 13) as f64 / 13.0;
        }
        match fit_peaks(&noisy, 1, &Lorentzian, &PeakInit::Auto) {
            Err(Error::NoSignificantPeak { .. }) | Err(Error::Unconverged { .. }) => {}
            Ok(p) => panic!("spurious peak {p:?}"),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn tie_break_prefers_lower_frequency() {
        let v = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.0];
        assert_eq!(dominant_maxima(&v, 1, 2), vec![1]);
        assert_eq!(dominant_maxima(&v, 3, 2), vec![1, 4, 6]);
        assert!(dominant_maxima(&[2.0; 10], 1, 2).is_empty());
        assert_eq!(dominant_maxima(&v, 2, 4), vec![1, 6]);
    }

    #[test]
    fn argument_checks() {
        let s = synth(&Lorentzian, &[(50.0, 5.0, 1.0)], 0.0, 0.0, 100.0, 30);
        assert!(fit_peaks(&s, 0, &Lorentzian, &PeakInit::Auto).is_err());
        assert!(fit_peaks(&s, 5, &Lorentzian, &PeakInit::Auto).is_err());
        assert!(fit_peaks(&s, 4, &Lorentzian, &PeakInit::Auto).is_err());
        assert!(line_shapes().get("voigt").is_err());
        assert_eq!(line_shapes().get("gaussian").unwrap().name(), "gaussian");
    }

    #[test]
    fn splitting_and_contrast() {
        let pk = |c: f64| PeakFit {
            center_mhz: c,
            fwhm_mhz: 1.0,
            amplitude: 1.0,
            shape: "lorentzian".into(),
            residual_norm: 0.0,
            baseline: 0.0,
        };
        assert_abs_diff_eq!(zeeman_splitting(&[pk(3420.0), pk(3540.0)]).unwrap(), 120.0);
        assert_abs_diff_eq!(zeeman_splitting(&[pk(3587.81), pk(3372.19)]).unwrap(), 215.62, epsilon = 1e-9);
        assert_eq!(zeeman_splitting(&[pk(3500.0), pk(3500.0)]).unwrap(), 0.0);
        assert!(zeeman_splitting(&[pk(1.0)]).is_err());

        assert_abs_diff_eq!(odmr_contrast(98.1, 100.0).unwrap(), 0.019, epsilon = 1e-12);
        assert_eq!(odmr_contrast(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(odmr_contrast(0.0, 100.0).unwrap(), 1.0);
        assert!(odmr_contrast(1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn exact_profiles_are_recovered(
            c in 3300.0..3700.0f64,
            w in 10.0..150.0f64,
            a in 0.001..1.0f64,
            base in -0.1..0.1f64,
            gaussian in any::<bool>(),
        ) {
            let shape: &dyn LineShape = if gaussian { &Gaussian } else { &Lorentzian };
            let s = synth(shape, &[(c, w, a)], base, 3000.0, 4000.0, 801);
            let fit = fit_peaks(&s, 1, shape, &PeakInit::Auto).unwrap();
            prop_assert!(rel(fit[0].center_mhz, c) < 1e-6);
            prop_assert!(rel(fit[0].fwhm_mhz, w) < 1e-6);
            prop_assert!(rel(fit[0].amplitude, a) < 1e-6);
        }

        #[test]
        fn splitting_symmetric_and_shift_invariant(a in 3000.0..4000.0f64, b in 3000.0..4000.0f64, d in -500.0..500.0f64) {
            let pk = |c: f64| PeakFit { center_mhz: c, fwhm_mhz: 1.0, amplitude: 1.0, shape: String::new(), residual_norm: 0.0, baseline: 0.0 };
            let s1 = zeeman_splitting(&[pk(a), pk(b)]).unwrap();
            let s2 = zeeman_splitting(&[pk(b), pk(a)]).unwrap();
            let s3 = zeeman_splitting(&[pk(a + d), pk(b + d)]).unwrap();
            prop_assert_eq!(s1, s2);
            prop_assert!((s1 - s3).abs() < 1e-9);
        }
    }
}
