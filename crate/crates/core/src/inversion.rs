//! Calibration tables of simulated spectral features over field magnitude and
//! direction, and coarse-to-fine inversion of observed features back to a field.
//!
//! Directions are a polar angle θ from lab Z and an azimuth φ from lab X, both in
//! degrees. The inversion design (weighted nearest cell, then least squares on an
//! interpolated table) is this crate's own; it is not taken from the literature.
//!
//! With the two peak centers as the only features there are more unknowns than
//! observables and the azimuth is not recoverable. In that case the refine stage fits
//! (|B|, θ) on the φ-averaged table and the estimate is flagged azimuth-indeterminate.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::fit::LineShape;
use crate::lm::{levenberg_marquardt, LeastSquaresProblem, LmConfig};
use crate::orientation::{AlignedAzimuth, Ensemble};
use crate::simulate::{spectral_features, FeatureSettings, ForwardModel, SimSettings};
use crate::spin::SpinParams;

/// Fraction of cells that must hold features for a table to be usable.
pub const MIN_FILL_FRACTION: f64 = 0.9;

/// Regular grid over `|B| ∈ [0, b_max]`, `θ ∈ [0°, 180°]` and `φ ∈ [0°, 360°)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub b_max_mt: f64,
    pub b_step_mt: f64,
    pub angle_step_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            b_max_mt: 3.0,
            b_step_mt: 0.5,
            angle_step_deg: 15.0,
        }
    }
}

fn whole_count(span: f64, step: f64, what: &str) -> Result<usize> {
    let n = span / step;
    ensure((n - n.round()).abs() < 1e-9, || format!("{what} step {step} does not divide {span}"))?;
    Ok(n.round() as usize)
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.b_step_mt.is_finite() && self.b_step_mt > 0.0, || {
            format!("b_step_mt must be > 0, got {}", self.b_step_mt)
        })?;
        ensure(self.b_max_mt.is_finite() && self.b_max_mt >= self.b_step_mt, || {
            format!("b_max_mt must be >= b_step_mt, got {}", self.b_max_mt)
        })?;
        ensure(
            self.angle_step_deg.is_finite() && self.angle_step_deg > 0.0 && self.angle_step_deg <= 90.0,
            || format!("angle_step_deg must be in (0, 90], got {}", self.angle_step_deg),
        )?;
        whole_count(self.b_max_mt, self.b_step_mt, "field")?;
        whole_count(180.0, self.angle_step_deg, "angle")?;
        Ok(())
    }

    /// `(|B| axis in mT, θ axis in degrees, φ axis in degrees)`.
    pub fn axes(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let nb = whole_count(self.b_max_mt, self.b_step_mt, "field")?;
        let nt = whole_count(180.0, self.angle_step_deg, "angle")?;
        let b = (0..=nb).map(|i| i as f64 * self.b_step_mt).collect();
        let theta = (0..=nt).map(|j| j as f64 * self.angle_step_deg).collect();
        let phi = (0..2 * nt).map(|k| k as f64 * self.angle_step_deg).collect();
        Ok((b, theta, phi))
    }
}

/// Lab field from magnitude and angles. Components below `1e-12·|B|` are set to zero so
/// that equal fields on the poles and at the origin compare equal.
pub fn field_vector(magnitude_mt: f64, theta_deg: f64, phi_deg: f64) -> Vector3<f64> {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    Vector3::new(st * cp, st * sp, ct).map(|c| {
        let v = magnitude_mt * c;
        if v.abs() <= 1e-12 * magnitude_mt {
            0.0
        } else {
            v
        }
    })
}

/// `(|B|, θ, φ)` of a lab field, angles in degrees with `φ ∈ [0, 360)`.
pub fn field_angles(b: &Vector3<f64>) -> (f64, f64, f64) {
    let m = b.norm();
    if m == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let theta = (b.z / m).clamp(-1.0, 1.0).acos().to_degrees();
    let phi = b.y.atan2(b.x).to_degrees().rem_euclid(360.0);
    (m, theta, phi)
}

/// Identity of the ensemble and forward-model settings a table was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub seed: u64,
    pub n_random: usize,
    pub n_aligned: usize,
    pub aligned_azimuth: AlignedAzimuth,
    /// SHA-256 of the spin parameters and simulation settings.
    pub params_hash: String,
}

impl Fingerprint {
    pub fn new(ensemble: &Ensemble, params: &SpinParams, sim: &SimSettings, mode: &str, shape: &str) -> Result<Self> {
        let canonical = serde_json::to_string(&(params, sim, mode, shape))
            .map_err(|e| Error::Internal(format!("fingerprint serialization: {e}")))?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(Self {
            seed: ensemble.spec.seed,
            n_random: ensemble.spec.n_random,
            n_aligned: ensemble.spec.n_aligned,
            aligned_azimuth: ensemble.spec.aligned_azimuth,
            params_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// Feature vectors on a `(|B|, θ, φ)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTable {
    pub grid: GridSpec,
    pub b_axis_mt: Vec<f64>,
    pub theta_axis_deg: Vec<f64>,
    pub phi_axis_deg: Vec<f64>,
    pub mode: String,
    pub line_shape: String,
    pub feature_settings: FeatureSettings,
    pub fingerprint: Fingerprint,
    /// Row-major over `(|B|, θ, φ)`; `None` marks a cell whose simulation or fit failed.
    pub features: Vec<Option<Vec<f64>>>,
}

impl CalibrationTable {
    /// Fills a grid by evaluating `cell` once per distinct field vector.
    ///
    /// `Ok(None)` marks a missing cell. The table is rejected with
    /// [`Error::SparseCalibration`] when fewer than [`MIN_FILL_FRACTION`] of the cells
    /// are filled.
    pub fn tabulate<F>(
        grid: GridSpec,
        mode: &str,
        line_shape: &str,
        feature_settings: FeatureSettings,
        fingerprint: Fingerprint,
        cell: F,
    ) -> Result<Self>
    where
        F: Fn(&Vector3<f64>) -> Result<Option<Vec<f64>>> + Sync,
    {
        let (b_axis, theta_axis, phi_axis) = grid.axes()?;
        let mut unique: Vec<Vector3<f64>> = Vec::new();
        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        let mut slot = Vec::with_capacity(b_axis.len() * theta_axis.len() * phi_axis.len());
        for &b in &b_axis {
            for &t in &theta_axis {
                for &p in &phi_axis {
                    let v = field_vector(b, t, p);
                    // +0.0 folds the sign of zero components into one key.
                    let key = [(v.x + 0.0).to_bits(), (v.y + 0.0).to_bits(), (v.z + 0.0).to_bits()];
                    let idx = *seen.entry(key).or_insert_with(|| {
                        unique.push(v);
                        unique.len() - 1
                    });
                    slot.push(idx);
                }
            }
        }
        let computed: Vec<Option<Vec<f64>>> = unique.par_iter().map(&cell).collect::<Result<_>>()?;
        let features: Vec<Option<Vec<f64>>> = slot.iter().map(|&i| computed[i].clone()).collect();

        let total = features.len();
        let filled = features.iter().filter(|f| f.is_some()).count();
        if (filled as f64) < MIN_FILL_FRACTION * total as f64 {
            return Err(Error::SparseCalibration { filled, total });
        }
        let table = Self {
            grid,
            b_axis_mt: b_axis,
            theta_axis_deg: theta_axis,
            phi_axis_deg: phi_axis,
            mode: mode.to_string(),
            line_shape: line_shape.to_string(),
            feature_settings,
            fingerprint,
            features,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.b_axis_mt.len(), self.theta_axis_deg.len(), self.phi_axis_deg.len())
    }

    pub fn cell(&self, i: usize, j: usize, k: usize) -> Option<&[f64]> {
        let (_, nt, np) = self.dims();
        self.features[(i * nt + j) * np + k].as_deref()
    }

    pub fn filled(&self) -> usize {
        self.features.iter().filter(|f| f.is_some()).count()
    }

    /// Checks axes against the grid spec, feature dimensions and finiteness, and the fingerprint.
    pub fn validate(&self) -> Result<()> {
        let (b, t, p) = self.grid.axes()?;
        let same = |a: &[f64], e: &[f64]| a.len() == e.len() && a.iter().zip(e).all(|(x, y)| (x - y).abs() < 1e-9);
        ensure(same(&self.b_axis_mt, &b), || "field axis does not match the grid spec".into())?;
        ensure(same(&self.theta_axis_deg, &t), || "polar axis does not match the grid spec".into())?;
        ensure(same(&self.phi_axis_deg, &p), || "azimuth axis does not match the grid spec".into())?;
        let (nb, nt, np) = self.dims();
        ensure(self.features.len() == nb * nt * np, || {
            format!("expected {} cells, found {}", nb * nt * np, self.features.len())
        })?;
        let dim = self.feature_settings.dimension();
        for (n, f) in self.features.iter().enumerate() {
            if let Some(f) = f {
                ensure(f.len() == dim && f.iter().all(|v| v.is_finite()), || {
                    format!("cell {n} must hold {dim} finite features")
                })?;
            }
        }
        ensure(!self.fingerprint.params_hash.is_empty(), || "fingerprint has no params hash".into())
    }

    /// Along `θ = 0` the splitting of the two centers must grow strictly with `|B|`.
    pub fn audit(&self) -> Result<()> {
        let mut last: Option<(f64, f64)> = None;
        for (i, &b) in self.b_axis_mt.iter().enumerate() {
            let Some(f) = self.cell(i, 0, 0) else { continue };
            let s = f[0] - f[1];
            if let Some((b0, s0)) = last {
                if s <= s0 {
                    return Err(Error::Audit(format!(
                        "splitting along theta=0 is not increasing: {s0:.6} MHz at {b0} mT, {s:.6} MHz at {b} mT"
                    )));
                }
            }
            last = Some((b, s));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("table serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("calibration table: {e}")))?;
        t.validate()?;
        Ok(t)
    }
}

/// Simulates every grid cell with `model` and stores its spectral features.
///
/// Configuration errors from the forward model abort the build; fit failures leave the
/// cell missing. The finished table passes [`CalibrationTable::audit`].
pub fn build_calibration(
    ensemble: &Ensemble,
    params: &SpinParams,
    grid: &GridSpec,
    model: &dyn ForwardModel,
    sim: &SimSettings,
    shape: &dyn LineShape,
    features: &FeatureSettings,
) -> Result<CalibrationTable> {
    params.validate()?;
    let fingerprint = Fingerprint::new(ensemble, params, sim, model.name(), shape.name())?;
    let table = CalibrationTable::tabulate(*grid, model.name(), shape.name(), *features, fingerprint, |b| {
        let spectrum = model.spectrum(ensemble, params, b, sim)?;
        match spectral_features(&spectrum, shape, features) {
            Ok((_, f)) => Ok(Some(f)),
            Err(Error::InvalidInput(m)) => Err(Error::InvalidInput(m)),
            Err(_) => Ok(None),
        }
    })?;
    table.audit()?;
    Ok(table)
}

/// Whether the refine stage fits the azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AzimuthMode {
    /// `Resolved` when there are at least three features, else `Averaged`.
    #[default]
    Auto,
    /// Fit (|B|, θ) on the φ-averaged table; φ is reported as indeterminate.
    Averaged,
    /// Fit (|B|, θ, φ) on the full table.
    Resolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionOptions {
    /// Weight of a peak-center difference, per MHz.
    pub center_weight: f64,
    /// Weight of a relative-amplitude difference.
    pub amplitude_weight: f64,
    /// Largest weighted misfit accepted as a confident estimate.
    pub residual_threshold: f64,
    /// Fields weaker than this have no meaningful direction, mT.
    pub zero_field_mt: f64,
    pub azimuth: AzimuthMode,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            center_weight: 1.0,
            amplitude_weight: 100.0,
            residual_threshold: 1.0,
            zero_field_mt: 0.05,
            azimuth: AzimuthMode::Auto,
        }
    }
}

/// Which parts of the field the features cannot distinguish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    /// `B` and `−B` give the same features. Always set.
    pub sign: bool,
    /// Any azimuth fits equally well, so θ and 180° − θ are equivalent too.
    pub azimuth: bool,
    /// The estimate is consistent with zero field and has no direction.
    pub direction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    /// Representative field, mT. With an indeterminate azimuth it is placed at φ = 0.
    pub b_lab: Vector3<f64>,
    pub magnitude_mt: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Weighted Euclidean feature misfit at the estimate.
    pub residual: f64,
    pub converged: bool,
    pub degeneracy: Degeneracy,
    /// Field vectors equivalent to `b_lab` under the flagged degeneracies, `b_lab` first.
    pub equivalents: Vec<Vector3<f64>>,
}

impl FieldEstimate {
    /// Angle between the estimated and a reference direction modulo the flagged degeneracies.
    pub fn direction_error_deg(&self, truth: &Vector3<f64>) -> f64 {
        if self.degeneracy.direction || truth.norm() == 0.0 {
            return 0.0;
        }
        if self.degeneracy.azimuth {
            let fold = |t: f64| t.min(180.0 - t);
            return (fold(self.theta_deg) - fold(field_angles(truth).1)).abs();
        }
        self.equivalents
            .iter()
            .filter(|e| e.norm() > 0.0)
            .map(|e| (e.dot(truth) / (e.norm() * truth.norm())).clamp(-1.0, 1.0).acos().to_degrees())
            .fold(f64::INFINITY, f64::min)
    }
}

fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    let h = axis[1] - axis[0];
    let x = x.clamp(axis[0], axis[n - 1]);
    let i = (((x - axis[0]) / h).floor() as usize).min(n - 2);
    (i, (x - axis[i]) / h)
}

fn bracket_periodic(axis: &[f64], x: f64) -> (usize, usize, f64) {
    let n = axis.len();
    let h = 360.0 / n as f64;
    let u = x.rem_euclid(360.0) / h;
    let i = (u.floor() as usize).min(n - 1);
    (i, (i + 1) % n, u - i as f64)
}

/// Weighted mean of the present corners, renormalized over them.
fn blend<'a>(corners: impl Iterator<Item = (f64, Option<&'a [f64]>)>, dim: usize) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut wsum = 0.0;
    for (w, f) in corners {
        if let (true, Some(f)) = (w > 0.0, f) {
            acc.iter_mut().zip(f).for_each(|(a, v)| *a += w * v);
            wsum += w;
        }
    }
    (wsum > 1e-12).then(|| acc.into_iter().map(|a| a / wsum).collect())
}

/// Interpolated table used as the forward model during refinement.
struct Surrogate<'a> {
    table: &'a CalibrationTable,
    /// φ-averaged features over `(|B|, θ)`, present in averaged mode.
    averaged: Option<Vec<Option<Vec<f64>>>>,
    dim: usize,
}

impl<'a> Surrogate<'a> {
    fn new(table: &'a CalibrationTable, averaged: bool) -> Self {
        let (nb, nt, np) = table.dims();
        let dim = table.feature_settings.dimension();
        let averaged = averaged.then(|| {
            (0..nb * nt)
                .map(|ij| blend((0..np).map(|k| (1.0, table.cell(ij / nt, ij % nt, k))), dim))
                .collect()
        });
        Self { table, averaged, dim }
    }

    fn nodes(&self) -> Vec<(f64, f64, f64, Option<&[f64]>)> {
        let t = self.table;
        let (nb, nt, np) = t.dims();
        match &self.averaged {
            Some(avg) => (0..nb * nt)
                .map(|ij| (t.b_axis_mt[ij / nt], t.theta_axis_deg[ij % nt], 0.0, avg[ij].as_deref()))
                .collect(),
            None => (0..nb * nt * np)
                .map(|n| {
                    let (i, j, k) = (n / (nt * np), (n / np) % nt, n % np);
                    (t.b_axis_mt[i], t.theta_axis_deg[j], t.phi_axis_deg[k], t.cell(i, j, k))
                })
                .collect(),
        }
    }

    fn eval(&self, b: f64, theta: f64, phi: f64) -> Option<Vec<f64>> {
        let t = self.table;
        let (i, tb) = bracket(&t.b_axis_mt, b);
        let (j, tt) = bracket(&t.theta_axis_deg, theta);
        let nt = t.theta_axis_deg.len();
        match &self.averaged {
            Some(avg) => {
                let at = |di: usize, dj: usize| avg[(i + di) * nt + j + dj].as_deref();
                let corners = [
                    ((1.0 - tb) * (1.0 - tt), at(0, 0)),
                    ((1.0 - tb) * tt, at(0, 1)),
                    (tb * (1.0 - tt), at(1, 0)),
                    (tb * tt, at(1, 1)),
                ];
                blend(corners.into_iter(), self.dim)
            }
            None => {
                let (k0, k1, tp) = bracket_periodic(&t.phi_axis_deg, phi);
                let corners = (0..8).map(|c| {
                    let (di, dj, dk) = (c >> 2 & 1, c >> 1 & 1, c & 1);
                    let w = [1.0 - tb, tb][di] * [1.0 - tt, tt][dj] * [1.0 - tp, tp][dk];
                    (w, t.cell(i + di, j + dj, [k0, k1][dk]))
                });
                blend(corners, self.dim)
            }
        }
    }
}

/// Residual used where the surrogate has no data.
const HOLE_RESIDUAL: f64 = 1e6;

struct Refine<'a> {
    surrogate: &'a Surrogate<'a>,
    observed: &'a [f64],
    weights: &'a [f64],
    b_max: f64,
}

impl Refine<'_> {
    fn angles(&self, p: &DVector<f64>) -> (f64, f64, f64) {
        (p[0], p[1], if p.len() > 2 { p[2] } else { 0.0 })
    }
}

impl LeastSquaresProblem for Refine<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let (b, t, ph) = self.angles(p);
        match self.surrogate.eval(b, t, ph) {
            Some(f) => DVector::from_iterator(
                f.len(),
                f.iter().zip(self.observed).zip(self.weights).map(|((m, o), w)| w * (m - o)),
            ),
            None => DVector::from_element(self.observed.len(), HOLE_RESIDUAL),
        }
    }

    /// Central differences, one-sided at the bounds.
    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        const STEPS: [f64; 3] = [1e-4, 1e-3, 1e-3];
        let mut j = DMatrix::zeros(self.observed.len(), p.len());
        for c in 0..p.len() {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[c] += STEPS[c];
            lo[c] -= STEPS[c];
            self.project(&mut hi);
            self.project(&mut lo);
            let d = hi[c] - lo[c];
            if d > 0.0 {
                j.set_column(c, &((self.residuals(&hi) - self.residuals(&lo)) / d));
            }
        }
        j
    }

    fn project(&self, p: &mut DVector<f64>) {
        p[0] = p[0].clamp(0.0, self.b_max);
        p[1] = p[1].clamp(0.0, 180.0);
    }
}

/// Estimates the lab field whose tabulated features best match `observed`.
///
/// The coarse stage picks the grid node with the smallest weighted feature distance; the
/// refine stage runs least squares on the interpolated table from there.
pub fn invert_field(observed: &[f64], table: &CalibrationTable, opts: &InversionOptions) -> Result<FieldEstimate> {
    let dim = table.feature_settings.dimension();
    ensure(observed.len() == dim, || {
        format!("expected {dim} features to match the table, got {}", observed.len())
    })?;
    ensure(observed.iter().all(|v| v.is_finite()), || "features must be finite".into())?;
    ensure(opts.residual_threshold >= 0.0 && opts.zero_field_mt >= 0.0, || {
        "residual threshold and zero-field tolerance must be >= 0".into()
    })?;
    let weights: Vec<f64> = (0..dim).map(|n| if n < 2 { opts.center_weight } else { opts.amplitude_weight }).collect();

    let averaged = match opts.azimuth {
        AzimuthMode::Auto => dim < 3,
        AzimuthMode::Averaged => true,
        AzimuthMode::Resolved => false,
    };
    let surrogate = Surrogate::new(table, averaged);
    let distance = |f: &[f64]| {
        f.iter().zip(observed).zip(&weights).map(|((m, o), w)| (w * (m - o)).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, [f64; 3])> = None;
    for (b, t, p, f) in surrogate.nodes() {
        if let Some(f) = f {
            let d = distance(f);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, [b, t, p]));
            }
        }
    }
    let (_, start) = best.ok_or_else(|| Error::InvalidInput("calibration table has no filled cells".into()))?;

    let problem = Refine {
        surrogate: &surrogate,
        observed,
        weights: &weights,
        b_max: *table.b_axis_mt.last().unwrap_or(&0.0),
    };
    let p0 = if averaged {
        DVector::from_row_slice(&start[..2])
    } else {
        DVector::from_row_slice(&start)
    };
    let out = levenberg_marquardt(&problem, p0, &LmConfig::default());
    let (magnitude, theta, phi) = problem.angles(&out.params);
    let phi = phi.rem_euclid(360.0);
    let residual = problem.residuals(&out.params).norm();

    let direction = magnitude < opts.zero_field_mt;
    let degeneracy = Degeneracy {
        sign: true,
        azimuth: averaged || direction,
        direction,
    };
    let b_lab = field_vector(magnitude, theta, phi);
    let mut equivalents = vec![b_lab, -b_lab];
    if degeneracy.azimuth {
        let mirror = Vector3::new(b_lab.x, b_lab.y, -b_lab.z);
        equivalents.extend([mirror, -mirror]);
    }
    let mut unique: Vec<Vector3<f64>> = Vec::with_capacity(equivalents.len());
    for e in equivalents {
        if unique.iter().all(|u| (u - e).norm() > 1e-12) {
            unique.push(e);
        }
    }
    let estimate = FieldEstimate {
        b_lab,
        magnitude_mt: magnitude,
        theta_deg: theta,
        phi_deg: phi,
        residual,
        converged: out.converged,
        degeneracy,
        equivalents: unique,
    };
    if residual > opts.residual_threshold {
        return Err(Error::NoConfidentEstimate {
            threshold: opts.residual_threshold,
            best: Box::new(estimate),
        });
    }
    Ok(estimate)
}
