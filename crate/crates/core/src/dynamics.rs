//! Driven Markovian master equation for one defect, and ensemble averages of it.
//!
//! ```text
//! dρ/dt = −i 2π [H_t, ρ] + Γ/2 (2 S_x ρ S_x − S_x² ρ − ρ S_x²)
//! H_t   = H + γ B_mw cos(2π ω t) (S·n)
//! ```
//!
//! with `H` in MHz, `t` in µs and `Γ = 1/T1` in µs⁻¹. Both the static Hamiltonian
//! and the dissipator `S_x` live in the defect principal frame; `n` is the lab drive
//! axis rotated into that frame.
//!
//! The density matrix is propagated as a real 9-vector (three populations, then
//! the real and imaginary parts of the three upper coherences), so every state the
//! integrator produces is Hermitian by construction. The Liouvillian is a real
//! 9×9 matrix and the integrator is classical fixed-step RK4.

use std::f64::consts::{FRAC_PI_4, TAU};

use nalgebra::{SMatrix, SVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::orientation::{lab_to_defect, DefectOrientation, Ensemble};
use crate::spectrum::{Spectrum, SpectrumKind};
use crate::spin::{build_hamiltonian, spin_ops, CMatrix3, SpinParams, MS_MINUS, MS_PLUS, MS_ZERO};

pub type StateVec = SVector<f64, 9>;
pub type Superop = SMatrix<f64, 9, 9>;

/// Ratio between the sampling rate and the fastest frequency in the problem.
pub const STEPS_PER_PERIOD: f64 = 20.0;

/// Defects integrated together before their signals are folded into the running sum.
const CHUNK: usize = 32;

const OFF_DIAGONAL: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Maps the real state vector to the Hermitian matrix it encodes.
pub fn vec_to_matrix(y: &StateVec) -> CMatrix3 {
    let mut m = CMatrix3::zeros();
    for i in 0..3 {
        m[(i, i)] = Complex64::from(y[i]);
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        let c = Complex64::new(y[3 + 2 * k], y[4 + 2 * k]);
        m[(i, j)] = c;
        m[(j, i)] = c.conj();
    }
    m
}

/// Reads the real coordinates of a (Hermitian) matrix from its diagonal and upper triangle.
pub fn matrix_to_vec(m: &CMatrix3) -> StateVec {
    let mut y = StateVec::zeros();
    for i in 0..3 {
        y[i] = m[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        y[3 + 2 * k] = m[(i, j)].re;
        y[4 + 2 * k] = m[(i, j)].im;
    }
    y
}

fn basis_matrix(k: usize) -> CMatrix3 {
    let mut e = StateVec::zeros();
    e[k] = 1.0;
    vec_to_matrix(&e)
}

/// Real 9×9 matrix of a Hermiticity-preserving superoperator.
fn superop(map: impl Fn(&CMatrix3) -> CMatrix3) -> Superop {
    let mut l = Superop::zeros();
    for k in 0..9 {
        l.set_column(k, &matrix_to_vec(&map(&basis_matrix(k))));
    }
    l
}

/// `ρ ↦ −i 2π [H, ρ]`.
pub fn commutator_superop(h: &CMatrix3) -> Superop {
    let minus_i_tau = Complex64::new(0.0, -TAU);
    superop(|rho| (h * rho - rho * h) * minus_i_tau)
}

/// `ρ ↦ rate/2 (2 L ρ L − L² ρ − ρ L²)` for Hermitian `L`.
pub fn dissipator_superop(jump: &CMatrix3, rate: f64) -> Superop {
    let l2 = jump * jump;
    let half = Complex64::from(0.5 * rate);
    superop(|rho| (jump * rho * jump * Complex64::from(2.0) - l2 * rho - rho * l2) * half)
}

/// Linear functional `y ↦ tr(A ρ)` for Hermitian `A`.
pub fn expectation_functional(a: &CMatrix3) -> StateVec {
    StateVec::from_fn(|k, _| (a * basis_matrix(k)).trace().re)
}

/// `exp(−i θ S·n)` for a unit vector `n`, using `(S·n)³ = S·n` for spin 1.
pub fn spin_rotation(n: &Vector3<f64>, angle: f64) -> CMatrix3 {
    let ops = spin_ops();
    let sn = ops.along(n);
    ops.identity - sn * Complex64::new(0.0, angle.sin()) + sn * sn * Complex64::from(angle.cos() - 1.0)
}

/// 3×3 Hermitian, unit-trace, positive semidefinite state in the `(+1, 0, −1)` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix3);

impl DensityMatrix {
    pub fn new(m: CMatrix3) -> Result<Self> {
        let rho = Self(m);
        ensure(rho.hermiticity_error() <= 1e-10, || {
            format!("density matrix not Hermitian (error {:.3e})", rho.hermiticity_error())
        })?;
        ensure((rho.trace() - 1.0).abs() <= 1e-10, || {
            format!("density matrix trace {} != 1", rho.trace())
        })?;
        ensure(rho.min_eigenvalue() >= -1e-9, || {
            format!("density matrix has negative eigenvalue {:.3e}", rho.min_eigenvalue())
        })?;
        Ok(rho)
    }

    /// `|0⟩⟨0|`, the optically pumped state.
    pub fn ground() -> Self {
        let mut m = CMatrix3::zeros();
        m[(MS_ZERO, MS_ZERO)] = Complex64::from(1.0);
        Self(m)
    }

    /// `|ψ⟩⟨ψ|` for a normalized ket.
    pub fn pure(psi: &Vector3<Complex64>) -> Result<Self> {
        ensure((psi.norm() - 1.0).abs() < 1e-10, || "state vector must be normalized".into())?;
        Self::new(psi * psi.adjoint())
    }

    pub(crate) fn from_vec(y: &StateVec) -> Self {
        Self(vec_to_matrix(y))
    }

    pub fn matrix(&self) -> &CMatrix3 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.0 + self.0.adjoint()) * Complex64::from(0.5);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Populations `(p₊₁, p₀, p₋₁)`.
    pub fn populations(&self) -> [f64; 3] {
        [self.0[(MS_PLUS, MS_PLUS)].re, self.0[(MS_ZERO, MS_ZERO)].re, self.0[(MS_MINUS, MS_MINUS)].re]
    }

    pub fn rotated(&self, u: &CMatrix3) -> Self {
        Self(u * self.0 * u.adjoint())
    }
}

/// Microwave drive `B_mw cos(2π ω t)` along a lab-frame axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub b_mw_mt: f64,
    pub omega_mhz: f64,
    pub axis_lab: Vector3<f64>,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            b_mw_mt: 0.1,
            omega_mhz: 3480.0,
            axis_lab: Vector3::y(),
        }
    }
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.b_mw_mt.is_finite() && self.b_mw_mt >= 0.0, || {
            format!("drive amplitude must be >= 0, got {}", self.b_mw_mt)
        })?;
        ensure(self.omega_mhz.is_finite() && self.omega_mhz > 0.0, || {
            format!("drive frequency must be > 0, got {}", self.omega_mhz)
        })?;
        ensure(self.axis_lab.iter().all(|c| c.is_finite()) && self.axis_lab.norm() > 0.0, || {
            "drive axis must be a finite non-zero vector".into()
        })
    }
}

/// Recorded observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Observable {
    /// `p₀ + β (p₊₁ + p₋₁)`.
    PlProxy { beta: f64 },
    /// `⟨S·n⟩` for a lab-frame axis `n` (normalized internally).
    Spin { axis_lab: Vector3<f64> },
    /// `p₀`.
    PopulationZero,
}

impl Observable {
    pub fn tag(&self) -> &'static str {
        match self {
            Observable::PlProxy { .. } => "pl-proxy",
            Observable::Spin { .. } => "spin",
            Observable::PopulationZero => "population-0",
        }
    }

    fn functional(&self, o: &DefectOrientation) -> Result<StateVec> {
        let mut a = CMatrix3::zeros();
        match *self {
            Observable::PlProxy { beta } => {
                ensure((0.0..1.0).contains(&beta), || format!("beta_pl must be in [0, 1), got {beta}"))?;
                a[(MS_ZERO, MS_ZERO)] = Complex64::from(1.0);
                a[(MS_PLUS, MS_PLUS)] = Complex64::from(beta);
                a[(MS_MINUS, MS_MINUS)] = Complex64::from(beta);
            }
            Observable::Spin { axis_lab } => {
                ensure(axis_lab.norm() > 0.0, || "observable axis must be non-zero".into())?;
                a = spin_ops().along(&lab_to_defect(o, &axis_lab.normalize()));
            }
            Observable::PopulationZero => a[(MS_ZERO, MS_ZERO)] = Complex64::from(1.0),
        }
        Ok(expectation_functional(&a))
    }
}

/// Observable sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub signals: Vec<f64>,
    pub observable: String,
}

impl TrajectoryRecord {
    /// Sample spacing, if the grid is uniform to 1e-9 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        let uniform = dt > 0.0
            && self
                .times
                .windows(2)
                .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        uniform.then_some(dt)
    }
}

/// Time grid of one integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max_us: f64,
    pub dt_us: f64,
    /// Record every n-th step (1 records every step).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl TimeGrid {
    pub fn new(t_max_us: f64, dt_us: f64) -> Self {
        Self {
            t_max_us,
            dt_us,
            record_every: 1,
        }
    }

    pub fn with_record_every(self, record_every: usize) -> Self {
        Self { record_every, ..self }
    }

    fn validate(&self) -> Result<()> {
        ensure(self.dt_us.is_finite() && self.dt_us > 0.0, || format!("dt_us must be > 0, got {}", self.dt_us))?;
        ensure(self.t_max_us.is_finite() && self.t_max_us >= self.dt_us, || {
            format!("t_max_us ({}) must be >= dt_us ({})", self.t_max_us, self.dt_us)
        })?;
        ensure(self.record_every >= 1, || "record_every must be >= 1".into())
    }

    /// Number of RK4 steps, a whole multiple of `record_every`.
    pub fn steps(&self) -> usize {
        let n = (self.t_max_us / self.dt_us).round() as usize;
        n - n % self.record_every
    }

    fn samples(&self) -> usize {
        self.steps() / self.record_every + 1
    }

    fn times(&self) -> Vec<f64> {
        let h = self.dt_us * self.record_every as f64;
        (0..self.samples()).map(|k| k as f64 * h).collect()
    }
}

/// Largest frequency scale (MHz) of a defect: level span plus drive frequency and Rabi scale.
fn max_frequency(params: &SpinParams, h: &CMatrix3, drive: Option<&DriveParams>) -> Result<f64> {
    let ev = crate::spin::Hamiltonian(*h).eigen()?.0;
    let mut f = ev[0] - ev[2];
    if let Some(d) = drive {
        f += d.omega_mhz + params.gamma_mhz_per_mt() * d.b_mw_mt;
    }
    Ok(f)
}

fn check_step(dt_us: f64, f_max_mhz: f64) -> Result<()> {
    let limit_us = 1.0 / (STEPS_PER_PERIOD * f_max_mhz);
    if dt_us > limit_us {
        return Err(Error::StepTooLarge {
            dt_us,
            limit_us,
            f_max_mhz,
        });
    }
    Ok(())
}

/// Liouvillian of one defect, split into static and drive parts.
#[derive(Debug, Clone)]
pub struct DefectLiouvillian {
    pub static_part: Superop,
    /// Coefficient of `cos(2π ω t)`, with the drive frequency.
    pub drive_part: Option<(Superop, f64)>,
    pub f_max_mhz: f64,
}

impl DefectLiouvillian {
    pub fn new(
        params: &SpinParams,
        b_lab: &Vector3<f64>,
        o: &DefectOrientation,
        drive: Option<&DriveParams>,
    ) -> Result<Self> {
        params.validate()?;
        let h = build_hamiltonian(params, &lab_to_defect(o, b_lab))?;
        let ops = spin_ops();
        let static_part =
            commutator_superop(&h.0) + dissipator_superop(&ops.sx, params.gamma_relax_per_us());
        let drive_part = match drive {
            Some(d) => {
                d.validate()?;
                let n = lab_to_defect(o, &d.axis_lab.normalize());
                let hd = ops.along(&n) * Complex64::from(params.gamma_mhz_per_mt() * d.b_mw_mt);
                Some((commutator_superop(&hd), d.omega_mhz))
            }
            None => None,
        };
        let f_max_mhz = max_frequency(params, &h.0, drive)?;
        Ok(Self {
            static_part,
            drive_part,
            f_max_mhz,
        })
    }

    /// Integrates `steps` RK4 steps of size `dt`, calling `visit(step, y)` for the initial
    /// state and after every `stride`-th step.
    ///
    /// Without a drive the stride is taken with the matrix power of the one-step map.
    pub fn integrate(&self, y0: StateVec, dt: f64, steps: usize, stride: usize, mut visit: impl FnMut(usize, &StateVec)) {
        let stride = stride.max(1);
        let mut y = y0;
        visit(0, &y);
        match &self.drive_part {
            None => {
                let one = rk4_propagator(&self.static_part, dt);
                let mut p = one;
                for _ in 1..stride {
                    p *= one;
                }
                for m in 1..=steps / stride {
                    y = p * y;
                    visit(m * stride, &y);
                }
            }
            Some((l1, omega)) => {
                let l0 = &self.static_part;
                let rhs = |t: f64, y: &StateVec| l0 * y + (l1 * y) * (TAU * omega * t).cos();
                for n in 1..=steps {
                    let t = (n - 1) as f64 * dt;
                    let k1 = rhs(t, &y);
                    let k2 = rhs(t + 0.5 * dt, &(y + k1 * (0.5 * dt)));
                    let k3 = rhs(t + 0.5 * dt, &(y + k2 * (0.5 * dt)));
                    let k4 = rhs(t + dt, &(y + k3 * dt));
                    y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                    if n % stride == 0 {
                        visit(n, &y);
                    }
                }
            }
        }
    }
}

/// One RK4 step of the autonomous linear system `y' = L y`, as a matrix.
pub fn rk4_propagator(l: &Superop, dt: f64) -> Superop {
    let a = l * dt;
    let a2 = a * a;
    let a3 = a2 * a;
    let a4 = a3 * a;
    Superop::identity() + a + a2 * 0.5 + a3 * (1.0 / 6.0) + a4 * (1.0 / 24.0)
}

/// Integrates the master equation for one defect and records `observable`.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    rho0: &DensityMatrix,
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    o: &DefectOrientation,
    drive: Option<&DriveParams>,
    grid: &TimeGrid,
    observable: &Observable,
) -> Result<TrajectoryRecord> {
    evolve_observed(rho0, params, b_lab, o, drive, grid, observable, |_, _| {})
}

/// [`evolve`] with a hook that sees the density matrix at every recorded sample.
#[allow(clippy::too_many_arguments)]
pub fn evolve_observed(
    rho0: &DensityMatrix,
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    o: &DefectOrientation,
    drive: Option<&DriveParams>,
    grid: &TimeGrid,
    observable: &Observable,
    mut inspect: impl FnMut(f64, &DensityMatrix),
) -> Result<TrajectoryRecord> {
    let rho0 = DensityMatrix::new(*rho0.matrix())?;
    grid.validate()?;
    let liou = DefectLiouvillian::new(params, b_lab, o, drive)?;
    check_step(grid.dt_us, liou.f_max_mhz)?;
    let c = observable.functional(o)?;
    let mut signals = Vec::with_capacity(grid.samples());
    let every = grid.record_every;

    liou.integrate(matrix_to_vec(rho0.matrix()), grid.dt_us, grid.steps(), every, |n, y| {
        signals.push(c.dot(y));
        inspect(n as f64 * grid.dt_us, &DensityMatrix::from_vec(y));
    });
    Ok(TrajectoryRecord {
        times: grid.times(),
        signals,
        observable: observable.tag().to_string(),
    })
}

/// Free-induction-decay settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidSettings {
    pub grid: TimeGrid,
    /// Lab axes of the preparation pulse and of the recorded spin component. With more
    /// than one axis the per-axis ensemble signals are averaged.
    pub probe_axes_lab: Vec<Vector3<f64>>,
}

impl FidSettings {
    pub fn new(t_max_us: f64, dt_us: f64) -> Self {
        Self {
            grid: TimeGrid::new(t_max_us, dt_us),
            probe_axes_lab: vec![Vector3::y()],
        }
    }

    pub fn with_probes(self, probe_axes_lab: Vec<Vector3<f64>>) -> Self {
        Self { probe_axes_lab, ..self }
    }

    pub fn with_record_every(self, record_every: usize) -> Self {
        Self {
            grid: self.grid.with_record_every(record_every),
            ..self
        }
    }
}

/// Preparation pulse: a π/2 rotation of the `|0⟩ ↔ bright` two-level transition, which is a
/// spin-1 rotation by π/4 about the probe axis.
pub const FID_PULSE_ANGLE: f64 = FRAC_PI_4;

/// Weighted `⟨S·n⟩` after a pulse about `n`, for one defect and one lab probe axis.
fn single_fid(
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    o: &DefectOrientation,
    axis: &Vector3<f64>,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let n = lab_to_defect(o, axis);
    let rho0 = DensityMatrix::ground().rotated(&spin_rotation(&n, FID_PULSE_ANGLE));
    let liou = DefectLiouvillian::new(params, b_lab, o, None)?;
    check_step(grid.dt_us, liou.f_max_mhz)?;
    let c = Observable::Spin { axis_lab: *axis }.functional(o)?;
    let mut out = Vec::with_capacity(grid.samples());
    liou.integrate(matrix_to_vec(rho0.matrix()), grid.dt_us, grid.steps(), grid.record_every, |_, y| {
        out.push(o.weight * c.dot(y));
    });
    Ok(out)
}

/// Ensemble-averaged free induction decay.
///
/// Each defect starts in `|0⟩⟨0|`, is rotated by [`FID_PULSE_ANGLE`] about the probe axis
/// (in its own frame), evolves without drive, and contributes `⟨S·n⟩` weighted by its
/// orientation weight. Partial sums are accumulated in ensemble order.
pub fn fid_signal(
    ensemble: &Ensemble,
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    settings: &FidSettings,
) -> Result<TrajectoryRecord> {
    ensure(!ensemble.is_empty(), || "ensemble must not be empty".into())?;
    ensure(!settings.probe_axes_lab.is_empty(), || "at least one probe axis is required".into())?;
    ensure(
        settings.probe_axes_lab.iter().all(|a| a.norm() > 0.0 && a.iter().all(|c| c.is_finite())),
        || "probe axes must be finite and non-zero".into(),
    )?;
    settings.grid.validate()?;
    let grid = settings.grid;
    let axes: Vec<Vector3<f64>> = settings.probe_axes_lab.iter().map(|a| a.normalize()).collect();
    let jobs: Vec<(&DefectOrientation, &Vector3<f64>)> = ensemble
        .orientations
        .iter()
        .flat_map(|o| axes.iter().map(move |a| (o, a)))
        .collect();

    let mut sum = vec![0.0; grid.samples()];
    for chunk in jobs.chunks(CHUNK) {
        let signals: Vec<Vec<f64>> = chunk
            .par_iter()
            .map(|(o, a)| single_fid(params, b_lab, o, a, &grid))
            .collect::<Result<_>>()?;
        for s in &signals {
            for (acc, v) in sum.iter_mut().zip(s) {
                *acc += v;
            }
        }
    }
    let w = ensemble.total_weight() * axes.len() as f64;
    sum.iter_mut().for_each(|v| *v /= w);
    Ok(TrajectoryRecord {
        times: grid.times(),
        signals: sum,
        observable: "spin".to_string(),
    })
}

/// Continuous-wave sweep settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwSettings {
    pub b_mw_mt: f64,
    pub drive_axis_lab: Vector3<f64>,
    pub settle_time_us: f64,
    pub avg_window_us: f64,
    pub dt_us: f64,
    pub beta_pl: f64,
}

impl Default for CwSettings {
    fn default() -> Self {
        Self {
            b_mw_mt: 0.1,
            drive_axis_lab: Vector3::y(),
            settle_time_us: 42.0,
            avg_window_us: 1.0,
            dt_us: 1.0e-5,
            beta_pl: 0.6,
        }
    }
}

/// Time-averaged PL proxy of one defect starting from `|0⟩⟨0|`.
fn averaged_pl(
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    o: &DefectOrientation,
    drive: &DriveParams,
    s: &CwSettings,
) -> Result<f64> {
    let liou = DefectLiouvillian::new(params, b_lab, o, Some(drive))?;
    check_step(s.dt_us, liou.f_max_mhz)?;
    let c = Observable::PlProxy { beta: s.beta_pl }.functional(o)?;
    let settle = (s.settle_time_us / s.dt_us).round() as usize;
    let total = settle + (s.avg_window_us / s.dt_us).round().max(1.0) as usize;
    let (mut acc, mut count) = (0.0, 0usize);
    liou.integrate(matrix_to_vec(DensityMatrix::ground().matrix()), s.dt_us, total, 1, |k, y| {
        if k > settle {
            acc += c.dot(y);
            count += 1;
        }
    });
    Ok(acc / count as f64)
}

fn ensemble_pl(
    ensemble: &Ensemble,
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    drive: &DriveParams,
    s: &CwSettings,
) -> Result<f64> {
    let per: Vec<f64> = ensemble
        .orientations
        .par_iter()
        .map(|o| averaged_pl(params, b_lab, o, drive, s).map(|v| o.weight * v))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / ensemble.total_weight())
}

/// Swept-frequency ODMR contrast `(PL_off − PL_on) / PL_off`.
pub fn cw_sweep(
    ensemble: &Ensemble,
    params: &SpinParams,
    b_lab: &Vector3<f64>,
    omega_grid_mhz: &[f64],
    settings: &CwSettings,
) -> Result<Spectrum> {
    ensure(!ensemble.is_empty(), || "ensemble must not be empty".into())?;
    ensure(!omega_grid_mhz.is_empty(), || "frequency grid must not be empty".into())?;
    ensure(omega_grid_mhz.windows(2).all(|w| w[1] > w[0]), || {
        "frequency grid must be strictly increasing".into()
    })?;
    params.validate()?;
    ensure(settings.settle_time_us >= 3.0 * params.t1_us, || {
        format!(
            "settle_time_us ({}) must be at least 3*T1 ({})",
            settings.settle_time_us,
            3.0 * params.t1_us
        )
    })?;
    ensure(settings.avg_window_us > 0.0, || "avg_window_us must be > 0".into())?;
    ensure(settings.dt_us > 0.0, || "dt_us must be > 0".into())?;

    let drive_at = |omega: f64, amplitude: f64| DriveParams {
        b_mw_mt: amplitude,
        omega_mhz: omega,
        axis_lab: settings.drive_axis_lab,
    };
    // Zero amplitude makes the drive term vanish exactly, so the reference shares the
    // integrator path with the driven runs; its frequency only sets the step guard.
    let top = *omega_grid_mhz.last().expect("non-empty grid");
    let pl_off = ensemble_pl(ensemble, params, b_lab, &drive_at(top, 0.0), settings)?;
    ensure(pl_off > 0.0, || "off-resonance PL proxy must be positive".into())?;
    let values = omega_grid_mhz
        .iter()
        .map(|&w| {
            let pl_on = ensemble_pl(ensemble, params, b_lab, &drive_at(w, settings.b_mw_mt), settings)?;
            Ok((pl_off - pl_on) / pl_off)
        })
        .collect::<Result<Vec<f64>>>()?;
    Spectrum::new(omega_grid_mhz.to_vec(), values, SpectrumKind::OdmrContrast, "cw-sweep")
}
