//! Spin-1 operator algebra and the ground-state Hamiltonian of a boron-vacancy defect.
//!
//! Units are fixed throughout the crate: energies are linear frequencies in MHz
//! (energy / h), times in microseconds and magnetic fields in millitesla. A
//! Hamiltonian entry of `f` MHz therefore drives a phase `exp(-i 2π f t)` for `t`
//! in µs; the factor 2π is applied only inside [`crate::dynamics`].
//!
//! Matrices use the m_s basis ordering `(+1, 0, -1)`, so `S_z = diag(1, 0, -1)`.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Bohr magneton over Planck constant, MHz per mT (CODATA).
pub const BOHR_MHZ_PER_MT: f64 = 13.996_244_936_1;

/// Basis index of m_s = +1.
pub const MS_PLUS: usize = 0;
/// Basis index of m_s = 0.
pub const MS_ZERO: usize = 1;
/// Basis index of m_s = -1.
pub const MS_MINUS: usize = 2;

pub type CMatrix3 = Matrix3<Complex64>;

/// Defect constants. Frequencies are D/h and E/h in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinParams {
    pub d_mhz: f64,
    pub e_mhz: f64,
    pub g_factor: f64,
    pub t1_us: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            d_mhz: 3480.0,
            e_mhz: 60.0,
            g_factor: 2.0,
            t1_us: 14.0,
        }
    }
}

impl SpinParams {
    pub fn new(d_mhz: f64, e_mhz: f64, g_factor: f64, t1_us: f64) -> Result<Self> {
        let p = Self {
            d_mhz,
            e_mhz,
            g_factor,
            t1_us,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.d_mhz.is_finite() && self.d_mhz > 0.0, || {
            format!("d_mhz must be > 0, got {}", self.d_mhz)
        })?;
        ensure(self.e_mhz.is_finite() && self.e_mhz >= 0.0, || {
            format!("e_mhz must be >= 0, got {}", self.e_mhz)
        })?;
        ensure(self.e_mhz < self.d_mhz, || {
            format!("e_mhz ({}) must be < d_mhz ({})", self.e_mhz, self.d_mhz)
        })?;
        ensure(self.g_factor.is_finite() && self.g_factor > 0.0, || {
            format!("g_factor must be > 0, got {}", self.g_factor)
        })?;
        ensure(self.t1_us.is_finite() && self.t1_us > 0.0, || {
            format!("t1_us must be > 0, got {}", self.t1_us)
        })
    }

    /// Gyromagnetic ratio g·μ_B/h in MHz/mT.
    pub fn gamma_mhz_per_mt(&self) -> f64 {
        self.g_factor * BOHR_MHZ_PER_MT
    }

    /// Relaxation rate Γ = 1/T1 in µs⁻¹.
    pub fn gamma_relax_per_us(&self) -> f64 {
        1.0 / self.t1_us
    }
}

/// Spin-1 matrices in the `(+1, 0, -1)` basis.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub sx: CMatrix3,
    pub sy: CMatrix3,
    pub sz: CMatrix3,
    pub identity: CMatrix3,
}

impl SpinOperators {
    fn build() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        let re = |x: f64| Complex64::new(x, 0.0);
        let im = |x: f64| Complex64::new(0.0, x);
        let sx = Matrix3::new(z, re(r), z, re(r), z, re(r), z, re(r), z);
        let sy = Matrix3::new(z, im(-r), z, im(r), z, im(-r), z, im(r), z);
        let sz = Matrix3::new(re(1.0), z, z, z, z, z, z, z, re(-1.0));
        Self {
            sx,
            sy,
            sz,
            identity: Matrix3::identity(),
        }
    }

    /// `S·n` for a real 3-vector `n`.
    pub fn along(&self, n: &Vector3<f64>) -> CMatrix3 {
        self.sx * Complex64::from(n.x) + self.sy * Complex64::from(n.y) + self.sz * Complex64::from(n.z)
    }
}

/// Shared spin-1 operator set.
pub fn spin_ops() -> &'static SpinOperators {
    static OPS: OnceLock<SpinOperators> = OnceLock::new();
    OPS.get_or_init(SpinOperators::build)
}

/// Hermitian Hamiltonian in MHz, expressed in the defect principal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian(pub CMatrix3);

impl Hamiltonian {
    pub fn matrix(&self) -> &CMatrix3 {
        &self.0
    }

    /// Largest absolute deviation from Hermiticity, in MHz.
    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues (descending, MHz) and the matching orthonormal eigenvectors as columns.
    pub fn eigen(&self) -> Result<(Vector3<f64>, CMatrix3)> {
        let eig = self
            .0
            .try_symmetric_eigen(1e-14, 10_000)
            .ok_or_else(|| Error::Internal("3x3 Hermitian diagonalization failed".into()))?;
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = Vector3::new(
            eig.eigenvalues[order[0]],
            eig.eigenvalues[order[1]],
            eig.eigenvalues[order[2]],
        );
        let vectors = CMatrix3::from_columns(&[
            eig.eigenvectors.column(order[0]).into_owned(),
            eig.eigenvectors.column(order[1]).into_owned(),
            eig.eigenvectors.column(order[2]).into_owned(),
        ]);
        Ok((values, vectors))
    }
}

/// `H = D S_z² + E (S_x² − S_y²) + γ S·B`, with `b_defect` in mT in the defect frame.
pub fn build_hamiltonian(params: &SpinParams, b_defect: &Vector3<f64>) -> Result<Hamiltonian> {
    ensure(b_defect.iter().all(|c| c.is_finite()), || {
        format!("field components must be finite, got {b_defect:?}")
    })?;
    let ops = spin_ops();
    let sx2 = ops.sx * ops.sx;
    let sy2 = ops.sy * ops.sy;
    let sz2 = ops.sz * ops.sz;
    let h = sz2 * Complex64::from(params.d_mhz)
        + (sx2 - sy2) * Complex64::from(params.e_mhz)
        + ops.along(b_defect) * Complex64::from(params.gamma_mhz_per_mt());
    Ok(Hamiltonian(h))
}

/// Real eigenvalues of `h` in MHz, descending.
pub fn eigenfrequencies(h: &Hamiltonian) -> Result<[f64; 3]> {
    let (values, _) = h.eigen()?;
    Ok([values[0], values[1], values[2]])
}

/// Closed-form resonances `D ± sqrt(E² + (γ B_z)²)` for a field along the defect axis.
pub fn analytic_resonances_z(params: &SpinParams, b_z_mt: f64) -> Result<(f64, f64)> {
    ensure(b_z_mt.is_finite(), || format!("b_z must be finite, got {b_z_mt}"))?;
    let zeeman = params.gamma_mhz_per_mt() * b_z_mt;
    let half = params.e_mhz.hypot(zeeman);
    Ok((params.d_mhz + half, params.d_mhz - half))
}

/// Rounding margin on the 1/3 overlap threshold.
const AMBIGUITY_MARGIN: f64 = 1e-9;

/// Transition frequencies out of the bright (most m_s = 0-like) eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    pub high_mhz: f64,
    pub low_mhz: f64,
    /// `|<0|bright>|²`.
    pub bright_overlap: f64,
}

impl Transitions {
    pub fn splitting_mhz(&self) -> f64 {
        self.high_mhz - self.low_mhz
    }
}

/// Energy gaps from the bright eigenstate to the other two eigenstates, descending.
///
/// Fails with [`Error::AmbiguousBrightState`] when no eigenstate has more than
/// one third of its weight on m_s = 0.
pub fn transition_frequencies(h: &Hamiltonian) -> Result<Transitions> {
    let (values, vectors) = h.eigen()?;
    let overlaps: Vec<f64> = (0..3).map(|k| vectors[(MS_ZERO, k)].norm_sqr()).collect();
    let (bright, &best) = overlaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("three eigenstates");
    if best <= 1.0 / 3.0 + AMBIGUITY_MARGIN {
        return Err(Error::AmbiguousBrightState { max_overlap: best });
    }
    let mut gaps: Vec<f64> = (0..3)
        .filter(|&k| k != bright)
        .map(|k| values[k] - values[bright])
        .collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    Ok(Transitions {
        high_mhz: gaps[0],
        low_mhz: gaps[1],
        bright_overlap: best,
    })
}
