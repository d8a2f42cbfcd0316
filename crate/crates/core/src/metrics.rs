//! Scalar figures of merit: shot-noise-limited field sensitivity, PL saturation and the
//! lattice-driven temperature shift of the axial zero-field splitting.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::spin::BOHR_MHZ_PER_MT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    /// Line-profile factor (≈ 0.7 for a Gaussian line).
    pub p_f: f64,
    pub linewidth_mhz: f64,
    /// Fractional contrast in (0, 1].
    pub contrast: f64,
    /// Photon count rate in s⁻¹.
    pub count_rate_hz: f64,
}

impl SensitivityInputs {
    pub fn validate(&self) -> Result<()> {
        ensure(self.p_f.is_finite() && self.p_f > 0.0, || format!("p_f must be > 0, got {}", self.p_f))?;
        ensure(self.linewidth_mhz.is_finite() && self.linewidth_mhz > 0.0, || {
            format!("linewidth must be > 0, got {}", self.linewidth_mhz)
        })?;
        ensure(self.contrast > 0.0 && self.contrast <= 1.0, || {
            format!("contrast must be in (0, 1], got {}", self.contrast)
        })?;
        ensure(self.count_rate_hz.is_finite() && self.count_rate_hz > 0.0, || {
            format!("count rate must be > 0, got {}", self.count_rate_hz)
        })
    }
}

/// `η = P_F · h/(g μ_B) · Δν / (C √R)` in µT/√Hz.
pub fn sensitivity(inp: &SensitivityInputs, g_factor: f64) -> Result<f64> {
    inp.validate()?;
    ensure(g_factor.is_finite() && g_factor > 0.0, || format!("g must be > 0, got {g_factor}"))?;
    // MHz / (MHz/mT) = mT; ×1000 → µT.
    let gamma = g_factor * BOHR_MHZ_PER_MT;
    Ok(inp.p_f * inp.linewidth_mhz / gamma / (inp.contrast * inp.count_rate_hz.sqrt()) * 1e3)
}

/// `I = I_sat / (1 + P_sat / P)`.
pub fn saturation_intensity(i_sat: f64, p_sat: f64, p: f64) -> Result<f64> {
    ensure(i_sat > 0.0 && p_sat > 0.0, || "i_sat and p_sat must be > 0".into())?;
    ensure(p > 0.0, || format!("excitation power must be > 0, got {p}"))?;
    Ok(i_sat / (1.0 + p_sat / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeRow {
    pub temperature_k: f64,
    pub a_angstrom: f64,
    pub c_angstrom: f64,
}

/// Lattice constants versus temperature, strictly increasing in temperature and covering 300 K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeTable {
    rows: Vec<LatticeRow>,
}

pub const REFERENCE_TEMPERATURE_K: f64 = 300.0;

impl LatticeTable {
    pub fn new(rows: Vec<LatticeRow>) -> Result<Self> {
        ensure(!rows.is_empty(), || "lattice table is empty".into())?;
        ensure(rows.windows(2).all(|w| w[1].temperature_k > w[0].temperature_k), || {
            "lattice temperatures must be strictly increasing".into()
        })?;
        ensure(
            rows.iter()
                .all(|r| r.temperature_k.is_finite() && r.a_angstrom > 0.0 && r.c_angstrom > 0.0),
            || "lattice parameters must be positive and finite".into(),
        )?;
        let t = Self { rows };
        ensure(t.covers(REFERENCE_TEMPERATURE_K), || {
            "lattice table must contain or bracket 300 K".into()
        })?;
        Ok(t)
    }

    pub fn rows(&self) -> &[LatticeRow] {
        &self.rows
    }

    fn covers(&self, t: f64) -> bool {
        t >= self.rows[0].temperature_k && t <= self.rows[self.rows.len() - 1].temperature_k
    }

    /// Linearly interpolated `(a, c)` at `t`; no extrapolation.
    pub fn at(&self, t_kelvin: f64) -> Result<(f64, f64)> {
        if !t_kelvin.is_finite() || !self.covers(t_kelvin) {
            return Err(Error::OutOfRange(format!(
                "{t_kelvin} K is outside the lattice table [{}, {}] K",
                self.rows[0].temperature_k,
                self.rows[self.rows.len() - 1].temperature_k
            )));
        }
        let k = self.rows.partition_point(|r| r.temperature_k < t_kelvin);
        let hi = &self.rows[k];
        if hi.temperature_k == t_kelvin || k == 0 {
            return Ok((hi.a_angstrom, hi.c_angstrom));
        }
        let lo = &self.rows[k - 1];
        let s = (t_kelvin - lo.temperature_k) / (hi.temperature_k - lo.temperature_k);
        Ok((
            lo.a_angstrom + s * (hi.a_angstrom - lo.a_angstrom),
            lo.c_angstrom + s * (hi.c_angstrom - lo.c_angstrom),
        ))
    }

    /// Relative lattice strains `(η_a, η_c)` against 300 K.
    pub fn strains(&self, t_kelvin: f64) -> Result<(f64, f64)> {
        let (a, c) = self.at(t_kelvin)?;
        let (a0, c0) = self.at(REFERENCE_TEMPERATURE_K)?;
        Ok(((a - a0) / a0, (c - c0) / c0))
    }
}

/// Strain coupling coefficients in GHz and D(300 K)/h in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermometryParams {
    pub theta_a_ghz: f64,
    /// Also accepted as `theta_b_ghz`.
    #[serde(alias = "theta_b_ghz")]
    pub theta_c_ghz: f64,
    pub d300_mhz: f64,
}

/// Published uncertainties on the coupling coefficients, GHz.
pub const THETA_A_UNCERTAINTY_GHZ: f64 = 12.0;
pub const THETA_C_UNCERTAINTY_GHZ: f64 = 0.8;

impl Default for ThermometryParams {
    fn default() -> Self {
        Self {
            theta_a_ghz: -81.0,
            theta_c_ghz: -24.5,
            d300_mhz: 3480.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZfsShift {
    pub eta_a: f64,
    pub eta_c: f64,
    pub delta_d_mhz: f64,
    pub d_mhz: f64,
}

/// `ΔD/h = θ_a η_a + θ_c η_c` and `D(T)/h = D(300 K)/h + ΔD/h`.
pub fn zfs_shift(params: &ThermometryParams, table: &LatticeTable, t_kelvin: f64) -> Result<ZfsShift> {
    let (eta_a, eta_c) = table.strains(t_kelvin)?;
    let delta_d_mhz = 1e3 * (params.theta_a_ghz * eta_a + params.theta_c_ghz * eta_c);
    Ok(ZfsShift {
        eta_a,
        eta_c,
        delta_d_mhz,
        d_mhz: params.d300_mhz + delta_d_mhz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn published_inputs() -> SensitivityInputs {
        SensitivityInputs {
            p_f: 0.7,
            linewidth_mhz: 110.0,
            contrast: 0.019,
            count_rate_hz: 516_000.0,
        }
    }

    #[test]
    fn reported_sensitivity() {
        let eta = sensitivity(&published_inputs(), 2.0).unwrap();
        assert!((eta - 200.0).abs() / 200.0 < 0.02, "eta = {eta}");
        assert_abs_diff_eq!(eta, 201.5, epsilon = 0.1);
    }

    #[test]
    fn sensitivity_unit_spot_value() {
        // 1 MHz linewidth, unit contrast, 1 s⁻¹, g = 1: 1/13.996 mT.
        let inp = SensitivityInputs {
            p_f: 1.0,
            linewidth_mhz: 1.0,
            contrast: 1.0,
            count_rate_hz: 1.0,
        };
        assert_abs_diff_eq!(sensitivity(&inp, 1.0).unwrap(), 1e3 / BOHR_MHZ_PER_MT, epsilon = 1e-9);
    }

    #[test]
    fn sensitivity_scalings() {
        let base = sensitivity(&published_inputs(), 2.0).unwrap();
        let c2 = SensitivityInputs {
            contrast: 0.038,
            ..published_inputs()
        };
        assert_abs_diff_eq!(sensitivity(&c2, 2.0).unwrap(), base / 2.0, epsilon = 1e-12);
        let r4 = SensitivityInputs {
            count_rate_hz: 4.0 * 516_000.0,
            ..published_inputs()
        };
        assert_abs_diff_eq!(sensitivity(&r4, 2.0).unwrap(), base / 2.0, epsilon = 1e-12);
        for bad in [
            SensitivityInputs { contrast: 0.0, ..published_inputs() },
            SensitivityInputs { count_rate_hz: 0.0, ..published_inputs() },
            SensitivityInputs { contrast: -0.1, ..published_inputs() },
        ] {
            assert!(sensitivity(&bad, 2.0).is_err());
        }
    }

    #[test]
    fn saturation_curve() {
        assert_abs_diff_eq!(saturation_intensity(10.0, 3.0, 3.0).unwrap(), 5.0);
        let far = saturation_intensity(10.0, 3.0, 3e6).unwrap();
        assert!((far - 10.0).abs() / 10.0 < 1e-5);
        let low = saturation_intensity(10.0, 3.0, 0.03).unwrap();
        let linear = 10.0 * 0.03 / 3.0;
        assert!((low - linear).abs() / linear < 0.01);
        assert!(saturation_intensity(10.0, 3.0, 0.0).is_err());
    }

    fn synthetic_table(eta_a: f64, eta_c: f64) -> LatticeTable {
        let (a0, c0) = (2.504, 6.661);
        LatticeTable::new(vec![
            LatticeRow { temperature_k: 20.0, a_angstrom: a0 * (1.0 + eta_a), c_angstrom: c0 * (1.0 + eta_c) },
            LatticeRow { temperature_k: 300.0, a_angstrom: a0, c_angstrom: c0 },
            LatticeRow { temperature_k: 320.0, a_angstrom: a0 * (1.0 - 0.1 * eta_a), c_angstrom: c0 * (1.0 - 0.1 * eta_c) },
        ])
        .unwrap()
    }

    #[test]
    fn thermometry_spot_value() {
        let t = synthetic_table(-1e-3, -2e-3);
        let p = ThermometryParams::default();
        let z = zfs_shift(&p, &t, 20.0).unwrap();
        assert_abs_diff_eq!(z.eta_a, -1e-3, epsilon = 1e-12);
        assert_abs_diff_eq!(z.eta_c, -2e-3, epsilon = 1e-12);
        assert_abs_diff_eq!(z.delta_d_mhz, 130.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z.d_mhz, 3610.0, epsilon = 1e-9);
        let z300 = zfs_shift(&p, &t, 300.0).unwrap();
        assert_eq!(z300.delta_d_mhz, 0.0);
        assert_eq!(z300.d_mhz, p.d300_mhz);
        // Halfway between rows interpolates linearly.
        let mid = zfs_shift(&p, &t, 160.0).unwrap();
        assert_abs_diff_eq!(mid.delta_d_mhz, 65.0, epsilon = 1e-6);
    }

    #[test]
    fn thermometry_range_and_table_checks() {
        let t = synthetic_table(-1e-3, -2e-3);
        assert!(matches!(zfs_shift(&ThermometryParams::default(), &t, 10.0), Err(Error::OutOfRange(_))));
        assert!(matches!(zfs_shift(&ThermometryParams::default(), &t, 400.0), Err(Error::OutOfRange(_))));
        let row = |t: f64| LatticeRow { temperature_k: t, a_angstrom: 2.5, c_angstrom: 6.6 };
        assert!(LatticeTable::new(vec![row(20.0), row(100.0)]).is_err());
        assert!(LatticeTable::new(vec![row(300.0), row(20.0)]).is_err());
        // A bracketing pair is enough to define the reference.
        assert!(LatticeTable::new(vec![row(20.0), row(310.0)]).is_ok());
    }

    #[test]
    fn theta_b_alias() {
        let p: ThermometryParams = serde_json::from_str(r#"{"theta_a_ghz":-81,"theta_b_ghz":-24.5,"d300_mhz":3480}"#).unwrap();
        assert_eq!(p.theta_c_ghz, -24.5);
    }

    proptest! {
        #[test]
        fn shift_is_linear_in_strain(ea in -5e-3..5e-3f64, ec in -5e-3..5e-3f64, alpha in -3.0..3.0f64) {
            let p = ThermometryParams::default();
            let one = zfs_shift(&p, &synthetic_table(ea, ec), 20.0).unwrap();
            let scaled = zfs_shift(&p, &synthetic_table(alpha * ea, alpha * ec), 20.0).unwrap();
            prop_assert!((scaled.delta_d_mhz - alpha * one.delta_d_mhz).abs() < 1e-10 * (1.0 + one.delta_d_mhz.abs()));
            prop_assert_eq!(zfs_shift(&p, &synthetic_table(ea, ec), 300.0).unwrap().delta_d_mhz, 0.0);
        }

        #[test]
        fn saturation_monotone_and_bounded(i in 0.1..100.0f64, ps in 0.1..100.0f64, p in 0.01..1e4f64) {
            let a = saturation_intensity(i, ps, p).unwrap();
            let b = saturation_intensity(i, ps, p * 1.01).unwrap();
            prop_assert!(b > a);
            prop_assert!(a < i);
        }

        #[test]
        fn sensitivity_is_linear_in_linewidth(k in 0.1..10.0f64) {
            let base = sensitivity(&published_inputs(), 2.0).unwrap();
            let scaled = sensitivity(&SensitivityInputs { linewidth_mhz: 110.0 * k, ..published_inputs() }, 2.0).unwrap();
            prop_assert!((scaled - k * base).abs() < 1e-9 * base * k);
        }
    }
}
