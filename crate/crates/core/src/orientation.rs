//! Polycrystalline orientation ensembles: Haar-random grains plus a Z-aligned excess.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`).
//! Uniform variates are formed as `(next_u64 >> 11) * 2^-53`, so an ensemble is
//! fully determined by its [`EnsembleSpec`] on every platform. The random grains
//! consume three variates each, in order; the aligned grains then consume one
//! variate each for their azimuth when [`AlignedAzimuth::Random`] is selected, or a
//! single shared offset with [`AlignedAzimuth::Stratified`].

use std::f64::consts::TAU;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Seeded source of uniform variates in `[0, 1)`.
pub struct OrientationRng(ChaCha20Rng);

impl OrientationRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Rotation taking lab-frame vectors into a defect's principal frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrientationRepr", into = "OrientationRepr")]
pub struct DefectOrientation {
    pub rotation: UnitQuaternion<f64>,
    pub weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrientationRepr {
    /// `[w, x, y, z]`
    quaternion: [f64; 4],
    weight: f64,
}

impl From<DefectOrientation> for OrientationRepr {
    fn from(o: DefectOrientation) -> Self {
        let q = o.rotation.quaternion();
        Self {
            quaternion: [q.w, q.i, q.j, q.k],
            weight: o.weight,
        }
    }
}

impl TryFrom<OrientationRepr> for DefectOrientation {
    type Error = String;

    fn try_from(r: OrientationRepr) -> std::result::Result<Self, String> {
        let [w, x, y, z] = r.quaternion;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(format!("quaternion norm {norm} is not 1"));
        }
        if !(r.weight.is_finite() && r.weight > 0.0) {
            return Err(format!("weight must be positive, got {}", r.weight));
        }
        Ok(Self {
            rotation: UnitQuaternion::new_unchecked(q),
            weight: r.weight,
        })
    }
}

impl DefectOrientation {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            weight: 1.0,
        }
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self { rotation, weight: 1.0 }
    }

    /// Defect quantization axis expressed in the lab frame.
    pub fn axis_in_lab(&self) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&Vector3::z())
    }
}

/// Rotates a lab-frame vector into the defect frame.
pub fn lab_to_defect(o: &DefectOrientation, v_lab: &Vector3<f64>) -> Vector3<f64> {
    o.rotation.transform_vector(v_lab)
}

/// Haar-uniform rotation from three uniform variates (uniform unit quaternion).
pub fn sample_uniform_rotation(rng: &mut OrientationRng) -> DefectOrientation {
    let u1 = rng.uniform();
    let u2 = rng.uniform();
    let u3 = rng.uniform();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
        b * (TAU * u3).cos(),
    );
    DefectOrientation::from_rotation(UnitQuaternion::new_normalize(q))
}

/// In-plane orientation of the E axis for Z-aligned grains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignedAzimuth {
    /// Identity rotation: defect x/y coincide with lab X/Y.
    Fixed,
    /// Independent uniform random rotation about lab Z.
    #[default]
    Random,
    /// Evenly spaced azimuths `2π(k + u)/n_aligned` with one uniform offset `u`. Each
    /// azimuth is still uniform, but the set has no low-order in-plane anisotropy.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_random: usize,
    pub n_aligned: usize,
    pub seed: u64,
    pub aligned_azimuth: AlignedAzimuth,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_random: 1000,
            n_aligned: 300,
            seed: 42,
            aligned_azimuth: AlignedAzimuth::Random,
        }
    }
}

impl EnsembleSpec {
    pub fn total(&self) -> usize {
        self.n_random + self.n_aligned
    }

    pub fn aligned_fraction(&self) -> f64 {
        self.n_aligned as f64 / self.total() as f64
    }
}

/// Immutable list of defect orientations with the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    pub orientations: Vec<DefectOrientation>,
}

impl Ensemble {
    /// Wraps an explicit orientation list (e.g. a single test defect).
    pub fn from_orientations(orientations: Vec<DefectOrientation>) -> Result<Self> {
        ensure(!orientations.is_empty(), || "ensemble must not be empty".into())?;
        let n = orientations.len();
        Ok(Self {
            spec: EnsembleSpec {
                n_random: 0,
                n_aligned: n,
                seed: 0,
                aligned_azimuth: AlignedAzimuth::Fixed,
            },
            orientations,
        })
    }

    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.orientations.iter().map(|o| o.weight).sum()
    }

    pub fn aligned_fraction(&self) -> f64 {
        self.spec.aligned_fraction()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)
            .map_err(|err| crate::Error::InvalidInput(format!("ensemble JSON: {err}")))?;
        ensure(!e.orientations.is_empty(), || "ensemble must not be empty".into())?;
        Ok(e)
    }
}

/// `n_random` Haar-random orientations followed by `n_aligned` Z-aligned ones.
pub fn build_ensemble(spec: &EnsembleSpec) -> Result<Ensemble> {
    ensure(spec.total() >= 1, || "ensemble needs at least one defect".into())?;
    let mut rng = OrientationRng::new(spec.seed);
    let mut orientations = Vec::with_capacity(spec.total());
    orientations.extend((0..spec.n_random).map(|_| sample_uniform_rotation(&mut rng)));
    let about_z = |phi: f64| DefectOrientation::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), phi));
    match spec.aligned_azimuth {
        AlignedAzimuth::Fixed => orientations.extend((0..spec.n_aligned).map(|_| DefectOrientation::identity())),
        AlignedAzimuth::Random => orientations.extend((0..spec.n_aligned).map(|_| about_z(TAU * rng.uniform()))),
        AlignedAzimuth::Stratified if spec.n_aligned > 0 => {
            let u = rng.uniform();
            let n = spec.n_aligned as f64;
            orientations.extend((0..spec.n_aligned).map(|k| about_z(TAU * (k as f64 + u) / n)));
        }
        AlignedAzimuth::Stratified => {}
    }
    Ok(Ensemble {
        spec: *spec,
        orientations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn axes(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = OrientationRng::new(seed);
        (0..n).map(|_| sample_uniform_rotation(&mut rng).axis_in_lab()).collect()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_uniform_rotation(&mut OrientationRng::new(7));
        let b = sample_uniform_rotation(&mut OrientationRng::new(7));
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.rotation.quaternion().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_axes() {
        let n = 100_000;
        let ax = axes(n, 2024);
        let mean: Vector3<f64> = ax.iter().sum::<Vector3<f64>>() / n as f64;
        assert!(mean.norm() < 3.0 / (n as f64).sqrt(), "mean {mean:?}");
        assert!(mean.norm() < 0.02);
        let cap = ax.iter().filter(|v| v.z > 0.5).count() as f64 / n as f64;
        assert!((cap - 0.25).abs() < 0.01, "cap fraction {cap}");

        // Kolmogorov–Smirnov distance of z components against U[-1, 1].
        let mut z: Vec<f64> = ax.iter().map(|v| v.z).collect();
        z.sort_by(f64::total_cmp);
        let ks = z
            .iter()
            .enumerate()
            .map(|(i, &zi)| {
                let cdf = (zi + 1.0) / 2.0;
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn aligned_only_ensemble() {
        let spec = EnsembleSpec {
            n_random: 0,
            n_aligned: 5,
            seed: 99,
            aligned_azimuth: AlignedAzimuth::Fixed,
        };
        let e = build_ensemble(&spec).unwrap();
        assert_eq!(e.len(), 5);
        assert!(e.orientations.iter().all(|o| *o == DefectOrientation::identity()));
    }

    #[test]
    fn default_ensemble_layout() {
        let e = build_ensemble(&EnsembleSpec::default()).unwrap();
        assert_eq!(e.len(), 1300);
        assert_abs_diff_eq!(e.aligned_fraction(), 300.0 / 1300.0);
        for o in &e.orientations[1000..] {
            assert_abs_diff_eq!(o.axis_in_lab().z, 1.0, epsilon = 1e-12);
        }
        assert_eq!(e, build_ensemble(&EnsembleSpec::default()).unwrap());

        let fixed = build_ensemble(&EnsembleSpec {
            aligned_azimuth: AlignedAzimuth::Fixed,
            ..EnsembleSpec::default()
        })
        .unwrap();
        assert!(fixed.orientations[1000..].iter().all(|o| *o == DefectOrientation::identity()));
        assert_eq!(fixed.orientations[..1000], e.orientations[..1000]);
    }

    #[test]
    fn stratified_azimuths_are_evenly_spaced() {
        let e = build_ensemble(&EnsembleSpec {
            n_random: 4,
            n_aligned: 12,
            seed: 5,
            aligned_azimuth: AlignedAzimuth::Stratified,
        })
        .unwrap();
        let phis: Vec<f64> = e.orientations[4..]
            .iter()
            .map(|o| {
                let x = o.rotation * Vector3::x();
                x.y.atan2(x.x).rem_euclid(TAU)
            })
            .collect();
        for w in phis.windows(2) {
            assert_abs_diff_eq!((w[1] - w[0]).rem_euclid(TAU), TAU / 12.0, epsilon = 1e-12);
        }
        // Second and fourth azimuthal moments vanish.
        for m in [2.0, 4.0] {
            let c: f64 = phis.iter().map(|p| (m * p).cos()).sum();
            let s: f64 = phis.iter().map(|p| (m * p).sin()).sum();
            assert!(c.hypot(s) < 1e-12);
        }
    }

    #[test]
    fn empty_ensemble_rejected() {
        let spec = EnsembleSpec {
            n_random: 0,
            n_aligned: 0,
            ..EnsembleSpec::default()
        };
        assert!(build_ensemble(&spec).is_err());
    }

    #[test]
    fn frame_transport() {
        let v = Vector3::new(0.0, 0.0, 3.2);
        assert_eq!(lab_to_defect(&DefectOrientation::identity(), &v), v);
        let flip = DefectOrientation::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI));
        let w = lab_to_defect(&flip, &Vector3::z());
        assert!((w - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let e = build_ensemble(&EnsembleSpec {
            n_random: 4,
            n_aligned: 2,
            seed: 3,
            aligned_azimuth: AlignedAzimuth::Random,
        })
        .unwrap();
        let back = Ensemble::from_json(&e.to_json()).unwrap();
        assert_eq!(back, e);
        assert!(Ensemble::from_json(r#"{"spec":{"n_random":0,"n_aligned":1,"seed":0},"orientations":[{"quaternion":[2,0,0,0],"weight":1}]}"#).is_err());
    }

    proptest! {
        #[test]
        fn rotation_is_isometry(seed in any::<u64>(), x in -10.0..10.0f64, y in -10.0..10.0f64, z in -10.0..10.0f64) {
            let o = sample_uniform_rotation(&mut OrientationRng::new(seed));
            let v = Vector3::new(x, y, z);
            prop_assert!((lab_to_defect(&o, &v).norm() - v.norm()).abs() < 1e-12);
            prop_assert!((o.rotation.quaternion().norm() - 1.0).abs() < 1e-12);
        }
    }
}
