//! Simulation and analysis of optically detected magnetic resonance in spin-1
//! boron-vacancy ensembles of polycrystalline hBN.
//!
//! * [`spin`]: spin-1 operators, the ground-state Hamiltonian and closed-form resonances.
//! * [`orientation`]: reproducible powder ensembles with a Z-aligned excess.
//! * [`dynamics`]: RK4 integration of the Lindblad master equation, FID and CW sweeps.
//! * [`spectrum`], [`fit`]: FFT spectra, line fitting, splittings and contrast.
//! * [`metrics`]: sensitivity, PL saturation and ZFS thermometry.
//! * [`simulate`]: the forward-model registry (`fid`, `cw`) and spectral features.
//! * [`inversion`]: calibration tables and field inversion.

pub mod dynamics;
pub mod error;
pub mod fit;
pub mod inversion;
pub mod lm;
pub mod metrics;
pub mod orientation;
pub mod registry;
pub mod simulate;
pub mod spectrum;
pub mod spin;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
