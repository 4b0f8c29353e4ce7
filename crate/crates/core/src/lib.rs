//! Simulation and design library for Kerr-nonlinear photonic resonators whose
//! radiation loss depends on frequency, and therefore on the intracavity
//! photon number. Such resonators support *n-photon bound states in the
//! continuum*: photon numbers at which the loss rate vanishes, so that an
//! injected coherent state relaxes into a Fock state (or, with residual
//! background loss, into strongly number-squeezed light).
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! coupling  ->  dynamics  ->  observables / pinem
//!    ^             ^
//!    +-- design ---+   (detuning and loss-curve rules)
//! ```
//!
//! * [`fockspace`] — density matrices on a truncated Fock basis.
//! * [`coupling`] — incoupling functions `K_c(omega)` and loss functions
//!   `K_l(omega)` related by a Kramers-Kronig integral.
//! * [`dynamics`] — master-equation evolution with the photon-number-dependent
//!   dissipator, a diagonal fast path, and a moment-closure path for
//!   macroscopic photon numbers.
//! * [`observables`] — photon statistics, squeezing, `g2(0)`, Husimi `Q`.
//! * [`design`] — stable photon number, detuning solver, regime classifier.
//! * [`pinem`] — electron energy-gain/loss spectra of a free electron probing
//!   the cavity state.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`];
//! concrete `f64` aliases are exported at the crate root.

pub mod coupling;
pub mod design;
pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod linalg;
pub mod observables;
pub mod pinem;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use scalar::{Real, C};

/// Concrete `f64` aliases, the precision used by the CLI and acceptance runs.
pub type DensityMatrix64 = fockspace::DensityMatrix<f64>;
pub type CouplingModel64 = coupling::CouplingModel<f64>;
pub type FrequencyGrid64 = coupling::FrequencyGrid<f64>;
pub type SimulationConfig64 = dynamics::SimulationConfig<f64>;
pub type DriveEnvelope64 = dynamics::DriveEnvelope<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type DesignPoint64 = design::DesignPoint<f64>;
pub type PinemSpectrum64 = pinem::PinemSpectrum<f64>;
pub type HusimiGrid64 = observables::HusimiGrid<f64>;
