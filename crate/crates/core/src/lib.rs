//! Linear (Gaussian) optomechanics under passive coherent feedback.
//!
//! * [`model`] assembles delay-type Langevin models for the bare system and
//!   for feedback through an auxiliary cavity or mirror.
//! * [`spectral`] computes transfer matrices, spectra, phonon numbers and
//!   stability verdicts.
//! * [`effective`] holds the closed-form sideband-resolved mapping.
//! * [`entanglement`] runs the pulsed photon-phonon entanglement protocol.
//! * [`optimize`] provides bounded multi-start Nelder–Mead and sweeps.

pub mod constants;
pub mod effective;
pub mod entanglement;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod params;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{build_bare_om, build_cavity_feedback, build_mirror_feedback, ChannelKind, LinearDelayModel, NoiseChannel, Scheme};
pub use params::{bath_occupation, coupling_from_photons, AuxCavityParams, AuxMirrorParams, OmParams, PathParams};
pub use spectral::{phonon_occupation, stability_check, transfer_matrix, StabilityReport};
