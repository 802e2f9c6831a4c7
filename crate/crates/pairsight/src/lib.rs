//! Certification of high-dimensional spatial entanglement from
//! single-photon camera coincidence data.
//!
//! The pipeline mirrors a two-arm pair-source experiment: a double-Gaussian
//! source emits correlated photon pairs ([`spdc`]), a simulated event or
//! frame camera detects them ([`detector`], [`acquisition`]), coincidences
//! are extracted and histogrammed ([`coincidence`], [`hist`]), correlation
//! widths and conditional entropies are estimated ([`estimators`]), and the
//! EPR-Reid and entropic criteria deliver verdicts across coincidence
//! windows ([`certify`]). File formats, configuration and result emission
//! live in [`io`].

pub mod acquisition;
pub mod certify;
pub mod coincidence;
pub mod detector;
pub mod error;
pub mod estimators;
pub mod hist;
pub mod io;
pub mod model;
pub mod spdc;

pub use error::{Error, Result};
pub use model::{Arm, Basis, Calibration, CameraGeometry, CoincidencePair, Frame, PhotonEvent};
