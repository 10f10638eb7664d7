//! Full-band downlink CSI recovery from sparse and non-uniform pilot samples.
//!
//! Uniform pilot subsampling folds the beam-delay profile of a channel with
//! period `M_f = N_f / D_RS`. Zero-insertion upsampling unwraps that fold back
//! onto the original delay positions, so a beam-delay bandpass mask recovers
//! the channel whenever the folded copies stay isolated. The mask is built
//! from the alias-free uplink channel, which shares its multipath support with
//! the downlink.
//!
//! Modules:
//! - [`channel`]: paired UL/DL channel synthesis, estimation noise, angle-domain
//!   augmentation.
//! - [`dataset`]: the little-endian binary dataset format.
//! - [`transforms`]: unitary domain transforms, zero insertion, the aliasing
//!   fold and the trimmed-DFT sensing operator.
//! - [`pilots`]: uniform and non-uniform pilot patterns and sampling.
//! - [`antialias`]: linear interpolation, UL / oracle masks and masked upsampling.
//! - [`ista`]: ISTA with the reciprocity-assist blend.
//! - [`metrics`] and [`bench`]: NMSE, RMS delay spread, clustering, the
//!   Monte-Carlo harness and report export.

pub mod antialias;
pub mod bench;
pub mod channel;
pub mod config;
pub mod dataset;
mod error;
pub mod ista;
pub mod matrix;
pub mod metrics;
pub mod pilots;
pub mod seed;
pub mod transforms;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use matrix::{CsiMatrix, Domain, C64};
