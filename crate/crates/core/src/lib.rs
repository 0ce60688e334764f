//! Numerical laboratory for stable-driven SDEs with distributional (Besov) drifts.
//!
//! The crate is organised bottom-up:
//!
//! - [`params`]: admissibility of the noise/drift indices, the parabolic gain
//!   `θ`, the gap to singularity `γ` and the singularity weight `𝔏`.
//! - [`stable_density`]: the exact stable kernel `p_α` (Fourier inversion plus
//!   tail series), the closed-form comparator `p̄_α` and validators for the
//!   kernel estimates.
//! - [`besov`]: thermic Besov norms on sampled fields, duality and product-rule
//!   validators, regularity detection.
//! - [`drift`]: synthetic drifts of prescribed Besov regularity, mollification
//!   and the weak-dynamics functional `𝔅`.
//! - [`sim`]: stable sampling, Euler paths for the mollified SDE and kernel
//!   density estimation.
//! - [`parametrix`]: Picard solver for the Duhamel equation of the mollified
//!   density and its gradient, with normalised diagnostics.
//! - [`verify`]: measured-constant reports for the heat kernel bounds and the
//!   stabilisation of those constants along the mollification sequence.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and always produces results in index order.

// `!(x > 0.0)` is the idiom for rejecting NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod drift;
pub mod error;
pub mod exec;
pub mod fft;
pub mod grid;
pub mod io;
pub mod params;
pub mod parametrix;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod special;
pub mod stable_density;
pub mod verify;

pub use error::{LabError, Result};
pub use exec::Exec;
pub use params::{BesovIndices, Index, SpectralDensity, StableParams};
