//! Data-driven reduced-order models on spectral submanifolds.
//!
//! The crate learns, from trajectory data, a low-dimensional invariant
//! manifold chart, the extended normal form of the dynamics on it, and
//! closed-form forced-response predictions. An equation-driven solver for the
//! same objects ([`oracle`]) validates the data-driven path on synthetic
//! systems ([`synth`]).

pub mod error;
pub mod poly;
pub mod trajectory;
pub mod linalg;
pub mod lm;
pub mod geometry;
pub mod synth;
pub mod normal_form;
pub mod forced;
pub mod oracle;
pub mod pipeline;

pub use error::{Error, Result};
