//! Word predictability from cloze responses and language-model distributions,
//! and its evaluation against reading times with random-intercept
//! mixed-effects regression.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`]: stimuli, cloze responses, reading times and filtering.
//! * [`cloze`]: smoothed cloze probabilities and predictor transforms.
//! * [`lmcore`]: token vocabularies, distributions, providers and dump formats.
//! * [`manip`]: resolution matching, cluster and frequency manipulations,
//!   similarity-adjusted probabilities.
//! * [`stats`]: mixed-effects fitting, cross-validation, permutation tests.

pub mod cloze;
pub mod corpus;
pub mod error;
pub mod freq;
pub mod lmcore;
pub mod manip;
pub mod stats;

pub use error::{Error, Result};
