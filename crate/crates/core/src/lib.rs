//! Calibration audits for binary predictors.
//!
//! * [`dataset`]: weighted samples in prediction or logit space, file I/O.
//! * [`proper_loss`]: proper losses with their conjugate duals.
//! * [`lipschitz`]: exact solvers for optimization over Lipschitz functions.
//! * [`metrics`]: smooth calibration error, post-processing gap and their
//!   dual and family-relative forms.
//! * [`harness`]: tight examples, randomized verification, synthetic data.
//! * [`srm`]: model selection with a calibration guarantee.
//!
//! ```
//! use calaudit::dataset::{Space, WeightedSample};
//! use calaudit::metrics::{post_processing_gap, smooth_calibration_error};
//!
//! let s = WeightedSample::uniform(&[(0.3, 0), (0.7, 1)], Space::Prediction)?;
//! let smce = smooth_calibration_error(&s)?.value;
//! let pgap = post_processing_gap(&s)?.value;
//! assert!(smce * smce <= pgap && pgap <= 2.0 * smce);
//! # Ok::<(), calaudit::Error>(())
//! ```

// `!(a <= b)` comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod harness;
pub mod lipschitz;
pub mod metrics;
pub mod proper_loss;
pub mod srm;

pub use error::{Error, Result};
