//! Closed-form examples, randomized checks of the bounds between calibration
//! error and post-processing gap, and the logistic-regression experiment.

mod figure2;
mod tight;
mod verify;

pub use figure2::{
    figure2_distribution, fit_logistic_1d, LogisticFit, LOGISTIC_GRADIENT_TOLERANCE,
};
pub use tight::{
    check_instance, compute_metric, extreme_predictions_example, tight_example, Expectation,
    ExpectationCheck, NamedInstance, Relation, TightExample, EXACT_TOLERANCE, SMCE_OF_SIGMOID,
};
pub use verify::{
    random_logit_sample, random_logit_sample_exact, random_prediction_sample, random_test_family,
    verify_all, InequalityResult, VerificationReport, VerifyConfig, DEFAULT_SEED, EPSILON_GRID,
    SLACK_TOLERANCE,
};
