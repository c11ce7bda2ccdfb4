//! Mixed-effects regression, cross-validation and significance testing.

mod correlation;
mod cv;
mod lme;
mod permutation;
mod table;

pub use correlation::{pearson, pearson_with_ci, CorrelationEstimate};
pub use cv::{
    combination, compare_models, compare_pair, cross_validate, make_folds, sem, CombinationKey,
    ComparisonResult, CvOptions, CvPlan, CvResult, ModelGains, ModelSpec, PairedComparison, BOTH,
};
pub use lme::{
    fit_lme, fit_lme_with, heldout_loglik, profiled_loglik, LmeFit, LmeOptions, ProfiledPoint,
    RandomEffectsMode,
};
pub use permutation::{bonferroni, paired_permutation_test, MAX_EXACT_PAIRS};
pub use table::PredictorTable;

pub use crate::freq::unigram_surprisal;

/// Baseline covariate column names.
pub mod columns {
    pub const WORD_LENGTH: &str = "word_length";
    pub const WORD_POSITION: &str = "word_position";
    pub const UNIGRAM_SURPRISAL: &str = "unigram_surprisal";
    pub const PREV_WORD_FIXATED: &str = "prev_word_fixated";
}
