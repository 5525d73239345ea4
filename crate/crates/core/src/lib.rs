//! k-anonymized rating matrices and item-based collaborative filtering.
//!
//! A collector anonymizes a sparse user-item rating matrix by clustering
//! users into groups of at least `k` ([`anonymizer`]). A recommender then
//! builds item-item Pearson similarities from raw or anonymized ratings
//! ([`similarity`]) and predicts ratings from whatever the user chooses to
//! disclose ([`predictor`]). [`evaluation`] runs the holdout experiments and
//! diagnostics; [`io`] reads MovieLens data and persists every artifact.

pub mod anonymizer;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod predictor;
pub mod ratings;
pub mod seed;
pub mod similarity;

pub use anonymizer::{
    audit_k_anonymity, build_prototype, oka_anonymize, residual_anonymity, AnonymityAudit,
    AnonymizedMatrix, AssignmentMap, ResidualAnonymity,
};
pub use error::{Error, Result};
pub use evaluation::{
    compute_e_avg, compute_e_var, rmse, run_analysis, run_case1_experiment, run_case2_experiment,
    AnalysisReport, ExperimentConfig, ExperimentResult, Protocol, ResultRow,
};
pub use predictor::{
    predict_baseline, predict_case1_reg, predict_case1a_ai, predict_with_ratings, FallbackLevel,
    ModelKind, PredictedRating, PredictionInput, TrainedModel,
};
pub use ratings::{
    split_prediction_input, Dataset, InputSize, ItemStats, Rating, RatingRow, RatingScale,
    SparseRatingMatrix, SplitKind, SplitSpec,
};
pub use similarity::{
    similarity_histogram, ItemSimilarityMatrix, PrototypeWeighting, SimilarityHistogram,
    SimilaritySource,
};
