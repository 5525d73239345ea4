//! Item-based rating prediction for every training/prediction-input
//! combination.
//!
//! All personalized models share one formula,
//!
//! ```text
//! pred(i) = mean_i + sum_{l in I} s_il (r_l - mean_l) / sum_{l in I} |s_il|
//! ```
//!
//! and differ only in where the similarities/means come from (raw or
//! anonymized training data) and which row supplies `I` and `r_l`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anonymizer::{AnonymizedMatrix, AssignmentMap};
use crate::error::{Error, Result};
use crate::ratings::{RatingRow, RatingScale, SparseRatingMatrix};
use crate::similarity::{ItemSimilarityMatrix, SimilaritySource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "Case1/REG")]
    Case1Reg,
    #[serde(rename = "Case1A/UR")]
    Case1aUr,
    #[serde(rename = "Case1A/AI")]
    Case1aAi,
    #[serde(rename = "Case2/UR")]
    Case2Ur,
    #[serde(rename = "Case2A/UR")]
    Case2aUr,
    #[serde(rename = "BASELINE")]
    Baseline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Case1Reg,
        ModelKind::Case1aUr,
        ModelKind::Case1aAi,
        ModelKind::Case2Ur,
        ModelKind::Case2aUr,
        ModelKind::Baseline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Case1Reg => "Case1/REG",
            ModelKind::Case1aUr => "Case1A/UR",
            ModelKind::Case1aAi => "Case1A/AI",
            ModelKind::Case2Ur => "Case2/UR",
            ModelKind::Case2aUr => "Case2A/UR",
            ModelKind::Baseline => "BASELINE",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match norm.as_str() {
            "case1reg" => ModelKind::Case1Reg,
            "case1aur" => ModelKind::Case1aUr,
            "case1aai" => ModelKind::Case1aAi,
            "case2ur" => ModelKind::Case2Ur,
            "case2aur" => ModelKind::Case2aUr,
            "baseline" => ModelKind::Baseline,
            _ => return None,
        })
    }

    /// Trains on anonymized ratings.
    pub fn is_anonymized(&self) -> bool {
        matches!(
            self,
            ModelKind::Case1aUr | ModelKind::Case1aAi | ModelKind::Case2aUr
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the requesting user hands to the recommender.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionInput {
    UserIdentity(usize),
    UserRatings(RatingRow),
    AnonymousIdentity(usize),
    Empty,
}

impl PredictionInput {
    pub fn kind_str(&self) -> &'static str {
        match self {
            PredictionInput::UserIdentity(_) => "user identity",
            PredictionInput::UserRatings(_) => "user ratings",
            PredictionInput::AnonymousIdentity(_) => "anonymous identity",
            PredictionInput::Empty => "empty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackLevel {
    Full,
    ItemMean,
    GlobalMean,
}

impl FallbackLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FallbackLevel::Full => "full",
            FallbackLevel::ItemMean => "item-mean",
            FallbackLevel::GlobalMean => "global-mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedRating {
    pub value: f64,
    pub fallback_level: FallbackLevel,
}

/// Weighted-deviation prediction for `target` from a revealed row.
///
/// Items in `input_row` without a defined mean are ignored. Falls back to the
/// target's mean when nothing informative remains, and to the mean of item
/// means when the target itself was never rated. The result is clamped to
/// `scale`.
pub fn predict_with_ratings(
    sims: &ItemSimilarityMatrix,
    scale: RatingScale,
    input_row: &RatingRow,
    target: usize,
) -> Result<PredictedRating> {
    let m = sims.n_items();
    if target >= m {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: target,
            size: m,
        });
    }
    let Some(target_mean) = sims.item_mean(target) else {
        let value = sims.global_mean().unwrap_or_else(|| scale.midpoint());
        return Ok(PredictedRating {
            value: scale.clamp(value),
            fallback_level: FallbackLevel::GlobalMean,
        });
    };
    let weights = sims.row(target);
    let means = sims.item_means();
    let mut num = 0.0;
    let mut den = 0.0;
    for (item, r) in input_row.iter() {
        if item >= m {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                size: m,
            });
        }
        if let Some(mean) = means[item] {
            let s = weights[item];
            num += s * (r - mean);
            den += s.abs();
        }
    }
    if den > 0.0 {
        Ok(PredictedRating {
            value: scale.clamp(target_mean + num / den),
            fallback_level: FallbackLevel::Full,
        })
    } else {
        Ok(PredictedRating {
            value: scale.clamp(target_mean),
            fallback_level: FallbackLevel::ItemMean,
        })
    }
}

/// A fitted recommender for one row of the model table.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    kind: ModelKind,
    sims: Arc<ItemSimilarityMatrix>,
    train: Option<Arc<SparseRatingMatrix>>,
    anon: Option<Arc<AnonymizedMatrix>>,
    sigma: Option<Arc<AssignmentMap>>,
    scale: RatingScale,
}

impl TrainedModel {
    /// Checks that `kind` has what it needs: a training matrix for
    /// Case1/REG, an anonymized matrix for Case1A/AI, and similarities whose
    /// source matches the training input.
    pub fn new(
        kind: ModelKind,
        sims: Arc<ItemSimilarityMatrix>,
        train: Option<Arc<SparseRatingMatrix>>,
        anon: Option<Arc<AnonymizedMatrix>>,
        scale: RatingScale,
    ) -> Result<Self> {
        let name = kind.as_str();
        if kind != ModelKind::Baseline {
            let expected = if kind.is_anonymized() {
                SimilaritySource::Anonymized
            } else {
                SimilaritySource::Raw
            };
            if sims.source() != expected {
                return Err(Error::SimilaritySourceMismatch {
                    model: name,
                    expected: expected.as_str(),
                });
            }
        }
        match kind {
            ModelKind::Case1Reg if train.is_none() => return Err(Error::MissingTrainingMatrix(name)),
            ModelKind::Case1aAi if anon.is_none() => return Err(Error::MissingAnonymizedMatrix(name)),
            _ => {}
        }
        Ok(TrainedModel {
            kind,
            sims,
            train,
            anon,
            sigma: None,
            scale,
        })
    }

    /// Fits a model directly from raw training ratings.
    pub fn fit_raw(kind: ModelKind, train: Arc<SparseRatingMatrix>) -> Result<Self> {
        let sims = Arc::new(ItemSimilarityMatrix::from_ratings(&train));
        let scale = train.scale();
        Self::new(kind, sims, Some(train), None, scale)
    }

    /// Attaches `σ` so that a user identity can be resolved to its
    /// anonymous identity (Case1A/AI only; the collector must supply it).
    pub fn with_assignment(mut self, sigma: Arc<AssignmentMap>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn similarities(&self) -> &ItemSimilarityMatrix {
        &self.sims
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn predict(&self, input: &PredictionInput, target: usize) -> Result<PredictedRating> {
        let mismatch = || Error::InputMismatch {
            model: self.kind.as_str(),
            input: input.kind_str(),
        };
        match (self.kind, input) {
            (ModelKind::Baseline, _) => predict_baseline(self, target),
            (ModelKind::Case1Reg, PredictionInput::UserIdentity(u)) => {
                predict_case1_reg(self, *u, target)
            }
            (ModelKind::Case1aAi, PredictionInput::AnonymousIdentity(a)) => {
                predict_case1a_ai(self, *a, target)
            }
            (ModelKind::Case1aAi, PredictionInput::UserIdentity(u)) => {
                let sigma = self
                    .sigma
                    .as_ref()
                    .ok_or(Error::MissingAssignmentMap(self.kind.as_str()))?;
                let a = sigma.anon_id(*u).ok_or(Error::UnknownUser(*u))?;
                predict_case1a_ai(self, a, target)
            }
            (
                ModelKind::Case1aUr | ModelKind::Case2Ur | ModelKind::Case2aUr,
                PredictionInput::UserRatings(row),
            ) => {
                for (_, v) in row.iter() {
                    self.scale.check(v)?;
                }
                predict_with_ratings(&self.sims, self.scale, row, target)
            }
            _ => Err(mismatch()),
        }
    }
}

/// Case1/REG: personalize with the user's own training row.
pub fn predict_case1_reg(model: &TrainedModel, user: usize, target: usize) -> Result<PredictedRating> {
    let train = model
        .train
        .as_ref()
        .ok_or(Error::MissingTrainingMatrix(model.kind.as_str()))?;
    if user >= train.n_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            size: train.n_users(),
        });
    }
    predict_with_ratings(&model.sims, model.scale, train.row(user), target)
}

/// Case1A/AI: personalize with the prototype row of anonymous identity `anon_id`.
pub fn predict_case1a_ai(model: &TrainedModel, anon_id: usize, target: usize) -> Result<PredictedRating> {
    let anon = model
        .anon
        .as_ref()
        .ok_or(Error::MissingAnonymizedMatrix(model.kind.as_str()))?;
    if anon_id >= anon.n_prototypes() {
        return Err(Error::IndexOutOfRange {
            what: "anonymous identity",
            index: anon_id,
            size: anon.n_prototypes(),
        });
    }
    predict_with_ratings(&model.sims, model.scale, anon.prototype(anon_id), target)
}

/// BASELINE: the item mean, whoever asks.
pub fn predict_baseline(model: &TrainedModel, target: usize) -> Result<PredictedRating> {
    predict_with_ratings(&model.sims, model.scale, &RatingRow::new(), target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymizer::oka_anonymize;
    use crate::ratings::fixtures::t4x3;
    use crate::ratings::{Rating, RatingScale};
    use crate::similarity::PrototypeWeighting;

    fn row(pairs: &[(usize, f64)]) -> RatingRow {
        RatingRow::from_pairs(pairs.to_vec()).unwrap()
    }

    #[test]
    fn empty_input_is_item_mean() {
        let sims = ItemSimilarityMatrix::from_ratings(&t4x3());
        let p = predict_with_ratings(&sims, RatingScale::MOVIELENS, &RatingRow::new(), 1).unwrap();
        assert_eq!(p.value, 3.0);
        assert_eq!(p.fallback_level, FallbackLevel::ItemMean);
    }

    #[test]
    fn toy_fresh_user_target_i3() {
        let sims = ItemSimilarityMatrix::from_ratings(&t4x3());
        assert!(sims.get(2, 0) < 0.0);
        let p = predict_with_ratings(&sims, RatingScale::MOVIELENS, &row(&[(0, 5.0)]), 2).unwrap();
        assert!((p.value - 2.0).abs() < 1e-12);
        assert_eq!(p.fallback_level, FallbackLevel::Full);
    }

    #[test]
    fn single_unit_similarity_shifts_by_deviation() {
        // items 0 and 1 identical over three raters: s_01 = 1
        let t: Vec<Rating> = [(0, 1.0), (1, 2.0), (2, 4.0)]
            .iter()
            .flat_map(|&(u, v)| [Rating::new(u, 0, v), Rating::new(u, 1, v)])
            .collect();
        let m = SparseRatingMatrix::build(&t, 3, 2, RatingScale::MOVIELENS).unwrap();
        let sims = ItemSimilarityMatrix::from_ratings(&m);
        assert!((sims.get(0, 1) - 1.0).abs() < 1e-12);
        let mean1 = sims.item_mean(1).unwrap();
        let p = predict_with_ratings(&sims, RatingScale::MOVIELENS, &row(&[(1, mean1 + 0.5)]), 0).unwrap();
        assert!((p.value - (sims.item_mean(0).unwrap() + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn unrated_target_uses_global_mean() {
        let t = [Rating::new(0, 0, 2.0), Rating::new(1, 0, 4.0), Rating::new(0, 1, 5.0)];
        let m = SparseRatingMatrix::build(&t, 2, 3, RatingScale::MOVIELENS).unwrap();
        let sims = ItemSimilarityMatrix::from_ratings(&m);
        let p = predict_with_ratings(&sims, RatingScale::MOVIELENS, &row(&[(0, 2.0)]), 2).unwrap();
        assert_eq!(p.fallback_level, FallbackLevel::GlobalMean);
        assert_eq!(p.value, 4.0);
    }

    #[test]
    fn out_of_range_target() {
        let sims = ItemSimilarityMatrix::from_ratings(&t4x3());
        assert!(matches!(
            predict_with_ratings(&sims, RatingScale::MOVIELENS, &RatingRow::new(), 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn case1_reg_uses_training_row() {
        let train = Arc::new(t4x3());
        let model = TrainedModel::fit_raw(ModelKind::Case1Reg, train.clone()).unwrap();
        let direct = predict_with_ratings(model.similarities(), model.scale(), train.row(2), 0).unwrap();
        let via = model.predict(&PredictionInput::UserIdentity(2), 0).unwrap();
        assert_eq!(direct, via);
        assert!(model.predict(&PredictionInput::Empty, 0).is_err());
    }

    #[test]
    fn case1_reg_empty_row_falls_back() {
        let t = [Rating::new(0, 0, 2.0), Rating::new(1, 0, 4.0)];
        let train = Arc::new(SparseRatingMatrix::build(&t, 3, 1, RatingScale::MOVIELENS).unwrap());
        let model = TrainedModel::fit_raw(ModelKind::Case1Reg, train).unwrap();
        let p = predict_case1_reg(&model, 2, 0).unwrap();
        assert_eq!(p.fallback_level, FallbackLevel::ItemMean);
        assert_eq!(p.value, 3.0);
    }

    #[test]
    fn baseline_ignores_requester() {
        let train = Arc::new(t4x3());
        let model = TrainedModel::fit_raw(ModelKind::Baseline, train).unwrap();
        let a = model.predict(&PredictionInput::UserIdentity(0), 1).unwrap();
        let b = model.predict(&PredictionInput::Empty, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value, 3.0);
    }

    #[test]
    fn case1a_ai_k1_matches_case1_reg() {
        let train = Arc::new(t4x3());
        let (anon, sigma) = oka_anonymize(&train, 1, 0).unwrap();
        let anon = Arc::new(anon);
        let sims = Arc::new(ItemSimilarityMatrix::from_anonymized(&anon, PrototypeWeighting::Multiplicity));
        let ai = TrainedModel::new(ModelKind::Case1aAi, sims, None, Some(anon), train.scale())
            .unwrap()
            .with_assignment(Arc::new(sigma));
        let reg = TrainedModel::fit_raw(ModelKind::Case1Reg, train).unwrap();
        for u in 0..4 {
            for i in 0..3 {
                let a = ai.predict(&PredictionInput::UserIdentity(u), i).unwrap();
                let r = reg.predict(&PredictionInput::UserIdentity(u), i).unwrap();
                assert!((a.value - r.value).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn case1a_ai_without_anon_rejected() {
        let train = t4x3();
        let (anon, _) = oka_anonymize(&train, 2, 0).unwrap();
        let sims = Arc::new(ItemSimilarityMatrix::from_anonymized(&anon, PrototypeWeighting::Multiplicity));
        assert_eq!(
            TrainedModel::new(ModelKind::Case1aAi, sims.clone(), None, None, train.scale()).unwrap_err(),
            Error::MissingAnonymizedMatrix("Case1A/AI")
        );
        let ai = TrainedModel::new(ModelKind::Case1aAi, sims, None, Some(Arc::new(anon)), train.scale()).unwrap();
        assert_eq!(
            ai.predict(&PredictionInput::UserIdentity(0), 0).unwrap_err(),
            Error::MissingAssignmentMap("Case1A/AI")
        );
    }

    #[test]
    fn source_mismatch_rejected() {
        let train = Arc::new(t4x3());
        assert!(matches!(
            TrainedModel::fit_raw(ModelKind::Case2aUr, train),
            Err(Error::SimilaritySourceMismatch { .. })
        ));
    }

    #[test]
    fn model_names_parse() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(ModelKind::parse("case1a-ai"), Some(ModelKind::Case1aAi));
        assert_eq!(ModelKind::parse("nope"), None);
    }
}
