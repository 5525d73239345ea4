//! Experiment harness: error metrics, the Case 1/1A sweep over `k`, the
//! Case 2/2A sweep over the prediction-input size `N`, and the diagnostics
//! comparing raw and anonymized training data.
//!
//! Every run is a pure function of the matrix and the config. Per-trial,
//! per-`k` and per-draw seeds come from [`seed::derive`]; parallel work is
//! collected in a fixed order before any floating-point reduction, so
//! repeated runs are bit-identical regardless of thread count.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anonymizer::{oka_anonymize, AnonymizedMatrix, AssignmentMap};
use crate::error::{Error, Result};
use crate::predictor::{FallbackLevel, ModelKind, PredictedRating, PredictionInput, TrainedModel};
use crate::ratings::{
    kfold_rating_split, round_half_up, sample_row, split_prediction_input, InputSize, Rating,
    RatingRow, RatingSplit, SparseRatingMatrix, SplitSpec,
};
use crate::seed;
use crate::similarity::{
    negative_pair_count, similarity_histogram, ItemSimilarityMatrix, PrototypeWeighting,
    SimilarityHistogram, DEFAULT_BINS,
};

/// Root-mean-square error over `(predicted, true)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let sq: f64 = pairs.iter().map(|&(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// Spread of the signed errors `pred - true`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpread {
    /// Population variance.
    pub variance: f64,
    pub mae: f64,
}

pub fn compute_e_var(pairs: &[(f64, f64)]) -> Result<ErrorSpread> {
    if pairs.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|&(p, t)| p - t).sum::<f64>() / n;
    let variance = pairs
        .iter()
        .map(|&(p, t)| {
            let d = p - t - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let mae = pairs.iter().map(|&(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(ErrorSpread { variance, mae })
}

/// Mean absolute shift between raw and anonymized item means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub e_avg: f64,
    pub compared: usize,
    /// Items skipped because a side has no mean.
    pub excluded: usize,
}

pub fn compute_e_avg(raw_means: &[Option<f64>], anon_means: &[Option<f64>]) -> Result<MeanShift> {
    if raw_means.len() != anon_means.len() {
        return Err(Error::InvalidConfig(format!(
            "mean vectors differ in length ({} vs {})",
            raw_means.len(),
            anon_means.len()
        )));
    }
    let mut sum = 0.0;
    let mut compared = 0;
    for (r, a) in raw_means.iter().zip(anon_means) {
        if let (Some(r), Some(a)) = (r, a) {
            sum += (r - a).abs();
            compared += 1;
        }
    }
    if compared == 0 {
        return Err(Error::NoComparableItems);
    }
    Ok(MeanShift {
        e_avg: sum / compared as f64,
        compared,
        excluded: raw_means.len() - compared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Case1,
    Case2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub models: Vec<ModelKind>,
    pub k_values: Vec<usize>,
    /// Prediction-input sizes `N` (Case 2).
    pub n_values: Vec<usize>,
    /// Independent splits (or folds when `folds` is set).
    pub trials: usize,
    /// Prediction-input draws per user and `N` (Case 2).
    pub draws: usize,
    pub holdout_fraction: f64,
    /// Share of each user's training ratings revealed to Case1A/UR.
    pub prediction_input_fraction: f64,
    /// Rotate through a fixed k-fold partition instead of drawing fresh
    /// random holdouts (Case 1 only).
    pub folds: Option<usize>,
    pub weighting: PrototypeWeighting,
    pub bins: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn case1(seed: u64) -> Self {
        ExperimentConfig {
            protocol: Protocol::Case1,
            models: vec![
                ModelKind::Case1Reg,
                ModelKind::Case1aUr,
                ModelKind::Case1aAi,
                ModelKind::Baseline,
            ],
            k_values: (2..=15).collect(),
            n_values: Vec::new(),
            trials: 20,
            draws: 1,
            holdout_fraction: 0.2,
            prediction_input_fraction: 0.2,
            folds: None,
            weighting: PrototypeWeighting::Multiplicity,
            bins: DEFAULT_BINS,
            seed,
        }
    }

    pub fn case2(seed: u64) -> Self {
        ExperimentConfig {
            protocol: Protocol::Case2,
            models: vec![ModelKind::Case2Ur, ModelKind::Case2aUr, ModelKind::Baseline],
            k_values: vec![2, 4, 10],
            n_values: (1..=20).collect(),
            trials: 1,
            draws: 20,
            holdout_fraction: 0.2,
            prediction_input_fraction: 0.2,
            folds: None,
            weighting: PrototypeWeighting::Multiplicity,
            bins: DEFAULT_BINS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.k_values.contains(&0) {
            return bad("k values must be at least 1");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidFraction(self.holdout_fraction));
        }
        if !(0.0..=1.0).contains(&self.prediction_input_fraction) {
            return Err(Error::InvalidFraction(self.prediction_input_fraction));
        }
        let allowed: &[ModelKind] = match self.protocol {
            Protocol::Case1 => &[
                ModelKind::Case1Reg,
                ModelKind::Case1aUr,
                ModelKind::Case1aAi,
                ModelKind::Baseline,
            ],
            Protocol::Case2 => &[ModelKind::Case2Ur, ModelKind::Case2aUr, ModelKind::Baseline],
        };
        if let Some(m) = self.models.iter().find(|m| !allowed.contains(m)) {
            return Err(Error::InvalidConfig(format!(
                "model {m} does not belong to protocol {:?}",
                self.protocol
            )));
        }
        if self.protocol == Protocol::Case2 {
            if self.n_values.is_empty() || self.n_values.contains(&0) {
                return bad("N values must be at least 1");
            }
            if self.draws == 0 {
                return bad("draws must be at least 1");
            }
        }
        if let Some(f) = self.folds {
            if f < 2 {
                return bad("folds must be at least 2");
            }
            if self.trials > f {
                return bad("trials cannot exceed folds");
            }
        }
        Ok(())
    }

    fn wants(&self, model: ModelKind) -> bool {
        self.models.contains(&model)
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        seed::derive(self.seed, seed::STREAM_TRIAL, trial as u64)
    }
}

/// One line of a result table. `k = 0` marks models trained on raw data;
/// `n = 0` marks Case 1 rows, which have no prediction-input size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: ModelKind,
    pub k: usize,
    pub n: usize,
    pub rmse: f64,
    pub rmse_sd: f64,
    pub fallback_rate: f64,
}

/// Split-hygiene counters gathered while an experiment runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HygieneReport {
    pub test_ratings_checked: usize,
    /// Test ratings present in a training matrix.
    pub leaked_into_training: usize,
    /// Test ratings a prototype cell could only have come from.
    pub leaked_into_anonymization: usize,
    /// Prediction inputs that overlapped the ratings scored against them.
    pub leaked_into_prediction_input: usize,
}

impl HygieneReport {
    pub fn is_clean(&self) -> bool {
        self.leaked_into_training == 0
            && self.leaked_into_anonymization == 0
            && self.leaked_into_prediction_input == 0
    }

    fn absorb(&mut self, other: HygieneReport) {
        self.test_ratings_checked += other.test_ratings_checked;
        self.leaked_into_training += other.leaked_into_training;
        self.leaked_into_anonymization += other.leaked_into_anonymization;
        self.leaked_into_prediction_input += other.leaked_into_prediction_input;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// Case 2: held-out users skipped per `N` (summed over trials).
    pub skipped_users: BTreeMap<usize, usize>,
    pub hygiene: HygieneReport,
    /// Seed used by each trial.
    pub trial_seeds: Vec<u64>,
}

impl ExperimentResult {
    pub fn get(&self, model: ModelKind, k: usize, n: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.k == k && r.n == n)
    }
}

/// Running totals of squared error and fallbacks for one result cell.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    sq: f64,
    count: usize,
    fallbacks: usize,
}

impl Tally {
    fn push(&mut self, p: PredictedRating, truth: f64) {
        let d = p.value - truth;
        self.sq += d * d;
        self.count += 1;
        if p.fallback_level != FallbackLevel::Full {
            self.fallbacks += 1;
        }
    }

    fn add(&mut self, o: &Tally) {
        self.sq += o.sq;
        self.count += o.count;
        self.fallbacks += o.fallbacks;
    }

    fn rmse(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.sq / self.count as f64).sqrt())
    }
}

/// Trial-level samples for one `(model, k, n)` cell.
#[derive(Debug, Default)]
struct CellSamples {
    rmses: Vec<f64>,
    fallbacks: usize,
    count: usize,
}

impl CellSamples {
    fn push(&mut self, t: &Tally) {
        if let Some(r) = t.rmse() {
            self.rmses.push(r);
        }
        self.fallbacks += t.fallbacks;
        self.count += t.count;
    }

    fn row(&self, model: ModelKind, k: usize, n: usize) -> Option<ResultRow> {
        if self.rmses.is_empty() {
            return None;
        }
        let c = self.rmses.len() as f64;
        let mean = self.rmses.iter().sum::<f64>() / c;
        let sd = if self.rmses.len() > 1 {
            (self.rmses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (c - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(ResultRow {
            model,
            k,
            n,
            rmse: mean,
            rmse_sd: sd,
            fallback_rate: if self.count == 0 {
                0.0
            } else {
                self.fallbacks as f64 / self.count as f64
            },
        })
    }
}

type CellKey = (ModelKind, usize, usize);

fn assemble(cells: BTreeMap<CellKey, CellSamples>) -> Vec<ResultRow> {
    cells
        .iter()
        .filter_map(|(&(model, k, n), s)| s.row(model, k, n))
        .collect()
}

/// Models fitted on one anonymization of a training split.
pub struct AnonymizedFit {
    pub k: usize,
    pub anon: Arc<AnonymizedMatrix>,
    pub sigma: Arc<AssignmentMap>,
    pub sims: Arc<ItemSimilarityMatrix>,
}

impl AnonymizedFit {
    pub fn new(train: &SparseRatingMatrix, k: usize, seed: u64, weighting: PrototypeWeighting) -> Result<Self> {
        let (anon, sigma) = oka_anonymize(train, k, seed)?;
        let sims = ItemSimilarityMatrix::from_anonymized(&anon, weighting);
        Ok(AnonymizedFit {
            k,
            anon: Arc::new(anon),
            sigma: Arc::new(sigma),
            sims: Arc::new(sims),
        })
    }

    pub fn model(&self, kind: ModelKind) -> Result<TrainedModel> {
        Ok(TrainedModel::new(
            kind,
            self.sims.clone(),
            None,
            Some(self.anon.clone()),
            self.anon.scale(),
        )?
        .with_assignment(self.sigma.clone()))
    }
}

/// Counts test ratings present in `train`.
fn training_leaks(train: &SparseRatingMatrix, test: &[Rating]) -> usize {
    test.iter()
        .filter(|r| train.get(r.user, r.item).is_some())
        .count()
}

/// Counts test ratings `(u, i)` whose anonymous identity carries a value at
/// `i` that the members' training ratings do not reproduce.
pub fn anonymization_leaks(
    train: &SparseRatingMatrix,
    anon: &AnonymizedMatrix,
    sigma: &AssignmentMap,
    test: &[Rating],
) -> usize {
    let members = sigma.members();
    test.iter()
        .filter(|r| {
            let a = sigma.anon_id(r.user).expect("test user outside σ");
            let Some(published) = anon.prototype(a).get(r.item) else {
                return false;
            };
            let vals: Vec<f64> = members[a]
                .iter()
                .filter_map(|&u| train.get(u, r.item))
                .collect();
            if vals.is_empty() {
                return true;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (mean - published).abs() > 1e-12 * published.abs().max(1.0)
        })
        .count()
}

fn case1_split(matrix: &SparseRatingMatrix, config: &ExperimentConfig, trial: usize) -> Result<RatingSplit> {
    let split_seed = seed::derive(config.trial_seed(trial), seed::STREAM_SPLIT, 0);
    match config.folds {
        Some(folds) => kfold_rating_split(matrix, folds, trial, seed::derive(config.seed, seed::STREAM_SPLIT, 0)),
        None => matrix.split_rating_holdout(&SplitSpec::rating_holdout(config.holdout_fraction, split_seed)?),
    }
}

/// Per-user revealed rows for Case1A/UR: a uniform share of each training row.
pub fn revealed_rows(train: &SparseRatingMatrix, fraction: f64, seed: u64) -> Vec<RatingRow> {
    train
        .rows()
        .iter()
        .enumerate()
        .map(|(u, row)| {
            let count = round_half_up(fraction * row.len() as f64);
            sample_row(row, count, seed::derive(seed, seed::STREAM_REVEAL, u as u64))
        })
        .collect()
}

struct Case1Trial {
    cells: BTreeMap<CellKey, Tally>,
    hygiene: HygieneReport,
}

fn run_case1_trial(matrix: &SparseRatingMatrix, config: &ExperimentConfig, trial: usize) -> Result<Case1Trial> {
    let trial_seed = config.trial_seed(trial);
    let split = case1_split(matrix, config, trial)?;
    let train = Arc::new(split.train);
    let test = split.test;
    let mut cells: BTreeMap<CellKey, Tally> = BTreeMap::new();
    let mut hygiene = HygieneReport {
        test_ratings_checked: test.len(),
        leaked_into_training: training_leaks(&train, &test),
        ..Default::default()
    };

    let reg = TrainedModel::fit_raw(ModelKind::Case1Reg, train.clone())?;
    for r in &test {
        if config.wants(ModelKind::Case1Reg) {
            let p = reg.predict(&PredictionInput::UserIdentity(r.user), r.item)?;
            cells.entry((ModelKind::Case1Reg, 0, 0)).or_default().push(p, r.value);
        }
        if config.wants(ModelKind::Baseline) {
            let p = crate::predictor::predict_baseline(&reg, r.item)?;
            cells.entry((ModelKind::Baseline, 0, 0)).or_default().push(p, r.value);
        }
    }

    let needs_anon = config.wants(ModelKind::Case1aAi) || config.wants(ModelKind::Case1aUr);
    if needs_anon {
        let revealed = revealed_rows(&train, config.prediction_input_fraction, trial_seed);
        type PerK = Result<(Vec<(CellKey, Tally)>, usize)>;
        let per_k: Vec<PerK> = config
            .k_values
            .par_iter()
            .map(|&k| {
                let fit = AnonymizedFit::new(
                    &train,
                    k,
                    seed::derive(trial_seed, seed::STREAM_ANONYMIZE, k as u64),
                    config.weighting,
                )?;
                let leaks = anonymization_leaks(&train, &fit.anon, &fit.sigma, &test);
                let mut out = Vec::new();
                if config.wants(ModelKind::Case1aAi) {
                    let model = fit.model(ModelKind::Case1aAi)?;
                    let mut t = Tally::default();
                    for r in &test {
                        let a = fit.sigma.anon_id(r.user).ok_or(Error::UnknownUser(r.user))?;
                        t.push(model.predict(&PredictionInput::AnonymousIdentity(a), r.item)?, r.value);
                    }
                    out.push(((ModelKind::Case1aAi, k, 0), t));
                }
                if config.wants(ModelKind::Case1aUr) {
                    let model = fit.model(ModelKind::Case1aUr)?;
                    let mut t = Tally::default();
                    for r in &test {
                        let input = PredictionInput::UserRatings(revealed[r.user].clone());
                        t.push(model.predict(&input, r.item)?, r.value);
                    }
                    out.push(((ModelKind::Case1aUr, k, 0), t));
                }
                Ok((out, leaks))
            })
            .collect();
        for res in per_k {
            let (out, leaks) = res?;
            hygiene.leaked_into_anonymization += leaks;
            for (key, t) in out {
                cells.entry(key).or_default().add(&t);
            }
        }
    }
    Ok(Case1Trial { cells, hygiene })
}

/// Case 1/1A: rating holdout, anonymize the training split for every `k`.
pub fn run_case1_experiment(matrix: &SparseRatingMatrix, config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.protocol != Protocol::Case1 {
        return Err(Error::InvalidConfig("expected a case1 config".into()));
    }
    config.validate()?;
    let trials: Vec<Result<Case1Trial>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_case1_trial(matrix, config, t))
        .collect();
    let mut cells: BTreeMap<CellKey, CellSamples> = BTreeMap::new();
    let mut hygiene = HygieneReport::default();
    for trial in trials {
        let trial = trial?;
        hygiene.absorb(trial.hygiene);
        for (key, t) in &trial.cells {
            cells.entry(*key).or_default().push(t);
        }
    }
    Ok(ExperimentResult {
        rows: assemble(cells),
        skipped_users: BTreeMap::new(),
        hygiene,
        trial_seeds: (0..config.trials).map(|t| config.trial_seed(t)).collect(),
    })
}

/// Seed for the prediction-input draw of one held-out user.
fn draw_seed(trial_seed: u64, user: usize, n: usize, draw: usize) -> u64 {
    let base = seed::derive(trial_seed, seed::STREAM_DRAW, user as u64);
    seed::derive(base, n as u64, draw as u64)
}

struct Case2Trial {
    /// `[slot][n_idx][draw]`
    tallies: Vec<Vec<Vec<Tally>>>,
    skipped: Vec<usize>,
    hygiene: HygieneReport,
}

fn run_case2_trial(
    matrix: &SparseRatingMatrix,
    config: &ExperimentConfig,
    slots: &[(ModelKind, usize)],
    trial: usize,
) -> Result<Case2Trial> {
    let trial_seed = config.trial_seed(trial);
    let spec = SplitSpec::user_holdout(
        config.holdout_fraction,
        seed::derive(trial_seed, seed::STREAM_SPLIT, 0),
    )?;
    let split = matrix.split_user_holdout(&spec)?;
    let train = Arc::new(split.train);

    let mut hygiene = HygieneReport::default();
    let overlap = split
        .test_users
        .iter()
        .filter(|(u, _)| split.train_users.binary_search(u).is_ok())
        .map(|(_, row)| row.len())
        .sum::<usize>();
    hygiene.leaked_into_training += overlap;
    hygiene.test_ratings_checked += split.test_users.iter().map(|(_, r)| r.len()).sum::<usize>();

    let raw = TrainedModel::fit_raw(ModelKind::Case2Ur, train.clone())?;
    let baseline = TrainedModel::new(
        ModelKind::Baseline,
        Arc::new(raw.similarities().clone()),
        Some(train.clone()),
        None,
        train.scale(),
    )?;
    let anon_ks: Vec<usize> = slots
        .iter()
        .filter(|(m, _)| *m == ModelKind::Case2aUr)
        .map(|&(_, k)| k)
        .collect();
    let fits: Vec<Result<AnonymizedFit>> = anon_ks
        .par_iter()
        .map(|&k| {
            AnonymizedFit::new(
                &train,
                k,
                seed::derive(trial_seed, seed::STREAM_ANONYMIZE, k as u64),
                config.weighting,
            )
        })
        .collect();
    let mut anon_models = BTreeMap::new();
    for fit in fits {
        let fit = fit?;
        anon_models.insert(fit.k, fit.model(ModelKind::Case2aUr)?);
    }
    let model_for = |slot: &(ModelKind, usize)| -> &TrainedModel {
        match slot.0 {
            ModelKind::Case2Ur => &raw,
            ModelKind::Baseline => &baseline,
            _ => &anon_models[&slot.1],
        }
    };

    let n_values = &config.n_values;
    let draws = config.draws;
    type UserOut = (Vec<Vec<Vec<Tally>>>, Vec<bool>, usize);
    let per_user: Vec<Result<UserOut>> = split
        .test_users
        .par_iter()
        .map(|(user, row)| {
            let mut tallies = vec![vec![vec![Tally::default(); draws]; n_values.len()]; slots.len()];
            let mut skipped = vec![false; n_values.len()];
            let mut overlaps = 0;
            for (ni, &n) in n_values.iter().enumerate() {
                if row.len() <= n {
                    skipped[ni] = true;
                    continue;
                }
                for d in 0..draws {
                    let (input, holdout) =
                        split_prediction_input(row, InputSize::Count(n), draw_seed(trial_seed, *user, n, d))?;
                    overlaps += input.items().filter(|&i| holdout.contains(i)).count();
                    let input = PredictionInput::UserRatings(input);
                    for (si, slot) in slots.iter().enumerate() {
                        let model = model_for(slot);
                        let t = &mut tallies[si][ni][d];
                        for (item, truth) in holdout.iter() {
                            t.push(model.predict(&input, item)?, truth);
                        }
                    }
                }
            }
            Ok((tallies, skipped, overlaps))
        })
        .collect();

    let mut tallies = vec![vec![vec![Tally::default(); draws]; n_values.len()]; slots.len()];
    let mut skipped = vec![0; n_values.len()];
    for res in per_user {
        let (user_tallies, user_skipped, overlaps) = res?;
        hygiene.leaked_into_prediction_input += overlaps;
        for (si, per_n) in user_tallies.iter().enumerate() {
            for (ni, per_d) in per_n.iter().enumerate() {
                for (d, t) in per_d.iter().enumerate() {
                    tallies[si][ni][d].add(t);
                }
            }
        }
        for (ni, s) in user_skipped.into_iter().enumerate() {
            skipped[ni] += s as usize;
        }
    }
    Ok(Case2Trial {
        tallies,
        skipped,
        hygiene,
    })
}

/// Case 2/2A: user holdout (cold start) with `N` revealed ratings per
/// held-out user, re-drawn `draws` times.
pub fn run_case2_experiment(matrix: &SparseRatingMatrix, config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.protocol != Protocol::Case2 {
        return Err(Error::InvalidConfig("expected a case2 config".into()));
    }
    config.validate()?;
    let mut slots: Vec<(ModelKind, usize)> = Vec::new();
    if config.wants(ModelKind::Case2Ur) {
        slots.push((ModelKind::Case2Ur, 0));
    }
    if config.wants(ModelKind::Case2aUr) {
        slots.extend(config.k_values.iter().map(|&k| (ModelKind::Case2aUr, k)));
    }
    if config.wants(ModelKind::Baseline) {
        slots.push((ModelKind::Baseline, 0));
    }

    let trials: Vec<Result<Case2Trial>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_case2_trial(matrix, config, &slots, t))
        .collect();

    let mut cells: BTreeMap<CellKey, CellSamples> = BTreeMap::new();
    let mut skipped_users = BTreeMap::new();
    let mut hygiene = HygieneReport::default();
    for trial in trials {
        let trial = trial?;
        hygiene.absorb(trial.hygiene);
        for (si, &(model, k)) in slots.iter().enumerate() {
            for (ni, &n) in config.n_values.iter().enumerate() {
                let cell = cells.entry((model, k, n)).or_default();
                for t in &trial.tallies[si][ni] {
                    cell.push(t);
                }
            }
        }
        for (ni, &n) in config.n_values.iter().enumerate() {
            *skipped_users.entry(n).or_insert(0) += trial.skipped[ni];
        }
    }
    Ok(ExperimentResult {
        rows: assemble(cells),
        skipped_users,
        hygiene,
        trial_seeds: (0..config.trials).map(|t| config.trial_seed(t)).collect(),
    })
}

/// Dispatches on `config.protocol`.
pub fn run_experiment(matrix: &SparseRatingMatrix, config: &ExperimentConfig) -> Result<ExperimentResult> {
    match config.protocol {
        Protocol::Case1 => run_case1_experiment(matrix, config),
        Protocol::Case2 => run_case2_experiment(matrix, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EVarRow {
    pub model: ModelKind,
    pub k: usize,
    pub spread: ErrorSpread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAnalysis {
    pub k: usize,
    pub mean_shift: MeanShift,
    pub histogram: SimilarityHistogram,
    pub negative_pairs: usize,
    pub defined_pairs: usize,
    /// Defined prototype cells over `n' * m`.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub raw_histogram: SimilarityHistogram,
    pub raw_negative_pairs: usize,
    pub raw_defined_pairs: usize,
    pub raw_sparsity: f64,
    pub per_k: Vec<KAnalysis>,
    pub e_var: Vec<EVarRow>,
}

impl AnalysisReport {
    pub fn at_k(&self, k: usize) -> Option<&KAnalysis> {
        self.per_k.iter().find(|a| a.k == k)
    }

    pub fn e_var_of(&self, model: ModelKind, k: usize) -> Option<ErrorSpread> {
        self.e_var
            .iter()
            .find(|r| r.model == model && r.k == k)
            .map(|r| r.spread)
    }
}

/// Mean shift, similarity histograms and error spread per `k`, on the first
/// Case 1 split of `config`.
pub fn run_analysis(matrix: &SparseRatingMatrix, config: &ExperimentConfig) -> Result<AnalysisReport> {
    if config.protocol != Protocol::Case1 {
        return Err(Error::InvalidConfig("analysis runs on the case1 protocol".into()));
    }
    config.validate()?;
    let trial_seed = config.trial_seed(0);
    let split = case1_split(matrix, config, 0)?;
    let train = Arc::new(split.train);
    let test = split.test;

    let reg = TrainedModel::fit_raw(ModelKind::Case1Reg, train.clone())?;
    let raw_sims = reg.similarities();
    let raw_histogram = similarity_histogram(raw_sims, config.bins);
    let raw_negative_pairs = negative_pair_count(raw_sims);
    let raw_defined_pairs = raw_histogram.total();

    let collect = |f: &dyn Fn(&Rating) -> Result<PredictedRating>| -> Result<Vec<(f64, f64)>> {
        test.iter().map(|r| Ok((f(r)?.value, r.value))).collect()
    };
    let reg_pairs = collect(&|r| reg.predict(&PredictionInput::UserIdentity(r.user), r.item))?;
    let base_pairs = collect(&|r| crate::predictor::predict_baseline(&reg, r.item))?;
    let reg_spread = compute_e_var(&reg_pairs)?;
    let base_spread = compute_e_var(&base_pairs)?;

    let revealed = revealed_rows(&train, config.prediction_input_fraction, trial_seed);
    let per_k: Vec<Result<(KAnalysis, Vec<EVarRow>)>> = config
        .k_values
        .par_iter()
        .map(|&k| {
            let fit = AnonymizedFit::new(
                &train,
                k,
                seed::derive(trial_seed, seed::STREAM_ANONYMIZE, k as u64),
                config.weighting,
            )?;
            let mean_shift = compute_e_avg(train.item_means().as_slice(), fit.sims.item_means())?;
            let histogram = similarity_histogram(&fit.sims, config.bins);
            let negative_pairs = negative_pair_count(&fit.sims);
            let defined_pairs = histogram.total();
            let ai = fit.model(ModelKind::Case1aAi)?;
            let ur = fit.model(ModelKind::Case1aUr)?;
            let ai_pairs = collect(&|r| {
                let a = fit.sigma.anon_id(r.user).ok_or(Error::UnknownUser(r.user))?;
                ai.predict(&PredictionInput::AnonymousIdentity(a), r.item)
            })?;
            let ur_pairs = collect(&|r| ur.predict(&PredictionInput::UserRatings(revealed[r.user].clone()), r.item))?;
            let rows = vec![
                EVarRow { model: ModelKind::Baseline, k, spread: base_spread },
                EVarRow { model: ModelKind::Case1Reg, k, spread: reg_spread },
                EVarRow { model: ModelKind::Case1aUr, k, spread: compute_e_var(&ur_pairs)? },
                EVarRow { model: ModelKind::Case1aAi, k, spread: compute_e_var(&ai_pairs)? },
            ];
            Ok((
                KAnalysis {
                    k,
                    mean_shift,
                    histogram,
                    negative_pairs,
                    defined_pairs,
                    density: fit.anon.density(),
                },
                rows,
            ))
        })
        .collect();
    let mut analyses = Vec::new();
    let mut e_var = Vec::new();
    for res in per_k {
        let (a, rows) = res?;
        analyses.push(a);
        e_var.extend(rows);
    }
    Ok(AnalysisReport {
        raw_histogram,
        raw_negative_pairs,
        raw_defined_pairs,
        raw_sparsity: train.sparsity()?,
        per_k: analyses,
        e_var,
    })
}
