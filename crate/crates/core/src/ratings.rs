//! Sparse, missing-aware rating matrices and the holdout protocols used by
//! the experiment harness.
//!
//! Users and items are dense 0-based indices. External identifiers (for
//! example MovieLens ids) are mapped onto them by [`Dataset`].

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Closed interval of admissible rating values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub lo: f64,
    pub hi: f64,
}

impl RatingScale {
    pub const MOVIELENS: RatingScale = RatingScale { lo: 1.0, hi: 5.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidScale { lo, hi });
        }
        Ok(RatingScale { lo, hi })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo && value <= self.hi
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lo, self.hi)
    }

    pub fn check(&self, value: f64) -> Result<()> {
        if self.contains(value) {
            Ok(())
        } else {
            Err(Error::RatingOutOfScale {
                value,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale::MOVIELENS
    }
}

/// One observed rating `(user, item, value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Rating { user, item, value }
    }
}

/// A sparse rating row: `(item, value)` pairs sorted by item, no duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingRow {
    entries: Vec<(usize, f64)>,
}

impl RatingRow {
    pub fn new() -> Self {
        RatingRow::default()
    }

    /// Builds a row from unordered pairs, rejecting repeated items.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(item, _)| item);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateEntry {
                user: 0,
                item: w[0].0,
            });
        }
        Ok(RatingRow { entries: pairs })
    }

    /// Caller guarantees `entries` is sorted by item without duplicates.
    pub(crate) fn from_sorted(entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        RatingRow { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item: usize) -> Option<f64> {
        self.entries
            .binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|pos| self.entries[pos].1)
    }

    pub fn contains(&self, item: usize) -> bool {
        self.get(item).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Entries with item index strictly greater than `item`.
    pub fn after(&self, item: usize) -> &[(usize, f64)] {
        let start = self.entries.partition_point(|&(i, _)| i <= item);
        &self.entries[start..]
    }

    pub fn max_item(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i)
    }

    /// Keeps the entries at the given positions (ascending).
    fn select(&self, positions: &[usize]) -> RatingRow {
        RatingRow::from_sorted(positions.iter().map(|&p| self.entries[p]).collect())
    }

    /// Splits into `(selected, rest)` by position membership.
    fn partition(&self, positions: &[usize]) -> (RatingRow, RatingRow) {
        let mut chosen = vec![false; self.entries.len()];
        for &p in positions {
            chosen[p] = true;
        }
        let mut selected = Vec::with_capacity(positions.len());
        let mut rest = Vec::with_capacity(self.entries.len() - positions.len());
        for (entry, keep) in self.entries.iter().zip(chosen) {
            if keep {
                selected.push(*entry);
            } else {
                rest.push(*entry);
            }
        }
        (RatingRow::from_sorted(selected), RatingRow::from_sorted(rest))
    }
}

impl FromIterator<(usize, f64)> for RatingRow {
    /// Panics on repeated items; use [`RatingRow::from_pairs`] for fallible input.
    fn from_iter<T: IntoIterator<Item = (usize, f64)>>(iter: T) -> Self {
        RatingRow::from_pairs(iter.into_iter().collect()).expect("duplicate item in rating row")
    }
}

/// Per-item rater set and mean rating.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemStats {
    pub item: usize,
    pub raters: Vec<usize>,
    pub mean: Option<f64>,
}

/// Immutable `n x m` sparse rating matrix with a declared rating scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatingMatrix {
    n: usize,
    m: usize,
    scale: RatingScale,
    rows: Vec<RatingRow>,
    columns: Vec<Vec<(usize, f64)>>,
    nnz: usize,
}

impl SparseRatingMatrix {
    /// Validates `ratings` against the shape and scale and builds the matrix.
    pub fn build(ratings: &[Rating], n: usize, m: usize, scale: RatingScale) -> Result<Self> {
        let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for r in ratings {
            if r.user >= n {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: r.user,
                    size: n,
                });
            }
            if r.item >= m {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: r.item,
                    size: m,
                });
            }
            scale.check(r.value)?;
            per_user[r.user].push((r.item, r.value));
        }
        let mut rows = Vec::with_capacity(n);
        for (user, pairs) in per_user.into_iter().enumerate() {
            let row = RatingRow::from_pairs(pairs).map_err(|e| match e {
                Error::DuplicateEntry { item, .. } => Error::DuplicateEntry { user, item },
                other => other,
            })?;
            rows.push(row);
        }
        Ok(Self::assemble(rows, m, scale))
    }

    /// Builds from rows already known to be valid for `m` and `scale`.
    pub fn from_rows(rows: Vec<RatingRow>, m: usize, scale: RatingScale) -> Result<Self> {
        for row in &rows {
            if let Some(max) = row.max_item() {
                if max >= m {
                    return Err(Error::IndexOutOfRange {
                        what: "item",
                        index: max,
                        size: m,
                    });
                }
            }
            for (_, v) in row.iter() {
                scale.check(v)?;
            }
        }
        Ok(Self::assemble(rows, m, scale))
    }

    fn assemble(rows: Vec<RatingRow>, m: usize, scale: RatingScale) -> Self {
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut nnz = 0;
        for (user, row) in rows.iter().enumerate() {
            nnz += row.len();
            for (item, value) in row.iter() {
                columns[item].push((user, value));
            }
        }
        SparseRatingMatrix {
            n: rows.len(),
            m,
            scale,
            rows,
            columns,
            nnz,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n
    }

    pub fn n_items(&self) -> usize {
        self.m
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    /// `|Ω|`, the number of observed ratings.
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn row(&self, user: usize) -> &RatingRow {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[RatingRow] {
        &self.rows
    }

    /// `(user, value)` pairs for the raters of `item`, sorted by user.
    pub fn column(&self, item: usize) -> &[(usize, f64)] {
        &self.columns[item]
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        self.rows.get(user).and_then(|r| r.get(item))
    }

    /// All observed ratings in user-major, item-minor order.
    pub fn entries(&self) -> impl Iterator<Item = Rating> + '_ {
        self.rows.iter().enumerate().flat_map(|(user, row)| {
            row.iter()
                .map(move |(item, value)| Rating { user, item, value })
        })
    }

    pub fn item_stats(&self, item: usize) -> Result<ItemStats> {
        if item >= self.m {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                size: self.m,
            });
        }
        let col = &self.columns[item];
        let raters = col.iter().map(|&(u, _)| u).collect();
        let mean = column_mean(col);
        Ok(ItemStats { item, raters, mean })
    }

    /// `r_*i` for every item; `None` for items nobody rated.
    pub fn item_means(&self) -> Vec<Option<f64>> {
        self.columns.iter().map(|c| column_mean(c)).collect()
    }

    /// `|Ω| / (n·m)`.
    pub fn sparsity(&self) -> Result<f64> {
        let cells = self.n * self.m;
        if cells == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(self.nnz as f64 / cells as f64)
    }

    /// Uniform rating holdout: a random `round(fraction·|Ω|)` subset of the
    /// ratings becomes the test set, the rest stays in a same-shaped matrix.
    pub fn split_rating_holdout(&self, spec: &SplitSpec) -> Result<RatingSplit> {
        if spec.kind != SplitKind::RatingHoldout {
            return Err(Error::SplitKindMismatch {
                expected: "rating-holdout",
            });
        }
        let all: Vec<Rating> = self.entries().collect();
        let n_test = round_half_up(spec.holdout_fraction * all.len() as f64).min(all.len());
        let mut rng = seed::rng(spec.seed);
        let mut is_test = vec![false; all.len()];
        for idx in sample(&mut rng, all.len(), n_test) {
            is_test[idx] = true;
        }
        let mut train_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        let mut test = Vec::with_capacity(n_test);
        for (r, held) in all.into_iter().zip(is_test) {
            if held {
                test.push(r);
            } else {
                train_rows[r.user].push((r.item, r.value));
            }
        }
        let rows = train_rows.into_iter().map(RatingRow::from_sorted).collect();
        Ok(RatingSplit {
            train: Self::assemble(rows, self.m, self.scale),
            test,
        })
    }

    /// Uniform user holdout: `round(fraction·n)` users are withheld with
    /// their full rows; the training matrix keeps only the remaining users,
    /// re-indexed densely in ascending original order.
    pub fn split_user_holdout(&self, spec: &SplitSpec) -> Result<UserSplit> {
        if spec.kind != SplitKind::UserHoldout {
            return Err(Error::SplitKindMismatch {
                expected: "user-holdout",
            });
        }
        let n_test = round_half_up(spec.holdout_fraction * self.n as f64).min(self.n);
        let mut rng = seed::rng(spec.seed);
        let mut is_test = vec![false; self.n];
        for idx in sample(&mut rng, self.n, n_test) {
            is_test[idx] = true;
        }
        let mut train_rows = Vec::with_capacity(self.n - n_test);
        let mut train_users = Vec::with_capacity(self.n - n_test);
        let mut test_users = Vec::with_capacity(n_test);
        for (user, held) in is_test.into_iter().enumerate() {
            if held {
                test_users.push((user, self.rows[user].clone()));
            } else {
                train_users.push(user);
                train_rows.push(self.rows[user].clone());
            }
        }
        Ok(UserSplit {
            train: Self::assemble(train_rows, self.m, self.scale),
            train_users,
            test_users,
        })
    }
}

fn column_mean(col: &[(usize, f64)]) -> Option<f64> {
    if col.is_empty() {
        None
    } else {
        Some(col.iter().map(|&(_, v)| v).sum::<f64>() / col.len() as f64)
    }
}

/// `floor(x + 0.5)` for nonnegative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    RatingHoldout,
    UserHoldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(kind: SplitKind, holdout_fraction: f64, seed: u64) -> Result<Self> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::InvalidFraction(holdout_fraction));
        }
        Ok(SplitSpec {
            kind,
            holdout_fraction,
            seed,
        })
    }

    pub fn rating_holdout(holdout_fraction: f64, seed: u64) -> Result<Self> {
        Self::new(SplitKind::RatingHoldout, holdout_fraction, seed)
    }

    pub fn user_holdout(holdout_fraction: f64, seed: u64) -> Result<Self> {
        Self::new(SplitKind::UserHoldout, holdout_fraction, seed)
    }
}

#[derive(Debug, Clone)]
pub struct RatingSplit {
    pub train: SparseRatingMatrix,
    /// Held-out ratings in user-major order.
    pub test: Vec<Rating>,
}

#[derive(Debug, Clone)]
pub struct UserSplit {
    /// Ratings of the retained users; row `r` belongs to `train_users[r]`.
    pub train: SparseRatingMatrix,
    pub train_users: Vec<usize>,
    /// Held-out users (original index) with their complete rows.
    pub test_users: Vec<(usize, RatingRow)>,
}

/// Fold `fold` of a `folds`-way partition of the ratings as the test set.
///
/// The ratings are permuted once by `seed`; fold `f` takes positions
/// `p` with `p % folds == f`, so the folds are disjoint and cover `Ω`.
pub fn kfold_rating_split(
    matrix: &SparseRatingMatrix,
    folds: usize,
    fold: usize,
    seed: u64,
) -> Result<RatingSplit> {
    if folds < 2 || fold >= folds {
        return Err(Error::InvalidConfig(format!(
            "fold {fold} of {folds} (need at least 2 folds)"
        )));
    }
    let all: Vec<Rating> = matrix.entries().collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seed::rng(seed));
    let mut is_test = vec![false; all.len()];
    for (p, &idx) in order.iter().enumerate() {
        if p % folds == fold {
            is_test[idx] = true;
        }
    }
    let mut train_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.n];
    let mut test = Vec::new();
    for (r, held) in all.into_iter().zip(is_test) {
        if held {
            test.push(r);
        } else {
            train_rows[r.user].push((r.item, r.value));
        }
    }
    let rows = train_rows.into_iter().map(RatingRow::from_sorted).collect();
    Ok(RatingSplit {
        train: SparseRatingMatrix::assemble(rows, matrix.m, matrix.scale),
        test,
    })
}

/// Size of a prediction-input draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSize {
    Count(usize),
    Fraction(f64),
}

/// Uniform random subset of `count` entries of `row`.
pub fn sample_row(row: &RatingRow, count: usize, seed: u64) -> RatingRow {
    let count = count.min(row.len());
    let mut positions = sample(&mut seed::rng(seed), row.len(), count).into_vec();
    positions.sort_unstable();
    row.select(&positions)
}

/// Splits a user's row into a revealed prediction input and the holdout
/// that is scored. The holdout must stay nonempty.
pub fn split_prediction_input(
    row: &RatingRow,
    size: InputSize,
    seed: u64,
) -> Result<(RatingRow, RatingRow)> {
    let requested = match size {
        InputSize::Count(n) => n,
        InputSize::Fraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidFraction(f));
            }
            round_half_up(f * row.len() as f64)
        }
    };
    if row.is_empty() || requested >= row.len() {
        return Err(Error::InsufficientRatings {
            available: row.len(),
            requested,
        });
    }
    let mut positions = sample(&mut seed::rng(seed), row.len(), requested).into_vec();
    positions.sort_unstable();
    Ok(row.partition(&positions))
}

/// A matrix together with the external identifiers of its users and items.
///
/// External ids are mapped to dense indices in ascending order, so data
/// whose ids are already `1..=n` keeps its order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: SparseRatingMatrix,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

/// A rating keyed by external identifiers, as read from a file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRating {
    pub user: u64,
    pub item: u64,
    pub value: f64,
}

impl Dataset {
    pub fn from_raw(raw: &[RawRating], scale: RatingScale) -> Result<Self> {
        let mut user_ids: Vec<u64> = raw.iter().map(|r| r.user).collect();
        let mut item_ids: Vec<u64> = raw.iter().map(|r| r.item).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        item_ids.sort_unstable();
        item_ids.dedup();
        let ratings: Vec<Rating> = raw
            .iter()
            .map(|r| Rating {
                user: user_ids.binary_search(&r.user).unwrap(),
                item: item_ids.binary_search(&r.item).unwrap(),
                value: r.value,
            })
            .collect();
        let matrix = SparseRatingMatrix::build(&ratings, user_ids.len(), item_ids.len(), scale)?;
        Ok(Dataset {
            matrix,
            user_ids,
            item_ids,
        })
    }

    pub fn user_index(&self, external: u64) -> Option<usize> {
        self.user_ids.binary_search(&external).ok()
    }

    pub fn item_index(&self, external: u64) -> Option<usize> {
        self.item_ids.binary_search(&external).ok()
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::t4x3;
    use super::*;
    use std::collections::BTreeSet;

    fn key_set(it: impl Iterator<Item = Rating>) -> BTreeSet<(usize, usize, u64)> {
        it.map(|r| (r.user, r.item, r.value.to_bits())).collect()
    }

    #[test]
    fn empty_matrix() {
        let m = SparseRatingMatrix::build(&[], 0, 0, RatingScale::MOVIELENS).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.sparsity(), Err(Error::EmptyMatrix));
    }

    #[test]
    fn toy_matrix_counts() {
        let m = t4x3();
        assert_eq!(m.nnz(), 9);
        assert_eq!(m.sparsity().unwrap(), 0.75);
    }

    #[test]
    fn duplicate_rejected() {
        let t = [Rating::new(0, 0, 5.0), Rating::new(0, 0, 5.0)];
        let err = SparseRatingMatrix::build(&t, 1, 1, RatingScale::MOVIELENS).unwrap_err();
        assert_eq!(err, Error::DuplicateEntry { user: 0, item: 0 });
    }

    #[test]
    fn bounds_and_scale_rejected() {
        let s = RatingScale::MOVIELENS;
        assert!(matches!(
            SparseRatingMatrix::build(&[Rating::new(2, 0, 3.0)], 2, 1, s),
            Err(Error::IndexOutOfRange { what: "user", .. })
        ));
        assert!(matches!(
            SparseRatingMatrix::build(&[Rating::new(0, 1, 3.0)], 2, 1, s),
            Err(Error::IndexOutOfRange { what: "item", .. })
        ));
        assert!(matches!(
            SparseRatingMatrix::build(&[Rating::new(0, 0, 6.0)], 2, 1, s),
            Err(Error::RatingOutOfScale { .. })
        ));
    }

    #[test]
    fn item_stats_toy() {
        let m = t4x3();
        let s1 = m.item_stats(0).unwrap();
        assert_eq!(s1.raters, vec![0, 1, 3]);
        assert!((s1.mean.unwrap() - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.item_stats(1).unwrap().mean, Some(3.0));
        assert!(matches!(
            m.item_stats(3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn item_stats_unrated_item() {
        let t = [Rating::new(0, 0, 4.0)];
        let m = SparseRatingMatrix::build(&t, 1, 7, RatingScale::MOVIELENS).unwrap();
        let s = m.item_stats(6).unwrap();
        assert!(s.raters.is_empty());
        assert_eq!(s.mean, None);
    }

    #[test]
    fn dense_sparsity_is_one() {
        let t: Vec<Rating> = (0..2)
            .flat_map(|u| (0..2).map(move |i| Rating::new(u, i, 3.0)))
            .collect();
        let m = SparseRatingMatrix::build(&t, 2, 2, RatingScale::MOVIELENS).unwrap();
        assert_eq!(m.sparsity().unwrap(), 1.0);
    }

    #[test]
    fn rating_holdout_toy() {
        let m = t4x3();
        let spec = SplitSpec::rating_holdout(0.22, 11).unwrap();
        let a = m.split_rating_holdout(&spec).unwrap();
        assert_eq!(a.test.len(), 2);
        assert_eq!(a.train.nnz(), 7);
        let train = key_set(a.train.entries());
        let test = key_set(a.test.iter().copied());
        assert!(train.is_disjoint(&test));
        let union: BTreeSet<_> = train.union(&test).copied().collect();
        assert_eq!(union, key_set(m.entries()));

        let b = m.split_rating_holdout(&spec).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.train, b.train);
    }

    #[test]
    fn rating_holdout_rejects_wrong_kind() {
        let spec = SplitSpec::user_holdout(0.2, 1).unwrap();
        assert!(t4x3().split_rating_holdout(&spec).is_err());
    }

    #[test]
    fn fraction_must_be_open_interval() {
        assert!(SplitSpec::rating_holdout(0.0, 1).is_err());
        assert!(SplitSpec::rating_holdout(1.0, 1).is_err());
        assert!(SplitSpec::rating_holdout(0.5, 1).is_ok());
    }

    #[test]
    fn user_holdout_toy() {
        let m = t4x3();
        let spec = SplitSpec::user_holdout(0.25, 3).unwrap();
        let s = m.split_user_holdout(&spec).unwrap();
        assert_eq!(s.test_users.len(), 1);
        assert_eq!(s.train.n_users(), 3);
        let held = s.test_users[0].0;
        assert!(!s.train_users.contains(&held));
        assert_eq!(&s.test_users[0].1, m.row(held));
        for (r, &orig) in s.train_users.iter().enumerate() {
            assert_eq!(s.train.row(r), m.row(orig));
        }
        let again = m.split_user_holdout(&spec).unwrap();
        assert_eq!(again.train_users, s.train_users);
    }

    #[test]
    fn user_holdout_size_rounding() {
        assert_eq!(round_half_up(0.2 * 943.0), 189);
        assert_eq!(943 - round_half_up(0.2 * 943.0), 754);
        assert_eq!(round_half_up(0.22 * 9.0), 2);
        assert_eq!(round_half_up(0.2 * 10.0), 2);
        assert_eq!(round_half_up(0.5), 1);
    }

    #[test]
    fn prediction_input_counts() {
        let row: RatingRow = (0..20).map(|i| (i, 3.0)).collect();
        let (input, hold) = split_prediction_input(&row, InputSize::Count(5), 9).unwrap();
        assert_eq!(input.len(), 5);
        assert_eq!(hold.len(), 15);
        assert!(input.items().all(|i| !hold.contains(i)));

        let small: RatingRow = (0..3).map(|i| (i, 3.0)).collect();
        assert!(matches!(
            split_prediction_input(&small, InputSize::Count(3), 9),
            Err(Error::InsufficientRatings { .. })
        ));

        let ten: RatingRow = (0..10).map(|i| (i, 3.0)).collect();
        let (input, _) = split_prediction_input(&ten, InputSize::Fraction(0.2), 9).unwrap();
        assert_eq!(input.len(), 2);
    }

    #[test]
    fn kfold_covers_every_rating_once() {
        let m = t4x3();
        let mut seen = BTreeSet::new();
        for fold in 0..3 {
            let s = kfold_rating_split(&m, 3, fold, 5).unwrap();
            assert_eq!(s.test.len(), 3);
            assert_eq!(s.train.nnz(), 6);
            for r in &s.test {
                assert!(seen.insert((r.user, r.item)));
            }
        }
        assert_eq!(seen.len(), 9);
        assert!(kfold_rating_split(&m, 1, 0, 5).is_err());
    }

    #[test]
    fn dataset_remaps_sparse_ids() {
        let raw = [
            RawRating { user: 10, item: 500, value: 4.0 },
            RawRating { user: 3, item: 7, value: 2.0 },
        ];
        let d = Dataset::from_raw(&raw, RatingScale::MOVIELENS).unwrap();
        assert_eq!(d.user_ids, vec![3, 10]);
        assert_eq!(d.item_ids, vec![7, 500]);
        assert_eq!(d.matrix.get(1, 1), Some(4.0));
        assert_eq!(d.user_index(10), Some(1));
    }
}
