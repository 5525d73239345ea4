//! Item-item Pearson similarities over co-rating rows.
//!
//! For items `i` and `j` with co-rating rows `C_ij`:
//!
//! ```text
//! s_ij = sum_C w (r_i - mean_i)(r_j - mean_j)
//!        / ( sqrt(sum_C w (r_i - mean_i)^2) * sqrt(sum_C w (r_j - mean_j)^2) )
//! ```
//!
//! where `mean_i` is taken over all raters of `i` and `w` is the row weight
//! (1 for raw ratings, the multiplicity for anonymized prototypes). Pairs
//! with fewer than two co-rating rows, or zero spread on either side, are
//! undefined and stored as 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anonymizer::AnonymizedMatrix;
use crate::ratings::{RatingRow, SparseRatingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilaritySource {
    Raw,
    Anonymized,
}

impl SimilaritySource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimilaritySource::Raw => "raw",
            SimilaritySource::Anonymized => "anonymized",
        }
    }
}

/// How prototype rows are weighted when computing similarities and means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrototypeWeighting {
    /// Each prototype counts as its `k_u` members.
    #[default]
    Multiplicity,
    /// Each prototype counts once.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemSimilarityMatrix {
    m: usize,
    values: Vec<f64>,
    defined: Vec<bool>,
    item_means: Vec<Option<f64>>,
    source: SimilaritySource,
}

impl ItemSimilarityMatrix {
    pub fn from_ratings(matrix: &SparseRatingMatrix) -> Self {
        let rows: Vec<(f64, &RatingRow)> = matrix.rows().iter().map(|r| (1.0, r)).collect();
        compute(&rows, matrix.n_items(), SimilaritySource::Raw)
    }

    pub fn from_anonymized(anon: &AnonymizedMatrix, weighting: PrototypeWeighting) -> Self {
        let rows: Vec<(f64, &RatingRow)> = anon
            .prototypes()
            .iter()
            .zip(anon.multiplicities())
            .map(|(row, &k)| {
                let w = match weighting {
                    PrototypeWeighting::Multiplicity => k as f64,
                    PrototypeWeighting::Uniform => 1.0,
                };
                (w, row)
            })
            .collect();
        compute(&rows, anon.n_items(), SimilaritySource::Anonymized)
    }

    /// Assembles a matrix from stored parts (used when reading from disk).
    pub fn from_parts(
        m: usize,
        values: Vec<f64>,
        defined: Vec<bool>,
        item_means: Vec<Option<f64>>,
        source: SimilaritySource,
    ) -> Option<Self> {
        if values.len() != m * m || defined.len() != m * m || item_means.len() != m {
            return None;
        }
        Some(ItemSimilarityMatrix {
            m,
            values,
            defined,
            item_means,
            source,
        })
    }

    pub fn n_items(&self) -> usize {
        self.m
    }

    pub fn source(&self) -> SimilaritySource {
        self.source
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    /// Whether `s_ij` was computed from at least two co-rating rows with
    /// nonzero spread (as opposed to the default 0).
    pub fn is_defined(&self, i: usize, j: usize) -> bool {
        self.defined[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn item_means(&self) -> &[Option<f64>] {
        &self.item_means
    }

    pub fn item_mean(&self, i: usize) -> Option<f64> {
        self.item_means[i]
    }

    /// Mean of the defined item means.
    pub fn global_mean(&self) -> Option<f64> {
        let (sum, count) = self
            .item_means
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), &m| (s + m, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Unordered off-diagonal pairs `(i, j, s_ij)` with `i < j` that are defined.
    pub fn defined_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.m).flat_map(move |i| {
            ((i + 1)..self.m)
                .filter(move |&j| self.is_defined(i, j))
                .map(move |j| (i, j, self.get(i, j)))
        })
    }
}

/// Squared spread per unit of row weight below which a co-rated column
/// counts as constant. Rounding in prototype means leaves residues near
/// 1e-30; real spreads on a rating scale are many orders larger.
pub const ZERO_SPREAD: f64 = 1e-20;

fn compute(rows: &[(f64, &RatingRow)], m: usize, source: SimilaritySource) -> ItemSimilarityMatrix {
    let mut sums = vec![(0.0f64, 0.0f64); m];
    for &(w, row) in rows {
        for (i, v) in row.iter() {
            sums[i].0 += w * v;
            sums[i].1 += w;
        }
    }
    let item_means: Vec<Option<f64>> = sums
        .iter()
        .map(|&(s, w)| (w > 0.0).then(|| s / w))
        .collect();

    // Deviations from the all-raters mean, per row.
    let deviations: Vec<(f64, Vec<(usize, f64)>)> = rows
        .iter()
        .map(|&(w, row)| {
            let d = row
                .iter()
                .map(|(i, v)| (i, v - item_means[i].unwrap()))
                .collect();
            (w, d)
        })
        .collect();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (r, (_, d)) in deviations.iter().enumerate() {
        for &(i, x) in d {
            columns[i].push((r, x));
        }
    }

    // Row i holds pairs (i, j) for j >= i.
    let upper: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut cross = vec![0.0f64; m];
            let mut own = vec![0.0f64; m];
            let mut other = vec![0.0f64; m];
            let mut support = vec![0u32; m];
            let mut weight = vec![0.0f64; m];
            let mut touched = Vec::new();
            for &(r, di) in &columns[i] {
                let (w, d) = &deviations[r];
                let start = d.partition_point(|&(j, _)| j < i);
                for &(j, dj) in &d[start..] {
                    if support[j] == 0 {
                        touched.push(j);
                    }
                    support[j] += 1;
                    weight[j] += w;
                    cross[j] += w * di * dj;
                    own[j] += w * di * di;
                    other[j] += w * dj * dj;
                }
            }
            touched.sort_unstable();
            touched
                .into_iter()
                .filter(|&j| {
                    let floor = ZERO_SPREAD * weight[j];
                    support[j] >= 2 && own[j] > floor && other[j] > floor
                })
                .map(|j| {
                    let s = cross[j] / (own[j].sqrt() * other[j].sqrt());
                    (j, s.clamp(-1.0, 1.0))
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; m * m];
    let mut defined = vec![false; m * m];
    for (i, row) in upper.into_iter().enumerate() {
        for (j, s) in row {
            let s = if i == j { 1.0 } else { s };
            values[i * m + j] = s;
            values[j * m + i] = s;
            defined[i * m + j] = true;
            defined[j * m + i] = true;
        }
    }
    ItemSimilarityMatrix {
        m,
        values,
        defined,
        item_means,
        source,
    }
}

/// Equal-width histogram of defined off-diagonal similarities over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SimilarityHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Bin index of `s`; `1.0` lands in the last bin.
    pub fn bin_of(bins: usize, s: f64) -> usize {
        let pos = ((s + 1.0) / 2.0 * bins as f64).floor() as isize;
        pos.clamp(0, bins as isize - 1) as usize
    }
}

pub const DEFAULT_BINS: usize = 40;

pub fn similarity_histogram(sims: &ItemSimilarityMatrix, bins: usize) -> SimilarityHistogram {
    let bins = bins.max(1);
    let bin_edges = (0..=bins)
        .map(|b| -1.0 + 2.0 * b as f64 / bins as f64)
        .collect();
    let mut counts = vec![0; bins];
    for (_, _, s) in sims.defined_pairs() {
        counts[SimilarityHistogram::bin_of(bins, s)] += 1;
    }
    SimilarityHistogram { bin_edges, counts }
}

/// Number of defined off-diagonal pairs with `s_ij < 0`.
pub fn negative_pair_count(sims: &ItemSimilarityMatrix) -> usize {
    sims.defined_pairs().filter(|&(_, _, s)| s < 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::fixtures::t4x3;
    use crate::ratings::{Rating, RatingScale};

    fn matrix(t: &[(usize, usize, f64)], n: usize, m: usize) -> SparseRatingMatrix {
        let r: Vec<Rating> = t.iter().map(|&(u, i, v)| Rating::new(u, i, v)).collect();
        SparseRatingMatrix::build(&r, n, m, RatingScale::new(-10.0, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn toy_pair_i1_i3() {
        let s = ItemSimilarityMatrix::from_ratings(&t4x3());
        let expected = -17.0 / 1378f64.sqrt();
        assert!((s.get(0, 2) - expected).abs() < 1e-12);
        assert!((s.get(2, 0) - expected).abs() < 1e-12);
        assert!(s.is_defined(0, 2));
    }

    #[test]
    fn copied_column_is_perfectly_correlated() {
        // item 1 equals item 0 everywhere; the means coincide too
        let m = matrix(
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 3.0), (1, 1, 3.0), (2, 0, 5.0), (2, 1, 5.0)],
            3,
            2,
        );
        let s = ItemSimilarityMatrix::from_ratings(&m);
        assert!((s.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn no_co_raters_is_zero_and_undefined() {
        let m = matrix(&[(0, 0, 1.0), (1, 0, 3.0), (2, 1, 5.0), (3, 1, 2.0)], 4, 2);
        let s = ItemSimilarityMatrix::from_ratings(&m);
        assert_eq!(s.get(0, 1), 0.0);
        assert!(!s.is_defined(0, 1));
        assert_eq!(similarity_histogram(&s, 4).total(), 0);
    }

    #[test]
    fn histogram_point_mass_and_empty() {
        let m = matrix(
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 3.0), (1, 1, 3.0), (2, 0, 5.0), (2, 1, 5.0)],
            3,
            2,
        );
        let h = similarity_histogram(&ItemSimilarityMatrix::from_ratings(&m), 4);
        assert_eq!(h.counts, vec![0, 0, 0, 1]);
        assert_eq!(h.bin_edges, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);

        let one = matrix(&[(0, 0, 1.0), (1, 0, 3.0)], 2, 1);
        let h = similarity_histogram(&ItemSimilarityMatrix::from_ratings(&one), 40);
        assert_eq!(h.total(), 0);
        assert_eq!(h.counts.len(), 40);
    }

    #[test]
    fn bins_cover_endpoints() {
        assert_eq!(SimilarityHistogram::bin_of(4, -1.0), 0);
        assert_eq!(SimilarityHistogram::bin_of(4, 1.0), 3);
        assert_eq!(SimilarityHistogram::bin_of(4, 0.0), 2);
        assert_eq!(SimilarityHistogram::bin_of(4, -0.0001), 1);
    }

    #[test]
    fn global_mean_of_item_means() {
        let s = ItemSimilarityMatrix::from_ratings(&t4x3());
        let g = (10.0 / 3.0 + 3.0 + 11.0 / 3.0) / 3.0;
        assert!((s.global_mean().unwrap() - g).abs() < 1e-12);
    }
}
