//! Helpers shared by the integration targets. The dense brute-force
//! `Reference` is written independently of the library code it checks.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use anonrec::io::{load_dataset, DatasetFormat};
use anonrec::ratings::sample_row;
use anonrec::similarity::ZERO_SPREAD;
use anonrec::{
    oka_anonymize, AnonymizedMatrix, ItemSimilarityMatrix, ModelKind, PredictionInput,
    PrototypeWeighting, RatingRow, RatingScale, SparseRatingMatrix, TrainedModel,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One dense row of the reference computation. `origin` names the published
/// row it was copied from, so duplicated prototype rows still count once
/// toward the support of a pair.
#[derive(Clone)]
pub struct DenseRow {
    pub origin: usize,
    pub cells: Vec<Option<f64>>,
}

pub struct Reference {
    pub m: usize,
    pub means: Vec<Option<f64>>,
    pub sims: Vec<Vec<Option<f64>>>,
}

fn dense(row: &RatingRow, m: usize) -> Vec<Option<f64>> {
    (0..m).map(|i| row.get(i)).collect()
}

pub fn raw_rows(matrix: &SparseRatingMatrix) -> Vec<DenseRow> {
    matrix
        .rows()
        .iter()
        .enumerate()
        .map(|(u, r)| DenseRow {
            origin: u,
            cells: dense(r, matrix.n_items()),
        })
        .collect()
}

/// Prototype rows, each repeated once per represented user when weighting by
/// multiplicity.
pub fn anonymized_rows(anon: &AnonymizedMatrix, weighting: PrototypeWeighting) -> Vec<DenseRow> {
    let mut out = Vec::new();
    for (a, (row, &k)) in anon.prototypes().iter().zip(anon.multiplicities()).enumerate() {
        let copies = match weighting {
            PrototypeWeighting::Multiplicity => k,
            PrototypeWeighting::Uniform => 1,
        };
        for _ in 0..copies {
            out.push(DenseRow {
                origin: a,
                cells: dense(row, anon.n_items()),
            });
        }
    }
    out
}

impl Reference {
    pub fn new(rows: &[DenseRow], m: usize) -> Self {
        let means: Vec<Option<f64>> = (0..m)
            .map(|i| {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.cells[i]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let mut sims = vec![vec![None; m]; m];
        for i in 0..m {
            for j in 0..m {
                let both: Vec<(usize, f64, f64)> = rows
                    .iter()
                    .filter_map(|r| Some((r.origin, r.cells[i]?, r.cells[j]?)))
                    .collect();
                let mut origins: Vec<usize> = both.iter().map(|b| b.0).collect();
                origins.sort_unstable();
                origins.dedup();
                if origins.len() < 2 {
                    continue;
                }
                let (mi, mj) = (means[i].unwrap(), means[j].unwrap());
                let mut num = 0.0;
                let mut di2 = 0.0;
                let mut dj2 = 0.0;
                for &(_, a, b) in &both {
                    num += (a - mi) * (b - mj);
                    di2 += (a - mi) * (a - mi);
                    dj2 += (b - mj) * (b - mj);
                }
                let floor = ZERO_SPREAD * both.len() as f64;
                if di2 <= floor || dj2 <= floor {
                    continue;
                }
                let s = if i == j { 1.0 } else { num / (di2.sqrt() * dj2.sqrt()) };
                sims[i][j] = Some(s.clamp(-1.0, 1.0));
            }
        }
        Reference { m, means, sims }
    }

    pub fn sim(&self, i: usize, j: usize) -> f64 {
        self.sims[i][j].unwrap_or(0.0)
    }

    /// Weighted-deviation prediction with item-mean and global-mean fallbacks.
    pub fn predict(&self, input: &[Option<f64>], target: usize, scale: RatingScale) -> f64 {
        let Some(mean_t) = self.means[target] else {
            let defined: Vec<f64> = self.means.iter().flatten().copied().collect();
            let g = if defined.is_empty() {
                (scale.lo + scale.hi) / 2.0
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            };
            return g.clamp(scale.lo, scale.hi);
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for (l, &cell) in input.iter().enumerate().take(self.m) {
            let (Some(r), Some(mean_l)) = (cell, self.means[l]) else {
                continue;
            };
            let s = self.sim(target, l);
            num += s * (r - mean_l);
            den += s.abs();
        }
        let v = if den > 0.0 { mean_t + num / den } else { mean_t };
        v.clamp(scale.lo, scale.hi)
    }
}

pub fn dense_input(row: &RatingRow, m: usize) -> Vec<Option<f64>> {
    dense(row, m)
}

/// A random matrix with `1 <= n <= max_n`, `1 <= m <= max_m` and ratings in
/// `1..=5` (half steps now and then). Every user rates at least one item.
pub fn random_matrix(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> SparseRatingMatrix {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    let density: f64 = rng.gen_range(0.2..=1.0);
    let half = rng.gen_bool(0.3);
    let rows = (0..n)
        .map(|_| {
            let mut pairs = Vec::new();
            for i in 0..m {
                if rng.gen_bool(density) {
                    pairs.push((i, random_value(rng, half)));
                }
            }
            if pairs.is_empty() {
                pairs.push((rng.gen_range(0..m), random_value(rng, half)));
            }
            RatingRow::from_pairs(pairs).unwrap()
        })
        .collect();
    SparseRatingMatrix::from_rows(rows, m, RatingScale::MOVIELENS).unwrap()
}

fn random_value(rng: &mut ChaCha8Rng, half: bool) -> f64 {
    if half {
        rng.gen_range(2..=10) as f64 / 2.0
    } else {
        rng.gen_range(1..=5) as f64
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Location of the MovieLens 100k `u.data` file: `ANONREC_ML100K` if set,
/// otherwise `data/ml-100k/u.data` at the workspace root.
pub fn ml100k_path() -> PathBuf {
    std::env::var_os("ANONREC_ML100K")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data")
        })
}

pub fn load_ml100k() -> SparseRatingMatrix {
    let path = ml100k_path();
    let data = load_dataset(&path, DatasetFormat::MovieLens100k, RatingScale::MOVIELENS)
        .unwrap_or_else(|e| {
            panic!(
                "MovieLens 100k not readable at {} ({e}); run scripts/fetch_ml100k.sh or set ANONREC_ML100K",
                path.display()
            )
        });
    data.matrix
}

fn compare_sims(label: &str, got: &ItemSimilarityMatrix, want: &Reference) -> Result<(), String> {
    for i in 0..want.m {
        match (got.item_mean(i), want.means[i]) {
            (Some(a), Some(b)) if (a - b).abs() <= 1e-9 => {}
            (None, None) => {}
            (a, b) => return Err(format!("{label}: mean of item {i}: {a:?} vs {b:?}")),
        }
        for j in 0..want.m {
            if got.is_defined(i, j) != want.sims[i][j].is_some() {
                return Err(format!(
                    "{label}: definedness of ({i},{j}): {} vs {:?}",
                    got.is_defined(i, j),
                    want.sims[i][j]
                ));
            }
            if (got.get(i, j) - want.sim(i, j)).abs() > 1e-9 {
                return Err(format!("{label}: s({i},{j}) = {} vs {}", got.get(i, j), want.sim(i, j)));
            }
        }
    }
    Ok(())
}

/// Checks similarities and every model's predictions on `matrix` against the
/// dense reference, anonymizing with `k`. Returns the number of predictions
/// compared.
pub fn check_against_reference(
    matrix: &SparseRatingMatrix,
    k: usize,
    seed: u64,
    weighting: PrototypeWeighting,
) -> Result<usize, String> {
    let m = matrix.n_items();
    let scale = matrix.scale();
    let train = Arc::new(matrix.clone());
    let raw_ref = Reference::new(&raw_rows(matrix), m);
    let (anon, sigma) = oka_anonymize(matrix, k, seed).map_err(|e| e.to_string())?;
    let anon_ref = Reference::new(&anonymized_rows(&anon, weighting), m);

    let raw_sims = Arc::new(ItemSimilarityMatrix::from_ratings(matrix));
    let anon_sims = Arc::new(ItemSimilarityMatrix::from_anonymized(&anon, weighting));
    compare_sims("raw", &raw_sims, &raw_ref)?;
    compare_sims("anonymized", &anon_sims, &anon_ref)?;

    let anon = Arc::new(anon);
    let sigma = Arc::new(sigma);
    let err = |e: anonrec::Error| e.to_string();
    let reg = TrainedModel::fit_raw(ModelKind::Case1Reg, train.clone()).map_err(err)?;
    let c2 = TrainedModel::fit_raw(ModelKind::Case2Ur, train.clone()).map_err(err)?;
    let base = TrainedModel::fit_raw(ModelKind::Baseline, train.clone()).map_err(err)?;
    let anon_model = |kind| {
        TrainedModel::new(kind, anon_sims.clone(), None, Some(anon.clone()), scale)
            .map(|t| t.with_assignment(sigma.clone()))
            .map_err(err)
    };
    let c1a_ur = anon_model(ModelKind::Case1aUr)?;
    let c1a_ai = anon_model(ModelKind::Case1aAi)?;
    let c2a_ur = anon_model(ModelKind::Case2aUr)?;

    let mut rng = seeded(seed ^ 0x5eed);
    let mut compared = 0;
    for u in 0..matrix.n_users() {
        let row = matrix.row(u);
        let count = rng.gen_range(0..=row.len());
        let revealed = sample_row(row, count, rng.gen());
        let own = dense_input(row, m);
        let shown = dense_input(&revealed, m);
        let a = sigma.anon_id(u).unwrap();
        let proto = dense_input(anon.prototype(a), m);
        for target in 0..m {
            let checks = [
                ("Case1/REG", reg.predict(&PredictionInput::UserIdentity(u), target), raw_ref.predict(&own, target, scale)),
                ("Case2/UR", c2.predict(&PredictionInput::UserRatings(revealed.clone()), target), raw_ref.predict(&shown, target, scale)),
                ("BASELINE", base.predict(&PredictionInput::Empty, target), raw_ref.predict(&vec![None; m], target, scale)),
                ("Case1A/UR", c1a_ur.predict(&PredictionInput::UserRatings(revealed.clone()), target), anon_ref.predict(&shown, target, scale)),
                ("Case2A/UR", c2a_ur.predict(&PredictionInput::UserRatings(revealed.clone()), target), anon_ref.predict(&shown, target, scale)),
                ("Case1A/AI", c1a_ai.predict(&PredictionInput::AnonymousIdentity(a), target), anon_ref.predict(&proto, target, scale)),
            ];
            for (name, got, want) in checks {
                let got = got.map_err(err)?.value;
                if (got - want).abs() > 1e-9 {
                    return Err(format!("{name}: user {u} item {target}: {got} vs {want}"));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}
