//! k-anonymization of rating matrices by one-pass K-means microaggregation.
//!
//! Users are clustered into groups of at least `k`; each group is published
//! as a single prototype row together with its size. The prototype holds,
//! for every item rated by some member, the mean over exactly those members.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ratings::{RatingRow, RatingScale, SparseRatingMatrix};
use crate::seed;

/// The published table `{(prototype, multiplicity)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizedMatrix {
    prototypes: Vec<RatingRow>,
    multiplicities: Vec<usize>,
    m: usize,
    k: usize,
    scale: RatingScale,
}

impl AnonymizedMatrix {
    pub fn new(
        prototypes: Vec<RatingRow>,
        multiplicities: Vec<usize>,
        m: usize,
        k: usize,
        scale: RatingScale,
    ) -> Result<Self> {
        if prototypes.len() != multiplicities.len() {
            return Err(Error::InvalidConfig(format!(
                "{} prototypes but {} multiplicities",
                prototypes.len(),
                multiplicities.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidK { k, n: 0 });
        }
        if let Some(&bad) = multiplicities.iter().find(|&&c| c < k) {
            return Err(Error::InvalidConfig(format!(
                "multiplicity {bad} below k={k}"
            )));
        }
        for row in &prototypes {
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
        Ok(AnonymizedMatrix {
            prototypes,
            multiplicities,
            m,
            k,
            scale,
        })
    }

    /// Number of prototypes `n'`.
    pub fn n_prototypes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn n_items(&self) -> usize {
        self.m
    }

    /// The `k` the table was built for.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn prototype(&self, anon_id: usize) -> &RatingRow {
        &self.prototypes[anon_id]
    }

    pub fn prototypes(&self) -> &[RatingRow] {
        &self.prototypes
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// `Σ k_u`, the number of users the table stands for.
    pub fn n_users(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn defined_cells(&self) -> usize {
        self.prototypes.iter().map(RatingRow::len).sum()
    }

    /// Fraction of prototype cells that carry a value.
    pub fn density(&self) -> f64 {
        let cells = self.prototypes.len() * self.m;
        if cells == 0 {
            0.0
        } else {
            self.defined_cells() as f64 / cells as f64
        }
    }
}

/// `σ`: user index to anonymous identity (prototype index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMap {
    mapping: Vec<usize>,
    n_prime: usize,
}

impl AssignmentMap {
    /// Validates that the mapping is onto `0..n_prime`.
    pub fn new(mapping: Vec<usize>, n_prime: usize) -> Result<Self> {
        let mut hit = vec![false; n_prime];
        for &a in &mapping {
            if a >= n_prime {
                return Err(Error::IndexOutOfRange {
                    what: "anonymous identity",
                    index: a,
                    size: n_prime,
                });
            }
            hit[a] = true;
        }
        if let Some(missing) = hit.iter().position(|h| !h) {
            return Err(Error::InvalidConfig(format!(
                "anonymous identity {missing} has no members"
            )));
        }
        Ok(AssignmentMap { mapping, n_prime })
    }

    pub fn anon_id(&self, user: usize) -> Option<usize> {
        self.mapping.get(user).copied()
    }

    pub fn n_users(&self) -> usize {
        self.mapping.len()
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn preimage_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_prime];
        for &a in &self.mapping {
            sizes[a] += 1;
        }
        sizes
    }

    /// Members of each anonymous identity, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_prime];
        for (u, &a) in self.mapping.iter().enumerate() {
            out[a].push(u);
        }
        out
    }
}

/// Per-item mean over exactly the rows that rate the item.
pub fn build_prototype(rows: &[&RatingRow]) -> Result<RatingRow> {
    if rows.is_empty() {
        return Err(Error::EmptyCluster);
    }
    if rows.len() == 1 {
        return Ok(rows[0].clone());
    }
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for row in rows {
        for (item, value) in row.iter() {
            let e = acc.entry(item).or_insert((0.0, 0));
            e.0 += value;
            e.1 += 1;
        }
    }
    Ok(RatingRow::from_sorted(
        acc.into_iter()
            .map(|(item, (sum, count))| (item, sum / count as f64))
            .collect(),
    ))
}

/// Clusters users into `floor(n/k)` groups of size `>= k` and publishes the
/// group prototypes. `k = 1` returns the identity anonymization.
pub fn oka_anonymize(
    matrix: &SparseRatingMatrix,
    k: usize,
    seed: u64,
) -> Result<(AnonymizedMatrix, AssignmentMap)> {
    let n = matrix.n_users();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let assignment = if k == 1 {
        (0..n).collect()
    } else {
        OkaClustering::new(matrix).run(k, seed)
    };
    let n_prime = assignment.iter().max().map_or(0, |&a| a + 1);
    let map = AssignmentMap::new(assignment, n_prime)?;
    let members = map.members();
    let mut prototypes = Vec::with_capacity(n_prime);
    for group in &members {
        let rows: Vec<&RatingRow> = group.iter().map(|&u| matrix.row(u)).collect();
        prototypes.push(build_prototype(&rows)?);
    }
    let multiplicities = members.iter().map(Vec::len).collect();
    let anon = AnonymizedMatrix::new(prototypes, multiplicities, matrix.n_items(), k, matrix.scale())?;
    Ok((anon, map))
}

/// Working state for the clustering.
///
/// Rows are compared after imputing every missing cell with the item mean
/// (or the global mean for unrated items). Writing an imputed row as
/// `fill + d_u` with sparse `d_u`, a cluster is tracked by the sum `S` of
/// its members' `d_u`, so that
/// `|x_u - centroid|^2 = |S|^2/s^2 - 2 d_u.S/s + |d_u|^2`
/// needs only the nonzero cells of `d_u`.
struct OkaClustering {
    deviations: Vec<Vec<(usize, f64)>>,
    dev_norm2: Vec<f64>,
    m: usize,
}

struct Cluster {
    sum: Vec<f64>,
    sum_norm2: f64,
    members: Vec<usize>,
}

impl OkaClustering {
    fn new(matrix: &SparseRatingMatrix) -> Self {
        let means = matrix.item_means();
        let defined: Vec<f64> = means.iter().flatten().copied().collect();
        let global = if defined.is_empty() {
            matrix.scale().midpoint()
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        let fill: Vec<f64> = means.iter().map(|m| m.unwrap_or(global)).collect();
        let deviations: Vec<Vec<(usize, f64)>> = matrix
            .rows()
            .iter()
            .map(|row| row.iter().map(|(i, v)| (i, v - fill[i])).collect())
            .collect();
        let dev_norm2 = deviations
            .iter()
            .map(|d| d.iter().map(|&(_, x)| x * x).sum())
            .collect();
        OkaClustering {
            deviations,
            dev_norm2,
            m: matrix.n_items(),
        }
    }

    fn dot(&self, user: usize, dense: &[f64]) -> f64 {
        self.deviations[user]
            .iter()
            .map(|&(i, x)| x * dense[i])
            .sum()
    }

    fn distance2(&self, user: usize, c: &Cluster) -> f64 {
        let s = c.members.len() as f64;
        c.sum_norm2 / (s * s) - 2.0 * self.dot(user, &c.sum) / s + self.dev_norm2[user]
    }

    fn add(&self, user: usize, c: &mut Cluster) {
        let cross = self.dot(user, &c.sum);
        for &(i, x) in &self.deviations[user] {
            c.sum[i] += x;
        }
        c.sum_norm2 += 2.0 * cross + self.dev_norm2[user];
        c.members.push(user);
    }

    fn remove(&self, user: usize, c: &mut Cluster) {
        for &(i, x) in &self.deviations[user] {
            c.sum[i] -= x;
        }
        let cross = self.dot(user, &c.sum);
        c.sum_norm2 -= 2.0 * cross + self.dev_norm2[user];
        let pos = c.members.iter().position(|&u| u == user).unwrap();
        c.members.remove(pos);
    }

    fn run(&self, k: usize, seed: u64) -> Vec<usize> {
        let n = self.deviations.len();
        let n_clusters = (n / k).max(1);
        if n_clusters == 1 {
            return vec![0; n];
        }
        let mut rng = seed::rng(seed);

        // Seed users become the first member of each cluster.
        let seeds = sample(&mut rng, n, n_clusters).into_vec();
        let mut is_seed = vec![false; n];
        let mut clusters: Vec<Cluster> = Vec::with_capacity(n_clusters);
        for &u in &seeds {
            is_seed[u] = true;
            let mut c = Cluster {
                sum: vec![0.0; self.m],
                sum_norm2: 0.0,
                members: Vec::new(),
            };
            self.add(u, &mut c);
            clusters.push(c);
        }

        // Single assignment pass in shuffled order.
        let mut order: Vec<usize> = (0..n).filter(|&u| !is_seed[u]).collect();
        order.shuffle(&mut rng);
        for u in order {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, c) in clusters.iter().enumerate() {
                let d = self.distance2(u, c);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            self.add(u, &mut clusters[best]);
        }

        // Rebalance until every cluster reaches k.
        while let Some(target) = clusters.iter().position(|c| c.members.len() < k) {
            let mut donor = 0;
            for (ci, c) in clusters.iter().enumerate() {
                if c.members.len() > clusters[donor].members.len() {
                    donor = ci;
                }
            }
            debug_assert!(clusters[donor].members.len() > k);
            let mut pick = usize::MAX;
            let mut pick_d = f64::INFINITY;
            for &u in &clusters[donor].members {
                let d = self.distance2(u, &clusters[target]);
                if d < pick_d || (d == pick_d && u < pick) {
                    pick_d = d;
                    pick = u;
                }
            }
            self.remove(pick, &mut clusters[donor]);
            self.add(pick, &mut clusters[target]);
        }

        let mut assignment = vec![0; n];
        for (ci, c) in clusters.iter().enumerate() {
            for &u in &c.members {
                assignment[u] = ci;
            }
        }
        assignment
    }
}

/// Equivalence-class statistics of an anonymized table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymityAudit {
    pub min_class_size: usize,
    /// class size -> number of classes of that size
    pub class_sizes: BTreeMap<usize, usize>,
    pub satisfied_k: usize,
}

pub fn audit_k_anonymity(anon: &AnonymizedMatrix) -> AnonymityAudit {
    let mut class_sizes = BTreeMap::new();
    for &c in anon.multiplicities() {
        *class_sizes.entry(c).or_insert(0) += 1;
    }
    let min_class_size = anon.multiplicities().iter().copied().min().unwrap_or(0);
    AnonymityAudit {
        min_class_size,
        class_sizes,
        satisfied_k: min_class_size,
    }
}

/// Class sizes left once some members' own ratings reach the recommender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualAnonymity {
    pub residuals: Vec<usize>,
    pub min_residual: usize,
}

pub fn residual_anonymity(
    anon: &AnonymizedMatrix,
    map: &AssignmentMap,
    revealed: &[usize],
) -> Result<ResidualAnonymity> {
    let mut residuals = anon.multiplicities().to_vec();
    let mut seen = vec![false; map.n_users()];
    for &u in revealed {
        let a = map.anon_id(u).ok_or(Error::UnknownUser(u))?;
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        residuals[a] = residuals[a].saturating_sub(1);
    }
    let min_residual = residuals.iter().copied().min().unwrap_or(0);
    Ok(ResidualAnonymity {
        residuals,
        min_residual,
    })
}
