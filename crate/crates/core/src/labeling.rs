//! Grade production: K-means clustering with importance-weighted cluster
//! naming for the feature table, and score-range binning for screenshots.

use crate::dataset::{EncodedVector, FEATURE_COUNT};
use crate::grade::UsabilityGrade;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("k-means needs at least {k} rows, got {n}")]
    TooFewRows { n: usize, k: usize },
    #[error("score {0} falls in the excluded red range (below 3.60)")]
    RejectedRedRange(f64),
    #[error("score {0} is outside the valid [1, 10] range")]
    OutOfRange(f64),
}

/// Feature-importance weights in encoded-column order
/// [load_time, resolution, mobile_ui, contact_info], most important first.
pub const DEFAULT_IMPORTANCE_WEIGHTS: [f64; FEATURE_COUNT] = [8.0, 4.0, 2.0, 1.0];

/// A fitted 5-cluster model over scaled feature rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<EncodedVector>,
    pub inertia: f64,
    pub seed: u64,
    pub iterations_run: usize,
    /// Inertia after each Lloyd iteration; non-increasing by construction.
    pub inertia_history: Vec<f64>,
}

/// Bijection from cluster ids to grades, plus the weights that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradeMap {
    pub cluster_to_grade: Vec<UsabilityGrade>,
    pub importance_weights: [f64; FEATURE_COUNT],
}

fn sq_dist(a: &EncodedVector, b: &EncodedVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[EncodedVector], row: &EncodedVector) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, row);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_pp_init(rows: &[EncodedVector], k: usize, rng: &mut impl Rng) -> Vec<EncodedVector> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(rows[rng.gen_range(0..rows.len())]);
    while centroids.len() < k {
        let dists: Vec<f64> = rows.iter().map(|r| nearest(&centroids, r).1).collect();
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            WeightedIndex::new(&dists).unwrap().sample(rng)
        } else {
            // all rows coincide with existing centroids
            rng.gen_range(0..rows.len())
        };
        centroids.push(rows[next]);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a given
/// (rows, seed). Converges when the largest centroid shift drops below
/// `tol` or `max_iter` is reached.
pub fn kmeans_fit(
    rows: &[EncodedVector],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel, LabelingError> {
    if rows.len() < k {
        return Err(LabelingError::TooFewRows { n: rows.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(rows, k, &mut rng);
    let mut inertia_history = Vec::new();
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        iterations_run += 1;
        let assignments: Vec<usize> = rows.iter().map(|r| nearest(&centroids, r).0).collect();

        let mut sums = vec![[0.0; FEATURE_COUNT]; k];
        let mut counts = vec![0usize; k];
        for (row, &c) in rows.iter().zip(&assignments) {
            counts[c] += 1;
            for j in 0..FEATURE_COUNT {
                sums[c][j] += row[j];
            }
        }

        let mut new_centroids = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..FEATURE_COUNT {
                    new_centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            } else {
                // empty cluster: reseed on the row farthest from its centroid
                let far = rows
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        nearest(&centroids, a)
                            .1
                            .total_cmp(&nearest(&centroids, b).1)
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                new_centroids[c] = rows[far];
            }
        }

        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;

        let inertia: f64 = rows.iter().map(|r| nearest(&centroids, r).1).sum();
        if let Some(&prev) = inertia_history.last() {
            debug_assert!(inertia <= prev + 1e-9, "inertia increased: {prev} -> {inertia}");
        }
        inertia_history.push(inertia);

        if shift < tol {
            break;
        }
    }

    Ok(KMeansModel {
        inertia: *inertia_history.last().unwrap(),
        centroids,
        seed,
        iterations_run,
        inertia_history,
    })
}

/// Nearest-centroid assignment; ties go to the lowest cluster id.
pub fn assign(model: &KMeansModel, row: &EncodedVector) -> usize {
    nearest(&model.centroids, row).0
}

/// Rank centroids by weighted desirability (load time counts against,
/// everything else in favor) and hand out grades best-first. Ties break
/// toward the lower cluster id.
pub fn map_clusters_to_grades(model: &KMeansModel, weights: &[f64; FEATURE_COUNT]) -> GradeMap {
    let desirability: Vec<f64> = model
        .centroids
        .iter()
        .map(|c| -weights[0] * c[0] + weights[1] * c[1] + weights[2] * c[2] + weights[3] * c[3])
        .collect();
    let mut order: Vec<usize> = (0..model.centroids.len()).collect();
    order.sort_by(|&a, &b| desirability[b].total_cmp(&desirability[a]).then(a.cmp(&b)));

    let mut cluster_to_grade = vec![UsabilityGrade::VeryBad; model.centroids.len()];
    for (rank, &cluster) in order.iter().enumerate() {
        cluster_to_grade[cluster] = UsabilityGrade::ALL[rank];
    }
    GradeMap {
        cluster_to_grade,
        importance_weights: *weights,
    }
}

/// Map an external 1-10 score to a grade. Scores below 3.60 belong to the
/// excluded red range.
pub fn bin_webscore(score: f64) -> Result<UsabilityGrade, LabelingError> {
    if !score.is_finite() || !(1.0..=10.0).contains(&score) {
        return Err(LabelingError::OutOfRange(score));
    }
    if score < 3.60 {
        return Err(LabelingError::RejectedRedRange(score));
    }
    Ok(if score < 4.60 {
        UsabilityGrade::VeryBad
    } else if score < 5.60 {
        UsabilityGrade::Bad
    } else if score <= 7.00 {
        UsabilityGrade::Good
    } else if score < 8.60 {
        UsabilityGrade::VeryGood
    } else {
        UsabilityGrade::Excellent
    })
}
