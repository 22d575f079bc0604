//! Multi-class RBF support vector machine trained by sequential minimal
//! optimization, with grid search over C and gamma.

use crate::dataset::{EncodedVector, ScalerParams};
use crate::grade::UsabilityGrade;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const MODEL_FILE_VERSION: &str = "webaudit-svm-1";

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set contains a single class")]
    SingleClassInput,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("class {class} has {count} rows, fewer than {folds} folds")]
    TooFewRowsPerClass {
        class: UsabilityGrade,
        count: usize,
        folds: usize,
    },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One binary classifier. decision(x) = sum_i dual_coefs[i] * K(sv_i, x) + bias,
/// where dual_coefs[i] = alpha_i * y_i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmBinaryModel {
    pub support_vectors: Vec<EncodedVector>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// False when the pass budget ran out before KKT conditions held.
    pub converged: bool,
}

impl SvmBinaryModel {
    pub fn decision(&self, x: &EncodedVector) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, &coef)| coef * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

/// One-vs-one ensemble over the classes present in training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmMultiModel {
    pub classes: Vec<UsabilityGrade>,
    pub pair_models: Vec<PairModel>,
    pub c: f64,
    pub gamma: f64,
}

/// Binary model for one unordered class pair; a positive decision votes
/// for `class_a`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairModel {
    pub class_a: UsabilityGrade,
    pub class_b: UsabilityGrade,
    pub model: SvmBinaryModel,
}

/// Hyperparameter grid searched by cross-validation.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_values: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            gamma_values: vec![1.0, 0.1, 0.01, 0.001, 0.0001],
            folds: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub c: f64,
    pub gamma: f64,
    /// cv_table[i][j] = mean CV accuracy for (c_values[i], gamma_values[j]).
    pub cv_table: Vec<Vec<f64>>,
}

pub fn rbf_kernel(x: &EncodedVector, y: &EncodedVector, gamma: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * sq).exp()
}

const ALPHA_EPS: f64 = 1e-8;
const STABLE_PASSES: usize = 3;

/// Simplified SMO: sweep examples, pair each KKT violator with a random
/// partner, solve the two-variable subproblem analytically. Terminates
/// after `STABLE_PASSES` consecutive sweeps without an update, or flags
/// non-convergence once `max_passes` sweeps are spent.
pub fn smo_train_binary(
    x: &[EncodedVector],
    y: &[f64],
    c: f64,
    gamma: f64,
    tol: f64,
    max_passes: usize,
    seed: u64,
) -> Result<SvmBinaryModel, SvmError> {
    let n = x.len();
    if n < 2 {
        return Err(SvmError::TooFewRows(n));
    }
    if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
        return Err(SvmError::SingleClassInput);
    }

    let mut kernel = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let k = rbf_kernel(&x[i], &x[j], gamma);
            kernel[i][j] = k;
            kernel[j][i] = k;
        }
    }

    let mut alpha = vec![0.0f64; n];
    let mut b = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let f = |alpha: &[f64], b: f64, i: usize, kernel: &[Vec<f64>]| -> f64 {
        alpha
            .iter()
            .zip(y)
            .zip(&kernel[i])
            .map(|((&a, &yy), &k)| a * yy * k)
            .sum::<f64>()
            + b
    };

    let mut stable = 0usize;
    let mut converged = false;
    for _pass in 0..max_passes {
        let mut changed = 0usize;
        for i in 0..n {
            let e_i = f(&alpha, b, i, &kernel) - y[i];
            let viol = (y[i] * e_i < -tol && alpha[i] < c) || (y[i] * e_i > tol && alpha[i] > 0.0);
            if !viol {
                continue;
            }
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = f(&alpha, b, j, &kernel) - y[j];

            let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
            let (lo, hi) = if (y[i] - y[j]).abs() > f64::EPSILON {
                (
                    (a_j_old - a_i_old).max(0.0),
                    (c + a_j_old - a_i_old).min(c),
                )
            } else {
                (
                    (a_i_old + a_j_old - c).max(0.0),
                    (a_i_old + a_j_old).min(c),
                )
            };
            if hi - lo < 1e-12 {
                continue;
            }
            let eta = 2.0 * kernel[i][j] - kernel[i][i] - kernel[j][j];
            if eta >= 0.0 {
                continue;
            }
            let mut a_j = a_j_old - y[j] * (e_i - e_j) / eta;
            a_j = a_j.clamp(lo, hi);
            if (a_j - a_j_old).abs() < 1e-7 {
                continue;
            }
            let a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j);
            alpha[i] = a_i;
            alpha[j] = a_j;

            let b1 = b - e_i
                - y[i] * (a_i - a_i_old) * kernel[i][i]
                - y[j] * (a_j - a_j_old) * kernel[i][j];
            let b2 = b - e_j
                - y[i] * (a_i - a_i_old) * kernel[i][j]
                - y[j] * (a_j - a_j_old) * kernel[j][j];
            b = if a_i > 0.0 && a_i < c {
                b1
            } else if a_j > 0.0 && a_j < c {
                b2
            } else {
                0.5 * (b1 + b2)
            };
            changed += 1;
        }
        if changed == 0 {
            stable += 1;
            if stable >= STABLE_PASSES {
                converged = true;
                break;
            }
        } else {
            stable = 0;
        }
    }

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for i in 0..n {
        if alpha[i] > ALPHA_EPS {
            support_vectors.push(x[i]);
            dual_coefs.push(alpha[i] * y[i]);
        }
    }

    Ok(SvmBinaryModel {
        support_vectors,
        dual_coefs,
        bias: b,
        gamma,
        c,
        converged,
    })
}

/// Train the one-vs-one ensemble at fixed (C, gamma). Classes appear in
/// grade order; one binary model per unordered class pair.
pub fn train_multi(
    x: &[EncodedVector],
    y: &[UsabilityGrade],
    c: f64,
    gamma: f64,
    seed: u64,
) -> Result<SvmMultiModel, SvmError> {
    assert_eq!(x.len(), y.len());
    let classes: Vec<UsabilityGrade> = UsabilityGrade::ALL
        .into_iter()
        .filter(|g| y.contains(g))
        .collect();
    if classes.len() < 2 {
        return Err(SvmError::SingleClassInput);
    }

    let mut pair_models = Vec::new();
    for (ai, &class_a) in classes.iter().enumerate() {
        for &class_b in &classes[ai + 1..] {
            let mut px = Vec::new();
            let mut py = Vec::new();
            for (xi, &yi) in x.iter().zip(y) {
                if yi == class_a {
                    px.push(*xi);
                    py.push(1.0);
                } else if yi == class_b {
                    px.push(*xi);
                    py.push(-1.0);
                }
            }
            let max_passes = 10 * px.len();
            let model = smo_train_binary(&px, &py, c, gamma, 1e-3, max_passes, seed)?;
            pair_models.push(PairModel {
                class_a,
                class_b,
                model,
            });
        }
    }
    Ok(SvmMultiModel {
        classes,
        pair_models,
        c,
        gamma,
    })
}

/// One-vs-one majority vote. Ties break toward the largest accumulated
/// |decision| among the tied classes, then class order.
pub fn predict(model: &SvmMultiModel, x: &EncodedVector) -> UsabilityGrade {
    let k = model.classes.len();
    let mut votes = vec![0usize; k];
    let mut margin = vec![0.0f64; k];
    let idx = |g: UsabilityGrade| model.classes.iter().position(|&c| c == g).unwrap();
    for pair in &model.pair_models {
        let d = pair.model.decision(x);
        let winner = if d >= 0.0 { pair.class_a } else { pair.class_b };
        let w = idx(winner);
        votes[w] += 1;
        margin[w] += d.abs();
    }
    let best_votes = *votes.iter().max().unwrap();
    let mut best: Option<usize> = None;
    for i in 0..k {
        if votes[i] == best_votes {
            match best {
                None => best = Some(i),
                Some(b) if margin[i] > margin[b] => best = Some(i),
                _ => {}
            }
        }
    }
    model.classes[best.unwrap()]
}

fn stratified_folds(
    y: &[UsabilityGrade],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, SvmError> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_members = vec![Vec::new(); folds];
    for &class in UsabilityGrade::ALL.iter() {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            return Err(SvmError::TooFewRowsPerClass {
                class,
                count: idx.len(),
                folds,
            });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_members[pos % folds].push(i);
        }
    }
    Ok(fold_members)
}

/// Exhaustive grid search scored by stratified k-fold CV accuracy.
/// Ties resolve toward larger C, then larger gamma.
pub fn grid_search(
    x: &[EncodedVector],
    y: &[UsabilityGrade],
    grid: &GridSpec,
    seed: u64,
) -> Result<GridSearchResult, SvmError> {
    let folds = stratified_folds(y, grid.folds, seed)?;
    let mut cv_table = vec![vec![0.0; grid.gamma_values.len()]; grid.c_values.len()];

    for (ci, &c) in grid.c_values.iter().enumerate() {
        for (gi, &gamma) in grid.gamma_values.iter().enumerate() {
            let mut correct = 0usize;
            let mut total = 0usize;
            for held in &folds {
                let held_set: std::collections::HashSet<usize> = held.iter().copied().collect();
                let mut tx = Vec::new();
                let mut ty = Vec::new();
                for i in 0..x.len() {
                    if !held_set.contains(&i) {
                        tx.push(x[i]);
                        ty.push(y[i]);
                    }
                }
                let model = train_multi(&tx, &ty, c, gamma, seed)?;
                for &i in held {
                    total += 1;
                    if predict(&model, &x[i]) == y[i] {
                        correct += 1;
                    }
                }
            }
            cv_table[ci][gi] = correct as f64 / total as f64;
        }
    }

    let mut best = (0usize, 0usize);
    for ci in 0..grid.c_values.len() {
        for gi in 0..grid.gamma_values.len() {
            let better = cv_table[ci][gi] > cv_table[best.0][best.1]
                || (cv_table[ci][gi] == cv_table[best.0][best.1]
                    && (grid.c_values[ci], grid.gamma_values[gi])
                        > (grid.c_values[best.0], grid.gamma_values[best.1]));
            if better {
                best = (ci, gi);
            }
        }
    }

    Ok(GridSearchResult {
        c: grid.c_values[best.0],
        gamma: grid.gamma_values[best.1],
        cv_table,
    })
}

/// Persisted model: the ensemble plus the scaler that produced its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModelFile {
    pub version: String,
    pub classes: Vec<UsabilityGrade>,
    pub c: f64,
    pub gamma: f64,
    pub scaler: ScalerParams,
    pub pairs: Vec<PairModel>,
}

impl SvmModelFile {
    pub fn new(model: &SvmMultiModel, scaler: ScalerParams) -> Self {
        SvmModelFile {
            version: MODEL_FILE_VERSION.to_owned(),
            classes: model.classes.clone(),
            c: model.c,
            gamma: model.gamma,
            scaler,
            pairs: model.pair_models.clone(),
        }
    }

    pub fn into_model(self) -> (SvmMultiModel, ScalerParams) {
        (
            SvmMultiModel {
                classes: self.classes,
                pair_models: self.pairs,
                c: self.c,
                gamma: self.gamma,
            },
            self.scaler,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SvmError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| SvmError::ModelFile(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SvmError> {
        let text = std::fs::read_to_string(path)?;
        let file: SvmModelFile =
            serde_json::from_str(&text).map_err(|e| SvmError::ModelFile(e.to_string()))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(SvmError::ModelFile(format!(
                "unsupported model version {:?}, expected {:?}",
                file.version, MODEL_FILE_VERSION
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grade::UsabilityGrade::*;
    use rand::Rng;

    #[test]
    fn kernel_identities() {
        let x = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(rbf_kernel(&x, &x, 0.7), 1.0);
        let y = [1.0, 0.0, 0.0, 0.0];
        let z = [0.0, 0.0, 0.0, 0.0];
        assert!((rbf_kernel(&z, &y, 1.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((rbf_kernel(&x, &y, 1e-12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_pair_classified() {
        let x = vec![[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]];
        let y = vec![1.0, -1.0];
        let m = smo_train_binary(&x, &y, 1000.0, 0.001, 1e-3, 100, 0).unwrap();
        assert!(m.decision(&x[0]) > 0.0);
        assert!(m.decision(&x[1]) < 0.0);
    }

    #[test]
    fn xor_with_rbf() {
        let x = vec![
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ];
        let y = vec![1.0, 1.0, -1.0, -1.0];
        let m = smo_train_binary(&x, &y, 1000.0, 1.0, 1e-3, 400, 1).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!(m.decision(xi) * yi > 0.0, "misclassified {xi:?}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![[0.0; 4], [1.0; 4]];
        assert!(matches!(
            smo_train_binary(&x, &[1.0, 1.0], 1.0, 0.1, 1e-3, 10, 0),
            Err(SvmError::SingleClassInput)
        ));
    }

    #[test]
    fn dual_coefs_bounded_by_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = 5.0;
        let x: Vec<EncodedVector> = (0..40)
            .map(|i| {
                let center = if i < 20 { -1.0 } else { 1.0 };
                std::array::from_fn(|_| center + rng.gen_range(-0.8..0.8))
            })
            .collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { -1.0 }).collect();
        let m = smo_train_binary(&x, &y, c, 0.5, 1e-3, 400, 2).unwrap();
        for &coef in &m.dual_coefs {
            assert!(coef.abs() <= c + 1e-9);
        }
        assert!(!m.support_vectors.is_empty());
    }

    fn blobs_5class(n_per: usize, seed: u64) -> (Vec<EncodedVector>, Vec<UsabilityGrade>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: [EncodedVector; 5] = [
            [-2.0, -2.0, 0.0, 0.0],
            [2.0, 2.0, 0.0, 0.0],
            [-2.0, 2.0, 1.0, 0.0],
            [2.0, -2.0, 0.0, 1.0],
            [0.0, 0.0, 2.0, 2.0],
        ];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (g, c) in UsabilityGrade::ALL.iter().zip(&centers) {
            for _ in 0..n_per {
                x.push(std::array::from_fn(|j| c[j] + rng.gen_range(-0.3..0.3)));
                y.push(*g);
            }
        }
        (x, y)
    }

    #[test]
    fn multi_model_has_all_pairs_and_fits_blobs() {
        let (x, y) = blobs_5class(12, 3);
        let m = train_multi(&x, &y, 10.0, 0.5, 0).unwrap();
        assert_eq!(m.classes.len(), 5);
        assert_eq!(m.pair_models.len(), 10);
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| predict(&m, xi) == yi)
            .count();
        assert!(correct as f64 / x.len() as f64 > 0.98);
    }

    #[test]
    fn predict_matches_brute_force_vote() {
        let (x, y) = blobs_5class(10, 4);
        let m = train_multi(&x, &y, 10.0, 0.5, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let probe: EncodedVector = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let got = predict(&m, &probe);

            let mut votes: std::collections::HashMap<UsabilityGrade, (usize, f64)> =
                Default::default();
            for pair in &m.pair_models {
                let d = pair.model.decision(&probe);
                let w = if d >= 0.0 { pair.class_a } else { pair.class_b };
                let e = votes.entry(w).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += d.abs();
            }
            let expected = m
                .classes
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    let va = votes.get(&a).copied().unwrap_or((0, 0.0));
                    let vb = votes.get(&b).copied().unwrap_or((0, 0.0));
                    va.0.cmp(&vb.0)
                        .then(va.1.total_cmp(&vb.1))
                        // class order wins ties: earlier class beats later
                        .then_with(|| {
                            let ia = m.classes.iter().position(|&c| c == a).unwrap();
                            let ib = m.classes.iter().position(|&c| c == b).unwrap();
                            ib.cmp(&ia)
                        })
                })
                .unwrap();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn kkt_margin_on_non_bound_svs() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let x: Vec<EncodedVector> = (0..n)
                .map(|i| {
                    let center = if i < n / 2 { -1.5 } else { 1.5 };
                    std::array::from_fn(|_| center + rng.gen_range(-0.5..0.5))
                })
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|i| if i < n / 2 { 1.0 } else { -1.0 })
                .collect();
            let c = 10.0;
            let m = smo_train_binary(&x, &y, c, 0.5, 1e-3, 600, seed).unwrap();
            for (i, xi) in x.iter().enumerate() {
                // recover alpha_i: |dual_coef| for the matching SV
                if let Some(pos) = m.support_vectors.iter().position(|sv| sv == xi) {
                    let a = m.dual_coefs[pos].abs();
                    if a > 1e-6 && a < c - 1e-6 {
                        let margin = y[i] * m.decision(xi);
                        assert!(
                            (margin - 1.0).abs() <= 1e-2,
                            "seed {seed}: non-bound sv margin {margin}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn grid_search_returns_table_argmax() {
        let (x, y) = blobs_5class(9, 8);
        let grid = GridSpec {
            c_values: vec![0.1, 10.0],
            gamma_values: vec![1.0, 0.01],
            folds: 3,
        };
        let res = grid_search(&x, &y, &grid, 0).unwrap();
        assert!(grid.c_values.contains(&res.c));
        assert!(grid.gamma_values.contains(&res.gamma));
        let chosen = res.cv_table[grid.c_values.iter().position(|&c| c == res.c).unwrap()]
            [grid.gamma_values.iter().position(|&g| g == res.gamma).unwrap()];
        for row in &res.cv_table {
            for &v in row {
                assert!(chosen >= v);
            }
        }
    }

    #[test]
    fn grid_search_rejects_thin_classes() {
        let x = vec![[0.0; 4], [1.0; 4], [2.0; 4], [3.0; 4]];
        let y = vec![Excellent, Excellent, Excellent, Bad];
        assert!(matches!(
            grid_search(&x, &y, &GridSpec::default(), 0),
            Err(SvmError::TooFewRowsPerClass { .. })
        ));
    }

    #[test]
    fn model_file_roundtrip_predicts_identically() {
        let (x, y) = blobs_5class(8, 9);
        let m = train_multi(&x, &y, 10.0, 0.5, 0).unwrap();
        let scaler = ScalerParams {
            mean: [0.0; 4],
            std: [1.0; 4],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        SvmModelFile::new(&m, scaler).save(&path).unwrap();
        let (loaded, _) = SvmModelFile::load(&path).unwrap().into_model();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let probe: EncodedVector = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            assert_eq!(predict(&m, &probe), predict(&loaded, &probe));
        }
    }

    #[test]
    fn corrupt_model_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, "{\"version\": \"nope\"}").unwrap();
        assert!(matches!(
            SvmModelFile::load(&path),
            Err(SvmError::ModelFile(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs_5class(10, 12);
        let a = train_multi(&x, &y, 10.0, 0.5, 42).unwrap();
        let b = train_multi(&x, &y, 10.0, 0.5, 42).unwrap();
        for (pa, pb) in a.pair_models.iter().zip(&b.pair_models) {
            assert_eq!(pa.model.dual_coefs, pb.model.dual_coefs);
            assert_eq!(pa.model.bias, pb.model.bias);
        }
    }
}
