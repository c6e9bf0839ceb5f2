//! Kernel SVM toolkit: z-scoring, one-vs-one RBF machines trained by SMO,
//! calibrated class probabilities, stratified cross-validation and metrics.

mod cv;
mod metrics;
mod probability;
mod smo;
mod standardize;

pub use cv::{kfold_cv, stratified_folds, CvResult};
pub use metrics::{evaluate, roc_auc, ConfusionMatrix, Metrics, RocCurve, RocPoint};
pub use probability::{couple, platt_fit, sigmoid_predict};
pub use smo::{kkt_violation, rbf, solve, BinaryProblem, BinarySolution};
pub use standardize::{standardize_apply, standardize_fit, StandardizationStats};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub cache_mb: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            eps: 1e-3,
            max_iter: 10_000_000,
            cache_mb: 200,
        }
    }
}

/// One-vs-one machine separating `pair.0` (label +1) from `pair.1` (-1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub pair: (usize, usize),
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "platt_A")]
    pub platt_a: f64,
    #[serde(rename = "platt_B")]
    pub platt_b: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
}

impl BinaryMachine {
    /// `Σ y_i α_i K(s_i, z) + bias` for a standardized input.
    pub fn decision(&self, z: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (&a, &y))| a * y * rbf(sv, z, gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn dual_balance(&self) -> f64 {
        self.alphas.iter().zip(&self.labels).map(|(a, y)| a * y).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSvm {
    /// Size of the label space; labels are `0..num_classes`.
    pub num_classes: usize,
    /// Labels present in training, ascending.
    pub trained_classes: Vec<usize>,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub class_weights: Vec<f64>,
    pub standardization: StandardizationStats,
    pub machines: Vec<BinaryMachine>,
}

/// Probabilities over the full label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    pub probs: Vec<f64>,
}

impl ClassProbabilities {
    /// Labels by descending probability, ties by ascending label.
    pub fn ranking(&self) -> Vec<usize> {
        let mut r: Vec<usize> = (0..self.probs.len()).collect();
        r.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        r
    }

    pub fn argmax(&self) -> usize {
        self.ranking()[0]
    }
}

fn check_finite(rows: &[Vec<f64>], d: usize) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::InvalidFeature(format!("row {i} has {} values, expected {d}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature(format!("row {i} column {j} is not finite")));
        }
    }
    Ok(())
}

/// Trains one-vs-one RBF machines with `γ = 1/d` and per-class penalty
/// `class_weights[c] · C`.
///
/// Rows are put in a canonical order first, so the model does not depend on
/// the order of the training data. `seed` is accepted for reproducibility
/// bookkeeping; the solver itself draws no random numbers.
pub fn svm_train(
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
    class_weights: &[f64],
    params: &SvmParams,
    seed: u64,
) -> Result<TrainedSvm> {
    let _ = seed;
    if x.len() != y.len() {
        return Err(Error::InvalidTrainingSet("feature and label counts differ".into()));
    }
    if x.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::InvalidFeature("zero-length feature vectors".into()));
    }
    check_finite(x, d)?;
    if class_weights.len() != num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} class weights for {num_classes} classes",
            class_weights.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidTrainingSet(format!("label {bad} outside 0..{num_classes}")));
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidTrainingSet(format!("need at least 2 classes, got {}", classes.len())));
    }

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            x[a].iter()
                .zip(&x[b])
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let labels: Vec<usize> = order.iter().map(|&i| y[i]).collect();
    let standardization = standardize_fit(&rows)?;
    let z = standardize_apply(&rows, &standardization);
    let gamma = 1.0 / d as f64;

    let pairs: Vec<(usize, usize)> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| classes[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let cache_bytes = params.cache_mb << 20;
    let machines: Vec<BinaryMachine> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let xs: Vec<&[f64]> = idx.iter().map(|&i| z[i].as_slice()).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let upper: Vec<f64> = idx.iter().map(|&i| class_weights[labels[i]] * params.c).collect();
            let problem = BinaryProblem {
                x: &xs,
                y: &ys,
                upper: &upper,
                gamma,
            };
            let sol = solve(&problem, params.eps, params.max_iter, cache_bytes);
            let dec: Vec<f64> = xs
                .iter()
                .map(|xi| {
                    xs.iter()
                        .zip(sol.alpha.iter().zip(&ys))
                        .filter(|(_, (&al, _))| al > 0.0)
                        .map(|(xj, (&al, &yj))| al * yj * rbf(xj, xi, gamma))
                        .sum::<f64>()
                        - sol.rho
                })
                .collect();
            let positive: Vec<bool> = ys.iter().map(|&v| v > 0.0).collect();
            let (platt_a, platt_b) = platt_fit(&dec, &positive);
            let sv: Vec<usize> = (0..xs.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
            BinaryMachine {
                pair: (a, b),
                support_vectors: sv.iter().map(|&i| xs[i].to_vec()).collect(),
                alphas: sv.iter().map(|&i| sol.alpha[i]).collect(),
                labels: sv.iter().map(|&i| ys[i]).collect(),
                bias: -sol.rho,
                platt_a,
                platt_b,
                kkt_violation: sol.kkt_violation,
                iterations: sol.iterations,
            }
        })
        .collect();
    Ok(TrainedSvm {
        num_classes,
        trained_classes: classes,
        gamma,
        c: params.c,
        class_weights: class_weights.to_vec(),
        standardization,
        machines,
    })
}

impl TrainedSvm {
    pub fn dimension(&self) -> usize {
        self.standardization.dimension()
    }

    /// Class probabilities for a raw (unstandardized) feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        if x.len() != self.dimension() {
            return Err(Error::InvalidFeature(format!(
                "expected {} features, got {}",
                self.dimension(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature("non-finite feature value".into()));
        }
        let z = self.standardization.apply(x);
        let k = self.trained_classes.len();
        let pos = |label: usize| self.trained_classes.binary_search(&label).expect("machine label is a trained class");
        let mut r = vec![vec![0.0; k]; k];
        for m in &self.machines {
            let p = sigmoid_predict(m.decision(&z, self.gamma), m.platt_a, m.platt_b);
            let (i, j) = (pos(m.pair.0), pos(m.pair.1));
            r[i][j] = p;
            r[j][i] = 1.0 - p;
        }
        let p = couple(&r);
        let mut probs = vec![0.0; self.num_classes];
        for (ci, &label) in self.trained_classes.iter().enumerate() {
            probs[label] = p[ci];
        }
        Ok(ClassProbabilities { probs })
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict(x)?.argmax())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let cx = if c == 0 { -2.0 } else { 2.0 };
            x.push(vec![cx + rng.random_range(-0.8..0.8), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(60, 1);
        let m = svm_train(&x, &y, 2, &[1.0, 1.0], &SvmParams::default(), 0).unwrap();
        assert_eq!(m.gamma, 0.5);
        for (xi, &yi) in x.iter().zip(&y) {
            let p = m.predict(xi).unwrap();
            assert_eq!(p.argmax(), yi);
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let mach = &m.machines[0];
        assert!(mach.kkt_violation <= 1e-3);
        assert!(mach.dual_balance().abs() < 1e-6);
        assert!(mach.alphas.iter().all(|&a| a > 0.0 && a <= 1.0 + 1e-12));
    }

    #[test]
    fn xor_is_separated() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![0, 0, 1, 1];
        let params = SvmParams {
            c: 10.0,
            ..Default::default()
        };
        let m = svm_train(&x, &y, 2, &[1.0, 1.0], &params, 0).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let z = m.standardization.apply(xi);
            let f = m.machines[0].decision(&z, m.gamma);
            assert_eq!(f > 0.0, yi == 0, "decision {f}");
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let (x, y) = blobs(40, 3);
        let a = svm_train(&x, &y, 2, &[1.0, 1.0], &SvmParams::default(), 0).unwrap();
        let mut idx: Vec<usize> = (0..40).rev().collect();
        idx.swap(3, 17);
        let xr: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let yr: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        let b = svm_train(&xr, &yr, 2, &[1.0, 1.0], &SvmParams::default(), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_weight_scales_bound() {
        let (x, y) = blobs(40, 4);
        let m = svm_train(&x, &y, 2, &[10.0, 1.0], &SvmParams::default(), 0).unwrap();
        let mach = &m.machines[0];
        for (&a, &l) in mach.alphas.iter().zip(&mach.labels) {
            let bound = if l > 0.0 { 10.0 } else { 1.0 };
            assert!(a <= bound + 1e-12);
        }
    }

    #[test]
    fn errors() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            svm_train(&x, &[0, 0], 2, &[1.0, 1.0], &SvmParams::default(), 0),
            Err(Error::InvalidTrainingSet(_))
        ));
        let bad = vec![vec![1.0], vec![f64::NAN]];
        assert!(matches!(
            svm_train(&bad, &[0, 1], 2, &[1.0, 1.0], &SvmParams::default(), 0),
            Err(Error::InvalidFeature(_))
        ));
        let m = svm_train(&x, &[0, 1], 2, &[1.0, 1.0], &SvmParams::default(), 0).unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::InvalidFeature(_))));
    }

    #[test]
    fn symmetric_midpoint_is_even() {
        let x = vec![vec![-1.0, 0.0], vec![-1.0, 0.5], vec![1.0, 0.0], vec![1.0, 0.5]];
        let m = svm_train(&x, &[0, 0, 1, 1], 2, &[1.0, 1.0], &SvmParams::default(), 0).unwrap();
        let p = m.predict(&[0.0, 0.25]).unwrap();
        assert!((p.probs[0] - 0.5).abs() <= 0.05, "{:?}", p.probs);
    }

    #[test]
    fn absent_class_ranks_last() {
        let (x, y) = blobs(20, 5);
        let y: Vec<usize> = y.iter().map(|&c| c * 2).collect();
        let m = svm_train(&x, &y, 4, &[1.0; 4], &SvmParams::default(), 0).unwrap();
        let p = m.predict(&x[0]).unwrap();
        assert_eq!(p.probs.len(), 4);
        assert_eq!(p.probs[1], 0.0);
        assert_eq!(&p.ranking()[2..], &[1, 3]);
    }

    #[test]
    fn ranking_breaks_ties_by_label() {
        let p = ClassProbabilities {
            probs: vec![0.2, 0.3, 0.3, 0.2],
        };
        assert_eq!(p.ranking(), vec![1, 2, 0, 3]);
    }
}
