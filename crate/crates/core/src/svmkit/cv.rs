use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{svm_train, SvmParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Fold index of every sample.
    pub folds: Vec<usize>,
}

/// Stratified fold assignment: each class is shuffled with the seeded
/// generator and dealt round-robin, continuing where the previous class
/// stopped.
pub fn stratified_folds(y: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut folds = vec![0; y.len()];
    let mut next = 0;
    for c in classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if members.len() < k {
            log::warn!("class {c} has {} samples, fewer than {k} folds", members.len());
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Stratified k-fold cross-validation accuracy. Each fold trains on the
/// remaining folds only, standardization included.
pub fn kfold_cv(
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
    class_weights: &[f64],
    params: &SvmParams,
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    let folds = stratified_folds(y, k, seed)?;
    let accs: Vec<Option<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Option<f64>> {
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            if test.is_empty() {
                return Ok(None);
            }
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = svm_train(&xt, &yt, num_classes, class_weights, params, seed)?;
            let mut correct = 0usize;
            for &i in &test {
                if model.predict_label(&x[i])? == y[i] {
                    correct += 1;
                }
            }
            Ok(Some(correct as f64 / test.len() as f64))
        })
        .collect::<Result<_>>()?;
    let fold_accuracies: Vec<f64> = accs.into_iter().flatten().collect();
    Ok(CvResult {
        mean_accuracy: fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64,
        fold_accuracies,
        folds,
    })
}
