//! Linear SVM trained one-vs-rest by stochastic subgradient descent on the
//! L2-regularized hinge loss.
//!
//! The step size follows the classic schedule `eta_t = 1/(lambda t)` with
//! `lambda = 1/(C n)`, so the decay `w <- (1 - eta_t lambda) w` shrinks the
//! weights by exactly `1/t` per visited sample. The bias is unregularized.
//!
//! The returned hyperplane is the average of the iterates visited during the
//! final epoch (tail averaging). The objective is strongly convex, so the
//! iterates orbit a unique optimum; averaging one full pass over the data
//! cancels the order-dependent oscillation that a single final iterate keeps,
//! which matters when test rows sit close to the decision surface.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, SvmConfig};
use crate::util::derive_seed;

/// One hyperplane per class present in training, ascending class code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub(crate) classes: Vec<u8>,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<f64>,
}

impl SvmModel {
    /// Argmax of the per-class decision values; ties go to the smallest
    /// class code.
    pub fn predict(&self, rows: &Array2<f64>) -> Vec<u8> {
        (0..rows.nrows())
            .map(|i| {
                let row = rows.row(i);
                let scores: Vec<f64> = self
                    .weights
                    .iter()
                    .zip(&self.biases)
                    .map(|(w, b)| {
                        row.iter().zip(w).map(|(x, wj)| x * wj).sum::<f64>() + b
                    })
                    .collect();
                self.classes[argmax(&scores)]
            })
            .collect()
    }

    /// Decision value of every machine for one row.
    pub fn decision_values(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| row.iter().zip(w).map(|(x, wj)| x * wj).sum::<f64>() + b)
            .collect()
    }
}

pub(crate) fn train_svm(
    cfg: &SvmConfig,
    rows: &Array2<f64>,
    labels: &[u8],
    classes: &[u8],
) -> SvmModel {
    let n = rows.nrows();
    let d = rows.ncols();
    let lambda = 1.0 / (cfg.c * n as f64);
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());

    for &class in classes {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["class", &class.to_string()]));
        let mut w = vec![0.0f64; d];
        let mut b = 0.0f64;
        let mut w_sum = vec![0.0f64; d];
        let mut b_sum = 0.0f64;
        let mut tail_steps = 0u64;
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0u64;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let tail = epoch + 1 == cfg.epochs;
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let decay = 1.0 - 1.0 / t as f64; // 1 - eta * lambda
                for wj in w.iter_mut() {
                    *wj *= decay;
                }
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let row = rows.row(i);
                let margin = y * (row.iter().zip(&w).map(|(x, wj)| x * wj).sum::<f64>() + b);
                if margin < 1.0 {
                    for (wj, x) in w.iter_mut().zip(row) {
                        *wj += eta * y * x;
                    }
                    b += eta * y;
                }
                if tail {
                    tail_steps += 1;
                    for (s, wj) in w_sum.iter_mut().zip(&w) {
                        *s += wj;
                    }
                    b_sum += b;
                }
            }
        }
        if tail_steps > 0 {
            let inv = 1.0 / tail_steps as f64;
            for (wj, s) in w.iter_mut().zip(&w_sum) {
                *wj = s * inv;
            }
            b = b_sum * inv;
        }
        weights.push(w);
        biases.push(b);
    }
    SvmModel { classes: classes.to_vec(), weights, biases }
}
