//! Random forest: bagged Gini-impurity decision trees with per-node random
//! feature subsets.
//!
//! Each tree's randomness (bootstrap resample and feature shuffles) comes
//! from a rng seeded by the forest seed and the tree index, so growing trees
//! in parallel cannot change the result.

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, RfConfig, NUM_CLASSES};
use crate::error::Result;
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf { class: u8 },
    /// Rows with `feature <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// One decision tree as a node arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub(crate) trees: Vec<Tree>,
}

impl ForestModel {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    /// Majority vote over trees; ties go to the smallest class code.
    pub fn predict(&self, rows: &Array2<f64>) -> Vec<u8> {
        let mut row_buf = vec![0.0; rows.ncols()];
        (0..rows.nrows())
            .map(|i| {
                for (dst, src) in row_buf.iter_mut().zip(rows.row(i)) {
                    *dst = *src;
                }
                let mut votes = [0.0f64; NUM_CLASSES];
                for tree in &self.trees {
                    votes[tree.predict_row(&row_buf) as usize] += 1.0;
                }
                argmax(&votes) as u8
            })
            .collect()
    }
}

pub(crate) fn train_forest(
    cfg: &RfConfig,
    rows: &Array2<f64>,
    labels: &[u8],
) -> Result<ForestModel> {
    let mtry = cfg
        .features_per_split
        .unwrap_or_else(|| (rows.ncols() as f64).sqrt().ceil() as usize)
        .min(rows.ncols());
    let trees: Vec<Tree> = (0..cfg.num_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["tree", &i.to_string()]));
            let n = rows.nrows();
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(rows.view(), labels, sample, cfg, mtry, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees })
}

struct Frame {
    rows: Vec<usize>,
    depth: usize,
    /// Arena slot reserved for this node.
    slot: usize,
}

fn grow_tree(
    data: ArrayView2<f64>,
    labels: &[u8],
    root_rows: Vec<usize>,
    cfg: &RfConfig,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = vec![Node::Leaf { class: 0 }];
    let mut stack = vec![Frame { rows: root_rows, depth: 0, slot: 0 }];
    let mut features: Vec<usize> = (0..data.ncols()).collect();

    while let Some(frame) = stack.pop() {
        let counts = class_counts(labels, &frame.rows);
        let depth_ok = cfg.max_depth.is_none_or(|d| frame.depth < d);
        let splittable = depth_ok
            && frame.rows.len() >= 2 * cfg.min_samples_leaf
            && counts.iter().filter(|&&c| c > 0).count() > 1;

        let split = if splittable {
            best_split(data, labels, &frame.rows, &counts, cfg.min_samples_leaf, mtry, &mut features, rng)
        } else {
            None
        };

        match split {
            None => nodes[frame.slot] = Node::Leaf { class: argmax_counts(&counts) },
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = frame
                    .rows
                    .iter()
                    .partition(|&&r| data[[r, feature]] <= threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { class: 0 });
                nodes.push(Node::Leaf { class: 0 });
                nodes[frame.slot] = Node::Split { feature, threshold, left, right };
                stack.push(Frame { rows: right_rows, depth: frame.depth + 1, slot: right });
                stack.push(Frame { rows: left_rows, depth: frame.depth + 1, slot: left });
            }
        }
    }
    Tree { nodes }
}

fn class_counts(labels: &[u8], rows: &[usize]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for &r in rows {
        counts[labels[r] as usize] += 1;
    }
    counts
}

fn argmax_counts(counts: &[usize; NUM_CLASSES]) -> u8 {
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    argmax(&as_f) as u8
}

/// Find the best Gini split over a random feature subset.
///
/// Features are visited in shuffled order until `mtry` non-constant ones
/// have been scored; constant features do not count against the budget, so
/// a node splits whenever any feature still varies.
#[allow(clippy::too_many_arguments)]
fn best_split(
    data: ArrayView2<f64>,
    labels: &[u8],
    rows: &[usize],
    counts: &[usize; NUM_CLASSES],
    min_leaf: usize,
    mtry: usize,
    features: &mut [usize],
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    features.shuffle(rng);
    let parent_impurity = gini(counts, rows.len());
    let mut best: Option<(usize, f64, f64)> = None;
    let mut scored = 0;
    let mut order: Vec<(f64, u8)> = Vec::with_capacity(rows.len());

    for &feature in features.iter() {
        if scored >= mtry {
            break;
        }
        order.clear();
        order.extend(rows.iter().map(|&r| (data[[r, feature]], labels[r])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        if order[0].0 == order[order.len() - 1].0 {
            continue; // constant here; keep scanning without spending budget
        }
        scored += 1;

        let n = order.len();
        let mut left = [0usize; NUM_CLASSES];
        let mut right = *counts;
        for i in 0..n - 1 {
            let (value, label) = order[i];
            left[label as usize] += 1;
            right[label as usize] -= 1;
            let next = order[i + 1].0;
            if value == next {
                continue; // can't cut between equal values
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let weighted = (n_left as f64 * gini(&left, n_left)
                + n_right as f64 * gini(&right, n_right))
                / n as f64;
            if weighted + 1e-12 < parent_impurity
                && best.is_none_or(|(_, _, s)| weighted < s)
            {
                best = Some((feature, 0.5 * (value + next), weighted));
            }
        }
    }
    best.map(|(feature, threshold, _)| (feature, threshold))
}

fn gini(counts: &[usize; NUM_CLASSES], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::super::bench::*;
    use super::super::{predict, train, ClassifierConfig};
    use super::*;

    fn rf(num_trees: usize, bootstrap: bool, seed: u64) -> ClassifierConfig {
        ClassifierConfig::Rf(RfConfig { num_trees, bootstrap, seed, ..RfConfig::default() })
    }

    #[test]
    fn fifty_trees_separate_clean_blobs() {
        let (train_rows, train_labels) = blobs(200, 1.0, 21);
        let (test_rows, test_labels) = blobs(60, 1.0, 22);
        // The construction is only valid if a nearest-centroid rule already
        // separates it.
        let oracle = nearest_centroid(&train_rows, &train_labels);
        assert_eq!(accuracy(&train_labels, &oracle), 1.0);

        let (train_m, test_m) =
            standardized((train_rows, train_labels), (test_rows, test_labels.clone()));
        let model = train(&rf(50, true, 3), &train_m).unwrap();
        let pred = predict(&model, &test_m.rows).unwrap();
        let acc = accuracy(&test_labels, &pred);
        assert!(acc >= 0.98, "holdout accuracy {acc}");
    }

    #[test]
    fn single_unpruned_tree_memorizes_training_rows() {
        let (rows, labels) = blobs(40, 2.5, 23);
        let data = matrix_of(rows.clone(), labels.clone());
        let model = train(&rf(1, false, 4), &data).unwrap();
        assert_eq!(predict(&model, &rows).unwrap(), labels);
    }

    #[test]
    fn more_trees_do_not_hurt_on_average() {
        // Overlapping blobs, so depth-unlimited single trees overfit and
        // averaging more of them helps. Mean holdout accuracy over 10 seeds
        // must not decrease from 5 to 100 trees.
        let (train_rows, train_labels) = blobs(150, 2.2, 24);
        let (test_rows, test_labels) = blobs(50, 2.2, 25);
        let (train_m, test_m) =
            standardized((train_rows, train_labels), (test_rows, test_labels.clone()));
        let mean_acc = |num_trees: usize| -> f64 {
            (0..10)
                .map(|seed| {
                    let model = train(&rf(num_trees, true, seed), &train_m).unwrap();
                    accuracy(&test_labels, &predict(&model, &test_m.rows).unwrap())
                })
                .sum::<f64>()
                / 10.0
        };
        let few = mean_acc(5);
        let many = mean_acc(100);
        assert!(many >= few, "100 trees {many} vs 5 trees {few}");
    }

    #[test]
    fn max_depth_one_gives_stumps() {
        let (rows, labels) = blobs(30, 1.0, 26);
        let cfg = ClassifierConfig::Rf(RfConfig {
            num_trees: 3,
            max_depth: Some(1),
            bootstrap: false,
            seed: 1,
            ..RfConfig::default()
        });
        let model = train(&cfg, &matrix_of(rows, labels)).unwrap();
        let super::super::ModelKind::Forest(f) = &model.kind else { panic!() };
        for tree in &f.trees {
            assert!(tree.nodes.len() <= 3, "stump has {} nodes", tree.nodes.len());
        }
    }

    #[test]
    fn min_samples_leaf_bounds_leaf_size() {
        let (rows, labels) = blobs(40, 2.5, 27);
        let cfg = ClassifierConfig::Rf(RfConfig {
            num_trees: 5,
            min_samples_leaf: 10,
            bootstrap: false,
            seed: 2,
            ..RfConfig::default()
        });
        let data = matrix_of(rows.clone(), labels);
        let model = train(&cfg, &data).unwrap();
        let super::super::ModelKind::Forest(f) = &model.kind else { panic!() };
        for tree in &f.trees {
            // Count rows reaching each leaf by pushing the training set down.
            let mut reach = vec![0usize; tree.nodes.len()];
            for i in 0..rows.nrows() {
                let mut at = 0;
                loop {
                    reach[at] += 1;
                    match &tree.nodes[at] {
                        Node::Leaf { .. } => break,
                        Node::Split { feature, threshold, left, right } => {
                            at = if rows[[i, *feature]] <= *threshold { *left } else { *right };
                        }
                    }
                }
            }
            for (node, &count) in tree.nodes.iter().zip(&reach) {
                if let Node::Leaf { .. } = node {
                    assert!(count >= 10, "leaf holds {count} rows");
                }
            }
        }
    }

    #[test]
    fn gini_basics() {
        assert_eq!(gini(&[10, 0, 0], 10), 0.0);
        let g = gini(&[5, 5, 0], 10);
        assert!((g - 0.5).abs() < 1e-12);
        let g = gini(&[4, 4, 4], 12);
        assert!((g - 2.0 / 3.0).abs() < 1e-12);
    }
}
