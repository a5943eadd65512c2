//! Multilayer perceptrons: rectified-linear hidden layers, 3-way softmax
//! output, cross-entropy loss, adaptive moment estimation, and inverted
//! dropout.
//!
//! Dropout scales kept activations by `1/(1-p)` during training, so
//! inference runs the plain forward pass; a model's predictions never depend
//! on its dropout setting. Initialization and batch order come from two
//! separate rng streams derived from the seed, so adding epochs does not
//! perturb the initial weights.

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{argmax, MlpConfig, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Step size used by the finite-difference gradient check.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Network shape. `Dnn4` and `Dnn6` are the two swept architectures;
/// `Custom` is for small diagnostic nets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MlpArch {
    /// Hidden layers [64, 64], no dropout.
    Dnn4,
    /// Hidden layers [64, 128, 128, 64] with dropout 0.5 after each
    /// 128-unit layer.
    Dnn6,
    /// Arbitrary hidden sizes; `dropout[i]` applies after hidden layer `i`.
    Custom { hidden: Vec<usize>, dropout: Vec<f64> },
}

impl MlpArch {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MlpArch::Dnn4 => "dnn4",
            MlpArch::Dnn6 => "dnn6",
            MlpArch::Custom { .. } => "custom",
        }
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        match self {
            MlpArch::Dnn4 => vec![64, 64],
            MlpArch::Dnn6 => vec![64, 128, 128, 64],
            MlpArch::Custom { hidden, .. } => hidden.clone(),
        }
    }

    /// Dropout probability after each hidden layer.
    pub fn dropout(&self) -> Vec<f64> {
        match self {
            MlpArch::Dnn4 => vec![0.0, 0.0],
            MlpArch::Dnn6 => vec![0.0, 0.5, 0.5, 0.0],
            MlpArch::Custom { dropout, .. } => dropout.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let hidden = self.hidden_sizes();
        let dropout = self.dropout();
        if hidden.is_empty() {
            return Err(Error::InvalidModelConfig("need at least one hidden layer".into()));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidModelConfig("hidden layer sizes must be positive".into()));
        }
        if dropout.len() != hidden.len() {
            return Err(Error::InvalidModelConfig(format!(
                "dropout list has {} entries for {} hidden layers",
                dropout.len(),
                hidden.len()
            )));
        }
        if dropout.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(Error::InvalidModelConfig(
                "dropout probabilities must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A trained perceptron: weights, biases, and the training loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Layer widths from input to output.
    pub(crate) sizes: Vec<usize>,
    /// Dropout probability after each hidden layer (training-time only).
    pub(crate) dropout: Vec<f64>,
    /// Per layer, `out x in`.
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    /// Mean training cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl MlpModel {
    /// Forward pass without dropout; argmax of the logits (softmax is
    /// monotone, so the exponentials are unnecessary for prediction). Ties
    /// go to the smallest class code.
    pub fn predict(&self, rows: &Array2<f64>) -> Vec<u8> {
        let net = Network {
            dropout: vec![0.0; self.dropout.len()],
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let logits = net.logits(rows, None);
        (0..logits.nrows())
            .map(|i| {
                let row: Vec<f64> = logits.row(i).to_vec();
                argmax(&row) as u8
            })
            .collect()
    }
}

/// Mutable network state used during training and gradient checking.
pub(crate) struct Network {
    dropout: Vec<f64>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

pub(crate) struct Gradients {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-batch dropout masks, one entry per hidden layer (`None` where p = 0).
type Masks = Vec<Option<Array2<f64>>>;

impl Network {
    /// He initialization: `N(0, sqrt(2 / fan_in))` weights. Biases get a
    /// small random value instead of the classic zero: with all-zero biases
    /// a dead input row leaves the next pre-activation exactly at the ReLU
    /// kink, where the loss is not differentiable and finite differences
    /// cannot agree with any subgradient.
    fn he_init(sizes: &[usize], dropout: &[f64], rng: &mut ChaCha8Rng) -> Network {
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let std = (2.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                std * rng.sample::<f64, _>(StandardNormal)
            }));
            biases.push(Array1::from_shape_fn(fan_out, |_| {
                0.1 * rng.sample::<f64, _>(StandardNormal)
            }));
        }
        Network { dropout: dropout.to_vec(), weights, biases }
    }

    fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Inverted-dropout masks for a batch: 0 with probability p, else
    /// `1/(1-p)`.
    fn draw_masks(&self, batch: usize, rng: &mut ChaCha8Rng) -> Masks {
        self.dropout
            .iter()
            .enumerate()
            .map(|(l, &p)| {
                if p == 0.0 {
                    None
                } else {
                    let width = self.weights[l].nrows();
                    let scale = 1.0 / (1.0 - p);
                    Some(Array2::from_shape_fn((batch, width), |_| {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            scale
                        }
                    }))
                }
            })
            .collect()
    }

    /// Output logits; keeps no intermediates. `masks` applies dropout after
    /// the corresponding hidden activation.
    fn logits(&self, rows: &Array2<f64>, masks: Option<&Masks>) -> Array2<f64> {
        let mut a = rows.clone();
        for l in 0..self.num_layers() {
            let mut z = a.dot(&self.weights[l].t());
            z += &self.biases[l];
            if l < self.num_layers() - 1 {
                z.mapv_inplace(|v| v.max(0.0));
                if let Some(mask) = masks.and_then(|m| m[l].as_ref()) {
                    z *= mask;
                }
            }
            a = z;
        }
        a
    }

    /// Mean cross-entropy of the batch under the current parameters.
    fn loss(&self, rows: &Array2<f64>, labels: &[u8], masks: Option<&Masks>) -> f64 {
        let logits = self.logits(rows, masks);
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            total += log_sum - logits[[i, label as usize]];
        }
        total / labels.len() as f64
    }

    /// Mean cross-entropy and its gradient w.r.t. every parameter.
    fn loss_and_grads(
        &self,
        rows: &Array2<f64>,
        labels: &[u8],
        masks: Option<&Masks>,
    ) -> (f64, Gradients) {
        let layers = self.num_layers();
        let n = rows.nrows();

        // Forward, retaining activations and pre-activation signs.
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
        activations.push(rows.clone());
        for l in 0..layers {
            let mut z = activations[l].dot(&self.weights[l].t());
            z += &self.biases[l];
            if l < layers - 1 {
                z.mapv_inplace(|v| v.max(0.0));
                if let Some(mask) = masks.and_then(|m| m[l].as_ref()) {
                    z *= mask;
                }
            }
            activations.push(z);
        }

        // Softmax probabilities and loss from the logits.
        let logits = &activations[layers];
        let mut probs = Array2::zeros((n, NUM_CLASSES));
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[[i, j]] = e;
                sum += e;
            }
            for j in 0..NUM_CLASSES {
                probs[[i, j]] /= sum;
            }
            loss += sum.ln() + max - logits[[i, label as usize]];
        }
        loss /= n as f64;

        // Backward: delta starts as (softmax - onehot) / n.
        let mut delta = probs;
        for (i, &label) in labels.iter().enumerate() {
            delta[[i, label as usize]] -= 1.0;
        }
        delta /= n as f64;

        let mut d_weights = vec![Array2::zeros((0, 0)); layers];
        let mut d_biases = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            d_weights[l] = delta.t().dot(&activations[l]);
            d_biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                // The stored activation already folds ReLU and the mask, so
                // its nonzero entries mark exactly the paths that were live.
                ndarray::Zip::from(&mut back)
                    .and(&activations[l])
                    .for_each(|g, &a| {
                        if a == 0.0 {
                            *g = 0.0;
                        }
                    });
                if let Some(mask) = masks.and_then(|m| m[l - 1].as_ref()) {
                    back *= mask;
                }
                delta = back;
            }
        }
        (loss, Gradients { weights: d_weights, biases: d_biases })
    }
}

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
}

impl AdamState {
    fn new(net: &Network) -> AdamState {
        AdamState {
            m_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        }
    }

    fn update(
        theta: &mut f64,
        g: f64,
        m: &mut f64,
        v: &mut f64,
        lr: f64,
        bias1: f64,
        bias2: f64,
    ) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }

    fn apply(&mut self, net: &mut Network, grads: &Gradients, lr: f64) {
        self.step += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .for_each(|t, &g, m, v| Self::update(t, g, m, v, lr, bias1, bias2));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .for_each(|t, &g, m, v| Self::update(t, g, m, v, lr, bias1, bias2));
        }
    }
}

pub(crate) fn train_mlp(cfg: &MlpConfig, rows: &Array2<f64>, labels: &[u8]) -> Result<MlpModel> {
    let hidden = cfg.arch.hidden_sizes();
    let dropout = cfg.arch.dropout();
    let mut sizes = vec![rows.ncols()];
    sizes.extend(&hidden);
    sizes.push(NUM_CLASSES);

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["init"]));
    let mut net = Network::he_init(&sizes, &dropout, &mut init_rng);
    let mut train_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["train"]));
    let mut adam = AdamState::new(&net);

    let n = rows.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut train_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = rows.select(Axis(0), chunk);
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let masks = net.draw_masks(chunk.len(), &mut train_rng);
            let (loss, grads) = net.loss_and_grads(&batch, &batch_labels, Some(&masks));
            loss_sum += loss * chunk.len() as f64;
            adam.apply(&mut net, &grads, cfg.learning_rate);
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok(MlpModel {
        sizes,
        dropout,
        weights: net.weights,
        biases: net.biases,
        epoch_losses,
    })
}

/// Compare analytic gradients against central finite differences over every
/// parameter of a freshly initialized net; returns the largest relative
/// error.
///
/// Meant for small diagnostic nets: at most 10 rows, 8 features, hidden
/// sizes up to 8, and no dropout.
pub fn gradient_check(cfg: &MlpConfig, rows: &Array2<f64>, labels: &[u8]) -> Result<f64> {
    cfg.validate()?;
    let hidden = cfg.arch.hidden_sizes();
    if cfg.arch.dropout().iter().any(|&p| p > 0.0) {
        return Err(Error::InvalidModelConfig(
            "gradient check requires dropout disabled".into(),
        ));
    }
    if rows.nrows() > 10 || rows.ncols() > 8 || hidden.iter().any(|&h| h > 8) {
        return Err(Error::InvalidModelConfig(format!(
            "gradient check is for tiny nets: got {} rows, {} features, hidden {:?}",
            rows.nrows(),
            rows.ncols(),
            hidden
        )));
    }
    if rows.nrows() == 0 || labels.len() != rows.nrows() {
        return Err(Error::InvalidModelConfig(
            "gradient check needs a non-empty batch with one label per row".into(),
        ));
    }

    let mut sizes = vec![rows.ncols()];
    sizes.extend(&hidden);
    sizes.push(NUM_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["init"]));
    let mut net = Network::he_init(&sizes, &cfg.arch.dropout(), &mut rng);
    let (_, grads) = net.loss_and_grads(rows, labels, None);

    let h = GRAD_CHECK_STEP;
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    };
    for l in 0..net.weights.len() {
        for idx in 0..net.weights[l].len() {
            let slot = net.weights[l].as_slice_mut().unwrap();
            let orig = slot[idx];
            slot[idx] = orig + h;
            let up = net.loss(rows, labels, None);
            net.weights[l].as_slice_mut().unwrap()[idx] = orig - h;
            let down = net.loss(rows, labels, None);
            net.weights[l].as_slice_mut().unwrap()[idx] = orig;
            check(grads.weights[l].as_slice().unwrap()[idx], (up - down) / (2.0 * h));
        }
        for idx in 0..net.biases[l].len() {
            let orig = net.biases[l][idx];
            net.biases[l][idx] = orig + h;
            let up = net.loss(rows, labels, None);
            net.biases[l][idx] = orig - h;
            let down = net.loss(rows, labels, None);
            net.biases[l][idx] = orig;
            check(grads.biases[l][idx], (up - down) / (2.0 * h));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::super::bench::*;
    use super::super::{predict, train, ClassifierConfig, ModelKind, SvmConfig};
    use super::*;

    fn mlp_cfg(arch: MlpArch, epochs: usize, seed: u64) -> ClassifierConfig {
        ClassifierConfig::Mlp(MlpConfig { epochs, seed, ..MlpConfig::new(arch) })
    }

    fn tiny_batch(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
        let labels = (0..rows).map(|i| (i % NUM_CLASSES) as u8).collect();
        (data, labels)
    }

    #[test]
    fn named_architectures_have_the_documented_shape() {
        assert_eq!(MlpArch::Dnn4.hidden_sizes(), vec![64, 64]);
        assert_eq!(MlpArch::Dnn4.dropout(), vec![0.0, 0.0]);
        assert_eq!(MlpArch::Dnn6.hidden_sizes(), vec![64, 128, 128, 64]);
        assert_eq!(MlpArch::Dnn6.dropout(), vec![0.0, 0.5, 0.5, 0.0]);
        assert!(MlpArch::Custom { hidden: vec![4, 0], dropout: vec![0.0, 0.0] }
            .validate()
            .is_err());
        assert!(MlpArch::Custom { hidden: vec![4], dropout: vec![1.0] }.validate().is_err());
        assert!(MlpArch::Custom { hidden: vec![4], dropout: vec![0.0, 0.0] }
            .validate()
            .is_err());
    }

    #[test]
    fn rings_need_the_nonlinearity() {
        // A two-layer net separates the concentric rings; a linear SVM on
        // the same rows cannot get far past chance.
        let (train_rows, train_labels) = rings(200, 0.15, 41);
        let (test_rows, test_labels) = rings(100, 0.15, 42);
        let (train_m, test_m) =
            standardized((train_rows, train_labels), (test_rows, test_labels.clone()));

        let model = train(&mlp_cfg(MlpArch::Dnn4, 30, 1), &train_m).unwrap();
        let acc = accuracy(&test_labels, &predict(&model, &test_m.rows).unwrap());
        assert!(acc >= 0.95, "mlp ring accuracy {acc}");

        let linear = train(
            &ClassifierConfig::Svm(SvmConfig { seed: 1, ..SvmConfig::default() }),
            &train_m,
        )
        .unwrap();
        let lin_acc = accuracy(&test_labels, &predict(&linear, &test_m.rows).unwrap());
        assert!(lin_acc <= 0.6, "linear ring accuracy {lin_acc}");
    }

    #[test]
    fn training_loss_decreases() {
        let (rows, labels) = blobs(100, 1.5, 43);
        let (train_m, _) = standardized((rows, labels), blobs(5, 1.5, 44));
        let model = train(&mlp_cfg(MlpArch::Dnn4, 6, 2), &train_m).unwrap();
        let ModelKind::Mlp(mlp) = &model.kind else { panic!() };
        assert_eq!(mlp.epoch_losses.len(), 6);
        assert!(
            mlp.epoch_losses[5] < mlp.epoch_losses[0],
            "losses {:?}",
            mlp.epoch_losses
        );
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let sizes = vec![4, 3, NUM_CLASSES];
        let model = MlpModel {
            sizes: sizes.clone(),
            dropout: vec![0.0],
            weights: vec![Array2::zeros((3, 4)), Array2::zeros((NUM_CLASSES, 3))],
            biases: vec![Array1::zeros(3), Array1::zeros(NUM_CLASSES)],
            epoch_losses: vec![],
        };
        let (rows, _) = tiny_batch(7, 4, 45);
        assert_eq!(model.predict(&rows), vec![0; 7]);
    }

    #[test]
    fn dropout_never_affects_inference() {
        // Same weights, dropout on vs off: predictions must match exactly.
        let (rows, labels) = blobs(60, 1.5, 46);
        let (train_m, _) = standardized((rows, labels), blobs(5, 1.5, 47));
        let model = train(&mlp_cfg(MlpArch::Dnn6, 2, 3), &train_m).unwrap();
        let ModelKind::Mlp(mlp) = &model.kind else { panic!() };
        assert_eq!(mlp.dropout, vec![0.0, 0.5, 0.5, 0.0]);
        let mut no_dropout = mlp.clone();
        no_dropout.dropout = vec![0.0; 4];
        let (probe, _) = tiny_batch(10, 2, 48);
        assert_eq!(mlp.predict(&probe), no_dropout.predict(&probe));
    }

    #[test]
    fn random_tiny_net_passes_the_gradient_check() {
        let arch = MlpArch::Custom { hidden: vec![6, 5], dropout: vec![0.0, 0.0] };
        let (rows, labels) = tiny_batch(8, 5, 49);
        let worst = gradient_check(&MlpConfig::new(arch), &rows, &labels).unwrap();
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_input_bias_gradients_match_finite_differences() {
        let arch = MlpArch::Custom { hidden: vec![4], dropout: vec![0.0] };
        let rows = Array2::zeros((6, 3));
        let labels = vec![0, 1, 2, 0, 1, 2];
        let worst = gradient_check(&MlpConfig::new(arch), &rows, &labels).unwrap();
        assert!(worst <= 1e-6, "max relative error {worst}");
    }

    #[test]
    fn output_layer_gradient_is_softmax_minus_onehot() {
        // Single sample: the output bias gradient must equal p - onehot
        // exactly, and the numeric oracle must agree.
        let arch = MlpArch::Custom { hidden: vec![4], dropout: vec![0.0] };
        let cfg = MlpConfig::new(arch);
        let (rows, _) = tiny_batch(1, 3, 50);
        let labels = vec![1u8];

        let sizes = vec![3, 4, NUM_CLASSES];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["init"]));
        let net = Network::he_init(&sizes, &[0.0], &mut rng);
        let (_, grads) = net.loss_and_grads(&rows, &labels, None);

        let logits = net.logits(&rows, None);
        let max = logits.row(0).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.row(0).iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..NUM_CLASSES {
            let expected = exps[j] / sum - if j == 1 { 1.0 } else { 0.0 };
            assert!(
                (grads.biases[1][j] - expected).abs() < 1e-12,
                "bias grad {} vs {}",
                grads.biases[1][j],
                expected
            );
        }
        let worst = gradient_check(&cfg, &rows, &labels).unwrap();
        assert!(worst <= 1e-4);
    }

    #[test]
    fn gradient_check_rejects_oversized_inputs() {
        let arch = MlpArch::Custom { hidden: vec![6], dropout: vec![0.0] };
        let (rows, labels) = tiny_batch(11, 5, 51);
        assert!(gradient_check(&MlpConfig::new(arch.clone()), &rows, &labels).is_err());
        let (rows, labels) = tiny_batch(4, 9, 52);
        assert!(gradient_check(&MlpConfig::new(arch), &rows, &labels).is_err());
        let big = MlpArch::Custom { hidden: vec![16], dropout: vec![0.0] };
        let (rows, labels) = tiny_batch(4, 4, 53);
        assert!(gradient_check(&MlpConfig::new(big), &rows, &labels).is_err());
        let dropped = MlpArch::Custom { hidden: vec![4], dropout: vec![0.5] };
        let (rows, labels) = tiny_batch(4, 4, 54);
        assert!(gradient_check(&MlpConfig::new(dropped), &rows, &labels).is_err());
    }
}
