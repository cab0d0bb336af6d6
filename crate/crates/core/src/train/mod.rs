//! Training of block-permuted diagonal networks with plain mini-batch SGD,
//! and conversion of pre-trained dense networks (projection, then
//! fine-tuning).

mod grad;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grad::{
    grad_conv, grad_fc, sgd_update, sgd_update_conv, ConvGradients, LayerGradients,
};

use crate::activation::Activation;
use crate::conv::BpdConvTensor;
use crate::data::Dataset;
use crate::error::{check_len, BpdError, Result};
use crate::matrix::{BpdMatrix, InitPolicy, PermPolicy};
use crate::project::{project_matrix, project_tensor, ProjectionNorm};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

impl Loss {
    /// Loss of one sample and its gradient with respect to the network output.
    pub fn evaluate<T: Scalar>(self, output: &[T], label: usize) -> (T, Vec<T>) {
        match self {
            Loss::SoftmaxCrossEntropy => {
                let max = output.iter().copied().fold(T::neg_infinity(), T::max);
                let exps: Vec<T> = output.iter().map(|&o| (o - max).exp()).collect();
                let sum: T = exps.iter().copied().sum();
                let probs: Vec<T> = exps.iter().map(|&e| e / sum).collect();
                let loss = -(probs[label].ln());
                let grad = probs
                    .iter()
                    .enumerate()
                    .map(|(k, &pk)| if k == label { pk - T::one() } else { pk })
                    .collect();
                (loss, grad)
            }
            Loss::MeanSquaredError => {
                let n = T::lit(output.len() as f64);
                let mut loss = T::zero();
                let grad = output
                    .iter()
                    .enumerate()
                    .map(|(k, &o)| {
                        let t = if k == label { T::one() } else { T::zero() };
                        loss += (o - t) * (o - t);
                        T::lit(2.0) * (o - t) / n
                    })
                    .collect();
                (loss / n, grad)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden-layer nonlinearity used by the model builders.
    pub activation: Activation,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 16,
            epochs: 20,
            seed: 0,
            activation: Activation::Relu,
            loss: Loss::SoftmaxCrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(BpdError::InvalidConfig(format!(
                "learning rate {} must be a finite non-negative number",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(BpdError::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T> {
    pub weights: BpdMatrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

/// Convolution over a fixed `width x height` feature map; output keeps the
/// spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub filter: BpdConvTensor<T>,
    /// One entry per output channel.
    pub bias: Vec<T>,
    pub width: usize,
    pub height: usize,
    pub activation: Activation,
}

impl<T: Scalar> FcLayer<T> {
    /// `rows x cols` layer with natural perms, seeded scaled-uniform weights
    /// and zero bias.
    pub fn new(
        rows: usize,
        cols: usize,
        block: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let weights = BpdMatrix::new(
            rows,
            cols,
            block,
            PermPolicy::Natural,
            InitPolicy::ScaledUniform { seed },
        )?;
        Ok(FcLayer {
            bias: vec![T::zero(); rows],
            weights,
            activation,
        })
    }
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: (usize, usize),
        map: (usize, usize),
        block: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let filter = BpdConvTensor::new(
            out_channels,
            in_channels,
            kernel,
            block,
            PermPolicy::Natural,
            InitPolicy::ScaledUniform { seed },
        )?;
        Ok(ConvLayer {
            filter,
            bias: vec![T::zero(); out_channels],
            width: map.0,
            height: map.1,
            activation,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Fc(FcLayer<T>),
    Conv(ConvLayer<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn input_len(&self) -> usize {
        match self {
            Layer::Fc(l) => l.weights.cols(),
            Layer::Conv(l) => l.filter.in_channels() * l.width * l.height,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Layer::Fc(l) => l.weights.rows(),
            Layer::Conv(l) => l.filter.out_channels() * l.width * l.height,
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Fc(l) => l.activation,
            Layer::Conv(l) => l.activation,
        }
    }

    pub fn block(&self) -> usize {
        match self {
            Layer::Fc(l) => l.weights.block(),
            Layer::Conv(l) => l.filter.block(),
        }
    }

    pub fn perms(&self) -> &[usize] {
        match self {
            Layer::Fc(l) => l.weights.perms(),
            Layer::Conv(l) => l.filter.perms(),
        }
    }

    pub fn bias(&self) -> &[T] {
        match self {
            Layer::Fc(l) => &l.bias,
            Layer::Conv(l) => &l.bias,
        }
    }

    /// Pre-activation output for a flat input.
    fn pre_activation(&self, x: &[T]) -> Result<Vec<T>> {
        match self {
            Layer::Fc(l) => {
                let mut a = l.weights.matvec(x)?;
                for (ai, &b) in a.iter_mut().zip(&l.bias) {
                    *ai += b;
                }
                Ok(a)
            }
            Layer::Conv(l) => {
                let input = Array3::from_shape_vec(
                    (l.filter.in_channels(), l.width, l.height),
                    x.to_vec(),
                )
                .map_err(|e| BpdError::ShapeMismatch(e.to_string()))?;
                let mut y = l.filter.forward(&input)?;
                for (mut plane, &b) in y.outer_iter_mut().zip(&l.bias) {
                    plane.mapv_inplace(|v| v + b);
                }
                Ok(y.into_iter().collect())
            }
        }
    }

    fn param_shape(&self) -> (usize, usize) {
        match self {
            Layer::Fc(l) => (l.weights.slot_count(), l.bias.len()),
            Layer::Conv(l) => (l.filter.values().len(), l.bias.len()),
        }
    }

    /// Gradient of the packed parameters and of the input, given `dJ/da`.
    fn backward(&self, x: &[T], ga: &[T]) -> Result<(ParamGrad<T>, Vec<T>)> {
        match self {
            Layer::Fc(l) => {
                let g = grad_fc(&l.weights, x, ga)?;
                Ok((
                    ParamGrad {
                        weights: g.d_values,
                        bias: ga.to_vec(),
                    },
                    g.d_input,
                ))
            }
            Layer::Conv(l) => {
                let shape_in = (l.filter.in_channels(), l.width, l.height);
                let shape_out = (l.filter.out_channels(), l.width, l.height);
                let xs = Array3::from_shape_vec(shape_in, x.to_vec())
                    .map_err(|e| BpdError::ShapeMismatch(e.to_string()))?;
                let gy = Array3::from_shape_vec(shape_out, ga.to_vec())
                    .map_err(|e| BpdError::ShapeMismatch(e.to_string()))?;
                let g = grad_conv(&l.filter, &xs, &gy)?;
                let bias = gy.outer_iter().map(|plane| plane.iter().copied().sum()).collect();
                Ok((
                    ParamGrad {
                        weights: g.d_kernels,
                        bias,
                    },
                    g.d_input.into_iter().collect(),
                ))
            }
        }
    }

    fn apply(&mut self, g: &ParamGrad<T>, lr: T) -> Result<()> {
        let bias = match self {
            Layer::Fc(l) => {
                sgd_update(&mut l.weights, &g.weights, lr)?;
                &mut l.bias
            }
            Layer::Conv(l) => {
                sgd_update_conv(&mut l.filter, &g.weights, lr)?;
                &mut l.bias
            }
        };
        for (b, &d) in bias.iter_mut().zip(&g.bias) {
            *b -= lr * d;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ParamGrad<T> {
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> ParamGrad<T> {
    fn zeros((w, b): (usize, usize)) -> Self {
        ParamGrad {
            weights: vec![T::zero(); w],
            bias: vec![T::zero(); b],
        }
    }

    fn add(&mut self, other: &ParamGrad<T>) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    fn scale(&mut self, s: T) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// Input to each layer.
    pub inputs: Vec<Vec<T>>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Vec<T>>,
    pub output: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(BpdError::InvalidConfig("model has no layers".into()));
        }
        for (idx, pair) in layers.windows(2).enumerate() {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(BpdError::ShapeMismatch(format!(
                    "layer {idx} emits {} values but layer {} expects {}",
                    pair[0].output_len(),
                    idx + 1,
                    pair[1].input_len()
                )));
            }
        }
        for l in &layers {
            let expected = match l {
                Layer::Fc(f) => f.weights.rows(),
                Layer::Conv(c) => c.filter.out_channels(),
            };
            check_len("bias", expected, l.bias().len())?;
        }
        Ok(Model { layers })
    }

    /// Fully connected network with `dims[0]` inputs. Hidden layers use
    /// `cfg.activation`, the last layer is linear. Perms follow natural
    /// indexing and weights are seeded from `cfg.seed`.
    pub fn mlp(dims: &[usize], blocks: &[usize], cfg: &TrainConfig) -> Result<Self> {
        if dims.len() < 2 || blocks.len() != dims.len() - 1 {
            return Err(BpdError::InvalidConfig(format!(
                "{} layer widths need {} block sizes, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                blocks.len()
            )));
        }
        let last = blocks.len() - 1;
        let layers = blocks
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let act = if idx == last {
                    Activation::Identity
                } else {
                    cfg.activation
                };
                FcLayer::new(dims[idx + 1], dims[idx], p, act, layer_seed(cfg.seed, idx))
                    .map(Layer::Fc)
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].output_len()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.trace(x).map(|t| t.output)
    }

    pub fn trace(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        check_len("model input", self.input_len(), x.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let a = layer.pre_activation(&cur)?;
            let act = layer.activation();
            let next = a.iter().map(|&v| act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut cur, next));
            pre.push(a);
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: cur,
        })
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Dense-equivalent model: every layer re-expressed with `p = 1`.
    pub fn densify(&self) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(match l {
                    Layer::Fc(f) => Layer::Fc(FcLayer {
                        weights: project_matrix(&f.weights.to_dense(), 1, ProjectionNorm::L2)?
                            .weights,
                        bias: f.bias.clone(),
                        activation: f.activation,
                    }),
                    Layer::Conv(c) => Layer::Conv(ConvLayer {
                        filter: project_tensor(&c.filter.to_dense(), 1, ProjectionNorm::L2)?
                            .weights,
                        bias: c.bias.clone(),
                        width: c.width,
                        height: c.height,
                        activation: c.activation,
                    }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(layers)
    }
}

/// Weight-init seed for layer `idx` of a model seeded with `seed`.
pub fn layer_seed(seed: u64, idx: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(idx as u64 + 1)
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Sample visiting order for `epoch`, fixed by `seed`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

/// One pass of mini-batch SGD. Per-sample gradients are summed in visiting
/// order and averaged over the batch before each update. Loss and accuracy
/// are measured on the forward passes made during the epoch.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(BpdError::EmptyDataset);
    }
    let lr = T::lit(cfg.learning_rate);
    let order = epoch_order(data.len(), cfg.seed, epoch);
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for batch in order.chunks(cfg.batch_size) {
        let mut acc: Vec<ParamGrad<T>> = model
            .layers
            .iter()
            .map(|l| ParamGrad::zeros(l.param_shape()))
            .collect();
        for &idx in batch {
            let (x, label) = data.sample(idx);
            let trace = model.trace(x)?;
            let (loss, grad_out) = cfg.loss.evaluate(&trace.output, label);
            total_loss += loss.as_f64();
            if argmax(&trace.output) == label {
                correct += 1;
            }
            let mut upstream = grad_out;
            for (li, layer) in model.layers.iter().enumerate().rev() {
                let act = layer.activation();
                let ga: Vec<T> = upstream
                    .iter()
                    .zip(&trace.pre[li])
                    .map(|(&u, &a)| u * act.derivative(a))
                    .collect();
                let (g, d_input) = layer.backward(&trace.inputs[li], &ga)?;
                acc[li].add(&g);
                upstream = d_input;
            }
        }
        let inv = T::one() / T::lit(batch.len() as f64);
        for (layer, g) in model.layers.iter_mut().zip(acc.iter_mut()) {
            g.scale(inv);
            layer.apply(g, lr)?;
        }
    }
    Ok(EpochMetrics {
        loss: total_loss / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Runs `cfg.epochs` epochs, returning per-epoch metrics.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    (0..cfg.epochs)
        .map(|epoch| train_epoch(model, data, cfg, epoch))
        .collect()
}

pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>, loss: Loss) -> Result<EpochMetrics> {
    if data.is_empty() {
        return Err(BpdError::EmptyDataset);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for idx in 0..data.len() {
        let (x, label) = data.sample(idx);
        let out = model.forward(x)?;
        total += loss.evaluate(&out, label).0.as_f64();
        if argmax(&out) == label {
            correct += 1;
        }
    }
    Ok(EpochMetrics {
        loss: total / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Outcome of projecting a pre-trained model and fine-tuning it.
#[derive(Debug, Clone)]
pub struct Conversion<T> {
    pub model: Model<T>,
    /// Per-layer Frobenius norm of the weights dropped by projection.
    pub residuals: Vec<f64>,
    /// The source model on `eval`.
    pub dense: EpochMetrics,
    /// The projected model before any fine-tuning.
    pub projected: EpochMetrics,
    /// The final model.
    pub fine_tuned: EpochMetrics,
    /// Training metrics per fine-tuning epoch; empty when projection was lossless.
    pub trace: Vec<EpochMetrics>,
}

/// Projects every layer of `dense` onto the block size in `blocks`, then
/// fine-tunes with `cfg` on `train_data`. Fine-tuning is skipped when the
/// projection dropped nothing.
pub fn convert_pretrained<T: Scalar>(
    dense: &Model<T>,
    blocks: &[usize],
    cfg: &TrainConfig,
    train_data: &Dataset<T>,
    eval_data: &Dataset<T>,
) -> Result<Conversion<T>> {
    check_len("block sizes", dense.layers.len(), blocks.len())?;
    let mut residuals = Vec::with_capacity(blocks.len());
    let layers = dense
        .layers
        .iter()
        .zip(blocks)
        .map(|(layer, &p)| {
            Ok(match layer {
                Layer::Fc(f) => {
                    let proj = project_matrix(&f.weights.to_dense(), p, ProjectionNorm::L2)?;
                    residuals.push(proj.residual.as_f64());
                    Layer::Fc(FcLayer {
                        weights: proj.weights,
                        bias: f.bias.clone(),
                        activation: f.activation,
                    })
                }
                Layer::Conv(c) => {
                    let proj = project_tensor(&c.filter.to_dense(), p, ProjectionNorm::L2)?;
                    residuals.push(proj.residual.as_f64());
                    Layer::Conv(ConvLayer {
                        filter: proj.weights,
                        bias: c.bias.clone(),
                        width: c.width,
                        height: c.height,
                        activation: c.activation,
                    })
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = Model::new(layers)?;
    let dense_metrics = evaluate(dense, eval_data, cfg.loss)?;
    let projected = evaluate(&model, eval_data, cfg.loss)?;
    let trace = if residuals.iter().all(|&r| r == 0.0) {
        Vec::new()
    } else {
        train(&mut model, train_data, cfg)?
    };
    let fine_tuned = evaluate(&model, eval_data, cfg.loss)?;
    Ok(Conversion {
        model,
        residuals,
        dense: dense_metrics,
        projected,
        fine_tuned,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 4,
            epochs: 3,
            seed: 11,
            activation: Activation::Tanh,
            loss: Loss::SoftmaxCrossEntropy,
        }
    }

    #[test]
    fn softmax_gradient_sums_to_zero() {
        let (loss, g) = Loss::SoftmaxCrossEntropy.evaluate(&[1.0f64, 2.0, -0.5], 1);
        assert!(loss > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!(g[1] < 0.0);
    }

    #[test]
    fn mse_of_one_hot_is_zero() {
        let (loss, g) = Loss::MeanSquaredError.evaluate(&[0.0f64, 1.0], 1);
        assert_eq!(loss, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let data = data::gaussian_blobs::<f64>(32, 8, 2, 0.3, 1);
        let c = TrainConfig {
            learning_rate: 0.0,
            ..cfg()
        };
        let mut m = Model::mlp(&[8, 8, 2], &[2, 2], &c).unwrap();
        let before = m.clone();
        train(&mut m, &data, &c).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let c = cfg();
        let mut m = Model::<f64>::mlp(&[4, 2], &[2], &c).unwrap();
        let empty = Dataset::new(Vec::new(), Vec::new(), 2).unwrap();
        assert_eq!(train_epoch(&mut m, &empty, &c, 0), Err(BpdError::EmptyDataset));
    }

    #[test]
    fn training_is_deterministic() {
        let data = data::gaussian_blobs::<f64>(40, 6, 3, 0.4, 2);
        let c = cfg();
        let mut a = Model::mlp(&[6, 6, 3], &[3, 3], &c).unwrap();
        let mut b = a.clone();
        let ma = train(&mut a, &data, &c).unwrap();
        let mb = train(&mut b, &data, &c).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let c = cfg();
        let a = Model::<f64>::mlp(&[4, 6], &[2], &c).unwrap().layers[0].clone();
        let b = Model::<f64>::mlp(&[5, 2], &[1], &c).unwrap().layers[0].clone();
        assert!(matches!(Model::new(vec![a, b]), Err(BpdError::ShapeMismatch(_))));
        assert!(Model::<f64>::mlp(&[4, 2], &[], &c).is_err());
    }

    #[test]
    fn unit_block_conversion_is_identity() {
        let data = data::gaussian_blobs::<f64>(30, 4, 2, 0.3, 3);
        let c = cfg();
        let mut dense = Model::mlp(&[4, 8, 2], &[1, 1], &c).unwrap();
        train(&mut dense, &data, &c).unwrap();
        let conv = convert_pretrained(&dense, &[1, 1], &c, &data, &data).unwrap();
        assert_eq!(conv.model, dense);
        assert!(conv.trace.is_empty());
        assert_eq!(conv.dense, conv.fine_tuned);
    }
}
