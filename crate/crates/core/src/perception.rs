//! The perception network: a feature-extraction stage of conv blocks that
//! ends in 32 feature maps, followed by a single fully connected decision
//! layer producing one linear score per class.

use serde::{Deserialize, Serialize};

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::nn::{self, LayerGrad};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Tensor;

/// Number of maps the last conv block emits.
pub const FEATURE_CHANNELS: usize = 32;
pub const MNIST_CLASSES: usize = 10;

/// One conv block: valid convolution, ReLU, then optional 2x2 max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub pool: bool,
}

impl ConvBlock {
    pub const fn new(out_channels: usize, kernel: usize, pool: bool) -> Self {
        Self {
            out_channels,
            kernel,
            pool,
        }
    }
}

/// The three desk-scale networks compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchitectureId {
    /// two conv blocks, 16 -> 32 channels
    Cnn1,
    /// three conv blocks, 16 -> 24 -> 32
    Cnn2,
    /// four conv blocks, 8 -> 16 -> 24 -> 32
    Cnn3,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 3] = [Self::Cnn1, Self::Cnn2, Self::Cnn3];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cnn1 => "cnn1",
            Self::Cnn2 => "cnn2",
            Self::Cnn3 => "cnn3",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Cnn1 => "CNNs-1",
            Self::Cnn2 => "CNNs-2",
            Self::Cnn3 => "CNNs-3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn blocks(self) -> Vec<ConvBlock> {
        match self {
            // 28 -> 24 -> 12 -> 8 -> 4
            Self::Cnn1 => vec![ConvBlock::new(16, 5, true), ConvBlock::new(32, 5, true)],
            // 28 -> 24 -> 12 -> 10 -> 8 -> 4
            Self::Cnn2 => vec![
                ConvBlock::new(16, 5, true),
                ConvBlock::new(24, 3, false),
                ConvBlock::new(32, 3, true),
            ],
            // 28 -> 26 -> 24 -> 12 -> 10 -> 8 -> 4
            Self::Cnn3 => vec![
                ConvBlock::new(8, 3, false),
                ConvBlock::new(16, 3, true),
                ConvBlock::new(24, 3, false),
                ConvBlock::new(32, 3, true),
            ],
        }
    }

    pub fn architecture(self) -> Architecture {
        Architecture::new([1, 28, 28], self.blocks(), MNIST_CLASSES)
            .expect("built-in architectures are valid")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: [usize; 3],
    pub blocks: Vec<ConvBlock>,
    pub classes: usize,
}

impl Architecture {
    pub fn new(input: [usize; 3], blocks: Vec<ConvBlock>, classes: usize) -> Result<Self> {
        let arch = Self {
            input,
            blocks,
            classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::InvalidArgument(why));
        match self.blocks.last() {
            Some(b) if b.out_channels == FEATURE_CHANNELS => {}
            _ => return bad(format!("last conv block must emit {FEATURE_CHANNELS} channels")),
        }
        if self.classes == 0 {
            return bad("at least one class is required".into());
        }
        let (mut h, mut w) = (self.input[1], self.input[2]);
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernel == 0 || b.kernel > h || b.kernel > w || b.out_channels == 0 {
                return bad(format!("block {i}: kernel {} does not fit {h}x{w}", b.kernel));
            }
            h = h - b.kernel + 1;
            w = w - b.kernel + 1;
            if b.pool {
                if h % 2 != 0 || w % 2 != 0 {
                    return bad(format!("block {i}: cannot pool odd map {h}x{w}"));
                }
                h /= 2;
                w /= 2;
            }
        }
        Ok(())
    }

    /// Spatial size of the final feature maps.
    pub fn feature_dims(&self) -> (usize, usize) {
        let (mut h, mut w) = (self.input[1], self.input[2]);
        for b in &self.blocks {
            h = h - b.kernel + 1;
            w = w - b.kernel + 1;
            if b.pool {
                h /= 2;
                w /= 2;
            }
        }
        (h, w)
    }

    pub fn fc_inputs(&self) -> usize {
        let (h, w) = self.feature_dims();
        FEATURE_CHANNELS * h * w
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut c_in = self.input[0];
        for b in &self.blocks {
            shapes.push(vec![b.out_channels, c_in, b.kernel, b.kernel]);
            shapes.push(vec![b.out_channels]);
            c_in = b.out_channels;
        }
        shapes.push(vec![self.classes, self.fc_inputs()]);
        shapes.push(vec![self.classes]);
        shapes
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.blocks.len() {
            names.push(format!("conv{i}.kernel"));
            names.push(format!("conv{i}.bias"));
        }
        names.push("fc.weight".into());
        names.push("fc.bias".into());
        names
    }
}

/// One channel of the last conv block's output. Entries are post-ReLU, so
/// never negative.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channel: usize,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channel: usize, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape("FeatureMap", &[rows, cols], &[values.len()]));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "feature map entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            channel,
            rows,
            cols,
            values,
        })
    }

    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// All activations exactly zero.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Clone, Debug)]
struct BlockCache {
    input: Tensor,
    pre_activation: Tensor,
    pool_argmax: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
struct Cache {
    blocks: Vec<BlockCache>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActivationPattern {
    active: Vec<bool>,
    winners: Vec<usize>,
}

/// Result of a forward pass: the feature maps handed to the decision stage
/// and the decision stage's output.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    pub features: Vec<FeatureMap>,
    pub output: Vec<f64>,
    fc_input: Vec<f64>,
    cache: Option<Cache>,
}

impl ForwardRecord {
    /// Flattened FC input, i.e. all feature maps back to back.
    pub fn fc_input(&self) -> &[f64] {
        &self.fc_input
    }

    /// ReLU and pooling choices of a cached forward pass; `None` without a
    /// cache. Two passes with equal patterns lie on the same linear piece of
    /// the network, so finite differences between them are free of kinks.
    pub fn activation_pattern(&self) -> Option<ActivationPattern> {
        let cache = self.cache.as_ref()?;
        let mut pattern = ActivationPattern::default();
        for b in &cache.blocks {
            pattern.active.extend(b.pre_activation.data().iter().map(|&z| z > 0.0));
            if let Some(a) = &b.pool_argmax {
                pattern.winners.extend_from_slice(a);
            }
        }
        Some(pattern)
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.output)
    }
}

impl PartialEq for ForwardRecord {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features && self.output == other.output
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// All weights and biases of the perception network.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionParams {
    arch: Architecture,
    seed: u64,
    tensors: Vec<Tensor>,
}

impl PerceptionParams {
    /// Xavier-uniform kernels and FC weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = SeededRng::for_stream(seed, Stream::Init);
        let tensors = arch
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(&shape);
                }
                let receptive: usize = shape[2..].iter().product();
                let fan_in = shape[1] * receptive;
                let fan_out = shape[0] * receptive;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.uniform_in(-limit, limit)).collect();
                Tensor::new(shape, data).expect("shape matches length")
            })
            .collect();
        Ok(Self { arch, seed, tensors })
    }

    pub fn from_tensors(arch: Architecture, seed: u64, tensors: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::shape("PerceptionParams", &[shapes.len()], &[tensors.len()]));
        }
        for (s, t) in shapes.iter().zip(&tensors) {
            if s.as_slice() != t.shape() {
                return Err(Error::shape("PerceptionParams", s, t.shape()));
            }
            if !t.is_finite() {
                return Err(Error::InvalidArgument("parameters must be finite".into()));
            }
        }
        Ok(Self { arch, seed, tensors })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_names(&self) -> Vec<String> {
        self.arch.param_names()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Squared L2 norm over every weight and bias.
    pub fn sum_squares(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_squares).sum()
    }

    fn fc_weight(&self) -> &Tensor {
        &self.tensors[2 * self.arch.blocks.len()]
    }

    fn fc_bias(&self) -> &Tensor {
        &self.tensors[2 * self.arch.blocks.len() + 1]
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.arch.input {
            return Err(Error::shape("forward", image.shape(), &self.arch.input));
        }
        Ok(())
    }

    fn extract(&self, image: &Tensor, keep_cache: bool) -> Result<(Tensor, Option<Cache>)> {
        self.check_image(image)?;
        let mut x = image.clone();
        let mut caches = Vec::new();
        for (i, block) in self.arch.blocks.iter().enumerate() {
            let z = nn::conv2d(&x, &self.tensors[2 * i], self.tensors[2 * i + 1].data())?;
            let a = nn::relu(&z);
            let (out, argmax) = if block.pool {
                let p = nn::max_pool2x2(&a)?;
                (p.output, Some(p.argmax))
            } else {
                (a, None)
            };
            if keep_cache {
                caches.push(BlockCache {
                    input: x,
                    pre_activation: z,
                    pool_argmax: argmax,
                });
            }
            x = out;
        }
        Ok((x, keep_cache.then_some(Cache { blocks: caches })))
    }

    /// Feature-extraction stage only: the `[32, h, w]` tensor fed to the FC layer.
    pub fn extract_features(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.extract(image, false)?.0)
    }

    /// Decision stage only.
    pub fn decide(&self, features: &Tensor) -> Result<Vec<f64>> {
        let (h, w) = self.arch.feature_dims();
        if features.shape() != [FEATURE_CHANNELS, h, w] {
            return Err(Error::shape("decide", features.shape(), &[FEATURE_CHANNELS, h, w]));
        }
        nn::dense(features.data(), self.fc_weight(), self.fc_bias().data())
    }

    fn record(&self, features: Tensor, cache: Option<Cache>) -> Result<ForwardRecord> {
        let output = self.decide(&features)?;
        let (h, w) = self.arch.feature_dims();
        let fc_input = features.into_data();
        let maps = fc_input
            .chunks(h * w)
            .enumerate()
            .map(|(c, vals)| FeatureMap::new(c, h, w, vals.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardRecord {
            features: maps,
            output,
            fc_input,
            cache,
        })
    }

    /// Forward pass caching activations for [`PerceptionParams::backprop`].
    pub fn forward(&self, image: &Tensor) -> Result<ForwardRecord> {
        let (features, cache) = self.extract(image, true)?;
        self.record(features, cache)
    }

    /// Forward pass without the backprop cache.
    pub fn infer(&self, image: &Tensor) -> Result<ForwardRecord> {
        let (features, _) = self.extract(image, false)?;
        self.record(features, None)
    }

    /// Gradient of a scalar objective whose derivative with respect to the
    /// network output is `upstream`.
    pub fn backprop(&self, record: &ForwardRecord, upstream: &[f64]) -> Result<LayerGrad> {
        let cache = record
            .cache
            .as_ref()
            .ok_or(Error::Usage("backprop needs a record produced by forward()"))?;
        if cache.blocks.len() != self.arch.blocks.len() {
            return Err(Error::Usage("forward record belongs to a different architecture"));
        }
        if upstream.len() != self.arch.classes {
            return Err(Error::shape("backprop", &[upstream.len()], &[self.arch.classes]));
        }
        let n_blocks = self.arch.blocks.len();
        let mut grads = vec![Tensor::zeros(&[0]); self.tensors.len()];

        let (g_feat, g_w, g_b) = nn::dense_backward(&record.fc_input, self.fc_weight(), upstream)?;
        grads[2 * n_blocks] = g_w;
        grads[2 * n_blocks + 1] = g_b;

        let (h, w) = self.arch.feature_dims();
        let mut g = Tensor::new(vec![FEATURE_CHANNELS, h, w], g_feat)?;
        for i in (0..n_blocks).rev() {
            let bc = &cache.blocks[i];
            if let Some(argmax) = &bc.pool_argmax {
                g = nn::max_pool2x2_backward(bc.pre_activation.shape(), argmax, &g);
            }
            let gz = nn::relu_backward(&bc.pre_activation, &g);
            let (gx, gk, gb) = nn::conv2d_backward(&bc.input, &self.tensors[2 * i], &gz)?;
            grads[2 * i] = gk;
            grads[2 * i + 1] = gb;
            g = gx;
        }
        Ok(LayerGrad { tensors: grads })
    }

    /// Forward pass with feature map `channel` replaced by zeros before the
    /// FC layer.
    pub fn ablate_feature_map(&self, image: &Tensor, channel: usize) -> Result<Vec<f64>> {
        let features = self.extract_features(image)?;
        self.ablate_features(features, channel)
    }

    /// Same as [`Self::ablate_feature_map`] but reuses already extracted features.
    pub fn ablate_features(&self, mut features: Tensor, channel: usize) -> Result<Vec<f64>> {
        if channel >= FEATURE_CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "channel {channel} out of range 0..{FEATURE_CHANNELS}"
            )));
        }
        let (h, w) = self.arch.feature_dims();
        features.data_mut()[channel * h * w..(channel + 1) * h * w].fill(0.0);
        self.decide(&features)
    }

    pub fn sgd_step(&mut self, grads: &LayerGrad, lr: f64) -> Result<()> {
        let names = self.param_names();
        nn::sgd_step(&mut self.tensors, grads, lr, &names)
    }
}

/// Fraction of samples whose arg-max output equals the label.
pub fn accuracy(params: &PerceptionParams, data: &[LabeledImage]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("accuracy needs a nonempty set".into()));
    }
    let mut correct = 0usize;
    for sample in data {
        if params.infer(&sample.pixels)?.predicted_class() == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Gaussian weight-prior strength (alpha).
    pub weight_decay: f64,
    /// Seeds the minibatch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

/// Seeded minibatch order: every epoch is a fresh Fisher-Yates permutation
/// of `0..n`, cut into consecutive batches (the last may be short).
pub struct BatchSchedule {
    n: usize,
    batch_size: usize,
    rng: SeededRng,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            n,
            batch_size: batch_size.max(1),
            rng: SeededRng::for_stream(seed, Stream::Batches),
        }
    }

    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n).collect();
        self.rng.shuffle(&mut order);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Averaged batch gradient plus the weight-prior term `alpha * w`.
///
/// `upstreams[i]` is the derivative of sample `i`'s data loss with respect to
/// the network output. Per-sample gradients are summed in batch order, then
/// scaled by `1 / len`. Baseline and game training both go through here,
/// which keeps their arithmetic identical.
pub fn batch_gradient(
    params: &PerceptionParams,
    records: &[ForwardRecord],
    upstreams: &[Vec<f64>],
    alpha: f64,
) -> Result<LayerGrad> {
    if records.is_empty() || records.len() != upstreams.len() {
        return Err(Error::shape("batch_gradient", &[records.len()], &[upstreams.len()]));
    }
    let mut total = LayerGrad::zeros_like(params.tensors());
    for (record, upstream) in records.iter().zip(upstreams) {
        total.accumulate(&params.backprop(record, upstream)?)?;
    }
    total.scale(1.0 / records.len() as f64);
    for (g, p) in total.tensors.iter_mut().zip(params.tensors()) {
        g.add_scaled(p, alpha)?;
    }
    Ok(total)
}

/// Half squared error against a one-hot target, and its output gradient.
pub fn squared_error(output: &[f64], label: usize) -> (f64, Vec<f64>) {
    let target = one_hot(label, output.len());
    let grad: Vec<f64> = output.iter().zip(&target).map(|(f, y)| f - y).collect();
    let loss = 0.5 * grad.iter().map(|r| r * r).sum::<f64>();
    (loss, grad)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PerceptionParams,
    /// Mean per-batch loss (before each step) for every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Minimizes `mean_i 0.5 * |f(x_i) - y_i|^2 + (alpha / 2) |w|^2` with
/// minibatch gradient descent.
pub fn train_baseline(
    params: PerceptionParams,
    data: &[LabeledImage],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_baseline_observed(params, data, cfg, |_, _| {})
}

/// [`train_baseline`] with a callback after every parameter update.
pub fn train_baseline_observed<O>(
    mut params: PerceptionParams,
    data: &[LabeledImage],
    cfg: &TrainConfig,
    mut observer: O,
) -> Result<TrainOutcome>
where
    O: FnMut(usize, &PerceptionParams),
{
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut schedule = BatchSchedule::new(data.len(), cfg.batch_size, cfg.seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let batches = schedule.next_epoch();
        for idx in &batches {
            let batch: Vec<&LabeledImage> = idx.iter().map(|&i| &data[i]).collect();
            let prior = 0.5 * cfg.weight_decay * params.sum_squares();
            let records = batch
                .iter()
                .map(|s| params.forward(&s.pixels))
                .collect::<Result<Vec<_>>>()?;
            let mut batch_loss = 0.0;
            let upstreams: Vec<Vec<f64>> = records
                .iter()
                .zip(&batch)
                .map(|(rec, s)| {
                    let (loss, grad) = squared_error(&rec.output, s.label);
                    batch_loss += loss;
                    grad
                })
                .collect();
            let grad = batch_gradient(&params, &records, &upstreams, cfg.weight_decay)?;
            params.sgd_step(&grad, cfg.learning_rate).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence { epoch, loss: f64::NAN },
                other => other,
            })?;
            let loss = batch_loss / batch.len() as f64 + prior;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss;
            step += 1;
            observer(step, &params);
        }
        epoch_losses.push(loss_sum / batches.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> Architecture {
        Architecture::new(
            [1, 10, 10],
            vec![ConvBlock::new(3, 3, true), ConvBlock::new(FEATURE_CHANNELS, 3, false)],
            4,
        )
        .unwrap()
    }

    fn image(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        Tensor::new(vec![1, rows, cols], (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn builtin_architectures_end_in_4x4x32() {
        for id in ArchitectureId::ALL {
            let arch = id.architecture();
            assert_eq!(arch.feature_dims(), (4, 4), "{id:?}");
            assert_eq!(arch.fc_inputs(), 512);
            assert_eq!(ArchitectureId::parse(id.name()), Some(id));
        }
        assert_eq!(ArchitectureId::Cnn2.blocks().len(), 3);
        assert_eq!(ArchitectureId::Cnn3.blocks().len(), 4);
    }

    #[test]
    fn architecture_validation() {
        assert!(Architecture::new([1, 28, 28], vec![ConvBlock::new(16, 5, true)], 10).is_err());
        assert!(Architecture::new([1, 9, 9], vec![ConvBlock::new(32, 3, true)], 10).is_err());
        assert!(Architecture::new([1, 4, 4], vec![ConvBlock::new(32, 5, false)], 10).is_err());
    }

    #[test]
    fn zero_image_zero_biases_gives_fc_bias() {
        let mut params = PerceptionParams::init(ArchitectureId::Cnn1.architecture(), 1).unwrap();
        let n = params.tensors().len();
        params.tensors_mut()[n - 1] = Tensor::from_vec((0..10).map(|i| i as f64 * 0.1).collect());
        let rec = params.forward(&Tensor::zeros(&[1, 28, 28])).unwrap();
        assert!(rec.features.iter().all(FeatureMap::is_empty));
        assert_eq!(rec.output, params.tensors()[n - 1].data());
    }

    #[test]
    fn forward_is_deterministic_and_stages_compose() {
        let params = PerceptionParams::init(ArchitectureId::Cnn1.architecture(), 5).unwrap();
        let img = image(28, 28, 11);
        let a = params.forward(&img).unwrap();
        let b = params.forward(&img).unwrap();
        assert_eq!(a, b);
        let feats = params.extract_features(&img).unwrap();
        assert_eq!(params.decide(&feats).unwrap(), a.output);
        assert_eq!(feats.data(), a.fc_input());
        assert_eq!(a.features.len(), FEATURE_CHANNELS);
    }

    #[test]
    fn wrong_image_shape_rejected() {
        let params = PerceptionParams::init(ArchitectureId::Cnn1.architecture(), 5).unwrap();
        assert!(matches!(
            params.forward(&Tensor::zeros(&[1, 27, 28])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn backprop_requires_cached_forward() {
        let params = PerceptionParams::init(tiny_arch(), 2).unwrap();
        let rec = params.infer(&image(10, 10, 1)).unwrap();
        assert!(matches!(params.backprop(&rec, &[0.0; 4]), Err(Error::Usage(_))));
    }

    #[test]
    fn ablation_of_empty_map_is_neutral_and_local() {
        let params = PerceptionParams::init(ArchitectureId::Cnn1.architecture(), 3).unwrap();
        let img = image(28, 28, 4);
        let rec = params.forward(&img).unwrap();
        for c in 0..FEATURE_CHANNELS {
            let ablated = params.ablate_feature_map(&img, c).unwrap();
            if rec.features[c].is_empty() {
                assert_eq!(ablated, rec.output);
            }
        }
        assert!(params.ablate_feature_map(&img, FEATURE_CHANNELS).is_err());
    }

    #[test]
    fn zero_fc_weights_make_ablation_inert() {
        let mut params = PerceptionParams::init(ArchitectureId::Cnn1.architecture(), 3).unwrap();
        let fc = 2 * params.architecture().blocks.len();
        params.tensors_mut()[fc].fill(0.0);
        let img = image(28, 28, 4);
        let full = params.infer(&img).unwrap().output;
        for c in 0..FEATURE_CHANNELS {
            assert_eq!(params.ablate_feature_map(&img, c).unwrap(), full);
        }
    }

    #[test]
    fn accuracy_extremes() {
        let params = PerceptionParams::init(tiny_arch(), 8).unwrap();
        let data: Vec<LabeledImage> = (0..6)
            .map(|i| {
                let pixels = image(10, 10, 100 + i);
                let label = params.infer(&pixels).unwrap().predicted_class();
                LabeledImage { pixels, label, source_index: i as usize }
            })
            .collect();
        assert_eq!(accuracy(&params, &data).unwrap(), 1.0);
        let wrong: Vec<LabeledImage> = data
            .iter()
            .cloned()
            .map(|mut s| {
                s.label = (s.label + 1) % 4;
                s
            })
            .collect();
        assert_eq!(accuracy(&params, &wrong).unwrap(), 0.0);
        assert!(accuracy(&params, &[]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.7, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
    }

    #[test]
    fn overfits_a_single_sample() {
        let params = PerceptionParams::init(tiny_arch(), 21).unwrap();
        let data = vec![LabeledImage { pixels: image(10, 10, 9), label: 2, source_index: 0 }];
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 1,
            learning_rate: 0.05,
            weight_decay: 0.0,
            seed: 1,
        };
        let out = train_baseline(params, &data, &cfg).unwrap();
        let rec = out.params.infer(&data[0].pixels).unwrap();
        let (loss, _) = squared_error(&rec.output, 2);
        assert!(loss < 1e-3, "loss {loss}");
    }

    #[test]
    fn strong_prior_shrinks_weights_monotonically() {
        let params = PerceptionParams::init(tiny_arch(), 4).unwrap();
        let data = vec![LabeledImage { pixels: image(10, 10, 3), label: 1, source_index: 0 }];
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 1,
            learning_rate: 1e-7,
            weight_decay: 1e6,
            seed: 0,
        };
        let mut norms = vec![params.sum_squares()];
        let out = train_baseline_observed(params, &data, &cfg, |_, p| norms.push(p.sum_squares())).unwrap();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
        assert!(out.params.sum_squares() < 0.2 * norms[0]);
    }
}
