//! A small from-scratch classifier (softmax-linear or one-hidden-layer MLP)
//! trained by plain SGD on soft-label cross-entropy, with early stopping.
//!
//! Gradients are analytic and hand-derived; a finite-difference oracle in the
//! test suite keeps them honest. Training is deterministic given its seeds.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::scalar::Scalar;
use crate::strategies::{build_minibatch, BatchItem, Minibatch, SamplingStrategy};

const LOSS_EPSILON: f64 = 1e-12;

/// Network architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Linear,
    Mlp { hidden_units: usize },
}

/// Model shape, initialization scale, and initialization seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T> {
    pub arch: Arch,
    pub input_dim: usize,
    pub num_classes: usize,
    pub init_scale: T,
    pub seed: u64,
}

impl<T: Scalar> ModelSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if self.init_scale.is_nan() || self.init_scale <= T::zero() {
            return Err(Error::InvalidConfig("init_scale must be > 0".into()));
        }
        if let Arch::Mlp { hidden_units } = self.arch {
            if hidden_units == 0 {
                return Err(Error::InvalidConfig("hidden_units must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Dense layer, weights in row-major `[out][in]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Scalar> Layer<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: vec![T::zero(); in_dim * out_dim],
            biases: vec![T::zero(); out_dim],
            in_dim,
            out_dim,
        }
    }

    fn forward(&self, input: &[T]) -> Vec<T> {
        let mut out = self.biases.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = T::zero();
            for (w, x) in row.iter().zip(input) {
                acc += *w * *x;
            }
            *out_v += acc;
        }
        out
    }
}

/// Parameter-shaped gradient collection (one entry per layer).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

/// The classifier: parameters plus the spec that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec<T>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    /// Initialize with weights i.i.d. uniform in
    /// `[-init_scale, +init_scale] / sqrt(fan_in)` and zero biases.
    pub fn init(spec: ModelSpec<T>) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let dims: Vec<(usize, usize)> = match spec.arch {
            Arch::Linear => vec![(spec.input_dim, spec.num_classes)],
            Arch::Mlp { hidden_units } => vec![
                (spec.input_dim, hidden_units),
                (hidden_units, spec.num_classes),
            ],
        };
        let layers = dims
            .into_iter()
            .map(|(in_dim, out_dim)| {
                let bound = spec.init_scale / T::from_count(in_dim).sqrt();
                let mut layer = Layer::zeros(in_dim, out_dim);
                for w in layer.weights.iter_mut() {
                    *w = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec<T> {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Raw class scores before the softmax.
    pub fn logits(&self, features: &[T]) -> Result<Vec<T>> {
        if features.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: features.len(),
            });
        }
        match self.spec.arch {
            Arch::Linear => Ok(self.layers[0].forward(features)),
            Arch::Mlp { .. } => {
                let mut hidden = self.layers[0].forward(features);
                for h in hidden.iter_mut() {
                    if *h < T::zero() {
                        *h = T::zero();
                    }
                }
                Ok(self.layers[1].forward(&hidden))
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter accessors (weights first, then biases, per layer).
    pub fn param(&self, mut k: usize) -> T {
        for layer in &self.layers {
            if k < layer.weights.len() {
                return layer.weights[k];
            }
            k -= layer.weights.len();
            if k < layer.biases.len() {
                return layer.biases[k];
            }
            k -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut k: usize, value: T) {
        for layer in &mut self.layers {
            if k < layer.weights.len() {
                layer.weights[k] = value;
                return;
            }
            k -= layer.weights.len();
            if k < layer.biases.len() {
                layer.biases[k] = value;
                return;
            }
            k -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn apply_update(
        &mut self,
        grads: &Gradients<T>,
        lr: T,
        decay: T,
        velocity: Option<&mut Gradients<T>>,
        momentum: T,
    ) {
        match velocity {
            Some(vel) if momentum > T::zero() => {
                for ((layer, grad), v) in self
                    .layers
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut vel.layers)
                {
                    for ((w, g), vw) in layer
                        .weights
                        .iter_mut()
                        .zip(&grad.weights)
                        .zip(&mut v.weights)
                    {
                        *vw = momentum * *vw + *g + decay * *w;
                        *w -= lr * *vw;
                    }
                    for ((b, g), vb) in layer.biases.iter_mut().zip(&grad.biases).zip(&mut v.biases)
                    {
                        *vb = momentum * *vb + *g;
                        *b -= lr * *vb;
                    }
                }
            }
            _ => {
                for (layer, grad) in self.layers.iter_mut().zip(&grads.layers) {
                    for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                        *w -= lr * (*g + decay * *w);
                    }
                    for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
                        *b -= lr * *g;
                    }
                }
            }
        }
    }
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax class probabilities for one input.
pub fn forward_predict<T: Scalar>(model: &Model<T>, features: &[T]) -> Result<Vec<T>> {
    Ok(softmax(&model.logits(features)?))
}

/// `-sum_i soft_label_i * ln(predicted_i + 1e-12)`, clamped at zero.
pub fn soft_cross_entropy_loss<T: Scalar>(predicted: &[T], soft_label: &[T]) -> Result<T> {
    if predicted.len() != soft_label.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: soft_label.len(),
        });
    }
    let eps = T::cast(LOSS_EPSILON);
    let mut loss = T::zero();
    for (&p, &q) in predicted.iter().zip(soft_label) {
        if q > T::zero() {
            loss -= q * (p + eps).ln();
        }
    }
    Ok(loss.max(T::zero()))
}

/// Resolve a batch item into its input features and soft label.
fn item_input_label<'a, T: Scalar>(
    data: &'a Dataset<T>,
    item: &'a BatchItem<T>,
) -> (&'a [T], Vec<T>) {
    match item {
        BatchItem::Plain(i) => {
            let ex = data.example(*i);
            (&ex.features, ex.one_hot(data.num_classes()))
        }
        BatchItem::Mixed(m) => (&m.features, m.soft_label.clone()),
    }
}

/// Mean soft-cross-entropy loss of a batch.
pub fn batch_loss<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    batch: &Minibatch<T>,
) -> Result<T> {
    if batch.items.is_empty() {
        return Err(Error::InvalidConfig("empty minibatch".into()));
    }
    let mut total = T::zero();
    for item in &batch.items {
        let (features, label) = item_input_label(data, item);
        let probs = forward_predict(model, features)?;
        total += soft_cross_entropy_loss(&probs, &label)?;
    }
    Ok(total / T::from_count(batch.items.len()))
}

/// Gradient of the mean batch loss with respect to every parameter.
pub fn compute_gradients<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    batch: &Minibatch<T>,
) -> Result<Gradients<T>> {
    if batch.items.is_empty() {
        return Err(Error::InvalidConfig("empty minibatch".into()));
    }
    let mut grads = Gradients {
        layers: model
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect(),
    };
    let eps = T::cast(LOSS_EPSILON);
    for item in &batch.items {
        let (features, label) = item_input_label(data, item);
        if features.len() != model.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: model.spec.input_dim,
                actual: features.len(),
            });
        }
        // Forward pass, keeping activations.
        let (hidden_pre, hidden, logits) = match model.spec.arch {
            Arch::Linear => (None, None, model.layers[0].forward(features)),
            Arch::Mlp { .. } => {
                let pre = model.layers[0].forward(features);
                let post: Vec<T> = pre.iter().map(|&h| h.max(T::zero())).collect();
                let logits = model.layers[1].forward(&post);
                (Some(pre), Some(post), logits)
            }
        };
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("non-finite activations".into()));
        }
        let probs = softmax(&logits);

        // d(loss)/d(logit_j) for loss = -sum_i q_i ln(p_i + eps):
        // p_j * sum_i q_i p_i / (p_i + eps) - q_j * p_j / (p_j + eps).
        let weighted: T = probs
            .iter()
            .zip(&label)
            .map(|(&p, &q)| q * p / (p + eps))
            .sum();
        let dlogits: Vec<T> = probs
            .iter()
            .zip(&label)
            .map(|(&p, &q)| p * weighted - q * p / (p + eps))
            .collect();

        match model.spec.arch {
            Arch::Linear => {
                accumulate_layer(&mut grads.layers[0], &dlogits, features);
            }
            Arch::Mlp { .. } => {
                let hidden = hidden.as_ref().unwrap();
                let hidden_pre = hidden_pre.as_ref().unwrap();
                accumulate_layer(&mut grads.layers[1], &dlogits, hidden);
                let l1 = &model.layers[1];
                let mut dhidden = vec![T::zero(); l1.in_dim];
                for (o, &dz) in dlogits.iter().enumerate() {
                    let row = &l1.weights[o * l1.in_dim..(o + 1) * l1.in_dim];
                    for (dh, &w) in dhidden.iter_mut().zip(row) {
                        *dh += w * dz;
                    }
                }
                for (dh, &pre) in dhidden.iter_mut().zip(hidden_pre) {
                    if pre <= T::zero() {
                        *dh = T::zero();
                    }
                }
                accumulate_layer(&mut grads.layers[0], &dhidden, features);
            }
        }
    }
    let scale = T::one() / T::from_count(batch.items.len());
    for layer in &mut grads.layers {
        for w in layer.weights.iter_mut() {
            *w *= scale;
        }
        for b in layer.biases.iter_mut() {
            *b *= scale;
        }
    }
    Ok(grads)
}

fn accumulate_layer<T: Scalar>(grad: &mut Layer<T>, dout: &[T], input: &[T]) {
    for (o, &d) in dout.iter().enumerate() {
        let row = &mut grad.weights[o * grad.in_dim..(o + 1) * grad.in_dim];
        for (gw, &x) in row.iter_mut().zip(input) {
            *gw += d * x;
        }
        grad.biases[o] += d;
    }
}

/// Which validation metric drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStopMetric {
    ValidationAccuracy,
    WorstGroupValidationAccuracy,
    ValidationAuroc,
}

impl EarlyStopMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            EarlyStopMetric::ValidationAccuracy => "validation_accuracy",
            EarlyStopMetric::WorstGroupValidationAccuracy => "worst_group_validation_accuracy",
            EarlyStopMetric::ValidationAuroc => "validation_auroc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "validation_accuracy" => Ok(Self::ValidationAccuracy),
            "worst_group_validation_accuracy" => Ok(Self::WorstGroupValidationAccuracy),
            "validation_auroc" => Ok(Self::ValidationAuroc),
            other => Err(Error::InvalidConfig(format!(
                "unknown early stop metric `{other}`"
            ))),
        }
    }
}

/// SGD hyperparameters. Momentum and weight decay default to zero so that
/// strategy comparisons stay unconfounded; both are available off-path.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub steps_per_epoch: usize,
    pub early_stop_metric: EarlyStopMetric,
    pub momentum: T,
    pub weight_decay: T,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::cast(0.1),
            batch_size: 64,
            max_epochs: 30,
            steps_per_epoch: 20,
            early_stop_metric: EarlyStopMetric::ValidationAccuracy,
            momentum: T::zero(),
            weight_decay: T::zero(),
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= T::zero() {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.steps_per_epoch == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, max_epochs and steps_per_epoch must be >= 1".into(),
            ));
        }
        if self.momentum < T::zero() || self.weight_decay < T::zero() {
            return Err(Error::InvalidConfig(
                "momentum and weight_decay must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub train_loss: T,
    pub val_accuracy: T,
    pub val_worst_group_accuracy: T,
    pub val_auroc: Option<T>,
}

impl<T: Scalar> EpochRecord<T> {
    fn metric(&self, which: EarlyStopMetric) -> T {
        match which {
            EarlyStopMetric::ValidationAccuracy => self.val_accuracy,
            EarlyStopMetric::WorstGroupValidationAccuracy => self.val_worst_group_accuracy,
            EarlyStopMetric::ValidationAuroc => {
                self.val_auroc.expect("auroc availability checked upfront")
            }
        }
    }
}

/// A trained model: parameters from the best epoch, plus the full history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord<T>>,
    pub best_epoch: usize,
}

/// Run SGD over batches from `build_minibatch`, recording per-epoch metrics,
/// and return the parameters from the epoch maximizing the early-stop metric
/// (ties resolve to the earliest epoch).
pub fn train<T: Scalar>(
    train_data: &Dataset<T>,
    val_data: &Dataset<T>,
    strategy: &SamplingStrategy<T>,
    model_spec: &ModelSpec<T>,
    config: &TrainConfig<T>,
) -> Result<TrainedModel<T>> {
    config.validate()?;
    if train_data.feature_dim() != model_spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model_spec.input_dim,
            actual: train_data.feature_dim(),
        });
    }
    if val_data.feature_dim() != model_spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model_spec.input_dim,
            actual: val_data.feature_dim(),
        });
    }
    if config.early_stop_metric == EarlyStopMetric::ValidationAuroc {
        if val_data.num_classes() != 2 {
            return Err(Error::UndefinedMetric(
                "validation_auroc early stopping needs a binary task".into(),
            ));
        }
        let observed = val_data.class_counts().iter().filter(|&&c| c > 0).count();
        if observed < 2 {
            return Err(Error::UndefinedMetric(
                "validation split contains a single class".into(),
            ));
        }
    }

    let pool = crate::pairing::build_pair_pool(train_data);
    let mut model = Model::init(model_spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = (config.momentum > T::zero()).then(|| Gradients {
        layers: model
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect(),
    });

    let mut history: Vec<EpochRecord<T>> = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(T, usize, Model<T>)> = None;

    for epoch in 0..config.max_epochs {
        let mut loss_sum = T::zero();
        for _ in 0..config.steps_per_epoch {
            let batch = build_minibatch(train_data, &pool, strategy, config.batch_size, &mut rng)?;
            let loss = batch_loss(&model, train_data, &batch)?;
            if !loss.is_finite() {
                let recent_losses = history
                    .iter()
                    .map(|r| r.train_loss.to_f64().unwrap_or(f64::NAN))
                    .collect();
                return Err(Error::DivergentLoss {
                    epoch,
                    recent_losses,
                });
            }
            loss_sum += loss;
            let grads = compute_gradients(&model, train_data, &batch)?;
            model.apply_update(
                &grads,
                config.learning_rate,
                config.weight_decay,
                velocity.as_mut(),
                config.momentum,
            );
        }
        let train_loss = loss_sum / T::from_count(config.steps_per_epoch);

        let report = metrics::evaluate(&model, val_data)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_accuracy: report.overall_accuracy,
            val_worst_group_accuracy: report.worst_group_accuracy,
            val_auroc: report.overall_auroc,
        };
        let metric = record.metric(config.early_stop_metric);
        let improved = match &best {
            None => true,
            Some((best_metric, _, _)) => metric > *best_metric,
        };
        if improved {
            best = Some((metric, epoch, model.clone()));
        }
        history.push(record);
    }

    let (_, best_epoch, best_model) = best.expect("max_epochs >= 1 records at least one epoch");
    Ok(TrainedModel {
        model: best_model,
        history,
        best_epoch,
    })
}

// ---------------------------------------------------------------------------
// Parameter dump (versioned textual format)
// ---------------------------------------------------------------------------

/// Serialize a model as a textual parameter dump.
///
/// Format `selmix-model v1`: a header with the spec, then for each layer a
/// `layer <idx> <out_dim> <in_dim>` line, one `w` line per output row, and a
/// `b` line with the biases. Floats round-trip exactly.
pub fn save_model<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("selmix-model v1\n");
    let spec = model.spec();
    match spec.arch {
        Arch::Linear => out.push_str("arch linear\n"),
        Arch::Mlp { hidden_units } => out.push_str(&format!("arch mlp {hidden_units}\n")),
    }
    out.push_str(&format!("input_dim {}\n", spec.input_dim));
    out.push_str(&format!("num_classes {}\n", spec.num_classes));
    out.push_str(&format!("init_scale {}\n", spec.init_scale));
    out.push_str(&format!("seed {}\n", spec.seed));
    for (idx, layer) in model.layers().iter().enumerate() {
        out.push_str(&format!("layer {idx} {} {}\n", layer.out_dim, layer.in_dim));
        for o in 0..layer.out_dim {
            let row: Vec<String> = layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim]
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            out.push_str(&format!("w {}\n", row.join(" ")));
        }
        let biases: Vec<String> = layer.biases.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("b {}\n", biases.join(" ")));
    }
    out.push_str("end\n");
    fs::write(path, out)?;
    Ok(())
}

/// Load a model saved by [`save_model`].
pub fn load_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let text = fs::read_to_string(path)?;
    let fail = |line: usize, message: &str| Error::ModelFormat {
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let (n, header) = lines.next().ok_or_else(|| fail(1, "empty file"))?;
    if header != "selmix-model v1" {
        return Err(fail(n + 1, "unsupported header"));
    }

    let mut arch = None;
    let mut input_dim = None;
    let mut num_classes = None;
    let mut init_scale = None;
    let mut seed = None;
    let mut layers: Vec<Layer<T>> = Vec::new();
    let mut current: Option<(Layer<T>, usize)> = None; // layer, rows filled
    let mut saw_end = false;

    for (i, line) in lines {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match tag {
            "arch" => match rest.as_slice() {
                ["linear"] => arch = Some(Arch::Linear),
                ["mlp", h] => {
                    let hidden_units = h
                        .parse()
                        .map_err(|_| fail(lineno, "bad hidden unit count"))?;
                    arch = Some(Arch::Mlp { hidden_units });
                }
                _ => return Err(fail(lineno, "bad arch line")),
            },
            "input_dim" => {
                input_dim = Some(
                    rest.first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| fail(lineno, "bad input_dim"))?,
                )
            }
            "num_classes" => {
                num_classes = Some(
                    rest.first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| fail(lineno, "bad num_classes"))?,
                )
            }
            "init_scale" => {
                init_scale = Some(
                    rest.first()
                        .and_then(|v| v.parse::<T>().ok())
                        .ok_or_else(|| fail(lineno, "bad init_scale"))?,
                )
            }
            "seed" => {
                seed = Some(
                    rest.first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| fail(lineno, "bad seed"))?,
                )
            }
            "layer" => {
                if let Some((layer, rows)) = current.take() {
                    if rows != layer.out_dim {
                        return Err(fail(lineno, "previous layer missing weight rows"));
                    }
                    layers.push(layer);
                }
                let (out_dim, in_dim) = match rest.as_slice() {
                    [_, out, inp] => (
                        out.parse().map_err(|_| fail(lineno, "bad out_dim"))?,
                        inp.parse().map_err(|_| fail(lineno, "bad in_dim"))?,
                    ),
                    _ => return Err(fail(lineno, "bad layer line")),
                };
                current = Some((Layer::zeros(in_dim, out_dim), 0));
            }
            "w" => {
                let (layer, rows) = current
                    .as_mut()
                    .ok_or_else(|| fail(lineno, "weights outside a layer"))?;
                if *rows >= layer.out_dim {
                    return Err(fail(lineno, "too many weight rows"));
                }
                if rest.len() != layer.in_dim {
                    return Err(fail(lineno, "weight row has wrong arity"));
                }
                for (j, field) in rest.iter().enumerate() {
                    layer.weights[*rows * layer.in_dim + j] = field
                        .parse::<T>()
                        .map_err(|_| fail(lineno, "non-numeric weight"))?;
                }
                *rows += 1;
            }
            "b" => {
                let (layer, _) = current
                    .as_mut()
                    .ok_or_else(|| fail(lineno, "biases outside a layer"))?;
                if rest.len() != layer.out_dim {
                    return Err(fail(lineno, "bias row has wrong arity"));
                }
                for (j, field) in rest.iter().enumerate() {
                    layer.biases[j] = field
                        .parse::<T>()
                        .map_err(|_| fail(lineno, "non-numeric bias"))?;
                }
            }
            "end" => {
                saw_end = true;
                break;
            }
            _ => return Err(fail(lineno, "unknown line tag")),
        }
    }
    if !saw_end {
        return Err(fail(0, "missing `end` marker"));
    }
    if let Some((layer, rows)) = current.take() {
        if rows != layer.out_dim {
            return Err(fail(0, "last layer missing weight rows"));
        }
        layers.push(layer);
    }
    let spec = ModelSpec {
        arch: arch.ok_or_else(|| fail(0, "missing arch"))?,
        input_dim: input_dim.ok_or_else(|| fail(0, "missing input_dim"))?,
        num_classes: num_classes.ok_or_else(|| fail(0, "missing num_classes"))?,
        init_scale: init_scale.ok_or_else(|| fail(0, "missing init_scale"))?,
        seed: seed.ok_or_else(|| fail(0, "missing seed"))?,
    };
    spec.validate()?;
    let expected: Vec<(usize, usize)> = match spec.arch {
        Arch::Linear => vec![(spec.input_dim, spec.num_classes)],
        Arch::Mlp { hidden_units } => vec![
            (spec.input_dim, hidden_units),
            (hidden_units, spec.num_classes),
        ],
    };
    if layers.len() != expected.len()
        || layers
            .iter()
            .zip(&expected)
            .any(|(l, &(i, o))| l.in_dim != i || l.out_dim != o)
    {
        return Err(fail(0, "layer shapes disagree with spec"));
    }
    Ok(Model { spec, layers })
}
