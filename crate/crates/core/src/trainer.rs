//! Training loop for the embedder under either the OIM loss or the softmax
//! classifier baseline.
//!
//! Within an iteration every labeled sample is scored against the buffer
//! state from the start of the iteration. Buffer updates happen only after
//! the parameter step: one table update per labeled sample, in sample order,
//! then a single queue push with all unlabeled features. Background samples
//! never touch anything.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::{
    embed, embed_backward, embed_forward, sgd_step, softmax_cls_loss, EmbedderParams,
    OptimizerState, SoftmaxClassifierParams,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oim::{
    oim_forward, oim_grad_x, oim_loss, sample_subset, CircularQueue, FeatureVec, LookupTable,
    OimConfig,
};
use crate::synth::{PersonKind, Split, SynthWorld};

pub const CHECKPOINT_FORMAT: &str = "oimsearch-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "iteration,lr,loss,train_accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Oim,
    Softmax,
    SoftmaxPretrained,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oim" => Ok(LossKind::Oim),
            "softmax" => Ok(LossKind::Softmax),
            "softmax_pretrained" | "softmax-pretrained" => Ok(LossKind::SoftmaxPretrained),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss kind {other:?}; expected oim, softmax or softmax_pretrained"
            ))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Oim => "oim",
            LossKind::Softmax => "softmax",
            LossKind::SoftmaxPretrained => "softmax_pretrained",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scenes_per_batch: usize,
    pub total_iters: usize,
    pub lr_base: f64,
    pub lr_drop_iter: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub loss_kind: LossKind,
    /// Full-batch classifier steps before joint training (`softmax_pretrained` only).
    pub pretrain_iters: usize,
    pub pretrain_lr: f64,
    /// Loss settings; `feature_dim` is the embedding dimension.
    pub oim: OimConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenes_per_batch: 2,
            total_iters: 2000,
            lr_base: 0.01,
            lr_drop_iter: 1600,
            lr_drop_factor: 0.1,
            momentum: 0.9,
            loss_kind: LossKind::Oim,
            pretrain_iters: 200,
            pretrain_lr: 0.1,
            oim: OimConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.oim.validate()?;
        if self.scenes_per_batch == 0 {
            return Err(Error::InvalidConfig(
                "scenes_per_batch must be positive".into(),
            ));
        }
        if self.lr_drop_iter > self.total_iters {
            return Err(Error::InvalidConfig(format!(
                "lr_drop_iter {} exceeds total_iters {}",
                self.lr_drop_iter, self.total_iters
            )));
        }
        if !(self.lr_base >= 0.0 && self.lr_base.is_finite() && self.lr_drop_factor >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning rates must be finite and >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum {} outside [0,1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Single step drop: `lr_base` before `lr_drop_iter`, scaled afterwards.
pub fn lr_schedule(cfg: &TrainConfig, iteration: usize) -> f64 {
    if iteration < cfg.lr_drop_iter {
        cfg.lr_base
    } else {
        cfg.lr_base * cfg.lr_drop_factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OimBuffers {
    pub lut: LookupTable,
    pub queue: CircularQueue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Zero-based index of the step.
    pub iteration: usize,
    pub lr: f64,
    /// `None` when the step was skipped for lack of labeled samples.
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub labeled: usize,
    /// Table updates refused because the blend cancelled to zero.
    pub lut_rejected: usize,
}

impl StepMetrics {
    pub fn skipped(&self) -> bool {
        self.loss.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub raw_dim: usize,
    /// Completed steps.
    pub iteration: usize,
    pub embedder: EmbedderParams,
    pub optimizer: OptimizerState,
    pub classifier: Option<SoftmaxClassifierParams>,
    pub buffers: Option<OimBuffers>,
    pub rng: ChaCha8Rng,
    pub history: Vec<StepMetrics>,
    /// Full-batch loss before each pretraining step.
    pub pretrain_history: Vec<f64>,
}

impl TrainState {
    pub fn new(config: TrainConfig, raw_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dim = config.oim.feature_dim;
        let embedder = EmbedderParams::init(&mut rng, raw_dim, dim);
        let w_len = embedder.weight.as_slice().len();
        let (optimizer, classifier, buffers) = match config.loss_kind {
            LossKind::Oim => (
                OptimizerState::new(config.momentum, config.lr_base, &[w_len]),
                None,
                Some(OimBuffers {
                    lut: LookupTable::zeros(config.oim.num_labeled, dim),
                    queue: CircularQueue::new(config.oim.queue_capacity, dim),
                }),
            ),
            LossKind::Softmax | LossKind::SoftmaxPretrained => {
                let cls = SoftmaxClassifierParams::init(&mut rng, config.oim.num_labeled, dim);
                let sizes = [w_len, cls.weight.as_slice().len(), cls.bias.len()];
                (
                    OptimizerState::new(config.momentum, config.lr_base, &sizes),
                    Some(cls),
                    None,
                )
            }
        };
        Ok(Self {
            config,
            raw_dim,
            iteration: 0,
            embedder,
            optimizer,
            classifier,
            buffers,
            rng,
            history: Vec::new(),
            pretrain_history: Vec::new(),
        })
    }

    fn check_consistent(&self) -> Result<()> {
        let oim = self.config.loss_kind == LossKind::Oim;
        if oim != self.buffers.is_some() || oim == self.classifier.is_some() {
            return Err(Error::InvalidConfig(format!(
                "state for loss {} has inconsistent buffers/classifier",
                self.config.loss_kind
            )));
        }
        if self.embedder.in_dim() != self.raw_dim
            || self.embedder.out_dim() != self.config.oim.feature_dim
        {
            return Err(Error::ShapeMismatch(format!(
                "embedder is {}x{}, config expects {}x{}",
                self.embedder.out_dim(),
                self.embedder.in_dim(),
                self.config.oim.feature_dim,
                self.raw_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub scene_id: usize,
    pub raw: &'a [f64],
    pub kind: PersonKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch<'a> {
    pub scenes: Vec<usize>,
    pub samples: Vec<Sample<'a>>,
}

/// Draws `scenes_per_batch` distinct training scenes uniformly and returns
/// every annotated entry in them.
pub fn build_minibatch<'a>(
    world: &'a SynthWorld,
    rng: &mut ChaCha8Rng,
    scenes_per_batch: usize,
) -> Result<MiniBatch<'a>> {
    let train = world.train_scene_ids();
    if train.is_empty() {
        return Err(Error::Empty("training scenes"));
    }
    let k = scenes_per_batch.min(train.len());
    let scenes: Vec<usize> = sample(rng, train.len(), k)
        .into_iter()
        .map(|i| train[i])
        .collect();
    let samples = scenes
        .iter()
        .flat_map(|&sid| {
            world.scenes[sid].persons.iter().map(move |p| Sample {
                scene_id: sid,
                raw: &p.raw,
                kind: p.kind,
            })
        })
        .collect();
    Ok(MiniBatch { scenes, samples })
}

fn labeled_samples<'a>(
    batch: &MiniBatch<'a>,
    num_labeled: usize,
) -> Result<Vec<(usize, &'a [f64])>> {
    batch
        .samples
        .iter()
        .filter_map(|s| match s.kind {
            PersonKind::Labeled(t) if t < num_labeled => Some(Ok((t, s.raw))),
            PersonKind::Labeled(t) => Some(Err(Error::ClassOutOfRange {
                id: t,
                len: num_labeled,
            })),
            _ => None,
        })
        .collect()
}

/// One optimization step on `batch`. Returns the step's metrics, which are
/// also appended to the state's history.
pub fn train_step(state: &mut TrainState, batch: &MiniBatch<'_>) -> Result<StepMetrics> {
    state.check_consistent()?;
    let lr = lr_schedule(&state.config, state.iteration);
    let labeled = labeled_samples(batch, state.config.oim.num_labeled)?;
    let mut metrics = StepMetrics {
        iteration: state.iteration,
        lr,
        loss: None,
        accuracy: None,
        labeled: labeled.len(),
        lut_rejected: 0,
    };
    if !labeled.is_empty() {
        state.optimizer.learning_rate = lr;
        let (loss, acc, rejected) = match state.config.loss_kind {
            LossKind::Oim => oim_step(state, batch, &labeled)?,
            LossKind::Softmax | LossKind::SoftmaxPretrained => softmax_step(state, &labeled)?,
        };
        metrics.loss = Some(loss);
        metrics.accuracy = Some(acc);
        metrics.lut_rejected = rejected;
    }
    state.iteration += 1;
    state.history.push(metrics.clone());
    Ok(metrics)
}

fn oim_step(
    state: &mut TrainState,
    batch: &MiniBatch<'_>,
    labeled: &[(usize, &[f64])],
) -> Result<(f64, f64, usize)> {
    let cfg = state.config.oim.clone();
    let n = labeled.len() as f64;
    let buffers = state.buffers.as_ref().expect("checked by check_consistent");
    let mut grad_w = Matrix::zeros(state.embedder.out_dim(), state.embedder.in_dim());
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut table_updates: Vec<(usize, FeatureVec)> = Vec::with_capacity(labeled.len());

    for &(t, raw) in labeled {
        let (z, cache) = embed_forward(raw, &state.embedder)?;
        let subset = sample_subset(&mut state.rng, &cfg, t, buffers.queue.len())?;
        let scores = oim_forward(&z, &buffers.lut, &buffers.queue, &cfg, subset.as_ref())?;
        loss_sum += oim_loss(&scores, t)?;
        if scores.argmax() == t {
            correct += 1;
        }
        let mut dz = oim_grad_x(&scores, t, &buffers.lut, &buffers.queue, &cfg)?;
        dz.iter_mut().for_each(|g| *g /= n);
        let (dw, _) = embed_backward(&state.embedder, &cache, &dz)?;
        for (acc, d) in grad_w.as_mut_slice().iter_mut().zip(dw.as_slice()) {
            *acc += d;
        }
        table_updates.push((t, z));
    }

    let unlabeled: Vec<FeatureVec> = batch
        .samples
        .iter()
        .filter(|s| matches!(s.kind, PersonKind::Unlabeled(_)))
        .map(|s| embed(s.raw, &state.embedder))
        .collect::<Result<_>>()?;

    sgd_step(
        &mut [state.embedder.weight.as_mut_slice()],
        &[grad_w.as_slice()],
        &mut state.optimizer,
    )?;

    let buffers = state.buffers.as_mut().expect("checked by check_consistent");
    let mut rejected = 0;
    for (t, z) in &table_updates {
        match buffers.lut.update(*t, z, cfg.gamma) {
            Ok(()) => {}
            Err(Error::ZeroNorm(_)) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    buffers.queue.push(&unlabeled)?;
    Ok((loss_sum / n, correct as f64 / n, rejected))
}

fn softmax_step(state: &mut TrainState, labeled: &[(usize, &[f64])]) -> Result<(f64, f64, usize)> {
    let n = labeled.len() as f64;
    let cls = state
        .classifier
        .as_mut()
        .expect("checked by check_consistent");
    let mut grad_w = Matrix::zeros(state.embedder.out_dim(), state.embedder.in_dim());
    let mut grad_cw = Matrix::zeros(cls.weight.rows(), cls.weight.cols());
    let mut grad_cb = vec![0.0; cls.bias.len()];
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for &(t, raw) in labeled {
        let (z, cache) = embed_forward(raw, &state.embedder)?;
        let out = softmax_cls_loss(z.as_slice(), t, cls)?;
        loss_sum += out.loss;
        if argmax(&out.probs) == t {
            correct += 1;
        }
        let dz: Vec<f64> = out.dz.iter().map(|g| g / n).collect();
        let (dw, _) = embed_backward(&state.embedder, &cache, &dz)?;
        for (acc, d) in grad_w.as_mut_slice().iter_mut().zip(dw.as_slice()) {
            *acc += d;
        }
        for (acc, d) in grad_cw
            .as_mut_slice()
            .iter_mut()
            .zip(out.grads.weight.as_slice())
        {
            *acc += d / n;
        }
        for (acc, d) in grad_cb.iter_mut().zip(&out.grads.bias) {
            *acc += d / n;
        }
    }
    sgd_step(
        &mut [
            state.embedder.weight.as_mut_slice(),
            cls.weight.as_mut_slice(),
            &mut cls.bias,
        ],
        &[grad_w.as_slice(), grad_cw.as_slice(), &grad_cb],
        &mut state.optimizer,
    )?;
    Ok((loss_sum / n, correct as f64 / n, 0))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fits the classifier alone against frozen embeddings of every labeled
/// training instance, by full-batch gradient descent with momentum.
pub fn pretrain_classifier(state: &mut TrainState, world: &SynthWorld, iters: usize) -> Result<()> {
    if state.config.loss_kind != LossKind::SoftmaxPretrained {
        return Err(Error::InvalidConfig(format!(
            "classifier pretraining requires loss softmax_pretrained, state uses {}",
            state.config.loss_kind
        )));
    }
    if iters == 0 {
        return Ok(());
    }
    let num_labeled = state.config.oim.num_labeled;
    let mut data: Vec<(usize, FeatureVec)> = Vec::new();
    for p in world.scenes_in(Split::Train).flat_map(|s| &s.persons) {
        if let PersonKind::Labeled(t) = p.kind {
            if t >= num_labeled {
                return Err(Error::ClassOutOfRange {
                    id: t,
                    len: num_labeled,
                });
            }
            data.push((t, embed(&p.raw, &state.embedder)?));
        }
    }
    if data.is_empty() {
        return Err(Error::Empty("labeled training instances"));
    }
    let n = data.len() as f64;
    let cls = state
        .classifier
        .as_mut()
        .expect("softmax state has a classifier");
    let mut opt = OptimizerState::new(
        state.config.momentum,
        state.config.pretrain_lr,
        &[cls.weight.as_slice().len(), cls.bias.len()],
    );
    for _ in 0..iters {
        let mut gw = Matrix::zeros(cls.weight.rows(), cls.weight.cols());
        let mut gb = vec![0.0; cls.bias.len()];
        let mut loss = 0.0;
        for (t, z) in &data {
            let out = softmax_cls_loss(z.as_slice(), *t, cls)?;
            loss += out.loss;
            for (acc, d) in gw
                .as_mut_slice()
                .iter_mut()
                .zip(out.grads.weight.as_slice())
            {
                *acc += d / n;
            }
            for (acc, d) in gb.iter_mut().zip(&out.grads.bias) {
                *acc += d / n;
            }
        }
        state.pretrain_history.push(loss / n);
        sgd_step(
            &mut [cls.weight.as_mut_slice(), &mut cls.bias],
            &[gw.as_slice(), &gb],
            &mut opt,
        )?;
    }
    Ok(())
}

/// Runs steps until `state.iteration == until` (capped at `total_iters`).
pub fn train_until(state: &mut TrainState, world: &SynthWorld, until: usize) -> Result<()> {
    let until = until.min(state.config.total_iters);
    while state.iteration < until {
        let mut rng = state.rng.clone();
        let batch = build_minibatch(world, &mut rng, state.config.scenes_per_batch)?;
        state.rng = rng;
        train_step(state, &batch)?;
    }
    Ok(())
}

/// Fresh state, optional classifier pretraining, then the full schedule.
pub fn train(config: &TrainConfig, world: &SynthWorld) -> Result<TrainState> {
    if config.oim.num_labeled != world.num_labeled() {
        return Err(Error::InvalidConfig(format!(
            "trainer expects {} labeled identities, world has {}",
            config.oim.num_labeled,
            world.num_labeled()
        )));
    }
    let mut state = TrainState::new(config.clone(), world.raw_dim())?;
    if config.loss_kind == LossKind::SoftmaxPretrained {
        pretrain_classifier(&mut state, world, config.pretrain_iters)?;
    }
    train_until(&mut state, world, config.total_iters)?;
    Ok(state)
}

/// Labeled-sample-weighted accuracy over the `window` steps ending at
/// `completed` completed steps. Skipped steps carry no weight.
pub fn windowed_accuracy(history: &[StepMetrics], completed: usize, window: usize) -> Option<f64> {
    let lo = completed.saturating_sub(window);
    let (mut correct, mut total) = (0.0, 0usize);
    for m in history
        .iter()
        .filter(|m| m.iteration >= lo && m.iteration < completed)
    {
        if let Some(a) = m.accuracy {
            correct += a * m.labeled as f64;
            total += m.labeled;
        }
    }
    (total > 0).then(|| correct / total as f64)
}

/// Mean loss over the `window` non-skipped steps ending at `completed`.
pub fn windowed_loss(history: &[StepMetrics], completed: usize, window: usize) -> Option<f64> {
    let lo = completed.saturating_sub(window);
    let losses: Vec<f64> = history
        .iter()
        .filter(|m| m.iteration >= lo && m.iteration < completed)
        .filter_map(|m| m.loss)
        .collect();
    (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn write_metrics_csv<W: Write>(history: &[StepMetrics], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in history {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{}",
            m.iteration,
            m.lr,
            opt(m.loss),
            opt(m.accuracy)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Self-describing first line of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub loss_kind: LossKind,
    pub raw_dim: usize,
    pub feature_dim: usize,
    pub num_labeled: usize,
    pub queue_capacity: usize,
    pub iteration: usize,
}

impl CheckpointHeader {
    fn describe(state: &TrainState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            loss_kind: state.config.loss_kind,
            raw_dim: state.raw_dim,
            feature_dim: state.config.oim.feature_dim,
            num_labeled: state.config.oim.num_labeled,
            queue_capacity: state.config.oim.queue_capacity,
            iteration: state.iteration,
        }
    }
}

/// Writes a header line followed by the full state as one JSON line.
pub fn checkpoint_save(state: &TrainState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &CheckpointHeader::describe(state))?;
    w.write_all(b"\n")?;
    serde_json::to_writer(&mut w, state)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn checkpoint_load(path: &Path) -> Result<TrainState> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Checkpoint("empty file".into()))?;
    let header: CheckpointHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "not a checkpoint (format {:?})",
            header.format
        )));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {} is not supported (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    let body = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Checkpoint("missing state".into()))?;
    let state: TrainState = serde_json::from_str(&body)
        .map_err(|e| Error::Checkpoint(format!("corrupt state: {e}")))?;
    if CheckpointHeader::describe(&state) != header {
        return Err(Error::Checkpoint(
            "header does not match stored state".into(),
        ));
    }
    state
        .check_consistent()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(state)
}

/// Loads a checkpoint and checks it against the dimensions a caller expects.
pub fn checkpoint_load_for(
    path: &Path,
    config: &TrainConfig,
    raw_dim: usize,
) -> Result<TrainState> {
    let state = checkpoint_load(path)?;
    let want = (
        raw_dim,
        config.oim.feature_dim,
        config.oim.num_labeled,
        config.loss_kind,
    );
    let got = (
        state.raw_dim,
        state.config.oim.feature_dim,
        state.config.oim.num_labeled,
        state.config.loss_kind,
    );
    if want != got {
        return Err(Error::Checkpoint(format!(
            "shape mismatch: checkpoint has (raw_dim, feature_dim, num_labeled, loss) = {got:?}, expected {want:?}"
        )));
    }
    Ok(state)
}
