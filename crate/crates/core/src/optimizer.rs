//! Block stochastic gradient descent with moment estimation.
//!
//! Each minibatch performs two block updates in Gauss–Seidel order:
//!
//! 1. `β ← prox(β − a ∘ m̂_β)` with gradient taken at `(β, λ)`;
//! 2. `λ ← λ − η·m̂_λ/(√v̂_λ + ε)` with gradient taken at the updated `β`.
//!
//! Here `a_k = η/(√v̂_k + ε)` is the per-coordinate moment-scaled step and
//! the prox of `μ‖β‖²` is evaluated with that same step, coordinate by
//! coordinate: `β_k ← (β_k − a_k m̂_k) / (1 + 2 a_k μ)`. Its fixed points are
//! exactly the stationary points of the regularized objective; shrinking with
//! the bare `η` instead would settle away from the ridge solution.
//!
//! After every epoch the unregularized validation loss decides early stopping
//! and the best parameters seen so far are kept as the result.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::objective::{shrink, FeatureBlock, LossKind};
use crate::rng;
use crate::spectral::{sample_features, FourierFeatures, RelevanceVector};

/// Number of random features, fixed or derived from the training size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumFeatures {
    /// `⌊√n · ln n⌋` with `n` the training-split size, at least 1.
    Auto,
    Fixed(usize),
}

impl NumFeatures {
    pub fn resolve(self, n_train: usize) -> Result<usize> {
        match self {
            NumFeatures::Auto => Ok(auto_num_features(n_train)),
            NumFeatures::Fixed(0) => Err(Error::arg("number of features must be >= 1")),
            NumFeatures::Fixed(s) => Ok(s),
        }
    }
}

pub fn auto_num_features(n: usize) -> usize {
    if n < 2 {
        return 1;
    }
    let n = n as f64;
    ((n.sqrt() * n.ln()).floor() as usize).max(1)
}

/// Moment-estimation hyperparameters shared by both blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for MomentParams {
    fn default() -> Self {
        MomentParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Learning rate `η`.
    pub eta: f64,
    /// Ridge weight `μ` on `β`.
    pub mu: f64,
    /// Epochs without significant validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Fraction of rows held out for validation when the loop splits itself.
    pub val_fraction: f64,
    pub seed: u64,
    pub num_features: NumFeatures,
    /// Minimum relative decrease of the validation loss that resets patience.
    pub rel_tol: f64,
    /// When false, `λ` stays at its initial value.
    pub learn_relevances: bool,
    pub moments: MomentParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 1e-3,
            mu: 1e-5,
            patience: 10,
            max_epochs: 300,
            batch_size: 32,
            val_fraction: 0.1,
            seed: 0,
            num_features: NumFeatures::Auto,
            rel_tol: 1e-4,
            learn_relevances: true,
            moments: MomentParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: &dyn std::fmt::Display| {
            Err(Error::arg(format!("{what} out of range: {v}")))
        };
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("learning rate", &self.eta);
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("regularization", &self.mu);
        }
        if self.patience == 0 {
            return bad("patience", &self.patience);
        }
        if self.max_epochs == 0 {
            return bad("max epochs", &self.max_epochs);
        }
        if self.batch_size == 0 {
            return bad("batch size", &self.batch_size);
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("validation fraction", &self.val_fraction);
        }
        if !(self.rel_tol >= 0.0) {
            return bad("relative tolerance", &self.rel_tol);
        }
        let m = self.moments;
        if !(0.0..1.0).contains(&m.beta1) || !(0.0..1.0).contains(&m.beta2) || !(m.eps > 0.0) {
            return Err(Error::arg("moment decay rates must lie in [0, 1) and eps > 0"));
        }
        if let NumFeatures::Fixed(0) = self.num_features {
            return bad("number of features", &0);
        }
        Ok(())
    }
}

/// Learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub beta: Vec<f64>,
    pub lambda: RelevanceVector,
}

impl Parameters {
    /// `β = 0`, `λ = 1`.
    pub fn initial(s: usize, p: usize) -> Self {
        Parameters {
            beta: vec![0.0; s],
            lambda: RelevanceVector::ones(p),
        }
    }

    /// `β = 0`, `λ = 1/√p`: on standardized inputs `‖λ ∘ x‖²` starts near 1
    /// whatever the dimension. Useful when `p` is large enough that the
    /// unit-relevance kernel is nearly diagonal on the data.
    pub fn dimension_scaled(s: usize, p: usize) -> Self {
        let l = 1.0 / (p.max(1) as f64).sqrt();
        Parameters {
            beta: vec![0.0; s],
            lambda: RelevanceVector::new(vec![l; p]).expect("finite"),
        }
    }

    fn check(&self, ff: &FourierFeatures) -> Result<()> {
        if self.beta.len() != ff.num_features() || self.lambda.len() != ff.dim() {
            return Err(Error::arg(format!(
                "parameters (β: {}, λ: {}) do not fit a feature map with s={}, p={}",
                self.beta.len(),
                self.lambda.len(),
                ff.num_features(),
                ff.dim()
            )));
        }
        Ok(())
    }
}

/// First and second moment accumulators of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub steps: u64,
}

impl BlockMoments {
    fn new(len: usize) -> Self {
        BlockMoments {
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }

    /// Folds in `grad`, then overwrites it with the bias-corrected first
    /// moment `m̂` and fills `scale` with `1 / (√v̂ + ε)`.
    fn update(&mut self, grad: &mut [f64], scale: &mut [f64], params: &MomentParams) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - params.beta1.powi(t);
        let c2 = 1.0 - params.beta2.powi(t);
        for (((g, m), v), sc) in grad
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
            .zip(scale.iter_mut())
        {
            *m = params.beta1 * *m + (1.0 - params.beta1) * *g;
            *v = params.beta2 * *v + (1.0 - params.beta2) * *g * *g;
            *g = *m / c1;
            *sc = 1.0 / ((*v / c2).sqrt() + params.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub beta: BlockMoments,
    pub lambda: BlockMoments,
}

impl MomentState {
    pub fn new(s: usize, p: usize) -> Self {
        MomentState {
            beta: BlockMoments::new(s),
            lambda: BlockMoments::new(p),
        }
    }
}

/// Everything the epoch loop mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Parameters,
    pub moments: MomentState,
    /// Completed epochs.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(params: Parameters) -> Self {
        let moments = MomentState::new(params.beta.len(), params.lambda.len());
        TrainState {
            params,
            moments,
            epoch: 0,
        }
    }
}

/// Feature matrix and targets of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

impl Sample {
    pub fn new(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::arg(format!("{} rows but {} targets", x.nrows(), y.len())));
        }
        Ok(Sample {
            x: x.as_standard_layout().into_owned(),
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn select(&self, idx: &[usize]) -> Sample {
        Sample {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Validation size `round(f·n)` (halves round up); both parts non-empty.
pub fn split_sizes(n: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::arg(format!("validation fraction {fraction} not in (0, 1)")));
    }
    let n_val = (fraction * n as f64 + 0.5).floor() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::arg(format!(
            "validation fraction {fraction} of {n} rows leaves an empty split"
        )));
    }
    Ok((n - n_val, n_val))
}

/// Seeded disjoint train/validation row indices, each in ascending order.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let (_, n_val) = split_sizes(n, fraction)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::STREAM_VAL_SPLIT));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

pub fn split_train_val(sample: &Sample, fraction: f64, seed: u64) -> Result<(Sample, Sample)> {
    let (train, val) = split_indices(sample.len(), fraction, seed)?;
    Ok((sample.select(&train), sample.select(&val)))
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean minibatch loss, each batch evaluated before its update.
    pub train_loss: f64,
    /// Unregularized mean loss on the validation split after the epoch.
    pub val_loss: f64,
    /// Wall-clock seconds since training started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub n_train: usize,
    pub n_val: usize,
    pub num_features: usize,
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    pub fn best_val_loss(&self) -> f64 {
        self.records[self.best_epoch - 1].val_loss
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub features: FourierFeatures,
    pub params: Parameters,
    pub history: History,
}

/// One pass over `train` in seeded minibatches. Returns the mean minibatch
/// loss observed before each update.
pub fn epoch_step(
    state: &mut TrainState,
    train: &Sample,
    ff: &FourierFeatures,
    kind: LossKind,
    config: &TrainConfig,
) -> Result<f64> {
    state.params.check(ff)?;
    if train.is_empty() {
        return Err(Error::arg("empty training split"));
    }
    if train.x.ncols() != ff.dim() {
        return Err(Error::arg(format!(
            "training data has {} columns, feature map expects {}",
            train.x.ncols(),
            ff.dim()
        )));
    }
    let epoch = state.epoch + 1;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng::stream(
        config.seed,
        rng::STREAM_SHUFFLE_BASE + state.epoch as u64,
    ));

    let amp = ff.amplitude();
    let mut block = FeatureBlock::default();
    let mut grad_beta = vec![0.0; ff.num_features()];
    let mut grad_lambda = vec![0.0; ff.dim()];
    let mut scale_beta = vec![0.0; ff.num_features()];
    let mut scale_lambda = vec![0.0; ff.dim()];
    let mut loss_sum = 0.0;
    let x = train.x.view();

    for (b, idx) in order.chunks(config.batch_size).enumerate() {
        let diverged = |reason: &str| Error::Training {
            epoch,
            batch: b,
            reason: reason.to_string(),
        };
        let params = &mut state.params;
        block.fill(x, idx, &params.lambda, ff);

        let derivs = block.derivatives(&params.beta, &train.y, idx, kind, amp);
        loss_sum += block.mean_loss(&params.beta, &train.y, idx, kind, amp) * idx.len() as f64;
        block.grad_beta(&derivs, amp, &mut grad_beta);
        if grad_beta.iter().any(|g| !g.is_finite()) {
            return Err(diverged("non-finite coefficient gradient"));
        }
        state.moments.beta.update(&mut grad_beta, &mut scale_beta, &config.moments);
        for ((w, m), sc) in params.beta.iter_mut().zip(&grad_beta).zip(&scale_beta) {
            let step = config.eta * sc;
            *w = shrink(*w - step * m, step, config.mu);
        }

        if config.learn_relevances {
            let derivs = block.derivatives(&params.beta, &train.y, idx, kind, amp);
            block.grad_lambda(x, idx, &params.beta, &derivs, ff, &mut grad_lambda);
            if grad_lambda.iter().any(|g| !g.is_finite()) {
                return Err(diverged("non-finite relevance gradient"));
            }
            state.moments.lambda.update(&mut grad_lambda, &mut scale_lambda, &config.moments);
            for ((l, m), sc) in params.lambda.as_mut_slice().iter_mut().zip(&grad_lambda).zip(&scale_lambda) {
                *l -= config.eta * sc * m;
            }
        }
        if params.beta.iter().chain(params.lambda.as_slice()).any(|v| !v.is_finite()) {
            return Err(diverged("parameters became non-finite"));
        }
    }
    state.epoch = epoch;
    Ok(loss_sum / train.len() as f64)
}

/// Unregularized mean loss of `params` on `sample`, evaluated in chunks.
pub fn mean_loss(
    sample: &Sample,
    params: &Parameters,
    ff: &FourierFeatures,
    kind: LossKind,
) -> Result<f64> {
    params.check(ff)?;
    if sample.is_empty() {
        return Err(Error::arg("empty sample"));
    }
    Ok(chunked_loss(sample.x.view(), &sample.y, params, ff, kind))
}

fn chunked_loss(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    params: &Parameters,
    ff: &FourierFeatures,
    kind: LossKind,
) -> f64 {
    const CHUNK: usize = 256;
    let amp = ff.amplitude();
    let mut block = FeatureBlock::default();
    let all: Vec<usize> = (0..y.len()).collect();
    let mut total = 0.0;
    for idx in all.chunks(CHUNK) {
        block.fill(x, idx, &params.lambda, ff);
        total += block.mean_loss(&params.beta, y, idx, kind, amp) * idx.len() as f64;
    }
    total / y.len() as f64
}

/// Trains on an explicit train/validation pair with a given feature map.
pub fn train(
    train: &Sample,
    val: &Sample,
    ff: FourierFeatures,
    kind: LossKind,
    config: &TrainConfig,
    init: Option<Parameters>,
) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::arg("training and validation splits must be non-empty"));
    }
    if val.x.ncols() != ff.dim() {
        return Err(Error::arg("validation data dimension does not match feature map"));
    }
    kind.check_targets(&train.y)?;
    kind.check_targets(&val.y)?;
    let init = init.unwrap_or_else(|| Parameters::initial(ff.num_features(), ff.dim()));
    init.check(&ff)?;

    let start = Instant::now();
    let mut state = TrainState::new(init);
    let mut best = state.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::INFINITY;
    let mut stale = 0;
    let mut records = Vec::new();

    while state.epoch < config.max_epochs {
        let train_loss = epoch_step(&mut state, train, &ff, kind, config)?;
        let val_loss = mean_loss(val, &state.params, &ff, kind)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch: state.epoch,
                batch: train.len().div_ceil(config.batch_size),
                reason: "non-finite validation loss".into(),
            });
        }
        records.push(EpochRecord {
            epoch: state.epoch,
            train_loss,
            val_loss,
            elapsed: start.elapsed().as_secs_f64(),
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = state.params.clone();
            best_epoch = state.epoch;
        }
        if reference.is_infinite() || val_loss < reference - config.rel_tol * reference.abs() {
            reference = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(FitOutcome {
        history: History {
            n_train: train.len(),
            n_val: val.len(),
            num_features: ff.num_features(),
            records,
            best_epoch,
        },
        features: ff,
        params: best,
    })
}

/// Full training procedure: split off a validation fraction, sample the
/// feature map, then train with early stopping.
pub fn fit_loop(
    sample: &Sample,
    config: &TrainConfig,
    kind: LossKind,
    init: Option<Parameters>,
) -> Result<FitOutcome> {
    config.validate()?;
    if sample.is_empty() {
        return Err(Error::arg("no training data"));
    }
    let (tr, val) = split_train_val(sample, config.val_fraction, config.seed)?;
    let s = config.num_features.resolve(tr.len())?;
    let ff = sample_features(sample.x.ncols(), s, config.seed)?;
    train(&tr, &val, ff, kind, config, init)
}
