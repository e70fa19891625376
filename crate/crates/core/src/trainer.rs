//! Model initialization and the epoch / mini-batch Adam training loop.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, Ix1, Ix2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::adam::{AdamConfig, AdamState};
use crate::data::{fit_standardizer, LabeledDataset, ScalerParams};
use crate::error::{QmsError, Result};
use crate::eval::accuracy;
use crate::loss::{loss_and_gradients, ClassPartitionedBatch};
use crate::model::{check_alpha, AlphaMatrix, MemberFunctionParams, QmsModel};
use crate::rng;

/// Clamp floors: one value for every class pair, or a full matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaSpec {
    Uniform(f64),
    Matrix(AlphaMatrix),
}

impl AlphaSpec {
    pub fn to_matrix(&self, m: usize) -> Result<AlphaMatrix> {
        match self {
            AlphaSpec::Uniform(a) => AlphaMatrix::uniform(m, *a),
            AlphaSpec::Matrix(mat) if mat.m() == m => Ok(mat.clone()),
            AlphaSpec::Matrix(mat) => Err(QmsError::Config(format!(
                "alpha matrix is {0}x{0} but the data has {m} classes",
                mat.m()
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub q: usize,
    pub alpha: AlphaSpec,
    pub epochs: usize,
    pub batch_size: usize,
    /// Optimizer settings for the `A_i` tensors.
    pub adam_a: AdamConfig,
    /// Optimizer settings for the `b_i` tensors.
    pub adam_b: AdamConfig,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    /// Fit a z-score scaler on the training data and store it in the model.
    pub standardize: bool,
    /// Print one progress line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            q: 15,
            alpha: AlphaSpec::Uniform(0.4),
            epochs: 15,
            batch_size: 200,
            adam_a: AdamConfig::default(),
            adam_b: AdamConfig::default(),
            seed: 42,
            early_stop: None,
            standardize: true,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(QmsError::Config("q must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(QmsError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(QmsError::Config("batch size must be >= 1".into()));
        }
        if let AlphaSpec::Uniform(a) = self.alpha {
            check_alpha(a, "alpha")?;
        }
        if let Some(es) = self.early_stop {
            if es.patience == 0 {
                return Err(QmsError::Config("early-stop patience must be >= 1".into()));
            }
        }
        self.adam_a.validate()?;
        self.adam_b.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    /// Mean over the epoch's batches of the summed batch loss.
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub secs: f64,
}

impl EpochRecord {
    pub fn progress_line(&self) -> String {
        let mut line = format!(
            "epoch={} loss={:.6} train_acc={:.4}",
            self.epoch, self.loss, self.train_acc
        );
        if let Some(v) = self.val_acc {
            let _ = write!(line, " val_acc={v:.4}");
        }
        let _ = write!(line, " secs={:.3}", self.secs);
        line
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Adam steps taken per parameter tensor.
    pub steps: u64,
    /// Epoch whose parameters were returned, when early stopping selected one.
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    /// `epoch,loss,train_acc,val_acc,secs`; `val_acc` is empty without a
    /// validation set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_acc,val_acc,secs\n");
        for r in &self.epochs {
            let val = r.val_acc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{:.6}", r.epoch, r.loss, r.train_acc, val, r.secs);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| QmsError::io(path, e))
    }
}

/// Member functions with every entry of `A_i` and `b_i` drawn from N(0, 1).
/// Draw order: `A_0` row-major, `b_0`, `A_1`, `b_1`, …
pub fn init_members(q: usize, p: usize, m: usize, seed: u64) -> Result<Vec<MemberFunctionParams>> {
    if q == 0 || p == 0 {
        return Err(QmsError::Config(format!("need q >= 1 and p >= 1, got q = {q}, p = {p}")));
    }
    if m < 2 {
        return Err(QmsError::Config(format!("need at least 2 classes, got {m}")));
    }
    let mut rng = rng::stream(seed, rng::STREAM_INIT);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    (0..m)
        .map(|_| {
            let a = Array2::from_shape_simple_fn((q, p), &mut draw);
            let b = Array1::from_shape_simple_fn(q, &mut draw);
            MemberFunctionParams::new(a, b)
        })
        .collect()
}

/// A freshly initialized model with generated class names and `α ≡ 0`.
pub fn init_model(q: usize, p: usize, m: usize, seed: u64) -> Result<QmsModel> {
    let members = init_members(q, p, m, seed)?;
    QmsModel::new(
        members,
        AlphaMatrix::uniform(m, 0.0)?,
        (0..m).map(|i| format!("c{i}")).collect(),
        None,
    )
}

/// Shuffles the dataset with a permutation drawn from `(seed, epoch)` and
/// cuts it into consecutive batches of `batch_size` (the last may be
/// smaller), each grouped by class.
pub fn make_batches(
    data: &LabeledDataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<ClassPartitionedBatch>> {
    if batch_size == 0 {
        return Err(QmsError::Config("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut rng::batch_stream(seed, epoch));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let x = data.x().select(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.y()[i]).collect();
            ClassPartitionedBatch::from_labeled(&x, &y, data.m())
        })
        .collect()
}

/// One training run. Owns the model under training and its optimizer state.
pub struct Trainer {
    config: TrainConfig,
    model: QmsModel,
    states_a: Vec<AdamState<Ix2>>,
    states_b: Vec<AdamState<Ix1>>,
    train: LabeledDataset,
    val: Option<LabeledDataset>,
    steps: u64,
}

impl Trainer {
    /// Validates the configuration, fits the scaler on `train_set` when
    /// standardizing, and initializes parameters from the seed.
    pub fn new(config: TrainConfig, train_set: &LabeledDataset, val_set: Option<&LabeledDataset>) -> Result<Self> {
        config.validate()?;
        let m = train_set.m();
        if m < 2 {
            return Err(QmsError::Config(format!("need at least 2 classes, got {m}")));
        }
        for (c, count) in train_set.class_counts().into_iter().enumerate() {
            if count == 0 {
                return Err(QmsError::Config(format!(
                    "class {:?} has no training observations",
                    train_set.class_names()[c]
                )));
            }
        }
        if let Some(val) = val_set {
            if val.p() != train_set.p() {
                return Err(QmsError::shape("validation feature count (p)", train_set.p(), val.p()));
            }
            if val.class_names() != train_set.class_names() {
                return Err(QmsError::Config(
                    "validation classes differ from training classes".into(),
                ));
            }
        }
        if config.early_stop.is_some() && val_set.is_none() {
            return Err(QmsError::Config("early stopping needs a validation set".into()));
        }
        if config.batch_size < m {
            eprintln!(
                "warning: batch size {} is smaller than the number of classes {m}",
                config.batch_size
            );
        }

        let scaler: Option<ScalerParams> = if config.standardize {
            Some(fit_standardizer(train_set)?)
        } else {
            None
        };
        let (train, val) = match &scaler {
            Some(s) => (s.apply(train_set)?, val_set.map(|v| s.apply(v)).transpose()?),
            None => (train_set.clone(), val_set.cloned()),
        };

        let (q, p) = (config.q, train.p());
        let members = init_members(q, p, m, config.seed)?;
        let alpha = config.alpha.to_matrix(m)?;
        let model = QmsModel::new(members, alpha, train.class_names().to_vec(), scaler)?;
        Ok(Self {
            states_a: (0..m).map(|_| AdamState::new((q, p))).collect(),
            states_b: (0..m).map(|_| AdamState::new(q)).collect(),
            config,
            model,
            train,
            val,
            steps: 0,
        })
    }

    pub fn model(&self) -> &QmsModel {
        &self.model
    }

    /// Adam steps taken so far on each tensor.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn adam_state_a(&self, class: usize) -> &AdamState<Ix2> {
        &self.states_a[class]
    }

    pub fn adam_state_b(&self, class: usize) -> &AdamState<Ix1> {
        &self.states_b[class]
    }

    /// Training data as the model sees it (standardized when configured).
    pub fn train_data(&self) -> &LabeledDataset {
        &self.train
    }

    /// Computes the batch loss and gradients at the current parameters, then
    /// takes one Adam step on every tensor. Returns the batch loss.
    pub fn step(&mut self, batch: &ClassPartitionedBatch) -> Result<f64> {
        let (loss, grads) = loss_and_gradients(&self.model, batch)?;
        for (i, (mf, g)) in self.model.members_mut().iter_mut().zip(&grads.members).enumerate() {
            self.states_a[i].step(mf.a_mut(), &g.a, &self.config.adam_a)?;
            self.states_b[i].step(mf.b_mut(), &g.b, &self.config.adam_b)?;
        }
        self.steps += 1;
        Ok(loss)
    }

    /// Runs epoch `epoch` (zero-based) over freshly shuffled batches.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochRecord> {
        let started = Instant::now();
        let batches = make_batches(&self.train, self.config.batch_size, self.config.seed, epoch)?;
        let mut total = 0.0;
        for batch in &batches {
            let loss = self.step(batch)?;
            if !loss.is_finite() {
                return Err(QmsError::Numerical(format!(
                    "batch loss became {loss} in epoch {}",
                    epoch + 1
                )));
            }
            total += loss;
        }
        let mean = total / batches.len() as f64;
        if !self.model.members().iter().all(|mf| {
            mf.a().iter().chain(mf.b().iter()).all(|v| v.is_finite())
        }) {
            return Err(QmsError::Numerical(format!(
                "parameters became non-finite in epoch {}",
                epoch + 1
            )));
        }
        let train_acc = accuracy(&self.model.predict_batch(self.train.x())?, self.train.y())?;
        let val_acc = match &self.val {
            Some(v) => Some(accuracy(&self.model.predict_batch(v.x())?, v.y())?),
            None => None,
        };
        Ok(EpochRecord {
            epoch: epoch + 1,
            loss: mean,
            train_acc,
            val_acc,
            secs: started.elapsed().as_secs_f64(),
        })
    }

    /// Runs the configured epoch budget (or until early stopping triggers).
    pub fn run(mut self) -> Result<(QmsModel, TrainingHistory)> {
        let mut history = TrainingHistory::default();
        let mut best: Option<(f64, usize, QmsModel)> = None;
        let mut stale = 0usize;
        for epoch in 0..self.config.epochs {
            let record = self.run_epoch(epoch)?;
            if self.config.verbose {
                eprintln!("{}", record.progress_line());
            }
            let val_acc = record.val_acc;
            let epoch_no = record.epoch;
            history.epochs.push(record);
            if let (Some(es), Some(acc)) = (self.config.early_stop, val_acc) {
                match &best {
                    Some((best_acc, _, _)) if acc <= *best_acc => {
                        stale += 1;
                        if stale >= es.patience {
                            break;
                        }
                    }
                    _ => {
                        best = Some((acc, epoch_no, self.model.clone()));
                        stale = 0;
                    }
                }
            }
        }
        history.steps = self.steps;
        match best {
            Some((_, epoch, model)) => {
                history.best_epoch = Some(epoch);
                Ok((model, history))
            }
            None => Ok((self.model, history)),
        }
    }
}

/// Trains a model on `train_set`, optionally tracking accuracy on `val_set`.
/// With early stopping configured, returns the parameters from the epoch
/// with the highest validation accuracy (earliest on ties).
pub fn train(
    config: &TrainConfig,
    train_set: &LabeledDataset,
    val_set: Option<&LabeledDataset>,
) -> Result<(QmsModel, TrainingHistory)> {
    Trainer::new(config.clone(), train_set, val_set)?.run()
}
