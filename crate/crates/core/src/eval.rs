//! Accuracy, k-fold cross-validation, and one-parameter sweeps.

use std::fmt::{self, Write as _};
use std::path::Path;

use rayon::prelude::*;

use crate::data::{kfold, LabeledDataset};
use crate::error::{QmsError, Result};
use crate::model::check_alpha;
use crate::trainer::{train, AlphaSpec, TrainConfig};

/// Fraction of positions where `predictions` and `truth` agree.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(QmsError::shape("prediction count", truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(QmsError::Data("accuracy of an empty set is undefined".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean and sample (n − 1) standard deviation; the deviation is 0 for a
/// single value.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub k: usize,
    /// Configuration every fold was trained with (fold `i` adds `i` to its seed).
    pub config: TrainConfig,
}

impl CvReport {
    fn from_folds(fold_accuracies: Vec<f64>, k: usize, config: TrainConfig) -> Self {
        let (mean, std) = mean_and_std(&fold_accuracies);
        Self {
            fold_accuracies,
            mean,
            std,
            k,
            config,
        }
    }

    /// `fold,accuracy`, folds numbered from 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,accuracy\n");
        for (i, acc) in self.fold_accuracies.iter().enumerate() {
            let _ = writeln!(out, "{i},{acc}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }
}

impl fmt::Display for CvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>9}", "fold", "accuracy")?;
        for (i, acc) in self.fold_accuracies.iter().enumerate() {
            writeln!(f, "{i:>6}  {:>8.2}%", acc * 100.0)?;
        }
        write!(
            f,
            "{}-fold mean {:.2}% (std {:.2}%)",
            self.k,
            self.mean * 100.0,
            self.std * 100.0
        )
    }
}

/// Trains one model per fold of a stratified k-fold partition (drawn from
/// `config.seed`) and scores it on the held-out fold. Each fold fits its own
/// scaler on its training part only. Folds run in parallel; the result does
/// not depend on scheduling.
pub fn cross_validate(config: &TrainConfig, data: &LabeledDataset, k: usize) -> Result<CvReport> {
    config.validate()?;
    let folds = kfold(data, k, config.seed, true)?;
    let mut fold_config = config.clone();
    fold_config.early_stop = None;
    fold_config.verbose = false;
    let accuracies = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..fold_config.clone()
            };
            let train_part = data.subset(&fold.train)?;
            let val_part = data.subset(&fold.validation)?;
            let (model, _) = train(&cfg, &train_part, None)?;
            accuracy(&model.classify(val_part.x())?, val_part.y())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CvReport::from_folds(accuracies, k, fold_config))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Q,
    Alpha,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Q => "q",
            SweepParam::Alpha => "alpha",
        }
    }

    fn check(self, value: f64) -> Result<()> {
        match self {
            SweepParam::Q if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 => Ok(()),
            SweepParam::Q => Err(QmsError::Config(format!(
                "q grid values must be integers >= 1, got {value}"
            ))),
            SweepParam::Alpha => check_alpha(value, "alpha grid value"),
        }
    }

    fn apply(self, base: &TrainConfig, value: f64) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::Q => cfg.q = value as usize,
            SweepParam::Alpha => cfg.alpha = AlphaSpec::Uniform(value),
        }
        cfg
    }
}

impl std::str::FromStr for SweepParam {
    type Err = QmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(SweepParam::Q),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(QmsError::Config(format!(
                "unknown sweep parameter {other:?} (expected q or alpha)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// One report per grid value, in grid order.
    pub reports: Vec<CvReport>,
}

impl SweepReport {
    /// Grid value with the highest mean accuracy (first one on ties).
    pub fn best(&self) -> (f64, &CvReport) {
        let mut best = 0;
        for (i, r) in self.reports.iter().enumerate() {
            if r.mean > self.reports[best].mean {
                best = i;
            }
        }
        (self.values[best], &self.reports[best])
    }

    /// `param_value,fold,accuracy`, one row per grid value and fold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param_value,fold,accuracy\n");
        for (v, r) in self.values.iter().zip(&self.reports) {
            for (i, acc) in r.fold_accuracies.iter().enumerate() {
                let _ = writeln!(out, "{v},{i},{acc}");
            }
        }
        out
    }

    /// `param_value,mean,std`, one row per grid value.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("param_value,mean,std\n");
        for (v, r) in self.values.iter().zip(&self.reports) {
            let _ = writeln!(out, "{v},{},{}", r.mean, r.std);
        }
        out
    }

    pub fn write_csv(&self, folds: impl AsRef<Path>, summary: impl AsRef<Path>) -> Result<()> {
        write_file(folds.as_ref(), &self.to_csv())?;
        write_file(summary.as_ref(), &self.summary_csv())
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10}  {:>9}  {:>7}", self.param.name(), "mean", "std")?;
        for (v, r) in self.values.iter().zip(&self.reports) {
            writeln!(f, "{v:>10}  {:>8.2}%  {:>6.2}%", r.mean * 100.0, r.std * 100.0)?;
        }
        let (v, r) = self.best();
        write!(f, "best {}={v} with mean {:.2}%", self.param.name(), r.mean * 100.0)
    }
}

/// Cross-validates `base` once per grid value with only `param` changed.
/// Every grid value sees the same fold assignment. The whole grid is checked
/// before any training starts.
pub fn sweep(base: &TrainConfig, data: &LabeledDataset, k: usize, param: SweepParam, grid: &[f64]) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(QmsError::Config("sweep grid is empty".into()));
    }
    for &v in grid {
        param.check(v)?;
    }
    let configs: Vec<TrainConfig> = grid.iter().map(|&v| param.apply(base, v)).collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let reports = configs
        .iter()
        .map(|cfg| cross_validate(cfg, data, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        param,
        values: grid.to_vec(),
        reports,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| QmsError::io(path, e))
}
