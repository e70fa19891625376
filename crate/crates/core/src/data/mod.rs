//! Labeled datasets, CSV ingestion, standardization, and partitioning.

mod table;
mod scaler;
mod split;

pub use table::{load_csv, read_table, FeatureColumn, FeatureSchema};
pub use scaler::{fit_standardizer, ScalerParams};
pub use split::{kfold, split, split_indices, Fold, SplitParts, SplitSpec};

use rand::seq::SliceRandom;

use crate::error::{QmsError, Result};
use crate::model::FeatureMatrix;
use crate::rng;

/// Observations (as columns of `x`) with zero-based class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    x: FeatureMatrix,
    y: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        x: FeatureMatrix,
        y: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if x.is_empty() {
            return Err(QmsError::Data("dataset has no observations".into()));
        }
        if y.len() != x.n() {
            return Err(QmsError::shape("label count (n)", x.n(), y.len()));
        }
        if feature_names.len() != x.p() {
            return Err(QmsError::shape("feature name count (p)", x.p(), feature_names.len()));
        }
        let m = class_names.len();
        if let Some((row, &label)) = y.iter().enumerate().find(|(_, &l)| l >= m) {
            return Err(QmsError::Data(format!(
                "label {label} at observation {row} is out of range for {m} classes"
            )));
        }
        Ok(Self {
            x,
            y,
            class_names,
            feature_names,
        })
    }

    /// Dataset with generated names (`f0..`, `c0..`); handy for synthetic data.
    pub fn unnamed(x: FeatureMatrix, y: Vec<usize>, m: usize) -> Result<Self> {
        let features = (0..x.p()).map(|i| format!("f{i}")).collect();
        let classes = (0..m).map(|i| format!("c{i}")).collect();
        Self::new(x, y, classes, features)
    }

    pub fn x(&self) -> &FeatureMatrix {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn p(&self) -> usize {
        self.x.p()
    }

    pub fn m(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m()];
        for &label in &self.y {
            counts[label] += 1;
        }
        counts
    }

    /// Observations at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let x = self.x.select(indices);
        let y = indices.iter().map(|&i| self.y[i]).collect();
        LabeledDataset::new(x, y, self.class_names.clone(), self.feature_names.clone())
    }

    /// A seeded random subset of `size` observations (all of them when
    /// `size >= n`), kept in original order.
    pub fn sample(&self, size: usize, seed: u64) -> Result<LabeledDataset> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut rng::stream(seed, rng::STREAM_SUBSAMPLE));
        idx.truncate(size.min(self.n()));
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Same labels and names with a replacement feature matrix.
    pub fn with_features(&self, x: FeatureMatrix) -> Result<LabeledDataset> {
        if x.p() != self.p() {
            return Err(QmsError::shape("feature count (p)", self.p(), x.p()));
        }
        LabeledDataset::new(x, self.y.clone(), self.class_names.clone(), self.feature_names.clone())
    }
}
