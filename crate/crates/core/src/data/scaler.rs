use crate::data::LabeledDataset;
use crate::error::{QmsError, Result};
use crate::model::FeatureMatrix;

/// Per-feature z-score parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ScalerParams {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(QmsError::shape("scaler std length", mean.len(), std.len()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(QmsError::Data("scaler mean must be finite".into()));
        }
        if std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(QmsError::Data("scaler std entries must be finite and > 0".into()));
        }
        Ok(Self { mean, std })
    }

    /// Mean 0, std 1 for `p` features.
    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            std: vec![1.0; p],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply_matrix(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(x)?;
        let mut out = x.clone();
        for col in out.columns_mut() {
            for ((v, mu), sd) in col.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }

    pub fn invert_matrix(&self, z: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(z)?;
        let mut out = z.clone();
        for col in out.columns_mut() {
            for ((v, mu), sd) in col.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * sd + mu;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        data.with_features(self.apply_matrix(data.x())?)
    }

    fn check(&self, x: &FeatureMatrix) -> Result<()> {
        if x.p() != self.len() {
            return Err(QmsError::shape("scaler feature count (p)", self.len(), x.p()));
        }
        Ok(())
    }
}

/// Fits per-feature mean and population standard deviation. A feature whose
/// values are all identical gets std 1, so it standardizes to zeros.
pub fn fit_standardizer(data: &LabeledDataset) -> Result<ScalerParams> {
    let x = data.x();
    let (p, n) = (x.p(), x.n());
    if n < 2 {
        return Err(QmsError::Data(format!(
            "fitting a standardizer needs at least 2 observations, got {n}"
        )));
    }
    let mut mean = vec![0.0; p];
    for col in x.columns() {
        for (acc, v) in mean.iter_mut().zip(col) {
            *acc += v;
        }
    }
    for acc in &mut mean {
        *acc /= n as f64;
    }
    let first = x.column(0);
    let mut constant = vec![true; p];
    let mut var = vec![0.0; p];
    for col in x.columns() {
        for i in 0..p {
            let d = col[i] - mean[i];
            var[i] += d * d;
            constant[i] &= col[i] == first[i];
        }
    }
    let std = var
        .iter()
        .zip(&constant)
        .map(|(&v, &c)| {
            let sd = (v / n as f64).sqrt();
            if c || sd == 0.0 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    ScalerParams::new(mean, std)
}
