//! Adam with bias correction, one state per parameter tensor.

use ndarray::{Array, Dimension, Zip};

use crate::error::{QmsError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    /// Learning rate 1 with the usual Adam decay rates and ε = 1e-8.
    fn default() -> Self {
        Self {
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(QmsError::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(QmsError::Config(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(QmsError::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// First/second moment estimates for one tensor.
///
/// `β₁ᵗ` and `β₂ᵗ` are carried as running products rather than recomputed
/// with `powi`, which fixes the rounding sequence of the bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<D: Dimension> {
    m1: Array<f64, D>,
    v2: Array<f64, D>,
    t: u64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl<D: Dimension> AdamState<D> {
    /// Zero moments of the given shape, `t = 0`.
    pub fn new<Sh: ndarray::ShapeBuilder<Dim = D> + Clone>(shape: Sh) -> Self {
        Self {
            m1: Array::zeros(shape.clone()),
            v2: Array::zeros(shape),
            t: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &Array<f64, D> {
        &self.m1
    }

    pub fn second_moment(&self) -> &Array<f64, D> {
        &self.v2
    }

    fn coefficients(&self, cfg: &AdamConfig) -> Coefficients {
        let c1 = 1.0 - self.beta1_pow * cfg.beta1;
        let c2 = 1.0 - self.beta2_pow * cfg.beta2;
        Coefficients {
            b1: cfg.beta1,
            b2: cfg.beta2,
            keep1: cfg.beta1 / c1,
            new1: (1.0 - cfg.beta1) / c1,
            keep2: cfg.beta2 / c2,
            new2: (1.0 - cfg.beta2) / c2,
        }
    }

    /// Bias-corrected moments `(m̂, v̂)` that the next [`step`](Self::step)
    /// with `grad` would use.
    pub fn corrected_moments(&self, grad: &Array<f64, D>, cfg: &AdamConfig) -> Result<(Array<f64, D>, Array<f64, D>)> {
        self.check_shape(grad.shape(), grad.shape())?;
        let k = self.coefficients(cfg);
        let m_hat = Zip::from(&self.m1).and(grad).map_collect(|&m, &g| k.keep1 * m + k.new1 * g);
        let v_hat = Zip::from(&self.v2).and(grad).map_collect(|&v, &g| k.keep2 * v + k.new2 * (g * g));
        Ok((m_hat, v_hat))
    }

    fn check_shape(&self, param: &[usize], grad: &[usize]) -> Result<()> {
        if param != self.m1.shape() || grad != self.m1.shape() {
            return Err(QmsError::Config(format!(
                "adam shape mismatch: state {:?}, parameter {param:?}, gradient {grad:?}",
                self.m1.shape(),
            )));
        }
        Ok(())
    }

    /// One Adam update of `param` in place:
    ///
    /// ```text
    /// t ← t + 1
    /// m ← β₁ m + (1 − β₁) g        v ← β₂ v + (1 − β₂) g²
    /// m̂ = m / (1 − β₁ᵗ)            v̂ = v / (1 − β₂ᵗ)
    /// θ ← θ − lr · m̂ / (√v̂ + ε)
    /// ```
    ///
    /// `m̂` is evaluated as `β₁/(1 − β₁ᵗ) · m_prev + (1 − β₁)/(1 − β₁ᵗ) · g`
    /// (likewise `v̂`), so at `t = 1` it equals `g` (and `v̂` equals `g²`)
    /// bit for bit.
    pub fn step(&mut self, param: &mut Array<f64, D>, grad: &Array<f64, D>, cfg: &AdamConfig) -> Result<()> {
        self.check_shape(param.shape(), grad.shape())?;
        let k = self.coefficients(cfg);
        self.t += 1;
        self.beta1_pow *= cfg.beta1;
        self.beta2_pow *= cfg.beta2;
        let (lr, eps) = (cfg.lr, cfg.epsilon);
        Zip::from(param)
            .and(grad)
            .and(&mut self.m1)
            .and(&mut self.v2)
            .for_each(|theta, &g, m, v| {
                let g2 = g * g;
                let m_hat = k.keep1 * *m + k.new1 * g;
                let v_hat = k.keep2 * *v + k.new2 * g2;
                *m = k.b1 * *m + (1.0 - k.b1) * g;
                *v = k.b2 * *v + (1.0 - k.b2) * g2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        Ok(())
    }
}

struct Coefficients {
    b1: f64,
    b2: f64,
    keep1: f64,
    new1: f64,
    keep2: f64,
    new2: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    #[test]
    fn init_is_zero() {
        let s: AdamState<ndarray::Ix2> = AdamState::new((2, 3));
        assert_eq!(s.t(), 0);
        assert_eq!(s.first_moment(), &Array2::<f64>::zeros((2, 3)));
        assert!(s.second_moment().iter().all(|&v| v == 0.0));
        let s: AdamState<ndarray::Ix1> = AdamState::new(1);
        assert_eq!(s.first_moment().len(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = AdamState::new(3);
        let mut p = array![1.0, -2.0, 0.5];
        s.step(&mut p, &Array1::zeros(3), &AdamConfig::default()).unwrap();
        assert_eq!(p, array![1.0, -2.0, 0.5]);
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(1);
        let mut p = array![0.0];
        s.step(&mut p, &array![0.5], &AdamConfig::default()).unwrap();
        assert!((p[0] + 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert!((p[0] + 0.99999998).abs() < 1e-8);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        for bad in [
            AdamConfig { lr: 0.0, ..Default::default() },
            AdamConfig { beta1: 1.0, ..Default::default() },
            AdamConfig { beta2: -0.1, ..Default::default() },
            AdamConfig { epsilon: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn first_step_corrects_exactly() {
        let g = array![0.1, -3.7, 1e-5, 123.456, 0.3];
        let s: AdamState<ndarray::Ix1> = AdamState::new(5);
        let (m_hat, v_hat) = s.corrected_moments(&g, &AdamConfig::default()).unwrap();
        assert_eq!(m_hat, g);
        assert_eq!(v_hat, g.mapv(|x| x * x));
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2);
        let mut p = array![0.0, 0.0, 0.0];
        assert!(s.step(&mut p, &array![1.0, 1.0, 1.0], &AdamConfig::default()).is_err());
    }
}
