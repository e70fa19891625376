//! The ratio-clamp loss and its closed-form gradients.
//!
//! For a point `x` of class `j` and every rival class `k ≠ j` the loss adds
//! `φ_jk(x) = max(α_jk, f_j(x) / f_k(x))`; the total is a plain sum over the
//! batch. Gradients use the flat-side convention at the clamp boundary: a
//! ratio equal to `α` contributes nothing.
//!
//! Denominators `f_k(x)` and `f_i(x)²` are guarded from below by
//! [`DENOMINATOR_GUARD`] so a point on a member function's zero set keeps
//! everything finite.

use ndarray::{Array1, Array2};

use crate::error::{QmsError, Result};
use crate::model::{FeatureMatrix, QmsModel};

pub const DENOMINATOR_GUARD: f64 = 1e-12;

#[inline]
fn guarded(v: f64) -> f64 {
    v.max(DENOMINATOR_GUARD)
}

/// `max(α, f_j / f_k)` with the guarded denominator.
#[inline]
pub fn phi_jk(fj: f64, fk: f64, alpha_jk: f64) -> f64 {
    let ratio = fj / guarded(fk);
    // `f64::max` would swallow a NaN ratio (e.g. ∞/∞ after overflow).
    if ratio.is_nan() {
        ratio
    } else {
        alpha_jk.max(ratio)
    }
}

/// Whether the clamp is inactive, i.e. the guarded ratio strictly exceeds `α`.
#[inline]
pub fn clamp_indicator(fi: f64, fj: f64, alpha_ij: f64) -> bool {
    fi / guarded(fj) > alpha_ij
}

/// A mini-batch split into one block of observations per true class.
/// Blocks may be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPartitionedBatch {
    blocks: Vec<FeatureMatrix>,
}

impl ClassPartitionedBatch {
    pub fn new(blocks: Vec<FeatureMatrix>) -> Result<Self> {
        let p = blocks
            .first()
            .map(FeatureMatrix::p)
            .ok_or_else(|| QmsError::Data("batch has no class blocks".into()))?;
        for (j, b) in blocks.iter().enumerate() {
            if b.p() != p {
                return Err(QmsError::shape(format!("batch block {j} rows (p)"), p, b.p()));
            }
        }
        Ok(Self { blocks })
    }

    /// Groups the columns of `x` by `labels` into `m` blocks, keeping order.
    pub fn from_labeled(x: &FeatureMatrix, labels: &[usize], m: usize) -> Result<Self> {
        if labels.len() != x.n() {
            return Err(QmsError::shape("batch label count", x.n(), labels.len()));
        }
        let mut blocks = vec![FeatureMatrix::empty(x.p()); m];
        for (col, &label) in x.columns().zip(labels) {
            let block = blocks.get_mut(label).ok_or_else(|| {
                QmsError::Data(format!("label {label} out of range for {m} classes"))
            })?;
            block.push_column(col);
        }
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[FeatureMatrix] {
        &self.blocks
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn p(&self) -> usize {
        self.blocks[0].p()
    }

    /// Total number of observations across blocks.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(FeatureMatrix::n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Σ_x Σ_{k≠y(x)} α_{y(x),k}`: the smallest value the loss can take.
    pub fn loss_floor(&self, model: &QmsModel) -> f64 {
        let alpha = model.alpha();
        let m = self.m();
        let mut floor = 0.0;
        for (j, block) in self.blocks.iter().enumerate() {
            for _ in 0..block.n() {
                for k in (0..m).filter(|&k| k != j) {
                    floor += alpha.get(j, k);
                }
            }
        }
        floor
    }
}

/// Gradient of the loss with respect to one class's `(A_i, b_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberGradient {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub members: Vec<MemberGradient>,
}

impl GradientSet {
    fn zeros(q: usize, p: usize, m: usize) -> Self {
        Self {
            members: (0..m)
                .map(|_| MemberGradient {
                    a: Array2::zeros((q, p)),
                    b: Array1::zeros(q),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.members
            .iter()
            .all(|g| g.a.iter().chain(g.b.iter()).all(|v| v.is_finite()))
    }
}

/// Member values and residuals `A_i x − b_i` for every (point, class) pair
/// of a batch, computed once and shared by the loss and gradient passes.
struct MemberTable {
    m: usize,
    q: usize,
    /// `values[point * m + class]`
    values: Vec<f64>,
    /// `residuals[(point * m + class) * q ..][..q]`
    residuals: Vec<f64>,
}

impl MemberTable {
    fn build(model: &QmsModel, batch: &ClassPartitionedBatch) -> Self {
        let (m, q) = (model.m(), model.q());
        let n = batch.len();
        let mut values = Vec::with_capacity(n * m);
        let mut residuals = vec![0.0; n * m * q];
        let mut point = 0;
        for block in batch.blocks() {
            for x in block.columns() {
                for (i, mf) in model.members().iter().enumerate() {
                    let at = (point * m + i) * q;
                    values.push(mf.residual_into(x, &mut residuals[at..at + q]));
                }
                point += 1;
            }
        }
        Self {
            m,
            q,
            values,
            residuals,
        }
    }

    #[inline]
    fn values(&self, point: usize) -> &[f64] {
        &self.values[point * self.m..(point + 1) * self.m]
    }

    #[inline]
    fn residual(&self, point: usize, class: usize) -> &[f64] {
        let at = (point * self.m + class) * self.q;
        &self.residuals[at..at + self.q]
    }
}

fn check(model: &QmsModel, batch: &ClassPartitionedBatch) -> Result<()> {
    if batch.p() != model.p() {
        return Err(QmsError::shape("batch feature count (p)", model.p(), batch.p()));
    }
    if batch.m() != model.m() {
        return Err(QmsError::shape("batch class blocks (m)", model.m(), batch.m()));
    }
    Ok(())
}

fn loss_from_table(model: &QmsModel, batch: &ClassPartitionedBatch, table: &MemberTable) -> f64 {
    let alpha = model.alpha();
    let m = model.m();
    let mut total = 0.0;
    let mut point = 0;
    for (j, block) in batch.blocks().iter().enumerate() {
        for _ in 0..block.n() {
            let f = table.values(point);
            for k in (0..m).filter(|&k| k != j) {
                total += phi_jk(f[j], f[k], alpha.get(j, k));
            }
            point += 1;
        }
    }
    total
}

/// The loss summed over the batch.
pub fn loss(model: &QmsModel, batch: &ClassPartitionedBatch) -> Result<f64> {
    check(model, batch)?;
    let table = MemberTable::build(model, batch);
    Ok(loss_from_table(model, batch, &table))
}

/// Closed-form gradients of the batch loss for every `(A_i, b_i)`.
pub fn gradients(model: &QmsModel, batch: &ClassPartitionedBatch) -> Result<GradientSet> {
    loss_and_gradients(model, batch).map(|(_, g)| g)
}

/// Loss and gradients from a single member-value table.
///
/// For a point `x` of class `j`, differentiating `Σ_{k≠j} φ_jk(x)` gives
///
/// * class `j`: `Σ_{k≠j} I_jk(x) / f_k(x)` times `∂f_j/∂θ_j`,
/// * class `i ≠ j`: `−I_ji(x) f_j(x) / f_i(x)²` times `∂f_i/∂θ_i`,
///
/// with `∂f/∂A = 2 (A x − b) xᵀ` and `∂f/∂b = −2 (A x − b)`. Summed over the
/// batch this is exactly the per-class double sum over own-class points and
/// rival-class points.
pub fn loss_and_gradients(
    model: &QmsModel,
    batch: &ClassPartitionedBatch,
) -> Result<(f64, GradientSet)> {
    check(model, batch)?;
    let (q, p, m) = (model.q(), model.p(), model.m());
    let alpha = model.alpha();
    let table = MemberTable::build(model, batch);
    let loss = loss_from_table(model, batch, &table);

    let mut grads = GradientSet::zeros(q, p, m);
    let mut coef = vec![0.0; m];
    let mut point = 0;
    for (j, block) in batch.blocks().iter().enumerate() {
        for x in block.columns() {
            let f = table.values(point);
            coef.fill(0.0);
            for k in (0..m).filter(|&k| k != j) {
                if clamp_indicator(f[j], f[k], alpha.get(j, k)) {
                    coef[j] += 1.0 / guarded(f[k]);
                    coef[k] -= f[j] / guarded(f[k] * f[k]);
                }
            }
            for (i, g) in grads.members.iter_mut().enumerate() {
                if coef[i] == 0.0 {
                    continue;
                }
                let scale = 2.0 * coef[i];
                let r = table.residual(point, i);
                let ga = g.a.as_slice_mut().expect("gradient is contiguous");
                for (row, &ri) in ga.chunks_exact_mut(p).zip(r) {
                    let s = scale * ri;
                    for (dst, &xc) in row.iter_mut().zip(x) {
                        *dst += s * xc;
                    }
                }
                for (dst, &ri) in g.b.iter_mut().zip(r) {
                    *dst -= scale * ri;
                }
            }
            point += 1;
        }
    }
    if !loss.is_finite() {
        return Err(QmsError::Numerical(format!("loss evaluated to {loss}")));
    }
    if !grads.is_finite() {
        return Err(QmsError::Numerical(
            "gradient contains a non-finite entry; a denominator guard was missed".into(),
        ));
    }
    Ok((loss, grads))
}
