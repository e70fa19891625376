//! Member functions, the argmin classifier, and the persistent model format.
//!
//! A q-dimensional member function is `f(x) = ‖A x − b‖²` with `A ∈ R^{q×p}`
//! and `b ∈ R^q`. A model holds one member function per class and assigns an
//! observation to the class whose member function is smallest.
//!
//! Observations are stored column-major: a [`FeatureMatrix`] has `p` rows and
//! one column per observation, so every observation is a contiguous slice.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::ScalerParams;
use crate::error::{QmsError, Result};

/// Version tag written into every model document.
pub const MODEL_FORMAT_VERSION: &str = "qms-model/1";

/// Total number of trainable scalars in a model with `m` member functions of
/// dimension `q` over `p` features: `q·m·(p+1)`.
pub fn param_count(q: usize, p: usize, m: usize) -> usize {
    q * m * (p + 1)
}

/// A `p × n` matrix of observations, one observation per column.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from column-major storage (`data.len() == p·n`).
    pub fn from_column_major(p: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(QmsError::Data("feature matrix needs at least one row".into()));
        }
        if !data.len().is_multiple_of(p) {
            return Err(QmsError::Data(format!(
                "column-major buffer of length {} is not a multiple of p = {p}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(QmsError::Data(format!(
                "non-finite feature value at row {}, column {}",
                pos % p,
                pos / p
            )));
        }
        let n = data.len() / p;
        Ok(Self { p, n, data })
    }

    /// Builds a matrix whose columns are the given observations.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let p = columns
            .first()
            .map(|c| c.as_ref().len())
            .ok_or_else(|| QmsError::Data("no observations supplied".into()))?;
        let mut data = Vec::with_capacity(p * columns.len());
        for (k, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != p {
                return Err(QmsError::shape(format!("observation {k}"), p, c.len()));
            }
            data.extend_from_slice(c);
        }
        Self::from_column_major(p, data)
    }

    /// A matrix with `p` rows and no columns.
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            n: 0,
            data: Vec::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Observation `k` as a slice of length `p`.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.p..(k + 1) * self.p]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.p)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.p + row]
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    /// New matrix made of the listed columns, in the listed order.
    pub fn select(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(cols.len() * self.p);
        for &k in cols {
            data.extend_from_slice(self.column(k));
        }
        FeatureMatrix {
            p: self.p,
            n: cols.len(),
            data,
        }
    }

    pub(crate) fn columns_mut(&mut self) -> impl Iterator<Item = &mut [f64]> + '_ {
        self.data.chunks_exact_mut(self.p)
    }

    pub(crate) fn push_column(&mut self, col: &[f64]) {
        debug_assert_eq!(col.len(), self.p);
        self.data.extend_from_slice(col);
        self.n += 1;
    }
}

/// Parameters `(A, b)` of one member function `f(x) = ‖A x − b‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberFunctionParams {
    a: Array2<f64>,
    b: Array1<f64>,
}

impl MemberFunctionParams {
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        let (q, p) = a.dim();
        if q == 0 || p == 0 {
            return Err(QmsError::Config(format!(
                "member function needs q >= 1 and p >= 1, got q = {q}, p = {p}"
            )));
        }
        if b.len() != q {
            return Err(QmsError::shape("member offset length", q, b.len()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(QmsError::Numerical(
                "member function parameters contain a non-finite entry".into(),
            ));
        }
        Ok(Self {
            a: a.as_standard_layout().into_owned(),
            b,
        })
    }

    pub fn q(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    pub(crate) fn a_mut(&mut self) -> &mut Array2<f64> {
        &mut self.a
    }

    pub(crate) fn b_mut(&mut self) -> &mut Array1<f64> {
        &mut self.b
    }

    /// `‖A x − b‖²`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p() {
            return Err(QmsError::shape("member function input (p)", self.p(), x.len()));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Member values for every column of `x`.
    pub fn eval_batch(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.p() != self.p() {
            return Err(QmsError::shape("feature matrix rows (p)", self.p(), x.p()));
        }
        Ok(x.columns().map(|col| self.eval_unchecked(col)).collect())
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let b = self.b.as_slice().expect("b is contiguous");
        let a = self.a.as_slice().expect("A is standard layout");
        let mut f = 0.0;
        for (row, &bi) in a.chunks_exact(x.len()).zip(b) {
            let r = dot(row, x) - bi;
            f += r * r;
        }
        f
    }

    /// Writes `A x − b` into `residual` and returns its squared norm.
    pub(crate) fn residual_into(&self, x: &[f64], residual: &mut [f64]) -> f64 {
        let b = self.b.as_slice().expect("b is contiguous");
        let a = self.a.as_slice().expect("A is standard layout");
        let mut f = 0.0;
        for ((row, &bi), out) in a.chunks_exact(x.len()).zip(b).zip(residual.iter_mut()) {
            let r = dot(row, x) - bi;
            *out = r;
            f += r * r;
        }
        f
    }
}

/// Sequential ascending-index dot product; the fixed order keeps results
/// reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Clamp floors `α_jk ∈ [0, 1)`; the diagonal is unused and held at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatrix {
    values: Array2<f64>,
}

impl AlphaMatrix {
    /// `α_jk ≡ alpha` for every pair of distinct classes.
    pub fn uniform(m: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha, "alpha")?;
        let mut values = Array2::from_elem((m, m), alpha);
        values.diag_mut().fill(0.0);
        Ok(Self { values })
    }

    pub fn from_array(mut values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(QmsError::shape("alpha matrix columns", r, c));
        }
        for ((j, k), &v) in values.indexed_iter() {
            if j != k {
                check_alpha(v, &format!("alpha[{j}][{k}]"))?;
            }
        }
        values.diag_mut().fill(0.0);
        Ok(Self { values })
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[[j, k]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.values
    }
}

pub(crate) fn check_alpha(v: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(QmsError::Config(format!("{what} must lie in [0, 1), got {v}")));
    }
    Ok(())
}

/// A trained (or initialized) QMS classifier.
///
/// Immutable once built; the trainer mutates its own copy through
/// crate-private accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct QmsModel {
    members: Vec<MemberFunctionParams>,
    alpha: AlphaMatrix,
    class_names: Vec<String>,
    scaler: Option<ScalerParams>,
}

impl QmsModel {
    pub fn new(
        members: Vec<MemberFunctionParams>,
        alpha: AlphaMatrix,
        class_names: Vec<String>,
        scaler: Option<ScalerParams>,
    ) -> Result<Self> {
        let m = members.len();
        if m < 2 {
            return Err(QmsError::Config(format!("a model needs m >= 2 classes, got {m}")));
        }
        let (q, p) = (members[0].q(), members[0].p());
        for (i, member) in members.iter().enumerate() {
            if member.q() != q {
                return Err(QmsError::shape(format!("member {i} rows (q)"), q, member.q()));
            }
            if member.p() != p {
                return Err(QmsError::shape(format!("member {i} columns (p)"), p, member.p()));
            }
        }
        if alpha.m() != m {
            return Err(QmsError::shape("alpha matrix size (m)", m, alpha.m()));
        }
        if class_names.len() != m {
            return Err(QmsError::shape("class name count (m)", m, class_names.len()));
        }
        let unique: HashSet<&String> = class_names.iter().collect();
        if unique.len() != m {
            return Err(QmsError::Config("class names must be unique".into()));
        }
        if let Some(s) = &scaler {
            if s.len() != p {
                return Err(QmsError::shape("scaler length (p)", p, s.len()));
            }
        }
        Ok(Self {
            members,
            alpha,
            class_names,
            scaler,
        })
    }

    pub fn q(&self) -> usize {
        self.members[0].q()
    }

    pub fn p(&self) -> usize {
        self.members[0].p()
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[MemberFunctionParams] {
        &self.members
    }

    pub fn alpha(&self) -> &AlphaMatrix {
        &self.alpha
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn scaler(&self) -> Option<&ScalerParams> {
        self.scaler.as_ref()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.q(), self.p(), self.m())
    }

    pub(crate) fn members_mut(&mut self) -> &mut [MemberFunctionParams] {
        &mut self.members
    }

    /// Copy with every `(A_i, b_i)` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<QmsModel> {
        let members = self
            .members
            .iter()
            .map(|mf| MemberFunctionParams::new(mf.a() * c, mf.b() * c))
            .collect::<Result<Vec<_>>>()?;
        QmsModel::new(
            members,
            self.alpha.clone(),
            self.class_names.clone(),
            self.scaler.clone(),
        )
    }

    /// `f_i(x)` for every class `i`.
    pub fn member_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_p(x.len())?;
        Ok(self.members.iter().map(|mf| mf.eval_unchecked(x)).collect())
    }

    /// Index of the smallest member value; ties go to the smallest index.
    /// `x` must already be in the model's feature space.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_p(x.len())?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> usize {
        argmin(self.members.iter().map(|mf| mf.eval_unchecked(x)))
    }

    pub fn predict_batch(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        self.check_p(x.p())?;
        if x.is_empty() {
            return Err(QmsError::Data("prediction needs at least one observation".into()));
        }
        Ok(x.columns().map(|col| self.predict_unchecked(col)).collect())
    }

    /// Maps raw features into model space with the stored scaler, if any.
    pub fn to_feature_space(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_p(x.p())?;
        Ok(match &self.scaler {
            Some(s) => s.apply_matrix(x)?,
            None => x.clone(),
        })
    }

    /// Standardizes raw features with the stored scaler and predicts.
    pub fn classify(&self, raw: &FeatureMatrix) -> Result<Vec<usize>> {
        self.predict_batch(&self.to_feature_space(raw)?)
    }

    fn check_p(&self, p: usize) -> Result<()> {
        if p != self.p() {
            return Err(QmsError::shape("feature count (p)", self.p(), p));
        }
        Ok(())
    }

    /// Serializes to the `qms-model/1` JSON document.
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            version: MODEL_FORMAT_VERSION.to_string(),
            q: self.q(),
            p: self.p(),
            m: self.m(),
            alpha: self.alpha.values.outer_iter().map(|r| r.to_vec()).collect(),
            class_names: self.class_names.clone(),
            scaler: self.scaler.as_ref().map(|s| ScalerDocument {
                mean: s.mean().to_vec(),
                std: s.std().to_vec(),
            }),
            members: self
                .members
                .iter()
                .map(|mf| MemberDocument {
                    a: mf.a.outer_iter().map(|r| r.to_vec()).collect(),
                    b: mf.b.to_vec(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("model document serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| {
            QmsError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        doc.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| QmsError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| QmsError::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v < best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    version: String,
    q: usize,
    p: usize,
    m: usize,
    alpha: Vec<Vec<f64>>,
    class_names: Vec<String>,
    scaler: Option<ScalerDocument>,
    members: Vec<MemberDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalerDocument {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberDocument {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn nested_to_array(rows: Vec<Vec<f64>>, nrows: usize, ncols: usize, at: &str) -> Result<Array2<f64>> {
    if rows.len() != nrows {
        return Err(QmsError::parse(
            at,
            format!("expected {nrows} rows, found {}", rows.len()),
        ));
    }
    let mut flat = Vec::with_capacity(nrows * ncols);
    for (r, row) in rows.into_iter().enumerate() {
        if row.len() != ncols {
            return Err(QmsError::parse(
                format!("{at}[{r}]"),
                format!("expected {ncols} entries, found {}", row.len()),
            ));
        }
        flat.extend(row);
    }
    Ok(Array2::from_shape_vec((nrows, ncols), flat).expect("shape checked above"))
}

impl ModelDocument {
    fn into_model(self) -> Result<QmsModel> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(QmsError::parse(
                "version",
                format!("unsupported version {:?}, expected {MODEL_FORMAT_VERSION:?}", self.version),
            ));
        }
        let (q, p, m) = (self.q, self.p, self.m);
        if q == 0 || p == 0 || m < 2 {
            return Err(QmsError::parse(
                "q/p/m",
                format!("need q >= 1, p >= 1, m >= 2; got q = {q}, p = {p}, m = {m}"),
            ));
        }
        if self.members.len() != m {
            return Err(QmsError::parse(
                "members",
                format!("expected {m} members, found {}", self.members.len()),
            ));
        }
        if self.class_names.len() != m {
            return Err(QmsError::parse(
                "class_names",
                format!("expected {m} names, found {}", self.class_names.len()),
            ));
        }
        let alpha = nested_to_array(self.alpha, m, m, "alpha")?;
        let alpha = AlphaMatrix::from_array(alpha)
            .map_err(|e| QmsError::parse("alpha", e.to_string()))?;
        let mut members = Vec::with_capacity(m);
        for (i, doc) in self.members.into_iter().enumerate() {
            let at = format!("members[{i}]");
            let a = nested_to_array(doc.a, q, p, &format!("{at}.A"))?;
            if doc.b.len() != q {
                return Err(QmsError::parse(
                    format!("{at}.b"),
                    format!("expected {q} entries, found {}", doc.b.len()),
                ));
            }
            let member = MemberFunctionParams::new(a, Array1::from(doc.b))
                .map_err(|e| QmsError::parse(&at, e.to_string()))?;
            members.push(member);
        }
        let scaler = match self.scaler {
            None => None,
            Some(s) => {
                if s.mean.len() != p || s.std.len() != p {
                    return Err(QmsError::parse(
                        "scaler",
                        format!(
                            "expected {p} means and stds, found {} and {}",
                            s.mean.len(),
                            s.std.len()
                        ),
                    ));
                }
                Some(
                    ScalerParams::new(s.mean, s.std)
                        .map_err(|e| QmsError::parse("scaler", e.to_string()))?,
                )
            }
        };
        QmsModel::new(members, alpha, self.class_names, scaler)
            .map_err(|e| QmsError::parse("model", e.to_string()))
    }
}
