//! Random models, batches, and datasets shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use qms::data::LabeledDataset;
use qms::{AlphaMatrix, ClassPartitionedBatch, FeatureMatrix, MemberFunctionParams, QmsModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_model(rng: &mut ChaCha8Rng, q: usize, p: usize, m: usize, alpha: f64) -> QmsModel {
    let members = (0..m)
        .map(|_| {
            let a = Array2::from_shape_simple_fn((q, p), || normal(rng));
            let b = Array1::from_shape_simple_fn(q, || normal(rng));
            MemberFunctionParams::new(a, b).unwrap()
        })
        .collect();
    let names = (0..m).map(|i| format!("c{i}")).collect();
    QmsModel::new(members, AlphaMatrix::uniform(m, alpha).unwrap(), names, None).unwrap()
}

/// `n` standard-normal points with uniformly random labels (blocks may be empty).
pub fn random_batch(rng: &mut ChaCha8Rng, p: usize, m: usize, n: usize) -> ClassPartitionedBatch {
    let mut blocks: Vec<Vec<Vec<f64>>> = vec![Vec::new(); m];
    for _ in 0..n {
        let label = rng.random_range(0..m);
        blocks[label].push((0..p).map(|_| normal(rng)).collect());
    }
    ClassPartitionedBatch::new(
        blocks
            .into_iter()
            .map(|cols| {
                if cols.is_empty() {
                    FeatureMatrix::empty(p)
                } else {
                    FeatureMatrix::from_columns(&cols).unwrap()
                }
            })
            .collect(),
    )
    .unwrap()
}

/// Same model with one parameter of class `class` replaced (`entry < q·p`
/// addresses `A` row-major, the rest address `b`).
pub fn with_param(model: &QmsModel, class: usize, entry: usize, value: f64) -> QmsModel {
    let mut members = model.members().to_vec();
    let (q, p) = (model.q(), model.p());
    let mut a = members[class].a().clone();
    let mut b = members[class].b().clone();
    if entry < q * p {
        a[[entry / p, entry % p]] = value;
    } else {
        b[entry - q * p] = value;
    }
    members[class] = MemberFunctionParams::new(a, b).unwrap();
    QmsModel::new(members, model.alpha().clone(), model.class_names().to_vec(), None).unwrap()
}

pub fn param(model: &QmsModel, class: usize, entry: usize) -> f64 {
    let mf = &model.members()[class];
    let p = model.p();
    if entry < model.q() * p {
        mf.a()[[entry / p, entry % p]]
    } else {
        mf.b()[entry - model.q() * p]
    }
}

/// Clamp indicator of every (point, rival) pair in batch order.
pub fn indicators(model: &QmsModel, batch: &ClassPartitionedBatch) -> Vec<bool> {
    let mut out = Vec::new();
    for (j, block) in batch.blocks().iter().enumerate() {
        for x in block.columns() {
            let f = model.member_values(x).unwrap();
            for k in (0..model.m()).filter(|&k| k != j) {
                out.push(qms::loss::clamp_indicator(f[j], f[k], model.alpha().get(j, k)));
            }
        }
    }
    out
}

/// Dataset with the given class sizes, labels in shuffled order, and one
/// random feature.
pub fn random_labeled(rng: &mut ChaCha8Rng, sizes: &[usize]) -> LabeledDataset {
    use rand::seq::SliceRandom;
    let mut y: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    y.shuffle(rng);
    let cols: Vec<Vec<f64>> = y.iter().map(|_| vec![normal(rng)]).collect();
    LabeledDataset::unnamed(FeatureMatrix::from_columns(&cols).unwrap(), y, sizes.len()).unwrap()
}

/// Three well separated Gaussian blobs in the plane.
pub fn blobs(per_class: usize, seed: u64) -> LabeledDataset {
    let mut r = rng(seed);
    let centers = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
    let mut cols = Vec::new();
    let mut y = Vec::new();
    for _ in 0..per_class {
        for (c, ctr) in centers.iter().enumerate() {
            cols.push(vec![ctr[0] + 0.5 * normal(&mut r), ctr[1] + 0.5 * normal(&mut r)]);
            y.push(c);
        }
    }
    LabeledDataset::unnamed(FeatureMatrix::from_columns(&cols).unwrap(), y, 3).unwrap()
}
