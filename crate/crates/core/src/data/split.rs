//! Seeded train/validation/test splits and k-fold partitions.

use std::collections::VecDeque;

use rand::seq::SliceRandom;

use crate::data::LabeledDataset;
use crate::error::{QmsError, Result};
use crate::rng;

/// Fractions for a three-way split. Validation may be zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    fn fractions(&self) -> Result<[f64; 3]> {
        let f = [self.train, self.validation, self.test];
        let ok_open = |v: f64| v > 0.0 && v < 1.0;
        if !ok_open(self.train) || !ok_open(self.test) {
            return Err(QmsError::Config(format!(
                "train and test fractions must lie in (0, 1), got {} and {}",
                self.train, self.test
            )));
        }
        if !(self.validation == 0.0 || ok_open(self.validation)) {
            return Err(QmsError::Config(format!(
                "validation fraction must be 0 or lie in (0, 1), got {}",
                self.validation
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(QmsError::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(f)
    }
}

/// Observation indices of each part, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitParts {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `0..n` according to `spec`.
///
/// Part sizes follow cumulative rounding of `n·fraction`. In stratified mode
/// every class is divided so that each part holds within one instance of its
/// proportional share, while the part totals still match the unstratified
/// sizes exactly.
pub fn split_indices(data: &LabeledDataset, spec: &SplitSpec) -> Result<SplitParts> {
    let fractions = spec.fractions()?;
    let n = data.n();
    let totals = cumulative_round(n, &fractions);
    let mut rng = rng::stream(spec.seed, rng::STREAM_SPLIT);
    let mut parts: [Vec<usize>; 3] = Default::default();

    if spec.stratified {
        let mut by_class = vec![Vec::new(); data.m()];
        for (i, &label) in data.y().iter().enumerate() {
            by_class[label].push(i);
        }
        let requested = fractions.iter().filter(|&&f| f > 0.0).count();
        for (c, members) in by_class.iter().enumerate() {
            if !members.is_empty() && members.len() < requested {
                return Err(QmsError::Data(format!(
                    "class {:?} has {} instance(s) but the split has {requested} parts",
                    data.class_names()[c],
                    members.len()
                )));
            }
        }
        let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let alloc = controlled_rounding(&counts, &fractions, &totals);
        for (members, sizes) in by_class.iter_mut().zip(&alloc) {
            members.shuffle(&mut rng);
            let mut rest = members.as_slice();
            for (part, &size) in parts.iter_mut().zip(sizes) {
                let (head, tail) = rest.split_at(size);
                part.extend_from_slice(head);
                rest = tail;
            }
        }
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut rest = perm.as_slice();
        for (part, &size) in parts.iter_mut().zip(&totals) {
            let (head, tail) = rest.split_at(size);
            part.extend_from_slice(head);
            rest = tail;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(SplitParts {
        train,
        validation,
        test,
    })
}

/// Splits into `(train, validation, test)`; validation is `None` when its
/// fraction is zero.
pub fn split(
    data: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, Option<LabeledDataset>, LabeledDataset)> {
    let parts = split_indices(data, spec)?;
    let validation = if parts.validation.is_empty() {
        None
    } else {
        Some(data.subset(&parts.validation)?)
    };
    Ok((data.subset(&parts.train)?, validation, data.subset(&parts.test)?))
}

/// Sizes from rounding the cumulative boundaries `n·(f_0 + … + f_k)`.
fn cumulative_round(n: usize, fractions: &[f64]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(fractions.len());
    let mut acc = 0.0;
    let mut prev = 0usize;
    for (k, f) in fractions.iter().enumerate() {
        acc += f;
        let cut = if k + 1 == fractions.len() {
            n
        } else {
            ((n as f64 * acc).round() as usize).min(n)
        };
        let cut = cut.max(prev);
        sizes.push(cut - prev);
        prev = cut;
    }
    sizes
}

/// Rounds the class × part table `counts[c]·fractions[k]` to integers so that
/// every cell is the floor or ceiling of its quota, each row sums to the
/// class count, and each column sums to `totals[k]`. Such a rounding always
/// exists for two-way tables; it is found as a unit-capacity flow.
fn controlled_rounding(counts: &[usize], fractions: &[f64], totals: &[usize]) -> Vec<Vec<usize>> {
    let parts = fractions.len();
    let mut alloc: Vec<Vec<usize>> = Vec::with_capacity(counts.len());
    let mut can_round_up: Vec<Vec<bool>> = Vec::with_capacity(counts.len());
    for &nc in counts {
        let quotas: Vec<f64> = fractions.iter().map(|f| nc as f64 * f).collect();
        alloc.push(quotas.iter().map(|q| q.floor() as usize).collect());
        can_round_up.push(quotas.iter().map(|q| q.fract() > 1e-12).collect());
    }
    let row_deficit: Vec<usize> = counts
        .iter()
        .zip(&alloc)
        .map(|(&nc, row)| nc - row.iter().sum::<usize>())
        .collect();
    let col_deficit: Vec<usize> = (0..parts)
        .map(|k| {
            let have: usize = alloc.iter().map(|row| row[k]).sum();
            totals[k].saturating_sub(have)
        })
        .collect();

    // Flow network: source -> class (row deficit) -> part (1 where the cell
    // may round up) -> sink (column deficit).
    let classes = counts.len();
    let source = 0;
    let sink = 1 + classes + parts;
    let node_count = sink + 1;
    let mut cap = vec![vec![0i64; node_count]; node_count];
    for c in 0..classes {
        cap[source][1 + c] = row_deficit[c] as i64;
        for k in 0..parts {
            if can_round_up[c][k] {
                cap[1 + c][1 + classes + k] = 1;
            }
        }
    }
    for k in 0..parts {
        cap[1 + classes + k][sink] = col_deficit[k] as i64;
    }
    let mut flow = vec![vec![0i64; node_count]; node_count];
    while let Some(path) = augmenting_path(&cap, &flow, source, sink) {
        for w in path.windows(2) {
            flow[w[0]][w[1]] += 1;
            flow[w[1]][w[0]] -= 1;
        }
    }
    for c in 0..classes {
        for k in 0..parts {
            if flow[1 + c][1 + classes + k] > 0 {
                alloc[c][k] += 1;
            }
        }
        // Any deficit the flow could not place (never for feasible inputs)
        // goes to the last part so rows always cover the class.
        let placed: usize = alloc[c].iter().sum();
        if placed < counts[c] {
            alloc[c][parts - 1] += counts[c] - placed;
        }
    }
    alloc
}

fn augmenting_path(cap: &[Vec<i64>], flow: &[Vec<i64>], source: usize, sink: usize) -> Option<Vec<usize>> {
    let n = cap.len();
    let mut prev = vec![usize::MAX; n];
    prev[source] = source;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if prev[v] == usize::MAX && cap[u][v] - flow[u][v] > 0 {
                prev[v] = u;
                if v == sink {
                    let mut path = vec![sink];
                    let mut cur = sink;
                    while cur != source {
                        cur = prev[cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(v);
            }
        }
    }
    None
}

/// One cross-validation fold: `validation` is fold `i`, `train` is the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Partitions the dataset into `k` folds whose sizes differ by at most one.
///
/// Stratified mode lays out each class's shuffled members consecutively and
/// deals positions round-robin, so every class is spread over the folds with
/// per-fold counts differing by at most one.
pub fn kfold(data: &LabeledDataset, k: usize, seed: u64, stratified: bool) -> Result<Vec<Fold>> {
    let n = data.n();
    if k < 2 {
        return Err(QmsError::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(QmsError::Config(format!("k = {k} exceeds the {n} available observations")));
    }
    let mut rng = rng::stream(seed, rng::STREAM_KFOLD);
    let order: Vec<usize> = if stratified {
        let mut by_class = vec![Vec::new(); data.m()];
        for (i, &label) in data.y().iter().enumerate() {
            by_class[label].push(i);
        }
        for (c, members) in by_class.iter().enumerate() {
            if members.len() < k {
                return Err(QmsError::Data(format!(
                    "class {:?} has {} instance(s), fewer than k = {k}",
                    data.class_names()[c],
                    members.len()
                )));
            }
        }
        by_class
            .into_iter()
            .flat_map(|mut members| {
                members.shuffle(&mut rng);
                members
            })
            .collect()
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm
    };
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train) = (0..n).partition(|&i| fold_of[i] == f);
            Fold { train, validation }
        })
        .collect())
}
