//! CSV ingestion: comma separated, header row, `.` decimal point.
//!
//! Numeric columns become features in header order; categorical columns are
//! one-hot expanded after them, one indicator per level with levels sorted
//! lexicographically. Class labels map to indices by sorted label string.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{QmsError, Result};
use crate::model::FeatureMatrix;

const MAX_REPORTED_ROWS: usize = 10;

/// How raw CSV columns turn into model features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric: Vec<String>,
    pub categorical: Vec<FeatureColumn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub levels: Vec<String>,
}

impl FeatureSchema {
    pub fn p(&self) -> usize {
        self.numeric.len() + self.categorical.iter().map(|c| c.levels.len()).sum::<usize>()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.numeric.clone();
        for col in &self.categorical {
            names.extend(col.levels.iter().map(|l| format!("{}={l}", col.name)));
        }
        names
    }

    /// Treats every column except `label_column` as numeric.
    pub fn numeric_from_header(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let headers = open(path)?.0;
        Ok(Self {
            numeric: headers
                .into_iter()
                .filter(|h| Some(h.as_str()) != label_column)
                .collect(),
            categorical: Vec::new(),
        })
    }

    /// Encodes the features of a CSV file; returns the raw label strings too
    /// when `label_column` is given. Unseen categorical levels encode as an
    /// all-zero block and trigger one warning per column.
    pub fn load_features(
        &self,
        path: impl AsRef<Path>,
        label_column: Option<&str>,
    ) -> Result<(FeatureMatrix, Option<Vec<String>>)> {
        let cat_names: Vec<String> = self.categorical.iter().map(|c| c.name.clone()).collect();
        let scan = scan(path.as_ref(), &Selection::Named(&self.numeric), &cat_names, label_column)?;
        let mut unseen = vec![false; self.categorical.len()];
        let x = self.assemble(&scan, &mut unseen)?;
        for (col, flagged) in self.categorical.iter().zip(unseen) {
            if flagged {
                eprintln!(
                    "warning: column {:?} has levels not seen in training; encoded as all zeros",
                    col.name
                );
            }
        }
        Ok((x, scan.labels))
    }

    /// Loads a labeled file whose labels must belong to `class_names`.
    pub fn load_labeled(
        &self,
        path: impl AsRef<Path>,
        label_column: &str,
        class_names: &[String],
    ) -> Result<LabeledDataset> {
        let (x, labels) = self.load_features(path, Some(label_column))?;
        let index: HashMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let y = labels
            .expect("label column requested")
            .iter()
            .enumerate()
            .map(|(row, l)| {
                index.get(l.as_str()).copied().ok_or_else(|| {
                    QmsError::Data(format!("unknown class label {l:?} in data row {}", row + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(x, y, class_names.to_vec(), self.feature_names())
    }

    fn assemble(&self, scan: &Scan, unseen: &mut [bool]) -> Result<FeatureMatrix> {
        let n = scan.rows;
        let num = scan.numeric_cols;
        if self.categorical.is_empty() {
            return FeatureMatrix::from_column_major(num.max(1), scan.numeric.clone())
                .and_then(|x| {
                    if num == 0 {
                        Err(QmsError::Data("no feature columns".into()))
                    } else {
                        Ok(x)
                    }
                });
        }
        let p = self.p();
        if p == 0 {
            return Err(QmsError::Data("no feature columns".into()));
        }
        let lookups: Vec<HashMap<&str, usize>> = self
            .categorical
            .iter()
            .map(|c| c.levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect())
            .collect();
        let mut data = vec![0.0; p * n];
        for row in 0..n {
            let out = &mut data[row * p..(row + 1) * p];
            out[..num].copy_from_slice(&scan.numeric[row * num..(row + 1) * num]);
            let mut offset = num;
            for (c, col) in self.categorical.iter().enumerate() {
                match lookups[c].get(scan.categorical[c][row].as_str()) {
                    Some(&level) => out[offset + level] = 1.0,
                    None => unseen[c] = true,
                }
                offset += col.levels.len();
            }
        }
        FeatureMatrix::from_column_major(p, data)
    }
}

/// Loads a training CSV, inferring the feature schema.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    categorical_columns: &[String],
) -> Result<LabeledDataset> {
    read_table(path, label_column, categorical_columns).map(|(d, _)| d)
}

/// Like [`load_csv`] but also returns the inferred schema, so other files
/// can be encoded identically.
pub fn read_table(
    path: impl AsRef<Path>,
    label_column: &str,
    categorical_columns: &[String],
) -> Result<(LabeledDataset, FeatureSchema)> {
    let path = path.as_ref();
    let scan = scan(path, &Selection::AllExcept, categorical_columns, Some(label_column))?;
    let labels = scan.labels.as_ref().expect("label column requested");
    let distinct: BTreeSet<&str> = labels.iter().map(|s| s.as_str()).collect();
    if distinct.len() < 2 {
        return Err(QmsError::Data(format!(
            "{}: label column {label_column:?} has {} distinct value(s); need at least 2 classes",
            path.display(),
            distinct.len()
        )));
    }
    let class_names: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
    let categorical = categorical_columns
        .iter()
        .zip(&scan.categorical)
        .map(|(name, values)| {
            let levels: BTreeSet<&str> = values.iter().map(|s| s.as_str()).collect();
            FeatureColumn {
                name: name.clone(),
                levels: levels.into_iter().map(String::from).collect(),
            }
        })
        .collect();
    let schema = FeatureSchema {
        numeric: scan.numeric_names.clone(),
        categorical,
    };
    let mut unseen = vec![false; schema.categorical.len()];
    let x = schema.assemble(&scan, &mut unseen)?;
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let y = labels.iter().map(|l| index[l.as_str()]).collect();
    let dataset = LabeledDataset::new(x, y, class_names, schema.feature_names())?;
    Ok((dataset, schema))
}

enum Selection<'a> {
    /// Every column that is neither the label nor categorical.
    AllExcept,
    Named(&'a [String]),
}

struct Scan {
    rows: usize,
    numeric_names: Vec<String>,
    numeric_cols: usize,
    /// Row-major numeric block (`rows × numeric_cols`), i.e. column-major
    /// in the observations-as-columns sense.
    numeric: Vec<f64>,
    categorical: Vec<Vec<String>>,
    labels: Option<Vec<String>>,
}

fn open(path: &Path) -> Result<(Vec<String>, csv::Reader<BufReader<File>>)> {
    let file = File::open(path).map_err(|e| QmsError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| QmsError::Data(format!("{}: cannot read header: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    Ok((headers, reader))
}

fn column_index(headers: &[String], name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        QmsError::Data(format!("{}: missing column {name:?}", path.display()))
    })
}

fn scan(
    path: &Path,
    numeric: &Selection<'_>,
    categorical: &[String],
    label_column: Option<&str>,
) -> Result<Scan> {
    let (headers, mut reader) = open(path)?;
    let label_idx = label_column
        .map(|l| column_index(&headers, l, path))
        .transpose()?;
    let cat_idx = categorical
        .iter()
        .map(|c| column_index(&headers, c, path))
        .collect::<Result<Vec<_>>>()?;
    let num_idx: Vec<usize> = match numeric {
        Selection::AllExcept => (0..headers.len())
            .filter(|i| Some(*i) != label_idx && !cat_idx.contains(i))
            .collect(),
        Selection::Named(names) => names
            .iter()
            .map(|n| column_index(&headers, n, path))
            .collect::<Result<_>>()?,
    };
    let numeric_names = num_idx.iter().map(|&i| headers[i].clone()).collect();

    let mut numeric_vals = Vec::new();
    let mut cat_vals = vec![Vec::new(); cat_idx.len()];
    let mut labels = label_idx.map(|_| Vec::new());
    let mut bad: Vec<(u64, String)> = Vec::new();
    let mut bad_total = 0usize;
    let mut rows = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(QmsError::Data(format!("{}: {e}", path.display())));
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let start = numeric_vals.len();
        let mut problem = None;
        for &i in &num_idx {
            let cell = record.get(i).unwrap_or("").trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => numeric_vals.push(v),
                _ => {
                    problem.get_or_insert_with(|| {
                        if cell.is_empty() {
                            format!("missing value in column {:?}", headers[i])
                        } else {
                            format!("non-numeric value {cell:?} in column {:?}", headers[i])
                        }
                    });
                    numeric_vals.push(f64::NAN);
                }
            }
        }
        for (slot, &i) in cat_vals.iter_mut().zip(&cat_idx) {
            let cell = record.get(i).unwrap_or("").trim();
            if cell.is_empty() {
                problem.get_or_insert_with(|| format!("missing value in column {:?}", headers[i]));
            }
            slot.push(cell.to_string());
        }
        if let (Some(labels), Some(i)) = (labels.as_mut(), label_idx) {
            let cell = record.get(i).unwrap_or("").trim();
            if cell.is_empty() {
                problem.get_or_insert_with(|| format!("missing label in column {:?}", headers[i]));
            }
            labels.push(cell.to_string());
        }
        if let Some(msg) = problem {
            bad_total += 1;
            if bad.len() < MAX_REPORTED_ROWS {
                bad.push((line, msg));
            }
            numeric_vals.truncate(start);
            for slot in &mut cat_vals {
                slot.pop();
            }
            if let Some(labels) = labels.as_mut() {
                labels.pop();
            }
            continue;
        }
        rows += 1;
    }
    if bad_total > 0 {
        let listed: Vec<String> = bad.iter().map(|(l, m)| format!("line {l}: {m}")).collect();
        return Err(QmsError::Data(format!(
            "{}: {bad_total} row(s) rejected ({}{})",
            path.display(),
            listed.join("; "),
            if bad_total > bad.len() { "; ..." } else { "" }
        )));
    }
    if rows == 0 {
        return Err(QmsError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Scan {
        rows,
        numeric_names,
        numeric_cols: num_idx.len(),
        numeric: numeric_vals,
        categorical: cat_vals,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn lexicographic_labels() {
        let f = csv_file("x,y,label\n1,2,a\n3,4,b\n5,6,a\n");
        let d = load_csv(f.path(), "label", &[]).unwrap();
        assert_eq!(d.m(), 2);
        assert_eq!(d.class_names(), &["a", "b"]);
        assert_eq!(d.y(), &[0, 1, 0]);
        assert_eq!(d.p(), 2);
        assert_eq!(d.x().column(1), &[3.0, 4.0]);
        assert_eq!(d.feature_names(), &["x", "y"]);
    }

    #[test]
    fn labels_ignore_row_order() {
        let f = csv_file("v,c\n1,zeta\n2,alpha\n3,mid\n");
        let d = load_csv(f.path(), "c", &[]).unwrap();
        assert_eq!(d.class_names(), &["alpha", "mid", "zeta"]);
        assert_eq!(d.y(), &[2, 0, 1]);
    }

    #[test]
    fn categorical_one_hot_appended() {
        let f = csv_file("color,w,label\ny,1.5,a\nx,2.5,b\ny,0,b\n");
        let (d, schema) = read_table(f.path(), "label", &["color".to_string()]).unwrap();
        assert_eq!(d.p(), 3);
        assert_eq!(d.feature_names(), &["w", "color=x", "color=y"]);
        assert_eq!(d.x().column(0), &[1.5, 0.0, 1.0]);
        assert_eq!(d.x().column(1), &[2.5, 1.0, 0.0]);
        assert_eq!(schema.p(), 3);

        let g = csv_file("label,w,color\na,1,z\nb,2,x\n");
        let (x, labels) = schema.load_features(g.path(), Some("label")).unwrap();
        assert_eq!(x.column(0), &[1.0, 0.0, 0.0]);
        assert_eq!(x.column(1), &[2.0, 1.0, 0.0]);
        assert_eq!(labels.unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn bad_rows_reported_with_line_numbers() {
        let f = csv_file("x,label\n1,a\nabc,b\n2,a\n,b\n");
        let err = load_csv(f.path(), "label", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 row(s) rejected"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("line 5"), "{msg}");
        assert!(msg.contains("\"abc\""), "{msg}");
    }

    #[test]
    fn missing_file_column_and_single_class() {
        assert!(matches!(
            load_csv("/nonexistent/data.csv", "label", &[]),
            Err(QmsError::Io { .. })
        ));
        let f = csv_file("x,label\n1,a\n2,b\n");
        assert!(load_csv(f.path(), "Class", &[]).unwrap_err().to_string().contains("Class"));
        let g = csv_file("x,label\n1,a\n2,a\n");
        assert!(load_csv(g.path(), "label", &[]).is_err());
    }

    #[test]
    fn labeled_load_uses_given_class_order() {
        let f = csv_file("x,label\n1,b\n2,b\n");
        let schema = FeatureSchema::numeric_from_header(f.path(), Some("label")).unwrap();
        let classes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let d = schema.load_labeled(f.path(), "label", &classes).unwrap();
        assert_eq!(d.y(), &[1, 1]);
        assert_eq!(d.m(), 3);
        let g = csv_file("x,label\n1,q\n");
        assert!(schema.load_labeled(g.path(), "label", &classes).is_err());
    }
}
