//! Sample pool loading and labeled/unlabeled bookkeeping.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("dataset has no rows")]
    Empty,
    #[error("feature rows must share one length")]
    Shape,
    #[error("initial set size {size} must be in 1..{pool}")]
    InitSize { size: usize, pool: usize },
    #[error("index {0} is not in the unlabeled set")]
    NotUnlabeled(usize),
}

/// Row-major pool of feature vectors. Entries are finite and immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DatasetError> {
        let first = rows.first().ok_or(DatasetError::Empty)?;
        let cols = first.len();
        if cols == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(DatasetError::Shape);
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), cols, values)
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DatasetError> {
        if rows == 0 {
            return Err(DatasetError::Empty);
        }
        if cols == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if values.len() != rows * cols || values.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Shape);
        }
        Ok(Self { rows, cols, values })
    }

    /// Gathers the given rows, in order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_vec(indices.len(), self.cols, values)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Target values, one per pool row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(values: Vec<f64>) -> Result<Self, DatasetError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Shape);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Loads a headed CSV. Every column except `label_column` becomes a feature,
/// in file order. Row numbers in errors count data rows from 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
) -> Result<(FeatureMatrix, Option<LabelVector>), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_column)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv(
    reader: impl std::io::Read,
    label_column: Option<&str>,
) -> Result<(FeatureMatrix, Option<LabelVector>), DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_pos = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::MissingLabelColumn(name.to_owned()))?,
        ),
        None => None,
    };
    let cols = header.len() - usize::from(label_pos.is_some());
    if cols == 0 {
        return Err(DatasetError::NoFeatures);
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { len, expected_len, .. } => DatasetError::Ragged {
                row,
                found: *len as usize,
                expected: *expected_len as usize,
            },
            _ => DatasetError::Csv(e.to_string()),
        })?;
        for (j, cell) in record.iter().enumerate() {
            let v = crate::decimal::parse(cell).ok_or_else(|| DatasetError::NonNumeric {
                row,
                column: header[j].clone(),
                value: cell.to_owned(),
            })?;
            if Some(j) == label_pos {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
        rows += 1;
    }
    let features = FeatureMatrix::from_vec(rows, cols, values)?;
    let labels = label_pos.map(|_| LabelVector(labels));
    Ok((features, labels))
}

/// Disjoint labeled/unlabeled partition of pool indices.
///
/// `labeled` keeps labeling order; `unlabeled` iterates in ascending index
/// order, which selectors rely on for deterministic tie-breaking and draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    labeled: Vec<usize>,
    unlabeled: BTreeSet<usize>,
}

impl IndexSets {
    /// Builds the partition of `0..pool` with `labeled` known. Duplicate or
    /// out-of-range indices are rejected.
    pub fn with_labeled(pool: usize, labeled: Vec<usize>) -> Option<Self> {
        let mut unlabeled: BTreeSet<usize> = (0..pool).collect();
        for &i in &labeled {
            if !unlabeled.remove(&i) {
                return None;
            }
        }
        Some(Self { labeled, unlabeled })
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    /// Unlabeled indices in ascending order.
    pub fn unlabeled_vec(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn pool_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn move_to_labeled(&mut self, index: usize) -> Result<(), DatasetError> {
        if !self.unlabeled.remove(&index) {
            return Err(DatasetError::NotUnlabeled(index));
        }
        self.labeled.push(index);
        Ok(())
    }
}

/// Draws `init_set_size` distinct pool indices uniformly without replacement.
pub fn draw_initial_set(
    n: usize,
    init_set_size: usize,
    rng: &mut impl Rng,
) -> Result<IndexSets, DatasetError> {
    if init_set_size == 0 || init_set_size >= n {
        return Err(DatasetError::InitSize { size: init_set_size, pool: n });
    }
    let labeled = index::sample(rng, n, init_set_size).into_vec();
    Ok(IndexSets::with_labeled(n, labeled).expect("sampled indices are distinct and in range"))
}
