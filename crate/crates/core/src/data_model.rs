//! Prediction triples `(y, y_hat, a)` and their label dictionaries.
//!
//! Class and group names are encoded by their position in a sorted list. The
//! class dictionary is the sorted union of the true-label and predicted-label
//! columns, so adjusted predictions share a sample space with both.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("empty dataset")]
    Empty,
    #[error("single protected group `{0}`: at least two groups are required")]
    SingleGroup(String),
    #[error("single class `{0}`: at least two classes are required")]
    SingleClass(String),
    #[error("column lengths differ: y={y}, y_hat={y_hat}, a={a}")]
    LengthMismatch { y: usize, y_hat: usize, a: usize },
    #[error("{column} index {index} out of range at row {row} (size {size})")]
    IndexOutOfRange {
        column: &'static str,
        row: usize,
        index: usize,
        size: usize,
    },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("invalid fold count {folds} for {n} rows")]
    InvalidFolds { folds: usize, n: usize },
}

/// Column names of the three required CSV columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub y: String,
    pub y_hat: String,
    pub a: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            y: "y".to_string(),
            y_hat: "y_hat".to_string(),
            a: "a".to_string(),
        }
    }
}

/// Aligned triples of true label, blackbox prediction and protected group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentDataset {
    y: Vec<usize>,
    y_hat: Vec<usize>,
    a: Vec<usize>,
    class_names: Vec<String>,
    group_names: Vec<String>,
}

impl AdjustmentDataset {
    /// Builds a dataset from already-encoded indices, validating every invariant.
    pub fn new(
        y: Vec<usize>,
        y_hat: Vec<usize>,
        a: Vec<usize>,
        class_names: Vec<String>,
        group_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if y.len() != y_hat.len() || y.len() != a.len() {
            return Err(DataError::LengthMismatch {
                y: y.len(),
                y_hat: y_hat.len(),
                a: a.len(),
            });
        }
        if y.is_empty() {
            return Err(DataError::Empty);
        }
        check_names("class", &class_names)?;
        check_names("group", &group_names)?;
        if class_names.len() < 2 {
            return Err(DataError::SingleClass(class_names[0].clone()));
        }
        if group_names.len() < 2 {
            return Err(DataError::SingleGroup(group_names[0].clone()));
        }
        let c = class_names.len();
        let g = group_names.len();
        for (column, values, size) in [("y", &y, c), ("y_hat", &y_hat, c), ("a", &a, g)] {
            if let Some((row, &index)) = values.iter().enumerate().find(|(_, &v)| v >= size) {
                return Err(DataError::IndexOutOfRange {
                    column,
                    row,
                    index,
                    size,
                });
            }
        }
        Ok(Self {
            y,
            y_hat,
            a,
            class_names,
            group_names,
        })
    }

    /// Encodes raw string labels. Classes come from the sorted union of `y` and
    /// `y_hat`; groups from the sorted distinct values of `a`.
    pub fn from_labels<S: AsRef<str>>(y: &[S], y_hat: &[S], a: &[S]) -> Result<Self, DataError> {
        if y.len() != y_hat.len() || y.len() != a.len() {
            return Err(DataError::LengthMismatch {
                y: y.len(),
                y_hat: y_hat.len(),
                a: a.len(),
            });
        }
        if y.is_empty() {
            return Err(DataError::Empty);
        }
        let classes: BTreeSet<&str> = y.iter().chain(y_hat).map(AsRef::as_ref).collect();
        let groups: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
        let class_names: Vec<String> = classes.into_iter().map(str::to_string).collect();
        let group_names: Vec<String> = groups.into_iter().map(str::to_string).collect();
        let encode = |names: &[String], v: &S| {
            names
                .binary_search_by(|n| n.as_str().cmp(v.as_ref()))
                .expect("value collected into dictionary")
        };
        let y = y.iter().map(|v| encode(&class_names, v)).collect();
        let y_hat = y_hat.iter().map(|v| encode(&class_names, v)).collect();
        let a = a.iter().map(|v| encode(&group_names, v)).collect();
        Self::new(y, y_hat, a, class_names, group_names)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn y_hat(&self) -> &[usize] {
        &self.y_hat
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    /// Iterates rows as `(y, y_hat, a)`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.y
            .iter()
            .zip(&self.y_hat)
            .zip(&self.a)
            .map(|((&y, &k), &a)| (y, k, a))
    }

    /// Rows at `indices`, keeping the full label dictionaries.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            y: indices.iter().map(|&i| self.y[i]).collect(),
            y_hat: indices.iter().map(|&i| self.y_hat[i]).collect(),
            a: indices.iter().map(|&i| self.a[i]).collect(),
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
        }
    }

    /// Fraction of rows where the blackbox prediction equals the true label.
    pub fn blackbox_accuracy(&self) -> f64 {
        let hits = self.y.iter().zip(&self.y_hat).filter(|(y, k)| y == k).count();
        hits as f64 / self.len() as f64
    }

    /// Writes the dataset as CSV with the given column names.
    pub fn write_csv<W: Write>(&self, writer: W, schema: &ColumnSchema) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([&schema.y, &schema.y_hat, &schema.a])?;
        for (y, k, a) in self.rows() {
            w.write_record([&self.class_names[y], &self.class_names[k], &self.group_names[a]])?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<writer>".to_string(),
            source,
        })?;
        Ok(())
    }

    /// Reads CSV text with a header row. Extra columns are ignored.
    pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let position = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingColumn(name.to_string()))
        };
        let (iy, ik, ia) = (position(&schema.y)?, position(&schema.y_hat)?, position(&schema.a)?);
        let mut y = Vec::new();
        let mut y_hat = Vec::new();
        let mut a = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("").to_string();
            y.push(field(iy));
            y_hat.push(field(ik));
            a.push(field(ia));
        }
        if y.is_empty() {
            return Err(DataError::Empty);
        }
        Self::from_labels(&y, &y_hat, &a)
    }
}

fn check_names(kind: &'static str, names: &[String]) -> Result<(), DataError> {
    if names.is_empty() {
        return Err(DataError::Empty);
    }
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(DataError::DuplicateName { kind, name: n.clone() });
        }
    }
    Ok(())
}

/// Loads a dataset from a CSV file.
pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<AdjustmentDataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    AdjustmentDataset::read_csv(file, schema)
}

/// Fold assignment for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl SplitPlan {
    /// Row indices whose fold is `fold`, in row order.
    pub fn holdout(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// Row indices outside `fold`, in row order.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Assigns rows to `folds` folds, stratified by `(y, a)` cell.
///
/// Rows of cells with at least `folds` members are shuffled within the cell and
/// laid out cell by cell; rows of smaller cells are pooled and shuffled
/// together at the end. Folds are then dealt round-robin along this order, so
/// fold sizes differ by at most one and each large cell is spread evenly.
pub fn make_splits(ds: &AdjustmentDataset, folds: usize, seed: u64) -> Result<SplitPlan, DataError> {
    let n = ds.len();
    if folds < 2 || folds > n {
        return Err(DataError::InvalidFolds { folds, n });
    }
    let c = ds.n_classes();
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); ds.n_groups() * c];
    for (i, (y, _, a)) in ds.rows().enumerate() {
        cells[a * c + y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    let mut leftovers = Vec::new();
    for mut cell in cells {
        cell.shuffle(&mut rng);
        if cell.len() >= folds {
            order.extend(cell);
        } else {
            leftovers.extend(cell);
        }
    }
    leftovers.shuffle(&mut rng);
    order.extend(leftovers);

    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % folds;
    }
    Ok(SplitPlan {
        folds,
        seed,
        assignments,
    })
}
