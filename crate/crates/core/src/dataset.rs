//! Binary datasets, threshold binarization, CSV ingestion and the treatment
//! indicator matrix.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_traits::Float;

use crate::error::{Error, Result};

/// Name given to the constant column appended by [`Dataset::with_intercept`].
pub const INTERCEPT_NAME: &str = "intercept";

/// Binary feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<u8>,
    labels: Array1<u8>,
    feature_names: Option<Vec<String>>,
    intercept: bool,
}

impl Dataset {
    pub fn new(
        features: Array2<u8>,
        labels: Array1<u8>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n < 2 || p < 2 {
            return Err(Error::InvalidDataset(format!(
                "need n >= 2 and p >= 2, got n = {n}, p = {p}"
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidDataset(format!(
                "feature entry ({i}, {j}) = {v} is not binary"
            )));
        }
        if let Some((i, v)) = labels.iter().enumerate().find(|&(_, &v)| v > 1) {
            return Err(Error::InvalidDataset(format!(
                "label {i} = {v} is not binary"
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "{p} features but {} names",
                    names.len()
                )));
            }
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            intercept: false,
        })
    }

    pub fn features(&self) -> &Array2<u8> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<u8> {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Feature names, falling back to `x0, x1, ...` when none were given.
    pub fn resolved_names(&self) -> Vec<String> {
        match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.n_features()).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Whether the last column is an appended constant intercept.
    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Appends a constant-1 column. It is always degenerate as a treatment,
    /// so the balancing term ignores it. No-op if already present.
    pub fn with_intercept(mut self) -> Self {
        if self.intercept {
            return self;
        }
        let (n, p) = self.features.dim();
        let mut names = self.resolved_names();
        let mut features = Array2::ones((n, p + 1));
        features
            .slice_mut(ndarray::s![.., ..p])
            .assign(&self.features);
        self.features = features;
        names.push(INTERCEPT_NAME.to_string());
        self.feature_names = Some(names);
        self.intercept = true;
        self
    }

    /// Keeps only the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset> {
        let p = self.n_features();
        if let Some(&bad) = columns.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidParameter(format!(
                "column {bad} out of range for p = {p}"
            )));
        }
        let features = self.features.select(Axis(1), columns);
        let names = self
            .feature_names
            .as_ref()
            .map(|names| columns.iter().map(|&j| names[j].clone()).collect());
        let mut out = Dataset::new(features, self.labels.clone(), names)?;
        out.intercept = self.intercept && columns.last() == Some(&(p - 1));
        Ok(out)
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), rows);
        let labels = self.labels.select(Axis(0), rows);
        let mut out = Dataset::new(features, labels, self.feature_names.clone())?;
        out.intercept = self.intercept;
        Ok(out)
    }

    /// Feature matrix converted to the scalar type `T`.
    pub fn features_as<T: num_traits::Zero + num_traits::One + Clone>(&self) -> Array2<T> {
        self.features
            .mapv(|v| if v == 1 { T::one() } else { T::zero() })
    }

    pub fn labels_as<T: num_traits::Zero + num_traits::One + Clone>(&self) -> Array1<T> {
        self.labels
            .mapv(|v| if v == 1 { T::one() } else { T::zero() })
    }

    /// Mean of each feature column.
    pub fn mean_feature_vector(&self) -> Array1<f64> {
        let n = self.n_samples() as f64;
        self.features
            .axis_iter(Axis(1))
            .map(|col| col.iter().map(|&v| v as f64).sum::<f64>() / n)
            .collect()
    }
}

/// Thresholds every column that is not already 0/1: an entry becomes 1 if
/// it is `>= 0` and 0 otherwise. Columns holding only 0 and 1 pass through
/// unchanged, so the map is idempotent.
pub fn binarize<F: Float>(values: ArrayView2<'_, F>) -> Result<Array2<u8>> {
    if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteInput { row, col });
    }
    let mut out = values.mapv(binarize_value);
    for (j, col) in values.axis_iter(Axis(1)).enumerate() {
        if col.iter().all(|&v| v == F::zero() || v == F::one()) {
            out.column_mut(j)
                .assign(&col.mapv(|v| u8::from(v == F::one())));
        }
    }
    Ok(out)
}

/// Binarization rule for a single value.
pub fn binarize_value<F: Float>(v: F) -> u8 {
    u8::from(v >= F::zero())
}

/// Treatment status of each sample for each feature taken as treatment,
/// together with per-feature group sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    entries: Array2<u8>,
    treated: Vec<usize>,
    control: Vec<usize>,
}

impl IndicatorMatrix {
    pub fn new(entries: Array2<u8>) -> Self {
        let n = entries.nrows();
        let treated: Vec<usize> = entries
            .axis_iter(Axis(1))
            .map(|col| col.iter().filter(|&&v| v == 1).count())
            .collect();
        let control = treated.iter().map(|&t| n - t).collect();
        IndicatorMatrix {
            entries,
            treated,
            control,
        }
    }

    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn treated_count(&self, j: usize) -> usize {
        self.treated[j]
    }

    pub fn control_count(&self, j: usize) -> usize {
        self.control[j]
    }

    /// A feature with an empty treated or control group.
    pub fn is_degenerate(&self, j: usize) -> bool {
        self.treated[j] == 0 || self.control[j] == 0
    }

    pub fn degenerate_flags(&self) -> Vec<bool> {
        (0..self.entries.ncols())
            .map(|j| self.is_degenerate(j))
            .collect()
    }
}

/// For binary features the treatment status is feature presence, so the
/// indicator matrix is the feature matrix itself.
pub fn indicator_from_features(dataset: &Dataset) -> IndicatorMatrix {
    IndicatorMatrix::new(dataset.features.clone())
}

/// The confounders of treatment `j`: the feature matrix with column `j`
/// read as zero. Borrowed, never copied.
#[derive(Debug, Clone, Copy)]
pub struct ConfounderView<'a, T> {
    features: ArrayView2<'a, T>,
    treatment: usize,
}

impl<'a, T: Copy + num_traits::Zero> ConfounderView<'a, T> {
    pub fn new(features: ArrayView2<'a, T>, treatment: usize) -> Self {
        assert!(treatment < features.ncols(), "treatment index out of range");
        ConfounderView {
            features,
            treatment,
        }
    }

    pub fn treatment(&self) -> usize {
        self.treatment
    }

    pub fn dim(&self) -> (usize, usize) {
        self.features.dim()
    }

    pub fn get(&self, i: usize, k: usize) -> T {
        if k == self.treatment {
            T::zero()
        } else {
            self.features[[i, k]]
        }
    }

    /// Row `i` of the masked matrix.
    pub fn row(&self, i: usize) -> impl Iterator<Item = T> + use<'_, 'a, T> {
        (0..self.features.ncols()).map(move |k| self.get(i, k))
    }
}

/// How the label column is identified in a CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    fn resolve(&self, header: &[String]) -> Result<usize> {
        match self {
            LabelColumn::Name(name) => header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingLabelColumn(name.clone())),
            LabelColumn::Index(i) if *i < header.len() => Ok(*i),
            LabelColumn::Index(i) => Err(Error::MissingLabelColumn(i.to_string())),
        }
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Digits are read as an index, anything else as a column name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(name) => f.write_str(name),
            LabelColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

/// A parsed numeric CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub values: Array2<f64>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(file);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let width = header.len();
        let mut flat = Vec::new();
        let mut rows = 0;
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            // 1-based data row number, header excluded
            let row = r + 1;
            if record.len() != width {
                return Err(Error::RaggedRow {
                    row,
                    expected: width,
                    found: record.len(),
                });
            }
            for (c, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    row,
                    column: header[c].clone(),
                    value: cell.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(Error::NonNumericCell {
                        row,
                        column: header[c].clone(),
                        value: cell.to_string(),
                    });
                }
                flat.push(value);
            }
            rows += 1;
        }
        let values =
            Array2::from_shape_vec((rows, width), flat).map_err(|e| Error::Csv(e.to_string()))?;
        Ok(Table { header, values })
    }

    /// Columns holding a value other than exactly 0 or 1.
    pub fn non_binary_columns(&self) -> Vec<usize> {
        self.values
            .axis_iter(Axis(1))
            .enumerate()
            .filter(|(_, col)| col.iter().any(|&v| v != 0.0 && v != 1.0))
            .map(|(j, _)| j)
            .collect()
    }
}

/// A dataset read from disk plus the columns that had to be binarized.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub binarized_columns: Vec<String>,
}

/// Reads a header-first, comma-separated file. Columns holding anything
/// other than 0/1 are binarized with the `>= 0` rule and reported.
pub fn load_dataset(path: &Path, label: &LabelColumn) -> Result<LoadedDataset> {
    let table = Table::read(path)?;
    let label_idx = label.resolve(&table.header)?;
    let non_binary = table.non_binary_columns();
    let binarized_columns: Vec<String> = non_binary
        .iter()
        .map(|&j| table.header[j].clone())
        .collect();
    for name in &binarized_columns {
        warn!("column {name:?} is not binary; binarized with the >= 0 rule");
    }
    let binary = binarize(table.values.view())?;
    let feature_cols: Vec<usize> = (0..table.header.len())
        .filter(|&j| j != label_idx)
        .collect();
    let features = binary.select(Axis(1), &feature_cols);
    let labels = binary.column(label_idx).to_owned();
    let names = feature_cols
        .iter()
        .map(|&j| table.header[j].clone())
        .collect();
    let dataset = Dataset::new(features, labels, Some(names))?;
    Ok(LoadedDataset {
        dataset,
        binarized_columns,
    })
}

/// Writes features then the label column named `label_name`.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path, label_name: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        let mut header = dataset.resolved_names();
        header.push(label_name.to_string());
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::with_capacity(2 * (dataset.n_features() + 1));
        for (row, &y) in dataset.features.outer_iter().zip(dataset.labels.iter()) {
            line.clear();
            for &v in row.iter() {
                line.push(if v == 1 { '1' } else { '0' });
                line.push(',');
            }
            line.push(if y == 1 { '1' } else { '0' });
            writeln!(out, "{line}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}
