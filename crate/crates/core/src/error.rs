use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("non-finite input entry at ({row}, {col})")]
    NonFiniteInput { row: usize, col: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("every feature is degenerate (all treated or all control); balancing term is empty")]
    EmptyBalancing,

    #[error("non-finite value in {context}{}", feature_suffix(*.feature))]
    NonFinite {
        context: &'static str,
        feature: Option<usize>,
    },

    #[error("objective became non-finite at outer iteration {iteration}")]
    Diverged { iteration: usize, trace: Vec<f64> },

    #[error("no samples selected from a pool of {pool}; increase n_pool")]
    EmptySelection { pool: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),
}

fn feature_suffix(feature: Option<usize>) -> String {
    match feature {
        Some(j) => format!(" (feature {j})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

/// Process exit codes used by the command-line front end.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const INPUT: i32 = 4;
    pub const PARAMETER: i32 = 5;
    pub const NUMERICAL: i32 = 6;
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing_file",
            Error::Io { .. } => "io",
            Error::RaggedRow { .. } => "ragged_row",
            Error::MissingLabelColumn(_) => "missing_label_column",
            Error::NonNumericCell { .. } => "non_numeric_cell",
            Error::Csv(_) => "csv",
            Error::NonFiniteInput { .. } => "non_finite_input",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptyBalancing => "empty_balancing",
            Error::NonFinite { .. } => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::EmptySelection { .. } => "empty_selection",
            Error::ModelFormat(_) => "model_format",
            Error::Config(_) => "config",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::USAGE,
            Error::MissingFile(_) | Error::Io { .. } => exit::IO,
            Error::RaggedRow { .. }
            | Error::MissingLabelColumn(_)
            | Error::NonNumericCell { .. }
            | Error::Csv(_)
            | Error::NonFiniteInput { .. }
            | Error::InvalidDataset(_)
            | Error::DimensionMismatch(_)
            | Error::ModelFormat(_) => exit::INPUT,
            Error::InvalidParameter(_) | Error::EmptyBalancing | Error::EmptySelection { .. } => {
                exit::PARAMETER
            }
            Error::NonFinite { .. } | Error::Diverged { .. } => exit::NUMERICAL,
        }
    }
}
