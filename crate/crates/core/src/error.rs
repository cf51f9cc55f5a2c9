use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: ordinal value {value} outside 1..={levels}")]
    OrdinalOutOfRange {
        row: usize,
        column: String,
        value: String,
        levels: u32,
    },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset carries no class labels")]
    LabelsAbsent,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("degenerate margin for `{0}`: column is constant")]
    DegenerateMargin(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid parameters for {family}: {reason}")]
    InvalidParameter { family: String, reason: String },
    #[error("Kendall's tau {tau} is not attainable by {family} rotated {rotation}")]
    TauUnattainable {
        family: String,
        rotation: u16,
        tau: f64,
    },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("partial correlation is numerically singular")]
    NearSingular,
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("class {class} has {got} rows; at least {needed} required")]
    ClassTooSmall {
        class: u32,
        got: usize,
        needed: usize,
    },
    #[error("edge `{0}` is not part of the vine")]
    EdgeAbsent(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumeric { .. } => "NonNumeric",
            Error::OrdinalOutOfRange { .. } => "OrdinalOutOfRange",
            Error::MissingValue { .. } => "MissingValue",
            Error::EmptyDataset => "EmptyDataset",
            Error::LabelsAbsent => "LabelsAbsent",
            Error::InvalidSchema(_) => "InvalidSchema",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::DegenerateMargin(_) => "DegenerateMargin",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::TauUnattainable { .. } => "TauUnattainable",
            Error::NonConvergence(_) => "NonConvergence",
            Error::TooFewObservations { .. } => "TooFewObservations",
            Error::NearSingular => "NearSingular",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::ClassTooSmall { .. } => "ClassTooSmall",
            Error::EdgeAbsent(_) => "EdgeAbsent",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
