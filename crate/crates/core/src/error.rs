use thiserror::Error;

use crate::detect::ErrorCode;
use crate::store::RowId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine reports. The `code()` string is stable and is
/// what the HTTP layer puts in the problem-details `code` field.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("unknown row {0}")]
    UnknownRow(RowId),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("stale delta: {0}")]
    StaleDelta(String),
    #[error("invalid delta: {0}")]
    InvalidDelta(String),
    #[error("dataset has no categorical columns to group by")]
    NoCategoricalColumns,
    #[error("dataset has no numeric columns to project")]
    NoNumericColumns,
    #[error("invalid group configuration: {0}")]
    InvalidGroupConfig(String),
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("group `{group}` has no `{code}` errors")]
    NoSuchErrorInGroup { group: String, code: ErrorCode },
    #[error("error code `{0}` is already registered")]
    DuplicateCode(ErrorCode),
    #[error("unknown error code `{0}`")]
    UnknownErrorCode(String),
    #[error("invalid error code `{0}`")]
    InvalidErrorCode(String),
    #[error("parse error at byte {offset}: {message}")]
    ExpressionParse { offset: usize, message: String },
    #[error("type error at byte {offset}: {message}")]
    ExpressionType { offset: usize, message: String },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("inapplicable action: {0}")]
    InapplicableAction(String),
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("unsupported script target `{0}`")]
    UnsupportedTarget(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("unknown sampling strategy `{0}`")]
    UnknownSampling(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedCsv(_) => "MalformedCsv",
            Error::EmptyDataset => "EmptyDataset",
            Error::UnknownRow(_) => "UnknownRow",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::StaleDelta(_) => "StaleDelta",
            Error::InvalidDelta(_) => "InvalidDelta",
            Error::NoCategoricalColumns => "NoCategoricalColumns",
            Error::NoNumericColumns => "NoNumericColumns",
            Error::InvalidGroupConfig(_) => "InvalidGroupConfig",
            Error::UnknownGroup(_) => "UnknownGroup",
            Error::NoSuchErrorInGroup { .. } => "NoSuchErrorInGroup",
            Error::DuplicateCode(_) => "DuplicateCode",
            Error::UnknownErrorCode(_) => "UnknownErrorCode",
            Error::InvalidErrorCode(_) => "InvalidErrorCode",
            Error::ExpressionParse { .. } => "ExpressionParseError",
            Error::ExpressionType { .. } => "ExpressionTypeError",
            Error::InvalidAction(_) => "InvalidAction",
            Error::InapplicableAction(_) => "InapplicableAction",
            Error::SequenceGap { .. } => "SequenceGap",
            Error::NothingToUndo => "NothingToUndo",
            Error::NothingToRedo => "NothingToRedo",
            Error::StorageFailure(_) => "StorageFailure",
            Error::CorruptLog(_) => "CorruptLog",
            Error::UnsupportedTarget(_) => "UnsupportedTarget",
            Error::InvalidScript(_) => "InvalidScript",
            Error::UnknownSampling(_) => "UnknownSampling",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// Byte offset for expression errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            Error::ExpressionParse { offset, .. } | Error::ExpressionType { offset, .. } => {
                Some(*offset)
            }
            _ => None,
        }
    }
}
