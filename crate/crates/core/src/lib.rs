//! Group-based anomaly detection and interactive repair for tabular data.
//!
//! A dataset is split into groups, one per (categorical value, numeric
//! column) pair. Detectors attach error codes to cells and groups, repairs
//! are planned as reversible deltas, and every commit updates groups, the
//! overlap graph and the error store incrementally. [`Session`] wraps that
//! with undo/redo, an append-only log and script export.

pub mod bench;
pub mod delta;
pub mod detect;
pub mod error;
pub mod expr;
pub mod fixture;
pub mod groups;
pub mod history;
pub mod sampler;
pub mod script;
pub mod session;
pub mod storage;
pub mod store;
pub mod synth;
pub mod value;
pub mod wrangle;

pub use detect::{CustomDetector, ErrorCode, ErrorRecord, ErrorStore};
pub use error::{Error, Result};
pub use groups::{AffectedMode, GroupKey};
pub use session::{Engine, Session, SessionConfig};
pub use store::{ingest_csv, Dataset, IngestOptions, RowId, Version};
pub use value::{CellValue, ColumnKind};
pub use wrangle::{ActionKind, CustomWrangler, RepairAction, Scope};
