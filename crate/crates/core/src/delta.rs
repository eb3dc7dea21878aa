//! Cell-level differential records. One committed action produces one
//! [`SnapshotDelta`]; undo applies its inverse.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::store::RowId;
use crate::value::CellValue;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChange {
    pub row: RowId,
    pub column: String,
    pub before: CellValue,
    pub after: CellValue,
}

/// A full row image, cells in column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSnapshot {
    pub row: RowId,
    pub cells: Vec<CellValue>,
}

/// Before/after record of one committed action.
///
/// Restorations only appear in inverses of deletions. The three lists must
/// reference disjoint rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotDelta {
    pub seq: u64,
    #[serde(default)]
    pub cell_changes: Vec<CellChange>,
    #[serde(default)]
    pub row_deletions: Vec<RowSnapshot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub row_restorations: Vec<RowSnapshot>,
}

impl SnapshotDelta {
    pub fn new(seq: u64) -> Self {
        SnapshotDelta {
            seq,
            ..Default::default()
        }
    }

    pub fn inverse(&self) -> SnapshotDelta {
        SnapshotDelta {
            seq: self.seq,
            cell_changes: self
                .cell_changes
                .iter()
                .map(|c| CellChange {
                    row: c.row,
                    column: c.column.clone(),
                    before: c.after.clone(),
                    after: c.before.clone(),
                })
                .collect(),
            row_deletions: self.row_restorations.clone(),
            row_restorations: self.row_deletions.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cell_changes.is_empty()
            && self.row_deletions.is_empty()
            && self.row_restorations.is_empty()
    }

    /// True when the delta changes nothing observable.
    pub fn is_noop(&self) -> bool {
        self.row_deletions.is_empty()
            && self.row_restorations.is_empty()
            && self.cell_changes.iter().all(|c| c.before == c.after)
    }

    pub fn touched_rows(&self) -> BTreeSet<RowId> {
        self.cell_changes
            .iter()
            .map(|c| c.row)
            .chain(self.row_deletions.iter().map(|r| r.row))
            .chain(self.row_restorations.iter().map(|r| r.row))
            .collect()
    }

    pub fn has_row_changes(&self) -> bool {
        !self.row_deletions.is_empty() || !self.row_restorations.is_empty()
    }

    /// Number of cells whose content this delta records.
    pub fn cells_touched(&self) -> usize {
        self.cell_changes.len()
            + self
                .row_deletions
                .iter()
                .chain(&self.row_restorations)
                .map(|r| r.cells.len())
                .sum::<usize>()
    }
}
