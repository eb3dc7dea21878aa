//! The dataset: CSV ingestion with kind inference, stable row ids, cell
//! access and application of [`SnapshotDelta`]s.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::delta::SnapshotDelta;
use crate::error::{Error, Result};
use crate::value::{format_number, parse_strict_number, CellValue, ColumnKind};

/// Stable row identity. Issued monotonically from 1 at ingestion and never
/// reused; deleted ids are tombstoned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowId(pub u64);

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dataset version token, bumped by one on every applied delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Version(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    #[serde(default = "default_delimiter")]
    pub delimiter: u8,
    #[serde(default)]
    pub dataset_id: Option<String>,
}

fn default_delimiter() -> u8 {
    b','
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            delimiter: b',',
            dataset_id: None,
        }
    }
}

/// Numeric iff at least 60% of non-null cells parse as finite numbers.
const NUMERIC_SHARE_PERCENT: usize = 60;

/// Header used for the row-id column in canonical exports.
pub const ROW_ID_HEADER: &str = "_row_id";

#[derive(Debug, Clone)]
pub struct Dataset {
    id: String,
    columns: Vec<ColumnMeta>,
    index: HashMap<String, usize>,
    rows: BTreeMap<RowId, Vec<CellValue>>,
    deleted: BTreeSet<RowId>,
    next_row_id: u64,
    version: Version,
}

/// Content equality: schema, live rows and tombstones. Ignores id and version.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.rows == other.rows
            && self.deleted == other.deleted
            && self.next_row_id == other.next_row_id
    }
}

/// Serializable full image of a dataset, used for the baseline snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSnapshot {
    pub id: String,
    pub columns: Vec<ColumnMeta>,
    pub rows: Vec<(RowId, Vec<CellValue>)>,
    pub deleted: Vec<RowId>,
    pub next_row_id: u64,
}

pub fn ingest_csv(bytes: &[u8], options: &IngestOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::MalformedCsv("missing header row".into()));
    }
    let mut seen = HashSet::new();
    for name in headers.iter() {
        if name.is_empty() {
            return Err(Error::MalformedCsv("empty column name".into()));
        }
        if !seen.insert(name) {
            return Err(Error::MalformedCsv(format!("duplicate column `{name}`")));
        }
    }

    let mut raw: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        raw.push(record.iter().map(str::to_string).collect());
    }
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let columns: Vec<ColumnMeta> = headers
        .iter()
        .enumerate()
        .map(|(position, name)| ColumnMeta {
            name: name.to_string(),
            kind: infer_kind(raw.iter().map(|r| r[position].as_str())),
            position,
        })
        .collect();

    let mut rows = BTreeMap::new();
    for (i, fields) in raw.iter().enumerate() {
        let cells = fields
            .iter()
            .zip(&columns)
            .map(|(f, c)| CellValue::from_field(f, c.kind))
            .collect();
        rows.insert(RowId(i as u64 + 1), cells);
    }

    let id = options
        .dataset_id
        .clone()
        .unwrap_or_else(|| format!("ds-{}", short_hash(bytes)));
    Ok(Dataset::from_parts(id, columns, rows, BTreeSet::new(), raw.len() as u64 + 1))
}

/// Column kind inference over raw fields. Empty fields are nulls and do not
/// count. A column with no non-null cells is categorical.
pub fn infer_kind<'a>(fields: impl Iterator<Item = &'a str>) -> ColumnKind {
    let (mut non_null, mut numeric) = (0usize, 0usize);
    for f in fields.filter(|f| !f.is_empty()) {
        non_null += 1;
        if parse_strict_number(f).is_some() {
            numeric += 1;
        }
    }
    if non_null > 0 && numeric * 100 >= non_null * NUMERIC_SHARE_PERCENT {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    }
}

fn short_hash(bytes: &[u8]) -> String {
    crate::script::sha256_hex(bytes)[..12].to_string()
}

impl Dataset {
    fn from_parts(
        id: String,
        columns: Vec<ColumnMeta>,
        rows: BTreeMap<RowId, Vec<CellValue>>,
        deleted: BTreeSet<RowId>,
        next_row_id: u64,
    ) -> Dataset {
        let index = columns
            .iter()
            .map(|c| (c.name.clone(), c.position))
            .collect();
        Dataset {
            id,
            columns,
            index,
            rows,
            deleted,
            next_row_id,
            version: Version(0),
        }
    }

    pub fn from_snapshot(snapshot: DatasetSnapshot) -> Result<Dataset> {
        let width = snapshot.columns.len();
        for (i, c) in snapshot.columns.iter().enumerate() {
            if c.position != i {
                return Err(Error::CorruptLog(format!("column `{}` out of position", c.name)));
            }
        }
        let mut rows = BTreeMap::new();
        for (id, cells) in snapshot.rows {
            if cells.len() != width || id.0 >= snapshot.next_row_id {
                return Err(Error::CorruptLog(format!("bad snapshot row {id}")));
            }
            rows.insert(id, cells);
        }
        Ok(Dataset::from_parts(
            snapshot.id,
            snapshot.columns,
            rows,
            snapshot.deleted.into_iter().collect(),
            snapshot.next_row_id,
        ))
    }

    pub fn snapshot(&self) -> DatasetSnapshot {
        DatasetSnapshot {
            id: self.id.clone(),
            columns: self.columns.clone(),
            rows: self.rows.iter().map(|(k, v)| (*k, v.clone())).collect(),
            deleted: self.deleted.iter().copied().collect(),
            next_row_id: self.next_row_id,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&ColumnMeta> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn columns_of_kind(&self, kind: ColumnKind) -> impl Iterator<Item = &ColumnMeta> {
        self.columns.iter().filter(move |c| c.kind == kind)
    }

    pub fn row(&self, id: RowId) -> Option<&[CellValue]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    /// Live rows in id order.
    pub fn rows(&self) -> impl Iterator<Item = (RowId, &[CellValue])> {
        self.rows.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn row_ids(&self) -> impl Iterator<Item = RowId> + '_ {
        self.rows.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_live(&self, id: RowId) -> bool {
        self.rows.contains_key(&id)
    }

    pub fn is_deleted(&self, id: RowId) -> bool {
        self.deleted.contains(&id)
    }

    pub fn deleted(&self) -> &BTreeSet<RowId> {
        &self.deleted
    }

    /// Count of ids ever issued.
    pub fn ids_issued(&self) -> u64 {
        self.next_row_id - 1
    }

    pub fn get_cell(&self, row: RowId, column: &str) -> Result<&CellValue> {
        let col = self
            .column_index(column)
            .ok_or_else(|| Error::UnknownColumn(column.to_string()))?;
        let cells = self.rows.get(&row).ok_or(Error::UnknownRow(row))?;
        Ok(&cells[col])
    }

    /// Cell by position. Panics on unknown row or column; callers hold ids
    /// taken from this dataset.
    pub fn cell(&self, row: RowId, col: usize) -> &CellValue {
        &self.rows[&row][col]
    }

    /// Applies a delta atomically: every precondition is checked before any
    /// cell changes.
    pub fn apply_delta(&mut self, delta: &SnapshotDelta) -> Result<Version> {
        self.check_delta(delta)?;
        for r in &delta.row_restorations {
            self.deleted.remove(&r.row);
            self.rows.insert(r.row, r.cells.clone());
        }
        for c in &delta.cell_changes {
            let col = self.index[&c.column];
            self.rows.get_mut(&c.row).expect("checked")[col] = c.after.clone();
        }
        for r in &delta.row_deletions {
            self.rows.remove(&r.row);
            self.deleted.insert(r.row);
        }
        self.version = Version(self.version.0 + 1);
        Ok(self.version)
    }

    fn check_delta(&self, delta: &SnapshotDelta) -> Result<()> {
        let width = self.columns.len();
        let mut changed_cells = HashSet::new();
        let mut change_rows = HashSet::new();
        for c in &delta.cell_changes {
            let col = self
                .column_index(&c.column)
                .ok_or_else(|| Error::UnknownColumn(c.column.clone()))?;
            let cells = self
                .rows
                .get(&c.row)
                .ok_or_else(|| Error::StaleDelta(format!("row {} is not live", c.row)))?;
            if !changed_cells.insert((c.row, col)) {
                return Err(Error::InvalidDelta(format!(
                    "cell ({}, {}) changed twice",
                    c.row, c.column
                )));
            }
            if cells[col] != c.before {
                return Err(Error::StaleDelta(format!(
                    "cell ({}, {}) is {} but delta expects {}",
                    c.row, c.column, cells[col], c.before
                )));
            }
            change_rows.insert(c.row);
        }
        let mut whole_rows = HashSet::new();
        for r in &delta.row_deletions {
            let cells = self
                .rows
                .get(&r.row)
                .ok_or_else(|| Error::StaleDelta(format!("row {} is not live", r.row)))?;
            if *cells != r.cells {
                return Err(Error::StaleDelta(format!("row {} differs from delta image", r.row)));
            }
            if change_rows.contains(&r.row) || !whole_rows.insert(r.row) {
                return Err(Error::InvalidDelta(format!("row {} referenced twice", r.row)));
            }
        }
        for r in &delta.row_restorations {
            if !self.deleted.contains(&r.row) {
                return Err(Error::StaleDelta(format!("row {} is not deleted", r.row)));
            }
            if r.cells.len() != width {
                return Err(Error::InvalidDelta(format!("row {} has wrong width", r.row)));
            }
            if change_rows.contains(&r.row) || !whole_rows.insert(r.row) {
                return Err(Error::InvalidDelta(format!("row {} referenced twice", r.row)));
            }
        }
        Ok(())
    }

    /// Canonical CSV export: `_row_id` then every column, live rows in id
    /// order, `\n` line ends. Null is an empty field; empty text is `""`.
    pub fn export_canonical_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(ROW_ID_HEADER);
        for c in &self.columns {
            out.push(',');
            push_csv_field(&mut out, &c.name, false);
        }
        out.push('\n');
        for (id, cells) in &self.rows {
            out.push_str(&id.0.to_string());
            for cell in cells {
                out.push(',');
                match cell {
                    CellValue::Null => {}
                    CellValue::Number(x) => out.push_str(&format_number(*x)),
                    CellValue::Text(s) => push_csv_field(&mut out, s, true),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn push_csv_field(out: &mut String, s: &str, quote_empty: bool) {
    let needs_quotes = (quote_empty && s.is_empty())
        || s.contains([',', '"', '\r', '\n']);
    if needs_quotes {
        out.push('"');
        out.push_str(&s.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta::{CellChange, RowSnapshot};
    use crate::fixture::SALARIES_CSV;

    fn fixture() -> Dataset {
        ingest_csv(SALARIES_CSV.as_bytes(), &IngestOptions::default()).unwrap()
    }

    #[test]
    fn fixture_kinds() {
        let ds = fixture();
        let kinds: Vec<_> = ds.columns().iter().map(|c| (c.name.as_str(), c.kind)).collect();
        // Income: 6 of 7 non-null cells parse (86%)
        assert_eq!(
            kinds,
            vec![
                ("Country", ColumnKind::Categorical),
                ("Degree", ColumnKind::Categorical),
                ("Income", ColumnKind::Numeric),
            ]
        );
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.ids_issued(), 8);
    }

    #[test]
    fn sixty_percent_boundary() {
        let at = ["1", "2", "3", "a", "b"];
        assert_eq!(infer_kind(at.iter().copied()), ColumnKind::Numeric);
        let below = ["1", "2", "a", "b", "c"];
        assert_eq!(infer_kind(below.iter().copied()), ColumnKind::Categorical);
        let nulls_ignored = ["1", "", "", ""];
        assert_eq!(infer_kind(nulls_ignored.iter().copied()), ColumnKind::Numeric);
        assert_eq!(infer_kind(["", ""].iter().copied()), ColumnKind::Categorical);
    }

    #[test]
    fn header_only_is_empty() {
        let err = ingest_csv(b"a,b\n", &IngestOptions::default()).unwrap_err();
        assert_eq!(err, Error::EmptyDataset);
    }

    #[test]
    fn malformed_inputs() {
        let ragged = ingest_csv(b"a,b\n1,2\n3\n", &IngestOptions::default());
        assert!(matches!(ragged, Err(Error::MalformedCsv(_))));
        let dup = ingest_csv(b"a,a\n1,2\n", &IngestOptions::default());
        assert!(matches!(dup, Err(Error::MalformedCsv(_))));
        let nothing = ingest_csv(b"", &IngestOptions::default());
        assert!(matches!(nothing, Err(Error::MalformedCsv(_))));
    }

    #[test]
    fn quoting_and_delimiter() {
        let opts = IngestOptions {
            delimiter: b';',
            dataset_id: Some("x".into()),
        };
        let ds = ingest_csv(b"name;v\n\"a;b\";1\n\"say \"\"hi\"\"\";2\n", &opts).unwrap();
        assert_eq!(ds.id(), "x");
        assert_eq!(ds.get_cell(RowId(1), "name").unwrap(), &CellValue::text("a;b"));
        assert_eq!(
            ds.export_canonical_csv(),
            "_row_id,name,v\n1,a;b,1\n2,\"say \"\"hi\"\"\",2\n"
        );
    }

    #[test]
    fn get_cell_examples() {
        let mut ds = fixture();
        assert_eq!(ds.get_cell(RowId(3), "Income").unwrap(), &CellValue::Null);
        assert_eq!(ds.get_cell(RowId(4), "Income").unwrap(), &CellValue::text("12k"));
        assert_eq!(
            ds.get_cell(RowId(1), "Salary"),
            Err(Error::UnknownColumn("Salary".into()))
        );
        let row7 = ds.row(RowId(7)).unwrap().to_vec();
        let mut del = SnapshotDelta::new(1);
        del.row_deletions.push(RowSnapshot {
            row: RowId(7),
            cells: row7,
        });
        ds.apply_delta(&del).unwrap();
        assert_eq!(ds.get_cell(RowId(7), "Income"), Err(Error::UnknownRow(RowId(7))));
        assert!(ds.is_deleted(RowId(7)));
    }

    fn impute_row3() -> SnapshotDelta {
        SnapshotDelta {
            seq: 1,
            cell_changes: vec![CellChange {
                row: RowId(3),
                column: "Income".into(),
                before: CellValue::Null,
                after: CellValue::Number(1066.67),
            }],
            ..Default::default()
        }
    }

    #[test]
    fn apply_delta_examples() {
        let original = fixture();
        let mut ds = original.clone();
        let d = impute_row3();
        assert_eq!(ds.apply_delta(&d).unwrap(), Version(1));
        assert_eq!(ds.get_cell(RowId(3), "Income").unwrap(), &CellValue::Number(1066.67));
        assert!(matches!(ds.apply_delta(&d), Err(Error::StaleDelta(_))));
        assert_eq!(ds.version(), Version(1), "failed apply leaves version alone");
        assert_eq!(ds.apply_delta(&d.inverse()).unwrap(), Version(2));
        assert_eq!(ds, original);
        assert_eq!(ds.export_canonical_csv(), original.export_canonical_csv());
    }

    #[test]
    fn delta_is_atomic() {
        let original = fixture();
        let mut ds = original.clone();
        let mut d = impute_row3();
        d.cell_changes.push(CellChange {
            row: RowId(1),
            column: "Income".into(),
            before: CellValue::Number(1.0),
            after: CellValue::Number(2.0),
        });
        assert!(matches!(ds.apply_delta(&d), Err(Error::StaleDelta(_))));
        assert_eq!(ds, original);
    }

    #[test]
    fn restoring_a_live_row_is_stale() {
        let mut ds = fixture();
        let mut d = SnapshotDelta::new(1);
        d.row_restorations.push(RowSnapshot {
            row: RowId(1),
            cells: ds.row(RowId(1)).unwrap().to_vec(),
        });
        assert!(matches!(ds.apply_delta(&d), Err(Error::StaleDelta(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let ds = fixture();
        let back = Dataset::from_snapshot(ds.snapshot()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.id(), ds.id());
    }

    #[test]
    fn ingestion_is_deterministic() {
        let a = fixture();
        let b = fixture();
        assert_eq!(a.columns(), b.columns());
        assert_eq!(a.id(), b.id());
    }
}
