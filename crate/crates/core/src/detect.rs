//! Built-in and user-registered detectors, the error store and incremental
//! re-detection.
//!
//! The store keeps three kinds of state:
//!
//! * cell codes: `missing`, `type_mismatch` and `outlier` depend only on one
//!   cell and the column-global stats, so they are stored once per
//!   `(numeric column, row)` and projected into every containing group;
//! * group-scoped codes: `incomplete_group` and custom detector hits, stored
//!   per group;
//! * per-group counts, kept in step with both.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expr::{EvalContext, Predicate};
use crate::groups::{AffectedMode, ClassKey, Group, GroupKey, GroupUpdate, Groups, OverlapGraph};
use crate::store::{Dataset, RowId};
use crate::value::CellValue;

/// Error codes. The derived order is the dominance priority used to break
/// ties: built-ins first, then custom codes lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorCode {
    Missing,
    Outlier,
    TypeMismatch,
    IncompleteGroup,
    Custom(String),
}

impl ErrorCode {
    pub const BUILTIN: [ErrorCode; 4] = [
        ErrorCode::Missing,
        ErrorCode::Outlier,
        ErrorCode::TypeMismatch,
        ErrorCode::IncompleteGroup,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            ErrorCode::Missing => "missing",
            ErrorCode::Outlier => "outlier",
            ErrorCode::TypeMismatch => "type_mismatch",
            ErrorCode::IncompleteGroup => "incomplete_group",
            ErrorCode::Custom(s) => s,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, ErrorCode::Custom(_))
    }

    /// A fresh user code. Built-in names are taken.
    pub fn custom(name: &str) -> Result<ErrorCode> {
        match name.parse::<ErrorCode>()? {
            ErrorCode::Custom(s) => Ok(ErrorCode::Custom(s)),
            builtin => Err(Error::DuplicateCode(builtin)),
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "missing" => ErrorCode::Missing,
            "outlier" => ErrorCode::Outlier,
            "type_mismatch" => ErrorCode::TypeMismatch,
            "incomplete_group" => ErrorCode::IncompleteGroup,
            _ => {
                let ok = !s.is_empty()
                    && s.len() <= 64
                    && s.bytes()
                        .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.');
                if !ok {
                    return Err(Error::InvalidErrorCode(s.to_string()));
                }
                ErrorCode::Custom(s.to_string())
            }
        })
    }
}

impl Serialize for ErrorCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ErrorCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One detected anomaly. `row` is absent for group-scoped codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub group: GroupKey,
    pub row: Option<RowId>,
    pub column: String,
    pub code: ErrorCode,
}

/// Global stats of one numeric column over its parseable, non-null cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub n: usize,
}

impl ColumnStats {
    pub fn compute(ds: &Dataset, column: &str) -> Result<ColumnStats> {
        let idx = ds.column(column)?.position;
        let values: Vec<f64> = ds.rows().filter_map(|(_, cells)| cells[idx].as_number()).collect();
        Ok(Self::from_values(column, &values))
    }

    pub fn from_values(column: &str, values: &[f64]) -> ColumnStats {
        let n = values.len();
        if n == 0 {
            return ColumnStats {
                column: column.to_string(),
                mean: 0.0,
                stddev: 0.0,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        ColumnStats {
            column: column.to_string(),
            mean,
            stddev: var.sqrt(),
            n,
        }
    }

    pub fn is_outlier(&self, x: f64, k: f64) -> bool {
        self.stddev > 0.0 && (x - self.mean).abs() > k * self.stddev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    #[serde(default = "default_k")]
    pub outlier_k: f64,
    #[serde(default = "default_min_size")]
    pub min_group_size: usize,
}

fn default_k() -> f64 {
    2.0
}

fn default_min_size() -> usize {
    2
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            outlier_k: default_k(),
            min_group_size: default_min_size(),
        }
    }
}

/// A detector given as a boolean expression, evaluated per row of each group
/// over `column` (every numeric column when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomDetector {
    pub code: ErrorCode,
    pub predicate: Predicate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl CustomDetector {
    pub fn new(code: &str, predicate: &str, column: Option<&str>) -> Result<CustomDetector> {
        Ok(CustomDetector {
            code: ErrorCode::custom(code)?,
            predicate: Predicate::parse(predicate)?,
            column: column.map(str::to_string),
        })
    }

    pub fn applies_to(&self, num_column: &str) -> bool {
        self.column.as_deref().is_none_or(|c| c == num_column)
    }
}

/// In-process extension point for embedders: given a group, return the
/// anomalous rows. Must depend only on the group's own rows so incremental
/// re-detection stays exact.
pub trait NativeDetector: Send + Sync {
    fn code(&self) -> ErrorCode;
    fn detect(&self, ds: &Dataset, group: &Group<'_>) -> Vec<RowId>;
}

/// The active detector set beyond the built-ins.
#[derive(Clone, Default)]
pub struct Detectors {
    custom: Vec<CustomDetector>,
    native: Vec<Arc<dyn NativeDetector>>,
}

impl fmt::Debug for Detectors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detectors")
            .field("custom", &self.custom)
            .field("native", &self.native.iter().map(|d| d.code()).collect::<Vec<_>>())
            .finish()
    }
}

impl Detectors {
    pub fn contains(&self, code: &ErrorCode) -> bool {
        code.is_builtin()
            || self.custom.iter().any(|d| &d.code == code)
            || self.native.iter().any(|d| &d.code() == code)
    }

    fn check_new(&self, code: &ErrorCode) -> Result<()> {
        if !matches!(code, ErrorCode::Custom(_)) || self.contains(code) {
            return Err(Error::DuplicateCode(code.clone()));
        }
        Ok(())
    }

    pub fn register(&mut self, d: CustomDetector) -> Result<()> {
        self.check_new(&d.code)?;
        self.custom.push(d);
        Ok(())
    }

    pub fn register_native(&mut self, d: Arc<dyn NativeDetector>) -> Result<()> {
        self.check_new(&d.code())?;
        self.native.push(d);
        Ok(())
    }

    pub fn custom(&self) -> &[CustomDetector] {
        &self.custom
    }

    /// Every code, built-ins first.
    pub fn codes(&self) -> Vec<ErrorCode> {
        let mut out = ErrorCode::BUILTIN.to_vec();
        out.extend(self.custom.iter().map(|d| d.code.clone()));
        out.extend(self.native.iter().map(|d| d.code()));
        out
    }

    fn is_empty(&self) -> bool {
        self.custom.is_empty() && self.native.is_empty()
    }
}

/// The code a single cell of a numeric column carries, if any.
pub fn cell_code(value: &CellValue, stats: &ColumnStats, k: f64) -> Option<ErrorCode> {
    match value {
        CellValue::Null => Some(ErrorCode::Missing),
        CellValue::Text(_) => Some(ErrorCode::TypeMismatch),
        CellValue::Number(x) => stats.is_outlier(*x, k).then_some(ErrorCode::Outlier),
    }
}

/// Mean of the parseable, non-null cells of `rows` in column `idx`.
pub fn group_mean<'a>(ds: &Dataset, rows: impl IntoIterator<Item = &'a RowId>, idx: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in rows {
        if let Some(x) = ds.row(*r).and_then(|cells| cells[idx].as_number()) {
            sum += x;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

type CustomHits = BTreeMap<ErrorCode, BTreeSet<RowId>>;

fn custom_hits(ds: &Dataset, group: &Group<'_>, detectors: &Detectors) -> CustomHits {
    let mut out = CustomHits::new();
    if detectors.is_empty() {
        return out;
    }
    let idx = ds.column_index(group.num_column).expect("group column exists");
    let mut ctx_mean = None;
    for d in detectors.custom.iter().filter(|d| d.applies_to(group.num_column)) {
        let mean = *ctx_mean.get_or_insert_with(|| group_mean(ds, group.row_ids, idx));
        let mut hits = BTreeSet::new();
        for r in group.row_ids {
            let Some(cells) = ds.row(*r) else { continue };
            let ctx = EvalContext {
                value: &cells[idx],
                group_size: group.cardinality(),
                group_mean: mean,
            };
            if d.predicate.matches(&ctx) {
                hits.insert(*r);
            }
        }
        if !hits.is_empty() {
            out.insert(d.code.clone(), hits);
        }
    }
    for d in &detectors.native {
        let hits: BTreeSet<RowId> = d
            .detect(ds, group)
            .into_iter()
            .filter(|r| group.row_ids.contains(r))
            .collect();
        if !hits.is_empty() {
            out.entry(d.code()).or_default().extend(hits);
        }
    }
    out
}

/// Every record for one group, given current stats of its numeric column.
pub fn detect_group(
    ds: &Dataset,
    group: &Group<'_>,
    stats: &ColumnStats,
    detectors: &Detectors,
    config: &DetectConfig,
) -> BTreeSet<ErrorRecord> {
    let key = group.key();
    let mut out = BTreeSet::new();
    let Some(idx) = ds.column_index(group.num_column) else {
        return out;
    };
    for r in group.row_ids {
        let Some(cells) = ds.row(*r) else { continue };
        if let Some(code) = cell_code(&cells[idx], stats, config.outlier_k) {
            out.insert(ErrorRecord {
                group: key.clone(),
                row: Some(*r),
                column: group.num_column.to_string(),
                code,
            });
        }
    }
    if group.is_undersized(config.min_group_size) {
        out.insert(ErrorRecord {
            group: key.clone(),
            row: None,
            column: group.num_column.to_string(),
            code: ErrorCode::IncompleteGroup,
        });
    }
    for (code, rows) in custom_hits(ds, group, detectors) {
        for r in rows {
            out.insert(ErrorRecord {
                group: key.clone(),
                row: Some(r),
                column: group.num_column.to_string(),
                code: code.clone(),
            });
        }
    }
    out
}

pub type CodeCounts = BTreeMap<ErrorCode, usize>;

/// Error counts of one group before and after a change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDiff {
    pub group: GroupKey,
    pub before: CodeCounts,
    pub after: CodeCounts,
}

/// What one incremental re-detection did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RedetectReport {
    /// Groups whose rows or error counts changed, including vanished ones.
    pub refresh: BTreeSet<GroupKey>,
    /// Groups whose counts changed.
    pub changes: Vec<GroupDiff>,
    /// Numeric columns whose global stats moved.
    pub stats_changed: Vec<String>,
    /// Size of the affected set that group-scoped detectors re-ran on.
    pub redetected_groups: usize,
    /// Every group whose error records may differ, even where counts match.
    #[serde(skip)]
    pub touched_groups: BTreeSet<GroupKey>,
}

/// The error–tuple mapping of one dataset version.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorStore {
    stats: BTreeMap<String, ColumnStats>,
    cells: BTreeMap<String, BTreeMap<RowId, ErrorCode>>,
    incomplete: BTreeSet<GroupKey>,
    custom: BTreeMap<GroupKey, CustomHits>,
    counts: HashMap<GroupKey, CodeCounts>,
}

fn bump(counts: &mut HashMap<GroupKey, CodeCounts>, key: &GroupKey, code: &ErrorCode, delta: i64) {
    if delta > 0 {
        let m = counts.entry(key.clone()).or_default();
        *m.entry(code.clone()).or_default() += delta as usize;
        return;
    }
    let Some(m) = counts.get_mut(key) else {
        debug_assert!(false, "retracting from an empty group");
        return;
    };
    if let Some(n) = m.get_mut(code) {
        let next = *n as i64 + delta;
        debug_assert!(next >= 0);
        if next <= 0 {
            m.remove(code);
        } else {
            *n = next as usize;
        }
    }
    if m.is_empty() {
        counts.remove(key);
    }
}

/// Count changes, remembering each group's counts before its first change.
struct Tally<'a> {
    counts: &'a mut HashMap<GroupKey, CodeCounts>,
    before: HashMap<GroupKey, CodeCounts>,
}

impl Tally<'_> {
    fn add(&mut self, key: &GroupKey, code: &ErrorCode, delta: i64) {
        if !self.before.contains_key(key) {
            let prev = self.counts.get(key).cloned().unwrap_or_default();
            self.before.insert(key.clone(), prev);
        }
        bump(self.counts, key, code, delta);
    }

    fn add_class(&mut self, groups: &Groups, class: &ClassKey, num: &str, code: &ErrorCode, delta: i64) {
        if groups.has_pair(&class.column, num) {
            self.add(&GroupKey::new(&class.column, &class.value, num), code, delta);
        }
    }
}

/// Full detection: the union of [`detect_group`] over all groups.
pub fn detect_all(
    ds: &Dataset,
    groups: &Groups,
    detectors: &Detectors,
    config: &DetectConfig,
) -> ErrorStore {
    ErrorStore::build(ds, groups, detectors, config)
}

impl ErrorStore {
    pub fn build(ds: &Dataset, groups: &Groups, detectors: &Detectors, config: &DetectConfig) -> ErrorStore {
        let mut store = ErrorStore::default();
        for num in groups.numeric_columns() {
            let Some(idx) = ds.column_index(num) else { continue };
            let mut values = Vec::new();
            for (_, cells) in ds.rows() {
                if let Some(x) = cells[idx].as_number() {
                    values.push(x);
                }
            }
            let stats = ColumnStats::from_values(num, &values);
            let codes: BTreeMap<RowId, ErrorCode> = ds
                .rows()
                .filter_map(|(r, cells)| cell_code(&cells[idx], &stats, config.outlier_k).map(|c| (r, c)))
                .collect();
            store.stats.insert(num.to_string(), stats);
            store.cells.insert(num.to_string(), codes);
        }
        for g in groups.iter() {
            let key = g.key();
            let codes = &store.cells[g.num_column];
            for r in g.row_ids {
                if let Some(code) = codes.get(r) {
                    bump(&mut store.counts, &key, code, 1);
                }
            }
            if g.is_undersized(config.min_group_size) {
                bump(&mut store.counts, &key, &ErrorCode::IncompleteGroup, 1);
                store.incomplete.insert(key.clone());
            }
            let hits = custom_hits(ds, &g, detectors);
            if !hits.is_empty() {
                for (code, rows) in &hits {
                    bump(&mut store.counts, &key, code, rows.len() as i64);
                }
                store.custom.insert(key, hits);
            }
        }
        store
    }

    pub fn stats(&self, column: &str) -> Option<&ColumnStats> {
        self.stats.get(column)
    }

    pub fn all_stats(&self) -> impl Iterator<Item = &ColumnStats> {
        self.stats.values()
    }

    pub fn cell_code(&self, column: &str, row: RowId) -> Option<&ErrorCode> {
        self.cells.get(column)?.get(&row)
    }

    pub fn counts(&self, key: &GroupKey) -> CodeCounts {
        self.counts.get(key).cloned().unwrap_or_default()
    }

    pub fn count(&self, key: &GroupKey, code: &ErrorCode) -> usize {
        self.counts.get(key).and_then(|m| m.get(code)).copied().unwrap_or(0)
    }

    pub fn total(&self, key: &GroupKey) -> usize {
        self.counts.get(key).map_or(0, |m| m.values().sum())
    }

    /// Total number of records.
    pub fn len(&self) -> usize {
        self.counts.values().flat_map(|m| m.values()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Record counts per code across all groups.
    pub fn summary(&self) -> CodeCounts {
        let mut out = CodeCounts::new();
        for m in self.counts.values() {
            for (code, n) in m {
                *out.entry(code.clone()).or_default() += n;
            }
        }
        out
    }

    /// Rows of a group carrying errors, with their codes in priority order.
    pub fn error_rows(&self, groups: &Groups, key: &GroupKey) -> BTreeMap<RowId, Vec<ErrorCode>> {
        let mut out: BTreeMap<RowId, Vec<ErrorCode>> = BTreeMap::new();
        let Some(g) = groups.get(key) else { return out };
        if let Some(codes) = self.cells.get(g.num_column) {
            for r in g.row_ids {
                if let Some(code) = codes.get(r) {
                    out.entry(*r).or_default().push(code.clone());
                }
            }
        }
        if let Some(hits) = self.custom.get(key) {
            for (code, rows) in hits {
                for r in rows {
                    out.entry(*r).or_default().push(code.clone());
                }
            }
        }
        for codes in out.values_mut() {
            codes.sort();
        }
        out
    }

    pub fn group_records(&self, groups: &Groups, key: &GroupKey) -> BTreeSet<ErrorRecord> {
        let mut out = BTreeSet::new();
        for (row, codes) in self.error_rows(groups, key) {
            for code in codes {
                out.insert(ErrorRecord {
                    group: key.clone(),
                    row: Some(row),
                    column: key.num_column.clone(),
                    code,
                });
            }
        }
        if self.incomplete.contains(key) {
            out.insert(ErrorRecord {
                group: key.clone(),
                row: None,
                column: key.num_column.clone(),
                code: ErrorCode::IncompleteGroup,
            });
        }
        out
    }

    /// Every record. Linear in the number of group memberships.
    pub fn records(&self, groups: &Groups) -> BTreeSet<ErrorRecord> {
        let mut out = BTreeSet::new();
        for g in groups.iter() {
            out.extend(self.group_records(groups, &g.key()));
        }
        out
    }

    /// Groups by descending error count, ties by canonical key string.
    pub fn ranked(&self, groups: &Groups) -> Vec<(GroupKey, usize)> {
        let mut out: Vec<(String, GroupKey, usize)> = groups
            .iter()
            .map(|g| {
                let k = g.key();
                (k.to_string(), k.clone(), self.total(&k))
            })
            .collect();
        out.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
        out.into_iter().map(|(_, k, n)| (k, n)).collect()
    }

    /// Brings the store up to date after a committed delta. `groups` and
    /// `graph` must already reflect it, with `update` describing the class
    /// moves. `changed_columns` lists the numeric columns whose cells the
    /// delta wrote; row deletions and restorations count as changing every
    /// column.
    ///
    /// Cell codes are re-evaluated for touched rows, and for untouched rows
    /// only where a column's global stats moved. Group-scoped detectors re-run
    /// over the affected set.
    #[allow(clippy::too_many_arguments)]
    pub fn redetect(
        &mut self,
        ds: &Dataset,
        groups: &Groups,
        graph: &OverlapGraph,
        update: &GroupUpdate,
        changed_columns: &BTreeSet<String>,
        detectors: &Detectors,
        config: &DetectConfig,
        mode: AffectedMode,
    ) -> RedetectReport {
        let mut report = RedetectReport::default();
        let nums: Vec<String> = groups.numeric_columns().into_iter().map(str::to_string).collect();
        let mut tally = Tally {
            counts: &mut self.counts,
            before: HashMap::new(),
        };

        for (row, mv) in &update.rows {
            for num in &nums {
                let Some(code) = self.cells.get_mut(num).and_then(|m| m.remove(row)) else {
                    continue;
                };
                for class in &mv.before {
                    tally.add_class(groups, class, num, &code, -1);
                }
            }
        }

        let rows_changed = update.rows.values().any(|mv| mv.before.is_empty() != mv.after.is_empty());
        for num in &nums {
            if !rows_changed && !changed_columns.contains(num) {
                continue;
            }
            let Some(idx) = ds.column_index(num) else { continue };
            let mut values = Vec::new();
            for (_, cells) in ds.rows() {
                if let Some(x) = cells[idx].as_number() {
                    values.push(x);
                }
            }
            let stats = ColumnStats::from_values(num, &values);
            if self.stats.get(num) == Some(&stats) {
                continue;
            }
            report.stats_changed.push(num.clone());
            let codes = self.cells.entry(num.clone()).or_default();
            for (row, cells) in ds.rows() {
                let CellValue::Number(x) = cells[idx] else { continue };
                if update.rows.contains_key(&row) {
                    continue;
                }
                let now = stats.is_outlier(x, config.outlier_k);
                let was = codes.get(&row) == Some(&ErrorCode::Outlier);
                if now == was {
                    continue;
                }
                if now {
                    codes.insert(row, ErrorCode::Outlier);
                } else {
                    codes.remove(&row);
                }
                let delta = if now { 1 } else { -1 };
                for class in groups.classes_of_cells(cells) {
                    tally.add_class(groups, &class, num, &ErrorCode::Outlier, delta);
                }
            }
            self.stats.insert(num.clone(), stats);
        }

        for (row, mv) in &update.rows {
            let Some(cells) = ds.row(*row) else { continue };
            for num in &nums {
                let (Some(idx), Some(stats)) = (ds.column_index(num), self.stats.get(num)) else {
                    continue;
                };
                let Some(code) = cell_code(&cells[idx], stats, config.outlier_k) else {
                    continue;
                };
                for class in &mv.after {
                    tally.add_class(groups, class, num, &code, 1);
                }
                self.cells.entry(num.clone()).or_default().insert(*row, code);
            }
        }

        let seeds = update.seeds();
        for class in graph.affected_classes(&seeds, mode) {
            let rows = groups.class_rows(&class);
            for num in groups.numeric_columns_for(&class.column) {
                let key = GroupKey::new(&class.column, &class.value, num);
                let (incomplete, hits) = match rows {
                    Some(row_ids) => {
                        report.redetected_groups += 1;
                        let g = Group {
                            cat_column: &class.column,
                            cat_value: &class.value,
                            num_column: num,
                            row_ids,
                        };
                        (g.is_undersized(config.min_group_size), custom_hits(ds, &g, detectors))
                    }
                    None => (false, CustomHits::new()),
                };
                let was = self.incomplete.contains(&key);
                if incomplete != was {
                    if incomplete {
                        self.incomplete.insert(key.clone());
                    } else {
                        self.incomplete.remove(&key);
                    }
                    tally.add(&key, &ErrorCode::IncompleteGroup, if incomplete { 1 } else { -1 });
                }
                let old = self.custom.get(&key);
                if old.unwrap_or(&CustomHits::new()) != &hits {
                    if let Some(old) = old {
                        for (code, rows) in old {
                            tally.add(&key, code, -(rows.len() as i64));
                        }
                    }
                    for (code, rows) in &hits {
                        tally.add(&key, code, rows.len() as i64);
                    }
                    if hits.is_empty() {
                        self.custom.remove(&key);
                    } else {
                        self.custom.insert(key, hits);
                    }
                }
            }
        }

        for class in &seeds {
            for num in groups.numeric_columns_for(&class.column) {
                report.refresh.insert(GroupKey::new(&class.column, &class.value, num));
            }
        }
        report.touched_groups = tally.before.keys().cloned().collect();
        report.touched_groups.extend(report.refresh.iter().cloned());
        let mut changes: Vec<GroupDiff> = tally
            .before
            .into_iter()
            .filter_map(|(group, before)| {
                let after = self.counts.get(&group).cloned().unwrap_or_default();
                (before != after).then_some(GroupDiff { group, before, after })
            })
            .collect();
        changes.sort_by(|a, b| a.group.cmp(&b.group));
        report.refresh.extend(changes.iter().map(|d| d.group.clone()));
        report.changes = changes;
        report
    }
}
