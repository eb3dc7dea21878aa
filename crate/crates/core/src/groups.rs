//! Group generation, the group overlap graph and incremental maintenance of
//! both under committed deltas.
//!
//! A group `{num | cat = value}` contains every live row whose `cat` cell has
//! label `value`; membership never depends on the numeric column. All groups
//! that share `(cat, value)` therefore share one row set, called a *class*
//! here, and the overlap graph is stored at class granularity. Group-level
//! edges are derived: two groups overlap iff their classes overlap, or they
//! are the same class projected onto different numeric columns.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::delta::SnapshotDelta;
use crate::error::{Error, Result};
use crate::store::{Dataset, RowId};
use crate::value::{CellValue, ColumnKind};

/// `{num_column | cat_column = cat_value}`. Orders by
/// `(cat_column, num_column, cat_value)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupKey {
    pub cat_column: String,
    pub num_column: String,
    pub cat_value: String,
}

impl GroupKey {
    pub fn new(
        cat_column: impl Into<String>,
        cat_value: impl Into<String>,
        num_column: impl Into<String>,
    ) -> Self {
        GroupKey {
            cat_column: cat_column.into(),
            num_column: num_column.into(),
            cat_value: cat_value.into(),
        }
    }

    pub fn class(&self) -> ClassKey {
        ClassKey {
            column: self.cat_column.clone(),
            value: self.cat_value.clone(),
        }
    }
}

/// Canonical form `num_column|cat_column=cat_value`.
impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}={}", self.num_column, self.cat_column, self.cat_value)
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    /// Splits at the first `|` and the first `=` after it, so column names
    /// may not contain those characters; values may.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownGroup(s.to_string());
        let (num, rest) = s.split_once('|').ok_or_else(bad)?;
        let (cat, value) = rest.split_once('=').ok_or_else(bad)?;
        if num.is_empty() || cat.is_empty() {
            return Err(bad());
        }
        Ok(GroupKey::new(cat, value, num))
    }
}

impl Serialize for GroupKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rows sharing one categorical label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassKey {
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    /// `(categorical, numeric)` column pairs to project. `None` means all.
    #[serde(default)]
    pub pairs: Option<Vec<(String, String)>>,
    #[serde(default = "default_min_group_size")]
    pub min_group_size: usize,
}

fn default_min_group_size() -> usize {
    2
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            pairs: None,
            min_group_size: default_min_group_size(),
        }
    }
}

/// A borrowed view of one group.
#[derive(Debug, Clone, Copy)]
pub struct Group<'a> {
    pub cat_column: &'a str,
    pub cat_value: &'a str,
    pub num_column: &'a str,
    pub row_ids: &'a BTreeSet<RowId>,
}

impl Group<'_> {
    pub fn key(&self) -> GroupKey {
        GroupKey::new(self.cat_column, self.cat_value, self.num_column)
    }

    pub fn cardinality(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_undersized(&self, min_group_size: usize) -> bool {
        self.row_ids.len() < min_group_size
    }
}

/// Every group of a dataset version, stored as classes plus the
/// categorical→numeric projection map.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    nums_by_cat: BTreeMap<String, Vec<String>>,
    cat_positions: BTreeMap<String, usize>,
    classes: BTreeMap<String, BTreeMap<String, BTreeSet<RowId>>>,
}

pub fn generate_groups(ds: &Dataset, config: &GroupConfig) -> Result<Groups> {
    let cats: Vec<_> = ds.columns_of_kind(ColumnKind::Categorical).collect();
    let nums: Vec<_> = ds.columns_of_kind(ColumnKind::Numeric).collect();
    if cats.is_empty() {
        return Err(Error::NoCategoricalColumns);
    }
    if nums.is_empty() {
        return Err(Error::NoNumericColumns);
    }

    let mut nums_by_cat: BTreeMap<String, Vec<String>> = BTreeMap::new();
    match &config.pairs {
        None => {
            for c in &cats {
                nums_by_cat.insert(
                    c.name.clone(),
                    nums.iter().map(|n| n.name.clone()).collect(),
                );
            }
        }
        Some(pairs) => {
            if pairs.is_empty() {
                return Err(Error::InvalidGroupConfig("no column pairs".into()));
            }
            for (cat, num) in pairs {
                let kind_of = |name: &str| ds.column(name).map(|c| c.kind);
                if kind_of(cat)? != ColumnKind::Categorical {
                    return Err(Error::InvalidGroupConfig(format!("`{cat}` is not categorical")));
                }
                if kind_of(num)? != ColumnKind::Numeric {
                    return Err(Error::InvalidGroupConfig(format!("`{num}` is not numeric")));
                }
                nums_by_cat.entry(cat.clone()).or_default().push(num.clone());
            }
        }
    }
    for list in nums_by_cat.values_mut() {
        list.sort();
        list.dedup();
    }
    let cat_positions: BTreeMap<String, usize> = nums_by_cat
        .keys()
        .map(|c| (c.clone(), ds.column_index(c).expect("validated")))
        .collect();

    let mut classes: BTreeMap<String, BTreeMap<String, BTreeSet<RowId>>> = BTreeMap::new();
    for (cat, &pos) in &cat_positions {
        let mut by_value: HashMap<String, BTreeSet<RowId>> = HashMap::new();
        for (id, cells) in ds.rows() {
            let label = cells[pos].category_label();
            by_value.entry(label).or_default().insert(id);
        }
        classes.insert(cat.clone(), by_value.into_iter().collect());
    }

    Ok(Groups {
        nums_by_cat,
        cat_positions,
        classes,
    })
}

impl Groups {
    /// Categorical columns that take part in at least one projection.
    pub fn categorical_columns(&self) -> impl Iterator<Item = &str> {
        self.nums_by_cat.keys().map(String::as_str)
    }

    pub fn numeric_columns_for(&self, cat: &str) -> &[String] {
        self.nums_by_cat.get(cat).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Numeric columns with at least one projection, sorted.
    pub fn numeric_columns(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.nums_by_cat.values().flatten().map(String::as_str).collect();
        set.into_iter().collect()
    }

    /// Projected `(cat, num)` pairs in order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.nums_by_cat
            .iter()
            .flat_map(|(c, ns)| ns.iter().map(move |n| (c.as_str(), n.as_str())))
    }

    /// Categorical columns projected onto `num`.
    pub fn categorical_columns_for(&self, num: &str) -> impl Iterator<Item = (&str, usize)> + '_ {
        let num = num.to_string();
        self.nums_by_cat
            .iter()
            .filter(move |(_, ns)| ns.contains(&num))
            .map(|(c, _)| (c.as_str(), self.cat_positions[c]))
    }

    pub fn cat_position(&self, cat: &str) -> Option<usize> {
        self.cat_positions.get(cat).copied()
    }

    pub fn has_pair(&self, cat: &str, num: &str) -> bool {
        self.numeric_columns_for(cat).iter().any(|n| n == num)
    }

    /// All groups, ordered by [`GroupKey`].
    pub fn iter(&self) -> impl Iterator<Item = Group<'_>> {
        self.nums_by_cat.iter().flat_map(move |(cat, nums)| {
            let by_value = &self.classes[cat];
            nums.iter().flat_map(move |num| {
                by_value.iter().map(move |(value, rows)| Group {
                    cat_column: cat.as_str(),
                    cat_value: value.as_str(),
                    num_column: num.as_str(),
                    row_ids: rows,
                })
            })
        })
    }

    /// Groups of one `(cat, num)` chart, ordered by value.
    pub fn chart(&self, cat: &str, num: &str) -> Option<impl Iterator<Item = Group<'_>>> {
        let (cat, by_value) = self.classes.get_key_value(cat)?;
        let num = self.nums_by_cat[cat].iter().find(|n| *n == num)?;
        Some(by_value.iter().map(move |(value, rows)| Group {
            cat_column: cat.as_str(),
                    cat_value: value.as_str(),
                    num_column: num.as_str(),
            row_ids: rows,
        }))
    }

    pub fn get(&self, key: &GroupKey) -> Option<Group<'_>> {
        let (cat, by_value) = self.classes.get_key_value(&key.cat_column)?;
        let num = self.nums_by_cat[cat].iter().find(|n| **n == key.num_column)?;
        let (value, rows) = by_value.get_key_value(&key.cat_value)?;
        Some(Group {
            cat_column: cat.as_str(),
                    cat_value: value.as_str(),
                    num_column: num.as_str(),
            row_ids: rows,
        })
    }

    pub fn contains(&self, key: &GroupKey) -> bool {
        self.get(key).is_some()
    }

    pub fn len(&self) -> usize {
        self.nums_by_cat
            .iter()
            .map(|(c, ns)| ns.len() * self.classes[c].len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_rows(&self, class: &ClassKey) -> Option<&BTreeSet<RowId>> {
        self.classes.get(&class.column)?.get(&class.value)
    }

    pub fn classes(&self) -> impl Iterator<Item = (ClassKey, &BTreeSet<RowId>)> {
        self.classes.iter().flat_map(|(c, by_value)| {
            by_value.iter().map(move |(v, rows)| {
                (
                    ClassKey {
                        column: c.clone(),
                        value: v.clone(),
                    },
                    rows,
                )
            })
        })
    }

    /// Groups that project `class`, present or not.
    pub fn keys_for_class<'a>(&'a self, class: &'a ClassKey) -> impl Iterator<Item = GroupKey> + 'a {
        self.numeric_columns_for(&class.column)
            .iter()
            .map(move |n| GroupKey::new(&class.column, &class.value, n))
    }

    /// Classes of a live row, read from the dataset.
    pub fn classes_of_row(&self, ds: &Dataset, row: RowId) -> Vec<ClassKey> {
        match ds.row(row) {
            Some(cells) => self.classes_of_cells(cells),
            None => Vec::new(),
        }
    }

    pub(crate) fn classes_of_cells(&self, cells: &[CellValue]) -> Vec<ClassKey> {
        self.cat_positions
            .iter()
            .map(|(c, &pos)| ClassKey {
                column: c.clone(),
                value: cells[pos].category_label(),
            })
            .collect()
    }

    /// Classes currently containing `row`, found by lookup in the index.
    pub fn classes_containing(&self, row: RowId) -> Vec<ClassKey> {
        self.classes()
            .filter(|(_, rows)| rows.contains(&row))
            .map(|(k, _)| k)
            .collect()
    }

    fn insert(&mut self, class: &ClassKey, row: RowId) {
        self.classes
            .get_mut(&class.column)
            .expect("indexed column")
            .entry(class.value.clone())
            .or_default()
            .insert(row);
    }

    fn remove(&mut self, class: &ClassKey, row: RowId) {
        let by_value = self.classes.get_mut(&class.column).expect("indexed column");
        if let Some(rows) = by_value.get_mut(&class.value) {
            rows.remove(&row);
            if rows.is_empty() {
                by_value.remove(&class.value);
            }
        }
    }
}

/// Undirected overlap graph at class granularity with shared-row counts.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGraph {
    nums_by_cat: BTreeMap<String, Vec<String>>,
    nodes: BTreeSet<ClassKey>,
    adj: HashMap<ClassKey, HashMap<ClassKey, u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectedMode {
    #[default]
    OneHop,
    ConnectedComponents,
}

pub fn build_overlap_graph(groups: &Groups) -> OverlapGraph {
    let class_list: Vec<ClassKey> = groups.classes().map(|(k, _)| k).collect();
    let mut row_classes: HashMap<RowId, Vec<u32>> = HashMap::new();
    for (i, (_, rows)) in groups.classes().enumerate() {
        for r in rows {
            row_classes.entry(*r).or_default().push(i as u32);
        }
    }
    let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
    for list in row_classes.values() {
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                *counts.entry((a, b)).or_default() += 1;
            }
        }
    }
    let mut adj: HashMap<ClassKey, HashMap<ClassKey, u32>> = HashMap::new();
    for ((a, b), n) in counts {
        let (ka, kb) = (&class_list[a as usize], &class_list[b as usize]);
        adj.entry(ka.clone()).or_default().insert(kb.clone(), n);
        adj.entry(kb.clone()).or_default().insert(ka.clone(), n);
    }
    OverlapGraph {
        nums_by_cat: groups.nums_by_cat.clone(),
        nodes: class_list.into_iter().collect(),
        adj,
    }
}

impl OverlapGraph {
    pub fn has_node(&self, class: &ClassKey) -> bool {
        self.nodes.contains(class)
    }

    /// Rows shared by two distinct classes.
    pub fn shared_rows(&self, a: &ClassKey, b: &ClassKey) -> u32 {
        self.adj
            .get(a)
            .and_then(|m| m.get(b))
            .copied()
            .unwrap_or(0)
    }

    pub fn has_edge(&self, a: &GroupKey, b: &GroupKey) -> bool {
        if a == b {
            return false;
        }
        let (ca, cb) = (a.class(), b.class());
        if ca == cb {
            // same rows projected onto two numeric columns
            return self.nodes.contains(&ca);
        }
        self.shared_rows(&ca, &cb) > 0
    }

    pub fn class_neighbors<'a>(&'a self, class: &ClassKey) -> impl Iterator<Item = &'a ClassKey> {
        self.adj.get(class).into_iter().flat_map(|m| m.keys())
    }

    fn expand<'a>(&'a self, class: &'a ClassKey) -> impl Iterator<Item = GroupKey> + 'a {
        self.nums_by_cat
            .get(&class.column)
            .into_iter()
            .flatten()
            .map(move |n| GroupKey::new(&class.column, &class.value, n))
    }

    pub fn neighbors(&self, key: &GroupKey) -> BTreeSet<GroupKey> {
        let class = key.class();
        if !self.nodes.contains(&class) {
            return BTreeSet::new();
        }
        let mut out: BTreeSet<GroupKey> = self.expand(&class).filter(|k| k != key).collect();
        for n in self.class_neighbors(&class) {
            out.extend(self.expand(n));
        }
        out
    }

    /// Every group-level edge, each pair ordered `(smaller, larger)`.
    pub fn edges(&self) -> BTreeSet<(GroupKey, GroupKey)> {
        let mut out = BTreeSet::new();
        for class in &self.nodes {
            let own: Vec<GroupKey> = self.expand(class).collect();
            for (i, a) in own.iter().enumerate() {
                for b in &own[i + 1..] {
                    out.insert(ordered(a.clone(), b.clone()));
                }
            }
            for n in self.class_neighbors(class) {
                if n > class {
                    for a in &own {
                        for b in self.expand(n) {
                            out.insert(ordered(a.clone(), b));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Closure of `seeds` under the given mode, at class granularity.
    /// Seeds need not be present in the graph (vanished classes).
    pub fn affected_classes(
        &self,
        seeds: &BTreeSet<ClassKey>,
        mode: AffectedMode,
    ) -> BTreeSet<ClassKey> {
        let mut out = seeds.clone();
        match mode {
            AffectedMode::OneHop => {
                for s in seeds {
                    out.extend(self.class_neighbors(s).cloned());
                }
            }
            AffectedMode::ConnectedComponents => {
                let mut queue: VecDeque<ClassKey> = seeds.iter().cloned().collect();
                while let Some(c) = queue.pop_front() {
                    for n in self.class_neighbors(&c) {
                        if out.insert(n.clone()) {
                            queue.push_back(n.clone());
                        }
                    }
                }
            }
        }
        out
    }

    fn link(&mut self, classes: &[ClassKey], delta: i64) {
        for (i, a) in classes.iter().enumerate() {
            for b in &classes[i + 1..] {
                self.bump(a, b, delta);
                self.bump(b, a, delta);
            }
        }
    }

    fn bump(&mut self, a: &ClassKey, b: &ClassKey, delta: i64) {
        let m = self.adj.entry(a.clone()).or_default();
        let n = m.entry(b.clone()).or_default();
        let next = *n as i64 + delta;
        debug_assert!(next >= 0);
        if next <= 0 {
            m.remove(b);
            if m.is_empty() {
                self.adj.remove(a);
            }
        } else {
            *n = next as u32;
        }
    }
}

fn ordered(a: GroupKey, b: GroupKey) -> (GroupKey, GroupKey) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Groups containing a touched row plus their closure in the overlap graph.
pub fn affected_groups(
    graph: &OverlapGraph,
    groups: &Groups,
    touched_rows: &BTreeSet<RowId>,
    mode: AffectedMode,
) -> BTreeSet<GroupKey> {
    if touched_rows.is_empty() {
        return BTreeSet::new();
    }
    let seeds: BTreeSet<ClassKey> = groups
        .classes()
        .filter(|(_, rows)| touched_rows.iter().any(|r| rows.contains(r)))
        .map(|(k, _)| k)
        .collect();
    expand_classes(groups, &graph.affected_classes(&seeds, mode))
}

/// Existing groups projecting any of `classes`.
pub fn expand_classes(groups: &Groups, classes: &BTreeSet<ClassKey>) -> BTreeSet<GroupKey> {
    classes
        .iter()
        .filter(|c| groups.class_rows(c).is_some())
        .flat_map(|c| groups.keys_for_class(c).collect::<Vec<_>>())
        .collect()
}

/// Class memberships of one touched row around a delta. Empty lists mean
/// the row was not live.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowMove {
    pub before: Vec<ClassKey>,
    pub after: Vec<ClassKey>,
}

/// Classes a delta touched, before and after it was applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupUpdate {
    pub classes_before: BTreeSet<ClassKey>,
    pub classes_after: BTreeSet<ClassKey>,
    /// Rows whose class memberships changed.
    pub moved_rows: BTreeSet<RowId>,
    /// Every touched row.
    pub rows: BTreeMap<RowId, RowMove>,
}

impl GroupUpdate {
    pub fn seeds(&self) -> BTreeSet<ClassKey> {
        self.classes_before.union(&self.classes_after).cloned().collect()
    }
}

/// Updates memberships and overlap counts for the rows a delta touched.
/// `ds` must already have the delta applied.
pub fn update_groups_incremental(
    groups: &mut Groups,
    graph: &mut OverlapGraph,
    ds: &Dataset,
    delta: &SnapshotDelta,
) -> GroupUpdate {
    let mut before_cells: BTreeMap<RowId, Option<Vec<CellValue>>> = BTreeMap::new();
    for r in &delta.row_deletions {
        before_cells.insert(r.row, Some(r.cells.clone()));
    }
    for r in &delta.row_restorations {
        before_cells.insert(r.row, None);
    }
    for c in &delta.cell_changes {
        let entry = before_cells
            .entry(c.row)
            .or_insert_with(|| ds.row(c.row).map(<[CellValue]>::to_vec));
        if let (Some(cells), Some(col)) = (entry.as_mut(), ds.column_index(&c.column)) {
            cells[col] = c.before.clone();
        }
    }

    let mut update = GroupUpdate::default();
    for (row, before) in before_cells {
        let old = before
            .as_deref()
            .map(|cells| groups.classes_of_cells(cells))
            .unwrap_or_default();
        let new = ds
            .row(row)
            .map(|cells| groups.classes_of_cells(cells))
            .unwrap_or_default();
        if old != new {
            update.moved_rows.insert(row);
            for c in &old {
                groups.remove(c, row);
                if groups.class_rows(c).is_none() {
                    graph.nodes.remove(c);
                }
            }
            graph.link(&old, -1);
            for c in &new {
                groups.insert(c, row);
                graph.nodes.insert(c.clone());
            }
            graph.link(&new, 1);
        }
        update.classes_before.extend(old.iter().cloned());
        update.classes_after.extend(new.iter().cloned());
        update.rows.insert(
            row,
            RowMove {
                before: old,
                after: new,
            },
        );
    }
    update
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta::{CellChange, RowSnapshot};
    use crate::fixture::SALARIES_CSV;
    use crate::store::{ingest_csv, IngestOptions};

    fn fixture() -> (Dataset, Groups, OverlapGraph) {
        let ds = ingest_csv(SALARIES_CSV.as_bytes(), &IngestOptions::default()).unwrap();
        let groups = generate_groups(&ds, &GroupConfig::default()).unwrap();
        let graph = build_overlap_graph(&groups);
        (ds, groups, graph)
    }

    fn key(cat: &str, value: &str) -> GroupKey {
        GroupKey::new(cat, value, "Income")
    }

    fn rows(ids: &[u64]) -> BTreeSet<RowId> {
        ids.iter().map(|&i| RowId(i)).collect()
    }

    /// Brute-force membership: filter the dataset by label.
    fn filter_rows(ds: &Dataset, cat: &str, value: &str) -> BTreeSet<RowId> {
        let col = ds.column_index(cat).unwrap();
        ds.rows()
            .filter(|(_, cells)| cells[col].category_label() == value)
            .map(|(id, _)| id)
            .collect()
    }

    #[test]
    fn canonical_key_round_trip() {
        let k = key("Country", "Bhutan");
        assert_eq!(k.to_string(), "Income|Country=Bhutan");
        assert_eq!("Income|Country=Bhutan".parse::<GroupKey>().unwrap(), k);
        let odd: GroupKey = "Income|Note=a=b|c".parse().unwrap();
        assert_eq!(odd.cat_value, "a=b|c");
        assert!("Income".parse::<GroupKey>().is_err());
    }

    #[test]
    fn fixture_groups_match_brute_force() {
        let (ds, groups, _) = fixture();
        assert_eq!(groups.get(&key("Country", "Bhutan")).unwrap().row_ids, &rows(&[1, 2, 3, 4]));
        assert_eq!(groups.get(&key("Degree", "BS")).unwrap().row_ids, &rows(&[1, 2, 4, 5, 8]));
        for g in groups.iter() {
            assert_eq!(*g.row_ids, filter_rows(&ds, g.cat_column, g.cat_value));
        }
        assert_eq!(groups.len(), 5);
        let keys: Vec<String> = groups.iter().map(|g| g.key().to_string()).collect();
        assert_eq!(
            keys,
            [
                "Income|Country=Bhutan",
                "Income|Country=Chad",
                "Income|Degree=BS",
                "Income|Degree=MS",
                "Income|Degree=PhD"
            ]
        );
    }

    #[test]
    fn country_groups_partition_rows() {
        let (ds, groups, _) = fixture();
        let bhutan = groups.get(&key("Country", "Bhutan")).unwrap().row_ids;
        let chad = groups.get(&key("Country", "Chad")).unwrap().row_ids;
        assert!(bhutan.is_disjoint(chad));
        let union: BTreeSet<_> = bhutan.union(chad).copied().collect();
        assert_eq!(union, ds.row_ids().collect());
    }

    #[test]
    fn null_categories_form_a_group() {
        let ds = ingest_csv(b"c,v\na,1\n,2\n,3\n", &IngestOptions::default()).unwrap();
        let groups = generate_groups(&ds, &GroupConfig::default()).unwrap();
        let g = groups.get(&GroupKey::new("c", crate::value::NULL_CATEGORY, "v")).unwrap();
        assert_eq!(g.row_ids, &rows(&[2, 3]));
    }

    #[test]
    fn projection_errors() {
        let only_num = ingest_csv(b"a,b\n1,2\n", &IngestOptions::default()).unwrap();
        assert_eq!(
            generate_groups(&only_num, &GroupConfig::default()).unwrap_err(),
            Error::NoCategoricalColumns
        );
        let only_cat = ingest_csv(b"a,b\nx,y\n", &IngestOptions::default()).unwrap();
        assert_eq!(
            generate_groups(&only_cat, &GroupConfig::default()).unwrap_err(),
            Error::NoNumericColumns
        );
        let (ds, _, _) = fixture();
        let cfg = GroupConfig {
            pairs: Some(vec![("Income".into(), "Country".into())]),
            ..Default::default()
        };
        assert!(matches!(generate_groups(&ds, &cfg), Err(Error::InvalidGroupConfig(_))));
    }

    #[test]
    fn explicit_pairs_restrict_projection() {
        let (ds, _, _) = fixture();
        let cfg = GroupConfig {
            pairs: Some(vec![("Degree".into(), "Income".into())]),
            ..Default::default()
        };
        let groups = generate_groups(&ds, &cfg).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.get(&key("Country", "Chad")).is_none());
    }

    #[test]
    fn overlap_edges_match_intersections() {
        let (_, groups, graph) = fixture();
        assert!(graph.has_edge(&key("Country", "Bhutan"), &key("Degree", "BS")));
        assert_eq!(
            graph.shared_rows(&key("Country", "Bhutan").class(), &key("Degree", "BS").class()),
            3
        );
        assert!(!graph.has_edge(&key("Country", "Bhutan"), &key("Country", "Chad")));
        let all: Vec<_> = groups.iter().collect();
        let mut expected = BTreeSet::new();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if !a.row_ids.is_disjoint(b.row_ids) {
                    expected.insert(ordered(a.key(), b.key()));
                }
            }
        }
        assert_eq!(graph.edges(), expected);
    }

    #[test]
    fn single_group_has_no_edges() {
        let ds = ingest_csv(b"c,v\na,1\na,2\n", &IngestOptions::default()).unwrap();
        let groups = generate_groups(&ds, &GroupConfig::default()).unwrap();
        assert!(build_overlap_graph(&groups).edges().is_empty());
    }

    #[test]
    fn affected_groups_examples() {
        let (_, groups, graph) = fixture();
        let got = affected_groups(&graph, &groups, &rows(&[3]), AffectedMode::OneHop);
        let want: BTreeSet<_> = [
            key("Country", "Bhutan"),
            key("Degree", "MS"),
            key("Degree", "BS"),
            key("Country", "Chad"),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
        assert!(affected_groups(&graph, &groups, &BTreeSet::new(), AffectedMode::OneHop).is_empty());
        let everything = affected_groups(&graph, &groups, &rows(&[1, 2, 3, 4, 5, 6, 7, 8]), AffectedMode::OneHop);
        assert_eq!(everything.len(), groups.len());
        let comp = affected_groups(&graph, &groups, &rows(&[3]), AffectedMode::ConnectedComponents);
        assert_eq!(comp.len(), groups.len());
    }

    fn check_against_scratch(ds: &Dataset, groups: &Groups, graph: &OverlapGraph) {
        let fresh = generate_groups(ds, &GroupConfig::default()).unwrap();
        assert_eq!(*groups, fresh);
        assert_eq!(*graph, build_overlap_graph(&fresh));
    }

    #[test]
    fn deleting_row_seven_drops_phd() {
        let (mut ds, mut groups, mut graph) = fixture();
        let bhutan_before = groups.get(&key("Country", "Bhutan")).unwrap().row_ids.clone();
        let mut d = SnapshotDelta::new(1);
        d.row_deletions.push(RowSnapshot {
            row: RowId(7),
            cells: ds.row(RowId(7)).unwrap().to_vec(),
        });
        ds.apply_delta(&d).unwrap();
        let up = update_groups_incremental(&mut groups, &mut graph, &ds, &d);
        assert!(groups.get(&key("Degree", "PhD")).is_none());
        assert_eq!(groups.get(&key("Country", "Chad")).unwrap().row_ids, &rows(&[5, 6, 8]));
        assert_eq!(groups.get(&key("Country", "Bhutan")).unwrap().row_ids, &bhutan_before);
        assert!(up.classes_after.is_empty());
        assert_eq!(up.classes_before.len(), 2);
        check_against_scratch(&ds, &groups, &graph);
    }

    #[test]
    fn numeric_edit_leaves_membership_alone() {
        let (mut ds, mut groups, mut graph) = fixture();
        let (g0, e0) = (groups.clone(), graph.clone());
        let d = SnapshotDelta {
            seq: 1,
            cell_changes: vec![CellChange {
                row: RowId(3),
                column: "Income".into(),
                before: CellValue::Null,
                after: CellValue::Number(600.0),
            }],
            ..Default::default()
        };
        ds.apply_delta(&d).unwrap();
        let up = update_groups_incremental(&mut groups, &mut graph, &ds, &d);
        assert!(up.moved_rows.is_empty());
        assert_eq!(groups, g0);
        assert_eq!(graph, e0);
    }

    #[test]
    fn categorical_edit_moves_row() {
        let (mut ds, mut groups, mut graph) = fixture();
        let d = SnapshotDelta {
            seq: 1,
            cell_changes: vec![CellChange {
                row: RowId(2),
                column: "Country".into(),
                before: CellValue::text("Bhutan"),
                after: CellValue::text("Chad"),
            }],
            ..Default::default()
        };
        ds.apply_delta(&d).unwrap();
        update_groups_incremental(&mut groups, &mut graph, &ds, &d);
        assert_eq!(groups.get(&key("Country", "Bhutan")).unwrap().row_ids, &rows(&[1, 3, 4]));
        assert_eq!(groups.get(&key("Country", "Chad")).unwrap().row_ids, &rows(&[2, 5, 6, 7, 8]));
        check_against_scratch(&ds, &groups, &graph);

        ds.apply_delta(&d.inverse()).unwrap();
        update_groups_incremental(&mut groups, &mut graph, &ds, &d.inverse());
        check_against_scratch(&ds, &groups, &graph);
    }
}
