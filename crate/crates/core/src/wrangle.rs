//! Repair actions, custom wrangler rules and delta planning.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::delta::{CellChange, RowSnapshot, SnapshotDelta};
use crate::detect::{group_mean, CodeCounts, ErrorCode, ErrorStore};
use crate::error::{Error, Result};
use crate::expr::{EvalContext, ValueExpr};
use crate::groups::{GroupKey, Groups};
use crate::sampler::GroupPayload;
use crate::store::{Dataset, RowId};
use crate::value::{parse_strict_number, CellValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    DeleteRows,
    ImputeGroupMean,
    ConvertType,
    Custom,
}

impl ActionKind {
    /// Tie-break order among equally costly suggestions.
    pub fn priority(self) -> u8 {
        match self {
            ActionKind::ImputeGroupMean => 0,
            ActionKind::ConvertType => 1,
            ActionKind::Custom => 2,
            ActionKind::DeleteRows => 3,
        }
    }
}

/// Which rows of the target group an action touches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Rows of the group carrying this code; for `incomplete_group`, the
    /// whole group.
    Errors(ErrorCode),
    Rows(BTreeSet<RowId>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionParams {
    /// Code the custom wrangler is registered for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<WranglerRule>,
}

/// A parameterized repair. Its JSON form is the unit of the action log and
/// of generated scripts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepairAction {
    pub kind: ActionKind,
    pub target: GroupKey,
    pub scope: Scope,
    #[serde(default)]
    pub params: ActionParams,
}

impl RepairAction {
    pub fn new(kind: ActionKind, target: GroupKey, scope: Scope) -> RepairAction {
        RepairAction {
            kind,
            target,
            scope,
            params: ActionParams::default(),
        }
    }

    pub fn custom(target: GroupKey, scope: Scope, code: ErrorCode, rule: WranglerRule) -> RepairAction {
        RepairAction {
            kind: ActionKind::Custom,
            target,
            scope,
            params: ActionParams {
                code: Some(code),
                rule: Some(rule),
            },
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("actions serialize")
    }
}

/// A per-cell rule attached to an error code.
#[derive(Debug, Clone, PartialEq)]
pub enum WranglerRule {
    SetConstant(CellValue),
    Scale(f64),
    SetGroupMean,
    DeleteRow,
    /// Replace with an expression; cells where it is not applicable stay.
    Set(ValueExpr),
}

impl Eq for WranglerRule {}

impl std::hash::Hash for WranglerRule {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.to_string().hash(state);
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for WranglerRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WranglerRule::SetConstant(CellValue::Null) => f.write_str("set_constant(null)"),
            WranglerRule::SetConstant(CellValue::Number(x)) => write!(f, "set_constant({x})"),
            WranglerRule::SetConstant(CellValue::Text(s)) => write!(f, "set_constant({})", quote(s)),
            WranglerRule::Scale(x) => write!(f, "scale({x})"),
            WranglerRule::SetGroupMean => f.write_str("set_group_mean"),
            WranglerRule::DeleteRow => f.write_str("delete_row"),
            WranglerRule::Set(e) => write!(f, "set({})", e.source()),
        }
    }
}

fn rule_err(offset: usize, message: impl Into<String>) -> Error {
    Error::ExpressionParse {
        offset,
        message: message.into(),
    }
}

fn parse_literal(arg: &str, base: usize) -> Result<CellValue> {
    let t = arg.trim();
    let at = base + (arg.len() - arg.trim_start().len());
    if t == "null" {
        return Ok(CellValue::Null);
    }
    if let Some(x) = parse_strict_number(t) {
        return Ok(CellValue::Number(x));
    }
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        let inner = &t[1..t.len() - 1];
        let mut out = String::new();
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(o) => out.push(o),
                    None => return Err(rule_err(at, "dangling escape")),
                },
                '"' => return Err(rule_err(at, "unescaped quote in string")),
                c => out.push(c),
            }
        }
        return Ok(CellValue::Text(out));
    }
    Err(rule_err(at, format!("expected a number, string or null, found `{t}`")))
}

impl FromStr for WranglerRule {
    type Err = Error;

    fn from_str(src: &str) -> Result<Self> {
        let lead = src.len() - src.trim_start().len();
        let s = src.trim();
        match s {
            "set_group_mean" => return Ok(WranglerRule::SetGroupMean),
            "delete_row" => return Ok(WranglerRule::DeleteRow),
            _ => {}
        }
        let Some(open) = s.find('(') else {
            return Err(rule_err(lead, format!("unknown rule `{s}`")));
        };
        if !s.ends_with(')') {
            return Err(rule_err(lead + s.len(), "expected `)`"));
        }
        let name = s[..open].trim_end();
        let arg = &s[open + 1..s.len() - 1];
        let base = lead + open + 1;
        match name {
            "set_constant" => Ok(WranglerRule::SetConstant(parse_literal(arg, base)?)),
            "scale" => match parse_literal(arg, base)? {
                CellValue::Number(x) => Ok(WranglerRule::Scale(x)),
                _ => Err(rule_err(base, "scale needs a number")),
            },
            "set" => Ok(WranglerRule::Set(ValueExpr::parse_at(arg, base)?)),
            other => Err(rule_err(lead, format!("unknown rule `{other}`"))),
        }
    }
}

impl Serialize for WranglerRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WranglerRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomWrangler {
    pub code: ErrorCode,
    pub rule: WranglerRule,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Wranglers {
    entries: Vec<CustomWrangler>,
}

impl Wranglers {
    /// `known` tells whether a code exists.
    pub fn register(&mut self, w: CustomWrangler, known: impl Fn(&ErrorCode) -> bool) -> Result<()> {
        if !known(&w.code) {
            return Err(Error::UnknownErrorCode(w.code.to_string()));
        }
        if self.entries.contains(&w) {
            return Err(Error::InvalidAction(format!(
                "wrangler `{}` already registered for `{}`",
                w.rule, w.code
            )));
        }
        self.entries.push(w);
        Ok(())
    }

    pub fn for_code<'a>(&'a self, code: &'a ErrorCode) -> impl Iterator<Item = &'a CustomWrangler> {
        self.entries.iter().filter(move |w| &w.code == code)
    }

    pub fn contains(&self, code: &ErrorCode, rule: &WranglerRule) -> bool {
        self.entries.iter().any(|w| &w.code == code && &w.rule == rule)
    }

    pub fn all(&self) -> &[CustomWrangler] {
        &self.entries
    }
}

/// Built-in action kinds applicable to an error code.
pub fn applicable_kinds(code: &ErrorCode) -> &'static [ActionKind] {
    match code {
        ErrorCode::Missing => &[ActionKind::ImputeGroupMean, ActionKind::DeleteRows],
        ErrorCode::Outlier => &[ActionKind::DeleteRows, ActionKind::ImputeGroupMean],
        ErrorCode::TypeMismatch => &[ActionKind::ConvertType, ActionKind::DeleteRows],
        ErrorCode::IncompleteGroup | ErrorCode::Custom(_) => &[ActionKind::DeleteRows],
    }
}

/// Every candidate action for `(group, code)`, built-ins then custom
/// wranglers in registration order.
pub fn candidate_actions(key: &GroupKey, code: &ErrorCode, wranglers: &Wranglers) -> Vec<RepairAction> {
    let scope = Scope::Errors(code.clone());
    let mut out: Vec<RepairAction> = applicable_kinds(code)
        .iter()
        .map(|k| RepairAction::new(*k, key.clone(), scope.clone()))
        .collect();
    if *code != ErrorCode::IncompleteGroup {
        out.extend(
            wranglers
                .for_code(code)
                .map(|w| RepairAction::custom(key.clone(), scope.clone(), w.code.clone(), w.rule.clone())),
        );
    }
    out
}

/// Lenient numeric conversion: strips `$ € £` and commas, then applies a
/// `k`/`K` (×1e3) or `m`/`M` (×1e6) suffix, then parses strictly.
pub fn convert_text(raw: &str) -> Option<f64> {
    let cleaned: String = raw
        .trim()
        .chars()
        .filter(|c| !matches!(c, '$' | '€' | '£' | ','))
        .collect();
    let cleaned = cleaned.trim();
    let (body, factor) = match cleaned.chars().last()? {
        'k' | 'K' => (&cleaned[..cleaned.len() - 1], 1e3),
        'm' | 'M' => (&cleaned[..cleaned.len() - 1], 1e6),
        _ => (cleaned, 1.0),
    };
    let x = parse_strict_number(body)? * factor;
    x.is_finite().then_some(x + 0.0)
}

/// A candidate ranked by simulated side effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSuggestion {
    pub action: RepairAction,
    /// Drop in the triggering code's count in the target group. Negative if
    /// the repair creates more of them.
    pub predicted_resolved: i64,
    /// Records present after the simulated apply that were absent before.
    pub predicted_new_errors: usize,
    pub rank: usize,
}

/// Sorts by new errors, then resolved (descending), then kind priority,
/// then canonical JSON, and assigns ranks.
pub fn rank_suggestions(mut list: Vec<RepairSuggestion>) -> Vec<RepairSuggestion> {
    list.sort_by_cached_key(|s| {
        (
            s.predicted_new_errors,
            std::cmp::Reverse(s.predicted_resolved),
            s.action.kind.priority(),
            s.action.canonical_json(),
        )
    });
    for (i, s) in list.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    list
}

/// Output of a commit-free preview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResult {
    pub delta: SnapshotDelta,
    /// `None` when the action removes the target group entirely.
    pub group_payload_after: Option<GroupPayload>,
    pub error_summary_after: BTreeMap<GroupKey, CodeCounts>,
}

fn resolve_rows(groups: &Groups, store: &ErrorStore, action: &RepairAction) -> Result<BTreeSet<RowId>> {
    let group = groups
        .get(&action.target)
        .ok_or_else(|| Error::UnknownGroup(action.target.to_string()))?;
    match &action.scope {
        Scope::Errors(ErrorCode::IncompleteGroup) => {
            if store.count(&action.target, &ErrorCode::IncompleteGroup) == 0 {
                return Err(Error::NoSuchErrorInGroup {
                    group: action.target.to_string(),
                    code: ErrorCode::IncompleteGroup,
                });
            }
            Ok(group.row_ids.clone())
        }
        Scope::Errors(code) => {
            let rows: BTreeSet<RowId> = store
                .error_rows(groups, &action.target)
                .into_iter()
                .filter(|(_, codes)| codes.contains(code))
                .map(|(r, _)| r)
                .collect();
            if rows.is_empty() {
                return Err(Error::NoSuchErrorInGroup {
                    group: action.target.to_string(),
                    code: code.clone(),
                });
            }
            Ok(rows)
        }
        Scope::Rows(rows) => {
            if rows.is_empty() {
                return Err(Error::InvalidAction("empty row scope".into()));
            }
            if let Some(r) = rows.iter().find(|r| !group.row_ids.contains(r)) {
                return Err(Error::InvalidAction(format!(
                    "row {r} is not in group {}",
                    action.target
                )));
            }
            Ok(rows.clone())
        }
    }
}

fn validate(action: &RepairAction, wranglers: &Wranglers) -> Result<()> {
    match action.kind {
        ActionKind::Custom => {
            let (Some(code), Some(rule)) = (&action.params.code, &action.params.rule) else {
                return Err(Error::InvalidAction("custom action needs params.code and params.rule".into()));
            };
            if !wranglers.contains(code, rule) {
                return Err(Error::InvalidAction(format!(
                    "no wrangler `{rule}` registered for `{code}`"
                )));
            }
            if let Scope::Errors(c) = &action.scope {
                if c != code {
                    return Err(Error::InvalidAction(format!(
                        "wrangler for `{code}` cannot target `{c}` errors"
                    )));
                }
            }
        }
        kind => {
            if action.params != ActionParams::default() {
                return Err(Error::InvalidAction(format!("{kind:?} takes no params")));
            }
            if let Scope::Errors(code) = &action.scope {
                if !applicable_kinds(code).contains(&kind) {
                    return Err(Error::InvalidAction(format!(
                        "{} does not apply to `{code}` errors",
                        serde_json::to_string(&kind).unwrap_or_default()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Computes the delta an action would commit. `seq` is stamped on it.
pub fn plan(
    ds: &Dataset,
    groups: &Groups,
    store: &ErrorStore,
    wranglers: &Wranglers,
    action: &RepairAction,
    seq: u64,
) -> Result<SnapshotDelta> {
    validate(action, wranglers)?;
    let rows = resolve_rows(groups, store, action)?;
    let group = groups.get(&action.target).expect("resolved above");
    let column = &action.target.num_column;
    let idx = ds.column(column)?.position;
    let mut delta = SnapshotDelta::new(seq);

    let delete = |delta: &mut SnapshotDelta| {
        for r in &rows {
            let cells = ds.row(*r).expect("group rows are live").to_vec();
            delta.row_deletions.push(RowSnapshot { row: *r, cells });
        }
    };
    let set = |delta: &mut SnapshotDelta, r: RowId, after: CellValue| {
        let before = ds.cell(r, idx).clone();
        if before != after {
            delta.cell_changes.push(CellChange {
                row: r,
                column: column.clone(),
                before,
                after,
            });
        }
    };

    match action.kind {
        ActionKind::DeleteRows => delete(&mut delta),
        ActionKind::ImputeGroupMean => {
            let mean = group_mean(ds, group.row_ids, idx).ok_or_else(|| {
                Error::InapplicableAction(format!("{} has no parseable values", action.target))
            })?;
            for r in &rows {
                set(&mut delta, *r, CellValue::Number(mean + 0.0));
            }
        }
        ActionKind::ConvertType => {
            for r in &rows {
                if let CellValue::Text(s) = ds.cell(*r, idx) {
                    if let Some(x) = convert_text(s) {
                        set(&mut delta, *r, CellValue::Number(x));
                    }
                }
            }
        }
        ActionKind::Custom => {
            let rule = action.params.rule.as_ref().expect("validated");
            match rule {
                WranglerRule::DeleteRow => delete(&mut delta),
                WranglerRule::SetConstant(v) => {
                    for r in &rows {
                        set(&mut delta, *r, v.clone());
                    }
                }
                WranglerRule::Scale(f) => {
                    for r in &rows {
                        if let Some(x) = ds.cell(*r, idx).as_number() {
                            if let Some(v) = CellValue::number(x * f) {
                                set(&mut delta, *r, v);
                            }
                        }
                    }
                }
                WranglerRule::SetGroupMean => {
                    let mean = group_mean(ds, group.row_ids, idx).ok_or_else(|| {
                        Error::InapplicableAction(format!("{} has no parseable values", action.target))
                    })?;
                    for r in &rows {
                        set(&mut delta, *r, CellValue::Number(mean + 0.0));
                    }
                }
                WranglerRule::Set(expr) => {
                    let mean = group_mean(ds, group.row_ids, idx);
                    for r in &rows {
                        let ctx = EvalContext {
                            value: ds.cell(*r, idx),
                            group_size: group.cardinality(),
                            group_mean: mean,
                        };
                        if let Some(v) = expr.eval(&ctx) {
                            set(&mut delta, *r, v);
                        }
                    }
                }
            }
        }
    }
    if delta.is_empty() {
        return Err(Error::InapplicableAction(format!(
            "{} changes nothing in {}",
            serde_json::to_string(&action.kind).unwrap_or_default(),
            action.target
        )));
    }
    Ok(delta)
}
