//! Rendering the effective history as a replayable script.
//!
//! Two targets: a JSON action list (replayable by [`replay_json`]) and a
//! standalone Python 3 script using only the standard library. Both freeze
//! the concrete cell values of every step, so replay never re-runs
//! detection or recomputes means.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delta::{CellChange, RowSnapshot, SnapshotDelta};
use crate::error::{Error, Result};
use crate::history::ActionLogEntry;
use crate::store::{ingest_csv, ColumnMeta, Dataset, IngestOptions, RowId};
use crate::value::{CellValue, ColumnKind};
use crate::wrangle::RepairAction;

pub const JSON_FORMAT: &str = "gridwrangle.actions/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderTarget {
    Json,
    Python,
}

impl FromStr for RenderTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(RenderTarget::Json),
            "python" => Ok(RenderTarget::Python),
            other => Err(Error::UnsupportedTarget(other.to_string())),
        }
    }
}

/// What a script needs to know about the session.
#[derive(Debug, Clone, Copy)]
pub struct ScriptSource<'a> {
    pub source_sha256: &'a str,
    pub delimiter: u8,
    pub columns: &'a [ColumnMeta],
    pub entries: &'a [ActionLogEntry],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCell {
    pub row: RowId,
    pub column: String,
    pub value: CellValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub seq: u64,
    pub action: RepairAction,
    #[serde(default)]
    pub set_cells: Vec<SetCell>,
    #[serde(default)]
    pub drop_rows: Vec<RowId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonScript {
    pub format: String,
    pub source_sha256: String,
    pub delimiter: String,
    pub columns: Vec<ScriptColumn>,
    pub steps: Vec<ScriptStep>,
}

fn steps(entries: &[ActionLogEntry]) -> Vec<ScriptStep> {
    entries
        .iter()
        .map(|e| ScriptStep {
            seq: e.seq,
            action: e.action.clone(),
            set_cells: e
                .delta
                .cell_changes
                .iter()
                .map(|c| SetCell {
                    row: c.row,
                    column: c.column.clone(),
                    value: c.after.clone(),
                })
                .collect(),
            drop_rows: e.delta.row_deletions.iter().map(|r| r.row).collect(),
        })
        .collect()
}

pub fn to_json_script(src: &ScriptSource<'_>) -> JsonScript {
    JsonScript {
        format: JSON_FORMAT.to_string(),
        source_sha256: src.source_sha256.to_string(),
        delimiter: (src.delimiter as char).to_string(),
        columns: src
            .columns
            .iter()
            .map(|c| ScriptColumn {
                name: c.name.clone(),
                kind: c.kind,
            })
            .collect(),
        steps: steps(src.entries),
    }
}

pub fn render(target: RenderTarget, src: &ScriptSource<'_>) -> String {
    match target {
        RenderTarget::Json => {
            let mut s = serde_json::to_string_pretty(&to_json_script(src)).expect("scripts serialize");
            s.push('\n');
            s
        }
        RenderTarget::Python => render_python(src),
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidScript(msg.into())
}

/// Runs a JSON script against the original file bytes.
pub fn replay_json(script: &str, original: &[u8]) -> Result<Dataset> {
    let script: JsonScript = serde_json::from_str(script).map_err(|e| bad(e.to_string()))?;
    if script.format != JSON_FORMAT {
        return Err(bad(format!("unknown format `{}`", script.format)));
    }
    if sha256_hex(original) != script.source_sha256 {
        return Err(bad("source file hash does not match"));
    }
    let delimiter = match script.delimiter.as_bytes() {
        [b] => *b,
        _ => return Err(bad("delimiter must be one byte")),
    };
    let mut ds = ingest_csv(
        original,
        &IngestOptions {
            delimiter,
            dataset_id: None,
        },
    )?;
    let schema: Vec<ScriptColumn> = ds
        .columns()
        .iter()
        .map(|c| ScriptColumn {
            name: c.name.clone(),
            kind: c.kind,
        })
        .collect();
    if schema != script.columns {
        return Err(bad("column schema does not match"));
    }
    for step in &script.steps {
        let mut delta = SnapshotDelta::new(step.seq);
        for s in &step.set_cells {
            let before = ds
                .get_cell(s.row, &s.column)
                .map_err(|e| bad(format!("step {}: {e}", step.seq)))?
                .clone();
            let after = match &s.value {
                CellValue::Number(x) => CellValue::number(*x).ok_or_else(|| bad("non-finite value"))?,
                v => v.clone(),
            };
            delta.cell_changes.push(CellChange {
                row: s.row,
                column: s.column.clone(),
                before,
                after,
            });
        }
        for r in &step.drop_rows {
            let cells = ds
                .row(*r)
                .ok_or_else(|| bad(format!("step {}: row {r} is not live", step.seq)))?
                .to_vec();
            delta.row_deletions.push(RowSnapshot { row: *r, cells });
        }
        ds.apply_delta(&delta)
            .map_err(|e| bad(format!("step {}: {e}", step.seq)))?;
    }
    Ok(ds)
}

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn py_value(v: &CellValue) -> String {
    match v {
        CellValue::Null => "None".into(),
        CellValue::Number(x) => format!("{x:?}"),
        CellValue::Text(s) => py_str(s),
    }
}

const PY_RUNTIME: &str = r#"
_NUM = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
# Unicode White_Space, matching the engine's trim
_WS = "\t\n\x0b\x0c\r \x85\xa0\u1680\u2000\u2001\u2002\u2003\u2004\u2005\u2006\u2007\u2008\u2009\u200a\u2028\u2029\u202f\u205f\u3000"


def parse_cell(field, numeric):
    if field == "":
        return None
    if numeric:
        s = field.strip(_WS)
        if _NUM.fullmatch(s):
            x = float(s)
            if math.isfinite(x):
                return x + 0.0
    return field


def format_number(x):
    s = format(Decimal(repr(x)), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return "0" if s in ("", "-0") else s


def quote(field, quote_empty):
    if (quote_empty and field == "") or any(c in field for c in ',"\r\n'):
        return '"' + field.replace('"', '""') + '"'
    return field


def load(path):
    with open(path, "rb") as f:
        raw = f.read()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != SOURCE_SHA256:
        raise SystemExit("source hash mismatch: expected %s, got %s" % (SOURCE_SHA256, digest))
    text = raw.decode("utf-8-sig")
    records = [r for r in csv.reader(io.StringIO(text, newline=""), delimiter=DELIMITER) if r]
    header, body = records[0], records[1:]
    if header != COLUMNS:
        raise SystemExit("unexpected header %r" % (header,))
    numeric = [c in NUMERIC for c in COLUMNS]
    rows = {}
    for i, rec in enumerate(body):
        if len(rec) != len(COLUMNS):
            raise SystemExit("ragged row %d" % (i + 1))
        rows[i + 1] = [parse_cell(f, n) for f, n in zip(rec, numeric)]
    return rows


def export(rows, path):
    lines = ["_row_id" + "".join("," + quote(c, False) for c in COLUMNS)]
    for rid in sorted(rows):
        out = [str(rid)]
        for v in rows[rid]:
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(format_number(v))
            else:
                out.append(quote(v, True))
        lines.append(",".join(out))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def main(src, dst):
    rows = load(src)
    col = {c: i for i, c in enumerate(COLUMNS)}
    for step in STEPS:
        for rid, name, value in step["set"]:
            rows[rid][col[name]] = value
        for rid in step["drop"]:
            del rows[rid]
    export(rows, dst)


if __name__ == "__main__":
    if len(sys.argv) != 3:
        raise SystemExit("usage: %s INPUT.csv OUTPUT.csv" % sys.argv[0])
    main(sys.argv[1], sys.argv[2])
"#;

/// A self-contained Python 3 script: `python3 script.py IN.csv OUT.csv`
/// writes the canonical export of the replayed dataset.
pub fn render_python(src: &ScriptSource<'_>) -> String {
    let mut out = String::new();
    out.push_str("#!/usr/bin/env python3\n");
    out.push_str("# Replays a gridwrangle session against its original CSV file.\n");
    let _ = writeln!(out, "# source sha256: {}", src.source_sha256);
    out.push_str("import csv\nimport hashlib\nimport io\nimport math\nimport re\nimport sys\n");
    out.push_str("from decimal import Decimal\n\n");
    let _ = writeln!(out, "SOURCE_SHA256 = {}", py_str(src.source_sha256));
    let _ = writeln!(out, "DELIMITER = {}", py_str(&(src.delimiter as char).to_string()));
    let names: Vec<String> = src.columns.iter().map(|c| py_str(&c.name)).collect();
    let _ = writeln!(out, "COLUMNS = [{}]", names.join(", "));
    let numeric: Vec<String> = src
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Numeric)
        .map(|c| py_str(&c.name))
        .collect();
    if numeric.is_empty() {
        out.push_str("NUMERIC = set()\n\n");
    } else {
        let _ = writeln!(out, "NUMERIC = {{{}}}\n", numeric.join(", "));
    }
    out.push_str("STEPS = [\n");
    for step in steps(src.entries) {
        let _ = writeln!(out, "    # {}: {}", step.seq, step.action.canonical_json());
        out.push_str("    {\"set\": [");
        for (i, s) in step.set_cells.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "({}, {}, {})", s.row, py_str(&s.column), py_value(&s.value));
        }
        out.push_str("], \"drop\": [");
        let drops: Vec<String> = step.drop_rows.iter().map(|r| r.to_string()).collect();
        out.push_str(&drops.join(", "));
        out.push_str("]},\n");
    }
    out.push_str("]\n");
    out.push_str(PY_RUNTIME);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn targets() {
        assert_eq!("json".parse::<RenderTarget>(), Ok(RenderTarget::Json));
        assert_eq!("python".parse::<RenderTarget>(), Ok(RenderTarget::Python));
        assert_eq!(
            "r".parse::<RenderTarget>(),
            Err(Error::UnsupportedTarget("r".into()))
        );
    }

    #[test]
    fn python_literals() {
        assert_eq!(py_value(&CellValue::Number(600.0)), "600.0");
        assert_eq!(py_value(&CellValue::Number(1e300)), "1e300");
        assert_eq!(py_value(&CellValue::Null), "None");
        assert_eq!(py_value(&CellValue::text("a\"b\n")), "\"a\\\"b\\n\"");
    }
}
