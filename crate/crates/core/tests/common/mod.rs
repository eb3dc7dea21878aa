//! Shared test support: a random table model with its own brute-force
//! detector, random repair generation and the Python replay runner.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;

use gridwrangle::detect::ErrorRecord;
use gridwrangle::value::NULL_CATEGORY;
use gridwrangle::wrangle::WranglerRule;
use gridwrangle::{
    ActionKind, CellValue, ColumnKind, CustomDetector, CustomWrangler, Dataset, Engine, ErrorCode, GroupKey,
    RepairAction, RowId, Scope,
};
use rand::seq::{IndexedRandom, IteratorRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum NumCell {
    Null,
    Text(String),
    Num(f64),
}

#[derive(Debug, Clone)]
pub enum Col {
    Cat(String, Vec<Option<String>>),
    Num(String, Vec<NumCell>),
}

impl Col {
    pub fn name(&self) -> &str {
        match self {
            Col::Cat(n, _) | Col::Num(n, _) => n,
        }
    }
}

/// Column-major table; `ids[i]` is the row id of position `i`.
#[derive(Debug, Clone)]
pub struct Table {
    pub ids: Vec<u64>,
    pub cols: Vec<Col>,
}

const CAT_POOL: &[&str] = &["a", "b", "c", "d", "Bhutan", "Chad", "x y", "p,q", "é", "BS"];
const TEXT_POOL: &[&str] = &["12k", "n/a", "?", "$5", "1,000", "nan?"];

fn random_number(rng: &mut ChaCha8Rng, centre: f64, spread: f64) -> f64 {
    // two decimals so the CSV text round-trips exactly
    let x = centre + rng.random_range(-spread..=spread);
    (x * 100.0).round() / 100.0
}

impl Table {
    /// Up to 200 rows, 2-4 categorical and 1-3 numeric columns, with nulls,
    /// text and outliers injected into numeric columns.
    pub fn random(rng: &mut ChaCha8Rng) -> Table {
        let rows = rng.random_range(1..=200usize);
        let n_cat = rng.random_range(2..=4usize);
        let n_num = rng.random_range(1..=3usize);
        let mut cols = Vec::new();
        for i in 0..n_cat {
            let card = rng.random_range(1..=6usize);
            let pool: Vec<&str> = CAT_POOL.choose_multiple(rng, card).copied().collect();
            let null_rate = if rng.random_bool(0.3) { 0.1 } else { 0.0 };
            let values = (0..rows)
                .map(|_| {
                    if rng.random_bool(null_rate) {
                        None
                    } else {
                        Some(pool.choose(rng).expect("non-empty").to_string())
                    }
                })
                .collect();
            cols.push(Col::Cat(format!("cat{i}"), values));
        }
        for i in 0..n_num {
            let centre = rng.random_range(-500.0..5000.0);
            let spread = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(1.0..300.0) };
            let null_rate = rng.random_range(0.0..0.15);
            let text_rate = rng.random_range(0.0..0.1);
            let outlier_rate = rng.random_range(0.0..0.08);
            let mut values: Vec<NumCell> = (0..rows)
                .map(|_| {
                    let roll: f64 = rng.random();
                    if roll < null_rate {
                        NumCell::Null
                    } else if roll < null_rate + text_rate {
                        NumCell::Text(TEXT_POOL.choose(rng).expect("non-empty").to_string())
                    } else if roll < null_rate + text_rate + outlier_rate {
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        let far = centre + sign * rng.random_range(2000.0..100000.0);
                        NumCell::Num(random_number(rng, far, 0.0))
                    } else {
                        NumCell::Num(random_number(rng, centre, spread))
                    }
                })
                .collect();
            // keep the column numeric under inference (>= 60% of non-null
            // cells parse)
            loop {
                let non_null = values.iter().filter(|v| **v != NumCell::Null).count();
                let nums = values.iter().filter(|v| matches!(v, NumCell::Num(_))).count();
                if nums > 0 && nums * 100 >= non_null * 60 {
                    break;
                }
                let slot = values
                    .iter()
                    .position(|v| !matches!(v, NumCell::Num(_)))
                    .expect("some non-number cell");
                values[slot] = NumCell::Num(random_number(rng, centre, spread));
            }
            cols.push(Col::Num(format!("num{i}"), values));
        }
        use rand::seq::SliceRandom;
        cols.shuffle(rng);
        Table {
            ids: (1..=rows as u64).collect(),
            cols,
        }
    }

    pub fn to_csv(&self, delimiter: u8) -> String {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
        w.write_record(self.cols.iter().map(Col::name)).unwrap();
        for i in 0..self.ids.len() {
            let rec: Vec<String> = self
                .cols
                .iter()
                .map(|c| match c {
                    Col::Cat(_, v) => v[i].clone().unwrap_or_default(),
                    Col::Num(_, v) => match &v[i] {
                        NumCell::Null => String::new(),
                        NumCell::Text(s) => s.clone(),
                        NumCell::Num(x) => format!("{x}"),
                    },
                })
                .collect();
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Reads the live rows of a dataset back into the model.
    pub fn from_dataset(ds: &Dataset) -> Table {
        let ids: Vec<u64> = ds.row_ids().map(|r| r.0).collect();
        let cols = ds
            .columns()
            .iter()
            .map(|c| {
                let cells = ds.rows().map(|(_, cells)| &cells[c.position]);
                match c.kind {
                    ColumnKind::Categorical => Col::Cat(
                        c.name.clone(),
                        cells
                            .map(|v| match v {
                                CellValue::Null => None,
                                other => Some(other.category_label()),
                            })
                            .collect(),
                    ),
                    ColumnKind::Numeric => Col::Num(
                        c.name.clone(),
                        cells
                            .map(|v| match v {
                                CellValue::Null => NumCell::Null,
                                CellValue::Text(s) => NumCell::Text(s.clone()),
                                CellValue::Number(x) => NumCell::Num(*x),
                            })
                            .collect(),
                    ),
                }
            })
            .collect();
        Table { ids, cols }
    }
}

/// A detector known to both sides: the expression for the engine and a
/// hand-written predicate for the oracle, `(cell, group size, group mean)`.
pub struct OracleDetector {
    pub code: &'static str,
    pub expr: &'static str,
    pub column: Option<String>,
    pub test: fn(&NumCell, usize, Option<f64>) -> bool,
}

impl OracleDetector {
    pub fn engine(&self) -> CustomDetector {
        CustomDetector::new(self.code, self.expr, self.column.as_deref()).unwrap()
    }
}

pub fn stock_detectors(rng: &mut ChaCha8Rng, table: &Table) -> Vec<OracleDetector> {
    let nums: Vec<String> = table
        .cols
        .iter()
        .filter_map(|c| match c {
            Col::Num(n, _) => Some(n.clone()),
            _ => None,
        })
        .collect();
    let mut out = vec![
        OracleDetector {
            code: "negative",
            expr: "value < 0",
            column: None,
            test: |c, _, _| matches!(c, NumCell::Num(x) if *x < 0.0),
        },
        OracleDetector {
            code: "below_mean_small",
            expr: "value < group_mean and group_size <= 5",
            column: Some(nums.choose(rng).unwrap().clone()),
            test: |c, n, m| matches!((c, m), (NumCell::Num(x), Some(m)) if *x < m && n <= 5),
        },
        OracleDetector {
            code: "placeholder",
            expr: "value == \"n/a\" or (is_null and group_size >= 3)",
            column: None,
            test: |c, n, _| matches!(c, NumCell::Text(s) if s == "n/a") || (*c == NumCell::Null && n >= 3),
        },
    ];
    out.truncate(rng.random_range(0..=3));
    out
}

/// `(group key string, row, column, code)`.
pub type Rec = (String, Option<u64>, String, String);

/// Brute force: for every categorical column, every distinct label and
/// every numeric column, scan the group's rows against column stats
/// computed here.
pub fn oracle(table: &Table, k: f64, min_size: usize, detectors: &[OracleDetector]) -> BTreeSet<Rec> {
    let mut out = BTreeSet::new();
    let cats: Vec<(&str, &Vec<Option<String>>)> = table
        .cols
        .iter()
        .filter_map(|c| match c {
            Col::Cat(n, v) => Some((n.as_str(), v)),
            _ => None,
        })
        .collect();
    for col in &table.cols {
        let Col::Num(num, cells) = col else { continue };
        let xs: Vec<f64> = cells
            .iter()
            .filter_map(|c| match c {
                NumCell::Num(x) => Some(*x),
                _ => None,
            })
            .collect();
        let (mean, sd) = if xs.is_empty() {
            (0.0, 0.0)
        } else {
            let n = xs.len() as f64;
            let mut s = 0.0;
            for x in &xs {
                s += x;
            }
            let m = s / n;
            let mut ss = 0.0;
            for x in &xs {
                ss += (x - m) * (x - m);
            }
            (m, (ss / n).sqrt())
        };
        for (cat, labels) in &cats {
            let mut distinct: Vec<String> = labels
                .iter()
                .map(|l| l.clone().unwrap_or_else(|| NULL_CATEGORY.to_string()))
                .collect();
            distinct.sort();
            distinct.dedup();
            for label in distinct {
                let key = format!("{num}|{cat}={label}");
                let members: Vec<usize> = (0..table.ids.len())
                    .filter(|&i| labels[i].as_deref().unwrap_or(NULL_CATEGORY) == label)
                    .collect();
                let gx: Vec<f64> = members
                    .iter()
                    .filter_map(|&i| match cells[i] {
                        NumCell::Num(x) => Some(x),
                        _ => None,
                    })
                    .collect();
                let gmean = if gx.is_empty() {
                    None
                } else {
                    Some(gx.iter().sum::<f64>() / gx.len() as f64)
                };
                for &i in &members {
                    let id = Some(table.ids[i]);
                    let code = match &cells[i] {
                        NumCell::Null => Some("missing"),
                        NumCell::Text(_) => Some("type_mismatch"),
                        NumCell::Num(x) if sd > 0.0 && (x - mean).abs() > k * sd => Some("outlier"),
                        NumCell::Num(_) => None,
                    };
                    if let Some(code) = code {
                        out.insert((key.clone(), id, num.clone(), code.to_string()));
                    }
                    for d in detectors {
                        if d.column.as_deref().is_some_and(|c| c != num) {
                            continue;
                        }
                        if (d.test)(&cells[i], members.len(), gmean) {
                            out.insert((key.clone(), id, num.clone(), d.code.to_string()));
                        }
                    }
                }
                if members.len() < min_size {
                    out.insert((key, None, num.clone(), "incomplete_group".to_string()));
                }
            }
        }
    }
    out
}

pub fn rec(r: &ErrorRecord) -> Rec {
    (r.group.to_string(), r.row.map(|x| x.0), r.column.clone(), r.code.to_string())
}

pub fn engine_records(engine: &Engine) -> BTreeSet<Rec> {
    engine.store().records(engine.groups()).iter().map(rec).collect()
}

/// Compares incremental state to a from-scratch rebuild.
pub fn check_scratch(engine: &Engine) -> Result<(), String> {
    let (groups, graph, store) = engine.scratch().map_err(|e| e.to_string())?;
    if engine.groups() != &groups {
        return Err("groups differ".into());
    }
    if engine.graph() != &graph {
        return Err("overlap graph differs".into());
    }
    if engine.store() != &store {
        let a: BTreeSet<Rec> = engine.store().records(engine.groups()).iter().map(rec).collect();
        let b: BTreeSet<Rec> = store.records(&groups).iter().map(rec).collect();
        return Err(format!(
            "error store differs: extra {:?}, missing {:?}",
            a.difference(&b).take(3).collect::<Vec<_>>(),
            b.difference(&a).take(3).collect::<Vec<_>>()
        ));
    }
    Ok(())
}

pub fn stock_wranglers() -> Vec<CustomWrangler> {
    vec![
        CustomWrangler {
            code: ErrorCode::Outlier,
            rule: "scale(0.001)".parse::<WranglerRule>().unwrap(),
        },
        CustomWrangler {
            code: ErrorCode::Missing,
            rule: "set_constant(0)".parse().unwrap(),
        },
        CustomWrangler {
            code: ErrorCode::TypeMismatch,
            rule: "set(group_mean * 2)".parse().unwrap(),
        },
    ]
}

/// A random action the engine accepts, or `None` after a bounded number of
/// attempts. Deletions are avoided once few rows remain.
pub fn random_action(engine: &Engine, rng: &mut ChaCha8Rng) -> Option<RepairAction> {
    let keys: Vec<GroupKey> = engine.groups().iter().map(|g| g.key()).collect();
    if keys.is_empty() {
        return None;
    }
    let allow_delete = engine.dataset().len() > 4;
    for _ in 0..40 {
        let key = keys.choose(rng).unwrap().clone();
        let counts = engine.store().counts(&key);
        let errored = !counts.is_empty() && rng.random_bool(0.8);
        let (kind, scope, params_from) = if errored {
            let code = counts.keys().choose(rng).unwrap().clone();
            let mut options: Vec<(ActionKind, Option<CustomWrangler>)> = gridwrangle::wrangle::applicable_kinds(&code)
                .iter()
                .map(|k| (*k, None))
                .collect();
            if code != ErrorCode::IncompleteGroup {
                for w in engine.wranglers().for_code(&code) {
                    options.push((ActionKind::Custom, Some(w.clone())));
                }
            }
            let (k, w) = options.choose(rng).unwrap().clone();
            (k, Scope::Errors(code), w)
        } else {
            let g = engine.groups().get(&key).unwrap();
            let n = rng.random_range(1..=3usize.min(g.row_ids.len()));
            let rows: BTreeSet<RowId> = g.row_ids.iter().copied().choose_multiple(rng, n).into_iter().collect();
            let k = *[ActionKind::DeleteRows, ActionKind::ImputeGroupMean, ActionKind::ConvertType]
                .choose(rng)
                .unwrap();
            (k, Scope::Rows(rows), None)
        };
        let deletes = kind == ActionKind::DeleteRows
            || params_from.as_ref().is_some_and(|w| w.rule == WranglerRule::DeleteRow);
        if deletes && !allow_delete {
            continue;
        }
        let action = match params_from {
            Some(w) => RepairAction::custom(key, scope, w.code, w.rule),
            None => RepairAction::new(kind, key, scope),
        };
        if engine.plan(&action, 1).is_ok() {
            return Some(action);
        }
    }
    None
}

pub fn python3() -> Option<&'static str> {
    ["python3", "python"].into_iter().find(|p| {
        Command::new(p)
            .arg("-c")
            .arg("import sys; sys.exit(0 if sys.version_info >= (3, 8) else 1)")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}

/// One replay job: script text, original CSV bytes and the expected
/// canonical export.
pub struct PyJob {
    pub script: String,
    pub input: Vec<u8>,
    pub expected: String,
}

const PY_DRIVER: &str = r#"
import runpy, sys
bad = []
n = int(sys.argv[2])
for i in range(n):
    d = sys.argv[1] + "/" + str(i)
    g = runpy.run_path(d + "/replay.py", run_name="replay")
    g["main"](d + "/in.csv", d + "/out.csv")
"#;

/// Runs every job in a single interpreter and returns the indices whose
/// output differs from the expectation.
pub fn run_python_batch(python: &str, jobs: &[PyJob]) -> Result<Vec<usize>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, job) in jobs.iter().enumerate() {
        let d = dir.path().join(i.to_string());
        std::fs::create_dir(&d).map_err(|e| e.to_string())?;
        write(&d.join("replay.py"), job.script.as_bytes())?;
        write(&d.join("in.csv"), &job.input)?;
    }
    let out = Command::new(python)
        .arg("-c")
        .arg(PY_DRIVER)
        .arg(dir.path())
        .arg(jobs.len().to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let mut bad = Vec::new();
    for (i, job) in jobs.iter().enumerate() {
        let got = std::fs::read_to_string(dir.path().join(i.to_string()).join("out.csv")).map_err(|e| e.to_string())?;
        if got != job.expected {
            bad.push(i);
        }
    }
    Ok(bad)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let mut f = std::fs::File::create(path).map_err(|e| e.to_string())?;
    f.write_all(bytes).map_err(|e| e.to_string())
}
