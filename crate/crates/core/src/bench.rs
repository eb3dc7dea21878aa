//! Latency harness: seeded single-row removals and imputations on erroneous
//! groups, timed through the incremental engine and through a baseline that
//! rebuilds groups, graph and errors from scratch after every operation.

use std::str::FromStr;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delta::SnapshotDelta;
use crate::detect::{detect_all, ErrorCode, ErrorStore};
use crate::error::{Error, Result};
use crate::groups::{build_overlap_graph, generate_groups, Groups, OverlapGraph};
use crate::session::{Engine, SessionConfig};
use crate::store::Dataset;
use crate::wrangle::{self, ActionKind, RepairAction, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Remove,
    Impute,
}

impl OpKind {
    fn action_kind(self) -> ActionKind {
        match self {
            OpKind::Remove => ActionKind::DeleteRows,
            OpKind::Impute => ActionKind::ImputeGroupMean,
        }
    }

    fn accepts(self, code: &ErrorCode) -> bool {
        match self {
            OpKind::Remove => true,
            OpKind::Impute => matches!(code, ErrorCode::Missing | ErrorCode::Outlier | ErrorCode::TypeMismatch),
        }
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<OpKind> {
        match s.trim() {
            "remove" => Ok(OpKind::Remove),
            "impute" => Ok(OpKind::Impute),
            other => Err(Error::InvalidConfig(format!("unknown op kind `{other}`"))),
        }
    }
}

/// Parses a comma-separated mix such as `remove,impute`.
pub fn parse_mix(s: &str) -> Result<Vec<OpKind>> {
    let mix: Vec<OpKind> = s.split(',').map(str::parse).collect::<Result<_>>()?;
    if mix.is_empty() {
        return Err(Error::InvalidConfig("empty op mix".into()));
    }
    Ok(mix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub ops: usize,
    pub mix: Vec<OpKind>,
    pub seed: u64,
    pub config: SessionConfig,
}

/// Latency summary in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub count: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
}

impl Latency {
    pub fn from_samples(samples: &[f64]) -> Latency {
        if samples.is_empty() {
            return Latency::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        // nearest-rank
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Latency {
            count: n,
            mean_s: s.iter().sum::<f64>() / n as f64,
            median_s: median,
            p95_s: s[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: OpKind,
    pub incremental: Latency,
    pub baseline: Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: usize,
    pub columns: usize,
    pub groups: usize,
    pub seed: u64,
    pub ops_requested: usize,
    pub ops_run: usize,
    pub kinds: Vec<KindReport>,
    pub incremental: Latency,
    pub baseline: Latency,
    /// Baseline mean over incremental mean; 0 when nothing ran.
    pub speedup: f64,
    /// Final incremental state equals the baseline's.
    pub equivalent: bool,
    pub setup_s: f64,
}

struct Baseline {
    ds: Dataset,
    groups: Groups,
    graph: OverlapGraph,
    store: ErrorStore,
}

impl Baseline {
    fn step(&mut self, engine: &Engine, action: &RepairAction, seq: u64) -> Result<SnapshotDelta> {
        let config = engine.config();
        let delta = wrangle::plan(&self.ds, &self.groups, &self.store, engine.wranglers(), action, seq)?;
        self.ds.apply_delta(&delta)?;
        self.groups = generate_groups(&self.ds, &config.groups())?;
        self.graph = build_overlap_graph(&self.groups);
        self.store = detect_all(&self.ds, &self.groups, engine.detectors(), &config.detect());
        Ok(delta)
    }
}

/// Picks a random erroneous row the op kind can act on, in a random
/// erroneous group.
fn pick(engine: &Engine, kind: OpKind, rng: &mut ChaCha8Rng) -> Option<RepairAction> {
    let mut erroneous: Vec<_> = engine
        .ranked_groups()
        .into_iter()
        .take_while(|(_, n)| *n > 0)
        .map(|(k, _)| k)
        .collect();
    while !erroneous.is_empty() {
        let i = rand::Rng::random_range(rng, 0..erroneous.len());
        let key = erroneous.swap_remove(i);
        let rows: Vec<_> = engine
            .store()
            .error_rows(engine.groups(), &key)
            .into_iter()
            .filter(|(_, codes)| codes.iter().any(|c| kind.accepts(c)))
            .map(|(r, _)| r)
            .collect();
        if kind == OpKind::Impute && engine.groups().get(&key).is_some_and(|g| g.row_ids.len() == rows.len()) {
            // group mean would be computed over the erroneous cells alone
            continue;
        }
        if let Some(r) = rows.choose(rng) {
            return Some(RepairAction::new(kind.action_kind(), key, Scope::Rows([*r].into())));
        }
    }
    None
}

pub fn run_bench(ds: Dataset, params: &BenchParams) -> Result<BenchReport> {
    if params.mix.is_empty() {
        return Err(Error::InvalidConfig("empty op mix".into()));
    }
    let t0 = Instant::now();
    let rows = ds.len();
    let columns = ds.columns().len();
    let mut engine = Engine::new(ds.clone(), params.config.clone())?;
    let (groups, graph, store) = engine.scratch()?;
    let mut base = Baseline { ds, groups, graph, store };
    let setup_s = t0.elapsed().as_secs_f64();
    let group_count = engine.groups().len();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples: Vec<(OpKind, f64, f64)> = Vec::with_capacity(params.ops);
    for i in 0..params.ops {
        let kind = *params.mix.choose(&mut rng).expect("non-empty mix");
        let Some(action) = pick(&engine, kind, &mut rng) else {
            break;
        };
        let seq = i as u64 + 1;

        let t = Instant::now();
        let delta = engine.plan(&action, seq)?;
        engine.commit(&delta)?;
        let inc = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let base_delta = base.step(&engine, &action, seq)?;
        let full = t.elapsed().as_secs_f64();
        if base_delta != delta {
            return Err(Error::InvalidDelta(format!("op {seq}: baseline planned a different delta")));
        }
        samples.push((kind, inc, full));
    }

    let equivalent =
        engine.groups() == &base.groups && engine.graph() == &base.graph && engine.store() == &base.store;
    let summarize = |filter: &dyn Fn(OpKind) -> bool| {
        let inc: Vec<f64> = samples.iter().filter(|s| filter(s.0)).map(|s| s.1).collect();
        let full: Vec<f64> = samples.iter().filter(|s| filter(s.0)).map(|s| s.2).collect();
        (Latency::from_samples(&inc), Latency::from_samples(&full))
    };
    let mut kinds_seen: Vec<OpKind> = params.mix.clone();
    kinds_seen.sort();
    kinds_seen.dedup();
    let kinds = kinds_seen
        .into_iter()
        .map(|k| {
            let (incremental, baseline) = summarize(&|x| x == k);
            KindReport { kind: k, incremental, baseline }
        })
        .collect();
    let (incremental, baseline) = summarize(&|_| true);
    let speedup = if incremental.mean_s > 0.0 {
        baseline.mean_s / incremental.mean_s
    } else {
        0.0
    };
    Ok(BenchReport {
        rows,
        columns,
        groups: group_count,
        seed: params.seed,
        ops_requested: params.ops,
        ops_run: samples.len(),
        kinds,
        incremental,
        baseline,
        speedup,
        equivalent,
        setup_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::SALARIES_CSV;
    use crate::store::{ingest_csv, IngestOptions};
    use crate::synth::{generate_csv, SynthSpec};

    fn params(ops: usize) -> BenchParams {
        BenchParams {
            ops,
            mix: vec![OpKind::Remove, OpKind::Impute],
            seed: 9,
            config: SessionConfig::default(),
        }
    }

    #[test]
    fn latency_summary() {
        let l = Latency::from_samples(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(l.count, 4);
        assert_eq!(l.mean_s, 2.5);
        assert_eq!(l.median_s, 2.5);
        assert_eq!(l.p95_s, 4.0);
        assert_eq!(Latency::from_samples(&[]), Latency::default());
    }

    #[test]
    fn zero_ops_is_empty() {
        let ds = ingest_csv(SALARIES_CSV.as_bytes(), &IngestOptions::default()).unwrap();
        let r = run_bench(ds, &params(0)).unwrap();
        assert_eq!(r.ops_run, 0);
        assert!(r.equivalent);
        assert_eq!(r.speedup, 0.0);
    }

    #[test]
    fn small_synthetic_run_is_equivalent() {
        let csv = generate_csv(&SynthSpec {
            rows: 400,
            ..SynthSpec::desk_scale(1)
        });
        let ds = ingest_csv(csv.as_bytes(), &IngestOptions::default()).unwrap();
        let r = run_bench(ds, &params(25)).unwrap();
        assert_eq!(r.ops_run, 25);
        assert!(r.equivalent);
        assert_eq!(r.kinds.iter().map(|k| k.incremental.count).sum::<usize>(), 25);
    }

    #[test]
    fn mix_parsing() {
        assert_eq!(parse_mix("remove,impute").unwrap(), vec![OpKind::Remove, OpKind::Impute]);
        assert!(parse_mix("remove,fly").is_err());
    }
}
