//! The commit pipeline and the user-facing session.
//!
//! [`Engine`] owns one dataset version with its groups, overlap graph and
//! error store, and knows how to commit a delta incrementally. It is cheap
//! enough to clone that previews and suggestion ranking simulate on a copy.
//! [`Session`] adds history, durable logging and script generation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::delta::SnapshotDelta;
use crate::detect::{detect_all, CodeCounts, CustomDetector, DetectConfig, Detectors, ErrorCode, ErrorStore, NativeDetector, RedetectReport};
use crate::error::{Error, Result};
use crate::groups::{
    affected_groups, build_overlap_graph, generate_groups, update_groups_incremental, AffectedMode, GroupConfig,
    GroupKey, Groups, OverlapGraph,
};
use crate::history::{ActionLogEntry, FlushPolicy, FlushReport, History};
use crate::sampler::{self, ChartPayload, GroupPayload, SampleParams};
use crate::script::{self, sha256_hex, RenderTarget, ScriptSource};
use crate::storage::{decode_log, Baseline, DetectorRegistration, LogRecord, LogStorage, WranglerRegistration, MAGIC};
use crate::store::{ingest_csv, Dataset, IngestOptions, Version};
use crate::value::ColumnKind;
use crate::wrangle::{self, rank_suggestions, CustomWrangler, PreviewResult, RepairAction, RepairSuggestion, Wranglers};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "d_k")]
    pub outlier_k: f64,
    #[serde(default = "d_min")]
    pub min_group_size: usize,
    #[serde(default = "d_flush")]
    pub flush_every: usize,
    #[serde(default = "d_sample")]
    pub sample_k: usize,
    #[serde(default)]
    pub affected_mode: AffectedMode,
    /// Projection pairs `(categorical, numeric)`; all pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(String, String)>>,
}

fn d_k() -> f64 {
    2.0
}
fn d_min() -> usize {
    2
}
fn d_flush() -> usize {
    3
}
fn d_sample() -> usize {
    sampler::DEFAULT_K
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            outlier_k: d_k(),
            min_group_size: d_min(),
            flush_every: d_flush(),
            sample_k: d_sample(),
            affected_mode: AffectedMode::OneHop,
            pairs: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.outlier_k.is_finite() && self.outlier_k > 0.0) {
            return Err(Error::InvalidConfig("outlier_k must be a positive number".into()));
        }
        if self.min_group_size == 0 {
            return Err(Error::InvalidConfig("min_group_size must be at least 1".into()));
        }
        FlushPolicy::new(self.flush_every)?;
        Ok(())
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            outlier_k: self.outlier_k,
            min_group_size: self.min_group_size,
        }
    }

    pub fn groups(&self) -> GroupConfig {
        GroupConfig {
            pairs: self.pairs.clone(),
            min_group_size: self.min_group_size,
        }
    }
}

/// Result of committing one delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitReport {
    pub version: Version,
    pub redetect: RedetectReport,
}

/// One dataset version plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Engine {
    ds: Dataset,
    groups: Groups,
    graph: OverlapGraph,
    store: ErrorStore,
    detectors: Detectors,
    wranglers: Wranglers,
    config: SessionConfig,
}

impl Engine {
    pub fn new(ds: Dataset, config: SessionConfig) -> Result<Engine> {
        config.validate()?;
        let groups = generate_groups(&ds, &config.groups())?;
        let graph = build_overlap_graph(&groups);
        let detectors = Detectors::default();
        let store = detect_all(&ds, &groups, &detectors, &config.detect());
        Ok(Engine {
            ds,
            groups,
            graph,
            store,
            detectors,
            wranglers: Wranglers::default(),
            config,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn groups(&self) -> &Groups {
        &self.groups
    }

    pub fn graph(&self) -> &OverlapGraph {
        &self.graph
    }

    pub fn store(&self) -> &ErrorStore {
        &self.store
    }

    pub fn detectors(&self) -> &Detectors {
        &self.detectors
    }

    pub fn wranglers(&self) -> &Wranglers {
        &self.wranglers
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn version(&self) -> Version {
        self.ds.version()
    }

    /// Recomputes groups, graph and errors from scratch. The incremental
    /// state must always equal this.
    pub fn scratch(&self) -> Result<(Groups, OverlapGraph, ErrorStore)> {
        let groups = generate_groups(&self.ds, &self.config.groups())?;
        let graph = build_overlap_graph(&groups);
        let store = detect_all(&self.ds, &groups, &self.detectors, &self.config.detect());
        Ok((groups, graph, store))
    }

    pub fn plan(&self, action: &RepairAction, seq: u64) -> Result<SnapshotDelta> {
        wrangle::plan(&self.ds, &self.groups, &self.store, &self.wranglers, action, seq)
    }

    /// Applies a delta and brings groups, graph and errors up to date.
    pub fn commit(&mut self, delta: &SnapshotDelta) -> Result<CommitReport> {
        let version = self.ds.apply_delta(delta)?;
        let update = update_groups_incremental(&mut self.groups, &mut self.graph, &self.ds, delta);
        let changed: BTreeSet<String> = delta.cell_changes.iter().map(|c| c.column.clone()).collect();
        let redetect = self.store.redetect(
            &self.ds,
            &self.groups,
            &self.graph,
            &update,
            &changed,
            &self.detectors,
            &self.config.detect(),
            self.config.affected_mode,
        );
        Ok(CommitReport { version, redetect })
    }

    fn simulate(&self, action: &RepairAction) -> Result<(Engine, SnapshotDelta, CommitReport)> {
        let delta = self.plan(action, 0)?;
        let mut shadow = self.clone();
        let report = shadow.commit(&delta)?;
        Ok((shadow, delta, report))
    }

    /// Computes what `action` would do without committing it.
    pub fn preview(&self, action: &RepairAction) -> Result<PreviewResult> {
        let (shadow, delta, report) = self.simulate(action)?;
        let payload = if shadow.groups.contains(&action.target) {
            let params = SampleParams {
                k: self.config.sample_k,
                ..Default::default()
            };
            Some(sampler::group_payload(
                &shadow.ds,
                &shadow.groups,
                &shadow.store,
                &action.target,
                &params,
            )?)
        } else {
            None
        };
        let mut keys = affected_groups(
            &shadow.graph,
            &shadow.groups,
            &delta.touched_rows(),
            self.config.affected_mode,
        );
        keys.extend(report.redetect.refresh.iter().cloned());
        let error_summary_after = keys
            .into_iter()
            .map(|k| {
                let counts = shadow.store.counts(&k);
                (k, counts)
            })
            .collect();
        Ok(PreviewResult {
            delta,
            group_payload_after: payload,
            error_summary_after,
        })
    }

    /// Every applicable repair for `(key, code)`, ranked by simulated side
    /// effects. Candidates that would change nothing are left out.
    pub fn suggest(&self, key: &GroupKey, code: &ErrorCode) -> Result<Vec<RepairSuggestion>> {
        if !self.groups.contains(key) {
            return Err(Error::UnknownGroup(key.to_string()));
        }
        let before = self.store.count(key, code);
        if before == 0 {
            return Err(Error::NoSuchErrorInGroup {
                group: key.to_string(),
                code: code.clone(),
            });
        }
        let mut out = Vec::new();
        for action in wrangle::candidate_actions(key, code, &self.wranglers) {
            let (shadow, _, report) = match self.simulate(&action) {
                Ok(s) => s,
                Err(Error::InapplicableAction(_)) => continue,
                Err(e) => return Err(e),
            };
            let mut new_errors = 0;
            for g in &report.redetect.touched_groups {
                if !shadow.groups.contains(g) {
                    continue;
                }
                let old = self.store.group_records(&self.groups, g);
                new_errors += shadow
                    .store
                    .group_records(&shadow.groups, g)
                    .difference(&old)
                    .count();
            }
            let after = shadow.store.count(key, code);
            out.push(RepairSuggestion {
                action,
                predicted_resolved: before as i64 - after as i64,
                predicted_new_errors: new_errors,
                rank: 0,
            });
        }
        Ok(rank_suggestions(out))
    }

    pub fn chart(&self, cat: &str, num: &str, params: &SampleParams) -> Result<ChartPayload> {
        sampler::chart(&self.ds, &self.groups, &self.store, cat, num, params)
    }

    pub fn group_payload(&self, key: &GroupKey, params: &SampleParams) -> Result<GroupPayload> {
        sampler::group_payload(&self.ds, &self.groups, &self.store, key, params)
    }

    pub fn ranked_groups(&self) -> Vec<(GroupKey, usize)> {
        self.store.ranked(&self.groups)
    }

    fn check_detector(&self, d: &CustomDetector) -> Result<()> {
        if let Some(c) = &d.column {
            if self.ds.column(c)?.kind != ColumnKind::Numeric {
                return Err(Error::InvalidConfig(format!("detector column `{c}` is not numeric")));
            }
        }
        Ok(())
    }

    /// Registers a detector and re-runs detection everywhere.
    pub fn register_detector(&mut self, d: CustomDetector) -> Result<()> {
        self.check_detector(&d)?;
        self.detectors.register(d)?;
        self.rebuild_store();
        Ok(())
    }

    pub fn register_native_detector(&mut self, d: Arc<dyn NativeDetector>) -> Result<()> {
        self.detectors.register_native(d)?;
        self.rebuild_store();
        Ok(())
    }

    pub fn register_wrangler(&mut self, w: CustomWrangler) -> Result<()> {
        let detectors = &self.detectors;
        self.wranglers.register(w, |c| detectors.contains(c))
    }

    fn rebuild_store(&mut self) {
        self.store = detect_all(&self.ds, &self.groups, &self.detectors, &self.config.detect());
    }
}

/// Milliseconds since the Unix epoch, or any monotone substitute.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        #[cfg(not(target_arch = "wasm32"))]
        {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        }
        #[cfg(target_arch = "wasm32")]
        {
            0
        }
    })
}

/// Outcome of a flush attempted as part of an update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FlushStatus {
    Flushed(FlushReport),
    Failed { code: String, message: String },
}

/// Response to apply, undo and redo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub version: Version,
    /// Sequence number of the entry applied, undone or redone.
    pub seq: u64,
    pub cursor: usize,
    pub cells_touched: usize,
    pub redetect: RedetectReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flush: Option<FlushStatus>,
}

/// Session summary, including the config for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub dataset_id: String,
    pub version: Version,
    pub rows: usize,
    pub columns: Vec<crate::store::ColumnMeta>,
    pub groups: usize,
    pub error_summary: CodeCounts,
    pub error_total: usize,
    pub cursor: usize,
    pub history_len: usize,
    pub config: SessionConfig,
}

pub struct Session {
    engine: Engine,
    history: History,
    storage: Box<dyn LogStorage>,
    clock: Clock,
    source_sha256: String,
    delimiter: u8,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("dataset", &self.engine.ds.id())
            .field("version", &self.engine.version())
            .field("cursor", &self.history.cursor())
            .finish()
    }
}

impl Session {
    /// Ingests a CSV file, runs detection and writes the baseline snapshot
    /// to `storage`, which must be empty.
    pub fn create(
        csv: &[u8],
        options: &IngestOptions,
        config: SessionConfig,
        mut storage: Box<dyn LogStorage>,
        clock: Clock,
    ) -> Result<Session> {
        if !storage.is_empty() {
            return Err(Error::InvalidConfig("log storage is not empty".into()));
        }
        let ds = ingest_csv(csv, options)?;
        let engine = Engine::new(ds, config.clone())?;
        let source_sha256 = sha256_hex(csv);
        let baseline = Baseline {
            source_sha256: source_sha256.clone(),
            delimiter: options.delimiter as char,
            config: config.clone(),
            dataset: engine.ds.snapshot(),
        };
        let mut bytes = MAGIC.to_vec();
        LogRecord::Baseline(Box::new(baseline)).encode_into(&mut bytes);
        storage.append(&bytes)?;
        Ok(Session {
            engine,
            history: History::new(FlushPolicy::new(config.flush_every)?),
            storage,
            clock,
            source_sha256,
            delimiter: options.delimiter,
        })
    }

    /// Rebuilds a session from its log: the baseline, then every durable
    /// record in order.
    pub fn recover(storage: Box<dyn LogStorage>, clock: Clock) -> Result<Session> {
        let log = decode_log(&storage.read_all()?)?;
        let mut records = log.records.into_iter();
        let Some(LogRecord::Baseline(baseline)) = records.next() else {
            return Err(Error::CorruptLog("log does not start with a baseline".into()));
        };
        let Baseline {
            source_sha256,
            delimiter,
            config,
            dataset,
        } = *baseline;
        let delimiter = u8::try_from(delimiter).map_err(|_| Error::CorruptLog("bad delimiter".into()))?;
        let engine = Engine::new(Dataset::from_snapshot(dataset)?, config.clone())?;
        let mut session = Session {
            engine,
            history: History::new(FlushPolicy::new(config.flush_every)?),
            storage,
            clock,
            source_sha256,
            delimiter,
        };
        for record in records {
            session.replay(record)?;
        }
        Ok(session)
    }

    fn replay(&mut self, record: LogRecord) -> Result<()> {
        let corrupt = |e: Error| Error::CorruptLog(format!("replay failed: {e}"));
        match record {
            LogRecord::Baseline(_) => return Err(Error::CorruptLog("second baseline".into())),
            LogRecord::Action(entry) => {
                self.engine.commit(&entry.delta).map_err(corrupt)?;
                self.history.replay_action(entry)?;
            }
            LogRecord::Undo(m) => {
                let delta = self.history.undo_target().map_err(corrupt)?.delta.inverse();
                self.history.replay_undo(m.seq)?;
                self.engine.commit(&delta).map_err(corrupt)?;
            }
            LogRecord::Redo(m) => {
                let delta = self.history.redo_target().map_err(corrupt)?.delta.clone();
                self.history.replay_redo(m.seq)?;
                self.engine.commit(&delta).map_err(corrupt)?;
            }
            LogRecord::Detector(r) => self.engine.register_detector(r.detector).map_err(corrupt)?,
            LogRecord::Wrangler(r) => self.engine.register_wrangler(r.wrangler).map_err(corrupt)?,
        }
        Ok(())
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Mutable engine access, for embedders registering native detectors.
    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn storage(&self) -> &dyn LogStorage {
        self.storage.as_ref()
    }

    pub fn source_sha256(&self) -> &str {
        &self.source_sha256
    }

    pub fn version(&self) -> Version {
        self.engine.version()
    }

    pub fn info(&self) -> SessionInfo {
        let summary = self.engine.store.summary();
        SessionInfo {
            dataset_id: self.engine.ds.id().to_string(),
            version: self.version(),
            rows: self.engine.ds.len(),
            columns: self.engine.ds.columns().to_vec(),
            groups: self.engine.groups.len(),
            error_total: summary.values().sum(),
            error_summary: summary,
            cursor: self.history.cursor(),
            history_len: self.history.entries().len(),
            config: self.engine.config.clone(),
        }
    }

    fn after_update(&mut self) -> Option<FlushStatus> {
        if !self.history.flush_due() {
            return None;
        }
        Some(match self.history.flush(self.storage.as_mut()) {
            Ok(r) => FlushStatus::Flushed(r),
            Err(e) => FlushStatus::Failed {
                code: e.code().to_string(),
                message: e.to_string(),
            },
        })
    }

    pub fn apply(&mut self, action: &RepairAction) -> Result<UpdateOutcome> {
        let seq = self.history.cursor() as u64 + 1;
        let delta = self.engine.plan(action, seq)?;
        let report = self.engine.commit(&delta)?;
        let cells_touched = delta.cells_touched();
        self.history.record(ActionLogEntry {
            seq,
            action: action.clone(),
            delta,
            timestamp: (self.clock)(),
        })?;
        Ok(UpdateOutcome {
            version: report.version,
            seq,
            cursor: self.history.cursor(),
            cells_touched,
            redetect: report.redetect,
            flush: self.after_update(),
        })
    }

    pub fn undo(&mut self) -> Result<UpdateOutcome> {
        let delta = self.history.undo_target()?.delta.inverse();
        let report = self.engine.commit(&delta)?;
        let seq = self.history.mark_undo((self.clock)())?;
        Ok(UpdateOutcome {
            version: report.version,
            seq,
            cursor: self.history.cursor(),
            cells_touched: delta.cells_touched(),
            redetect: report.redetect,
            flush: self.after_update(),
        })
    }

    pub fn redo(&mut self) -> Result<UpdateOutcome> {
        let delta = self.history.redo_target()?.delta.clone();
        let report = self.engine.commit(&delta)?;
        let seq = self.history.mark_redo((self.clock)())?;
        Ok(UpdateOutcome {
            version: report.version,
            seq,
            cursor: self.history.cursor(),
            cells_touched: delta.cells_touched(),
            redetect: report.redetect,
            flush: self.after_update(),
        })
    }

    pub fn preview(&self, action: &RepairAction) -> Result<PreviewResult> {
        self.engine.preview(action)
    }

    pub fn suggest(&self, key: &GroupKey, code: &ErrorCode) -> Result<Vec<RepairSuggestion>> {
        self.engine.suggest(key, code)
    }

    pub fn register_detector(&mut self, d: CustomDetector) -> Result<()> {
        self.engine.register_detector(d.clone())?;
        self.history.note(LogRecord::Detector(DetectorRegistration {
            detector: d,
            timestamp: (self.clock)(),
        }));
        Ok(())
    }

    pub fn register_wrangler(&mut self, w: CustomWrangler) -> Result<()> {
        self.engine.register_wrangler(w.clone())?;
        self.history.note(LogRecord::Wrangler(WranglerRegistration {
            wrangler: w,
            timestamp: (self.clock)(),
        }));
        Ok(())
    }

    /// Writes all pending records now.
    pub fn flush(&mut self) -> Result<FlushReport> {
        self.history.flush(self.storage.as_mut())
    }

    pub fn script_source(&self) -> ScriptSource<'_> {
        ScriptSource {
            source_sha256: &self.source_sha256,
            delimiter: self.delimiter,
            columns: self.engine.ds.columns(),
            entries: self.history.effective(),
        }
    }

    pub fn render_script(&self, target: RenderTarget) -> String {
        script::render(target, &self.script_source())
    }

    /// Per-group error counts for every group, in key order.
    pub fn error_counts(&self) -> BTreeMap<GroupKey, CodeCounts> {
        self.engine
            .groups
            .iter()
            .map(|g| {
                let k = g.key();
                let c = self.engine.store.counts(&k);
                (k, c)
            })
            .collect()
    }
}
