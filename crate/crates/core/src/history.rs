//! Linear action history with a cursor, plus the pending-record buffer that
//! is periodically flushed to a [`LogStorage`].

use serde::{Deserialize, Serialize};

use crate::delta::SnapshotDelta;
use crate::error::{Error, Result};
use crate::storage::{LogRecord, LogStorage, Marker, MAGIC};
use crate::wrangle::RepairAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub seq: u64,
    pub action: RepairAction,
    pub delta: SnapshotDelta,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushPolicy {
    pub every_n_updates: usize,
}

impl FlushPolicy {
    pub fn new(every_n_updates: usize) -> Result<FlushPolicy> {
        if every_n_updates == 0 {
            return Err(Error::InvalidConfig("flush_every must be at least 1".into()));
        }
        Ok(FlushPolicy { every_n_updates })
    }
}

impl Default for FlushPolicy {
    fn default() -> Self {
        FlushPolicy { every_n_updates: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushReport {
    pub records: usize,
    pub bytes: u64,
    /// Storage length after the flush.
    pub durable_len: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    entries: Vec<ActionLogEntry>,
    cursor: usize,
    pending: Vec<LogRecord>,
    updates: usize,
    policy: FlushPolicy,
}

impl History {
    pub fn new(policy: FlushPolicy) -> History {
        History {
            entries: Vec::new(),
            cursor: 0,
            pending: Vec::new(),
            updates: 0,
            policy,
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn policy(&self) -> FlushPolicy {
        self.policy
    }

    pub fn entries(&self) -> &[ActionLogEntry] {
        &self.entries
    }

    /// Entries up to the cursor: what the current state is made of.
    pub fn effective(&self) -> &[ActionLogEntry] {
        &self.entries[..self.cursor]
    }

    pub fn pending(&self) -> &[LogRecord] {
        &self.pending
    }

    pub fn can_undo(&self) -> bool {
        self.cursor > 0
    }

    pub fn can_redo(&self) -> bool {
        self.cursor < self.entries.len()
    }

    /// Appends an entry at the cursor, dropping any redo tail.
    pub fn record(&mut self, entry: ActionLogEntry) -> Result<()> {
        let expected = self.cursor as u64 + 1;
        if entry.seq != expected {
            return Err(Error::SequenceGap {
                expected,
                got: entry.seq,
            });
        }
        self.entries.truncate(self.cursor);
        self.pending.push(LogRecord::Action(entry.clone()));
        self.entries.push(entry);
        self.cursor += 1;
        self.updates += 1;
        Ok(())
    }

    /// The entry an undo would revert.
    pub fn undo_target(&self) -> Result<&ActionLogEntry> {
        if self.cursor == 0 {
            return Err(Error::NothingToUndo);
        }
        Ok(&self.entries[self.cursor - 1])
    }

    pub fn redo_target(&self) -> Result<&ActionLogEntry> {
        self.entries.get(self.cursor).ok_or(Error::NothingToRedo)
    }

    /// Moves the cursor back once the inverse delta has been committed.
    pub fn mark_undo(&mut self, timestamp: u64) -> Result<u64> {
        let seq = self.undo_target()?.seq;
        self.cursor -= 1;
        self.pending.push(LogRecord::Undo(Marker { seq, timestamp }));
        self.updates += 1;
        Ok(seq)
    }

    pub fn mark_redo(&mut self, timestamp: u64) -> Result<u64> {
        let seq = self.redo_target()?.seq;
        self.cursor += 1;
        self.pending.push(LogRecord::Redo(Marker { seq, timestamp }));
        self.updates += 1;
        Ok(seq)
    }

    /// Queues a record that is not an update (registrations).
    pub fn note(&mut self, record: LogRecord) {
        self.pending.push(record);
    }

    /// True once enough updates have accumulated since the last flush.
    pub fn flush_due(&self) -> bool {
        self.updates >= self.policy.every_n_updates && !self.pending.is_empty()
    }

    /// Writes every pending record in one append. On failure nothing is
    /// dropped and the next trigger retries.
    pub fn flush(&mut self, storage: &mut dyn LogStorage) -> Result<FlushReport> {
        if self.pending.is_empty() {
            return Ok(FlushReport {
                records: 0,
                bytes: 0,
                durable_len: storage.len(),
            });
        }
        let mut bytes = Vec::new();
        if storage.is_empty() {
            bytes.extend_from_slice(MAGIC);
        }
        for r in &self.pending {
            r.encode_into(&mut bytes);
        }
        storage.append(&bytes)?;
        let records = self.pending.len();
        self.pending.clear();
        self.updates = 0;
        Ok(FlushReport {
            records,
            bytes: bytes.len() as u64,
            durable_len: storage.len(),
        })
    }

    /// Rebuilds cursor state during recovery without queueing records.
    pub(crate) fn replay_action(&mut self, entry: ActionLogEntry) -> Result<()> {
        self.record(entry)?;
        self.pending.clear();
        self.updates = 0;
        Ok(())
    }

    pub(crate) fn replay_undo(&mut self, seq: u64) -> Result<()> {
        if self.undo_target()?.seq != seq {
            return Err(Error::CorruptLog(format!("undo of {seq} does not match cursor")));
        }
        self.cursor -= 1;
        Ok(())
    }

    pub(crate) fn replay_redo(&mut self, seq: u64) -> Result<()> {
        if self.redo_target()?.seq != seq {
            return Err(Error::CorruptLog(format!("redo of {seq} does not match cursor")));
        }
        self.cursor += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::ErrorCode;
    use crate::groups::GroupKey;
    use crate::storage::{decode_log, MemoryStorage};
    use crate::wrangle::{ActionKind, Scope};

    fn entry(seq: u64) -> ActionLogEntry {
        ActionLogEntry {
            seq,
            action: RepairAction::new(
                ActionKind::DeleteRows,
                GroupKey::new("c", "v", "n"),
                Scope::Errors(ErrorCode::Missing),
            ),
            delta: SnapshotDelta::new(seq),
            timestamp: seq * 10,
        }
    }

    #[test]
    fn record_truncates_redo_tail() {
        let mut h = History::new(FlushPolicy::default());
        for s in 1..=3 {
            h.record(entry(s)).unwrap();
        }
        h.mark_undo(0).unwrap();
        h.mark_undo(0).unwrap();
        assert_eq!(h.cursor(), 1);
        h.record(entry(2)).unwrap();
        assert_eq!(h.entries().len(), 2);
        assert_eq!(h.redo_target(), Err(Error::NothingToRedo));
    }

    #[test]
    fn sequence_gap() {
        let mut h = History::new(FlushPolicy::default());
        assert_eq!(
            h.record(entry(2)),
            Err(Error::SequenceGap { expected: 1, got: 2 })
        );
    }

    #[test]
    fn undo_redo_bounds() {
        let mut h = History::new(FlushPolicy::default());
        assert_eq!(h.mark_undo(0), Err(Error::NothingToUndo));
        h.record(entry(1)).unwrap();
        assert_eq!(h.mark_redo(0), Err(Error::NothingToRedo));
        assert_eq!(h.mark_undo(0), Ok(1));
        assert_eq!(h.mark_redo(0), Ok(1));
        assert_eq!(h.effective().len(), 1);
    }

    #[test]
    fn third_update_is_due() {
        let mut h = History::new(FlushPolicy::default());
        let mut s = MemoryStorage::new();
        h.record(entry(1)).unwrap();
        h.record(entry(2)).unwrap();
        assert!(!h.flush_due());
        h.mark_undo(1).unwrap();
        assert!(h.flush_due());
        let report = h.flush(&mut s).unwrap();
        assert_eq!(report.records, 3);
        assert_eq!(report.durable_len, s.len());
        assert!(!h.flush_due());
        let decoded = decode_log(&s.bytes()).unwrap();
        assert_eq!(decoded.records.len(), 3);
        assert_eq!(h.flush(&mut s).unwrap().records, 0);
    }

    #[test]
    fn failed_flush_keeps_pending() {
        let mut h = History::new(FlushPolicy::new(1).unwrap());
        let mut s = MemoryStorage::new();
        h.record(entry(1)).unwrap();
        s.fail_next(1);
        assert!(matches!(h.flush(&mut s), Err(Error::StorageFailure(_))));
        assert_eq!(h.pending().len(), 1);
        assert!(h.flush_due());
        assert_eq!(h.flush(&mut s).unwrap().records, 1);
        assert!(FlushPolicy::new(0).is_err());
    }
}
