//! Durable storage on SQLite (WAL journal).
//!
//! Three record families live in one database file: `events` and
//! `tree_nodes` are insert-only (enforced by triggers as well as by the
//! absence of any update path here), `state` holds the mutable kernel state
//! (actors, balances, envelopes, holds, counters) as JSON documents.

use std::path::{Path, PathBuf};

use rusqlite::{params, params_from_iter, Connection, OpenFlags, OptionalExtension, Transaction};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{KernelError, Result};
use crate::model::Event;
use crate::tlog::{self, Digest, NodeSink, NodeStore, TlogError};

pub const DB_FILE: &str = "kernel.db";
/// Held with an exclusive OS lock while a writer is open, so two processes
/// can never both act as committer. Released by the OS if the process dies.
pub const LOCK_FILE: &str = "kernel.lock";

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS events (
    seq        INTEGER PRIMARY KEY,
    id         TEXT NOT NULL UNIQUE,
    actor      TEXT NOT NULL,
    type       TEXT NOT NULL,
    target     TEXT NOT NULL,
    timestamp  INTEGER NOT NULL,
    event_hash BLOB NOT NULL,
    record     BLOB NOT NULL
);
CREATE INDEX IF NOT EXISTS events_by_actor ON events(actor, seq);
CREATE INDEX IF NOT EXISTS events_by_target ON events(target, seq);
CREATE INDEX IF NOT EXISTS events_by_time ON events(timestamp, seq);

CREATE TABLE IF NOT EXISTS tree_nodes (
    level INTEGER NOT NULL,
    idx   INTEGER NOT NULL,
    hash  BLOB NOT NULL,
    PRIMARY KEY (level, idx)
) WITHOUT ROWID;

CREATE TABLE IF NOT EXISTS state (
    kind  TEXT NOT NULL,
    key   TEXT NOT NULL,
    value TEXT NOT NULL,
    PRIMARY KEY (kind, key)
) WITHOUT ROWID;

CREATE TABLE IF NOT EXISTS checkpoints (
    tree_size INTEGER PRIMARY KEY,
    note      TEXT NOT NULL
);

CREATE TRIGGER IF NOT EXISTS events_no_update BEFORE UPDATE ON events
BEGIN SELECT RAISE(ABORT, 'events are append-only'); END;
CREATE TRIGGER IF NOT EXISTS events_no_delete BEFORE DELETE ON events
BEGIN SELECT RAISE(ABORT, 'events are append-only'); END;
CREATE TRIGGER IF NOT EXISTS tree_nodes_no_update BEFORE UPDATE ON tree_nodes
BEGIN SELECT RAISE(ABORT, 'tree nodes are append-only'); END;
CREATE TRIGGER IF NOT EXISTS tree_nodes_no_delete BEFORE DELETE ON tree_nodes
BEGIN SELECT RAISE(ABORT, 'tree nodes are append-only'); END;
"#;

/// fsync policy for commits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Durability {
    /// fsync the WAL on every commit.
    #[default]
    Full,
    /// fsync at checkpoints only; a power cut may lose the latest commits
    /// but never corrupts the database.
    Normal,
}

/// Record families in the `state` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Actor,
    Balance,
    Envelope,
    Hold,
    Meta,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Actor => "actor",
            Kind::Balance => "balance",
            Kind::Envelope => "envelope",
            Kind::Hold => "hold",
            Kind::Meta => "meta",
        }
    }
}

/// Event query. All bounds are inclusive; unset fields do not filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub from_seq: Option<u64>,
    pub to_seq: Option<u64>,
    pub actor: Option<String>,
    /// Matches the target itself and everything below it.
    pub target_prefix: Option<String>,
    pub since: Option<u64>,
    pub until: Option<u64>,
    pub limit: Option<u64>,
}

impl EventFilter {
    pub fn seq_range(from: u64, to: u64) -> Self {
        EventFilter {
            from_seq: Some(from),
            to_seq: Some(to),
            ..Default::default()
        }
    }
}

fn i(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

/// Read queries over any connection or open transaction.
#[derive(Clone, Copy)]
pub struct Db<'a>(&'a Connection);

impl<'a> Db<'a> {
    pub fn event_count(&self) -> Result<u64> {
        let n: i64 = self.0.query_row("SELECT COALESCE(MAX(seq), 0) FROM events", [], |r| r.get(0))?;
        Ok(n as u64)
    }

    pub fn event(&self, seq: u64) -> Result<Option<Event>> {
        let rec: Option<Vec<u8>> = self
            .0
            .prepare_cached("SELECT record FROM events WHERE seq = ?1")?
            .query_row([i(seq)], |r| r.get(0))
            .optional()?;
        rec.map(|b| decode_event(&b)).transpose()
    }

    /// Raw stored bytes of event `seq`.
    pub fn event_record(&self, seq: u64) -> Result<Option<Vec<u8>>> {
        Ok(self
            .0
            .prepare_cached("SELECT record FROM events WHERE seq = ?1")?
            .query_row([i(seq)], |r| r.get(0))
            .optional()?)
    }

    pub fn read_events(&self, f: &EventFilter) -> Result<Vec<Event>> {
        let mut sql = String::from("SELECT record FROM events WHERE 1=1");
        let mut args: Vec<rusqlite::types::Value> = Vec::new();
        let mut push = |clause: &str, v: rusqlite::types::Value| {
            sql.push_str(clause);
            args.push(v);
        };
        if let Some(v) = f.from_seq {
            push(" AND seq >= ?", i(v).into());
        }
        if let Some(v) = f.to_seq {
            push(" AND seq <= ?", i(v).into());
        }
        if let Some(v) = &f.actor {
            push(" AND actor = ?", v.clone().into());
        }
        if let Some(v) = f.since {
            push(" AND timestamp >= ?", i(v).into());
        }
        if let Some(v) = f.until {
            push(" AND timestamp <= ?", i(v).into());
        }
        if let Some(p) = &f.target_prefix {
            let p = p.trim_end_matches('/').to_string();
            sql.push_str(" AND (target = ? OR substr(target, 1, ?) = ?)");
            args.push(p.clone().into());
            args.push((p.len() as i64 + 1).into());
            args.push(format!("{p}/").into());
        }
        sql.push_str(" ORDER BY seq");
        if let Some(l) = f.limit {
            sql.push_str(&format!(" LIMIT {}", i(l)));
        }
        let mut stmt = self.0.prepare(&sql)?;
        let rows = stmt.query_map(params_from_iter(args), |r| r.get::<_, Vec<u8>>(0))?;
        rows.map(|b| decode_event(&b?)).collect()
    }

    pub fn record<T: DeserializeOwned>(&self, kind: Kind, key: &str) -> Result<Option<T>> {
        let v: Option<String> = self
            .0
            .prepare_cached("SELECT value FROM state WHERE kind = ?1 AND key = ?2")?
            .query_row(params![kind.as_str(), key], |r| r.get(0))
            .optional()?;
        v.map(|s| serde_json::from_str(&s).map_err(|e| KernelError::Format(format!("{} {key}: {e}", kind.as_str()))))
            .transpose()
    }

    pub fn records<T: DeserializeOwned>(&self, kind: Kind) -> Result<Vec<T>> {
        let mut stmt = self
            .0
            .prepare_cached("SELECT key, value FROM state WHERE kind = ?1 ORDER BY key")?;
        let rows = stmt.query_map([kind.as_str()], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?;
        rows.map(|row| {
            let (key, value) = row?;
            serde_json::from_str(&value).map_err(|e| KernelError::Format(format!("{} {key}: {e}", kind.as_str())))
        })
        .collect()
    }

    pub fn checkpoint(&self, tree_size: u64) -> Result<Option<String>> {
        Ok(self
            .0
            .prepare_cached("SELECT note FROM checkpoints WHERE tree_size = ?1")?
            .query_row([i(tree_size)], |r| r.get(0))
            .optional()?)
    }

    /// Most recent published checkpoint with size ≤ `max_size`.
    pub fn latest_checkpoint(&self, max_size: u64) -> Result<Option<(u64, String)>> {
        Ok(self
            .0
            .prepare_cached(
                "SELECT tree_size, note FROM checkpoints WHERE tree_size <= ?1 ORDER BY tree_size DESC LIMIT 1",
            )?
            .query_row([i(max_size)], |r| Ok((r.get::<_, i64>(0)? as u64, r.get(1)?)))
            .optional()?)
    }

    pub fn checkpoints(&self) -> Result<Vec<(u64, String)>> {
        let mut stmt = self.0.prepare_cached("SELECT tree_size, note FROM checkpoints ORDER BY tree_size")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, i64>(0)? as u64, r.get(1)?)))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn root(&self, tree_size: u64) -> Result<Option<Digest>> {
        Ok(tlog::root(self, tree_size)?)
    }

    pub fn prove_inclusion(&self, tree_size: u64, leaf_index: u64) -> Result<tlog::InclusionProof> {
        Ok(tlog::prove_inclusion(self, tree_size, leaf_index)?)
    }

    pub fn prove_consistency(&self, old_size: u64, new_size: u64) -> Result<tlog::ConsistencyProof> {
        Ok(tlog::prove_consistency(self, old_size, new_size)?)
    }
}

impl NodeStore for Db<'_> {
    fn node(&self, level: u32, index: u64) -> std::result::Result<Option<Digest>, TlogError> {
        node_at(self.0, level, index)
    }
}

fn node_at(conn: &Connection, level: u32, index: u64) -> std::result::Result<Option<Digest>, TlogError> {
    let storage = |e: rusqlite::Error| TlogError::Storage(e.to_string());
    let bytes: Option<Vec<u8>> = conn
        .prepare_cached("SELECT hash FROM tree_nodes WHERE level = ?1 AND idx = ?2")
        .map_err(storage)?
        .query_row(params![level, i(index)], |r| r.get(0))
        .optional()
        .map_err(storage)?;
    match bytes {
        None => Ok(None),
        Some(b) => Digest::from_slice(&b)
            .map(Some)
            .ok_or_else(|| TlogError::Storage(format!("node ({level}, {index}) is not 32 bytes"))),
    }
}

fn decode_event(bytes: &[u8]) -> Result<Event> {
    serde_json::from_slice(bytes).map_err(|e| KernelError::Format(format!("stored event: {e}")))
}

fn configure(conn: &Connection, durability: Durability) -> Result<()> {
    conn.busy_timeout(std::time::Duration::from_secs(10))?;
    conn.pragma_update(None, "journal_mode", "WAL")?;
    conn.pragma_update(
        None,
        "synchronous",
        match durability {
            Durability::Full => "FULL",
            Durability::Normal => "NORMAL",
        },
    )?;
    conn.pragma_update(None, "foreign_keys", "ON")?;
    Ok(())
}

/// The single read-write handle, owned by the committer.
pub struct Store {
    conn: Connection,
    dir: PathBuf,
    _lock: std::fs::File,
}

impl Store {
    /// Opens (creating if needed) the database in `dir`.
    pub fn open(dir: &Path, durability: Durability) -> Result<Store> {
        std::fs::create_dir_all(dir)?;
        let lock = std::fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => {
                return Err(KernelError::State(format!(
                    "{} is in use by another kernel",
                    dir.display()
                )))
            }
            Err(std::fs::TryLockError::Error(e)) => return Err(e.into()),
        }
        let conn = Connection::open(dir.join(DB_FILE))?;
        configure(&conn, durability)?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store {
            conn,
            dir: dir.to_path_buf(),
            _lock: lock,
        })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(DB_FILE).exists()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn db(&self) -> Db<'_> {
        Db(&self.conn)
    }

    pub fn begin(&mut self) -> Result<Writer<'_>> {
        let tx = self.conn.transaction_with_behavior(rusqlite::TransactionBehavior::Immediate)?;
        let size = Db(&tx).event_count()?;
        Ok(Writer { tx, size })
    }

    /// A separate read-only connection for concurrent snapshot reads.
    pub fn reader(&self) -> Result<Reader> {
        Reader::open(&self.dir)
    }

    /// Rewrites a committed event's stored record, bypassing the append-only
    /// guards. Models an attacker with raw file access.
    #[cfg(feature = "tamper-hook")]
    pub fn tamper_event(&mut self, seq: u64, edit: impl FnOnce(&mut serde_json::Value)) -> Result<()> {
        let record = self
            .db()
            .event_record(seq)?
            .ok_or_else(|| KernelError::NotFound(format!("event {seq}")))?;
        let mut doc: serde_json::Value =
            serde_json::from_slice(&record).map_err(|e| KernelError::Format(e.to_string()))?;
        edit(&mut doc);
        let bytes = crate::canonical::canonical_encode(&doc)?;
        let tx = self.conn.transaction()?;
        tx.execute_batch("DROP TRIGGER events_no_update;")?;
        tx.execute("UPDATE events SET record = ?1 WHERE seq = ?2", params![bytes, i(seq)])?;
        tx.execute_batch(
            "CREATE TRIGGER events_no_update BEFORE UPDATE ON events \
             BEGIN SELECT RAISE(ABORT, 'events are append-only'); END;",
        )?;
        tx.commit()?;
        Ok(())
    }
}

/// One atomic unit of work: events, tree nodes and state records become
/// visible together on `commit`, or not at all.
pub struct Writer<'a> {
    tx: Transaction<'a>,
    size: u64,
}

impl<'a> Writer<'a> {
    pub fn db(&self) -> Db<'_> {
        Db(&self.tx)
    }

    /// Log length including events appended in this transaction.
    pub fn size(&self) -> u64 {
        self.size
    }

    /// Appends `event` to the events table and its hash to the tree.
    pub fn append_event(&mut self, event: &Event) -> Result<()> {
        if event.seq != self.size + 1 {
            return Err(KernelError::Consistency(format!(
                "append of seq {} to a log of length {}",
                event.seq, self.size
            )));
        }
        let record = event.to_canonical_json()?;
        self.tx
            .prepare_cached(
                "INSERT INTO events (seq, id, actor, type, target, timestamp, event_hash, record) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            )?
            .execute(params![
                i(event.seq),
                event.id,
                event.actor.as_str(),
                event.action_type.as_str(),
                event.target,
                i(event.timestamp),
                event.event_hash.as_bytes().as_slice(),
                record,
            ])?;
        let mut nodes = TxNodes(&self.tx);
        self.size = tlog::append(&mut nodes, self.size, event.event_hash).map_err(tlog_to_kernel)?;
        Ok(())
    }

    pub fn put_record<T: Serialize>(&mut self, kind: Kind, key: &str, value: &T) -> Result<()> {
        let json = serde_json::to_string(value).map_err(|e| KernelError::Format(e.to_string()))?;
        self.tx
            .prepare_cached("INSERT OR REPLACE INTO state (kind, key, value) VALUES (?1, ?2, ?3)")?
            .execute(params![kind.as_str(), key, json])?;
        Ok(())
    }

    pub fn put_checkpoint(&mut self, tree_size: u64, note: &str) -> Result<()> {
        self.tx
            .prepare_cached("INSERT OR IGNORE INTO checkpoints (tree_size, note) VALUES (?1, ?2)")?
            .execute(params![i(tree_size), note])?;
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        self.tx.commit()?;
        Ok(())
    }
}

fn tlog_to_kernel(e: TlogError) -> KernelError {
    KernelError::Consistency(e.to_string())
}

struct TxNodes<'t>(&'t Connection);

impl NodeStore for TxNodes<'_> {
    fn node(&self, level: u32, index: u64) -> std::result::Result<Option<Digest>, TlogError> {
        node_at(self.0, level, index)
    }
}

impl NodeSink for TxNodes<'_> {
    fn put_node(&mut self, level: u32, index: u64, digest: Digest) -> std::result::Result<(), TlogError> {
        let res = self
            .0
            .prepare_cached("INSERT INTO tree_nodes (level, idx, hash) VALUES (?1, ?2, ?3)")
            .and_then(|mut s| s.execute(params![level, i(index), digest.as_bytes().as_slice()]));
        match res {
            Ok(_) => Ok(()),
            Err(rusqlite::Error::SqliteFailure(e, _)) if e.code == rusqlite::ErrorCode::ConstraintViolation => {
                Err(TlogError::NodeExists { level, index })
            }
            Err(e) => Err(TlogError::Storage(e.to_string())),
        }
    }
}

/// Read-only connection used outside the committer.
pub struct Reader {
    conn: Connection,
}

impl Reader {
    pub fn open(dir: &Path) -> Result<Reader> {
        let path = dir.join(DB_FILE);
        if !path.exists() {
            return Err(KernelError::NotFound(format!("no kernel database at {}", path.display())));
        }
        let conn = Connection::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
        )?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        Ok(Reader { conn })
    }

    /// Pins a consistent view of the committed log for the life of the
    /// returned snapshot.
    pub fn snapshot(&mut self) -> Result<Snapshot<'_>> {
        let tx = self.conn.transaction_with_behavior(rusqlite::TransactionBehavior::Deferred)?;
        let size = Db(&tx).event_count()?;
        Ok(Snapshot { tx, size })
    }

    pub fn db(&self) -> Db<'_> {
        Db(&self.conn)
    }
}

pub struct Snapshot<'a> {
    tx: Transaction<'a>,
    size: u64,
}

impl Snapshot<'_> {
    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn db(&self) -> Db<'_> {
        Db(&self.tx)
    }

    pub fn root(&self) -> Result<Option<Digest>> {
        self.db().root(self.size)
    }
}
