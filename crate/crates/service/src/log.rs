//! Append-only, size-rotated NDJSON log of estimate records.
//!
//! A single writer thread owns the open segment. Callers hand it a finished
//! line and wait for the acknowledgement, which is only sent after the line
//! has reached the operating system (and the disk, with [`SyncPolicy::Fsync`]).
//! Lines queued while a write is in progress are committed together.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use carbontag_core::Grade;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::api::EstimateRecord;

const SEGMENT_PREFIX: &str = "estimates-";
const SEGMENT_SUFFIX: &str = ".ndjson";
const MAX_BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPolicy {
    /// `write(2)` before acknowledging; survives a process crash.
    Flush,
    /// `fsync(2)` before acknowledging; survives power loss.
    Fsync,
}

#[derive(Debug, Clone)]
pub struct LogConfig {
    pub dir: PathBuf,
    pub max_segment_bytes: u64,
    pub sync: SyncPolicy,
}

impl LogConfig {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), max_segment_bytes: 64 * 1024 * 1024, sync: SyncPolicy::Flush }
    }
}

struct Append {
    line: Vec<u8>,
    ack: oneshot::Sender<io::Result<()>>,
}

/// Handle to the writer thread. Dropping it drains the queue and stops the thread.
pub struct LogWriter {
    tx: Option<mpsc::Sender<Append>>,
    handle: Option<thread::JoinHandle<()>>,
    dir: PathBuf,
}

fn segment_name(index: u64) -> String {
    format!("{SEGMENT_PREFIX}{index:06}{SEGMENT_SUFFIX}")
}

fn segment_index(path: &Path) -> Option<u64> {
    path.file_name()?
        .to_str()?
        .strip_prefix(SEGMENT_PREFIX)?
        .strip_suffix(SEGMENT_SUFFIX)?
        .parse()
        .ok()
}

/// Segment files of a log directory, oldest first.
pub fn segments(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut segs: Vec<(u64, PathBuf)> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| segment_index(&p).map(|i| (i, p)))
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => vec![],
        Err(e) => return Err(e),
    };
    segs.sort();
    Ok(segs.into_iter().map(|(_, p)| p).collect())
}

struct Segments {
    config: LogConfig,
    index: u64,
    file: File,
    size: u64,
}

impl Segments {
    /// Always starts a fresh segment so a torn tail from a previous crash is
    /// never extended.
    fn open(config: LogConfig) -> io::Result<Self> {
        fs::create_dir_all(&config.dir)?;
        let next = segments(&config.dir)?.last().and_then(|p| segment_index(p)).map_or(0, |i| i + 1);
        let file = Self::create(&config.dir, next)?;
        Ok(Self { config, index: next, file, size: 0 })
    }

    fn create(dir: &Path, index: u64) -> io::Result<File> {
        OpenOptions::new().create(true).append(true).open(dir.join(segment_name(index)))
    }

    fn write_batch(&mut self, buf: &[u8]) -> io::Result<()> {
        if self.size > 0 && self.size + buf.len() as u64 > self.config.max_segment_bytes {
            self.file.sync_all()?;
            self.index += 1;
            self.file = Self::create(&self.config.dir, self.index)?;
            self.size = 0;
        }
        self.file.write_all(buf)?;
        self.size += buf.len() as u64;
        if self.config.sync == SyncPolicy::Fsync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

fn run_writer(mut segs: Segments, rx: mpsc::Receiver<Append>) {
    let mut buf = Vec::with_capacity(1 << 16);
    let mut acks = Vec::with_capacity(MAX_BATCH);
    while let Ok(first) = rx.recv() {
        buf.clear();
        buf.extend_from_slice(&first.line);
        acks.push(first.ack);
        while acks.len() < MAX_BATCH {
            match rx.try_recv() {
                Ok(next) => {
                    buf.extend_from_slice(&next.line);
                    acks.push(next.ack);
                }
                Err(_) => break,
            }
        }
        let res = segs.write_batch(&buf);
        if let Err(e) = &res {
            log::error!("result log write failed: {e}");
        }
        for ack in acks.drain(..) {
            let r = match &res {
                Ok(()) => Ok(()),
                Err(e) => Err(io::Error::new(e.kind(), e.to_string())),
            };
            let _ = ack.send(r);
        }
    }
    let _ = segs.file.sync_all();
}

impl LogWriter {
    pub fn open(config: LogConfig) -> io::Result<Self> {
        let dir = config.dir.clone();
        let segs = Segments::open(config)?;
        let (tx, rx) = mpsc::channel();
        let handle = thread::Builder::new()
            .name("carbontag-log".into())
            .spawn(move || run_writer(segs, rx))?;
        Ok(Self { tx: Some(tx), handle: Some(handle), dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one record; resolves once it is committed.
    pub async fn append(&self, record: &EstimateRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        let (ack, done) = oneshot::channel();
        self.tx
            .as_ref()
            .expect("writer alive until drop")
            .send(Append { line, ack })
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "log writer stopped"))?;
        done.await.map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "log writer stopped"))?
    }
}

impl Drop for LogWriter {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Grade histogram over persisted records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub total: u64,
    pub by_grade: BTreeMap<Grade, u64>,
    pub by_model_version: BTreeMap<String, BTreeMap<Grade, u64>>,
    /// Unparsable lines, skipped.
    pub corrupt_lines: u64,
}

impl Default for LogStats {
    fn default() -> Self {
        Self {
            total: 0,
            by_grade: Grade::ALL.iter().map(|&g| (g, 0)).collect(),
            by_model_version: BTreeMap::new(),
            corrupt_lines: 0,
        }
    }
}

#[derive(Deserialize)]
struct RecordLabel {
    response: LabelOnly,
}

#[derive(Deserialize)]
struct LabelOnly {
    label: Grade,
    model_version: String,
}

/// Scans every segment of a log directory. Corrupt lines are counted and
/// skipped; a missing directory is an empty log.
pub fn scan_stats(dir: &Path) -> io::Result<LogStats> {
    let mut stats = LogStats::default();
    for seg in segments(dir)? {
        let reader = BufReader::new(File::open(&seg)?);
        for line in reader.split(b'\n') {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            match serde_json::from_slice::<RecordLabel>(&line) {
                Ok(r) => {
                    stats.total += 1;
                    *stats.by_grade.entry(r.response.label).or_default() += 1;
                    *stats
                        .by_model_version
                        .entry(r.response.model_version)
                        .or_default()
                        .entry(r.response.label)
                        .or_default() += 1;
                }
                Err(_) => stats.corrupt_lines += 1,
            }
        }
    }
    if stats.corrupt_lines > 0 {
        log::warn!("skipped {} corrupt record line(s) in {}", stats.corrupt_lines, dir.display());
    }
    Ok(stats)
}

/// Reads every well-formed record, oldest first.
pub fn read_records(dir: &Path) -> io::Result<Vec<EstimateRecord>> {
    let mut out = Vec::new();
    for seg in segments(dir)? {
        for line in BufReader::new(File::open(&seg)?).split(b'\n') {
            let line = line?;
            if let Ok(r) = serde_json::from_slice(&line) {
                out.push(r);
            }
        }
    }
    Ok(out)
}
