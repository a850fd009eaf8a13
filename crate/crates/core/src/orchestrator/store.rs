use super::{OptimizationMode, OptimizationRecord};
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Identity of a record for resume purposes. Any change to the clip
/// content, the profiles or the search settings yields a fresh key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub clip_digest: String,
    pub mode: OptimizationMode,
    pub search_profile: String,
    pub final_profile: String,
    pub config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Line {
    key: RecordKey,
    record: OptimizationRecord,
}

/// Append-only JSON-lines file of optimisation records. A later line for
/// the same key supersedes earlier ones; a torn final line (from a crash
/// mid-write) is ignored.
pub struct ResultsStore {
    path: PathBuf,
    file: Mutex<File>,
    entries: Mutex<HashMap<RecordKey, OptimizationRecord>>,
}

fn read_lines(path: &Path) -> io::Result<Vec<Line>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line) {
            Ok(l) => out.push(l),
            Err(e) => warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

impl ResultsStore {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let entries: HashMap<_, _> = read_lines(&path)?.into_iter().map(|l| (l.key, l.record)).collect();
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        // Terminate a torn last line so the next append starts cleanly.
        let len = file.metadata()?.len();
        if len > 0 {
            file.seek(SeekFrom::Start(len - 1))?;
            let mut last = [0u8];
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(ResultsStore {
            path,
            file: Mutex::new(file),
            entries: Mutex::new(entries),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &RecordKey) -> Option<OptimizationRecord> {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes one line and flushes it before returning.
    pub fn append(&self, key: &RecordKey, record: &OptimizationRecord) -> io::Result<()> {
        let mut text = serde_json::to_string(&Line {
            key: key.clone(),
            record: record.clone(),
        })?;
        text.push('\n');
        {
            let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        self.entries
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(key.clone(), record.clone());
        Ok(())
    }
}

/// The latest record per key, in order of each key's first appearance.
pub fn load_records(path: &Path) -> io::Result<Vec<OptimizationRecord>> {
    let mut order: Vec<RecordKey> = Vec::new();
    let mut latest: HashMap<RecordKey, OptimizationRecord> = HashMap::new();
    if !path.exists() {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("{} does not exist", path.display())));
    }
    for l in read_lines(path)? {
        if !latest.contains_key(&l.key) {
            order.push(l.key.clone());
        }
        latest.insert(l.key, l.record);
    }
    Ok(order.into_iter().filter_map(|k| latest.remove(&k)).collect())
}
