use super::{check_qp, EncodeBackend, EncodeError, EncodeRequest, KeyedLocks, Measurement};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Content address of one encode: clip digest, qp, the per-flag
/// multipliers the encoder will actually see, the profile and the backend
/// version.
pub fn cache_key(clip_digest: &str, request: &EncodeRequest, backend_version: &str) -> String {
    let m = request.multipliers.routed();
    let material = serde_json::json!({
        "clip": clip_digest,
        "qp": request.qp,
        // exact bit patterns, so 1.0 and 1.0000000000000002 never collide
        "k": [m.all.to_bits(), m.kf.to_bits(), m.gf_arf.to_bits()],
        "profile": request.profile,
        "backend": backend_version,
    });
    hex::encode(Sha256::digest(material.to_string()))
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    measurement: Measurement,
}

/// Memoises another backend in memory and, optionally, on disk. Concurrent
/// requests for one key wait for a single underlying encode; failures are
/// never cached.
pub struct CachedBackend<B> {
    inner: B,
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Measurement>>,
    locks: KeyedLocks,
    hits: AtomicU64,
}

impl<B: EncodeBackend> CachedBackend<B> {
    pub fn in_memory(inner: B) -> Self {
        CachedBackend {
            inner,
            dir: None,
            memory: Mutex::new(HashMap::new()),
            locks: KeyedLocks::default(),
            hits: AtomicU64::new(0),
        }
    }

    pub fn persistent(inner: B, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedBackend {
            dir: Some(dir),
            ..CachedBackend::in_memory(inner)
        })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    fn entry_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    fn load(&self, key: &str) -> Option<Measurement> {
        if let Some(m) = self.memory.lock().unwrap_or_else(|p| p.into_inner()).get(key) {
            return Some(m.clone());
        }
        let path = self.entry_path(key)?;
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Entry>(&text) {
            Ok(e) if e.key == key => Some(e.measurement),
            _ => {
                warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    fn store(&self, key: &str, m: &Measurement) -> std::io::Result<()> {
        if let Some(path) = self.entry_path(key) {
            let dir = path.parent().expect("entry paths have a parent");
            fs::create_dir_all(dir)?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            let entry = Entry {
                key: key.to_string(),
                measurement: m.clone(),
            };
            serde_json::to_writer(&mut tmp, &entry)?;
            tmp.flush()?;
            tmp.persist(&path).map_err(|e| e.error)?;
        }
        self.memory
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(key.to_string(), m.clone());
        Ok(())
    }
}

impl<B: EncodeBackend> EncodeBackend for CachedBackend<B> {
    fn version(&self) -> String {
        self.inner.version()
    }

    fn qp_range(&self) -> (i32, i32) {
        self.inner.qp_range()
    }

    fn clip_digest(&self, request: &EncodeRequest) -> Result<String, EncodeError> {
        self.inner.clip_digest(request)
    }

    fn encode_and_measure(&self, request: &EncodeRequest) -> Result<Measurement, EncodeError> {
        check_qp(self, request.qp)?;
        let digest = self.inner.clip_digest(request)?;
        let key = cache_key(&digest, request, &self.inner.version());
        let lock = self.locks.get(&key);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(m) = self.load(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(m);
        }
        debug!("cache miss {key} ({} qp {})", request.clip_id, request.qp);
        let m = self.inner.encode_and_measure(request)?;
        self.store(&key, &m)?;
        Ok(m)
    }

    fn launches(&self) -> u64 {
        self.inner.launches()
    }
}

impl<B> CachedBackend<B> {
    /// Directory the cache writes into, if persistent.
    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{ProxyProfile, SyntheticBackend};
    use crate::multipliers::{MultiplierAssignment, OptimizationMode};
    use crate::rdmodel::SyntheticClipModel;
    use std::sync::atomic::AtomicBool;

    fn model() -> SyntheticClipModel {
        SyntheticClipModel::new("a", 0.999, 0.004, 5.0, 0.04, vec![2.0], vec![0.02], 0.0).unwrap()
    }

    fn req(mode: OptimizationMode, k: f64, qp: i32) -> EncodeRequest {
        EncodeRequest {
            clip_id: "a".into(),
            source_path: PathBuf::new(),
            qp,
            multipliers: MultiplierAssignment::new(mode, vec![k]).unwrap(),
            profile: ProxyProfile::native("4K-S2", 2),
            work_dir: PathBuf::new(),
        }
    }

    #[test]
    fn identical_keys_launch_once() {
        let c = CachedBackend::in_memory(SyntheticBackend::new([model()]));
        let a = c.encode_and_measure(&req(OptimizationMode::AllFrames, 1.5, 39)).unwrap();
        let b = c.encode_and_measure(&req(OptimizationMode::AllFrames, 1.5, 39)).unwrap();
        assert_eq!(a, b);
        assert_eq!((c.launches(), c.hits()), (1, 1));
        c.encode_and_measure(&req(OptimizationMode::AllFrames, 1.5, 40)).unwrap();
        assert_eq!(c.launches(), 2);
    }

    #[test]
    fn identity_is_shared_across_modes() {
        // Every mode at k = 1 hands the encoder the same flags.
        let c = CachedBackend::in_memory(SyntheticBackend::new([model()]));
        c.encode_and_measure(&req(OptimizationMode::Kf, 1.0, 27)).unwrap();
        c.encode_and_measure(&req(OptimizationMode::GfArf, 1.0, 27)).unwrap();
        assert_eq!(c.launches(), 1);
        c.encode_and_measure(&req(OptimizationMode::GfArf, 1.1, 27)).unwrap();
        assert_eq!(c.launches(), 2);
    }

    #[test]
    fn disk_entries_survive_a_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let first = CachedBackend::persistent(SyntheticBackend::new([model()]), dir.path()).unwrap();
        let a = first.encode_and_measure(&req(OptimizationMode::Kf, 2.2, 49)).unwrap();
        let second = CachedBackend::persistent(SyntheticBackend::new([model()]), dir.path()).unwrap();
        let b = second.encode_and_measure(&req(OptimizationMode::Kf, 2.2, 49)).unwrap();
        assert_eq!(a.point.bitrate.to_bits(), b.point.bitrate.to_bits());
        assert_eq!(second.launches(), 0);
    }

    #[test]
    fn out_of_range_is_rejected_before_the_inner_backend() {
        let c = CachedBackend::in_memory(SyntheticBackend::new([model()]));
        assert!(matches!(
            c.encode_and_measure(&req(OptimizationMode::Kf, 1.0, 300)),
            Err(EncodeError::OutOfRange { .. })
        ));
        assert_eq!(c.launches(), 0);
    }

    struct Flaky {
        fail: AtomicBool,
        inner: SyntheticBackend,
    }

    impl EncodeBackend for Flaky {
        fn version(&self) -> String {
            "flaky".into()
        }
        fn qp_range(&self) -> (i32, i32) {
            (1, 63)
        }
        fn clip_digest(&self, r: &EncodeRequest) -> Result<String, EncodeError> {
            self.inner.clip_digest(r)
        }
        fn encode_and_measure(&self, r: &EncodeRequest) -> Result<Measurement, EncodeError> {
            if self.fail.swap(false, Ordering::SeqCst) {
                return Err(EncodeError::ParseFailure("boom".into()));
            }
            self.inner.encode_and_measure(r)
        }
        fn launches(&self) -> u64 {
            self.inner.launches()
        }
    }

    #[test]
    fn failures_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let flaky = Flaky {
            fail: AtomicBool::new(true),
            inner: SyntheticBackend::new([model()]),
        };
        let c = CachedBackend::persistent(flaky, dir.path()).unwrap();
        let r = req(OptimizationMode::Kf, 1.0, 39);
        assert!(c.encode_and_measure(&r).is_err());
        let files = walk(dir.path());
        assert!(files.is_empty(), "{files:?}");
        assert!(c.encode_and_measure(&r).is_ok());
        assert_eq!(walk(dir.path()).len(), 1);
    }

    fn walk(p: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for e in fs::read_dir(p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
        out
    }
}
