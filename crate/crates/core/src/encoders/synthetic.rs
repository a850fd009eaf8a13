use super::{check_qp, EncodeBackend, EncodeError, EncodeRequest, Measurement};
use crate::bdrate::Metric;
use crate::rdmodel::{synthetic_encode, SyntheticClipModel, QP_RANGE};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

/// Serves encodes from registered [`SyntheticClipModel`]s. The profile is
/// ignored, so proxy and final phases see the same surface.
#[derive(Debug, Default)]
pub struct SyntheticBackend {
    models: HashMap<String, SyntheticClipModel>,
    evaluations: AtomicU64,
}

impl SyntheticBackend {
    pub fn new(models: impl IntoIterator<Item = SyntheticClipModel>) -> Self {
        SyntheticBackend {
            models: models.into_iter().map(|m| (m.clip_id.clone(), m)).collect(),
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn model(&self, clip_id: &str) -> Option<&SyntheticClipModel> {
        self.models.get(clip_id)
    }

    fn lookup(&self, clip_id: &str) -> Result<&SyntheticClipModel, EncodeError> {
        self.models
            .get(clip_id)
            .ok_or_else(|| EncodeError::UnknownClip(clip_id.to_string()))
    }
}

impl EncodeBackend for SyntheticBackend {
    fn version(&self) -> String {
        concat!("synthetic/", env!("CARGO_PKG_VERSION")).to_string()
    }

    fn qp_range(&self) -> (i32, i32) {
        QP_RANGE
    }

    fn clip_digest(&self, request: &EncodeRequest) -> Result<String, EncodeError> {
        let model = self.lookup(&request.clip_id)?;
        let json = serde_json::to_vec(model).expect("models always serialize");
        Ok(hex::encode(Sha256::digest(json)))
    }

    fn encode_and_measure(&self, request: &EncodeRequest) -> Result<Measurement, EncodeError> {
        check_qp(self, request.qp)?;
        let model = self.lookup(&request.clip_id)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let point = synthetic_encode(model, request.qp, &request.multipliers)?;
        // A stand-in VMAF so downstream columns are exercised; it tracks
        // quality and therefore does not move with the multipliers.
        let vmaf = match point.metric {
            Metric::MsSsim => Some(100.0 * point.quality),
            Metric::Vmaf => Some(point.quality),
            Metric::Psnr => None,
        };
        Ok(Measurement { point, vmaf })
    }

    fn launches(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::ProxyProfile;
    use crate::multipliers::{MultiplierAssignment, OptimizationMode};
    use std::path::PathBuf;

    fn req(clip: &str, qp: i32) -> EncodeRequest {
        EncodeRequest {
            clip_id: clip.into(),
            source_path: PathBuf::new(),
            qp,
            multipliers: MultiplierAssignment::new(OptimizationMode::Kf, vec![1.7]).unwrap(),
            profile: ProxyProfile::native("4K-S2", 2),
            work_dir: PathBuf::new(),
        }
    }

    #[test]
    fn passes_through_model_output() {
        let m = SyntheticClipModel::new("a", 0.999, 0.004, 5.0, 0.04, vec![2.0], vec![0.02], 0.0).unwrap();
        let b = SyntheticBackend::new([m.clone()]);
        let got = b.encode_and_measure(&req("a", 39)).unwrap();
        let want = synthetic_encode(&m, 39, &req("a", 39).multipliers).unwrap();
        assert_eq!(got.point, want);
        assert_eq!(b.launches(), 1);
        assert!(matches!(b.encode_and_measure(&req("zz", 39)), Err(EncodeError::UnknownClip(_))));
        assert!(matches!(
            b.encode_and_measure(&req("a", 300)),
            Err(EncodeError::OutOfRange { qp: 300, min: 1, max: 63 })
        ));
        assert_eq!(b.launches(), 1);
        assert_eq!(b.clip_digest(&req("a", 1)).unwrap().len(), 64);
    }
}
