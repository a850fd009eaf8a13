//! Backends that turn (clip, qp, multipliers, profile) into a measured
//! rate/quality point.
//!
//! [`SyntheticBackend`] evaluates closed-form models; [`ProcessBackend`]
//! drives an external encoder, optional decoder and metric tool through
//! command templates. [`CachedBackend`] wraps either with a
//! content-addressed result cache.

mod cache;
mod process;
mod synthetic;
mod template;

pub use cache::{cache_key, CachedBackend};
pub use process::{parse_metric_output, ProcessBackend, ProcessBackendConfig};
pub use synthetic::SyntheticBackend;
pub use template::{format_multiplier, render_command, TemplateVars};

use crate::bdrate::RdPoint;
use crate::multipliers::MultiplierAssignment;
use crate::rdmodel::RdModelError;
use crate::resample::ResampleFilter;
use crate::y4m::Y4mError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("qp {qp} outside the backend range [{min}, {max}]")]
    OutOfRange { qp: i32, min: i32, max: i32 },
    #[error("source {0} does not exist")]
    SourceMissing(PathBuf),
    #[error("no synthetic model registered for clip {0:?}")]
    UnknownClip(String),
    #[error("encoder exited with {status:?}: {stderr}")]
    EncoderProcessFailure { status: Option<i32>, stderr: String },
    #[error("decoder exited with {status:?}: {stderr}")]
    DecoderProcessFailure { status: Option<i32>, stderr: String },
    #[error("metric tool exited with {status:?}: {stderr}")]
    MetricProcessFailure { status: Option<i32>, stderr: String },
    #[error("could not launch {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unparseable tool output: {0}")]
    ParseFailure(String),
    #[error("unknown placeholder {{{0}}} in command template")]
    UnknownPlaceholder(String),
    #[error("malformed command template: {0}")]
    Template(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Y4m(#[from] Y4mError),
    #[error(transparent)]
    Model(#[from] RdModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encoding fidelity setting: target resolution (0×0 keeps the source
/// size), encoder speed preset and the filter used to reach the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct ProxyProfile {
    pub label: String,
    pub target_width: usize,
    pub target_height: usize,
    pub speed_preset: i32,
    pub downscale_filter: ResampleFilter,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    label: String,
    #[serde(default)]
    target_width: usize,
    #[serde(default)]
    target_height: usize,
    #[serde(default)]
    speed_preset: i32,
    #[serde(default)]
    downscale_filter: ResampleFilter,
}

impl TryFrom<RawProfile> for ProxyProfile {
    type Error = EncodeError;

    fn try_from(r: RawProfile) -> Result<Self, Self::Error> {
        ProxyProfile::new(r.label, r.target_width, r.target_height, r.speed_preset)
            .map(|p| p.with_filter(r.downscale_filter))
    }
}

impl ProxyProfile {
    pub fn new(
        label: impl Into<String>,
        target_width: usize,
        target_height: usize,
        speed_preset: i32,
    ) -> Result<Self, EncodeError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(EncodeError::InvalidProfile("label must not be empty".into()));
        }
        if (target_width == 0) != (target_height == 0) {
            return Err(EncodeError::InvalidProfile(format!(
                "{label}: width and height must both be zero or both positive"
            )));
        }
        Ok(ProxyProfile {
            label,
            target_width,
            target_height,
            speed_preset,
            downscale_filter: ResampleFilter::default(),
        })
    }

    /// Full resolution at the given preset.
    pub fn native(label: impl Into<String>, speed_preset: i32) -> Self {
        ProxyProfile::new(label, 0, 0, speed_preset).expect("native profile is always valid")
    }

    pub fn with_filter(mut self, filter: ResampleFilter) -> Self {
        self.downscale_filter = filter;
        self
    }

    pub fn is_native(&self) -> bool {
        self.target_width == 0
    }
}

/// Everything a backend needs for one encode.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeRequest {
    pub clip_id: String,
    pub source_path: PathBuf,
    pub qp: i32,
    pub multipliers: MultiplierAssignment,
    pub profile: ProxyProfile,
    pub work_dir: PathBuf,
}

/// Per-frame and pooled metric values for one encode. Pooled values are
/// arithmetic means of the per-frame lists when those are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ms_ssim_frames: Vec<f64>,
    pub vmaf_frames: Vec<f64>,
    pub ms_ssim: f64,
    pub vmaf: Option<f64>,
    pub bitrate_kbps: f64,
    pub frame_count: usize,
}

/// What an encode yields: the RD point (quality is MS-SSIM for real
/// encodes) and VMAF when the metric tool reports it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub point: RdPoint,
    pub vmaf: Option<f64>,
}

pub trait EncodeBackend: Send + Sync {
    /// Identifies the encoder build; part of every cache key.
    fn version(&self) -> String;

    /// Inclusive legal qp range.
    fn qp_range(&self) -> (i32, i32);

    /// Content digest of the clip a request refers to.
    fn clip_digest(&self, request: &EncodeRequest) -> Result<String, EncodeError>;

    fn encode_and_measure(&self, request: &EncodeRequest) -> Result<Measurement, EncodeError>;

    /// External launches (or model evaluations) performed so far.
    fn launches(&self) -> u64;
}

impl<B: EncodeBackend + ?Sized> EncodeBackend for Arc<B> {
    fn version(&self) -> String {
        (**self).version()
    }
    fn qp_range(&self) -> (i32, i32) {
        (**self).qp_range()
    }
    fn clip_digest(&self, request: &EncodeRequest) -> Result<String, EncodeError> {
        (**self).clip_digest(request)
    }
    fn encode_and_measure(&self, request: &EncodeRequest) -> Result<Measurement, EncodeError> {
        (**self).encode_and_measure(request)
    }
    fn launches(&self) -> u64 {
        (**self).launches()
    }
}

pub(crate) fn check_qp(backend: &dyn EncodeBackend, qp: i32) -> Result<(), EncodeError> {
    let (min, max) = backend.qp_range();
    if (min..=max).contains(&qp) {
        Ok(())
    } else {
        Err(EncodeError::OutOfRange { qp, min, max })
    }
}

/// One mutex per key, created on demand.
#[derive(Default)]
pub(crate) struct KeyedLocks {
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl KeyedLocks {
    pub(crate) fn get(&self, key: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        map.entry(key.to_string()).or_default().clone()
    }
}
