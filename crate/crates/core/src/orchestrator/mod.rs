//! Reference curves, multiplier search and final re-evaluation.
//!
//! For each clip and mode: encode the qp anchors at k = 1 on the search
//! profile (the reference curve), minimise the BD-rate of the curve at k
//! against that reference, then re-encode the winner and the reference on
//! the final profile and report the Table-3 style columns.

mod config;
mod store;

pub use config::{apply_override, BackendConfig, CampaignConfig, ConfigError};
pub use store::{load_records, RecordKey, ResultsStore};

pub use crate::multipliers::{MultiplierAssignment, OptimizationMode};

use crate::bdrate::{bd_rate_with, build_curve, msssim_to_db, BdRateError, BdRateOptions, Metric, RdCurve};
use crate::corpus::ManifestEntry;
use crate::encoders::{EncodeBackend, EncodeError, EncodeRequest, Measurement, ProxyProfile};
use crate::events::Event;
use crate::multipliers::SearchKind;
use crate::reporting::{summarize, GroupSummary, ReportError};
use crate::optim::{
    brent_minimize, golden_section, grid_search, powell_minimize, Bounds, CostError, GridAxis, OptimError,
    OptimizerConfig, OptimizerTrace, Termination,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("clip {clip}, qp {qp}: {source}")]
    Encode {
        clip: String,
        qp: i32,
        #[source]
        source: EncodeError,
    },
    #[error("clip {clip}: {source}")]
    Curve {
        clip: String,
        #[source]
        source: BdRateError,
    },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("manifest lists no clips")]
    EmptyManifest,
    #[error("campaign cancelled")]
    Cancelled,
    #[error("results store: {0}")]
    Store(#[from] std::io::Error),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Cooperative cancellation shared between a signal handler and workers.
/// In-flight encodes finish; no new work starts.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        CancelToken::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// One-dimensional minimiser used by the scalar modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMethod {
    #[default]
    Brent,
    Golden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub qp_anchors: Vec<i32>,
    /// Per-axis multiplier bounds.
    pub bounds: Bounds,
    pub optimizer: OptimizerConfig,
    pub scalar_method: ScalarMethod,
    pub grid_axes: Vec<GridAxis>,
    /// Cost reported when a candidate curve does not overlap the reference
    /// enough for a BD-rate (percentage points).
    pub no_overlap_penalty: f64,
    pub min_overlap_fraction: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            qp_anchors: vec![27, 39, 49, 59, 63],
            bounds: Bounds::new(0.2, 8.0).expect("static bounds"),
            optimizer: OptimizerConfig::default(),
            scalar_method: ScalarMethod::Brent,
            grid_axes: vec![GridAxis::multiplier_study(); 2],
            no_overlap_penalty: 100.0,
            min_overlap_fraction: crate::bdrate::DEFAULT_MIN_OVERLAP_FRACTION,
        }
    }
}

impl SearchSettings {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |s: &str| Err(OrchestratorError::InvalidSettings(s.to_string()));
        if self.qp_anchors.len() < crate::bdrate::MIN_CURVE_POINTS {
            return bad("at least 4 qp anchors are needed for a BD-rate");
        }
        let mut sorted = self.qp_anchors.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.qp_anchors.len() {
            return bad("qp anchors must be distinct");
        }
        if !(self.bounds.low() > 0.0) || !self.bounds.contains(1.0) {
            return bad("bounds must be positive and contain 1.0");
        }
        if self.grid_axes.len() != 2 {
            return bad("grid search needs exactly two axes");
        }
        if !(self.no_overlap_penalty.is_finite() && self.no_overlap_penalty > 0.0) {
            return bad("no_overlap_penalty must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_overlap_fraction) {
            return bad("min_overlap_fraction must lie in [0, 1]");
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Reference,
    Search,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFailure {
    pub phase: Phase,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub reference_s: f64,
    pub search_s: f64,
    pub final_s: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.reference_s + self.search_s + self.final_s
    }
}

/// Outcome of one (clip, mode) optimisation. Fields left `None` belong to
/// a phase that failed or, for `bd_rate_final`, to curves without enough
/// overlap (`no_overlap` is then set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub clip_id: String,
    pub shot_group: String,
    pub mode: OptimizationMode,
    pub search_profile: String,
    pub final_profile: String,
    pub final_k: Vec<f64>,
    /// Best cost found on the search profile, percent.
    pub bd_rate_search: Option<f64>,
    /// BD-rate of the final-profile curve at `final_k` against the
    /// final-profile reference, percent.
    pub bd_rate_final: Option<f64>,
    pub no_overlap: bool,
    pub iterations: usize,
    pub cost_evals: usize,
    pub converged: bool,
    pub termination: Option<Termination>,
    pub bitrate_savings_avg: Option<f64>,
    pub bitrate_savings_q39: Option<f64>,
    pub msssim_change_db: Option<f64>,
    pub vmaf_change: Option<f64>,
    pub wall_clock: PhaseTimes,
    pub failure: Option<PhaseFailure>,
}

impl OptimizationRecord {
    fn new(clip: &ManifestEntry, mode: OptimizationMode, search: &ProxyProfile, final_: &ProxyProfile) -> Self {
        OptimizationRecord {
            clip_id: clip.clip_id.clone(),
            shot_group: clip.shot_group.clone(),
            mode,
            search_profile: search.label.clone(),
            final_profile: final_.label.clone(),
            final_k: Vec::new(),
            bd_rate_search: None,
            bd_rate_final: None,
            no_overlap: false,
            iterations: 0,
            cost_evals: 0,
            converged: false,
            termination: None,
            bitrate_savings_avg: None,
            bitrate_savings_q39: None,
            msssim_change_db: None,
            vmaf_change: None,
            wall_clock: PhaseTimes::default(),
            failure: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// True when every column of the per-mode results table has a value.
    pub fn has_all_columns(&self) -> bool {
        self.is_complete()
            && !self.final_k.is_empty()
            && self.bd_rate_search.is_some()
            && self.bd_rate_final.is_some()
            && self.bitrate_savings_avg.is_some()
            && self.bitrate_savings_q39.is_some()
            && self.msssim_change_db.is_some()
            && self.vmaf_change.is_some()
    }

    fn fail(&mut self, phase: Phase, err: impl std::fmt::Display) {
        self.failure = Some(PhaseFailure {
            phase,
            message: err.to_string(),
        });
    }
}

/// An RD curve together with the raw per-anchor measurements (anchor
/// order), which carry VMAF.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorCurve {
    pub curve: RdCurve,
    pub measurements: Vec<Measurement>,
}

/// Search trace of one (clip, mode), kept for contour exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipTrace {
    pub clip_id: String,
    pub mode: OptimizationMode,
    pub trace: OptimizerTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipOutcome {
    pub record: OptimizationRecord,
    pub trace: Option<OptimizerTrace>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignOutcome {
    /// Records in manifest order, then mode order.
    pub records: Vec<OptimizationRecord>,
    pub traces: Vec<ClipTrace>,
    /// Pairs completed in this run; failed ones show up in `failures()`.
    pub optimized: usize,
    /// Pairs reused from the results store.
    pub skipped: usize,
    pub cancelled: bool,
}

impl CampaignOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &OptimizationRecord> {
        self.records.iter().filter(|r| !r.is_complete())
    }

    /// Shot-group aggregate of the records.
    pub fn summary(&self) -> Result<Vec<GroupSummary>, ReportError> {
        summarize(&self.records)
    }
}

/// Runs encodes for one campaign on a bounded worker pool.
pub struct Pipeline {
    backend: Arc<dyn EncodeBackend>,
    pool: Arc<rayon::ThreadPool>,
    settings: SearchSettings,
    scratch: PathBuf,
    cancel: CancelToken,
}

impl Pipeline {
    /// `jobs = None` sizes the pool to the machine.
    pub fn new(
        backend: Arc<dyn EncodeBackend>,
        settings: SearchSettings,
        scratch: impl Into<PathBuf>,
        jobs: Option<usize>,
    ) -> Result<Self, OrchestratorError> {
        settings.validate()?;
        let mut builder = rayon::ThreadPoolBuilder::new().thread_name(|i| format!("lforge-{i}"));
        if let Some(n) = jobs {
            if n == 0 {
                return Err(OrchestratorError::InvalidSettings("jobs must be positive".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| OrchestratorError::InvalidSettings(e.to_string()))?;
        Ok(Pipeline {
            backend,
            pool: Arc::new(pool),
            settings,
            scratch: scratch.into(),
            cancel: CancelToken::new(),
        })
    }

    pub fn with_cancel(mut self, token: CancelToken) -> Self {
        self.cancel = token;
        self
    }

    pub fn backend(&self) -> &dyn EncodeBackend {
        self.backend.as_ref()
    }

    pub fn settings(&self) -> &SearchSettings {
        &self.settings
    }

    pub fn cancel_token(&self) -> &CancelToken {
        &self.cancel
    }

    fn request(&self, clip: &ManifestEntry, qp: i32, k: &MultiplierAssignment, profile: &ProxyProfile) -> EncodeRequest {
        EncodeRequest {
            clip_id: clip.clip_id.clone(),
            source_path: clip.path.clone().unwrap_or_default(),
            qp,
            multipliers: k.clone(),
            profile: profile.clone(),
            work_dir: self.scratch.join("jobs"),
        }
    }

    /// Encodes every anchor at `k`, concurrently, and builds the curve.
    pub fn encode_curve(
        &self,
        clip: &ManifestEntry,
        k: &MultiplierAssignment,
        profile: &ProxyProfile,
    ) -> Result<AnchorCurve, OrchestratorError> {
        let anchors = &self.settings.qp_anchors;
        let results: Vec<Result<Measurement, OrchestratorError>> = self.pool.install(|| {
            anchors
                .par_iter()
                .map(|&qp| {
                    let t = Instant::now();
                    let m = self
                        .backend
                        .encode_and_measure(&self.request(clip, qp, k, profile))
                        .map_err(|source| OrchestratorError::Encode {
                            clip: clip.clip_id.clone(),
                            qp,
                            source,
                        })?;
                    Event {
                        clip: Some(&clip.clip_id),
                        profile: Some(&profile.label),
                        qp: Some(qp),
                        k: Some(k.values()),
                        wall_clock_s: Some(t.elapsed().as_secs_f64()),
                        ..Event::new("encode")
                    }
                    .emit_debug();
                    Ok(m)
                })
                .collect()
        });
        let measurements = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let curve = build_curve(&clip.clip_id, measurements.iter().map(|m| m.point).collect())
            .map_err(|source| OrchestratorError::Curve {
                clip: clip.clip_id.clone(),
                source,
            })?;
        Ok(AnchorCurve { curve, measurements })
    }

    /// The k = 1 curve on `profile`.
    pub fn run_reference(&self, clip: &ManifestEntry, profile: &ProxyProfile) -> Result<AnchorCurve, OrchestratorError> {
        self.encode_curve(clip, &MultiplierAssignment::identity(OptimizationMode::AllFrames), profile)
    }

    fn bd_options(&self) -> BdRateOptions {
        BdRateOptions {
            min_overlap_fraction: self.settings.min_overlap_fraction,
        }
    }

    /// k ↦ BD-rate (percent) of the curve at k against `reference`.
    /// Non-positive multipliers are rejected before any encode; curves
    /// without sufficient overlap cost `no_overlap_penalty`.
    pub fn make_cost<'a>(
        &'a self,
        clip: &'a ManifestEntry,
        reference: &'a AnchorCurve,
        mode: OptimizationMode,
        profile: &'a ProxyProfile,
    ) -> impl FnMut(&[f64]) -> Result<f64, CostError> + 'a {
        move |k: &[f64]| {
            if self.cancel.is_cancelled() {
                return Err(Box::new(OrchestratorError::Cancelled));
            }
            if let Some(bad) = k.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(format!("multiplier {bad} is not positive").into());
            }
            let assignment = MultiplierAssignment::new(mode, k.to_vec())?;
            let t = Instant::now();
            let test = self.encode_curve(clip, &assignment, profile)?;
            let cost = match bd_rate_with(&test.curve, &reference.curve, self.bd_options()) {
                Ok(r) => r.value_percent,
                Err(BdRateError::NoOverlap { .. }) => self.settings.no_overlap_penalty,
                Err(e) => return Err(e.into()),
            };
            Event {
                phase: Some("search"),
                clip: Some(&clip.clip_id),
                mode: Some(mode.as_str()),
                profile: Some(&profile.label),
                k: Some(k),
                cost: Some(cost),
                wall_clock_s: Some(t.elapsed().as_secs_f64()),
                ..Event::new("cost")
            }
            .emit();
            Ok(cost)
        }
    }

    fn search(
        &self,
        mode: OptimizationMode,
        mut cost: impl FnMut(&[f64]) -> Result<f64, CostError>,
    ) -> Result<OptimizerTrace, OptimError> {
        let s = &self.settings;
        match mode.search_kind() {
            SearchKind::Scalar => match s.scalar_method {
                ScalarMethod::Brent => brent_minimize(|x| cost(&[x]), s.bounds, &s.optimizer),
                ScalarMethod::Golden => golden_section(|x| cost(&[x]), s.bounds, &s.optimizer),
            },
            SearchKind::Powell => powell_minimize(cost, &[1.0, 1.0], &[s.bounds, s.bounds], &s.optimizer),
            SearchKind::Grid => grid_search(cost, &s.grid_axes).map(|scan| scan.trace),
        }
    }

    /// Full two-phase optimisation of one clip. Phase failures are recorded
    /// in the returned record; only cancellation is an error.
    pub fn optimize_clip(
        &self,
        clip: &ManifestEntry,
        mode: OptimizationMode,
        search_profile: &ProxyProfile,
        final_profile: &ProxyProfile,
    ) -> Result<ClipOutcome, OrchestratorError> {
        let mut rec = OptimizationRecord::new(clip, mode, search_profile, final_profile);
        let phase_event = |phase: &str, secs: f64| {
            Event {
                phase: Some(phase),
                clip: Some(&clip.clip_id),
                mode: Some(mode.as_str()),
                wall_clock_s: Some(secs),
                ..Event::new("phase_end")
            }
            .emit()
        };

        let t = Instant::now();
        let reference = self.run_reference(clip, search_profile);
        rec.wall_clock.reference_s = t.elapsed().as_secs_f64();
        phase_event("reference", rec.wall_clock.reference_s);
        let reference = match reference {
            Ok(r) => r,
            Err(e) => {
                rec.fail(Phase::Reference, e);
                return Ok(ClipOutcome { record: rec, trace: None });
            }
        };

        let t = Instant::now();
        let ones = vec![1.0; mode.dims()];
        let mut cost = self.make_cost(clip, &reference, mode, search_profile);
        let searched = self.search(mode, &mut cost);
        let (trace, identity_cost) = match searched {
            Ok(trace) => {
                // Cached, so this costs no encodes; kept out of the trace.
                match cost(&ones) {
                    Ok(c) => (trace, c),
                    Err(e) => return self.search_failure(rec, t, e, None),
                }
            }
            Err(OptimError::CostFailure { source, trace, .. }) => {
                return self.search_failure(rec, t, source, Some(*trace));
            }
            Err(e) => return self.search_failure(rec, t, e.into(), None),
        };
        drop(cost);
        rec.iterations = trace.iterations_used;
        rec.cost_evals = trace.cost_evals();
        rec.converged = trace.converged;
        rec.termination = Some(trace.termination);
        let improves = trace.best_cost < identity_cost - self.settings.optimizer.f_tolerance;
        if improves {
            rec.final_k = trace.best_point.clone();
            rec.bd_rate_search = Some(trace.best_cost);
        } else {
            rec.final_k = ones.clone();
            rec.bd_rate_search = Some(identity_cost);
        }
        rec.wall_clock.search_s = t.elapsed().as_secs_f64();
        phase_event("search", rec.wall_clock.search_s);

        let t = Instant::now();
        let finished = self.final_phase(clip, mode, &rec.final_k, &reference, search_profile, final_profile);
        rec.wall_clock.final_s = t.elapsed().as_secs_f64();
        phase_event("final", rec.wall_clock.final_s);
        match finished {
            Ok(cols) => cols.apply(&mut rec),
            Err(OrchestratorError::Cancelled) => return Err(OrchestratorError::Cancelled),
            Err(e) => rec.fail(Phase::Final, e),
        }
        Ok(ClipOutcome {
            record: rec,
            trace: Some(trace),
        })
    }

    fn search_failure(
        &self,
        mut rec: OptimizationRecord,
        started: Instant,
        err: CostError,
        partial: Option<OptimizerTrace>,
    ) -> Result<ClipOutcome, OrchestratorError> {
        if matches!(err.downcast_ref::<OrchestratorError>(), Some(OrchestratorError::Cancelled)) {
            return Err(OrchestratorError::Cancelled);
        }
        rec.wall_clock.search_s = started.elapsed().as_secs_f64();
        if let Some(t) = &partial {
            rec.iterations = t.iterations_used;
            rec.cost_evals = t.cost_evals();
        }
        rec.fail(Phase::Search, err);
        Ok(ClipOutcome {
            record: rec,
            trace: partial,
        })
    }

    fn final_phase(
        &self,
        clip: &ManifestEntry,
        mode: OptimizationMode,
        k: &[f64],
        search_reference: &AnchorCurve,
        search_profile: &ProxyProfile,
        final_profile: &ProxyProfile,
    ) -> Result<FinalColumns, OrchestratorError> {
        if self.cancel.is_cancelled() {
            return Err(OrchestratorError::Cancelled);
        }
        let reference = if final_profile == search_profile {
            search_reference.clone()
        } else {
            self.run_reference(clip, final_profile)?
        };
        let assignment = MultiplierAssignment::new(mode, k.to_vec()).map_err(|e| OrchestratorError::InvalidSettings(e.to_string()))?;
        let optimized = if assignment.is_identity() {
            reference.clone()
        } else {
            self.encode_curve(clip, &assignment, final_profile)?
        };
        FinalColumns::compute(&optimized, &reference, &self.settings.qp_anchors, self.bd_options())
            .map_err(|source| OrchestratorError::Curve {
                clip: clip.clip_id.clone(),
                source,
            })
    }

    /// Digest of everything besides the clip that determines a record.
    pub fn config_digest(&self, search: &ProxyProfile, final_: &ProxyProfile) -> String {
        let material = serde_json::json!({
            "settings": self.settings,
            "backend": self.backend.version(),
            "search_profile": search,
            "final_profile": final_,
        });
        hex::encode(Sha256::digest(material.to_string()))
    }

    /// Optimises every (clip, mode) pair, reusing complete records from
    /// `store` and appending new ones to it. Clips run concurrently on the
    /// pool; per-pair failures are recorded and do not stop the campaign.
    pub fn run_campaign(
        &self,
        clips: &[ManifestEntry],
        modes: &[OptimizationMode],
        search_profile: &ProxyProfile,
        final_profile: &ProxyProfile,
        store: Option<&ResultsStore>,
    ) -> Result<CampaignOutcome, OrchestratorError> {
        if clips.is_empty() {
            return Err(OrchestratorError::EmptyManifest);
        }
        if modes.is_empty() {
            return Err(OrchestratorError::InvalidSettings("no optimization modes selected".into()));
        }
        let config_digest = self.config_digest(search_profile, final_profile);

        let per_clip: Vec<Result<Vec<PairResult>, OrchestratorError>> = self.pool.install(|| {
            clips
                .par_iter()
                .map(|clip| {
                    let mut out = Vec::new();
                    for &mode in modes {
                        if self.cancel.is_cancelled() {
                            break;
                        }
                        out.push(self.run_pair(clip, mode, search_profile, final_profile, store, &config_digest)?);
                    }
                    Ok(out)
                })
                .collect()
        });

        let mut outcome = CampaignOutcome::default();
        for r in per_clip {
            for pair in r? {
                match pair {
                    PairResult::Reused(rec) => {
                        outcome.skipped += 1;
                        outcome.records.push(rec);
                    }
                    PairResult::Ran(o) => {
                        outcome.optimized += usize::from(o.record.is_complete());
                        if let Some(trace) = o.trace {
                            outcome.traces.push(ClipTrace {
                                clip_id: o.record.clip_id.clone(),
                                mode: o.record.mode,
                                trace,
                            });
                        }
                        outcome.records.push(o.record);
                    }
                    PairResult::Cancelled => outcome.cancelled = true,
                }
            }
        }
        outcome.cancelled |= self.cancel.is_cancelled();
        Ok(outcome)
    }

    fn run_pair(
        &self,
        clip: &ManifestEntry,
        mode: OptimizationMode,
        search_profile: &ProxyProfile,
        final_profile: &ProxyProfile,
        store: Option<&ResultsStore>,
        config_digest: &str,
    ) -> Result<PairResult, OrchestratorError> {
        let probe = self.request(clip, 0, &MultiplierAssignment::identity(mode), search_profile);
        let clip_digest = match self.backend.clip_digest(&probe) {
            Ok(d) => d,
            Err(e) => {
                let mut rec = OptimizationRecord::new(clip, mode, search_profile, final_profile);
                rec.fail(Phase::Reference, e);
                return Ok(PairResult::Ran(ClipOutcome { record: rec, trace: None }));
            }
        };
        let key = RecordKey {
            clip_digest,
            mode,
            search_profile: search_profile.label.clone(),
            final_profile: final_profile.label.clone(),
            config_digest: config_digest.to_string(),
        };
        if let Some(rec) = store.and_then(|s| s.get(&key)).filter(|r| r.is_complete()) {
            Event {
                clip: Some(&clip.clip_id),
                mode: Some(mode.as_str()),
                ..Event::new("skip_completed")
            }
            .emit();
            return Ok(PairResult::Reused(rec));
        }
        match self.optimize_clip(clip, mode, search_profile, final_profile) {
            Ok(outcome) => {
                if let Some(s) = store {
                    s.append(&key, &outcome.record)?;
                }
                Ok(PairResult::Ran(outcome))
            }
            Err(OrchestratorError::Cancelled) => Ok(PairResult::Cancelled),
            Err(e) => Err(e),
        }
    }
}

enum PairResult {
    Reused(OptimizationRecord),
    Ran(ClipOutcome),
    Cancelled,
}

/// Final-profile comparison of the optimised curve against the reference.
#[derive(Debug, Clone, PartialEq)]
struct FinalColumns {
    bd_rate: Option<f64>,
    no_overlap: bool,
    savings_avg: f64,
    savings_q39: Option<f64>,
    msssim_change_db: Option<f64>,
    vmaf_change: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl FinalColumns {
    fn compute(
        opt: &AnchorCurve,
        reference: &AnchorCurve,
        anchors: &[i32],
        options: BdRateOptions,
    ) -> Result<Self, BdRateError> {
        let (bd_rate, no_overlap) = match bd_rate_with(&opt.curve, &reference.curve, options) {
            Ok(r) => (Some(r.value_percent), false),
            Err(BdRateError::NoOverlap { .. }) => (None, true),
            Err(e) => return Err(e),
        };
        let pairs: Vec<(&Measurement, &Measurement)> = opt.measurements.iter().zip(&reference.measurements).collect();
        let savings: Vec<f64> = pairs
            .iter()
            .map(|(o, r)| 100.0 * (o.point.bitrate - r.point.bitrate) / r.point.bitrate)
            .collect();
        let savings_q39 = anchors.iter().position(|&q| q == 39).map(|i| savings[i]);
        let msssim_change_db = if opt.curve.metric() == Metric::MsSsim {
            pairs
                .iter()
                .map(|(o, r)| Ok(msssim_to_db(o.point.quality)? - msssim_to_db(r.point.quality)?))
                .collect::<Result<Vec<f64>, BdRateError>>()
                .ok()
                .map(|d| mean(&d))
        } else {
            None
        };
        let vmaf_change = pairs
            .iter()
            .map(|(o, r)| Some(o.vmaf? - r.vmaf?))
            .collect::<Option<Vec<f64>>>()
            .map(|d| mean(&d));
        Ok(FinalColumns {
            bd_rate,
            no_overlap,
            savings_avg: mean(&savings),
            savings_q39,
            msssim_change_db,
            vmaf_change,
        })
    }

    fn apply(self, rec: &mut OptimizationRecord) {
        rec.bd_rate_final = self.bd_rate;
        rec.no_overlap = self.no_overlap;
        rec.bitrate_savings_avg = Some(self.savings_avg);
        rec.bitrate_savings_q39 = self.savings_q39;
        rec.msssim_change_db = self.msssim_change_db;
        rec.vmaf_change = self.vmaf_change;
    }
}
