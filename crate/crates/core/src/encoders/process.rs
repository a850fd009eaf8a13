use super::{
    check_qp, EncodeBackend, EncodeError, EncodeRequest, KeyedLocks, Measurement, MetricReport,
    ProxyProfile, TemplateVars,
};
use crate::bdrate::{Metric, RdPoint};
use crate::resample::resample_file;
use crate::y4m::{Y4mHeader, Y4mReader};
use log::debug;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::SystemTime;

/// Command templates and settings for an external toolchain.
///
/// The encoder template sees `{input} {output} {qp} {k_all} {k_kf}
/// {k_gf_arf} {preset} {width} {height}`. The decoder template sees the
/// same names with `{input}` the bitstream and `{output}` the Y4M to
/// write. The metric template sees `{reference}` (full-resolution source),
/// `{distorted}` (decoded clip, upscaled to source size for proxies),
/// `{output}` (JSON path) plus the numeric names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessBackendConfig {
    pub encoder: String,
    #[serde(default)]
    pub decoder: Option<String>,
    pub metric: String,
    #[serde(default = "default_qp_range")]
    pub qp_range: (i32, i32),
    /// Encoder build identifier, folded into cache keys.
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default = "default_extension")]
    pub output_extension: String,
    /// Where downscaled proxies are kept; defaults to `<work_dir>/proxies`.
    #[serde(default)]
    pub proxy_dir: Option<PathBuf>,
}

fn default_qp_range() -> (i32, i32) {
    (0, 63)
}

fn default_version() -> String {
    "unversioned".into()
}

fn default_extension() -> String {
    "ivf".into()
}

impl ProcessBackendConfig {
    pub fn new(encoder: impl Into<String>, metric: impl Into<String>) -> Self {
        ProcessBackendConfig {
            encoder: encoder.into(),
            decoder: None,
            metric: metric.into(),
            qp_range: default_qp_range(),
            version: default_version(),
            output_extension: default_extension(),
            proxy_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Encode,
    Decode,
    Metric,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Encode => "encode",
            Stage::Decode => "decode",
            Stage::Metric => "metric",
        }
    }

    fn failure(self, status: Option<i32>, stderr: String) -> EncodeError {
        match self {
            Stage::Encode => EncodeError::EncoderProcessFailure { status, stderr },
            Stage::Decode => EncodeError::DecoderProcessFailure { status, stderr },
            Stage::Metric => EncodeError::MetricProcessFailure { status, stderr },
        }
    }
}

type DigestMemo = HashMap<PathBuf, (u64, Option<SystemTime>, String)>;

pub struct ProcessBackend {
    cfg: ProcessBackendConfig,
    launches: AtomicU64,
    digests: Mutex<DigestMemo>,
    proxy_locks: KeyedLocks,
}

impl ProcessBackend {
    pub fn new(cfg: ProcessBackendConfig) -> Self {
        ProcessBackend {
            cfg,
            launches: AtomicU64::new(0),
            digests: Mutex::new(HashMap::new()),
            proxy_locks: KeyedLocks::default(),
        }
    }

    pub fn config(&self) -> &ProcessBackendConfig {
        &self.cfg
    }

    fn file_digest(&self, path: &Path) -> Result<String, EncodeError> {
        let meta = fs::metadata(path).map_err(|_| EncodeError::SourceMissing(path.to_path_buf()))?;
        let stamp = (meta.len(), meta.modified().ok());
        if let Some((len, mtime, d)) = self.digests.lock().unwrap_or_else(|p| p.into_inner()).get(path) {
            if (*len, *mtime) == stamp {
                return Ok(d.clone());
            }
        }
        let mut hasher = Sha256::new();
        io::copy(&mut File::open(path)?, &mut hasher)?;
        let digest = hex::encode(hasher.finalize());
        self.digests
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(path.to_path_buf(), (stamp.0, stamp.1, digest.clone()));
        Ok(digest)
    }

    /// Downscaled copy of the source for a proxy profile, built once per
    /// (source digest, size, filter).
    fn proxy(&self, request: &EncodeRequest, digest: &str) -> Result<PathBuf, EncodeError> {
        let p = &request.profile;
        let dir = self
            .cfg
            .proxy_dir
            .clone()
            .unwrap_or_else(|| request.work_dir.join("proxies"));
        let path = dir.join(format!(
            "{}-{}x{}-{}.y4m",
            &digest[..16],
            p.target_width,
            p.target_height,
            p.downscale_filter.as_str()
        ));
        let lock = self.proxy_locks.get(&path.to_string_lossy());
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if !path.exists() {
            debug!("building proxy {}", path.display());
            resample_file(
                &request.source_path,
                &path,
                p.target_width,
                p.target_height,
                p.downscale_filter,
            )?;
        }
        Ok(path)
    }

    fn run(&self, stage: Stage, argv: &[String], log: &Path) -> Result<String, EncodeError> {
        self.launches.fetch_add(1, Ordering::Relaxed);
        debug!("{}: {:?}", stage.name(), argv);
        let out = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .output()
            .map_err(|source| EncodeError::Spawn {
                program: argv[0].clone(),
                source,
            })?;
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
        let record = format!(
            "$ {}\n--- status: {:?}\n--- stdout\n{stdout}\n--- stderr\n{stderr}",
            shell_words::join(argv),
            out.status.code()
        );
        if let Some(dir) = log.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(log, record)?;
        if !out.status.success() {
            return Err(stage.failure(out.status.code(), tail(&stderr, 2000)));
        }
        Ok(stdout)
    }
}

fn tail(s: &str, max: usize) -> String {
    let trimmed = s.trim_end();
    match trimmed.char_indices().rev().nth(max) {
        Some((i, _)) => format!("...{}", &trimmed[i..]),
        None => trimmed.to_string(),
    }
}

fn numeric_vars(request: &EncodeRequest, width: usize, height: usize) -> TemplateVars {
    let mut v = TemplateVars::new();
    v.set("qp", request.qp.to_string())
        .multipliers(&request.multipliers.routed())
        .set("preset", request.profile.speed_preset.to_string())
        .set("width", width.to_string())
        .set("height", height.to_string());
    v
}

fn job_tag(request: &EncodeRequest) -> String {
    let m = request.multipliers.routed();
    let h = Sha256::digest(format!(
        "{}|{:?}|{}",
        request.profile.label,
        [m.all.to_bits(), m.kf.to_bits(), m.gf_arf.to_bits()],
        request.qp
    ));
    let safe: String = request
        .clip_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}-qp{}-{}", request.qp, &hex::encode(h)[..12])
}

fn dims_of(path: &Path) -> Result<(Y4mHeader, usize), EncodeError> {
    let mut r = Y4mReader::open(path)?;
    let header = r.header().clone();
    let frames = r.count_remaining()?;
    Ok((header, frames))
}

impl EncodeBackend for ProcessBackend {
    fn version(&self) -> String {
        self.cfg.version.clone()
    }

    fn qp_range(&self) -> (i32, i32) {
        self.cfg.qp_range
    }

    fn clip_digest(&self, request: &EncodeRequest) -> Result<String, EncodeError> {
        self.file_digest(&request.source_path)
    }

    fn encode_and_measure(&self, request: &EncodeRequest) -> Result<Measurement, EncodeError> {
        check_qp(self, request.qp)?;
        if !request.source_path.is_file() {
            return Err(EncodeError::SourceMissing(request.source_path.clone()));
        }
        let digest = self.file_digest(&request.source_path)?;
        let (source, frame_count) = dims_of(&request.source_path)?;
        if frame_count == 0 {
            return Err(EncodeError::ParseFailure("source has no frames".into()));
        }
        let profile: &ProxyProfile = &request.profile;
        let (input, width, height) = if profile.is_native() {
            (request.source_path.clone(), source.width, source.height)
        } else {
            (self.proxy(request, &digest)?, profile.target_width, profile.target_height)
        };

        fs::create_dir_all(&request.work_dir)?;
        let job = tempfile::Builder::new().prefix("job-").tempdir_in(&request.work_dir)?;
        let logs = request.work_dir.join("logs");
        let tag = job_tag(request);
        let bitstream = job.path().join(format!("out.{}", self.cfg.output_extension));

        let mut vars = numeric_vars(request, width, height);
        vars.path("input", &input).path("output", &bitstream);
        let argv = super::render_command(&self.cfg.encoder, &vars)?;
        self.run(Stage::Encode, &argv, &logs.join(format!("{tag}.encode.log")))?;
        let bytes = fs::metadata(&bitstream)
            .map_err(|_| {
                Stage::Encode.failure(Some(0), format!("no bitstream written to {}", bitstream.display()))
            })?
            .len();
        let duration = source.duration_seconds(frame_count);
        let bitrate_kbps = bytes as f64 * 8.0 / duration / 1000.0;

        let distorted = match &self.cfg.decoder {
            None => bitstream.clone(),
            Some(template) => {
                let decoded = job.path().join("decoded.y4m");
                let mut vars = numeric_vars(request, width, height);
                vars.path("input", &bitstream).path("output", &decoded);
                let argv = super::render_command(template, &vars)?;
                self.run(Stage::Decode, &argv, &logs.join(format!("{tag}.decode.log")))?;
                let (h, _) = dims_of(&decoded)?;
                if (h.width, h.height) == (source.width, source.height) {
                    decoded
                } else {
                    // measure at source resolution, with the same filter family
                    let up = job.path().join("upscaled.y4m");
                    resample_file(&decoded, &up, source.width, source.height, profile.downscale_filter)?;
                    up
                }
            }
        };

        let metric_json = job.path().join("metric.json");
        let mut vars = numeric_vars(request, source.width, source.height);
        vars.path("reference", &request.source_path)
            .path("distorted", &distorted)
            .path("output", &metric_json);
        let argv = super::render_command(&self.cfg.metric, &vars)?;
        let stdout = self.run(Stage::Metric, &argv, &logs.join(format!("{tag}.metric.log")))?;
        let text = match fs::read_to_string(&metric_json) {
            Ok(t) => t,
            Err(_) => stdout,
        };
        let report = parse_metric_output(&text, bitrate_kbps, frame_count)?;

        Ok(Measurement {
            point: RdPoint {
                qp: request.qp,
                bitrate: bitrate_kbps,
                quality: report.ms_ssim,
                metric: Metric::MsSsim,
            },
            vmaf: report.vmaf,
        })
    }

    fn launches(&self) -> u64 {
        self.launches.load(Ordering::Relaxed)
    }
}

#[derive(Deserialize)]
struct MetricJson {
    #[serde(default)]
    pooled: Option<Pooled>,
    #[serde(default)]
    frames: Vec<FrameScores>,
}

#[derive(Deserialize)]
struct Pooled {
    ms_ssim: Option<f64>,
    vmaf: Option<f64>,
}

#[derive(Deserialize)]
struct FrameScores {
    ms_ssim: Option<f64>,
    vmaf: Option<f64>,
}

// Pooled values written by tools are usually rounded to ~6 digits.
const POOLING_TOLERANCE: f64 = 1e-4;

fn pool(pooled: Option<f64>, frames: &[f64], what: &str) -> Result<Option<f64>, EncodeError> {
    let mean = (!frames.is_empty()).then(|| frames.iter().sum::<f64>() / frames.len() as f64);
    match (pooled, mean) {
        (Some(p), Some(m)) if (p - m).abs() > POOLING_TOLERANCE * m.abs().max(1.0) => {
            Err(EncodeError::ParseFailure(format!(
                "pooled {what} {p} disagrees with the per-frame mean {m}"
            )))
        }
        (Some(p), _) => Ok(Some(p)),
        (None, m) => Ok(m),
    }
}

/// Reads the metric tool's JSON:
/// `{"pooled": {"ms_ssim": f, "vmaf": f}, "frames": [{"ms_ssim": f, "vmaf": f}, ...]}`.
/// Either section may be missing as long as MS-SSIM can be established.
pub fn parse_metric_output(
    text: &str,
    bitrate_kbps: f64,
    source_frames: usize,
) -> Result<MetricReport, EncodeError> {
    let parsed: MetricJson = serde_json::from_str(text.trim())
        .map_err(|e| EncodeError::ParseFailure(format!("metric JSON: {e}")))?;
    let ms_ssim_frames: Vec<f64> = parsed.frames.iter().filter_map(|f| f.ms_ssim).collect();
    let vmaf_frames: Vec<f64> = parsed.frames.iter().filter_map(|f| f.vmaf).collect();
    let pooled = parsed.pooled.unwrap_or(Pooled {
        ms_ssim: None,
        vmaf: None,
    });
    let ms_ssim = pool(pooled.ms_ssim, &ms_ssim_frames, "ms_ssim")?
        .ok_or_else(|| EncodeError::ParseFailure("metric output has no MS-SSIM".into()))?;
    if !(0.0..1.0).contains(&ms_ssim) {
        return Err(EncodeError::ParseFailure(format!("MS-SSIM {ms_ssim} outside [0, 1)")));
    }
    let vmaf = pool(pooled.vmaf, &vmaf_frames, "vmaf")?;
    if vmaf.is_some_and(|v| !v.is_finite()) {
        return Err(EncodeError::ParseFailure("VMAF is not finite".into()));
    }
    let frame_count = if parsed.frames.is_empty() {
        source_frames
    } else {
        parsed.frames.len()
    };
    Ok(MetricReport {
        ms_ssim_frames,
        vmaf_frames,
        ms_ssim,
        vmaf,
        bitrate_kbps,
        frame_count,
    })
}
