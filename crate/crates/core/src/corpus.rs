//! Clip inventory: Y4M metadata, shot-group tags and SI/TI complexity.
//!
//! SI is the largest (over frames) standard deviation of the Sobel
//! gradient magnitude of luma, taken over the interior only (the one-pixel
//! border has no full 3×3 neighbourhood). TI is the largest standard
//! deviation of the luma difference between consecutive frames. Luma is
//! scaled to 8-bit range first so clips of different depths compare.

use crate::y4m::{Ratio, Y4mError, Y4mReader};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    ParseFailure {
        path: PathBuf,
        #[source]
        source: Y4mError,
    },
    #[error("{path}: SI/TI needs at least 2 frames, found {found}")]
    TooFewFrames { path: PathBuf, found: usize },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("manifest lists no clips")]
    EmptyManifest,
    #[error("clip id {0:?} appears more than once")]
    DuplicateClip(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DynamicRange {
    #[default]
    #[serde(rename = "SDR", alias = "sdr")]
    Sdr,
    #[serde(rename = "HDR", alias = "hdr")]
    Hdr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub frame_rate: Ratio,
    pub bit_depth: u8,
    pub shot_group: String,
    pub dynamic_range: DynamicRange,
    pub si: Option<f64>,
    pub ti: Option<f64>,
}

/// Reads the header and streams every frame to count them. The clip id
/// defaults to the file stem; tags are left at their defaults.
pub fn scan_clip(path: &Path) -> Result<ClipRecord, CorpusError> {
    let wrap = |source| CorpusError::ParseFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = Y4mReader::open(path).map_err(wrap)?;
    let h = reader.header().clone();
    let frame_count = reader.count_remaining().map_err(wrap)?;
    Ok(ClipRecord {
        clip_id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        path: path.to_path_buf(),
        width: h.width,
        height: h.height,
        frame_count,
        frame_rate: h.frame_rate,
        bit_depth: h.colorspace.bit_depth,
        shot_group: String::new(),
        dynamic_range: DynamicRange::default(),
        si: None,
        ti: None,
    })
}

/// Per-frame SI and per-pair TI, plus their maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiTi {
    pub si: f64,
    pub ti: f64,
    pub si_series: Vec<f64>,
    pub ti_series: Vec<f64>,
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.sqrt()
}

/// Standard deviation of the Sobel magnitude over the interior of one
/// luma plane (row-major, `width` × `height`). Planes without an interior
/// give 0.
pub fn spatial_information(luma: &[f64], width: usize, height: usize) -> f64 {
    if width < 3 || height < 3 {
        return 0.0;
    }
    let at = |x: usize, y: usize| luma[y * width + x];
    let mags = (1..height - 1).flat_map(move |y| {
        (1..width - 1).map(move |x| {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            (gx * gx + gy * gy).sqrt()
        })
    });
    std_dev(mags)
}

pub fn temporal_information(prev: &[f64], cur: &[f64]) -> f64 {
    std_dev(prev.iter().zip(cur).map(|(a, b)| b - a))
}

/// SI/TI over a sequence of 8-bit-scaled luma planes.
pub fn si_ti_of_frames(frames: &[Vec<f64>], width: usize, height: usize) -> SiTi {
    let si_series: Vec<f64> = frames
        .par_iter()
        .map(|f| spatial_information(f, width, height))
        .collect();
    let ti_series: Vec<f64> = frames
        .windows(2)
        .map(|w| temporal_information(&w[0], &w[1]))
        .collect();
    let max = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
    SiTi {
        si: max(&si_series),
        ti: max(&ti_series),
        si_series,
        ti_series,
    }
}

/// Streams a clip, keeping only the previous luma plane in memory.
pub fn compute_si_ti(path: &Path) -> Result<SiTi, CorpusError> {
    let wrap = |source| CorpusError::ParseFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = Y4mReader::open(path).map_err(wrap)?;
    let h = reader.header().clone();
    let scale = 1.0 / (1u32 << (h.colorspace.bit_depth - 8)) as f64;
    let mut si_series = Vec::new();
    let mut ti_series = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    while let Some(frame) = reader.next_frame().map_err(wrap)? {
        let luma: Vec<f64> = frame.luma().iter().map(|&v| v as f64 * scale).collect();
        si_series.push(spatial_information(&luma, h.width, h.height));
        if let Some(p) = &prev {
            ti_series.push(temporal_information(p, &luma));
        }
        prev = Some(luma);
    }
    if si_series.len() < 2 {
        return Err(CorpusError::TooFewFrames {
            path: path.to_path_buf(),
            found: si_series.len(),
        });
    }
    let max = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
    Ok(SiTi {
        si: max(&si_series),
        ti: max(&ti_series),
        si_series,
        ti_series,
    })
}

/// One clip as listed in a corpus manifest. `path` may be omitted for
/// clips served by a synthetic backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub clip_id: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub shot_group: String,
    #[serde(default)]
    pub dynamic_range: DynamicRange,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub clips: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.clips.is_empty() {
            return Err(CorpusError::EmptyManifest);
        }
        let mut seen = HashSet::new();
        for c in &self.clips {
            if !seen.insert(&c.clip_id) {
                return Err(CorpusError::DuplicateClip(c.clip_id.clone()));
            }
        }
        Ok(())
    }

    /// Makes relative clip paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for c in &mut self.clips {
            if let Some(p) = &c.path {
                if p.is_relative() {
                    c.path = Some(base.join(p));
                }
            }
        }
    }
}

/// Loads a JSON (`.json`) or TOML (anything else) manifest; relative clip
/// paths are resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let err = |reason: String| CorpusError::Manifest {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut m: Manifest = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| err(e.to_string()))?
    };
    m.validate()?;
    m.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(m)
}

/// Scans every manifest clip that has a path, optionally with SI/TI, in
/// parallel. Results keep manifest order.
pub fn build_corpus(manifest: &Manifest, with_complexity: bool) -> Vec<Result<ClipRecord, CorpusError>> {
    manifest
        .clips
        .par_iter()
        .filter_map(|entry| {
            let path = entry.path.as_ref()?;
            Some((|| {
                let mut rec = scan_clip(path)?;
                rec.clip_id = entry.clip_id.clone();
                rec.shot_group = entry.shot_group.clone();
                rec.dynamic_range = entry.dynamic_range;
                if with_complexity {
                    let s = compute_si_ti(path)?;
                    rec.si = Some(s.si);
                    rec.ti = Some(s.ti);
                }
                Ok(rec)
            })())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::y4m::{write_file, Chroma, Colorspace, Frame, Y4mHeader};

    fn gray_clip(dir: &Path, name: &str, frames: &[u16], depth: u8) -> PathBuf {
        let cs = Colorspace::new(Chroma::C420, depth).unwrap();
        let h = Y4mHeader::new(16, 8, Ratio { num: 30, den: 1 }, cs);
        let fs: Vec<Frame> = frames.iter().map(|&v| Frame::filled(&h, &[v, 128, 128])).collect();
        let p = dir.join(name);
        write_file(&p, &h, &fs).unwrap();
        p
    }

    #[test]
    fn scan_reports_header_and_count() {
        let d = tempfile::tempdir().unwrap();
        let p = gray_clip(d.path(), "g.y4m", &[100, 100], 8);
        let r = scan_clip(&p).unwrap();
        assert_eq!((r.width, r.height, r.frame_count, r.bit_depth), (16, 8, 2, 8));
        assert_eq!(r.clip_id, "g");
    }

    #[test]
    fn truncated_frame_index_is_reported() {
        let d = tempfile::tempdir().unwrap();
        let p = gray_clip(d.path(), "t.y4m", &[1, 2, 3], 8);
        let len = std::fs::metadata(&p).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&p).unwrap();
        f.set_len(len - 5).unwrap();
        match scan_clip(&p) {
            Err(CorpusError::ParseFailure { source: Y4mError::Truncated { frame }, .. }) => {
                assert_eq!(frame, 2)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_and_offset_clips() {
        let d = tempfile::tempdir().unwrap();
        let p = gray_clip(d.path(), "c.y4m", &[77, 77, 77], 8);
        let s = compute_si_ti(&p).unwrap();
        assert_eq!((s.si, s.ti), (0.0, 0.0));
        let p = gray_clip(d.path(), "o.y4m", &[70, 80], 8);
        assert_eq!(compute_si_ti(&p).unwrap().ti, 0.0);
        let p = gray_clip(d.path(), "one.y4m", &[70], 8);
        assert!(matches!(compute_si_ti(&p), Err(CorpusError::TooFewFrames { found: 1, .. })));
    }

    #[test]
    fn step_edge_matches_closed_form() {
        // Vertical edge between columns 4 and 5 of a 10×6 plane, height 100.
        // Interior is 8×4; columns 4 and 5 see |gx| = 4·100, the rest 0.
        let (w, h) = (10, 6);
        let luma: Vec<f64> = (0..w * h).map(|i| if i % w >= 5 { 100.0 } else { 0.0 }).collect();
        let p: f64 = 2.0 / 8.0;
        let expected = 400.0 * (p * (1.0 - p)).sqrt();
        assert!((spatial_information(&luma, w, h) - expected).abs() < 1e-12);
    }

    #[test]
    fn ten_bit_is_scaled_to_eight() {
        let (w, h) = (10, 6);
        let eight: Vec<f64> = (0..w * h).map(|i| if i % w >= 5 { 100.0 } else { 0.0 }).collect();
        let d = tempfile::tempdir().unwrap();
        let cs = Colorspace::new(Chroma::Mono, 10).unwrap();
        let hdr = Y4mHeader::new(w, h, Ratio { num: 1, den: 1 }, cs);
        let frame = Frame {
            planes: vec![eight.iter().map(|&v| (v * 4.0) as u16).collect()],
            params: None,
        };
        let path = d.path().join("e.y4m");
        write_file(&path, &hdr, &[frame.clone(), frame]).unwrap();
        let s = compute_si_ti(&path).unwrap();
        assert!((s.si - spatial_information(&eight, w, h)).abs() < 1e-12);
    }

    #[test]
    fn manifest_formats_and_checks() {
        let d = tempfile::tempdir().unwrap();
        let toml_path = d.path().join("m.toml");
        std::fs::write(
            &toml_path,
            "[[clips]]\nclip_id = \"a\"\npath = \"a.y4m\"\nshot_group = \"Cosmos\"\ndynamic_range = \"HDR\"\n",
        )
        .unwrap();
        let m = load_manifest(&toml_path).unwrap();
        assert_eq!(m.clips[0].path.as_deref(), Some(d.path().join("a.y4m").as_path()));
        assert_eq!(m.clips[0].dynamic_range, DynamicRange::Hdr);

        let json_path = d.path().join("m.json");
        std::fs::write(&json_path, r#"{"clips":[{"clip_id":"a"},{"clip_id":"a"}]}"#).unwrap();
        assert!(matches!(load_manifest(&json_path), Err(CorpusError::DuplicateClip(_))));
        std::fs::write(&json_path, r#"{"clips":[]}"#).unwrap();
        assert!(matches!(load_manifest(&json_path), Err(CorpusError::EmptyManifest)));
    }

    #[test]
    fn corpus_build_applies_tags() {
        let d = tempfile::tempdir().unwrap();
        gray_clip(d.path(), "a.y4m", &[10, 20, 30], 8);
        let m = Manifest {
            clips: vec![
                ManifestEntry {
                    clip_id: "alpha".into(),
                    path: Some(d.path().join("a.y4m")),
                    shot_group: "G".into(),
                    dynamic_range: DynamicRange::Hdr,
                },
                ManifestEntry {
                    clip_id: "synthetic-only".into(),
                    path: None,
                    shot_group: "G".into(),
                    dynamic_range: DynamicRange::Sdr,
                },
            ],
        };
        let recs = build_corpus(&m, true);
        assert_eq!(recs.len(), 1);
        let r = recs[0].as_ref().unwrap();
        assert_eq!((r.clip_id.as_str(), r.shot_group.as_str()), ("alpha", "G"));
        assert_eq!((r.si, r.ti), (Some(0.0), Some(0.0)));
    }
}
