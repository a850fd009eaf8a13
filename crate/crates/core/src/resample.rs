//! Separable Lanczos resampling of Y4M clips.
//!
//! Output sample `i` maps to source position `(i + 0.5) * src/dst - 0.5`
//! (pixel centres aligned). When shrinking, the kernel is stretched by the
//! scale factor so it low-passes; taps outside the image are clamped to the
//! edge sample and each output's weights are normalised to sum to one, so
//! flat regions stay flat.

use crate::y4m::{Frame, Y4mError, Y4mHeader, Y4mReader, Y4mWriter};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::BufWriter;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleFilter {
    Lanczos3,
    #[default]
    Lanczos5,
}

impl ResampleFilter {
    /// Number of lobes on each side of the kernel centre.
    pub fn lobes(self) -> usize {
        match self {
            ResampleFilter::Lanczos3 => 3,
            ResampleFilter::Lanczos5 => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResampleFilter::Lanczos3 => "lanczos3",
            ResampleFilter::Lanczos5 => "lanczos5",
        }
    }
}

/// `sinc(x) * sinc(x / a)` on `|x| < a`, zero outside.
pub fn lanczos(x: f64, a: usize) -> f64 {
    let a = a as f64;
    if x == 0.0 {
        1.0
    } else if x.abs() >= a {
        0.0
    } else {
        let px = PI * x;
        a * px.sin() * (px / a).sin() / (px * px)
    }
}

/// Normalised contributions of source samples to one output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    /// Source index of the first weight; may be negative or past the end,
    /// in which case the edge sample is used.
    pub start: isize,
    pub weights: Vec<f64>,
}

pub fn filter_taps(src_len: usize, dst_len: usize, a: usize) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let stretch = scale.max(1.0);
    let support = a as f64 * stretch;
    (0..dst_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let first = (center - support).floor() as isize + 1;
            let last = (center + support).ceil() as isize - 1;
            let mut weights: Vec<f64> = (first..=last)
                .map(|j| lanczos((j as f64 - center) / stretch, a))
                .collect();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            Taps {
                start: first,
                weights,
            }
        })
        .collect()
}

fn apply(taps: &Taps, sample: impl Fn(usize) -> f64, len: usize) -> f64 {
    let last = len as isize - 1;
    taps.weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * sample((taps.start + k as isize).clamp(0, last) as usize))
        .sum()
}

/// Resizes one plane. Horizontal pass first, then vertical, in f64.
pub fn resample_plane(
    src: &[u16],
    (sw, sh): (usize, usize),
    (dw, dh): (usize, usize),
    a: usize,
    max_value: u16,
) -> Vec<u16> {
    assert_eq!(src.len(), sw * sh, "plane size does not match its dimensions");
    let h_taps = filter_taps(sw, dw, a);
    let v_taps = filter_taps(sh, dh, a);

    let mut horizontal = vec![0.0f64; dw * sh];
    horizontal
        .par_chunks_mut(dw)
        .enumerate()
        .for_each(|(y, row)| {
            let line = &src[y * sw..(y + 1) * sw];
            for (x, out) in row.iter_mut().enumerate() {
                *out = apply(&h_taps[x], |i| line[i] as f64, sw);
            }
        });

    let mut out = vec![0u16; dw * dh];
    let max = max_value as f64;
    out.par_chunks_mut(dw).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let v = apply(&v_taps[y], |i| horizontal[i * dw + x], sh);
            *px = v.round().clamp(0.0, max) as u16;
        }
    });
    out
}

/// Resizes every plane of a frame to the plane sizes implied by `to`.
pub fn resample_frame(frame: &Frame, from: &Y4mHeader, to: &Y4mHeader, filter: ResampleFilter) -> Frame {
    let cs = &from.colorspace;
    let src_dims = cs.plane_dims(from.width, from.height);
    let dst_dims = cs.plane_dims(to.width, to.height);
    let planes = frame
        .planes
        .iter()
        .zip(src_dims.iter().zip(&dst_dims))
        .map(|(p, (&s, &d))| {
            if s == d {
                p.clone()
            } else {
                resample_plane(p, s, d, filter.lobes(), cs.max_value())
            }
        })
        .collect();
    Frame {
        planes,
        params: frame.params.clone(),
    }
}

/// Streams `src` into a `width`×`height` clip at `dst`. Frame rate, frame
/// count, bit depth and the remaining header tokens are preserved. Output
/// is written beside `dst` and renamed into place only on success.
pub fn resample_file(
    src: &Path,
    dst: &Path,
    width: usize,
    height: usize,
    filter: ResampleFilter,
) -> Result<Y4mHeader, Y4mError> {
    if width == 0 || height == 0 {
        return Err(Y4mError::Parse("target dimensions must be positive".into()));
    }
    let mut reader = Y4mReader::open(src)?;
    let from = reader.header().clone();
    let to = from.with_dimensions(width, height);
    let dir = dst.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut writer = Y4mWriter::new(BufWriter::new(tmp.as_file()), &to)?;
        while let Some(frame) = reader.next_frame()? {
            writer.write_frame(&resample_frame(&frame, &from, &to, filter))?;
        }
        writer.finish()?;
    }
    tmp.persist(dst).map_err(|e| Y4mError::Io(e.error))?;
    Ok(to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::y4m::{Chroma, Colorspace, Ratio};

    #[test]
    fn kernel_shape() {
        assert_eq!(lanczos(0.0, 5), 1.0);
        for n in 1..5 {
            assert!(lanczos(n as f64, 5).abs() < 1e-15);
        }
        assert_eq!(lanczos(5.0, 5), 0.0);
        assert_eq!(lanczos(-7.0, 5), 0.0);
        assert!((lanczos(0.5, 5) - lanczos(-0.5, 5)).abs() < 1e-15);
        // reference values from numpy's normalised sinc
        for (x, want) in [
            (0.25, 0.8966184786821073),
            (0.5, 0.6261993527133461),
            (1.5, -0.18215679879296934),
            (3.7, -0.021823946755374395),
        ] {
            assert!((lanczos(x, 5) - want).abs() < 1e-14, "{x}");
        }
    }

    #[test]
    fn constant_plane_is_preserved() {
        let src = vec![517u16; 64 * 36];
        for (dw, dh) in [(32, 18), (13, 7), (100, 50)] {
            let out = resample_plane(&src, (64, 36), (dw, dh), 5, 1023);
            assert!(out.iter().all(|&v| v == 517), "{dw}x{dh}");
        }
    }

    #[test]
    fn halving_impulse_matches_analytic_footprint() {
        // 1-D impulse at source index 20 of 40, halved to 20 samples: each
        // output i sits at 2i + 0.5 and sees the impulse through the
        // kernel stretched by two.
        let taps = filter_taps(40, 20, 5);
        for (i, t) in taps.iter().enumerate() {
            let center = 2.0 * i as f64 + 0.5;
            let raw: Vec<f64> = (t.start..t.start + t.weights.len() as isize)
                .map(|j| lanczos((j as f64 - center) / 2.0, 5))
                .collect();
            let sum: f64 = raw.iter().sum();
            for (w, r) in t.weights.iter().zip(&raw) {
                assert!((w - r / sum).abs() < 1e-15);
            }
            // the support spans 5 lobes at twice the width on each side
            assert_eq!(t.weights.len(), 20);
        }
        let mut plane = vec![0u16; 40];
        plane[20] = 1000;
        let row = resample_plane(&plane, (40, 1), (20, 1), 5, 1023);
        let expect: Vec<u16> = taps
            .iter()
            .map(|t| {
                let k = 20 - t.start;
                let w = if (0..t.weights.len() as isize).contains(&k) { t.weights[k as usize] } else { 0.0 };
                (1000.0 * w).round().clamp(0.0, 1023.0) as u16
            })
            .collect();
        assert_eq!(row, expect);
    }

    #[test]
    fn file_resample_keeps_header_contract() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.y4m");
        let dst = dir.path().join("dst.y4m");
        let cs = Colorspace::new(Chroma::C420, 10).unwrap();
        let header = Y4mHeader::new(64, 36, Ratio { num: 60, den: 1 }, cs);
        let frames: Vec<Frame> = (0..3).map(|i| Frame::filled(&header, &[400 + i, 512, 512])).collect();
        crate::y4m::write_file(&src, &header, &frames).unwrap();
        let out = resample_file(&src, &dst, 32, 18, ResampleFilter::Lanczos5).unwrap();
        let (h, got) = crate::y4m::read_file(&dst).unwrap();
        assert_eq!(h, out);
        assert_eq!((h.width, h.height, h.colorspace.bit_depth), (32, 18, 10));
        assert_eq!(h.frame_rate, header.frame_rate);
        assert_eq!(got.len(), 3);
        assert!(got[2].planes[0].iter().all(|&v| v == 402));
        assert_eq!(got[0].planes[1].len(), 16 * 9);
    }
}
