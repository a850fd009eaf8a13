//! Stand-in encoder, decoder and metric programs (POSIX sh + awk) for
//! exercising the process backend without real codecs.
//!
//! The encoder writes a zero-filled bitstream whose size falls with qp and
//! grows with the distance of the effective multipliers from
//! `(MOCK_K_STAR_KF, MOCK_K_STAR_GF_ARF)`; the metric reports MS-SSIM as a
//! function of qp only. The decoder emits a blank Y4M at the encoded size.

use crate::encoders::ProcessBackendConfig;
use crate::y4m::{write_file, Chroma, Colorspace, Frame, Ratio, Y4mHeader};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const MOCK_K_STAR_KF: f64 = 2.0;
pub const MOCK_K_STAR_GF_ARF: f64 = 0.8;

const ENCODER: &str = r#"#!/bin/sh
# enc.sh qp k_all k_kf k_gf_arf width height output
set -e
bytes=$(awk -v qp="$1" -v ka="$2" -v kk="$3" -v kg="$4" -v w="$5" -v h="$6" 'BEGIN {
  lk = log(ka * kk) - log(2.0); lg = log(ka * kg) - log(0.8)
  pen = 0.03 * lk * lk + 0.02 * lg * lg
  printf "%d", 2000000 * exp(-0.07 * qp) * exp(pen * log(10)) * (w * h) / (64 * 36) + 64
}')
head -c "$bytes" /dev/zero > "$7"
"#;

const DECODER: &str = r#"#!/bin/sh
# dec.sh input output width height
set -e
[ -f "$1" ]
printf 'YUV4MPEG2 W%s H%s F25:1 Ip A1:1 C420jpeg\nFRAME\n' "$3" "$4" > "$2"
head -c $(( $3 * $4 * 3 / 2 )) /dev/zero >> "$2"
"#;

const METRIC: &str = r#"#!/bin/sh
# metric.sh reference distorted qp output
[ -f "$1" ] && [ -f "$2" ] || { echo "metric: missing input" >&2; exit 3; }
awk -v qp="$3" 'BEGIN {
  s = 0.999 - 0.004 * qp
  printf "{\"pooled\":{\"ms_ssim\":%.6f,\"vmaf\":%.4f}}\n", s, 100 * s
}' > "$4"
"#;

pub struct MockTools {
    pub dir: PathBuf,
}

impl MockTools {
    pub fn install(dir: &Path) -> io::Result<MockTools> {
        fs::create_dir_all(dir)?;
        for (name, body) in [("enc.sh", ENCODER), ("dec.sh", DECODER), ("metric.sh", METRIC)] {
            fs::write(dir.join(name), body)?;
        }
        Ok(MockTools { dir: dir.to_path_buf() })
    }

    fn script(&self, name: &str) -> String {
        shell_words::quote(&self.dir.join(name).to_string_lossy()).into_owned()
    }

    /// Backend configuration running the three scripts through `sh`.
    pub fn backend_config(&self) -> ProcessBackendConfig {
        let mut cfg = ProcessBackendConfig::new(
            format!(
                "sh {} {{qp}} {{k_all}} {{k_kf}} {{k_gf_arf}} {{width}} {{height}} {{output}}",
                self.script("enc.sh")
            ),
            format!("sh {} {{reference}} {{distorted}} {{qp}} {{output}}", self.script("metric.sh")),
        );
        cfg.decoder = Some(format!("sh {} {{input}} {{output}} {{width}} {{height}}", self.script("dec.sh")));
        cfg.version = "mock-1".into();
        cfg.output_extension = "bin".into();
        cfg
    }
}

/// A small 8-bit 4:2:0 gradient clip, 64x36, `frames` frames at 25 fps.
pub fn write_source_clip(path: &Path, frames: usize) -> io::Result<()> {
    let cs = Colorspace::new(Chroma::C420, 8).expect("8-bit 4:2:0");
    let header = Y4mHeader::new(64, 36, Ratio { num: 25, den: 1 }, cs);
    let frames: Vec<Frame> = (0..frames)
        .map(|f| {
            let mut frame = Frame::filled(&header, &[128, 128, 128]);
            for (i, v) in frame.planes[0].iter_mut().enumerate() {
                let (x, y) = (i % 64, i / 64);
                *v = (16 + (x * 3 + y * 2 + f * 5) % 200) as u16;
            }
            frame
        })
        .collect();
    write_file(path, &header, &frames).map_err(io::Error::other)
}
