//! YUV4MPEG2 reading and writing.
//!
//! Samples are held as `u16` whatever the bit depth; files above 8 bits
//! store them little-endian in two bytes. Header tokens the writer does not
//! interpret (X extensions and anything unknown) are kept in their original
//! positions so read-then-write reproduces the input byte for byte.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const FILE_MAGIC: &str = "YUV4MPEG2";
const FRAME_MAGIC: &str = "FRAME";
const MAX_LINE: u64 = 4096;

#[derive(Debug, Error)]
pub enum Y4mError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed y4m: {0}")]
    Parse(String),
    #[error("unsupported colorspace {0:?}")]
    UnsupportedColorspace(String),
    #[error("frame {frame} is truncated")]
    Truncated { frame: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

/// Sampling plus bit depth, remembering the exact `C` token it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Colorspace {
    pub chroma: Chroma,
    pub bit_depth: u8,
    token: String,
}

impl Colorspace {
    pub fn parse(token: &str) -> Result<Self, Y4mError> {
        let unsupported = || Y4mError::UnsupportedColorspace(token.to_string());
        let (chroma, rest) = if let Some(r) = token.strip_prefix("mono") {
            (Chroma::Mono, r)
        } else if let Some(r) = token.strip_prefix("420") {
            (Chroma::C420, r)
        } else if let Some(r) = token.strip_prefix("422") {
            (Chroma::C422, r)
        } else if let Some(r) = token.strip_prefix("444") {
            (Chroma::C444, r)
        } else {
            return Err(unsupported());
        };
        let bit_depth = match (chroma, rest) {
            (_, "") => 8,
            (Chroma::C420, "jpeg" | "paldv" | "mpeg2") => 8,
            (Chroma::Mono, digits) if !digits.starts_with('p') => {
                digits.parse().map_err(|_| unsupported())?
            }
            (_, r) => r
                .strip_prefix('p')
                .and_then(|d| d.parse().ok())
                .ok_or_else(unsupported)?,
        };
        if !matches!(bit_depth, 8 | 10 | 12 | 16) {
            return Err(unsupported());
        }
        Ok(Colorspace {
            chroma,
            bit_depth,
            token: token.to_string(),
        })
    }

    /// Canonical token for a sampling/depth pair.
    pub fn new(chroma: Chroma, bit_depth: u8) -> Result<Self, Y4mError> {
        let base = match chroma {
            Chroma::C420 => "420",
            Chroma::C422 => "422",
            Chroma::C444 => "444",
            Chroma::Mono => "mono",
        };
        let token = match (chroma, bit_depth) {
            (Chroma::C420, 8) => "420jpeg".to_string(),
            (_, 8) => base.to_string(),
            (Chroma::Mono, d) => format!("mono{d}"),
            (_, d) => format!("{base}p{d}"),
        };
        Colorspace::parse(&token)
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    pub fn max_value(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    /// (width, height) of each plane, luma first.
    pub fn plane_dims(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let (cw, ch) = ((width + 1) / 2, (height + 1) / 2);
        match self.chroma {
            Chroma::Mono => vec![(width, height)],
            Chroma::C420 => vec![(width, height), (cw, ch), (cw, ch)],
            Chroma::C422 => vec![(width, height), (cw, height), (cw, height)],
            Chroma::C444 => vec![(width, height); 3],
        }
    }
}

impl fmt::Display for Colorspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn parse(s: &str) -> Option<Ratio> {
        let (n, d) = s.split_once(':')?;
        Some(Ratio {
            num: n.parse().ok()?,
            den: d.parse().ok()?,
        })
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub frame_rate: Ratio,
    /// Raw value of the `I` token, e.g. "p".
    pub interlace: Option<String>,
    /// Raw value of the `A` token, e.g. "1:1".
    pub aspect: Option<String>,
    pub colorspace: Colorspace,
    // Original token tags in order; `None` entries are opaque tokens kept
    // verbatim.
    layout: Vec<(char, Option<String>)>,
    has_c_token: bool,
}

impl Y4mHeader {
    pub fn new(width: usize, height: usize, frame_rate: Ratio, colorspace: Colorspace) -> Self {
        Y4mHeader {
            width,
            height,
            frame_rate,
            interlace: Some("p".into()),
            aspect: None,
            colorspace,
            layout: Vec::new(),
            has_c_token: true,
        }
    }

    /// Same header with new dimensions; everything else carried over.
    pub fn with_dimensions(&self, width: usize, height: usize) -> Self {
        Y4mHeader {
            width,
            height,
            ..self.clone()
        }
    }

    pub fn frame_bytes(&self) -> usize {
        self.colorspace
            .plane_dims(self.width, self.height)
            .iter()
            .map(|(w, h)| w * h)
            .sum::<usize>()
            * self.colorspace.bytes_per_sample()
    }

    /// Playback duration of `frames` frames, in seconds.
    pub fn duration_seconds(&self, frames: usize) -> f64 {
        frames as f64 * self.frame_rate.den as f64 / self.frame_rate.num as f64
    }

    pub fn parse(line: &str) -> Result<Self, Y4mError> {
        let mut tokens = line.split(' ');
        if tokens.next() != Some(FILE_MAGIC) {
            return Err(Y4mError::Parse("missing YUV4MPEG2 signature".into()));
        }
        let (mut width, mut height, mut rate) = (None, None, None);
        let (mut interlace, mut aspect, mut colorspace) = (None, None, None);
        let mut layout = Vec::new();
        for tok in tokens.filter(|t| !t.is_empty()) {
            let tag = tok.chars().next().unwrap();
            let value = &tok[tag.len_utf8()..];
            let bad = || Y4mError::Parse(format!("bad header token {tok:?}"));
            match tag {
                'W' => width = Some(value.parse::<usize>().map_err(|_| bad())?),
                'H' => height = Some(value.parse::<usize>().map_err(|_| bad())?),
                'F' => rate = Some(Ratio::parse(value).filter(|r| r.num > 0 && r.den > 0).ok_or_else(bad)?),
                'I' => interlace = Some(value.to_string()),
                'A' => aspect = Some(value.to_string()),
                'C' => colorspace = Some(Colorspace::parse(value)?),
                _ => {
                    layout.push((tag, Some(tok.to_string())));
                    continue;
                }
            }
            layout.push((tag, None));
        }
        let (width, height) = match (width, height) {
            (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
            _ => return Err(Y4mError::Parse("missing or zero W/H".into())),
        };
        let frame_rate = rate.ok_or_else(|| Y4mError::Parse("missing F token".into()))?;
        let has_c_token = colorspace.is_some();
        let colorspace = match colorspace {
            Some(c) => c,
            None => Colorspace::parse("420jpeg")?,
        };
        Ok(Y4mHeader {
            width,
            height,
            frame_rate,
            interlace,
            aspect,
            colorspace,
            layout,
            has_c_token,
        })
    }

    pub fn to_line(&self) -> String {
        let mut out = vec![FILE_MAGIC.to_string()];
        let field = |tag: char| -> Option<String> {
            match tag {
                'W' => Some(format!("W{}", self.width)),
                'H' => Some(format!("H{}", self.height)),
                'F' => Some(format!("F{}", self.frame_rate)),
                'I' => self.interlace.as_ref().map(|v| format!("I{v}")),
                'A' => self.aspect.as_ref().map(|v| format!("A{v}")),
                'C' => self.has_c_token.then(|| format!("C{}", self.colorspace)),
                _ => None,
            }
        };
        let mut seen = Vec::new();
        for (tag, raw) in &self.layout {
            match raw {
                Some(tok) => out.push(tok.clone()),
                None => {
                    seen.push(*tag);
                    out.extend(field(*tag));
                }
            }
        }
        for tag in ['W', 'H', 'F', 'I', 'A', 'C'] {
            if !seen.contains(&tag) {
                // A colorspace that differs from the implied default must be
                // spelled out even if the source omitted it.
                let f = if tag == 'C' && !self.has_c_token && self.colorspace.token != "420jpeg" {
                    Some(format!("C{}", self.colorspace))
                } else {
                    field(tag)
                };
                out.extend(f);
            }
        }
        out.join(" ")
    }
}

/// One picture: planes in Y, Cb, Cr order (luma only for mono).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub planes: Vec<Vec<u16>>,
    /// Raw parameters after `FRAME`, if any.
    pub params: Option<String>,
}

impl Frame {
    /// A frame with every sample of each plane set to the given value.
    pub fn filled(header: &Y4mHeader, values: &[u16]) -> Frame {
        let dims = header.colorspace.plane_dims(header.width, header.height);
        Frame {
            planes: dims
                .iter()
                .zip(values.iter().chain(std::iter::repeat(values.last().unwrap_or(&0))))
                .map(|((w, h), &v)| vec![v; w * h])
                .collect(),
            params: None,
        }
    }

    pub fn luma(&self) -> &[u16] {
        &self.planes[0]
    }
}

pub struct Y4mReader<R> {
    inner: R,
    header: Y4mHeader,
    next_index: usize,
    buf: Vec<u8>,
}

fn read_line<R: BufRead>(r: &mut R) -> io::Result<(Vec<u8>, bool)> {
    let mut line = Vec::new();
    r.by_ref().take(MAX_LINE).read_until(b'\n', &mut line)?;
    let terminated = line.last() == Some(&b'\n');
    if terminated {
        line.pop();
    }
    Ok((line, terminated))
}

impl Y4mReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, Y4mError> {
        Y4mReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self, Y4mError> {
        let (line, terminated) = read_line(&mut inner)?;
        if !terminated {
            return Err(Y4mError::Parse("unterminated stream header".into()));
        }
        let line = String::from_utf8(line).map_err(|_| Y4mError::Parse("header is not UTF-8".into()))?;
        let header = Y4mHeader::parse(&line)?;
        let buf = vec![0; header.frame_bytes()];
        Ok(Y4mReader {
            inner,
            header,
            next_index: 0,
            buf,
        })
    }

    pub fn header(&self) -> &Y4mHeader {
        &self.header
    }

    // Reads the FRAME line and payload into `self.buf`; returns the frame
    // parameters, or `None` at a clean end of stream.
    fn read_raw(&mut self) -> Result<Option<Option<String>>, Y4mError> {
        let index = self.next_index;
        let (line, terminated) = read_line(&mut self.inner)?;
        if line.is_empty() && !terminated {
            return Ok(None);
        }
        if !terminated {
            return Err(Y4mError::Truncated { frame: index });
        }
        let line = String::from_utf8(line)
            .map_err(|_| Y4mError::Parse(format!("frame {index}: header is not UTF-8")))?;
        let params = match line.strip_prefix(FRAME_MAGIC) {
            Some("") => None,
            Some(rest) if rest.starts_with(' ') => Some(rest[1..].to_string()),
            _ => return Err(Y4mError::Parse(format!("frame {index}: expected FRAME marker"))),
        };
        match self.inner.read_exact(&mut self.buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(Y4mError::Truncated { frame: index })
            }
            Err(e) => return Err(e.into()),
        }
        self.next_index += 1;
        Ok(Some(params))
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, Y4mError> {
        let Some(params) = self.read_raw()? else {
            return Ok(None);
        };
        let cs = &self.header.colorspace;
        let wide = cs.bytes_per_sample() == 2;
        let mut offset = 0;
        let mut planes = Vec::with_capacity(3);
        for (w, h) in cs.plane_dims(self.header.width, self.header.height) {
            let n = w * h;
            let plane: Vec<u16> = if wide {
                self.buf[offset..offset + 2 * n]
                    .chunks_exact(2)
                    .map(|b| u16::from_le_bytes([b[0], b[1]]))
                    .collect()
            } else {
                self.buf[offset..offset + n].iter().map(|&b| b as u16).collect()
            };
            offset += n * cs.bytes_per_sample();
            planes.push(plane);
        }
        Ok(Some(Frame { planes, params }))
    }

    /// Streams to the end, validating every frame, and returns the count.
    pub fn count_remaining(&mut self) -> Result<usize, Y4mError> {
        let mut n = 0;
        while self.read_raw()?.is_some() {
            n += 1;
        }
        Ok(n)
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame, Y4mError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

pub struct Y4mWriter<W: Write> {
    inner: W,
    header: Y4mHeader,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut inner: W, header: &Y4mHeader) -> Result<Self, Y4mError> {
        writeln!(inner, "{}", header.to_line())?;
        Ok(Y4mWriter {
            inner,
            header: header.clone(),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), Y4mError> {
        let cs = &self.header.colorspace;
        let dims = cs.plane_dims(self.header.width, self.header.height);
        if frame.planes.len() != dims.len()
            || frame.planes.iter().zip(&dims).any(|(p, (w, h))| p.len() != w * h)
        {
            return Err(Y4mError::Parse("frame planes do not match the stream header".into()));
        }
        match &frame.params {
            Some(p) => writeln!(self.inner, "{FRAME_MAGIC} {p}")?,
            None => writeln!(self.inner, "{FRAME_MAGIC}")?,
        }
        let mut bytes = Vec::with_capacity(self.header.frame_bytes());
        for plane in &frame.planes {
            if cs.bytes_per_sample() == 2 {
                plane.iter().for_each(|s| bytes.extend_from_slice(&s.to_le_bytes()));
            } else {
                bytes.extend(plane.iter().map(|&s| s.min(255) as u8));
            }
        }
        self.inner.write_all(&bytes)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, Y4mError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a whole clip to `path`.
pub fn write_file(path: &Path, header: &Y4mHeader, frames: &[Frame]) -> Result<(), Y4mError> {
    let mut w = Y4mWriter::new(BufWriter::new(File::create(path)?), header)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a whole clip from `path`.
pub fn read_file(path: &Path) -> Result<(Y4mHeader, Vec<Frame>), Y4mError> {
    let reader = Y4mReader::open(path)?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}
