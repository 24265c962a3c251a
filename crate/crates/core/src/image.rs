//! RGB frame buffers and binary PPM/PGM codecs.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// Read access to an RGB raster with real-valued channels.
///
/// Feature extractors are written against this trait so that they run on
/// decoded 8-bit frames and on real-valued test rasters alike.
pub trait Pixels {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// Channel values of pixel `(x, y)` on the 0–255 scale.
    fn rgb(&self, x: usize, y: usize) -> [f64; 3];
}

/// One decoded frame: row-major RGB, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    /// Wraps a raw RGB buffer. Panics if the length is not `width * height * 3`.
    pub fn from_rgb(index: usize, width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "RGB buffer size mismatch");
        Self { index, width, height, data }
    }

    /// A frame filled with one color.
    pub fn filled(index: usize, width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { index, width, height, data }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Encodes the frame as binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_ppm())?;
        f.flush()
    }
}

impl Pixels for Frame {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        let [r, g, b] = self.pixel(x, y);
        [r as f64, g as f64, b as f64]
    }
}

/// A real-valued RGB raster, used where 8-bit rounding would get in the way.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl RealFrame {
    pub fn from_frame(frame: &Frame) -> Self {
        let data = (0..frame.height)
            .flat_map(|y| (0..frame.width).map(move |x| (x, y)))
            .map(|(x, y)| frame.rgb(x, y))
            .collect();
        Self { width: frame.width, height: frame.height, data }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let data = self.data.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect();
        Self { width: self.width, height: self.height, data }
    }
}

impl Pixels for RealFrame {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct DecodeError(pub String);

/// Decodes binary PPM (P6) or PGM (P5). Gray images are expanded to RGB.
pub fn decode_pnm(index: usize, bytes: &[u8]) -> Result<Frame, DecodeError> {
    let mut cursor = 0usize;
    let magic = next_token(bytes, &mut cursor).ok_or_else(|| DecodeError("missing magic".into()))?;
    let channels = match magic {
        b"P6" => 3,
        b"P5" => 1,
        other => {
            return Err(DecodeError(format!("unsupported magic {:?}", String::from_utf8_lossy(other))));
        }
    };
    let mut header = [0usize; 3];
    for (slot, what) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut cursor).ok_or_else(|| DecodeError(format!("missing {what}")))?;
        *slot = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DecodeError(format!("bad {what}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(DecodeError("zero dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DecodeError(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(DecodeError("truncated header".into()));
    }
    cursor += 1;
    let need = width * height * channels;
    let raster =
        bytes.get(cursor..cursor + need).ok_or_else(|| DecodeError(format!("expected {need} raster bytes")))?;
    let scale = |v: u8| -> u8 {
        if maxval == 255 { v } else { ((v as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8 }
    };
    let data = if channels == 3 {
        raster.iter().map(|&v| scale(v)).collect()
    } else {
        raster.iter().flat_map(|&v| [scale(v); 3]).collect()
    };
    Ok(Frame { index, width, height, data })
}

fn next_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    (start < *cursor).then(|| &bytes[start..*cursor])
}
