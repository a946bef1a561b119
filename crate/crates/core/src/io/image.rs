//! Grayscale image codecs: INRF raw floats, 8/16-bit PNG, and PGM (P2/P5).

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ImageField;

use super::{read_file, write_file};

pub const INRF_MAGIC: &[u8; 4] = b"INRF";
/// Same header as INRF, followed by f64 samples. Lossless for any field.
pub const INRD_MAGIC: &[u8; 4] = b"INRD";
const RAW_HEADER: usize = 8;

/// Largest side any decoder accepts; bounds allocations on hostile input.
pub const MAX_SIDE: usize = 16_384;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Inrf,
    Inrd,
    Png,
    Pgm,
}

impl ImageFormat {
    /// Sniffs the leading bytes.
    pub fn detect(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(INRF_MAGIC) {
            Ok(ImageFormat::Inrf)
        } else if bytes.starts_with(INRD_MAGIC) {
            Ok(ImageFormat::Inrd)
        } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Ok(ImageFormat::Png)
        } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
            Ok(ImageFormat::Pgm)
        } else {
            let head: Vec<String> = bytes.iter().take(4).map(|b| format!("{b:02x}")).collect();
            Err(Error::Format(format!("unrecognised image signature [{}]", head.join(" "))))
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageField> {
    decode_image(&read_file(path.as_ref())?)
}

/// Decodes any supported format. Integer formats are divided by their
/// maximum code value (`2^bits − 1` for PNG, `maxval` for PGM).
pub fn decode_image(bytes: &[u8]) -> Result<ImageField> {
    match ImageFormat::detect(bytes)? {
        ImageFormat::Inrf => decode_raw(bytes, Precision::Single),
        ImageFormat::Inrd => decode_raw(bytes, Precision::Double),
        ImageFormat::Png => {
            let raw = decode_png_gray(bytes, false)?;
            let max = ((1u32 << raw.bits) - 1) as f64;
            integer_image(raw.height, raw.width, &raw.samples, max)
        }
        ImageFormat::Pgm => {
            let raw = decode_pgm(bytes)?;
            integer_image(raw.height, raw.width, &raw.samples, raw.maxval as f64)
        }
    }
}

fn integer_image(height: usize, width: usize, samples: &[u16], max: f64) -> Result<ImageField> {
    ImageField::new(height, width, samples.iter().map(|&v| v as f64 / max).collect())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    fn magic(self) -> &'static [u8; 4] {
        match self {
            Precision::Single => INRF_MAGIC,
            Precision::Double => INRD_MAGIC,
        }
    }
}

fn checked_dims(height: usize, width: usize, what: &str) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Format(format!("{what} has an empty {height}x{width} canvas")));
    }
    if height > MAX_SIDE || width > MAX_SIDE {
        return Err(Error::Format(format!(
            "{what} is {height}x{width}; sides above {MAX_SIDE} are not supported"
        )));
    }
    Ok(())
}

fn decode_raw(bytes: &[u8], precision: Precision) -> Result<ImageField> {
    if bytes.len() < RAW_HEADER {
        return Err(Error::Truncated {
            what: "raw float header",
            needed: RAW_HEADER,
            available: bytes.len(),
        });
    }
    let height = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let width = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    checked_dims(height, width, "raw float image")?;
    let needed = RAW_HEADER + height * width * precision.bytes();
    if bytes.len() < needed {
        return Err(Error::Truncated {
            what: "raw float image",
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::Format(format!(
            "raw float image has {} trailing bytes",
            bytes.len() - needed
        )));
    }
    let payload = &bytes[RAW_HEADER..];
    let data: Vec<f64> = match precision {
        Precision::Single => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Precision::Double => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("raw float image contains non-finite samples".into()));
    }
    ImageField::new(height, width, data)
}

/// Raw little-endian floats behind an 8-byte header. Single precision
/// rounds each sample to the nearest f32.
pub fn encode_raw(image: &ImageField, precision: Precision) -> Result<Vec<u8>> {
    let (h, w) = image.dims();
    let (Ok(h16), Ok(w16)) = (u16::try_from(h), u16::try_from(w)) else {
        return Err(Error::Validation(format!("{h}x{w} does not fit the 16-bit raw float header")));
    };
    let mut out = Vec::with_capacity(RAW_HEADER + image.len() * precision.bytes());
    out.extend_from_slice(precision.magic());
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    for &v in image.data() {
        match precision {
            Precision::Single => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Precision::Double => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

pub fn save_inrf(path: impl AsRef<Path>, image: &ImageField) -> Result<()> {
    write_file(path.as_ref(), &encode_raw(image, Precision::Single)?)
}

pub fn save_inrd(path: impl AsRef<Path>, image: &ImageField) -> Result<()> {
    write_file(path.as_ref(), &encode_raw(image, Precision::Double)?)
}

/// 16-bit grayscale PNG of the image clamped to `[0, 1]`.
pub fn encode_png16(image: &ImageField) -> Result<Vec<u8>> {
    let samples: Vec<u8> = image
        .data()
        .iter()
        .flat_map(|&v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
        .collect();
    encode_png(image.height(), image.width(), png::BitDepth::Sixteen, png::ColorType::Grayscale, None, &samples)
}

pub fn save_png16(path: impl AsRef<Path>, image: &ImageField) -> Result<()> {
    write_file(path.as_ref(), &encode_png16(image)?)
}

pub(super) fn encode_png(
    height: usize,
    width: usize,
    depth: png::BitDepth,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    samples: &[u8],
) -> Result<Vec<u8>> {
    let (Ok(h), Ok(w)) = (u32::try_from(height), u32::try_from(width)) else {
        return Err(Error::Validation(format!("{height}x{width} is too large for PNG")));
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w, h);
        encoder.set_color(color);
        encoder.set_depth(depth);
        if let Some(p) = palette {
            encoder.set_palette(p);
        }
        let png_err = |e: png::EncodingError| Error::Format(format!("PNG encoding failed: {e}"));
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(samples).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// Integer samples of a single-channel PNG.
pub(super) struct RawGray {
    pub height: usize,
    pub width: usize,
    pub bits: u8,
    pub samples: Vec<u16>,
}

/// Decodes an 8/16-bit grayscale PNG; with `allow_indexed`, 8-bit palette
/// images are accepted too and their raw indices returned.
pub(super) fn decode_png_gray(bytes: &[u8], allow_indexed: bool) -> Result<RawGray> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG header: {e}")))?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    checked_dims(height, width, "PNG")?;
    let (color, depth) = (info.color_type, info.bit_depth);
    let bits = match (color, depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 8,
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => 16,
        (png::ColorType::Indexed, png::BitDepth::Eight) if allow_indexed => 8,
        _ => {
            return Err(Error::Format(format!(
                "PNG is {color:?} at {depth:?} bits; expected 8- or 16-bit grayscale"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG frame size overflows".into()))?;
    // Deflate expands at most ~1032:1, so a larger frame cannot be backed
    // by this file; refuse before allocating for it.
    if size > bytes.len().saturating_mul(1100) {
        return Err(Error::Format(format!(
            "PNG declares a {width}x{height} frame that {} bytes cannot hold",
            bytes.len()
        )));
    }
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG data: {e}")))?;
    let stride = frame.line_size;
    let mut samples = Vec::with_capacity(width * height);
    for row in buf[..frame.buffer_size()].chunks_exact(stride).take(height) {
        if bits == 8 {
            samples.extend(row[..width].iter().map(|&b| b as u16));
        } else {
            samples.extend(row[..2 * width].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
        }
    }
    if samples.len() != width * height {
        return Err(Error::Format("PNG frame is smaller than its header".into()));
    }
    Ok(RawGray {
        height,
        width,
        bits,
        samples,
    })
}

pub(super) struct RawPgm {
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            if self.pos >= self.bytes.len() {
                return Err(Error::Truncated {
                    what: "PGM header",
                    needed: self.pos + 1,
                    available: self.bytes.len(),
                });
            }
            return Err(Error::Format(format!("PGM {what} is not a number")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ASCII digits")
            .parse()
            .map_err(|_| Error::Format(format!("PGM {what} is out of range")))
    }
}

pub(super) fn decode_pgm(bytes: &[u8]) -> Result<RawPgm> {
    let ascii = match bytes.get(..2) {
        Some(b"P5") => false,
        Some(b"P2") => true,
        _ => return Err(Error::Format("not a P2/P5 PGM".into())),
    };
    let mut header = Header { bytes, pos: 2 };
    let width = header.number("width")? as usize;
    let height = header.number("height")? as usize;
    let maxval = header.number("maxval")?;
    checked_dims(height, width, "PGM")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    let maxval = maxval as u16;
    let n = width * height;
    let samples = if ascii {
        // Every ASCII sample takes at least two bytes.
        let mut samples = Vec::with_capacity(n.min(bytes.len() / 2 + 1));
        for _ in 0..n {
            let v = header.number("sample")?;
            if v > maxval as u32 {
                return Err(Error::Format(format!("PGM sample {v} exceeds maxval {maxval}")));
            }
            samples.push(v as u16);
        }
        samples
    } else {
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(header.pos) {
            Some(b) if b.is_ascii_whitespace() => header.pos += 1,
            Some(_) => return Err(Error::Format("PGM header is not followed by whitespace".into())),
            None => {
                return Err(Error::Truncated {
                    what: "PGM header",
                    needed: header.pos + 1,
                    available: bytes.len(),
                })
            }
        }
        let width_bytes = if maxval < 256 { 1 } else { 2 };
        let needed = header.pos + n * width_bytes;
        if bytes.len() < needed {
            return Err(Error::Truncated {
                what: "PGM raster",
                needed,
                available: bytes.len(),
            });
        }
        let raster = &bytes[header.pos..needed];
        let samples: Vec<u16> = if width_bytes == 1 {
            raster.iter().map(|&b| b as u16).collect()
        } else {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        };
        if let Some(v) = samples.iter().find(|&&v| v > maxval) {
            return Err(Error::Format(format!("PGM sample {v} exceeds maxval {maxval}")));
        }
        samples
    };
    Ok(RawPgm {
        height,
        width,
        maxval,
        samples,
    })
}

/// Binary PGM with the given `maxval`; samples are `round(v·maxval)` after
/// clamping to `[0, 1]`.
pub fn encode_pgm(image: &ImageField, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::Validation("PGM maxval must be positive".into()));
    }
    let mut out = format!("P5\n{} {}\n{maxval}\n", image.width(), image.height()).into_bytes();
    for &v in image.data() {
        let code = (v.clamp(0.0, 1.0) * maxval as f64).round() as u16;
        if maxval < 256 {
            out.push(code as u8);
        } else {
            out.extend_from_slice(&code.to_be_bytes());
        }
    }
    Ok(out)
}
