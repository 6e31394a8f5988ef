//! Binary PPM (`P6`, maxval 255) codec. PNG is available behind the `png`
//! feature; the format is picked from the file extension.

use std::path::Path;

use crate::dataio::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::image::RgbImage;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        kind: "PPM",
        offset,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| format_err(start, format!("{what} out of range")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(format_err(0, "missing P6 magic"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(format_err(
            h.pos,
            format!("maxval {maxval} unsupported, need 255"),
        ));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(format_err(h.pos, "expected single whitespace after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| format_err(h.pos, "image dimensions overflow"))?;
    let payload = &bytes[h.pos..];
    if payload.len() < need {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    RgbImage::from_raw(width, height, payload[..need].to_vec())
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.as_raw());
    out
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    let bytes = read_bytes(path)?;
    if is_png(path) {
        return decode_png(&bytes);
    }
    decode_ppm(&bytes).map_err(|e| match e {
        Error::Format {
            offset, message, ..
        } => Error::invalid(format!(
            "{}: malformed PPM at byte {offset}: {message}",
            path.display()
        )),
        other => other,
    })
}

pub fn write_image(path: &Path, image: &RgbImage) -> Result<()> {
    let bytes = if is_png(path) {
        encode_png(image)?
    } else {
        encode_ppm(image)
    };
    write_atomic(path, &bytes)
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let png_err = |e: png::DecodingError| Error::Format {
        kind: "PNG",
        offset: 0,
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::Format {
                kind: "PNG",
                offset: 0,
                message: "indexed color was not expanded".into(),
            })
        }
    };
    RgbImage::from_raw(w, h, rgb)
}

#[cfg(feature = "png")]
fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let enc_err = |e: png::EncodingError| Error::invalid(format!("PNG encode: {e}"));
        let mut writer = enc.write_header().map_err(enc_err)?;
        writer.write_image_data(image.as_raw()).map_err(enc_err)?;
    }
    Ok(out)
}

#[cfg(not(feature = "png"))]
fn decode_png(_: &[u8]) -> Result<RgbImage> {
    Err(Error::invalid("PNG support requires the `png` feature"))
}

#[cfg(not(feature = "png"))]
fn encode_png(_: &RgbImage) -> Result<Vec<u8>> {
    Err(Error::invalid("PNG support requires the `png` feature"))
}
