//! 8-bit PGM input (P2 and P5) and P5 output.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::noise::DEFAULT_FLOOR;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self) -> Option<u32> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }
}

/// Parse PGM bytes to intensities on the 0..255 scale, without flooring.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Image> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut cur = Cursor { data: bytes, pos: 0 };
    let binary = match cur.token() {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(malformed("expected magic P2 or P5")),
    };
    let width = cur.number().ok_or_else(|| malformed("bad width"))? as usize;
    let height = cur.number().ok_or_else(|| malformed("bad height"))? as usize;
    let maxval = cur.number().ok_or_else(|| malformed("bad maxval"))?;
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension"));
    }
    if maxval == 0 {
        return Err(malformed("maxval must be positive"));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedDepth {
            path: path.to_path_buf(),
            maxval,
        });
    }
    let expected = width * height;
    let scale = 255.0 / maxval as f64;
    let mut samples = Vec::with_capacity(expected);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = cur.pos + 1;
        let payload = bytes.get(start..).unwrap_or(&[]);
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                path: path.to_path_buf(),
                expected,
                got: payload.len(),
            });
        }
        samples.extend(payload[..expected].iter().map(|&b| b as u32));
    } else {
        while samples.len() < expected {
            match cur.token() {
                None => {
                    return Err(Error::TruncatedPayload {
                        path: path.to_path_buf(),
                        expected,
                        got: samples.len(),
                    })
                }
                Some(tok) => {
                    let v = std::str::from_utf8(tok)
                        .ok()
                        .and_then(|s| s.parse::<u32>().ok())
                        .ok_or_else(|| Error::InvalidSample {
                            path: path.to_path_buf(),
                            index: samples.len(),
                        })?;
                    samples.push(v);
                }
            }
        }
    }
    if let Some(index) = samples.iter().position(|&v| v > maxval) {
        return Err(Error::InvalidSample {
            path: path.to_path_buf(),
            index,
        });
    }
    let data = samples.into_iter().map(|v| v as f64 * scale).collect();
    Ok(Image::from_shape_vec((height, width), data).expect("sample count checked"))
}

/// Read a PGM file without altering any pixel.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Read a PGM file and raise zero pixels to [`DEFAULT_FLOOR`].
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut img = read_pgm(path)?;
    let floored = floor_zeros(&mut img, DEFAULT_FLOOR);
    if floored > 0 {
        log::info!("{}: raised {floored} zero pixels to {DEFAULT_FLOOR}", path.display());
    }
    Ok(img)
}

/// Replace exact zeros by `floor`; returns how many were replaced.
pub fn floor_zeros(img: &mut Image, floor: f64) -> usize {
    let mut count = 0;
    for x in img.iter_mut() {
        if *x == 0.0 {
            *x = floor;
            count += 1;
        }
    }
    count
}

/// Clamp to [0, 255] and round half away from zero.
pub fn to_bytes(u: &Image) -> Vec<u8> {
    u.iter().map(|&x| x.clamp(0.0, 255.0).round() as u8).collect()
}

pub fn encode_p5(u: &Image) -> Vec<u8> {
    let (m, n) = u.dim();
    let mut out = format!("P5\n{n} {m}\n255\n").into_bytes();
    out.extend(to_bytes(u));
    out
}

/// Write a binary PGM.
pub fn write_image(path: impl AsRef<Path>, u: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_p5(u)).map_err(|e| Error::io(path, e))
}
