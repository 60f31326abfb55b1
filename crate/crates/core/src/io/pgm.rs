//! Netpbm greyscale images (P2 and P5), 8 and 16 bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageField;

/// Raw integer greyscale raster as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, data: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("image dimensions must be positive".into()));
        }
        if maxval == 0 {
            return Err(Error::Input("maxval must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "raster has {} samples, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > maxval) {
            return Err(Error::Input(format!("sample {v} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            data,
        })
    }

    /// Raw sample values as reals.
    pub fn to_field(&self) -> ImageField {
        ImageField {
            data: self.data.iter().map(|&v| v as f64).collect(),
            width: self.width,
            height: self.height,
        }
    }

    /// Rounds and clamps to `[0, maxval]`.
    pub fn from_field(field: &ImageField, maxval: u16) -> Result<Self> {
        let data = field
            .data
            .iter()
            .map(|&v| v.round().clamp(0.0, maxval as f64) as u16)
            .collect();
        Self::new(field.width, field.height, maxval, data)
    }

    /// Linear map of `[lo, hi]` onto `[0, maxval]`.
    pub fn from_field_scaled(field: &ImageField, lo: f64, hi: f64, maxval: u16) -> Result<Self> {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let m = maxval as f64;
        let data = field
            .data
            .iter()
            .map(|&v| ((v - lo) / span * m).round().clamp(0.0, m) as u16)
            .collect();
        Self::new(field.width, field.height, maxval, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.data.iter().map(|&v| v as u8));
        } else {
            for &v in &self.data {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.token()?;
        let binary = match magic.as_str() {
            "P5" => true,
            "P2" => false,
            m => return Err(Error::Format(format!("unsupported PGM magic {m:?}"))),
        };
        let width = cur.number()?;
        let height = cur.number()?;
        let maxval = cur.number()?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Format(format!("maxval {maxval} out of range")));
        }
        let n = width * height;
        let data = if binary {
            // exactly one whitespace byte separates the header from the raster
            cur.pos += 1;
            let width_bytes = if maxval < 256 { 1 } else { 2 };
            let raster = bytes
                .get(cur.pos..cur.pos + n * width_bytes)
                .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
            if width_bytes == 1 {
                raster.iter().map(|&b| b as u16).collect()
            } else {
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            }
        } else {
            (0..n)
                .map(|_| cur.number().map(|v| v as u16))
                .collect::<Result<Vec<_>>>()?
        };
        GrayImage::new(width, height, maxval as u16, data).map_err(|e| Error::Format(e.to_string()))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("unexpected end of PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("expected an integer in PGM, found {t:?}")))
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    GrayImage::decode(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&img.encode())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_8_and_16_bit() {
        for maxval in [255u16, 65535] {
            let data: Vec<u16> = (0..12).map(|i| (i * 5000) as u16 % maxval).collect();
            let img = GrayImage::new(4, 3, maxval, data).unwrap();
            assert_eq!(GrayImage::decode(&img.encode()).unwrap(), img);
        }
    }

    #[test]
    fn ascii_with_comments() {
        let src = b"P2\n# made by hand\n2 2\n255\n0 10\n200 255\n";
        let img = GrayImage::decode(src).unwrap();
        assert_eq!(img.data, vec![0, 10, 200, 255]);
    }

    #[test]
    fn truncated_raster_is_format_error() {
        let src = b"P5\n4 4\n255\n\x00\x01";
        assert!(matches!(GrayImage::decode(src), Err(Error::Format(_))));
    }

    #[test]
    fn scaled_conversion_covers_range() {
        let f = ImageField::new(vec![-1.0, 0.0, 1.0], 3, 1).unwrap();
        let g = GrayImage::from_field_scaled(&f, -1.0, 1.0, 255).unwrap();
        assert_eq!(g.data, vec![0, 128, 255]);
    }
}
