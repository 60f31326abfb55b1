//! File formats: PGM images, PNG export, kernel text files, PGM masks,
//! chain checkpoints and CSV tables.

mod checkpoint;
mod pgm;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use pgm::{read_pgm, write_pgm, GrayImage};

use crate::error::{Error, Result};
use crate::forward::FourierMask;
use crate::image::ImageField;

/// 8-bit greyscale PNG with `[lo, hi]` mapped onto `[0, 255]`.
pub fn encode_png(field: &ImageField, lo: f64, hi: f64) -> Result<Vec<u8>> {
    let g = GrayImage::from_field_scaled(field, lo, hi, 255)?;
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, g.width as u32, g.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Format(e.to_string()))?;
        let bytes: Vec<u8> = g.data.iter().map(|&v| v as u8).collect();
        w.write_image_data(&bytes)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(buf)
}

pub fn write_png(path: impl AsRef<Path>, field: &ImageField, lo: f64, hi: f64) -> Result<()> {
    fs::write(path, encode_png(field, lo, hi)?)?;
    Ok(())
}

/// Parses a kernel written as whitespace-separated rows; `#` starts a
/// comment. Returns the row-major values and the kernel width.
pub fn parse_kernel(text: &str) -> Result<(Vec<f64>, usize)> {
    let mut values = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::Format(format!("kernel line {}: bad number {t:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if row.is_empty() {
            continue;
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "kernel line {}: {} columns, expected {w}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
    }
    let width = width.ok_or_else(|| Error::Format("kernel file is empty".into()))?;
    Ok((values, width))
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<(Vec<f64>, usize)> {
    parse_kernel(&fs::read_to_string(path)?)
}

pub fn format_kernel(values: &[f64], width: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(width.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Mask stored as a PGM with 0 (unobserved) and 255 (observed).
pub fn mask_from_pgm(img: &GrayImage) -> Result<FourierMask> {
    let mask = img
        .data
        .iter()
        .map(|&v| match v {
            0 => Ok(false),
            v if v == img.maxval => Ok(true),
            v => Err(Error::Format(format!(
                "mask pixel {v} is neither 0 nor {}",
                img.maxval
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    FourierMask::new(mask, img.width, img.height)
}

pub fn mask_to_pgm(mask: &FourierMask) -> GrayImage {
    let (w, h) = mask.shape();
    let data = mask
        .as_slice()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    GrayImage {
        width: w,
        height: h,
        maxval: 255,
        data,
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<FourierMask> {
    mask_from_pgm(&read_pgm(path)?)
}

/// Writes a CSV table. Floats use the shortest representation that parses
/// back to the same value.
pub fn write_csv<W: Write>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Input(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows)?;
    Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
}

/// `iteration,u` table of a potential trace.
pub fn u_trace_csv(trace: &[f64]) -> Result<String> {
    csv_string(
        &["index", "u"],
        trace.iter().enumerate().map(|(i, &u)| vec![i as f64, u]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_text_round_trip() {
        let (k, w) = parse_kernel("# 2x3\n1 2 3\n\n4 5 6.5\n").unwrap();
        assert_eq!(w, 3);
        assert_eq!(k, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        assert_eq!(parse_kernel(&format_kernel(&k, w)).unwrap(), (k, w));
    }

    #[test]
    fn ragged_kernel_rejected() {
        let err = parse_kernel("1 2\n3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn mask_pgm_round_trip() {
        let m = FourierMask::radial(16, 16, 4).unwrap();
        let back = mask_from_pgm(&GrayImage::decode(&mask_to_pgm(&m).encode()).unwrap()).unwrap();
        assert_eq!(back.as_slice(), m.as_slice());
        let bad = GrayImage::new(2, 1, 255, vec![0, 7]).unwrap();
        assert!(mask_from_pgm(&bad).is_err());
    }

    #[test]
    fn csv_floats_round_trip() {
        let s = csv_string(
            &["a", "b"],
            vec![vec![0.1, 1e-300], vec![f64::INFINITY, -2.0]],
        )
        .unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "a,b");
        let v: Vec<f64> = lines[1].split(',').map(|t| t.parse().unwrap()).collect();
        assert_eq!(v, vec![0.1, 1e-300]);
        assert_eq!(lines[2], "inf,-2");
    }

    #[test]
    fn png_has_signature() {
        let f = ImageField::new(vec![0.0, 0.5, 1.0, 0.25], 2, 2).unwrap();
        let b = encode_png(&f, 0.0, 1.0).unwrap();
        assert_eq!(&b[..8], b"\x89PNG\r\n\x1a\n");
    }
}
