use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Binary sampling pattern over the (uncentred) 2D frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMask {
    mask: Vec<bool>,
    width: usize,
    height: usize,
}

impl FourierMask {
    pub fn new(mask: Vec<bool>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || mask.len() != width * height {
            return Err(Error::Config(format!(
                "mask has {} entries, expected {width}x{height}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config("mask samples no frequencies".into()));
        }
        Ok(Self {
            mask,
            width,
            height,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            mask: vec![true; width * height],
            width,
            height,
        }
    }

    /// Radial lines through the origin at equally spaced angles in `[0, pi)`.
    /// The zero frequency is always sampled.
    pub fn radial(width: usize, height: usize, lines: usize) -> Result<Self> {
        if lines == 0 || width == 0 || height == 0 {
            return Err(Error::Config("radial mask needs at least one line".into()));
        }
        let mut mask = vec![false; width * height];
        let (cx, cy) = ((width / 2) as f64, (height / 2) as f64);
        let reach = (width.max(height) as f64) * std::f64::consts::SQRT_2;
        let steps = (4.0 * reach).ceil() as i64;
        for l in 0..lines {
            let angle = PI * l as f64 / lines as f64;
            let (dx, dy) = (angle.cos(), angle.sin());
            for s in -steps..=steps {
                let t = s as f64 * 0.25;
                let u = (cx + t * dx).round();
                let v = (cy + t * dy).round();
                if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
                    continue;
                }
                // Centred coordinates back to FFT ordering.
                let j = (u as usize + width - width / 2) % width;
                let i = (v as usize + height - height / 2) % height;
                mask[i * width + j] = true;
            }
        }
        mask[0] = true;
        Self::new(mask, width, height)
    }

    /// The sparsest radial mask whose sampling rate reaches `rate`.
    pub fn radial_with_rate(width: usize, height: usize, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::Config(format!(
                "sampling rate {rate} outside (0, 1]"
            )));
        }
        for lines in 1..=4 * width.max(height) {
            let m = Self::radial(width, height, lines)?;
            if m.sampling_rate() >= rate {
                return Ok(m);
            }
        }
        Ok(Self::full(width, height))
    }

    pub fn sampling_rate(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&k| self.mask[k]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_mask_properties() {
        let m = FourierMask::radial(64, 64, 10).unwrap();
        assert!(m.as_slice()[0]);
        let r = m.sampling_rate();
        assert!(r > 0.0 && r < 1.0);
        assert_eq!(r, m.count() as f64 / 4096.0);
        let m15 = FourierMask::radial_with_rate(64, 64, 0.15).unwrap();
        assert!(m15.sampling_rate() >= 0.15 && m15.sampling_rate() < 0.2);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(FourierMask::new(vec![false; 4], 2, 2).is_err());
        assert!(FourierMask::new(vec![true; 3], 2, 2).is_err());
    }
}
