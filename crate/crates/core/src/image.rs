use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued image stored row-major. This is the sampler state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageField {
    pub data: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl ImageField {
    pub fn new(data: Vec<f64>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("image dimensions must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "image data has {} entries, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("image contains non-finite entries".into()));
        }
        Ok(Self {
            data,
            width,
            height,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            data: vec![value; width * height],
            width,
            height,
        }
    }

    /// A 1D vector viewed as a `len x 1` image.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let width = data.len();
        Self {
            data,
            width,
            height: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &ImageField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
