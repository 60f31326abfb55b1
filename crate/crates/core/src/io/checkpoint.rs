//! Binary chain checkpoints.
//!
//! Layout, little endian: 8-byte magic, u32 version, u32 length + JSON echo of
//! the sampler configuration, u64 seed, u64 iteration, u64 kept count,
//! u64 width, u64 height, then mean, variance and state as `f64` arrays of
//! `width * height` entries, then a flag byte and an optional sample block
//! (u64 dim, u64 stride, u64 len, `len` f64).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageField;
use crate::samplers::{ChainOutput, SampleBlock, SamplerConfig};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"MYULACKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: SamplerConfig,
    pub seed: u64,
    pub iteration: u64,
    pub kept_count: u64,
    pub mean: ImageField,
    pub variance: ImageField,
    pub state: Vec<f64>,
    pub samples: Option<SampleBlock>,
}

impl Checkpoint {
    pub fn from_chain(config: &SamplerConfig, out: &ChainOutput) -> Self {
        Self {
            config: config.clone(),
            seed: out.seed_used,
            iteration: config.n_iter as u64,
            kept_count: out.kept_count as u64,
            mean: out.running_mean.clone(),
            variance: out.running_second_moment.clone(),
            state: out.final_state.clone(),
            samples: out.samples.clone(),
        }
    }

    /// Checkpoint of a chain that stopped early, holding only its last state.
    pub fn from_state(
        config: &SamplerConfig,
        iteration: usize,
        state: Vec<f64>,
        width: usize,
        height: usize,
    ) -> Self {
        Self {
            config: config.clone(),
            seed: config.seed,
            iteration: iteration as u64,
            kept_count: 0,
            mean: ImageField::zeros(width, height),
            variance: ImageField::zeros(width, height),
            state,
            samples: None,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let n = self.mean.len();
        if self.variance.len() != n || self.state.len() != n {
            return Err(Error::Input("checkpoint arrays disagree in length".into()));
        }
        let echo = serde_json::to_vec(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        let mut b = Vec::with_capacity(64 + echo.len() + 24 * n);
        b.extend_from_slice(&CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        b.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        b.extend_from_slice(&echo);
        for v in [
            self.seed,
            self.iteration,
            self.kept_count,
            self.mean.width as u64,
            self.mean.height as u64,
        ] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for arr in [&self.mean.data, &self.variance.data, &self.state] {
            put_f64s(&mut b, arr);
        }
        match &self.samples {
            None => b.push(0),
            Some(s) => {
                b.push(1);
                for v in [s.dim as u64, s.stride as u64, s.data.len() as u64] {
                    b.extend_from_slice(&v.to_le_bytes());
                }
                put_f64s(&mut b, &s.data);
            }
        }
        Ok(b)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a chain checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let len = r.u32()? as usize;
        let config: SamplerConfig =
            serde_json::from_slice(r.take(len)?).map_err(|e| Error::Format(e.to_string()))?;
        let seed = r.u64()?;
        let iteration = r.u64()?;
        let kept_count = r.u64()?;
        let width = r.u64()? as usize;
        let height = r.u64()? as usize;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Format("checkpoint shape overflows".into()))?;
        let field = |data| ImageField {
            data,
            width,
            height,
        };
        let mean = field(r.f64s(n)?);
        let variance = field(r.f64s(n)?);
        let state = r.f64s(n)?;
        let samples = match r.take(1)?[0] {
            0 => None,
            1 => {
                let dim = r.u64()? as usize;
                let stride = r.u64()? as usize;
                let len = r.u64()? as usize;
                Some(SampleBlock {
                    dim,
                    stride,
                    data: r.f64s(len)?,
                })
            }
            f => return Err(Error::Format(format!("bad sample flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            config,
            seed,
            iteration,
            kept_count,
            mean,
            variance,
            state,
            samples,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn put_f64s(b: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut cfg = SamplerConfig::new(0.5, 0.1, 100, 9);
        cfg.sample_stride = Some(1);
        Checkpoint {
            config: cfg,
            seed: 9,
            iteration: 100,
            kept_count: 95,
            mean: ImageField::new(vec![1.0, -2.5], 2, 1).unwrap(),
            variance: ImageField::new(vec![0.25, 3.0], 2, 1).unwrap(),
            state: vec![f64::MIN_POSITIVE, 1e300],
            samples: Some(SampleBlock {
                dim: 2,
                stride: 1,
                data: vec![0.1, 0.2, 0.3, 0.4],
            }),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.encode().unwrap();
        assert_eq!(&bytes[..8], b"MYULACKP");
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), c);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format(_))));
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
    }
}
