use std::path::Path;

use super::{AdamW, AdamWConfig, Matrix, ParamStore};
use crate::error::Result;
use crate::io::{read_file, BinReader, BinWriter};

/// Parameters, optional optimizer state and a JSON provenance blob, stored as
/// an "OCKP" file with 32-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore<f32>,
    pub optimizer: Option<AdamW<f32>>,
    /// Free-form JSON (resolved configuration, normalization statistics, ...).
    pub metadata: String,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = BinWriter::new(b"OCKP", 1);
        w.u64(self.params.seed());
        w.u32(self.params.len() as u32);
        for (name, m) in self.params.iter() {
            w.str(name);
            w.u32(m.rows() as u32);
            w.u32(m.cols() as u32);
            w.f32s(m.as_slice());
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(opt) => {
                w.u8(1);
                w.u64(opt.step);
                let c = &opt.config;
                for v in [c.learning_rate, c.beta1, c.beta2, c.eps, c.weight_decay] {
                    w.f64(v);
                }
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    w.f32s(m.as_slice());
                    w.f32s(v.as_slice());
                }
            }
        }
        w.long_str(&self.metadata);
        w.into_bytes()
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let (mut r, version) = BinReader::open(data, b"OCKP", "OCKP")?;
        if version != 1 {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let seed = r.u64()?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new(seed);
        let mut shapes = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = r.str()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let values = r.f32s(rows * cols)?;
            params
                .add(name, Matrix::from_vec(rows, cols, values)?)
                .map_err(|e| r.err(e.to_string()))?;
            shapes.push((rows, cols));
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let config = AdamWConfig {
                    learning_rate: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                    weight_decay: r.f64()?,
                };
                let mut m = Vec::with_capacity(n);
                let mut v = Vec::with_capacity(n);
                for &(rows, cols) in &shapes {
                    m.push(Matrix::from_vec(rows, cols, r.f32s(rows * cols)?)?);
                    v.push(Matrix::from_vec(rows, cols, r.f32s(rows * cols)?)?);
                }
                Some(AdamW { config, step, m, v })
            }
            other => return Err(r.err(format!("bad optimizer flag {other}"))),
        };
        let metadata = r.long_str()?;
        r.finish()?;
        Ok(Self {
            params,
            optimizer,
            metadata,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode();
        std::fs::write(path, bytes).map_err(|e| crate::Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_identical() {
        let mut p = ParamStore::<f32>::new(11);
        p.add("a.w", Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f32 * 0.1 - 0.3))
            .unwrap();
        p.add("a.b", Matrix::from_vec(1, 1, vec![f32::MIN_POSITIVE]).unwrap())
            .unwrap();
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        opt.step = 7;
        opt.m[0].set(1, 2, 0.25);
        let ck = Checkpoint {
            params: p,
            optimizer: Some(opt),
            metadata: r#"{"phase":"one_step"}"#.into(),
        };
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    }
}
