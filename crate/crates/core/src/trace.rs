//! Compact binary trace of sampled paths.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 8    | magic `b"CWTRACE1"`       |
//! | 8      | 8    | `n` (u64)                 |
//! | 16     | 8    | `k` (u64)                 |
//! | 24     | 8    | `a` (f64)                 |
//! | 32     | 8    | `seed` (u64)              |
//! | 40     | 8    | path count (u64)          |
//! | 48     | ...  | per path: `k` values then `log_density`, each f64 |

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 8] = b"CWTRACE1";

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: u64,
    pub k: u64,
    pub a: f64,
    pub seed: u64,
    /// `(values, log_density)` per path.
    pub paths: Vec<(Vec<f64>, f64)>,
}

impl Trace {
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.n, self.k] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.a.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.paths.len() as u64).to_le_bytes())?;
        for (values, log_density) in &self.paths {
            if values.len() as u64 != self.k {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    "path length differs from k",
                ));
            }
            for v in values.iter().chain(std::iter::once(log_density)) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a path trace"));
        }
        let mut word = || -> io::Result<[u8; 8]> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(b)
        };
        let n = u64::from_le_bytes(word()?);
        let k = u64::from_le_bytes(word()?);
        let a = f64::from_le_bytes(word()?);
        let seed = u64::from_le_bytes(word()?);
        let count = u64::from_le_bytes(word()?);
        let mut paths = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let values = (0..k)
                .map(|_| word().map(f64::from_le_bytes))
                .collect::<io::Result<Vec<_>>>()?;
            let log_density = f64::from_le_bytes(word()?);
            paths.push((values, log_density));
        }
        Ok(Trace { n, k, a, seed, paths })
    }
}
