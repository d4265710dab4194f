//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes   "PASMCKPT"
//! version    u32       currently 1
//! n_sizes    u32       number of layer sizes
//! sizes      n_sizes x u64   network layer sizes, input first
//! n_tensors  u32
//! per tensor:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   len      u64, values (len x f64)
//! ```
//!
//! Floats are stored as their raw IEEE-754 bits, so a save/load round trip is
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ParamVector;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PASMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named tensors plus the network layout they belong to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub layout: Vec<usize>,
    pub tensors: Vec<(String, ParamVector)>,
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl Checkpoint {
    pub fn new(layout: &[usize]) -> Self {
        Checkpoint { layout: layout.to_vec(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, values: ParamVector) {
        self.tensors.push((name.into(), values));
    }

    pub fn get(&self, name: &str) -> Option<&ParamVector> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layout.len() as u32).to_le_bytes())?;
        for &s in &self.layout {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, values) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let n_sizes = read_u32(r)? as usize;
        let layout = (0..n_sizes).map(|_| read_u64(r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        let n_tensors = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let len = read_u64(r)? as usize;
            let mut values = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                values.push(f64::from_le_bytes(b));
            }
            tensors.push((name, ParamVector::from(values)));
        }
        Ok(Checkpoint { layout, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_round_trip() {
        let mut c = Checkpoint::new(&[23, 500, 250, 120, 16]);
        c.push("theta_c", ParamVector::from(vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -3.25]));
        c.push("lambda_0", ParamVector::zeros(2));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"PASMCKPT");
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.layout, c.layout);
        for ((na, a), (nb, b)) in back.tensors.iter().zip(&c.tensors) {
            assert_eq!(na, nb);
            let bits_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(back.get("lambda_0").unwrap().len(), 2);
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        assert!(Checkpoint::read_from(&mut &b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        Checkpoint::new(&[1, 1]).write_to(&mut buf).unwrap();
        buf[8] = 9;
        assert!(matches!(Checkpoint::read_from(&mut buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
