//! Binary checkpoint format for [`ParamSet`]s.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"FSCK"
//! version  u32 (= 1)
//! count    u32
//! count × { name_len u32, name utf-8, ndim u32, dims u64 × ndim, values f64 × numel }
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FSCK";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_inner(bytes: &[u8]) -> std::result::Result<ParamSet, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {}", version));
    }
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| format!("parameter name: {}", e))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        params.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(params)
}

pub fn decode(bytes: &[u8]) -> Result<ParamSet> {
    decode_inner(bytes).map_err(|msg| Error::Checkpoint {
        path: "<memory>".into(),
        msg,
    })
}

pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_inner(&bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

/// SHA-256 of the encoded checkpoint, hex encoded.
pub fn fingerprint(params: &ParamSet) -> String {
    hex::encode(Sha256::digest(encode(params)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 1..40), rows in 1usize..4) {
            let cols = values.len();
            let mut p = ParamSet::new();
            p.insert("a.w", Tensor::new(vec![1, cols], values.clone()).unwrap());
            p.insert("a.b", Tensor::vector(vec![f64::MIN_POSITIVE; rows]));
            let back = decode(&encode(&p)).unwrap();
            let bits = |ps: &ParamSet| ps.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&p), bits(&back));
            prop_assert!(p.same_structure(&back));
        }
    }

    #[test]
    fn rejects_corruption() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let bytes = encode(&p);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
