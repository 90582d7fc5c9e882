//! Binary checkpoint container: a metadata string followed by named `f64`
//! tensors, all little-endian.
//!
//! ```text
//! magic "HEXCKPT\0" | version u32 | meta_len u32 | meta utf8 | count u32
//! per tensor: name_len u16 | name | ndim u8 | dims u64 * ndim | data f64 * prod(dims)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HEXCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params<P: ParamSet>(metadata: String, params: &P) -> Self {
        let tensors = params.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        Checkpoint { metadata, tensors }
    }

    /// Copy tensors into `params`; names, order and shapes must match exactly.
    pub fn load_into<P: ParamSet>(&self, params: &mut P) -> Result<()> {
        let mut dst = params.tensors_mut();
        if dst.len() != self.tensors.len() {
            return Err(Error::shape("checkpoint tensors", dst.len(), self.tensors.len()));
        }
        for ((name, d), (sname, s)) in dst.iter().zip(&self.tensors) {
            if name != sname || d.shape() != s.shape() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {sname} {:?} does not match {name} {:?}",
                    s.shape(),
                    d.shape()
                )));
            }
        }
        for ((_, d), (_, s)) in dst.iter_mut().zip(&self.tensors) {
            d.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let meta_len = u32::try_from(self.metadata.len()).map_err(|_| Error::invalid("metadata too long"))?;
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        let count = u32::try_from(self.tensors.len()).map_err(|_| Error::invalid("too many tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).map_err(|_| Error::invalid(format!("name too long: {name}")))?;
            if t.shape().len() > MAX_NDIM {
                return Err(Error::invalid(format!("{name} has too many dimensions")));
            }
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::format("not a checkpoint (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let metadata = std::str::from_utf8(r.take(meta_len, "metadata")?)
            .map_err(|_| Error::format("metadata is not UTF-8"))?
            .to_string();
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let len = r.u16("name length").map_err(|e| at(i, e))? as usize;
            let name = std::str::from_utf8(r.take(len, "name").map_err(|e| at(i, e))?)
                .map_err(|_| Error::record(i, "tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.take(1, "ndim").map_err(|e| at(i, e))?[0] as usize;
            if ndim > MAX_NDIM {
                return Err(Error::record(i, format!("{ndim} dimensions")));
            }
            let mut shape = Vec::with_capacity(ndim);
            let mut len: usize = 1;
            for _ in 0..ndim {
                let d = usize::try_from(r.u64("dim").map_err(|e| at(i, e))?)
                    .map_err(|_| Error::record(i, "dimension overflows"))?;
                len = len
                    .checked_mul(d)
                    .ok_or_else(|| Error::record(i, "tensor size overflows"))?;
                shape.push(d);
            }
            let nbytes = len
                .checked_mul(8)
                .ok_or_else(|| Error::record(i, "tensor size overflows"))?;
            let raw = r.take(nbytes, "tensor data").map_err(|e| at(i, e))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn at(i: usize, e: Error) -> Error {
    match e {
        Error::Format { reason, .. } => Error::record(i, reason),
        other => other,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("truncated {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadParams;

    #[test]
    fn round_trip_and_load() {
        let p = HeadParams::init(8, 4, 3, 11).unwrap();
        let ck = Checkpoint::from_params("{\"k\":3}".into(), &p);
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        let mut q = HeadParams::init(8, 4, 3, 12).unwrap();
        assert_ne!(p, q);
        back.load_into(&mut q).unwrap();
        assert_eq!(p, q);
        let mut wrong = HeadParams::init(8, 4, 2, 12).unwrap();
        assert!(back.load_into(&mut wrong).is_err());
    }

    #[test]
    fn rejects_corruption() {
        let p = HeadParams::init(2, 2, 2, 1).unwrap();
        let bytes = Checkpoint::from_params(String::new(), &p).encode().unwrap();
        for cut in [0, 7, 12, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err());
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
        let mut huge = bytes[..20].to_vec();
        huge[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(Checkpoint::decode(&huge).is_err());
    }
}
