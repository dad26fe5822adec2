//! Binary parameter checkpoints.
//!
//! Layout (little endian): magic `GMECKPT\0`, `u32` version, `u64` optimizer
//! step, `u32` parameter count, then per parameter: `u32` name length, name
//! bytes, `u32` rows, `u32` cols, `u8` init tag, `f64` init argument, and
//! `rows * cols` `f64` values.

use std::path::Path;

use super::{Init, ParamStore, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

const MAGIC: &[u8; 8] = b"GMECKPT\0";

fn init_tag(init: Init) -> (u8, f64) {
    match init {
        Init::Zeros => (0, 0.0),
        Init::Constant(v) => (1, v),
        Init::UniformFanIn => (2, 0.0),
        Init::LstmBias { hidden } => (3, hidden as f64),
    }
}

fn init_from_tag(tag: u8, arg: f64) -> Result<Init> {
    Ok(match tag {
        0 => Init::Zeros,
        1 => Init::Constant(arg),
        2 => Init::UniformFanIn,
        3 => Init::LstmBias {
            hidden: arg as usize,
        },
        other => return Err(Error::Checkpoint(format!("unknown init tag {other}"))),
    })
}

/// Serializes the values (not gradients) and step counter of `store`.
pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + store.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&store.step().to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
        let (tag, arg) = init_tag(p.init);
        out.push(tag);
        out.extend_from_slice(&arg.to_le_bytes());
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let step = r.u64()?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let tag = r.take(1)?[0];
        let init = init_from_tag(tag, r.f64()?)?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
        let data = r.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?,
        )?;
        let data = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        store
            .insert(&name, Tensor::from_vec(rows, cols, data)?, init)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    store.set_step(step);
    Ok(store)
}

pub fn write_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(store)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.add("a.w", 3, 4, Init::UniformFanIn, &mut rng).unwrap();
        s.add("a.b", 1, 8, Init::LstmBias { hidden: 2 }, &mut rng)
            .unwrap();
        s.insert(
            "c",
            Tensor::row(vec![f64::MIN_POSITIVE, -0.0, 1e300]),
            Init::Constant(0.5),
        )
        .unwrap();
        s.set_step(417);
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let bytes = encode_checkpoint(&s);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.step(), 417);
        for (a, b) in s.iter().zip(back.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.init, b.init);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::CheckpointVersion {
                found: 7,
                expected: 1
            })
        ));
    }

    #[test]
    fn truncation_and_garbage_are_rejected() {
        let bytes = encode_checkpoint(&sample());
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(matches!(
                decode_checkpoint(&bytes[..cut]),
                Err(Error::Checkpoint(_))
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
