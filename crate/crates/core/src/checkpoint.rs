//! The `UAGC` checkpoint format.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "UAGC"            4 bytes magic
//! version           u32 (= 1)
//! role              u8   0 generator, 1 discriminator, 2 pair (generator first)
//! per network:      layer count u32, then per layer in-dim u32, out-dim u32, activation u8
//! seed              u64
//! iteration         u64
//! optimizer flag    u8   0 absent, 1 present
//! per network:      every layer weight (row-major, layer order), then every bias, f64
//! if optimizer, per network:
//!                   step u64, lr f64, beta1 f64, beta2 f64, eps f64,
//!                   first moments then second moments, same order as the parameters
//! crc32             u32  IEEE CRC-32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::{Activation, AdamConfig, AdamState, Layer, Network, ParamTensor, Shape};
use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"UAGC";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Generator,
    Discriminator,
    Pair,
}

impl Role {
    fn code(self) -> u8 {
        match self {
            Role::Generator => 0,
            Role::Discriminator => 1,
            Role::Pair => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Role::Generator,
            1 => Role::Discriminator,
            2 => Role::Pair,
            _ => return None,
        })
    }

    fn net_count(self) -> usize {
        if self == Role::Pair {
            2
        } else {
            1
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub role: Role,
    /// `[generator, discriminator]` for a pair, a single network otherwise.
    pub nets: Vec<Network>,
    /// One state per network when present.
    pub optim: Option<Vec<AdamState>>,
    pub seed: u64,
    pub iteration: u64,
}

impl Checkpoint {
    pub fn new(
        role: Role,
        nets: Vec<Network>,
        optim: Option<Vec<AdamState>>,
        seed: u64,
        iteration: u64,
    ) -> Result<Self> {
        if nets.len() != role.net_count() {
            return Err(Error::config(format!("{role:?} checkpoint needs {} networks", role.net_count())));
        }
        if let Some(states) = &optim {
            let ok = states.len() == nets.len()
                && states.iter().zip(&nets).all(|(s, n)| {
                    s.lens() == n.params().map(ParamTensor::len).collect::<Vec<_>>()
                });
            if !ok {
                return Err(Error::config("optimizer state does not match the networks"));
            }
        }
        Ok(Self { role, nets, optim, seed, iteration })
    }

    pub fn generator(&self) -> Result<&Network> {
        match self.role {
            Role::Generator | Role::Pair => Ok(&self.nets[0]),
            Role::Discriminator => Err(Error::usage("checkpoint holds no generator")),
        }
    }

    pub fn discriminator(&self) -> Result<&Network> {
        match self.role {
            Role::Discriminator => Ok(&self.nets[0]),
            Role::Pair => Ok(&self.nets[1]),
            Role::Generator => Err(Error::usage("checkpoint holds no discriminator")),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.role.code());
        for net in &self.nets {
            out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
            for l in net.layers() {
                out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
                out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
                out.push(l.activation.code());
            }
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.push(u8::from(self.optim.is_some()));
        for net in &self.nets {
            for p in net.params() {
                put_reals(&mut out, p.values());
            }
        }
        if let Some(states) = &self.optim {
            for st in states {
                out.extend_from_slice(&st.t.to_le_bytes());
                let AdamConfig { lr, beta1, beta2, eps } = st.config;
                put_reals(&mut out, &[lr, beta1, beta2, eps]);
                for m in &st.m {
                    put_reals(&mut out, m);
                }
                for v in &st.v {
                    put_reals(&mut out, v);
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("took four bytes");
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic).into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::VersionMismatch { found: version, expected: VERSION }.into());
        }
        let role_code = r.u8()?;
        let role = Role::from_code(role_code)
            .ok_or_else(|| FormatError::Invalid(format!("role tag {role_code}")))?;
        let mut archs = Vec::new();
        for _ in 0..role.net_count() {
            let n = r.u32()? as usize;
            let mut layers = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let inp = r.u32()? as usize;
                let out = r.u32()? as usize;
                let code = r.u8()?;
                let act = Activation::from_code(code)
                    .ok_or_else(|| FormatError::Invalid(format!("activation code {code}")))?;
                layers.push((inp, out, act));
            }
            archs.push(layers);
        }
        let seed = r.u64()?;
        let iteration = r.u64()?;
        let has_optim = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(FormatError::Invalid(format!("optimizer flag {other}")).into()),
        };
        let mut nets = Vec::new();
        for arch in &archs {
            let mut weights = Vec::new();
            for (k, &(inp, out, _)) in arch.iter().enumerate() {
                let vals = r.reals(checked_len(inp, out)?)?;
                weights.push(ParamTensor::from_values(format!("l{k}.weight"), Shape::Matrix(out, inp), vals)?);
            }
            let mut layers = Vec::new();
            for (k, (w, &(_, out, act))) in weights.into_iter().zip(arch).enumerate() {
                let b = ParamTensor::from_values(format!("l{k}.bias"), Shape::Vector(out), r.reals(out)?)?;
                layers.push(Layer { weight: w, bias: b, activation: act });
            }
            let net = Network::new(layers).map_err(|e| FormatError::Invalid(format!("architecture: {e}")))?;
            nets.push(net);
        }
        let optim = if has_optim {
            let mut states = Vec::new();
            for net in &nets {
                let t = r.u64()?;
                let h = r.reals(4)?;
                let lens: Vec<usize> = net.params().map(ParamTensor::len).collect();
                let mut st = AdamState::new(
                    AdamConfig { lr: h[0], beta1: h[1], beta2: h[2], eps: h[3] },
                    &lens,
                );
                st.t = t;
                for (m, &n) in st.m.iter_mut().zip(&lens) {
                    *m = r.reals(n)?;
                }
                for (v, &n) in st.v.iter_mut().zip(&lens) {
                    *v = r.reals(n)?;
                }
                states.push(st);
            }
            Some(states)
        } else {
            None
        };
        let body_end = r.pos;
        let stored = r.u32()?;
        if r.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - r.pos).into());
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed }.into());
        }
        Ok(Self { role, nets, optim, seed, iteration })
    }

    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn checked_len(a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b)
        .filter(|&n| n <= (1 << 28))
        .ok_or_else(|| FormatError::Invalid(format!("layer {a}x{b} is implausibly large")).into())
}

fn put_reals(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let avail = self.bytes.len() - self.pos;
        if n > avail {
            return Err(FormatError::Truncated { offset: self.pos, needed: n - avail });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or(FormatError::Truncated { offset: self.pos, needed: usize::MAX })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// SHA-256 of a single network serialized as a standalone checkpoint. Used
/// to prove a discriminator was not touched.
pub fn network_hash(net: &Network, role: Role) -> String {
    let ckpt = Checkpoint { role, nets: vec![net.clone()], optim: None, seed: 0, iteration: 0 };
    ckpt.sha256_hex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::NetSpec;

    fn sample_pair() -> Checkpoint {
        let g = Network::init_seeded(
            &NetSpec::uniform(vec![4, 6, 2], Activation::LeakyRelu, Activation::Linear).unwrap(),
            1,
        )
        .unwrap();
        let d = Network::init_seeded(
            &NetSpec::uniform(vec![2, 5, 1], Activation::LeakyRelu, Activation::Sigmoid).unwrap(),
            2,
        )
        .unwrap();
        let mut sg = AdamState::for_network(&g, AdamConfig::default());
        sg.t = 7;
        sg.m[0][3] = 0.25;
        let sd = AdamState::for_network(&d, AdamConfig::with_lr(1e-3));
        Checkpoint::new(Role::Pair, vec![g, d], Some(vec![sg, sd]), 99, 1234).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample_pair();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample_pair().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            Checkpoint::from_bytes(&bytes).unwrap_err(),
            Error::Format(FormatError::BadMagic(m)) if &m == b"XXXX"
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample_pair().to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes).unwrap_err(),
            Error::Format(FormatError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = sample_pair().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes).unwrap_err(),
            Error::Format(FormatError::Checksum { .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = sample_pair().to_bytes();
        let cut = &bytes[..bytes.len() - 20];
        assert!(matches!(
            Checkpoint::from_bytes(cut).unwrap_err(),
            Error::Format(FormatError::Truncated { .. })
        ));
    }

    #[test]
    fn role_accessors() {
        let ck = sample_pair();
        assert_eq!(ck.generator().unwrap().out_dim(), 2);
        assert_eq!(ck.discriminator().unwrap().in_dim(), 2);
        let only_g = Checkpoint::new(Role::Generator, vec![ck.nets[0].clone()], None, 0, 0).unwrap();
        assert!(only_g.discriminator().is_err());
        assert!(Checkpoint::new(Role::Pair, vec![ck.nets[0].clone()], None, 0, 0).is_err());
    }
}
