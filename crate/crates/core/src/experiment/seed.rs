//! Hierarchical seed derivation.
//!
//! A derived seed is the first 8 bytes (little-endian) of
//! `SHA-256("ambc/seed/v1" || master_le || label_1 || ... || label_k)`,
//! where each label is tagged so that different label kinds never collide:
//!
//! * string: `0x01`, `u32` little-endian byte length, UTF-8 bytes
//! * integer: `0x02`, `u64` little-endian
//! * real: `0x03`, IEEE-754 `f64` little-endian

use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"ambc/seed/v1";

/// One component of a seed lineage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedLabel<'a> {
    Str(&'a str),
    Int(u64),
    Real(f64),
}

impl<'a> From<&'a str> for SeedLabel<'a> {
    fn from(s: &'a str) -> Self {
        SeedLabel::Str(s)
    }
}

impl From<u64> for SeedLabel<'_> {
    fn from(v: u64) -> Self {
        SeedLabel::Int(v)
    }
}

impl From<usize> for SeedLabel<'_> {
    fn from(v: usize) -> Self {
        SeedLabel::Int(v as u64)
    }
}

impl From<f64> for SeedLabel<'_> {
    fn from(v: f64) -> Self {
        SeedLabel::Real(v)
    }
}

pub fn derive_seed(master: u64, path: &[SeedLabel<'_>]) -> u64 {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master.to_le_bytes());
    for label in path {
        match *label {
            SeedLabel::Str(s) => {
                h.update([0x01]);
                h.update((s.len() as u32).to_le_bytes());
                h.update(s.as_bytes());
            }
            SeedLabel::Int(v) => {
                h.update([0x02]);
                h.update(v.to_le_bytes());
            }
            SeedLabel::Real(v) => {
                h.update([0x03]);
                h.update(v.to_le_bytes());
            }
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
