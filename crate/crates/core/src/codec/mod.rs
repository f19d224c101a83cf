//! FEC Schemes: interleaved XOR, Reed-Solomon block code and the
//! convolutional random linear code (RLC), behind one encoder/decoder
//! contract.
//!
//! Symbols are plain byte vectors of a fixed size E. Callers pad shorter
//! packets with zeros before handing them to an encoder.

mod prng;
mod rlc;
mod rs;
mod xor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prng::{ParkMiller, MODULUS as PRNG_MODULUS, MULTIPLIER as PRNG_MULTIPLIER};
pub use rlc::{
    rlc_coefficients, rlc_encode, rlc_encode_with_coefficients, RlcDecoder, RlcEncoder,
    RLC_HORIZON_FACTOR,
};
pub use rs::{rs_generator_matrix, ReedSolomon, RsDecoder, RsEncoder, MAX_RS_SYMBOLS};
pub use xor::{interleave_block_index, xor_encode, xor_recover, XorDecoder, XorEncoder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("empty block")]
    EmptyBlock,
    #[error("symbol length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("expected {expected} source symbols, got {found}")]
    WrongSymbolCount { expected: usize, found: usize },
    /// Positions (within the block) that cannot be rebuilt.
    #[error("unrecoverable: missing {missing:?}")]
    Unrecoverable { missing: Vec<usize> },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Scheme identifiers used during transport-parameter negotiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SchemeId {
    XorInterleaved = 0x01,
    ReedSolomon = 0x02,
    Rlc = 0x03,
}

impl SchemeId {
    pub fn from_u8(v: u8) -> Option<SchemeId> {
        match v {
            0x01 => Some(SchemeId::XorInterleaved),
            0x02 => Some(SchemeId::ReedSolomon),
            0x03 => Some(SchemeId::Rlc),
            _ => None,
        }
    }
}

/// (n, k) systematic block code: k source symbols, n - k repair symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockCodeParams {
    pub n: u16,
    pub k: u16,
}

impl BlockCodeParams {
    pub fn new(n: u16, k: u16) -> Result<Self, CodecError> {
        let p = BlockCodeParams { n, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.k == 0 || self.k >= self.n {
            return Err(CodecError::InvalidParams(format!(
                "need 0 < k < n, got ({}, {})",
                self.n, self.k
            )));
        }
        if self.k > 256 || self.n - self.k > 256 {
            return Err(CodecError::Capacity(format!(
                "at most 256 source and 256 repair symbols, got ({}, {})",
                self.n, self.k
            )));
        }
        Ok(())
    }

    pub fn repair_count(&self) -> usize {
        (self.n - self.k) as usize
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// (n, k, L) convolutional code: every k source symbols, n - k repairs over
/// the last L symbols. `density` is the expected share of nonzero
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvCodeParams {
    pub n: u16,
    pub k: u16,
    pub window: u16,
    #[serde(default = "default_density")]
    pub density: f64,
}

fn default_density() -> f64 {
    1.0
}

impl ConvCodeParams {
    pub fn new(n: u16, k: u16, window: u16, density: f64) -> Result<Self, CodecError> {
        let p = ConvCodeParams {
            n,
            k,
            window,
            density,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.k == 0 || self.k >= self.n || self.k > self.window {
            return Err(CodecError::InvalidParams(format!(
                "need 0 < k < n and k <= L, got ({}, {}, {})",
                self.n, self.k, self.window
            )));
        }
        if self.window > 255 {
            return Err(CodecError::Capacity(format!(
                "window of {} exceeds 255 symbols",
                self.window
            )));
        }
        if self.n - self.k > 255 {
            return Err(CodecError::Capacity(
                "more than 255 repairs per step".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(CodecError::InvalidParams(format!(
                "density {} outside (0, 1]",
                self.density
            )));
        }
        Ok(())
    }

    /// Density scaled to a byte `t`; a slot is nonzero when its draw
    /// `d mod 256 <= t`, so `t = 255` means every slot is nonzero.
    pub fn density_threshold_byte(&self) -> u8 {
        ((self.density * 256.0).ceil() as i64 - 1).clamp(0, 255) as u8
    }
}

/// Values an RLC repair carries so the receiver can rebuild its equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeSpecificValue {
    pub seed: u16,
    pub density_threshold_byte: u8,
    pub window_first_id: u32,
    pub window_size: u8,
}

/// What the framework needs to know about a repair symbol to build its
/// Repair FEC Payload ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepairMeta {
    /// Reed-Solomon block, or one lane of an interleaved XOR group
    /// (`depth > 1`, `index` = lane).
    Block {
        block_id: u32,
        index: u8,
        k: u16,
        n_minus_k: u16,
        depth: u8,
    },
    Window {
        ssv: SchemeSpecificValue,
        index: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairSymbol {
    pub meta: RepairMeta,
    pub payload: Vec<u8>,
}

/// A source symbol rebuilt by a decoder, keyed by its raw Source FEC
/// Payload ID.
pub type Recovered = (u32, Vec<u8>);

/// Sender side of a scheme. Source ids are assigned in emission order.
pub trait SchemeEncoder: Send {
    fn scheme(&self) -> SchemeId;

    /// Raw Source FEC Payload ID the next pushed symbol will get.
    fn next_source_id(&self) -> u32;

    /// Consume one source symbol; returns the repairs it completes.
    fn push_source(&mut self, payload: &[u8]) -> Vec<RepairSymbol>;
}

/// Receiver side of a scheme.
pub trait SchemeDecoder: Send {
    fn scheme(&self) -> SchemeId;

    fn on_source(&mut self, id: u32, payload: &[u8]) -> Vec<Recovered>;

    fn on_repair(&mut self, meta: &RepairMeta, payload: &[u8]) -> Vec<Recovered>;
}

/// Scheme plus code parameters, as configured for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeConfig {
    /// (k+1, k) XOR blocks spread over `depth` interleaved lanes.
    Xor {
        k: u16,
        depth: u16,
    },
    ReedSolomon {
        n: u16,
        k: u16,
    },
    Rlc {
        n: u16,
        k: u16,
        window: u16,
        #[serde(default = "default_density")]
        density: f64,
    },
}

impl SchemeConfig {
    pub fn id(&self) -> SchemeId {
        match self {
            SchemeConfig::Xor { .. } => SchemeId::XorInterleaved,
            SchemeConfig::ReedSolomon { .. } => SchemeId::ReedSolomon,
            SchemeConfig::Rlc { .. } => SchemeId::Rlc,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        match *self {
            SchemeConfig::Xor { k, depth } => {
                if k == 0 || depth == 0 {
                    return Err(CodecError::InvalidParams("XOR needs k, depth >= 1".into()));
                }
                if k as u32 * depth as u32 > 256 || depth > 255 {
                    return Err(CodecError::Capacity(
                        "XOR group of depth * k symbols must fit 256 offsets".into(),
                    ));
                }
                Ok(())
            }
            SchemeConfig::ReedSolomon { n, k } => BlockCodeParams { n, k }.validate(),
            SchemeConfig::Rlc {
                n,
                k,
                window,
                density,
            } => ConvCodeParams {
                n,
                k,
                window,
                density,
            }
            .validate(),
        }
    }

    pub fn encoder(&self, symbol_size: usize) -> Result<Box<dyn SchemeEncoder>, CodecError> {
        self.validate()?;
        Ok(match *self {
            SchemeConfig::Xor { k, depth } => Box::new(XorEncoder::new(k, depth, symbol_size)),
            SchemeConfig::ReedSolomon { n, k } => {
                Box::new(RsEncoder::new(BlockCodeParams { n, k }, symbol_size)?)
            }
            SchemeConfig::Rlc {
                n,
                k,
                window,
                density,
            } => Box::new(RlcEncoder::new(
                ConvCodeParams {
                    n,
                    k,
                    window,
                    density,
                },
                symbol_size,
            )),
        })
    }

    pub fn decoder(&self) -> Box<dyn SchemeDecoder> {
        match self {
            SchemeConfig::Xor { .. } => Box::new(XorDecoder::new()),
            SchemeConfig::ReedSolomon { .. } => Box::new(RsDecoder::new()),
            SchemeConfig::Rlc { .. } => Box::new(RlcDecoder::new()),
        }
    }

    /// Code rate k/n.
    pub fn rate(&self) -> f64 {
        match *self {
            SchemeConfig::Xor { k, .. } => k as f64 / (k + 1) as f64,
            SchemeConfig::ReedSolomon { n, k } | SchemeConfig::Rlc { n, k, .. } => {
                k as f64 / n as f64
            }
        }
    }
}

pub(crate) fn check_lengths(symbols: &[&[u8]]) -> Result<usize, CodecError> {
    let first = symbols.first().ok_or(CodecError::EmptyBlock)?;
    let len = first.len();
    for s in symbols {
        if s.len() != len {
            return Err(CodecError::LengthMismatch {
                expected: len,
                found: s.len(),
            });
        }
    }
    Ok(len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_params_bounds() {
        assert!(BlockCodeParams::new(30, 20).is_ok());
        assert!(BlockCodeParams::new(20, 20).is_err());
        assert!(BlockCodeParams::new(5, 0).is_err());
        assert!(matches!(
            BlockCodeParams::new(300, 20),
            Err(CodecError::Capacity(_))
        ));
        assert!((BlockCodeParams::new(30, 20).unwrap().rate() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn density_bytes() {
        let full = ConvCodeParams::new(3, 2, 20, 1.0).unwrap();
        assert_eq!(full.density_threshold_byte(), 255);
        let half = ConvCodeParams::new(3, 2, 20, 0.5).unwrap();
        assert_eq!(half.density_threshold_byte(), 127);
        assert!(ConvCodeParams::new(3, 2, 20, 0.0).is_err());
        assert!(ConvCodeParams::new(3, 2, 1, 1.0).is_err());
    }

    #[test]
    fn scheme_ids_roundtrip() {
        for id in [
            SchemeId::XorInterleaved,
            SchemeId::ReedSolomon,
            SchemeId::Rlc,
        ] {
            assert_eq!(SchemeId::from_u8(id as u8), Some(id));
        }
        assert_eq!(SchemeId::from_u8(0x07), None);
    }

    #[test]
    fn scheme_config_parses_from_toml() {
        let c: SchemeConfig =
            toml::from_str("scheme = \"rlc\"\nn = 3\nk = 2\nwindow = 20\n").unwrap();
        assert_eq!(
            c,
            SchemeConfig::Rlc {
                n: 3,
                k: 2,
                window: 20,
                density: 1.0
            }
        );
    }
}
