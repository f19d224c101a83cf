//! FEC Framework: sits between the transport and a scheme.
//!
//! Sending: a plain packet becomes a Source Symbol (its image, zero padded
//! to E) and goes out with the F flag and a Source FEC Payload ID. Repairs
//! produced by the scheme are cut into FEC frames.
//!
//! Receiving: originals are handed to the scheme decoder, FEC frames are
//! reassembled into repairs, and recovered symbols come back as packet
//! images with their trailing zeros (which parse as PADDING).

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::codec::{
    CodecError, RepairMeta, RepairSymbol, SchemeConfig, SchemeDecoder, SchemeEncoder, SchemeId,
    SchemeSpecificValue,
};
use crate::transport::wire::{PublicHeader, Reader, WireError, FLAG_FEC};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FecFrameError {
    #[error("packet of {len} bytes exceeds symbol size {max}")]
    Oversize { len: usize, max: usize },
    #[error("repair symbols are never empty")]
    EmptyRepair,
    #[error("maximum frame payload must be at least one byte")]
    ZeroFramePayload,
    #[error("packet already carries the F flag")]
    AlreadyProtected,
    #[error("packet does not carry the F flag")]
    NotProtected,
    #[error("fragments of repair {0:#018x} disagree")]
    Corrupt(u64),
    #[error("fragment outside its symbol: offset {offset} + {len} > {symbol_length}")]
    FragmentOutOfRange {
        offset: usize,
        len: usize,
        symbol_length: usize,
    },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// 32-bit Source FEC Payload ID. Block schemes read it as
/// `block_id (24) | offset (8)`, the convolutional scheme as a flat
/// sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceFecPayloadId(pub u32);

impl SourceFecPayloadId {
    pub fn block(block_id: u32, offset: u8) -> Self {
        SourceFecPayloadId((block_id << 8) | offset as u32)
    }

    pub fn block_id(self) -> u32 {
        self.0 >> 8
    }

    pub fn offset(self) -> u8 {
        self.0 as u8
    }
}

/// 64-bit Repair FEC Payload ID.
///
/// Block schemes: `block_id (32) | index (8) | k-1 (8) | n-k-1 (8) | depth (8)`.
/// RLC: `window_first (32) | index (8) | window_size (8) | seed (16)`.
/// The RLC density byte travels in the FEC frame body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RepairFecPayloadId(pub u64);

impl RepairFecPayloadId {
    pub fn from_meta(meta: &RepairMeta) -> Self {
        let raw = match *meta {
            RepairMeta::Block {
                block_id,
                index,
                k,
                n_minus_k,
                depth,
            } => {
                (block_id as u64) << 32
                    | (index as u64) << 24
                    | ((k - 1) as u64 & 0xFF) << 16
                    | ((n_minus_k - 1) as u64 & 0xFF) << 8
                    | depth as u64
            }
            RepairMeta::Window { ssv, index } => {
                (ssv.window_first_id as u64) << 32
                    | (index as u64) << 24
                    | (ssv.window_size as u64) << 16
                    | ssv.seed as u64
            }
        };
        RepairFecPayloadId(raw)
    }

    pub fn to_meta(self, scheme: SchemeId, density_threshold_byte: u8) -> RepairMeta {
        let raw = self.0;
        let first = (raw >> 32) as u32;
        let index = (raw >> 24) as u8;
        match scheme {
            SchemeId::XorInterleaved | SchemeId::ReedSolomon => RepairMeta::Block {
                block_id: first,
                index,
                k: ((raw >> 16) & 0xFF) as u16 + 1,
                n_minus_k: ((raw >> 8) & 0xFF) as u16 + 1,
                depth: raw as u8,
            },
            SchemeId::Rlc => RepairMeta::Window {
                ssv: SchemeSpecificValue {
                    seed: raw as u16,
                    density_threshold_byte,
                    window_first_id: first,
                    window_size: (raw >> 16) as u8,
                },
                index,
            },
        }
    }
}

/// One piece of a repair symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FecFrame {
    pub repair_id: RepairFecPayloadId,
    pub symbol_length: u16,
    pub fragment_offset: u16,
    /// RLC density threshold byte; zero for block schemes.
    pub scheme_byte: u8,
    pub data: Vec<u8>,
}

/// repair id, symbol length, offset, scheme byte, data length
const FEC_BODY_FIXED: usize = 8 + 2 + 2 + 1 + 2;

impl FecFrame {
    pub fn body_len(&self) -> usize {
        FEC_BODY_FIXED + self.data.len()
    }

    pub fn write_body(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        let len = u16::try_from(self.data.len()).map_err(|_| WireError::TooLong {
            what: "fec data",
            len: self.data.len(),
        })?;
        out.extend_from_slice(&self.repair_id.0.to_be_bytes());
        out.extend_from_slice(&self.symbol_length.to_be_bytes());
        out.extend_from_slice(&self.fragment_offset.to_be_bytes());
        out.push(self.scheme_byte);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.data);
        Ok(())
    }

    /// Parse a body (after the type byte); returns the frame and bytes used.
    pub fn parse_body(buf: &[u8]) -> Result<(FecFrame, usize), WireError> {
        let mut r = Reader::new(buf);
        let repair_id = RepairFecPayloadId(r.u64("repair fec payload id")?);
        let symbol_length = r.u16("symbol length")?;
        let fragment_offset = r.u16("fragment offset")?;
        let scheme_byte = r.u8("scheme byte")?;
        let len = r.u16("fec data length")? as usize;
        let data = r.bytes(len, "fec data")?.to_vec();
        Ok((
            FecFrame {
                repair_id,
                symbol_length,
                fragment_offset,
                scheme_byte,
                data,
            },
            r.pos,
        ))
    }
}

/// Cut a repair payload into frames of at most `max_frame_payload` bytes.
pub fn fragment_repair(
    payload: &[u8],
    repair_id: RepairFecPayloadId,
    scheme_byte: u8,
    max_frame_payload: usize,
) -> Result<Vec<FecFrame>, FecFrameError> {
    if payload.is_empty() {
        return Err(FecFrameError::EmptyRepair);
    }
    if max_frame_payload == 0 {
        return Err(FecFrameError::ZeroFramePayload);
    }
    let symbol_length = u16::try_from(payload.len()).map_err(|_| WireError::TooLong {
        what: "repair symbol",
        len: payload.len(),
    })?;
    Ok(payload
        .chunks(max_frame_payload)
        .enumerate()
        .map(|(i, chunk)| FecFrame {
            repair_id,
            symbol_length,
            fragment_offset: (i * max_frame_payload) as u16,
            scheme_byte,
            data: chunk.to_vec(),
        })
        .collect())
}

/// Insert the F flag and `id` into a serialized plain packet.
///
/// Returns the wire packet and the source symbol (the plain image padded
/// to `symbol_size`).
pub fn protect_packet(
    plain: &[u8],
    id: SourceFecPayloadId,
    symbol_size: usize,
) -> Result<(Vec<u8>, Vec<u8>), FecFrameError> {
    if plain.len() > symbol_size {
        return Err(FecFrameError::Oversize {
            len: plain.len(),
            max: symbol_size,
        });
    }
    let (h, at) = PublicHeader::parse(plain)?;
    if h.f_flag() {
        return Err(FecFrameError::AlreadyProtected);
    }
    let mut wire = Vec::with_capacity(plain.len() + 4);
    wire.push(plain[0] | FLAG_FEC);
    wire.extend_from_slice(&plain[1..at]);
    wire.extend_from_slice(&id.0.to_be_bytes());
    wire.extend_from_slice(&plain[at..]);
    let mut symbol = plain.to_vec();
    symbol.resize(symbol_size, 0);
    Ok((wire, symbol))
}

/// Inverse of [`protect_packet`]: the id and the plain packet image.
pub fn unprotect_packet(wire: &[u8]) -> Result<(SourceFecPayloadId, Vec<u8>), FecFrameError> {
    let (h, at) = PublicHeader::parse(wire)?;
    let id = h.source_fec_id.ok_or(FecFrameError::NotProtected)?;
    let mut plain = Vec::with_capacity(wire.len() - 4);
    plain.push(wire[0] & !FLAG_FEC);
    plain.extend_from_slice(&wire[1..at - 4]);
    plain.extend_from_slice(&wire[at..]);
    Ok((SourceFecPayloadId(id), plain))
}

/// Sender half of the framework for one connection direction.
pub struct FecSender {
    encoder: Box<dyn SchemeEncoder>,
    symbol_size: usize,
    max_frame_payload: usize,
    scheme_byte: u8,
    pending: VecDeque<FecFrame>,
}

impl FecSender {
    pub fn new(
        config: &SchemeConfig,
        symbol_size: usize,
        max_frame_payload: usize,
    ) -> Result<Self, FecFrameError> {
        let scheme_byte = match *config {
            SchemeConfig::Rlc {
                n,
                k,
                window,
                density,
            } => crate::codec::ConvCodeParams {
                n,
                k,
                window,
                density,
            }
            .density_threshold_byte(),
            _ => 0,
        };
        if max_frame_payload == 0 {
            return Err(FecFrameError::ZeroFramePayload);
        }
        Ok(FecSender {
            encoder: config.encoder(symbol_size)?,
            symbol_size,
            max_frame_payload,
            scheme_byte,
            pending: VecDeque::new(),
        })
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size
    }

    pub fn next_source_id(&self) -> SourceFecPayloadId {
        SourceFecPayloadId(self.encoder.next_source_id())
    }

    /// Protect one plain packet; any repairs it completes are queued.
    pub fn protect_packet(&mut self, plain: &[u8]) -> Result<Vec<u8>, FecFrameError> {
        let id = self.next_source_id();
        let (wire, symbol) = protect_packet(plain, id, self.symbol_size)?;
        for r in self.encoder.push_source(&symbol) {
            self.queue_repair(r)?;
        }
        Ok(wire)
    }

    fn queue_repair(&mut self, r: RepairSymbol) -> Result<(), FecFrameError> {
        let id = RepairFecPayloadId::from_meta(&r.meta);
        self.pending.extend(fragment_repair(
            &r.payload,
            id,
            self.scheme_byte,
            self.max_frame_payload,
        )?);
        Ok(())
    }

    /// FEC frames ready to send.
    pub fn maybe_emit_repairs(&mut self) -> Vec<FecFrame> {
        self.pending.drain(..).collect()
    }
}

struct Partial {
    symbol_length: usize,
    scheme_byte: u8,
    buf: Vec<u8>,
    have: Vec<bool>,
    filled: usize,
}

/// What one incoming source packet produced.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct SourceDelivery {
    /// The plain packet image, unless it was already recovered.
    pub original: Option<Vec<u8>>,
    pub recovered: Vec<(SourceFecPayloadId, Vec<u8>)>,
}

/// Receiver half of the framework for one connection direction.
pub struct RecoveryBuffer {
    scheme: SchemeId,
    decoder: Box<dyn SchemeDecoder>,
    partial: HashMap<RepairFecPayloadId, Partial>,
    done_repairs: HashSet<RepairFecPayloadId>,
    done_order: VecDeque<RepairFecPayloadId>,
    delivered: HashSet<u32>,
    symbol_size: usize,
}

const DONE_REPAIR_MEMORY: usize = 4096;

impl RecoveryBuffer {
    pub fn new(config: &SchemeConfig, symbol_size: usize) -> Self {
        RecoveryBuffer {
            scheme: config.id(),
            decoder: config.decoder(),
            partial: HashMap::new(),
            done_repairs: HashSet::new(),
            done_order: VecDeque::new(),
            delivered: HashSet::new(),
            symbol_size,
        }
    }

    /// Handle a packet carrying the F flag.
    pub fn on_source_symbol(&mut self, wire: &[u8]) -> Result<SourceDelivery, FecFrameError> {
        let (id, plain) = unprotect_packet(wire)?;
        if !self.delivered.insert(id.0) {
            return Ok(SourceDelivery::default());
        }
        let mut symbol = plain.clone();
        symbol.resize(self.symbol_size.max(plain.len()), 0);
        let recovered = self.decoder.on_source(id.0, &symbol);
        Ok(SourceDelivery {
            original: Some(plain),
            recovered: self.filter_new(recovered),
        })
    }

    /// Handle one FEC frame. Returns newly recovered packet images.
    pub fn on_fec_frame(
        &mut self,
        frame: &FecFrame,
    ) -> Result<Vec<(SourceFecPayloadId, Vec<u8>)>, FecFrameError> {
        let id = frame.repair_id;
        if self.done_repairs.contains(&id) {
            return Ok(Vec::new());
        }
        let symbol_length = frame.symbol_length as usize;
        let offset = frame.fragment_offset as usize;
        if symbol_length == 0 {
            return Err(FecFrameError::EmptyRepair);
        }
        if offset + frame.data.len() > symbol_length {
            return Err(FecFrameError::FragmentOutOfRange {
                offset,
                len: frame.data.len(),
                symbol_length,
            });
        }
        let p = self.partial.entry(id).or_insert_with(|| Partial {
            symbol_length,
            scheme_byte: frame.scheme_byte,
            buf: vec![0; symbol_length],
            have: vec![false; symbol_length],
            filled: 0,
        });
        let consistent = p.symbol_length == symbol_length
            && p.scheme_byte == frame.scheme_byte
            && frame
                .data
                .iter()
                .enumerate()
                .all(|(i, &b)| !p.have[offset + i] || p.buf[offset + i] == b);
        if !consistent {
            self.partial.remove(&id);
            self.mark_done(id);
            return Err(FecFrameError::Corrupt(id.0));
        }
        for (i, &b) in frame.data.iter().enumerate() {
            if !p.have[offset + i] {
                p.have[offset + i] = true;
                p.buf[offset + i] = b;
                p.filled += 1;
            }
        }
        if p.filled < p.symbol_length {
            return Ok(Vec::new());
        }
        let p = self.partial.remove(&id).expect("present");
        self.mark_done(id);
        let meta = id.to_meta(self.scheme, p.scheme_byte);
        let recovered = self.decoder.on_repair(&meta, &p.buf);
        Ok(self.filter_new(recovered))
    }

    fn mark_done(&mut self, id: RepairFecPayloadId) {
        self.done_repairs.insert(id);
        self.done_order.push_back(id);
        if self.done_order.len() > DONE_REPAIR_MEMORY {
            let old = self.done_order.pop_front().unwrap();
            self.done_repairs.remove(&old);
        }
    }

    fn filter_new(&mut self, rec: Vec<(u32, Vec<u8>)>) -> Vec<(SourceFecPayloadId, Vec<u8>)> {
        rec.into_iter()
            .filter(|(id, _)| self.delivered.insert(*id))
            .map(|(id, p)| (SourceFecPayloadId(id), p))
            .collect()
    }
}
