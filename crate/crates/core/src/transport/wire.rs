//! Packet and frame encoding.
//!
//! Public header:
//!
//! ```text
//! flags (1)  F=0x80  CID=0x40  pn length=0x30 (00:1 01:2 10:4 11:6 bytes)
//! connection id (8, if CID)
//! packet number (1/2/4/6)
//! source FEC payload id (4, if F)
//! ```
//!
//! Frames: PADDING 0x00, FEC 0x20, STREAM 0x21, ACK 0x22,
//! WINDOW_UPDATE 0x23. All integers are big-endian.

use thiserror::Error;

use crate::fecframe::FecFrame;

pub const FLAG_FEC: u8 = 0x80;
pub const FLAG_CID: u8 = 0x40;
const PN_MASK: u8 = 0x30;
const RESERVED_MASK: u8 = 0x0F;

pub const FRAME_PADDING: u8 = 0x00;
pub const FRAME_FEC: u8 = 0x20;
pub const FRAME_STREAM: u8 = 0x21;
pub const FRAME_ACK: u8 = 0x22;
pub const FRAME_WINDOW_UPDATE: u8 = 0x23;

/// Fixed part of a STREAM frame: type, stream id, offset, data length.
pub const STREAM_FRAME_OVERHEAD: usize = 1 + 4 + 8 + 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("unknown frame type 0x{0:02x}")]
    UnknownFrame(u8),
    #[error("reserved header bits set: 0x{0:02x}")]
    ReservedBits(u8),
    #[error("packet number {pn} does not fit in {len} bytes")]
    PacketNumberOverflow { pn: u64, len: usize },
    #[error("{what} of {len} bytes exceeds the 16-bit length field")]
    TooLong { what: &'static str, len: usize },
    #[error("{0} ack ranges exceed the 8-bit count")]
    TooManyRanges(usize),
    #[error("malformed FEC frame: {0}")]
    Fec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PnLen {
    One,
    Two,
    Four,
    Six,
}

impl PnLen {
    pub fn bytes(self) -> usize {
        match self {
            PnLen::One => 1,
            PnLen::Two => 2,
            PnLen::Four => 4,
            PnLen::Six => 6,
        }
    }

    fn code(self) -> u8 {
        match self {
            PnLen::One => 0,
            PnLen::Two => 1,
            PnLen::Four => 2,
            PnLen::Six => 3,
        }
    }

    fn from_code(c: u8) -> PnLen {
        match c & 3 {
            0 => PnLen::One,
            1 => PnLen::Two,
            2 => PnLen::Four,
            _ => PnLen::Six,
        }
    }

    /// Smallest length that holds `pn`.
    pub fn for_pn(pn: u64) -> PnLen {
        match pn {
            0..=0xFF => PnLen::One,
            0x100..=0xFFFF => PnLen::Two,
            0x1_0000..=0xFFFF_FFFF => PnLen::Four,
            _ => PnLen::Six,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PublicHeader {
    pub connection_id: Option<u64>,
    pub pn_len: PnLen,
    pub packet_number: u64,
    /// Source FEC Payload ID; present exactly when the F flag is set.
    pub source_fec_id: Option<u32>,
}

impl PublicHeader {
    pub fn f_flag(&self) -> bool {
        self.source_fec_id.is_some()
    }

    pub fn encoded_len(&self) -> usize {
        1 + self.connection_id.map_or(0, |_| 8)
            + self.pn_len.bytes()
            + self.source_fec_id.map_or(0, |_| 4)
    }

    pub fn write(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        let len = self.pn_len.bytes();
        if len < 8 && self.packet_number >> (len * 8) != 0 {
            return Err(WireError::PacketNumberOverflow {
                pn: self.packet_number,
                len,
            });
        }
        let mut flags = self.pn_len.code() << 4;
        if self.source_fec_id.is_some() {
            flags |= FLAG_FEC;
        }
        if self.connection_id.is_some() {
            flags |= FLAG_CID;
        }
        out.push(flags);
        if let Some(cid) = self.connection_id {
            out.extend_from_slice(&cid.to_be_bytes());
        }
        out.extend_from_slice(&self.packet_number.to_be_bytes()[8 - len..]);
        if let Some(id) = self.source_fec_id {
            out.extend_from_slice(&id.to_be_bytes());
        }
        Ok(())
    }

    pub fn parse(buf: &[u8]) -> Result<(PublicHeader, usize), WireError> {
        let mut r = Reader::new(buf);
        let flags = r.u8("flags")?;
        if flags & RESERVED_MASK != 0 {
            return Err(WireError::ReservedBits(flags & RESERVED_MASK));
        }
        let connection_id = if flags & FLAG_CID != 0 {
            Some(r.u64("connection id")?)
        } else {
            None
        };
        let pn_len = PnLen::from_code((flags & PN_MASK) >> 4);
        let packet_number = r.uint(pn_len.bytes(), "packet number")?;
        let source_fec_id = if flags & FLAG_FEC != 0 {
            Some(r.u32("source fec payload id")?)
        } else {
            None
        };
        Ok((
            PublicHeader {
                connection_id,
                pn_len,
                packet_number,
                source_fec_id,
            },
            r.pos,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamFrame {
    pub stream_id: u32,
    pub offset: u64,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AckFrame {
    pub largest_acked: u64,
    pub ack_delay_us: u32,
    /// Inclusive (low, high) packet-number ranges, highest first.
    pub ranges: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Frame {
    Padding,
    Stream(StreamFrame),
    Ack(AckFrame),
    Fec(FecFrame),
    WindowUpdate { offset: u64 },
}

impl Frame {
    pub fn encoded_len(&self) -> usize {
        match self {
            Frame::Padding => 1,
            Frame::Stream(s) => STREAM_FRAME_OVERHEAD + s.data.len(),
            Frame::Ack(a) => 1 + 8 + 4 + 1 + 16 * a.ranges.len(),
            Frame::Fec(f) => 1 + f.body_len(),
            Frame::WindowUpdate { .. } => 9,
        }
    }

    pub fn write(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        match self {
            Frame::Padding => out.push(FRAME_PADDING),
            Frame::Stream(s) => {
                let len = u16::try_from(s.data.len()).map_err(|_| WireError::TooLong {
                    what: "stream data",
                    len: s.data.len(),
                })?;
                out.push(FRAME_STREAM);
                out.extend_from_slice(&s.stream_id.to_be_bytes());
                out.extend_from_slice(&s.offset.to_be_bytes());
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(&s.data);
            }
            Frame::Ack(a) => {
                let n = u8::try_from(a.ranges.len())
                    .map_err(|_| WireError::TooManyRanges(a.ranges.len()))?;
                out.push(FRAME_ACK);
                out.extend_from_slice(&a.largest_acked.to_be_bytes());
                out.extend_from_slice(&a.ack_delay_us.to_be_bytes());
                out.push(n);
                for (lo, hi) in &a.ranges {
                    out.extend_from_slice(&lo.to_be_bytes());
                    out.extend_from_slice(&hi.to_be_bytes());
                }
            }
            Frame::Fec(f) => {
                out.push(FRAME_FEC);
                f.write_body(out)
                    .map_err(|e| WireError::Fec(e.to_string()))?;
            }
            Frame::WindowUpdate { offset } => {
                out.push(FRAME_WINDOW_UPDATE);
                out.extend_from_slice(&offset.to_be_bytes());
            }
        }
        Ok(())
    }

    fn parse(r: &mut Reader<'_>) -> Result<Frame, WireError> {
        let ty = r.u8("frame type")?;
        Ok(match ty {
            FRAME_PADDING => Frame::Padding,
            FRAME_STREAM => {
                let stream_id = r.u32("stream id")?;
                let offset = r.u64("stream offset")?;
                let len = r.u16("stream data length")? as usize;
                let data = r.bytes(len, "stream data")?.to_vec();
                Frame::Stream(StreamFrame {
                    stream_id,
                    offset,
                    data,
                })
            }
            FRAME_ACK => {
                let largest_acked = r.u64("largest acked")?;
                let ack_delay_us = r.u32("ack delay")?;
                let n = r.u8("ack range count")?;
                let mut ranges = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    ranges.push((r.u64("ack range")?, r.u64("ack range")?));
                }
                Frame::Ack(AckFrame {
                    largest_acked,
                    ack_delay_us,
                    ranges,
                })
            }
            FRAME_FEC => {
                let (f, used) =
                    FecFrame::parse_body(r.rest()).map_err(|e| WireError::Fec(e.to_string()))?;
                r.pos += used;
                Frame::Fec(f)
            }
            FRAME_WINDOW_UPDATE => Frame::WindowUpdate {
                offset: r.u64("window offset")?,
            },
            other => return Err(WireError::UnknownFrame(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub header: PublicHeader,
    pub frames: Vec<Frame>,
}

impl Packet {
    pub fn encoded_len(&self) -> usize {
        self.header.encoded_len() + self.frames.iter().map(Frame::encoded_len).sum::<usize>()
    }
}

pub fn serialize_packet(p: &Packet) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(p.encoded_len());
    p.header.write(&mut out)?;
    for f in &p.frames {
        f.write(&mut out)?;
    }
    Ok(out)
}

pub fn parse_packet(buf: &[u8]) -> Result<Packet, WireError> {
    let (header, used) = PublicHeader::parse(buf)?;
    let mut r = Reader::new(&buf[used..]);
    let mut frames = Vec::new();
    while !r.rest().is_empty() {
        frames.push(Frame::parse(&mut r)?);
    }
    Ok(Packet { header, frames })
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn uint(&mut self, n: usize, what: &'static str) -> Result<u64, WireError> {
        Ok(self
            .bytes(n, what)?
            .iter()
            .fold(0u64, |acc, &b| (acc << 8) | b as u64))
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.bytes(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(self.uint(2, what)? as u16)
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(self.uint(4, what)? as u32)
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        self.uint(8, what)
    }
}

/// Hex dump with whitespace and `#` comments ignored.
pub fn decode_hex(text: &str) -> Result<Vec<u8>, String> {
    let digits: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.chars().filter(|c| !c.is_whitespace()))
        .collect();
    if digits.len() % 2 != 0 {
        return Err("odd number of hex digits".into());
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).map_err(|e| e.to_string()))
        .collect()
}
