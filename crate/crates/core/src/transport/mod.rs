//! QUIC-like endpoint: one data stream, three delivery modes, loss
//! detection on a 9/8 RTT timer and connection-level flow control.
//!
//! Endpoints are plain state machines; the simulator owns the clock and
//! feeds them packets. Times are microseconds.

pub mod wire;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{SchemeConfig, SchemeId};
use crate::fecframe::{FecFrameError, FecSender, RecoveryBuffer};
use wire::{
    parse_packet, serialize_packet, AckFrame, Frame, Packet, PnLen, PublicHeader, StreamFrame,
    WireError,
};

/// Minimum loss-detection delay.
pub const TIMER_GRANULARITY_US: u64 = 1_000;
/// ACK frames carry at most this many ranges.
pub const MAX_ACK_RANGES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("flow control violated: data up to {end} but limit is {limit}")]
    FlowControl { end: u64, limit: u64 },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Fec(#[from] FecFrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryMode {
    /// Lost stream data is retransmitted until acknowledged.
    Reliable,
    /// Best effort, no retransmission.
    Unreliable,
    /// Best effort with FEC protection.
    UnreliableFec,
}

/// What one endpoint announces during the handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportParameters {
    /// Schemes this endpoint supports, most preferred first, each with the
    /// code parameters it would use as a sender.
    pub fec_schemes: Vec<SchemeConfig>,
    pub initial_receive_window: u64,
}

/// Outcome of negotiation. `None` disables FEC for that direction.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreedParameters {
    pub fec_c2s: Option<SchemeConfig>,
    pub fec_s2c: Option<SchemeConfig>,
    pub client_receive_window: u64,
    pub server_receive_window: u64,
}

/// Per direction, the receiver's first preference the sender also
/// supports; code parameters come from the sender's offer.
pub fn negotiate(client: &TransportParameters, server: &TransportParameters) -> AgreedParameters {
    fn pick(sender: &[SchemeConfig], receiver: &[SchemeConfig]) -> Option<SchemeConfig> {
        receiver
            .iter()
            .find_map(|r| sender.iter().find(|s| s.id() == r.id()).copied())
    }
    AgreedParameters {
        fec_c2s: pick(&client.fec_schemes, &server.fec_schemes),
        fec_s2c: pick(&server.fec_schemes, &client.fec_schemes),
        client_receive_window: client.initial_receive_window,
        server_receive_window: server.initial_receive_window,
    }
}

/// Smoothed RTT: the first sample initialises, then 7/8 old + 1/8 new.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RttEstimator {
    srtt_us: Option<f64>,
}

impl RttEstimator {
    pub fn on_sample(&mut self, sample_us: u64) {
        let s = sample_us as f64;
        self.srtt_us = Some(match self.srtt_us {
            None => s,
            Some(old) => 0.875 * old + 0.125 * s,
        });
    }

    pub fn srtt_us(&self) -> Option<f64> {
        self.srtt_us
    }

    /// 9/8 srtt, never below the timer granularity.
    pub fn loss_delay_us(&self) -> u64 {
        let d = (self.srtt_us.unwrap_or(0.0) * 9.0 / 8.0).round() as u64;
        d.max(TIMER_GRANULARITY_US)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Data,
    Retransmission,
    Repair,
    Control,
}

impl PacketKind {
    /// Packets that carry stream data.
    pub fn carries_data(self) -> bool {
        matches!(self, PacketKind::Data | PacketKind::Retransmission)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub pn: u64,
    pub path: usize,
    pub kind: PacketKind,
    pub bytes: Vec<u8>,
}

/// An acknowledged or lost packet, for the scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketEvent {
    pub pn: u64,
    pub path: usize,
    pub bytes: usize,
    pub kind: PacketKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenderConfig {
    pub mode: DeliveryMode,
    pub fec: Option<SchemeConfig>,
    pub connection_id: u64,
    pub stream_id: u32,
    /// Stream bytes per data packet.
    pub chunk_size: usize,
    pub max_frame_payload: usize,
    /// Peer's initial receive window.
    pub initial_max_data: u64,
}

impl SenderConfig {
    /// Size of a plain data packet carrying a full chunk; used as E.
    pub fn symbol_size(&self) -> usize {
        let header = PublicHeader {
            connection_id: Some(self.connection_id),
            pn_len: PnLen::Four,
            packet_number: 0,
            source_fec_id: None,
        };
        header.encoded_len() + wire::STREAM_FRAME_OVERHEAD + self.chunk_size
    }
}

struct Chunk {
    offset: u64,
    data: Vec<u8>,
}

struct SentPacket {
    time_us: u64,
    size: usize,
    path: usize,
    kind: PacketKind,
    chunk: Option<Chunk>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub data_packets: u64,
    pub retransmissions: u64,
    pub repair_packets: u64,
    pub lost_detected: u64,
    /// Number of polls that left data queued for lack of credit.
    pub blocked_polls: u64,
}

/// Sending endpoint of the data stream.
pub struct Sender {
    cfg: SenderConfig,
    next_pn: u64,
    next_offset: u64,
    queue: VecDeque<Chunk>,
    retransmit: VecDeque<Chunk>,
    unacked: BTreeMap<u64, SentPacket>,
    rtt: RttEstimator,
    max_data: u64,
    fec: Option<FecSender>,
    stats: SenderStats,
}

impl Sender {
    pub fn new(cfg: SenderConfig) -> Result<Self, TransportError> {
        let fec = match (cfg.mode, &cfg.fec) {
            (DeliveryMode::UnreliableFec, Some(s)) => {
                Some(FecSender::new(s, cfg.symbol_size(), cfg.max_frame_payload)?)
            }
            _ => None,
        };
        Ok(Sender {
            max_data: cfg.initial_max_data,
            cfg,
            next_pn: 0,
            next_offset: 0,
            queue: VecDeque::new(),
            retransmit: VecDeque::new(),
            unacked: BTreeMap::new(),
            rtt: RttEstimator::default(),
            fec,
            stats: SenderStats::default(),
        })
    }

    pub fn mode(&self) -> DeliveryMode {
        self.cfg.mode
    }

    pub fn fec_scheme(&self) -> Option<SchemeId> {
        self.fec.as_ref().and(self.cfg.fec.map(|c| c.id()))
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    /// Seed the estimator with the handshake round trip.
    pub fn on_handshake_rtt(&mut self, sample_us: u64) {
        self.rtt.on_sample(sample_us);
    }

    pub fn stats(&self) -> SenderStats {
        self.stats
    }

    pub fn max_data(&self) -> u64 {
        self.max_data
    }

    pub fn queued_bytes(&self) -> usize {
        self.queue.iter().map(|c| c.data.len()).sum()
    }

    pub fn bytes_in_flight(&self) -> usize {
        self.unacked.values().map(|p| p.size).sum()
    }

    /// Split a message into chunk-sized pieces and queue them.
    pub fn send_app_message(&mut self, message: &[u8]) {
        let pieces: Vec<&[u8]> = if message.is_empty() {
            vec![message]
        } else {
            message.chunks(self.cfg.chunk_size).collect()
        };
        for p in pieces {
            self.queue.push_back(Chunk {
                offset: self.next_offset,
                data: p.to_vec(),
            });
            self.next_offset += p.len() as u64;
        }
    }

    fn header(&self, pn: u64) -> PublicHeader {
        PublicHeader {
            connection_id: Some(self.cfg.connection_id),
            pn_len: PnLen::Four,
            packet_number: pn,
            source_fec_id: None,
        }
    }

    fn stream_packet(&self, pn: u64, c: &Chunk) -> Result<Vec<u8>, TransportError> {
        Ok(serialize_packet(&Packet {
            header: self.header(pn),
            frames: vec![Frame::Stream(StreamFrame {
                stream_id: self.cfg.stream_id,
                offset: c.offset,
                data: c.data.clone(),
            })],
        })?)
    }

    fn record(
        &mut self,
        out: &mut Vec<Outgoing>,
        bytes: Vec<u8>,
        kind: PacketKind,
        chunk: Option<Chunk>,
        now: u64,
        pick_path: &mut dyn FnMut(usize) -> usize,
    ) {
        let pn = self.next_pn;
        self.next_pn += 1;
        let path = pick_path(bytes.len());
        self.unacked.insert(
            pn,
            SentPacket {
                time_us: now,
                size: bytes.len(),
                path,
                kind,
                chunk,
            },
        );
        out.push(Outgoing {
            pn,
            path,
            kind,
            bytes,
        });
    }

    /// Everything that may be sent now. `pick_path(size)` chooses the path
    /// of each packet in emission order.
    pub fn poll_transmit(
        &mut self,
        now: u64,
        pick_path: &mut dyn FnMut(usize) -> usize,
    ) -> Result<Vec<Outgoing>, TransportError> {
        let mut out = Vec::new();
        while let Some(c) = self.retransmit.pop_front() {
            let bytes = self.stream_packet(self.next_pn, &c)?;
            self.stats.retransmissions += 1;
            self.record(
                &mut out,
                bytes,
                PacketKind::Retransmission,
                Some(c),
                now,
                pick_path,
            );
        }
        while let Some(c) = self.queue.front() {
            if c.offset + c.data.len() as u64 > self.max_data {
                self.stats.blocked_polls += 1;
                break;
            }
            let c = self.queue.pop_front().unwrap();
            let plain = self.stream_packet(self.next_pn, &c)?;
            let bytes = match self.fec.as_mut() {
                Some(f) => f.protect_packet(&plain)?,
                None => plain,
            };
            self.stats.data_packets += 1;
            let keep = (self.cfg.mode == DeliveryMode::Reliable).then_some(c);
            self.record(&mut out, bytes, PacketKind::Data, keep, now, pick_path);
            let frames = match self.fec.as_mut() {
                Some(f) => f.maybe_emit_repairs(),
                None => Vec::new(),
            };
            for f in frames {
                let bytes = serialize_packet(&Packet {
                    header: self.header(self.next_pn),
                    frames: vec![Frame::Fec(f)],
                })?;
                self.stats.repair_packets += 1;
                self.record(&mut out, bytes, PacketKind::Repair, None, now, pick_path);
            }
        }
        Ok(out)
    }

    pub fn on_ack(&mut self, ack: &AckFrame, now: u64) -> Vec<PacketEvent> {
        let mut acked = Vec::new();
        let mut sample = None;
        for &(lo, hi) in &ack.ranges {
            let pns: Vec<u64> = self.unacked.range(lo..=hi).map(|(&pn, _)| pn).collect();
            for pn in pns {
                let p = self.unacked.remove(&pn).unwrap();
                if pn == ack.largest_acked {
                    sample = Some(now.saturating_sub(p.time_us));
                }
                acked.push(PacketEvent {
                    pn,
                    path: p.path,
                    bytes: p.size,
                    kind: p.kind,
                });
            }
        }
        if let Some(s) = sample {
            self.rtt.on_sample(s);
        }
        acked
    }

    pub fn on_window_update(&mut self, max_data: u64) {
        self.max_data = self.max_data.max(max_data);
    }

    /// Earliest pending loss deadline.
    pub fn next_timer(&self) -> Option<u64> {
        let delay = self.rtt.loss_delay_us();
        self.unacked.values().map(|p| p.time_us + delay).min()
    }

    /// Declare packets lost whose deadline passed. Reliable mode queues
    /// their stream data for retransmission.
    pub fn on_timer(&mut self, now: u64) -> Vec<PacketEvent> {
        let delay = self.rtt.loss_delay_us();
        let expired: Vec<u64> = self
            .unacked
            .iter()
            .filter(|(_, p)| p.time_us + delay <= now)
            .map(|(&pn, _)| pn)
            .collect();
        let mut lost = Vec::with_capacity(expired.len());
        for pn in expired {
            let p = self.unacked.remove(&pn).unwrap();
            self.stats.lost_detected += 1;
            lost.push(PacketEvent {
                pn,
                path: p.path,
                bytes: p.size,
                kind: p.kind,
            });
            if let Some(c) = p.chunk {
                self.retransmit.push_back(c);
            }
        }
        lost
    }

    /// Control frames from the peer.
    pub fn on_packet(
        &mut self,
        bytes: &[u8],
        now: u64,
    ) -> Result<Vec<PacketEvent>, TransportError> {
        let p = parse_packet(bytes)?;
        let mut acked = Vec::new();
        for f in p.frames {
            match f {
                Frame::Ack(a) => acked.extend(self.on_ack(&a, now)),
                Frame::WindowUpdate { offset } => self.on_window_update(offset),
                _ => {}
            }
        }
        Ok(acked)
    }
}

/// Receive-side connection flow control with window auto-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowControl {
    window: u64,
    max_window: u64,
    max_data: u64,
    last_update_us: Option<u64>,
}

impl FlowControl {
    pub fn new(window: u64, max_window: u64) -> Self {
        FlowControl {
            window,
            max_window: max_window.max(window),
            max_data: window,
            last_update_us: None,
        }
    }

    pub fn max_data(&self) -> u64 {
        self.max_data
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn check(&self, end: u64) -> Result<(), TransportError> {
        if end > self.max_data {
            return Err(TransportError::FlowControl {
                end,
                limit: self.max_data,
            });
        }
        Ok(())
    }

    /// After the application consumed up to `consumed`: a new limit to
    /// announce once half the window is used. The window doubles when
    /// updates come faster than every two round trips; the first interval
    /// starts at the first read.
    pub fn on_consumed(&mut self, consumed: u64, now: u64, rtt_us: u64) -> Option<u64> {
        self.last_update_us.get_or_insert(now);
        if self.max_data.saturating_sub(consumed) > self.window / 2 {
            return None;
        }
        if let Some(last) = self.last_update_us {
            if now.saturating_sub(last) < 2 * rtt_us {
                self.window = (self.window * 2).min(self.max_window);
            }
        }
        self.last_update_us = Some(now);
        self.max_data = consumed + self.window;
        Some(self.max_data)
    }
}

/// Received stream bytes not yet read.
#[derive(Debug, Default, Clone)]
pub struct StreamBuffer {
    segments: BTreeMap<u64, Vec<u8>>,
    read_offset: u64,
    late_bytes: u64,
}

impl StreamBuffer {
    pub fn read_offset(&self) -> u64 {
        self.read_offset
    }

    /// Bytes that arrived for ranges already read past.
    pub fn late_bytes(&self) -> u64 {
        self.late_bytes
    }

    pub fn insert(&mut self, offset: u64, data: &[u8]) {
        let end = offset + data.len() as u64;
        if end <= self.read_offset {
            self.late_bytes += data.len() as u64;
            return;
        }
        let skip = self.read_offset.saturating_sub(offset);
        self.late_bytes += skip;
        let (offset, data) = (offset + skip, &data[skip as usize..]);
        if data.is_empty() || self.segments.contains_key(&offset) {
            return;
        }
        self.segments.insert(offset, data.to_vec());
    }

    /// End of the contiguous run starting at the read offset.
    pub fn contiguous_end(&self) -> u64 {
        let mut end = self.read_offset;
        for (&o, d) in self.segments.range(..) {
            if o > end {
                break;
            }
            end = end.max(o + d.len() as u64);
        }
        end
    }

    /// Distinct bytes present in `[start, end)`.
    pub fn present(&self, start: u64, end: u64) -> u64 {
        let mut covered = start;
        let mut total = 0;
        for (&o, d) in &self.segments {
            let (s, e) = (o.max(covered), (o + d.len() as u64).min(end));
            if e > s {
                total += e - s;
                covered = e;
            }
            if o >= end {
                break;
            }
        }
        total
    }

    /// Move the read offset to `end`, sealing holes; returns the bytes
    /// actually present in the consumed range.
    pub fn consume(&mut self, end: u64) -> u64 {
        if end <= self.read_offset {
            return 0;
        }
        let got = self.present(self.read_offset, end);
        let keep = self.segments.split_off(&end);
        let straddler = self
            .segments
            .iter()
            .next_back()
            .filter(|(&o, d)| o + d.len() as u64 > end)
            .map(|(&o, d)| (end, d[(end - o) as usize..].to_vec()));
        self.segments = keep;
        if let Some((o, d)) = straddler {
            self.segments.insert(o, d);
        }
        self.read_offset = end;
        got
    }
}

/// Inclusive ranges of received packet numbers.
#[derive(Debug, Default, Clone)]
struct RangeSet {
    ranges: BTreeMap<u64, u64>,
}

impl RangeSet {
    fn insert(&mut self, pn: u64) -> bool {
        if let Some((&lo, &hi)) = self.ranges.range(..=pn).next_back() {
            if pn <= hi {
                return false;
            }
            if pn == hi + 1 {
                let mut new_hi = pn;
                if let Some(&next_hi) = self.ranges.get(&(pn + 1)) {
                    self.ranges.remove(&(pn + 1));
                    new_hi = next_hi;
                }
                self.ranges.insert(lo, new_hi);
                return true;
            }
        }
        if let Some(&next_hi) = self.ranges.get(&(pn + 1)) {
            self.ranges.remove(&(pn + 1));
            self.ranges.insert(pn, next_hi);
        } else {
            self.ranges.insert(pn, pn);
        }
        true
    }

    fn highest(&self, n: usize) -> Vec<(u64, u64)> {
        self.ranges
            .iter()
            .rev()
            .take(n)
            .map(|(&l, &h)| (l, h))
            .collect()
    }

    fn prune(&mut self, keep: usize) {
        while self.ranges.len() > keep {
            let lo = *self.ranges.keys().next().unwrap();
            self.ranges.remove(&lo);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub mode: DeliveryMode,
    pub fec: Option<SchemeConfig>,
    pub connection_id: u64,
    pub symbol_size: usize,
    pub initial_window: u64,
    pub max_window: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiverStats {
    pub packets: u64,
    pub recovered_packets: u64,
    pub stream_bytes: u64,
    pub fec_errors: u64,
}

/// Receiving endpoint of the data stream.
pub struct Receiver {
    cfg: ReceiverConfig,
    recovery: Option<RecoveryBuffer>,
    received: RangeSet,
    stream: StreamBuffer,
    flow: FlowControl,
    next_pn: u64,
    outbox: Vec<Vec<u8>>,
    stats: ReceiverStats,
}

impl Receiver {
    pub fn new(cfg: ReceiverConfig) -> Self {
        let recovery = match (cfg.mode, &cfg.fec) {
            (DeliveryMode::UnreliableFec, Some(s)) => Some(RecoveryBuffer::new(s, cfg.symbol_size)),
            _ => None,
        };
        Receiver {
            flow: FlowControl::new(cfg.initial_window, cfg.max_window),
            recovery,
            received: RangeSet::default(),
            stream: StreamBuffer::default(),
            next_pn: 0,
            outbox: Vec::new(),
            stats: ReceiverStats::default(),
            cfg,
        }
    }

    pub fn stream(&self) -> &StreamBuffer {
        &self.stream
    }

    pub fn flow(&self) -> &FlowControl {
        &self.flow
    }

    pub fn stats(&self) -> ReceiverStats {
        self.stats
    }

    /// Unread bytes held, which never exceeds the advertised window.
    pub fn buffered_bytes(&self) -> u64 {
        let r = self.stream.read_offset();
        let end = self.flow.max_data().max(r);
        self.stream.present(r, end)
    }

    fn control_packet(&mut self, frames: Vec<Frame>) {
        let pn = self.next_pn;
        self.next_pn += 1;
        let p = Packet {
            header: PublicHeader {
                connection_id: Some(self.cfg.connection_id),
                pn_len: PnLen::for_pn(pn),
                packet_number: pn,
                source_fec_id: None,
            },
            frames,
        };
        self.outbox
            .push(serialize_packet(&p).expect("control packets are well formed"));
    }

    fn on_stream_frames(&mut self, frames: &[Frame]) -> Result<(), TransportError> {
        for f in frames {
            if let Frame::Stream(s) = f {
                let end = s.offset + s.data.len() as u64;
                self.flow.check(end)?;
                self.stats.stream_bytes += s.data.len() as u64;
                self.stream.insert(s.offset, &s.data);
            }
        }
        Ok(())
    }

    pub fn on_packet(&mut self, bytes: &[u8], _now: u64) -> Result<(), TransportError> {
        let packet = parse_packet(bytes)?;
        let pn = packet.header.packet_number;
        if !self.received.insert(pn) {
            return Ok(());
        }
        self.stats.packets += 1;
        self.received.prune(4 * MAX_ACK_RANGES);
        let ranges = self.received.highest(MAX_ACK_RANGES);
        self.control_packet(vec![Frame::Ack(AckFrame {
            largest_acked: ranges[0].1,
            ack_delay_us: 0,
            ranges,
        })]);

        let mut recovered = Vec::new();
        match (&mut self.recovery, packet.header.f_flag()) {
            (Some(rb), true) => {
                let d = rb.on_source_symbol(bytes)?;
                if d.original.is_some() {
                    self.on_stream_frames(&packet.frames)?;
                }
                recovered.extend(d.recovered);
            }
            _ => self.on_stream_frames(&packet.frames)?,
        }
        if let Some(rb) = self.recovery.as_mut() {
            for f in &packet.frames {
                if let Frame::Fec(ff) = f {
                    match rb.on_fec_frame(ff) {
                        Ok(r) => recovered.extend(r),
                        Err(_) => self.stats.fec_errors += 1,
                    }
                }
            }
        }
        for (_, image) in recovered {
            self.stats.recovered_packets += 1;
            let p = parse_packet(&image)?;
            self.on_stream_frames(&p.frames)?;
        }
        Ok(())
    }

    /// Application read up to stream offset `end`, holes included.
    /// Returns the bytes present in the consumed range.
    pub fn read(&mut self, end: u64, now: u64, rtt_us: u64) -> u64 {
        let got = self.stream.consume(end);
        if let Some(max) = self
            .flow
            .on_consumed(self.stream.read_offset(), now, rtt_us)
        {
            self.control_packet(vec![Frame::WindowUpdate { offset: max }]);
        }
        got
    }

    /// Control packets to send back.
    pub fn poll_transmit(&mut self) -> Vec<Vec<u8>> {
        std::mem::take(&mut self.outbox)
    }
}
