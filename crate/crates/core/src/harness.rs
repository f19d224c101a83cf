//! Real-time workload and its metrics.
//!
//! A constant-rate source hands fixed-size messages to the transport; a
//! playback sink reads them on a fixed schedule that starts one playback
//! buffer after the first message is expected at the receiver. Every
//! message not readable at its deadline costs one message interval of
//! rebuffering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::SchemeConfig;
use crate::netem::{EventQueue, NetemError, PacketClass, PathSpec, Topology, Trace};
use crate::sched::{Scheduler, SchedulerKind};
use crate::transport::{
    DeliveryMode, Outgoing, PacketKind, Receiver, ReceiverConfig, Sender, SenderConfig,
    TransportError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Netem(#[from] NetemError),
    #[error("transport error at t={time_us}us: {source}")]
    Transport {
        time_us: u64,
        source: TransportError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficProfile {
    pub msg_rate: f64,
    pub pkts_per_msg: usize,
    pub pkt_payload: usize,
    pub duration_s: f64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            msg_rate: 30.0,
            pkts_per_msg: 8,
            pkt_payload: 1000,
            duration_s: 25.0,
        }
    }
}

impl TrafficProfile {
    pub fn messages(&self) -> usize {
        (self.msg_rate * self.duration_s).round() as usize
    }

    pub fn message_bytes(&self) -> usize {
        self.pkts_per_msg * self.pkt_payload
    }

    pub fn total_bytes(&self) -> u64 {
        (self.messages() * self.message_bytes()) as u64
    }

    /// Emission offset of message `m` from the start of sending.
    pub fn offset_us(&self, m: usize) -> u64 {
        (m as f64 * 1e6 / self.msg_rate).round() as u64
    }

    pub fn interval_ms(&self) -> f64 {
        1000.0 / self.msg_rate
    }

    /// Application bytes of message `m`.
    pub fn message(&self, m: usize) -> Vec<u8> {
        let len = self.message_bytes();
        (0..len).map(|i| (m * 131 + i * 7 + 1) as u8).collect()
    }
}

/// What the transport offers: retransmissions, nothing, or FEC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Reliable,
    Plain,
    Fec { fec: SchemeConfig },
}

impl Mode {
    pub fn delivery(&self) -> DeliveryMode {
        match self {
            Mode::Reliable => DeliveryMode::Reliable,
            Mode::Plain => DeliveryMode::Unreliable,
            Mode::Fec { .. } => DeliveryMode::UnreliableFec,
        }
    }

    pub fn scheme(&self) -> Option<SchemeConfig> {
        match self {
            Mode::Fec { fec } => Some(*fec),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportSettings {
    pub initial_window: u64,
    pub max_window: u64,
    pub max_frame_payload: usize,
    pub initial_cwnd_packets: u64,
    /// Give up on a reliable run this long after the last deadline.
    pub reliable_grace_s: f64,
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            initial_window: 64 * 1024,
            max_window: 16 * 1024 * 1024,
            max_frame_payload: 1200,
            initial_cwnd_packets: 10,
            reliable_grace_s: 600.0,
        }
    }
}

/// Everything one run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub scheduler: SchedulerKind,
    pub paths: Vec<PathSpec>,
    pub buffer_ms: f64,
    pub profile: TrafficProfile,
    pub seed: u64,
    pub transport: TransportSettings,
}

impl ExperimentConfig {
    pub fn single_path(mode: Mode, path: PathSpec, buffer_ms: f64, seed: u64) -> Self {
        ExperimentConfig {
            mode,
            scheduler: SchedulerKind::SinglePath,
            paths: vec![path],
            buffer_ms,
            profile: TrafficProfile::default(),
            seed,
            transport: TransportSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.paths.is_empty() {
            return Err(HarnessError::Config("at least one path".into()));
        }
        if self.scheduler == SchedulerKind::SinglePath && self.paths.len() != 1 {
            return Err(HarnessError::Config(
                "single-path scheduler with several paths".into(),
            ));
        }
        if !(self.buffer_ms >= 0.0 && self.buffer_ms.is_finite()) {
            return Err(HarnessError::Config(format!(
                "buffer {} ms",
                self.buffer_ms
            )));
        }
        if !(self.profile.msg_rate > 0.0) || self.profile.pkt_payload == 0 {
            return Err(HarnessError::Config("empty traffic profile".into()));
        }
        if let Some(s) = self.mode.scheme() {
            s.validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadOutcome {
    Ok,
    Corrupted {
        missing_bytes: u64,
    },
    Missing,
    /// Reliable stream not readable yet; read later.
    Late,
}

/// Read-side accounting.
#[derive(Debug, Clone)]
pub struct PlaybackSink {
    msg_bytes: u64,
    interval_ms: f64,
    rebuffer_events: u64,
    bytes_received: u64,
    ok: u64,
    corrupted: u64,
    missing: u64,
    late: u64,
}

impl PlaybackSink {
    pub fn new(profile: &TrafficProfile) -> Self {
        PlaybackSink {
            msg_bytes: profile.message_bytes() as u64,
            interval_ms: profile.interval_ms(),
            rebuffer_events: 0,
            bytes_received: 0,
            ok: 0,
            corrupted: 0,
            missing: 0,
            late: 0,
        }
    }

    /// Unreliable read at the deadline with `present` bytes of the message.
    pub fn sink_read(&mut self, present: u64) -> ReadOutcome {
        self.bytes_received += present;
        if present >= self.msg_bytes {
            self.ok += 1;
            ReadOutcome::Ok
        } else {
            self.rebuffer_events += 1;
            if present == 0 {
                self.missing += 1;
                ReadOutcome::Missing
            } else {
                self.corrupted += 1;
                ReadOutcome::Corrupted {
                    missing_bytes: self.msg_bytes - present,
                }
            }
        }
    }

    /// Reliable deadline: either the whole message is readable or the
    /// reader stalls for one interval.
    pub fn reliable_deadline(&mut self, readable: bool) -> ReadOutcome {
        if readable {
            self.ok += 1;
            ReadOutcome::Ok
        } else {
            self.rebuffer_events += 1;
            self.late += 1;
            ReadOutcome::Late
        }
    }

    /// Bytes handed to the application by the reliable reader.
    pub fn reliable_read(&mut self, bytes: u64) {
        self.bytes_received += bytes;
    }

    pub fn rebuffer_ms(&self) -> f64 {
        self.rebuffer_events as f64 * self.interval_ms
    }

    pub fn finalize(&self, profile: &TrafficProfile) -> RunMetrics {
        let total = profile.total_bytes();
        RunMetrics {
            fraction_received: if total == 0 {
                1.0
            } else {
                self.bytes_received as f64 / total as f64
            },
            rebuffer_ms: self.rebuffer_ms(),
            messages_ok: self.ok,
            messages_corrupted: self.corrupted,
            messages_missing: self.missing,
            messages_late: self.late,
            ..RunMetrics::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fraction_received: f64,
    pub rebuffer_ms: f64,
    pub messages_ok: u64,
    pub messages_corrupted: u64,
    pub messages_missing: u64,
    pub messages_late: u64,
    pub data_packets: u64,
    pub repair_packets: u64,
    pub retransmissions: u64,
    pub recovered_packets: u64,
    /// Data packets dropped per path.
    pub dropped: [u64; 2],
    pub complete: bool,
    /// Digest of the send/drop log.
    pub trace_digest: u64,
    /// Final congestion windows, bytes.
    pub cwin: [u64; 2],
    /// Packets sent per path.
    pub path_packets: [u64; 2],
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Option<Trace>,
}

enum Ev {
    AppSend(usize),
    Deadline(usize),
    ToReceiver { path: usize, bytes: Vec<u8> },
    ToSender { bytes: Vec<u8> },
    Timer,
}

struct Sim<'a> {
    cfg: &'a ExperimentConfig,
    topo: Topology,
    sender: Sender,
    receiver: Receiver,
    sched: Scheduler,
    sched_rng: rand_chacha::ChaCha8Rng,
    sink: PlaybackSink,
    trace: Trace,
    timer_at: Option<u64>,
    rtt_us: u64,
    /// Next message the reliable reader waits for, and how many are due.
    next_read: usize,
    due: usize,
    path_packets: [u64; 2],
}

impl Sim<'_> {
    fn msg_end(&self, m: usize) -> u64 {
        ((m + 1) * self.cfg.profile.message_bytes()) as u64
    }

    fn transmit(&mut self, q: &mut EventQueue<Ev>, now: u64) -> Result<(), HarnessError> {
        let Sim {
            sender,
            sched,
            sched_rng,
            ..
        } = self;
        let out: Vec<Outgoing> = sender
            .poll_transmit(now, &mut |size| sched.pick(size, sched_rng))
            .map_err(|source| HarnessError::Transport {
                time_us: now,
                source,
            })?;
        for o in out {
            let class = if o.kind.carries_data() {
                PacketClass::Data
            } else {
                PacketClass::Other
            };
            let arrival = self.topo.forward[o.path].send(now, class);
            if o.path < 2 {
                self.path_packets[o.path] += 1;
            }
            let event = match o.kind {
                PacketKind::Data => "data",
                PacketKind::Retransmission => "retx",
                PacketKind::Repair => "repair",
                PacketKind::Control => "ctrl",
            };
            self.trace
                .record(now, event, o.path, o.pn, arrival.is_none());
            if let Some(at) = arrival {
                q.push(
                    at,
                    Ev::ToReceiver {
                        path: o.path,
                        bytes: o.bytes,
                    },
                );
            }
        }
        self.arm_timer(q, now);
        Ok(())
    }

    fn arm_timer(&mut self, q: &mut EventQueue<Ev>, now: u64) {
        if let Some(t) = self.sender.next_timer() {
            let t = t.max(now);
            if self.timer_at.is_none_or(|a| t < a) {
                self.timer_at = Some(t);
                q.push(t, Ev::Timer);
            }
        }
    }

    fn flush_receiver(&mut self, q: &mut EventQueue<Ev>, now: u64, path: usize) {
        for bytes in self.receiver.poll_transmit() {
            if let Some(at) = self.topo.reverse[path].send(now, PacketClass::Other) {
                q.push(at, Ev::ToSender { bytes });
            }
        }
    }

    /// Reliable reader: read every due message whose bytes are all there.
    fn reliable_catch_up(&mut self, now: u64) {
        while self.next_read < self.due
            && self.receiver.stream().contiguous_end() >= self.msg_end(self.next_read)
        {
            let end = self.msg_end(self.next_read);
            let got = self.receiver.read(end, now, self.rtt_us);
            self.sink.reliable_read(got);
            self.next_read += 1;
        }
    }

    fn handle(&mut self, q: &mut EventQueue<Ev>, now: u64, ev: Ev) -> Result<(), HarnessError> {
        let reliable = self.cfg.mode == Mode::Reliable;
        match ev {
            Ev::AppSend(m) => {
                self.sender.send_app_message(&self.cfg.profile.message(m));
                self.transmit(q, now)?;
            }
            Ev::ToReceiver { path, bytes } => {
                self.receiver
                    .on_packet(&bytes, now)
                    .map_err(|source| HarnessError::Transport {
                        time_us: now,
                        source,
                    })?;
                if reliable {
                    self.reliable_catch_up(now);
                }
                self.flush_receiver(q, now, path);
            }
            Ev::ToSender { bytes } => {
                let acked = self.sender.on_packet(&bytes, now).map_err(|source| {
                    HarnessError::Transport {
                        time_us: now,
                        source,
                    }
                })?;
                let srtt = self.sender.rtt().srtt_us().unwrap_or(0.0) as u64;
                for e in acked {
                    self.sched.on_acked(e.path, e.bytes, now, srtt);
                }
                self.transmit(q, now)?;
            }
            Ev::Timer => {
                if self.timer_at == Some(now) {
                    self.timer_at = None;
                }
                let srtt = self.sender.rtt().srtt_us().unwrap_or(0.0) as u64;
                for e in self.sender.on_timer(now) {
                    self.sched.on_lost(e.path, e.bytes, now, srtt);
                }
                self.transmit(q, now)?;
            }
            Ev::Deadline(m) => {
                if reliable {
                    self.due = m + 1;
                    self.reliable_catch_up(now);
                    let readable = self.next_read > m;
                    self.sink.reliable_deadline(readable);
                } else {
                    let start = (m * self.cfg.profile.message_bytes()) as u64;
                    let end = self.msg_end(m);
                    let present = self.receiver.stream().present(start, end);
                    self.sink.sink_read(present);
                    self.receiver.read(end, now, self.rtt_us);
                }
                self.flush_receiver(q, now, 0);
            }
        }
        Ok(())
    }
}

/// Run one experiment to completion.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics, HarnessError> {
    run_experiment_traced(cfg, false).map(|o| o.metrics)
}

/// Like [`run_experiment`]; with `keep_trace` the full packet log is
/// returned as well.
pub fn run_experiment_traced(
    cfg: &ExperimentConfig,
    keep_trace: bool,
) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let topo = Topology::new(&cfg.paths, cfg.seed)?;
    let owd_us = topo.forward.iter().map(|l| l.owd_us()).max().unwrap_or(0);
    let rtt_us = 2 * owd_us;
    let profile = cfg.profile;
    let connection_id = cfg.seed ^ 0x5155_4943_4645_4300;
    let sender_cfg = SenderConfig {
        mode: cfg.mode.delivery(),
        fec: cfg.mode.scheme(),
        connection_id,
        stream_id: 1,
        chunk_size: profile.pkt_payload,
        max_frame_payload: cfg.transport.max_frame_payload,
        initial_max_data: cfg.transport.initial_window,
    };
    let symbol_size = sender_cfg.symbol_size();
    let mut sender =
        Sender::new(sender_cfg).map_err(|source| HarnessError::Transport { time_us: 0, source })?;
    // The handshake takes one round trip and yields the first RTT sample.
    sender.on_handshake_rtt(rtt_us);
    let receiver = Receiver::new(ReceiverConfig {
        mode: cfg.mode.delivery(),
        fec: cfg.mode.scheme(),
        connection_id: connection_id ^ 1,
        symbol_size,
        initial_window: cfg.transport.initial_window,
        max_window: cfg.transport.max_window,
    });
    let mss = symbol_size as u64;
    let mut sim = Sim {
        cfg,
        sched: Scheduler::new(
            cfg.scheduler,
            cfg.paths.len(),
            mss,
            cfg.transport.initial_cwnd_packets,
        ),
        sched_rng: crate::netem::rng_stream(cfg.seed, 1 << 32),
        topo,
        sender,
        receiver,
        sink: PlaybackSink::new(&profile),
        trace: Trace::default(),
        timer_at: None,
        rtt_us,
        next_read: 0,
        due: 0,
        path_packets: [0; 2],
    };

    let start = rtt_us;
    let anchor = start + rtt_us / 2 + (cfg.buffer_ms * 1000.0).round() as u64;
    let n = profile.messages();
    let mut q = EventQueue::new();
    for m in 0..n {
        q.push(start + profile.offset_us(m), Ev::AppSend(m));
        q.push(anchor + profile.offset_us(m), Ev::Deadline(m));
    }
    let last_deadline = anchor + profile.offset_us(n.saturating_sub(1));
    let reliable = cfg.mode == Mode::Reliable;
    let horizon = if reliable {
        last_deadline + (cfg.transport.reliable_grace_s * 1e6) as u64
    } else {
        last_deadline
    };
    while let Some(t) = q.peek_time() {
        if t > horizon || (reliable && sim.next_read >= n && t > last_deadline) {
            break;
        }
        let (t, ev) = q.pop().unwrap();
        sim.handle(&mut q, t, ev)?;
    }

    let mut metrics = sim.sink.finalize(&profile);
    let s = sim.sender.stats();
    metrics.data_packets = s.data_packets;
    metrics.repair_packets = s.repair_packets;
    metrics.retransmissions = s.retransmissions;
    metrics.recovered_packets = sim.receiver.stats().recovered_packets;
    metrics.complete = !reliable || sim.next_read >= n;
    metrics.trace_digest = sim.trace.digest();
    for (i, link) in sim.topo.forward.iter().take(2).enumerate() {
        metrics.dropped[i] = link.counts().1;
    }
    for (i, p) in sim.sched.paths().iter().take(2).enumerate() {
        metrics.cwin[i] = p.cwin;
    }
    metrics.path_packets = sim.path_packets;
    Ok(RunOutput {
        metrics,
        trace: keep_trace.then_some(sim.trace),
    })
}
