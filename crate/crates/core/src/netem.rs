//! Discrete-event network emulation: a virtual clock, FIFO links with a
//! fixed one-way delay, Gilbert-Elliott and uniform loss.
//!
//! Loss processes are indexed by data packets. Packets that carry stream
//! data draw from a link's primary stream and advance its Markov chain;
//! every other packet looks at the current state using a separate stream
//! and leaves the chain alone. Two runs that send the same data packets
//! over a link therefore see the same data erasures, whatever else they
//! send.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetemError {
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("negative or non-finite delay {0} ms")]
    Delay(f64),
}

fn check_prob(name: &'static str, value: f64) -> Result<(), NetemError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NetemError::Probability { name, value })
    }
}

/// Two-state loss model. `k_good` and `h_bad` are delivery probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeParams {
    pub p: f64,
    pub r: f64,
    pub k_good: f64,
    pub h_bad: f64,
}

impl GeParams {
    /// Bursty profile where Good always delivers and Bad never does.
    pub fn simplified(p: f64, r: f64) -> Self {
        GeParams {
            p,
            r,
            k_good: 1.0,
            h_bad: 0.0,
        }
    }

    /// i.i.d. loss at `rate` written as an equivalent chain.
    pub fn from_uniform(rate: f64) -> Self {
        GeParams {
            p: rate,
            r: 1.0 - rate,
            k_good: 1.0,
            h_bad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NetemError> {
        check_prob("p", self.p)?;
        check_prob("r", self.r)?;
        check_prob("k", self.k_good)?;
        check_prob("h", self.h_bad)
    }

    /// Stationary share of time in Bad.
    pub fn stationary_bad(&self) -> f64 {
        if self.p + self.r == 0.0 {
            0.0
        } else {
            self.p / (self.p + self.r)
        }
    }

    /// Long-run loss rate.
    pub fn stationary_loss(&self) -> f64 {
        let pb = self.stationary_bad();
        (1.0 - pb) * (1.0 - self.k_good) + pb * (1.0 - self.h_bad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GeState {
    #[default]
    Good,
    Bad,
}

/// Deliver using the current state, then transition. Always consumes two
/// draws so the stream stays aligned with the packet index.
pub fn ge_step<R: Rng + ?Sized>(state: GeState, params: &GeParams, rng: &mut R) -> (bool, GeState) {
    let u_deliver: f64 = rng.gen();
    let u_move: f64 = rng.gen();
    let delivered = match state {
        GeState::Good => u_deliver < params.k_good,
        GeState::Bad => u_deliver < params.h_bad,
    };
    let next = match state {
        GeState::Good if u_move < params.p => GeState::Bad,
        GeState::Bad if u_move < params.r => GeState::Good,
        s => s,
    };
    (delivered, next)
}

pub fn uniform_step<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() >= rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    #[default]
    None,
    Uniform {
        rate: f64,
    },
    GilbertElliott(GeParams),
}

impl LossModel {
    pub fn validate(&self) -> Result<(), NetemError> {
        match self {
            LossModel::None => Ok(()),
            LossModel::Uniform { rate } => check_prob("rate", *rate),
            LossModel::GilbertElliott(g) => g.validate(),
        }
    }

    /// Parameters as a chain, for reporting.
    pub fn as_ge(&self) -> GeParams {
        match *self {
            LossModel::None => GeParams::simplified(0.0, 1.0),
            LossModel::Uniform { rate } => GeParams::from_uniform(rate),
            LossModel::GilbertElliott(g) => g,
        }
    }

    pub fn stationary_loss(&self) -> f64 {
        match *self {
            LossModel::None => 0.0,
            LossModel::Uniform { rate } => rate,
            LossModel::GilbertElliott(g) => g.stationary_loss(),
        }
    }
}

/// Whether a packet drives the loss process or only samples it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketClass {
    Data,
    Other,
}

/// Independent generator for stream `stream` of a master seed.
pub fn rng_stream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// One direction of one path.
#[derive(Debug, Clone)]
pub struct Link {
    owd_us: u64,
    model: LossModel,
    state: GeState,
    primary: ChaCha8Rng,
    aux: ChaCha8Rng,
    last_arrival: u64,
    sent: u64,
    dropped: u64,
}

impl Link {
    /// `stream_id` selects this link's random streams under `master_seed`.
    pub fn new(owd_us: u64, model: LossModel, master_seed: u64, stream_id: u64) -> Self {
        Link {
            owd_us,
            model,
            state: GeState::Good,
            primary: rng_stream(master_seed, 2 * stream_id),
            aux: rng_stream(master_seed, 2 * stream_id + 1),
            last_arrival: 0,
            sent: 0,
            dropped: 0,
        }
    }

    pub fn lossless(owd_us: u64) -> Self {
        Link::new(owd_us, LossModel::None, 0, 0)
    }

    pub fn owd_us(&self) -> u64 {
        self.owd_us
    }

    pub fn state(&self) -> GeState {
        self.state
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.sent, self.dropped)
    }

    fn delivered(&mut self, class: PacketClass) -> bool {
        match (self.model, class) {
            (LossModel::None, _) => true,
            (LossModel::Uniform { rate }, PacketClass::Data) => {
                uniform_step(rate, &mut self.primary)
            }
            (LossModel::Uniform { rate }, PacketClass::Other) => uniform_step(rate, &mut self.aux),
            (LossModel::GilbertElliott(g), PacketClass::Data) => {
                let (ok, next) = ge_step(self.state, &g, &mut self.primary);
                self.state = next;
                ok
            }
            (LossModel::GilbertElliott(g), PacketClass::Other) => {
                let u: f64 = self.aux.gen();
                match self.state {
                    GeState::Good => u < g.k_good,
                    GeState::Bad => u < g.h_bad,
                }
            }
        }
    }

    /// Arrival time, or `None` if dropped. Arrivals never overtake.
    pub fn send(&mut self, now: u64, class: PacketClass) -> Option<u64> {
        self.sent += 1;
        if !self.delivered(class) {
            self.dropped += 1;
            return None;
        }
        let at = (now + self.owd_us).max(self.last_arrival);
        self.last_arrival = at;
        Some(at)
    }
}

/// Time-ordered queue; equal timestamps pop in insertion order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<(u64, u64, Slot<E>)>>,
    seq: u64,
    now: u64,
}

/// Wrapper that keeps the payload out of the ordering.
#[derive(Debug)]
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl<E> Eq for Slot<E> {}
impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedule at `time`; times in the past are clamped to now.
    pub fn push(&mut self, time: u64, event: E) {
        let t = time.max(self.now);
        self.heap.push(Reverse((t, self.seq, Slot(event))));
        self.seq += 1;
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse((t, _, _))| *t)
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        let Reverse((t, _, Slot(e))) = self.heap.pop()?;
        self.now = t;
        Some((t, e))
    }

    /// Process events up to and including `t_end`. The handler may push
    /// more events and may stop the run by returning an error.
    pub fn run_until<Err>(
        &mut self,
        t_end: u64,
        mut handler: impl FnMut(&mut Self, u64, E) -> Result<(), Err>,
    ) -> Result<(), Err> {
        while self.peek_time().is_some_and(|t| t <= t_end) {
            let (t, e) = self.pop().unwrap();
            handler(self, t, e)?;
        }
        Ok(())
    }
}

/// Forward links, one per path, and lossless reverse links with the same
/// delays.
#[derive(Debug, Clone)]
pub struct Topology {
    pub forward: Vec<Link>,
    pub reverse: Vec<Link>,
}

/// Delay and loss of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub owd_ms: f64,
    pub loss: LossModel,
}

impl Topology {
    pub fn new(paths: &[PathSpec], master_seed: u64) -> Result<Self, NetemError> {
        let mut forward = Vec::with_capacity(paths.len());
        let mut reverse = Vec::with_capacity(paths.len());
        for (i, p) in paths.iter().enumerate() {
            if !(p.owd_ms.is_finite() && p.owd_ms >= 0.0) {
                return Err(NetemError::Delay(p.owd_ms));
            }
            p.loss.validate()?;
            let owd = (p.owd_ms * 1000.0).round() as u64;
            forward.push(Link::new(owd, p.loss, master_seed, i as u64));
            reverse.push(Link::lossless(owd));
        }
        Ok(Topology { forward, reverse })
    }

    pub fn single_path(owd_ms: f64, loss: LossModel, master_seed: u64) -> Result<Self, NetemError> {
        Topology::new(&[PathSpec { owd_ms, loss }], master_seed)
    }

    pub fn paths(&self) -> usize {
        self.forward.len()
    }
}

/// Line-oriented event log: `time_us,event,path,pn,dropped`.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    text: String,
    lines: usize,
}

impl Trace {
    pub const HEADER: &'static str = "time_us,event,path,pn,dropped";

    pub fn record(&mut self, time_us: u64, event: &str, path: usize, pn: u64, dropped: bool) {
        let _ = writeln!(self.text, "{time_us},{event},{path},{pn},{}", dropped as u8);
        self.lines += 1;
    }

    pub fn len(&self) -> usize {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::HEADER, self.text)
    }

    /// FNV-1a over the log text; stable across platforms.
    pub fn digest(&self) -> u64 {
        self.text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}
