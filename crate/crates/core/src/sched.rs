//! Path schedulers and the per-path loss-based window they read.
//!
//! HighRB picks a path at random with weight proportional to the room left
//! in its congestion window, RB(p) = Cwin(p) - BytesInFlight(p), and falls
//! back to a uniform pick when no path has room.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::BlockCodeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[default]
    SinglePath,
    RoundRobin,
    HighRb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub path_id: usize,
    pub mss: u64,
    pub cwin: u64,
    pub bytes_in_flight: u64,
    /// Time of the last window reduction.
    pub last_reduction_us: Option<u64>,
}

impl PathState {
    pub fn new(path_id: usize, mss: u64, initial_packets: u64) -> Self {
        PathState {
            path_id,
            mss,
            cwin: mss * initial_packets.max(1),
            bytes_in_flight: 0,
            last_reduction_us: None,
        }
    }
}

/// Remaining window, clamped at zero.
pub fn rb(path: &PathState) -> u64 {
    path.cwin.saturating_sub(path.bytes_in_flight)
}

pub fn highrb_weights(paths: &[PathState]) -> Vec<f64> {
    let total: u64 = paths.iter().map(rb).sum();
    if total == 0 {
        vec![1.0 / paths.len() as f64; paths.len()]
    } else {
        paths.iter().map(|p| rb(p) as f64 / total as f64).collect()
    }
}

/// Index into `paths` of the chosen path.
pub fn highrb_pick<R: Rng + ?Sized>(paths: &[PathState], rng: &mut R) -> usize {
    assert!(!paths.is_empty(), "no path to pick from");
    let total: u64 = paths.iter().map(rb).sum();
    if total == 0 {
        return rng.gen_range(0..paths.len());
    }
    let mut x = rng.gen_range(0..total);
    for (i, p) in paths.iter().enumerate() {
        let w = rb(p);
        if x < w {
            return i;
        }
        x -= w;
    }
    unreachable!("draw below total weight")
}

#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn pick(&mut self, n_paths: usize) -> usize {
        assert!(n_paths > 0, "no path to pick from");
        let p = self.next % n_paths;
        self.next = (p + 1) % n_paths;
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwndEvent {
    Ack { bytes: u64 },
    Loss,
}

/// Additive increase of about one packet per window, halving on loss at
/// most once per `srtt_us`, never below two packets.
pub fn cwnd_on_event(path: &mut PathState, event: CwndEvent, now: u64, srtt_us: u64) {
    match event {
        CwndEvent::Ack { bytes } => {
            let inc = (path.mss * bytes / path.cwin.max(1)).max(1);
            path.cwin += inc;
        }
        CwndEvent::Loss => {
            let recent = path
                .last_reduction_us
                .is_some_and(|t| now.saturating_sub(t) < srtt_us);
            if !recent {
                path.cwin = (path.cwin / 2).max(2 * path.mss);
                path.last_reduction_us = Some(now);
            }
        }
    }
}

/// Per-connection scheduler state.
#[derive(Debug, Clone)]
pub struct Scheduler {
    kind: SchedulerKind,
    paths: Vec<PathState>,
    rr: RoundRobin,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, n_paths: usize, mss: u64, initial_packets: u64) -> Self {
        Scheduler {
            kind,
            paths: (0..n_paths)
                .map(|i| PathState::new(i, mss, initial_packets))
                .collect(),
            rr: RoundRobin::default(),
        }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn paths(&self) -> &[PathState] {
        &self.paths
    }

    /// Path for the next packet of `bytes` bytes; accounts it as in flight.
    pub fn pick<R: Rng + ?Sized>(&mut self, bytes: usize, rng: &mut R) -> usize {
        let p = match self.kind {
            SchedulerKind::SinglePath => 0,
            SchedulerKind::RoundRobin => self.rr.pick(self.paths.len()),
            SchedulerKind::HighRb => highrb_pick(&self.paths, rng),
        };
        self.paths[p].bytes_in_flight += bytes as u64;
        p
    }

    pub fn on_acked(&mut self, path: usize, bytes: usize, now: u64, srtt_us: u64) {
        let ps = &mut self.paths[path];
        ps.bytes_in_flight = ps.bytes_in_flight.saturating_sub(bytes as u64);
        cwnd_on_event(
            ps,
            CwndEvent::Ack {
                bytes: bytes as u64,
            },
            now,
            srtt_us,
        );
    }

    pub fn on_lost(&mut self, path: usize, bytes: usize, now: u64, srtt_us: u64) {
        let ps = &mut self.paths[path];
        ps.bytes_in_flight = ps.bytes_in_flight.saturating_sub(bytes as u64);
        cwnd_on_event(ps, CwndEvent::Loss, now, srtt_us);
    }
}

/// Share of burst start positions a block code survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstEnumeration {
    pub recoverable: usize,
    pub starts: usize,
}

impl BurstEnumeration {
    pub fn fraction(&self) -> f64 {
        self.recoverable as f64 / self.starts as f64
    }
}

/// Blocks are laid out as k sources then n - k repairs, symbols go to
/// paths in round-robin order, and a burst of `burst_len` consecutive
/// packets hits path 0. Every start position over one cyclic schedule
/// period is tried; the period is the smallest multiple of lcm(n, paths)
/// spanning at least four blocks.
pub fn burst_recovery_enumeration(
    block: BlockCodeParams,
    burst_len: usize,
    n_paths: usize,
) -> BurstEnumeration {
    let n = block.n as usize;
    let tolerate = block.repair_count();
    let paths = n_paths.max(1);
    let base = lcm(n, paths);
    let period = base * (4 * n).div_ceil(base);
    let on_path0: Vec<usize> = (0..period).filter(|s| s % paths == 0).collect();
    let starts = on_path0.len();
    let burst = burst_len.min(starts);
    let recoverable = (0..starts)
        .filter(|&start| {
            let mut lost = vec![0usize; period / n];
            for i in 0..burst {
                lost[on_path0[(start + i) % starts] / n] += 1;
            }
            lost.iter().all(|&l| l <= tolerate)
        })
        .count();
    BurstEnumeration {
        recoverable,
        starts,
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netem::rng_stream;

    fn path(cwin: u64, inflight: u64) -> PathState {
        PathState {
            path_id: 0,
            mss: 1000,
            cwin,
            bytes_in_flight: inflight,
            last_reduction_us: None,
        }
    }

    #[test]
    fn rb_examples() {
        assert_eq!(rb(&path(10_000, 4000)), 6000);
        assert_eq!(rb(&path(10_000, 10_000)), 0);
        assert_eq!(rb(&path(10_000, 12_000)), 0);
    }

    fn frequencies(paths: &[PathState], draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_stream(seed, 0);
        let mut counts = vec![0usize; paths.len()];
        for _ in 0..draws {
            counts[highrb_pick(paths, &mut rng)] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn highrb_weighted() {
        let paths = [path(100, 0), path(300, 0)];
        assert_eq!(highrb_weights(&paths), vec![0.25, 0.75]);
        let f = frequencies(&paths, 100_000, 1);
        assert!((f[1] - 0.75).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn highrb_uniform_when_no_room() {
        let paths = [path(100, 100), path(300, 400)];
        assert_eq!(highrb_weights(&paths), vec![0.5, 0.5]);
        let f = frequencies(&paths, 100_000, 2);
        assert!((f[0] - 0.5).abs() < 0.01, "{f:?}");
        assert!((0..100).all(|_| highrb_pick(&[path(0, 0)], &mut rng_stream(0, 0)) == 0));
    }

    #[test]
    fn scaling_leaves_weights_unchanged() {
        let a = [path(500, 100), path(900, 0), path(50, 0)];
        let b = [path(1500, 300), path(2700, 0), path(150, 0)];
        let (wa, wb) = (highrb_weights(&a), highrb_weights(&b));
        for (x, y) in wa.iter().zip(&wb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn round_robin_alternates() {
        let mut rr = RoundRobin::default();
        let seq: Vec<usize> = (0..4).map(|_| rr.pick(2)).collect();
        assert_eq!(seq, vec![0, 1, 0, 1]);
        assert!((0..5).all(|_| rr.pick(1) == 0));
    }

    #[test]
    fn cwnd_rules() {
        let mut p = PathState::new(0, 1000, 10);
        for i in 0..10 {
            cwnd_on_event(&mut p, CwndEvent::Loss, i * 1_000_000, 100_000);
        }
        assert_eq!(p.cwin, 2000);
        let mut q = PathState::new(0, 1000, 1);
        cwnd_on_event(&mut q, CwndEvent::Ack { bytes: 1000 }, 0, 100_000);
        assert_eq!(q.cwin, 2000);
        // a second loss within one RTT does not halve again
        let mut r = PathState::new(0, 1000, 16);
        cwnd_on_event(&mut r, CwndEvent::Loss, 0, 100_000);
        cwnd_on_event(&mut r, CwndEvent::Loss, 50_000, 100_000);
        assert_eq!(r.cwin, 8000);
    }

    #[test]
    fn burst_enumeration_examples() {
        let b = BlockCodeParams::new(3, 2).unwrap();
        let single = burst_recovery_enumeration(b, 2, 1);
        assert_eq!((single.recoverable, single.starts), (4, 12));
        let multi = burst_recovery_enumeration(b, 2, 2);
        assert_eq!((multi.recoverable, multi.starts), (4, 6));
        assert_eq!(burst_recovery_enumeration(b, 0, 1).fraction(), 1.0);
        // three consecutive losses
        assert_eq!(burst_recovery_enumeration(b, 3, 1).recoverable, 0);
        assert_eq!(burst_recovery_enumeration(b, 3, 2).recoverable, 2);
    }
}
