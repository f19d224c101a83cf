//! Sliding-window random linear code.
//!
//! Every k source symbols the encoder emits n - k random linear
//! combinations of the last min(L, available) symbols. Coefficients are
//! regenerated at the receiver from a 16-bit seed and the density byte.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::gf256::{mul_add_slice, solve_linear_system, Matrix};

use super::{
    ConvCodeParams, ParkMiller, Recovered, RepairMeta, RepairSymbol, SchemeDecoder, SchemeEncoder,
    SchemeId, SchemeSpecificValue,
};

/// Live unknowns are kept for this many window lengths.
pub const RLC_HORIZON_FACTOR: u32 = 4;

/// Coefficients of one repair equation, one per window slot.
///
/// Two draws per slot: `d` decides whether the slot is used
/// (`d mod 256 <= threshold`), `v` gives the value `1 + v mod 255`.
pub fn rlc_coefficients(ssv: &SchemeSpecificValue, window_size: usize) -> Vec<u8> {
    let mut prng = ParkMiller::from_seed16(ssv.seed);
    (0..window_size)
        .map(|_| {
            let d = prng.next_u31();
            let v = prng.next_u31();
            if (d % 256) as u8 > ssv.density_threshold_byte {
                0
            } else {
                1 + (v % 255) as u8
            }
        })
        .collect()
}

/// Seeds for `count` repairs starting at `base`; zero is skipped.
pub(crate) fn repair_seeds(base: u16, count: usize) -> (Vec<u16>, u16) {
    let mut s = base;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if s == 0 {
            s = 1;
        }
        out.push(s);
        s = s.wrapping_add(1);
    }
    (out, s)
}

/// Σ c_j * window_j.
pub fn rlc_encode_with_coefficients(window: &[&[u8]], coeffs: &[u8]) -> Vec<u8> {
    let len = window.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut out = vec![0u8; len];
    for (s, &c) in window.iter().zip(coeffs) {
        mul_add_slice(&mut out[..s.len()], s, c);
    }
    out
}

/// The n - k repairs over `window`, repair i seeded with `ssv.seed + i`
/// (skipping zero). Returns each repair's own scheme-specific value.
pub fn rlc_encode(
    window: &[&[u8]],
    params: &ConvCodeParams,
    ssv: SchemeSpecificValue,
) -> Vec<(SchemeSpecificValue, Vec<u8>)> {
    let (seeds, _) = repair_seeds(ssv.seed, (params.n - params.k) as usize);
    seeds
        .into_iter()
        .map(|seed| {
            let ssv = SchemeSpecificValue { seed, ..ssv };
            let c = rlc_coefficients(&ssv, window.len());
            (ssv, rlc_encode_with_coefficients(window, &c))
        })
        .collect()
}

pub struct RlcEncoder {
    params: ConvCodeParams,
    symbol_size: usize,
    window: VecDeque<Vec<u8>>,
    next_id: u32,
    since_repair: u16,
    next_seed: u16,
}

impl RlcEncoder {
    pub fn new(params: ConvCodeParams, symbol_size: usize) -> Self {
        RlcEncoder {
            params,
            symbol_size,
            window: VecDeque::with_capacity(params.window as usize),
            next_id: 0,
            since_repair: 0,
            next_seed: 1,
        }
    }
}

impl SchemeEncoder for RlcEncoder {
    fn scheme(&self) -> SchemeId {
        SchemeId::Rlc
    }

    fn next_source_id(&self) -> u32 {
        self.next_id
    }

    fn push_source(&mut self, payload: &[u8]) -> Vec<RepairSymbol> {
        assert!(
            payload.len() <= self.symbol_size,
            "source symbol larger than E"
        );
        let mut sym = payload.to_vec();
        sym.resize(self.symbol_size, 0);
        if self.window.len() == self.params.window as usize {
            self.window.pop_front();
        }
        self.window.push_back(sym);
        self.next_id += 1;
        self.since_repair += 1;
        if self.since_repair < self.params.k {
            return Vec::new();
        }
        self.since_repair = 0;
        let refs: Vec<&[u8]> = self.window.iter().map(Vec::as_slice).collect();
        let ssv = SchemeSpecificValue {
            seed: self.next_seed,
            density_threshold_byte: self.params.density_threshold_byte(),
            window_first_id: self.next_id - refs.len() as u32,
            window_size: refs.len() as u8,
        };
        let repairs = rlc_encode(&refs, &self.params, ssv);
        let (_, next) = repair_seeds(self.next_seed, repairs.len());
        self.next_seed = next;
        repairs
            .into_iter()
            .enumerate()
            .map(|(i, (ssv, payload))| RepairSymbol {
                meta: RepairMeta::Window {
                    ssv,
                    index: i as u8,
                },
                payload,
            })
            .collect()
    }
}

struct Equation {
    /// nonzero coefficients over still-unknown ids
    coefs: BTreeMap<u32, u8>,
    rhs: Vec<u8>,
}

/// Receiver: a set of linear equations over unknown source ids.
///
/// Gaussian elimination runs only on a square subsystem: a run of
/// consecutive unknowns covered by at least as many equations that mention
/// nothing outside the run, with full rank.
pub struct RlcDecoder {
    known: BTreeMap<u32, Vec<u8>>,
    equations: Vec<Equation>,
    seen_repairs: HashSet<(u32, u16)>,
    max_id: Option<u32>,
    window: u32,
}

impl RlcDecoder {
    pub fn new() -> Self {
        RlcDecoder {
            known: BTreeMap::new(),
            equations: Vec::new(),
            seen_repairs: HashSet::new(),
            max_id: None,
            window: 1,
        }
    }

    /// Ids currently referenced by pending equations.
    pub fn pending_unknowns(&self) -> BTreeSet<u32> {
        self.equations
            .iter()
            .flat_map(|e| e.coefs.keys().copied())
            .collect()
    }

    pub fn pending_equations(&self) -> usize {
        self.equations.len()
    }

    fn cutoff(&self) -> u32 {
        self.max_id
            .unwrap_or(0)
            .saturating_sub(RLC_HORIZON_FACTOR * self.window)
    }

    fn advance(&mut self, id: u32) {
        if self.max_id.is_some_and(|m| m >= id) {
            return;
        }
        self.max_id = Some(id);
        let cutoff = self.cutoff();
        self.known = self.known.split_off(&cutoff);
        self.equations
            .retain(|e| e.coefs.keys().next().is_some_and(|&first| first >= cutoff));
        if self.seen_repairs.len() > 4096 {
            self.seen_repairs.retain(|&(first, _)| first >= cutoff);
        }
    }

    fn substitute(&mut self, id: u32, payload: &[u8]) {
        for e in &mut self.equations {
            if let Some(c) = e.coefs.remove(&id) {
                let n = payload.len().min(e.rhs.len());
                mul_add_slice(&mut e.rhs[..n], &payload[..n], c);
            }
        }
        self.equations.retain(|e| !e.coefs.is_empty());
    }

    /// Solve every square subsystem that can be found; repeat until none.
    fn decode(&mut self) -> Vec<Recovered> {
        let mut out = Vec::new();
        while let Some(solved) = self.find_and_solve() {
            for (id, payload) in solved {
                self.substitute(id, &payload);
                self.known.insert(id, payload.clone());
                out.push((id, payload));
            }
        }
        out
    }

    fn find_and_solve(&self) -> Option<Vec<Recovered>> {
        let unknowns: Vec<u32> = self.pending_unknowns().into_iter().collect();
        if unknowns.is_empty() {
            return None;
        }
        let pos = |id: &u32| unknowns.binary_search(id).unwrap();
        // (first, last) unknown index of every equation
        let spans: Vec<(usize, usize)> = self
            .equations
            .iter()
            .map(|e| {
                (
                    pos(e.coefs.keys().next().unwrap()),
                    pos(e.coefs.keys().next_back().unwrap()),
                )
            })
            .collect();
        let starts: BTreeSet<usize> = spans.iter().map(|s| s.0).collect();
        for &a in &starts {
            let mut inside: Vec<(usize, usize)> = spans
                .iter()
                .enumerate()
                .filter(|(_, s)| s.0 >= a)
                .map(|(i, s)| (s.1, i))
                .collect();
            inside.sort_unstable();
            let mut taken = 0;
            while taken < inside.len() {
                let b = inside[taken].0;
                while taken < inside.len() && inside[taken].0 == b {
                    taken += 1;
                }
                let width = b - a + 1;
                if taken < width {
                    continue;
                }
                let rows: Vec<usize> = inside[..taken].iter().map(|&(_, i)| i).collect();
                let cols = &unknowns[a..=b];
                let mut m = Matrix::zeros(rows.len(), width);
                for (r, &ei) in rows.iter().enumerate() {
                    for (&id, &c) in &self.equations[ei].coefs {
                        m.set(r, pos(&id) - a, c);
                    }
                }
                if m.rank() < width {
                    continue;
                }
                let rhs: Vec<Vec<u8>> = rows
                    .iter()
                    .map(|&i| self.equations[i].rhs.clone())
                    .collect();
                let sol = solve_linear_system(&m, &rhs).ok()?;
                return Some(cols.iter().copied().zip(sol).collect());
            }
        }
        None
    }
}

impl Default for RlcDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl SchemeDecoder for RlcDecoder {
    fn scheme(&self) -> SchemeId {
        SchemeId::Rlc
    }

    fn on_source(&mut self, id: u32, payload: &[u8]) -> Vec<Recovered> {
        if id < self.cutoff() || self.known.contains_key(&id) {
            return Vec::new();
        }
        self.advance(id);
        self.known.insert(id, payload.to_vec());
        let touched = self.equations.iter().any(|e| e.coefs.contains_key(&id));
        if !touched {
            return Vec::new();
        }
        self.substitute(id, payload);
        self.decode()
    }

    fn on_repair(&mut self, meta: &RepairMeta, payload: &[u8]) -> Vec<Recovered> {
        let RepairMeta::Window { ssv, .. } = *meta else {
            return Vec::new();
        };
        let size = ssv.window_size as u32;
        if size == 0 || !self.seen_repairs.insert((ssv.window_first_id, ssv.seed)) {
            return Vec::new();
        }
        self.window = self.window.max(size);
        let last = ssv.window_first_id + size - 1;
        self.advance(last);
        if ssv.window_first_id < self.cutoff() {
            return Vec::new();
        }
        let coeffs = rlc_coefficients(&ssv, size as usize);
        let mut eq = Equation {
            coefs: BTreeMap::new(),
            rhs: payload.to_vec(),
        };
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let id = ssv.window_first_id + j as u32;
            match self.known.get(&id) {
                Some(s) => {
                    let n = s.len().min(eq.rhs.len());
                    mul_add_slice(&mut eq.rhs[..n], &s[..n], c);
                }
                None => {
                    eq.coefs.insert(id, c);
                }
            }
        }
        if eq.coefs.is_empty() {
            return Vec::new();
        }
        self.equations.push(eq);
        self.decode()
    }
}
