//! (k+1, k) XOR parity with interleaving.
//!
//! Symbol `seq` belongs to interleave group `seq / (D*k)`; inside the group
//! the offset `seq mod (D*k)` picks lane `offset mod D` and position
//! `offset / D` within that lane's block. A burst of up to D consecutive
//! losses therefore hits each lane at most once.

use std::collections::{BTreeMap, HashMap};

use super::{
    check_lengths, CodecError, Recovered, RepairMeta, RepairSymbol, SchemeDecoder, SchemeEncoder,
    SchemeId,
};

/// Byte-wise XOR of every payload in `block`.
pub fn xor_encode(block: &[&[u8]]) -> Result<Vec<u8>, CodecError> {
    let len = check_lengths(block)?;
    let mut out = vec![0u8; len];
    for s in block {
        xor_into(&mut out, s);
    }
    Ok(out)
}

/// Rebuild the single missing source of a block from the repair.
///
/// `received` holds the k source slots, `None` where lost. Returns the
/// missing position and payload, or `None` when nothing is missing.
pub fn xor_recover(
    received: &[Option<&[u8]>],
    repair: &[u8],
) -> Result<Option<(usize, Vec<u8>)>, CodecError> {
    if received.is_empty() {
        return Err(CodecError::EmptyBlock);
    }
    let missing: Vec<usize> = (0..received.len())
        .filter(|&i| received[i].is_none())
        .collect();
    match missing.len() {
        0 => Ok(None),
        1 => {
            let mut out = repair.to_vec();
            for s in received.iter().flatten() {
                if s.len() != out.len() {
                    return Err(CodecError::LengthMismatch {
                        expected: out.len(),
                        found: s.len(),
                    });
                }
                xor_into(&mut out, s);
            }
            Ok(Some((missing[0], out)))
        }
        _ => Err(CodecError::Unrecoverable { missing }),
    }
}

/// (lane, position within the lane) of symbol `seq` at depth `depth`.
pub fn interleave_block_index(seq: u32, depth: u32) -> (u32, u32) {
    let d = depth.max(1);
    (seq % d, seq / d)
}

fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= *s;
    }
}

pub struct XorEncoder {
    k: u16,
    depth: u16,
    symbol_size: usize,
    next_seq: u32,
    lanes: Vec<Vec<u8>>,
}

impl XorEncoder {
    pub fn new(k: u16, depth: u16, symbol_size: usize) -> Self {
        XorEncoder {
            k,
            depth,
            symbol_size,
            next_seq: 0,
            lanes: vec![vec![0u8; symbol_size]; depth as usize],
        }
    }

    fn group_len(&self) -> u32 {
        self.k as u32 * self.depth as u32
    }
}

impl SchemeEncoder for XorEncoder {
    fn scheme(&self) -> SchemeId {
        SchemeId::XorInterleaved
    }

    fn next_source_id(&self) -> u32 {
        let g = self.group_len();
        ((self.next_seq / g) << 8) | (self.next_seq % g)
    }

    fn push_source(&mut self, payload: &[u8]) -> Vec<RepairSymbol> {
        assert!(
            payload.len() <= self.symbol_size,
            "source symbol larger than E"
        );
        let g = self.group_len();
        let group = self.next_seq / g;
        let offset = self.next_seq % g;
        self.next_seq += 1;
        let (lane, pos) = interleave_block_index(offset, self.depth as u32);
        let acc = &mut self.lanes[lane as usize];
        xor_into(acc, payload);
        if pos + 1 < self.k as u32 {
            return Vec::new();
        }
        let payload = std::mem::replace(acc, vec![0u8; self.symbol_size]);
        vec![RepairSymbol {
            meta: RepairMeta::Block {
                block_id: group,
                index: lane as u8,
                k: self.k,
                n_minus_k: 1,
                depth: self.depth as u8,
            },
            payload,
        }]
    }
}

#[derive(Default)]
struct Group {
    sources: HashMap<u32, Vec<u8>>,
    /// lane -> (k, depth, repair payload); removed once the lane is settled.
    repairs: HashMap<u32, (u32, u32, Vec<u8>)>,
}

/// Receiver for interleaved XOR. Lane geometry is taken from repair ids,
/// so sources can arrive before any repair.
pub struct XorDecoder {
    groups: BTreeMap<u32, Group>,
    keep_groups: u32,
}

impl XorDecoder {
    pub fn new() -> Self {
        XorDecoder {
            groups: BTreeMap::new(),
            keep_groups: 64,
        }
    }

    fn prune(&mut self, newest: u32) {
        let cutoff = newest.saturating_sub(self.keep_groups);
        while let Some((&g, _)) = self.groups.first_key_value() {
            if g >= cutoff {
                break;
            }
            self.groups.remove(&g);
        }
    }

    fn try_lane(group_id: u32, group: &mut Group, lane: u32) -> Option<Recovered> {
        let (k, depth, repair) = group.repairs.get(&lane)?;
        let (k, depth) = (*k, *depth);
        let offsets: Vec<u32> = (0..k).map(|j| lane + j * depth).collect();
        let slots: Vec<Option<&[u8]>> = offsets
            .iter()
            .map(|o| group.sources.get(o).map(Vec::as_slice))
            .collect();
        match xor_recover(&slots, repair) {
            Ok(Some((pos, payload))) => {
                let off = offsets[pos];
                group.repairs.remove(&lane);
                group.sources.insert(off, payload.clone());
                Some(((group_id << 8) | off, payload))
            }
            Ok(None) => {
                group.repairs.remove(&lane);
                None
            }
            Err(_) => None,
        }
    }
}

impl Default for XorDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl SchemeDecoder for XorDecoder {
    fn scheme(&self) -> SchemeId {
        SchemeId::XorInterleaved
    }

    fn on_source(&mut self, id: u32, payload: &[u8]) -> Vec<Recovered> {
        let (group_id, offset) = (id >> 8, id & 0xFF);
        if let Some((&newest, _)) = self.groups.last_key_value() {
            if group_id + self.keep_groups < newest {
                return Vec::new();
            }
        }
        let group = self.groups.entry(group_id).or_default();
        if group.sources.contains_key(&offset) {
            return Vec::new();
        }
        group.sources.insert(offset, payload.to_vec());
        let lanes: Vec<u32> = group
            .repairs
            .iter()
            .filter(|(lane, (_, depth, _))| offset % depth == **lane)
            .map(|(lane, _)| *lane)
            .collect();
        let out = lanes
            .into_iter()
            .filter_map(|lane| Self::try_lane(group_id, group, lane))
            .collect();
        self.prune(group_id);
        out
    }

    fn on_repair(&mut self, meta: &RepairMeta, payload: &[u8]) -> Vec<Recovered> {
        let RepairMeta::Block {
            block_id,
            index,
            k,
            depth,
            ..
        } = *meta
        else {
            return Vec::new();
        };
        if let Some((&newest, _)) = self.groups.last_key_value() {
            if block_id + self.keep_groups < newest {
                return Vec::new();
            }
        }
        let group = self.groups.entry(block_id).or_default();
        let lane = index as u32;
        if group.repairs.contains_key(&lane) {
            return Vec::new();
        }
        group
            .repairs
            .insert(lane, (k as u32, depth.max(1) as u32, payload.to_vec()));
        let out = Self::try_lane(block_id, group, lane).into_iter().collect();
        self.prune(block_id);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let a = [0x0Fu8; 8];
        let b = [0xF0u8; 8];
        assert_eq!(xor_encode(&[&a, &b]).unwrap(), vec![0xFF; 8]);
        assert_eq!(xor_encode(&[&a]).unwrap(), a.to_vec());
        assert_eq!(xor_encode(&[&a, &b, &a]).unwrap(), b.to_vec());
        assert_eq!(xor_encode(&[]), Err(CodecError::EmptyBlock));
        assert!(matches!(
            xor_encode(&[&a, &b[..4]]),
            Err(CodecError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn recover_examples() {
        let b = [0xF0u8; 4];
        let r = [0xFFu8; 4];
        assert_eq!(
            xor_recover(&[None, Some(&b)], &r).unwrap(),
            Some((0, vec![0x0F; 4]))
        );
        assert_eq!(xor_recover(&[Some(&b), Some(&b)], &r).unwrap(), None);
        assert_eq!(
            xor_recover(&[None, None, Some(&b)], &r),
            Err(CodecError::Unrecoverable {
                missing: vec![0, 1]
            })
        );
    }

    #[test]
    fn interleave_examples() {
        assert_eq!(interleave_block_index(23, 10), (3, 2));
        assert_eq!(interleave_block_index(0, 1), (0, 0));
        let lanes: std::collections::HashSet<u32> =
            (40..50).map(|s| interleave_block_index(s, 10).0).collect();
        assert_eq!(lanes.len(), 10);
    }

    fn stream(n: usize, e: usize) -> Vec<Vec<u8>> {
        (0..n)
            .map(|i| (0..e).map(|j| (i * 31 + j * 7 + 1) as u8).collect())
            .collect()
    }

    fn run(
        k: u16,
        depth: u16,
        data: &[Vec<u8>],
        lost: &dyn Fn(usize) -> bool,
    ) -> HashMap<u32, Vec<u8>> {
        let mut enc = XorEncoder::new(k, depth, data[0].len());
        let mut dec = XorDecoder::new();
        let mut got = HashMap::new();
        for (i, s) in data.iter().enumerate() {
            let id = enc.next_source_id();
            let repairs = enc.push_source(s);
            if !lost(i) {
                got.insert(id, s.clone());
                for (rid, p) in dec.on_source(id, s) {
                    got.insert(rid, p);
                }
            }
            for r in repairs {
                for (rid, p) in dec.on_repair(&r.meta, &r.payload) {
                    assert!(got.insert(rid, p).is_none(), "recovered twice");
                }
            }
        }
        got
    }

    #[test]
    fn every_burst_up_to_depth_is_recovered() {
        // (3,2) blocks at depth 10: one interleave group is 20 symbols.
        let data = stream(60, 16);
        for start in 0..40 {
            for len in 1..=10 {
                let got = run(2, 10, &data, &|i| i >= start && i < start + len);
                assert_eq!(got.len(), 60, "start {start} len {len}");
            }
        }
    }

    #[test]
    fn recovered_bytes_match() {
        let data = stream(40, 9);
        let mut enc = XorEncoder::new(2, 10, 9);
        let ids: Vec<u32> = data
            .iter()
            .map(|s| {
                let id = enc.next_source_id();
                enc.push_source(s);
                id
            })
            .collect();
        let got = run(2, 10, &data, &|i| (12..20).contains(&i));
        for (i, id) in ids.iter().enumerate() {
            assert_eq!(got[id], data[i]);
        }
    }

    #[test]
    fn burst_longer_than_depth_loses_data() {
        let data = stream(20, 4);
        let got = run(2, 10, &data, &|i| i < 11);
        assert!(got.len() < 20);
    }

    #[test]
    fn source_ids_increase() {
        let mut enc = XorEncoder::new(2, 10, 1);
        let mut last = None;
        for _ in 0..100 {
            let id = enc.next_source_id();
            if let Some(l) = last {
                assert!(id > l);
            }
            last = Some(id);
            enc.push_source(&[0]);
        }
    }
}
