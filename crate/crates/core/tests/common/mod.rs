#![allow(dead_code)]

use quicfec_core::fecframe::{FecFrame, RepairFecPayloadId};
use quicfec_core::transport::wire::{AckFrame, Frame, Packet, PnLen, PublicHeader, StreamFrame};
use rand::Rng;

pub fn random_bytes<R: Rng>(rng: &mut R, max: usize) -> Vec<u8> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen()).collect()
}

pub fn random_frame<R: Rng>(rng: &mut R) -> Frame {
    match rng.gen_range(0..5) {
        0 => Frame::Padding,
        1 => Frame::Stream(StreamFrame {
            stream_id: rng.gen(),
            offset: rng.gen(),
            data: random_bytes(rng, 64),
        }),
        2 => {
            let n = rng.gen_range(0..=32);
            let mut hi: u64 = rng.gen_range(0..u64::MAX / 2);
            let largest = hi;
            let mut ranges = Vec::new();
            for _ in 0..n {
                let lo = hi.saturating_sub(rng.gen_range(0..5));
                ranges.push((lo, hi));
                if lo < 3 {
                    break;
                }
                hi = lo - 2;
            }
            Frame::Ack(AckFrame {
                largest_acked: largest,
                ack_delay_us: rng.gen(),
                ranges,
            })
        }
        3 => Frame::Fec(FecFrame {
            repair_id: RepairFecPayloadId(rng.gen()),
            symbol_length: rng.gen(),
            fragment_offset: rng.gen(),
            scheme_byte: rng.gen(),
            data: random_bytes(rng, 64),
        }),
        _ => Frame::WindowUpdate { offset: rng.gen() },
    }
}

pub fn random_packet<R: Rng>(rng: &mut R) -> Packet {
    let pn_len = [PnLen::One, PnLen::Two, PnLen::Four, PnLen::Six][rng.gen_range(0..4)];
    let pn = rng.gen::<u64>() & ((1u64 << (8 * pn_len.bytes())) - 1);
    Packet {
        header: PublicHeader {
            connection_id: rng.gen_bool(0.5).then(|| rng.gen()),
            pn_len,
            packet_number: pn,
            source_fec_id: rng.gen_bool(0.5).then(|| rng.gen()),
        },
        frames: (0..rng.gen_range(0..6))
            .map(|_| random_frame(rng))
            .collect(),
    }
}
