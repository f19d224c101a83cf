use std::collections::HashMap;

use proptest::prelude::*;
use quicfec_core::codec::{BlockCodeParams, ReedSolomon, SchemeConfig};
use quicfec_core::gf256::{gf_add, gf_inv, gf_mul, solve_linear_system, Matrix};

const E: usize = 48;

fn source(i: u32) -> Vec<u8> {
    (0..E)
        .map(|j| (i as usize * 131 + j * 17 + 5) as u8)
        .collect()
}

/// Push `count` sources through encoder and decoder, dropping the symbols
/// flagged in `lost` (sources and repairs share one emission sequence).
/// Returns the ids that ended up known at the receiver, checking every
/// recovered payload against the original.
fn stream(
    cfg: SchemeConfig,
    count: u32,
    lost: &[bool],
) -> (HashMap<u32, Vec<u8>>, Vec<(u32, bool)>) {
    stream_with(cfg, count, |slot, _| {
        lost.get(slot).copied().unwrap_or(false)
    })
}

/// Same, with `drop(slot, Some(source_index))` for sources and
/// `drop(slot, None)` for repairs.
fn stream_with(
    cfg: SchemeConfig,
    count: u32,
    mut drop: impl FnMut(usize, Option<u32>) -> bool,
) -> (HashMap<u32, Vec<u8>>, Vec<(u32, bool)>) {
    let mut enc = cfg.encoder(E).unwrap();
    let mut dec = cfg.decoder();
    let mut known = HashMap::new();
    let mut emitted = Vec::new();
    let mut slot = 0usize;
    let mut dropped = |slot: &mut usize, src: Option<u32>| {
        let d = drop(*slot, src);
        *slot += 1;
        d
    };
    for i in 0..count {
        let id = enc.next_source_id();
        let payload = source(i);
        let repairs = enc.push_source(&payload);
        let src_lost = dropped(&mut slot, Some(i));
        emitted.push((id, src_lost));
        let mut got = Vec::new();
        if !src_lost {
            known.insert(id, payload.clone());
            got.extend(dec.on_source(id, &payload));
        }
        for r in repairs {
            if !dropped(&mut slot, None) {
                got.extend(dec.on_repair(&r.meta, &r.payload));
            }
        }
        for (rid, data) in got {
            let idx = emitted
                .iter()
                .position(|&(e, _)| e == rid)
                .expect("recovered an id never sent");
            assert_eq!(
                &data[..E],
                &source(idx as u32)[..],
                "wrong payload for {rid}"
            );
            known.insert(rid, data);
        }
    }
    (known, emitted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_axioms(a: u8, b: u8, c: u8) {
        prop_assert_eq!(gf_mul(a, gf_mul(b, c)), gf_mul(gf_mul(a, b), c));
        prop_assert_eq!(gf_mul(a, gf_add(b, c)), gf_add(gf_mul(a, b), gf_mul(a, c)));
        prop_assert_eq!(gf_mul(a, b), gf_mul(b, a));
        if a != 0 {
            prop_assert_eq!(gf_mul(a, gf_inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn solve_recovers_planted_solution(seed: u64, n in 1usize..8) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<u8>> = (0..n).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        // Vandermonde rows on distinct points are independent
        let rows: Vec<Vec<u8>> = (0..n as u8)
            .map(|p| (0..n as u32).map(|j| quicfec_core::gf256::gf_pow(p + 1, j)).collect())
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let rhs: Vec<Vec<u8>> = rows.iter().map(|row| {
            (0..4).map(|b| row.iter().zip(&x).fold(0u8, |acc, (&c, xv)| gf_add(acc, gf_mul(c, xv[b])))).collect()
        }).collect();
        prop_assert_eq!(solve_linear_system(&m, &rhs).unwrap(), x);
    }

    #[test]
    fn rs_recovers_any_pattern_within_capability(n in 2u16..16, kfrac in 0.2f64..0.95, mask: u32) {
        let k = ((n as f64 * kfrac) as u16).clamp(1, n - 1);
        let code = ReedSolomon::new(BlockCodeParams::new(n, k).unwrap()).unwrap();
        let src: Vec<Vec<u8>> = (0..k as u32).map(source).collect();
        let refs: Vec<&[u8]> = src.iter().map(Vec::as_slice).collect();
        let rep = code.encode(&refs).unwrap();
        let lost = |i: usize| mask >> i & 1 == 1;
        let erasures = (0..n as usize).filter(|&i| lost(i)).count();
        let s: Vec<Option<&[u8]>> = (0..k as usize).map(|i| (!lost(i)).then_some(refs[i])).collect();
        let r: Vec<Option<&[u8]>> = (0..rep.len()).map(|j| (!lost(k as usize + j)).then_some(rep[j].as_slice())).collect();
        let out = code.recover(&s, &r);
        if erasures <= (n - k) as usize {
            prop_assert_eq!(out.unwrap(), src);
        } else {
            prop_assert!(out.is_err());
        }
    }

    #[test]
    fn streaming_decoders_are_sound(which in 0usize..3, lost in proptest::collection::vec(prop::bool::weighted(0.15), 400)) {
        let cfg = [
            SchemeConfig::Xor { k: 2, depth: 10 },
            SchemeConfig::ReedSolomon { n: 30, k: 20 },
            SchemeConfig::Rlc { n: 3, k: 2, window: 20, density: 1.0 },
        ][which];
        stream(cfg, 240, &lost);
    }

    #[test]
    fn rs_stream_recovers_blocks_within_capability(lost in proptest::collection::vec(prop::bool::weighted(0.2), 300)) {
        let cfg = SchemeConfig::ReedSolomon { n: 30, k: 20 };
        let (known, emitted) = stream(cfg, 200, &lost);
        // emission order per block: 20 sources, then 10 repairs
        for b in 0..10 {
            let slots = &lost[b * 30..b * 30 + 30];
            if slots.iter().filter(|&&l| l).count() <= 10 {
                for (id, _) in &emitted[b * 20..b * 20 + 20] {
                    prop_assert!(known.contains_key(id), "block {} id {}", b, id);
                }
            }
        }
    }
}

#[test]
fn rlc_recovers_isolated_losses() {
    let cfg = SchemeConfig::Rlc {
        n: 3,
        k: 2,
        window: 20,
        density: 1.0,
    };
    // drop one source in every ten emitted symbols
    let lost: Vec<bool> = (0..600).map(|i| i % 10 == 4).collect();
    let (known, emitted) = stream(cfg, 400, &lost);
    let missing = emitted
        .iter()
        .filter(|(id, _)| !known.contains_key(id))
        .count();
    assert!(missing <= 2, "{missing} sources unrecovered");
}

#[test]
fn xor_interleaving_spreads_source_bursts() {
    let cfg = SchemeConfig::Xor { k: 2, depth: 10 };
    for start in 0..40 {
        let (known, emitted) = stream_with(cfg, 300, |_, src| {
            src.is_some_and(|i| (start..start + 10).contains(&i))
        });
        assert!(
            emitted.iter().all(|(id, _)| known.contains_key(id)),
            "burst at {start}"
        );
        // eleven sources inside one group hit one lane twice
        if start % 20 < 10 {
            let (known, emitted) = stream_with(cfg, 300, |_, src| {
                src.is_some_and(|i| (start..start + 11).contains(&i))
            });
            assert!(
                emitted.iter().any(|(id, _)| !known.contains_key(id)),
                "burst of 11 at {start}"
            );
        }
    }
}
