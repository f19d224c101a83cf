//! WSP space-filling sampling.
//!
//! A shifted Halton pool fills the unit hypercube. Starting from the
//! candidate nearest the centre, every candidate closer than `d` to the
//! current point is eliminated and the nearest survivor becomes the next
//! point. `d` is bisected until the number of kept points matches the
//! request, or comes as close as the pool allows.

use rand::Rng;

use crate::netem::rng_stream;

pub const POOL_SIZE: usize = 1 << 13;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u32) -> f64 {
    let b = b as u64;
    let mut inv = 1.0 / b as f64;
    let mut x = 0.0;
    while i > 0 {
        x += (i % b) as f64 * inv;
        i /= b;
        inv /= b as f64;
    }
    x
}

/// `size` Halton points in `dims` dimensions with a random toroidal shift.
pub fn halton_pool(dims: usize, size: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dims <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    let mut rng = rng_stream(seed, 0x5753_50);
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
    (1..=size as u64)
        .map(|i| {
            (0..dims)
                .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the points kept with elimination radius `d`.
pub fn wsp_select(pool: &[Vec<f64>], d: f64) -> Vec<usize> {
    if pool.is_empty() {
        return Vec::new();
    }
    let dims = pool[0].len();
    let centre = vec![0.5; dims];
    let mut alive = vec![true; pool.len()];
    let mut current = (0..pool.len())
        .min_by(|&a, &b| dist2(&pool[a], &centre).total_cmp(&dist2(&pool[b], &centre)))
        .unwrap();
    let d2 = d * d;
    let mut kept = Vec::new();
    loop {
        kept.push(current);
        alive[current] = false;
        let mut next: Option<(usize, f64)> = None;
        for (i, p) in pool.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            let e = dist2(p, &pool[current]);
            if e < d2 {
                alive[i] = false;
            } else if next.is_none_or(|(_, best)| e < best) {
                next = Some((i, e));
            }
        }
        match next {
            Some((i, _)) => current = i,
            None => break,
        }
    }
    kept
}

/// Sampled unit-cube points and the radius that produced them.
#[derive(Debug, Clone)]
pub struct WspDesign {
    pub points: Vec<Vec<f64>>,
    pub radius: f64,
}

/// `n_points` space-filling points in `[0,1)^dims`.
pub fn wsp_unit(dims: usize, n_points: usize, seed: u64) -> WspDesign {
    assert!(n_points >= 1, "n_points must be positive");
    let pool = halton_pool(dims, POOL_SIZE, seed);
    let (mut lo, mut hi) = (0.0f64, (dims as f64).sqrt());
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for _ in 0..60 {
        let d = 0.5 * (lo + hi);
        let kept = wsp_select(&pool, d);
        let gap = kept.len().abs_diff(n_points);
        if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
            best = Some((gap, d, kept.clone()));
        }
        if kept.len() == n_points {
            break;
        }
        if kept.len() > n_points {
            lo = d;
        } else {
            hi = d;
        }
    }
    let (_, radius, mut kept) = best.unwrap();
    // if the pool cannot hit the count exactly, keep the first n points
    kept.truncate(n_points);
    WspDesign {
        points: kept.into_iter().map(|i| pool[i].clone()).collect(),
        radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_examples() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn single_point() {
        let d = wsp_unit(5, 1, 3);
        assert_eq!(d.points.len(), 1);
        assert!(d.points[0].iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn kept_points_respect_radius() {
        let d = wsp_unit(5, 120, 11);
        assert_eq!(d.points.len(), 120);
        let mut min = f64::INFINITY;
        for i in 0..d.points.len() {
            for j in 0..i {
                min = min.min(dist2(&d.points[i], &d.points[j]).sqrt());
            }
        }
        assert!(min >= 0.9 * d.radius, "min {min} radius {}", d.radius);
    }

    #[test]
    fn marginals_cover_every_decile() {
        let d = wsp_unit(5, 120, 7);
        for axis in 0..5 {
            let mut seen = [false; 10];
            for p in &d.points {
                seen[(p[axis] * 10.0) as usize] = true;
            }
            assert!(seen.iter().all(|&s| s), "axis {axis}: {seen:?}");
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(wsp_unit(3, 40, 5).points, wsp_unit(3, 40, 5).points);
        assert_ne!(wsp_unit(3, 40, 5).points, wsp_unit(3, 40, 6).points);
    }
}
