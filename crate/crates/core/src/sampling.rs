//! Latin hypercube sampling and maximin space-filling designs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignSet;
use crate::error::{Error, Result};

/// Number of random hypercubes compared by [`gen_design`].
pub const MAXIMIN_CANDIDATES: usize = 50;

/// `n` points in `[0,1)^r` with exactly one point per stratum
/// `[k/n, (k+1)/n)` in every coordinate, jittered uniformly inside the
/// stratum.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; r]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..r {
        perm.shuffle(rng);
        for (point, &k) in points.iter_mut().zip(&perm) {
            let u: f64 = rng.gen();
            // stays below the stratum's upper edge even after rounding
            point[j] = ((k as f64 + u) / n as f64).min(next_down((k + 1) as f64 / n as f64));
        }
    }
    points
}

fn next_down(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

/// Smallest squared pairwise Euclidean distance.
pub fn min_sq_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d);
        }
    }
    best
}

/// Maximin Latin hypercube: the best of [`MAXIMIN_CANDIDATES`] random
/// hypercubes by smallest pairwise distance. Deterministic under `seed`.
pub fn gen_design(n: usize, r: usize, seed: u64) -> Result<DesignSet> {
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: n });
    }
    if r == 0 {
        return Err(Error::InvalidDesign("r must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..MAXIMIN_CANDIDATES {
        let cand = latin_hypercube(n, r, &mut rng);
        let score = min_sq_distance(&cand);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    DesignSet::new(best.expect("at least one candidate").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strata_ok(points: &[Vec<f64>], r: usize) -> bool {
        let n = points.len();
        (0..r).all(|j| {
            let mut seen = vec![false; n];
            for p in points {
                let k = (p[j] * n as f64).floor() as usize;
                if k >= n || seen[k] {
                    return false;
                }
                seen[k] = true;
            }
            true
        })
    }

    #[test]
    fn rejects_single_point() {
        assert!(matches!(
            gen_design(1, 3, 0),
            Err(Error::InsufficientPoints { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn full_scale_design() {
        let d = gen_design(100, 9, 11).unwrap();
        assert_eq!((d.n(), d.r()), (100, 9));
        let pts: Vec<Vec<f64>> = d.points().map(|p| p.to_vec()).collect();
        assert!(strata_ok(&pts, 9));
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(gen_design(30, 3, 5).unwrap(), gen_design(30, 3, 5).unwrap());
        assert_ne!(gen_design(30, 3, 5).unwrap(), gen_design(30, 3, 6).unwrap());
    }

    #[test]
    fn maximin_beats_typical_hypercube() {
        let d = gen_design(20, 2, 3).unwrap();
        let chosen = min_sq_distance(&d.points().map(|p| p.to_vec()).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worse = 0;
        for _ in 0..100 {
            if min_sq_distance(&latin_hypercube(20, 2, &mut rng)) <= chosen {
                worse += 1;
            }
        }
        assert!(
            worse >= 80,
            "only {worse} of 100 random hypercubes are worse"
        );
    }

    proptest! {
        #[test]
        fn one_point_per_stratum(n in 2usize..60, r in 1usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = latin_hypercube(n, r, &mut rng);
            prop_assert!(strata_ok(&pts, r));
            prop_assert!(pts.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
        }
    }
}
