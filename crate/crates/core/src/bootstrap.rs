//! Resampling index schemes for dependent data.

use rand::Rng;

/// Stationary bootstrap indices: blocks of geometric length with mean
/// `mean_block`, wrapping around the end of the sample.
pub fn stationary_indices<R: Rng + ?Sized>(n: usize, mean_block: f64, rng: &mut R) -> Vec<usize> {
    let p = 1.0 / mean_block.max(1.0);
    let mut idx = Vec::with_capacity(n);
    let mut cur = rng.random_range(0..n);
    for _ in 0..n {
        idx.push(cur);
        cur = if rng.random::<f64>() < p { rng.random_range(0..n) } else { (cur + 1) % n };
    }
    idx
}

/// Circular block bootstrap indices with fixed block length.
pub fn circular_block_indices<R: Rng + ?Sized>(n: usize, block: usize, rng: &mut R) -> Vec<usize> {
    let block = block.clamp(1, n.max(1));
    let mut idx = Vec::with_capacity(n);
    while idx.len() < n {
        let start = rng.random_range(0..n);
        for j in 0..block.min(n - idx.len()) {
            idx.push((start + j) % n);
        }
    }
    idx
}

/// Independent resampling of observations.
pub fn iid_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lengths_and_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 7, 100] {
            for idx in [stationary_indices(n, 5.0, &mut rng), circular_block_indices(n, 20, &mut rng), iid_indices(n, &mut rng)] {
                assert_eq!(idx.len(), n);
                assert!(idx.iter().all(|&i| i < n));
            }
        }
    }

    #[test]
    fn circular_blocks_are_contiguous() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let idx = circular_block_indices(100, 10, &mut rng);
        for b in idx.chunks(10) {
            for w in b.windows(2) {
                assert_eq!(w[1], (w[0] + 1) % 100);
            }
        }
    }

    #[test]
    fn stationary_mean_block_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx = stationary_indices(200_000, 20.0, &mut rng);
        let breaks = idx.windows(2).filter(|w| w[1] != (w[0] + 1) % 200_000).count();
        let mean = 200_000.0 / (breaks as f64 + 1.0);
        assert!((mean - 20.0).abs() < 1.0, "{mean}");
    }
}
