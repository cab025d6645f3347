//! Seeded pseudo-random numbers.
//!
//! Every random decision in this crate (bootstrap draws, feature sampling,
//! fold assignment, synthetic landscapes, sample draws) goes through
//! [`SplitMix64`], so a run can be reproduced from its seed by any
//! implementation that follows the same algorithm:
//!
//! * state advances by the golden-ratio increment `0x9E3779B97F4A7C15`;
//! * output is the Stafford "mix13" finalizer of the new state;
//! * independent streams (one per tree, fold or replicate) are seeded with
//!   `mix(seed + stream_index)`;
//! * bounded integers use Lemire's multiply-shift with rejection;
//! * uniform reals take the top 53 bits;
//! * normal deviates use the Box–Muller transform (cosine branch only).

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for sub-stream `index` of `seed` (tree, fold, replicate...).
    pub fn for_stream(seed: u64, index: u64) -> Self {
        Self::new(mix64(seed.wrapping_add(index)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let mut m = (self.next_u64() as u128) * (bound as u128);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = (self.next_u64() as u128) * (bound as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    #[inline]
    pub fn below_usize(&mut self, bound: usize) -> usize {
        self.below(bound as u64) as usize
    }

    /// Uniform real in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle (descending swap positions).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in draw order (partial Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        if k.saturating_mul(8) < n {
            // Same swaps on a sparse view of the identity permutation.
            let mut moved: std::collections::HashMap<usize, usize> = std::collections::HashMap::with_capacity(2 * k);
            let mut out = Vec::with_capacity(k);
            for i in 0..k {
                let j = i + self.below_usize(n - i);
                let vj = moved.get(&j).copied().unwrap_or(j);
                let vi = moved.get(&i).copied().unwrap_or(i);
                moved.insert(j, vi);
                out.push(vj);
            }
            return out;
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below_usize(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
