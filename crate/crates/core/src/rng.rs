//! Counter-based deterministic random streams.
//!
//! Every stochastic site in the pipeline owns a [`Stream`] derived from the
//! run seed and a label path (e.g. checkpoint -> task -> response -> probe).
//! Draws depend only on (key, counter), never on sampling order elsewhere,
//! so parallel and sequential execution produce identical bytes.

/// Multiplicative constant from splitmix64 (golden ratio in 64-bit fixed point).
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; bijective on u64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; used for string labels and behavior signatures.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A deterministic random stream identified by a key; drawing advances only
/// the local counter. `derive` forks an independent child without touching
/// the parent's state.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn from_seed(seed: u64) -> Stream {
        Stream { key: mix64(seed), counter: 0 }
    }

    /// Child stream for `label`. Distinct labels give statistically
    /// independent streams; the same label always gives the same child.
    pub fn derive(&self, label: u64) -> Stream {
        Stream { key: mix64(self.key ^ mix64(label)), counter: 0 }
    }

    pub fn derive_str(&self, label: &str) -> Stream {
        self.derive(fnv1a64(label.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, n). n must be nonzero.
    pub fn next_range(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire reduction; bias is O(n / 2^64), irrelevant at our scales.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform integer in [lo, hi], inclusive on both ends.
    pub fn next_i32_inclusive(&mut self, lo: i32, hi: i32) -> i32 {
        debug_assert!(lo <= hi);
        let span = (hi as i64 - lo as i64 + 1) as usize;
        lo + self.next_range(span) as i32
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_range(i + 1);
            xs.swap(i, j);
        }
    }
}
