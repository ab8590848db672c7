//! Deterministic 64-bit generator used for seeded speaker selection.
//!
//! The update formula is fixed so any implementation, in any language, can
//! reproduce the same draw sequence from the same seed:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15                 (mod 2^64)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9    (mod 2^64)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB    (mod 2^64)
//! output = z ^ (z >> 31)
//! ```

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
}

/// The n-th output (0-based) of a generator freshly seeded with `seed`.
/// Speaker selection consumes exactly one output per step, so step `i`
/// always reads output `i` regardless of how the run got there.
pub fn nth_output(seed: u64, n: u64) -> u64 {
    let mut rng = SplitMix64::new(seed);
    let mut out = rng.next_u64();
    for _ in 0..n {
        out = rng.next_u64();
    }
    out
}
