//! Seeded pseudo-random generator used everywhere in the crate.
//!
//! The exact algorithms are spelled out here so that a seed written in a
//! config file means the same stream in any reimplementation:
//!
//! * Seed expansion and stream derivation use the SplitMix64 finalizer
//!   (Steele, Lea & Flood 2014): `x += 0x9E3779B97F4A7C15`, then
//!   `z = x; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!    z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`.
//! * Draws come from xoshiro256++ (Blackman & Vigna 2019).
//! * `f64` uniforms take the top 53 bits: `(u >> 11) * 2^-53`, giving [0, 1).
//! * Normals use the Box-Muller transform with the second variate cached.
//! * Bounded integers use the multiply-shift map `(u * n) >> 64` on the full
//!   64-bit word (Lemire 2019). The modulo bias is below 2^-50 for every `n`
//!   this crate uses.
//! * Shuffles are Fisher-Yates from the back of the slice.

/// SplitMix64 stream. Used to expand one `u64` seed into generator state and
/// to derive independent per-stage seeds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Derives an independent seed for a named pipeline stage from a master seed.
///
/// The label is folded into the master seed with FNV-1a, then passed through
/// one SplitMix64 step. Distinct labels give unrelated streams, and the
/// mapping is stable across runs and platforms.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    SplitMix64::new(master ^ h).next_u64()
}

/// xoshiro256++ generator with convenience samplers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rng {
    s: [u64; 4],
    /// Cached second Box-Muller variate, if any.
    spare_normal: Option<f64>,
}

fn rotl(x: u64, k: u32) -> u64 {
    (x << k) | (x >> (64 - k))
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let mut s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        if s == [0, 0, 0, 0] {
            s[0] = 1; // all-zero state is the one fixed point of xoshiro
        }
        Rng {
            s,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = rotl(s[0].wrapping_add(s[3]), 23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Panics if n == 0.
    pub fn range(&mut self, n: usize) -> usize {
        assert!(n > 0, "range bound must be positive");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller; the paired variate is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u maps [0,1) to (0,1] so the log is always finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.range(i + 1);
            slice.swap(i, j);
        }
    }

    /// Draws `k` distinct indices from [0, n) by partial Fisher-Yates.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} distinct indices from {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.range(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
