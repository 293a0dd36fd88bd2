//! Binary dropout masks over the flattened parameter vector, the seeded RNG
//! streams that draw them, and Hamming-neighborhood generation.
//!
//! Parameter ordering is layer-major: for each layer, the weight matrix in
//! row-major order (`out x in`), then the bias vector. Bit `i` of a mask
//! gates parameter `i` under that ordering.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::nn::Network;

/// Deterministic PRNG identified by `(seed, stream_id)`.
///
/// Streams with the same seed but different ids are independent ChaCha
/// streams, so concurrent workers never share mutable RNG state.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        SeededRng { seed, stream_id, inner }
    }

    /// A fresh stream sharing this generator's seed.
    pub fn split(&self, stream_id: u64) -> Self {
        SeededRng::new(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A vertex of the `d`-dimensional hypercube, stored one bit per parameter.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    d: usize,
    words: Vec<u64>,
}

impl Mask {
    pub fn zeros(d: usize) -> Self {
        Mask {
            d,
            words: vec![0; d.div_ceil(64)],
        }
    }

    pub fn ones(d: usize) -> Self {
        let mut m = Mask {
            d,
            words: vec![u64::MAX; d.div_ceil(64)],
        };
        m.clear_tail();
        m
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut m = Mask::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                m.set(i, true);
            }
        }
        m
    }

    /// Mask with bit `i` set iff `(index >> i) & 1 == 1`; used to enumerate
    /// small hypercubes.
    pub fn from_index(d: usize, index: u64) -> Self {
        assert!(d <= 64, "from_index supports d <= 64");
        let mut m = Mask::zeros(d);
        if d > 0 {
            m.words[0] = index;
            m.clear_tail();
        }
        m
    }

    fn clear_tail(&mut self) {
        let rem = self.d % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.d == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.d);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.d, "bit {i} out of range for d={}", self.d);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.d, "bit {i} out of range for d={}", self.d);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.d).map(move |i| self.get(i))
    }

    /// `1.0` for retained parameters, `0.0` for dropped ones.
    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Lowercase hex of the packed bits, parameter 0 in the most significant
    /// bit of the first digit, prefixed with `d=<d>:`.
    pub fn to_hex(&self) -> String {
        let digits = self.d.div_ceil(4);
        let mut s = String::with_capacity(digits + 12);
        s.push_str("d=");
        s.push_str(&self.d.to_string());
        s.push(':');
        for j in 0..digits {
            let mut nibble = 0u32;
            for b in 0..4 {
                let i = 4 * j + b;
                if i < self.d && self.get(i) {
                    nibble |= 1 << (3 - b);
                }
            }
            s.push(char::from_digit(nibble, 16).unwrap());
        }
        s
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({})", self.to_hex())
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Domain(format!("invalid mask string `{s}`: {msg}"));
        let rest = s.strip_prefix("d=").ok_or_else(|| bad("missing `d=` prefix"))?;
        let (d, hex) = rest.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let d: usize = d.parse().map_err(|_| bad("bad length"))?;
        if hex.len() != d.div_ceil(4) {
            return Err(bad("digit count does not match d"));
        }
        let mut m = Mask::zeros(d);
        for (j, c) in hex.chars().enumerate() {
            if c.is_ascii_uppercase() {
                return Err(bad("hex must be lowercase"));
            }
            let nibble = c.to_digit(16).ok_or_else(|| bad("non-hex digit"))?;
            for b in 0..4 {
                if nibble & (1 << (3 - b)) != 0 {
                    let i = 4 * j + b;
                    if i >= d {
                        return Err(bad("padding bits must be zero"));
                    }
                    m.set(i, true);
                }
            }
        }
        Ok(m)
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Draws `M ~ Bernoulli(p)^d`. The degenerate cases `p = 0` and `p = 1`
/// consume no randomness.
pub fn sample_mask(d: usize, p: f64, rng: &mut SeededRng) -> Result<Mask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("retain probability {p} outside [0, 1]")));
    }
    if d == 0 {
        return Err(Error::Domain("mask length must be at least 1".into()));
    }
    if p == 1.0 {
        return Ok(Mask::ones(d));
    }
    if p == 0.0 {
        return Ok(Mask::zeros(d));
    }
    let mut m = Mask::zeros(d);
    for i in 0..d {
        if rng.random::<f64>() < p {
            m.set(i, true);
        }
    }
    Ok(m)
}

pub fn hamming(a: &Mask, b: &Mask) -> Result<usize> {
    if a.d != b.d {
        return Err(Error::Shape(format!("mask lengths {} and {}", a.d, b.d)));
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub(crate) fn binomial_saturating(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

const ENUMERATION_LIMIT: u128 = 1 << 20;

/// `count` distinct masks at Hamming distance exactly `k` from `base`.
pub fn flip_neighbors(base: &Mask, k: usize, count: usize, rng: &mut SeededRng) -> Result<Vec<Mask>> {
    let d = base.len();
    if k == 0 || k > d {
        return Err(Error::Domain(format!("flip count k={k} must be in 1..={d}")));
    }
    if count == 0 {
        return Err(Error::Domain("neighbor count must be at least 1".into()));
    }
    let available = binomial_saturating(d, k);
    if count as u128 > available {
        return Err(Error::Exhausted {
            requested: count,
            k,
            available,
        });
    }

    let flip = |positions: &[usize]| {
        let mut m = base.clone();
        for &i in positions {
            m.flip(i);
        }
        m
    };

    // Dense request: enumerate every k-subset and take a shuffled prefix.
    if available <= ENUMERATION_LIMIT && (count as u128) * 4 >= available {
        let mut all = Vec::with_capacity(available as usize);
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            all.push(combo.clone());
            let mut i = k;
            while i > 0 && combo[i - 1] == d - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..k {
                combo[j] = combo[j - 1] + 1;
            }
        }
        let (chosen, _) = all.partial_shuffle(rng, count);
        return Ok(chosen.iter().map(|c| flip(c)).collect());
    }

    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut positions = index::sample(rng, d, k).into_vec();
        positions.sort_unstable();
        if seen.insert(positions.clone()) {
            out.push(flip(&positions));
        }
    }
    Ok(out)
}

/// Copy of `net` with every parameter whose mask bit is 0 set to zero.
pub fn apply_mask(net: &Network, m: &Mask) -> Result<Network> {
    if m.len() != net.num_params() {
        return Err(Error::Shape(format!(
            "mask length {} but network has {} parameters",
            m.len(),
            net.num_params()
        )));
    }
    let mut out = net.clone();
    out.map_params(|i, w| if m.get(i) { w } else { 0.0 });
    Ok(out)
}
