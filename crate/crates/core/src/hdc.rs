//! Binary hypervector algebra: generation, binding, bundling, and Hamming
//! distance over bit-packed vectors.
//!
//! Vectors are packed into `u64` words, so every dimension must be a
//! positive multiple of 64. The CAM layer additionally requires a multiple
//! of 128 (its column-slice width); that stricter check lives in
//! [`crate::cam`] so that small toy dimensions stay usable here.
//!
//! All randomness flows through [`Hypervector::random`], which derives a
//! ChaCha8 stream from a `(seed, index)` pair. Same pair, same dimension,
//! same vector — forever, on every platform.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Bits per packing word.
pub const WORD_BITS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HdcError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {0} must be a positive multiple of {WORD_BITS}")]
    BadDimension(usize),
    #[error("cannot bundle an empty accumulator")]
    EmptyAccumulator,
    #[error("level codebook requires 2..=dim/2+1 levels, got {levels} at dimension {dim}")]
    BadLevelCount { levels: usize, dim: usize },
    #[error("id codebook entry {index}: no candidate within the near-orthogonality band")]
    CodebookPlacement { index: usize },
    #[error("byte payload of {got} bytes does not hold a {dim}-bit vector")]
    BadPayload { dim: usize, got: usize },
}

fn check_dim(dim: usize) -> Result<(), HdcError> {
    if dim == 0 || !dim.is_multiple_of(WORD_BITS) {
        return Err(HdcError::BadDimension(dim));
    }
    Ok(())
}

fn check_match(a: &Hypervector, b: &Hypervector) -> Result<(), HdcError> {
    if a.dim != b.dim {
        return Err(HdcError::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    Ok(())
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by a `(seed, index)` pair via a splitmix64 chain.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed
        .wrapping_mul(GOLDEN)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(1);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Bit-packed binary vector of fixed dimension.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Hypervector(dim={}, ones={})", self.dim, self.count_ones())
    }
}

impl Hypervector {
    pub fn zeros(dim: usize) -> Result<Self, HdcError> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            words: vec![0; dim / WORD_BITS],
        })
    }

    /// Deterministic random vector for `(seed, index)`; marginal bits are
    /// Bernoulli(1/2).
    pub fn random(dim: usize, seed: u64, index: u64) -> Result<Self, HdcError> {
        check_dim(dim)?;
        let mut rng = stream_rng(seed, index);
        let words = (0..dim / WORD_BITS)
            .map(|_| rand::RngCore::next_u64(&mut rng))
            .collect();
        Ok(Self { dim, words })
    }

    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self, HdcError> {
        check_dim(dim)?;
        if words.len() != dim / WORD_BITS {
            return Err(HdcError::BadPayload {
                dim,
                got: words.len() * 8,
            });
        }
        Ok(Self { dim, words })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.dim);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.dim);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, i: usize) {
        debug_assert!(i < self.dim);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bitwise complement.
    pub fn flipped(&self) -> Self {
        Self {
            dim: self.dim,
            words: self.words.iter().map(|w| !w).collect(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(dim: usize, bytes: &[u8]) -> Result<Self, HdcError> {
        check_dim(dim)?;
        if bytes.len() != dim / 8 {
            return Err(HdcError::BadPayload {
                dim,
                got: bytes.len(),
            });
        }
        let words = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dim, words })
    }

    /// Hamming distance restricted to bit range `[start, start + len)`.
    /// Both bounds must fall on word boundaries.
    pub fn hamming_slice(&self, other: &Self, start: usize, len: usize) -> Result<u32, HdcError> {
        check_match(self, other)?;
        debug_assert!(start.is_multiple_of(WORD_BITS) && len.is_multiple_of(WORD_BITS));
        debug_assert!(start + len <= self.dim);
        let lo = start / WORD_BITS;
        let hi = (start + len) / WORD_BITS;
        Ok(self.words[lo..hi]
            .iter()
            .zip(&other.words[lo..hi])
            .map(|(a, b)| (a ^ b).count_ones())
            .sum())
    }
}

/// Elementwise XOR of two equal-dimension vectors. Self-inverse:
/// `bind(a, a)` is the zero vector and `bind(bind(a, b), b) = a`.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector, HdcError> {
    check_match(a, b)?;
    Ok(Hypervector {
        dim: a.dim,
        words: a.words.iter().zip(&b.words).map(|(x, y)| x ^ y).collect(),
    })
}

/// Hamming distance: popcount of the XOR.
pub fn hamming(a: &Hypervector, b: &Hypervector) -> Result<u32, HdcError> {
    check_match(a, b)?;
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Per-position vote counts over a set of bundled hypervectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accumulator {
    counts: Vec<u32>,
    total: u32,
    dim: usize,
}

impl Accumulator {
    pub fn new(dim: usize) -> Result<Self, HdcError> {
        check_dim(dim)?;
        Ok(Self {
            counts: vec![0; dim],
            total: 0,
            dim,
        })
    }

    pub fn from_hv(hv: &Hypervector) -> Self {
        let mut acc = Self::new(hv.dim()).expect("hv carries a valid dimension");
        acc.add(hv).expect("dimensions match by construction");
        acc
    }

    /// Accumulator equivalent to `weight` copies of `hv`. Used when a
    /// consensus vector is reloaded without its member history; bundling it
    /// reproduces `hv` exactly for any `weight >= 1`.
    pub fn weighted(hv: &Hypervector, weight: u32) -> Self {
        let mut counts = vec![0u32; hv.dim()];
        for (i, c) in counts.iter_mut().enumerate() {
            if hv.bit(i) {
                *c = weight;
            }
        }
        Self {
            counts,
            total: weight,
            dim: hv.dim(),
        }
    }

    pub fn add(&mut self, hv: &Hypervector) -> Result<(), HdcError> {
        if hv.dim() != self.dim {
            return Err(HdcError::DimensionMismatch {
                left: self.dim,
                right: hv.dim(),
            });
        }
        for (wi, mut w) in hv.words().iter().copied().enumerate() {
            let base = wi * WORD_BITS;
            while w != 0 {
                self.counts[base + w.trailing_zeros() as usize] += 1;
                w &= w - 1;
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Majority vote. Bit i is 1 iff `counts[i] > total/2`; an exact tie
    /// (even totals only) takes the tie-breaker's bit.
    pub fn bundle(&self, tie_breaker: &Hypervector) -> Result<Hypervector, HdcError> {
        if self.total == 0 {
            return Err(HdcError::EmptyAccumulator);
        }
        if tie_breaker.dim() != self.dim {
            return Err(HdcError::DimensionMismatch {
                left: self.dim,
                right: tie_breaker.dim(),
            });
        }
        let mut out = Hypervector::zeros(self.dim)?;
        for (i, &c) in self.counts.iter().enumerate() {
            let doubled = 2 * c as u64;
            let bit = match doubled.cmp(&(self.total as u64)) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => tie_breaker.bit(i),
                std::cmp::Ordering::Less => false,
            };
            if bit {
                out.set_bit(i, true);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CodebookKind {
    Id,
    Level,
}

/// Ordered family of hypervectors. `Id` codebooks are mutually
/// near-orthogonal; `Level` codebooks interpolate so that entry distance
/// grows linearly with index separation.
#[derive(Clone, Debug)]
pub struct Codebook {
    pub kind: CodebookKind,
    pub seed: u64,
    entries: Vec<Hypervector>,
    dim: usize,
}

/// Closed distance band `dim/2 ± 4·sqrt(dim/4)` that any two distinct id
/// entries must fall in.
pub fn orthogonality_band(dim: usize) -> (f64, f64) {
    let half = dim as f64 / 2.0;
    let spread = 4.0 * (dim as f64 / 4.0).sqrt();
    (half - spread, half + spread)
}

const PLACEMENT_ATTEMPTS: u64 = 1 << 20;

/// Near-orthogonal id codebook. Candidates are drawn deterministically and
/// re-drawn until they sit inside [`orthogonality_band`] of every earlier
/// entry, so the invariant holds for all pairs, not just in expectation.
pub fn make_id_codebook(entries: usize, dim: usize, seed: u64) -> Result<Codebook, HdcError> {
    check_dim(dim)?;
    let (lo, hi) = orthogonality_band(dim);
    let mut out: Vec<Hypervector> = Vec::with_capacity(entries);
    for k in 0..entries {
        let mut placed = None;
        for attempt in 0..PLACEMENT_ATTEMPTS {
            let cand = Hypervector::random(dim, seed, ((k as u64) << 20) | attempt)?;
            let ok = out.iter().all(|prev| {
                let d = f64::from(hamming(prev, &cand).expect("equal dims"));
                d >= lo && d <= hi
            });
            if ok {
                placed = Some(cand);
                break;
            }
        }
        out.push(placed.ok_or(HdcError::CodebookPlacement { index: k })?);
    }
    Ok(Codebook {
        kind: CodebookKind::Id,
        seed,
        entries: out,
        dim,
    })
}

/// Level codebook built by cumulative block flipping: entry 0 is random and
/// entry k flips a fresh block of `floor(dim/2/(levels-1))` previously
/// untouched positions of entry k-1, so
/// `hamming(L_i, L_j) = |i-j| * block`.
pub fn make_level_codebook(levels: usize, dim: usize, seed: u64) -> Result<Codebook, HdcError> {
    check_dim(dim)?;
    if levels < 2 || levels > dim / 2 + 1 {
        return Err(HdcError::BadLevelCount { levels, dim });
    }
    let block = (dim / 2) / (levels - 1);
    let mut order: Vec<usize> = (0..dim).collect();
    order.shuffle(&mut stream_rng(seed, u64::MAX));

    let mut entries = Vec::with_capacity(levels);
    entries.push(Hypervector::random(dim, seed, 0)?);
    for k in 1..levels {
        let mut next = entries[k - 1].clone();
        for &pos in &order[(k - 1) * block..k * block] {
            next.flip_bit(pos);
        }
        entries.push(next);
    }
    Ok(Codebook {
        kind: CodebookKind::Level,
        seed,
        entries,
        dim,
    })
}

impl Codebook {
    pub fn from_entries(
        kind: CodebookKind,
        seed: u64,
        entries: Vec<Hypervector>,
    ) -> Result<Self, HdcError> {
        let dim = entries.first().map(Hypervector::dim).unwrap_or(WORD_BITS);
        check_dim(dim)?;
        for e in &entries {
            if e.dim() != dim {
                return Err(HdcError::DimensionMismatch {
                    left: dim,
                    right: e.dim(),
                });
            }
        }
        Ok(Self {
            kind,
            seed,
            entries,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize) -> &Hypervector {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[Hypervector] {
        &self.entries
    }
}
