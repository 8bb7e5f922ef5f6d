//! Keyed random streams addressed by recursion-tree multi-indices.
//!
//! Every node of the estimator's recursion tree is identified by a
//! [`MultiIndexKey`]: an experiment-level `root` followed by the
//! `(level, copy)` pairs appended while descending. A [`StreamKey`] is derived
//! from `(master seed, key, tag)` by absorbing each element into a 128-bit
//! state with an invertible mix (xor, multiply by an odd 128-bit constant,
//! xorshift), then finalizing with the path length and the domain tag. The
//! stream itself is a xoshiro256++ generator seeded from the 128-bit key.
//!
//! Because randomness is a function of the node address alone, the value of
//! an estimate does not depend on evaluation order or on how work is split
//! across threads.
//!
//! Gaussian scalars are produced with the ziggurat sampler of `rand_distr`
//! ([`StandardNormal`]); uniforms use the 53-bit mantissa construction of
//! `rand`, giving values in `[0, 1)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

const MIX_MUL: u128 = 0x2360_ed05_1fc6_5da4_4385_df64_9fcc_f645;
const ROOT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix128(mut s: u128) -> u128 {
    s = s.wrapping_mul(MIX_MUL);
    s ^= s >> 64;
    s = s.wrapping_mul(MIX_MUL);
    s ^ (s >> 59)
}

#[inline]
fn absorb(state: u128, word: u64) -> u128 {
    mix128(state ^ u128::from(word))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One step of a recursion-tree path. `copy` is positive for the primary
/// family and negative for the independent companion family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathStep {
    pub level: u32,
    pub copy: i64,
}

impl PathStep {
    /// Panics if `copy == 0`.
    pub fn new(level: u32, copy: i64) -> Self {
        assert!(copy != 0, "path step copy index must be nonzero");
        Self { level, copy }
    }
}

/// Address of one node in the estimator's recursion tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MultiIndexKey {
    pub root: u64,
    pub path: Vec<PathStep>,
}

impl MultiIndexKey {
    pub fn root(root: u64) -> Self {
        Self {
            root,
            path: Vec::new(),
        }
    }

    pub fn child(&self, level: u32, copy: i64) -> Self {
        let mut path = self.path.clone();
        path.push(PathStep::new(level, copy));
        Self {
            root: self.root,
            path,
        }
    }
}

impl fmt::Display for MultiIndexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.root)?;
        for step in &self.path {
            write!(f, ",{},{}", step.level, step.copy)?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamTag {
    Uniform,
    Gaussian,
}

impl StreamTag {
    fn word(self) -> u64 {
        match self {
            StreamTag::Uniform => 0x756e_6966_6f72_6d00,
            StreamTag::Gaussian => 0x6761_7573_7369_616e,
        }
    }
}

/// 128-bit identity of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamKey(pub u128);

/// Incremental form of [`derive_key`]: holds the absorbed state of a key
/// prefix so the recursion can extend it one step at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyCursor {
    state: u128,
    depth: u64,
}

impl KeyCursor {
    pub fn new(master_seed: u64, root: u64) -> Self {
        let state = absorb(
            absorb(u128::from(ROOT_SALT) << 64, master_seed),
            root,
        );
        Self { state, depth: 0 }
    }

    pub fn from_key(master_seed: u64, key: &MultiIndexKey) -> Self {
        key.path
            .iter()
            .fold(Self::new(master_seed, key.root), |c, s| {
                c.child(s.level, s.copy)
            })
    }

    #[inline]
    pub fn child(self, level: u32, copy: i64) -> Self {
        debug_assert!(copy != 0);
        let state = absorb(absorb(self.state, u64::from(level)), copy as u64);
        Self {
            state,
            depth: self.depth + 1,
        }
    }

    #[inline]
    pub fn finish(self, tag: StreamTag) -> StreamKey {
        StreamKey(absorb(absorb(self.state, self.depth), tag.word()))
    }
}

/// Derives the stream identity of `(master_seed, idx, tag)`.
pub fn derive_key(master_seed: u64, idx: &MultiIndexKey, tag: StreamTag) -> StreamKey {
    KeyCursor::from_key(master_seed, idx).finish(tag)
}

/// Source of randomness for one tree node.
pub trait NodeStream {
    fn next_uniform(&mut self) -> f64;
    fn fill_gaussian(&mut self, out: &mut [f64]);
}

/// Hands out the two streams owned by each tree node.
pub trait StreamSource: Sync {
    type Stream: NodeStream;
    fn open(&self, node: KeyCursor, tag: StreamTag) -> Self::Stream;
}

/// Single-owner pseudorandom stream with draw counters.
#[derive(Debug, Clone)]
pub struct StreamState {
    rng: Xoshiro256PlusPlus,
    uniforms: u64,
    gaussian_scalars: u64,
}

impl StreamState {
    pub fn new(key: StreamKey) -> Self {
        let mut sm = (key.0 as u64) ^ ((key.0 >> 64) as u64).rotate_left(17);
        let lo = key.0 as u64;
        let hi = (key.0 >> 64) as u64;
        let words = [
            lo,
            hi,
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self {
            rng: Xoshiro256PlusPlus::from_seed(seed),
            uniforms: 0,
            gaussian_scalars: 0,
        }
    }

    pub fn uniforms_drawn(&self) -> u64 {
        self.uniforms
    }

    pub fn gaussians_drawn(&self) -> u64 {
        self.gaussian_scalars
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.uniforms += 1;
        self.rng.gen::<f64>()
    }

    pub fn next_gaussian_vector(&mut self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.fill_gaussian(&mut out);
        out
    }
}

impl NodeStream for StreamState {
    #[inline]
    fn next_uniform(&mut self) -> f64 {
        StreamState::next_uniform(self)
    }

    #[inline]
    fn fill_gaussian(&mut self, out: &mut [f64]) {
        self.gaussian_scalars += out.len() as u64;
        for z in out.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
    }
}

/// Production source: every node stream is a [`StreamState`] keyed by its
/// multi-index.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyedSource;

impl StreamSource for KeyedSource {
    type Stream = StreamState;

    #[inline]
    fn open(&self, node: KeyCursor, tag: StreamTag) -> StreamState {
        StreamState::new(node.finish(tag))
    }
}

/// Deterministic stand-in returning a fixed uniform and fixed Gaussian
/// scalars. Used for hand-checkable evaluations.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSource {
    pub uniform: f64,
    pub gaussian: f64,
}

impl StreamSource for ConstantSource {
    type Stream = ConstantSource;

    fn open(&self, _node: KeyCursor, _tag: StreamTag) -> ConstantSource {
        *self
    }
}

impl NodeStream for ConstantSource {
    fn next_uniform(&mut self) -> f64 {
        self.uniform
    }

    fn fill_gaussian(&mut self, out: &mut [f64]) {
        out.fill(self.gaussian);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn key(path: &[(u32, i64)]) -> MultiIndexKey {
        MultiIndexKey {
            root: 0,
            path: path.iter().map(|&(l, c)| PathStep::new(l, c)).collect(),
        }
    }

    #[test]
    fn tags_separate_domains() {
        let k = key(&[]);
        assert_ne!(
            derive_key(1, &k, StreamTag::Uniform),
            derive_key(1, &k, StreamTag::Gaussian)
        );
    }

    #[test]
    fn sign_distinguishes_companion() {
        assert_ne!(
            derive_key(1, &key(&[(0, 1)]), StreamTag::Uniform),
            derive_key(1, &key(&[(0, -1)]), StreamTag::Uniform)
        );
    }

    #[test]
    fn derivation_is_deterministic() {
        let k = key(&[(2, 3)]);
        assert_eq!(
            derive_key(1, &k, StreamTag::Gaussian),
            derive_key(1, &k, StreamTag::Gaussian)
        );
    }

    #[test]
    fn cursor_matches_full_derivation() {
        let k = key(&[(3, 2), (0, -5), (1, 7)]);
        let c = KeyCursor::new(9, 0).child(3, 2).child(0, -5).child(1, 7);
        assert_eq!(c.finish(StreamTag::Uniform), derive_key(9, &k, StreamTag::Uniform));
    }

    #[test]
    fn injective_on_small_keys() {
        let mut steps = Vec::new();
        for level in 0..=3u32 {
            for copy in [-3i64, -2, -1, 1, 2, 3] {
                steps.push((level, copy));
            }
        }
        let mut paths: Vec<Vec<(u32, i64)>> = vec![vec![]];
        let mut frontier = paths.clone();
        for _ in 0..3 {
            let mut next = Vec::new();
            for p in &frontier {
                for s in &steps {
                    let mut q = p.clone();
                    q.push(*s);
                    next.push(q);
                }
            }
            paths.extend(next.iter().cloned());
            frontier = next;
        }
        let mut seen = HashSet::new();
        for p in &paths {
            let k = key(p);
            for tag in [StreamTag::Uniform, StreamTag::Gaussian] {
                assert!(seen.insert(derive_key(1, &k, tag)), "collision at {k} {tag:?}");
            }
        }
        assert_eq!(seen.len(), 2 * (1 + 24 + 24 * 24 + 24 * 24 * 24));
    }

    #[test]
    fn identical_keys_identical_sequences() {
        let k = derive_key(5, &key(&[(1, 1)]), StreamTag::Uniform);
        let mut a = StreamState::new(k);
        let mut b = StreamState::new(k);
        for _ in 0..100 {
            assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        }
        let k = derive_key(5, &key(&[(1, 1)]), StreamTag::Gaussian);
        let mut a = StreamState::new(k);
        let mut b = StreamState::new(k);
        assert_eq!(a.next_gaussian_vector(3), b.next_gaussian_vector(3));
        assert_eq!(a.next_gaussian_vector(3), b.next_gaussian_vector(3));
    }

    #[test]
    fn uniform_moments() {
        let mut s = StreamState::new(derive_key(11, &key(&[]), StreamTag::Uniform));
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let u = s.next_uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
            sq += u * u;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.001, "var {var}");
        assert_eq!(s.uniforms_drawn(), n);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = StreamState::new(derive_key(11, &key(&[]), StreamTag::Gaussian));
        let mut buf = [0.0; 10];
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..100_000 {
            s.fill_gaussian(&mut buf);
            sum += buf.iter().sum::<f64>();
            sq += buf.iter().map(|z| z * z).sum::<f64>();
        }
        let n = 1_000_000.0;
        let mean = sum / n;
        let var = sq / n - mean * mean;
        assert!(mean.abs() < 0.003, "mean {mean}");
        assert!((var - 1.0).abs() < 0.005, "var {var}");
        assert_eq!(s.gaussians_drawn(), 1_000_000);
    }

    #[test]
    fn counters_track_draws() {
        let mut s = StreamState::new(StreamKey(42));
        let mut expected = 0;
        for d in [1usize, 3, 7, 2] {
            s.next_gaussian_vector(d);
            expected += d as u64;
        }
        s.next_uniform();
        s.next_uniform();
        assert_eq!(s.gaussians_drawn(), expected);
        assert_eq!(s.uniforms_drawn(), 2);
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let parent = key(&[(2, 1)]);
        let mut a = StreamState::new(derive_key(3, &parent.child(0, 1), StreamTag::Uniform));
        let mut b = StreamState::new(derive_key(3, &parent.child(0, 2), StreamTag::Uniform));
        let n = 100_000;
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = (a.next_uniform(), b.next_uniform());
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        let n = n as f64;
        let cov = sab / n - sa / n * sb / n;
        let corr = cov / ((saa / n - (sa / n).powi(2)) * (sbb / n - (sb / n).powi(2))).sqrt();
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    #[should_panic]
    fn zero_copy_rejected() {
        PathStep::new(0, 0);
    }
}
