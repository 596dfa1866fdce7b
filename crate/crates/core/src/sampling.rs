//! Splittable deterministic randomness and the block / data samplers.
//!
//! Every random draw in a run comes from a substream addressed by
//! `(root_seed, iteration, block, purpose)`. Substreams are derived by hashing
//! the address, so the order in which blocks are processed inside an
//! iteration never changes the values they see.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    BlockSelection = 1,
    DataBatch = 2,
    ProductBatch = 3,
    GradAlphaF = 10,
    GradYG = 11,
    HessYYG = 12,
    GradXF = 13,
    JacXYG = 14,
    GradYF = 15,
    /// `∇_y f` draw used by the v-update (v2), separate from the estimator draw.
    GradYFForV = 16,
    TauSelection = 20,
    Init = 21,
    Custom = 99,
}

/// Address of a substream below a root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub root_seed: u64,
    pub path: [u64; 3],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn root(seed: u64) -> Self {
        RngStream {
            root_seed: seed,
            path: [u64::MAX; 3],
        }
    }

    /// Substream for `(iteration, block, purpose)`.
    pub fn derive(&self, iteration: u64, block: u64, purpose: Purpose) -> RngStream {
        RngStream {
            root_seed: self.root_seed,
            path: [iteration, block, purpose as u64],
        }
    }

    /// Substream with a free-form label, for callers outside the run loop.
    pub fn labelled(&self, a: u64, b: u64, c: u64) -> RngStream {
        RngStream {
            root_seed: self.root_seed,
            path: [a, b, c],
        }
    }

    /// A fresh generator positioned at the start of this substream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.root_seed;
        let mut h = splitmix64(&mut state);
        for label in self.path {
            let mut s = h ^ label;
            h = splitmix64(&mut s);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut h).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Distinct block ids (zero-based) selected in one iteration, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockBatch {
    indices: Vec<usize>,
}

impl BlockBatch {
    /// Builds a batch from explicit ids; ids must be distinct and `< m`.
    pub fn new(mut indices: Vec<usize>, m: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.len() > m || indices.iter().any(|&i| i >= m) {
            return Err(Error::config(format!(
                "block batch {indices:?} is not a nonempty subset of 0..{m}"
            )));
        }
        Ok(BlockBatch { indices })
    }

    pub fn full(m: usize) -> Self {
        BlockBatch {
            indices: (0..m).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, block: usize) -> bool {
        self.indices.binary_search(&block).is_ok()
    }
}

/// Uniform sample of `k` distinct blocks out of `m`, without replacement.
pub fn sample_blocks(stream: &RngStream, m: usize, k: usize) -> Result<BlockBatch> {
    if k == 0 || k > m {
        return Err(Error::config(format!(
            "block batch size {k} must lie in 1..={m}"
        )));
    }
    if k == m {
        return Ok(BlockBatch::full(m));
    }
    let mut rng = stream.rng();
    let mut indices = index::sample(&mut rng, m, k).into_vec();
    indices.sort_unstable();
    Ok(BlockBatch { indices })
}

/// `b` indices drawn uniformly with replacement from `0..n`.
pub fn sample_data(stream: &RngStream, n: usize, b: usize) -> Result<Vec<usize>> {
    sample_data_with(&mut stream.rng(), n, b)
}

/// [`sample_data`] drawing from an existing generator.
pub fn sample_data_with<R: Rng + ?Sized>(rng: &mut R, n: usize, b: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::config("cannot sample from an empty population"));
    }
    if b == 0 {
        return Err(Error::config("data batch size must be at least 1"));
    }
    Ok((0..b).map(|_| rng.random_range(0..n)).collect())
}
