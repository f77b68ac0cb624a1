//! Keyed, counter-based random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is built directly
//! from `(seed, replication, purpose, coordinate)`. Distinct keys therefore
//! address distinct ChaCha keystreams, and the position inside a stream is
//! just the block counter, so a run's draws never depend on what any other
//! run (or thread) did.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// What a stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Purpose {
    /// Observation noise of gradient (and baseline) evaluations.
    Noise,
    /// Pilot perturbation sizes of the Cor-CFD estimator.
    Perturbation,
    /// Bootstrap resampling indices.
    Bootstrap,
    /// Observation noise of line-search evaluations.
    LineSearch,
    /// Rademacher directions of SPSA.
    Rademacher,
    /// Anything else (tests, tuning scaffolding).
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u32 {
        match self {
            Purpose::Noise => 1,
            Purpose::Perturbation => 2,
            Purpose::Bootstrap => 3,
            Purpose::LineSearch => 4,
            Purpose::Rademacher => 5,
            Purpose::Auxiliary => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub replication: u64,
    pub purpose: Purpose,
    pub coordinate: u32,
}

impl StreamKey {
    pub fn new(replication: u64, purpose: Purpose, coordinate: u32) -> Self {
        Self {
            replication,
            purpose,
            coordinate,
        }
    }
}

/// One reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    key: StreamKey,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        let mut material = [0u8; 32];
        material[0..8].copy_from_slice(&seed.to_le_bytes());
        material[8..16].copy_from_slice(&key.replication.to_le_bytes());
        material[16..20].copy_from_slice(&key.purpose.tag().to_le_bytes());
        material[20..24].copy_from_slice(&key.coordinate.to_le_bytes());
        Self {
            seed,
            key,
            rng: ChaCha8Rng::from_seed(material),
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Number of variates drawn so far.
    pub fn draw_counter(&self) -> u64 {
        self.draws
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.draws += 1;
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.draws += 1;
        self.rng.random_range(0..n)
    }

    /// A Rademacher variate, `-1.0` or `+1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        self.draws += 1;
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

/// The lazily created family of streams owned by one run.
#[derive(Debug, Clone)]
pub struct Streams {
    seed: u64,
    replication: u64,
    streams: BTreeMap<(Purpose, u32), RngStream>,
}

impl Streams {
    pub fn new(seed: u64, replication: u64) -> Self {
        Self {
            seed,
            replication,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replication(&self) -> u64 {
        self.replication
    }

    pub fn get(&mut self, purpose: Purpose, coordinate: usize) -> &mut RngStream {
        let (seed, replication) = (self.seed, self.replication);
        let coordinate = u32::try_from(coordinate).expect("coordinate index fits in u32");
        self.streams
            .entry((purpose, coordinate))
            .or_insert_with(|| RngStream::new(seed, StreamKey::new(replication, purpose, coordinate)))
    }

    /// Two disjoint streams at once.
    pub fn pair(&mut self, first: (Purpose, usize), second: (Purpose, usize)) -> (&mut RngStream, &mut RngStream) {
        assert_ne!(first, second, "a stream cannot be borrowed twice");
        self.get(first.0, first.1);
        self.get(second.0, second.1);
        let a = (first.0, first.1 as u32);
        let b = (second.0, second.1 as u32);
        let mut out_a = None;
        let mut out_b = None;
        for (k, v) in self.streams.iter_mut() {
            if *k == a {
                out_a = Some(v);
            } else if *k == b {
                out_b = Some(v);
            }
        }
        (out_a.unwrap(), out_b.unwrap())
    }
}
