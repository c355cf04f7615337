//! Counter-based random streams.
//!
//! Every uniform is a pure function of `(seed, trial, vertex, kind, index)`:
//! the key is folded through a chain of 64-bit finalizer rounds and the top
//! 53 bits become a uniform in the open interval (0, 1). Nothing is
//! sequential, so any draw of any vertex can be produced in O(1) and two
//! processes that read the same GROWTH stream see the same clocks.
//!
//! Exponential variates use `libm::log` so arrival times do not depend on
//! the platform's math library.

use serde::{Deserialize, Serialize};

use crate::stats::{ks_one_sample, KsResult};
use crate::topology::VertexId;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const TRIAL_MUL: u64 = 0xd1b5_4a32_d192_ed03;
const INDEX_MUL: u64 = 0xaef1_7502_108e_f2d9;

/// p-value threshold used by the exponential self-test.
pub const SELF_TEST_ALPHA: f64 = 1e-3;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn to_open_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF Exp(1) draw from a uniform in (0, 1).
#[inline]
pub fn exp1_from_uniform(u: f64) -> f64 {
    -libm::log(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    /// Rate-1 growth clocks, shared by the forest-fire and pure growth processes.
    Growth,
    /// Lightning clocks of the forest-fire process.
    Ignition,
    /// Independent Bernoulli refresh used by self-destructive percolation in
    /// probability parametrization.
    Refresh,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Growth => 0x47_52_4f_57,
            StreamKind::Ignition => 0x49_47_4e_49,
            StreamKind::Refresh => 0x52_46_53_48,
        }
    }
}

#[inline]
fn trial_base(seed: u64, trial: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN) ^ trial.wrapping_mul(TRIAL_MUL))
}

#[inline]
fn kind_base(trial_base: u64, kind: StreamKind) -> u64 {
    mix64(trial_base ^ kind.tag())
}

#[inline]
fn keyed(kind_base: u64, vertex: u64, index: u64) -> u64 {
    let x = mix64(kind_base ^ vertex.wrapping_mul(GOLDEN));
    mix64(x ^ index.wrapping_mul(INDEX_MUL))
}

/// Full key of one uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub trial: u64,
    pub vertex: VertexId,
    pub kind: StreamKind,
    /// Draw counter, starting at 1.
    pub index: u64,
}

impl StreamKey {
    pub fn uniform(&self) -> f64 {
        let kb = kind_base(trial_base(self.seed, self.trial), self.kind);
        to_open_unit(keyed(kb, self.vertex.0, self.index))
    }
}

/// Seed and trial with precomputed per-kind bases, for hot loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStreams {
    seed: u64,
    trial: u64,
    growth: u64,
    ignition: u64,
    refresh: u64,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        let base = trial_base(seed, trial);
        Self {
            seed,
            trial,
            growth: kind_base(base, StreamKind::Growth),
            ignition: kind_base(base, StreamKind::Ignition),
            refresh: kind_base(base, StreamKind::Refresh),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    #[inline]
    fn base(&self, kind: StreamKind) -> u64 {
        match kind {
            StreamKind::Growth => self.growth,
            StreamKind::Ignition => self.ignition,
            StreamKind::Refresh => self.refresh,
        }
    }

    /// Uniform in (0, 1) for `(vertex, kind, index)`.
    #[inline]
    pub fn uniform(&self, vertex: VertexId, kind: StreamKind, index: u64) -> f64 {
        to_open_unit(keyed(self.base(kind), vertex.0, index))
    }

    /// The `index`-th Exp(1) gap of a stream.
    #[inline]
    pub fn exp_gap(&self, vertex: VertexId, kind: StreamKind, index: u64) -> f64 {
        exp1_from_uniform(self.uniform(vertex, kind, index))
    }

    /// First growth arrival of `vertex`; the pure growth process occupies
    /// the vertex from this time on.
    #[inline]
    pub fn first_growth(&self, vertex: VertexId) -> f64 {
        self.exp_gap(vertex, StreamKind::Growth, 1)
    }

    /// Rate-1 cumulative arrival times of one stream.
    pub fn arrivals(&self, vertex: VertexId, kind: StreamKind) -> Arrivals {
        Arrivals {
            streams: *self,
            vertex,
            kind,
            index: 0,
            time: 0.0,
        }
    }

    pub fn clock(&self, vertex: VertexId, kind: StreamKind) -> ClockStream {
        ClockStream {
            streams: *self,
            vertex,
            kind,
            cumulative: Vec::new(),
        }
    }
}

/// Iterator over `(index, rate-1 arrival time)` of one keyed stream.
/// Arrival times of a rate-`λ` process are these values divided by `λ`.
#[derive(Debug, Clone)]
pub struct Arrivals {
    streams: TrialStreams,
    vertex: VertexId,
    kind: StreamKind,
    index: u64,
    time: f64,
}

impl Arrivals {
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

impl Iterator for Arrivals {
    type Item = (u64, f64);

    #[inline]
    fn next(&mut self) -> Option<(u64, f64)> {
        self.index += 1;
        self.time += self.streams.exp_gap(self.vertex, self.kind, self.index);
        Some((self.index, self.time))
    }
}

/// A keyed Poisson clock with cached rate-1 arrival times.
///
/// For `kind = Growth` this is one vertex's growth process; the ignition
/// clock is the same object read at rate `λ`.
#[derive(Debug, Clone)]
pub struct ClockStream {
    streams: TrialStreams,
    vertex: VertexId,
    kind: StreamKind,
    cumulative: Vec<f64>,
}

/// Growth clocks are plain clock streams of kind `Growth`.
pub type GrowthClockStream = ClockStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClockError {
    #[error("arrival index must be at least 1")]
    ZeroIndex,
    #[error("rate must be positive and finite, got {0}")]
    BadRate(f64),
}

impl ClockStream {
    pub fn vertex(&self) -> VertexId {
        self.vertex
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    /// k-th arrival time of a rate-`rate` Poisson process driven by this stream.
    pub fn nth_arrival(&mut self, k: u64, rate: f64) -> Result<f64, ClockError> {
        if k == 0 {
            return Err(ClockError::ZeroIndex);
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(ClockError::BadRate(rate));
        }
        while (self.cumulative.len() as u64) < k {
            let next = self.cumulative.len() as u64 + 1;
            let prev = self.cumulative.last().copied().unwrap_or(0.0);
            self.cumulative
                .push(prev + self.streams.exp_gap(self.vertex, self.kind, next));
        }
        Ok(self.cumulative[k as usize - 1] / rate)
    }

    /// Number of arrivals in `[0, t]` at the given rate.
    pub fn count_until(&mut self, t: f64, rate: f64) -> Result<u64, ClockError> {
        let mut k = 0;
        while self.nth_arrival(k + 1, rate)? <= t {
            k += 1;
        }
        Ok(k)
    }
}

/// Kolmogorov-Smirnov test of first growth arrivals against Exp(1).
///
/// Draws `samples` keys `(seed, trial 0, vertex i, Growth, 1)`.
pub fn exponential_self_test(seed: u64, samples: usize) -> KsResult {
    let streams = TrialStreams::new(seed, 0);
    let draws: Vec<f64> = (0..samples as u64)
        .map(|v| streams.first_growth(VertexId(v)))
        .collect();
    ks_one_sample(&draws, |x| 1.0 - (-x).exp(), SELF_TEST_ALPHA)
}

/// Folds an experiment coordinate (such as the depth n) into a seed so that
/// different coordinates use independent streams.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix64(mix64(seed ^ 0x5eed_5a17) ^ salt.wrapping_mul(GOLDEN))
}
