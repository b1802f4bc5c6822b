//! Random streams, fine-grid Brownian paths and their ε-skeletons.
//!
//! A [`Skeleton`] is the step function that follows a Brownian path in
//! increments of exactly ±ε: a new jump is recorded at the first time the
//! path has moved ε away from the current level. Skeletons can be extracted
//! from a sampled [`FinePath`] (so that several ε share one path) or sampled
//! directly with exact inter-jump durations via [`sample_skeleton`].

mod exit_time;

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_positive, param};
use crate::io::{fmt_real, write_rows};
use crate::Result;

pub(crate) use exit_time::unit_exit_from_uniform;
pub use exit_time::{
    exit_laplace, exit_tail_bounds, sample_exit_time, sample_unit_exit_time, simulate_grid_exit,
    unit_exit_cdf, unit_exit_density, unit_exit_quantile, unit_exit_survival,
};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id selecting one of its 2^64
/// independent streams, so replicas can be handed distinct ids and run in
/// any order or on any thread without changing their draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// A uniform on (0, 1) from the top 53 bits of one 64-bit draw and a
    /// fair coin from its lowest bit.
    #[inline]
    pub fn uniform_and_coin(&mut self) -> (f64, bool) {
        let bits = self.inner.next_u64();
        let u = ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        (u, bits & 1 == 1)
    }

    /// Fair coin.
    #[inline]
    pub fn coin(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias for n << 2^64 is far below
        // anything a simulation can resolve.
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as u64
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
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

/// Brownian motion sampled on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    dt: f64,
    horizon: f64,
    values: Vec<f64>,
}

impl FinePath {
    /// Builds a path from grid values; `values[j]` is the value at `j * dt`.
    pub fn from_values(dt: f64, values: Vec<f64>) -> Result<Self> {
        ensure_positive("dt", dt)?;
        if values.is_empty() {
            return Err(param("values", "a path needs at least one grid point"));
        }
        let horizon = dt * (values.len() - 1) as f64;
        Ok(Self {
            dt,
            horizon,
            values,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    /// Translates the whole path so that it starts at `origin`.
    pub fn with_origin(mut self, origin: f64) -> Self {
        let shift = origin - self.values[0];
        for v in &mut self.values {
            *v += shift;
        }
        self
    }
}

/// Number of grid points for a horizon, tolerant to `horizon / dt` landing a
/// hair below an integer.
pub(crate) fn grid_points(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) * (1.0 + 1e-12)).floor() as usize + 1
}

/// Samples a standard Brownian path on `[0, horizon]` with step `dt`,
/// starting at 0.
pub fn gen_fine_path(horizon: f64, dt: f64, rng: &mut RngStream) -> Result<FinePath> {
    ensure_positive("horizon", horizon)?;
    ensure_positive("dt", dt)?;
    if dt > horizon {
        return Err(param("dt", format!("step {dt} exceeds horizon {horizon}")));
    }
    let n = grid_points(horizon, dt);
    let scale = dt.sqrt();
    let mut values = Vec::with_capacity(n);
    let mut b = 0.0;
    values.push(b);
    for _ in 1..n {
        b += scale * rng.standard_normal();
        values.push(b);
    }
    Ok(FinePath {
        dt,
        horizon: dt * (n - 1) as f64,
        values,
    })
}

/// Piecewise-constant ε-approximation of a Brownian path.
///
/// Segment `i` covers `[jump_times[i], jump_times[i + 1])` (the last one runs
/// to `horizon`) and carries `levels[i]`. `jump_times[0]` is always 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    epsilon: f64,
    jump_times: Vec<f64>,
    levels: Vec<f64>,
    horizon: f64,
}

impl Skeleton {
    /// Validating constructor.
    pub fn new(epsilon: f64, jump_times: Vec<f64>, levels: Vec<f64>, horizon: f64) -> Result<Self> {
        ensure_positive("epsilon", epsilon)?;
        if jump_times.is_empty() || jump_times.len() != levels.len() {
            return Err(param(
                "levels",
                "need one level per segment and at least one segment",
            ));
        }
        if jump_times[0] != 0.0 {
            return Err(param("jump_times", "first segment must start at time 0"));
        }
        if jump_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(param("jump_times", "must be strictly increasing"));
        }
        if horizon < *jump_times.last().unwrap() {
            return Err(param("horizon", "ends before the last jump"));
        }
        let tol = 1e-9 * epsilon;
        if levels
            .windows(2)
            .any(|w| ((w[1] - w[0]).abs() - epsilon).abs() > tol)
        {
            return Err(param("levels", "consecutive levels must differ by exactly ±epsilon"));
        }
        Ok(Self {
            epsilon,
            jump_times,
            levels,
            horizon,
        })
    }

    /// Skeleton that never jumps.
    pub fn constant(epsilon: f64, level: f64, horizon: f64) -> Self {
        Self {
            epsilon,
            jump_times: vec![0.0],
            levels: vec![level],
            horizon,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of segments (jumps + 1).
    pub fn segments(&self) -> usize {
        self.levels.len()
    }

    pub fn jumps(&self) -> usize {
        self.levels.len() - 1
    }

    /// End time of segment `i`.
    pub fn segment_end(&self, i: usize) -> f64 {
        self.jump_times.get(i + 1).copied().unwrap_or(self.horizon)
    }

    /// Completed inter-jump durations σ_i; the open last segment is excluded.
    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.jump_times.windows(2).map(|w| w[1] - w[0])
    }

    /// Index of the segment containing `t` (clamped to the first segment for
    /// negative times).
    pub fn segment_at(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn level_at(&self, t: f64) -> f64 {
        self.levels[self.segment_at(t)]
    }

    /// Skeleton of the negated path.
    pub fn mirrored(&self) -> Self {
        Self {
            epsilon: self.epsilon,
            jump_times: self.jump_times.clone(),
            levels: self.levels.iter().map(|l| -l).collect(),
            horizon: self.horizon,
        }
    }

    /// CSV with columns `jump_time,level`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(
            writer,
            &["jump_time", "level"],
            self.jump_times
                .iter()
                .zip(&self.levels)
                .map(|(t, l)| vec![fmt_real(*t), fmt_real(*l)]),
        )
    }
}

/// Extracts the ε-skeleton of a grid path.
///
/// A jump is recorded at the first grid time where the path is at least ε
/// away from the current level; the new level is the old one moved by
/// exactly ±ε, not the overshooting grid value. Grid steps should satisfy
/// `dt << ε²`; with coarser grids a single step can overshoot by more than
/// ε and the skeleton then lags the path by the excess.
pub fn extract_skeleton(path: &FinePath, epsilon: f64) -> Result<Skeleton> {
    ensure_positive("epsilon", epsilon)?;
    if path.dt > 1e-2 * epsilon * epsilon {
        log::warn!(
            "grid step {} is not small against epsilon^2 = {}; crossing times are biased",
            path.dt,
            epsilon * epsilon
        );
    }
    let values = path.values();
    let mut level = values[0];
    let mut jump_times = vec![0.0];
    let mut levels = vec![level];
    for (j, &b) in values.iter().enumerate().skip(1) {
        let diff = b - level;
        if diff.abs() >= epsilon {
            level += epsilon.copysign(diff);
            jump_times.push(path.time(j));
            levels.push(level);
        }
    }
    Ok(Skeleton {
        epsilon,
        jump_times,
        levels,
        horizon: path.horizon,
    })
}

/// Samples an ε-skeleton directly: exact exit-time durations and fair ±ε
/// jumps, up to `horizon`.
pub fn sample_skeleton(
    epsilon: f64,
    horizon: f64,
    origin: f64,
    rng: &mut RngStream,
) -> Result<Skeleton> {
    ensure_positive("epsilon", epsilon)?;
    ensure_positive("horizon", horizon)?;
    let mut jump_times = vec![0.0];
    let mut levels = vec![origin];
    let mut t = 0.0;
    let mut level = origin;
    loop {
        t += sample_exit_time(epsilon, rng);
        if t > horizon {
            break;
        }
        level += if rng.coin() { epsilon } else { -epsilon };
        jump_times.push(t);
        levels.push(level);
    }
    Ok(Skeleton {
        epsilon,
        jump_times,
        levels,
        horizon,
    })
}
