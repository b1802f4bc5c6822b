//! The distance chain `Φ = (B - X, Y - B)` observed just before each jump of
//! the ε-skeleton, and the experiments built on it.
//!
//! One step: the price jumps by ±ε (fair coin), which moves the state to
//! `(x + ε, (y - ε) ∨ 0)` or `((x - ε) ∨ 0, y + ε)`; then both coordinates
//! drift toward 0 for an exit-time-distributed duration σ.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{ensure_positive, param};
use crate::io::{fmt_real, write_rows};
use crate::rng_paths::{sample_exit_time, unit_exit_density, unit_exit_from_uniform, unit_exit_survival, RngStream};
use crate::stalker::{h_dist, DriftParams};
use crate::stats::{wilson_interval, Z95};
use crate::Result;

/// Distances of the two stalkers from the price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiState {
    pub x: f64,
    pub y: f64,
}

impl PhiState {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) {
            return Err(param("state", format!("coordinates must be finite and >= 0, got ({x}, {y})")));
        }
        Ok(Self { x, y })
    }

    pub const fn origin() -> Self {
        Self { x: 0.0, y: 0.0 }
    }

    /// `Y - X`.
    pub fn l1(&self) -> f64 {
        self.x + self.y
    }

    /// Coordinatewise `<=`.
    pub fn dominated_by(&self, other: &PhiState) -> bool {
        self.x <= other.x && self.y <= other.y
    }
}

/// The rungs `4^(k-1) < 4^k < 4^(k+1)` of the ℓ₁ ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSets {
    k: i32,
    lo: f64,
    mid: f64,
    hi: f64,
}

impl LevelSets {
    pub fn new(k: i32) -> Result<Self> {
        let mid = 4f64.powi(k);
        if !(mid.is_finite() && mid > 0.0 && (4.0 * mid).is_finite()) {
            return Err(param("k", format!("4^{k} is not representable")));
        }
        Ok(Self {
            k,
            lo: mid / 4.0,
            mid,
            hi: mid * 4.0,
        })
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn mid(&self) -> f64 {
        self.mid
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Within relative rounding of the middle rung.
    pub fn on_mid(&self, state: &PhiState) -> bool {
        (state.l1() - self.mid).abs() <= 1e-9 * self.mid
    }

    /// Closed lower target `x + y <= 4^(k-1)`.
    pub fn in_lower(&self, state: &PhiState) -> bool {
        state.l1() <= self.lo
    }

    /// Closed upper target `x + y >= 4^(k+1)`.
    pub fn in_upper(&self, state: &PhiState) -> bool {
        state.l1() >= self.hi
    }
}

/// The jump half of a step. `price_up` widens the gap to X and narrows the
/// gap to Y.
#[inline]
pub fn jump(state: PhiState, eps: f64, price_up: bool) -> PhiState {
    // Branch-free: the direction is a coin flip and would mispredict half
    // the time.
    let shift = if price_up { eps } else { -eps };
    PhiState {
        x: (state.x + shift).max(0.0),
        y: (state.y - shift).max(0.0),
    }
}

/// The drift half of a step.
#[inline]
pub fn drift(state: PhiState, sigma: f64, params: &DriftParams) -> PhiState {
    PhiState {
        x: h_dist(sigma, state.x, params),
        y: h_dist(sigma, state.y, params),
    }
}

/// One step with given randomness.
#[inline]
pub fn step_with(state: PhiState, eps: f64, params: &DriftParams, price_up: bool, sigma: f64) -> PhiState {
    drift(jump(state, eps, price_up), sigma, params)
}

/// One step of the chain. The jump direction and the exit time come from
/// the same 64-bit draw (disjoint bits).
#[inline]
pub fn phi_step(state: PhiState, eps: f64, params: &DriftParams, rng: &mut RngStream) -> PhiState {
    let (u, price_up) = rng.uniform_and_coin();
    let sigma = eps * eps * unit_exit_from_uniform(u);
    step_with(state, eps, params, price_up, sigma)
}

/// Iterates the chain for `steps` steps, returning every visited state
/// including the start.
pub fn phi_path(start: PhiState, eps: f64, params: &DriftParams, steps: usize, rng: &mut RngStream) -> Vec<PhiState> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut state = start;
    out.push(state);
    for _ in 0..steps {
        state = phi_step(state, eps, params, rng);
        out.push(state);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitOutcome {
    Lower,
    Upper,
    Censored,
}

/// Runs the chain until it enters the lower or upper target, or the step
/// budget is spent. Returns the outcome and the number of steps taken.
pub fn run_to_targets(
    start: PhiState,
    levels: &LevelSets,
    eps: f64,
    params: &DriftParams,
    budget: u64,
    rng: &mut RngStream,
) -> (HitOutcome, u64) {
    let mut state = start;
    for n in 1..=budget {
        state = phi_step(state, eps, params, rng);
        let l1 = state.l1();
        if l1 <= levels.lo {
            return (HitOutcome::Lower, n);
        }
        if l1 >= levels.hi {
            return (HitOutcome::Upper, n);
        }
    }
    (HitOutcome::Censored, budget)
}

/// Hitting-probability experiment `P(lower target before upper target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingSpec {
    pub k: i32,
    pub start: PhiState,
    pub eps: f64,
    pub gamma: f64,
    pub replicas: u64,
    pub step_budget: u64,
    pub seed: u64,
}

impl HittingSpec {
    pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HittingResult {
    pub k: i32,
    pub gamma: f64,
    pub eps: f64,
    pub replicas: u64,
    pub lower_first: u64,
    pub upper_first: u64,
    pub censored: u64,
    /// Fraction of decided replicas that reached the lower target first.
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub total_steps: u64,
}

impl HittingResult {
    pub const HEADER: [&'static str; 8] =
        ["k", "gamma", "eps", "replicas", "estimate", "ci_lo", "ci_hi", "censored"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            fmt_real(self.gamma),
            fmt_real(self.eps),
            self.replicas.to_string(),
            fmt_real(self.estimate),
            fmt_real(self.ci_lo),
            fmt_real(self.ci_hi),
            self.censored.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &Self::HEADER, [self.csv_row()])
    }
}

/// Replica `r` uses stream `r` of `spec.seed`, so the result does not depend
/// on how replicas are spread over threads.
pub fn hitting_experiment(spec: &HittingSpec) -> Result<HittingResult> {
    ensure_positive("eps", spec.eps)?;
    let params = DriftParams::new(spec.gamma)?;
    let levels = LevelSets::new(spec.k)?;
    PhiState::new(spec.start.x, spec.start.y)?;
    if !levels.on_mid(&spec.start) {
        return Err(param(
            "start",
            format!("x + y must equal 4^k = {}, got {}", levels.mid, spec.start.l1()),
        ));
    }
    if spec.replicas == 0 {
        return Err(param("replicas", "must be at least 1"));
    }
    if spec.step_budget == 0 {
        return Err(param("step_budget", "must be at least 1"));
    }
    let outcomes: Vec<(HitOutcome, u64)> = (0..spec.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(spec.seed, r);
            run_to_targets(spec.start, &levels, spec.eps, &params, spec.step_budget, &mut rng)
        })
        .collect();
    let (mut lower_first, mut upper_first, mut censored, mut total_steps) = (0, 0, 0, 0);
    for (outcome, steps) in outcomes {
        total_steps += steps;
        match outcome {
            HitOutcome::Lower => lower_first += 1,
            HitOutcome::Upper => upper_first += 1,
            HitOutcome::Censored => censored += 1,
        }
    }
    let decided = lower_first + upper_first;
    let estimate = if decided == 0 {
        f64::NAN
    } else {
        lower_first as f64 / decided as f64
    };
    let (ci_lo, ci_hi) = wilson_interval(lower_first, decided, Z95);
    Ok(HittingResult {
        k: spec.k,
        gamma: spec.gamma,
        eps: spec.eps,
        replicas: spec.replicas,
        lower_first,
        upper_first,
        censored,
        estimate,
        ci_lo,
        ci_hi,
        total_steps,
    })
}

/// Probability that a simple symmetric walk from 0 reaches -1 before `k`.
pub fn gambler_ruin(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(param("k", "must be at least 1"));
    }
    Ok(k as f64 / (k as f64 + 1.0))
}

/// Fraction of `replicas` simulated walks from 0 that reach -1 before `k`.
pub fn simulate_ruin(k: u64, replicas: u64, rng: &mut RngStream) -> Result<f64> {
    gambler_ruin(k)?;
    let target = k as i64;
    let mut hits = 0u64;
    for _ in 0..replicas {
        let mut pos = 0i64;
        while pos > -1 && pos < target {
            pos += if rng.coin() { 1 } else { -1 };
        }
        if pos == -1 {
            hits += 1;
        }
    }
    Ok(hits as f64 / replicas as f64)
}

fn axis_escape_steps(k: i32, eps: f64) -> u64 {
    (3.0 * 4f64.powi(k) / eps * (1.0 + 1e-12)).floor() as u64
}

/// Probability that a particle on an axis at height `4^k` keeps losing the
/// "reach the bisector" gambler's-ruin game until it is past `4^(k+1)`:
/// `∏_{i<n} (4^k/2 + iε) / (4^k/2 + (i+1)ε)` with `n = ⌊3·4^k/ε⌋`.
///
/// The product telescopes to `(4^k/2) / (4^k/2 + nε)`, i.e. `1/7` whenever
/// ε divides `3·4^k`.
pub fn axis_escape_probability(k: i32, eps: f64) -> f64 {
    let a = 4f64.powi(k) / 2.0;
    let n = axis_escape_steps(k, eps);
    (0..n).fold(1.0, |acc, i| {
        let left = a + i as f64 * eps;
        acc * (left / (left + eps))
    })
}

/// The coarser bound `(1 - 2ε/(7·4^k))^n` on the same probability, which
/// tends to `exp(-6/7)` as ε → 0.
pub fn axis_escape_bound(k: i32, eps: f64) -> f64 {
    let n = axis_escape_steps(k, eps);
    (1.0 - 2.0 * eps / (7.0 * 4f64.powi(k))).powf(n as f64)
}

/// Drift speed orthogonal to the ℓ₁ level sets.
pub fn drift_speed(state: PhiState, gamma: f64) -> f64 {
    ((1.0 + state.x).powf(-2.0 * gamma) + (1.0 + state.y).powf(-2.0 * gamma)).sqrt()
}

/// Minimum of [`drift_speed`] over `x + y <= 4^(k+1)`, attained at
/// `(2·4^k, 2·4^k)`.
pub fn min_drift_speed(k: i32, gamma: f64) -> f64 {
    2f64.sqrt() * (1.0 + 2.0 * 4f64.powi(k)).powf(-gamma)
}

/// Largest `y` such that a particle drifting from `(x, y)` is inside the
/// lower target `x + y <= 4^(k-1)` when its first coordinate reaches 0.
pub fn tube_boundary(x: f64, k: i32, gamma: f64) -> f64 {
    let e = gamma + 1.0;
    let lo = 4f64.powi(k - 1);
    ((lo + 1.0).powf(e) + (x + 1.0).powf(e) - 1.0).powf(1.0 / e) - 1.0
}

/// Width of the safe tube around the diagonal at `(2·4^k, 2·4^k)`.
pub fn tube_diameter_lower(k: i32, gamma: f64) -> f64 {
    let x = 2.0 * 4f64.powi(k);
    2f64.sqrt() * (tube_boundary(x, k, gamma) - x)
}

/// Limit of `tube_diameter_lower(k, 1) / 4^k` as `k` grows:
/// `(√65 - 8) / (2√2)`.
pub fn tube_constant() -> f64 {
    (65f64.sqrt() - 8.0) / (2.0 * 2f64.sqrt())
}

/// `‖(x + 1, y + 1)‖_{γ+1}`.
pub fn shifted_norm(state: PhiState, gamma: f64) -> f64 {
    let e = gamma + 1.0;
    ((state.x + 1.0).powf(e) + (state.y + 1.0).powf(e)).powf(1.0 / e)
}

/// The bounded Lyapunov function `1 - ‖(x + 1, y + 1)‖_{γ+1}^{-1}`.
pub fn test_function(state: PhiState, gamma: f64) -> f64 {
    1.0 - 1.0 / shifted_norm(state, gamma)
}

/// Point on the norm sphere `‖(x + 1, y + 1)‖_{γ+1} = z` with first
/// coordinate `x` (requires `x + 1 < z` and `y >= 0` to exist).
pub fn norm_sphere_point(z: f64, x: f64, gamma: f64) -> Option<PhiState> {
    let e = gamma + 1.0;
    let rest = z.powf(e) - (x + 1.0).powf(e);
    if rest <= 0.0 {
        return None;
    }
    let y = rest.powf(1.0 / e) - 1.0;
    (y >= 0.0).then_some(PhiState { x, y })
}

/// Second-order condition `γ((x+1)^(γ-1) + (y+1)^(γ-1)) >= 4` under which
/// the test function is subharmonic at `state` for small ε.
pub fn taylor_condition(state: PhiState, gamma: f64) -> bool {
    gamma * ((state.x + 1.0).powf(gamma - 1.0) + (state.y + 1.0).powf(gamma - 1.0)) >= 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMethod {
    MonteCarlo,
    Quadrature,
}

impl GeneratorMethod {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorMethod::MonteCarlo => "monte_carlo",
            GeneratorMethod::Quadrature => "quadrature",
        }
    }
}

/// Estimate of `E[g(next)] - g(state)` for the test function `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorEstimate {
    pub state: PhiState,
    pub eps: f64,
    pub gamma: f64,
    pub lg_value: f64,
    pub std_err: f64,
    pub method: GeneratorMethod,
}

/// `g` after one step with drift time `sigma`, averaged over the two jump
/// directions, minus `g(state)`.
fn branch_averaged_gain(state: PhiState, eps: f64, params: &DriftParams, sigma: f64, base: f64) -> f64 {
    let gamma = params.gamma();
    let up = test_function(step_with(state, eps, params, true, sigma), gamma);
    let down = test_function(step_with(state, eps, params, false, sigma), gamma);
    0.5 * (up - base) + 0.5 * (down - base)
}

/// Upper end, in units of ε², of the integration range; the exit-time
/// survival there is below 1e-16.
const GENERATOR_CUTOFF: f64 = 30.0;

pub fn generator_gap_quadrature(state: PhiState, eps: f64, gamma: f64) -> Result<GeneratorEstimate> {
    ensure_positive("eps", eps)?;
    let params = DriftParams::new(gamma)?;
    let state = PhiState::new(state.x, state.y)?;
    let base = test_function(state, gamma);
    let e2 = eps * eps;
    let integrand = |u: f64| unit_exit_density(u) * branch_averaged_gain(state, eps, &params, e2 * u, base);
    let near = quadrature::double_exponential::integrate(integrand, 0.0, 10.0, 1e-16);
    let far = quadrature::double_exponential::integrate(integrand, 10.0, GENERATOR_CUTOFF, 1e-16);
    // The gain is bounded by 1 in absolute value, so the neglected mass
    // beyond the cutoff bounds the truncation error.
    let tail = unit_exit_survival(GENERATOR_CUTOFF);
    Ok(GeneratorEstimate {
        state,
        eps,
        gamma,
        lg_value: near.integral + far.integral,
        std_err: near.error_estimate + far.error_estimate + tail,
        method: GeneratorMethod::Quadrature,
    })
}

pub fn generator_gap_monte_carlo(
    state: PhiState,
    eps: f64,
    gamma: f64,
    samples: u64,
    rng: &mut RngStream,
) -> Result<GeneratorEstimate> {
    ensure_positive("eps", eps)?;
    if samples < 2 {
        return Err(param("samples", "need at least 2 samples"));
    }
    let params = DriftParams::new(gamma)?;
    let state = PhiState::new(state.x, state.y)?;
    let base = test_function(state, gamma);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let v = branch_averaged_gain(state, eps, &params, sample_exit_time(eps, rng), base);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(GeneratorEstimate {
        state,
        eps,
        gamma,
        lg_value: mean,
        std_err: (var / n).sqrt(),
        method: GeneratorMethod::MonteCarlo,
    })
}

/// Dispatches on `method`; `samples` and `rng` are only used by Monte Carlo.
pub fn generator_gap(
    state: PhiState,
    eps: f64,
    gamma: f64,
    method: GeneratorMethod,
    samples: u64,
    rng: &mut RngStream,
) -> Result<GeneratorEstimate> {
    match method {
        GeneratorMethod::Quadrature => generator_gap_quadrature(state, eps, gamma),
        GeneratorMethod::MonteCarlo => generator_gap_monte_carlo(state, eps, gamma, samples, rng),
    }
}

/// Generator sign along the diagonal `x = y = s` for each offset `s`,
/// returned as `(z, lg)` with `z = ‖(s+1, s+1)‖_{γ+1}`.
pub fn diagonal_generator_scan(eps: f64, gamma: f64, offsets: &[f64]) -> Result<Vec<(f64, f64)>> {
    offsets
        .iter()
        .map(|&s| {
            let state = PhiState::new(s, s)?;
            let est = generator_gap_quadrature(state, eps, gamma)?;
            Ok((shifted_norm(state, gamma), est.lg_value))
        })
        .collect()
}

/// Smallest scanned `z` from which every scanned point at or beyond it has
/// a positive generator value. `None` if the largest point is not positive.
pub fn empirical_threshold(scan: &[(f64, f64)]) -> Option<f64> {
    let mut sorted = scan.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut threshold = None;
    for &(z, lg) in sorted.iter().rev() {
        if lg > 0.0 {
            threshold = Some(z);
        } else {
            break;
        }
    }
    threshold
}

/// How long a ±1 walk stays inside `(-D·4^k/ε, D·4^k/ε)` compared with
/// `c` times its expected exit time.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeResidenceReport {
    pub k: i32,
    pub eps: f64,
    pub c: f64,
    pub half_width: f64,
    pub expected_exit_steps: f64,
    pub replicas: u64,
    /// Empirical probability of staying at least `c · expected_exit_steps`
    /// steps.
    pub p_c: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Optimal exponential-moment parameter in the exit bound.
    pub alpha: f64,
    /// Upper bound on the probability of leaving early, in the Brownian
    /// limit.
    pub early_exit_bound: f64,
}

/// Solves `cosh √(2α) = sinh √(2α) / (c √(2α))` for `α`, `0 < c < 1`.
pub fn optimal_alpha(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(param("c", format!("must lie in (0, 1), got {c}")));
    }
    // tanh(s)/s decreases from 1 to 0, so bisect on s = √(2α).
    let f = |s: f64| s.tanh() / s - c;
    let (mut lo, mut hi) = (1e-8, 1.0 / c + 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(0.5 * s * s)
}

/// `c √(2α) e^{αc} / sinh √(2α)` at the optimal α; bounds
/// `P(exit time of (-1, 1) < c)`.
pub fn early_exit_bound(c: f64) -> Result<f64> {
    let alpha = optimal_alpha(c)?;
    let s = (2.0 * alpha).sqrt();
    Ok(c * s * (alpha * c).exp() / s.sinh())
}

pub fn tube_residence(k: i32, eps: f64, c: f64, replicas: u64, seed: u64) -> Result<TubeResidenceReport> {
    ensure_positive("eps", eps)?;
    if replicas == 0 {
        return Err(param("replicas", "must be at least 1"));
    }
    let alpha = optimal_alpha(c)?;
    let half_width = tube_constant() * 4f64.powi(k) / eps;
    let expected = half_width * half_width;
    let needed = (c * expected).ceil() as u64;
    let stayed: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r);
            let mut pos = 0i64;
            for _ in 0..needed {
                pos += if rng.coin() { 1 } else { -1 };
                if (pos.unsigned_abs() as f64) >= half_width {
                    return 0;
                }
            }
            1
        })
        .sum();
    let (ci_lo, ci_hi) = wilson_interval(stayed, replicas, Z95);
    Ok(TubeResidenceReport {
        k,
        eps,
        c,
        half_width,
        expected_exit_steps: expected,
        replicas,
        p_c: stayed as f64 / replicas as f64,
        ci_lo,
        ci_hi,
        alpha,
        early_exit_bound: early_exit_bound(c)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_paths::{exit_laplace, sample_skeleton, unit_exit_cdf};
    use crate::stalker::StalkerTrajectory;
    use crate::stats::ks_two_sample;
    use proptest::prelude::*;

    fn params(gamma: f64) -> DriftParams {
        DriftParams::new(gamma).unwrap()
    }

    fn st(x: f64, y: f64) -> PhiState {
        PhiState::new(x, y).unwrap()
    }

    #[test]
    fn state_validation() {
        assert!(PhiState::new(-0.1, 1.0).is_err());
        assert!(PhiState::new(1.0, f64::NAN).is_err());
        assert_eq!(st(1.0, 2.5).l1(), 3.5);
    }

    #[test]
    fn level_sets_are_closed() {
        let l = LevelSets::new(1).unwrap();
        assert_eq!((l.lo(), l.mid(), l.hi()), (1.0, 4.0, 16.0));
        assert!(l.in_lower(&st(0.5, 0.5)));
        assert!(l.in_upper(&st(16.0, 0.0)));
        assert!(!l.in_lower(&st(0.5, 0.51)));
        assert!(l.on_mid(&st(1.0, 3.0)));
    }

    #[test]
    fn first_jump_from_origin_is_fair() {
        let mut rng = RngStream::new(10, 0);
        let n = 10_000;
        let mut toward_x = 0;
        for _ in 0..n {
            let up = rng.coin();
            let post = jump(PhiState::origin(), 0.1, up);
            assert!(post == st(0.1, 0.0) || post == st(0.0, 0.1));
            if post.x > 0.0 {
                toward_x += 1;
            }
        }
        let (lo, hi) = wilson_interval(toward_x, n, 3.29);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn long_drift_absorbs_at_origin() {
        let p = params(1.3);
        let s = st(2.0, 0.7);
        let post = jump(s, 0.1, true);
        let sigma = p.saturation_time(post.x.max(post.y)) + 1e-9;
        assert_eq!(step_with(s, 0.1, &p, true, sigma), PhiState::origin());
    }

    proptest! {
        #[test]
        fn l1_grows_only_near_axes(x in 0.0f64..10.0, y in 0.0f64..10.0, up in any::<bool>(), u in 0.0f64..50.0, gamma in 0.3f64..3.0) {
            let eps = 0.1;
            let p = params(gamma);
            let s = st(x, y);
            let post = jump(s, eps, up);
            if x >= eps && y >= eps {
                prop_assert!((post.l1() - s.l1()).abs() <= 1e-12 * (1.0 + s.l1()));
            }
            let next = drift(post, eps * eps * u, &p);
            prop_assert!(next.l1() <= post.l1());
            prop_assert!(next.l1() <= s.l1() + eps + 1e-12);
            if x >= eps && y >= eps {
                prop_assert!(next.l1() <= s.l1() + 1e-12 * (1.0 + s.l1()));
            }
        }

        #[test]
        fn monotone_coupling(x in 0.0f64..5.0, y in 0.0f64..5.0, dx in 0.0f64..2.0, dy in 0.0f64..2.0, seed in 0u64..1000) {
            let p = params(1.2);
            let mut a = st(x, y);
            let mut b = st(x + dx, y + dy);
            let mut rng = RngStream::new(seed, 0);
            for _ in 0..200 {
                let up = rng.coin();
                let sigma = sample_exit_time(0.1, &mut rng);
                a = step_with(a, 0.1, &p, up, sigma);
                b = step_with(b, 0.1, &p, up, sigma);
                prop_assert!(a.dominated_by(&b));
            }
        }
    }

    #[test]
    fn evolve_and_chain_agree_in_law() {
        let (eps, gamma, steps, samples) = (0.1, 1.0, 40, 10_000u64);
        let p = params(gamma);
        let mut via_chain = Vec::new();
        let mut via_skeleton = Vec::new();
        for r in 0..samples {
            let mut rng = RngStream::new(11, r);
            let path = phi_path(PhiState::origin(), eps, &p, steps, &mut rng);
            via_chain.push(path[steps].l1());

            let mut rng = RngStream::new(12, r);
            let horizon = 5.0 * steps as f64 * eps * eps;
            let sk = sample_skeleton(eps, horizon, 0.0, &mut rng).unwrap();
            assert!(sk.jumps() > steps, "horizon too short");
            let traj = StalkerTrajectory::new(sk, p, 0.0, 0.0);
            let (x, y) = traj.phi_states()[steps];
            via_skeleton.push(x + y);
        }
        let (_, pvalue) = ks_two_sample(&via_chain, &via_skeleton);
        assert!(pvalue > 0.01, "KS p = {pvalue}");
    }

    #[test]
    fn hitting_rejects_off_level_start() {
        let spec = HittingSpec {
            k: 1,
            start: st(1.0, 1.0),
            eps: 0.05,
            gamma: 0.5,
            replicas: 10,
            step_budget: 100,
            seed: 0,
        };
        assert!(hitting_experiment(&spec).is_err());
    }

    #[test]
    fn hitting_is_reproducible_and_thread_independent() {
        let spec = HittingSpec {
            k: 0,
            start: st(0.0, 1.0),
            eps: 0.05,
            gamma: 1.0,
            replicas: 64,
            step_budget: 1_000_000,
            seed: 5,
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| hitting_experiment(&spec)).unwrap();
        let b = four.install(|| hitting_experiment(&spec)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lower_first + a.upper_first + a.censored, 64);
    }

    #[test]
    fn censoring_is_counted() {
        let spec = HittingSpec {
            k: 2,
            start: st(8.0, 8.0),
            eps: 0.05,
            gamma: 1.0,
            replicas: 8,
            step_budget: 10,
            seed: 1,
        };
        let r = hitting_experiment(&spec).unwrap();
        assert_eq!(r.censored, 8);
        assert!(r.estimate.is_nan());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("k,gamma,eps,replicas,estimate,ci_lo,ci_hi,censored\n"));
    }

    #[test]
    fn recurrent_regime_prefers_lower_target() {
        let spec = HittingSpec {
            k: 1,
            start: st(0.0, 4.0),
            eps: 0.05,
            gamma: 0.5,
            replicas: 400,
            step_budget: HittingSpec::DEFAULT_STEP_BUDGET,
            seed: 21,
        };
        let axis = hitting_experiment(&spec).unwrap();
        assert!(axis.ci_lo > 0.5, "{axis:?}");
        let diag = hitting_experiment(&HittingSpec {
            start: st(2.0, 2.0),
            ..spec
        })
        .unwrap();
        // The axis start is the worst case.
        assert!(diag.ci_hi >= axis.ci_lo);
    }

    #[test]
    fn gambler_ruin_values() {
        assert!(gambler_ruin(0).is_err());
        assert_eq!(gambler_ruin(1).unwrap(), 0.5);
        assert_eq!(gambler_ruin(3).unwrap(), 0.75);
        let sim = simulate_ruin(10, 100_000, &mut RngStream::new(13, 0)).unwrap();
        assert!((sim - 10.0 / 11.0).abs() < 0.01);
    }

    #[test]
    fn axis_escape_product_telescopes() {
        for (k, eps) in [(0, 1e-3), (1, 1e-3), (0, 0.01), (2, 0.05)] {
            let p = axis_escape_probability(k, eps);
            assert!((p - 1.0 / 7.0).abs() < 1e-9, "k={k} eps={eps}: {p}");
            assert!(p < axis_escape_bound(k, eps));
        }
        assert!((axis_escape_probability(0, 1e-3) - axis_escape_probability(1, 1e-3)).abs() < 1e-2);
        assert!(axis_escape_probability(0, 0.01) >= axis_escape_probability(0, 0.005) - 1e-12);
        let limit = (-6.0f64 / 7.0).exp();
        assert!((axis_escape_bound(0, 1e-5) - limit).abs() < 1e-5);
    }

    #[test]
    fn drift_speed_examples() {
        assert_eq!(drift_speed(PhiState::origin(), 1.7), 2f64.sqrt());
        assert!((drift_speed(st(2.0, 2.0), 1.0) - 2f64.sqrt() / 3.0).abs() < 1e-15);
        assert!((min_drift_speed(0, 1.0) - 2f64.sqrt() / 3.0).abs() < 1e-15);
        for gamma in [0.5, 1.0, 2.0] {
            let k = 1;
            let top = 4f64.powi(k + 1);
            let mut best = (f64::INFINITY, 0.0, 0.0);
            let n = 64;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let (x, y) = (top * i as f64 / n as f64, top * j as f64 / n as f64);
                    let v = drift_speed(st(x, y), gamma);
                    if v < best.0 {
                        best = (v, x, y);
                    }
                }
            }
            assert_eq!((best.1, best.2), (2.0 * 4f64.powi(k), 2.0 * 4f64.powi(k)));
            assert!((best.0 - min_drift_speed(k, gamma)).abs() < 1e-15);
        }
    }

    #[test]
    fn tube_boundary_examples() {
        assert!((tube_boundary(0.0, 1, 1.0) - 1.0).abs() < 1e-15);
        let g2 = tube_boundary(2.0, 1, 1.0);
        assert!((g2 - (2.0 * 3f64.sqrt() - 1.0)).abs() < 1e-14);
        // A particle drifting from (2, g(2)) reaches the axis exactly on
        // the lower rung.
        let p = params(1.0);
        let t_axis = p.saturation_time(2.0);
        assert!((h_dist(t_axis, g2, &p) - 1.0).abs() < 1e-12);
        for gamma in [0.5, 1.0, 2.0] {
            for x in 0..10 {
                let x = x as f64;
                let gap = tube_boundary(x, 1, gamma) - x;
                assert!(gap > 0.0);
                assert!(tube_boundary(x + 1.0, 1, gamma) - (x + 1.0) < gap);
            }
        }
    }

    #[test]
    fn tube_diameter_examples() {
        let d = tube_constant();
        assert!((d - 0.0220).abs() < 1e-4);
        let d3 = tube_diameter_lower(3, 1.0) / 64.0;
        let d5 = tube_diameter_lower(5, 1.0) / 1024.0;
        assert!(d3 >= 0.022, "{d3}");
        assert!((d3 - d5).abs() < 1e-2);
        assert!(tube_diameter_lower(3, 0.5) >= tube_diameter_lower(3, 1.0));
        assert!(tube_diameter_lower(3, 1.0) >= tube_diameter_lower(3, 2.0));
        for k in 3..8 {
            assert!(tube_diameter_lower(k, 0.7) / 4f64.powi(k) >= d);
        }
    }

    #[test]
    fn test_function_examples() {
        assert!((test_function(PhiState::origin(), 1.0) - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!(test_function(st(1e9, 1e9), 1.0) > 1.0 - 1e-8);
        let gamma = 1.5;
        let z = 7.0;
        let reference = norm_sphere_point(z, 0.0, gamma).unwrap();
        for x in [0.5, 1.0, 2.0, 4.0, 5.5] {
            let s = norm_sphere_point(z, x, gamma).unwrap();
            assert!((test_function(s, gamma) - test_function(reference, gamma)).abs() < 1e-14);
        }
        assert!(test_function(st(1.0, 2.0), 2.0) < test_function(st(1.1, 2.0), 2.0));
    }

    #[test]
    fn taylor_condition_examples() {
        assert!(taylor_condition(st(1.0, 1.0), 2.0));
        assert!(!taylor_condition(st(7.0, 3.0), 1.0));
        assert!(taylor_condition(PhiState::origin(), 2.0));
        assert!(!taylor_condition(st(3.0, 3.0), 0.5));
    }

    #[test]
    fn generator_sign_follows_the_taylor_condition() {
        let up = generator_gap_quadrature(st(3.0, 3.0), 0.01, 2.0).unwrap();
        assert!(up.lg_value > 0.0 && up.lg_value > 10.0 * up.std_err, "{up:?}");
        let down = generator_gap_quadrature(st(3.0, 3.0), 0.01, 0.5).unwrap();
        assert!(down.lg_value < 0.0 && -down.lg_value > 10.0 * down.std_err, "{down:?}");
    }

    #[test]
    fn generator_quadrature_matches_monte_carlo() {
        let mut rng = RngStream::new(14, 0);
        let mc = generator_gap_monte_carlo(st(3.0, 3.0), 0.01, 0.5, 1_000_000, &mut rng).unwrap();
        let q = generator_gap_quadrature(st(3.0, 3.0), 0.01, 0.5).unwrap();
        assert!((mc.lg_value - q.lg_value).abs() < 4.0 * mc.std_err + 1e-12, "{mc:?} {q:?}");
        assert!(mc.lg_value < 0.0);
    }

    #[test]
    fn generator_scales_with_eps_squared() {
        for gamma in [0.5, 2.0] {
            let a = generator_gap_quadrature(st(3.0, 3.0), 0.02, gamma).unwrap().lg_value;
            let b = generator_gap_quadrature(st(3.0, 3.0), 0.01, gamma).unwrap().lg_value;
            let ratio = a / b;
            assert!((ratio - 4.0).abs() < 1.2, "gamma={gamma}: ratio {ratio}");
        }
    }

    #[test]
    fn generator_positive_on_axis() {
        for gamma in [0.5, 1.0, 2.0] {
            let est = generator_gap_quadrature(st(0.0, 5.0), 0.01, gamma).unwrap();
            assert!(est.lg_value > 0.0, "gamma={gamma}: {est:?}");
        }
    }

    #[test]
    fn diagonal_scan_threshold() {
        let offsets: Vec<f64> = (0..8).map(|i| 2f64.powi(i)).collect();
        let scan = diagonal_generator_scan(0.01, 2.0, &offsets).unwrap();
        assert!(empirical_threshold(&scan).is_some());
        let scan = diagonal_generator_scan(0.01, 0.5, &offsets).unwrap();
        assert!(empirical_threshold(&scan).is_none());
        assert_eq!(empirical_threshold(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)]), Some(3.0));
    }

    #[test]
    fn optimal_alpha_and_bound() {
        for c in [0.05, 0.2, 0.5] {
            let alpha = optimal_alpha(c).unwrap();
            let s = (2.0 * alpha).sqrt();
            assert!((s.cosh() - s.sinh() / (c * s)).abs() < 1e-9 * s.cosh());
            let bound = early_exit_bound(c).unwrap();
            assert!((bound - (alpha * c).exp() * exit_laplace(alpha)).abs() < 1e-9);
            assert!(unit_exit_cdf(c) <= bound);
        }
        assert!(optimal_alpha(1.0).is_err());
        assert!(early_exit_bound(0.05).unwrap() < early_exit_bound(0.2).unwrap());
    }

    #[test]
    fn tube_residence_report() {
        let r = tube_residence(3, 0.05, 0.1, 500, 3).unwrap();
        assert!((r.half_width - tube_constant() * 64.0 / 0.05).abs() < 1e-9);
        assert!(r.p_c > 1.0 - r.early_exit_bound - 0.05);
        assert!(r.ci_lo <= r.p_c && r.p_c <= r.ci_hi);
    }
}
