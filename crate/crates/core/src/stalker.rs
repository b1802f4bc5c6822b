//! The attracted processes X ("buyers") and Y ("sellers") on an ε-skeleton.
//!
//! Between jumps of the skeleton the price level `b` is constant and the
//! distance `d = b - X` obeys `d' = -(c + d)^(-γ)` with `c = 1` for the
//! original dynamics (`c = 1 ± 2ε` for the auxiliary processes used to
//! sandwich them). This is solvable in closed form:
//!
//! ```text
//! d(t) = ((b + c)^(γ+1) - (γ+1) t)^(1/(γ+1)) - c     until it reaches 0
//! ```
//!
//! so a trajectory is stored only at the jump times and reconstructed
//! analytically in between. Y is the mirror image: `Y(B) = -X(-B)`.

use std::io::Write;

use crate::error::{ensure_positive, param};
use crate::io::{fmt_real, write_rows};
use crate::rng_paths::{extract_skeleton, FinePath, Skeleton};
use crate::{Error, Result};

/// Adaption exponent γ together with the additive shift of the constant in
/// the drift, `(1 + shift + d)^(-γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParams {
    gamma: f64,
    shift: f64,
    exponent: f64,
    inv_exponent: f64,
    offset: f64,
    offset_pow: f64,
    power: Power,
    /// Coefficients of `(1 - u)^(1/(γ+1)) - 1 = Σ_n series[n-1] u^n`.
    series: [f64; SERIES_TERMS],
}

/// Exponents with cheaper evaluation than `powf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Power {
    Square,
    Cube,
    ThreeHalves,
    General,
}

const SERIES_TERMS: usize = 6;

/// Below this relative decrease of the radicand the binomial series is used;
/// the first dropped term is under 1e-21 relative.
const SERIES_LIMIT: f64 = 1e-3;

impl DriftParams {
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_shift(gamma, 0.0)
    }

    pub fn with_shift(gamma: f64, shift: f64) -> Result<Self> {
        ensure_positive("gamma", gamma)?;
        let offset = 1.0 + shift;
        if !(offset.is_finite() && offset > 0.0) {
            return Err(param("shift", format!("1 + shift must be positive, got {offset}")));
        }
        let exponent = gamma + 1.0;
        let power = match exponent {
            e if e == 2.0 => Power::Square,
            e if e == 3.0 => Power::Cube,
            e if e == 1.5 => Power::ThreeHalves,
            _ => Power::General,
        };
        let inv_exponent = 1.0 / exponent;
        let mut series = [0.0; SERIES_TERMS];
        let mut coeff = 1.0;
        for (n, slot) in series.iter_mut().enumerate() {
            coeff *= (n as f64 - inv_exponent) / (n as f64 + 1.0);
            *slot = coeff;
        }
        let mut params = Self {
            gamma,
            shift,
            exponent,
            inv_exponent,
            offset,
            offset_pow: 0.0,
            power,
            series,
        };
        params.offset_pow = params.raise(offset);
        Ok(params)
    }

    /// `v^(γ+1)`.
    #[inline]
    fn raise(&self, v: f64) -> f64 {
        match self.power {
            Power::Square => v * v,
            Power::Cube => v * v * v,
            Power::ThreeHalves => v * v.sqrt(),
            Power::General => v.powf(self.exponent),
        }
    }

    /// `r^(1/(γ+1))`.
    #[inline]
    fn root(&self, r: f64) -> f64 {
        match self.power {
            Power::Square => r.sqrt(),
            Power::Cube => r.cbrt(),
            Power::ThreeHalves => {
                let c = r.cbrt();
                c * c
            }
            Power::General => r.powf(self.inv_exponent),
        }
    }

    /// Slower auxiliary dynamics, constant `1 + 2ε`.
    pub fn raised(gamma: f64, epsilon: f64) -> Result<Self> {
        Self::with_shift(gamma, 2.0 * epsilon)
    }

    /// Faster auxiliary dynamics, constant `1 - 2ε`.
    pub fn lowered(gamma: f64, epsilon: f64) -> Result<Self> {
        Self::with_shift(gamma, -2.0 * epsilon)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Time after which a particle started at distance `b` has reached the
    /// attracting level.
    pub fn saturation_time(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        (self.raise(b + self.offset) - self.offset_pow) / self.exponent
    }
}

/// Position reached after time `t` by a particle started at 0 and attracted
/// to the fixed level `b >= 0`.
///
/// Fails outside the well-definedness region `0 <= t <= saturation_time(b)`;
/// use [`h_dist`] for the saturating distance.
pub fn hbar(t: f64, b: f64, params: &DriftParams) -> Result<f64> {
    if !(b >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("hbar needs b >= 0 and t >= 0, got t={t}, b={b}")));
    }
    let t_max = params.saturation_time(b);
    if t > t_max * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "t={t} exceeds the saturation time {t_max} for b={b}"
        )));
    }
    let radicand = (params.raise(b + params.offset) - params.exponent * t).max(0.0);
    let value = b + params.offset - params.root(radicand);
    Ok(value.clamp(0.0, b))
}

/// Remaining distance after drifting for time `t` from distance `b`.
///
/// Total: non-positive distances stay at 0 and the distance saturates at 0
/// once the particle has caught up.
#[inline(always)]
pub fn h_dist(t: f64, b: f64, params: &DriftParams) -> f64 {
    if !(b > 0.0) {
        return 0.0;
    }
    if t <= 0.0 {
        return b;
    }
    let base = b + params.offset;
    let full = params.raise(base);
    let u = params.exponent * t / full;
    if u < SERIES_LIMIT {
        // Estrin's scheme: shorter dependency chain than Horner.
        let s = &params.series;
        let u2 = u * u;
        let low = s[0] + u * s[1];
        let mid = s[2] + u * s[3];
        let high = s[4] + u * s[5];
        let rel = u * (low + u2 * (mid + u2 * high));
        return (b + base * rel).clamp(0.0, b);
    }
    let radicand = full - params.exponent * t;
    if radicand <= params.offset_pow {
        return 0.0;
    }
    (params.root(radicand) - params.offset).clamp(0.0, b)
}

/// One attracted process evaluated at the skeleton's jump times.
///
/// `at_jump_minus[i]` is the value just before the jump at `jump_times[i]`;
/// entry 0 is the initial value. Values inside a segment follow from
/// [`Stalker::value_at`].
#[derive(Debug, Clone, PartialEq)]
pub struct Stalker {
    params: DriftParams,
    reflected: bool,
    at_jump_minus: Vec<f64>,
}

impl Stalker {
    pub fn params(&self) -> &DriftParams {
        &self.params
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    pub fn at_jump_minus(&self) -> &[f64] {
        &self.at_jump_minus
    }

    /// Value at the start of segment `i`, after the price has jumped.
    pub fn after_jump(&self, skeleton: &Skeleton, i: usize) -> f64 {
        let level = skeleton.levels()[i];
        let prev = self.at_jump_minus[i];
        if self.reflected {
            prev.max(level)
        } else {
            prev.min(level)
        }
    }

    #[inline]
    fn in_segment(&self, skeleton: &Skeleton, i: usize, elapsed: f64) -> f64 {
        let level = skeleton.levels()[i];
        let prev = self.at_jump_minus[i];
        if self.reflected {
            level + h_dist(elapsed, prev - level, &self.params)
        } else {
            level - h_dist(elapsed, level - prev, &self.params)
        }
    }

    /// Value at time `t` (clamped to the skeleton's range).
    pub fn value_at(&self, skeleton: &Skeleton, t: f64) -> f64 {
        let i = skeleton.segment_at(t);
        self.in_segment(skeleton, i, t - skeleton.jump_times()[i])
    }

    /// Values at `t_j = j * dt` for `j < points`.
    pub fn sample_grid(&self, skeleton: &Skeleton, dt: f64, points: usize) -> Vec<f64> {
        let times = skeleton.jump_times();
        let mut seg = 0;
        (0..points)
            .map(|j| {
                let t = j as f64 * dt;
                while seg + 1 < times.len() && times[seg + 1] <= t {
                    seg += 1;
                }
                self.in_segment(skeleton, seg, t - times[seg])
            })
            .collect()
    }
}

fn evolve_below(skeleton: &Skeleton, params: DriftParams, start: f64) -> Vec<f64> {
    let levels = skeleton.levels();
    let mut values = Vec::with_capacity(levels.len());
    let mut x = start;
    values.push(x);
    for (i, &level) in levels.iter().enumerate().take(levels.len() - 1) {
        let duration = skeleton.segment_end(i) - skeleton.jump_times()[i];
        x = level - h_dist(duration, level - x, &params);
        values.push(x);
    }
    values
}

/// Runs the attracted process over a skeleton from the default start 0.
///
/// With `reflect = false` this is X, which stays below the price; with
/// `reflect = true` it is Y, computed as `-X(-B)`.
pub fn evolve(skeleton: &Skeleton, params: DriftParams, reflect: bool) -> Stalker {
    evolve_from(skeleton, params, reflect, 0.0)
}

/// Like [`evolve`] with an explicit value just before time 0.
pub fn evolve_from(skeleton: &Skeleton, params: DriftParams, reflect: bool, start: f64) -> Stalker {
    let at_jump_minus = if reflect {
        evolve_below(&skeleton.mirrored(), params, -start)
            .into_iter()
            .map(|v| -v)
            .collect()
    } else {
        evolve_below(skeleton, params, start)
    };
    Stalker {
        params,
        reflected: reflect,
        at_jump_minus,
    }
}

/// The full three-particle system on one skeleton.
#[derive(Debug, Clone)]
pub struct StalkerTrajectory {
    skeleton: Skeleton,
    x: Stalker,
    y: Stalker,
}

impl StalkerTrajectory {
    pub fn new(skeleton: Skeleton, params: DriftParams, x0: f64, y0: f64) -> Self {
        let x = evolve_from(&skeleton, params, false, x0);
        let y = evolve_from(&skeleton, params, true, y0);
        Self { skeleton, x, y }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn params(&self) -> &DriftParams {
        self.x.params()
    }

    pub fn x(&self) -> &Stalker {
        &self.x
    }

    pub fn y(&self) -> &Stalker {
        &self.y
    }

    pub fn x_at_jump_minus(&self) -> &[f64] {
        self.x.at_jump_minus()
    }

    pub fn y_at_jump_minus(&self) -> &[f64] {
        self.y.at_jump_minus()
    }

    /// Distances `(B - X, Y - B)` just before each jump `i >= 1`, i.e. the
    /// states of the distance chain.
    pub fn phi_states(&self) -> Vec<(f64, f64)> {
        let levels = self.skeleton.levels();
        (1..levels.len())
            .map(|i| {
                let b = levels[i - 1];
                (b - self.x.at_jump_minus[i], self.y.at_jump_minus[i] - b)
            })
            .collect()
    }

    /// CSV with columns `jump_time,B_level,X,Y`; X and Y are the values just
    /// before the jump, the level is the one taken at the jump.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let sk = &self.skeleton;
        write_rows(
            writer,
            &["jump_time", "B_level", "X", "Y"],
            (0..sk.segments()).map(|i| {
                vec![
                    fmt_real(sk.jump_times()[i]),
                    fmt_real(sk.levels()[i]),
                    fmt_real(self.x.at_jump_minus[i]),
                    fmt_real(self.y.at_jump_minus[i]),
                ]
            }),
        )
    }
}

/// Sup-distance between the X processes of two skeletons cut from one path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub eps: f64,
    pub eps_prime: f64,
    pub gamma: f64,
    pub t_star: f64,
    /// `sup |X^ε' - X^ε|` over the grid points in `[0, t_star]`.
    pub sup_diff: f64,
    /// `ε · exp(γ t*)`.
    pub bound: f64,
    /// `X^ε - X^ε'` at each ε-jump time up to `t_star`.
    pub per_jump_gaps: Vec<f64>,
    /// `B^ε - X^ε` at each ε-jump time up to `t_star`.
    pub per_jump_dists: Vec<f64>,
    pub violation: bool,
}

fn coupled_grid(path: &FinePath, t_star: f64) -> Result<usize> {
    ensure_positive("t_star", t_star)?;
    if t_star > path.horizon() * (1.0 + 1e-12) {
        return Err(param(
            "t_star",
            format!("{t_star} is beyond the path horizon {}", path.horizon()),
        ));
    }
    Ok(crate::rng_paths::grid_points(t_star, path.dt()).min(path.len()))
}

/// Largest ε admitted for a horizon: `0.1 · exp(-γ t*)`.
pub fn max_convergence_epsilon(gamma: f64, t_star: f64) -> f64 {
    0.1 * (-gamma * t_star).exp()
}

/// Compares X built on the ε- and ε'-skeletons of the same path.
pub fn convergence_experiment(
    path: &FinePath,
    eps: f64,
    eps_prime: f64,
    gamma: f64,
    t_star: f64,
) -> Result<ConvergenceReport> {
    ensure_positive("eps", eps)?;
    ensure_positive("eps_prime", eps_prime)?;
    if eps_prime >= eps {
        return Err(param(
            "eps_prime",
            format!("must be smaller than eps ({eps_prime} >= {eps})"),
        ));
    }
    let limit = max_convergence_epsilon(gamma, t_star);
    if eps > limit {
        return Err(param(
            "eps",
            format!("must not exceed 0.1·exp(-gamma·t_star) = {limit}, got {eps}"),
        ));
    }
    let points = coupled_grid(path, t_star)?;
    let params = DriftParams::new(gamma)?;
    let coarse_sk = extract_skeleton(path, eps)?;
    let fine_sk = extract_skeleton(path, eps_prime)?;
    let coarse = evolve(&coarse_sk, params, false);
    let fine = evolve(&fine_sk, params, false);

    let a = coarse.sample_grid(&coarse_sk, path.dt(), points);
    let b = fine.sample_grid(&fine_sk, path.dt(), points);
    let sup_diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);

    let mut per_jump_gaps = Vec::new();
    let mut per_jump_dists = Vec::new();
    for i in 1..coarse_sk.segments() {
        let t = coarse_sk.jump_times()[i];
        if t > t_star {
            break;
        }
        let x = coarse.after_jump(&coarse_sk, i);
        per_jump_gaps.push(x - fine.value_at(&fine_sk, t));
        per_jump_dists.push(coarse_sk.levels()[i] - x);
    }

    let bound = eps * (gamma * t_star).exp();
    Ok(ConvergenceReport {
        eps,
        eps_prime,
        gamma,
        t_star,
        sup_diff,
        bound,
        per_jump_gaps,
        per_jump_dists,
        violation: sup_diff > bound,
    })
}

/// Minimum slack of the auxiliary-process sandwich on a coupled path.
///
/// `lower_slack = min_t (X^ε' - X̃^ε + ε)` with X̃ the slower (`1 + 2ε`)
/// process, `upper_slack = min_t (X̂^ε + ε - X^ε')` with X̂ the faster
/// (`1 - 2ε`) one. Both are non-negative when the sandwich holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport {
    pub lower_slack: f64,
    pub upper_slack: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_slack >= 0.0 && self.upper_slack >= 0.0
    }
}

pub fn sandwich_check(
    path: &FinePath,
    eps: f64,
    eps_prime: f64,
    gamma: f64,
    t_star: f64,
) -> Result<SandwichReport> {
    ensure_positive("eps", eps)?;
    ensure_positive("eps_prime", eps_prime)?;
    if eps_prime >= eps {
        return Err(param("eps_prime", "must be smaller than eps"));
    }
    let points = coupled_grid(path, t_star)?;
    let coarse_sk = extract_skeleton(path, eps)?;
    let fine_sk = extract_skeleton(path, eps_prime)?;
    let fine = evolve(&fine_sk, DriftParams::new(gamma)?, false).sample_grid(&fine_sk, path.dt(), points);
    let slow = evolve(&coarse_sk, DriftParams::raised(gamma, eps)?, false)
        .sample_grid(&coarse_sk, path.dt(), points);
    let fast = evolve(&coarse_sk, DriftParams::lowered(gamma, eps)?, false)
        .sample_grid(&coarse_sk, path.dt(), points);
    let mut lower_slack = f64::INFINITY;
    let mut upper_slack = f64::INFINITY;
    for j in 0..points {
        lower_slack = lower_slack.min(fine[j] - slow[j] + eps);
        upper_slack = upper_slack.min(fast[j] + eps - fine[j]);
    }
    Ok(SandwichReport {
        lower_slack,
        upper_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_paths::{gen_fine_path, sample_skeleton, RngStream};
    use proptest::prelude::*;

    fn p(gamma: f64) -> DriftParams {
        DriftParams::new(gamma).unwrap()
    }

    /// RK4 on d f / dt = (1 + b - f)^(-γ), f(0) = 0.
    fn rk4_position(t: f64, b: f64, gamma: f64, step: f64) -> f64 {
        let rhs = |f: f64| (1.0 + b - f).powf(-gamma);
        let n = (t / step).round() as usize;
        let h = t / n as f64;
        let mut f = 0.0;
        for _ in 0..n {
            let k1 = rhs(f);
            let k2 = rhs(f + 0.5 * h * k1);
            let k3 = rhs(f + 0.5 * h * k2);
            let k4 = rhs(f + h * k3);
            f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        f
    }

    #[test]
    fn hbar_examples() {
        for b in [0.0, 0.4, 3.0] {
            assert_eq!(hbar(0.0, b, &p(1.3)).unwrap(), 0.0);
        }
        assert!((hbar(1.5, 1.0, &p(1.0)).unwrap() - 1.0).abs() < 1e-15);
        let oracle = rk4_position(0.5, 1.0, 1.0, 1e-6);
        assert!((oracle - (2.0 - 3f64.sqrt())).abs() < 1e-10);
        assert!((hbar(0.5, 1.0, &p(1.0)).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn hbar_domain_errors() {
        assert!(matches!(hbar(1.6, 1.0, &p(1.0)), Err(Error::Domain(_))));
        assert!(hbar(0.1, -0.5, &p(1.0)).is_err());
    }

    #[test]
    fn hbar_matches_rk4_for_other_gammas() {
        for gamma in [0.5, 2.0] {
            let params = p(gamma);
            let b = 2.0;
            let t = 0.5 * params.saturation_time(b);
            let oracle = rk4_position(t, b, gamma, 1e-5);
            assert!((hbar(t, b, &params).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn h_dist_examples() {
        assert_eq!(h_dist(0.0, 0.7, &p(1.0)), 0.7);
        for t in [0.0, 0.5, 10.0] {
            assert_eq!(h_dist(t, -0.3, &p(1.0)), 0.0);
        }
        let expected = 3f64.sqrt() - 1.0;
        assert!((h_dist(0.5, 1.0, &p(1.0)) - expected).abs() < 1e-12);
        let oracle = 1.0 - rk4_position(0.5, 1.0, 1.0, 1e-6);
        assert!((h_dist(0.5, 1.0, &p(1.0)) - oracle).abs() < 1e-10);
        assert_eq!(h_dist(1.5, 1.0, &p(1.0)), 0.0);
        assert_eq!(h_dist(7.0, 1.0, &p(1.0)), 0.0);
    }

    #[test]
    fn shifted_drift_solves_shifted_ode() {
        let eps = 0.05;
        for (params, c) in [
            (DriftParams::raised(1.5, eps).unwrap(), 1.0 + 2.0 * eps),
            (DriftParams::lowered(1.5, eps).unwrap(), 1.0 - 2.0 * eps),
        ] {
            // Forward Euler-free check: derivative of the closed form equals
            // the ODE right-hand side.
            let (b, t, h) = (0.8, 0.2, 1e-6);
            let slope = (h_dist(t + h, b, &params) - h_dist(t - h, b, &params)) / (2.0 * h);
            let d = h_dist(t, b, &params);
            assert!((slope + (c + d).powf(-1.5)).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn h_dist_semigroup(gamma in 0.2f64..3.0, b in 0.0f64..20.0, s in 0.0f64..5.0, t in 0.0f64..5.0) {
            let params = p(gamma);
            let direct = h_dist(s + t, b, &params);
            let composed = h_dist(t, h_dist(s, b, &params), &params);
            prop_assert!((direct - composed).abs() <= 1e-12 * b.max(1.0));
        }

        #[test]
        fn h_dist_bounds_and_monotonicity(gamma in 0.2f64..3.0, b in -1.0f64..20.0, t in 0.0f64..5.0, dt in 0.0f64..1.0, db in 0.0f64..1.0) {
            let params = p(gamma);
            let v = h_dist(t, b, &params);
            prop_assert!(v >= 0.0 && v <= b.max(0.0));
            prop_assert!(h_dist(t + dt, b, &params) <= v);
            prop_assert!(h_dist(t, b + db, &params) >= v);
            if t >= params.saturation_time(b) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn flat_skeleton_keeps_x_at_zero() {
        let sk = Skeleton::constant(0.1, 0.0, 5.0);
        let x = evolve(&sk, p(1.0), false);
        assert_eq!(x.at_jump_minus(), &[0.0]);
        assert_eq!(x.value_at(&sk, 4.0), 0.0);
    }

    #[test]
    fn single_upward_jump() {
        let (eps, s) = (0.1, 0.004);
        let sk = Skeleton::new(eps, vec![0.0, 0.3, 0.3 + s], vec![0.0, eps, 0.0], 1.0).unwrap();
        let params = p(1.0);
        let x = evolve(&sk, params, false);
        assert_eq!(x.at_jump_minus()[1], 0.0);
        assert_eq!(x.at_jump_minus()[2], eps - h_dist(s, eps, &params));
    }

    #[test]
    fn reflection_identity() {
        let sk = sample_skeleton(0.05, 2.0, 0.0, &mut RngStream::new(4, 0)).unwrap();
        let params = p(1.4);
        let y = evolve(&sk, params, true);
        let x_mirror = evolve(&sk.mirrored(), params, false);
        for (a, b) in y.at_jump_minus().iter().zip(x_mirror.at_jump_minus()) {
            assert_eq!(*a, -*b);
        }
        for t in [0.0, 0.33, 1.7] {
            assert_eq!(y.value_at(&sk, t), -x_mirror.value_at(&sk.mirrored(), t));
        }
    }

    #[test]
    fn attraction_and_speed_bounds() {
        let params = p(0.8);
        for seed in 0..20 {
            let sk = sample_skeleton(0.05, 5.0, 0.0, &mut RngStream::new(6, seed)).unwrap();
            let traj = StalkerTrajectory::new(sk.clone(), params, 0.0, 0.0);
            let xs = traj.x_at_jump_minus();
            let ys = traj.y_at_jump_minus();
            for i in 1..sk.segments() {
                let level = sk.levels()[i - 1];
                assert!(level - xs[i] >= 0.0 && ys[i] - level >= 0.0);
                let sigma = sk.jump_times()[i] - sk.jump_times()[i - 1];
                let start = traj.x().after_jump(&sk, i - 1);
                assert!((xs[i] - start).abs() <= sigma + 1e-15);
                assert!(xs[i] >= start.min(level));
            }
            for (x, y) in traj.phi_states() {
                assert!(x >= 0.0 && y >= 0.0);
            }
        }
    }

    #[test]
    fn monotone_coupling_merges_after_contact() {
        let params = p(1.0);
        let sk = sample_skeleton(0.05, 20.0, 0.0, &mut RngStream::new(9, 1)).unwrap();
        let near = evolve_from(&sk, params, false, -0.1);
        let far = evolve_from(&sk, params, false, -0.6);
        let mut merged = false;
        for (a, b) in near.at_jump_minus().iter().zip(far.at_jump_minus()) {
            assert!(b <= a);
            if merged {
                assert_eq!(a, b);
            }
            merged |= a == b;
        }
        assert!(merged, "paths never met");
    }

    #[test]
    fn trajectory_csv() {
        let sk = Skeleton::new(0.5, vec![0.0, 1.0], vec![0.0, 0.5], 2.0).unwrap();
        let traj = StalkerTrajectory::new(sk, p(1.0), 0.0, 0.0);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("jump_time,B_level,X,Y\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn convergence_on_constant_path() {
        let path = FinePath::from_values(1e-4, vec![0.0; 10_001]).unwrap();
        let report = convergence_experiment(&path, 0.02, 0.01, 1.0, 1.0).unwrap();
        assert_eq!(report.sup_diff, 0.0);
        assert!((report.bound - 0.02 * 1f64.exp()).abs() < 1e-15);
        assert!(!report.violation);
    }

    #[test]
    fn convergence_parameter_errors() {
        let path = FinePath::from_values(1e-4, vec![0.0; 10_001]).unwrap();
        assert!(convergence_experiment(&path, 0.01, 0.01, 1.0, 1.0).is_err());
        assert!(convergence_experiment(&path, 0.01, 0.02, 1.0, 1.0).is_err());
        assert!(convergence_experiment(&path, 0.2, 0.01, 1.0, 1.0).is_err());
        assert!(convergence_experiment(&path, 0.02, 0.01, 1.0, 2.0).is_err());
    }

    #[test]
    fn convergence_within_bound_on_random_paths() {
        for i in 0..10 {
            let path = gen_fine_path(1.0, 1e-6, &mut RngStream::new(77, i)).unwrap();
            let r = convergence_experiment(&path, 0.02, 0.01, 1.0, 1.0).unwrap();
            assert!(!r.violation, "path {i}: {} > {}", r.sup_diff, r.bound);
            assert!(!r.per_jump_gaps.is_empty());
            assert_eq!(r.per_jump_gaps.len(), r.per_jump_dists.len());
            assert!(r.per_jump_dists.iter().all(|d| *d >= 0.0));
        }
    }

    #[test]
    fn auxiliary_processes_sandwich_the_original() {
        let (eps, eps_prime) = (0.02, 0.01);
        for i in 0..100 {
            let path = gen_fine_path(1.0, eps_prime * eps_prime / 100.0, &mut RngStream::new(78, i)).unwrap();
            let r = sandwich_check(&path, eps, eps_prime, 1.0, 1.0).unwrap();
            assert!(r.holds(), "path {i}: {r:?}");
        }
    }
}
