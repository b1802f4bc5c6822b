//! Exit time of Brownian motion from a symmetric interval.
//!
//! For a standard Brownian motion started at 0, let τ be the first time
//! |B| reaches 1. Its law has two alternating series representations:
//!
//! ```text
//! P(τ > t) = 4/π Σ_{n≥0} (-1)^n / (2n+1) · exp(-(2n+1)² π² t / 8)     (large t)
//! P(τ ≤ t) = 2 Σ_{k≥0} (-1)^k · erfc((2k+1) / √(2t))                   (small t)
//! ```
//!
//! Each converges within a handful of terms on its side of t = 1. The exit
//! time from (-ε, ε) is ε²τ by Brownian scaling.
//!
//! Draws use inverse-CDF tables with monotone cubic Hermite interpolation,
//! uniform in u for the bulk and in ln u for the lower tail. The extreme
//! upper tail is inverted in closed form and the extreme lower tail exactly.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;

use super::RngStream;

const TERM_TOL: f64 = 1e-15;
const SWITCH: f64 = 1.0;
const KNOTS: usize = 4096;
const TAIL_KNOTS: usize = 1024;

fn survival_series(t: f64) -> f64 {
    let c = PI * PI * t / 8.0;
    let mut sum = 0.0;
    for n in 0..1000u32 {
        let m = (2 * n + 1) as f64;
        let term = (-m * m * c).exp() / m;
        sum += if n % 2 == 0 { term } else { -term };
        if term < TERM_TOL {
            break;
        }
    }
    4.0 / PI * sum
}

fn cdf_series(t: f64) -> f64 {
    let scale = 1.0 / (2.0 * t).sqrt();
    let mut sum = 0.0;
    for k in 0..1000u32 {
        let term = erfc((2 * k + 1) as f64 * scale);
        sum += if k % 2 == 0 { term } else { -term };
        if term < TERM_TOL {
            break;
        }
    }
    2.0 * sum
}

/// P(τ > t) for the unit-interval exit time.
pub fn unit_exit_survival(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= SWITCH {
        survival_series(t)
    } else {
        1.0 - cdf_series(t)
    }
}

/// P(τ ≤ t) for the unit-interval exit time.
pub fn unit_exit_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= SWITCH {
        1.0 - survival_series(t)
    } else {
        cdf_series(t)
    }
}

/// Density of the unit-interval exit time.
pub fn unit_exit_density(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    if t >= SWITCH {
        let c = PI * PI * t / 8.0;
        for n in 0..1000u32 {
            let m = (2 * n + 1) as f64;
            let term = m * (-m * m * c).exp();
            sum += if n % 2 == 0 { term } else { -term };
            if term < TERM_TOL {
                break;
            }
        }
        PI / 2.0 * sum
    } else {
        // d/dt erfc(m / √(2t)) = m / √(2π t³) · exp(-m² / 2t)
        let pref = FRAC_2_SQRT_PI / (2.0 * SQRT_2 * t * t.sqrt());
        for k in 0..1000u32 {
            let m = (2 * k + 1) as f64;
            let term = m * (-m * m / (2.0 * t)).exp();
            sum += if k % 2 == 0 { term } else { -term };
            if term < TERM_TOL {
                break;
            }
        }
        2.0 * pref * sum
    }
}

/// Exact quantile of the unit-interval exit time by safeguarded Newton
/// iteration on the log of whichever tail is smaller.
pub fn unit_exit_quantile(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "quantile level {u} outside (0, 1)");
    let lower_tail = u < 0.5;
    let target = if lower_tail { u.ln() } else { (1.0 - u).ln() };
    // ln F is increasing and ln S decreasing; orient both as increasing.
    let phi = |t: f64| -> (f64, f64) {
        let f = unit_exit_density(t);
        if lower_tail {
            let p = unit_exit_cdf(t);
            (p.ln() - target, f / p)
        } else {
            let s = unit_exit_survival(t);
            (target - s.ln(), f / s)
        }
    };
    let (mut lo, mut hi) = (5e-3, 80.0);
    let mut t = if lower_tail { 0.5 } else { 1.5 };
    for _ in 0..200 {
        let (value, slope) = phi(t);
        if value > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let newton = t - value / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 1e-15 * t {
            return next;
        }
        t = next;
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    t
}

/// Monotone cubic Hermite interpolation of the quantile on uniform knots in
/// either `u` or `ln u`.
struct InverseTable {
    lo: f64,
    inv_step: f64,
    /// Index of the last interval, as a real.
    last: f64,
    /// Cubic coefficients of each interval in the local coordinate
    /// `s ∈ [0, 1]`, constant term first.
    cubics: Vec<[f64; 4]>,
}

// Bulk knots are uniform in u over [BULK_LO, BULK_HI]. Above BULK_HI the
// survival function is a single exponential to within 1e-17 relative and is
// inverted in closed form. The lower tail down to TAIL_LO is tabulated in
// ln u; anything below that is solved exactly.
const BULK_LO: f64 = 0.01;
const BULK_HI: f64 = 0.99;
const TAIL_LO: f64 = 1e-12;

impl InverseTable {
    fn build(lo: f64, hi: f64, knots: usize, log_scale: bool) -> Self {
        let step = (hi - lo) / (knots - 1) as f64;
        let level = |x: f64| if log_scale { x.exp() } else { x };
        let times: Vec<f64> = (0..knots)
            .map(|j| unit_exit_quantile(level(lo + j as f64 * step)))
            .collect();
        // dt/du = 1/f(t); in log scale dt/d(ln u) = u/f(t).
        let mut slopes: Vec<f64> = (0..knots)
            .map(|j| {
                let scale = if log_scale { level(lo + j as f64 * step) } else { 1.0 };
                scale / unit_exit_density(times[j])
            })
            .collect();
        // Fritsch–Carlson limiter keeps each cubic piece monotone.
        for j in 0..knots - 1 {
            let secant = (times[j + 1] - times[j]) / step;
            let a = slopes[j] / secant;
            let b = slopes[j + 1] / secant;
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[j] = tau * a * secant;
                slopes[j + 1] = tau * b * secant;
            }
        }
        // Hermite basis expanded into monomials in s.
        let cubics = (0..knots - 1)
            .map(|j| {
                let (p0, p1) = (times[j], times[j + 1]);
                let (m0, m1) = (step * slopes[j], step * slopes[j + 1]);
                [
                    p0,
                    m0,
                    3.0 * (p1 - p0) - 2.0 * m0 - m1,
                    2.0 * (p0 - p1) + m0 + m1,
                ]
            })
            .collect();
        Self {
            lo,
            inv_step: 1.0 / step,
            last: (knots - 2) as f64,
            cubics,
        }
    }

    /// Interpolates at `x`, which is `u` or `ln u` depending on the scale.
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let pos = ((x - self.lo) * self.inv_step).max(0.0);
        // Truncation is floor for non-negative positions; the signed cast is
        // a single instruction on x86-64, the unsigned one is not. The last
        // interval also covers its right end, where `s` reaches 1.
        let j = pos.min(self.last) as i64 as usize;
        let s = pos - j as f64;
        let [c0, c1, c2, c3] = self.cubics[j];
        c0 + s * (c1 + s * (c2 + s * c3))
    }
}

fn bulk_table() -> &'static InverseTable {
    static TABLE: OnceLock<InverseTable> = OnceLock::new();
    TABLE.get_or_init(|| InverseTable::build(BULK_LO, BULK_HI, KNOTS, false))
}

fn tail_table() -> &'static InverseTable {
    static TABLE: OnceLock<InverseTable> = OnceLock::new();
    TABLE.get_or_init(|| InverseTable::build(TAIL_LO.ln(), BULK_LO.ln(), TAIL_KNOTS, true))
}

#[inline(always)]
pub(crate) fn unit_exit_from_uniform(u: f64) -> f64 {
    if u > BULK_HI {
        8.0 / (PI * PI) * (4.0 / (PI * (1.0 - u))).ln()
    } else if u >= BULK_LO {
        bulk_table().eval(u)
    } else if u >= TAIL_LO {
        tail_table().eval(u.ln())
    } else {
        unit_exit_quantile(u)
    }
}

/// Draws the exit time of Brownian motion from (-1, 1).
#[inline]
pub fn sample_unit_exit_time(rng: &mut RngStream) -> f64 {
    unit_exit_from_uniform(rng.uniform_open())
}

/// Draws the exit time of Brownian motion from (-ε, ε): ε² times a unit draw.
#[inline]
pub fn sample_exit_time(epsilon: f64, rng: &mut RngStream) -> f64 {
    epsilon * epsilon * sample_unit_exit_time(rng)
}

/// Two-term bounds `(lower, upper)` on P(σ > ε) for the exit time σ from
/// (-ε, ε).
pub fn exit_tail_bounds(epsilon: f64) -> (f64, f64) {
    let upper = 4.0 / PI * (-PI * PI / (8.0 * epsilon)).exp();
    let lower = upper * (1.0 - (-PI * PI / epsilon).exp() / 3.0);
    (lower, upper)
}

/// Laplace transform E[exp(-α τ)] of the unit-interval exit time.
pub fn exit_laplace(alpha: f64) -> f64 {
    1.0 / (2.0 * alpha).sqrt().cosh()
}

/// Exit time from (-half_width, half_width) of a Brownian path simulated on
/// a grid of step `dt`. Independent of the series machinery above; used as
/// an oracle.
pub fn simulate_grid_exit(half_width: f64, dt: f64, rng: &mut RngStream) -> f64 {
    let scale = dt.sqrt();
    let mut b = 0.0f64;
    let mut steps = 0u64;
    loop {
        b += scale * rng.standard_normal();
        steps += 1;
        if b.abs() >= half_width {
            return steps as f64 * dt;
        }
    }
}
