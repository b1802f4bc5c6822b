//! Time-series statistics and the handful of classical tests used to judge
//! Monte Carlo output.

use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;

use crate::error::param;
use crate::io::{fmt_real, write_rows};
use crate::Result;

/// A labelled series sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    times: Vec<f64>,
    values: Vec<f64>,
    label: String,
}

impl SeriesRecord {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(param(
                "values",
                format!("{} values for {} times", values.len(), times.len()),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(param("times", "must be strictly increasing"));
        }
        Ok(Self {
            times,
            values,
            label: label.into(),
        })
    }

    /// Series indexed by 0, 1, 2, ...
    pub fn indexed(label: impl Into<String>, values: Vec<f64>) -> Self {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self {
            times,
            values,
            label: label.into(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W, time_name: &str) -> Result<()> {
        write_rows(
            writer,
            &[time_name, &self.label],
            self.times
                .iter()
                .zip(&self.values)
                .map(|(t, v)| vec![fmt_real(*t), fmt_real(*v)]),
        )
    }
}

/// Increments of a (log-)price series, stamped with the later time.
pub fn returns(prices: &SeriesRecord) -> Result<SeriesRecord> {
    if prices.len() < 2 {
        return Err(param("prices", "need at least two points"));
    }
    let values = prices.values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(SeriesRecord {
        times: prices.times[1..].to_vec(),
        values,
        label: "return".into(),
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median (mean of the two middle values for even lengths). NaN when
/// empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sample excess kurtosis `m4 / m2² - 3` (0 for a normal law). NaN for
/// fewer than two points or a constant series.
pub fn excess_kurtosis(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d2 = (v - m) * (v - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = values.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        return f64::NAN;
    }
    m4 / (m2 * m2) - 3.0
}

/// Sample autocorrelation at lags `0..=max_lag` (biased estimator, so the
/// result is a valid autocorrelation sequence).
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let m = mean(values);
    let centred: Vec<f64> = values.iter().map(|v| v - m).collect();
    let var: f64 = centred.iter().map(|v| v * v).sum();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|lag| {
            if var == 0.0 {
                return if lag == 0 { 1.0 } else { 0.0 };
            }
            let cov: f64 = centred[..n - lag]
                .iter()
                .zip(&centred[lag..])
                .map(|(a, b)| a * b)
                .sum();
            cov / var
        })
        .collect()
}

/// Half-width `2/√n` of the approximate 95% band for white noise.
pub fn white_noise_band(n: usize) -> f64 {
    2.0 / (n as f64).sqrt()
}

/// Mean absolute value over consecutive non-overlapping windows; a trailing
/// partial window is dropped.
pub fn windowed_volatility(returns: &[f64], window: usize) -> Vec<f64> {
    returns
        .chunks_exact(window)
        .map(|w| w.iter().map(|r| r.abs()).sum::<f64>() / window as f64)
        .collect()
}

/// Autocorrelation of windowed volatility, lags `0..=max_lag` measured in
/// windows. The returned series is indexed by lag and labelled `acf`.
pub fn volatility_autocorr(returns: &SeriesRecord, window: usize, max_lag: usize) -> Result<SeriesRecord> {
    if window == 0 {
        return Err(param("window", "must be positive"));
    }
    let vol = windowed_volatility(returns.values(), window);
    if vol.len() < 2 || vol.len() <= max_lag {
        return Err(param(
            "max_lag",
            format!("{} windows of size {window} cannot support lag {max_lag}", vol.len()),
        ));
    }
    Ok(SeriesRecord::indexed("acf", autocorrelation(&vol, max_lag)))
}

/// Finite-horizon summary of a distance process relative to the ball of
/// radius `r`. All quantities are censored by the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceReport {
    pub r: f64,
    pub horizon: f64,
    /// Last time the distance was `<= r` (the first time if never).
    pub last_exit: f64,
    pub visit_count: usize,
    /// Least-squares slope of `ln(1 + distance)` against `ln t` over the
    /// second half of the series.
    pub growth_exponent: f64,
}

pub fn recurrence_diagnostics(distance: &SeriesRecord, r: f64) -> RecurrenceReport {
    let times = distance.times();
    let values = distance.values();
    let start = times.first().copied().unwrap_or(0.0);
    let horizon = times.last().copied().unwrap_or(0.0);
    let mut visit_count = 0;
    let mut last_exit = start;
    for (t, v) in times.iter().zip(values) {
        if *v <= r {
            visit_count += 1;
            last_exit = *t;
        }
    }
    let tail = values.len() / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = times[tail..]
        .iter()
        .zip(&values[tail..])
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| (t.ln(), v.max(0.0).ln_1p()))
        .unzip();
    RecurrenceReport {
        r,
        horizon,
        last_exit,
        visit_count,
        growth_exponent: ols_slope(&xs, &ys),
    }
}

/// Least-squares slope; NaN when the abscissae are degenerate.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test: `(D, asymptotic p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d))
}

/// Mann–Whitney rank-sum test with tie correction and normal
/// approximation. Returns `(U_a, z, two-sided p)`; `z > 0` means `a` tends
/// to be larger.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|v| (*v, true))
        .chain(b.iter().map(|v| (*v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = pooled.len();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += avg_rank * pooled[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let nf = n as f64;
    let var = na * nb / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return (u, 0.0, 1.0);
    }
    let z = (u - na * nb / 2.0) / var.sqrt();
    let normal = Normal::standard();
    (u, z, 2.0 * normal.cdf(-z.abs()))
}

/// Pearson goodness-of-fit: `(statistic, degrees of freedom, p-value)`.
/// Degrees of freedom are `cells - 1 - fitted`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], fitted: usize) -> Result<(f64, usize, f64)> {
    if observed.len() != expected.len() || observed.len() < 2 + fitted {
        return Err(param("observed", "need matching observed/expected with enough cells"));
    }
    if expected.iter().any(|e| !(*e > 0.0)) {
        return Err(param("expected", "expected counts must be positive"));
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (*o as f64 - e).powi(2) / e)
        .sum();
    let df = observed.len() - 1 - fitted;
    let p = if stat > 0.0 {
        gamma_ur(df as f64 / 2.0, stat / 2.0)
    } else {
        1.0
    };
    Ok((stat, df, p))
}

/// Writes an autocorrelation series with columns `lag,acf`.
pub fn write_acf_csv<W: Write>(writer: W, acf: &SeriesRecord) -> Result<()> {
    write_rows(
        writer,
        &["lag", "acf"],
        acf.values()
            .iter()
            .enumerate()
            .map(|(lag, v)| vec![lag.to_string(), fmt_real(*v)]),
    )
}
