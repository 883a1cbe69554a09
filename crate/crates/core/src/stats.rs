//! The Monte Carlo result carrier, summation helpers and least-squares fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Censoring rate above which an estimator refuses to report.
pub const CENSOR_REFUSE: f64 = 1e-2;
/// Censoring rate above which a result is flagged as possibly biased.
pub const CENSOR_FLAG: f64 = 1e-3;

/// A value with its standard error. Exact methods report `std_error == 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Window or horizon that truncates an infinite sum, if any.
    pub truncation: Option<String>,
    pub censored_rate: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0, n_samples: 0, truncation: None, censored_rate: 0.0 }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, se) = mean_se(xs);
        Estimate { value: mean, std_error: se, n_samples: xs.len(), truncation: None, censored_rate: 0.0 }
    }

    pub fn with_truncation(mut self, t: impl Into<String>) -> Self {
        self.truncation = Some(t.into());
        self
    }

    pub fn with_censoring(mut self, rate: f64) -> Self {
        self.censored_rate = rate;
        self
    }

    pub fn is_exact(&self) -> bool {
        self.std_error == 0.0
    }

    /// `|self - other|` measured in combined standard errors; infinite when
    /// both are exact and differ.
    pub fn z_score(&self, other: f64) -> f64 {
        let d = (self.value - other).abs();
        if d == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            f64::INFINITY
        } else {
            d / self.std_error
        }
    }

    pub fn is_biased(&self) -> bool {
        self.censored_rate > CENSOR_FLAG
    }
}

/// Refuses when the censoring rate exceeds [`CENSOR_REFUSE`], logs a warning
/// above [`CENSOR_FLAG`].
pub fn check_censoring(censored: usize, n: usize) -> Result<f64> {
    let rate = if n == 0 { 0.0 } else { censored as f64 / n as f64 };
    if rate > CENSOR_REFUSE {
        return Err(Error::Censored { rate, threshold: CENSOR_REFUSE });
    }
    if rate > CENSOR_FLAG {
        log::warn!("censoring rate {rate:.2e} exceeds {CENSOR_FLAG:.0e}; estimate may be biased");
    }
    Ok(rate)
}

/// Welford running mean and variance, for streaming sample folds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMean {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningMean {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n > 1 { (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt() } else { 0.0 };
        Estimate { value: self.mean(), std_error: se, n_samples: self.n, truncation: None, censored_rate: 0.0 }
    }
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Compensated (Kahan–Babuška) summation.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Delete-one-group jackknife. `stat(skip)` evaluates the statistic on all
/// groups except `skip` (`None` = all groups). Returns the full-sample value
/// and the jackknife standard error.
pub fn jackknife(groups: usize, stat: impl Fn(Option<usize>) -> f64) -> (f64, f64) {
    let full = stat(None);
    let g = groups as f64;
    let loo: Vec<f64> = (0..groups).map(|k| stat(Some(k))).collect();
    let mean = loo.iter().sum::<f64>() / g;
    let var = (g - 1.0) / g * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (full, var.sqrt())
}

/// Result of a weighted straight-line fit `y = intercept + slope * x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub n_points: usize,
}

/// Weighted least squares; weights are inverse variances. The standard
/// errors use the residual scatter (`chi^2 / (n - 2)`), so weights only need
/// to be correct up to a common factor.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n != w.len() {
        return Err(Error::usage("fit inputs must have equal length"));
    }
    if n < 2 {
        return Err(Error::Undefined("a line fit needs at least two points".into()));
    }
    if w.iter().any(|&wi| !(wi > 0.0 && wi.is_finite())) {
        return Err(Error::usage("fit weights must be positive and finite"));
    }
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Undefined("fit abscissae are all equal".into()));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let (slope_se, intercept_se) = if n > 2 {
        let chi2: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
        let s2 = chi2 / (n - 2) as f64;
        ((s2 / sxx).sqrt(), (s2 * (1.0 / sw + xm * xm / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(LineFit { slope, intercept, slope_se, intercept_se, n_points: n })
}

/// Fit of `log y` against `log x` from estimates, with the delta-method
/// variance `(se / value)^2` as inverse weight. Non-positive values are skipped.
pub fn loglog_fit(x: &[f64], y: &[Estimate]) -> Result<LineFit> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut w = Vec::new();
    for (xi, e) in x.iter().zip(y) {
        if *xi > 0.0 && e.value > 0.0 {
            lx.push(xi.ln());
            ly.push(e.value.ln());
            let rel = e.std_error / e.value;
            w.push(if rel > 0.0 { 1.0 / (rel * rel) } else { 1e12 });
        }
    }
    weighted_line_fit(&lx, &ly, &w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive() {
        let xs: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat_n(1e-16, 10_000)).collect();
        let naive: f64 = xs.iter().sum();
        assert_eq!(naive, 1.0);
        assert!((kahan_sum(xs.iter().copied()) - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn exact_line_is_recovered() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = weighted_line_fit(&x, &y, &[1.0; 4]).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(weighted_line_fit(&[1.0], &[1.0], &[1.0]).is_err());
        assert!(weighted_line_fit(&[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let xs: Vec<f64> = (0..20).map(|i| (i * i % 7) as f64).collect();
        let (m, se) = jackknife(20, |skip| {
            let v: Vec<f64> = xs.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, x)| *x).collect();
            v.iter().sum::<f64>() / v.len() as f64
        });
        let (m2, se2) = mean_se(&xs);
        assert!((m - m2).abs() < 1e-12);
        assert!((se - se2).abs() < 1e-12);
    }

    #[test]
    fn running_mean_matches_batch() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.5).collect();
        let mut r = RunningMean::default();
        xs.iter().for_each(|&x| r.push(x));
        let (m, se) = mean_se(&xs);
        let e = r.estimate();
        assert!((e.value - m).abs() < 1e-12 && (e.std_error - se).abs() < 1e-12);
    }

    #[test]
    fn censoring_thresholds() {
        assert!(check_censoring(0, 100).is_ok());
        assert!(check_censoring(5, 1000).is_ok());
        assert!(matches!(check_censoring(2, 100), Err(Error::Censored { .. })));
    }
}
