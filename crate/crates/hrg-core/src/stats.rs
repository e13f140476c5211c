//! Sample statistics used by the experiment reports.

use serde::Serialize;
use statrs::function::erf::erfc;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample skewness `m3 / m2^{3/2}` (central moments with divisor `n`).
pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the standardized sample and N(0, 1).
pub fn ks_to_normal(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sd = variance(xs).sqrt();
    let mut z: Vec<f64> = xs.iter().map(|x| (x - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn around(estimate: f64, se: f64) -> Self {
        Self {
            estimate,
            se,
            lo: estimate - 1.96 * se,
            hi: estimate + 1.96 * se,
        }
    }
}

/// Jackknife interval for `stat` (95%, normal approximation).
pub fn jackknife<F: Fn(&[f64]) -> f64>(xs: &[f64], stat: F) -> Interval {
    let n = xs.len();
    let full = stat(xs);
    let mut buf = Vec::with_capacity(n.saturating_sub(1));
    let leave: Vec<f64> = (0..n)
        .map(|i| {
            buf.clear();
            buf.extend(xs[..i].iter().chain(&xs[i + 1..]));
            stat(&buf)
        })
        .collect();
    let lm = mean(&leave);
    let nf = n as f64;
    let se = ((nf - 1.0) / nf * leave.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt();
    Interval::around(full, se)
}

/// Jackknife interval for the mean (closed form: `sd / sqrt(n)`).
pub fn jackknife_mean(xs: &[f64]) -> Interval {
    Interval::around(mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

/// Jackknife interval for the unbiased variance, in `O(n)`.
pub fn jackknife_variance(xs: &[f64]) -> Interval {
    let n = xs.len() as f64;
    let s1: f64 = xs.iter().sum();
    let s2: f64 = xs.iter().map(|x| x * x).sum();
    let full = variance(xs);
    let leave: Vec<f64> = xs
        .iter()
        .map(|x| {
            let (a, b, m) = (s1 - x, s2 - x * x, n - 1.0);
            (b - a * a / m) / (m - 1.0)
        })
        .collect();
    let lm = mean(&leave);
    let se = ((n - 1.0) / n * leave.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt();
    Interval::around(full, se)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn fit_line(pts: &[(f64, f64)]) -> LineFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_se = if pts.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LineFit {
        slope,
        slope_se,
        intercept,
    }
}
