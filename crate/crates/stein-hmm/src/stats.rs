//! Empirical summaries and distributional diagnostics.
//!
//! The central piece is the exact empirical Kolmogorov distance to the
//! standard normal: for sorted standardized samples the supremum over all of
//! `R` is attained at a jump of the empirical CDF, so it is computed from the
//! order statistics alone, with both one-sided gaps checked at every jump.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample set is empty")]
    EmptySample,
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSd(f64),
    #[error("need at least 3 points for a slope fit, got {0}")]
    TooFewPoints(usize),
    #[error("slope fit requires positive coordinates, got {0}")]
    NonPositiveValue(f64),
}

/// Standard normal CDF, accurate to well below 1e-10 absolute error.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Summary of a sample of replicate values.
#[derive(Debug, Clone)]
pub struct EmpiricalSummary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Absolute central moments `(order r, mean |x - mean|^r)`.
    pub central_moments: Vec<(f64, f64)>,
    /// Exact Kolmogorov distance of the standardized sample to N(0, 1).
    pub d_kolmogorov: f64,
}

/// Summarize `samples`, standardizing by their own mean and standard
/// deviation for the Kolmogorov distance.
pub fn summarize(samples: &[f64], moment_orders: &[f64]) -> Result<EmpiricalSummary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mean = mean(samples);
    let variance = unbiased_variance(samples, mean);
    let central_moments = moment_orders
        .iter()
        .map(|&r| central_moment(samples, r).map(|m| (r, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let sd = variance.sqrt();
    let d_kolmogorov = empirical_kolmogorov(samples, mean, sd)?;
    Ok(EmpiricalSummary { count: samples.len(), mean, variance, central_moments, d_kolmogorov })
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance (0 for a single observation).
pub fn unbiased_variance(samples: &[f64], mean: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (samples.len() - 1) as f64
}

/// Standard error of the unbiased sample variance, from the fourth moment.
pub fn variance_stderr(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let m = mean(samples);
    let var = unbiased_variance(samples, m);
    let m4 = samples.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - var * var).max(0.0) / n).sqrt()
}

/// Exact sup-distance between the empirical CDF of the standardized samples
/// and the standard normal CDF.
pub fn empirical_kolmogorov(samples: &[f64], mean: f64, sd: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if !sd.is_finite() || sd <= 0.0 {
        return Err(StatsError::NonPositiveSd(sd));
    }
    let mut w: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    w.sort_by(|a, b| a.partial_cmp(b).expect("non-finite standardized sample"));
    let n = w.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let phi = normal_cdf(wi);
        let above = ((i + 1) as f64 / n - phi).abs();
        let below = (i as f64 / n - phi).abs();
        sup = sup.max(above).max(below);
    }
    Ok(sup)
}

/// Mean of `|x - sample mean|^r`.
pub fn central_moment(samples: &[f64], r: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let m = mean(samples);
    let sum: f64 = if r == 2.0 {
        samples.iter().map(|x| (x - m) * (x - m)).sum()
    } else {
        samples.iter().map(|x| (x - m).abs().powf(r)).sum()
    };
    Ok(sum / samples.len() as f64)
}

/// Replicate values of a functional at one grid size, with their summary.
#[derive(Debug, Clone)]
pub struct CltPoint {
    pub n: usize,
    /// Per-replicate values, in replicate order.
    pub values: Vec<f64>,
    /// `None` when the sample is degenerate (zero variance), in which case
    /// no Kolmogorov distance is defined.
    pub summary: Option<EmpiricalSummary>,
}

impl CltPoint {
    /// Summarize replicate values, flagging zero-variance samples instead of
    /// failing on them.
    pub fn from_values(n: usize, values: Vec<f64>) -> CltPoint {
        let m = mean(&values);
        let variance = unbiased_variance(&values, m);
        let summary = if variance > 0.0 { summarize(&values, &[2.0, 3.0]).ok() } else { None };
        CltPoint { n, values, summary }
    }

    pub fn degenerate(&self) -> bool {
        self.summary.is_none()
    }

    pub fn variance(&self) -> f64 {
        unbiased_variance(&self.values, mean(&self.values))
    }
}

/// One point of an exceedance curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub threshold: f64,
    /// Empirical `P(sample >= threshold)`.
    pub exceedance: f64,
    /// Binomial standard error of the exceedance estimate.
    pub stderr: f64,
}

/// Empirical exceedance probabilities at the given increasing thresholds.
pub fn tail_curve(samples: &[f64], thresholds: &[f64]) -> Result<Vec<TailPoint>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    debug_assert!(thresholds.windows(2).all(|w| w[0] < w[1]), "thresholds must be increasing");
    let n = samples.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits = samples.iter().filter(|&&x| x >= t).count() as f64;
            let p = hits / n;
            TailPoint { threshold: t, exceedance: p, stderr: (p * (1.0 - p) / n).sqrt() }
        })
        .collect())
}

/// Least-squares line fit with a standard error on the slope.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Unweighted least squares of `y` on `x`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LineFit, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let slope_stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(LineFit { slope, intercept, slope_stderr })
}

/// Least squares of `log y` on `log x`; all coordinates must be positive.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<LineFit, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::TooFewPoints(points.len()));
    }
    let logged = points
        .iter()
        .map(|&(x, y)| {
            if x <= 0.0 {
                Err(StatsError::NonPositiveValue(x))
            } else if y <= 0.0 {
                Err(StatsError::NonPositiveValue(y))
            } else {
                Ok((x.ln(), y.ln()))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    fit_linear(&logged)
}
