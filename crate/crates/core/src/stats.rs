//! Level-spacing-ratio statistics and the Poisson / GOE reference distributions.

use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};

/// ⟨r⟩ for uncorrelated (Poisson) levels: 2 ln 2 − 1.
pub const MEAN_R_POISSON: f64 = 2.0 * std::f64::consts::LN_2 - 1.0;
/// ⟨r⟩ for GOE spectra: 4 − 2√3.
pub const MEAN_R_GOE: f64 = 4.0 - 2.0 * 1.732_050_807_568_877_2;
/// Normalisation constant Z_GOE = 8/27 of the GOE ratio density.
pub const Z_GOE: f64 = 8.0 / 27.0;

pub const DEFAULT_RATIO_BINS: usize = 25;
pub const DEFAULT_WINDOW: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub ratios: Vec<f64>,
    /// Number of zero spacings met; each forces its ratios to 0.
    pub degenerate: usize,
}

impl RatioSample {
    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

/// r_n = min(s_n, s_{n+1}) / max(s_n, s_{n+1}) for ascending `levels`.
pub fn spacing_ratios(levels: &[f64]) -> Result<RatioSample> {
    if levels.len() < 3 {
        return Err(DickeError::InsufficientData(format!(
            "spacing ratios need at least 3 levels, got {}",
            levels.len()
        )));
    }
    let spacings: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(i) = spacings.iter().position(|s| !(*s >= 0.0)) {
        return Err(DickeError::Domain(format!("levels are not ascending at index {i}")));
    }
    let degenerate = spacings.iter().filter(|&&s| s == 0.0).count();
    let ratios = spacings
        .windows(2)
        .map(|w| {
            let (lo, hi) = if w[0] <= w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
            if lo == 0.0 {
                0.0
            } else {
                lo / hi
            }
        })
        .collect();
    Ok(RatioSample { ratios, degenerate })
}

/// `(P_GOE(r), P_P(r))` on `0 ≤ r ≤ 1`.
pub fn reference_densities(r: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&r) {
        return Err(DickeError::Domain(format!("ratio {r} outside [0, 1]")));
    }
    let u = 1.0 + r + r * r;
    let goe = (2.0 / Z_GOE) * (r + r * r) / u.powf(2.5);
    let poisson = 2.0 / ((1.0 + r) * (1.0 + r));
    Ok((goe, poisson))
}

/// Cumulative distribution of the GOE ratio density (closed-form antiderivative).
pub fn goe_cdf(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    let u = 1.0 + r + r * r;
    1.0 + (r * r * r + 1.5 * r * r - 1.5 * r - 1.0) / u.powf(1.5)
}

pub fn poisson_cdf(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    2.0 * r / (1.0 + r)
}

/// Rescaled mean ⟨r̃⟩ = |⟨r⟩ − ⟨r⟩_P| / (⟨r⟩_GOE − ⟨r⟩_P).
pub fn rescale_mean(mean_r: f64) -> f64 {
    (mean_r - MEAN_R_POISSON).abs() / (MEAN_R_GOE - MEAN_R_POISSON)
}

/// `(⟨r⟩, ⟨r̃⟩)` of a sample.
pub fn mean_and_rescaled(ratios: &[f64]) -> Result<(f64, f64)> {
    if ratios.is_empty() {
        return Err(DickeError::InsufficientData("empty ratio sample".into()));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok((mean, rescale_mean(mean)))
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Uniform-bin density histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo < hi) {
            return Err(DickeError::Domain(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
        }
        if values.is_empty() {
            return Err(DickeError::InsufficientData("histogram of an empty sample".into()));
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            if !(lo..=hi).contains(&v) {
                return Err(DickeError::Domain(format!("value {v} outside histogram range [{lo}, {hi}]")));
            }
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let total = values.len() as f64;
        let densities = counts.iter().map(|&c| c as f64 / (total * width)).collect();
        Ok(Self {
            edges,
            counts,
            densities,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Σ density · width; 1 up to round-off.
    pub fn integral(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    /// Probability mass of bin `k`.
    pub fn mass(&self, k: usize) -> f64 {
        self.densities[k] * (self.edges[k + 1] - self.edges[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub histogram: Histogram,
    pub mean_r: f64,
    pub rescaled_mean_r: f64,
    pub ks_goe: f64,
    pub ks_poisson: f64,
    pub samples: usize,
    pub degenerate: usize,
}

impl RatioReport {
    pub fn closer_to_goe(&self) -> bool {
        self.ks_goe < self.ks_poisson
    }
}

pub fn ratio_report(sample: &RatioSample, bins: usize) -> Result<RatioReport> {
    let (mean_r, rescaled_mean_r) = mean_and_rescaled(&sample.ratios)?;
    Ok(RatioReport {
        histogram: Histogram::new(&sample.ratios, 0.0, 1.0, bins)?,
        mean_r,
        rescaled_mean_r,
        ks_goe: ks_distance(&sample.ratios, goe_cdf),
        ks_poisson: ks_distance(&sample.ratios, poisson_cdf),
        samples: sample.len(),
        degenerate: sample.degenerate,
    })
}

/// Ratio report for the bulk of a spectrum: drops the lowest 5% of the levels and
/// everything from index `ceiling` upward (levels not converged in the truncation).
pub fn bulk_report(levels: &[f64], ceiling: usize, bins: usize) -> Result<RatioReport> {
    let bulk = bulk_levels(levels, ceiling);
    ratio_report(&spacing_ratios(bulk)?, bins)
}

pub fn bulk_levels(levels: &[f64], ceiling: usize) -> &[f64] {
    let start = (levels.len() as f64 * 0.05).ceil() as usize;
    let end = ceiling.min(levels.len());
    &levels[start.min(end)..end]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub start: usize,
    pub mean_epsilon: f64,
    pub rescaled_mean_r: f64,
    pub ks_goe: f64,
    pub ks_poisson: f64,
}

/// Slide a window of `window_size` consecutive levels ε_n..ε_{n+window_size-1} by `stride`.
pub fn windowed_ratio_scan(epsilons: &[f64], window_size: usize, stride: usize) -> Result<Vec<WindowStat>> {
    if window_size < 10 {
        return Err(DickeError::Domain(format!("window size {window_size} is below the minimum of 10")));
    }
    if stride == 0 {
        return Err(DickeError::Domain("stride must be positive".into()));
    }
    if epsilons.len() < window_size + 2 {
        return Err(DickeError::InsufficientData(format!(
            "{} levels cannot hold a window of {window_size}",
            epsilons.len()
        )));
    }
    (0..=epsilons.len() - window_size)
        .step_by(stride)
        .map(|start| {
            let w = &epsilons[start..start + window_size];
            let sample = spacing_ratios(w)?;
            let (_, rescaled) = mean_and_rescaled(&sample.ratios)?;
            Ok(WindowStat {
                start,
                mean_epsilon: w.iter().sum::<f64>() / window_size as f64,
                rescaled_mean_r: rescaled,
                ks_goe: ks_distance(&sample.ratios, goe_cdf),
                ks_poisson: ks_distance(&sample.ratios, poisson_cdf),
            })
        })
        .collect()
}
