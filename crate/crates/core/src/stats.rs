//! Ljung-Box whiteness test, chi-square tails, multiple-comparison
//! corrections and error-rate summaries.

use alloc::vec;
use alloc::vec::Vec;

use crate::arfit::acf_series;
use crate::math::{round, sqrt};
use crate::matrix::Matrix;
use crate::special::gamma_q;
use crate::StatsError;

/// Degrees-of-freedom convention for the Ljung-Box test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DofMode {
    /// `h − 1`.
    InterceptOnly,
    /// `h − round(p·n/T_full) − 1`: the AR order fitted on the full series
    /// of length `t_full`, prorated to the `n` samples tested.
    ArAdjusted { order: usize, t_full: usize },
}

/// Degrees of freedom and whether the floor of 1 was applied.
pub fn ljung_box_dof(h: usize, n: usize, mode: DofMode) -> (usize, bool) {
    let raw = match mode {
        DofMode::InterceptOnly => h as i64 - 1,
        DofMode::ArAdjusted { order, t_full } => {
            let used = round(order as f64 * n as f64 / t_full as f64) as i64;
            h as i64 - used - 1
        }
    };
    if raw < 1 {
        (1, true)
    } else {
        (raw as usize, false)
    }
}

/// Ljung-Box test of one series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LjungBox {
    pub statistic: f64,
    pub dof: usize,
    pub pvalue: f64,
    /// The adjusted degrees of freedom fell below 1 and were raised to 1.
    pub dof_clamped: bool,
}

/// `Q = n(n+2) Σ_{u=1..h} r_u² / (n − u)` on the centered biased ACF.
pub fn ljung_box(series: &[f64], h: usize, mode: DofMode) -> Result<LjungBox, StatsError> {
    let n = series.len();
    if n <= h {
        return Err(StatsError::TooFewSamples { n, h });
    }
    let (dof, dof_clamped) = ljung_box_dof(h, n, mode);
    let (r, ok) = acf_series(series, h).map_err(|_| StatsError::TooFewSamples { n, h })?;
    let nf = n as f64;
    let statistic = if ok {
        nf * (nf + 2.0) * (1..=h).map(|u| r[u] * r[u] / (nf - u as f64)).sum::<f64>()
    } else {
        0.0
    };
    let pvalue = chi2_sf(statistic, dof as f64)?;
    Ok(LjungBox { statistic, dof, pvalue, dof_clamped })
}

/// Upper tail of the chi-square distribution with `k` degrees of freedom.
pub fn chi2_sf(x: f64, k: f64) -> Result<f64, StatsError> {
    if !(k >= 1.0) {
        return Err(StatsError::InvalidDof);
    }
    if !(x >= 0.0) {
        return Err(StatsError::NegativeStatistic(x));
    }
    Ok(gamma_q(k / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// Benjamini-Hochberg step-up: reject the `i` smallest p-values, where `i`
/// is the largest index with `p_(i) ≤ i·q/m`.
pub fn fdr_bh(pvalues: &[f64], q: f64) -> Result<Vec<bool>, StatsError> {
    if pvalues.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(StatsError::InvalidLevel(q));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &j)| pvalues[j] <= (i + 1) as f64 * q / m as f64)
        .map_or(0, |(i, _)| i + 1);
    let mut mask = vec![false; m];
    for &j in &order[..cutoff] {
        mask[j] = true;
    }
    Ok(mask)
}

/// Bonferroni: reject where `p < alpha / m` (strict).
pub fn bonferroni(pvalues: &[f64], alpha: f64) -> Result<Vec<bool>, StatsError> {
    if pvalues.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidLevel(alpha));
    }
    let threshold = alpha / pvalues.len() as f64;
    Ok(pvalues.iter().map(|&p| p < threshold).collect())
}

/// Standard normal quantile, by bisection on the complementary error
/// function.
pub fn normal_quantile(prob: f64) -> f64 {
    let cdf = |z: f64| 0.5 * libm::erfc(-z / core::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Agresti-Coull interval for `successes` out of `trials` at confidence
/// `conf`, clipped to `[0, 1]`.
pub fn agresti_coull(successes: u64, trials: u64, conf: f64) -> Result<(f64, f64), StatsError> {
    if trials == 0 {
        return Err(StatsError::NoTrials);
    }
    if successes > trials {
        return Err(StatsError::TooManySuccesses { successes, trials });
    }
    if !(conf > 0.0 && conf < 1.0) {
        return Err(StatsError::InvalidLevel(conf));
    }
    let z = normal_quantile(1.0 - (1.0 - conf) / 2.0);
    let z2 = z * z;
    let nt = trials as f64 + z2;
    let pt = (successes as f64 + z2 / 2.0) / nt;
    let half = z * sqrt(pt * (1.0 - pt) / nt);
    Ok(((pt - half).max(0.0), (pt + half).min(1.0)))
}

/// Per-scan false-positive rates and the family-wise error rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRateSummary {
    /// Fraction of vertices flagged in each scan.
    pub fpr_per_scan: Vec<f64>,
    /// Fraction of scans with at least one flagged vertex.
    pub fwer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_scans: usize,
}

impl ErrorRateSummary {
    pub fn mean_fpr(&self) -> f64 {
        self.fpr_per_scan.iter().sum::<f64>() / self.fpr_per_scan.len() as f64
    }
}

/// Summarizes one detection mask per scan; the interval is the 95%
/// Agresti-Coull interval of the FWER.
pub fn summarize_error_rates<M: AsRef<[bool]>>(masks: &[M]) -> Result<ErrorRateSummary, StatsError> {
    let Some(first) = masks.first() else {
        return Err(StatsError::NoScans);
    };
    let v = first.as_ref().len();
    if masks.iter().any(|m| m.as_ref().len() != v) {
        return Err(StatsError::RaggedMasks);
    }
    let fpr_per_scan = masks
        .iter()
        .map(|m| {
            let hits = m.as_ref().iter().filter(|&&b| b).count();
            if v == 0 {
                0.0
            } else {
                hits as f64 / v as f64
            }
        })
        .collect();
    let any = masks.iter().filter(|m| m.as_ref().iter().any(|&b| b)).count();
    let (ci_low, ci_high) = agresti_coull(any as u64, masks.len() as u64, 0.95)?;
    Ok(ErrorRateSummary { fpr_per_scan, fwer: any as f64 / masks.len() as f64, ci_low, ci_high, n_scans: masks.len() })
}

/// Ljung-Box results over a field, with FDR-corrected significance.
#[derive(Clone, Debug, PartialEq)]
pub struct LjungBoxResult {
    pub statistic: Vec<f64>,
    pub dof: Vec<usize>,
    pub pvalue: Vec<f64>,
    pub lags: usize,
    pub significant_mask: Vec<bool>,
    pub dof_clamped: Vec<bool>,
}

impl LjungBoxResult {
    /// Assembles per-vertex tests and applies BH at level `q`.
    pub fn from_tests(tests: &[LjungBox], lags: usize, q: f64) -> Result<Self, StatsError> {
        let pvalue: Vec<f64> = tests.iter().map(|t| t.pvalue).collect();
        let significant_mask = fdr_bh(&pvalue, q)?;
        Ok(Self {
            statistic: tests.iter().map(|t| t.statistic).collect(),
            dof: tests.iter().map(|t| t.dof).collect(),
            pvalue,
            lags,
            significant_mask,
            dof_clamped: tests.iter().map(|t| t.dof_clamped).collect(),
        })
    }

    pub fn significant_fraction(&self) -> f64 {
        let hits = self.significant_mask.iter().filter(|&&b| b).count();
        hits as f64 / self.significant_mask.len().max(1) as f64
    }
}

/// Tests every column of `residuals` using its first `n_head` samples.
/// `mode(v)` picks the degrees-of-freedom convention of vertex `v`.
pub fn ljung_box_field(
    residuals: &Matrix,
    n_head: usize,
    lags: usize,
    mode: impl Fn(usize) -> DofMode,
    q: f64,
) -> Result<LjungBoxResult, StatsError> {
    let n = n_head.min(residuals.rows());
    let tests = (0..residuals.cols())
        .map(|v| ljung_box(&residuals.col(v)[..n], lags, mode(v)))
        .collect::<Result<Vec<_>, _>>()?;
    LjungBoxResult::from_tests(&tests, lags, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_dof_formula() {
        let mode = DofMode::ArAdjusted { order: 6, t_full: 284 };
        assert_eq!(ljung_box_dof(20, 100, mode), (17, false));
        assert_eq!(ljung_box_dof(20, 100, DofMode::InterceptOnly), (19, false));
        assert_eq!(ljung_box_dof(3, 100, DofMode::ArAdjusted { order: 10, t_full: 100 }), (1, true));
    }

    #[test]
    fn constant_series_has_null_statistic() {
        let lb = ljung_box(&[2.0; 50], 10, DofMode::InterceptOnly).unwrap();
        assert_eq!(lb.statistic, 0.0);
        assert_eq!(lb.pvalue, 1.0);
    }

    #[test]
    fn statistic_is_scale_invariant() {
        let x: Vec<f64> = (0..120).map(|i| libm::sin(0.37 * i as f64) + 0.1 * libm::cos(2.1 * i as f64)).collect();
        let y: Vec<f64> = x.iter().map(|v| -7.5 * v).collect();
        let a = ljung_box(&x, 20, DofMode::InterceptOnly).unwrap();
        let b = ljung_box(&y, 20, DofMode::InterceptOnly).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-9 * a.statistic);
    }

    #[test]
    fn statistic_matches_direct_formula() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let c = |u: usize| (u..x.len()).map(|t| (x[t] - mean) * (x[t - u] - mean)).sum::<f64>();
        let q: f64 = n * (n + 2.0) * (1..=5).map(|u| (c(u) / c(0)).powi(2) / (n - u as f64)).sum::<f64>();
        let lb = ljung_box(&x, 5, DofMode::InterceptOnly).unwrap();
        assert!((lb.statistic - q).abs() < 1e-10 * q);
        assert!(ljung_box(&x, 40, DofMode::InterceptOnly).is_err());
    }

    #[test]
    fn chi_square_tails() {
        assert_eq!(chi2_sf(0.0, 3.0).unwrap(), 1.0);
        assert!((chi2_sf(2.0 * libm::log(20.0), 2.0).unwrap() - 0.05).abs() < 1e-14);
        assert!((chi2_sf(3.8415, 1.0).unwrap() - 0.05).abs() < 1e-4);
        assert!((chi2_sf(30.144, 19.0).unwrap() - 0.05).abs() < 1e-3);
        assert!(chi2_sf(-1.0, 2.0).is_err());
        assert!(chi2_sf(1.0, 0.5).is_err());
    }

    #[test]
    fn chi_square_matches_exponential_and_decreases() {
        let mut prev = 1.0;
        for i in 1..=1000 {
            let x = i as f64 * 0.06;
            let p = chi2_sf(x, 2.0).unwrap();
            assert!((p - libm::exp(-x / 2.0)).abs() < 1e-12);
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn benjamini_hochberg() {
        assert_eq!(fdr_bh(&[1.0, 1.0], 0.05).unwrap(), vec![false, false]);
        assert_eq!(fdr_bh(&[0.04], 0.05).unwrap(), vec![true]);
        assert_eq!(fdr_bh(&[0.01, 0.02, 0.03, 0.5], 0.05).unwrap(), vec![true, true, true, false]);
        // Step-up: a p-value above its own threshold is rejected when a
        // larger one passes.
        assert_eq!(fdr_bh(&[0.03, 0.011, 0.02], 0.05).unwrap(), vec![true, true, true]);
        assert!(fdr_bh(&[], 0.05).is_err());
    }

    #[test]
    fn benjamini_hochberg_is_monotone() {
        let p = [0.001, 0.2, 0.013, 0.04, 0.03, 0.9, 0.021];
        let base = fdr_bh(&p, 0.1).unwrap();
        for i in 0..p.len() {
            let mut lower = p;
            lower[i] *= 0.5;
            let out = fdr_bh(&lower, 0.1).unwrap();
            assert!(base.iter().zip(&out).all(|(&a, &b)| !a || b));
        }
    }

    #[test]
    fn bonferroni_boundary() {
        let m = 6000;
        let mut p = vec![1.0; m];
        p[0] = 0.05 / m as f64;
        p[1] = 8.3e-6;
        let mask = bonferroni(&p, 0.05).unwrap();
        assert!(!mask[0] && mask[1]);
        assert_eq!(bonferroni(&[0.049], 0.05).unwrap(), vec![true]);
    }

    #[test]
    fn agresti_coull_intervals() {
        assert!((normal_quantile(0.975) - 1.95996).abs() < 1e-5);
        let (lo, hi) = agresti_coull(0, 100, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.045).abs() < 1e-3, "{hi}");
        let (_, hi) = agresti_coull(100, 100, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        let (lo, hi) = agresti_coull(8, 160, 0.95).unwrap();
        assert!(lo < 0.05 && hi > 0.05);
        assert!(agresti_coull(0, 0, 0.95).is_err());
        assert!(agresti_coull(5, 4, 0.95).is_err());
    }

    #[test]
    fn error_rate_counting() {
        let masks = vec![vec![false; 4]; 10];
        let s = summarize_error_rates(&masks).unwrap();
        assert_eq!(s.fwer, 0.0);
        assert!(s.fpr_per_scan.iter().all(|&f| f == 0.0));
        let mut masks = masks;
        masks[3][1] = true;
        let s = summarize_error_rates(&masks).unwrap();
        assert_eq!(s.fwer, 0.1);
        assert_eq!(s.fpr_per_scan[3], 0.25);
        assert!(s.ci_low <= s.fwer && s.fwer <= s.ci_high);
        assert!(summarize_error_rates::<Vec<bool>>(&[]).is_err());
    }
}
