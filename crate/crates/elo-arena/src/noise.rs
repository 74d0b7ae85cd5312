//! Judge-noise estimation and the comparison-vs-absolute efficiency study.
//!
//! Two independent noise estimates are produced from two kinds of data.
//!
//! Absolute route: per-item mean ratings are regressed on expert quality
//! (OLS). The slope converts rating units into quality units, so the
//! residual scatter around the fit maps to an effective noise of
//! sqrt(2) * residual_std / |slope| when two such scores are subtracted to
//! rank a pair.
//!
//! Comparison route: for pairs at a known quality gap, the accuracy of
//! pairwise verdicts pins the comparison noise through Phi(gap / sigma) =
//! accuracy. The estimate is the root of the score equation, found by
//! bisection; for a single pooled gap it coincides with the closed form
//! gap / PhiInv(accuracy).
//!
//! Comparisons beat absolute scoring at ranking whenever
//! sigma_comp < sqrt(2) * sigma_abs; `sample_efficiency_experiment` measures
//! that head-to-head under a shared judging budget.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::normal_cdf;
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("dataset needs at least {needed} records, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("regression needs at least two distinct expert qualities")]
    DegenerateRegressor,
    #[error("item `{0}` has no ratings")]
    EmptyRatings(String),
    #[error("slope is zero: ratings carry no quality signal, effective noise is unbounded")]
    SignalCompressed,
    #[error("no pairs recorded for gap {0}")]
    NoPairsForGap(u32),
    #[error("pair `{pair_id}` reports {wins} wins out of {total} comparisons")]
    InvalidWinCount {
        pair_id: String,
        wins: u64,
        total: u64,
    },
    #[error("accuracy {accuracy} at gap {gap} is not above 1/2; sigma is not identifiable")]
    NonIdentifiable { gap: u32, accuracy: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("gap must be positive")]
    InvalidGap,
    #[error("budget list must not be empty")]
    NoBudgets,
}

fn check_positive(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(NoiseError::InvalidParameter { name, value })
    }
}

/// One rated item: a hidden expert quality and the judge's absolute ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteRecord {
    pub item_id: String,
    pub expert_quality: f64,
    pub ratings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AbsoluteRatingDataset {
    pub records: Vec<AbsoluteRecord>,
}

/// Pairwise verdict counts for one pair at a known expert-quality gap.
/// `wins_for_better` counts verdicts that picked the higher-quality side;
/// file records spell the fields `wins` and `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub gap: u32,
    #[serde(rename = "wins")]
    pub wins_for_better: u64,
    #[serde(rename = "total")]
    pub comparisons: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairwiseDataset {
    pub records: Vec<PairRecord>,
}

/// Pooled comparison accuracy at one quality gap; the sufficient statistic
/// the per-gap noise estimate needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub gap: u32,
    pub accuracy: f64,
    pub comparisons: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual of per-item mean ratings around the fit.
    pub residual_std: f64,
}

/// Everything the noise pipeline concludes, in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub fit: RegressionFit,
    /// Mean of per-item sample variances; absent when the pipeline ran from
    /// summary statistics instead of raw ratings.
    pub within_variance: Option<f64>,
    pub sigma_abs_eff: f64,
    pub sigma_comp_by_gap: BTreeMap<u32, f64>,
    /// sigma_abs_eff over the smallest-gap comparison noise.
    pub noise_ratio: f64,
    pub comparison_superior: bool,
}

/// OLS of per-item mean rating on expert quality.
pub fn fit_absolute_regression(
    data: &AbsoluteRatingDataset,
) -> Result<RegressionFit, NoiseError> {
    if data.records.len() < 2 {
        return Err(NoiseError::NotEnoughData {
            needed: 2,
            got: data.records.len(),
        });
    }
    let mut xs = Vec::with_capacity(data.records.len());
    let mut ys = Vec::with_capacity(data.records.len());
    for rec in &data.records {
        if rec.ratings.is_empty() {
            return Err(NoiseError::EmptyRatings(rec.item_id.clone()));
        }
        xs.push(rec.expert_quality);
        ys.push(rec.ratings.iter().sum::<f64>() / rec.ratings.len() as f64);
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    if sxx == 0.0 {
        return Err(NoiseError::DegenerateRegressor);
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        residual_std: (ss_res / n).sqrt(),
    })
}

/// Mean over items of the per-item sample variance (n-1 denominator).
/// Items with a single rating contribute zero variance.
pub fn within_sample_variance(data: &AbsoluteRatingDataset) -> Result<f64, NoiseError> {
    if data.records.is_empty() {
        return Err(NoiseError::NotEnoughData { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for rec in &data.records {
        if rec.ratings.is_empty() {
            return Err(NoiseError::EmptyRatings(rec.item_id.clone()));
        }
        let n = rec.ratings.len() as f64;
        if rec.ratings.len() > 1 {
            let mean = rec.ratings.iter().sum::<f64>() / n;
            let ss: f64 = rec.ratings.iter().map(|r| (r - mean) * (r - mean)).sum();
            total += ss / (n - 1.0);
        }
    }
    Ok(total / data.records.len() as f64)
}

/// Effective pair-ranking noise of the absolute route: subtracting two
/// scores doubles the variance, and the slope rescales rating units to
/// quality units.
pub fn effective_ranking_noise(slope: f64, residual_std: f64) -> Result<f64, NoiseError> {
    if !slope.is_finite() || !residual_std.is_finite() || residual_std < 0.0 {
        return Err(NoiseError::InvalidParameter {
            name: "residual_std",
            value: residual_std,
        });
    }
    if slope == 0.0 {
        return Err(NoiseError::SignalCompressed);
    }
    Ok(std::f64::consts::SQRT_2 * residual_std / slope.abs())
}

/// Comparison noise implied by `accuracy` at quality gap `gap`.
///
/// Maximizes the pooled Bernoulli likelihood in sigma. The likelihood is
/// monotone in p = Phi(gap / sigma), so the score equation's root is where
/// Phi(gap / sigma) equals the observed accuracy; that root is bracketed and
/// bisected in sigma. Accuracy at or below 1/2 has no positive-sigma
/// solution.
pub fn thurstone_sigma_from_accuracy(gap: u32, accuracy: f64) -> Result<f64, NoiseError> {
    if gap == 0 {
        return Err(NoiseError::InvalidGap);
    }
    if !(accuracy > 0.5 && accuracy < 1.0) {
        return Err(NoiseError::NonIdentifiable { gap, accuracy });
    }
    let g = f64::from(gap);
    let score = |sigma: f64| normal_cdf(g / sigma) - accuracy;

    // score(lo) > 0 for tiny sigma (Phi -> 1); grow hi until score < 0
    // (Phi -> 1/2 < accuracy as sigma -> inf guarantees one exists).
    let mut lo = g * 1e-9;
    let mut hi = g;
    while score(hi) > 0.0 {
        hi *= 2.0;
        if hi > g * 1e12 {
            return Err(NoiseError::NonIdentifiable { gap, accuracy });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pools every record at `gap` into one accuracy (comparison-weighted) and
/// estimates sigma from it. Gaps are never pooled with each other.
pub fn thurstone_mle(data: &PairwiseDataset, gap: u32) -> Result<f64, NoiseError> {
    let mut wins = 0u64;
    let mut total = 0u64;
    for rec in data.records.iter().filter(|r| r.gap == gap) {
        if rec.wins_for_better > rec.comparisons {
            return Err(NoiseError::InvalidWinCount {
                pair_id: rec.pair_id.clone(),
                wins: rec.wins_for_better,
                total: rec.comparisons,
            });
        }
        wins += rec.wins_for_better;
        total += rec.comparisons;
    }
    if total == 0 {
        return Err(NoiseError::NoPairsForGap(gap));
    }
    thurstone_sigma_from_accuracy(gap, wins as f64 / total as f64)
}

/// True when pairwise comparison is the lower-noise ranking channel:
/// sigma_comp < sqrt(2) * sigma_abs (strict).
pub fn superiority_check(sigma_comp: f64, sigma_abs: f64) -> Result<bool, NoiseError> {
    check_positive("sigma_comp", sigma_comp)?;
    check_positive("sigma_abs", sigma_abs)?;
    Ok(sigma_comp < std::f64::consts::SQRT_2 * sigma_abs)
}

/// One budget row of the sample-efficiency experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub budget: u32,
    pub misrank_comparison: f64,
    pub misrank_absolute: f64,
    pub se_comparison: f64,
    pub se_absolute: f64,
}

/// Misranking rates for two ways of spending n judge calls on one pair:
/// majority vote over n comparisons, versus ranking by means of n absolute
/// scores per side. A tied vote or tied means counts as a misranking.
/// Every repetition draws from its own derived seed.
pub fn sample_efficiency_experiment(
    sigma_comp: f64,
    sigma_abs: f64,
    delta_q: f64,
    budgets: &[u32],
    repetitions: u32,
    seed: u64,
) -> Result<Vec<EfficiencyRow>, NoiseError> {
    check_positive("sigma_comp", sigma_comp)?;
    if !(sigma_abs.is_finite() && sigma_abs >= 0.0) {
        return Err(NoiseError::InvalidParameter {
            name: "sigma_abs",
            value: sigma_abs,
        });
    }
    if !(delta_q.is_finite() && delta_q >= 0.0) {
        return Err(NoiseError::InvalidParameter {
            name: "delta_q",
            value: delta_q,
        });
    }
    if budgets.is_empty() {
        return Err(NoiseError::NoBudgets);
    }
    if repetitions == 0 {
        return Err(NoiseError::InvalidParameter {
            name: "repetitions",
            value: 0.0,
        });
    }

    let p_correct = normal_cdf(delta_q / sigma_comp);
    let mut rows = Vec::with_capacity(budgets.len());
    for (bi, &n) in budgets.iter().enumerate() {
        if n == 0 {
            return Err(NoiseError::InvalidParameter {
                name: "budget",
                value: 0.0,
            });
        }
        let mut miss_cmp = 0u64;
        let mut miss_abs = 0u64;
        for rep in 0..repetitions {
            let mut rng = rng_from(derive_seed(seed, "efficiency", &[bi as u64, rep.into()]));

            let mut votes_for_better = 0u32;
            for _ in 0..n {
                if rng.random::<f64>() < p_correct {
                    votes_for_better += 1;
                }
            }
            if 2 * votes_for_better <= n {
                miss_cmp += 1;
            }

            let (mean_better, mean_worse) = if sigma_abs == 0.0 {
                (delta_q, 0.0)
            } else {
                let noise = Normal::new(0.0, sigma_abs).expect("validated sigma");
                let mut better = 0.0;
                let mut worse = 0.0;
                for _ in 0..n {
                    better += delta_q + noise.sample(&mut rng);
                    worse += noise.sample(&mut rng);
                }
                (better / f64::from(n), worse / f64::from(n))
            };
            if mean_better <= mean_worse {
                miss_abs += 1;
            }
        }

        let reps = f64::from(repetitions);
        let p_cmp = miss_cmp as f64 / reps;
        let p_abs = miss_abs as f64 / reps;
        rows.push(EfficiencyRow {
            budget: n,
            misrank_comparison: p_cmp,
            misrank_absolute: p_abs,
            se_comparison: (p_cmp * (1.0 - p_cmp) / reps).sqrt(),
            se_absolute: (p_abs * (1.0 - p_abs) / reps).sqrt(),
        });
    }
    Ok(rows)
}

/// Full pipeline from raw datasets.
pub fn report_from_datasets(
    absolute: &AbsoluteRatingDataset,
    pairwise: &PairwiseDataset,
) -> Result<NoiseReport, NoiseError> {
    let fit = fit_absolute_regression(absolute)?;
    let within = within_sample_variance(absolute)?;
    let mut gaps: Vec<u32> = pairwise.records.iter().map(|r| r.gap).collect();
    gaps.sort_unstable();
    gaps.dedup();
    if gaps.is_empty() {
        return Err(NoiseError::NotEnoughData { needed: 1, got: 0 });
    }
    let summaries: Vec<GapSummary> = gaps
        .iter()
        .map(|&gap| {
            let mut wins = 0u64;
            let mut total = 0u64;
            for rec in pairwise.records.iter().filter(|r| r.gap == gap) {
                if rec.wins_for_better > rec.comparisons {
                    return Err(NoiseError::InvalidWinCount {
                        pair_id: rec.pair_id.clone(),
                        wins: rec.wins_for_better,
                        total: rec.comparisons,
                    });
                }
                wins += rec.wins_for_better;
                total += rec.comparisons;
            }
            Ok(GapSummary {
                gap,
                accuracy: wins as f64 / total as f64,
                comparisons: total,
            })
        })
        .collect::<Result<_, NoiseError>>()?;
    let mut report = report_from_summary(fit, &summaries)?;
    report.within_variance = Some(within);
    Ok(report)
}

/// Full pipeline from a regression fit plus per-gap accuracy summaries, for
/// reproducing published statistics without the raw data.
pub fn report_from_summary(
    fit: RegressionFit,
    gaps: &[GapSummary],
) -> Result<NoiseReport, NoiseError> {
    if gaps.is_empty() {
        return Err(NoiseError::NotEnoughData { needed: 1, got: 0 });
    }
    let sigma_abs_eff = effective_ranking_noise(fit.slope, fit.residual_std)?;
    let mut by_gap = BTreeMap::new();
    for summary in gaps {
        let sigma = thurstone_sigma_from_accuracy(summary.gap, summary.accuracy)?;
        by_gap.insert(summary.gap, sigma);
    }
    let (&_smallest_gap, &sigma_comp_smallest) =
        by_gap.iter().next().expect("gaps checked non-empty");
    // sigma_abs_eff already measures a score *difference*, so the per-score
    // noise entering the superiority condition is sigma_abs_eff / sqrt(2).
    let superior = superiority_check(
        sigma_comp_smallest,
        sigma_abs_eff / std::f64::consts::SQRT_2,
    )?;
    Ok(NoiseReport {
        fit,
        within_variance: None,
        sigma_abs_eff,
        noise_ratio: sigma_abs_eff / sigma_comp_smallest,
        sigma_comp_by_gap: by_gap,
        comparison_superior: superior,
    })
}

/// Plain-text table of a report, for terminal output.
pub fn render_report(report: &NoiseReport) -> String {
    let mut out = String::new();
    out.push_str("rating-noise report\n");
    out.push_str(&format!(
        "  regression        slope {:.4}, intercept {:.3}, R^2 {:.4}, residual std {:.4}\n",
        report.fit.slope, report.fit.intercept, report.fit.r_squared, report.fit.residual_std
    ));
    if let Some(wv) = report.within_variance {
        out.push_str(&format!("  within-item var   {wv:.4}\n"));
    }
    out.push_str(&format!(
        "  sigma_abs_eff     {:.3} (pair-ranking noise of the absolute route)\n",
        report.sigma_abs_eff
    ));
    for (gap, sigma) in &report.sigma_comp_by_gap {
        out.push_str(&format!("  sigma_comp gap {gap}  {sigma:.3}\n"));
    }
    out.push_str(&format!(
        "  noise ratio       {:.3} (absolute / comparison at smallest gap)\n",
        report.noise_ratio
    ));
    out.push_str(&format!(
        "  comparison is the lower-noise channel: {}\n",
        report.comparison_superior
    ));
    out
}
