//! Temperature-controlled opponent selection.
//!
//! Opponents are drawn with probability proportional to
//! exp(-|R(policy) - R(opponent)| / T). Low temperatures concentrate play on
//! the nearest-rated opponent, high temperatures flatten toward uniform.
//! The minimum distance is subtracted before exponentiating so extreme
//! rating gaps or tiny temperatures cannot underflow every weight at once.

use rand::Rng;
use thiserror::Error;

use crate::rating::RatingTable;

#[derive(Debug, Error, PartialEq)]
pub enum MatchmakingError {
    #[error("opponent pool is empty")]
    EmptyPool,
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("selection distribution is invalid: {0}")]
    InvalidDistribution(String),
}

/// Selection probabilities over `opponents`, in input order.
pub fn selection_distribution(
    table: &RatingTable,
    policy_id: &str,
    opponents: &[String],
    temperature: f64,
) -> Result<Vec<(String, f64)>, MatchmakingError> {
    if opponents.is_empty() {
        return Err(MatchmakingError::EmptyPool);
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(MatchmakingError::InvalidTemperature(temperature));
    }
    let policy_rating = table
        .rating(policy_id)
        .map_err(|_| MatchmakingError::UnknownAgent(policy_id.to_owned()))?;

    let mut distances = Vec::with_capacity(opponents.len());
    for id in opponents {
        let r = table
            .rating(id)
            .map_err(|_| MatchmakingError::UnknownAgent(id.clone()))?;
        distances.push((policy_rating - r).abs());
    }
    let min_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);

    let weights: Vec<f64> = distances
        .iter()
        .map(|d| (-(d - min_distance) / temperature).exp())
        .collect();
    // The nearest opponent contributes weight exactly 1, so the total is
    // always >= 1 and normalization cannot divide by zero.
    let total: f64 = weights.iter().sum();

    Ok(opponents
        .iter()
        .zip(weights)
        .map(|(id, w)| (id.clone(), w / total))
        .collect())
}

/// Draws one opponent id by inverse-CDF walk over the distribution in its
/// given order, consuming a single uniform variate from `rng`.
pub fn sample_opponent<'a, R: Rng + ?Sized>(
    distribution: &'a [(String, f64)],
    rng: &mut R,
) -> Result<&'a str, MatchmakingError> {
    if distribution.is_empty() {
        return Err(MatchmakingError::EmptyPool);
    }
    let mut total = 0.0;
    for (id, p) in distribution {
        if !(p.is_finite() && *p >= 0.0) {
            return Err(MatchmakingError::InvalidDistribution(format!(
                "probability for `{id}` is {p}"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(MatchmakingError::InvalidDistribution(format!(
            "probabilities sum to {total}"
        )));
    }

    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (id, p) in distribution {
        acc += p;
        if u < acc {
            return Ok(id);
        }
    }
    // Floating-point residue can leave u just above the final accumulator;
    // the draw then belongs to the last entry.
    Ok(distribution.last().map(|(id, _)| id.as_str()).unwrap())
}
