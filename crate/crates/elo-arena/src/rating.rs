//! Elo bookkeeping for one learning agent against a frozen opponent pool.
//!
//! Ratings live in a table keyed by agent id. Matches are judged elsewhere;
//! this module turns batches of (score, expected score) pairs into a single
//! batched update for exactly one agent, so opponent ratings never move.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Update step size shared by every rating change.
pub const DEFAULT_K_FACTOR: f64 = 32.0;

#[derive(Debug, Error, PartialEq)]
pub enum RatingError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("rating must be finite, got {0}")]
    NonFiniteRating(f64),
    #[error("win probability must lie strictly inside (0, 1), got {0}")]
    WinProbOutOfRange(f64),
    #[error("match score must be 0 or 1, got {0}")]
    InvalidScore(f64),
    #[error("expected score must lie strictly inside (0, 1), got {0}")]
    InvalidExpected(f64),
    #[error("k-factor must be positive and finite, got {0}")]
    InvalidKFactor(f64),
}

/// One judged match from the updating agent's point of view.
///
/// `expected` is the expected score at the time the match was scheduled;
/// batched updates deliberately reuse the pre-batch snapshot for every
/// match in the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub opponent_id: String,
    pub score: f64,
    pub expected: f64,
}

/// Expected score of a `rating_self` player against `rating_opp`.
///
/// The result is strictly inside (0, 1) for rating gaps up to roughly
/// 6000 points; beyond that double precision saturates the score to an
/// exact 0 or 1. Training keeps gaps far below the threshold because the
/// per-match gain vanishes as the expected score approaches the outcome.
pub fn expected_score(rating_self: f64, rating_opp: f64) -> Result<f64, RatingError> {
    if !rating_self.is_finite() {
        return Err(RatingError::NonFiniteRating(rating_self));
    }
    if !rating_opp.is_finite() {
        return Err(RatingError::NonFiniteRating(rating_opp));
    }
    Ok(1.0 / (1.0 + 10f64.powf((rating_opp - rating_self) / 400.0)))
}

/// Rating a player would settle at while winning against `rating_opp` with
/// probability `win_prob`: the point where expected score equals `win_prob`.
pub fn stationary_rating(win_prob: f64, rating_opp: f64) -> Result<f64, RatingError> {
    if !(win_prob > 0.0 && win_prob < 1.0) {
        return Err(RatingError::WinProbOutOfRange(win_prob));
    }
    if !rating_opp.is_finite() {
        return Err(RatingError::NonFiniteRating(rating_opp));
    }
    Ok(rating_opp - 400.0 * (1.0 / win_prob - 1.0).log10())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    ratings: BTreeMap<String, f64>,
    k_factor: f64,
}

impl RatingTable {
    pub fn new(k_factor: f64) -> Result<Self, RatingError> {
        if !(k_factor.is_finite() && k_factor > 0.0) {
            return Err(RatingError::InvalidKFactor(k_factor));
        }
        Ok(Self {
            ratings: BTreeMap::new(),
            k_factor,
        })
    }

    pub fn k_factor(&self) -> f64 {
        self.k_factor
    }

    pub fn insert(&mut self, agent_id: &str, rating: f64) -> Result<(), RatingError> {
        if !rating.is_finite() {
            return Err(RatingError::NonFiniteRating(rating));
        }
        self.ratings.insert(agent_id.to_owned(), rating);
        Ok(())
    }

    pub fn rating(&self, agent_id: &str) -> Result<f64, RatingError> {
        self.ratings
            .get(agent_id)
            .copied()
            .ok_or_else(|| RatingError::UnknownAgent(agent_id.to_owned()))
    }

    pub fn contains(&self, agent_id: &str) -> bool {
        self.ratings.contains_key(agent_id)
    }

    /// Agents in id order.
    pub fn agents(&self) -> impl Iterator<Item = (&str, f64)> {
        self.ratings.iter().map(|(id, &r)| (id.as_str(), r))
    }

    /// Applies one batched update to `agent_id` and returns its new rating.
    ///
    /// The delta is K * sum(score_i - expected_i); every expected score must
    /// have been computed against the same pre-batch snapshot by the caller.
    /// Only `agent_id` moves. An empty batch is a no-op.
    pub fn update_batch(
        &mut self,
        agent_id: &str,
        outcomes: &[MatchOutcome],
    ) -> Result<f64, RatingError> {
        let current = self.rating(agent_id)?;
        let mut delta = 0.0;
        for outcome in outcomes {
            if !self.ratings.contains_key(&outcome.opponent_id) {
                return Err(RatingError::UnknownAgent(outcome.opponent_id.clone()));
            }
            if outcome.score != 0.0 && outcome.score != 1.0 {
                return Err(RatingError::InvalidScore(outcome.score));
            }
            if !(outcome.expected > 0.0 && outcome.expected < 1.0) {
                return Err(RatingError::InvalidExpected(outcome.expected));
            }
            delta += self.k_factor * (outcome.score - outcome.expected);
        }
        let updated = current + delta;
        if !updated.is_finite() {
            return Err(RatingError::NonFiniteRating(updated));
        }
        self.ratings.insert(agent_id.to_owned(), updated);
        Ok(updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(opp: &str, score: f64, expected: f64) -> MatchOutcome {
        MatchOutcome {
            opponent_id: opp.to_owned(),
            score,
            expected,
        }
    }

    #[test]
    fn expected_score_equal_ratings_is_half() {
        assert_eq!(expected_score(1500.0, 1500.0).unwrap(), 0.5);
    }

    #[test]
    fn expected_score_400_point_deficit() {
        // 400 points behind is exactly 10:1 odds, so 1/11.
        let e = expected_score(1500.0, 1900.0).unwrap();
        assert!((e - 1.0 / 11.0).abs() < 1e-15, "got {e}");
    }

    #[test]
    fn expected_score_350_point_deficit() {
        let e = expected_score(1350.0, 1700.0).unwrap();
        assert!((e - 0.11766170295305857).abs() < 1e-12, "got {e}");
    }

    #[test]
    fn expected_score_rejects_non_finite() {
        assert!(expected_score(f64::NAN, 1500.0).is_err());
        assert!(expected_score(1500.0, f64::INFINITY).is_err());
    }

    #[test]
    fn single_win_at_even_odds_gains_16() {
        let mut table = RatingTable::new(32.0).unwrap();
        table.insert("a", 1500.0).unwrap();
        table.insert("b", 1500.0).unwrap();
        let new = table
            .update_batch("a", &[outcome("b", 1.0, 0.5)])
            .unwrap();
        assert_eq!(new, 1516.0);
        assert_eq!(table.rating("b").unwrap(), 1500.0);
    }

    #[test]
    fn batched_win_and_loss_from_snapshot() {
        // 1350-rated agent, one win against 1400 (E = 0.42854) and one loss
        // against 1700 (E = 0.11766), updated in a single batch.
        let mut table = RatingTable::new(32.0).unwrap();
        table.insert("policy", 1350.0).unwrap();
        table.insert("mid", 1400.0).unwrap();
        table.insert("strong", 1700.0).unwrap();
        let e_mid = expected_score(1350.0, 1400.0).unwrap();
        let e_strong = expected_score(1350.0, 1700.0).unwrap();
        let new = table
            .update_batch(
                "policy",
                &[
                    outcome("mid", 1.0, e_mid),
                    outcome("strong", 0.0, e_strong),
                ],
            )
            .unwrap();
        assert!((new - 1364.5216452625702).abs() < 1e-9, "got {new}");
        assert_eq!(table.rating("mid").unwrap(), 1400.0);
        assert_eq!(table.rating("strong").unwrap(), 1700.0);
    }

    #[test]
    fn empty_batch_is_noop() {
        let mut table = RatingTable::new(32.0).unwrap();
        table.insert("a", 1234.5).unwrap();
        let new = table.update_batch("a", &[]).unwrap();
        assert_eq!(new, 1234.5);
    }

    #[test]
    fn update_rejects_unknown_ids_and_bad_scores() {
        let mut table = RatingTable::new(32.0).unwrap();
        table.insert("a", 1500.0).unwrap();
        assert_eq!(
            table.update_batch("ghost", &[]),
            Err(RatingError::UnknownAgent("ghost".into()))
        );
        assert_eq!(
            table.update_batch("a", &[outcome("ghost", 1.0, 0.5)]),
            Err(RatingError::UnknownAgent("ghost".into()))
        );
        table.insert("b", 1500.0).unwrap();
        assert_eq!(
            table.update_batch("a", &[outcome("b", 0.5, 0.5)]),
            Err(RatingError::InvalidScore(0.5))
        );
        assert_eq!(
            table.update_batch("a", &[outcome("b", 1.0, 1.0)]),
            Err(RatingError::InvalidExpected(1.0))
        );
    }

    #[test]
    fn stationary_rating_known_points() {
        let r = stationary_rating(0.75, 1500.0).unwrap();
        assert!((r - 1690.848501887865).abs() < 1e-9, "got {r}");
        let r = stationary_rating(1.0 / 11.0, 1900.0).unwrap();
        assert!((r - 1500.0).abs() < 1e-9, "got {r}");
    }

    #[test]
    fn stationary_rating_rejects_degenerate_probs() {
        assert!(stationary_rating(0.0, 1500.0).is_err());
        assert!(stationary_rating(1.0, 1500.0).is_err());
        assert!(stationary_rating(-0.2, 1500.0).is_err());
    }

    proptest! {
        // Rating gaps are capped below ~6000 points in these properties:
        // past a gap of about 6384, 10^(gap/400) drops under one ULP of
        // 1.0 and the score saturates to exactly 1.0 in double precision,
        // so strictness is only meaningful on this operating domain.
        #[test]
        fn expected_scores_of_a_pair_sum_to_one(
            a in -1_000.0..4_000.0f64,
            b in -1_000.0..4_000.0f64,
        ) {
            let ab = expected_score(a, b).unwrap();
            let ba = expected_score(b, a).unwrap();
            prop_assert!(ab > 0.0 && ab < 1.0);
            prop_assert!((ab + ba - 1.0).abs() < 1e-12);
        }

        #[test]
        fn expected_score_increases_with_own_rating(
            base in -1_000.0..3_000.0f64,
            bump in 0.1..2_000.0f64,
            opp in -1_000.0..3_000.0f64,
        ) {
            let lo = expected_score(base, opp).unwrap();
            let hi = expected_score(base + bump, opp).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn stationary_rating_inverts_expected_score(
            r_opp in -5_000.0..5_000.0f64,
            p in 0.001..0.999f64,
        ) {
            let r = stationary_rating(p, r_opp).unwrap();
            let e = expected_score(r, r_opp).unwrap();
            prop_assert!((e - p).abs() < 1e-9);
        }

        #[test]
        fn batch_update_moves_only_the_target(
            start in 1_000.0..2_000.0f64,
            score in prop::bool::ANY,
            expected in 0.01..0.99f64,
        ) {
            let mut table = RatingTable::new(32.0).unwrap();
            table.insert("p", start).unwrap();
            table.insert("o", 1_500.0).unwrap();
            let s = if score { 1.0 } else { 0.0 };
            table.update_batch("p", &[outcome("o", s, expected)]).unwrap();
            prop_assert_eq!(table.rating("o").unwrap(), 1_500.0);
            let want = start + 32.0 * (s - expected);
            prop_assert!((table.rating("p").unwrap() - want).abs() < 1e-12);
        }
    }
}
