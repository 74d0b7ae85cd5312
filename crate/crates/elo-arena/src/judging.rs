//! Pairwise verdicts between a policy response and an opponent response.
//!
//! Two simulated judge families are provided. The Thurstone comparison judge
//! decides a pair in one draw: the policy wins with probability
//! Phi((q_policy - q_opponent) / sigma_comp). The noisy-absolute judge scores
//! each side independently as quality + Normal(0, sigma_abs^2) and declares
//! the strictly greater score the winner, so it models ranking via noisy
//! absolute ratings. Rewards are binary: 1 for a policy win, 0 otherwise,
//! ties included.
//!
//! A verbosity guard runs after the judge: if the policy response outruns the
//! opponent's by more than the configured word threshold, the win is revoked.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::normal_cdf;

/// Word-count margin beyond which a policy win is revoked.
pub const DEFAULT_LENGTH_GUARD: u32 = 300;

#[derive(Debug, Error, PartialEq)]
pub enum JudgingError {
    #[error("judge kind {kind:?} cannot serve this call: {reason}")]
    InvalidJudge { kind: JudgeKind, reason: String },
    #[error("sigma_comp must be positive and finite, got {0}")]
    InvalidSigmaComp(f64),
    #[error("sigma_abs must be non-negative and finite, got {0}")]
    InvalidSigmaAbs(f64),
    #[error("response quality must be finite, got {0}")]
    NonFiniteQuality(f64),
}

/// One generated (or cached) response, reduced to the attributes the
/// simulated judges can see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub quality: f64,
    pub word_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ResponseSample {
    pub fn new(quality: f64, word_count: u32) -> Self {
        Self {
            quality,
            word_count,
            text: None,
        }
    }
}

/// Per-agent response length model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthDistribution {
    Fixed(u32),
    Uniform { min: u32, max: u32 },
}

impl LengthDistribution {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            LengthDistribution::Fixed(_) => Ok(()),
            LengthDistribution::Uniform { min, max } if min <= max => Ok(()),
            LengthDistribution::Uniform { min, max } => {
                Err(format!("word range has min {min} > max {max}"))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            LengthDistribution::Fixed(n) => n,
            LengthDistribution::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    ThurstoneComparison,
    NoisyAbsolute,
    Remote,
}

/// Parameters of a judge. `sigma_comp` is the comparison noise of the
/// Thurstone judge; `sigma_abs` the per-score noise of the absolute judge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeModel {
    pub kind: JudgeKind,
    pub sigma_comp: f64,
    pub sigma_abs: f64,
}

impl JudgeModel {
    pub fn thurstone(sigma_comp: f64) -> Result<Self, JudgingError> {
        if !(sigma_comp.is_finite() && sigma_comp > 0.0) {
            return Err(JudgingError::InvalidSigmaComp(sigma_comp));
        }
        Ok(Self {
            kind: JudgeKind::ThurstoneComparison,
            sigma_comp,
            sigma_abs: 0.0,
        })
    }

    pub fn noisy_absolute(sigma_abs: f64) -> Result<Self, JudgingError> {
        if !(sigma_abs.is_finite() && sigma_abs >= 0.0) {
            return Err(JudgingError::InvalidSigmaAbs(sigma_abs));
        }
        Ok(Self {
            kind: JudgeKind::NoisyAbsolute,
            sigma_comp: 0.0,
            sigma_abs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Policy,
    Opponent,
    Tie,
}

/// Judge decision plus the training reward derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub winner: Winner,
    pub reward: f64,
}

impl Verdict {
    /// The reward follows the winner: 1 for the policy, 0 otherwise.
    pub fn for_winner(winner: Winner) -> Self {
        let reward = if winner == Winner::Policy { 1.0 } else { 0.0 };
        Self { winner, reward }
    }
}

/// One judged pair in a training run; the unit the match log stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub iteration: u32,
    pub prompt_id: String,
    pub opponent_id: String,
    pub output_index: u32,
    pub winner: Winner,
    pub reward: f64,
    pub policy_words: u32,
    pub opponent_words: u32,
}

fn check_quality(sample: &ResponseSample) -> Result<(), JudgingError> {
    if sample.quality.is_finite() {
        Ok(())
    } else {
        Err(JudgingError::NonFiniteQuality(sample.quality))
    }
}

/// Thurstone comparison: a single draw decides the pair, never a tie.
pub fn compare_thurstone<R: Rng + ?Sized>(
    policy: &ResponseSample,
    opponent: &ResponseSample,
    judge: &JudgeModel,
    rng: &mut R,
) -> Result<Verdict, JudgingError> {
    if judge.kind != JudgeKind::ThurstoneComparison {
        return Err(JudgingError::InvalidJudge {
            kind: judge.kind,
            reason: "compare_thurstone needs a thurstone_comparison judge".into(),
        });
    }
    if !(judge.sigma_comp.is_finite() && judge.sigma_comp > 0.0) {
        return Err(JudgingError::InvalidSigmaComp(judge.sigma_comp));
    }
    check_quality(policy)?;
    check_quality(opponent)?;

    let p_win = normal_cdf((policy.quality - opponent.quality) / judge.sigma_comp);
    let u: f64 = rng.random();
    Ok(Verdict::for_winner(if u < p_win {
        Winner::Policy
    } else {
        Winner::Opponent
    }))
}

/// Ranking through two independent noisy absolute scores. Strictly greater
/// wins; exactly equal scores (reachable at sigma_abs = 0) are a tie.
pub fn compare_via_scores<R: Rng + ?Sized>(
    policy: &ResponseSample,
    opponent: &ResponseSample,
    judge: &JudgeModel,
    rng: &mut R,
) -> Result<Verdict, JudgingError> {
    if judge.kind != JudgeKind::NoisyAbsolute {
        return Err(JudgingError::InvalidJudge {
            kind: judge.kind,
            reason: "compare_via_scores needs a noisy_absolute judge".into(),
        });
    }
    if !(judge.sigma_abs.is_finite() && judge.sigma_abs >= 0.0) {
        return Err(JudgingError::InvalidSigmaAbs(judge.sigma_abs));
    }
    check_quality(policy)?;
    check_quality(opponent)?;

    let (score_policy, score_opponent) = if judge.sigma_abs == 0.0 {
        (policy.quality, opponent.quality)
    } else {
        let noise = Normal::new(0.0, judge.sigma_abs).expect("validated sigma");
        (
            policy.quality + noise.sample(rng),
            opponent.quality + noise.sample(rng),
        )
    };
    let winner = if score_policy > score_opponent {
        Winner::Policy
    } else if score_policy < score_opponent {
        Winner::Opponent
    } else {
        Winner::Tie
    };
    Ok(Verdict::for_winner(winner))
}

/// Revokes a policy win when the policy response exceeds the opponent's
/// word count by strictly more than `threshold`.
pub fn apply_length_guard(
    verdict: Verdict,
    policy_words: u32,
    opponent_words: u32,
    threshold: u32,
) -> Verdict {
    let margin = i64::from(policy_words) - i64::from(opponent_words);
    if margin > i64::from(threshold) {
        Verdict {
            winner: Winner::Opponent,
            reward: 0.0,
        }
    } else {
        verdict
    }
}

/// Judges one pair with a simulated judge and assembles the match record.
/// The length guard always runs after the verdict.
#[allow(clippy::too_many_arguments)]
pub fn judge_pair<R: Rng + ?Sized>(
    iteration: u32,
    prompt_id: &str,
    opponent_id: &str,
    output_index: u32,
    policy: &ResponseSample,
    opponent: &ResponseSample,
    judge: &JudgeModel,
    length_threshold: u32,
    rng: &mut R,
) -> Result<MatchRecord, JudgingError> {
    let verdict = match judge.kind {
        JudgeKind::ThurstoneComparison => compare_thurstone(policy, opponent, judge, rng)?,
        JudgeKind::NoisyAbsolute => compare_via_scores(policy, opponent, judge, rng)?,
        JudgeKind::Remote => {
            return Err(JudgingError::InvalidJudge {
                kind: JudgeKind::Remote,
                reason: "remote pairs are judged through the gateway client".into(),
            })
        }
    };
    let verdict = apply_length_guard(
        verdict,
        policy.word_count,
        opponent.word_count,
        length_threshold,
    );
    Ok(MatchRecord {
        iteration,
        prompt_id: prompt_id.to_owned(),
        opponent_id: opponent_id.to_owned(),
        output_index,
        winner: verdict.winner,
        reward: verdict.reward,
        policy_words: policy.word_count,
        opponent_words: opponent.word_count,
    })
}
