//! Scalar Gaussian surrogate of a trained generator.
//!
//! The "policy" is a Normal(skill, spread^2) distribution over response
//! quality. Training follows the group-relative scheme: sample a group of
//! outputs from the pre-step snapshot (`skill_old`), turn binary rewards
//! into group-normalized advantages, then take one gradient step on
//!
//! ```text
//! J(skill) = mean_i min(rho_i * A_i, clip(rho_i, 1 - eps, 1 + eps) * A_i)
//!            - beta * KL(skill || skill_ref)
//! ```
//!
//! where rho_i is the density ratio between the current and snapshot
//! policies at output i, and the KL term anchors the policy to its
//! initialization. Because spreads are shared, the KL has the closed form
//! (skill - skill_ref)^2 / (2 * spread^2).
//!
//! The loop takes exactly one step per sampled group, so the ratio is 1 at
//! evaluation time there; the clipping machinery matters (and is tested)
//! for the general snapshot-lag case.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::judging::{LengthDistribution, ResponseSample};

pub const DEFAULT_CLIP_EPSILON: f64 = 0.2;
pub const DEFAULT_KL_BETA: f64 = 0.001;
/// Outputs sampled per prompt. No published counterpart; eight keeps the
/// group statistics stable without bloating the judging budget.
pub const DEFAULT_GROUP_SIZE: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("spread must be positive and finite, got {0}")]
    InvalidSpread(f64),
    #[error("{name} must be finite, got {value}")]
    NonFiniteParameter { name: &'static str, value: f64 },
    #[error("clip epsilon must lie in (0, 1), got {0}")]
    InvalidClipEpsilon(f64),
    #[error("advantage group needs at least 2 rewards, got {0}")]
    DegenerateGroup(usize),
    #[error("outputs and advantages differ in length: {outputs} vs {advantages}")]
    LengthMismatch { outputs: usize, advantages: usize },
    #[error("rewards and outputs must be finite")]
    NonFiniteInput,
}

fn check_finite(name: &'static str, value: f64) -> Result<(), PolicyError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::NonFiniteParameter { name, value })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogatePolicy {
    skill: f64,
    spread: f64,
    skill_old: f64,
    skill_ref: f64,
    clip_epsilon: f64,
    kl_beta: f64,
    learning_rate: f64,
}

/// What one training step did; feeds the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub objective: f64,
    pub gradient: f64,
    pub kl_term: f64,
    pub skill_after: f64,
}

impl SurrogatePolicy {
    pub fn new(
        init_skill: f64,
        spread: f64,
        clip_epsilon: f64,
        kl_beta: f64,
        learning_rate: f64,
    ) -> Result<Self, PolicyError> {
        check_finite("init_skill", init_skill)?;
        check_finite("kl_beta", kl_beta)?;
        check_finite("learning_rate", learning_rate)?;
        if !(spread.is_finite() && spread > 0.0) {
            return Err(PolicyError::InvalidSpread(spread));
        }
        if !(clip_epsilon > 0.0 && clip_epsilon < 1.0) {
            return Err(PolicyError::InvalidClipEpsilon(clip_epsilon));
        }
        Ok(Self {
            skill: init_skill,
            spread,
            skill_old: init_skill,
            skill_ref: init_skill,
            clip_epsilon,
            kl_beta,
            learning_rate,
        })
    }

    pub fn skill(&self) -> f64 {
        self.skill
    }

    pub fn skill_old(&self) -> f64 {
        self.skill_old
    }

    pub fn skill_ref(&self) -> f64 {
        self.skill_ref
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// Restores a policy from explicit state, as when resuming from a
    /// checkpoint or constructing snapshot-lagged configurations in tests.
    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        skill: f64,
        spread: f64,
        skill_old: f64,
        skill_ref: f64,
        clip_epsilon: f64,
        kl_beta: f64,
        learning_rate: f64,
    ) -> Result<Self, PolicyError> {
        let mut policy = Self::new(skill, spread, clip_epsilon, kl_beta, learning_rate)?;
        check_finite("skill_old", skill_old)?;
        check_finite("skill_ref", skill_ref)?;
        policy.skill_old = skill_old;
        policy.skill_ref = skill_ref;
        Ok(policy)
    }

    /// Draws `count` outputs from the snapshot policy. Qualities are iid
    /// Normal(skill_old, spread^2); word counts come from `lengths`.
    pub fn sample_outputs<R: Rng + ?Sized>(
        &self,
        count: u32,
        lengths: &LengthDistribution,
        rng: &mut R,
    ) -> Vec<ResponseSample> {
        let normal = Normal::new(self.skill_old, self.spread).expect("validated spread");
        (0..count)
            .map(|_| {
                let quality = normal.sample(rng);
                let words = lengths.sample(rng);
                ResponseSample::new(quality, words)
            })
            .collect()
    }

    /// KL divergence of the current policy from its reference; equal-spread
    /// Gaussians reduce it to a squared skill gap.
    pub fn kl_to_ref(&self) -> f64 {
        let d = self.skill - self.skill_ref;
        d * d / (2.0 * self.spread * self.spread)
    }

    /// Density ratio rho(o) between the current and snapshot policies.
    fn ratio(&self, output: f64) -> f64 {
        let s2 = self.spread * self.spread;
        let old = output - self.skill_old;
        let new = output - self.skill;
        ((old * old - new * new) / (2.0 * s2)).exp()
    }

    fn validate_group(&self, outputs: &[f64], advantages: &[f64]) -> Result<(), PolicyError> {
        if outputs.len() != advantages.len() {
            return Err(PolicyError::LengthMismatch {
                outputs: outputs.len(),
                advantages: advantages.len(),
            });
        }
        if outputs.is_empty() {
            return Err(PolicyError::DegenerateGroup(0));
        }
        if outputs
            .iter()
            .chain(advantages.iter())
            .any(|v| !v.is_finite())
        {
            return Err(PolicyError::NonFiniteInput);
        }
        Ok(())
    }

    /// Clipped-ratio objective with the KL penalty, averaged over the group.
    pub fn grpo_objective(&self, outputs: &[f64], advantages: &[f64]) -> Result<f64, PolicyError> {
        self.validate_group(outputs, advantages)?;
        let lo = 1.0 - self.clip_epsilon;
        let hi = 1.0 + self.clip_epsilon;
        let mut sum = 0.0;
        for (&o, &a) in outputs.iter().zip(advantages) {
            let rho = self.ratio(o);
            sum += (rho * a).min(rho.clamp(lo, hi) * a);
        }
        Ok(sum / outputs.len() as f64 - self.kl_beta * self.kl_to_ref())
    }

    /// Analytic d(objective)/d(skill).
    ///
    /// Per output, d rho/d skill = rho * (o - skill) / spread^2. The min of
    /// the two branches passes gradient through the unclipped term except
    /// when the clipped branch is strictly smaller AND its clamp binds,
    /// which happens exactly for (A > 0, rho > 1 + eps) and
    /// (A < 0, rho < 1 - eps); there the term is constant in skill.
    pub fn grpo_gradient(&self, outputs: &[f64], advantages: &[f64]) -> Result<f64, PolicyError> {
        self.validate_group(outputs, advantages)?;
        let lo = 1.0 - self.clip_epsilon;
        let hi = 1.0 + self.clip_epsilon;
        let s2 = self.spread * self.spread;
        let mut sum = 0.0;
        for (&o, &a) in outputs.iter().zip(advantages) {
            let rho = self.ratio(o);
            let clipped_out = (a > 0.0 && rho > hi) || (a < 0.0 && rho < lo);
            if !clipped_out {
                sum += a * rho * (o - self.skill) / s2;
            }
        }
        let kl_grad = self.kl_beta * (self.skill - self.skill_ref) / s2;
        Ok(sum / outputs.len() as f64 - kl_grad)
    }

    /// One ascent step on the objective. The snapshot is refreshed to the
    /// post-step skill only after the step completes, matching a loop that
    /// samples, steps once, then re-snapshots.
    pub fn grpo_step(
        &mut self,
        outputs: &[f64],
        advantages: &[f64],
    ) -> Result<StepReport, PolicyError> {
        let objective = self.grpo_objective(outputs, advantages)?;
        let gradient = self.grpo_gradient(outputs, advantages)?;
        let updated = self.skill + self.learning_rate * gradient;
        check_finite("skill", updated)?;
        self.skill = updated;
        self.skill_old = updated;
        Ok(StepReport {
            objective,
            gradient,
            kl_term: self.kl_beta * self.kl_to_ref(),
            skill_after: updated,
        })
    }
}

/// Group-normalized advantages: (r - mean) / population_std.
///
/// A zero-variance group (every reward equal) carries no ranking signal and
/// maps to all-zero advantages, which freezes the gradient for that group.
pub fn normalize_advantages(rewards: &[f64]) -> Result<Vec<f64>, PolicyError> {
    if rewards.len() < 2 {
        return Err(PolicyError::DegenerateGroup(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(PolicyError::NonFiniteInput);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    let std = var.sqrt();
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}
