//! End-to-end training loop.
//!
//! Each iteration, in order: draw a batch of prompts with replacement,
//! pick one opponent per prompt from the rating-distance softmax, draw a
//! group of policy outputs per prompt from the old policy snapshot, judge
//! every output against the cached opponent response, normalize rewards
//! into advantages within each group, take one policy step over the whole
//! batch, then apply one batched Elo update using expected scores from the
//! iteration-start ratings.
//!
//! Runs with identical config and cache are bit-identical in all four
//! logs. The match log alone is sufficient to replay the Elo trajectory.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cache::{CacheError, ResponseCache};
use crate::config::{ConfigError, JudgeKindSpec, JudgeSpec, RunConfig};
use crate::gateway::{CompareRequest, GatewayConfig, GatewayError, JudgeClient};
use crate::judging::{
    apply_length_guard, judge_pair, JudgingError, MatchRecord, ResponseSample, Verdict,
};
use crate::matchmaking::{sample_opponent, selection_distribution, MatchmakingError};
use crate::policy::{normalize_advantages, PolicyError, SurrogatePolicy};
use crate::rating::{expected_score, MatchOutcome, RatingError, RatingTable};
use crate::seed::{derive_seed, derive_seed_keyed, rng_from};

/// Reserved id of the learning agent in the rating table.
pub const POLICY_AGENT_ID: &str = "policy";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Matchmaking(#[from] MatchmakingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Judging(#[from] JudgingError),
    #[error("judge unavailable for prompt `{prompt_id}`: {source}")]
    JudgeUnavailable {
        prompt_id: String,
        source: GatewayError,
    },
    #[error("match log replay: {0}")]
    Replay(String),
}

/// The four append-only run logs, kept as in-memory text. On a judge
/// failure the match log retains every verdict recorded before the abort.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RunLogs {
    pub rating_csv: String,
    pub selection_csv: String,
    pub training_csv: String,
    pub matches_ndjson: String,
}

impl RunLogs {
    fn start(&mut self) {
        self.rating_csv.push_str("iteration,agent_id,rating\n");
        self.selection_csv
            .push_str("iteration,opponent_id,selection_count,probability\n");
        self.training_csv
            .push_str("iteration,skill,objective,mean_reward,kl_term\n");
    }

    fn rating_rows(&mut self, iteration: u32, table: &RatingTable) {
        for (id, rating) in table.agents() {
            writeln!(self.rating_csv, "{iteration},{id},{rating:.6}").expect("string write");
        }
    }
}

/// Per-iteration digest of the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: u32,
    pub policy_elo: f64,
    pub policy_skill: f64,
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
    pub selection_counts: BTreeMap<String, u32>,
    pub selection_probabilities: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summaries: Vec<IterationSummary>,
    pub table: RatingTable,
    pub policy: SurrogatePolicy,
}

/// Rating table seeded from the config: the policy plus every opponent.
pub fn initial_rating_table(config: &RunConfig) -> Result<RatingTable, RunError> {
    let mut table = RatingTable::new(config.k_factor)?;
    table.insert(POLICY_AGENT_ID, config.policy.init_elo)?;
    for opp in &config.opponents {
        table.insert(&opp.id, opp.init_elo)?;
    }
    Ok(table)
}

/// Text stand-in for samples without one, so numeric simulations can still
/// travel through a remote judge.
fn sample_text(sample: &ResponseSample) -> String {
    sample
        .text
        .clone()
        .unwrap_or_else(|| format!("quality {:.6}, {} words", sample.quality, sample.word_count))
}

fn gateway_config(spec: &JudgeSpec) -> GatewayConfig {
    let mut gateway = GatewayConfig::default();
    if let Some(url) = &spec.base_url {
        gateway.base_url = url.clone();
    }
    if let Some(timeout) = spec.timeout_ms {
        gateway.timeout_ms = timeout;
    }
    if let Some(retries) = spec.max_retries {
        gateway.max_retries = retries;
    }
    if let Some(in_flight) = spec.max_in_flight {
        gateway.max_in_flight = in_flight;
    }
    gateway
}

struct PendingPair {
    prompt_id: String,
    opponent_id: String,
    output_index: u32,
    policy_sample: ResponseSample,
    opponent_sample: ResponseSample,
}

/// Runs the full loop. `logs` is cleared first and filled as the run
/// progresses, so on an abort the caller still holds everything recorded
/// up to the failure.
pub fn run(
    config: &RunConfig,
    cache: &ResponseCache,
    logs: &mut RunLogs,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    cache.verify_complete()?;
    if let Some(first_prompt) = cache.prompts().first() {
        for opp in &config.opponents {
            cache.lookup(first_prompt, &opp.id)?;
        }
    }

    *logs = RunLogs::default();
    logs.start();

    let mut table = initial_rating_table(config)?;
    let mut policy = SurrogatePolicy::new(
        config.policy.init_skill,
        config.policy.spread,
        config.clip_epsilon,
        config.kl_beta,
        config.learning_rate,
    )?;
    let opponent_ids = config.opponent_ids();
    let judge_model = match config.judge.kind {
        JudgeKindSpec::Remote => None,
        _ => Some(config.judge.to_model()?),
    };
    let judge_client = match config.judge.kind {
        JudgeKindSpec::Remote => Some(
            JudgeClient::new(gateway_config(&config.judge))
                .map_err(|source| RunError::JudgeUnavailable {
                    prompt_id: String::new(),
                    source,
                })?,
        ),
        _ => None,
    };

    let mut prompt_rng = rng_from(derive_seed(config.seed, "prompt", &[]));
    let mut select_rng = rng_from(derive_seed(config.seed, "select", &[]));
    let mut policy_rng = rng_from(derive_seed(config.seed, "policy", &[]));
    let mut next_request_id: u64 = 1;

    let batch = config.batch_size as usize;
    let group = config.group_size as usize;
    let mut summaries = Vec::with_capacity(config.iterations as usize);

    logs.rating_rows(0, &table);

    for iteration in 1..=config.iterations {
        // Expected scores are fixed at the iteration-start snapshot; the
        // single Elo update lands after all matches are judged.
        let policy_rating_start = table.rating(POLICY_AGENT_ID)?;
        let mut expected_by_opponent = BTreeMap::new();
        for id in &opponent_ids {
            expected_by_opponent
                .insert(id.clone(), expected_score(policy_rating_start, table.rating(id)?)?);
        }

        let distribution =
            selection_distribution(&table, POLICY_AGENT_ID, &opponent_ids, config.temperature)?;
        let mut selection_counts: BTreeMap<String, u32> =
            opponent_ids.iter().map(|id| (id.clone(), 0)).collect();

        let mut pending = Vec::with_capacity(batch * group);
        for _ in 0..batch {
            let prompt_index = prompt_rng.random_range(0..cache.prompts().len());
            let prompt_id = cache.prompts()[prompt_index].clone();
            let opponent_id = sample_opponent(&distribution, &mut select_rng)?.to_string();
            *selection_counts.get_mut(&opponent_id).expect("known id") += 1;
            let opponent_sample = cache.lookup(&prompt_id, &opponent_id)?.clone();
            let outputs =
                policy.sample_outputs(config.group_size, &config.policy.words, &mut policy_rng);
            for (j, policy_sample) in outputs.into_iter().enumerate() {
                pending.push(PendingPair {
                    prompt_id: prompt_id.clone(),
                    opponent_id: opponent_id.clone(),
                    output_index: j as u32,
                    policy_sample,
                    opponent_sample: opponent_sample.clone(),
                });
            }
        }

        let mut records = Vec::with_capacity(pending.len());
        if let Some(model) = &judge_model {
            for (pair_index, pair) in pending.iter().enumerate() {
                // Judge draws come from per-pair seed streams so verdicts
                // are independent of judging order.
                let slot = (pair_index / group) as u64;
                let judge_seed = derive_seed_keyed(
                    config.seed,
                    "judge",
                    &[&pair.prompt_id],
                    &[u64::from(iteration), slot, u64::from(pair.output_index)],
                );
                let record = judge_pair(
                    iteration,
                    &pair.prompt_id,
                    &pair.opponent_id,
                    pair.output_index,
                    &pair.policy_sample,
                    &pair.opponent_sample,
                    model,
                    config.length_guard,
                    &mut rng_from(judge_seed),
                )?;
                writeln!(
                    logs.matches_ndjson,
                    "{}",
                    serde_json::to_string(&record).expect("record serializes")
                )
                .expect("string write");
                records.push(record);
            }
        } else {
            let client = judge_client.as_ref().expect("remote judge client");
            let requests: Vec<CompareRequest> = pending
                .iter()
                .enumerate()
                .map(|(i, pair)| CompareRequest {
                    request_id: next_request_id + i as u64,
                    prompt: pair.prompt_id.clone(),
                    response_a: sample_text(&pair.policy_sample),
                    response_b: sample_text(&pair.opponent_sample),
                })
                .collect();
            next_request_id += requests.len() as u64;
            let results = client.compare_batch(&requests);
            for (pair, result) in pending.iter().zip(results) {
                match result {
                    Ok(winner) => {
                        let verdict = Verdict::for_winner(winner.as_match_winner());
                        let verdict = apply_length_guard(
                            verdict,
                            pair.policy_sample.word_count,
                            pair.opponent_sample.word_count,
                            config.length_guard,
                        );
                        let record = MatchRecord {
                            iteration,
                            prompt_id: pair.prompt_id.clone(),
                            opponent_id: pair.opponent_id.clone(),
                            output_index: pair.output_index,
                            winner: verdict.winner,
                            reward: verdict.reward,
                            policy_words: pair.policy_sample.word_count,
                            opponent_words: pair.opponent_sample.word_count,
                        };
                        writeln!(
                            logs.matches_ndjson,
                            "{}",
                            serde_json::to_string(&record).expect("record serializes")
                        )
                        .expect("string write");
                        records.push(record);
                    }
                    Err(source) => {
                        // Verdicts recorded so far stay in the log; the run
                        // aborts rather than train on a partial iteration.
                        return Err(RunError::JudgeUnavailable {
                            prompt_id: pair.prompt_id.clone(),
                            source,
                        });
                    }
                }
            }
        }

        let qualities: Vec<f64> = pending.iter().map(|p| p.policy_sample.quality).collect();
        let mut advantages = vec![0.0; records.len()];
        for slot in 0..batch {
            let start = slot * group;
            let rewards: Vec<f64> = records[start..start + group]
                .iter()
                .map(|r| r.reward)
                .collect();
            let advs = normalize_advantages(&rewards)?;
            advantages[start..start + group].copy_from_slice(&advs);
        }

        // Equal-size groups make one step over the flattened batch equal
        // to the mean of per-group objectives, with KL counted once.
        let report = policy.grpo_step(&qualities, &advantages)?;

        let outcomes: Vec<MatchOutcome> = records
            .iter()
            .map(|record| MatchOutcome {
                opponent_id: record.opponent_id.clone(),
                score: record.reward,
                expected: expected_by_opponent[&record.opponent_id],
            })
            .collect();
        let policy_elo = table.update_batch(POLICY_AGENT_ID, &outcomes)?;

        let mean_reward =
            records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64;
        let mean_abs_advantage =
            advantages.iter().map(|a| a.abs()).sum::<f64>() / advantages.len() as f64;

        logs.rating_rows(iteration, &table);
        for (id, probability) in &distribution {
            writeln!(
                logs.selection_csv,
                "{iteration},{id},{count},{probability:.6}",
                count = selection_counts[id]
            )
            .expect("string write");
        }
        writeln!(
            logs.training_csv,
            "{iteration},{skill:.6},{objective:.6},{mean_reward:.6},{kl:.6}",
            skill = report.skill_after,
            objective = report.objective,
            kl = report.kl_term
        )
        .expect("string write");

        summaries.push(IterationSummary {
            iteration,
            policy_elo,
            policy_skill: policy.skill(),
            mean_reward,
            mean_abs_advantage,
            selection_counts,
            selection_probabilities: distribution.iter().cloned().collect(),
        });
    }

    Ok(RunOutcome {
        summaries,
        table,
        policy,
    })
}

#[derive(Debug)]
pub struct ReplayResult {
    /// Policy rating after each replayed iteration.
    pub trajectory: Vec<(u32, f64)>,
    pub table: RatingTable,
}

/// Recomputes the Elo trajectory from a match log alone. Expected scores
/// are rebuilt from the replayed table state at each iteration start, so a
/// faithful log reproduces the live trajectory exactly.
pub fn replay(matches_ndjson: &str, initial_table: RatingTable) -> Result<ReplayResult, RunError> {
    let mut table = initial_table;
    let mut trajectory = Vec::new();
    let mut pending: Vec<MatchRecord> = Vec::new();
    let mut current: Option<u32> = None;

    let flush =
        |iteration: u32, batch: &[MatchRecord], table: &mut RatingTable| -> Result<f64, RunError> {
            let policy_rating = table.rating(POLICY_AGENT_ID)?;
            let mut outcomes = Vec::with_capacity(batch.len());
            for record in batch {
                if record.iteration != iteration {
                    return Err(RunError::Replay(format!(
                        "iteration {} mixed into batch {}",
                        record.iteration, iteration
                    )));
                }
                let expected = expected_score(policy_rating, table.rating(&record.opponent_id)?)?;
                outcomes.push(MatchOutcome {
                    opponent_id: record.opponent_id.clone(),
                    score: record.reward,
                    expected,
                });
            }
            Ok(table.update_batch(POLICY_AGENT_ID, &outcomes)?)
        };

    for (index, line) in matches_ndjson.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: MatchRecord = serde_json::from_str(line)
            .map_err(|e| RunError::Replay(format!("line {}: {e}", index + 1)))?;
        match current {
            None => current = Some(record.iteration),
            Some(open) if record.iteration == open => {}
            Some(open) if record.iteration > open => {
                let rating = flush(open, &pending, &mut table)?;
                trajectory.push((open, rating));
                pending.clear();
                current = Some(record.iteration);
            }
            Some(open) => {
                return Err(RunError::Replay(format!(
                    "line {}: iteration {} arrives after iteration {}",
                    index + 1,
                    record.iteration,
                    open
                )));
            }
        }
        pending.push(record);
    }
    if let Some(open) = current {
        let rating = flush(open, &pending, &mut table)?;
        trajectory.push((open, rating));
    }

    Ok(ReplayResult { trajectory, table })
}

#[derive(Debug)]
pub struct SweepEntry {
    pub temperature: f64,
    pub final_elo: f64,
    /// Mean policy Elo over the last up-to-100 iterations; less seed-noisy
    /// than the single final value.
    pub windowed_final_elo: f64,
    pub summaries: Vec<IterationSummary>,
    pub logs: RunLogs,
}

/// Runs the same config and cache once per temperature.
pub fn temperature_sweep(
    base: &RunConfig,
    temperatures: &[f64],
    cache: &ResponseCache,
) -> Result<Vec<SweepEntry>, RunError> {
    let mut entries = Vec::with_capacity(temperatures.len());
    for &temperature in temperatures {
        let mut config = base.clone();
        config.temperature = temperature;
        let mut logs = RunLogs::default();
        let outcome = run(&config, cache, &mut logs)?;
        let final_elo = outcome.table.rating(POLICY_AGENT_ID)?;
        let window = outcome.summaries.len().min(100);
        let windowed_final_elo = if window == 0 {
            config.policy.init_elo
        } else {
            outcome.summaries[outcome.summaries.len() - window..]
                .iter()
                .map(|s| s.policy_elo)
                .sum::<f64>()
                / window as f64
        };
        entries.push(SweepEntry {
            temperature,
            final_elo,
            windowed_final_elo,
            summaries: outcome.summaries,
            logs,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::synthetic_prompt_ids;
    use crate::config::{AgentSpec, PolicySpec};
    use crate::judging::LengthDistribution;

    fn anchor_config() -> RunConfig {
        RunConfig {
            seed: 11,
            iterations: 1,
            batch_size: 1,
            group_size: 4,
            temperature: 200.0,
            k_factor: 32.0,
            clip_epsilon: 0.2,
            kl_beta: 0.001,
            learning_rate: 0.05,
            length_guard: 300,
            policy: PolicySpec {
                init_skill: 50.0,
                spread: 0.05,
                init_elo: 1350.0,
                words: LengthDistribution::Fixed(100),
            },
            opponents: vec![AgentSpec {
                id: "anchor".to_string(),
                skill: 0.0,
                spread: 0.0,
                init_elo: 1350.0,
                words: LengthDistribution::Fixed(100),
            }],
            judge: JudgeSpec {
                kind: JudgeKindSpec::Thurstone,
                sigma_comp: Some(1.0),
                sigma_abs: None,
                base_url: None,
                timeout_ms: None,
                max_retries: None,
                max_in_flight: None,
            },
        }
    }

    fn cache_for(config: &RunConfig, prompts: usize) -> ResponseCache {
        ResponseCache::build(
            config.seed,
            &synthetic_prompt_ids(prompts),
            &config.opponents,
        )
        .unwrap()
    }

    #[test]
    fn certain_wins_move_elo_but_not_skill() {
        // One iteration, one prompt, four outputs, all judged wins against
        // an equal-rated anchor: reward 1 per match, zero-variance group,
        // so the skill is untouched while Elo gains 32 * 4 * (1 - 0.5).
        let config = anchor_config();
        let cache = cache_for(&config, 1);
        let mut logs = RunLogs::default();
        let outcome = run(&config, &cache, &mut logs).unwrap();

        let summary = &outcome.summaries[0];
        assert_eq!(summary.mean_reward, 1.0);
        assert_eq!(summary.mean_abs_advantage, 0.0);
        assert_eq!(outcome.policy.skill(), 50.0);
        assert_eq!(outcome.table.rating(POLICY_AGENT_ID).unwrap(), 1414.0);
        assert_eq!(summary.policy_elo, 1414.0);
        assert_eq!(summary.selection_counts["anchor"], 1);
    }

    #[test]
    fn logs_carry_headers_and_full_blocks() {
        let config = anchor_config();
        let cache = cache_for(&config, 1);
        let mut logs = RunLogs::default();
        run(&config, &cache, &mut logs).unwrap();

        let rating_lines: Vec<&str> = logs.rating_csv.lines().collect();
        assert_eq!(rating_lines[0], "iteration,agent_id,rating");
        // Iteration 0 block plus one block per iteration, two agents each.
        assert_eq!(rating_lines.len(), 1 + 2 + 2);
        assert_eq!(rating_lines[1], "0,anchor,1350.000000");
        assert_eq!(rating_lines[2], "0,policy,1350.000000");
        assert_eq!(rating_lines[4], "1,policy,1414.000000");

        let selection_lines: Vec<&str> = logs.selection_csv.lines().collect();
        assert_eq!(
            selection_lines[0],
            "iteration,opponent_id,selection_count,probability"
        );
        assert_eq!(selection_lines[1], "1,anchor,1,1.000000");

        assert_eq!(logs.matches_ndjson.lines().count(), 4);
        let first: MatchRecord =
            serde_json::from_str(logs.matches_ndjson.lines().next().unwrap()).unwrap();
        assert_eq!(first.iteration, 1);
        assert_eq!(first.reward, 1.0);
    }

    #[test]
    fn selection_counts_sum_to_batch_size() {
        let mut config = anchor_config();
        config.iterations = 3;
        config.batch_size = 7;
        config.opponents.push(AgentSpec {
            id: "strong".to_string(),
            skill: 5.0,
            spread: 0.5,
            init_elo: 1700.0,
            words: LengthDistribution::Fixed(100),
        });
        let cache = cache_for(&config, 4);
        let mut logs = RunLogs::default();
        let outcome = run(&config, &cache, &mut logs).unwrap();
        for summary in &outcome.summaries {
            let total: u32 = summary.selection_counts.values().sum();
            assert_eq!(total, config.batch_size);
            assert_eq!(logs.matches_ndjson.lines().count() as u32,
                config.iterations * config.batch_size * config.group_size);
        }
    }

    #[test]
    fn near_infinite_temperature_selects_uniformly() {
        let mut config = anchor_config();
        config.batch_size = 300;
        config.group_size = 2;
        config.temperature = 1e9;
        config.opponents = vec![
            AgentSpec {
                id: "low".into(),
                skill: 0.0,
                spread: 0.0,
                init_elo: 1400.0,
                words: LengthDistribution::Fixed(100),
            },
            AgentSpec {
                id: "mid".into(),
                skill: 0.0,
                spread: 0.0,
                init_elo: 1700.0,
                words: LengthDistribution::Fixed(100),
            },
            AgentSpec {
                id: "high".into(),
                skill: 0.0,
                spread: 0.0,
                init_elo: 2000.0,
                words: LengthDistribution::Fixed(100),
            },
        ];
        let cache = cache_for(&config, 8);
        let mut logs = RunLogs::default();
        let outcome = run(&config, &cache, &mut logs).unwrap();
        for count in outcome.summaries[0].selection_counts.values() {
            let diff = (*count as i64 - 100).abs();
            assert!(diff <= 60, "selection count {count} strays from uniform");
        }
    }

    #[test]
    fn identical_config_and_cache_reproduce_logs_exactly() {
        let mut config = anchor_config();
        config.iterations = 5;
        config.batch_size = 3;
        config.policy.spread = 1.0;
        config.policy.init_skill = 0.0;
        config.opponents[0].skill = 0.5;
        config.opponents[0].spread = 1.0;
        let cache = cache_for(&config, 6);

        let mut first = RunLogs::default();
        let mut second = RunLogs::default();
        let one = run(&config, &cache, &mut first).unwrap();
        let two = run(&config, &cache, &mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(one.summaries, two.summaries);
    }

    #[test]
    fn replay_of_empty_log_is_the_initial_table() {
        let config = anchor_config();
        let table = initial_rating_table(&config).unwrap();
        let result = replay("", table).unwrap();
        assert!(result.trajectory.is_empty());
        assert_eq!(result.table.rating(POLICY_AGENT_ID).unwrap(), 1350.0);
    }

    #[test]
    fn replay_of_one_win_at_equal_ratings_adds_sixteen() {
        let mut table = RatingTable::new(32.0).unwrap();
        table.insert(POLICY_AGENT_ID, 1500.0).unwrap();
        table.insert("anchor", 1500.0).unwrap();
        let line = concat!(
            "{\"iteration\":1,\"prompt_id\":\"p\",\"opponent_id\":\"anchor\",",
            "\"output_index\":0,\"winner\":\"policy\",\"reward\":1.0,",
            "\"policy_words\":100,\"opponent_words\":100}\n"
        );
        let result = replay(line, table).unwrap();
        assert_eq!(result.trajectory, vec![(1, 1516.0)]);
    }

    #[test]
    fn replay_matches_a_live_run_exactly() {
        let mut config = anchor_config();
        config.iterations = 8;
        config.batch_size = 2;
        config.policy.spread = 1.0;
        config.policy.init_skill = 0.0;
        config.opponents[0].skill = 0.5;
        config.opponents[0].spread = 1.0;
        let cache = cache_for(&config, 5);
        let mut logs = RunLogs::default();
        let outcome = run(&config, &cache, &mut logs).unwrap();

        let initial = initial_rating_table(&config).unwrap();
        let replayed = replay(&logs.matches_ndjson, initial).unwrap();
        assert_eq!(replayed.trajectory.len(), outcome.summaries.len());
        for (summary, (iteration, rating)) in
            outcome.summaries.iter().zip(&replayed.trajectory)
        {
            assert_eq!(summary.iteration, *iteration);
            assert!((summary.policy_elo - rating).abs() < 1e-9);
        }
    }

    #[test]
    fn replay_rejects_out_of_order_iterations() {
        let mut table = RatingTable::new(32.0).unwrap();
        table.insert(POLICY_AGENT_ID, 1500.0).unwrap();
        table.insert("anchor", 1500.0).unwrap();
        let lines = concat!(
            "{\"iteration\":2,\"prompt_id\":\"p\",\"opponent_id\":\"anchor\",",
            "\"output_index\":0,\"winner\":\"policy\",\"reward\":1.0,",
            "\"policy_words\":100,\"opponent_words\":100}\n",
            "{\"iteration\":1,\"prompt_id\":\"p\",\"opponent_id\":\"anchor\",",
            "\"output_index\":0,\"winner\":\"policy\",\"reward\":1.0,",
            "\"policy_words\":100,\"opponent_words\":100}\n"
        );
        assert!(matches!(
            replay(lines, table),
            Err(RunError::Replay(_))
        ));
    }

    #[test]
    fn invalid_config_is_rejected_before_any_work() {
        let mut config = anchor_config();
        config.group_size = 1;
        let cache = cache_for(&anchor_config(), 1);
        let mut logs = RunLogs::default();
        assert!(matches!(
            run(&config, &cache, &mut logs),
            Err(RunError::Config(_))
        ));
    }

    #[test]
    fn cache_missing_an_opponent_is_rejected() {
        let mut config = anchor_config();
        config.opponents.push(AgentSpec {
            id: "uncached".to_string(),
            skill: 1.0,
            spread: 0.5,
            init_elo: 1500.0,
            words: LengthDistribution::Fixed(100),
        });
        let cache = cache_for(&anchor_config(), 2);
        let mut logs = RunLogs::default();
        assert!(matches!(
            run(&config, &cache, &mut logs),
            Err(RunError::Cache(CacheError::Miss { .. }))
        ));
    }

    #[test]
    fn sweep_runs_share_seed_and_cache() {
        let mut config = anchor_config();
        config.iterations = 4;
        config.batch_size = 2;
        config.policy.spread = 1.0;
        config.policy.init_skill = 0.0;
        config.opponents[0].skill = 0.5;
        config.opponents[0].spread = 1.0;
        let cache = cache_for(&config, 4);
        let entries = temperature_sweep(&config, &[20.0, 200.0], &cache).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].temperature, 20.0);
        assert_eq!(entries[0].summaries.len(), 4);
        // A sweep entry at the base temperature equals a plain run.
        let mut logs = RunLogs::default();
        let plain = run(&config, &cache, &mut logs).unwrap();
        assert_eq!(entries[1].final_elo, plain.table.rating(POLICY_AGENT_ID).unwrap());
        assert_eq!(entries[1].logs, logs);
    }
}
