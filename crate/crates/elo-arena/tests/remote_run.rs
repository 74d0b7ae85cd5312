//! Full training iterations driven through the HTTP judge path: verdicts,
//! rewards, and logs must be wired exactly as in the simulated path, and a
//! dead judge must abort the run without corrupting what was already logged.

use elo_arena::cache::{synthetic_prompt_ids, ResponseCache};
use elo_arena::config::{AgentSpec, JudgeKindSpec, JudgeSpec, PolicySpec, RunConfig};
use elo_arena::gateway::stub::{CompareScript, StubJudge, StubOptions};
use elo_arena::judging::LengthDistribution;
use elo_arena::orchestrator::{run, RunError, RunLogs};
use elo_arena::seed::derive_seed;

fn remote_config(stub_url: String) -> RunConfig {
    RunConfig {
        seed: 21,
        iterations: 3,
        batch_size: 2,
        group_size: 2,
        temperature: 150.0,
        k_factor: 24.0,
        clip_epsilon: 0.2,
        kl_beta: 0.001,
        learning_rate: 0.02,
        length_guard: 300,
        policy: PolicySpec {
            init_skill: 0.0,
            spread: 1.0,
            init_elo: 1350.0,
            words: LengthDistribution::Fixed(100),
        },
        opponents: vec![
            AgentSpec {
                id: "rival-a".into(),
                skill: 0.4,
                spread: 1.0,
                init_elo: 1400.0,
                words: LengthDistribution::Fixed(100),
            },
            AgentSpec {
                id: "rival-b".into(),
                skill: 1.2,
                spread: 0.8,
                init_elo: 1600.0,
                words: LengthDistribution::Fixed(100),
            },
        ],
        judge: JudgeSpec {
            kind: JudgeKindSpec::Remote,
            sigma_comp: None,
            sigma_abs: None,
            base_url: Some(stub_url),
            timeout_ms: Some(2_000),
            max_retries: Some(1),
            max_in_flight: Some(4),
        },
    }
}

#[test]
fn remote_verdicts_drive_rewards_and_logs() {
    let stub = StubJudge::start(StubOptions {
        compare: CompareScript::Fixed("a".to_string()),
        ..StubOptions::default()
    })
    .unwrap();
    let config = remote_config(stub.url());
    let cache = ResponseCache::build(
        derive_seed(config.seed, "cache", &[]),
        &synthetic_prompt_ids(8),
        &config.opponents,
    )
    .unwrap();

    let mut logs = RunLogs::default();
    let outcome = run(&config, &cache, &mut logs).unwrap();

    // The policy always sits on side a, so a fixed "a" means it wins every
    // match and every reward is 1.
    assert_eq!(outcome.summaries.len(), 3);
    for summary in &outcome.summaries {
        assert_eq!(summary.mean_reward, 1.0, "iteration {}", summary.iteration);
    }
    let match_lines: Vec<&str> = logs.matches_ndjson.lines().collect();
    assert_eq!(match_lines.len(), 12, "3 iterations x 2 prompts x 2 outputs");
    for line in &match_lines {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["winner"].as_str(), Some("policy"));
        assert_eq!(record["reward"].as_f64(), Some(1.0));
    }
    assert_eq!(stub.total_requests(), 12);
    // One verdict per request id, none lost or double-served.
    for (id, count) in stub.served_ids() {
        assert_eq!(count, 1, "request id {id}");
    }
}

#[test]
fn ties_from_the_remote_judge_count_as_zero_reward() {
    let stub = StubJudge::start(StubOptions {
        compare: CompareScript::Fixed("tie".to_string()),
        ..StubOptions::default()
    })
    .unwrap();
    let config = remote_config(stub.url());
    let cache = ResponseCache::build(
        derive_seed(config.seed, "cache", &[]),
        &synthetic_prompt_ids(8),
        &config.opponents,
    )
    .unwrap();

    let mut logs = RunLogs::default();
    let outcome = run(&config, &cache, &mut logs).unwrap();
    for summary in &outcome.summaries {
        assert_eq!(summary.mean_reward, 0.0);
    }
    for line in logs.matches_ndjson.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["winner"].as_str(), Some("tie"));
        assert_eq!(record["reward"].as_f64(), Some(0.0));
    }
}

#[test]
fn dead_judge_aborts_the_run_but_keeps_prior_logs() {
    let stub = StubJudge::start(StubOptions {
        fail_first: 10_000,
        ..StubOptions::default()
    })
    .unwrap();
    let mut config = remote_config(stub.url());
    config.judge.max_retries = Some(0);

    let cache = ResponseCache::build(
        derive_seed(config.seed, "cache", &[]),
        &synthetic_prompt_ids(8),
        &config.opponents,
    )
    .unwrap();
    let mut logs = RunLogs::default();
    let err = run(&config, &cache, &mut logs).unwrap_err();
    assert!(
        matches!(err, RunError::JudgeUnavailable { .. }),
        "expected a judge-unavailable abort, got {err}"
    );
    // The starting rating block was already written and must survive.
    assert!(logs.rating_csv.contains("0,policy,1350.000000"));
    assert!(stub.failures_injected() > 0);
}
