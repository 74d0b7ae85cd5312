//! Write-once response cache for frozen opponents.
//!
//! Opponent responses never depend on the learning run, so they are drawn
//! once per (prompt, opponent) pair from a keyed seed stream and frozen.
//! Every later lookup of the same pair sees the same response, any subset
//! of opponents rebuilds to identical samples, and a cache saved to disk
//! reloads and re-saves byte for byte.
//!
//! On-disk layout is newline-delimited JSON: one header object naming the
//! version, the build seed, and the full prompt and opponent rosters,
//! followed by exactly one record per (prompt, opponent) pair in roster
//! order (prompts outer, opponents inner).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AgentSpec;
use crate::judging::ResponseSample;
use crate::seed::{derive_seed_keyed, rng_from};

pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache header is malformed: {0}")]
    MalformedHeader(String),
    #[error("cache record on line {line} is malformed: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("cache version {found} is not supported (expected {CACHE_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("duplicate prompt id `{0}`")]
    DuplicatePromptId(String),
    #[error("duplicate opponent id `{0}`")]
    DuplicateOpponentId(String),
    #[error("duplicate cache entry for prompt `{prompt_id}`, opponent `{opponent_id}`")]
    DuplicateEntry {
        prompt_id: String,
        opponent_id: String,
    },
    #[error("cache record names unknown prompt `{prompt_id}` or opponent `{opponent_id}`")]
    UnknownId {
        prompt_id: String,
        opponent_id: String,
    },
    #[error("cache is incomplete: {missing} of {expected} responses are absent")]
    Incomplete { missing: usize, expected: usize },
    #[error("no cached response for prompt `{prompt_id}`, opponent `{opponent_id}`")]
    Miss {
        prompt_id: String,
        opponent_id: String,
    },
    #[error("cache needs at least one prompt")]
    NoPrompts,
    #[error("cache needs at least one opponent")]
    NoOpponents,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    version: u32,
    seed: u64,
    prompts: Vec<String>,
    opponents: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    prompt_id: String,
    opponent_id: String,
    #[serde(flatten)]
    sample: ResponseSample,
}

/// Complete table of frozen opponent responses, one per (prompt, opponent).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCache {
    seed: u64,
    prompts: Vec<String>,
    opponents: Vec<String>,
    entries: BTreeMap<(String, String), ResponseSample>,
}

impl ResponseCache {
    /// Draws one response per (prompt, opponent) pair. Each pair gets its
    /// own seed stream keyed by the pair's ids, so samples do not change
    /// when prompts or opponents are added, removed, or reordered.
    pub fn build(
        seed: u64,
        prompts: &[String],
        opponents: &[AgentSpec],
    ) -> Result<Self, CacheError> {
        if prompts.is_empty() {
            return Err(CacheError::NoPrompts);
        }
        if opponents.is_empty() {
            return Err(CacheError::NoOpponents);
        }
        let mut seen = std::collections::BTreeSet::new();
        for prompt in prompts {
            if !seen.insert(prompt.as_str()) {
                return Err(CacheError::DuplicatePromptId(prompt.clone()));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for opp in opponents {
            if !seen.insert(opp.id.as_str()) {
                return Err(CacheError::DuplicateOpponentId(opp.id.clone()));
            }
        }

        let mut entries = BTreeMap::new();
        for prompt in prompts {
            for opp in opponents {
                let mut rng = rng_from(derive_seed_keyed(seed, "cache", &[prompt, &opp.id], &[]));
                // Draw order is part of the format: quality first, words second.
                let quality = if opp.spread == 0.0 {
                    opp.skill
                } else {
                    Normal::new(opp.skill, opp.spread)
                        .expect("spread validated non-negative")
                        .sample(&mut rng)
                };
                let word_count = opp.words.sample(&mut rng);
                entries.insert(
                    (prompt.clone(), opp.id.clone()),
                    ResponseSample {
                        quality,
                        word_count,
                        text: None,
                    },
                );
            }
        }
        Ok(Self {
            seed,
            prompts: prompts.to_vec(),
            opponents: opponents.iter().map(|o| o.id.clone()).collect(),
            entries,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn opponents(&self) -> &[String] {
        &self.opponents
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A missing pair is a hard error: silently regenerating would break
    /// the write-once guarantee.
    pub fn lookup(&self, prompt_id: &str, opponent_id: &str) -> Result<&ResponseSample, CacheError> {
        self.entries
            .get(&(prompt_id.to_string(), opponent_id.to_string()))
            .ok_or_else(|| CacheError::Miss {
                prompt_id: prompt_id.to_string(),
                opponent_id: opponent_id.to_string(),
            })
    }

    /// Every (prompt, opponent) pair must be present.
    pub fn verify_complete(&self) -> Result<(), CacheError> {
        let expected = self.prompts.len() * self.opponents.len();
        let mut missing = 0usize;
        for prompt in &self.prompts {
            for opp in &self.opponents {
                if !self.entries.contains_key(&(prompt.clone(), opp.clone())) {
                    missing += 1;
                }
            }
        }
        if missing > 0 || self.entries.len() != expected {
            return Err(CacheError::Incomplete {
                missing,
                expected,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        self.verify_complete()?;
        let mut out = Vec::new();
        let header = CacheHeader {
            version: CACHE_VERSION,
            seed: self.seed,
            prompts: self.prompts.clone(),
            opponents: self.opponents.clone(),
        };
        writeln!(
            out,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
        for prompt in &self.prompts {
            for opp in &self.opponents {
                let sample = self
                    .entries
                    .get(&(prompt.clone(), opp.clone()))
                    .expect("completeness verified above");
                let record = CacheRecord {
                    prompt_id: prompt.clone(),
                    opponent_id: opp.clone(),
                    sample: sample.clone(),
                };
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&record).expect("record serializes")
                )?;
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CacheError> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();

        let header_line = match lines.next() {
            Some(line) => line?,
            None => return Err(CacheError::MalformedHeader("file is empty".into())),
        };
        let header: CacheHeader = serde_json::from_str(&header_line)
            .map_err(|e| CacheError::MalformedHeader(e.to_string()))?;
        if header.version != CACHE_VERSION {
            return Err(CacheError::VersionMismatch {
                found: header.version,
            });
        }

        let prompt_set: std::collections::BTreeSet<&str> =
            header.prompts.iter().map(String::as_str).collect();
        let opponent_set: std::collections::BTreeSet<&str> =
            header.opponents.iter().map(String::as_str).collect();

        let mut entries = BTreeMap::new();
        for (index, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let line_number = index + 2;
            let record: CacheRecord =
                serde_json::from_str(&line).map_err(|e| CacheError::MalformedRecord {
                    line: line_number,
                    message: e.to_string(),
                })?;
            if !prompt_set.contains(record.prompt_id.as_str())
                || !opponent_set.contains(record.opponent_id.as_str())
            {
                return Err(CacheError::UnknownId {
                    prompt_id: record.prompt_id,
                    opponent_id: record.opponent_id,
                });
            }
            let key = (record.prompt_id.clone(), record.opponent_id.clone());
            if entries.insert(key, record.sample).is_some() {
                return Err(CacheError::DuplicateEntry {
                    prompt_id: record.prompt_id,
                    opponent_id: record.opponent_id,
                });
            }
        }

        let cache = Self {
            seed: header.seed,
            prompts: header.prompts,
            opponents: header.opponents,
            entries,
        };
        cache.verify_complete()?;
        Ok(cache)
    }
}

/// Generated prompt ids for synthetic corpora: "prompt-0000", "prompt-0001", ...
pub fn synthetic_prompt_ids(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("prompt-{i:04}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judging::LengthDistribution;

    fn spec(id: &str, skill: f64, spread: f64) -> AgentSpec {
        AgentSpec {
            id: id.to_string(),
            skill,
            spread,
            init_elo: 1500.0,
            words: LengthDistribution::Uniform { min: 90, max: 110 },
        }
    }

    fn small_cache() -> ResponseCache {
        let prompts = synthetic_prompt_ids(3);
        let opponents = vec![spec("alpha", 1.0, 0.5), spec("beta", 2.0, 0.5)];
        ResponseCache::build(7, &prompts, &opponents).unwrap()
    }

    #[test]
    fn build_covers_every_pair() {
        let cache = small_cache();
        assert_eq!(cache.len(), 6);
        cache.verify_complete().unwrap();
        for prompt in cache.prompts().to_vec() {
            for opp in cache.opponents().to_vec() {
                let sample = cache.lookup(&prompt, &opp).unwrap();
                assert!(sample.quality.is_finite());
                assert!((90..=110).contains(&sample.word_count));
                assert!(sample.text.is_none());
            }
        }
    }

    #[test]
    fn lookup_miss_is_an_error() {
        let cache = small_cache();
        let err = cache.lookup("prompt-0000", "nobody").unwrap_err();
        assert!(matches!(err, CacheError::Miss { .. }));
        let err = cache.lookup("prompt-9999", "alpha").unwrap_err();
        assert!(matches!(err, CacheError::Miss { .. }));
    }

    #[test]
    fn zero_spread_pins_quality_to_skill() {
        let prompts = synthetic_prompt_ids(2);
        let opponents = vec![spec("fixed", 3.25, 0.0)];
        let cache = ResponseCache::build(7, &prompts, &opponents).unwrap();
        for prompt in &prompts {
            assert_eq!(cache.lookup(prompt, "fixed").unwrap().quality, 3.25);
        }
    }

    #[test]
    fn rebuild_is_identical_and_roster_order_is_irrelevant_per_pair() {
        let prompts = synthetic_prompt_ids(3);
        let a = spec("alpha", 1.0, 0.5);
        let b = spec("beta", 2.0, 0.5);
        let forward = ResponseCache::build(7, &prompts, &[a.clone(), b.clone()]).unwrap();
        let again = ResponseCache::build(7, &prompts, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(forward, again);

        // Seed streams are keyed by ids, so each pair's sample survives
        // roster reordering and subsetting.
        let reversed = ResponseCache::build(7, &prompts, &[b.clone(), a.clone()]).unwrap();
        let solo = ResponseCache::build(7, &prompts, &[b.clone()]).unwrap();
        for prompt in &prompts {
            assert_eq!(
                forward.lookup(prompt, "beta").unwrap(),
                reversed.lookup(prompt, "beta").unwrap()
            );
            assert_eq!(
                forward.lookup(prompt, "beta").unwrap(),
                solo.lookup(prompt, "beta").unwrap()
            );
        }
    }

    #[test]
    fn different_seeds_give_different_samples() {
        let prompts = synthetic_prompt_ids(1);
        let opponents = vec![spec("alpha", 1.0, 0.5)];
        let one = ResponseCache::build(1, &prompts, &opponents).unwrap();
        let two = ResponseCache::build(2, &prompts, &opponents).unwrap();
        assert_ne!(
            one.lookup("prompt-0000", "alpha").unwrap().quality,
            two.lookup("prompt-0000", "alpha").unwrap().quality
        );
    }

    #[test]
    fn save_load_save_round_trips_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("cache.ndjson");
        let second = dir.path().join("cache2.ndjson");

        let cache = small_cache();
        cache.save(&first).unwrap();
        let loaded = ResponseCache::load(&first).unwrap();
        assert_eq!(cache, loaded);
        loaded.save(&second).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn load_accepts_records_with_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.ndjson");
        let body = concat!(
            "{\"version\":1,\"seed\":5,\"prompts\":[\"p\"],\"opponents\":[\"a\"]}\n",
            "{\"prompt_id\":\"p\",\"opponent_id\":\"a\",\"quality\":1.5,\"word_count\":120,\"text\":\"hello\"}\n",
        );
        std::fs::write(&path, body).unwrap();
        let cache = ResponseCache::load(&path).unwrap();
        let sample = cache.lookup("p", "a").unwrap();
        assert_eq!(sample.text.as_deref(), Some("hello"));
        assert_eq!(sample.word_count, 120);
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.ndjson");

        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::MalformedHeader(_))
        ));

        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::MalformedHeader(_))
        ));

        let v2 = "{\"version\":2,\"seed\":5,\"prompts\":[\"p\"],\"opponents\":[\"a\"]}\n";
        std::fs::write(&path, v2).unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::VersionMismatch { found: 2 })
        ));

        let header = "{\"version\":1,\"seed\":5,\"prompts\":[\"p\"],\"opponents\":[\"a\"]}\n";
        let record = "{\"prompt_id\":\"p\",\"opponent_id\":\"a\",\"quality\":1.0,\"word_count\":100}\n";

        std::fs::write(&path, header).unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::Incomplete { missing: 1, expected: 1 })
        ));

        std::fs::write(&path, format!("{header}{record}{record}")).unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::DuplicateEntry { .. })
        ));

        let stray =
            "{\"prompt_id\":\"p\",\"opponent_id\":\"ghost\",\"quality\":1.0,\"word_count\":100}\n";
        std::fs::write(&path, format!("{header}{record}{stray}")).unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::UnknownId { .. })
        ));

        std::fs::write(&path, format!("{header}{{broken\n")).unwrap();
        assert!(matches!(
            ResponseCache::load(&path),
            Err(CacheError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn build_rejects_degenerate_rosters() {
        let prompts = synthetic_prompt_ids(2);
        assert!(matches!(
            ResponseCache::build(7, &[], &[spec("a", 1.0, 0.5)]),
            Err(CacheError::NoPrompts)
        ));
        assert!(matches!(
            ResponseCache::build(7, &prompts, &[]),
            Err(CacheError::NoOpponents)
        ));
        assert!(matches!(
            ResponseCache::build(7, &prompts, &[spec("a", 1.0, 0.5), spec("a", 2.0, 0.5)]),
            Err(CacheError::DuplicateOpponentId(_))
        ));
        let dup = vec!["p".to_string(), "p".to_string()];
        assert!(matches!(
            ResponseCache::build(7, &dup, &[spec("a", 1.0, 0.5)]),
            Err(CacheError::DuplicatePromptId(_))
        ));
    }

    #[test]
    fn synthetic_ids_are_padded_and_unique() {
        let ids = synthetic_prompt_ids(11);
        assert_eq!(ids[0], "prompt-0000");
        assert_eq!(ids[10], "prompt-0010");
        let set: std::collections::BTreeSet<_> = ids.iter().collect();
        assert_eq!(set.len(), ids.len());
    }
}
