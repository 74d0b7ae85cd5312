//! HTTP client for a remote judge service.
//!
//! The service exposes two JSON-over-POST endpoints: /v1/compare picks the
//! better of two responses and /v1/score rates one response on a 1 to 5
//! scale. The client retries transport failures and 5xx replies with
//! exponential backoff, treats malformed replies as fatal protocol errors,
//! and fans a batch of comparisons across a bounded pool of worker threads
//! so at most `max_in_flight` requests are outstanding at once.
//!
//! The [`stub`] module is a self-contained test fixture: a minimal HTTP
//! server implementing both endpoints with scriptable replies, fault
//! injection, and in-flight instrumentation.

use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::judging::Winner;

/// Environment variable that overrides `GatewayConfig::base_url`.
pub const JUDGE_URL_ENV: &str = "ELO_ARENA_JUDGE_URL";

pub const DEFAULT_COMPARE_TEMPLATE: &str =
    "Decide which response better answers the prompt below.\n\n{prompt}";
pub const DEFAULT_SCORE_TEMPLATE: &str =
    "Rate the response to the prompt below on a 1-5 quality scale.\n\n{prompt}";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    InvalidConfig(String),
    #[error("empty {0} is not a valid judge input")]
    EmptyInput(&'static str),
    #[error("judge unreachable after {attempts} attempts: {last_error}")]
    Unreachable { attempts: u32, last_error: String },
    #[error("judge rejected the request with http {status}")]
    Rejected { status: u16 },
    #[error("judge reply violates the protocol: {0}")]
    Protocol(String),
    #[error("judge score {score} is outside the 1..=5 scale")]
    ScoreOutOfRange { score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    /// Additional attempts after the first; 0 means fail fast.
    pub max_retries: u32,
    /// Upper bound on concurrently outstanding requests.
    pub max_in_flight: usize,
    /// Wait before retry n is `retry_backoff_ms << n`.
    pub retry_backoff_ms: u64,
    /// Must contain the literal placeholder `{prompt}`.
    pub compare_template: String,
    pub score_template: String,
    /// Sent as an Authorization bearer header when present.
    pub bearer_token: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".to_string(),
            timeout_ms: 5_000,
            max_retries: 3,
            max_in_flight: 4,
            retry_backoff_ms: 250,
            compare_template: DEFAULT_COMPARE_TEMPLATE.to_string(),
            score_template: DEFAULT_SCORE_TEMPLATE.to_string(),
            bearer_token: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.base_url.is_empty() {
            return Err(GatewayError::InvalidConfig("base_url is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig("timeout_ms must be > 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::InvalidConfig(
                "max_in_flight must be at least 1".into(),
            ));
        }
        for (name, template) in [
            ("compare_template", &self.compare_template),
            ("score_template", &self.score_template),
        ] {
            if !template.contains("{prompt}") {
                return Err(GatewayError::InvalidConfig(format!(
                    "{name} lacks the {{prompt}} placeholder"
                )));
            }
        }
        Ok(())
    }
}

/// Which side a remote judge preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteWinner {
    A,
    B,
    Tie,
}

impl RemoteWinner {
    fn parse(raw: &str) -> Result<Self, GatewayError> {
        match raw {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "tie" => Ok(Self::Tie),
            other => Err(GatewayError::Protocol(format!(
                "winner must be \"a\", \"b\" or \"tie\", got {other:?}"
            ))),
        }
    }

    /// Maps onto match winners with response A always the policy side.
    pub fn as_match_winner(self) -> Winner {
        match self {
            Self::A => Winner::Policy,
            Self::B => Winner::Opponent,
            Self::Tie => Winner::Tie,
        }
    }
}

/// One comparison in a batch. The id travels as an x-request-id header so
/// verdicts stay attributable when the batch runs concurrently.
#[derive(Debug, Clone)]
pub struct CompareRequest {
    pub request_id: u64,
    pub prompt: String,
    pub response_a: String,
    pub response_b: String,
}

enum Attempt {
    /// Transport failure or 5xx; worth retrying.
    Retry(String),
    Fatal(GatewayError),
}

pub struct JudgeClient {
    agent: ureq::Agent,
    config: GatewayConfig,
    base_url: String,
}

impl JudgeClient {
    /// Builds a client; ELO_ARENA_JUDGE_URL overrides the configured URL.
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let base_url = std::env::var(JUDGE_URL_ENV)
            .ok()
            .filter(|v| !v.is_empty())
            .unwrap_or_else(|| config.base_url.clone());
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(agent_config),
            config,
            base_url: base_url.trim_end_matches('/').to_string(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn compare(
        &self,
        prompt: &str,
        response_a: &str,
        response_b: &str,
    ) -> Result<RemoteWinner, GatewayError> {
        self.compare_with_id(None, prompt, response_a, response_b)
    }

    fn compare_with_id(
        &self,
        request_id: Option<u64>,
        prompt: &str,
        response_a: &str,
        response_b: &str,
    ) -> Result<RemoteWinner, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyInput("prompt"));
        }
        if response_a.is_empty() {
            return Err(GatewayError::EmptyInput("response_a"));
        }
        if response_b.is_empty() {
            return Err(GatewayError::EmptyInput("response_b"));
        }
        let rendered = self.config.compare_template.replace("{prompt}", prompt);
        let body = json!({
            "prompt": rendered,
            "response_a": response_a,
            "response_b": response_b,
        });
        let reply = self.post_with_retries("/v1/compare", &body, request_id)?;
        #[derive(Deserialize)]
        struct CompareReply {
            winner: String,
        }
        let parsed: CompareReply = serde_json::from_value(reply)
            .map_err(|e| GatewayError::Protocol(format!("compare reply: {e}")))?;
        RemoteWinner::parse(&parsed.winner)
    }

    pub fn score(&self, prompt: &str, response: &str) -> Result<f64, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyInput("prompt"));
        }
        if response.is_empty() {
            return Err(GatewayError::EmptyInput("response"));
        }
        let rendered = self.config.score_template.replace("{prompt}", prompt);
        let body = json!({ "prompt": rendered, "response": response });
        let reply = self.post_with_retries("/v1/score", &body, None)?;
        #[derive(Deserialize)]
        struct ScoreReply {
            score: f64,
        }
        let parsed: ScoreReply = serde_json::from_value(reply)
            .map_err(|e| GatewayError::Protocol(format!("score reply: {e}")))?;
        if !(parsed.score.is_finite() && (1.0..=5.0).contains(&parsed.score)) {
            return Err(GatewayError::ScoreOutOfRange {
                score: parsed.score,
            });
        }
        Ok(parsed.score)
    }

    /// Runs the whole batch with at most `max_in_flight` requests
    /// outstanding; results come back in input order.
    pub fn compare_batch(
        &self,
        requests: &[CompareRequest],
    ) -> Vec<Result<RemoteWinner, GatewayError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let queue: Mutex<std::collections::VecDeque<usize>> =
            Mutex::new((0..requests.len()).collect());
        let results: Vec<Mutex<Option<Result<RemoteWinner, GatewayError>>>> =
            (0..requests.len()).map(|_| Mutex::new(None)).collect();
        let workers = self.config.max_in_flight.min(requests.len());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = queue.lock().expect("queue lock").pop_front();
                    let Some(index) = index else { break };
                    let req = &requests[index];
                    let outcome = self.compare_with_id(
                        Some(req.request_id),
                        &req.prompt,
                        &req.response_a,
                        &req.response_b,
                    );
                    *results[index].lock().expect("result lock") = Some(outcome);
                });
            }
        });

        results
            .into_iter()
            .map(|slot| slot.into_inner().expect("result lock").expect("worker filled slot"))
            .collect()
    }

    fn post_with_retries(
        &self,
        path: &str,
        body: &serde_json::Value,
        request_id: Option<u64>,
    ) -> Result<serde_json::Value, GatewayError> {
        let url = format!("{}{}", self.base_url, path);
        let mut last_error = String::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            match self.post_once(&url, body, request_id) {
                Ok(value) => return Ok(value),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(message)) => {
                    last_error = message;
                    if attempt + 1 < attempts {
                        let wait = self.config.retry_backoff_ms.saturating_mul(1 << attempt);
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                }
            }
        }
        Err(GatewayError::Unreachable {
            attempts,
            last_error,
        })
    }

    fn post_once(
        &self,
        url: &str,
        body: &serde_json::Value,
        request_id: Option<u64>,
    ) -> Result<serde_json::Value, Attempt> {
        let mut request = self.agent.post(url);
        if let Some(id) = request_id {
            request = request.header("x-request-id", id.to_string());
        }
        if let Some(token) = &self.config.bearer_token {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        match request.send_json(body) {
            Ok(mut response) => {
                let status = response.status().as_u16();
                if (200..300).contains(&status) {
                    response
                        .body_mut()
                        .read_json::<serde_json::Value>()
                        .map_err(|e| {
                            Attempt::Fatal(GatewayError::Protocol(format!(
                                "reply body is not JSON: {e}"
                            )))
                        })
                } else if (500..600).contains(&status) {
                    Err(Attempt::Retry(format!("http {status}")))
                } else {
                    Err(Attempt::Fatal(GatewayError::Rejected { status }))
                }
            }
            Err(ureq::Error::BadUri(uri)) => Err(Attempt::Fatal(GatewayError::InvalidConfig(
                format!("bad judge url: {uri}"),
            ))),
            Err(transport) => Err(Attempt::Retry(transport.to_string())),
        }
    }
}

pub mod stub {
    //! Minimal scriptable judge server for tests.
    //!
    //! Speaks just enough HTTP/1.1 for the client above: one POST per
    //! connection, Content-Length bodies, connection close after the reply.
    //! Every accepted request is counted; a configurable number of leading
    //! requests can be failed with a 500 to exercise retry paths, replies
    //! can be scripted per endpoint, and a hold duration keeps handlers
    //! open so tests can observe the peak number of concurrent requests.

    use std::collections::BTreeMap;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    /// What /v1/compare replies.
    #[derive(Debug, Clone)]
    pub enum CompareScript {
        /// Always this winner string, valid or not.
        Fixed(String),
        /// Reply with the winner token embedded in the prompt as
        /// `winner:a`, `winner:b` or `winner:tie` (attribution tests).
        EchoPromptToken,
        /// Reply with a body that is not JSON at all.
        Garbage,
    }

    #[derive(Debug, Clone)]
    pub struct StubOptions {
        pub compare: CompareScript,
        /// Fixed /v1/score reply value.
        pub score: f64,
        /// Fail this many leading requests with a 500 before behaving.
        pub fail_first: usize,
        /// Hold every request open this long before replying.
        pub hold: Duration,
    }

    impl Default for StubOptions {
        fn default() -> Self {
            Self {
                compare: CompareScript::Fixed("a".to_string()),
                score: 3.0,
                fail_first: 0,
                hold: Duration::ZERO,
            }
        }
    }

    #[derive(Default)]
    struct Instrumentation {
        total_requests: AtomicUsize,
        in_flight: AtomicUsize,
        peak_in_flight: AtomicUsize,
        failures_injected: AtomicUsize,
        /// Count of 200 replies per x-request-id header value.
        served_ids: Mutex<BTreeMap<u64, usize>>,
        bearer_seen: Mutex<Option<String>>,
    }

    pub struct StubJudge {
        addr: std::net::SocketAddr,
        stop: Arc<AtomicBool>,
        stats: Arc<Instrumentation>,
        accept_thread: Option<std::thread::JoinHandle<()>>,
    }

    impl StubJudge {
        pub fn start(options: StubOptions) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let stop = Arc::new(AtomicBool::new(false));
            let stats = Arc::new(Instrumentation::default());
            let remaining_failures = Arc::new(AtomicUsize::new(options.fail_first));

            let accept_stop = Arc::clone(&stop);
            let accept_stats = Arc::clone(&stats);
            let accept_thread = std::thread::spawn(move || {
                let mut handlers = Vec::new();
                for connection in listener.incoming() {
                    if accept_stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = connection else { continue };
                    let stats = Arc::clone(&accept_stats);
                    let failures = Arc::clone(&remaining_failures);
                    let options = options.clone();
                    handlers.push(std::thread::spawn(move || {
                        handle_connection(stream, &options, &stats, &failures);
                    }));
                }
                for handler in handlers {
                    let _ = handler.join();
                }
            });

            Ok(Self {
                addr,
                stop,
                stats,
                accept_thread: Some(accept_thread),
            })
        }

        pub fn url(&self) -> String {
            format!("http://{}", self.addr)
        }

        pub fn total_requests(&self) -> usize {
            self.stats.total_requests.load(Ordering::SeqCst)
        }

        pub fn peak_in_flight(&self) -> usize {
            self.stats.peak_in_flight.load(Ordering::SeqCst)
        }

        pub fn failures_injected(&self) -> usize {
            self.stats.failures_injected.load(Ordering::SeqCst)
        }

        /// (request id, number of 200 replies) for every id seen.
        pub fn served_ids(&self) -> Vec<(u64, usize)> {
            self.stats
                .served_ids
                .lock()
                .expect("ids lock")
                .iter()
                .map(|(&id, &n)| (id, n))
                .collect()
        }

        pub fn bearer_seen(&self) -> Option<String> {
            self.stats.bearer_seen.lock().expect("bearer lock").clone()
        }
    }

    impl Drop for StubJudge {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            // Unblock accept() so the thread notices the stop flag.
            let _ = TcpStream::connect(self.addr);
            if let Some(handle) = self.accept_thread.take() {
                let _ = handle.join();
            }
        }
    }

    struct ParsedRequest {
        path: String,
        request_id: Option<u64>,
        bearer: Option<String>,
        body: serde_json::Value,
    }

    fn read_request(stream: &mut TcpStream) -> Option<ParsedRequest> {
        let mut reader = BufReader::new(stream.try_clone().ok()?);
        let mut request_line = String::new();
        reader.read_line(&mut request_line).ok()?;
        let path = request_line.split_whitespace().nth(1)?.to_string();

        let mut content_length = 0usize;
        let mut request_id = None;
        let mut bearer = None;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).ok()?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            let Some((name, value)) = line.split_once(':') else {
                continue;
            };
            let name = name.trim().to_ascii_lowercase();
            let value = value.trim();
            match name.as_str() {
                "content-length" => content_length = value.parse().ok()?,
                "x-request-id" => request_id = value.parse().ok(),
                "authorization" => {
                    bearer = value.strip_prefix("Bearer ").map(str::to_string);
                }
                _ => {}
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body).ok()?;
        let body = serde_json::from_slice(&body).ok()?;
        Some(ParsedRequest {
            path,
            request_id,
            bearer,
            body,
        })
    }

    fn write_reply(stream: &mut TcpStream, status: u16, reason: &str, body: &str) {
        let reply = format!(
            "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = stream.write_all(reply.as_bytes());
        let _ = stream.flush();
    }

    fn handle_connection(
        mut stream: TcpStream,
        options: &StubOptions,
        stats: &Instrumentation,
        remaining_failures: &AtomicUsize,
    ) {
        let Some(request) = read_request(&mut stream) else {
            // Shutdown wake-up connections carry no request.
            return;
        };
        stats.total_requests.fetch_add(1, Ordering::SeqCst);
        let now_in_flight = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats
            .peak_in_flight
            .fetch_max(now_in_flight, Ordering::SeqCst);
        if let Some(token) = &request.bearer {
            *stats.bearer_seen.lock().expect("bearer lock") = Some(token.clone());
        }

        if !options.hold.is_zero() {
            std::thread::sleep(options.hold);
        }

        let inject_failure = remaining_failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if inject_failure {
            stats.failures_injected.fetch_add(1, Ordering::SeqCst);
            write_reply(&mut stream, 500, "Internal Server Error", "{}");
            stats.in_flight.fetch_sub(1, Ordering::SeqCst);
            return;
        }

        match request.path.as_str() {
            "/v1/compare" => {
                let reply = match &options.compare {
                    CompareScript::Fixed(winner) => format!("{{\"winner\":\"{winner}\"}}"),
                    CompareScript::EchoPromptToken => {
                        let prompt = request.body["prompt"].as_str().unwrap_or("");
                        let winner = ["tie", "a", "b"]
                            .iter()
                            .find(|w| prompt.contains(&format!("winner:{w}")))
                            .copied()
                            .unwrap_or("a");
                        format!("{{\"winner\":\"{winner}\"}}")
                    }
                    CompareScript::Garbage => "this is not json".to_string(),
                };
                if let Some(id) = request.request_id {
                    *stats
                        .served_ids
                        .lock()
                        .expect("ids lock")
                        .entry(id)
                        .or_insert(0) += 1;
                }
                write_reply(&mut stream, 200, "OK", &reply);
            }
            "/v1/score" => {
                write_reply(&mut stream, 200, "OK", &format!("{{\"score\":{}}}", options.score));
            }
            _ => write_reply(&mut stream, 404, "Not Found", "{}"),
        }
        stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}
