use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::logical_form::{Expr, parse_draft};
use crate::throttle::{RetryPolicy, Throttle};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct LlmError {
    pub message: String,
    pub retryable: bool,
}

impl LlmError {
    pub fn fatal(message: impl Into<String>) -> Self {
        LlmError {
            message: message.into(),
            retryable: false,
        }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        LlmError {
            message: message.into(),
            retryable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    /// Question id; the mock backend keys on it.
    pub qid: String,
    pub prompt: String,
    pub samples: usize,
    pub temperature: f64,
    pub stop: String,
}

impl CompletionRequest {
    pub fn new(
        qid: impl Into<String>,
        prompt: impl Into<String>,
        samples: usize,
        temperature: f64,
    ) -> Self {
        CompletionRequest {
            qid: qid.into(),
            prompt: prompt.into(),
            samples,
            temperature,
            stop: "\n\n".into(),
        }
    }
}

/// A completion backend returning up to `samples` texts, best first.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError>;
}

/// Replays canned drafts from a JSONL file of `{"qid": .., "drafts": [..]}`.
/// A request for K samples gets the first K drafts, so smaller K always sees
/// a prefix of larger K.
#[derive(Debug, Clone, Default)]
pub struct MockLlm {
    drafts: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct MockLine {
    qid: String,
    drafts: Vec<String>,
}

impl MockLlm {
    pub fn from_map(drafts: HashMap<String, Vec<String>>) -> Self {
        MockLlm { drafts }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let file =
            File::open(path).map_err(|e| LlmError::fatal(format!("{}: {e}", path.display())))?;
        let mut drafts = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::fatal(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: MockLine = serde_json::from_str(&line)
                .map_err(|e| LlmError::fatal(format!("{}:{}: {e}", path.display(), i + 1)))?;
            drafts.insert(row.qid, row.drafts);
        }
        Ok(MockLlm { drafts })
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        let drafts = self.drafts.get(&request.qid).ok_or_else(|| {
            LlmError::fatal(format!("no mock drafts for question `{}`", request.qid))
        })?;
        Ok(drafts.iter().take(request.samples).cloned().collect())
    }
}

/// OpenAI-compatible `/completions` backend. Samples `n` completions at the
/// requested temperature.
pub struct HttpLlm {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    throttle: Arc<Throttle>,
    max_tokens: u32,
}

impl HttpLlm {
    /// `api_key_var` names the environment variable holding the bearer token;
    /// an unset variable sends no Authorization header.
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        api_key_var: &str,
        timeout: Duration,
        throttle: Arc<Throttle>,
    ) -> Self {
        HttpLlm {
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(api_key_var).ok().filter(|k| !k.is_empty()),
            agent: ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into(),
            throttle,
            max_tokens: 256,
        }
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<serde_json::Value, ureq::Error> {
        let _permit = self.throttle.acquire();
        let body = json!({
            "model": self.model,
            "prompt": request.prompt,
            "n": request.samples,
            "temperature": request.temperature,
            "max_tokens": self.max_tokens,
            "stop": [request.stop],
        });
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        req.send_json(&body)?.body_mut().read_json()
    }
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: usize,
    text: String,
}

impl LlmClient for HttpLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        let value = self.attempt(request).map_err(|e| LlmError {
            retryable: crate::executor::retryable(&e),
            message: e.to_string(),
        })?;
        let mut choices: Vec<Choice> =
            serde_json::from_value(value.get("choices").cloned().unwrap_or_default())
                .map_err(|e| LlmError::fatal(format!("malformed completion response: {e}")))?;
        choices.sort_by_key(|c| c.index);
        Ok(choices.into_iter().map(|c| c.text).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DraftStatus {
    Parsed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub text: String,
    #[serde(flatten)]
    pub status: DraftStatus,
    #[serde(skip)]
    pub expr: Option<Expr>,
}

impl Draft {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        match parse_draft(&text) {
            Ok(expr) => Draft {
                text,
                status: DraftStatus::Parsed,
                expr: Some(expr),
            },
            Err(e) => Draft {
                text,
                status: DraftStatus::Failed {
                    error: e.to_string(),
                },
                expr: None,
            },
        }
    }
}

/// K drafts of one question in the backend's order (rank 0 first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftBatch {
    pub qid: String,
    pub requested: usize,
    pub drafts: Vec<Draft>,
}

impl DraftBatch {
    /// True when the backend returned fewer texts than requested.
    pub fn truncated(&self) -> bool {
        self.drafts.len() < self.requested
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DraftError {
    #[error("draft count must be at least 1")]
    NoSamples,
    #[error("LLM request failed after {attempts} attempt(s): {source}")]
    Client { source: LlmError, attempts: u32 },
}

/// A completion up to its first blank line, trimmed.
pub fn truncate_completion(text: &str) -> String {
    let lines: Vec<&str> = text
        .lines()
        .skip_while(|l| l.trim().is_empty())
        .take_while(|l| !l.trim().is_empty())
        .collect();
    lines.join("\n").trim().to_string()
}

/// Requests `request.samples` drafts, retrying transient failures, and
/// parses each one.
pub fn generate_drafts(
    client: &dyn LlmClient,
    request: &CompletionRequest,
    retry: &RetryPolicy,
) -> Result<DraftBatch, DraftError> {
    if request.samples == 0 {
        return Err(DraftError::NoSamples);
    }
    let texts = retry
        .run(|| client.complete(request), |e| e.retryable)
        .map_err(|(source, attempts)| DraftError::Client { source, attempts })?;
    let drafts = texts
        .iter()
        .take(request.samples)
        .map(|t| Draft::new(truncate_completion(t)))
        .collect();
    Ok(DraftBatch {
        qid: request.qid.clone(),
        requested: request.samples,
        drafts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn mock(qid: &str, drafts: &[&str]) -> MockLlm {
        MockLlm::from_map(HashMap::from([(
            qid.to_string(),
            drafts.iter().map(|d| d.to_string()).collect(),
        )]))
    }

    #[test]
    fn single_draft() {
        let m = mock("q1", &["(JOIN a.b X)"]);
        let b = generate_drafts(
            &m,
            &CompletionRequest::new("q1", "p", 1, 0.7),
            &RetryPolicy::immediate(1),
        )
        .unwrap();
        assert_eq!(b.drafts.len(), 1);
        assert_eq!(b.drafts[0].status, DraftStatus::Parsed);
    }

    #[test]
    fn one_malformed_of_six() {
        let m = mock(
            "q",
            &[
                "(JOIN a.b X)",
                "(JOIN a.b",
                "(JOIN a.c X)",
                "a.b",
                "(COUNT X)",
                "(JOIN (R a.b) X)",
            ],
        );
        let b = generate_drafts(
            &m,
            &CompletionRequest::new("q", "p", 6, 0.7),
            &RetryPolicy::immediate(1),
        )
        .unwrap();
        assert_eq!(b.drafts.len(), 6);
        let failed = b
            .drafts
            .iter()
            .filter(|d| matches!(d.status, DraftStatus::Failed { .. }))
            .count();
        assert_eq!(failed, 1);
    }

    #[test]
    fn prefixes_and_truncation() {
        let m = mock("q", &["(JOIN a.b X)", "(JOIN a.c X)"]);
        let b = generate_drafts(
            &m,
            &CompletionRequest::new("q", "p", 4, 0.7),
            &RetryPolicy::immediate(1),
        )
        .unwrap();
        assert!(b.truncated());
        assert_eq!(b.drafts.len(), 2);
        let one = generate_drafts(
            &m,
            &CompletionRequest::new("q", "p", 1, 0.7),
            &RetryPolicy::immediate(1),
        )
        .unwrap();
        assert_eq!(one.drafts[0], b.drafts[0]);
    }

    #[test]
    fn cut_at_blank_line() {
        assert_eq!(
            truncate_completion(" (JOIN a.b X)\n\nQuestion: next"),
            "(JOIN a.b X)"
        );
        assert_eq!(
            truncate_completion("(JOIN a.b X)\r\n\r\nQuestion"),
            "(JOIN a.b X)"
        );
        assert_eq!(truncate_completion("(JOIN a.b\n X)"), "(JOIN a.b\n X)");
        assert_eq!(
            truncate_completion("\n(JOIN a.b X)\n  \nrest"),
            "(JOIN a.b X)"
        );
    }

    struct Failing(AtomicU32, bool);

    impl LlmClient for Failing {
        fn complete(&self, _: &CompletionRequest) -> Result<Vec<String>, LlmError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(LlmError {
                message: "boom".into(),
                retryable: self.1,
            })
        }
    }

    #[test]
    fn retries_then_fails() {
        let c = Failing(AtomicU32::new(0), true);
        let err = generate_drafts(
            &c,
            &CompletionRequest::new("q", "p", 2, 0.7),
            &RetryPolicy::immediate(5),
        )
        .unwrap_err();
        assert!(matches!(err, DraftError::Client { attempts: 5, .. }));
        assert_eq!(c.0.load(Ordering::SeqCst), 5);
        let c = Failing(AtomicU32::new(0), false);
        generate_drafts(
            &c,
            &CompletionRequest::new("q", "p", 2, 0.7),
            &RetryPolicy::immediate(5),
        )
        .unwrap_err();
        assert_eq!(c.0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_qid_is_fatal() {
        let m = mock("q", &["x"]);
        let err = m
            .complete(&CompletionRequest::new("other", "p", 1, 0.7))
            .unwrap_err();
        assert!(!err.retryable);
    }

    #[test]
    fn http_connection_refused() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        drop(listener);
        let llm = HttpLlm::new(
            url,
            "m",
            "KBBIND_TEST_UNSET_KEY",
            Duration::from_secs(2),
            Arc::new(Throttle::new(1, Duration::ZERO)),
        );
        let err = generate_drafts(
            &llm,
            &CompletionRequest::new("q", "p", 1, 0.7),
            &RetryPolicy::immediate(2),
        )
        .unwrap_err();
        assert!(matches!(err, DraftError::Client { attempts: 2, .. }));
    }
}
