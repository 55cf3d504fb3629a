//! Text-generation gateway.
//!
//! Providers implement [`TextGenerator::sample`]; callers go through
//! [`generate`], which validates the request, times the call, and stamps the
//! prompt digest. Prompts are passed through byte for byte.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_URL: &str = "HETQA_LLM_URL";
pub const ENV_MODEL: &str = "HETQA_LLM_MODEL";
pub const ENV_KEY: &str = "HETQA_LLM_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("LLM provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("LLM provider rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed LLM response: {0}")]
    BadResponse(String),
    #[error("no scripted response for prompt {digest} ({preview:?})")]
    FixtureMiss { digest: String, preview: String },
    #[error("fixture {path}:{line}: {reason}")]
    Fixture {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, n_samples: usize) -> Self {
        Self {
            prompt: prompt.into(),
            temperature,
            max_tokens: 256,
            n_samples,
            seed: None,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), LlmError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(LlmError::InvalidRequest("n_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub samples: Vec<String>,
    pub provider_name: String,
    pub latency: Duration,
    pub prompt_digest: String,
}

pub trait TextGenerator: Send + Sync {
    fn name(&self) -> &str;
    /// Returns exactly `request.n_samples` completions.
    fn sample(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError>;
}

impl<T: TextGenerator + ?Sized> TextGenerator for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn sample(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        (**self).sample(request)
    }
}

/// Lowercase hex SHA-256 of the prompt bytes.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub fn generate(
    request: &GenerationRequest,
    provider: &dyn TextGenerator,
) -> Result<GenerationResponse, LlmError> {
    request.validate()?;
    let digest = prompt_digest(&request.prompt);
    tracing::debug!(provider = provider.name(), digest = %digest, n = request.n_samples, t = request.temperature, "generate");
    let start = Instant::now();
    let samples = provider.sample(request)?;
    if samples.len() != request.n_samples {
        return Err(LlmError::BadResponse(format!(
            "expected {} samples, got {}",
            request.n_samples,
            samples.len()
        )));
    }
    Ok(GenerationResponse {
        samples,
        provider_name: provider.name().to_string(),
        latency: start.elapsed(),
        prompt_digest: digest,
    })
}

/// One substring or several that must all occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matcher {
    One(String),
    All(Vec<String>),
}

impl Matcher {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::One(s) => prompt.contains(s.as_str()),
            Matcher::All(parts) => !parts.is_empty() && parts.iter().all(|p| prompt.contains(p.as_str())),
        }
    }
}

/// A fixture or replay line. Matches when `digest` equals the prompt digest
/// or when `matcher` matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<Matcher>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    pub responses: Vec<String>,
}

impl ScriptEntry {
    fn matches(&self, prompt: &str, digest: &str) -> bool {
        self.digest.as_deref() == Some(digest) || self.matcher.as_ref().is_some_and(|m| m.matches(prompt))
    }
}

/// Deterministic provider backed by an ordered fixture.
///
/// Each sample is served by the first entry (file order) that matches and
/// still has responses left. At temperature 0 one response is consumed and
/// repeated for every sample.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Mutex<Vec<(ScriptEntry, usize)>>,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries: Mutex::new(entries.into_iter().map(|e| (e, 0)).collect()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| LlmError::Fixture {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            if entry.matcher.is_none() && entry.digest.is_none() {
                return Err(LlmError::Fixture {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "entry needs a matcher or a digest".into(),
                });
            }
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    /// Responses not yet consumed, summed over entries.
    pub fn remaining(&self) -> usize {
        let entries = self.entries.lock().expect("fixture lock poisoned");
        entries.iter().map(|(e, used)| e.responses.len() - used).sum()
    }
}

impl TextGenerator for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn sample(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        let digest = prompt_digest(&request.prompt);
        let mut entries = self.entries.lock().expect("fixture lock poisoned");
        let draws = if request.temperature == 0.0 { 1 } else { request.n_samples };
        let mut out = Vec::with_capacity(request.n_samples);
        for _ in 0..draws {
            let slot = entries
                .iter_mut()
                .find(|(e, used)| *used < e.responses.len() && e.matches(&request.prompt, &digest));
            let Some((entry, used)) = slot else {
                return Err(LlmError::FixtureMiss {
                    digest,
                    preview: preview(&request.prompt),
                });
            };
            out.push(entry.responses[*used].clone());
            *used += 1;
        }
        while out.len() < request.n_samples {
            out.push(out[0].clone());
        }
        Ok(out)
    }
}

fn preview(prompt: &str) -> String {
    let tail: Vec<char> = prompt.chars().rev().take(80).collect();
    tail.into_iter().rev().collect()
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Debug, Deserialize)]
struct ChatContent {
    #[serde(default)]
    content: Option<String>,
}

/// Chat-completions client (`POST {base}/chat/completions`).
#[derive(Debug, Clone)]
pub struct ChatCompletionsProvider {
    base_url: String,
    model: String,
    key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl ChatCompletionsProvider {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            key,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            agent,
        }
    }

    /// Reads `HETQA_LLM_URL`, `HETQA_LLM_MODEL`, and optionally `HETQA_LLM_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        let url = std::env::var(ENV_URL).map_err(|_| LlmError::MissingEnv(ENV_URL))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| LlmError::MissingEnv(ENV_MODEL))?;
        Ok(Self::new(url, model, std::env::var(ENV_KEY).ok()))
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn with_max_retries(mut self, retries: u32) -> Self {
        self.max_retries = retries;
        self
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<Vec<String>, (bool, LlmError)> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            n: request.n_samples,
            seed: request.seed,
        };
        let mut call = self.agent.post(&format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| (true, LlmError::ProviderUnavailable(e.to_string())))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((true, LlmError::Rejected { status, body }));
        }
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, LlmError::Rejected { status, body }));
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, LlmError::BadResponse(e.to_string())))?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}

impl TextGenerator for ChatCompletionsProvider {
    fn name(&self) -> &str {
        "chat"
    }

    fn sample(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Ok(samples) => return Ok(samples),
                Err((true, e)) if attempt < self.max_retries => {
                    let wait = self.backoff * 2u32.pow(attempt);
                    tracing::warn!(error = %e, attempt = attempt + 1, ?wait, "transient LLM failure, retrying");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err((true, LlmError::Rejected { status, body })) if status >= 500 || status == 429 => {
                    return Err(LlmError::ProviderUnavailable(format!("status {status}: {body}")))
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

/// Wraps a provider and appends every exchange to a replay file that
/// [`ScriptedProvider::load`] can serve later.
#[derive(Debug)]
pub struct RecordingProvider<G> {
    inner: G,
    path: PathBuf,
    sink: Mutex<File>,
}

impl<G: TextGenerator> RecordingProvider<G> {
    pub fn new(inner: G, path: &Path) -> Result<Self, LlmError> {
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LlmError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            sink: Mutex::new(sink),
        })
    }
}

impl<G: TextGenerator> TextGenerator for RecordingProvider<G> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn sample(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        let samples = self.inner.sample(request)?;
        let responses = if request.temperature == 0.0 {
            samples.iter().take(1).cloned().collect()
        } else {
            samples.clone()
        };
        let entry = ScriptEntry {
            label: None,
            matcher: None,
            digest: Some(prompt_digest(&request.prompt)),
            responses,
        };
        let line = serde_json::to_string(&entry).expect("script entry serializes");
        let mut sink = self.sink.lock().expect("replay lock poisoned");
        writeln!(sink, "{line}").map_err(|source| LlmError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(matcher: &str, responses: &[&str]) -> ScriptEntry {
        ScriptEntry {
            label: None,
            matcher: Some(Matcher::One(matcher.into())),
            digest: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            prompt_digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn scripted_echo_and_miss() {
        let p = ScriptedProvider::new(vec![entry("Search Query:", &["hop one"])]);
        let r = generate(&GenerationRequest::new("... Search Query: ...", 0.0, 1), &p).unwrap();
        assert_eq!(r.samples, ["hop one"]);
        assert_eq!(r.provider_name, "scripted");
        assert_eq!(r.prompt_digest, prompt_digest("... Search Query: ..."));
        let err = generate(&GenerationRequest::new("unrelated", 0.0, 1), &p).unwrap_err();
        assert!(matches!(err, LlmError::FixtureMiss { .. }));
    }

    #[test]
    fn diverse_samples_consume_in_order() {
        let p = ScriptedProvider::new(vec![entry("Q", &["a", "b", "c"])]);
        let r = generate(&GenerationRequest::new("Q", 0.7, 3), &p).unwrap();
        assert_eq!(r.samples, ["a", "b", "c"]);
        assert_eq!(p.remaining(), 0);
        assert!(generate(&GenerationRequest::new("Q", 0.7, 1), &p).is_err());
    }

    #[test]
    fn zero_temperature_replicates_one_response() {
        let p = ScriptedProvider::new(vec![entry("Q", &["x", "y"])]);
        let r = generate(&GenerationRequest::new("Q", 0.0, 3), &p).unwrap();
        assert_eq!(r.samples, ["x", "x", "x"]);
        assert_eq!(p.remaining(), 1);
    }

    #[test]
    fn first_match_in_file_order_then_fallthrough() {
        let p = ScriptedProvider::new(vec![entry("Q", &["first"]), entry("Q", &["second"])]);
        let req = GenerationRequest::new("Q", 0.0, 1);
        assert_eq!(generate(&req, &p).unwrap().samples, ["first"]);
        assert_eq!(generate(&req, &p).unwrap().samples, ["second"]);
    }

    #[test]
    fn all_of_matcher_and_digest() {
        let m = Matcher::All(vec!["alpha".into(), "beta".into()]);
        assert!(m.matches("alpha and beta"));
        assert!(!m.matches("alpha only"));
        assert!(!Matcher::All(vec![]).matches("anything"));
        let p = ScriptedProvider::new(vec![ScriptEntry {
            label: None,
            matcher: None,
            digest: Some(prompt_digest("exact")),
            responses: vec!["hit".into()],
        }]);
        assert_eq!(p.sample(&GenerationRequest::new("exact", 0.0, 1)).unwrap(), ["hit"]);
    }

    #[test]
    fn request_validation() {
        let p = ScriptedProvider::new(vec![entry("Q", &["a"])]);
        for bad in [
            GenerationRequest::new("Q", -0.1, 1),
            GenerationRequest::new("Q", 0.0, 0),
            GenerationRequest::new("Q", f64::NAN, 1),
            GenerationRequest::new("Q", 0.0, 1).with_max_tokens(0),
        ] {
            assert!(matches!(generate(&bad, &p), Err(LlmError::InvalidRequest(_))));
        }
        assert_eq!(p.remaining(), 1);
    }

    #[test]
    fn recorded_exchanges_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let live = ScriptedProvider::new(vec![entry("P", &["one", "two"]), entry("F", &["fin"])]);
        let rec = RecordingProvider::new(live, &path).unwrap();
        generate(&GenerationRequest::new("P1", 0.7, 2), &rec).unwrap();
        generate(&GenerationRequest::new("F1", 0.0, 1), &rec).unwrap();
        drop(rec);
        let replay = ScriptedProvider::load(&path).unwrap();
        assert_eq!(replay.sample(&GenerationRequest::new("P1", 0.7, 2)).unwrap(), ["one", "two"]);
        assert_eq!(replay.sample(&GenerationRequest::new("F1", 0.0, 2)).unwrap(), ["fin", "fin"]);
    }

    #[test]
    fn fixture_lines_need_a_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        std::fs::write(&path, "{\"responses\":[\"x\"]}\n").unwrap();
        assert!(matches!(ScriptedProvider::load(&path), Err(LlmError::Fixture { line: 1, .. })));
    }
}
