use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{hash64, with_retries, TextError};

pub const DEFAULT_BASE_URL: &str = "http://localhost:11434";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationOptions {
    pub model_name: String,
    pub base_url: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    /// Seconds.
    pub request_timeout: f64,
    pub retries: u32,
    /// Base delay of the exponential backoff between attempts, milliseconds.
    pub backoff_ms: u64,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            model_name: "qwen2.5:latest".into(),
            base_url: DEFAULT_BASE_URL.into(),
            temperature: 0.35,
            top_p: 0.9,
            max_new_tokens: 75,
            request_timeout: 120.0,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

impl GenerationOptions {
    pub fn validate(&self) -> Result<(), TextError> {
        if !(self.temperature >= 0.0) {
            return Err(TextError::Precondition(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(TextError::Precondition(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if self.max_new_tokens == 0 {
            return Err(TextError::Precondition("max_new_tokens must be at least 1".into()));
        }
        if !(self.request_timeout > 0.0) {
            return Err(TextError::Precondition("request timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Source of event text. Implementations see only the rendered prompt.
pub trait TextGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String, TextError>;

    fn id(&self) -> String;
}

#[derive(Deserialize)]
struct GenerateResponse {
    response: String,
}

/// Client for a local inference server's non-streaming `/api/generate`.
pub struct HttpGenerator {
    options: GenerationOptions,
    http: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(options: GenerationOptions) -> Result<Self, TextError> {
        options.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(options.request_timeout))
            .build()
            .map_err(|e| TextError::Transport { status: None, message: e.to_string() })?;
        Ok(Self { options, http })
    }

    pub fn options(&self) -> &GenerationOptions {
        &self.options
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String, TextError> {
        let url = format!("{}/api/generate", self.options.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.options.model_name,
            "prompt": prompt,
            "stream": false,
            "options": {
                "temperature": self.options.temperature,
                "top_p": self.options.top_p,
                "num_predict": self.options.max_new_tokens,
            }
        });
        let parsed: GenerateResponse =
            with_retries(&self.http, &url, &body, self.options.retries, self.options.backoff_ms)?;
        let text = parsed.response.trim();
        if text.is_empty() {
            return Err(TextError::Degenerate("generator returned an empty completion".into()));
        }
        Ok(text.to_string())
    }

    fn id(&self) -> String {
        format!("http:{}", self.options.model_name)
    }
}

const FILLER: [&str; 16] = [
    "officials", "confirm", "progress", "reported", "schedule", "teams", "watch", "latest",
    "mission", "crew", "review", "update", "coverage", "plans", "signals", "readiness",
];

fn field<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(name).and_then(|rest| rest.strip_prefix(": ")))
}

/// Text of the first (highest-weight) predecessor line in a rendered prompt.
fn top_predecessor(prompt: &str) -> Option<&str> {
    let line = prompt.lines().find(|l| l.starts_with("1. (weight="))?;
    line.split_once(") ").map(|(_, text)| text)
}

/// Deterministic stand-in for a language model: a template keyed by a
/// 64-bit hash of `(prompt, seed)` that repeats the target label and the
/// leading words of the strongest predecessor.
pub fn mock_generate(prompt: &str, seed: u64) -> String {
    let mut bytes = prompt.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    let h = hash64(&bytes);
    let label = field(prompt, "Target node").unwrap_or("node");
    let filler: Vec<&str> = (0..3).map(|k| FILLER[((h >> (4 * k)) & 0xf) as usize]).collect();
    let mut out = format!("{label} update:");
    if let Some(text) = top_predecessor(prompt) {
        // skip the header and hash tag of earlier mock outputs
        let body = text.split_once(" update: ").map_or(text, |(_, rest)| rest);
        for word in body.split_whitespace().filter(|w| !w.starts_with('[')).take(6) {
            out.push(' ');
            out.push_str(word);
        }
    }
    out.push_str(&format!(" {} [{h:016x}]", filler.join(" ")));
    out
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub seed: u64,
}

impl TextGenerator for MockGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String, TextError> {
        Ok(mock_generate(prompt, self.seed))
    }

    fn id(&self) -> String {
        format!("mock:{}", self.seed)
    }
}
