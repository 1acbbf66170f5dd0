//! Prompt rendering, text generation and embedding backends.

mod embed;
mod generate;
mod prompt;

use std::time::Duration;

use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::{
    mock_embed, mock_embed_dim, CachedEmbedder, Embedder, EmbeddingOptions, EmbeddingVector,
    HttpEmbedder, MockEmbedder, MOCK_EMBED_DIM,
};
pub use generate::{
    mock_generate, GenerationOptions, HttpGenerator, MockGenerator, TextGenerator, DEFAULT_BASE_URL,
};
pub use prompt::{build_prompt, PromptMemoryItem, PromptSpec, DEFAULT_SUBJECT, NO_PREDECESSOR};

#[derive(Debug, Error)]
pub enum TextError {
    #[error("transport error (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("degenerate output: {0}")]
    Degenerate(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("embedding dimension {got} does not match {expected}")]
    DimMismatch { expected: usize, got: usize },
}

pub(crate) fn hash64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Hex SHA-256 of a rendered prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

const EXCERPT: usize = 200;

/// POSTs `body` as JSON and decodes the reply, retrying connection failures
/// and 5xx responses up to `retries` more times with exponential backoff.
pub(crate) fn with_retries<T: DeserializeOwned>(
    http: &reqwest::blocking::Client,
    url: &str,
    body: &serde_json::Value,
    retries: u32,
    backoff_ms: u64,
) -> Result<T, TextError> {
    let mut attempt = 0;
    loop {
        let outcome = http.post(url).json(body).send();
        let err = match outcome {
            Ok(resp) => {
                let status = resp.status();
                let text = resp
                    .text()
                    .map_err(|e| TextError::Transport { status: Some(status.as_u16()), message: e.to_string() });
                match text {
                    Ok(text) if status.is_success() => {
                        return serde_json::from_str(&text).map_err(|e| TextError::Transport {
                            status: Some(status.as_u16()),
                            message: format!("undecodable response ({e}): {}", text.chars().take(EXCERPT).collect::<String>()),
                        });
                    }
                    Ok(text) => {
                        let err = TextError::Transport {
                            status: Some(status.as_u16()),
                            message: text.chars().take(EXCERPT).collect(),
                        };
                        if !status.is_server_error() {
                            return Err(err);
                        }
                        err
                    }
                    Err(e) => e,
                }
            }
            Err(e) => TextError::Transport { status: None, message: e.to_string() },
        };
        if attempt >= retries {
            return Err(err);
        }
        log::warn!("request to {url} failed (attempt {}): {err}", attempt + 1);
        std::thread::sleep(Duration::from_millis(backoff_ms.saturating_mul(1 << attempt.min(16))));
        attempt += 1;
    }
}
