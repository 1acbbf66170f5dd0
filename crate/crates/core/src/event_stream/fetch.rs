//! Optional live ingestion from a public news-metadata article-list API.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::records::{format_compact, parse_timestamp};
use super::{IngestError, RawRecord};

pub const DEFAULT_ARTICLE_API: &str = "https://api.gdeltproject.org/api/v2/doc/doc";

#[derive(Debug, Clone)]
pub struct ArticleClientConfig {
    pub base_url: String,
    /// Value sent as the `mode` query parameter.
    pub mode: String,
    pub timeout: Duration,
}

impl Default for ArticleClientConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_ARTICLE_API.to_string(),
            mode: "ArtList".to_string(),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ArticleList {
    #[serde(default)]
    articles: Vec<ArticleEntry>,
}

#[derive(Debug, Deserialize)]
struct ArticleEntry {
    #[serde(default)]
    seendate: String,
    #[serde(default)]
    domain: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    url: String,
    #[serde(default)]
    language: String,
}

/// Issues one request at a time; the underlying connection pool is reused.
pub struct ArticleClient {
    config: ArticleClientConfig,
    http: reqwest::blocking::Client,
}

const BODY_EXCERPT: usize = 200;

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

impl ArticleClient {
    pub fn new(config: ArticleClientConfig) -> Result<Self, IngestError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| IngestError::Transport { status: None, body: e.to_string() })?;
        Ok(Self { config, http })
    }

    /// Fetches at most `cap` article records inside `[start, end]`. Entries
    /// with unusable fields or outside the window are dropped.
    pub fn fetch_articles(
        &self,
        query: &str,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        cap: usize,
    ) -> Result<Vec<RawRecord>, IngestError> {
        if cap == 0 {
            return Err(IngestError::Precondition("article cap must be at least 1".into()));
        }
        if end < start {
            return Err(IngestError::Precondition("window end precedes window start".into()));
        }
        let params = [
            ("query", query.to_string()),
            ("mode", self.config.mode.clone()),
            ("format", "json".to_string()),
            ("maxrecords", cap.to_string()),
            ("startdatetime", format_compact(&start)),
            ("enddatetime", format_compact(&end)),
        ];
        let response = self
            .http
            .get(&self.config.base_url)
            .query(&params)
            .send()
            .map_err(|e| IngestError::Transport { status: None, body: e.to_string() })?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| IngestError::Transport { status: Some(status.as_u16()), body: e.to_string() })?;
        if !status.is_success() {
            return Err(IngestError::Transport { status: Some(status.as_u16()), body: excerpt(&body) });
        }
        let list: ArticleList = serde_json::from_str(&body)
            .map_err(|_| IngestError::Transport { status: Some(status.as_u16()), body: excerpt(&body) })?;

        let records = list
            .articles
            .into_iter()
            .filter_map(|a| {
                let timestamp = parse_timestamp(&a.seendate)?;
                let (title, url) = (a.title.trim().to_string(), a.url.trim().to_string());
                (!title.is_empty() && !url.is_empty() && timestamp >= start && timestamp <= end).then(|| {
                    RawRecord {
                        timestamp,
                        domain: a.domain.trim().to_string(),
                        title,
                        url,
                        language: a.language.trim().to_string(),
                    }
                })
            })
            .take(cap)
            .collect();
        Ok(records)
    }
}
