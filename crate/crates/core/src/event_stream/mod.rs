//! Ingestion, cleaning, and chronological partitioning of node-labeled
//! event streams.

mod fetch;
mod records;
mod stream;
mod taxonomy;

use thiserror::Error;

pub use fetch::{ArticleClient, ArticleClientConfig, DEFAULT_ARTICLE_API};
pub use records::{
    deduplicate, filter_language, format_compact, parse_records, parse_timestamp, ParsedRecords,
    RawRecord, RecordFormat, Reject,
};
pub use stream::{
    build_stream, chronological_split, load_stream, meta_path, save_stream, train_count, Event,
    EventStream, StreamMeta, DEFAULT_TIE_OFFSET_HOURS,
};
pub use taxonomy::{DomainRule, NodeSpec, NodeTaxonomy};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("payload is not valid UTF-8: {0}")]
    Decode(String),
    #[error("no valid records ({rejected} rejected rows)")]
    EmptyInput { rejected: usize },
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("event stream: {0}")]
    Stream(String),
    #[error("split: {0}")]
    Split(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("transport error (status {status:?}): {body}")]
    Transport { status: Option<u16>, body: String },
    #[error("io: {0}")]
    Io(String),
}
