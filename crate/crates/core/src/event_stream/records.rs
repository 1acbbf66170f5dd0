//! Raw article metadata rows and the cleaning steps applied before they
//! become events.

use std::collections::HashSet;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::IngestError;

/// One article-metadata row as it arrives from a CSV/JSONL export or the
/// remote article-list API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub timestamp: DateTime<Utc>,
    pub domain: String,
    pub title: String,
    pub url: String,
    pub language: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "ndjson" => Ok(Self::Jsonl),
            other => Err(format!("unknown record format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based data row (CSV rows exclude the header).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<RawRecord>,
    pub rejects: Vec<Reject>,
}

/// Loosely typed row: every field optional so that missing columns become
/// rejects instead of hard parse failures.
#[derive(Debug, Default, Deserialize)]
struct LooseRow {
    #[serde(default, alias = "seendate")]
    timestamp: Option<String>,
    #[serde(default)]
    domain: Option<String>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    language: Option<String>,
}

impl LooseRow {
    fn validate(self) -> Result<RawRecord, String> {
        let raw_ts = non_empty(self.timestamp).ok_or("missing timestamp")?;
        let timestamp = parse_timestamp(&raw_ts)
            .ok_or_else(|| format!("unparseable timestamp `{raw_ts}`"))?;
        let url = non_empty(self.url).ok_or("missing url")?;
        let title = non_empty(self.title).ok_or("missing title")?;
        Ok(RawRecord {
            timestamp,
            domain: self.domain.map(|d| d.trim().to_string()).unwrap_or_default(),
            title,
            url,
            language: self.language.map(|l| l.trim().to_string()).unwrap_or_default(),
        })
    }
}

fn non_empty(field: Option<String>) -> Option<String> {
    field
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Accepts RFC 3339, naive ISO-8601 (read as UTC), the 14-digit compact
/// `YYYYMMDDHHMMSS` form, and its `YYYYMMDDTHHMMSSZ` variant.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc());
        }
    }
    let compact: String = if raw.len() == 16 && raw.as_bytes()[8] == b'T' && raw.ends_with('Z') {
        raw.chars().filter(|c| c.is_ascii_digit()).collect()
    } else {
        raw.to_string()
    };
    if compact.len() == 14 && compact.bytes().all(|b| b.is_ascii_digit()) {
        return NaiveDateTime::parse_from_str(&compact, "%Y%m%d%H%M%S")
            .ok()
            .map(|n| n.and_utc());
    }
    None
}

/// Formats an instant in the compact 14-digit UTC form.
pub fn format_compact(ts: &DateTime<Utc>) -> String {
    ts.format("%Y%m%d%H%M%S").to_string()
}

/// Parses a CSV (with header) or JSONL payload. Malformed rows are returned
/// as rejects; a payload without a single valid row is an error.
pub fn parse_records(bytes: &[u8], format: RecordFormat) -> Result<ParsedRecords, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Decode(e.to_string()))?;
    let mut parsed = ParsedRecords::default();
    match format {
        RecordFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            for (i, row) in reader.deserialize::<LooseRow>().enumerate() {
                let result = row.map_err(|e| e.to_string()).and_then(LooseRow::validate);
                push_row(&mut parsed, i + 1, result);
            }
        }
        RecordFormat::Jsonl => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let result = serde_json::from_str::<LooseRow>(line)
                    .map_err(|e| e.to_string())
                    .and_then(LooseRow::validate);
                push_row(&mut parsed, i + 1, result);
            }
        }
    }
    if parsed.records.is_empty() {
        return Err(IngestError::EmptyInput {
            rejected: parsed.rejects.len(),
        });
    }
    Ok(parsed)
}

fn push_row(parsed: &mut ParsedRecords, row: usize, result: Result<RawRecord, String>) {
    match result {
        Ok(record) => parsed.records.push(record),
        Err(reason) => parsed.rejects.push(Reject { row, reason }),
    }
}

/// Keeps records whose language tag matches `language` (case-insensitive).
pub fn filter_language(records: Vec<RawRecord>, language: &str) -> Vec<RawRecord> {
    records
        .into_iter()
        .filter(|r| r.language.eq_ignore_ascii_case(language.trim()))
        .collect()
}

fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// First occurrence wins, keyed by normalized url and then by normalized
/// title. Input order is preserved.
pub fn deduplicate(records: Vec<RawRecord>) -> Vec<RawRecord> {
    let mut seen_urls = HashSet::new();
    let mut seen_titles = HashSet::new();
    records
        .into_iter()
        .filter(|r| {
            let url = normalize_key(&r.url);
            let title = normalize_key(&r.title);
            if seen_urls.contains(&url) || seen_titles.contains(&title) {
                return false;
            }
            seen_urls.insert(url);
            seen_titles.insert(title);
            true
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(ts: &str, title: &str, url: &str) -> RawRecord {
        RawRecord {
            timestamp: parse_timestamp(ts).unwrap(),
            domain: "example.com".into(),
            title: title.into(),
            url: url.into(),
            language: "English".into(),
        }
    }

    #[test]
    fn timestamp_forms() {
        let expect = parse_timestamp("2026-04-01T12:30:00Z").unwrap();
        assert_eq!(parse_timestamp("20260401123000"), Some(expect));
        assert_eq!(parse_timestamp("20260401T123000Z"), Some(expect));
        assert_eq!(parse_timestamp("2026-04-01 12:30:00"), Some(expect));
        assert_eq!(parse_timestamp("2026-04-01T14:30:00+02:00"), Some(expect));
        assert!(parse_timestamp("April 1st").is_none());
        assert!(parse_timestamp("20261301123000").is_none());
        assert_eq!(format_compact(&expect), "20260401123000");
    }

    #[test]
    fn empty_payload_is_empty_input() {
        let err = parse_records(b"", RecordFormat::Csv).unwrap_err();
        assert!(matches!(err, IngestError::EmptyInput { rejected: 0 }));
        let err = parse_records(b"", RecordFormat::Jsonl).unwrap_err();
        assert!(matches!(err, IngestError::EmptyInput { rejected: 0 }));
    }

    #[test]
    fn invalid_utf8_is_decode_error() {
        let err = parse_records(&[0xff, 0xfe, 0x00], RecordFormat::Csv).unwrap_err();
        assert!(matches!(err, IngestError::Decode(_)));
    }

    #[test]
    fn csv_rejects_row_missing_timestamp() {
        let payload = "timestamp,domain,title,url,language\n\
            20260401000000,a.com,One,http://a.com/1,English\n\
            20260401010000,b.com,Two,http://b.com/2,English\n\
            ,c.com,Three,http://c.com/3,English\n\
            20260401030000,d.com,Four,http://a.com/1,English\n";
        let parsed = parse_records(payload.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].row, 3);
        assert!(parsed.rejects[0].reason.contains("timestamp"));
        // the duplicated url survives parsing; dedup is a later step
        assert_eq!(parsed.records[0].url, parsed.records[2].url);
    }

    #[test]
    fn jsonl_accepts_seendate_alias_and_skips_blank_lines() {
        let payload = concat!(
            r#"{"seendate":"20260401T000000Z","domain":"a.com","title":"One","url":"http://a/1","language":"English"}"#,
            "\n\n",
            r#"{"timestamp":"garbage","domain":"a.com","title":"Two","url":"http://a/2","language":"English"}"#,
            "\n",
            "not json\n"
        );
        let parsed = parse_records(payload.as_bytes(), RecordFormat::Jsonl).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.rejects.len(), 2);
    }

    #[test]
    fn dedup_url_then_title() {
        let records = vec![
            rec("20260401000000", "Launch Today", "http://a/1"),
            rec("20260401010000", "launch   today", "http://b/2"),
            rec("20260401020000", "Other", "HTTP://A/1 "),
            rec("20260401030000", "Fresh", "http://c/3"),
        ];
        let out = deduplicate(records);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].title, "Launch Today");
        assert_eq!(out[1].title, "Fresh");
    }

    #[test]
    fn dedup_without_duplicates_is_identity() {
        let records = vec![
            rec("20260401000000", "A", "http://a/1"),
            rec("20260401010000", "B", "http://a/2"),
        ];
        assert_eq!(deduplicate(records.clone()), records);
    }

    #[test]
    fn dedup_250_with_two_duplicates_leaves_248() {
        let mut records: Vec<RawRecord> = (0..248)
            .map(|i| rec("20260401000000", &format!("title {i}"), &format!("http://x/{i}")))
            .collect();
        records.push(rec("20260402000000", "another", "http://x/7"));
        records.push(rec("20260402000000", "TITLE 9", "http://y/9"));
        assert_eq!(deduplicate(records).len(), 248);
    }

    #[test]
    fn language_filter() {
        let mut a = rec("20260401000000", "A", "http://a/1");
        a.language = "Spanish".into();
        let b = rec("20260401000000", "B", "http://a/2");
        let kept = filter_language(vec![a, b], "english");
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].title, "B");
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent(rows in proptest::collection::vec((0u8..6, 0u8..6), 0..40)) {
            let records: Vec<RawRecord> = rows
                .iter()
                .map(|(t, u)| rec("20260401000000", &format!("Title {t}"), &format!("http://u/{u}")))
                .collect();
            let once = deduplicate(records);
            let twice = deduplicate(once.clone());
            prop_assert_eq!(once, twice);
        }
    }
}
