//! Fixture directory replay and the record formats shared with the cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::provider::{validate_bars, MarketDataProvider, ProviderError};
use super::{DailyBar, FundamentalsSnapshot, NewsArticle, WeeklyWindow};

/// Wire shape of one `news.jsonl` line, Finnhub company-news compatible:
/// `datetime` is unix seconds, `id` may arrive as a number or a string.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawNewsRecord {
    #[serde(deserialize_with = "deserialize_id")]
    pub id: String,
    pub datetime: i64,
    pub headline: String,
    pub summary: String,
}

fn deserialize_id<'de, D>(deserializer: D) -> Result<String, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Num(i64),
        Text(String),
    }
    Ok(match Id::deserialize(deserializer)? {
        Id::Num(n) => n.to_string(),
        Id::Text(s) => s,
    })
}

impl RawNewsRecord {
    pub fn into_article(self, ticker: &str) -> Result<NewsArticle, ProviderError> {
        let published_at = DateTime::<Utc>::from_timestamp(self.datetime, 0).ok_or_else(|| {
            ProviderError::MalformedPayload(format!("bad datetime {}", self.datetime))
        })?;
        if self.headline.trim().is_empty() {
            return Err(ProviderError::MalformedPayload(format!(
                "empty headline for article {}",
                self.id
            )));
        }
        Ok(NewsArticle {
            id: self.id,
            ticker: ticker.to_string(),
            published_at,
            headline: self.headline,
            summary: self.summary,
        })
    }

    pub fn from_article(article: &NewsArticle) -> RawNewsRecord {
        RawNewsRecord {
            id: article.id.clone(),
            datetime: article.published_at.timestamp(),
            headline: article.headline.clone(),
            summary: article.summary.clone(),
        }
    }
}

pub(crate) fn window_dir(root: &Path, ticker: &str, window: &WeeklyWindow) -> PathBuf {
    root.join(ticker).join(window.start_date.to_string())
}

pub(crate) fn read_news_file(
    path: &Path,
    ticker: &str,
) -> Result<Vec<NewsArticle>, ProviderError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text =
        fs::read_to_string(path).map_err(|e| ProviderError::io(path.display().to_string(), e))?;
    let mut articles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RawNewsRecord = serde_json::from_str(line).map_err(|e| {
            ProviderError::MalformedPayload(format!(
                "{}:{}: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        articles.push(record.into_article(ticker)?);
    }
    Ok(articles)
}

pub(crate) fn write_news_file(path: &Path, articles: &[NewsArticle]) -> Result<(), ProviderError> {
    let mut out = String::new();
    for article in articles {
        let record = RawNewsRecord::from_article(article);
        out.push_str(&serde_json::to_string(&record).expect("news record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub(crate) fn read_bars_file(path: &Path, ticker: &str) -> Result<Vec<DailyBar>, ProviderError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| ProviderError::MalformedPayload(format!("{}: {e}", path.display())))?;
    #[derive(Deserialize)]
    struct Row {
        date: chrono::NaiveDate,
        close: f64,
    }
    let mut bars = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row =
            row.map_err(|e| ProviderError::MalformedPayload(format!("{}: {e}", path.display())))?;
        bars.push(DailyBar {
            ticker: ticker.to_string(),
            date: row.date,
            close: row.close,
        });
    }
    Ok(bars)
}

pub(crate) fn write_bars_file(path: &Path, bars: &[DailyBar]) -> Result<(), ProviderError> {
    let mut out = String::from("date,close\n");
    for bar in bars {
        out.push_str(&format!("{},{}\n", bar.date, bar.close));
    }
    write_atomic(path, out.as_bytes())
}

pub(crate) fn read_fundamentals_file(
    path: &Path,
    ticker: &str,
) -> Result<Vec<FundamentalsSnapshot>, ProviderError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text =
        fs::read_to_string(path).map_err(|e| ProviderError::io(path.display().to_string(), e))?;
    #[derive(Deserialize)]
    struct RawSnapshot {
        report_release_date: chrono::NaiveDate,
        metrics: std::collections::BTreeMap<String, f64>,
    }
    let raw: Vec<RawSnapshot> = serde_json::from_str(&text)
        .map_err(|e| ProviderError::MalformedPayload(format!("{}: {e}", path.display())))?;
    let mut snapshots: Vec<FundamentalsSnapshot> = raw
        .into_iter()
        .map(|s| FundamentalsSnapshot {
            ticker: ticker.to_string(),
            report_release_date: s.report_release_date,
            metrics: s.metrics,
        })
        .collect();
    snapshots.sort_by_key(|s| s.report_release_date);
    Ok(snapshots)
}

pub(crate) fn write_fundamentals_file(
    path: &Path,
    snapshots: &[FundamentalsSnapshot],
) -> Result<(), ProviderError> {
    #[derive(Serialize)]
    struct RawSnapshot<'a> {
        report_release_date: chrono::NaiveDate,
        metrics: &'a std::collections::BTreeMap<String, f64>,
    }
    let raw: Vec<RawSnapshot> = snapshots
        .iter()
        .map(|s| RawSnapshot {
            report_release_date: s.report_release_date,
            metrics: &s.metrics,
        })
        .collect();
    let text = serde_json::to_string_pretty(&raw).expect("snapshots serialize");
    write_atomic(path, text.as_bytes())
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write-temp-then-rename so concurrent readers never observe a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProviderError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| ProviderError::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| ProviderError::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| ProviderError::io(path.display().to_string(), e))
}

/// Replays a recorded fixture directory. Missing `news.jsonl` or
/// `fundamentals.json` files mean "no data for the week"; bars must cover
/// every expected session.
pub struct FixtureProvider {
    root: PathBuf,
}

impl FixtureProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureProvider { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl MarketDataProvider for FixtureProvider {
    fn fetch_news(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<NewsArticle>, ProviderError> {
        let path = window_dir(&self.root, ticker, window).join("news.jsonl");
        let mut articles = read_news_file(&path, ticker)?;
        for article in &articles {
            if !window.contains_ts(article.published_at) {
                return Err(ProviderError::MalformedPayload(format!(
                    "article {} published {} outside window {}..{}",
                    article.id, article.published_at, window.start_date, window.end_date
                )));
            }
        }
        articles.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(articles)
    }

    fn fetch_daily_bars(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<DailyBar>, ProviderError> {
        let path = window_dir(&self.root, ticker, window).join("bars.csv");
        let mut bars = read_bars_file(&path, ticker)?;
        bars.sort_by_key(|b| b.date);
        validate_bars(ticker, window, &bars)?;
        Ok(bars)
    }

    fn fetch_fundamentals(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<FundamentalsSnapshot>, ProviderError> {
        let path = window_dir(&self.root, ticker, window).join("fundamentals.json");
        read_fundamentals_file(&path, ticker)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{window_weeks, TradingCalendar};
    use chrono::Weekday;

    fn window() -> WeeklyWindow {
        window_weeks(
            "2024-06-16".parse().unwrap(),
            "2024-06-22".parse().unwrap(),
            Weekday::Sun,
            &TradingCalendar::default(),
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn missing_news_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let provider = FixtureProvider::new(dir.path());
        let articles = provider.fetch_news("BA", &window()).unwrap();
        assert!(articles.is_empty());
    }

    #[test]
    fn news_round_trips_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let w = window();
        let path = window_dir(dir.path(), "BA", &w).join("news.jsonl");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        // ids out of order on disk, with a numeric id thrown in
        std::fs::write(
            &path,
            concat!(
                "{\"id\": 42, \"datetime\": 1718667000, \"headline\": \"Deliveries resume\", \"summary\": \"Jet deliveries resume.\"}\n",
                "{\"id\": \"a1\", \"datetime\": 1718580600, \"headline\": \"Supplier update\", \"summary\": \"Fuselage supplier update.\"}\n",
            ),
        )
        .unwrap();
        let provider = FixtureProvider::new(dir.path());
        let articles = provider.fetch_news("BA", &w).unwrap();
        assert_eq!(articles.len(), 2);
        assert_eq!(articles[0].id, "a1");
        assert_eq!(articles[1].id, "42");
        assert!(articles.windows(2).all(|p| p[0].published_at <= p[1].published_at));
    }

    #[test]
    fn article_outside_window_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let w = window();
        let path = window_dir(dir.path(), "BA", &w).join("news.jsonl");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        // 2024-07-01, a week after the window closes
        std::fs::write(
            &path,
            "{\"id\": 1, \"datetime\": 1719828000, \"headline\": \"h\", \"summary\": \"s\"}\n",
        )
        .unwrap();
        let provider = FixtureProvider::new(dir.path());
        assert!(matches!(
            provider.fetch_news("BA", &w),
            Err(ProviderError::MalformedPayload(_))
        ));
    }

    #[test]
    fn empty_bars_fixture_is_a_data_gap() {
        let dir = tempfile::tempdir().unwrap();
        let provider = FixtureProvider::new(dir.path());
        let err = provider.fetch_daily_bars("BA", &window()).unwrap_err();
        assert!(err.is_data_gap());
    }

    #[test]
    fn bars_fixture_replays_ascending() {
        let dir = tempfile::tempdir().unwrap();
        let w = window();
        let path = window_dir(dir.path(), "BA", &w).join("bars.csv");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(
            &path,
            "date,close\n2024-06-17,178.2\n2024-06-18,179.1\n2024-06-19,181.0\n2024-06-20,180.4\n2024-06-21,182.3\n",
        )
        .unwrap();
        let provider = FixtureProvider::new(dir.path());
        let bars = provider.fetch_daily_bars("BA", &w).unwrap();
        assert_eq!(bars.len(), 5);
        assert!(bars.windows(2).all(|p| p[0].date < p[1].date));
    }

    #[test]
    fn fundamentals_fixture_parses_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let w = window();
        let path = window_dir(dir.path(), "BA", &w).join("fundamentals.json");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(
            &path,
            r#"[{"report_release_date":"2024-04-24","metrics":{"revenue":16.6,"eps":-0.56}}]"#,
        )
        .unwrap();
        let provider = FixtureProvider::new(dir.path());
        let snaps = provider.fetch_fundamentals("BA", &w).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].metrics["revenue"], 16.6);
        // absent file: valid, empty
        assert!(provider.fetch_fundamentals("XX", &w).unwrap().is_empty());
    }
}
