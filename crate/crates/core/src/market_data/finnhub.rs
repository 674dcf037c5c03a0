//! Live HTTP provider speaking Finnhub-compatible REST shapes.
//!
//! Endpoints used:
//! - `GET {base}/company-news?symbol=&from=&to=` returning an array of
//!   `{id, datetime, headline, summary, ...}` objects (extra fields ignored).
//! - `GET {base}/stock/candle?symbol=&resolution=D&from=&to=` returning
//!   `{"s": "ok"|"no_data", "t": [unix..], "c": [close..]}`.
//!
//! Fundamentals have no stable Finnhub-compatible shape across plans, so this
//! provider returns an empty snapshot list; supply fundamentals through
//! fixture files or the cache when running live.

use chrono::{DateTime, TimeZone, Utc};
use serde::Deserialize;

use super::fixture::RawNewsRecord;
use super::provider::{validate_bars, MarketDataProvider, ProviderError};
use super::{DailyBar, FundamentalsSnapshot, NewsArticle, WeeklyWindow};

pub struct FinnhubProvider {
    base_url: String,
    token: String,
    agent: ureq::Agent,
}

impl FinnhubProvider {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>) -> Self {
        FinnhubProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: token.into(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    fn get_json<T: serde::de::DeserializeOwned>(&self, url: &str) -> Result<T, ProviderError> {
        let mut response = self
            .agent
            .get(url)
            .header("X-Finnhub-Token", &self.token)
            .call()
            .map_err(|e| match &e {
                ureq::Error::StatusCode(code) if *code == 401 || *code == 403 => {
                    ProviderError::Auth(format!("HTTP {code}"))
                }
                _ => ProviderError::Transient(e.to_string()),
            })?;
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| ProviderError::MalformedPayload(e.to_string()))
    }
}

#[derive(Deserialize)]
struct CandleResponse {
    s: String,
    #[serde(default)]
    t: Vec<i64>,
    #[serde(default)]
    c: Vec<f64>,
}

impl MarketDataProvider for FinnhubProvider {
    fn fetch_news(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<NewsArticle>, ProviderError> {
        let url = format!(
            "{}/company-news?symbol={}&from={}&to={}",
            self.base_url, ticker, window.start_date, window.end_date
        );
        let records: Vec<RawNewsRecord> = self.get_json(&url)?;
        let mut articles = Vec::with_capacity(records.len());
        for record in records {
            let article = record.into_article(ticker)?;
            // Providers occasionally return items just outside the requested
            // span; keep only what belongs to the window.
            if window.contains_ts(article.published_at) {
                articles.push(article);
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
        let from = Utc
            .from_utc_datetime(&window.start_date.and_hms_opt(0, 0, 0).unwrap())
            .timestamp();
        let to = Utc
            .from_utc_datetime(&window.end_date.and_hms_opt(23, 59, 59).unwrap())
            .timestamp();
        let url = format!(
            "{}/stock/candle?symbol={}&resolution=D&from={}&to={}",
            self.base_url, ticker, from, to
        );
        let candles: CandleResponse = self.get_json(&url)?;
        if candles.s != "ok" {
            return Err(ProviderError::DataGap {
                ticker: ticker.to_string(),
                window_start: window.start_date,
                missing: window.trading_dates.clone(),
            });
        }
        if candles.t.len() != candles.c.len() {
            return Err(ProviderError::MalformedPayload(format!(
                "candle arrays disagree: {} timestamps vs {} closes",
                candles.t.len(),
                candles.c.len()
            )));
        }
        let mut bars = Vec::with_capacity(candles.t.len());
        for (ts, close) in candles.t.iter().zip(candles.c.iter()) {
            let when = DateTime::<Utc>::from_timestamp(*ts, 0).ok_or_else(|| {
                ProviderError::MalformedPayload(format!("bad candle timestamp {ts}"))
            })?;
            bars.push(DailyBar {
                ticker: ticker.to_string(),
                date: when.date_naive(),
                close: *close,
            });
        }
        bars.sort_by_key(|b| b.date);
        validate_bars(ticker, window, &bars)?;
        Ok(bars)
    }

    fn fetch_fundamentals(
        &self,
        _ticker: &str,
        _window: &WeeklyWindow,
    ) -> Result<Vec<FundamentalsSnapshot>, ProviderError> {
        Ok(Vec::new())
    }
}
