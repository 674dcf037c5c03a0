//! The provider contract shared by fixture replay and live HTTP.

use chrono::NaiveDate;
use thiserror::Error;

use super::{DailyBar, FundamentalsSnapshot, NewsArticle, WeeklyWindow};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("inverted range: {start} > {end}")]
    InvertedRange { start: NaiveDate, end: NaiveDate },
    #[error("provider authentication failed: {0}")]
    Auth(String),
    #[error("provider transiently unreachable: {0}")]
    Transient(String),
    #[error("malformed provider payload: {0}")]
    MalformedPayload(String),
    #[error("data gap for {ticker} week of {window_start}: missing sessions {missing:?}")]
    DataGap {
        ticker: String,
        window_start: NaiveDate,
        missing: Vec<NaiveDate>,
    },
    #[error("bar for {ticker} on {date} out of order or duplicated")]
    UnorderedBars { ticker: String, date: NaiveDate },
    #[error("non-positive close {close} for {ticker} on {date}")]
    BadClose {
        ticker: String,
        date: NaiveDate,
        close: f64,
    },
    #[error("operation not supported by this provider: {0}")]
    Unsupported(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ProviderError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        ProviderError::Io {
            path: path.into(),
            source,
        }
    }

    /// Data gaps are skippable per week; everything else is a hard failure.
    pub fn is_data_gap(&self) -> bool {
        matches!(self, ProviderError::DataGap { .. })
    }
}

/// Source of news, daily bars, and fundamentals for one `(ticker, window)`.
///
/// Implementations must be deterministic under replay: the same fixture or
/// cache state yields identical results on every call.
pub trait MarketDataProvider: Send + Sync {
    /// All articles published inside `window`, ascending `(published_at, id)`.
    fn fetch_news(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<NewsArticle>, ProviderError>;

    /// One bar per trading session in `window`, ascending by date.
    /// Missing sessions are reported as [`ProviderError::DataGap`]; the
    /// caller decides whether to skip the week or abort the run.
    fn fetch_daily_bars(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<DailyBar>, ProviderError>;

    /// Quarterly snapshots known as of `window`, ascending by release date.
    /// An empty list is a valid outcome.
    fn fetch_fundamentals(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<FundamentalsSnapshot>, ProviderError>;
}

impl<P: MarketDataProvider + ?Sized> MarketDataProvider for Box<P> {
    fn fetch_news(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<NewsArticle>, ProviderError> {
        (**self).fetch_news(ticker, window)
    }

    fn fetch_daily_bars(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<DailyBar>, ProviderError> {
        (**self).fetch_daily_bars(ticker, window)
    }

    fn fetch_fundamentals(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<FundamentalsSnapshot>, ProviderError> {
        (**self).fetch_fundamentals(ticker, window)
    }
}

/// Validate bars against the window's expected sessions: ascending, unique,
/// in-window, positive closes, and covering every session in
/// `window.trading_dates`. An empty result is always a data gap.
pub fn validate_bars(
    ticker: &str,
    window: &WeeklyWindow,
    bars: &[DailyBar],
) -> Result<(), ProviderError> {
    let mut prev: Option<NaiveDate> = None;
    for bar in bars {
        if bar.close <= 0.0 {
            return Err(ProviderError::BadClose {
                ticker: ticker.to_string(),
                date: bar.date,
                close: bar.close,
            });
        }
        if !window.contains(bar.date) || prev.is_some_and(|p| bar.date <= p) {
            return Err(ProviderError::UnorderedBars {
                ticker: ticker.to_string(),
                date: bar.date,
            });
        }
        prev = Some(bar.date);
    }
    let missing: Vec<NaiveDate> = window
        .trading_dates
        .iter()
        .filter(|d| !bars.iter().any(|b| b.date == **d))
        .copied()
        .collect();
    if bars.is_empty() || !missing.is_empty() {
        return Err(ProviderError::DataGap {
            ticker: ticker.to_string(),
            window_start: window.start_date,
            missing,
        });
    }
    Ok(())
}
