//! Market data: company news, daily closes, quarterly fundamentals, and the
//! weekly windows the pipeline iterates over.
//!
//! Data access goes through the [`MarketDataProvider`] contract. Two
//! implementations ship here: [`FixtureProvider`] replays a directory of
//! recorded files (the layout tests and CI run against), and
//! [`FinnhubProvider`] speaks the Finnhub-compatible REST shapes for company
//! news and daily candles. [`CachedProvider`] wraps either one with an
//! on-disk cache in the same file layout as fixtures, so a populated cache is
//! itself a valid fixture directory.
//!
//! Fixture/cache layout, one directory per `(ticker, window)`:
//!
//! ```text
//! <root>/<TICKER>/<window-start>/news.jsonl      # one JSON object per line:
//!                                                #   {"id":..,"datetime":<unix secs>,"headline":..,"summary":..}
//! <root>/<TICKER>/<window-start>/bars.csv        # header `date,close`, ISO dates, ascending
//! <root>/<TICKER>/<window-start>/fundamentals.json  # JSON array of snapshots (optional file)
//! ```
//!
//! A missing `news.jsonl` or `fundamentals.json` means "no data" (valid);
//! a missing or empty `bars.csv` is a data gap.

mod cache;
mod finnhub;
mod fixture;
mod provider;

pub use cache::CachedProvider;
pub use finnhub::FinnhubProvider;
pub use fixture::{FixtureProvider, RawNewsRecord};
pub use provider::{validate_bars, MarketDataProvider, ProviderError};

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Days, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize};

/// One news item: headline plus summary, the clustering input unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub ticker: String,
    pub published_at: DateTime<Utc>,
    pub headline: String,
    pub summary: String,
}

impl NewsArticle {
    /// Text handed to the embedder: headline and summary joined by a space.
    pub fn full_text(&self) -> String {
        format!("{} {}", self.headline, self.summary)
    }

    /// Deterministic ordering key used for tie-breaking everywhere.
    pub fn sort_key(&self) -> (DateTime<Utc>, &str) {
        (self.published_at, &self.id)
    }
}

/// Per-trading-day close price for a ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub ticker: String,
    pub date: NaiveDate,
    pub close: f64,
}

/// One quarterly report: release date plus named numeric metrics.
/// `BTreeMap` keeps metric ordering deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalsSnapshot {
    pub ticker: String,
    pub report_release_date: NaiveDate,
    pub metrics: BTreeMap<String, f64>,
}

/// A 7-day calendar window with its expected trading sessions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyWindow {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    /// Expected trading sessions inside the window, ascending. Derived from
    /// the calendar handed to [`window_weeks`]; bars are checked against it.
    pub trading_dates: Vec<NaiveDate>,
}

impl WeeklyWindow {
    /// True if `date` falls inside `[start_date, end_date]`.
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start_date && date <= self.end_date
    }

    /// True if `ts` falls inside the window (UTC calendar date).
    pub fn contains_ts(&self, ts: DateTime<Utc>) -> bool {
        self.contains(ts.date_naive())
    }

    /// The window covering the following calendar week under the same calendar.
    pub fn next(&self, calendar: &TradingCalendar) -> WeeklyWindow {
        let start = self.start_date + Days::new(7);
        make_window(start, calendar)
    }

    /// The window covering the preceding calendar week under the same calendar.
    pub fn prev(&self, calendar: &TradingCalendar) -> WeeklyWindow {
        let start = self.start_date - Days::new(7);
        make_window(start, calendar)
    }
}

/// Which weekdays trade, minus explicit holiday dates. The default calendar
/// is Monday through Friday with no holidays; pass holidays in when replaying
/// weeks that contain exchange closures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TradingCalendar {
    pub holidays: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn with_holidays(holidays: Vec<NaiveDate>) -> Self {
        TradingCalendar { holidays }
    }

    /// True if `date` is an expected trading session.
    pub fn is_session(&self, date: NaiveDate) -> bool {
        let wd = date.weekday();
        wd != Weekday::Sat && wd != Weekday::Sun && !self.holidays.contains(&date)
    }
}

fn make_window(start: NaiveDate, calendar: &TradingCalendar) -> WeeklyWindow {
    let end = start + Days::new(6);
    let trading_dates = start
        .iter_days()
        .take(7)
        .filter(|d| calendar.is_session(*d))
        .collect();
    WeeklyWindow {
        start_date: start,
        end_date: end,
        trading_dates,
    }
}

/// Partition `[range_start, range_end]` into consecutive non-overlapping
/// 7-day windows aligned to `week_start`. The first window begins at the
/// first `week_start` weekday at or after `range_start`; a partial trailing
/// window is dropped.
pub fn window_weeks(
    range_start: NaiveDate,
    range_end: NaiveDate,
    week_start: Weekday,
    calendar: &TradingCalendar,
) -> Result<Vec<WeeklyWindow>, ProviderError> {
    if range_start > range_end {
        return Err(ProviderError::InvertedRange {
            start: range_start,
            end: range_end,
        });
    }
    let mut start = range_start;
    while start.weekday() != week_start {
        start = start + Days::new(1);
    }
    let mut windows = Vec::new();
    while start + Days::new(6) <= range_end {
        windows.push(make_window(start, calendar));
        start = start + Days::new(7);
    }
    Ok(windows)
}

/// Latest snapshot released at least 21 calendar days before the window
/// opens, if any. `snapshots` must be sorted ascending by release date.
pub fn fundamentals_for_week<'a>(
    window: &WeeklyWindow,
    snapshots: &'a [FundamentalsSnapshot],
) -> Option<&'a FundamentalsSnapshot> {
    snapshots
        .iter()
        .rev()
        .find(|s| s.report_release_date + Days::new(21) <= window.start_date)
}
