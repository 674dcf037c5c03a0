//! On-disk cache wrapper keyed by `(ticker, window)`.
//!
//! The cache uses the exact fixture file layout, so a populated cache
//! directory can be copied straight into a test as a fixture. Writes are
//! write-temp-then-rename per key; reads are freely concurrent.

use std::path::{Path, PathBuf};

use super::fixture::{
    read_bars_file, read_fundamentals_file, read_news_file, window_dir, write_bars_file,
    write_fundamentals_file, write_news_file,
};
use super::provider::{MarketDataProvider, ProviderError};
use super::{DailyBar, FundamentalsSnapshot, NewsArticle, WeeklyWindow};

pub struct CachedProvider<P> {
    inner: P,
    cache_root: PathBuf,
}

impl<P: MarketDataProvider> CachedProvider<P> {
    pub fn new(inner: P, cache_root: impl Into<PathBuf>) -> Self {
        CachedProvider {
            inner,
            cache_root: cache_root.into(),
        }
    }

    pub fn cache_root(&self) -> &Path {
        &self.cache_root
    }

    fn dir(&self, ticker: &str, window: &WeeklyWindow) -> PathBuf {
        window_dir(&self.cache_root, ticker, window)
    }
}

impl<P: MarketDataProvider> MarketDataProvider for CachedProvider<P> {
    fn fetch_news(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<NewsArticle>, ProviderError> {
        let path = self.dir(ticker, window).join("news.jsonl");
        if path.exists() {
            return read_news_file(&path, ticker);
        }
        let articles = self.inner.fetch_news(ticker, window)?;
        write_news_file(&path, &articles)?;
        Ok(articles)
    }

    fn fetch_daily_bars(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<DailyBar>, ProviderError> {
        let path = self.dir(ticker, window).join("bars.csv");
        if path.exists() {
            return read_bars_file(&path, ticker);
        }
        let bars = self.inner.fetch_daily_bars(ticker, window)?;
        write_bars_file(&path, &bars)?;
        Ok(bars)
    }

    fn fetch_fundamentals(
        &self,
        ticker: &str,
        window: &WeeklyWindow,
    ) -> Result<Vec<FundamentalsSnapshot>, ProviderError> {
        let path = self.dir(ticker, window).join("fundamentals.json");
        if path.exists() {
            return read_fundamentals_file(&path, ticker);
        }
        let snapshots = self.inner.fetch_fundamentals(ticker, window)?;
        write_fundamentals_file(&path, &snapshots)?;
        Ok(snapshots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{window_weeks, TradingCalendar};
    use chrono::{TimeZone, Utc, Weekday};
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Counts provider hits so tests can prove cache short-circuiting.
    struct CountingProvider {
        news_calls: AtomicUsize,
    }

    impl MarketDataProvider for CountingProvider {
        fn fetch_news(
            &self,
            ticker: &str,
            window: &WeeklyWindow,
        ) -> Result<Vec<NewsArticle>, ProviderError> {
            self.news_calls.fetch_add(1, Ordering::SeqCst);
            Ok(vec![
                NewsArticle {
                    id: "n1".into(),
                    ticker: ticker.into(),
                    published_at: Utc
                        .with_ymd_and_hms(2024, 6, 17, 12, 0, 0)
                        .unwrap(),
                    headline: "Deliveries resume".into(),
                    summary: "Jet deliveries resume after pause.".into(),
                },
                NewsArticle {
                    id: "n2".into(),
                    ticker: ticker.into(),
                    published_at: Utc
                        .with_ymd_and_hms(2024, 6, 18, 9, 30, 0)
                        .unwrap(),
                    headline: "Union vote".into(),
                    summary: format!("Workers vote in week of {}", window.start_date),
                },
            ])
        }

        fn fetch_daily_bars(
            &self,
            _ticker: &str,
            _window: &WeeklyWindow,
        ) -> Result<Vec<DailyBar>, ProviderError> {
            unimplemented!()
        }

        fn fetch_fundamentals(
            &self,
            _ticker: &str,
            _window: &WeeklyWindow,
        ) -> Result<Vec<FundamentalsSnapshot>, ProviderError> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn news_cache_round_trip_is_identical_and_hits_once() {
        let dir = tempfile::tempdir().unwrap();
        let window = window_weeks(
            "2024-06-16".parse().unwrap(),
            "2024-06-22".parse().unwrap(),
            Weekday::Sun,
            &TradingCalendar::default(),
        )
        .unwrap()
        .remove(0);
        let cached = CachedProvider::new(
            CountingProvider {
                news_calls: AtomicUsize::new(0),
            },
            dir.path(),
        );
        let first = cached.fetch_news("BA", &window).unwrap();
        let file = dir.path().join("BA/2024-06-16/news.jsonl");
        let bytes_after_first = std::fs::read(&file).unwrap();
        let second = cached.fetch_news("BA", &window).unwrap();
        assert_eq!(first, second);
        assert_eq!(std::fs::read(&file).unwrap(), bytes_after_first);
        assert_eq!(cached.inner.news_calls.load(Ordering::SeqCst), 1);
    }
}
