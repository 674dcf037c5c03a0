//! Fixture directory replay end to end: layout, cache interplay, and
//! determinism across independent provider instances.

use chrono::Weekday;
use newscast::labeling::{daily_returns, movement_label, weekly_return};
use newscast::market_data::{
    fundamentals_for_week, window_weeks, CachedProvider, FixtureProvider, MarketDataProvider,
    TradingCalendar, WeeklyWindow,
};
use std::path::Path;

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

fn lay_down_fixture(root: &Path) {
    let week = root.join("BA/2024-06-16");
    write(
        &week.join("news.jsonl"),
        concat!(
            "{\"id\": 101, \"datetime\": 1718616600, \"headline\": \"Deliveries resume\", \"summary\": \"Jet deliveries resume after pause.\"}\n",
            "{\"id\": 102, \"datetime\": 1718703000, \"headline\": \"Union vote scheduled\", \"summary\": \"Factory union schedules strike vote.\"}\n",
            "{\"id\": 103, \"datetime\": 1718789400, \"headline\": \"Deliveries climb again\", \"summary\": \"Second delivery batch this week.\"}\n",
        ),
    );
    write(
        &week.join("bars.csv"),
        "date,close\n2024-06-17,178.20\n2024-06-18,179.10\n2024-06-19,181.00\n2024-06-20,180.40\n2024-06-21,182.30\n",
    );
    write(
        &week.join("fundamentals.json"),
        r#"[{"report_release_date":"2024-04-24","metrics":{"eps":-0.56,"revenue_billions":16.57}}]"#,
    );
    // prior week carries bars only
    write(
        &root.join("BA/2024-06-09/bars.csv"),
        "date,close\n2024-06-10,176.00\n2024-06-11,176.50\n2024-06-12,177.20\n2024-06-13,176.80\n2024-06-14,177.50\n",
    );
}

fn windows() -> (WeeklyWindow, WeeklyWindow) {
    let cal = TradingCalendar::default();
    let mut ws = window_weeks(
        "2024-06-09".parse().unwrap(),
        "2024-06-22".parse().unwrap(),
        Weekday::Sun,
        &cal,
    )
    .unwrap();
    let observed = ws.remove(1);
    let prior = ws.remove(0);
    (prior, observed)
}

#[test]
fn fixture_week_flows_into_labels() {
    let dir = tempfile::tempdir().unwrap();
    lay_down_fixture(dir.path());
    let provider = FixtureProvider::new(dir.path());
    let (prior, observed) = windows();

    let news = provider.fetch_news("BA", &observed).unwrap();
    assert_eq!(news.len(), 3);
    assert_eq!(news[0].id, "101");

    let prior_bars = provider.fetch_daily_bars("BA", &prior).unwrap();
    let bars = provider.fetch_daily_bars("BA", &observed).unwrap();
    let prior_close = prior_bars.last().unwrap().close;
    let series = daily_returns(&bars, prior_close).unwrap();
    assert_eq!(series.returns.len(), 5);

    let weekly = weekly_return(prior_close, bars.last().unwrap().close).unwrap();
    // 177.50 -> 182.30 is +2.70%, band three upward
    assert_eq!(movement_label(weekly).unwrap().to_string(), "U3");

    let snapshots = provider.fetch_fundamentals("BA", &observed).unwrap();
    let snapshot = fundamentals_for_week(&observed, &snapshots).unwrap();
    assert_eq!(snapshot.report_release_date.to_string(), "2024-04-24");
}

#[test]
fn two_reads_and_a_cache_copy_agree() {
    let dir = tempfile::tempdir().unwrap();
    lay_down_fixture(dir.path());
    let (_, observed) = windows();

    let first = FixtureProvider::new(dir.path())
        .fetch_news("BA", &observed)
        .unwrap();
    let second = FixtureProvider::new(dir.path())
        .fetch_news("BA", &observed)
        .unwrap();
    assert_eq!(first, second);

    // a cache populated from the fixture serves identical articles, and the
    // cached file itself replays as a fixture
    let cache_dir = tempfile::tempdir().unwrap();
    let cached = CachedProvider::new(FixtureProvider::new(dir.path()), cache_dir.path());
    assert_eq!(cached.fetch_news("BA", &observed).unwrap(), first);
    let from_cache_as_fixture = FixtureProvider::new(cache_dir.path())
        .fetch_news("BA", &observed)
        .unwrap();
    assert_eq!(from_cache_as_fixture, first);
    assert_eq!(
        cached.fetch_daily_bars("BA", &observed).unwrap(),
        FixtureProvider::new(dir.path())
            .fetch_daily_bars("BA", &observed)
            .unwrap()
    );
}
