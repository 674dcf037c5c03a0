//! Deterministic fixture corpus for end-to-end tests.
//!
//! Articles are built from synthetic token pools so the hashed-token
//! embedder sees real similarity structure: "tight" stories share 6 of 7
//! tokens per article (pairwise cosine ~0.86, high cohesion), "loose"
//! stories share 4 of 7 (~0.57, clusters but low cohesion), singletons share
//! nothing. Bars follow a smooth positive sinusoid so weekly labels vary.
//! The BA ticker carries a fixed nineteen-week news count profile.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use newscast::dataset::InstructionExample;
use newscast::labeling::{Direction, MovementLabel};
use newscast_cli::PredictionRecord;

/// Recorded weekly news counts for the BA test range, keyed by window start.
pub const BA_WEEK_COUNTS: [(&str, usize); 19] = [
    ("2024-05-26", 74),
    ("2024-06-02", 76),
    ("2024-06-09", 77),
    ("2024-06-16", 118),
    ("2024-06-23", 135),
    ("2024-06-30", 110),
    ("2024-07-07", 87),
    ("2024-07-14", 69),
    ("2024-07-21", 102),
    ("2024-07-28", 109),
    ("2024-08-04", 70),
    ("2024-08-11", 68),
    ("2024-08-18", 63),
    ("2024-08-25", 67),
    ("2024-09-01", 78),
    ("2024-09-08", 139),
    ("2024-09-15", 124),
    ("2024-09-22", 120),
    ("2024-09-29", 84),
];

pub const RANGE_START: &str = "2024-05-26";
pub const RANGE_END: &str = "2024-10-05";

fn fnv(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// Input windows (Sunday-aligned) plus one predecessor and one successor.
fn all_window_starts() -> Vec<NaiveDate> {
    let mut starts = vec![d(RANGE_START) - Days::new(7)];
    let mut cursor = d(RANGE_START);
    while cursor + Days::new(6) <= d(RANGE_END) {
        starts.push(cursor);
        cursor = cursor + Days::new(7);
    }
    starts.push(cursor);
    starts
}

fn close_for(ticker: &str, date: NaiveDate) -> f64 {
    let base = 80.0 + (fnv(ticker.as_bytes()) % 160) as f64;
    let day = (date - d("2024-01-01")).num_days() as f64;
    let phase = (fnv(ticker.as_bytes()) % 7) as f64;
    base * (1.0 + 0.18 * (0.21 * day + phase).sin() + 0.07 * (0.047 * day).sin())
}

fn news_count(ticker: &str, window_start: NaiveDate) -> usize {
    if ticker == "BA" {
        if let Some((_, count)) = BA_WEEK_COUNTS
            .iter()
            .find(|(start, _)| d(start) == window_start)
        {
            return *count;
        }
    }
    30 + (fnv(format!("{ticker}-{window_start}").as_bytes()) % 50) as usize
}

fn write_week_news(dir: &Path, ticker: &str, window_start: NaiveDate, count: usize) {
    // stories cycle through (size, tight) shapes until the count is spent
    const SHAPES: [(usize, bool); 7] = [
        (6, true),
        (5, false),
        (4, true),
        (4, false),
        (3, true),
        (2, false),
        (2, true),
    ];
    let week_tag = fnv(format!("{ticker}/{window_start}").as_bytes());
    let mut lines = String::new();
    let mut seq = 0usize;
    let mut story = 0usize;
    'outer: loop {
        for (size, tight) in SHAPES {
            if seq >= count {
                break 'outer;
            }
            let size = size.min(count - seq);
            for member in 0..size {
                let mut tokens: Vec<String> = Vec::with_capacity(7);
                if size == 1 {
                    for k in 0..7 {
                        tokens.push(format!("solo{week_tag:x}n{seq}k{k}"));
                    }
                } else if tight {
                    for k in 0..6 {
                        tokens.push(format!("story{week_tag:x}s{story}k{k}"));
                    }
                    tokens.push(format!("story{week_tag:x}s{story}v{}", member % 3));
                } else {
                    for k in 0..4 {
                        tokens.push(format!("story{week_tag:x}s{story}k{k}"));
                    }
                    for k in 0..3 {
                        tokens.push(format!("loose{week_tag:x}s{story}m{member}k{k}"));
                    }
                }
                let headline = tokens[..4].join(" ");
                let summary = tokens[4..].join(" ");
                let day = (seq * 3) % 7;
                let published = window_start + Days::new(day as u64);
                let ts = published.and_hms_opt(9 + (seq % 8) as u32, (seq * 13 % 60) as u32, 0)
                    .unwrap()
                    .and_utc()
                    .timestamp();
                writeln!(
                    lines,
                    "{{\"id\": \"{ticker}-{window_start}-{seq:03}\", \"datetime\": {ts}, \"headline\": \"{headline}\", \"summary\": \"{summary}\"}}"
                )
                .unwrap();
                seq += 1;
            }
            story += 1;
        }
    }
    std::fs::write(dir.join("news.jsonl"), lines).unwrap();
}

fn write_week_bars(dir: &Path, ticker: &str, window_start: NaiveDate) {
    let mut csv = String::from("date,close\n");
    for offset in 0..7u64 {
        let date = window_start + Days::new(offset);
        let wd = date.weekday();
        if wd == Weekday::Sat || wd == Weekday::Sun {
            continue;
        }
        writeln!(csv, "{date},{:.2}", close_for(ticker, date)).unwrap();
    }
    std::fs::write(dir.join("bars.csv"), csv).unwrap();
}

fn write_week_fundamentals(dir: &Path, window_start: NaiveDate) {
    let releases = [d("2024-04-24"), d("2024-07-24")];
    let snaps: Vec<String> = releases
        .iter()
        .filter(|release| **release <= window_start)
        .map(|release| {
            format!(
                "{{\"report_release_date\":\"{release}\",\"metrics\":{{\"eps\":{:.2},\"revenue_billions\":{:.2}}}}}",
                -0.5 + release.month() as f64 * 0.1,
                15.0 + release.month() as f64
            )
        })
        .collect();
    std::fs::write(dir.join("fundamentals.json"), format!("[{}]", snaps.join(","))).unwrap();
}

/// Lay down the full fixture tree for `tickers` under `root`.
pub fn write_corpus(root: &Path, tickers: &[&str]) {
    let starts = all_window_starts();
    let input_range = d(RANGE_START)..=d(RANGE_END);
    for ticker in tickers {
        for (idx, start) in starts.iter().enumerate() {
            let dir = root.join(ticker).join(start.to_string());
            std::fs::create_dir_all(&dir).unwrap();
            write_week_bars(&dir, ticker, *start);
            // predecessor and successor windows carry bars only
            let is_input = idx > 0 && idx < starts.len() - 1 && input_range.contains(start);
            if is_input {
                write_week_news(&dir, ticker, *start, news_count(ticker, *start));
                write_week_fundamentals(&dir, *start);
            }
        }
    }
}

/// A ready-to-load config TOML pointing at the corpus.
pub fn config_toml(
    fixtures: &Path,
    output_dir: &Path,
    cache_dir: &Path,
    mode: &str,
    teacher_provider: &str,
    cassettes: &Path,
    tickers: &[&str],
) -> String {
    let ticker_list = tickers
        .iter()
        .map(|t| format!("\"{t}\""))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        r#"
[run]
tickers = [{ticker_list}]
start_date = "{RANGE_START}"
end_date = "{RANGE_END}"
week_start = "sunday"
mode = "{mode}"
output_dir = "{output}"
token_budget = 8000

[market_data]
fixture_dir = "{fixtures}"
cache_dir = "{cache}"

[embedding]
provider = "hashed"
dim = 384

[teacher]
provider = "{teacher_provider}"
cassette_dir = "{cassettes}"
max_in_flight = 4

[companies]
BA = "The Boeing Company designs and manufactures commercial jetliners, defense products, and space systems."
"#,
        fixtures = fixtures.display(),
        output = output_dir.display(),
        cache = cache_dir.display(),
        cassettes = cassettes.display(),
    )
}

/// Prediction records derived from a dataset export: example `i` keeps the
/// actual direction iff `correct(i)`, otherwise the direction flips.
pub fn predictions_with_correct_indices(
    examples: &[InstructionExample],
    correct: impl Fn(usize) -> bool,
) -> Vec<PredictionRecord> {
    examples
        .iter()
        .enumerate()
        .map(|(i, example)| {
            let actual = example.meta.actual_label;
            let predicted = if correct(i) {
                actual
            } else {
                MovementLabel {
                    direction: match actual.direction {
                        Direction::Up => Direction::Down,
                        Direction::Down => Direction::Up,
                    },
                    band: actual.band,
                }
            };
            PredictionRecord {
                ticker: example.meta.ticker.clone(),
                window_start: example.meta.window_start,
                text: prediction_text(predicted),
            }
        })
        .collect()
}

/// The first `correct` examples keep the actual direction, the rest flip it.
pub fn predictions_with_correct_directions(
    examples: &[InstructionExample],
    correct: usize,
) -> Vec<PredictionRecord> {
    predictions_with_correct_indices(examples, |i| i < correct)
}

/// A schema-valid prediction body carrying the given label.
pub fn prediction_text(label: MovementLabel) -> String {
    format!(
        "[Positive Developments]\n- Wide coverage of the delivery story\n- Order intake held up\n\n[Potential Concerns]\n- Audit overhang\n- Supplier slippage\n\n[Prediction & Analysis]\nWeighing the long-term impact of the broadest topic against short-term noise, expecting {label}."
    )
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) {
    let mut text = String::new();
    for record in records {
        text.push_str(&serde_json::to_string(record).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
