//! Golden-file checks: a fixed bundle renders to byte-identical prompt text.
//!
//! Regenerate after an intentional template change with:
//! `GOLDEN_WRITE=1 cargo test -p newscast --test prompt_golden`

use chrono::{TimeZone, Utc, Weekday};
use newscast::clustering::{CohesionClass, SelectedTopic};
use newscast::labeling::MovementLabel;
use newscast::market_data::{
    window_weeks, FundamentalsSnapshot, NewsArticle, TradingCalendar, WeeklyWindow,
};
use newscast::prompting::{
    render, HeuristicTokenEstimator, NewsBlock, PriceRow, PromptBundle, PromptMode, TemplateSet,
};
use std::path::Path;

fn target_window() -> WeeklyWindow {
    window_weeks(
        "2024-06-23".parse().unwrap(),
        "2024-06-29".parse().unwrap(),
        Weekday::Sun,
        &TradingCalendar::default(),
    )
    .unwrap()
    .remove(0)
}

fn article(id: &str, day: u32, hour: u32, headline: &str, summary: &str) -> NewsArticle {
    NewsArticle {
        id: id.to_string(),
        ticker: "BA".to_string(),
        published_at: Utc.with_ymd_and_hms(2024, 6, day, hour, 0, 0).unwrap(),
        headline: headline.to_string(),
        summary: summary.to_string(),
    }
}

fn price_rows() -> Vec<PriceRow> {
    vec![
        PriceRow { date: "2024-06-17".parse().unwrap(), close: 178.35, ret: 0.0125 },
        PriceRow { date: "2024-06-18".parse().unwrap(), close: 176.90, ret: -0.008129 },
        PriceRow { date: "2024-06-19".parse().unwrap(), close: 179.02, ret: 0.011984 },
        PriceRow { date: "2024-06-20".parse().unwrap(), close: 180.44, ret: 0.007932 },
        PriceRow { date: "2024-06-21".parse().unwrap(), close: 181.13, ret: 0.003824 },
    ]
}

fn fundamentals() -> FundamentalsSnapshot {
    let mut metrics = std::collections::BTreeMap::new();
    metrics.insert("eps".to_string(), -0.56);
    metrics.insert("pe_ttm".to_string(), 41.3);
    metrics.insert("revenue_billions".to_string(), 16.57);
    FundamentalsSnapshot {
        ticker: "BA".to_string(),
        report_release_date: "2024-04-24".parse().unwrap(),
        metrics,
    }
}

fn raw_articles() -> Vec<NewsArticle> {
    vec![
        article("n1", 17, 9, "Deliveries resume at Renton plant", "Jet deliveries resume after a two-week pause."),
        article("n2", 18, 14, "Airline places widebody order", "A major carrier ordered fifteen widebody jets."),
        article("n3", 20, 11, "Regulator audit continues", "The production-quality audit remains open."),
    ]
}

fn topics() -> Vec<SelectedTopic> {
    vec![
        SelectedTopic {
            representative: article("n1", 17, 9, "Deliveries resume at Renton plant", "Jet deliveries resume after a two-week pause."),
            reported_size: 6,
            temporal_span_days: 3,
            cohesion_class: CohesionClass::High,
        },
        SelectedTopic {
            representative: article("n3", 20, 11, "Regulator audit continues", "The production-quality audit remains open."),
            reported_size: 2,
            temporal_span_days: 1,
            cohesion_class: CohesionClass::Low,
        },
    ]
}

fn bundle(mode: PromptMode, teacher: bool) -> PromptBundle {
    let news = match mode {
        PromptMode::Hgnc => NewsBlock::Topics(topics()),
        _ => NewsBlock::Articles(raw_articles()),
    };
    PromptBundle {
        company_intro: "The Boeing Company designs and manufactures commercial jetliners, defense products, and space systems.".to_string(),
        mode,
        price_rows: price_rows(),
        weekly_return: 0.0283,
        news,
        fundamentals: Some(fundamentals()),
        target_window: target_window(),
        ground_truth_label: teacher.then(|| MovementLabel::parse("U3").unwrap()),
    }
}

fn check_golden(name: &str, text: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("GOLDEN_WRITE").is_some() {
        std::fs::write(&path, text).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    assert_eq!(text, expected, "render of {name} drifted from its golden file");
}

#[test]
fn golden_baseline_student() {
    let rendered = render(
        &bundle(PromptMode::Baseline, false),
        8000,
        &HeuristicTokenEstimator,
        &TemplateSet::builtin(),
    )
    .unwrap();
    assert_eq!(rendered.truncated_topics, 0);
    check_golden("baseline_student.txt", &rendered.text);
}

#[test]
fn golden_hg_student() {
    let rendered = render(
        &bundle(PromptMode::Hg, false),
        8000,
        &HeuristicTokenEstimator,
        &TemplateSet::builtin(),
    )
    .unwrap();
    check_golden("hg_student.txt", &rendered.text);
}

#[test]
fn golden_hgnc_student() {
    let rendered = render(
        &bundle(PromptMode::Hgnc, false),
        8000,
        &HeuristicTokenEstimator,
        &TemplateSet::builtin(),
    )
    .unwrap();
    check_golden("hgnc_student.txt", &rendered.text);
}

#[test]
fn golden_hgnc_teacher() {
    let rendered = render(
        &bundle(PromptMode::Hgnc, true),
        8000,
        &HeuristicTokenEstimator,
        &TemplateSet::builtin(),
    )
    .unwrap();
    check_golden("hgnc_teacher.txt", &rendered.text);
}

#[test]
fn teacher_and_student_diff_confined_to_ground_truth() {
    let teacher = render(
        &bundle(PromptMode::Hgnc, true),
        8000,
        &HeuristicTokenEstimator,
        &TemplateSet::builtin(),
    )
    .unwrap();
    let student = render(
        &bundle(PromptMode::Hgnc, false),
        8000,
        &HeuristicTokenEstimator,
        &TemplateSet::builtin(),
    )
    .unwrap();
    let prefix = student.text.trim_end();
    assert!(teacher.text.starts_with(prefix));
    let tail = &teacher.text[prefix.len()..];
    assert!(tail.trim_start().starts_with("[Ground Truth]"));
}
