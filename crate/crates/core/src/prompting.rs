//! Render the three prompt variants under a token budget.
//!
//! Sections always appear in the same order: company introduction, prices,
//! news, fundamentals, instructions, and (teacher prompts only) the ground
//! truth. The three modes differ in what the price and news sections hold:
//!
//! - `Baseline`: one weekly price summary line plus raw headlines/summaries.
//! - `Hg`: per-day close/return rows plus raw headlines/summaries.
//! - `Hgnc`: per-day rows plus selected topics, each prefixed with its
//!   dissemination metadata (`[N articles, D-day span]`).
//!
//! Templates live in files with named placeholders (`{company_intro}`,
//! `{target_week_start}`, `{target_week_end}`, `{price_block}`,
//! `{news_block}`, `{fundamentals_block}`, `{ground_truth_block}`); the
//! built-in set is compiled in. When a render overflows the budget, news
//! items are dropped lowest-priority-first until it fits: low-cohesion topics
//! before high, smaller before larger, and for raw articles oldest first.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{CohesionClass, SelectedTopic};
use crate::labeling::MovementLabel;
use crate::market_data::{FundamentalsSnapshot, NewsArticle, WeeklyWindow};

/// Placeholders every template must contain.
pub const PLACEHOLDERS: [&str; 7] = [
    "{company_intro}",
    "{target_week_start}",
    "{target_week_end}",
    "{price_block}",
    "{news_block}",
    "{fundamentals_block}",
    "{ground_truth_block}",
];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("bundle news block does not match mode {0:?}")]
    ModeMismatch(PromptMode),
    #[error("fixed sections need {fixed_cost} tokens, over the {budget}-token budget")]
    BudgetTooSmall { fixed_cost: usize, budget: usize },
    #[error("template for {mode:?} is missing placeholder {placeholder}")]
    MissingPlaceholder {
        mode: PromptMode,
        placeholder: &'static str,
    },
    #[error("cannot read template {path}: {source}")]
    TemplateIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Baseline,
    Hg,
    Hgnc,
}

impl PromptMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptMode::Baseline => "baseline",
            PromptMode::Hg => "hg",
            PromptMode::Hgnc => "hgnc",
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observed trading day: close plus the simple return into that close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub date: NaiveDate,
    pub close: f64,
    pub ret: f64,
}

/// News payload of a bundle: raw articles (baseline/HG) or selected topics
/// (HG-NC).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NewsBlock {
    Articles(Vec<NewsArticle>),
    Topics(Vec<SelectedTopic>),
}

/// Everything needed to render one (company, week) prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptBundle {
    pub company_intro: String,
    pub mode: PromptMode,
    /// The observed week's daily closes and returns.
    pub price_rows: Vec<PriceRow>,
    /// The observed week's aggregate simple return.
    pub weekly_return: f64,
    pub news: NewsBlock,
    pub fundamentals: Option<FundamentalsSnapshot>,
    /// The week being predicted (follows the observed week).
    pub target_window: WeeklyWindow,
    /// Present only in the teacher-generation flow.
    pub ground_truth_label: Option<MovementLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub token_estimate: usize,
    /// News items dropped to fit the budget.
    pub truncated_topics: usize,
}

/// Pluggable token counting. The default heuristic is `ceil(chars / 4)`;
/// any replacement must stay monotone in text length.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicTokenEstimator;

impl TokenEstimator for HeuristicTokenEstimator {
    fn estimate(&self, text: &str) -> usize {
        estimate_tokens(text)
    }
}

/// Default token heuristic: `ceil(chars / 4)`, zero for the empty string.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// The three mode templates.
pub struct TemplateSet {
    baseline: String,
    hg: String,
    hgnc: String,
}

impl TemplateSet {
    /// The compiled-in templates.
    pub fn builtin() -> TemplateSet {
        TemplateSet {
            baseline: include_str!("../templates/baseline.tmpl").to_string(),
            hg: include_str!("../templates/hg.tmpl").to_string(),
            hgnc: include_str!("../templates/hgnc.tmpl").to_string(),
        }
    }

    /// Load `baseline.tmpl`, `hg.tmpl`, and `hgnc.tmpl` from a directory and
    /// check each contains every placeholder.
    pub fn from_dir(dir: &std::path::Path) -> Result<TemplateSet, RenderError> {
        let read = |name: &str| -> Result<String, RenderError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| RenderError::TemplateIo {
                path: path.display().to_string(),
                source: e,
            })
        };
        let set = TemplateSet {
            baseline: read("baseline.tmpl")?,
            hg: read("hg.tmpl")?,
            hgnc: read("hgnc.tmpl")?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        for (mode, text) in [
            (PromptMode::Baseline, &self.baseline),
            (PromptMode::Hg, &self.hg),
            (PromptMode::Hgnc, &self.hgnc),
        ] {
            for placeholder in PLACEHOLDERS {
                if !text.contains(placeholder) {
                    return Err(RenderError::MissingPlaceholder { mode, placeholder });
                }
            }
        }
        Ok(())
    }

    fn for_mode(&self, mode: PromptMode) -> &str {
        match mode {
            PromptMode::Baseline => &self.baseline,
            PromptMode::Hg => &self.hg,
            PromptMode::Hgnc => &self.hgnc,
        }
    }
}

fn signed_pct(fraction: f64) -> String {
    format!("{:+.2}%", fraction * 100.0)
}

fn price_block(bundle: &PromptBundle) -> String {
    let summary = match (bundle.price_rows.first(), bundle.price_rows.last()) {
        (Some(first), Some(last)) => format!(
            "Over the past trading week ({} to {}), the closing price moved from {:.2} to {:.2}, a weekly change of {}.",
            first.date,
            last.date,
            first.close,
            last.close,
            signed_pct(bundle.weekly_return)
        ),
        _ => "No price data was available for the past trading week.".to_string(),
    };
    if bundle.mode == PromptMode::Baseline {
        return summary;
    }
    let mut block = summary;
    for row in &bundle.price_rows {
        block.push_str(&format!(
            "\n{} | close {:.2} | return {}",
            row.date,
            row.close,
            signed_pct(row.ret)
        ));
    }
    block
}

fn article_line(article: &NewsArticle) -> String {
    format!(
        "- [{}] {}: {}",
        article.published_at.date_naive(),
        article.headline,
        article.summary
    )
}

fn topic_line(topic: &SelectedTopic) -> String {
    format!(
        "- [{} articles, {}-day span] {} — {}",
        topic.reported_size,
        topic.temporal_span_days,
        topic.representative.headline,
        topic.representative.summary
    )
}

const EMPTY_NEWS: &str = "No company news was collected for this week.";

fn fundamentals_block(fundamentals: &Option<FundamentalsSnapshot>) -> String {
    match fundamentals {
        Some(snapshot) => {
            let mut block = format!(
                "Latest quarterly report (released {}):",
                snapshot.report_release_date
            );
            for (name, value) in &snapshot.metrics {
                block.push_str(&format!("\n- {name}: {value}"));
            }
            block
        }
        None => "No recent quarterly report is available.".to_string(),
    }
}

fn ground_truth_block(label: Option<MovementLabel>) -> String {
    match label {
        Some(label) => format!(
            "[Ground Truth]\nThe actual movement label for the target week is {label}. Write the analysis so it is consistent with this outcome."
        ),
        None => String::new(),
    }
}

/// Indices into the topic list in the order topics should be dropped when
/// the budget overflows: low-cohesion before high, smaller before larger,
/// shorter span first, then the later-published representative.
fn topic_drop_order(topics: &[SelectedTopic]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..topics.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&topics[a], &topics[b]);
        let class = |t: &SelectedTopic| match t.cohesion_class {
            CohesionClass::Low => 0,
            CohesionClass::High => 1,
        };
        class(ta)
            .cmp(&class(tb))
            .then(ta.reported_size.cmp(&tb.reported_size))
            .then(ta.temporal_span_days.cmp(&tb.temporal_span_days))
            .then(
                tb.representative
                    .sort_key()
                    .cmp(&ta.representative.sort_key()),
            )
    });
    order
}

/// Render a bundle to prompt text, dropping news items lowest-priority-first
/// until the estimate fits the budget.
pub fn render(
    bundle: &PromptBundle,
    budget: usize,
    estimator: &dyn TokenEstimator,
    templates: &TemplateSet,
) -> Result<RenderedPrompt, RenderError> {
    let item_lines: Vec<String> = match (&bundle.mode, &bundle.news) {
        (PromptMode::Baseline | PromptMode::Hg, NewsBlock::Articles(articles)) => {
            let mut ordered: Vec<&NewsArticle> = articles.iter().collect();
            ordered.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            ordered.into_iter().map(article_line).collect()
        }
        (PromptMode::Hgnc, NewsBlock::Topics(topics)) => topics.iter().map(topic_line).collect(),
        _ => return Err(RenderError::ModeMismatch(bundle.mode)),
    };
    // Articles were re-sorted chronologically above, so dropping front-first
    // drops oldest-first; topics keep their selection order and use the
    // priority ordering.
    let drop_sequence: Vec<usize> = match &bundle.news {
        NewsBlock::Articles(_) => (0..item_lines.len()).collect(),
        NewsBlock::Topics(topics) => topic_drop_order(topics),
    };

    let template = templates.for_mode(bundle.mode);
    let prices = price_block(bundle);
    let fundamentals = fundamentals_block(&bundle.fundamentals);
    let ground_truth = ground_truth_block(bundle.ground_truth_label);

    let mut included: Vec<bool> = vec![true; item_lines.len()];
    let mut dropped = 0usize;
    loop {
        let news = {
            let lines: Vec<&str> = item_lines
                .iter()
                .zip(&included)
                .filter(|(_, keep)| **keep)
                .map(|(line, _)| line.as_str())
                .collect();
            if lines.is_empty() {
                EMPTY_NEWS.to_string()
            } else {
                lines.join("\n")
            }
        };
        let text = template
            .replace("{company_intro}", &bundle.company_intro)
            .replace(
                "{target_week_start}",
                &bundle.target_window.start_date.to_string(),
            )
            .replace(
                "{target_week_end}",
                &bundle.target_window.end_date.to_string(),
            )
            .replace("{price_block}", &prices)
            .replace("{news_block}", &news)
            .replace("{fundamentals_block}", &fundamentals)
            .replace("{ground_truth_block}", &ground_truth);
        let token_estimate = estimator.estimate(&text);
        if token_estimate <= budget {
            return Ok(RenderedPrompt {
                text,
                token_estimate,
                truncated_topics: dropped,
            });
        }
        if dropped == drop_sequence.len() {
            return Err(RenderError::BudgetTooSmall {
                fixed_cost: token_estimate,
                budget,
            });
        }
        included[drop_sequence[dropped]] = false;
        dropped += 1;
    }
}

/// The same bundle with the ground-truth label removed. Idempotent; the
/// render of a stripped bundle contains no ground-truth section.
pub fn strip_ground_truth(bundle: &PromptBundle) -> PromptBundle {
    PromptBundle {
        ground_truth_label: None,
        ..bundle.clone()
    }
}
