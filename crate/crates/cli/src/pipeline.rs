//! Subcommand implementations.
//!
//! Every command is driven by the same week geometry: the configured date
//! range is cut into observed (input) weeks; each observed week's prices and
//! news predict the movement of the following (target) week. Labeling the
//! target week therefore needs bars one week past the last input window, and
//! daily returns need the close from the week before the first, so `ingest`
//! fetches one extra window of bars on each side.
//!
//! Weeks that cannot be built (bar gaps, missing prior close, unlabeled
//! target) are skipped with a logged reason; any skip turns the exit code to
//! 1, hard failures to 2.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use newscast::clustering::{
    cluster_topics, clustering_ratio, select_topics, write_diagnostics_csv, ClusterError,
    ClusteringParams, WeekDiagnostics,
};
use newscast::dataset::{
    export_jsonl_file, import_jsonl_file, leakage_violations, DatasetError, ExampleJob,
    ExampleMeta, generate_examples,
};
use newscast::embedding::{EmbedError, Embedder, Embedding};
use newscast::evaluation::{
    case_classification, parse_analysis, ratio_report, write_ratio_csv, AnalysisSections,
    EvalError, EvaluationReport, RatioWeek, ScoredExample,
};
use newscast::labeling::{daily_returns, movement_label, weekly_return, LabelError, MovementLabel};
use newscast::market_data::{
    window_weeks, fundamentals_for_week, MarketDataProvider, NewsArticle, ProviderError,
    WeeklyWindow,
};
use newscast::prompting::{
    render, strip_ground_truth, HeuristicTokenEstimator, NewsBlock, PriceRow, PromptBundle,
    PromptMode, RenderError,
};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("provider failure for {ticker}: {source}")]
    Provider {
        ticker: String,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("ground-truth leakage in {count} exported examples, first: {first}")]
    Leakage { count: usize, first: String },
    #[error("no scorable predictions: {0}")]
    NothingToScore(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// What a command reports back: printable summary lines plus skip messages.
pub struct PipelineOutcome {
    pub summary: Vec<String>,
    pub skips: Vec<String>,
}

impl PipelineOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.skips.is_empty() {
            0
        } else {
            1
        }
    }
}

fn input_windows(config: &RunConfig) -> Result<Vec<WeeklyWindow>, PipelineError> {
    let windows = window_weeks(
        config.run.start_date,
        config.run.end_date,
        config.week_start()?,
        &config.calendar(),
    )
    .map_err(|e| PipelineError::Provider {
        ticker: "-".into(),
        source: e,
    })?;
    Ok(windows)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Populate the cache for every (ticker, window), bars one window beyond
/// each end.
pub fn run_ingest(config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    let provider = config.provider()?;
    let calendar = config.calendar();
    let windows = input_windows(config)?;
    let mut summary = Vec::new();
    let mut skips = Vec::new();

    for ticker in &config.run.tickers {
        let mut articles = 0usize;
        let mut bar_days = 0usize;
        let mut gaps = 0usize;

        let mut bar_windows = Vec::with_capacity(windows.len() + 2);
        if let Some(first) = windows.first() {
            bar_windows.push(first.prev(&calendar));
        }
        bar_windows.extend(windows.iter().cloned());
        if let Some(last) = windows.last() {
            bar_windows.push(last.next(&calendar));
        }
        for window in &bar_windows {
            match provider.fetch_daily_bars(ticker, window) {
                Ok(bars) => bar_days += bars.len(),
                Err(e) if e.is_data_gap() => {
                    gaps += 1;
                    skips.push(format!("{ticker} {}: {e}", window.start_date));
                }
                Err(e) => {
                    return Err(PipelineError::Provider {
                        ticker: ticker.clone(),
                        source: e,
                    })
                }
            }
        }
        for window in &windows {
            let news = provider
                .fetch_news(ticker, window)
                .map_err(|e| PipelineError::Provider {
                    ticker: ticker.clone(),
                    source: e,
                })?;
            articles += news.len();
            provider
                .fetch_fundamentals(ticker, window)
                .map_err(|e| PipelineError::Provider {
                    ticker: ticker.clone(),
                    source: e,
                })?;
        }
        summary.push(format!(
            "{ticker}: {} windows ingested, {articles} articles, {bar_days} bar days, {gaps} bar gaps",
            windows.len()
        ));
    }
    Ok(PipelineOutcome { summary, skips })
}

fn embed_articles(
    embedder: &dyn Embedder,
    articles: &[NewsArticle],
) -> Result<Vec<Embedding>, PipelineError> {
    let texts: Vec<String> = articles.iter().map(|a| a.full_text()).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    Ok(embedder.embed_batch(&refs)?)
}

/// Cluster each week's news and export the per-week diagnostics CSV.
pub fn run_cluster(config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    let provider = config.provider()?;
    let embedder = config.embedder();
    let params = config.clustering.to_params();
    let windows = input_windows(config)?;
    let mut summary = Vec::new();

    for ticker in &config.run.tickers {
        let mut rows = Vec::with_capacity(windows.len());
        for window in &windows {
            let news = provider
                .fetch_news(ticker, window)
                .map_err(|e| PipelineError::Provider {
                    ticker: ticker.clone(),
                    source: e,
                })?;
            let embeddings = embed_articles(&embedder, &news)?;
            let clusters = cluster_topics(&news, &embeddings, &params)?;
            rows.push(WeekDiagnostics::from_clusters(
                window.start_date,
                &clusters,
                news.len(),
            ));
        }
        let path = config
            .run
            .output_dir
            .join(format!("clusters_{ticker}.csv"));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &rows).map_err(io_err(&path))?;
        std::fs::write(&path, buf).map_err(io_err(&path))?;
        summary.push(format!(
            "{ticker}: {} weekly rows -> {}",
            rows.len(),
            path.display()
        ));
    }
    Ok(PipelineOutcome {
        summary,
        skips: Vec::new(),
    })
}

/// One fully assembled week, ready to prompt.
struct WeekBuild {
    input_start: NaiveDate,
    target_start: NaiveDate,
    bundle: PromptBundle,
    actual_label: Option<MovementLabel>,
}

enum WeekOutcome {
    Built(Box<WeekBuild>),
    Skipped { input_start: NaiveDate, reason: String },
}

fn build_weeks(
    config: &RunConfig,
    provider: &impl MarketDataProvider,
    embedder: &dyn Embedder,
    params: &ClusteringParams,
    ticker: &str,
) -> Result<Vec<WeekOutcome>, PipelineError> {
    let calendar = config.calendar();
    let windows = input_windows(config)?;
    let mut outcomes = Vec::with_capacity(windows.len());

    for window in &windows {
        let skip = |reason: String| WeekOutcome::Skipped {
            input_start: window.start_date,
            reason,
        };
        let hard = |e: ProviderError| PipelineError::Provider {
            ticker: ticker.to_string(),
            source: e,
        };

        let bars = match provider.fetch_daily_bars(ticker, window) {
            Ok(bars) => bars,
            Err(e) if e.is_data_gap() => {
                outcomes.push(skip(format!("observed week has no usable bars: {e}")));
                continue;
            }
            Err(e) => return Err(hard(e)),
        };
        let prior_close = match provider.fetch_daily_bars(ticker, &window.prev(&calendar)) {
            Ok(prior) => prior.last().expect("validated bars are nonempty").close,
            Err(e) if e.is_data_gap() => {
                outcomes.push(skip(format!("no prior-week close: {e}")));
                continue;
            }
            Err(e) => return Err(hard(e)),
        };
        let series = daily_returns(&bars, prior_close)?;
        let observed_close = *series.closes.last().expect("nonempty series");
        let observed_weekly = weekly_return(prior_close, observed_close)?;

        let target = window.next(&calendar);
        let actual_label = match provider.fetch_daily_bars(ticker, &target) {
            Ok(target_bars) => {
                let target_close = target_bars.last().expect("validated nonempty").close;
                Some(movement_label(weekly_return(observed_close, target_close)?)?)
            }
            Err(e) if e.is_data_gap() => None,
            Err(e) => return Err(hard(e)),
        };

        let news = provider.fetch_news(ticker, window).map_err(hard)?;
        let news_block = match config.run.mode {
            PromptMode::Hgnc => {
                let embeddings = embed_articles(embedder, &news)?;
                let clusters = cluster_topics(&news, &embeddings, params)?;
                NewsBlock::Topics(select_topics(&clusters, &news, params)?)
            }
            _ => NewsBlock::Articles(news.clone()),
        };

        let snapshots = provider.fetch_fundamentals(ticker, window).map_err(hard)?;
        let fundamentals = fundamentals_for_week(&target, &snapshots).cloned();

        let price_rows: Vec<PriceRow> = series
            .dates
            .iter()
            .zip(&series.closes)
            .zip(&series.returns)
            .map(|((date, close), ret)| PriceRow {
                date: *date,
                close: *close,
                ret: *ret,
            })
            .collect();

        outcomes.push(WeekOutcome::Built(Box::new(WeekBuild {
            input_start: window.start_date,
            target_start: target.start_date,
            bundle: PromptBundle {
                company_intro: config.company_intro(ticker),
                mode: config.run.mode,
                price_rows,
                weekly_return: observed_weekly,
                news: news_block,
                fundamentals,
                target_window: target,
                ground_truth_label: actual_label,
            },
            actual_label,
        })));
    }
    Ok(outcomes)
}

/// Render ground-truth-stripped prompts to `<out>/prompts/<ticker>/<target>.txt`.
pub fn run_build_prompts(config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    let provider = config.provider()?;
    let embedder = config.embedder();
    let params = config.clustering.to_params();
    let templates = config.templates()?;
    let estimator = HeuristicTokenEstimator;
    let mut summary = Vec::new();
    let mut skips = Vec::new();

    for ticker in &config.run.tickers {
        let mut written = 0usize;
        let mut truncated = 0usize;
        for outcome in build_weeks(config, &provider, &embedder, &params, ticker)? {
            match outcome {
                WeekOutcome::Built(week) => {
                    let stripped = strip_ground_truth(&week.bundle);
                    let rendered =
                        render(&stripped, config.run.token_budget, &estimator, &templates)?;
                    truncated += rendered.truncated_topics;
                    let path = config
                        .run
                        .output_dir
                        .join("prompts")
                        .join(ticker)
                        .join(format!("{}.txt", week.target_start));
                    write_text(&path, &rendered.text)?;
                    written += 1;
                }
                WeekOutcome::Skipped { input_start, reason } => {
                    skips.push(format!("{ticker} {input_start}: {reason}"));
                }
            }
        }
        summary.push(format!(
            "{ticker}: {written} prompts written ({truncated} news items truncated)"
        ));
    }
    Ok(PipelineOutcome { summary, skips })
}

/// Teacher-generate the instruction dataset and export JSONL plus a skip log.
pub fn run_build_dataset(config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    let provider = config.provider()?;
    let embedder = config.embedder();
    let params = config.clustering.to_params();
    let templates = config.templates()?;
    let teacher = config.teacher_client()?;
    let teacher_params = config.teacher_params();
    let estimator = HeuristicTokenEstimator;

    let mut jobs = Vec::new();
    let mut skips = Vec::new();
    for ticker in &config.run.tickers {
        for outcome in build_weeks(config, &provider, &embedder, &params, ticker)? {
            match outcome {
                WeekOutcome::Built(week) => match week.actual_label {
                    Some(actual_label) => jobs.push(ExampleJob {
                        meta: ExampleMeta {
                            ticker: ticker.clone(),
                            window_start: week.target_start,
                            input_week_start: week.input_start,
                            mode: config.run.mode,
                            actual_label,
                        },
                        bundle: week.bundle,
                    }),
                    None => skips.push(format!(
                        "{ticker} {}: target week has no bars, cannot label",
                        week.input_start
                    )),
                },
                WeekOutcome::Skipped { input_start, reason } => {
                    skips.push(format!("{ticker} {input_start}: {reason}"));
                }
            }
        }
    }

    let (examples, generation_skips) = generate_examples(
        jobs,
        &teacher,
        &teacher_params,
        config.run.token_budget,
        &estimator,
        &templates,
        config.teacher.max_in_flight,
    );
    for s in &generation_skips {
        skips.push(format!("{} {}: {}", s.ticker, s.window_start, s.reason));
    }

    let violations = leakage_violations(&examples);
    if let Some((ticker, window)) = violations.first() {
        return Err(PipelineError::Leakage {
            count: violations.len(),
            first: format!("{ticker} {window}"),
        });
    }

    let dataset_path = config.run.output_dir.join("dataset.jsonl");
    export_jsonl_file(&dataset_path, &examples)?;
    let skip_path = config.run.output_dir.join("skips.jsonl");
    let mut skip_file = std::fs::File::create(&skip_path).map_err(io_err(&skip_path))?;
    for skip in &skips {
        let line = serde_json::to_string(&serde_json::json!({ "skipped": skip }))
            .expect("skip line serializes");
        writeln!(skip_file, "{line}").map_err(io_err(&skip_path))?;
    }

    Ok(PipelineOutcome {
        summary: vec![
            format!("{} examples -> {}", examples.len(), dataset_path.display()),
            format!("{} skips -> {}", skips.len(), skip_path.display()),
        ],
        skips,
    })
}

/// One line of a predictions JSONL file: the model's raw output for the
/// target week keyed by `(ticker, window_start)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub ticker: String,
    /// Target week start (matches the dataset meta's `window_start`).
    pub window_start: NaiveDate,
    pub text: String,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(line).map_err(|e| PipelineError::NothingToScore(format!(
                "{}:{}: {e}",
                path.display(),
                idx + 1
            )))?;
        records.push(record);
    }
    Ok(records)
}

/// Score a predictions file against the dataset's labels and reference
/// analyses; write `report.csv` and `summary.txt`.
pub fn run_evaluate(
    config: &RunConfig,
    predictions_path: &Path,
    dataset_path: Option<&Path>,
) -> Result<(PipelineOutcome, EvaluationReport), PipelineError> {
    let default_dataset = config.run.output_dir.join("dataset.jsonl");
    let dataset_path = dataset_path.unwrap_or(&default_dataset);
    let dataset = import_jsonl_file(dataset_path)?;
    let by_key: BTreeMap<(String, NaiveDate), &newscast::dataset::InstructionExample> = dataset
        .iter()
        .map(|e| ((e.meta.ticker.clone(), e.meta.window_start), e))
        .collect();

    let predictions = read_predictions(predictions_path)?;
    if predictions.is_empty() {
        return Err(PipelineError::NothingToScore(format!(
            "{} holds no prediction records",
            predictions_path.display()
        )));
    }

    let mut scored = Vec::new();
    let mut outputs: Vec<AnalysisSections> = Vec::new();
    let mut row_errors = Vec::new();
    for prediction in &predictions {
        let key = (prediction.ticker.clone(), prediction.window_start);
        let example = match by_key.get(&key) {
            Some(example) => *example,
            None => {
                row_errors.push(format!(
                    "{} {}: no dataset example for this week",
                    prediction.ticker, prediction.window_start
                ));
                continue;
            }
        };
        let sections = match parse_analysis(&prediction.text) {
            Ok(sections) => sections,
            Err(e) => {
                row_errors.push(format!(
                    "{} {}: unparseable prediction: {e}",
                    prediction.ticker, prediction.window_start
                ));
                continue;
            }
        };
        let reference = match parse_analysis(&example.output) {
            Ok(reference) => reference,
            Err(e) => {
                row_errors.push(format!(
                    "{} {}: unparseable reference completion: {e}",
                    prediction.ticker, prediction.window_start
                ));
                continue;
            }
        };
        scored.push(ScoredExample {
            ticker: prediction.ticker.clone(),
            window_start: prediction.window_start,
            actual: example.meta.actual_label,
            predicted: sections.predicted_label,
            rouge1: newscast::evaluation::rouge_n(
                &sections.prediction_analysis,
                &reference.prediction_analysis,
                1,
            ),
            rouge2: newscast::evaluation::rouge_n(
                &sections.prediction_analysis,
                &reference.prediction_analysis,
                2,
            ),
            rouge_l: newscast::evaluation::rouge_l(
                &sections.prediction_analysis,
                &reference.prediction_analysis,
            ),
        });
        outputs.push(sections);
    }

    if scored.is_empty() {
        return Err(PipelineError::NothingToScore(format!(
            "all {} prediction rows failed: {}",
            predictions.len(),
            row_errors.join("; ")
        )));
    }
    scored.sort_by(|a, b| (&a.ticker, a.window_start).cmp(&(&b.ticker, b.window_start)));
    let report = EvaluationReport::build(scored, &outputs, &config.evaluation.terms)?;

    let csv_path = config.run.output_dir.join("report.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(io_err(&csv_path))?;
    if let Some(dir) = csv_path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(&csv_path, buf).map_err(io_err(&csv_path))?;
    let summary_path = config.run.output_dir.join("summary.txt");
    write_text(&summary_path, &report.summary())?;

    let mut summary: Vec<String> = report.summary().lines().map(String::from).collect();
    summary.push(format!("report_csv: {}", csv_path.display()));
    summary.push(format!("summary_txt: {}", summary_path.display()));
    Ok((
        PipelineOutcome {
            summary,
            skips: row_errors,
        },
        report,
    ))
}

/// Join HG and HG-NC prediction correctness with weekly clustering ratios
/// into the case report.
pub fn run_report(
    config: &RunConfig,
    hg_predictions: &Path,
    hgnc_predictions: &Path,
) -> Result<PipelineOutcome, PipelineError> {
    let provider = config.provider()?;
    let embedder = config.embedder();
    let params = config.clustering.to_params();
    let calendar = config.calendar();
    let windows = input_windows(config)?;

    let index = |records: Vec<PredictionRecord>| -> BTreeMap<(String, NaiveDate), PredictionRecord> {
        records
            .into_iter()
            .map(|r| ((r.ticker.clone(), r.window_start), r))
            .collect()
    };
    let hg = index(read_predictions(hg_predictions)?);
    let hgnc = index(read_predictions(hgnc_predictions)?);

    let mut weeks = Vec::new();
    let mut skips = Vec::new();
    for ticker in &config.run.tickers {
        for window in &windows {
            let hard = |e: ProviderError| PipelineError::Provider {
                ticker: ticker.clone(),
                source: e,
            };
            // actual direction for the target week
            let observed = match provider.fetch_daily_bars(ticker, window) {
                Ok(bars) => bars,
                Err(e) if e.is_data_gap() => {
                    skips.push(format!("{ticker} {}: {e}", window.start_date));
                    continue;
                }
                Err(e) => return Err(hard(e)),
            };
            let target = window.next(&calendar);
            let target_bars = match provider.fetch_daily_bars(ticker, &target) {
                Ok(bars) => bars,
                Err(e) if e.is_data_gap() => {
                    skips.push(format!(
                        "{ticker} {}: target week unlabeled: {e}",
                        window.start_date
                    ));
                    continue;
                }
                Err(e) => return Err(hard(e)),
            };
            let actual = movement_label(weekly_return(
                observed.last().expect("nonempty").close,
                target_bars.last().expect("nonempty").close,
            )?)?;

            let key = (ticker.clone(), target.start_date);
            let (Some(hg_record), Some(hgnc_record)) = (hg.get(&key), hgnc.get(&key)) else {
                skips.push(format!(
                    "{ticker} {}: missing prediction for target {}",
                    window.start_date, target.start_date
                ));
                continue;
            };
            let correct = |record: &PredictionRecord| -> Result<bool, PipelineError> {
                let sections = parse_analysis(&record.text)?;
                Ok(sections.predicted_label.direction == actual.direction)
            };
            let hg_correct = correct(hg_record)?;
            let hgnc_correct = correct(hgnc_record)?;

            let news = provider.fetch_news(ticker, window).map_err(hard)?;
            let embeddings = embed_articles(&embedder, &news)?;
            let clusters = cluster_topics(&news, &embeddings, &params)?;

            weeks.push(RatioWeek {
                window_start: window.start_date,
                clustering_ratio: clustering_ratio(&clusters, news.len()),
                case: case_classification(hg_correct, hgnc_correct),
            });
        }
    }

    if weeks.is_empty() {
        return Err(PipelineError::NothingToScore(
            "no week had bars plus both predictions".into(),
        ));
    }
    let report = ratio_report(weeks);
    let csv_path = config.run.output_dir.join("case_report.csv");
    let mut buf = Vec::new();
    write_ratio_csv(&mut buf, &report).map_err(io_err(&csv_path))?;
    if let Some(dir) = csv_path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(&csv_path, buf).map_err(io_err(&csv_path))?;

    let summary = vec![
        format!("weeks: {}", report.weeks.len()),
        format!(
            "case1 (hgnc correct, hg wrong): {} ({} with ratio > 0.5)",
            report.case1_count, report.case1_high_ratio
        ),
        format!(
            "case2 (hg correct, hgnc wrong): {} ({} with ratio < 0.4)",
            report.case2_count, report.case2_low_ratio
        ),
        format!("case3 (methods agree): {}", report.case3_count),
        format!("case_report_csv: {}", csv_path.display()),
    ];
    Ok(PipelineOutcome { summary, skips })
}

/// Relative output paths used by the commands; handy for tests.
pub fn dataset_path(config: &RunConfig) -> PathBuf {
    config.run.output_dir.join("dataset.jsonl")
}
