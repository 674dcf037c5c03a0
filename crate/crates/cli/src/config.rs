//! The run configuration: one TOML file describes a whole experiment.
//!
//! Providers are replay-first: each one is either a fixture/cassette
//! directory or a live endpoint, never both. Dates are quoted ISO strings
//! (`"2024-05-26"`). A minimal fixture-backed config:
//!
//! ```toml
//! [run]
//! tickers = ["BA"]
//! start_date = "2024-05-26"
//! end_date = "2024-10-05"
//! mode = "hgnc"
//! output_dir = "out"
//!
//! [market_data]
//! fixture_dir = "fixtures"
//!
//! [teacher]
//! provider = "replay"
//! cassette_dir = "cassettes"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, Weekday};
use serde::Deserialize;
use thiserror::Error;

use newscast::clustering::ClusteringParams;
use newscast::dataset::{StubTeacher, TeacherParams};
use newscast::embedding::{Embedder, HashedTokenEmbedder, RemoteEmbedder, DEFAULT_DIM};
use newscast::llm::{HttpChatClient, LlmClient, RateLimitedClient, RecordingClient, ReplayClient};
use newscast::market_data::{
    CachedProvider, FinnhubProvider, FixtureProvider, MarketDataProvider, TradingCalendar,
};
use newscast::prompting::{PromptMode, TemplateSet};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub market_data: MarketDataSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub clustering: ClusteringSection,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    /// Per-ticker company introductions for the prompt header.
    #[serde(default)]
    pub companies: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tickers: Vec<String>,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    #[serde(default = "default_week_start")]
    pub week_start: String,
    pub mode: PromptMode,
    pub output_dir: PathBuf,
    #[serde(default = "default_token_budget")]
    pub token_budget: usize,
}

fn default_week_start() -> String {
    "sunday".to_string()
}

fn default_token_budget() -> usize {
    8000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketDataSection {
    /// Replay source; exactly one of this and `finnhub`.
    pub fixture_dir: Option<PathBuf>,
    pub finnhub: Option<FinnhubSection>,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub holidays: Vec<NaiveDate>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinnhubSection {
    pub base_url: String,
    pub api_key_env: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    #[serde(default = "default_embedding_provider")]
    pub provider: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

fn default_embedding_provider() -> String {
    "hashed".to_string()
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: default_embedding_provider(),
            dim: default_dim(),
            endpoint: None,
            model: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    #[serde(default = "default_teacher_provider")]
    pub provider: String,
    pub cassette_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub min_request_interval_ms: u64,
}

fn default_teacher_provider() -> String {
    "replay".to_string()
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_retry_cap() -> u32 {
    2
}

fn default_max_in_flight() -> usize {
    4
}

impl Default for TeacherSection {
    fn default() -> Self {
        TeacherSection {
            provider: default_teacher_provider(),
            cassette_dir: None,
            endpoint: None,
            model: None,
            api_key_env: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            retry_cap: default_retry_cap(),
            max_in_flight: default_max_in_flight(),
            min_request_interval_ms: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringSection {
    pub cohesion_threshold: f64,
    pub merge_threshold: f64,
    pub min_cluster_size: usize,
    pub high_quota_floor: usize,
    pub low_supplement_cap: usize,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let p = ClusteringParams::default();
        ClusteringSection {
            cohesion_threshold: p.cohesion_threshold,
            merge_threshold: p.merge_threshold,
            min_cluster_size: p.min_cluster_size,
            high_quota_floor: p.high_quota_floor,
            low_supplement_cap: p.low_supplement_cap,
        }
    }
}

impl ClusteringSection {
    pub fn to_params(&self) -> ClusteringParams {
        ClusteringParams {
            cohesion_threshold: self.cohesion_threshold,
            merge_threshold: self.merge_threshold,
            min_cluster_size: self.min_cluster_size,
            high_quota_floor: self.high_quota_floor,
            low_supplement_cap: self.low_supplement_cap,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsSection {
    /// Directory holding `baseline.tmpl`, `hg.tmpl`, `hgnc.tmpl`;
    /// the compiled-in templates are used when absent.
    pub template_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_terms")]
    pub terms: Vec<String>,
}

fn default_terms() -> Vec<String> {
    vec!["long-term".to_string(), "short-term".to_string()]
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            terms: default_terms(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.tickers.is_empty() {
            return Err(ConfigError::Invalid("tickers must be non-empty".into()));
        }
        if self.run.start_date > self.run.end_date {
            return Err(ConfigError::Invalid(format!(
                "start_date {} is after end_date {}",
                self.run.start_date, self.run.end_date
            )));
        }
        if self.run.token_budget == 0 {
            return Err(ConfigError::Invalid("token_budget must be positive".into()));
        }
        self.week_start()?;
        match (&self.market_data.fixture_dir, &self.market_data.finnhub) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(ConfigError::Invalid(
                    "market_data needs exactly one of fixture_dir or finnhub".into(),
                ))
            }
            _ => {}
        }
        match self.embedding.provider.as_str() {
            "hashed" => {}
            "remote" => {
                if self.embedding.endpoint.is_none() || self.embedding.model.is_none() {
                    return Err(ConfigError::Invalid(
                        "remote embedding needs endpoint and model".into(),
                    ));
                }
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown embedding provider {other:?} (expected hashed or remote)"
                )))
            }
        }
        match self.teacher.provider.as_str() {
            "replay" => {
                if self.teacher.cassette_dir.is_none() {
                    return Err(ConfigError::Invalid(
                        "replay teacher needs cassette_dir".into(),
                    ));
                }
            }
            "http" => {
                if self.teacher.endpoint.is_none() || self.teacher.model.is_none() {
                    return Err(ConfigError::Invalid(
                        "http teacher needs endpoint and model".into(),
                    ));
                }
            }
            "stub" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown teacher provider {other:?} (expected replay, http, or stub)"
                )))
            }
        }
        self.clustering
            .to_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn week_start(&self) -> Result<Weekday, ConfigError> {
        match self.run.week_start.to_lowercase().as_str() {
            "monday" | "mon" => Ok(Weekday::Mon),
            "tuesday" | "tue" => Ok(Weekday::Tue),
            "wednesday" | "wed" => Ok(Weekday::Wed),
            "thursday" | "thu" => Ok(Weekday::Thu),
            "friday" | "fri" => Ok(Weekday::Fri),
            "saturday" | "sat" => Ok(Weekday::Sat),
            "sunday" | "sun" => Ok(Weekday::Sun),
            other => Err(ConfigError::Invalid(format!(
                "unknown week_start {other:?}"
            ))),
        }
    }

    pub fn calendar(&self) -> TradingCalendar {
        TradingCalendar::with_holidays(self.market_data.holidays.clone())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.market_data
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.run.output_dir.join("cache"))
    }

    /// The market data provider, cache wrapper included.
    pub fn provider(
        &self,
    ) -> Result<CachedProvider<Box<dyn MarketDataProvider>>, ConfigError> {
        let inner: Box<dyn MarketDataProvider> = match (
            &self.market_data.fixture_dir,
            &self.market_data.finnhub,
        ) {
            (Some(dir), None) => {
                if !dir.is_dir() {
                    return Err(ConfigError::Invalid(format!(
                        "fixture_dir {} is not a directory",
                        dir.display()
                    )));
                }
                Box::new(FixtureProvider::new(dir.clone()))
            }
            (None, Some(finnhub)) => {
                let token = std::env::var(&finnhub.api_key_env)
                    .map_err(|_| ConfigError::MissingEnv(finnhub.api_key_env.clone()))?;
                Box::new(FinnhubProvider::new(finnhub.base_url.clone(), token))
            }
            _ => unreachable!("validated: exactly one market data source"),
        };
        Ok(CachedProvider::new(inner, self.cache_dir()))
    }

    pub fn embedder(&self) -> Box<dyn Embedder> {
        match self.embedding.provider.as_str() {
            "remote" => Box::new(RemoteEmbedder::new(
                self.embedding.endpoint.clone().expect("validated"),
                self.embedding.model.clone().expect("validated"),
                self.embedding.dim,
            )),
            _ => Box::new(HashedTokenEmbedder::new(self.embedding.dim)),
        }
    }

    pub fn teacher_client(&self) -> Result<Box<dyn LlmClient>, ConfigError> {
        let base: Box<dyn LlmClient> = match self.teacher.provider.as_str() {
            "replay" => Box::new(ReplayClient::new(
                self.teacher.cassette_dir.clone().expect("validated"),
            )),
            "stub" => match &self.teacher.cassette_dir {
                Some(dir) => Box::new(RecordingClient::new(StubTeacher, dir.clone())),
                None => Box::new(StubTeacher),
            },
            _ => {
                let api_key = match &self.teacher.api_key_env {
                    Some(env) => Some(
                        std::env::var(env).map_err(|_| ConfigError::MissingEnv(env.clone()))?,
                    ),
                    None => None,
                };
                let http = HttpChatClient::new(
                    self.teacher.endpoint.clone().expect("validated"),
                    self.teacher.model.clone().expect("validated"),
                    api_key,
                );
                // a cassette_dir alongside an http teacher records for later replay
                match &self.teacher.cassette_dir {
                    Some(dir) => Box::new(RecordingClient::new(http, dir.clone())),
                    None => Box::new(http),
                }
            }
        };
        if self.teacher.min_request_interval_ms > 0 {
            return Ok(Box::new(RateLimitedClient::new(
                base,
                std::time::Duration::from_millis(self.teacher.min_request_interval_ms),
            )));
        }
        Ok(base)
    }

    pub fn teacher_params(&self) -> TeacherParams {
        TeacherParams {
            temperature: self.teacher.temperature,
            max_tokens: self.teacher.max_tokens,
            retry_cap: self.teacher.retry_cap,
        }
    }

    pub fn templates(&self) -> Result<TemplateSet, ConfigError> {
        match &self.prompts.template_dir {
            Some(dir) => TemplateSet::from_dir(dir)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(TemplateSet::builtin()),
        }
    }

    pub fn company_intro(&self, ticker: &str) -> String {
        self.companies
            .get(ticker)
            .cloned()
            .unwrap_or_else(|| format!("{ticker} is a publicly traded company."))
    }
}
