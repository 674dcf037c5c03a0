//! Data pipeline for news-dissemination-aware weekly stock movement prediction.
//!
//! The pipeline turns raw weekly market data into model-ready artifacts:
//!
//! 1. [`market_data`] fetches and caches company news, daily closes, and
//!    quarterly fundamentals, and partitions a date range into weekly windows.
//! 2. [`labeling`] computes daily/weekly returns and maps weekly returns onto
//!    the twelve movement labels (`U1`..`U5+`, `D1`..`D5+`).
//! 3. [`embedding`] provides the text-to-unit-vector contract and cosine math.
//! 4. [`clustering`] groups a week's articles into topics, scores cohesion,
//!    picks representatives, and applies the topic selection quota.
//! 5. [`prompting`] renders the three prompt variants (baseline, HG, HG-NC)
//!    under a token budget.
//! 6. [`dataset`] pairs teacher-generated analyses with ground-truth-stripped
//!    prompts and exports instruction-tuning JSONL.
//! 7. [`evaluation`] parses model outputs and computes binary accuracy,
//!    ROUGE-1/2/L, term frequencies, and the per-week case analysis.
//!
//! Everything is replayable offline: market data comes from fixture
//! directories, embeddings from a deterministic hashed-token embedder, and LLM
//! completions from a record/replay cassette layer ([`llm`]).

pub mod clustering;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod labeling;
pub mod llm;
pub mod market_data;
pub mod prompting;
