//! Next-location prediction harness.
//!
//! The pipeline turns raw mobility logs (Foursquare-style check-in files or
//! dense GPS traces) into per-user prediction instances, renders them as
//! prompts, queries a predictor backend (a remote chat-completion endpoint or
//! a deterministic offline oracle), parses the free-text answers into ranked
//! location lists, and scores everything with ACC@k, multi-run aggregates,
//! ablation grids, source attribution, and a data-contamination quiz.
//!
//! Modules map one-to-one onto pipeline stages:
//!
//! - [`ingest`]: check-in/GPS file parsing, user filtering, dataset stats
//! - [`stops`]: stay-point detection, density clustering, grid cells
//! - [`instances`]: trajectory segmentation, splits, (H, C, target) windows
//! - [`prompts`]: zero-/one-/few-shot prompt rendering (golden-file contract)
//! - [`predictors`]: remote client with caching/retries/rate limiting, oracles
//! - [`parse`]: tolerant extraction of ranked ids from model text
//! - [`eval`]: ACC@k, run aggregation, relative changes, attribution, ablation
//! - [`contamination`]: four-choice verbatim-row quiz generation and scoring
//! - [`report`]: CSV summaries and SVG charts
//! - [`pipeline`]: end-to-end prepare/predict/evaluate entry points
//! - [`manifest`]: reproducible run manifests and atomic file writes

pub mod contamination;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod instances;
pub mod jsonl;
pub mod manifest;
mod par;
pub mod parse;
pub mod pipeline;
pub mod predictors;
pub mod prompts;
pub mod report;
pub mod stops;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Tool version stamped into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
