//! Streaming anomaly detection for timestamped edge streams.
//!
//! The engine keeps a bounded, exponentially decayed frequency map of the
//! most active interaction types (the network skeleton), factorizes those
//! frequencies into node embeddings by maximum likelihood under an
//! exponential frequency model, and scores every incoming interaction —
//! and groups of simultaneous interactions sharing a source or destination
//! — by the calibrated tail probability of its observed frequency.
//!
//! The entry points most callers want:
//!
//! - [`engine::Engine`] — the full pipeline over a stream of [`stream::Tick`]s.
//! - [`stream`] — edge-file parsing and coalescing into per-timestamp ticks.
//! - [`evalgen`] — synthetic labeled workloads, AUC, sweeps, aggregation.
//!
//! Runnable examples live under `examples/`; the `ffade` binary exposes the
//! same functionality as subcommands (`detect`, `generate`, `evaluate`,
//! `sweep`, `aggregate`, `dump-embeddings`).

pub mod cli;
pub mod detector;
pub mod engine;
pub mod error;
pub mod evalgen;
pub mod factorizer;
pub mod skeleton;
pub mod stream;

pub use error::Error;

/// Shorthand result type used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
