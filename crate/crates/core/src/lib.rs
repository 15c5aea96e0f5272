//! Span-level evaluation of translation-error annotations.
//!
//! The crate covers four groups of analyses:
//!
//! - agreement between two annotators on target-side error spans ([`span_match`]),
//!   threshold-free character overlap ([`char_metrics`]) and multi-rater
//!   reliability ([`reliability`]);
//! - projection of a good/incorrect translation pair onto a human reference to
//!   obtain a gold error span, with classic and tolerant scoring ([`refspan`]);
//! - fixed-effects logistic regressions linking annotated errors to downstream
//!   benchmark correctness, with marginal effects, block bootstrap and a
//!   counterfactual ranking diagnostic ([`impact`]);
//! - the shared domain types and JSON-Lines readers ([`model`], [`io`]).
//!
//! All character offsets are counted in Unicode scalar values.

pub mod char_metrics;
pub mod error;
pub mod impact;
pub mod io;
pub mod model;
pub mod refspan;
pub mod reliability;
pub mod span_match;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    AnnotationSet, CorrectnessRecord, Corpus, ErrorSpan, Interval, MqmLabel, Segment, Severity,
    Side, SourceAnomaly,
};

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_250_101;
