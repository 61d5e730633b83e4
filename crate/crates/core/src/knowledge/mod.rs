//! Background knowledge for stance targets: Wikipedia lookup, a durable
//! cache, curated page maps and the target-as-knowledge fallback.

mod cache;
mod rate;
mod record;
mod resolver;
mod source;

pub use cache::{CorruptCacheLine, KnowledgeCache};
pub use rate::RateLimiter;
pub use record::{KnowledgeRecord, KnowledgeStatus, TargetPageMap};
pub use resolver::{BulkResolution, KnowledgeResolver, TargetFailure};
pub use source::{PageContent, PageSource, SourceError, WikipediaSource};

/// Environment variable that switches resolution to cache-only mode.
pub const OFFLINE_ENV: &str = "WIKISTANCE_OFFLINE";

/// True when [`OFFLINE_ENV`] is set to a truthy value.
pub fn offline_from_env() -> bool {
    std::env::var(OFFLINE_ENV)
        .map(|v| matches!(v.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on"))
        .unwrap_or(false)
}

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("stance target is empty")]
    EmptyTarget,
    #[error("knowledge source unavailable for {target:?}: {reason}")]
    UpstreamUnavailable { target: String, reason: String },
    #[error("curated page {title:?} for target {target:?} has no usable summary")]
    ManualPageMissing { target: String, title: String },
    #[error("invalid knowledge record for {target:?}: {reason}")]
    InvalidRecord { target: String, reason: String },
    #[error("manual page map: {0}")]
    ManualMap(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
