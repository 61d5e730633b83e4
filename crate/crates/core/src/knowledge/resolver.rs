use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use tracing::{debug, info, warn};

use super::{KnowledgeCache, KnowledgeError, KnowledgeRecord, KnowledgeStatus, PageContent, PageSource, RateLimiter, TargetPageMap};

/// Resolves stance targets to knowledge records: cache first, then the
/// curated map, then the page source's first recommendation, falling back
/// to the target string when no page exists.
pub struct KnowledgeResolver {
    cache: KnowledgeCache,
    manual_map: TargetPageMap,
    source: Option<Box<dyn PageSource>>,
    limiter: RateLimiter,
    offline: bool,
    parallelism: usize,
    upstream_lookups: AtomicUsize,
}

/// One failed target from a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetFailure {
    pub index: usize,
    pub target: String,
    pub reason: String,
}

/// Outcome of [`KnowledgeResolver::bulk_resolve`], aligned with the input.
#[derive(Debug, Clone)]
pub struct BulkResolution {
    pub entries: Vec<Result<KnowledgeRecord, TargetFailure>>,
}

impl BulkResolution {
    pub fn records(&self) -> impl Iterator<Item = &KnowledgeRecord> {
        self.entries.iter().filter_map(|e| e.as_ref().ok())
    }

    pub fn failures(&self) -> Vec<&TargetFailure> {
        self.entries.iter().filter_map(|e| e.as_ref().err()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(Result::is_ok)
    }
}

impl KnowledgeResolver {
    pub fn new(cache: KnowledgeCache) -> Self {
        Self {
            cache,
            manual_map: TargetPageMap::new(),
            source: None,
            limiter: RateLimiter::default(),
            offline: false,
            parallelism: 1,
            upstream_lookups: AtomicUsize::new(0),
        }
    }

    pub fn with_manual_map(mut self, map: TargetPageMap) -> Self {
        self.manual_map = map;
        self
    }

    pub fn with_source(mut self, source: Box<dyn PageSource>) -> Self {
        self.source = Some(source);
        self
    }

    pub fn with_rate_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    /// In offline mode a cache miss is an error instead of a fetch.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn cache(&self) -> &KnowledgeCache {
        &self.cache
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    /// Number of targets that have been looked up against the page source.
    pub fn upstream_lookups(&self) -> usize {
        self.upstream_lookups.load(Ordering::SeqCst)
    }

    pub fn resolve_page(&self, target: &str) -> Result<KnowledgeRecord, KnowledgeError> {
        if target.trim().is_empty() {
            return Err(KnowledgeError::EmptyTarget);
        }
        if let Some(record) = self.cache.get(target) {
            return Ok(record);
        }
        let record = self.fetch(target)?;
        self.cache.put(&record)?;
        Ok(record)
    }

    fn fetch(&self, target: &str) -> Result<KnowledgeRecord, KnowledgeError> {
        let unavailable = |reason: String| KnowledgeError::UpstreamUnavailable { target: target.to_string(), reason };
        if self.offline {
            return Err(unavailable("offline mode and no cached entry".into()));
        }
        let source = self.source.as_deref().ok_or_else(|| unavailable("no page source configured".into()))?;
        self.upstream_lookups.fetch_add(1, Ordering::SeqCst);

        if let Some(title) = self.manual_map.get(target) {
            self.limiter.acquire();
            return match source.page(title).map_err(|e| unavailable(e.0))? {
                PageContent::Article { summary, .. } if !summary.trim().is_empty() => {
                    Ok(KnowledgeRecord::from_page(target, title, &summary, KnowledgeStatus::Manual))
                }
                _ => Err(KnowledgeError::ManualPageMissing { target: target.to_string(), title: title.to_string() }),
            };
        }

        self.limiter.acquire();
        let candidates = source.search(target).map_err(|e| unavailable(e.0))?;
        let Some(first) = candidates.first() else {
            debug!(target, "no page found, using target as knowledge");
            return Ok(KnowledgeRecord::fallback(target));
        };
        self.limiter.acquire();
        let content = match source.page(first).map_err(|e| unavailable(e.0))? {
            PageContent::Disambiguation { title, options } => match options.first() {
                Some(choice) => {
                    info!(target, disambiguation = %title, choice = %choice, "taking first suggested resolution");
                    self.limiter.acquire();
                    source.page(choice).map_err(|e| unavailable(e.0))?
                }
                None => PageContent::Missing,
            },
            other => other,
        };
        match content {
            PageContent::Article { title, summary } if !summary.trim().is_empty() => {
                Ok(KnowledgeRecord::from_page(target, &title, &summary, KnowledgeStatus::Resolved))
            }
            _ => {
                warn!(target, candidate = %first, "first candidate has no usable summary, using target as knowledge");
                Ok(KnowledgeRecord::fallback(target))
            }
        }
    }

    /// Resolves every target, cache first. Duplicates are looked up once;
    /// failures are reported per position instead of aborting the batch.
    pub fn bulk_resolve<S: AsRef<str>>(&self, targets: &[S]) -> BulkResolution {
        let mut unique: Vec<&str> = Vec::new();
        let mut seen = HashMap::new();
        for t in targets {
            let t = t.as_ref();
            if !seen.contains_key(t) {
                seen.insert(t, unique.len());
                unique.push(t);
            }
        }

        let results: Vec<Mutex<Option<Result<KnowledgeRecord, String>>>> =
            unique.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.parallelism.min(unique.len()).max(1);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= unique.len() {
                        break;
                    }
                    let outcome = self.resolve_page(unique[i]).map_err(|e| e.to_string());
                    *results[i].lock().expect("result slot poisoned") = Some(outcome);
                });
            }
        });
        let results: Vec<Result<KnowledgeRecord, String>> = results
            .into_iter()
            .map(|slot| slot.into_inner().expect("result slot poisoned").expect("every slot filled"))
            .collect();

        let entries = targets
            .iter()
            .enumerate()
            .map(|(index, t)| {
                let t = t.as_ref();
                results[seen[t]].clone().map_err(|reason| TargetFailure { index, target: t.to_string(), reason })
            })
            .collect();
        BulkResolution { entries }
    }
}
