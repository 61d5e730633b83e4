use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// How a target's knowledge text was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeStatus {
    /// First page recommended by the page source.
    Resolved,
    /// No page exists; the target string itself is the knowledge.
    Fallback,
    /// Page chosen through a curated target → title map.
    Manual,
}

impl KnowledgeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeStatus::Resolved => "resolved",
            KnowledgeStatus::Fallback => "fallback",
            KnowledgeStatus::Manual => "manual",
        }
    }
}

/// Background knowledge attached to one stance target.
///
/// Serialized as one flat JSON object per cache line with the keys
/// `target`, `page_title`, `summary`, `status` and `fetched_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub target: String,
    pub page_title: Option<String>,
    pub summary: String,
    pub status: KnowledgeStatus,
    pub fetched_at: DateTime<Utc>,
}

impl KnowledgeRecord {
    pub fn fallback(target: &str) -> Self {
        Self {
            target: target.to_string(),
            page_title: None,
            summary: target.to_string(),
            status: KnowledgeStatus::Fallback,
            fetched_at: Utc::now(),
        }
    }

    pub fn from_page(target: &str, title: &str, summary: &str, status: KnowledgeStatus) -> Self {
        Self {
            target: target.to_string(),
            page_title: Some(title.to_string()),
            summary: summary.to_string(),
            status,
            fetched_at: Utc::now(),
        }
    }

    /// Checks the record-level invariants. Cache lines that fail this are
    /// treated as corrupt.
    pub fn validate(&self) -> Result<(), String> {
        if self.target.trim().is_empty() {
            return Err("target is blank".into());
        }
        match self.status {
            KnowledgeStatus::Fallback => {
                if self.page_title.is_some() {
                    return Err("fallback record carries a page title".into());
                }
                if self.summary != self.target {
                    return Err("fallback summary differs from the target".into());
                }
            }
            KnowledgeStatus::Resolved | KnowledgeStatus::Manual => {
                match &self.page_title {
                    Some(t) if !t.trim().is_empty() => {}
                    _ => return Err(format!("{} record without a page title", self.status.as_str())),
                }
                if self.summary.trim().is_empty() {
                    return Err(format!("{} record with an empty summary", self.status.as_str()));
                }
            }
        }
        Ok(())
    }

    /// True when both records agree on everything except `fetched_at`.
    pub fn same_content(&self, other: &KnowledgeRecord) -> bool {
        self.target == other.target
            && self.page_title == other.page_title
            && self.summary == other.summary
            && self.status == other.status
    }
}

/// Curated target → Wikipedia page title mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetPageMap {
    entries: BTreeMap<String, String>,
}

impl TargetPageMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a mapping. Duplicate keys and blank titles are rejected.
    pub fn insert(&mut self, target: &str, title: &str) -> Result<(), KnowledgeError> {
        if title.trim().is_empty() {
            return Err(KnowledgeError::ManualMap(format!("blank page title for target {target:?}")));
        }
        if self.entries.contains_key(target) {
            return Err(KnowledgeError::ManualMap(format!("target {target:?} mapped twice")));
        }
        self.entries.insert(target.to_string(), title.trim().to_string());
        Ok(())
    }

    pub fn get(&self, target: &str) -> Option<&str> {
        self.entries.get(target).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Parses the tab-separated `target<TAB>page title` format. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, KnowledgeError> {
        let mut map = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (target, title) = line.split_once('\t').ok_or_else(|| {
                KnowledgeError::ManualMap(format!("line {}: expected two tab-separated columns", lineno + 1))
            })?;
            if title.contains('\t') {
                return Err(KnowledgeError::ManualMap(format!("line {}: more than two columns", lineno + 1)));
            }
            let target = target.trim();
            if target.is_empty() {
                return Err(KnowledgeError::ManualMap(format!("line {}: blank target", lineno + 1)));
            }
            map.insert(target, title)
                .map_err(|e| KnowledgeError::ManualMap(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = fs::read_to_string(path).map_err(|e| KnowledgeError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for TargetPageMap {
    /// Later duplicates are dropped.
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        let mut map = Self::new();
        for (k, v) in iter {
            let _ = map.insert(k, v);
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_record_is_valid() {
        let r = KnowledgeRecord::fallback("salt preference");
        assert_eq!(r.summary, "salt preference");
        assert!(r.page_title.is_none());
        r.validate().unwrap();
    }

    #[test]
    fn invalid_records_are_flagged() {
        let mut r = KnowledgeRecord::fallback("tennis fans");
        r.summary = "Tennis".into();
        assert!(r.validate().is_err());

        let mut r = KnowledgeRecord::from_page("x", "X", "about x", KnowledgeStatus::Resolved);
        r.page_title = None;
        assert!(r.validate().is_err());

        let r = KnowledgeRecord::from_page("x", "X", "  ", KnowledgeStatus::Manual);
        assert!(r.validate().is_err());
    }

    #[test]
    fn manual_map_parses_comments_and_tabs() {
        let text = "# covid targets\nAnthony Fauci\tAnthony Fauci\n\nstay at home orders\tCOVID-19 lockdowns\n";
        let map = TargetPageMap::parse(text).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map.get("stay at home orders"), Some("COVID-19 lockdowns"));
        assert_eq!(map.get("Anthony Fauci"), Some("Anthony Fauci"));
    }

    #[test]
    fn manual_map_rejects_duplicates_and_blank_titles() {
        assert!(TargetPageMap::parse("a\tA\na\tB\n").is_err());
        assert!(TargetPageMap::parse("a\t \n").is_err());
        assert!(TargetPageMap::parse("just one column\n").is_err());
    }
}
