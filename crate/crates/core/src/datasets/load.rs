use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use super::{DatasetError, DatasetSpec, IngestFormat, Split, StanceExample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    MissingColumn(String),
    UnknownLabel(String),
    LabelOutsideArity(String),
    EmptyField(String),
    BadSeenFlag(String),
    DuplicateId(String),
}

/// A malformed row (or header) found while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub split: Split,
    /// 1-based data row; 0 for header problems.
    pub row: usize,
    pub kind: IssueKind,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} row {}: ", self.split, self.row)?;
        match &self.kind {
            IssueKind::MissingColumn(c) => write!(f, "missing column {c:?}"),
            IssueKind::UnknownLabel(l) => write!(f, "unknown label {l:?}"),
            IssueKind::LabelOutsideArity(l) => write!(f, "label {l:?} not allowed for this dataset"),
            IssueKind::EmptyField(c) => write!(f, "empty {c}"),
            IssueKind::BadSeenFlag(v) => write!(f, "unreadable seen flag {v:?}"),
            IssueKind::DuplicateId(id) => write!(f, "duplicate example_id {id:?}"),
        }
    }
}

/// Every issue found in a load attempt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub issues: Vec<RowIssue>,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} malformed row(s)", self.issues.len())?;
        for issue in self.issues.iter().take(20) {
            write!(f, "; {issue}")?;
        }
        if self.issues.len() > 20 {
            write!(f, "; ...")?;
        }
        Ok(())
    }
}

/// Reads the train, validation and test files of `spec`. Labels are
/// normalized and checked against the dataset's arity; all malformed rows
/// are collected before failing.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Vec<StanceExample>, DatasetError> {
    spec.validate()?;
    let mut examples = Vec::new();
    let mut report = LoadReport::default();
    for split in Split::ALL {
        let path = spec.source_files.get(split);
        if !path.is_file() {
            return Err(DatasetError::MissingFile(path.clone()));
        }
        read_split(path, split, spec, &mut examples, &mut report)?;
    }

    let mut first_seen: HashMap<&str, ()> = HashMap::new();
    let mut dupes = Vec::new();
    for ex in &examples {
        if first_seen.insert(ex.example_id.as_str(), ()).is_some() {
            dupes.push(RowIssue { split: ex.split, row: 0, kind: IssueKind::DuplicateId(ex.example_id.clone()) });
        }
    }
    report.issues.extend(dupes);

    if report.issues.is_empty() {
        Ok(examples)
    } else {
        Err(DatasetError::SchemaMismatch(report))
    }
}

fn read_split(
    path: &Path,
    split: Split,
    spec: &DatasetSpec,
    out: &mut Vec<StanceExample>,
    report: &mut LoadReport,
) -> Result<(), DatasetError> {
    let format: &IngestFormat = &spec.format;
    let delimiter = u8::try_from(format.delimiter)
        .map_err(|_| DatasetError::InvalidSpec(format!("delimiter {:?} is not a single byte", format.delimiter)))?;
    let csv_err = |e| DatasetError::Csv(path.to_path_buf(), e);
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).flexible(true).from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);

    let cols = &format.columns;
    let mut missing = |name: &str| {
        report.issues.push(RowIssue { split, row: 0, kind: IssueKind::MissingColumn(name.to_string()) });
    };
    let id_col = match &cols.example_id {
        Some(name) => match column(name) {
            Some(i) => Some(i),
            None => {
                missing(name);
                return Ok(());
            }
        },
        None => None,
    };
    let seen_col = match &cols.seen {
        Some(name) => match column(name) {
            Some(i) => Some(i),
            None => {
                missing(name);
                return Ok(());
            }
        },
        None => None,
    };
    let (Some(doc_col), Some(target_col), Some(label_col)) = (column(&cols.document), column(&cols.target), column(&cols.label))
    else {
        for name in [&cols.document, &cols.target, &cols.label] {
            if column(name).is_none() {
                missing(name);
            }
        }
        return Ok(());
    };

    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(csv_err)?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let mut issue = |kind| report.issues.push(RowIssue { split, row: row_no, kind });

        let document = field(doc_col);
        let target = field(target_col);
        let raw_label = field(label_col);
        let mut ok = true;
        if document.trim().is_empty() {
            issue(IssueKind::EmptyField(cols.document.clone()));
            ok = false;
        }
        if target.trim().is_empty() {
            issue(IssueKind::EmptyField(cols.target.clone()));
            ok = false;
        }
        let label = match format.normalize_label(raw_label) {
            Some(l) if spec.label_arity.admits(l) => Some(l),
            Some(_) => {
                issue(IssueKind::LabelOutsideArity(raw_label.to_string()));
                None
            }
            None => {
                issue(IssueKind::UnknownLabel(raw_label.to_string()));
                None
            }
        };
        let example_id = match id_col {
            Some(c) => {
                let id = field(c).trim();
                if id.is_empty() {
                    issue(IssueKind::EmptyField("example_id".into()));
                    ok = false;
                }
                id.to_string()
            }
            None => format!("{split}-{row_no}"),
        };
        let seen = match seen_col {
            Some(c) if field(c).trim().is_empty() => None,
            Some(c) => match parse_flag(field(c)) {
                Some(v) => Some(v),
                None => {
                    issue(IssueKind::BadSeenFlag(field(c).to_string()));
                    ok = false;
                    None
                }
            },
            None => None,
        };
        if let (true, Some(label)) = (ok, label) {
            // text is kept verbatim; normalization belongs to the tokenizer
            out.push(StanceExample {
                example_id,
                document: document.to_string(),
                target: target.to_string(),
                label,
                split,
                seen,
            });
        }
    }
    Ok(())
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}
