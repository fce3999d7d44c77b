use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Role, SubjectAction, SubjectDataset, SubjectRow, SUBJECT_COLUMNS};

/// A rejected row and why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

/// Accepted rows plus per-row diagnostics for the rejected ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: SubjectDataset,
    pub issues: Vec<RowIssue>,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

fn check_row(row: &SubjectRow, support: Option<(f64, f64)>) -> Option<String> {
    if let Some((lo, hi)) = support {
        if !(lo..=hi).contains(&row.precision) {
            return Some(format!(
                "subject {} round {}: precision {} outside declared support [{lo}, {hi}]",
                row.subject_id, row.round, row.precision
            ));
        }
    }
    if !(0.0..=1.0).contains(&row.precision) {
        return Some(format!("precision {} is not a probability", row.precision));
    }
    if row.group_size == 0 || row.group_size.is_multiple_of(2) {
        return Some(format!("group size {} must be odd", row.group_size));
    }
    match (row.action, row.vote_matches_signal) {
        (SubjectAction::Vote, None) => return Some("vote row without vote_matches_signal".into()),
        (SubjectAction::Delegate | SubjectAction::Abstain, Some(_)) => {
            return Some("vote_matches_signal set on a row without a vote".into())
        }
        _ => {}
    }
    if row.role == Role::Expert && row.action != SubjectAction::Vote {
        return Some("experts can only vote".into());
    }
    let legal = matches!(
        (row.treatment, row.action),
        (_, SubjectAction::Vote)
            | (crate::model::Treatment::Ld, SubjectAction::Delegate)
            | (crate::model::Treatment::Mva, SubjectAction::Abstain)
    );
    if !legal {
        return Some(format!("action {:?} is not available under {}", row.action, row.treatment));
    }
    None
}

/// Reads a subject dataset. Rows that fail to parse or validate are collected
/// as issues; a header that does not match the schema or a repeated
/// (subject, treatment, round) key is a hard error.
///
/// With `support` given, every precision must lie in it.
pub fn ingest<R: Read>(reader: R, support: Option<(f64, f64)>) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(IngestReport::default());
    }
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != SUBJECT_COLUMNS {
        return Err(Error::Dataset {
            line: 1,
            message: format!("header {found:?} does not match schema {SUBJECT_COLUMNS:?}"),
        });
    }
    let mut report = IngestReport::default();
    let mut seen: HashMap<(String, crate::model::Treatment, u32), u64> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: SubjectRow = match record.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                report.issues.push(RowIssue {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Some(message) = check_row(&row, support) {
            report.issues.push(RowIssue { line, message });
            continue;
        }
        let key = (row.subject_id.clone(), row.treatment, row.round);
        if let Some(first) = seen.insert(key, line) {
            return Err(Error::Dataset {
                line,
                message: format!(
                    "duplicate row for subject {} in {} round {} (first seen at line {first})",
                    row.subject_id, row.treatment, row.round
                ),
            });
        }
        report.dataset.rows.push(row);
    }
    Ok(report)
}

pub fn ingest_path(path: &Path, support: Option<(f64, f64)>) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest(file, support)
}

/// Writes rows with the schema header; the output ingests back to the same
/// dataset.
pub fn write_csv<W: Write>(dataset: &SubjectDataset, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(SUBJECT_COLUMNS)?;
    for row in &dataset.rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "session_id,treatment,group_size,round,subject_id,role,precision,signal_correct,action,vote_matches_signal,state,group_decision_correct\n";

    #[test]
    fn empty_input_is_empty_dataset() {
        let r = ingest("".as_bytes(), None).unwrap();
        assert!(r.dataset.is_empty() && r.is_clean());
        let r = ingest(HEADER.as_bytes(), None).unwrap();
        assert!(r.dataset.is_empty() && r.is_clean());
    }

    #[test]
    fn out_of_support_row_is_reported_with_its_line() {
        let text = format!(
            "{HEADER}s1,LD,5,1,a,nonexpert,0.60,1,vote,1,2,1\ns1,LD,5,1,b,nonexpert,0.75,1,delegate,,2,1\n"
        );
        let r = ingest(text.as_bytes(), Some((0.5, 0.7))).unwrap();
        assert_eq!(r.dataset.len(), 1);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].line, 3);
        assert!(r.issues[0].message.contains("0.75"));
    }

    #[test]
    fn malformed_fields_are_issues() {
        let text = format!("{HEADER}s1,LD,5,1,a,nonexpert,0.60,yes,vote,1,2,1\ns1,LD,5,2,a,nonexpert,0.60,1,vote,1,3,1\n");
        let r = ingest(text.as_bytes(), None).unwrap();
        assert_eq!(r.issues.len(), 2);
        assert!(r.dataset.is_empty());
    }

    #[test]
    fn duplicate_key_is_fatal() {
        let text = format!(
            "{HEADER}s1,LD,5,1,a,nonexpert,0.60,1,vote,1,2,1\ns1,LD,5,1,a,nonexpert,0.55,1,delegate,,2,1\n"
        );
        match ingest(text.as_bytes(), None) {
            Err(Error::Dataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_fatal() {
        assert!(ingest("a,b,c\n1,2,3\n".as_bytes(), None).is_err());
    }

    #[test]
    fn abstaining_in_ld_is_rejected() {
        let text = format!("{HEADER}s1,LD,5,1,a,nonexpert,0.60,1,abstain,,2,1\n");
        assert_eq!(ingest(text.as_bytes(), None).unwrap().issues.len(), 1);
    }

    #[test]
    fn write_then_ingest_is_identity() {
        let text = format!(
            "{HEADER}s1,MVA,15,3,a,expert,0.7,0,vote,0,1,0\ns1,MVA,15,3,b,nonexpert,0.5123456789012345,1,abstain,,1,0\n"
        );
        let r = ingest(text.as_bytes(), None).unwrap();
        let mut out = Vec::new();
        write_csv(&r.dataset, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(ingest(out.as_slice(), None).unwrap().dataset, r.dataset);
    }
}
