//! Transcript persistence: a JSONL stream, one canonical record per line,
//! append-friendly so interrupted runs can resume.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::domain::TranscriptRecord;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line} is not valid: {message}")]
    Malformed { line: usize, message: String },
}

/// Read every record from a transcript stream. A torn final line (from an
/// interrupted write) is dropped; malformed lines elsewhere are an error.
pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptRecord>, StoreError> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TranscriptRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) if i + 1 == lines.len() => {
                eprintln!("warning: dropping torn final transcript line: {e}");
            }
            Err(e) => {
                return Err(StoreError::Malformed { line: i + 1, message: e.to_string() })
            }
        }
    }
    Ok(records)
}

/// Serialize one record as its canonical single line.
pub fn to_line(record: &TranscriptRecord) -> String {
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    line
}

/// Incremental transcript writer; flushes after every record so a crash
/// loses at most the line being written.
pub struct TranscriptWriter {
    out: BufWriter<File>,
}

impl TranscriptWriter {
    pub fn append(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TranscriptWriter { out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &TranscriptRecord) -> Result<(), StoreError> {
        self.out.write_all(to_line(record).as_bytes())?;
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{InteractionRecord, QualityScores};

    fn record(id: &str) -> TranscriptRecord {
        TranscriptRecord {
            problem_id: id.into(),
            mode: "interview".into(),
            modified_question: Some("masked?".into()),
            interactions: vec![InteractionRecord {
                attempt: 1,
                answer: "a".into(),
                correct_or_precision: 0.75,
                error_type: None,
                feedback: Some("f".into()),
                feedback_type: Some("conceptual_guidance".into()),
                quality: Some(QualityScores {
                    completeness: 0.835,
                    redundancy: 0.649,
                    readability: 0.969,
                    depth: 0.649,
                }),
            }],
            score_at: vec![0.75, 0.75],
            followups: vec![],
            termination: "retries_exhausted".into(),
            config_hash: "deadbeef".into(),
        }
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        let line = to_line(&record("p1"));
        let parsed: TranscriptRecord = serde_json::from_str(line.trim_end()).unwrap();
        assert_eq!(to_line(&parsed), line);
    }

    #[test]
    fn torn_final_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut contents = to_line(&record("p1"));
        contents.push_str("{\"problem_id\": \"p2\", \"mode\"");
        std::fs::write(&path, contents).unwrap();
        let records = read_transcripts(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].problem_id, "p1");
    }

    #[test]
    fn malformed_interior_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let contents = format!("not json\n{}", to_line(&record("p1")));
        std::fs::write(&path, contents).unwrap();
        assert!(matches!(
            read_transcripts(&path),
            Err(StoreError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn writer_appends_incrementally() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        {
            let mut w = TranscriptWriter::append(&path).unwrap();
            w.write(&record("p1")).unwrap();
        }
        {
            let mut w = TranscriptWriter::append(&path).unwrap();
            w.write(&record("p2")).unwrap();
        }
        let records = read_transcripts(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].problem_id, "p2");
    }
}
