//! JSONL corpus files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textproc::Sample;

/// Parses a corpus: one `Sample` object per line, blank lines skipped.
/// Ids must be unique and texts non-empty.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::MalformedCorpus {
            line: lineno,
            reason: e.to_string(),
        })?;
        if sample.text.is_empty() {
            return Err(Error::MalformedCorpus {
                line: lineno,
                reason: format!("sample `{}` has empty text", sample.id),
            });
        }
        if !seen.insert(sample.id.clone()) {
            return Err(Error::MalformedCorpus {
                line: lineno,
                reason: format!("duplicate sample id `{}`", sample.id),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Sample>> {
    parse_corpus(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Hex SHA-256 over ids and texts in corpus order.
pub fn fingerprint(samples: &[Sample]) -> String {
    let mut hasher = Sha256::new();
    for s in samples {
        hasher.update(s.id.as_bytes());
        hasher.update([0u8]);
        hasher.update(s.text.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::Label;

    #[test]
    fn parses_optional_fields() {
        let text = concat!(
            r#"{"id":"a","text":"He runs."}"#,
            "\n\n",
            r#"{"id":"b","text":"She runs.","source":"stereoset","label":"anti-stereotype"}"#,
            "\n"
        );
        let corpus = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[1].label, Some(Label::AntiStereotype));
        assert_eq!(corpus[1].source.as_deref(), Some("stereoset"));
    }

    #[test]
    fn rejects_duplicates_empty_text_and_bad_json() {
        let dup = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            parse_corpus(dup.as_bytes()),
            Err(Error::MalformedCorpus { line: 2, .. })
        ));
        let empty = "{\"id\":\"a\",\"text\":\"\"}\n";
        assert!(matches!(
            parse_corpus(empty.as_bytes()),
            Err(Error::MalformedCorpus { line: 1, .. })
        ));
        let bad = "{\"id\":\"a\",\"text\":\"x\",\"label\":\"neutral\"}\n";
        assert!(matches!(
            parse_corpus(bad.as_bytes()),
            Err(Error::MalformedCorpus { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = vec![Sample::new("1", "he is here"), Sample::new("2", "she is")];
        write_jsonl(&path, &corpus).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), corpus);
        assert_eq!(fingerprint(&corpus), fingerprint(&read_corpus(&path).unwrap()));
        assert_ne!(fingerprint(&corpus), fingerprint(&corpus[..1]));
    }
}
