//! JSON Lines and small-file helpers shared by the pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// How unknown fields in input records are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Validation(format!("cannot serialize record: {e}")))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads one record per non-empty line. With `Strictness::Strict` and a
/// field list, any key outside `fields` is rejected.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    strictness: Strictness,
    fields: Option<&[&str]>,
) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let (Strictness::Strict, Some(fields), Some(obj)) = (strictness, fields, value.as_object())
        {
            if let Some(unknown) = obj.keys().find(|k| !fields.contains(&k.as_str())) {
                return Err(parse_err(format!("unknown field `{unknown}`")));
            }
        }
        records.push(serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("cannot serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Rec {
        a: u32,
    }

    #[test]
    fn strict_rejects_unknown_lenient_ignores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        std::fs::write(&path, "{\"a\":1}\n\n{\"a\":2,\"b\":3}\n").unwrap();
        let err = read_jsonl::<Rec>(&path, Strictness::Strict, Some(&["a"])).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let ok: Vec<Rec> = read_jsonl(&path, Strictness::Lenient, Some(&["a"])).unwrap();
        assert_eq!(ok, vec![Rec { a: 1 }, Rec { a: 2 }]);
    }
}
