//! Line-oriented file loading shared by the CLI and service.

use std::path::Path;

use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl LoadError {
    pub fn is_io(&self) -> bool {
        matches!(self, LoadError::Io { .. })
    }
}

pub fn read_to_string(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses one JSON value per non-blank line. Line numbers in errors are 1-based.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LoadError> {
    parse_jsonl(&read_to_string(path)?, &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned>(content: &str, origin: &str) -> Result<Vec<T>, LoadError> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| LoadError::Parse {
            path: origin.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize, PartialEq)]
    struct Row {
        a: u32,
    }

    #[test]
    fn reports_line_numbers() {
        let ok: Vec<Row> = parse_jsonl("{\"a\":1}\n\n{\"a\":2}\n", "mem").unwrap();
        assert_eq!(ok, [Row { a: 1 }, Row { a: 2 }]);
        let err = parse_jsonl::<Row>("{\"a\":1}\n{\"a\":\"x\"}\n", "mem").unwrap_err();
        assert!(matches!(err, LoadError::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_file_is_io() {
        let err = read_jsonl::<Row>(Path::new("/definitely/not/here.jsonl")).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/definitely/not/here.jsonl"));
    }
}
