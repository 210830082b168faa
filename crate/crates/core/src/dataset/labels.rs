//! Reference label files: one `id,label` line per recording, `-1` normal, `1` abnormal.

use std::collections::BTreeMap;
use std::path::Path;

use super::Label;
use crate::{Error, Result};

pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, Label>> {
    parse_labels(&std::fs::read_to_string(path)?)
}

pub fn parse_labels(text: &str) -> Result<BTreeMap<String, Label>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, raw) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `id,label`", lineno + 1)))?;
        let (id, raw) = (id.trim(), raw.trim());
        if id.is_empty() {
            return Err(Error::Parse(format!("line {}: empty id", lineno + 1)));
        }
        let label = match raw {
            "-1" => Label::Normal,
            "1" => Label::Abnormal,
            other => return Err(Error::Parse(format!("invalid label {other}"))),
        };
        if out.insert(id.to_string(), label).is_some() {
            return Err(Error::Parse(format!("duplicate id {id}")));
        }
    }
    Ok(out)
}

/// Inverse of [`parse_labels`] for labelled entries.
pub fn format_labels<'a>(entries: impl IntoIterator<Item = (&'a str, Label)>) -> String {
    let mut s = String::new();
    for (id, label) in entries {
        let code = match label {
            Label::Abnormal => "1",
            _ => "-1",
        };
        s.push_str(id);
        s.push(',');
        s.push_str(code);
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_lines() {
        let m = parse_labels("a0001,-1\n").unwrap();
        assert_eq!(m["a0001"], Label::Normal);
        let m = parse_labels("a0001,1\na0002,-1\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["a0001"], Label::Abnormal);
    }

    #[test]
    fn rejects_bad_values() {
        assert_eq!(
            parse_labels("a0001,2\n").unwrap_err().to_string(),
            "parse error: invalid label 2"
        );
        assert!(parse_labels("a0001,1\na0001,-1\n")
            .unwrap_err()
            .to_string()
            .contains("duplicate id a0001"));
        assert!(parse_labels("a0001\n").is_err());
    }

    #[test]
    fn format_round_trips() {
        let m = parse_labels("b,1\na,-1\n").unwrap();
        let text = format_labels(m.iter().map(|(k, v)| (k.as_str(), *v)));
        assert_eq!(parse_labels(&text).unwrap(), m);
    }
}
