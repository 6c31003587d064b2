//! Flat `key = value` text with `[section]` headers.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique
//! within a section; sections may not repeat. Values run to the end of the
//! line with surrounding whitespace trimmed.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub path: PathBuf,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(path, ln, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::parse(path, ln, "empty section name"));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(Error::parse(path, ln, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line: ln,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, ln, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(path, ln, "empty key"));
            }
            let section = sections
                .last_mut()
                .ok_or_else(|| Error::parse(path, ln, "entry before any [section]"))?;
            if section.entries.iter().any(|e| e.key == key) {
                return Err(Error::parse(path, ln, format!("duplicate key `{key}` in [{}]", section.name)));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: ln,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            sections,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn section(&self, name: &str) -> Option<SectionView<'_>> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .map(|s| SectionView { doc: self, section: s })
    }

    pub fn require(&self, name: &str) -> Result<SectionView<'_>> {
        self.section(name)
            .ok_or_else(|| Error::parse(&self.path, 0, format!("missing section [{name}]")))
    }
}

/// Typed accessors over one section; errors carry the entry's line.
#[derive(Debug, Clone, Copy)]
pub struct SectionView<'a> {
    doc: &'a Document,
    section: &'a Section,
}

impl<'a> SectionView<'a> {
    pub fn name(&self) -> &'a str {
        &self.section.name
    }

    pub fn entries(&self) -> &'a [Entry] {
        &self.section.entries
    }

    pub fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.section.entries.iter().find(|e| e.key == key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    pub fn error(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(&self.doc.path, line, msg)
    }

    pub fn str(&self, key: &str) -> Result<&'a str> {
        self.entry(key).map(|e| e.value.as_str()).ok_or_else(|| {
            self.error(
                self.section.line,
                format!("missing key `{key}` in [{}]", self.section.name),
            )
        })
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let e = self.entry(key).ok_or_else(|| {
            self.error(
                self.section.line,
                format!("missing key `{key}` in [{}]", self.section.name),
            )
        })?;
        e.value
            .parse()
            .map_err(|_| self.error(e.line, format!("invalid value `{}` for `{key}`", e.value)))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.has(key) {
            self.parse(key)
        } else {
            Ok(default)
        }
    }

    /// Finite float.
    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            let line = self.entry(key).map_or(0, |e| e.line);
            return Err(self.error(line, format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.has(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    /// Whitespace- or comma-separated list.
    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let e = self.entry(key).ok_or_else(|| {
            self.error(
                self.section.line,
                format!("missing key `{key}` in [{}]", self.section.name),
            )
        })?;
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.error(e.line, format!("invalid list item `{s}` for `{key}`")))
            })
            .collect()
    }

    /// Keys that are not in `known`, for typo detection.
    pub fn unknown_keys(&self, known: &[&str]) -> Vec<&'a Entry> {
        self.section
            .entries
            .iter()
            .filter(|e| !known.contains(&e.key.as_str()))
            .collect()
    }
}

/// Builder for documents in the same format.
#[derive(Debug, Default, Clone)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push('[');
        self.out.push_str(name);
        self.out.push_str("]\n");
        self
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.out.push_str(key);
        self.out.push_str(" = ");
        self.out.push_str(&value.to_string());
        self.out.push('\n');
        self
    }

    /// Floats in shortest round-trip exponent form, space separated.
    pub fn floats(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let s: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
        self.kv(key, s.join(" "))
    }

    pub fn finish(&self) -> String {
        self.out.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Result<Document> {
        Document::parse(text, Path::new("t.spec"))
    }

    #[test]
    fn sections_and_values() {
        let d = doc("# c\n[a]\nx = 1\ny = hello world \n\n[b]\nz = 0.5, 1e-3 2\n").unwrap();
        let a = d.require("a").unwrap();
        assert_eq!(a.parse::<u32>("x").unwrap(), 1);
        assert_eq!(a.str("y").unwrap(), "hello world");
        assert_eq!(d.require("b").unwrap().list::<f64>("z").unwrap(), vec![0.5, 1e-3, 2.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match doc("[a]\nx = 1\nbogus\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let d = doc("[a]\n\nx = abc\n").unwrap();
        match d.require("a").unwrap().parse::<f64>("x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(doc("x = 1\n").is_err());
        assert!(doc("[a]\nx = 1\nx = 2\n").is_err());
        assert!(doc("[a]\n[a]\n").is_err());
    }

    #[test]
    fn float_roundtrip() {
        let vals = [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0];
        let text = Writer::new().section("s").floats("v", &vals).finish();
        let d = doc(&text).unwrap();
        assert_eq!(d.require("s").unwrap().list::<f64>("v").unwrap(), vals);
    }
}
