use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level given to script pairs the table does not list.
pub const UNRELATED_LEVEL: u8 = 4;

/// Curated script relationship levels over unordered pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityLevelTable {
    entries: BTreeMap<(String, String), u8>,
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl SimilarityLevelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: &str, b: &str, level: u8) -> Result<()> {
        if a == b {
            return Err(Error::InvalidArgument(format!(
                "self-pair '{a}' in similarity table"
            )));
        }
        if !(1..=3).contains(&level) {
            return Err(Error::InvalidArgument(format!(
                "similarity level {level} for '{a}'/'{b}' is not 1, 2 or 3"
            )));
        }
        let k = key(a, b);
        if let Some(&prev) = self.entries.get(&k) {
            if prev != level {
                return Err(Error::InvalidArgument(format!(
                    "pair '{a}'/'{b}' listed with levels {prev} and {level}"
                )));
            }
        }
        self.entries.insert(k, level);
        Ok(())
    }

    /// Level of a pair; unlisted pairs are unrelated.
    pub fn level(&self, a: &str, b: &str) -> u8 {
        self.entries
            .get(&key(a, b))
            .copied()
            .unwrap_or(UNRELATED_LEVEL)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.entries
            .iter()
            .map(|((a, b), &l)| (a.as_str(), b.as_str(), l))
    }

    /// Parses `<script_a>\t<script_b>\t<1|2|3>` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [a, b, l] = cols[..] else {
                return Err(Error::Manifest(format!(
                    "similarity table line {}: expected three tab-separated fields",
                    n + 1
                )));
            };
            let level: u8 = l.trim().parse().map_err(|_| {
                Error::Manifest(format!("similarity table line {}: bad level '{l}'", n + 1))
            })?;
            t.insert(a, b, level)?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        self.entries()
            .map(|(a, b, l)| format!("{a}\t{b}\t{l}\n"))
            .collect()
    }

    /// Small table over the Unicode scripts of the rendered benchmark.
    pub fn unicode_illustrative() -> Self {
        let mut t = Self::new();
        for (a, b, l) in [
            ("Georgian_Mkhedruli", "Georgian_Asomtavruli", 1),
            ("Hiragana", "Katakana", 1),
            ("Greek", "Cyrillic", 2),
            ("Brahmi", "Devanagari", 2),
            ("Latin", "Hangul", 3),
            ("Devanagari", "CJK", 3),
        ] {
            t.insert(a, b, l).expect("static table is valid");
        }
        t
    }
}
