//! Emoji extraction and the emoji → category label map.
//!
//! Extraction works scalar by scalar over six inclusive code point ranges.
//! A maximal sequence of consecutive in-range scalars is an emoji *run*; the
//! label of a text is taken from the first scalar of its first run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::TweetRecord;
use crate::error::{Error, Result};

/// The six extraction ranges, inclusive, in match order.
pub const EMOJI_RANGES: [(u32, u32); 6] = [
    (0x1F600, 0x1F64F),
    (0x1F300, 0x1F5FF),
    (0x1F680, 0x1F6FF),
    (0x1F1E0, 0x1F1FF),
    (0x2700, 0x27BF),
    (0x1F900, 0x1F9FF),
];

/// Number of emoji categories.
pub const NUM_CATEGORIES: usize = 14;

const DEFAULT_LABEL_MAP: &str = include_str!("../data/labelmap.tsv");

/// Set of scalars that count as emoji: the fixed ranges plus explicit
/// singletons (mapped emoji that fall outside every range).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiRangeSet {
    ranges: Vec<(char, char)>,
    singletons: BTreeSet<char>,
}

impl EmojiRangeSet {
    /// The six ranges with no singletons.
    pub fn ranges_only() -> Self {
        let ranges = EMOJI_RANGES
            .iter()
            .map(|&(lo, hi)| {
                (
                    char::from_u32(lo).expect("range bound is a scalar"),
                    char::from_u32(hi).expect("range bound is a scalar"),
                )
            })
            .collect();
        EmojiRangeSet {
            ranges,
            singletons: BTreeSet::new(),
        }
    }

    /// The ranges extended with every scalar of `map` not already covered.
    pub fn for_label_map(map: &LabelMap) -> Self {
        let mut set = Self::ranges_only();
        let extra: Vec<char> = map
            .mapped_scalars()
            .filter(|&c| !set.in_ranges(c))
            .collect();
        set.singletons.extend(extra);
        set
    }

    /// Ranges plus the singletons of the built-in label map.
    pub fn standard() -> &'static Self {
        static STANDARD: OnceLock<EmojiRangeSet> = OnceLock::new();
        STANDARD.get_or_init(|| Self::for_label_map(LabelMap::builtin()))
    }

    pub fn singletons(&self) -> impl Iterator<Item = char> + '_ {
        self.singletons.iter().copied()
    }

    fn in_ranges(&self, c: char) -> bool {
        self.ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi)
    }

    pub fn contains(&self, c: char) -> bool {
        self.in_ranges(c) || self.singletons.contains(&c)
    }

    /// Every maximal run of member scalars, in text order.
    pub fn extract<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut runs = Vec::new();
        let mut start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            match (self.contains(c), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push(&text[s..i]);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push(&text[s..]);
        }
        runs
    }

    /// First scalar of the first run.
    pub fn first(&self, text: &str) -> Option<char> {
        text.chars().find(|&c| self.contains(c))
    }
}

/// Runs of emoji scalars in `text` under the standard set.
pub fn extract_emojis(text: &str) -> Vec<&str> {
    EmojiRangeSet::standard().extract(text)
}

/// First emoji scalar of `text` under the standard set.
pub fn first_emoji(text: &str) -> Option<char> {
    EmojiRangeSet::standard().first(text)
}

/// Which duplicate wins when an emoji is listed under several categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precedence {
    #[default]
    First,
    Last,
}

/// Ordered category list plus a function from emoji scalar to category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    categories: Vec<String>,
    emoji: BTreeMap<char, usize>,
    // every scalar listed under each category, listing order, duplicates removed
    listed: Vec<Vec<char>>,
}

impl LabelMap {
    /// The built-in table under first-occurrence precedence.
    pub fn builtin() -> &'static LabelMap {
        static BUILTIN: OnceLock<LabelMap> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            LabelMap::parse(DEFAULT_LABEL_MAP, Precedence::First)
                .expect("built-in label map parses")
        })
    }

    /// Source text of the built-in data file.
    pub fn builtin_source() -> &'static str {
        DEFAULT_LABEL_MAP
    }

    pub fn load(path: &Path, precedence: Precedence) -> Result<LabelMap> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelMap::parse(&text, precedence)
    }

    pub fn parse(text: &str, precedence: Precedence) -> Result<LabelMap> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Categories,
            Emoji,
        }
        let mut section = Section::None;
        let mut categories: Vec<String> = Vec::new();
        let mut pairs: Vec<(usize, char, String)> = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            match line.trim() {
                "[categories]" => {
                    section = Section::Categories;
                    continue;
                }
                "[emoji]" => {
                    section = Section::Emoji;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(Error::LabelMap(format!(
                        "line {lineno}: entry outside of a section"
                    )))
                }
                Section::Categories => {
                    let name = line.trim().to_string();
                    if categories.contains(&name) {
                        return Err(Error::LabelMap(format!(
                            "line {lineno}: duplicate category {name:?}"
                        )));
                    }
                    categories.push(name);
                }
                Section::Emoji => {
                    let (emoji, category) = line.split_once('\t').ok_or_else(|| {
                        Error::LabelMap(format!("line {lineno}: expected emoji<TAB>category"))
                    })?;
                    let scalar = emoji_key(emoji).ok_or_else(|| {
                        Error::LabelMap(format!(
                            "line {lineno}: {emoji:?} is not a single emoji scalar"
                        ))
                    })?;
                    pairs.push((lineno, scalar, category.trim().to_string()));
                }
            }
        }

        if categories.len() != NUM_CATEGORIES {
            return Err(Error::LabelMap(format!(
                "expected {NUM_CATEGORIES} categories, found {}",
                categories.len()
            )));
        }

        let mut emoji = BTreeMap::new();
        let mut listed = vec![Vec::new(); categories.len()];
        for (lineno, scalar, category) in pairs {
            let index = categories
                .iter()
                .position(|c| *c == category)
                .ok_or_else(|| {
                    Error::LabelMap(format!("line {lineno}: unknown category {category:?}"))
                })?;
            if !listed[index].contains(&scalar) {
                listed[index].push(scalar);
            }
            match precedence {
                Precedence::First => {
                    emoji.entry(scalar).or_insert(index);
                }
                Precedence::Last => {
                    emoji.insert(scalar, index);
                }
            }
        }
        Ok(LabelMap {
            categories,
            emoji,
            listed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn mapped_scalars(&self) -> impl Iterator<Item = char> + '_ {
        self.emoji.keys().copied()
    }

    /// Category index of a scalar, if it is mapped.
    pub fn index_of(&self, e: char) -> Option<usize> {
        self.emoji.get(&e).copied()
    }

    pub fn categorize(&self, e: char) -> Option<&str> {
        self.index_of(e).map(|i| self.categories[i].as_str())
    }

    pub fn encode_label(&self, category: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c == category)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    pub fn decode_label(&self, index: usize) -> Option<&str> {
        self.categories.get(index).map(String::as_str)
    }

    /// Scalars mapped to category `index`, in code point order.
    pub fn emojis_for(&self, index: usize) -> Vec<char> {
        self.emoji
            .iter()
            .filter(|&(_, &i)| i == index)
            .map(|(&c, _)| c)
            .collect()
    }

    /// Scalars listed under category `index` in the data file, whether or
    /// not precedence assigned them to it.
    pub fn listed_for(&self, index: usize) -> &[char] {
        &self.listed[index]
    }

    /// Parse a label given either as a category name or as an index.
    pub fn parse_label(&self, s: &str) -> Result<usize> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return if i < self.num_classes() {
                Ok(i)
            } else {
                Err(Error::LabelOutOfRange {
                    label: i,
                    classes: self.num_classes(),
                })
            };
        }
        self.encode_label(s)
    }
}

impl fmt::Display for LabelMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[categories]")?;
        for c in &self.categories {
            writeln!(f, "{c}")?;
        }
        writeln!(f, "\n[emoji]")?;
        for (e, &i) in &self.emoji {
            writeln!(f, "{e}\t{}", self.categories[i])?;
        }
        Ok(())
    }
}

/// Reduce an emoji cell to its single base scalar, ignoring variation selectors.
fn emoji_key(s: &str) -> Option<char> {
    let mut it = s
        .trim()
        .chars()
        .filter(|&c| c != '\u{FE0F}' && c != '\u{FE0E}');
    let first = it.next()?;
    match it.next() {
        None => Some(first),
        Some(_) => None,
    }
}

pub fn categorize(e: char, map: &LabelMap) -> Option<&str> {
    map.categorize(e)
}

pub fn encode_label(category: &str, map: &LabelMap) -> Result<usize> {
    map.encode_label(category)
}

/// Attach labels from each record's first emoji.
///
/// Records that already carry a label keep it. Records whose emoji is
/// missing or unmapped are dropped; the second value counts them.
pub fn label_records(records: Vec<TweetRecord>, map: &LabelMap) -> (Vec<TweetRecord>, usize) {
    let extractor = EmojiRangeSet::for_label_map(map);
    let mut unmapped = 0;
    let mut labeled = Vec::with_capacity(records.len());
    for mut r in records {
        if r.label.is_some() {
            labeled.push(r);
            continue;
        }
        let e = r.emoji.or_else(|| extractor.first(&r.raw_text));
        match e.and_then(|e| map.index_of(e)) {
            Some(i) => {
                r.emoji = e;
                r.label = Some(i);
                labeled.push(r);
            }
            None => unmapped += 1,
        }
    }
    (labeled, unmapped)
}
