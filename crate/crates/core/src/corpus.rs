//! Corpus ingestion, screening, splitting and synthetic corpora.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emoji::{EmojiRangeSet, LabelMap, NUM_CATEGORIES};
use crate::error::{Error, Result};

/// One tweet, raw or cleaned.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TweetRecord {
    pub id: String,
    pub raw_text: String,
    pub clean_text: Option<String>,
    pub emoji: Option<char>,
    pub label: Option<usize>,
}

impl TweetRecord {
    /// A record with its first emoji already extracted from `raw_text`.
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let emoji = EmojiRangeSet::standard().first(&raw_text);
        TweetRecord {
            id: id.into(),
            raw_text,
            clean_text: None,
            emoji,
            label: None,
        }
    }

    /// Cleaned text if present, otherwise the raw text.
    pub fn text(&self) -> &str {
        self.clean_text.as_deref().unwrap_or(&self.raw_text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Well-formed data rows read, including rows later dropped as empty.
    pub total_ingested: usize,
    pub dropped_empty: usize,
    /// Rows skipped because they could not be parsed (not in `total_ingested`).
    pub malformed: usize,
    pub with_emoji: usize,
    pub without_emoji: usize,
}

/// Parameters of a train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

fn default_seed() -> u64 {
    42
}

impl SplitSpec {
    pub fn new(train_size: usize) -> Self {
        SplitSpec {
            train_size,
            seed: default_seed(),
            stratified: false,
        }
    }
}

/// Open a CSV file, skipping a leading `#` provenance line if present.
///
/// Returns the reader and the number of physical lines skipped.
pub(crate) fn open_csv(path: &Path) -> Result<(csv::Reader<Box<dyn Read>>, u64)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufReader::new(file);
    let mut first = String::new();
    buf.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let (source, skipped): (Box<dyn Read>, u64) = if first.starts_with('#') {
        (Box::new(buf), 1)
    } else {
        (Box::new(Cursor::new(first.into_bytes()).chain(buf)), 0)
    };
    let reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    Ok((reader, skipped))
}

pub(crate) fn header_index(headers: &csv::ByteRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| {
        let h = std::str::from_utf8(h).unwrap_or("");
        h.trim_start_matches('\u{FEFF}').trim() == name
    })
}

/// Read tweets from a CSV file with a `text` column.
///
/// Optional `id`, `emoji` and `label` columns are honoured; other columns
/// are ignored. Rows whose text is blank are dropped, unparseable rows are
/// skipped, and both are counted in the returned stats. An empty file
/// yields no records.
pub fn ingest_csv(path: &Path) -> Result<(Vec<TweetRecord>, CorpusStats)> {
    ingest_csv_with(path, EmojiRangeSet::standard())
}

pub fn ingest_csv_with(
    path: &Path,
    emoji: &EmojiRangeSet,
) -> Result<(Vec<TweetRecord>, CorpusStats)> {
    let (mut reader, _) = open_csv(path)?;
    let headers = reader
        .byte_headers()
        .map_err(|source| Error::Csv {
            path: path.into(),
            source,
        })?
        .clone();
    if headers.is_empty() {
        return Ok((Vec::new(), CorpusStats::default()));
    }
    let text_col = header_index(&headers, "text").ok_or_else(|| Error::Schema {
        path: path.into(),
        message: "header has no `text` column".into(),
    })?;
    let id_col = header_index(&headers, "id");
    let emoji_col = header_index(&headers, "emoji");
    let label_col = header_index(&headers, "label");

    let mut stats = CorpusStats::default();
    let mut records = Vec::new();
    let mut row = csv::ByteRecord::new();
    let mut ordinal = 0usize;
    loop {
        match reader.read_byte_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
                return Err(Error::Csv {
                    path: path.into(),
                    source: e,
                })
            }
            Err(_) => {
                stats.malformed += 1;
                continue;
            }
        }
        ordinal += 1;
        match parse_row(&row, text_col, id_col, emoji_col, label_col, ordinal) {
            Some(mut rec) => {
                stats.total_ingested += 1;
                if rec.raw_text.trim().is_empty() {
                    stats.dropped_empty += 1;
                    continue;
                }
                if rec.emoji.is_none() {
                    rec.emoji = emoji.first(&rec.raw_text);
                }
                if rec.emoji.is_some() {
                    stats.with_emoji += 1;
                } else {
                    stats.without_emoji += 1;
                }
                records.push(rec);
            }
            None => stats.malformed += 1,
        }
    }
    Ok((records, stats))
}

fn field(row: &csv::ByteRecord, col: Option<usize>) -> Option<Result<&str, ()>> {
    let bytes = row.get(col?)?;
    Some(std::str::from_utf8(bytes).map_err(|_| ()))
}

fn parse_row(
    row: &csv::ByteRecord,
    text_col: usize,
    id_col: Option<usize>,
    emoji_col: Option<usize>,
    label_col: Option<usize>,
    ordinal: usize,
) -> Option<TweetRecord> {
    let raw_text = field(row, Some(text_col))?.ok()?.to_string();
    let id = match field(row, id_col) {
        Some(Ok(id)) if !id.trim().is_empty() => id.trim().to_string(),
        Some(Err(())) => return None,
        _ => ordinal.to_string(),
    };
    let emoji = match field(row, emoji_col) {
        Some(Ok(e)) => e.chars().find(|&c| c != '\u{FE0F}' && !c.is_whitespace()),
        Some(Err(())) => return None,
        None => None,
    };
    let label = match field(row, label_col) {
        Some(Ok(l)) if !l.trim().is_empty() => Some(l.trim().parse::<usize>().ok()?),
        Some(Err(())) => return None,
        _ => None,
    };
    Some(TweetRecord {
        id,
        raw_text,
        clean_text: None,
        emoji,
        label,
    })
}

/// Write records as `id,text,emoji,label`, `text` being the cleaned text
/// when available. `header_comment`, if given, becomes a leading `#` line.
pub fn write_csv(path: &Path, records: &[TweetRecord], header_comment: Option<&str>) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    if let Some(c) = header_comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["id", "text", "emoji", "label"])
        .map_err(csv_err)?;
    for r in records {
        let emoji = r.emoji.map(String::from).unwrap_or_default();
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([r.id.as_str(), r.text(), &emoji, &label])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Keep records that carry an emoji; returns them with the excluded count.
pub fn filter_emoji_bearing(records: Vec<TweetRecord>) -> (Vec<TweetRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| r.emoji.is_some() || EmojiRangeSet::standard().first(&r.raw_text).is_some())
        .collect();
    let excluded = before - kept.len();
    (kept, excluded)
}

/// Seeded train/test partition.
///
/// Both halves keep the input order. In stratified mode each class gets
/// its largest-remainder share of `train_size`.
pub fn split(
    records: &[TweetRecord],
    spec: &SplitSpec,
) -> Result<(Vec<TweetRecord>, Vec<TweetRecord>)> {
    let n = records.len();
    if spec.train_size > n {
        return Err(Error::SplitBounds {
            requested: spec.train_size,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; n];

    if spec.stratified {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let label = r.label.ok_or_else(|| {
                Error::Precondition(format!(
                    "stratified split needs labels; record {} has none",
                    r.id
                ))
            })?;
            by_class.entry(label).or_default().push(i);
        }
        let quotas = stratum_quotas(
            &by_class.values().map(Vec::len).collect::<Vec<_>>(),
            spec.train_size,
        );
        for (members, quota) in by_class.values_mut().zip(quotas) {
            members.shuffle(&mut rng);
            for &i in &members[..quota] {
                in_train[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..spec.train_size] {
            in_train[i] = true;
        }
    }

    let mut train = Vec::with_capacity(spec.train_size);
    let mut test = Vec::with_capacity(n - spec.train_size);
    for (r, &t) in records.iter().zip(&in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}

/// Largest-remainder apportionment of `total` over strata of the given sizes.
/// Ties on the remainder go to the earlier stratum.
fn stratum_quotas(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut rest: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| (s * total % n, i))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - quotas.iter().sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        quotas[i] += 1;
    }
    quotas
}

/// Recipe for a synthetic labeled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// One token list per category, in category order.
    pub lexicons: Vec<Vec<String>>,
    /// Records to generate per category.
    pub counts: Vec<usize>,
    /// Probability that a token is drawn from `noise_lexicon` instead.
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub noise_lexicon: Vec<String>,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

const ARABIC_LETTERS: [char; 28] = [
    'ا', 'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ',
    'ف', 'ق', 'ك', 'ل', 'م', 'ن', 'ه', 'و', 'ي',
];

const NOISE_WORDS: [&str; 16] = [
    "انا",
    "في",
    "من",
    "اليوم",
    "بس",
    "كذا",
    "هذا",
    "مع",
    "يا",
    "لا",
    "كل",
    "شي",
    "وش",
    "ليش",
    "عشان",
    "مره",
];

impl SynthSpec {
    /// Fourteen pairwise-disjoint lexicons, `per_class` records each, no noise.
    ///
    /// Class `c` words start with the `c`-th Arabic letter followed by two
    /// distinct letters from the second half of the alphabet, so no word
    /// repeats a letter and no two classes share a word.
    pub fn separable(per_class: usize) -> Self {
        const WORDS_PER_CLASS: usize = 12;
        let lexicons = (0..NUM_CATEGORIES)
            .map(|c| {
                let mut words = Vec::with_capacity(WORDS_PER_CLASS);
                'outer: for a in 14..28 {
                    for b in 14..28 {
                        if a == b {
                            continue;
                        }
                        // offset by class so lexicons differ beyond the first letter too
                        let (a2, b2) = (14 + (a - 14 + c) % 14, 14 + (b - 14 + c) % 14);
                        words.push(
                            [ARABIC_LETTERS[c], ARABIC_LETTERS[a2], ARABIC_LETTERS[b2]]
                                .iter()
                                .collect::<String>(),
                        );
                        if words.len() == WORDS_PER_CLASS {
                            break 'outer;
                        }
                    }
                }
                words
            })
            .collect();
        SynthSpec {
            lexicons,
            counts: vec![per_class; NUM_CATEGORIES],
            noise_rate: 0.0,
            noise_lexicon: NOISE_WORDS.iter().map(|s| s.to_string()).collect(),
            min_tokens: 3,
            max_tokens: 6,
        }
    }

    /// The separable lexicons with a fraction of tokens replaced by shared noise words.
    pub fn noisy(per_class: usize, noise_rate: f64) -> Self {
        SynthSpec {
            noise_rate,
            ..Self::separable(per_class)
        }
    }

    /// Every category uses the same lexicon and every token is noise.
    pub fn uninformative(per_class: usize) -> Self {
        let shared: Vec<String> = NOISE_WORDS.iter().map(|s| s.to_string()).collect();
        SynthSpec {
            lexicons: vec![shared.clone(); NUM_CATEGORIES],
            counts: vec![per_class; NUM_CATEGORIES],
            noise_rate: 1.0,
            noise_lexicon: shared,
            min_tokens: 3,
            max_tokens: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SynthSpec(m));
        if self.lexicons.len() != NUM_CATEGORIES {
            return bad(format!(
                "expected {NUM_CATEGORIES} lexicons, got {}",
                self.lexicons.len()
            ));
        }
        if self.counts.len() != self.lexicons.len() {
            return bad(format!(
                "{} counts for {} lexicons",
                self.counts.len(),
                self.lexicons.len()
            ));
        }
        if let Some(c) = self.lexicons.iter().position(Vec::is_empty) {
            return bad(format!("lexicon {c} is empty"));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if self.noise_rate > 0.0 && self.noise_lexicon.is_empty() {
            return bad("noise_rate > 0 needs a noise lexicon".into());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad(format!(
                "token range {}..={} is invalid",
                self.min_tokens, self.max_tokens
            ));
        }
        let all = self.lexicons.iter().flatten().chain(&self.noise_lexicon);
        if let Some(w) = all
            .clone()
            .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
        {
            return bad(format!("token {w:?} is empty or contains whitespace"));
        }
        Ok(())
    }

    /// No noise and no token shared between lexicons (or with the noise list).
    pub fn is_separable(&self) -> bool {
        if self.noise_rate != 0.0 {
            return false;
        }
        let mut owner = std::collections::HashMap::new();
        for (c, lex) in self.lexicons.iter().enumerate() {
            for w in lex {
                if *owner.entry(w.as_str()).or_insert(c) != c {
                    return false;
                }
            }
        }
        self.noise_lexicon
            .iter()
            .all(|w| !owner.contains_key(w.as_str()))
    }
}

/// Generate a labeled corpus. Records are interleaved across categories.
///
/// Each record's emoji is drawn from the scalars listed under its category
/// in `map`; the label is the generating category.
pub fn synth_corpus(spec: &SynthSpec, map: &LabelMap, seed: u64) -> Result<Vec<TweetRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = spec.counts.clone();
    let total: usize = remaining.iter().sum();
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        for (class, left) in remaining.iter_mut().enumerate() {
            if *left == 0 {
                continue;
            }
            *left -= 1;
            let n_tokens = rng.gen_range(spec.min_tokens..=spec.max_tokens);
            let mut words: Vec<&str> = Vec::with_capacity(n_tokens + 1);
            for _ in 0..n_tokens {
                let lex = if rng.gen::<f64>() < spec.noise_rate {
                    &spec.noise_lexicon
                } else {
                    &spec.lexicons[class]
                };
                words.push(lex.choose(&mut rng).expect("validated non-empty"));
            }
            let choices = map.listed_for(class);
            let emoji = *choices
                .choose(&mut rng)
                .ok_or_else(|| Error::SynthSpec(format!("category {class} lists no emoji")))?;
            let e = emoji.to_string();
            words.push(&e);
            out.push(TweetRecord {
                id: format!("s{:06}", out.len()),
                raw_text: words.join(" "),
                clean_text: None,
                emoji: Some(emoji),
                label: Some(class),
            });
        }
    }
    Ok(out)
}
