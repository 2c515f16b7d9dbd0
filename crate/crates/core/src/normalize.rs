//! Text cleaning applied to tweet text before feature extraction.
//!
//! The passes run in a fixed order: mentions and hashtags, emoji and
//! symbols, ellipses, letter elongation, whitespace. Each pass only deletes
//! scalars (or squeezes whitespace), and no later pass can create input for
//! an earlier one, so `clean_text` is idempotent.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::emoji::EmojiRangeSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub remove_mentions: bool,
    pub remove_hashtags: bool,
    pub strip_symbols: BTreeSet<char>,
    pub collapse_ellipsis: bool,
    pub elongation_max_run: usize,
    /// Also strip emoji-like scalars outside the extraction ranges
    /// (variation selectors, ZWJ, misc symbols and so on).
    pub strip_unmapped_emoji: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            remove_mentions: true,
            remove_hashtags: true,
            strip_symbols: ['&', '*', '%'].into_iter().collect(),
            collapse_ellipsis: true,
            elongation_max_run: 1,
            strip_unmapped_emoji: true,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elongation_max_run == 0 {
            return Err(Error::Config(
                "elongation_max_run must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Emoji-adjacent scalars that fall outside the extraction ranges.
fn is_extra_pictographic(c: char) -> bool {
    matches!(c as u32,
        0x200D | 0xFE0E | 0xFE0F | 0x20E3
        | 0x2600..=0x26FF
        | 0x2B00..=0x2BFF
        | 0x3030 | 0x303D | 0x3297 | 0x3299
        | 0x1F000..=0x1F2FF
        | 0x1F700..=0x1F8FF
        | 0x1FA00..=0x1FAFF
        | 0xE0020..=0xE007F)
}

fn is_arabic_letter(c: char) -> bool {
    ('\u{0600}'..='\u{06FF}').contains(&c) && c.is_alphabetic()
}

/// Shorten every run of one repeated Arabic letter to at most `max_run`.
///
/// Scalars outside the Arabic block are left alone. A `max_run` of zero is
/// treated as one.
pub fn collapse_elongation(text: &str, max_run: usize) -> String {
    let max_run = max_run.max(1);
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in text.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= max_run || !is_arabic_letter(c) {
            out.push(c);
        }
    }
    out
}

fn strip_tagged_tokens(text: &str, config: &CleaningConfig) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let tagged = (c == '@' && config.remove_mentions) || (c == '#' && config.remove_hashtags);
        if tagged && chars.peek().is_some_and(|n| !n.is_whitespace()) {
            while chars.peek().is_some_and(|n| !n.is_whitespace()) {
                chars.next();
            }
            continue;
        }
        out.push(c);
    }
    out
}

fn strip_ellipses(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run = String::new();
    let flush = |run: &mut String, out: &mut String| {
        if run == "." {
            out.push('.');
        }
        run.clear();
    };
    for c in text.chars() {
        if c == '.' || c == '\u{2026}' {
            run.push(c);
        } else {
            flush(&mut run, &mut out);
            out.push(c);
        }
    }
    flush(&mut run, &mut out);
    out
}

fn squeeze_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Clean raw tweet text with the standard emoji set.
pub fn clean_text(raw: &str, config: &CleaningConfig) -> String {
    clean_text_with(raw, config, EmojiRangeSet::standard())
}

/// Clean raw tweet text, stripping every scalar of `emoji`.
pub fn clean_text_with(raw: &str, config: &CleaningConfig, emoji: &EmojiRangeSet) -> String {
    let text = strip_tagged_tokens(raw, config);
    let text: String = text
        .chars()
        .filter(|&c| {
            !(emoji.contains(c)
                || config.strip_symbols.contains(&c)
                || (config.strip_unmapped_emoji && is_extra_pictographic(c)))
        })
        .collect();
    let text = if config.collapse_ellipsis {
        strip_ellipses(&text)
    } else {
        text
    };
    let text = collapse_elongation(&text, config.elongation_max_run);
    squeeze_whitespace(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emoji::extract_emojis;
    use proptest::prelude::*;

    fn clean(s: &str) -> String {
        clean_text(s, &CleaningConfig::default())
    }

    #[test]
    fn worked_examples() {
        assert_eq!(clean("@XXX مبروك عقبالي 😏"), "مبروك عقبالي");
        assert_eq!(clean(""), "");
        assert_eq!(clean("احبك كتييييير ... &"), "احبك كتير");
    }

    #[test]
    fn elongation() {
        assert_eq!(collapse_elongation("اووووي", 1), "اوي");
        assert_eq!(collapse_elongation("ab", 1), "ab");
        assert_eq!(collapse_elongation("هههههه", 2), "هه");
        assert_eq!(collapse_elongation("aaaa 1111", 1), "aaaa 1111");
        assert_eq!(collapse_elongation("عالاليز", 1), "عالاليز");
    }

    #[test]
    fn hashtags_and_symbols() {
        assert_eq!(clean("#الهلال فاز*% 100"), "فاز 100");
        assert_eq!(clean("انا @ هنا"), "انا @ هنا");
        assert_eq!(clean("وش… ذا.. طيب."), "وش ذا طيب.");
    }

    #[test]
    fn config_respected() {
        let cfg = CleaningConfig {
            remove_mentions: false,
            ..Default::default()
        };
        assert_eq!(clean_text("hi @name", &cfg), "hi @name");
        let cfg = CleaningConfig {
            remove_hashtags: false,
            ..Default::default()
        };
        assert_eq!(clean_text("#tag x", &cfg), "#tag x");
    }

    #[test]
    fn strips_pictographs_outside_ranges() {
        assert_eq!(clean("حلو ⭐ ☀️ 👨\u{200D}👩"), "حلو");
        let keep = CleaningConfig {
            strip_unmapped_emoji: false,
            ..Default::default()
        };
        assert_eq!(clean_text("حلو ⭐", &keep), "حلو ⭐");
    }

    #[test]
    fn zero_max_run_rejected_by_validate() {
        let cfg = CleaningConfig {
            elongation_max_run: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn noisy_text() -> impl Strategy<Value = String> {
        let pieces = prop_oneof![
            Just("@".to_string()),
            Just("#".to_string()),
            Just(".".to_string()),
            Just("…".to_string()),
            Just("&".to_string()),
            Just(" ".to_string()),
            Just("\t".to_string()),
            Just("ي".to_string()),
            Just("و".to_string()),
            Just("😂".to_string()),
            Just("❤️".to_string()),
            "[ا-ي]{1,3}",
            any::<char>().prop_map(|c| c.to_string()),
        ];
        proptest::collection::vec(pieces, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn idempotent(s in noisy_text()) {
            let once = clean(&s);
            prop_assert_eq!(clean(&once), once);
        }

        #[test]
        fn emoji_free_and_not_longer(s in noisy_text()) {
            let out = clean(&s);
            prop_assert!(extract_emojis(&out).is_empty());
            prop_assert!(out.chars().count() <= s.chars().count());
        }

        #[test]
        fn idempotent_with_longer_runs(s in noisy_text(), max_run in 1usize..4) {
            let cfg = CleaningConfig { elongation_max_run: max_run, ..Default::default() };
            let once = clean_text(&s, &cfg);
            prop_assert_eq!(clean_text(&once, &cfg), once);
        }
    }
}
