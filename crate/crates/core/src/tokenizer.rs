//! Deterministic word tokenization with code-point offsets.
//!
//! Two rule sets:
//!
//! * space-delimited languages: split on Unicode whitespace, detach leading
//!   and trailing punctuation one code point at a time, split English
//!   contractions at the apostrophe (`don't` → `do` `n't`, `it's` → `it` `'s`),
//!   keep internal hyphens and other internal punctuation attached;
//! * Chinese and Japanese: every CJK ideograph (and kana) is its own token,
//!   runs of other non-space characters go through the space-delimited rules.
//!
//! Offsets are code-point indices into the input, `char_start` inclusive and
//! `char_end` exclusive. The rules are frozen: span indices stored in
//! annotation files depend on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    SpaceDelimited,
    Cjk,
}

impl Script {
    pub fn for_lang(lang: &str) -> Self {
        match lang.trim().to_ascii_lowercase().as_str() {
            "zh" | "ja" => Script::Cjk,
            _ => Script::SpaceDelimited,
        }
    }
}

pub fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x3134F)
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Tokenize `text` under the rule set for `lang` (an ISO-639-1 code).
pub fn tokenize(text: &str, lang: &str) -> Vec<Token> {
    tokenize_script(text, Script::for_lang(lang))
}

pub fn tokenize_script(text: &str, script: Script) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut chunk_start: Option<usize> = None;

    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                split_word(&chars, s, i, &mut out);
            }
        } else if script == Script::Cjk && is_cjk(c) {
            if let Some(s) = chunk_start.take() {
                split_word(&chars, s, i, &mut out);
            }
            push(&chars, i, i + 1, &mut out);
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        split_word(&chars, s, chars.len(), &mut out);
    }
    out
}

fn push(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    out.push(Token {
        text: chars[start..end].iter().collect(),
        char_start: start,
        char_end: end,
    });
}

/// Apply the space-delimited rules to the whitespace-free run `chars[start..end]`.
fn split_word(chars: &[char], mut start: usize, end: usize, out: &mut Vec<Token>) {
    while start < end && is_punct(chars[start]) {
        push(chars, start, start + 1, out);
        start += 1;
    }
    let mut core_end = end;
    while core_end > start && is_punct(chars[core_end - 1]) {
        core_end -= 1;
    }

    if start < core_end {
        match contraction_split(&chars[start..core_end]) {
            Some(k) => {
                push(chars, start, start + k, out);
                push(chars, start + k, core_end, out);
            }
            None => push(chars, start, core_end, out),
        }
    }
    for i in core_end..end {
        push(chars, i, i + 1, out);
    }
}

/// Offset inside `word` where an English clitic begins, if any.
fn contraction_split(word: &[char]) -> Option<usize> {
    let n = word.len();
    let lower: Vec<char> = word.iter().map(|c| c.to_ascii_lowercase()).collect();
    if n > 3 && lower[n - 3] == 'n' && is_apostrophe(lower[n - 2]) && lower[n - 1] == 't' {
        return Some(n - 3);
    }
    let p = lower.iter().rposition(|&c| is_apostrophe(c))?;
    if p == 0 {
        return None;
    }
    let suffix: String = lower[p + 1..].iter().collect();
    match suffix.as_str() {
        "s" | "m" | "d" | "re" | "ve" | "ll" => Some(p),
        _ => None,
    }
}

/// Character span `[char_start, char_end)` covered by the inclusive token
/// range `start..=end`.
pub fn char_span_of(tokens: &[Token], start: usize, end: usize) -> Result<(usize, usize)> {
    if start > end || end >= tokens.len() {
        return Err(Error::Index {
            start,
            end,
            len: tokens.len(),
        });
    }
    Ok((tokens[start].char_start, tokens[end].char_end))
}

/// Text of the sentence between two code-point offsets.
pub fn slice_chars(text: &str, char_start: usize, char_end: usize) -> String {
    text.chars()
        .skip(char_start)
        .take(char_end.saturating_sub(char_start))
        .collect()
}

/// Case- and punctuation-insensitive form used to compare marked text with
/// sentence text: lowercased, curly apostrophes straightened, whitespace
/// removed, leading and trailing punctuation stripped (unless the text is
/// nothing but punctuation).
pub fn match_key(text: &str) -> String {
    let folded: Vec<char> = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(fold_char)
        .collect();
    let start = folded.iter().position(|&c| !is_punct(c));
    match start {
        None => folded.into_iter().collect(),
        Some(s) => {
            let e = folded.iter().rposition(|&c| !is_punct(c)).unwrap_or(s);
            folded[s..=e].iter().collect()
        }
    }
}

/// Per-code-point case fold. Multi-char lowercase expansions are kept whole.
pub fn fold_char(c: char) -> impl Iterator<Item = char> {
    let c = match c {
        '\u{2018}' | '\u{2019}' => '\'',
        '\u{201C}' | '\u{201D}' => '"',
        other => other,
    };
    c.to_lowercase()
}

pub fn fold_str(s: &str) -> String {
    s.chars().flat_map(fold_char).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(toks: &[Token]) -> Vec<&str> {
        toks.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("", "en").is_empty());
        assert!(tokenize("   \t", "zh").is_empty());
    }

    #[test]
    fn trailing_period_detached() {
        let t = tokenize("The battery is working.", "en");
        assert_eq!(texts(&t), ["The", "battery", "is", "working", "."]);
    }

    #[test]
    fn internal_hyphen_kept() {
        let t = tokenize("Anti-fraud tips:", "en");
        assert_eq!(texts(&t), ["Anti-fraud", "tips", ":"]);
    }

    #[test]
    fn contractions() {
        let t = tokenize("I don't think it's theirs'.", "en");
        assert_eq!(texts(&t), ["I", "do", "n't", "think", "it", "'s", "theirs", "'", "."]);
        let t = tokenize("We’ll see", "en");
        assert_eq!(texts(&t), ["We", "’ll", "see"]);
        // a bare apostrophe suffix that is not a clitic stays attached
        assert_eq!(texts(&tokenize("rock'n", "en")), ["rock'n"]);
    }

    #[test]
    fn leading_and_trailing_punct_runs() {
        let t = tokenize("(\"Hello\")!", "en");
        assert_eq!(texts(&t), ["(", "\"", "Hello", "\"", ")", "!"]);
        assert_eq!(t[2].char_start, 2);
        assert_eq!(t[5].char_end, 10);
    }

    #[test]
    fn chinese_per_character_with_latin_runs() {
        let t = tokenize("我用iPhone 12拍照，很好。", "zh");
        assert_eq!(
            texts(&t),
            ["我", "用", "iPhone", "12", "拍", "照", "，", "很", "好", "。"]
        );
    }

    #[test]
    fn chinese_source_of_omission_example() {
        let t = tokenize("用了很久,除了低音出不来,总体还不错。", "zh");
        assert_eq!(t.len(), 19);
        assert_eq!(texts(&t)[9..12], ["出", "不", "来"]);
    }

    #[test]
    fn fluency_example_comma_index() {
        let t = tokenize("I bought it when the product was on sale, the price is not low", "en");
        assert_eq!(t[9].text, ",");
    }

    #[test]
    fn char_span_examples() {
        let t = tokenize("The battery is working", "en");
        assert_eq!(char_span_of(&t, 3, 3).unwrap(), (15, 22));
        let one = tokenize("Hello", "en");
        assert_eq!(char_span_of(&one, 0, 0).unwrap(), (0, 5));
        assert!(matches!(char_span_of(&t, 2, 1), Err(Error::Index { .. })));
        assert!(matches!(char_span_of(&t, 0, 4), Err(Error::Index { .. })));
    }

    #[test]
    fn match_key_strips_edges_only() {
        assert_eq!(match_key(" “Tips:” "), "tips");
        assert_eq!(match_key("Anti-fraud"), "anti-fraud");
        assert_eq!(match_key(","), ",");
        assert_eq!(match_key("tried  to"), "triedto");
    }
}
