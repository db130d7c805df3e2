//! Cleaning, mixed-script segmentation and stopword removal.
//!
//! Chinese runs are segmented one character per token. Latin and digit runs
//! are split on whitespace and punctuation and lowercased, so compounds such
//! as `CH40X` or `100KM` survive as single tokens.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use unicode_normalization::UnicodeNormalization;

/// Segmented document. Tokens are non-empty and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Panics if a token is empty or contains whitespace.
    pub fn new(tokens: Vec<String>) -> Self {
        for t in &tokens {
            assert!(
                !t.is_empty() && !t.chars().any(char::is_whitespace),
                "invalid token {t:?}"
            );
        }
        Self(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

/// NFKC-normalize, drop control characters, collapse whitespace runs to a
/// single space and trim. NFKC also folds full-width Latin and digits.
pub fn clean(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.nfkc() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else if ch.is_control() {
            continue;
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Han ideographs, kana and hangul.
pub fn is_cjk(ch: char) -> bool {
    matches!(ch as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    Cjk,
    Latin,
}

/// Script class of a token, judged by its first character.
pub fn script_of(token: &str) -> Script {
    match token.chars().next() {
        Some(c) if is_cjk(c) => Script::Cjk,
        _ => Script::Latin,
    }
}

/// Segment cleaned text into tokens.
pub fn tokenize_mixed(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if is_cjk(ch) {
            flush(&mut word, &mut tokens);
            tokens.push(ch.to_string());
        } else if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            flush(&mut word, &mut tokens);
        }
    }
    flush(&mut word, &mut tokens);
    TokenSeq(tokens)
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(core::mem::take(word));
    }
}

/// Order-preserving filter.
pub fn remove_stopwords(seq: TokenSeq, stopwords: &BTreeSet<String>) -> TokenSeq {
    TokenSeq(
        seq.0
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .collect(),
    )
}

/// Chinese and English stopword lists, each applied to tokens of its own
/// script.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords {
    pub cjk: BTreeSet<String>,
    pub latin: BTreeSet<String>,
}

const DEFAULT_ZH: &str = include_str!("../data/stopwords_zh.txt");
const DEFAULT_EN: &str = include_str!("../data/stopwords_en.txt");

impl Stopwords {
    /// The bundled lists.
    pub fn builtin() -> Self {
        Self {
            cjk: parse_stopword_list(DEFAULT_ZH),
            latin: parse_stopword_list(DEFAULT_EN),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn contains(&self, token: &str) -> bool {
        match script_of(token) {
            Script::Cjk => self.cjk.contains(token),
            Script::Latin => self.latin.contains(token),
        }
    }

    pub fn apply(&self, seq: TokenSeq) -> TokenSeq {
        TokenSeq(seq.0.into_iter().filter(|t| !self.contains(t)).collect())
    }
}

/// One token per line; `#` starts a comment. English entries are lowercased
/// to match tokenizer output.
pub fn parse_stopword_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.to_lowercase())
        .collect()
}

/// `clean`, `tokenize_mixed`, then stopword removal.
pub fn preprocess(text: &str, stopwords: &Stopwords) -> TokenSeq {
    stopwords.apply(tokenize_mixed(&clean(text)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn clean_collapses_whitespace() {
        assert_eq!(clean("DME  05\t'IWF'"), "DME 05 'IWF'");
    }

    #[test]
    fn clean_folds_full_width() {
        assert_eq!(clean("ＡＢＣ１２３"), "ABC123");
    }

    #[test]
    fn clean_empty_and_controls() {
        assert_eq!(clean(""), "");
        assert_eq!(clean("  \u{7}a\u{0}b \n"), "ab");
        assert_eq!(clean("机场\u{3000}关闭"), "机场 关闭");
    }

    #[test]
    fn tokenize_cjk_per_character() {
        let seq = tokenize_mixed(&clean("仅供测试, 不可使用"));
        assert_eq!(seq.tokens(), toks(&["仅", "供", "测", "试", "不", "可", "使", "用"]));
    }

    #[test]
    fn tokenize_latin_compounds() {
        assert_eq!(
            tokenize_mixed("DME 05 'IWF' CH40X").tokens(),
            toks(&["dme", "05", "iwf", "ch40x"])
        );
        assert_eq!(tokenize_mixed("RADIUS 1000M").tokens(), toks(&["radius", "1000m"]));
    }

    #[test]
    fn tokenize_mixed_row() {
        let seq = tokenize_mixed(&clean("半径 100KM 范围内, 高度在 6600M(含)"));
        assert_eq!(
            seq.tokens(),
            toks(&["半", "径", "100km", "范", "围", "内", "高", "度", "在", "6600m", "含"])
        );
    }

    #[test]
    fn stopwords_exact_and_order_preserving() {
        let set: BTreeSet<String> = ["the".to_string()].into_iter().collect();
        let out = remove_stopwords(TokenSeq::new(toks(&["the", "runway"])), &set);
        assert_eq!(out.tokens(), toks(&["runway"]));

        let seq = TokenSeq::new(toks(&["a", "b"]));
        assert_eq!(remove_stopwords(seq.clone(), &BTreeSet::new()), seq);

        let zh: BTreeSet<String> = ["的".to_string()].into_iter().collect();
        let out = remove_stopwords(TokenSeq::new(toks(&["的", "跑", "道"])), &zh);
        assert_eq!(out.tokens(), toks(&["跑", "道"]));
    }

    #[test]
    fn stopword_file_comments() {
        let set = parse_stopword_list("# header\nThe\n  of # trailing\n\n");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["of", "the"]);
    }

    #[test]
    fn builtin_lists_load() {
        let sw = Stopwords::builtin();
        assert!(sw.contains("的"));
        assert!(sw.contains("the"));
        assert!(!sw.contains("rwy"));
    }

    proptest! {
        #[test]
        fn latin_tokenize_is_idempotent(s in "[A-Za-z0-9 ,.'()/-]{0,60}") {
            let once = tokenize_mixed(&clean(&s));
            let twice = tokenize_mixed(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_never_empty_or_spaced(s in "\\PC{0,40}") {
            let seq = tokenize_mixed(&clean(&s));
            for t in seq.tokens() {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }
    }
}
