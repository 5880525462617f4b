//! Tokenization and the append-only vocabulary shared across tasks.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const START: usize = 0;
pub const END: usize = 1;
pub const PAD: usize = 2;
pub const UNKNOWN: usize = 3;

pub const SPECIAL_TOKENS: [&str; 4] = ["<start>", "<end>", "<pad>", "<unk>"];

const FILE_HEADER: &str = "#vocab version";

/// Lowercases, strips punctuation (apostrophes survive only between two
/// alphanumerics) and splits on whitespace.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .split_whitespace()
        .filter_map(|chunk| {
            let chars: Vec<char> = chunk.chars().flat_map(char::to_lowercase).collect();
            let mut token = String::with_capacity(chars.len());
            for (i, &c) in chars.iter().enumerate() {
                if c.is_alphanumeric() {
                    token.push(c);
                } else if c == '\'' {
                    let before = chars[..i].iter().rev().find(|c| **c != '\'');
                    let after = chars[i + 1..].iter().find(|c| **c != '\'');
                    let intra = matches!(before, Some(b) if b.is_alphanumeric())
                        && matches!(after, Some(a) if a.is_alphanumeric())
                        && !token.ends_with('\'');
                    if intra {
                        token.push(c);
                    }
                }
            }
            (!token.is_empty()).then_some(token)
        })
        .collect()
}

/// Tokens whose corpus frequency reaches `min_count`.
pub fn build_task_vocab<S: AsRef<str>>(captions: &[S], min_count: usize) -> BTreeSet<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for caption in captions {
        for token in tokenize(caption.as_ref()) {
            *counts.entry(token).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count.max(1))
        .map(|(t, _)| t)
        .collect()
}

/// Ordered token/index bijection. Specials live at indices 0..4 and an
/// assigned index never changes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    version: u32,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// Specials only, version 0.
    pub fn new() -> Self {
        let tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            version: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-special tokens.
    pub fn words(&self) -> BTreeSet<String> {
        self.tokens[SPECIAL_TOKENS.len()..].iter().cloned().collect()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Union with `new_tokens`; unseen tokens are appended in lexicographic order.
    pub fn accumulate(&self, new_tokens: &BTreeSet<String>) -> Vocabulary {
        let mut next = self.clone();
        for token in new_tokens {
            if !next.index.contains_key(token) {
                next.index.insert(token.clone(), next.tokens.len());
                next.tokens.push(token.clone());
            }
        }
        next.version += 1;
        next
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index_of(t.as_ref()).unwrap_or(UNKNOWN))
            .collect()
    }

    /// `[start] + tokens + [end]` for a raw caption.
    pub fn encode_caption(&self, caption: &str) -> Vec<usize> {
        let mut ids = vec![START];
        ids.extend(self.encode_tokens(&tokenize(caption)));
        ids.push(END);
        ids
    }

    pub fn decode(&self, indices: &[usize]) -> Result<Vec<String>> {
        indices
            .iter()
            .map(|&i| {
                self.token(i)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Contract(format!("token index {i} outside vocabulary of {}", self.len())))
            })
            .collect()
    }

    /// Words of a generated sequence, with special tokens removed.
    pub fn decode_words(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .filter(|&&i| i >= SPECIAL_TOKENS.len())
            .filter_map(|&i| self.token(i).map(str::to_string))
            .collect()
    }

    /// Header line with the version, then one token per line; line `k` after
    /// the header holds index `k`.
    pub fn to_file_string(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "{FILE_HEADER} {}", self.version).expect("writing to String");
        for token in &self.tokens {
            if token.is_empty() || token.contains(['\n', '\r']) {
                return Err(Error::Validation(format!("token {token:?} cannot be stored one per line")));
            }
            out.push_str(token);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or_default();
        let version = header
            .strip_prefix(FILE_HEADER)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::parse("vocabulary header", format!("bad header line {header:?}")))?;
        let mut tokens: Vec<String> = lines.map(str::to_string).collect();
        if tokens.last().is_some_and(String::is_empty) {
            tokens.pop();
        }
        if tokens.len() < SPECIAL_TOKENS.len() || tokens[..SPECIAL_TOKENS.len()] != SPECIAL_TOKENS {
            return Err(Error::parse("vocabulary", "special tokens missing from indices 0-3"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::parse("vocabulary", format!("duplicate token {t:?} at line {}", i + 2)));
            }
        }
        Ok(Self { tokens, index, version })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_file_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_string(&text)
    }
}
