//! Text pipeline: tokenization, tri-letter word hashing and context windows.
//!
//! Words are hashed into sparse count vectors over a vocabulary of letter
//! trigrams drawn from `#word#`, where `#` marks the word boundary. The
//! vocabulary must be built from training-split text only; unseen trigrams
//! at inference are dropped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary marker padded around a word before trigram extraction.
pub const BOUNDARY_CHAR: char = '#';

/// A lowercase alphanumeric word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        if s.is_empty() {
            return Err(Error::EmptyToken);
        }
        if !s.chars().all(|c| c.is_alphanumeric() && !c.is_uppercase()) {
            return Err(Error::InvalidToken(s));
        }
        Ok(Token(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Number of characters, which is also the number of trigrams the word
    /// produces.
    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases and splits text into maximal alphanumeric runs. Everything
/// else is a separator. Empty input yields an empty list.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.to_lowercase().chars() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(Token(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(Token(current));
    }
    tokens
}

/// A three-character window over `#word#`. `#` can only appear in the first
/// or last position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TriLetter(String);

impl TriLetter {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 || chars[1] == BOUNDARY_CHAR {
            return Err(Error::InvalidToken(s));
        }
        Ok(TriLetter(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TriLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// All length-3 windows of `#word#`, in order. A word of n characters
/// yields exactly n trigrams.
pub fn tri_letters(word: &str) -> Result<Vec<TriLetter>> {
    if word.is_empty() {
        return Err(Error::EmptyToken);
    }
    if word.contains(BOUNDARY_CHAR) {
        return Err(Error::InvalidToken(word.to_string()));
    }
    let padded: Vec<char> = std::iter::once(BOUNDARY_CHAR)
        .chain(word.chars())
        .chain(std::iter::once(BOUNDARY_CHAR))
        .collect();
    Ok(padded
        .windows(3)
        .map(|w| TriLetter(w.iter().collect()))
        .collect())
}

/// Bijective trigram -> dense index mapping, indices assigned in sorted
/// trigram order so serialization is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TriLetterVocab {
    entries: Vec<TriLetter>,
    index: HashMap<TriLetter, u32>,
}

impl TriLetterVocab {
    /// Builds the vocabulary from every trigram occurring in the tokens.
    /// Duplicate tokens are harmless.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a Token>) -> Self {
        let mut set = HashSet::new();
        for token in tokens {
            let tris = tri_letters(token.as_str()).expect("tokens are non-empty");
            set.extend(tris);
        }
        let mut entries: Vec<TriLetter> = set.into_iter().collect();
        entries.sort();
        Self::from_sorted(entries)
    }

    /// Rebuilds a vocabulary from its serialized entry list.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        let mut tris = Vec::with_capacity(entries.len());
        for e in entries {
            tris.push(TriLetter::new(e)?);
        }
        let sorted = tris.windows(2).all(|w| w[0] < w[1]);
        if !sorted {
            return Err(Error::InvalidConfig(
                "tri_letter_vocab must be strictly sorted".into(),
            ));
        }
        Ok(Self::from_sorted(tris))
    }

    fn from_sorted(entries: Vec<TriLetter>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TriLetterVocab { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, tri: &TriLetter) -> Option<u32> {
        self.index.get(tri).copied()
    }

    pub fn entries(&self) -> &[TriLetter] {
        &self.entries
    }
}

/// Sparse trigram count vector for one word, in a vocabulary of dimension
/// `dim`. Out-of-vocabulary trigrams are simply absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriLetterCountVector {
    dim: usize,
    counts: BTreeMap<u32, u32>,
}

impl TriLetterCountVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &BTreeMap<u32, u32> {
        &self.counts
    }

    /// Total in-vocabulary trigram occurrences.
    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&i, &c) in &self.counts {
            v[i as usize] = f64::from(c);
        }
        v
    }
}

/// Counts the word's trigrams that appear in `vocab`; unseen trigrams are
/// dropped silently.
pub fn hash_word(word: &str, vocab: &TriLetterVocab) -> Result<TriLetterCountVector> {
    let mut counts = BTreeMap::new();
    for tri in tri_letters(word)? {
        if let Some(idx) = vocab.get(&tri) {
            *counts.entry(idx).or_insert(0) += 1;
        }
    }
    Ok(TriLetterCountVector {
        dim: vocab.len(),
        counts,
    })
}

/// Word-hashing collision accounting over a list of distinct words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    /// Number of words examined.
    pub vocab_size: usize,
    /// Number of distinct hashed count vectors.
    pub unique_hashed_vectors: usize,
    /// Words whose count vector equals some earlier word's.
    pub collisions: usize,
}

/// Counts distinct count vectors and the number of words colliding with an
/// earlier word. Expects `words` to be deduplicated.
pub fn collision_report(words: &[Token], vocab: &TriLetterVocab) -> Result<CollisionReport> {
    let mut seen: HashSet<Vec<(u32, u32)>> = HashSet::new();
    let mut collisions = 0;
    for word in words {
        let hashed = hash_word(word.as_str(), vocab)?;
        let key: Vec<(u32, u32)> = hashed.counts.iter().map(|(&i, &c)| (i, c)).collect();
        if !seen.insert(key) {
            collisions += 1;
        }
    }
    Ok(CollisionReport {
        vocab_size: words.len(),
        unique_hashed_vectors: seen.len(),
        collisions,
    })
}

/// `2k+1` consecutive word slots; `None` is the reserved boundary slot whose
/// embedding is the zero vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    slots: Vec<Option<Token>>,
}

impl ContextWindow {
    pub fn new(slots: Vec<Option<Token>>) -> Result<Self> {
        if slots.is_empty() || slots.len() % 2 == 0 {
            return Err(Error::BadWindowLength(slots.len()));
        }
        Ok(ContextWindow { slots })
    }

    pub fn slots(&self) -> &[Option<Token>] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One window per interior position, so `s` tokens yield `s - 2k` windows.
/// A sentence shorter than `2k+1` produces a single window with the sentence
/// centered and boundary slots on both sides, so every document yields at
/// least one window.
pub fn context_windows(tokens: &[Token], k: usize) -> Result<Vec<ContextWindow>> {
    if tokens.is_empty() {
        return Err(Error::EmptySentence);
    }
    let width = 2 * k + 1;
    if tokens.len() < width {
        let pad = width - tokens.len();
        let left = pad / 2;
        let mut slots = vec![None; left];
        slots.extend(tokens.iter().cloned().map(Some));
        slots.resize(width, None);
        return Ok(vec![ContextWindow { slots }]);
    }
    Ok((k..tokens.len() - k)
        .map(|t| ContextWindow {
            slots: tokens[t - k..=t + k].iter().cloned().map(Some).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new(*w).unwrap()).collect()
    }

    #[test]
    fn tokenize_sentence() {
        let got: Vec<String> = tokenize("Ram loves playing cricket")
            .iter()
            .map(|t| t.0.clone())
            .collect();
        assert_eq!(got, ["ram", "loves", "playing", "cricket"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_punctuation_matches_char_scan_oracle() {
        let input = "C-DSSM, 2016!";
        // Independent oracle: scan lowercased chars, split on non-alphanumeric.
        let mut expected: Vec<String> = Vec::new();
        let mut cur = String::new();
        for c in input.to_lowercase().chars() {
            if c.is_alphanumeric() {
                cur.push(c);
            } else if !cur.is_empty() {
                expected.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            expected.push(cur);
        }
        assert_eq!(expected, vec!["c", "dssm", "2016"]);
        let got: Vec<String> = tokenize(input).iter().map(|t| t.0.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn tri_letters_cat() {
        let tris: Vec<String> = tri_letters("cat")
            .unwrap()
            .iter()
            .map(|t| t.as_str().to_string())
            .collect();
        assert_eq!(tris, ["#ca", "cat", "at#"]);
    }

    #[test]
    fn tri_letters_single_char() {
        let tris = tri_letters("a").unwrap();
        assert_eq!(tris.len(), 1);
        assert_eq!(tris[0].as_str(), "#a#");
    }

    #[test]
    fn tri_letters_sliding_window_oracle() {
        let word = "dssm";
        // Oracle: explicit sliding window over the padded char sequence.
        let padded: Vec<char> = format!("#{word}#").chars().collect();
        let expected: Vec<String> = (0..padded.len() - 2)
            .map(|i| padded[i..i + 3].iter().collect())
            .collect();
        assert_eq!(expected, ["#ds", "dss", "ssm", "sm#"]);
        let got: Vec<String> = tri_letters(word)
            .unwrap()
            .iter()
            .map(|t| t.as_str().to_string())
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn tri_letters_empty_word() {
        assert!(matches!(tri_letters(""), Err(Error::EmptyToken)));
    }

    #[test]
    fn tri_letter_count_equals_char_count() {
        for word in ["a", "ab", "cat", "cricket", "führer", "x1y2z3"] {
            let n = word.chars().count();
            assert_eq!(tri_letters(word).unwrap().len(), n, "word {word:?}");
        }
    }

    #[test]
    fn vocab_sorted_indices() {
        let vocab = TriLetterVocab::from_tokens(&toks(&["cat"]));
        assert_eq!(vocab.len(), 3);
        // Sorted order: '#' < letters.
        let order: Vec<&str> = vocab.entries().iter().map(TriLetter::as_str).collect();
        assert_eq!(order, ["#ca", "at#", "cat"]);
        assert_eq!(vocab.get(&TriLetter::new("#ca").unwrap()), Some(0));
        assert_eq!(vocab.get(&TriLetter::new("at#").unwrap()), Some(1));
        assert_eq!(vocab.get(&TriLetter::new("cat").unwrap()), Some(2));
    }

    #[test]
    fn vocab_empty_and_duplicates() {
        assert_eq!(TriLetterVocab::from_tokens(&[]).len(), 0);
        let once = TriLetterVocab::from_tokens(&toks(&["cat"]));
        let twice = TriLetterVocab::from_tokens(&toks(&["cat", "cat"]));
        assert_eq!(once, twice);
    }

    #[test]
    fn hash_word_counts() {
        let vocab = TriLetterVocab::from_tokens(&toks(&["cat"]));
        let hashed = hash_word("cat", &vocab).unwrap();
        let counts: Vec<(u32, u32)> = hashed.counts().iter().map(|(&i, &c)| (i, c)).collect();
        assert_eq!(counts, [(0, 1), (1, 1), (2, 1)]);
        assert_eq!(hashed.to_dense(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn hash_word_empty_vocab() {
        let vocab = TriLetterVocab::from_tokens(&[]);
        let hashed = hash_word("cat", &vocab).unwrap();
        assert!(hashed.counts().is_empty());
        assert_eq!(hashed.dim(), 0);
    }

    #[test]
    fn hash_word_repeated_trigrams() {
        // "#aaa#" windows: #aa, aaa, aa#.
        let vocab = TriLetterVocab::from_tokens(&toks(&["aaa"]));
        let hashed = hash_word("aaa", &vocab).unwrap();
        assert_eq!(hashed.counts().len(), 3);
        assert!(hashed.counts().values().all(|&c| c == 1));
    }

    #[test]
    fn hash_word_total_equals_word_length_under_full_vocab() {
        for word in ["a", "cat", "cricket", "mississippi"] {
            let token = Token::new(word).unwrap();
            let vocab = TriLetterVocab::from_tokens(std::iter::once(&token));
            let hashed = hash_word(word, &vocab).unwrap();
            assert_eq!(hashed.total() as usize, token.char_len());
        }
    }

    #[test]
    fn collision_report_disjoint() {
        let words = toks(&["cat", "dog"]);
        let vocab = TriLetterVocab::from_tokens(&words);
        let report = collision_report(&words, &vocab).unwrap();
        assert_eq!(
            report,
            CollisionReport {
                vocab_size: 2,
                unique_hashed_vectors: 2,
                collisions: 0
            }
        );
    }

    #[test]
    fn collision_report_empty() {
        let vocab = TriLetterVocab::from_tokens(&[]);
        let report = collision_report(&[], &vocab).unwrap();
        assert_eq!(
            report,
            CollisionReport {
                vocab_size: 0,
                unique_hashed_vectors: 0,
                collisions: 0
            }
        );
    }

    #[test]
    fn collision_report_finds_constructed_collision() {
        // Oracle: brute-force search over short strings for two distinct
        // words with identical trigram multisets.
        let alphabet = ['a', 'b'];
        let mut words: Vec<String> = vec![String::new()];
        for _ in 0..6 {
            words = words
                .iter()
                .flat_map(|w| alphabet.iter().map(move |c| format!("{w}{c}")))
                .collect::<Vec<_>>()
                .into_iter()
                .chain(words.into_iter())
                .collect();
        }
        words.retain(|w| !w.is_empty());
        words.sort();
        words.dedup();

        let mut by_multiset: HashMap<Vec<String>, String> = HashMap::new();
        let mut pair = None;
        for w in &words {
            let mut key: Vec<String> = tri_letters(w)
                .unwrap()
                .iter()
                .map(|t| t.as_str().to_string())
                .collect();
            key.sort();
            if let Some(prev) = by_multiset.get(&key) {
                pair = Some((prev.clone(), w.clone()));
                break;
            }
            by_multiset.insert(key, w.clone());
        }
        let (w1, w2) = pair.expect("search space contains a colliding pair");
        assert_ne!(w1, w2);

        let colliders = toks(&[&w1, &w2]);
        let vocab = TriLetterVocab::from_tokens(&colliders);
        let report = collision_report(&colliders, &vocab).unwrap();
        assert_eq!(report.collisions, 1);
        assert_eq!(report.unique_hashed_vectors, 1);
    }

    #[test]
    fn collision_invariant_unique_plus_collisions() {
        let words = toks(&["cat", "dog", "cats", "a", "ab", "ba"]);
        let vocab = TriLetterVocab::from_tokens(&words);
        let report = collision_report(&words, &vocab).unwrap();
        assert_eq!(
            report.unique_hashed_vectors + report.collisions,
            words.len()
        );
    }

    #[test]
    fn context_windows_paper_sentence() {
        let tokens = toks(&["ram", "loves", "playing", "cricket"]);
        let windows = context_windows(&tokens, 1).unwrap();
        assert_eq!(windows.len(), 2);
        let words: Vec<Vec<&str>> = windows
            .iter()
            .map(|w| {
                w.slots()
                    .iter()
                    .map(|s| s.as_ref().unwrap().as_str())
                    .collect()
            })
            .collect();
        assert_eq!(
            words,
            [
                vec!["ram", "loves", "playing"],
                vec!["loves", "playing", "cricket"]
            ]
        );
    }

    #[test]
    fn context_windows_k_zero_identity() {
        let tokens = toks(&["hello"]);
        let windows = context_windows(&tokens, 0).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].slots().len(), 1);
        assert_eq!(windows[0].slots()[0].as_ref().unwrap().as_str(), "hello");
    }

    #[test]
    fn context_windows_short_sentence_padded() {
        let tokens = toks(&["hi"]);
        let windows = context_windows(&tokens, 1).unwrap();
        assert_eq!(windows.len(), 1);
        let slots = windows[0].slots();
        assert!(slots[0].is_none());
        assert_eq!(slots[1].as_ref().unwrap().as_str(), "hi");
        assert!(slots[2].is_none());
    }

    #[test]
    fn context_windows_empty_sentence() {
        assert!(matches!(
            context_windows(&[], 1),
            Err(Error::EmptySentence)
        ));
    }

    #[test]
    fn context_window_count_formula() {
        for s in 1..=30usize {
            let tokens: Vec<Token> = (0..s)
                .map(|i| Token::new(format!("w{i}")).unwrap())
                .collect();
            for k in 0..=3usize {
                let windows = context_windows(&tokens, k).unwrap();
                let expected = if s >= 2 * k + 1 { s - 2 * k } else { 1 };
                assert_eq!(windows.len(), expected, "s={s} k={k}");
                assert!(windows.iter().all(|w| w.len() == 2 * k + 1));
            }
        }
    }
}
