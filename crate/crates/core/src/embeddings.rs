//! Per-word input vectors in one of two regimes: tri-letter count vectors
//! or a pretrained dense-vector table, concatenated into window vectors.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{hash_word, ContextWindow, Token, TriLetterVocab};
use crate::util::fnv1a_64;

/// What to embed a word as when the pretrained table has no entry for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Zero vector, neutral under the linear convolution.
    #[default]
    Zero,
    /// Deterministic pseudo-random vector seeded by the word's bytes.
    SeededRandom,
}

/// Dense word -> vector table loaded from the textual vector-file format.
///
/// Lookups are read-only and safe to run concurrently; misses bump an
/// internal out-of-vocabulary counter.
#[derive(Debug)]
pub struct PretrainedTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
    oov_lookups: AtomicU64,
}

impl Clone for PretrainedTable {
    fn clone(&self) -> Self {
        PretrainedTable {
            dim: self.dim,
            entries: self.entries.clone(),
            oov_lookups: AtomicU64::new(self.oov_lookups.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for PretrainedTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl PretrainedTable {
    pub fn new(dim: usize, entries: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        for (word, vec) in &entries {
            if vec.len() != dim {
                return Err(Error::InvalidConfig(format!(
                    "vector for {word:?} has length {} != dim {dim}",
                    vec.len()
                )));
            }
        }
        Ok(PretrainedTable {
            dim,
            entries,
            oov_lookups: AtomicU64::new(0),
        })
    }

    /// Parses the textual format: a `count dim` header line, then one line
    /// per word holding the word and `dim` decimal floats, space-separated.
    /// Duplicate words keep the last row, with a warning.
    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::VectorHeader { header: String::new() })?;
        let header = header.map_err(|e| Error::io("reading vector file", e))?;
        let mut parts = header.split_whitespace();
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(d), None) => {
                let count: usize = c.parse().map_err(|_| Error::VectorHeader {
                    header: header.clone(),
                })?;
                let dim: usize = d.parse().map_err(|_| Error::VectorHeader {
                    header: header.clone(),
                })?;
                (count, dim)
            }
            _ => return Err(Error::VectorHeader { header }),
        };
        if dim == 0 {
            return Err(Error::VectorHeader { header });
        }

        let mut entries: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut rows = 0usize;
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io("reading vector file", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line has a first field");
            let mut vec = Vec::with_capacity(dim);
            for field in fields {
                let v: f64 = field.parse().map_err(|_| Error::VectorField {
                    line: lineno,
                    field: field.to_string(),
                })?;
                vec.push(v);
            }
            if vec.len() != dim {
                return Err(Error::VectorRowLength {
                    line: lineno,
                    got: vec.len(),
                    expected: dim,
                });
            }
            rows += 1;
            if entries.insert(word.to_string(), vec).is_some() {
                log::warn!("duplicate vector for {word:?} at line {lineno}; last row wins");
            }
        }
        if rows != count {
            return Err(Error::VectorCount {
                declared: count,
                found: rows,
            });
        }
        Self::new(dim, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut BTreeMap<String, Vec<f64>> {
        &mut self.entries
    }

    /// Number of lookups that missed the table since construction (or the
    /// last reset).
    pub fn oov_count(&self) -> u64 {
        self.oov_lookups.load(Ordering::Relaxed)
    }

    pub fn reset_oov_count(&self) {
        self.oov_lookups.store(0, Ordering::Relaxed);
    }

    fn record_miss(&self) {
        self.oov_lookups.fetch_add(1, Ordering::Relaxed);
    }
}

/// The two word-embedding regimes the encoder can run on.
#[derive(Debug, Clone, PartialEq)]
pub enum WordRepr {
    /// Sparse trigram count vectors over a learned vocabulary.
    TriLetterCount(TriLetterVocab),
    /// Pretrained dense vectors; `fine_tune` makes the table trainable.
    Pretrained {
        table: PretrainedTable,
        oov_policy: OovPolicy,
        fine_tune: bool,
    },
}

impl WordRepr {
    pub fn pretrained(table: PretrainedTable) -> Self {
        WordRepr::Pretrained {
            table,
            oov_policy: OovPolicy::Zero,
            fine_tune: false,
        }
    }

    /// Dimension of a single word vector: the vocabulary size for trigram
    /// counts, the table dimension for pretrained vectors.
    pub fn word_dim(&self) -> usize {
        match self {
            WordRepr::TriLetterCount(vocab) => vocab.len(),
            WordRepr::Pretrained { table, .. } => table.dim(),
        }
    }

    pub fn fine_tune(&self) -> bool {
        matches!(
            self,
            WordRepr::Pretrained {
                fine_tune: true,
                ..
            }
        )
    }
}

impl fmt::Display for WordRepr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WordRepr::TriLetterCount(v) => write!(f, "tri-letter ({} trigrams)", v.len()),
            WordRepr::Pretrained { table, .. } => {
                write!(f, "pretrained ({} words, dim {})", table.len(), table.dim())
            }
        }
    }
}

/// Concatenation of the `2k+1` slot embeddings of a context window, stored
/// sparsely as (index, value) pairs over the dense dimension
/// `(2k+1) * word_dim`. Boundary slots contribute nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl WindowVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i as usize] = x;
        }
        v
    }
}

fn oov_vector(word: &str, policy: OovPolicy, dim: usize) -> Vec<f64> {
    match policy {
        OovPolicy::Zero => vec![0.0; dim],
        OovPolicy::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a_64(word.as_bytes()));
            let r = 1.0 / (dim as f64).sqrt();
            (0..dim).map(|_| rng.random_range(-r..=r)).collect()
        }
    }
}

/// Dense embedding of one word under the given representation. Total:
/// out-of-vocabulary pretrained lookups resolve via the OOV policy and are
/// counted on the table.
pub fn embed_word(word: &Token, repr: &WordRepr) -> Vec<f64> {
    match repr {
        WordRepr::TriLetterCount(vocab) => hash_word(word.as_str(), vocab)
            .expect("tokens are non-empty")
            .to_dense(),
        WordRepr::Pretrained {
            table, oov_policy, ..
        } => match table.get(word.as_str()) {
            Some(v) => v.to_vec(),
            None => {
                table.record_miss();
                oov_vector(word.as_str(), *oov_policy, table.dim())
            }
        },
    }
}

/// Concatenates the slot embeddings of a window, in slot order. Boundary
/// slots stay all-zero.
pub fn embed_window(window: &ContextWindow, repr: &WordRepr) -> WindowVector {
    let word_dim = repr.word_dim();
    let dim = window.len() * word_dim;
    let mut entries = Vec::new();
    for (slot_idx, slot) in window.slots().iter().enumerate() {
        let Some(token) = slot else { continue };
        let base = (slot_idx * word_dim) as u32;
        match repr {
            WordRepr::TriLetterCount(vocab) => {
                let hashed = hash_word(token.as_str(), vocab).expect("tokens are non-empty");
                entries.extend(
                    hashed
                        .counts()
                        .iter()
                        .map(|(&i, &c)| (base + i, f64::from(c))),
                );
            }
            WordRepr::Pretrained {
                table, oov_policy, ..
            } => {
                let values = match table.get(token.as_str()) {
                    Some(v) => v.to_vec(),
                    None => {
                        table.record_miss();
                        oov_vector(token.as_str(), *oov_policy, table.dim())
                    }
                };
                entries.extend(
                    values
                        .iter()
                        .enumerate()
                        .filter(|(_, &v)| v != 0.0)
                        .map(|(i, &v)| (base + i as u32, v)),
                );
            }
        }
    }
    WindowVector { dim, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{context_windows, tokenize};
    use std::io::Cursor;

    fn table(dim: usize, rows: &[(&str, &[f64])]) -> PretrainedTable {
        let entries = rows
            .iter()
            .map(|(w, v)| (w.to_string(), v.to_vec()))
            .collect();
        PretrainedTable::new(dim, entries).unwrap()
    }

    #[test]
    fn read_vector_file() {
        let t = PretrainedTable::read_from(Cursor::new("2 3\ncat 1 0 0\ndog 0 1 0\n")).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("cat").unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(t.get("dog").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn read_vector_file_row_length_error() {
        let err = PretrainedTable::read_from(Cursor::new("1 2\ncat 1 0 0\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row length 3"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn read_vector_file_bad_header_and_field() {
        assert!(PretrainedTable::read_from(Cursor::new("nonsense\n")).is_err());
        let err = PretrainedTable::read_from(Cursor::new("1 2\ncat 1 x\n")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn read_vector_file_count_mismatch() {
        let err = PretrainedTable::read_from(Cursor::new("3 2\ncat 1 0\n")).unwrap_err();
        assert!(matches!(err, Error::VectorCount { declared: 3, found: 1 }));
    }

    #[test]
    fn read_vector_file_200d() {
        let row: Vec<String> = (0..200).map(|i| format!("{}", i as f64 * 0.5)).collect();
        let text = format!("1 200\nword {}\n", row.join(" "));
        let t = PretrainedTable::read_from(Cursor::new(text)).unwrap();
        assert_eq!(t.dim(), 200);
    }

    #[test]
    fn embed_word_tri_letter() {
        let token = Token::new("cat").unwrap();
        let vocab = TriLetterVocab::from_tokens(std::iter::once(&token));
        let repr = WordRepr::TriLetterCount(vocab);
        assert_eq!(embed_word(&token, &repr), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn embed_word_pretrained_lookup_and_oov() {
        let t = table(3, &[("cat", &[1.0, 0.0, 0.0])]);
        let repr = WordRepr::pretrained(t);
        assert_eq!(
            embed_word(&Token::new("cat").unwrap(), &repr),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            embed_word(&Token::new("zebra").unwrap(), &repr),
            vec![0.0, 0.0, 0.0]
        );
        let WordRepr::Pretrained { table, .. } = &repr else {
            unreachable!()
        };
        assert_eq!(table.oov_count(), 1);
    }

    #[test]
    fn oov_counter_counts_every_miss() {
        let t = table(2, &[("a", &[1.0, 0.0])]);
        let repr = WordRepr::pretrained(t);
        let tokens = tokenize("a b c a d");
        for w in &tokens {
            embed_word(w, &repr);
        }
        let WordRepr::Pretrained { table, .. } = &repr else {
            unreachable!()
        };
        assert_eq!(table.oov_count(), 3);
    }

    #[test]
    fn seeded_random_oov_is_deterministic_and_nonzero() {
        let t = table(4, &[]);
        let repr = WordRepr::Pretrained {
            table: t,
            oov_policy: OovPolicy::SeededRandom,
            fine_tune: false,
        };
        let w = Token::new("zebra").unwrap();
        let v1 = embed_word(&w, &repr);
        let v2 = embed_word(&w, &repr);
        assert_eq!(v1, v2);
        assert!(v1.iter().any(|&x| x != 0.0));
        let other = embed_word(&Token::new("okapi").unwrap(), &repr);
        assert_ne!(v1, other);
    }

    #[test]
    fn embed_window_concatenates() {
        let t = table(2, &[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        let repr = WordRepr::pretrained(t);
        let window = ContextWindow::new(
            ["a", "b", "c"]
                .iter()
                .map(|w| Some(Token::new(*w).unwrap()))
                .collect(),
        )
        .unwrap();
        let wv = embed_window(&window, &repr);
        assert_eq!(wv.to_dense(), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn embed_window_boundary_zeros() {
        let t = table(2, &[("b", &[1.0, 0.0])]);
        let repr = WordRepr::pretrained(t);
        let window =
            ContextWindow::new(vec![None, Some(Token::new("b").unwrap()), None]).unwrap();
        let wv = embed_window(&window, &repr);
        assert_eq!(wv.to_dense(), vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn embed_window_k_zero_equals_embed_word() {
        let token = Token::new("cat").unwrap();
        let vocab = TriLetterVocab::from_tokens(std::iter::once(&token));
        let repr = WordRepr::TriLetterCount(vocab);
        let window = ContextWindow::new(vec![Some(token.clone())]).unwrap();
        assert_eq!(embed_window(&window, &repr).to_dense(), embed_word(&token, &repr));
    }

    #[test]
    fn window_vector_length_invariant() {
        let tokens = tokenize("one two three four five");
        let vocab = TriLetterVocab::from_tokens(&tokens);
        let repr = WordRepr::TriLetterCount(vocab);
        for k in 0..=2usize {
            for w in context_windows(&tokens, k).unwrap() {
                let wv = embed_window(&w, &repr);
                assert_eq!(wv.dim(), (2 * k + 1) * repr.word_dim());
                assert_eq!(wv.to_dense().len(), wv.dim());
            }
        }
    }
}
