//! Labeled corpus: tokenized documents plus question -> document relevance
//! groupings, with JSON Lines ingestion for both.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, Token};

/// One corpus line: `{"doc_id": ..., "text": ...}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusLine {
    pub doc_id: String,
    pub text: String,
}

/// One labels line: `{"question_id": ..., "doc_ids": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsLine {
    pub question_id: String,
    pub doc_ids: Vec<String>,
}

/// Documents plus question-grouped relevance labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCorpus {
    /// doc_id -> token list. May contain documents under no question; those
    /// only ever serve as retrieval distractors and negative samples.
    pub docs: BTreeMap<String, Vec<Token>>,
    /// question_id -> doc_ids judged relevant to that question.
    pub questions: BTreeMap<String, BTreeSet<String>>,
}

impl LabeledCorpus {
    /// Validates that every labeled doc_id exists and every question has at
    /// least one document.
    pub fn new(
        docs: BTreeMap<String, Vec<Token>>,
        questions: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self> {
        let mut missing = BTreeSet::new();
        for (qid, doc_ids) in &questions {
            if doc_ids.is_empty() {
                return Err(Error::EmptyQuestion(qid.clone()));
            }
            for id in doc_ids {
                if !docs.contains_key(id) {
                    missing.insert(id.clone());
                }
            }
        }
        if !missing.is_empty() {
            let list: Vec<String> = missing.into_iter().collect();
            return Err(Error::UnknownDocIds(list.join(", ")));
        }
        Ok(LabeledCorpus { docs, questions })
    }

    pub fn from_files(corpus_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Self> {
        let docs = read_corpus(corpus_path)?;
        let questions = read_labels(labels_path)?;
        Self::new(docs, questions)
    }

    /// Question ids a document belongs to.
    pub fn questions_of(&self, doc_id: &str) -> BTreeSet<&str> {
        self.questions
            .iter()
            .filter(|(_, ids)| ids.contains(doc_id))
            .map(|(qid, _)| qid.as_str())
            .collect()
    }
}

fn json_line_err(path: &str, line: usize, e: impl std::fmt::Display) -> Error {
    Error::JsonLine {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Reads `{"doc_id","text"}` JSON Lines and tokenizes each document.
/// Duplicate doc_ids keep the last line, with a warning.
pub fn read_corpus_from(reader: impl BufRead, origin: &str) -> Result<BTreeMap<String, Vec<Token>>> {
    let mut docs = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {origin}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine =
            serde_json::from_str(&line).map_err(|e| json_line_err(origin, idx + 1, e))?;
        if docs.insert(parsed.doc_id.clone(), tokenize(&parsed.text)).is_some() {
            log::warn!("duplicate doc_id {:?} at {origin}:{}; last line wins", parsed.doc_id, idx + 1);
        }
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<Token>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_corpus_from(std::io::BufReader::new(file), &path.display().to_string())
}

/// Reads `{"question_id","doc_ids"}` JSON Lines. Repeated question_ids merge
/// their doc sets.
pub fn read_labels_from(
    reader: impl BufRead,
    origin: &str,
) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut questions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {origin}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelsLine =
            serde_json::from_str(&line).map_err(|e| json_line_err(origin, idx + 1, e))?;
        questions
            .entry(parsed.question_id)
            .or_default()
            .extend(parsed.doc_ids);
    }
    Ok(questions)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_labels_from(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes question groupings back out in the labels JSON Lines format.
pub fn write_labels(
    questions: &BTreeMap<String, BTreeSet<String>>,
    mut writer: impl Write,
) -> Result<()> {
    for (qid, doc_ids) in questions {
        let line = LabelsLine {
            question_id: qid.clone(),
            doc_ids: doc_ids.iter().cloned().collect(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("writing labels", e))?;
    }
    Ok(())
}
