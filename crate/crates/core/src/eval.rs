//! Ranked-retrieval evaluation: recall@k, precision@k and f1@k over the
//! validation split, with the cutoff adjustment k' = max(K, |relevant|)
//! applied to both recall and precision so the K=1 rows stay internally
//! consistent (p = r = f1).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::encoder::{ModelParameters, SemanticVector};
use crate::error::{Error, Result};
use crate::index::{knn_exact_vec, SemanticIndex};
use crate::training::SplitCorpus;

/// One evaluation query: a document standing in as the query, and its
/// co-question documents (itself excluded) as the relevant set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub query_doc: String,
    pub relevant: BTreeSet<String>,
}

/// Turns a labeled corpus into evaluation queries. Documents whose relevant
/// set would be empty are skipped.
pub fn eval_queries(validation: &LabeledCorpus) -> Vec<EvalQuery> {
    let mut queries = Vec::new();
    for doc_id in validation.docs.keys() {
        let mut relevant = BTreeSet::new();
        for docs in validation.questions.values() {
            if docs.contains(doc_id) {
                relevant.extend(docs.iter().filter(|d| *d != doc_id).cloned());
            }
        }
        if !relevant.is_empty() {
            queries.push(EvalQuery {
                query_doc: doc_id.clone(),
                relevant,
            });
        }
    }
    queries
}

fn adjusted_cutoff(k: usize, n_relevant: usize) -> usize {
    k.max(n_relevant)
}

fn hits_at(ranked: &[String], relevant: &BTreeSet<String>, cutoff: usize) -> usize {
    ranked
        .iter()
        .take(cutoff)
        .filter(|id| relevant.contains(*id))
        .count()
}

/// Proportion of relevant documents found in the top k' = max(K, R).
pub fn recall_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    let cutoff = adjusted_cutoff(k, relevant.len());
    hits_at(ranked, relevant, cutoff) as f64 / relevant.len() as f64
}

/// Proportion of the top k' = max(K, R) documents that are relevant.
pub fn precision_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    let cutoff = adjusted_cutoff(k, relevant.len());
    hits_at(ranked, relevant, cutoff) as f64 / cutoff as f64
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_at_k(recall: f64, precision: f64) -> f64 {
    if recall == 0.0 && precision == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-cutoff metric means over all queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Mean recall@K / precision@K / f1@K over every evaluation query, for each
/// configured cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub query_count: usize,
}

impl MetricsReport {
    /// Aligned plain-text table, one row per cutoff.
    pub fn to_table(&self) -> String {
        let mut out = String::from("   K  recall@k  precision@k  f1@k\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:>4}  {:>8.3}  {:>11.3}  {:>5.3}\n",
                row.k, row.recall, row.precision, row.f1
            ));
        }
        out.push_str(&format!("queries: {}\n", self.query_count));
        out
    }

    /// Machine-readable CSV: `k,recall,precision,f1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,recall,precision,f1\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.k, row.recall, row.precision, row.f1
            ));
        }
        out
    }
}

/// Evaluates queries against an index with a caller-supplied query-vector
/// source, so any encoder can be plugged into the harness. The query
/// document is excluded from its own candidate ranking.
pub fn evaluate_with<F>(
    index: &SemanticIndex,
    queries: &[EvalQuery],
    mut query_vector: F,
    cutoffs: &[usize],
) -> Result<MetricsReport>
where
    F: FnMut(&str) -> Result<SemanticVector>,
{
    let mut missing: BTreeSet<String> = BTreeSet::new();
    for q in queries {
        if index.get(&q.query_doc).is_none() {
            missing.insert(q.query_doc.clone());
        }
        for id in &q.relevant {
            if index.get(id).is_none() {
                missing.insert(id.clone());
            }
        }
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.into_iter().collect();
        return Err(Error::MissingFromIndex(list.join(", ")));
    }

    let mut sums: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 0.0); cutoffs.len()];
    for q in queries {
        let vector = query_vector(&q.query_doc)?;
        let full = knn_exact_vec(index, &vector, index.len())?;
        let ranked: Vec<String> = full
            .ranked
            .into_iter()
            .map(|(id, _)| id)
            .filter(|id| id != &q.query_doc)
            .collect();
        for (row, &k) in sums.iter_mut().zip(cutoffs) {
            let r = recall_at_k(&ranked, &q.relevant, k);
            let p = precision_at_k(&ranked, &q.relevant, k);
            row.0 += r;
            row.1 += p;
            row.2 += f1_at_k(r, p);
        }
    }
    let n = queries.len();
    let rows = cutoffs
        .iter()
        .zip(sums)
        .map(|(&k, (r, p, f))| {
            let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
            MetricsRow {
                k,
                recall: r * scale,
                precision: p * scale,
                f1: f * scale,
            }
        })
        .collect();
    Ok(MetricsReport {
        rows,
        query_count: n,
    })
}

/// Evaluates a model: every validation document queries the index with its
/// own text encoded by the query tower.
pub fn evaluate(
    model: &ModelParameters,
    index: &SemanticIndex,
    validation: &LabeledCorpus,
    cutoffs: &[usize],
) -> Result<MetricsReport> {
    let queries = eval_queries(validation);
    evaluate_with(
        index,
        &queries,
        |doc_id| {
            let tokens = validation
                .docs
                .get(doc_id)
                .ok_or_else(|| Error::UnknownDocIds(doc_id.to_string()))?;
            model.encode_query(tokens)
        },
        cutoffs,
    )
}

/// Mean f1@1 of the validation queries against an index over the whole
/// split (train plus validation documents). Returns 0 when the validation
/// split yields no queries.
pub fn validation_f1_at_1(model: &ModelParameters, split: &SplitCorpus) -> Result<f64> {
    let queries = eval_queries(&split.validation);
    if queries.is_empty() {
        log::warn!("validation split yields no evaluation queries");
        return Ok(0.0);
    }
    let mut all_docs = split.train.docs.clone();
    all_docs.extend(
        split
            .validation
            .docs
            .iter()
            .map(|(k, v)| (k.clone(), v.clone())),
    );
    let index = SemanticIndex::build(&all_docs, model, false)?;
    let report = evaluate(model, &index, &split.validation, &[1])?;
    Ok(report.rows[0].f1)
}
