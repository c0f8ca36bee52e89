//! Semantic retrieval: encode the corpus once into fixed-length vectors,
//! then answer top-K queries by exact cosine or by probing binary-code
//! buckets within a Hamming ball, reranking candidates by exact cosine.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{relevance_slices, ModelParameters, SemanticVector};
use crate::error::{Error, Result};
use crate::text::Token;

/// doc_id -> semantic vector, stamped with the fingerprint of the model
/// checkpoint that produced it. Memory is linear in the document count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticIndex {
    fingerprint: String,
    semantic_dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl SemanticIndex {
    /// Encodes every document with the document tower. Empty documents are
    /// skipped with a warning. Parallel and sequential builds produce
    /// identical indexes.
    pub fn build(
        docs: &BTreeMap<String, Vec<Token>>,
        model: &ModelParameters,
        parallel: bool,
    ) -> Result<Self> {
        let fingerprint = model.fingerprint()?;
        let doc_list: Vec<(&String, &Vec<Token>)> = docs.iter().collect();
        let encode_one = |(id, tokens): &(&String, &Vec<Token>)| -> Result<Option<(String, Vec<f64>)>> {
            if tokens.is_empty() {
                return Ok(None);
            }
            let vector = model.encode_document(tokens)?;
            Ok(Some(((*id).clone(), vector.0)))
        };
        let encoded: Vec<Option<(String, Vec<f64>)>> = if parallel {
            doc_list
                .par_iter()
                .map(encode_one)
                .collect::<Result<Vec<_>>>()?
        } else {
            doc_list
                .iter()
                .map(encode_one)
                .collect::<Result<Vec<_>>>()?
        };
        let mut entries = BTreeMap::new();
        for (item, (id, _)) in encoded.into_iter().zip(&doc_list) {
            match item {
                Some((id, vector)) => {
                    entries.insert(id, vector);
                }
                None => log::warn!("skipping empty document {id:?}"),
            }
        }
        Ok(SemanticIndex {
            fingerprint,
            semantic_dim: model.config.semantic_dim,
            entries,
        })
    }

    /// Builds an index from externally produced vectors, e.g. a baseline
    /// encoder plugged into the evaluation harness.
    pub fn from_entries(
        fingerprint: impl Into<String>,
        semantic_dim: usize,
        entries: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        for (id, v) in &entries {
            if v.len() != semantic_dim {
                return Err(Error::ShapeMismatch(format!(
                    "vector for {id:?} has length {} != semantic_dim {semantic_dim}",
                    v.len()
                )));
            }
        }
        Ok(SemanticIndex {
            fingerprint: fingerprint.into(),
            semantic_dim,
            entries,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f64]> {
        self.entries.get(doc_id).map(Vec::as_slice)
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.entries
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let index: SemanticIndex = serde_json::from_str(json)?;
        for (id, v) in &index.entries {
            if v.len() != index.semantic_dim {
                return Err(Error::ShapeMismatch(format!(
                    "vector for {id:?} has length {} != semantic_dim {}",
                    v.len(),
                    index.semantic_dim
                )));
            }
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&json)
    }

    /// Errors unless the model's fingerprint matches the one recorded at
    /// build time.
    pub fn check_model(&self, model: &ModelParameters) -> Result<()> {
        let fp = model.fingerprint()?;
        if fp != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                model: fp,
                index: self.fingerprint.clone(),
            });
        }
        Ok(())
    }
}

/// Ranked retrieval output: scores descending, ties broken by ascending
/// doc_id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub ranked: Vec<(String, f64)>,
}

fn rank_candidates(
    index: &SemanticIndex,
    candidates: impl IntoIterator<Item = String>,
    query: &[f64],
    k: usize,
) -> Result<QueryResult> {
    let mut scored = Vec::new();
    for id in candidates {
        let vector = index
            .get(&id)
            .ok_or_else(|| Error::UnknownDocIds(id.clone()))?;
        let score =
            relevance_slices(query, vector).map_err(|_| Error::DegenerateDocument(id.clone()))?;
        scored.push((id, score));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(QueryResult { ranked: scored })
}

/// Top-K by cosine against every index entry, for a pre-computed query
/// vector.
pub fn knn_exact_vec(index: &SemanticIndex, query: &SemanticVector, k: usize) -> Result<QueryResult> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let k = if k > index.len() {
        log::warn!("requested top-{k} from an index of {}; returning all", index.len());
        index.len()
    } else {
        k
    };
    rank_candidates(index, index.entries.keys().cloned(), query.as_slice(), k)
}

/// Encodes the query text with the query tower and ranks the whole index.
pub fn knn_exact(
    query_tokens: &[Token],
    model: &ModelParameters,
    index: &SemanticIndex,
    k: usize,
) -> Result<QueryResult> {
    let query = model.encode_query(query_tokens)?;
    knn_exact_vec(index, &query, k)
}

/// Sign binarization: bit j is 1 iff v[j] >= 0 (zero maps to 1 so the rule
/// is total). Codes are at most 64 bits.
pub fn binarize(v: &SemanticVector, bits: usize) -> Result<u64> {
    if bits > 64 {
        return Err(Error::CodeTooLong(bits));
    }
    if bits > v.len() {
        return Err(Error::CodeTooWide {
            bits,
            dim: v.len(),
        });
    }
    let mut code = 0u64;
    for (j, &x) in v.as_slice()[..bits].iter().enumerate() {
        if x >= 0.0 {
            code |= 1 << j;
        }
    }
    Ok(code)
}

/// Binary-code buckets over an index: every document lands in exactly one
/// bucket keyed by its sign code.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCodeIndex {
    bits: usize,
    codes: BTreeMap<String, u64>,
    buckets: HashMap<u64, Vec<String>>,
}

impl BinaryCodeIndex {
    pub fn build(index: &SemanticIndex, bits: usize) -> Result<Self> {
        if bits > index.semantic_dim() {
            return Err(Error::CodeTooWide {
                bits,
                dim: index.semantic_dim(),
            });
        }
        if bits > 64 {
            return Err(Error::CodeTooLong(bits));
        }
        let mut codes = BTreeMap::new();
        let mut buckets: HashMap<u64, Vec<String>> = HashMap::new();
        for (id, v) in index.entries() {
            let code = binarize(&SemanticVector(v.clone()), bits)?;
            codes.insert(id.clone(), code);
            buckets.entry(code).or_default().push(id.clone());
        }
        Ok(BinaryCodeIndex {
            bits,
            codes,
            buckets,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn code_of(&self, doc_id: &str) -> Option<u64> {
        self.codes.get(doc_id).copied()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }
}

/// Probe accounting for one hash query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashQueryStats {
    /// Bucket lookups performed. With Hamming-ball enumeration this is
    /// C(bits, <= radius), independent of the corpus size.
    pub bucket_probes: usize,
    /// Candidates gathered before reranking.
    pub candidates: usize,
}

/// Number of codes within Hamming distance `radius` of a fixed code.
pub fn hamming_ball_size(bits: usize, radius: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for d in 0..=radius.min(bits) {
        if d > 0 {
            binom = binom * (bits - d + 1) as u128 / d as u128;
        }
        total += binom;
    }
    total
}

/// Above this many ball codes, probing falls back to scanning the existing
/// buckets (the results are identical; only the probe count model changes).
const BALL_ENUMERATION_CAP: u128 = 1 << 20;

fn enumerate_flips(code: u64, bits: usize, start: usize, remaining: usize, visit: &mut impl FnMut(u64)) {
    if remaining == 0 {
        visit(code);
        return;
    }
    for p in start..=(bits - remaining) {
        enumerate_flips(code ^ (1u64 << p), bits, p + 1, remaining - 1, visit);
    }
}

/// Gathers candidates from all buckets within Hamming distance `radius` of
/// the query code, reranks them by exact cosine, and returns the top K. May
/// return fewer than K when candidates are scarce.
pub fn knn_hash(
    query_tokens: &[Token],
    model: &ModelParameters,
    index: &SemanticIndex,
    codes: &BinaryCodeIndex,
    k: usize,
    radius: usize,
) -> Result<(QueryResult, HashQueryStats)> {
    let query = model.encode_query(query_tokens)?;
    knn_hash_vec(index, codes, &query, k, radius)
}

/// [`knn_hash`] for a pre-computed query vector.
pub fn knn_hash_vec(
    index: &SemanticIndex,
    codes: &BinaryCodeIndex,
    query: &SemanticVector,
    k: usize,
    radius: usize,
) -> Result<(QueryResult, HashQueryStats)> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if radius > codes.bits {
        return Err(Error::RadiusTooLarge {
            radius,
            bits: codes.bits,
        });
    }
    let code = binarize(query, codes.bits)?;

    let mut candidates: Vec<String> = Vec::new();
    let mut probes = 0usize;
    if hamming_ball_size(codes.bits, radius) <= BALL_ENUMERATION_CAP {
        for d in 0..=radius {
            enumerate_flips(code, codes.bits, 0, d, &mut |probe| {
                probes += 1;
                if let Some(bucket) = codes.buckets.get(&probe) {
                    candidates.extend(bucket.iter().cloned());
                }
            });
        }
    } else {
        for (bucket_code, bucket) in &codes.buckets {
            probes += 1;
            if (bucket_code ^ code).count_ones() as usize <= radius {
                candidates.extend(bucket.iter().cloned());
            }
        }
    }
    let stats = HashQueryStats {
        bucket_probes: probes,
        candidates: candidates.len(),
    };
    let result = rank_candidates(index, candidates, query.as_slice(), k)?;
    Ok((result, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::WordRepr;
    use crate::encoder::{ModelConfig, TowerMode};
    use crate::text::{tokenize, TriLetterVocab};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model_and_docs() -> (ModelParameters, BTreeMap<String, Vec<Token>>) {
        let texts = [
            ("d1", "red crimson scarlet ruby"),
            ("d2", "blue azure navy cobalt"),
            ("d3", "green olive lime forest"),
        ];
        let docs: BTreeMap<String, Vec<Token>> = texts
            .iter()
            .map(|(id, t)| (id.to_string(), tokenize(t)))
            .collect();
        let vocab = TriLetterVocab::from_tokens(docs.values().flatten());
        let config = ModelConfig {
            word_dim: vocab.len(),
            context_k: 1,
            n_filters: 6,
            semantic_dim: 4,
            gamma: 10.0,
        };
        let model = ModelParameters::init(
            config,
            TowerMode::Shared,
            WordRepr::TriLetterCount(vocab),
            21,
        )
        .unwrap();
        (model, docs)
    }

    fn random_index(n: usize, dim: usize, seed: u64) -> SemanticIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|i| {
                (
                    format!("doc{i:04}"),
                    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        SemanticIndex::from_entries("test", dim, entries).unwrap()
    }

    #[test]
    fn build_shapes_and_determinism() {
        let (model, docs) = tiny_model_and_docs();
        let a = SemanticIndex::build(&docs, &model, false).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.entries().values().all(|v| v.len() == 4));
        let b = SemanticIndex::build(&docs, &model, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_build_matches_sequential() {
        let (model, mut docs) = tiny_model_and_docs();
        for i in 0..40 {
            docs.insert(format!("x{i}"), tokenize(&format!("filler text number {i}")));
        }
        let seq = SemanticIndex::build(&docs, &model, false).unwrap();
        let par = SemanticIndex::build(&docs, &model, true).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.to_json().unwrap(), par.to_json().unwrap());
    }

    #[test]
    fn build_skips_empty_documents() {
        let (model, mut docs) = tiny_model_and_docs();
        docs.insert("empty".into(), vec![]);
        let index = SemanticIndex::build(&docs, &model, false).unwrap();
        assert_eq!(index.len(), 3);
        assert!(index.get("empty").is_none());
    }

    #[test]
    fn self_retrieval_rank_one_with_score_one() {
        let (model, docs) = tiny_model_and_docs();
        let index = SemanticIndex::build(&docs, &model, false).unwrap();
        for (id, tokens) in &docs {
            let result = knn_exact(tokens, &model, &index, 1).unwrap();
            assert_eq!(&result.ranked[0].0, id);
            assert_eq!(result.ranked[0].1, 1.0);
        }
    }

    #[test]
    fn knn_exact_hand_cosines() {
        let entries = [
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
        ]
        .into_iter()
        .collect();
        let index = SemanticIndex::from_entries("test", 2, entries).unwrap();
        let result = knn_exact_vec(&index, &SemanticVector(vec![1.0, 0.1]), 2).unwrap();
        let ids: Vec<&str> = result.ranked.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(result.ranked[0].1 > result.ranked[1].1);
    }

    #[test]
    fn knn_exact_zero_k_errors_and_overlong_k_warns() {
        let index = random_index(5, 3, 1);
        let q = SemanticVector(vec![1.0, 0.0, 0.0]);
        assert!(matches!(knn_exact_vec(&index, &q, 0), Err(Error::ZeroK)));
        let all = knn_exact_vec(&index, &q, 99).unwrap();
        assert_eq!(all.ranked.len(), 5);
    }

    #[test]
    fn ranking_scale_invariant() {
        let index = random_index(30, 4, 2);
        let q = SemanticVector(vec![0.3, -0.2, 0.9, 0.1]);
        let scaled = SemanticVector(q.as_slice().iter().map(|x| 7.5 * x).collect());
        let a = knn_exact_vec(&index, &q, 10).unwrap();
        let b = knn_exact_vec(&index, &scaled, 10).unwrap();
        let ids_a: Vec<&String> = a.ranked.iter().map(|(id, _)| id).collect();
        let ids_b: Vec<&String> = b.ranked.iter().map(|(id, _)| id).collect();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn binarize_sign_rule() {
        assert_eq!(
            binarize(&SemanticVector(vec![0.5, -0.2, 0.0]), 3).unwrap(),
            0b101
        );
        assert_eq!(binarize(&SemanticVector(vec![-1.0, -1.0]), 2).unwrap(), 0);
        assert!(matches!(
            binarize(&SemanticVector(vec![1.0]), 2),
            Err(Error::CodeTooWide { .. })
        ));
    }

    #[test]
    fn binarize_complement_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let v: Vec<f64> = (0..16)
                .map(|_| {
                    // Avoid exact zeros so negation flips every bit.
                    let x: f64 = rng.random_range(0.01..1.0);
                    if rng.random_range(0..2) == 0 {
                        x
                    } else {
                        -x
                    }
                })
                .collect();
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let a = binarize(&SemanticVector(v), 16).unwrap();
            let b = binarize(&SemanticVector(neg), 16).unwrap();
            assert_eq!(a ^ b, (1 << 16) - 1);
        }
    }

    #[test]
    fn hamming_ball_sizes() {
        assert_eq!(hamming_ball_size(32, 0), 1);
        assert_eq!(hamming_ball_size(32, 1), 33);
        assert_eq!(hamming_ball_size(32, 2), 1 + 32 + 496);
        assert_eq!(hamming_ball_size(4, 4), 16);
    }

    #[test]
    fn knn_hash_full_radius_equals_exact() {
        let index = random_index(60, 8, 5);
        let codes = BinaryCodeIndex::build(&index, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q = SemanticVector((0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
            let exact = knn_exact_vec(&index, &q, 10).unwrap();
            let (hashed, _) = knn_hash_vec(&index, &codes, &q, 10, 8).unwrap();
            assert_eq!(exact, hashed);
        }
    }

    #[test]
    fn knn_hash_radius_zero_finds_same_code() {
        let index = random_index(40, 6, 7);
        let codes = BinaryCodeIndex::build(&index, 6).unwrap();
        let some_id = index.entries().keys().next().unwrap().clone();
        let v = SemanticVector(index.get(&some_id).unwrap().to_vec());
        let (result, stats) = knn_hash_vec(&index, &codes, &v, 5, 0).unwrap();
        assert_eq!(stats.bucket_probes, 1);
        assert!(result.ranked.iter().any(|(id, _)| id == &some_id));
    }

    #[test]
    fn knn_hash_probe_count_independent_of_corpus_size() {
        for n in [25usize, 100, 400] {
            let index = random_index(n, 12, 11);
            let codes = BinaryCodeIndex::build(&index, 12).unwrap();
            let q = SemanticVector(vec![0.1; 12]);
            let (_, stats) = knn_hash_vec(&index, &codes, &q, 5, 2).unwrap();
            assert_eq!(
                stats.bucket_probes as u128,
                hamming_ball_size(12, 2),
                "n = {n}"
            );
        }
    }

    #[test]
    fn knn_hash_radius_exceeding_bits_errors() {
        let index = random_index(10, 4, 13);
        let codes = BinaryCodeIndex::build(&index, 4).unwrap();
        let q = SemanticVector(vec![0.1; 4]);
        assert!(matches!(
            knn_hash_vec(&index, &codes, &q, 3, 5),
            Err(Error::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn index_json_roundtrip() {
        let index = random_index(12, 5, 17);
        let json = index.to_json().unwrap();
        let back = SemanticIndex::from_json(&json).unwrap();
        assert_eq!(index, back);
        assert_eq!(json, back.to_json().unwrap());
    }

    #[test]
    fn fingerprint_mismatch_detected() {
        let (model, docs) = tiny_model_and_docs();
        let index = SemanticIndex::build(&docs, &model, false).unwrap();
        assert!(index.check_model(&model).is_ok());
        let mut other = model.clone();
        other.config.gamma = 3.0;
        assert!(matches!(
            index.check_model(&other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn every_doc_in_exactly_one_bucket() {
        let index = random_index(50, 10, 19);
        let codes = BinaryCodeIndex::build(&index, 10).unwrap();
        let total: usize = codes.buckets.values().map(Vec::len).sum();
        assert_eq!(total, 50);
        for (id, code) in &codes.codes {
            assert!(codes.buckets[code].contains(id));
        }
    }
}
