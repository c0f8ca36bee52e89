//! Seeded synthetic benchmark data: clustered documents with private and
//! shared vocabularies, question labels grouping each cluster, and a
//! cluster-aligned synthetic pretrained-vector file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_corpus_from, read_labels_from, CorpusLine, LabeledCorpus, LabelsLine};
use crate::embeddings::PretrainedTable;
use crate::error::{Error, Result};

/// Shape of the generated benchmark. Output is byte-identical per seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub docs_per_cluster: usize,
    /// Private vocabulary size per cluster.
    pub vocab_per_cluster: usize,
    /// Vocabulary shared across all clusters.
    pub shared_vocab: usize,
    /// Tokens per document; 80% are drawn from the cluster's private
    /// vocabulary and 20% from the shared one, each without replacement.
    pub doc_length: usize,
    /// Dimension of the synthetic pretrained vectors.
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clusters: 30,
            docs_per_cluster: 20,
            vocab_per_cluster: 60,
            shared_vocab: 40,
            doc_length: 30,
            embedding_dim: 16,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    fn private_per_doc(&self) -> usize {
        self.doc_length * 4 / 5
    }

    fn shared_per_doc(&self) -> usize {
        self.doc_length - self.private_per_doc()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0
            || self.docs_per_cluster == 0
            || self.vocab_per_cluster == 0
            || self.doc_length == 0
            || self.embedding_dim == 0
        {
            return Err(Error::InvalidConfig(
                "all synthetic spec fields must be positive".into(),
            ));
        }
        if self.vocab_per_cluster < self.private_per_doc()
            || self.shared_vocab < self.shared_per_doc()
        {
            return Err(Error::VocabTooSmall {
                needed_private: self.private_per_doc(),
                needed_shared: self.shared_per_doc(),
                private: self.vocab_per_cluster,
                shared: self.shared_vocab,
            });
        }
        Ok(())
    }
}

/// The three generated files, held as strings so tests can consume them
/// without touching the filesystem.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub corpus_jsonl: String,
    pub labels_jsonl: String,
    pub vectors_txt: String,
}

impl SyntheticData {
    pub fn corpus(&self) -> Result<LabeledCorpus> {
        let docs = read_corpus_from(self.corpus_jsonl.as_bytes(), "synthetic corpus")?;
        let questions = read_labels_from(self.labels_jsonl.as_bytes(), "synthetic labels")?;
        LabeledCorpus::new(docs, questions)
    }

    pub fn pretrained_table(&self) -> Result<PretrainedTable> {
        PretrainedTable::read_from(self.vectors_txt.as_bytes())
    }

    /// Writes corpus.jsonl, labels.jsonl and vectors.txt into `dir`,
    /// returning their paths.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let corpus_path = dir.join("corpus.jsonl");
        let labels_path = dir.join("labels.jsonl");
        let vectors_path = dir.join("vectors.txt");
        for (path, contents) in [
            (&corpus_path, &self.corpus_jsonl),
            (&labels_path, &self.labels_jsonl),
            (&vectors_path, &self.vectors_txt),
        ] {
            std::fs::write(path, contents)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
        Ok((corpus_path, labels_path, vectors_path))
    }
}

fn random_word(rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let len = rng.random_range(4..=8usize);
        let word: String = (0..len)
            .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
            .collect();
        if taken.insert(word.clone()) {
            return word;
        }
    }
}

/// Generates the clustered corpus, its labels and the synthetic pretrained
/// vectors. Private words get their cluster's direction plus noise, shared
/// words get pure noise, which is what makes the pretrained regime
/// informative on this benchmark.
pub fn gen_data(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = HashSet::new();

    let cluster_vocabs: Vec<Vec<String>> = (0..spec.clusters)
        .map(|_| {
            (0..spec.vocab_per_cluster)
                .map(|_| random_word(&mut rng, &mut taken))
                .collect()
        })
        .collect();
    let shared_vocab: Vec<String> = (0..spec.shared_vocab)
        .map(|_| random_word(&mut rng, &mut taken))
        .collect();

    // Cluster directions for the synthetic vectors.
    let dim = spec.embedding_dim;
    let centers: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();

    let mut vectors_txt = format!(
        "{} {}\n",
        spec.clusters * spec.vocab_per_cluster + spec.shared_vocab,
        dim
    );
    for (c, words) in cluster_vocabs.iter().enumerate() {
        for word in words {
            let row: Vec<String> = centers[c]
                .iter()
                .map(|&mu| {
                    let noise: f64 = rng.sample(StandardNormal);
                    format!("{}", mu + 0.25 * noise)
                })
                .collect();
            vectors_txt.push_str(&format!("{word} {}\n", row.join(" ")));
        }
    }
    for word in &shared_vocab {
        let row: Vec<String> = (0..dim)
            .map(|_| {
                let noise: f64 = rng.sample(StandardNormal);
                format!("{}", 0.35 * noise)
            })
            .collect();
        vectors_txt.push_str(&format!("{word} {}\n", row.join(" ")));
    }

    let n_private = spec.private_per_doc();
    let n_shared = spec.shared_per_doc();
    let mut corpus_jsonl = String::new();
    let mut labels_jsonl = String::new();
    for c in 0..spec.clusters {
        let mut doc_ids = Vec::with_capacity(spec.docs_per_cluster);
        for m in 0..spec.docs_per_cluster {
            let doc_id = format!("c{c:03}_d{m:03}");
            let mut tokens: Vec<String> = Vec::with_capacity(spec.doc_length);
            let picks =
                rand::seq::index::sample(&mut rng, spec.vocab_per_cluster, n_private);
            tokens.extend(picks.iter().map(|i| cluster_vocabs[c][i].clone()));
            if n_shared > 0 {
                let picks = rand::seq::index::sample(&mut rng, spec.shared_vocab, n_shared);
                tokens.extend(picks.iter().map(|i| shared_vocab[i].clone()));
            }
            tokens.shuffle(&mut rng);
            let line = CorpusLine {
                doc_id: doc_id.clone(),
                text: tokens.join(" "),
            };
            corpus_jsonl.push_str(&serde_json::to_string(&line)?);
            corpus_jsonl.push('\n');
            doc_ids.push(doc_id);
        }
        let label = LabelsLine {
            question_id: format!("q{c:03}"),
            doc_ids,
        };
        labels_jsonl.push_str(&serde_json::to_string(&label)?);
        labels_jsonl.push('\n');
    }

    Ok(SyntheticData {
        corpus_jsonl,
        labels_jsonl,
        vectors_txt,
    })
}
