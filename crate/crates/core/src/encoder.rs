//! The convolutional semantic encoder: a linear map over each context
//! window, tanh, max-pooling over windows, and a tanh projection to the
//! fixed-length semantic vector, plus cosine relevance scoring.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{embed_window, OovPolicy, PretrainedTable, WindowVector, WordRepr};
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::text::{context_windows, Token, TriLetterVocab};
use crate::util::fnv1a_64;

/// Encoder hyperparameters shared by both towers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Dimension of one word vector: vocabulary size in tri-letter mode,
    /// table dimension in pretrained mode.
    pub word_dim: usize,
    /// Context half-width; windows hold `2k+1` words.
    pub context_k: usize,
    /// Number of convolution filters.
    pub n_filters: usize,
    /// Length of the semantic vector.
    pub semantic_dim: usize,
    /// Softmax smoothing factor. Cosine scores live in [-1, 1], so an
    /// unsharpened softmax is nearly uniform; 10 is the default.
    pub gamma: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 {
            return Err(Error::InvalidConfig("word_dim must be positive".into()));
        }
        if self.n_filters == 0 {
            return Err(Error::InvalidConfig("n_filters must be positive".into()));
        }
        if self.semantic_dim == 0 {
            return Err(Error::InvalidConfig("semantic_dim must be positive".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig("gamma must be positive".into()));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        2 * self.context_k + 1
    }

    /// Length of one concatenated window vector.
    pub fn conv_input_dim(&self) -> usize {
        self.window_len() * self.word_dim
    }
}

/// All trainable weights of one encoder tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// n_filters x ((2k+1) * word_dim); one row per filter, applied to each
    /// window vector.
    pub conv_weights: Mat,
    pub conv_bias: Vec<f64>,
    /// semantic_dim x n_filters.
    pub proj_weights: Mat,
    pub proj_bias: Vec<f64>,
}

impl EncoderParams {
    /// Uniform init in [-r, r] with r = sqrt(6 / (fan_in + fan_out));
    /// biases start at zero.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let input_dim = config.conv_input_dim();
        let mut conv_weights = Mat::zeros(config.n_filters, input_dim);
        let r = (6.0 / (input_dim + config.n_filters) as f64).sqrt();
        for v in conv_weights.as_mut_slice() {
            *v = rng.random_range(-r..=r);
        }
        let mut proj_weights = Mat::zeros(config.semantic_dim, config.n_filters);
        let r = (6.0 / (config.n_filters + config.semantic_dim) as f64).sqrt();
        for v in proj_weights.as_mut_slice() {
            *v = rng.random_range(-r..=r);
        }
        EncoderParams {
            conv_weights,
            conv_bias: vec![0.0; config.n_filters],
            proj_weights,
            proj_bias: vec![0.0; config.semantic_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv_weights.len()
            + self.conv_bias.len()
            + self.proj_weights.len()
            + self.proj_bias.len()
    }

    fn validate_shapes(&self, config: &ModelConfig) -> Result<()> {
        let ok = self.conv_weights.rows() == config.n_filters
            && self.conv_weights.cols() == config.conv_input_dim()
            && self.conv_bias.len() == config.n_filters
            && self.proj_weights.rows() == config.semantic_dim
            && self.proj_weights.cols() == config.n_filters
            && self.proj_bias.len() == config.semantic_dim;
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "encoder parameters do not match config (conv {}x{}, proj {}x{})",
                self.conv_weights.rows(),
                self.conv_weights.cols(),
                self.proj_weights.rows(),
                self.proj_weights.cols()
            )));
        }
        if !self.is_finite() {
            return Err(Error::InvalidConfig("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.conv_weights.is_finite()
            && self.proj_weights.is_finite()
            && self.conv_bias.iter().all(|v| v.is_finite())
            && self.proj_bias.iter().all(|v| v.is_finite())
    }
}

/// Whether query and document share one tower or keep independent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TowerMode {
    Shared,
    Twin,
}

impl std::fmt::Display for TowerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TowerMode::Shared => f.write_str("shared"),
            TowerMode::Twin => f.write_str("twin"),
        }
    }
}

/// The tower parameter sets. In shared mode there is a single set, so an
/// update through either role is an update through both.
#[derive(Debug, Clone, PartialEq)]
pub enum Towers {
    Shared(EncoderParams),
    Twin {
        query: EncoderParams,
        document: EncoderParams,
    },
}

/// The full model: config, towers and the word representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub towers: Towers,
    pub repr: WordRepr,
}

impl ModelParameters {
    /// Seeded initialization. `config.word_dim` must match the
    /// representation's word dimension.
    pub fn init(config: ModelConfig, mode: TowerMode, repr: WordRepr, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.word_dim != repr.word_dim() {
            return Err(Error::InvalidConfig(format!(
                "word_dim {} does not match representation dimension {}",
                config.word_dim,
                repr.word_dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let towers = match mode {
            TowerMode::Shared => Towers::Shared(EncoderParams::init(&config, &mut rng)),
            TowerMode::Twin => Towers::Twin {
                query: EncoderParams::init(&config, &mut rng),
                document: EncoderParams::init(&config, &mut rng),
            },
        };
        Ok(ModelParameters {
            config,
            towers,
            repr,
        })
    }

    pub fn mode(&self) -> TowerMode {
        match self.towers {
            Towers::Shared(_) => TowerMode::Shared,
            Towers::Twin { .. } => TowerMode::Twin,
        }
    }

    pub fn query_tower(&self) -> &EncoderParams {
        match &self.towers {
            Towers::Shared(t) => t,
            Towers::Twin { query, .. } => query,
        }
    }

    pub fn doc_tower(&self) -> &EncoderParams {
        match &self.towers {
            Towers::Shared(t) => t,
            Towers::Twin { document, .. } => document,
        }
    }

    /// Total scalar count across distinct encoder parameter sets; the
    /// embedding table is excluded.
    pub fn param_count(&self) -> usize {
        match &self.towers {
            Towers::Shared(t) => t.param_count(),
            Towers::Twin { query, document } => query.param_count() + document.param_count(),
        }
    }

    pub fn encode_query(&self, tokens: &[Token]) -> Result<SemanticVector> {
        encode(tokens, self.query_tower(), &self.repr, &self.config)
    }

    pub fn encode_document(&self, tokens: &[Token]) -> Result<SemanticVector> {
        encode(tokens, self.doc_tower(), &self.repr, &self.config)
    }

    /// Canonical checkpoint bytes: the serialized JSON document, no
    /// trailing newline. `save` writes exactly these bytes, so hashing a
    /// checkpoint file equals hashing the in-memory serialization.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from_model(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let checkpoint: Checkpoint = serde_json::from_str(json)?;
        checkpoint.into_model()
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

    /// 64-bit FNV-1a over the canonical checkpoint bytes, in hex.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a_64(self.to_json()?.as_bytes())))
    }
}

/// Fixed-length encoder output. Every entry passed through tanh, so values
/// lie in (-1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticVector(pub Vec<f64>);

impl SemanticVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Convolution activations: one column of `n_filters` values per window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_filters: usize,
    /// columns[t][j] = activation of filter j at window t.
    pub columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_windows(&self) -> usize {
        self.columns.len()
    }
}

/// One linear map per context window: column i = conv_weights * window_i +
/// conv_bias. The number of columns equals the number of windows (valid
/// positions only).
pub fn conv_forward(windows: &[WindowVector], params: &EncoderParams) -> Result<FeatureMatrix> {
    if windows.is_empty() {
        return Err(Error::EmptyFeatureMatrix);
    }
    let input_dim = params.conv_weights.cols();
    let mut columns = Vec::with_capacity(windows.len());
    for w in windows {
        if w.dim() != input_dim {
            return Err(Error::ShapeMismatch(format!(
                "window vector length {} != conv input {input_dim}",
                w.dim()
            )));
        }
        let mut col = params.conv_weights.matvec_sparse(w.entries());
        for (c, &b) in col.iter_mut().zip(&params.conv_bias) {
            *c += b;
        }
        columns.push(col);
    }
    Ok(FeatureMatrix {
        n_filters: params.conv_weights.rows(),
        columns,
    })
}

/// Elementwise hyperbolic tangent.
pub fn tanh_activation(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.tanh()).collect()
}

/// Row-wise maximum over windows: entry j is the largest activation of
/// filter j across all columns.
pub fn max_pool(features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.columns.is_empty() {
        return Err(Error::EmptyFeatureMatrix);
    }
    let mut pooled = features.columns[0].clone();
    for col in &features.columns[1..] {
        for (m, &v) in pooled.iter_mut().zip(col) {
            if v > *m {
                *m = v;
            }
        }
    }
    Ok(pooled)
}

/// Everything the backward pass needs from one document's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub windows: Vec<WindowVector>,
    /// The token windows, kept only when embeddings are trainable so their
    /// gradients can be scattered back per word.
    pub context: Option<Vec<crate::text::ContextWindow>>,
    /// tanh of the convolution activations.
    pub hidden: FeatureMatrix,
    /// Per filter, the lowest column index attaining the row maximum.
    pub argmax: Vec<usize>,
    pub pooled: Vec<f64>,
    /// The semantic vector.
    pub output: Vec<f64>,
}

pub(crate) fn forward_trace(
    tokens: &[Token],
    tower: &EncoderParams,
    repr: &WordRepr,
    config: &ModelConfig,
) -> Result<ForwardTrace> {
    if tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let context_windows = context_windows(tokens, config.context_k)?;
    let windows: Vec<WindowVector> = context_windows
        .iter()
        .map(|w| embed_window(w, repr))
        .collect();
    let context = repr.fine_tune().then_some(context_windows);
    let pre = conv_forward(&windows, tower)?;
    let hidden = FeatureMatrix {
        n_filters: pre.n_filters,
        columns: pre.columns.iter().map(|c| tanh_activation(c)).collect(),
    };
    // Max and argmax with ties broken to the lowest window index.
    let mut pooled = hidden.columns[0].clone();
    let mut argmax = vec![0usize; hidden.n_filters];
    for (t, col) in hidden.columns.iter().enumerate().skip(1) {
        for (j, &v) in col.iter().enumerate() {
            if v > pooled[j] {
                pooled[j] = v;
                argmax[j] = t;
            }
        }
    }
    let mut z = tower.proj_weights.matvec(&pooled);
    for (zv, &b) in z.iter_mut().zip(&tower.proj_bias) {
        *zv += b;
    }
    let output = tanh_activation(&z);
    Ok(ForwardTrace {
        windows,
        context,
        hidden,
        argmax,
        pooled,
        output,
    })
}

/// Full forward pass to the fixed-length semantic vector.
pub fn encode(
    tokens: &[Token],
    tower: &EncoderParams,
    repr: &WordRepr,
    config: &ModelConfig,
) -> Result<SemanticVector> {
    Ok(SemanticVector(
        forward_trace(tokens, tower, repr, config)?.output,
    ))
}

/// Cosine similarity, clamped into [-1, 1]. Computing the denominator as
/// sqrt(|a|^2 * |b|^2) makes the self-similarity of a vector exactly 1.0.
pub fn relevance(a: &SemanticVector, b: &SemanticVector) -> Result<f64> {
    relevance_slices(a.as_slice(), b.as_slice())
}

pub(crate) fn relevance_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    debug_assert_eq!(a.len(), b.len());
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::DegenerateVector);
    }
    Ok((dot(a, b) / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

// --- checkpoint serialization -------------------------------------------

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    mode: TowerMode,
    repr: ReprSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tri_letter_vocab: Option<Vec<String>>,
    towers: TowersSer,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReprSpec {
    TriLetter,
    Pretrained {
        dim: usize,
        oov_policy: OovPolicy,
        fine_tune: bool,
        entries: BTreeMap<String, Vec<f64>>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TowersSer {
    Shared { shared: EncoderParams },
    Twin {
        query: EncoderParams,
        document: EncoderParams,
    },
}

impl Checkpoint {
    fn from_model(model: &ModelParameters) -> Self {
        let (repr, tri_letter_vocab) = match &model.repr {
            WordRepr::TriLetterCount(vocab) => (
                ReprSpec::TriLetter,
                Some(
                    vocab
                        .entries()
                        .iter()
                        .map(|t| t.as_str().to_string())
                        .collect(),
                ),
            ),
            WordRepr::Pretrained {
                table,
                oov_policy,
                fine_tune,
            } => (
                ReprSpec::Pretrained {
                    dim: table.dim(),
                    oov_policy: *oov_policy,
                    fine_tune: *fine_tune,
                    entries: table.entries().clone(),
                },
                None,
            ),
        };
        let towers = match &model.towers {
            Towers::Shared(t) => TowersSer::Shared { shared: t.clone() },
            Towers::Twin { query, document } => TowersSer::Twin {
                query: query.clone(),
                document: document.clone(),
            },
        };
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: model.config,
            mode: model.mode(),
            repr,
            tri_letter_vocab,
            towers,
        }
    }

    fn into_model(self) -> Result<ModelParameters> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(self.version));
        }
        self.config.validate()?;
        let repr = match self.repr {
            ReprSpec::TriLetter => {
                let entries = self.tri_letter_vocab.ok_or_else(|| {
                    Error::InvalidConfig("tri_letter checkpoint missing tri_letter_vocab".into())
                })?;
                WordRepr::TriLetterCount(TriLetterVocab::from_entries(entries)?)
            }
            ReprSpec::Pretrained {
                dim,
                oov_policy,
                fine_tune,
                entries,
            } => WordRepr::Pretrained {
                table: PretrainedTable::new(dim, entries)?,
                oov_policy,
                fine_tune,
            },
        };
        if repr.word_dim() != self.config.word_dim {
            return Err(Error::InvalidConfig(format!(
                "checkpoint word_dim {} does not match representation dimension {}",
                self.config.word_dim,
                repr.word_dim()
            )));
        }
        let towers = match (self.mode, self.towers) {
            (TowerMode::Shared, TowersSer::Shared { shared }) => {
                shared.validate_shapes(&self.config)?;
                Towers::Shared(shared)
            }
            (TowerMode::Twin, TowersSer::Twin { query, document }) => {
                query.validate_shapes(&self.config)?;
                document.validate_shapes(&self.config)?;
                Towers::Twin { query, document }
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "checkpoint mode does not match its tower layout".into(),
                ))
            }
        };
        Ok(ModelParameters {
            config: self.config,
            towers,
            repr,
        })
    }
}
