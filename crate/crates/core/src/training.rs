//! Pair construction from question-grouped labels, the smoothed softmax
//! ranking loss over cosine scores, exact backpropagation (checked against
//! central finite differences) and minibatch SGD.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::embeddings::WordRepr;
use crate::encoder::{
    forward_trace, ForwardTrace, ModelConfig, ModelParameters, TowerMode, Towers,
};
use crate::error::{Error, Result};
use crate::linalg::{add_scaled, dot, Mat};
use crate::text::Token;

/// Salt for the instance-generation RNG stream, so it does not correlate
/// with parameter initialization.
const INSTANCE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Salt for the per-epoch reshuffling stream.
const SHUFFLE_SEED_SALT: u64 = 0x517c_c1b7_2722_0a95;

/// Optimization hyperparameters. `gamma` lives in [`ModelConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Negatives sampled per positive pair.
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            negatives_per_positive: 4,
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 32,
            seed: 42,
            validation_fraction: 0.2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives_per_positive == 0 {
            return Err(Error::InvalidConfig(
                "negatives_per_positive must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "validation_fraction must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

/// Question-disjoint train/validation partition. A document appearing under
/// both a train and a validation question belongs to train only.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    pub train: LabeledCorpus,
    pub validation: LabeledCorpus,
}

/// Shuffles question ids by seed and partitions them; documents shared with
/// a train question are removed from validation questions, and validation
/// questions emptied by that rule are dropped.
pub fn split_corpus(corpus: &LabeledCorpus, fraction: f64, seed: u64) -> Result<SplitCorpus> {
    let n_questions = corpus.questions.len();
    if n_questions < 2 {
        return Err(Error::TooFewQuestions(n_questions));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(
            "validation fraction must lie strictly between 0 and 1".into(),
        ));
    }
    let mut qids: Vec<&String> = corpus.questions.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    qids.shuffle(&mut rng);
    let n_val = ((fraction * n_questions as f64).round() as usize).clamp(1, n_questions - 1);
    let val_qids: BTreeSet<&String> = qids[..n_val].iter().copied().collect();

    let mut train_questions = BTreeMap::new();
    let mut val_questions = BTreeMap::new();
    for (qid, docs) in &corpus.questions {
        if val_qids.contains(qid) {
            val_questions.insert(qid.clone(), docs.clone());
        } else {
            train_questions.insert(qid.clone(), docs.clone());
        }
    }

    let train_docs_labeled: BTreeSet<&String> = train_questions.values().flatten().collect();
    for docs in val_questions.values_mut() {
        docs.retain(|d| !train_docs_labeled.contains(d));
    }
    val_questions.retain(|_, docs| !docs.is_empty());

    let val_doc_ids: BTreeSet<String> = val_questions.values().flatten().cloned().collect();
    let mut train_docs = BTreeMap::new();
    let mut val_docs = BTreeMap::new();
    for (id, tokens) in &corpus.docs {
        if val_doc_ids.contains(id) {
            val_docs.insert(id.clone(), tokens.clone());
        } else {
            train_docs.insert(id.clone(), tokens.clone());
        }
    }

    Ok(SplitCorpus {
        train: LabeledCorpus::new(train_docs, train_questions)?,
        validation: LabeledCorpus::new(val_docs, val_questions)?,
    })
}

/// One ranking example: a query document, one co-question positive and
/// sampled negatives sharing no question with the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub query_doc: String,
    pub positive_doc: String,
    pub negative_docs: Vec<String>,
}

/// Emits one instance per ordered pair of distinct documents sharing a
/// question, with `negatives` negatives sampled uniformly without
/// replacement. If fewer eligible negatives exist, all are taken, with a
/// warning.
pub fn generate_instances(
    corpus: &LabeledCorpus,
    negatives: usize,
    seed: u64,
) -> Result<Vec<TrainingInstance>> {
    // Ordered positive pairs, deduplicated across questions.
    let mut pairs: BTreeSet<(&String, &String)> = BTreeSet::new();
    for docs in corpus.questions.values() {
        for a in docs {
            for b in docs {
                if a != b {
                    pairs.insert((a, b));
                }
            }
        }
    }

    // doc -> set of question ids, for negative eligibility.
    let mut doc_questions: HashMap<&String, BTreeSet<&String>> = HashMap::new();
    for (qid, docs) in &corpus.questions {
        for d in docs {
            doc_questions.entry(d).or_default().insert(qid);
        }
    }
    let empty = BTreeSet::new();

    let all_docs: Vec<&String> = corpus.docs.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INSTANCE_SEED_SALT);
    let mut eligible_cache: HashMap<&String, Vec<&String>> = HashMap::new();
    let mut instances = Vec::with_capacity(pairs.len());
    for (query, positive) in pairs {
        let eligible = eligible_cache.entry(query).or_insert_with(|| {
            let q_questions = doc_questions.get(query).unwrap_or(&empty);
            all_docs
                .iter()
                .filter(|d| {
                    doc_questions
                        .get(*d)
                        .map_or(true, |qs| qs.is_disjoint(q_questions))
                })
                .copied()
                .collect()
        });
        let take = negatives.min(eligible.len());
        if take < negatives {
            log::warn!(
                "query {query:?}: only {} eligible negatives for requested {negatives}",
                eligible.len()
            );
        }
        let chosen = rand::seq::index::sample(&mut rng, eligible.len(), take);
        let mut negative_docs: Vec<String> =
            chosen.iter().map(|i| eligible[i].clone()).collect();
        negative_docs.sort();
        instances.push(TrainingInstance {
            query_doc: query.clone(),
            positive_doc: positive.clone(),
            negative_docs,
        });
    }
    Ok(instances)
}

/// Softmax weights over the candidate scores with max-subtraction; the
/// candidate order is preserved and the weights sum to 1.
fn softmax_weights(scores: &[f64], gamma: f64) -> Vec<f64> {
    debug_assert!(gamma > 0.0);
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &s| a.max(s)) * gamma;
    let exps: Vec<f64> = scores.iter().map(|&s| (gamma * s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// P(D+|Q): the positive's softmax weight among the candidate set
/// {positive} union negatives. Always in (0, 1].
pub fn posterior(score_pos: f64, scores_neg: &[f64], gamma: f64) -> f64 {
    let mut scores = Vec::with_capacity(1 + scores_neg.len());
    scores.push(score_pos);
    scores.extend_from_slice(scores_neg);
    softmax_weights(&scores, gamma)[0]
}

struct InstanceForward {
    query_trace: ForwardTrace,
    candidate_traces: Vec<ForwardTrace>,
    /// Candidate softmax weights; index 0 is the positive.
    weights: Vec<f64>,
    loss: f64,
}

fn doc_tokens<'a>(
    docs: &'a BTreeMap<String, Vec<Token>>,
    id: &str,
) -> Result<&'a Vec<Token>> {
    docs.get(id)
        .ok_or_else(|| Error::UnknownDocIds(id.to_string()))
}

fn cosine_parts(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::DegenerateVector);
    }
    let ab = dot(a, b);
    let score = (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0);
    Ok((score, ab, aa, bb))
}

fn instance_forward(
    instance: &TrainingInstance,
    model: &ModelParameters,
    docs: &BTreeMap<String, Vec<Token>>,
) -> Result<InstanceForward> {
    let query_trace = forward_trace(
        doc_tokens(docs, &instance.query_doc)?,
        model.query_tower(),
        &model.repr,
        &model.config,
    )?;
    let mut candidate_ids = Vec::with_capacity(1 + instance.negative_docs.len());
    candidate_ids.push(&instance.positive_doc);
    candidate_ids.extend(&instance.negative_docs);

    let mut candidate_traces = Vec::with_capacity(candidate_ids.len());
    let mut scores = Vec::with_capacity(candidate_ids.len());
    for id in &candidate_ids {
        let trace = forward_trace(
            doc_tokens(docs, id)?,
            model.doc_tower(),
            &model.repr,
            &model.config,
        )?;
        let (score, ..) = cosine_parts(&query_trace.output, &trace.output)
            .map_err(|_| Error::DegenerateDocument((*id).clone()))?;
        scores.push(score);
        candidate_traces.push(trace);
    }
    let weights = softmax_weights(&scores, model.config.gamma);
    let loss = -weights[0].ln();
    Ok(InstanceForward {
        query_trace,
        candidate_traces,
        weights,
        loss,
    })
}

/// Sum over the batch of -log P(D+|Q). Non-negative because the denominator
/// includes the positive candidate.
pub fn loss(
    batch: &[TrainingInstance],
    model: &ModelParameters,
    docs: &BTreeMap<String, Vec<Token>>,
) -> Result<f64> {
    let mut total = 0.0;
    for instance in batch {
        total += instance_forward(instance, model, docs)?.loss;
    }
    Ok(total)
}

/// Gradients of one encoder tower, same shapes as [`crate::encoder::EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct TowerGrads {
    pub conv_weights: Mat,
    pub conv_bias: Vec<f64>,
    pub proj_weights: Mat,
    pub proj_bias: Vec<f64>,
}

impl TowerGrads {
    fn zeros(config: &ModelConfig) -> Self {
        TowerGrads {
            conv_weights: Mat::zeros(config.n_filters, config.conv_input_dim()),
            conv_bias: vec![0.0; config.n_filters],
            proj_weights: Mat::zeros(config.semantic_dim, config.n_filters),
            proj_bias: vec![0.0; config.semantic_dim],
        }
    }

    fn add_assign(&mut self, other: &TowerGrads) {
        self.conv_weights.add_assign(&other.conv_weights);
        add_scaled(&mut self.conv_bias, &other.conv_bias, 1.0);
        self.proj_weights.add_assign(&other.proj_weights);
        add_scaled(&mut self.proj_bias, &other.proj_bias, 1.0);
    }
}

/// Gradient layout mirroring the tower layout.
#[derive(Debug, Clone, PartialEq)]
pub enum GradTowers {
    Shared(TowerGrads),
    Twin {
        query: TowerGrads,
        document: TowerGrads,
    },
}

/// Full gradient of the batch loss with respect to every trainable scalar.
/// `embedding` is only populated in fine-tuned pretrained mode and holds
/// entries for touched words only; absent words have zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub towers: GradTowers,
    pub embedding: BTreeMap<String, Vec<f64>>,
}

/// Backpropagates `d_output` through one document's forward trace into the
/// tower gradient buffer (and, when fine-tuning, the embedding gradients).
fn backprop_trace(
    trace: &ForwardTrace,
    d_output: &[f64],
    tower: &crate::encoder::EncoderParams,
    grads: &mut TowerGrads,
    mut embedding: Option<&mut BTreeMap<String, Vec<f64>>>,
    repr: &WordRepr,
) {
    // Output tanh.
    let dz2: Vec<f64> = d_output
        .iter()
        .zip(&trace.output)
        .map(|(&g, &y)| g * (1.0 - y * y))
        .collect();
    grads.proj_weights.add_outer(&dz2, &trace.pooled);
    add_scaled(&mut grads.proj_bias, &dz2, 1.0);

    // Through the projection into the pooled vector.
    let dm = tower.proj_weights.tr_matvec(&dz2);

    // Max-pool subgradient: route each filter's gradient to its argmax
    // window (ties already resolved to the lowest index in the trace).
    let mut by_column: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (j, (&g, &t)) in dm.iter().zip(&trace.argmax).enumerate() {
        if g == 0.0 {
            continue;
        }
        let h = trace.hidden.columns[t][j];
        by_column.entry(t).or_default().push((j, g * (1.0 - h * h)));
    }

    let n_filters = trace.hidden.n_filters;
    let word_dim = repr.word_dim();
    for (t, items) in by_column {
        let mut dz1 = vec![0.0; n_filters];
        for &(j, v) in &items {
            dz1[j] = v;
        }
        let window = &trace.windows[t];
        grads.conv_weights.add_outer_sparse(&dz1, window.entries());
        add_scaled(&mut grads.conv_bias, &dz1, 1.0);

        if let Some(embedding) = embedding.as_deref_mut() {
            let WordRepr::Pretrained { table, .. } = repr else {
                continue;
            };
            let dx = tower.conv_weights.tr_matvec(&dz1);
            let slots = trace
                .context
                .as_ref()
                .expect("fine-tuned traces record window tokens");
            for (slot_idx, slot) in slots[t].slots().iter().enumerate() {
                let Some(token) = slot else { continue };
                // OOV words have no trainable vector.
                if table.get(token.as_str()).is_none() {
                    continue;
                }
                let grad = embedding
                    .entry(token.as_str().to_string())
                    .or_insert_with(|| vec![0.0; word_dim]);
                let base = slot_idx * word_dim;
                add_scaled(grad, &dx[base..base + word_dim], 1.0);
            }
        }
    }
}

/// Batch loss plus its exact analytic gradient. Query-side and
/// document-side contributions accumulate into separate buffers; shared
/// mode returns their sum, so a twin model with tied weights produces two
/// towers whose gradients sum to the shared gradient exactly.
pub fn loss_and_gradients(
    batch: &[TrainingInstance],
    model: &ModelParameters,
    docs: &BTreeMap<String, Vec<Token>>,
) -> Result<(f64, GradientSet)> {
    let gamma = model.config.gamma;
    let mut query_side = TowerGrads::zeros(&model.config);
    let mut doc_side = TowerGrads::zeros(&model.config);
    let mut embedding: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let fine_tune = model.repr.fine_tune();
    let mut total_loss = 0.0;

    for instance in batch {
        let fwd = instance_forward(instance, model, docs)?;
        total_loss += fwd.loss;

        // d loss / d score: gamma * (w_c - [c is positive]).
        let d_scores: Vec<f64> = fwd
            .weights
            .iter()
            .enumerate()
            .map(|(c, &w)| gamma * (w - if c == 0 { 1.0 } else { 0.0 }))
            .collect();

        let yq = &fwd.query_trace.output;
        let mut d_yq = vec![0.0; yq.len()];
        for (trace, &g) in fwd.candidate_traces.iter().zip(&d_scores) {
            let yd = &trace.output;
            let (score, _ab, aa, bb) =
                cosine_parts(yq, yd).expect("scored candidates are non-degenerate");
            let inv_norms = 1.0 / (aa * bb).sqrt();
            // d score / d yq = yd/(|yq||yd|) - score * yq/|yq|^2, and
            // symmetrically for yd.
            let mut d_yd = vec![0.0; yd.len()];
            for i in 0..yq.len() {
                d_yq[i] += g * (yd[i] * inv_norms - score * yq[i] / aa);
                d_yd[i] = g * (yq[i] * inv_norms - score * yd[i] / bb);
            }
            backprop_trace(
                trace,
                &d_yd,
                model.doc_tower(),
                &mut doc_side,
                fine_tune.then_some(&mut embedding),
                &model.repr,
            );
        }
        backprop_trace(
            &fwd.query_trace,
            &d_yq,
            model.query_tower(),
            &mut query_side,
            fine_tune.then_some(&mut embedding),
            &model.repr,
        );
    }

    let towers = match model.mode() {
        TowerMode::Shared => {
            let mut combined = query_side;
            combined.add_assign(&doc_side);
            GradTowers::Shared(combined)
        }
        TowerMode::Twin => GradTowers::Twin {
            query: query_side,
            document: doc_side,
        },
    };
    Ok((
        total_loss,
        GradientSet {
            towers,
            embedding,
        },
    ))
}

/// Exact analytic gradient of [`loss`] for the batch.
pub fn gradients(
    batch: &[TrainingInstance],
    model: &ModelParameters,
    docs: &BTreeMap<String, Vec<Token>>,
) -> Result<GradientSet> {
    Ok(loss_and_gradients(batch, model, docs)?.1)
}

/// One SGD step: theta -= learning_rate * gradient.
pub fn apply_update(model: &mut ModelParameters, grads: &GradientSet, learning_rate: f64) {
    match (&mut model.towers, &grads.towers) {
        (Towers::Shared(t), GradTowers::Shared(g)) => sub_tower(t, g, learning_rate),
        (
            Towers::Twin { query, document },
            GradTowers::Twin {
                query: gq,
                document: gd,
            },
        ) => {
            sub_tower(query, gq, learning_rate);
            sub_tower(document, gd, learning_rate);
        }
        _ => panic!("gradient layout does not match tower layout"),
    }
    if !grads.embedding.is_empty() {
        if let WordRepr::Pretrained { table, .. } = &mut model.repr {
            for (word, g) in &grads.embedding {
                if let Some(v) = table.entries_mut().get_mut(word) {
                    add_scaled(v, g, -learning_rate);
                }
            }
        }
    }
}

fn sub_tower(t: &mut crate::encoder::EncoderParams, g: &TowerGrads, lr: f64) {
    t.conv_weights.sub_scaled(&g.conv_weights, lr);
    add_scaled(&mut t.conv_bias, &g.conv_bias, -lr);
    t.proj_weights.sub_scaled(&g.proj_weights, lr);
    add_scaled(&mut t.proj_bias, &g.proj_bias, -lr);
}

// --- flat views over the trainable scalars --------------------------------

fn towers_list(model: &ModelParameters) -> Vec<&crate::encoder::EncoderParams> {
    match &model.towers {
        Towers::Shared(t) => vec![t],
        Towers::Twin { query, document } => vec![query, document],
    }
}

/// All trainable scalars in a fixed order: per tower conv weights, conv
/// bias, projection weights, projection bias; then (when fine-tuning) the
/// embedding table in word order.
pub fn flatten_trainable(model: &ModelParameters) -> Vec<f64> {
    let mut out = Vec::new();
    for t in towers_list(model) {
        out.extend_from_slice(t.conv_weights.as_slice());
        out.extend_from_slice(&t.conv_bias);
        out.extend_from_slice(t.proj_weights.as_slice());
        out.extend_from_slice(&t.proj_bias);
    }
    if model.repr.fine_tune() {
        if let WordRepr::Pretrained { table, .. } = &model.repr {
            for v in table.entries().values() {
                out.extend_from_slice(v);
            }
        }
    }
    out
}

/// Flattens a gradient set in the same order as [`flatten_trainable`].
pub fn flatten_gradients(grads: &GradientSet, model: &ModelParameters) -> Vec<f64> {
    let mut out = Vec::new();
    let tower_grads: Vec<&TowerGrads> = match &grads.towers {
        GradTowers::Shared(t) => vec![t],
        GradTowers::Twin { query, document } => vec![query, document],
    };
    for t in tower_grads {
        out.extend_from_slice(t.conv_weights.as_slice());
        out.extend_from_slice(&t.conv_bias);
        out.extend_from_slice(t.proj_weights.as_slice());
        out.extend_from_slice(&t.proj_bias);
    }
    if model.repr.fine_tune() {
        if let WordRepr::Pretrained { table, .. } = &model.repr {
            let dim = table.dim();
            for word in table.entries().keys() {
                match grads.embedding.get(word) {
                    Some(g) => out.extend_from_slice(g),
                    None => out.extend(std::iter::repeat(0.0).take(dim)),
                }
            }
        }
    }
    out
}

fn set_trainable(model: &mut ModelParameters, index: usize, value: f64) {
    let mut offset = index;
    let towers: Vec<&mut crate::encoder::EncoderParams> = match &mut model.towers {
        Towers::Shared(t) => vec![t],
        Towers::Twin { query, document } => vec![query, document],
    };
    for t in towers {
        for seg in [
            t.conv_weights.as_mut_slice(),
            t.conv_bias.as_mut_slice(),
            t.proj_weights.as_mut_slice(),
            t.proj_bias.as_mut_slice(),
        ] {
            if offset < seg.len() {
                seg[offset] = value;
                return;
            }
            offset -= seg.len();
        }
    }
    if let WordRepr::Pretrained {
        table,
        fine_tune: true,
        ..
    } = &mut model.repr
    {
        let dim = table.dim();
        let word_rank = offset / dim;
        let comp = offset % dim;
        let v = table
            .entries_mut()
            .values_mut()
            .nth(word_rank)
            .expect("trainable index in range");
        v[comp] = value;
        return;
    }
    panic!("trainable index {index} out of range");
}

/// Central finite differences of the batch loss, in flat order.
pub fn fd_gradients_flat(
    batch: &[TrainingInstance],
    model: &ModelParameters,
    docs: &BTreeMap<String, Vec<Token>>,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveStep);
    }
    let flat = flatten_trainable(model);
    let mut scratch = model.clone();
    let mut out = Vec::with_capacity(flat.len());
    for (idx, &orig) in flat.iter().enumerate() {
        set_trainable(&mut scratch, idx, orig + h);
        let plus = loss(batch, &scratch, docs)?;
        set_trainable(&mut scratch, idx, orig - h);
        let minus = loss(batch, &scratch, docs)?;
        set_trainable(&mut scratch, idx, orig);
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Maximum relative error between two flat gradient vectors, falling back
/// to absolute error below 1e-8 magnitude.
pub fn max_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs());
            let diff = (a - n).abs();
            if denom < 1e-8 {
                diff
            } else {
                diff / denom
            }
        })
        .fold(0.0, f64::max)
}

/// Compares analytic gradients against central finite differences and
/// returns the maximum relative error over every trainable scalar.
pub fn finite_difference_check(
    batch: &[TrainingInstance],
    model: &ModelParameters,
    docs: &BTreeMap<String, Vec<Token>>,
    h: f64,
) -> Result<f64> {
    let analytic = flatten_gradients(&gradients(batch, model, docs)?, model);
    let numeric = fd_gradients_flat(batch, model, docs, h)?;
    Ok(max_gradient_error(&analytic, &numeric))
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_f1_at_1: f64,
}

/// Minibatch SGD over the training split. Instances are generated once and
/// reshuffled each epoch by a seeded generator; the whole run is
/// deterministic given the seed. `on_epoch` fires after every epoch with
/// the current parameters, e.g. to write checkpoints.
pub fn train<F>(
    split: &SplitCorpus,
    config: ModelConfig,
    training: &TrainingConfig,
    mode: TowerMode,
    repr: WordRepr,
    mut on_epoch: F,
) -> Result<(ModelParameters, Vec<EpochStats>)>
where
    F: FnMut(&ModelParameters, &EpochStats) -> Result<()>,
{
    config.validate()?;
    training.validate()?;
    let instances = generate_instances(
        &split.train,
        training.negatives_per_positive,
        training.seed,
    )?;
    if instances.is_empty() {
        return Err(Error::NoTrainingPairs);
    }
    let mut model = ModelParameters::init(config, mode, repr, training.seed)?;
    let docs = &split.train.docs;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(training.seed ^ SHUFFLE_SEED_SALT);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut history = Vec::with_capacity(training.epochs);
    for epoch in 1..=training.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(training.batch_size).enumerate() {
            let batch: Vec<TrainingInstance> =
                chunk.iter().map(|&i| instances[i].clone()).collect();
            let (batch_loss, grads) = loss_and_gradients(&batch, &model, docs)?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    learning_rate: training.learning_rate,
                });
            }
            apply_update(&mut model, &grads, training.learning_rate);
            epoch_loss += batch_loss;
        }
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / instances.len() as f64,
            validation_f1_at_1: crate::eval::validation_f1_at_1(&model, split)?,
        };
        on_epoch(&model, &stats)?;
        history.push(stats);
    }
    Ok((model, history))
}
