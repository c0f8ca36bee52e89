//! Content-based document recommendation with a convolutional semantic
//! encoder.
//!
//! Documents and queries are embedded by tri-letter word hashing or
//! pretrained word vectors, convolved over context windows, max-pooled and
//! projected to fixed-length semantic vectors ranked by cosine. Training
//! minimizes a smoothed softmax loss over question-grouped relevance
//! labels, with gradients verified against finite differences. Retrieval
//! runs exact cosine k-NN or binary-code bucket probing, and evaluation
//! reports recall/precision/f1 at configurable cutoffs.

pub mod corpus;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod linalg;
pub mod synth;
pub mod text;
pub mod training;
pub mod util;

pub use corpus::LabeledCorpus;
pub use embeddings::{OovPolicy, PretrainedTable, WindowVector, WordRepr};
pub use encoder::{
    relevance, EncoderParams, ModelConfig, ModelParameters, SemanticVector, TowerMode,
};
pub use error::{Error, Result};
pub use eval::{EvalQuery, MetricsReport, MetricsRow};
pub use index::{BinaryCodeIndex, QueryResult, SemanticIndex};
pub use synth::{gen_data, SyntheticData, SyntheticSpec};
pub use text::{Token, TriLetter, TriLetterVocab};
pub use training::{
    split_corpus, train, EpochStats, SplitCorpus, TrainingConfig, TrainingInstance,
};
