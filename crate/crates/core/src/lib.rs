//! Emoji-category prediction for colloquial Arabic tweets.
//!
//! The pipeline labels each tweet by its first emoji, cleans the text,
//! splits the corpus, fits TF-IDF features on the training half, trains a
//! softmax regression classifier and evaluates it per category. The numeric
//! code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod emoji;
pub mod error;
pub mod features;
pub mod metrics;
pub mod normalize;
pub mod scalar;

pub use classifier::{SoftmaxModel, TrainConfig, TrainLog};
pub use corpus::{SplitSpec, SynthSpec, TweetRecord};
pub use emoji::{LabelMap, Precedence};
pub use error::{Error, Result};
pub use features::{SparseVector, TfidfModel};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use normalize::CleaningConfig;
pub use scalar::Scalar;

pub type Model = SoftmaxModel<f64>;
pub type Tfidf = TfidfModel<f64>;
pub type Vector = SparseVector<f64>;
pub type Report = EvalReport<f64>;
