#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod features;
pub mod finetune;
pub mod fixtures;
pub mod nn;
pub mod registry;

pub use encoder::BertConfig;
pub use error::{NeuralError, Result};
pub use features::{extract_embeddings, extract_embeddings_words, read_features, write_features, ExtractedFeatures};
pub use finetune::{
    fine_tune, fine_tune_bundle, predict_classify, predict_classify_words, predict_tags, predict_tags_words,
    ClassPredictions, EncoderSource, FinetuneConfig, LabeledText, Supervised, Target, TaskHead, TrainedModel, Trainer,
};
pub use registry::{registry_load, Checkpoint, Locator, MiniSpec, ModelVariant, Registry, VariantKey};
