use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::encoder::{BertConfig, Encoder};
use crate::error::{io, NeuralError, Result};
use crate::nn::{normal_tensor, softmax_row, Adam, AdamConfig, GradStore, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::registry::{Checkpoint, ModelVariant};
use pharmvig_core::corpus::{DatasetBundle, NerRecord, SentimentExample, Task, TweetRecord};
use pharmvig_core::eval::EpochMetrics;
use pharmvig_core::rng::{seeded, SeededRng};
use pharmvig_core::textprep::{
    align_bio_to_subtokens, project_subtoken_predictions_to_words, tokenize_words, word_tokenize, TokenizedText, Vocab,
    DEFAULT_MAX_SEQ_LEN,
};
use pharmvig_core::{BioTag, Label, PresenceLabel};

const HEAD_WEIGHT: &str = "classifier.weight";
const HEAD_BIAS: &str = "classifier.bias";
const META_FILE: &str = "finetune.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskHead {
    Classify3,
    Classify2,
    TagBio,
}

impl TaskHead {
    pub fn num_labels(self) -> usize {
        match self {
            TaskHead::Classify3 | TaskHead::TagBio => 3,
            TaskHead::Classify2 => 2,
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Sentiment => TaskHead::Classify3,
            Task::Presence => TaskHead::Classify2,
            Task::Ner => TaskHead::TagBio,
        }
    }

    pub fn is_classifier(self) -> bool {
        self != TaskHead::TagBio
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskHead::Classify3 => "classify_3",
            TaskHead::Classify2 => "classify_2",
            TaskHead::TagBio => "tag_bio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub max_seq_len: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub epochs: usize,
    pub seed: u64,
    pub task_head: TaskHead,
}

impl FinetuneConfig {
    /// Sequence length 128, batch 32, learning rate 2e-5.
    pub fn new(task_head: TaskHead, epochs: usize, seed: u64) -> Self {
        Self { max_seq_len: DEFAULT_MAX_SEQ_LEN, batch_size: 32, learning_rate: 2e-5, epochs, seed, task_head }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(NeuralError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NeuralError::Config("batch_size must be at least 1".into()));
        }
        if self.max_seq_len < 2 {
            return Err(NeuralError::Config("max_seq_len must be at least 2".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NeuralError::Config(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Tags(Vec<BioTag>),
}

/// Pre-split words with their supervision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub words: Vec<String>,
    pub target: Target,
}

impl LabeledText {
    pub fn class(text: &str, class: usize) -> Self {
        Self { words: word_tokenize(text), target: Target::Class(class) }
    }

    pub fn tagged(words: Vec<String>, tags: Vec<BioTag>) -> Self {
        Self { words, target: Target::Tags(tags) }
    }
}

/// Corpus records that can feed a fine-tuning head.
pub trait Supervised {
    const TASK: Task;
    fn labeled(&self) -> Result<LabeledText>;
}

impl Supervised for SentimentExample {
    const TASK: Task = Task::Sentiment;
    fn labeled(&self) -> Result<LabeledText> {
        Ok(LabeledText::class(&self.text, self.label.index()))
    }
}

impl Supervised for TweetRecord {
    const TASK: Task = Task::Presence;
    fn labeled(&self) -> Result<LabeledText> {
        let text = self
            .text
            .as_deref()
            .ok_or_else(|| NeuralError::Config(format!("tweet {} has no text", self.tweet_id)))?;
        Ok(LabeledText::class(text, PresenceLabel::from_bool(self.has_adr).index()))
    }
}

impl Supervised for NerRecord {
    const TASK: Task = Task::Ner;
    fn labeled(&self) -> Result<LabeledText> {
        Ok(LabeledText::tagged(self.words.clone(), self.bio_tags.clone()))
    }
}

/// Tokenized example with one optional target per logit row.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tokens: TokenizedText,
    targets: Vec<Option<usize>>,
}

impl Prepared {
    fn labeled_count(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

/// Encoder weights plus the handles needed to run it.
pub trait EncoderSource {
    fn variant(&self) -> &ModelVariant;
    fn bert_config(&self) -> &BertConfig;
    fn vocab(&self) -> &Vocab;
    fn params(&self) -> &ParamStore;
    fn is_finetuned(&self) -> bool;
}

impl EncoderSource for Checkpoint {
    fn variant(&self) -> &ModelVariant {
        &self.variant
    }
    fn bert_config(&self) -> &BertConfig {
        &self.config
    }
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn is_finetuned(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    variant: ModelVariant,
    config: FinetuneConfig,
    epoch_metrics: Vec<EpochMetrics>,
}

/// Encoder and task head after fine-tuning.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: ModelVariant,
    pub config: FinetuneConfig,
    pub epoch_metrics: Vec<EpochMetrics>,
    pub bert: BertConfig,
    pub vocab: Vocab,
    /// Encoder tensors plus `classifier.weight` / `classifier.bias`.
    pub params: ParamStore,
    encoder: Encoder,
    head_w: ParamId,
    head_b: ParamId,
}

impl EncoderSource for TrainedModel {
    fn variant(&self) -> &ModelVariant {
        &self.variant
    }
    fn bert_config(&self) -> &BertConfig {
        &self.bert
    }
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn is_finetuned(&self) -> bool {
        true
    }
}

impl TrainedModel {
    /// Fresh head of N(0, initializer_range) on top of the checkpoint.
    fn init(ckpt: &Checkpoint, config: &FinetuneConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        if config.max_seq_len > ckpt.config.max_position_embeddings {
            return Err(NeuralError::Config(format!(
                "max_seq_len {} exceeds the encoder's {} positions",
                config.max_seq_len, ckpt.config.max_position_embeddings
            )));
        }
        let h = ckpt.config.hidden_size;
        let c = config.task_head.num_labels();
        let mut params = ckpt.params.clone();
        let head_w = params.insert(HEAD_WEIGHT, normal_tensor(h, c, ckpt.config.initializer_range, rng))?;
        let head_b = params.insert(HEAD_BIAS, Tensor::zeros(1, c))?;
        let encoder = Encoder::bind(ckpt.config.clone(), &params)?;
        Ok(Self {
            variant: ckpt.variant.clone(),
            config: config.clone(),
            epoch_metrics: Vec::new(),
            bert: ckpt.config.clone(),
            vocab: ckpt.vocab.clone(),
            params,
            encoder,
            head_w,
            head_b,
        })
    }

    pub fn head(&self) -> TaskHead {
        self.config.task_head
    }

    fn tokenize(&self, words: &[String]) -> Result<TokenizedText> {
        Ok(tokenize_words(words, &self.vocab, self.variant.cased, self.config.max_seq_len)?)
    }

    fn prepare(&self, ex: &LabeledText) -> Result<Prepared> {
        let tokens = self.tokenize(&ex.words)?;
        let head = self.config.task_head;
        let targets = match (&ex.target, head.is_classifier()) {
            (Target::Class(c), true) if *c < head.num_labels() => vec![Some(*c)],
            (Target::Class(c), true) => {
                return Err(NeuralError::Shape(format!("class {c} outside the {}-way head", head.num_labels())))
            }
            (Target::Tags(tags), false) => align_bio_to_subtokens(&tokens, tags)?
                .into_iter()
                .map(|t| t.map(|t| t.index()))
                .collect(),
            _ => {
                return Err(NeuralError::Shape(format!("{} head cannot learn from this target", head.name())));
            }
        };
        Ok(Prepared { tokens, targets })
    }

    pub fn prepare_all(&self, examples: &[LabeledText]) -> Result<Vec<Prepared>> {
        examples.iter().map(|e| self.prepare(e)).collect()
    }

    fn logits(&self, g: &mut Graph, ids: &[u32]) -> Result<NodeId> {
        let hidden = self.encoder.forward(g, ids)?;
        let p = self.bert.hidden_dropout_prob;
        let feats = if self.config.task_head.is_classifier() { self.encoder.pool(g, hidden) } else { hidden };
        let feats = g.dropout(feats, p);
        Ok(g.linear(feats, self.head_w, self.head_b))
    }

    fn eval_logits(&self, tokens: &TokenizedText) -> Result<Tensor> {
        let mut g = Graph::eval(&self.params);
        let l = self.logits(&mut g, &tokens.subtokens)?;
        Ok(g.value(l).clone())
    }

    /// Mean cross-entropy and accuracy over labeled rows, without dropout.
    pub fn evaluate(&self, examples: &[Prepared]) -> Result<(f64, f64)> {
        let (mut loss, mut correct, mut n) = (0.0f64, 0usize, 0usize);
        for ex in examples {
            let logits = self.eval_logits(&ex.tokens)?;
            for (r, t) in ex.targets.iter().enumerate() {
                let Some(t) = *t else { continue };
                let row = logits.row(r);
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
                loss += f64::from(lse - row[t]);
                correct += usize::from(argmax(row) == t);
                n += 1;
            }
        }
        if n == 0 {
            return Ok((0.0, 0.0));
        }
        Ok((loss / n as f64, correct as f64 / n as f64))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, &self.bert, &self.vocab, &self.params)?;
        let meta = Meta {
            variant: self.variant.clone(),
            config: self.config.clone(),
            epoch_metrics: self.epoch_metrics.clone(),
        };
        let path = dir.join(META_FILE);
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let meta: Meta = serde_json::from_str(&fs::read_to_string(&path).map_err(io(&path))?)?;
        let cfg = crate::checkpoint::read_config(dir)?;
        let (h, c) = (cfg.hidden_size, meta.config.task_head.num_labels());
        let (bert, vocab, params) = load_checkpoint(dir, &[(HEAD_WEIGHT, h, c), (HEAD_BIAS, 1, c)])?;
        let head_w = params.id(HEAD_WEIGHT)?;
        let head_b = params.id(HEAD_BIAS)?;
        let encoder = Encoder::bind(bert.clone(), &params)?;
        Ok(Self {
            variant: meta.variant,
            config: meta.config,
            epoch_metrics: meta.epoch_metrics,
            bert,
            vocab,
            params,
            encoder,
            head_w,
            head_b,
        })
    }
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Owns a model during fine-tuning: optimizer state, gradient buffers and
/// the run's single random stream.
pub struct Trainer {
    model: TrainedModel,
    opt: Adam,
    grads: GradStore,
    rng: SeededRng,
    steps: usize,
}

impl Trainer {
    pub fn new(ckpt: &Checkpoint, config: &FinetuneConfig) -> Result<Self> {
        let mut rng = seeded(config.seed);
        let model = TrainedModel::init(ckpt, config, &mut rng)?;
        let opt = Adam::new(&model.params, AdamConfig::with_lr(config.learning_rate));
        let grads = GradStore::for_params(&model.params);
        Ok(Self { model, opt, grads, rng, steps: 0 })
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn into_model(self) -> TrainedModel {
        self.model
    }

    /// One optimizer update on `batch`. Returns the batch loss measured in
    /// the same (dropout-on) forward pass that produced the gradient.
    pub fn step(&mut self, batch: &[Prepared]) -> Result<f64> {
        self.grads.zero();
        let classify = self.model.config.task_head.is_classifier();
        let denom = if classify { batch.len() } else { batch.iter().map(Prepared::labeled_count).sum() };
        let weight = if denom == 0 { 0.0 } else { 1.0 / denom as f32 };
        let mut total = 0.0f64;
        for ex in batch {
            let mut g = Graph::train(&self.model.params, &mut self.rng);
            let logits = self.model.logits(&mut g, &ex.tokens.subtokens)?;
            let loss = g.cross_entropy(logits, &ex.targets, weight);
            total += f64::from(g.value(loss).scalar());
            g.backward(loss, &mut self.grads);
        }
        self.steps += 1;
        if !total.is_finite() {
            return Err(NeuralError::NonFinite(format!("optimizer step {}", self.steps)));
        }
        self.opt.step(&mut self.model.params, &self.grads);
        Ok(total)
    }

    /// One pass over `train` in a freshly shuffled order.
    pub fn epoch(&mut self, train: &[Prepared]) -> Result<f64> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut losses = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.model.config.batch_size) {
            let batch: Vec<Prepared> = chunk.iter().map(|&i| train[i].clone()).collect();
            losses += self.step(&batch)?;
            batches += 1;
        }
        Ok(if batches == 0 { 0.0 } else { losses / batches as f64 })
    }
}

/// Seeded fine-tuning. After every epoch the dev split is scored; when it
/// is empty the training split is scored instead.
pub fn fine_tune(ckpt: &Checkpoint, train: &[LabeledText], dev: &[LabeledText], config: &FinetuneConfig) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(NeuralError::Config("empty training set".into()));
    }
    let mut trainer = Trainer::new(ckpt, config)?;
    let train_p = trainer.model.prepare_all(train)?;
    let dev_p = if dev.is_empty() { train_p.clone() } else { trainer.model.prepare_all(dev)? };
    for epoch in 1..=config.epochs {
        trainer.epoch(&train_p)?;
        let (dev_loss, dev_accuracy) = trainer.model.evaluate(&dev_p)?;
        if !dev_loss.is_finite() {
            return Err(NeuralError::NonFinite(format!("dev evaluation after epoch {epoch}")));
        }
        trainer.model.epoch_metrics.push(EpochMetrics { epoch, dev_accuracy, dev_loss });
    }
    Ok(trainer.into_model())
}

/// `fine_tune` on a bundle's train and dev splits.
pub fn fine_tune_bundle<T: Supervised>(
    ckpt: &Checkpoint,
    bundle: &DatasetBundle<T>,
    config: &FinetuneConfig,
) -> Result<TrainedModel> {
    if bundle.task != T::TASK || TaskHead::for_task(bundle.task) != config.task_head {
        return Err(NeuralError::Config(format!(
            "{} head does not fit the {} task",
            config.task_head.name(),
            bundle.task
        )));
    }
    let train = bundle.train.iter().map(Supervised::labeled).collect::<Result<Vec<_>>>()?;
    let dev = bundle.dev.iter().map(Supervised::labeled).collect::<Result<Vec<_>>>()?;
    fine_tune(ckpt, &train, &dev, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPredictions {
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

pub fn predict_classify_words(model: &TrainedModel, texts: &[Vec<String>]) -> Result<ClassPredictions> {
    if !model.head().is_classifier() {
        return Err(NeuralError::Config("predict_classify needs a classification head".into()));
    }
    let mut out = ClassPredictions { labels: Vec::new(), probabilities: Vec::new() };
    for words in texts {
        let t = model.tokenize(words)?;
        let logits = model.eval_logits(&t)?;
        let mut row = logits.row(0).to_vec();
        out.labels.push(argmax(&row));
        softmax_row(&mut row);
        out.probabilities.push(row.into_iter().map(f64::from).collect());
    }
    Ok(out)
}

pub fn predict_classify<S: AsRef<str>>(model: &TrainedModel, texts: &[S]) -> Result<ClassPredictions> {
    let words: Vec<Vec<String>> = texts.iter().map(|t| word_tokenize(t.as_ref())).collect();
    predict_classify_words(model, &words)
}

/// Word-level tags read off each word's first subtoken.
pub fn predict_tags_words(model: &TrainedModel, texts: &[Vec<String>]) -> Result<Vec<Vec<BioTag>>> {
    if model.head() != TaskHead::TagBio {
        return Err(NeuralError::Config("predict_tags needs a tag_bio head".into()));
    }
    texts
        .iter()
        .map(|words| {
            if words.is_empty() {
                return Ok(Vec::new());
            }
            let t = model.tokenize(words)?;
            let logits = model.eval_logits(&t)?;
            let sub: Vec<BioTag> =
                (0..logits.rows).map(|r| BioTag::from_index(argmax(logits.row(r))).expect("3 logits")).collect();
            Ok(project_subtoken_predictions_to_words(&t, &sub))
        })
        .collect()
}

pub fn predict_tags<S: AsRef<str>>(model: &TrainedModel, texts: &[S]) -> Result<Vec<Vec<BioTag>>> {
    let words: Vec<Vec<String>> = texts.iter().map(|t| word_tokenize(t.as_ref())).collect();
    predict_tags_words(model, &words)
}
