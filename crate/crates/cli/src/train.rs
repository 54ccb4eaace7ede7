//! `train`: dispatch a model key to its trainer, score the test split and
//! persist the run.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use pharmvig_core::baselines::{crf_decode, crf_train, lr_train, nb_predict, nb_train, CrfConfig, LrConfig, MostCommonClass};
use pharmvig_core::corpus::{Task, TrainVariant};
use pharmvig_core::eval::{confusion, metrics, EpochMetrics, EvalReport};
use pharmvig_core::textprep::{ngram_featurize, DEFAULT_NGRAM_RANGE};
use pharmvig_core::{BioTag, Label, PresenceLabel, SentimentLabel};
use pharmvig_neural::downstream::{
    train_cnn, train_lstm, CnnClassifierConfig, LstmClassifierConfig, SequenceClassifier, TrainSettings,
};
use pharmvig_neural::{
    fine_tune, predict_classify_words, predict_tags_words, registry_load, ExtractedFeatures, FinetuneConfig, TaskHead,
};

use crate::bundles::{label_names, load_split, positive_label, train_split, SplitData};
use crate::config::ToolkitConfig;
use crate::extract::{features_dir, load_split_features, FINETUNED_MODEL_DIR};
use crate::fsutil::{sha256_hex, write_atomic, write_jsonl};
use crate::models::{Downstream, ModelKey};
use crate::record::{
    load_record, run_id, Hyper, Prediction, RunRecord, Staging, TrainRequest, FORMAT_VERSION, PREDICTIONS_FILE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArgs {
    pub task: Task,
    pub model: ModelKey,
    pub epochs: Option<usize>,
    pub trainset: TrainVariant,
    pub seed: Option<u64>,
    pub from_finetuned: Option<String>,
    pub force: bool,
}

impl TrainArgs {
    pub fn new(task: Task, model: ModelKey) -> Self {
        Self { task, model, epochs: None, trainset: TrainVariant::Natural, seed: None, from_finetuned: None, force: false }
    }
}

/// Resolves command-line arguments against the config defaults.
pub fn build_request(cfg: &ToolkitConfig, args: &TrainArgs) -> Result<TrainRequest> {
    let (task, model) = (args.task, args.model);
    model.check_task(task)?;
    if args.trainset != TrainVariant::Natural && task != Task::Presence {
        bail!("only the presence task has rebalanced training sets");
    }
    if args.epochs == Some(0) {
        bail!("--epochs must be at least 1");
    }
    if args.epochs.is_some() && !model.uses_epochs() {
        bail!("`{model}` is not trained in epochs; drop --epochs");
    }
    if args.from_finetuned.is_some() && !matches!(model, ModelKey::Features(..)) {
        bail!("--from-finetuned applies to `<variant>-features-*` models only");
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let d = &cfg.downstream;
    let settings = |epochs| TrainSettings { epochs, learning_rate: d.learning_rate, batch_size: d.batch_size, seed };
    let (hyper, epochs) = match model {
        ModelKey::MostCommon => (Hyper::MostCommon, None),
        ModelKey::NaiveBayes => (Hyper::NaiveBayes { alpha: cfg.baselines.nb_alpha, ngram_range: DEFAULT_NGRAM_RANGE }, None),
        ModelKey::Crf => {
            let b = &cfg.baselines;
            let epochs = args.epochs.unwrap_or(b.crf_epochs);
            (Hyper::Crf(CrfConfig { l2: b.crf_l2, epochs, learning_rate: b.crf_learning_rate, seed }), Some(epochs))
        }
        ModelKey::Finetune(_) => {
            let f = &cfg.finetune;
            let epochs = args.epochs.unwrap_or(f.epochs);
            let ft = FinetuneConfig {
                max_seq_len: f.max_seq_len,
                batch_size: f.batch_size,
                learning_rate: f.learning_rate,
                epochs,
                seed,
                task_head: TaskHead::for_task(task),
            };
            ft.validate()?;
            (Hyper::Finetune(ft), Some(epochs))
        }
        ModelKey::Features(_, Downstream::Lr) => {
            let epochs = args.epochs.unwrap_or(d.lr_epochs);
            let lr = LrConfig { l2: d.lr_l2, learning_rate: d.lr_learning_rate, epochs, batch_size: d.batch_size, seed };
            (Hyper::FeaturesLr(lr), Some(epochs))
        }
        ModelKey::Features(_, Downstream::Cnn) => {
            let epochs = args.epochs.unwrap_or(d.epochs);
            let c = CnnClassifierConfig {
                filter_widths: d.cnn_filter_widths.clone(),
                filters_per_width: d.cnn_filters_per_width,
                dropout: d.cnn_dropout,
                train: settings(epochs),
            };
            (Hyper::FeaturesCnn(c), Some(epochs))
        }
        ModelKey::Features(_, Downstream::Lstm) => {
            let epochs = args.epochs.unwrap_or(d.epochs);
            let c = LstmClassifierConfig { hidden_dim: d.lstm_hidden_dim, train: settings(epochs) };
            (Hyper::FeaturesLstm(c), Some(epochs))
        }
    };
    Ok(TrainRequest {
        task,
        model,
        trainset: args.trainset,
        epochs,
        seed,
        from_finetuned: args.from_finetuned.clone(),
        hyper,
    })
}

pub fn train(cfg: &ToolkitConfig, args: &TrainArgs) -> Result<RunRecord> {
    let request = build_request(cfg, args)?;
    execute(cfg, &request, args.force)
}

/// Re-runs a recorded request and returns the fresh record without
/// persisting it.
pub fn replay(cfg: &ToolkitConfig, run: &str) -> Result<RunRecord> {
    let rec = load_record(&cfg.run_dir, run)?;
    let prepared = Prepared::load(cfg, &rec.request)?;
    let scratch = Staging::scratch(&cfg.run_dir, &rec.run_id)?;
    prepared.run(cfg, &scratch.dir)
}

pub fn execute(cfg: &ToolkitConfig, request: &TrainRequest, force: bool) -> Result<RunRecord> {
    let prepared = Prepared::load(cfg, request)?;
    let staging = Staging::begin(&cfg.run_dir, &prepared.run_id, force)?;
    let record = prepared.run(cfg, &staging.dir)?;
    staging.finish(&record)?;
    Ok(record)
}

/// A request with its inputs loaded and digested.
struct Prepared {
    request: TrainRequest,
    train: SplitData,
    dev: SplitData,
    test: SplitData,
    features: Option<(ExtractedFeatures, ExtractedFeatures)>,
    inputs: BTreeMap<String, String>,
    run_id: String,
}

impl Prepared {
    fn load(cfg: &ToolkitConfig, request: &TrainRequest) -> Result<Self> {
        let task = request.task;
        let train = load_split(&cfg.run_dir, task, &train_split(request.trainset))?;
        let dev = load_split(&cfg.run_dir, task, "dev")?;
        let test = load_split(&cfg.run_dir, task, "test")?;
        let mut inputs = BTreeMap::new();
        inputs.insert("bundle.train".to_string(), train.digest.clone());
        inputs.insert("bundle.dev".to_string(), dev.digest.clone());
        inputs.insert("bundle.test".to_string(), test.digest.clone());
        let mut features = None;
        match request.model {
            ModelKey::Finetune(key) => {
                let path = cfg.registry.as_ref().context("fine-tuning needs `registry` in the config")?;
                let registry = registry_load(path)?;
                let v = registry.get(key);
                inputs.insert("checkpoint".to_string(), sha256_hex(serde_json::to_string(v)?.as_bytes()));
            }
            ModelKey::Features(key, _) => {
                let dir = features_dir(&cfg.run_dir, task, key, request.from_finetuned.as_deref());
                let (tr, tr_digest) = load_split_features(&dir, &train)?;
                let (te, te_digest) = load_split_features(&dir, &test)?;
                inputs.insert("features.train".to_string(), tr_digest);
                inputs.insert("features.test".to_string(), te_digest);
                features = Some((tr, te));
            }
            _ => {}
        }
        let run_id = run_id(request, &inputs)?;
        Ok(Self { request: request.clone(), train, dev, test, features, inputs, run_id })
    }

    fn run(self, cfg: &ToolkitConfig, dir: &Path) -> Result<RunRecord> {
        let task = self.request.task;
        let fitted = fit(cfg, &self, dir)?;
        write_jsonl(&dir.join(PREDICTIONS_FILE), &fitted.predictions)?;
        let mut artifacts = fitted.artifacts;
        artifacts.insert("predictions".into(), PREDICTIONS_FILE.into());
        let mut test = score(task, &fitted.predictions)?;
        if let Some(loss) = fitted.mean_loss {
            test = test.with_loss(loss);
        }
        Ok(RunRecord {
            format_version: FORMAT_VERSION,
            run_id: self.run_id,
            task,
            model: self.request.model,
            trainset: self.request.trainset,
            epochs: self.request.epochs,
            seed: self.request.seed,
            request: self.request,
            inputs: self.inputs,
            epoch_metrics: fitted.epoch_metrics,
            train_loss_history: fitted.train_loss_history,
            test,
            artifacts,
        })
    }
}

/// Test metrics from stored predictions; tagging is scored per word.
pub fn score(task: Task, predictions: &[Prediction]) -> Result<EvalReport> {
    let labels: Vec<String> = label_names(task).into_iter().map(String::from).collect();
    let golds: Vec<String> = predictions.iter().flat_map(|p| p.gold.iter().cloned()).collect();
    let preds: Vec<String> = predictions.iter().flat_map(|p| p.pred.iter().cloned()).collect();
    if golds.is_empty() {
        bail!("the test split is empty");
    }
    let cm = confusion(&golds, &preds, &labels)?;
    Ok(metrics(&cm, positive_label(task))?)
}

#[derive(Default)]
struct Fitted {
    predictions: Vec<Prediction>,
    mean_loss: Option<f64>,
    epoch_metrics: Vec<EpochMetrics>,
    train_loss_history: Vec<f64>,
    artifacts: BTreeMap<String, String>,
}

fn class_name(task: Task, c: usize) -> String {
    label_names(task)[c].to_string()
}

fn class_predictions(task: Task, test: &SplitData, preds: &[usize]) -> Vec<Prediction> {
    test.items
        .iter()
        .zip(preds)
        .map(|(it, &p)| Prediction {
            id: it.id.clone(),
            words: None,
            gold: vec![class_name(task, it.class().expect("class target"))],
            pred: vec![class_name(task, p)],
        })
        .collect()
}

fn tag_predictions(test: &SplitData, preds: &[Vec<BioTag>]) -> Vec<Prediction> {
    test.items
        .iter()
        .zip(preds)
        .map(|(it, p)| Prediction {
            id: it.id.clone(),
            words: Some(it.example.words.clone()),
            gold: it.tags().expect("tag target").iter().map(|t| t.name().to_string()).collect(),
            pred: p.iter().map(|t| t.name().to_string()).collect(),
        })
        .collect()
}

fn mean_ce(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = probs.iter().zip(labels).map(|(p, &y)| -p[y].max(1e-30).ln()).sum();
    total / labels.len().max(1) as f64
}

fn save_json_artifact(dir: &Path, fitted: &mut Fitted, json: String) -> Result<()> {
    write_atomic(&dir.join("model.json"), json.as_bytes())?;
    fitted.artifacts.insert("model".into(), "model.json".into());
    Ok(())
}

fn modal_class<L: Label>(labels: impl Iterator<Item = usize>) -> Result<usize> {
    let ls: Vec<L> = labels.map(|i| L::from_index(i).expect("label index in range")).collect();
    Ok(MostCommonClass::fit(&ls)?.predict().index())
}

fn fit(cfg: &ToolkitConfig, p: &Prepared, dir: &Path) -> Result<Fitted> {
    let task = p.request.task;
    let (train, dev, test) = (&p.train, &p.dev, &p.test);
    let mut out = Fitted::default();
    match (&p.request.hyper, p.request.model) {
        (Hyper::MostCommon, _) => {
            if task == Task::Ner {
                let tags = train.items.iter().flat_map(|i| i.tags().expect("tags").iter().map(|t| t.index()));
                let modal = BioTag::from_index(modal_class::<BioTag>(tags)?).expect("in range");
                let preds: Vec<Vec<BioTag>> = test.items.iter().map(|i| vec![modal; i.example.words.len()]).collect();
                out.predictions = tag_predictions(test, &preds);
                save_json_artifact(dir, &mut out, serde_json::to_string(&MostCommonClass { label: modal })?)?;
            } else {
                let classes = train.classes().into_iter();
                let c = match task {
                    Task::Sentiment => modal_class::<SentimentLabel>(classes)?,
                    _ => modal_class::<PresenceLabel>(classes)?,
                };
                out.predictions = class_predictions(task, test, &vec![c; test.items.len()]);
                let label = class_name(task, c);
                save_json_artifact(dir, &mut out, serde_json::to_string(&serde_json::json!({ "label": label }))?)?;
            }
        }
        (Hyper::NaiveBayes { alpha, ngram_range }, _) => {
            let featurize = |words: &[String]| {
                let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
                ngram_featurize(&lower, *ngram_range)
            };
            let examples = train
                .items
                .iter()
                .map(|i| Ok((featurize(&i.example.words)?, i.class().expect("class"))))
                .collect::<Result<Vec<_>>>()?;
            let model = nb_train(&examples, &label_names(task), *alpha)?;
            let mut preds = Vec::new();
            let mut probs = Vec::new();
            for it in &test.items {
                let r = nb_predict(&model, &featurize(&it.example.words)?);
                preds.push(r.class);
                probs.push(r.log_posterior.iter().map(|l| l.exp()).collect::<Vec<_>>());
            }
            out.mean_loss = Some(mean_ce(&probs, &test.classes()));
            out.predictions = class_predictions(task, test, &preds);
            save_json_artifact(dir, &mut out, serde_json::to_string(&model)?)?;
        }
        (Hyper::Crf(c), _) => {
            let corpus: Vec<(Vec<String>, Vec<BioTag>)> =
                train.items.iter().map(|i| (i.example.words.clone(), i.tags().expect("tags").to_vec())).collect();
            let trained = crf_train(&corpus, c)?;
            let preds: Vec<Vec<BioTag>> = test.items.iter().map(|i| crf_decode(&trained.model, &i.example.words)).collect();
            out.train_loss_history = trained.epoch_mean_log_likelihood.iter().map(|ll| -ll).collect();
            out.predictions = tag_predictions(test, &preds);
            save_json_artifact(dir, &mut out, serde_json::to_string(&trained.model)?)?;
        }
        (Hyper::Finetune(ft), ModelKey::Finetune(key)) => {
            let path = cfg.registry.as_ref().context("fine-tuning needs `registry` in the config")?;
            let ckpt = registry_load(path)?.load(key)?;
            let model = fine_tune(&ckpt, &train.examples(), &dev.examples(), ft)?;
            let words = test.words();
            out.predictions = if task == Task::Ner {
                tag_predictions(test, &predict_tags_words(&model, &words)?)
            } else {
                class_predictions(task, test, &predict_classify_words(&model, &words)?.labels)
            };
            let (loss, _) = model.evaluate(&model.prepare_all(&test.examples())?)?;
            out.mean_loss = Some(loss);
            out.epoch_metrics = model.epoch_metrics.clone();
            model.save(&dir.join(FINETUNED_MODEL_DIR))?;
            out.artifacts.insert("model".into(), FINETUNED_MODEL_DIR.into());
        }
        (hyper, ModelKey::Features(..)) => {
            let (tr, te) = p.features.as_ref().expect("features loaded for feature models");
            let classes = label_names(task).len();
            let ys = train.classes();
            let test_ys = test.classes();
            let (preds, probs, history, json) = match hyper {
                Hyper::FeaturesLr(c) => {
                    let to64 = |f: &ExtractedFeatures| -> Vec<Vec<f64>> {
                        f.cls_vectors.iter().map(|v| v.iter().map(|&x| f64::from(x)).collect()).collect()
                    };
                    let trained = lr_train(&to64(tr), &ys, classes, c)?;
                    let xs = to64(te);
                    let probs: Vec<Vec<f64>> = xs.iter().map(|x| trained.model.predict_proba(x)).collect();
                    let preds = xs.iter().map(|x| trained.model.predict(x)).collect();
                    (preds, probs, trained.loss_history, serde_json::to_string(&trained.model)?)
                }
                Hyper::FeaturesCnn(c) => {
                    let t = train_cnn(&tr.token_matrices, &ys, classes, c)?;
                    let probs =
                        te.token_matrices.iter().map(|x| t.model.predict_proba(x)).collect::<pharmvig_neural::Result<Vec<_>>>()?;
                    (t.model.predict_many(&te.token_matrices)?, probs, t.loss_history, t.model.to_json()?)
                }
                Hyper::FeaturesLstm(c) => {
                    let t = train_lstm(&tr.token_matrices, &ys, classes, c)?;
                    let probs =
                        te.token_matrices.iter().map(|x| t.model.predict_proba(x)).collect::<pharmvig_neural::Result<Vec<_>>>()?;
                    (t.model.predict_many(&te.token_matrices)?, probs, t.loss_history, t.model.to_json()?)
                }
                other => bail!("hyperparameters {other:?} do not match a feature model"),
            };
            out.mean_loss = Some(mean_ce(&probs, &test_ys));
            out.train_loss_history = history;
            out.predictions = class_predictions(task, test, &preds);
            save_json_artifact(dir, &mut out, json)?;
        }
        (hyper, model) => bail!("hyperparameters {hyper:?} do not match model `{model}`"),
    }
    Ok(out)
}
