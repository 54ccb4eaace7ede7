//! Acceptance gate. Every criterion prints one PASS, FAIL or SKIP line; the
//! test fails if any criterion fails.
//!
//! Run with `cargo test -p pharmvig-cli --test acceptance -- --nocapture`.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use common::Workspace;
use pharmvig_cli::bundles::load_split;
use pharmvig_cli::record::{run_path, RECORD_FILE};
use pharmvig_cli::{extract, prepare, train, ModelKey, TrainArgs, ToolkitConfig};
use pharmvig_core::baselines::{
    crf_log_likelihood_and_gradient, lr_train, nb_predict, nb_train, viterbi, CrfModel, LrConfig,
};
use pharmvig_core::corpus::{rebalance_by, NerRecord, RebalanceSpec, Task, TweetRecord};
use pharmvig_core::eval::{
    all_modal_closed_form, confusion, metrics, sentiment_error_breakdown, token_confusion_report, ConfusionMatrix,
};
use pharmvig_core::rng::seeded;
use pharmvig_core::textprep::{front_pad, ngram_featurize, NgramVector};
use pharmvig_core::{BioTag, Label, SentimentLabel};
use pharmvig_neural::downstream::{train_cnn, train_lstm, CnnClassifierConfig, LstmClassifierConfig, SequenceClassifier, TrainSettings};
use pharmvig_neural::{
    extract_embeddings_words, fine_tune, fixtures, predict_classify_words, predict_tags_words, FinetuneConfig, Target,
    TaskHead, VariantKey,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, format!("{name} = {got:.6}, want {want} ± {tol}"))
}

fn run(name: &str, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => Outcome::Fail(e),
        Err(p) => Outcome::Fail(
            p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default(),
        ),
    };
    let (tag, detail, ok) = match outcome {
        Outcome::Pass(d) => ("PASS", d, true),
        Outcome::Skip(d) => ("SKIP", d, true),
        Outcome::Fail(d) => ("FAIL", d, false),
    };
    println!("{tag}  {name}: {detail}");
    ok
}

fn pass(f: impl FnOnce() -> Check) -> impl FnOnce() -> Result<Outcome, String> {
    move || f().map(Outcome::Pass)
}

fn err(e: impl std::fmt::Display) -> String {
    format!("{e:#}")
}

fn scratch_config(dir: &Path) -> ToolkitConfig {
    let mut cfg = ToolkitConfig::defaults_in(dir);
    cfg.run_dir = dir.join("work");
    cfg
}

fn write_split<T: serde::Serialize>(cfg: &ToolkitConfig, task: Task, split: &str, items: &[T]) {
    let dir = cfg.run_dir.join("bundles").join(task.name());
    fs::create_dir_all(&dir).unwrap();
    let mut out = String::new();
    for it in items {
        writeln!(out, "{}", serde_json::to_string(it).unwrap()).unwrap();
    }
    fs::write(dir.join(format!("{split}.jsonl")), out).unwrap();
}

// ---- baselines from label distributions ----

const POS_WORDS: &[&str] = &["great", "helped", "relief", "better"];
const NEU_WORDS: &[&str] = &["okay", "mixed", "average", "unsure"];
const NEG_WORDS: &[&str] = &["awful", "worse", "useless", "terrible"];

/// Review file with exactly the given positive/neutral/negative counts, ratings
/// drawn from each class's whole range, rows shuffled.
fn review_file(path: &Path, counts: [usize; 3], first_id: usize, seed: u64) {
    let mut rng = seeded(seed);
    let mut rows: Vec<usize> = (0..3).flat_map(|c| std::iter::repeat_n(c, counts[c])).collect();
    rows.shuffle(&mut rng);
    let mut out = common::REVIEW_HEADER.to_string();
    for (i, c) in rows.into_iter().enumerate() {
        let (rating, pool) = match c {
            0 => (rng.gen_range(8..=10), POS_WORDS),
            1 => (rng.gen_range(4..=7), NEU_WORDS),
            _ => (rng.gen_range(1..=3), NEG_WORDS),
        };
        let w = pool.choose(&mut rng).unwrap();
        writeln!(out, "{}\tDrugX\tPain\t\"it was {w}\"\t{rating}\tMay 20, 2012\t3", first_id + i).unwrap();
    }
    fs::write(path, out).unwrap();
}

/// Published class counts; train and dev both come from the train file.
const REVIEW_TRAIN_COUNTS: [usize; 3] = [77_907 + 19_503, 23_114 + 5_710, 28_017 + 7_046];
const REVIEW_TEST_COUNTS: [usize; 3] = [32_349, 9_579, 11_838];

fn sentiment_most_common() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    review_file(&root.join("train.tsv"), REVIEW_TRAIN_COUNTS, 0, 1);
    review_file(&root.join("test.tsv"), REVIEW_TEST_COUNTS, 500_000, 2);
    let mut cfg = scratch_config(root);
    cfg.data.reviews_train = Some(root.join("train.tsv"));
    cfg.data.reviews_test = Some(root.join("test.tsv"));
    prepare(&cfg, Task::Sentiment, 13).map_err(err)?;
    let rec = train(&cfg, &TrainArgs::new(Task::Sentiment, ModelKey::MostCommon)).map_err(err)?;
    let oracle = REVIEW_TEST_COUNTS[0] as f64 / REVIEW_TEST_COUNTS.iter().sum::<usize>() as f64;
    within("accuracy", rec.test.accuracy, 0.602, 0.001)?;
    ensure((rec.test.accuracy - oracle).abs() < 1e-12, format!("accuracy {} differs from {oracle}", rec.test.accuracy))?;
    Ok(format!("accuracy {:.4} (target 0.602 ± 0.001)", rec.test.accuracy))
}

fn ner_record(id: String, mention: usize, filler: usize) -> NerRecord {
    let mut words: Vec<String> = (0..filler).map(|i| format!("w{}", i % 7)).collect();
    let mut spans = Vec::new();
    if mention > 0 {
        let at: usize = words.iter().map(|w| w.len() + 1).sum();
        let phrase: Vec<String> = (0..mention).map(|k| if k == 0 { "headache".into() } else { "pain".into() }).collect();
        spans.push((at, at + phrase.join(" ").len()));
        words.extend(phrase);
    }
    NerRecord::new(id, words.join(" "), spans).unwrap()
}

/// B 160, I 117, O 5,081 on the test side.
fn ner_test_records() -> Vec<NerRecord> {
    let mut recs = Vec::new();
    let mut o_left = 5_081usize;
    for i in 0..200 {
        let mention = match i {
            0..=116 => 2,
            117..=159 => 1,
            _ => 0,
        };
        let filler = if i == 199 { o_left } else { 25.min(o_left) };
        o_left -= filler;
        recs.push(ner_record(format!("t{i}"), mention, filler));
    }
    assert_eq!(o_left, 0);
    recs
}

fn ner_all_o() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scratch_config(tmp.path());
    let test = ner_test_records();
    let mut counts = BTreeMap::new();
    for r in &test {
        for t in &r.bio_tags {
            *counts.entry(t.name()).or_insert(0usize) += 1;
        }
    }
    ensure(counts == BTreeMap::from([("B", 160), ("I", 117), ("O", 5081)]), format!("fixture tags {counts:?}"))?;
    let train_set: Vec<NerRecord> = (0..40).map(|i| ner_record(format!("r{i}"), i % 3, 12)).collect();
    write_split(&cfg, Task::Ner, "train_natural", &train_set);
    write_split(&cfg, Task::Ner, "dev", &train_set[..5]);
    write_split(&cfg, Task::Ner, "test", &test);
    let rec = train(&cfg, &TrainArgs::new(Task::Ner, ModelKey::MostCommon)).map_err(err)?;
    let a = 5081.0 / 5358.0;
    let (acc_cf, f_cf) = all_modal_closed_form(a, 3);
    let f_oracle = (2.0 * a / (1.0 + a)) / 3.0;
    within("accuracy", rec.test.accuracy, 0.948, 0.001)?;
    within("macro F", rec.test.macro_f, 0.324, 0.001)?;
    ensure((rec.test.accuracy - acc_cf).abs() < 1e-12, "accuracy differs from the closed form")?;
    ensure((rec.test.macro_f - f_oracle).abs() < 1e-12 && (f_cf - f_oracle).abs() < 1e-15, "macro F differs from (2a/(1+a))/3")?;
    Ok(format!("accuracy {:.4}, macro F {:.4} = (2a/(1+a))/3", rec.test.accuracy, rec.test.macro_f))
}

fn tweet(i: usize, adr: bool) -> TweetRecord {
    let text = if adr { format!("felt dizzy after dose {i}") } else { format!("picked up refill {i}") };
    TweetRecord { tweet_id: format!("t{i}"), text: Some(text), has_adr: adr }
}

fn presence_all_negative() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scratch_config(tmp.path());
    let test: Vec<TweetRecord> = (0..834).map(|i| tweet(i, i % 9 == 0 && i < 92 * 9)).collect();
    let positives = test.iter().filter(|t| t.has_adr).count();
    ensure(positives == 92, format!("fixture has {positives} positives"))?;
    let train_set: Vec<TweetRecord> = (0..100).map(|i| tweet(10_000 + i, i % 9 == 0)).collect();
    write_split(&cfg, Task::Presence, "train_natural", &train_set);
    write_split(&cfg, Task::Presence, "dev", &train_set[..20]);
    write_split(&cfg, Task::Presence, "test", &test);
    let rec = train(&cfg, &TrainArgs::new(Task::Presence, ModelKey::MostCommon)).map_err(err)?;
    let f = rec.test.positive_f.ok_or("no positive-class F")?;
    within("accuracy", rec.test.accuracy, 0.890, 0.001)?;
    ensure(f == 0.0, format!("positive F {f}, want exactly 0"))?;
    Ok(format!("positive F {f}, accuracy {:.4} on 92/834 positive", rec.test.accuracy))
}

// ---- data construction ----

fn label_percent(cfg: &ToolkitConfig, split: &str) -> Result<[f64; 3], String> {
    let data = load_split(&cfg.run_dir, Task::Sentiment, split).map_err(err)?;
    let mut n = [0usize; 3];
    for c in data.classes() {
        n[c] += 1;
    }
    let total = data.items.len() as f64;
    Ok(n.map(|k| 100.0 * k as f64 / total))
}

const REVIEW_CLASS_PERCENT: [(&str, [f64; 3]); 3] =
    [("train_natural", [60.4, 17.9, 21.7]), ("dev", [60.5, 17.7, 21.8]), ("test", [60.2, 17.8, 22.0])];

fn class_percentages(cfg: &ToolkitConfig) -> Check {
    prepare(cfg, Task::Sentiment, cfg.seed).map_err(err)?;
    let mut detail = Vec::new();
    for (split, want) in REVIEW_CLASS_PERCENT {
        let got = label_percent(cfg, split)?;
        for (l, (g, w)) in SentimentLabel::ALL.iter().zip(got.iter().zip(want)) {
            within(&format!("{split} {l} %"), *g, w, 0.5)?;
        }
        detail.push(format!("{split} {:.1}/{:.1}/{:.1}", got[0], got[1], got[2]));
    }
    Ok(detail.join(", "))
}

fn class_percentages_public() -> Result<Outcome, String> {
    let Some(dir) = std::env::var_os("PHARMVIG_DRUGS_DIR").map(PathBuf::from) else {
        return Ok(Outcome::Skip("set PHARMVIG_DRUGS_DIR to the folder holding drugsComTrain_raw.tsv and drugsComTest_raw.tsv".into()));
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = scratch_config(tmp.path());
    cfg.data.reviews_train = Some(dir.join("drugsComTrain_raw.tsv"));
    cfg.data.reviews_test = Some(dir.join("drugsComTest_raw.tsv"));
    class_percentages(&cfg).map(Outcome::Pass)
}

fn class_percentages_synthetic() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    review_file(&root.join("train.tsv"), REVIEW_TRAIN_COUNTS, 0, 3);
    review_file(&root.join("test.tsv"), REVIEW_TEST_COUNTS, 500_000, 4);
    let mut cfg = scratch_config(root);
    cfg.data.reviews_train = Some(root.join("train.tsv"));
    cfg.data.reviews_test = Some(root.join("test.tsv"));
    class_percentages(&cfg)
}

fn rebalancer() -> Check {
    let train_set: Vec<bool> = (0..2501).map(|i| i % 9 == 4 && i < 275 * 9).collect();
    let pos = train_set.iter().filter(|&&p| p).count();
    ensure(pos == 275, format!("fixture has {pos} positives"))?;
    let mut detail = Vec::new();
    for seed in [1, 2, 3] {
        let over = rebalance_by(&train_set, |p| *p, &RebalanceSpec::oversample(seed)).map_err(err)?;
        let op = over.iter().filter(|&&p| p).count() as i64;
        let on = over.len() as i64 - op;
        ensure((op - on).abs() <= 1, format!("oversampled {op} positive vs {on} negative"))?;
        let under = rebalance_by(&train_set, |p| *p, &RebalanceSpec::undersample(seed)).map_err(err)?;
        let up = under.iter().filter(|&&p| p).count();
        ensure(up == 275, format!("undersampling dropped positives: {up}"))?;
        let third = under.len() as f64 / 3.0;
        ensure((up as f64 - third).abs() <= 1.0, format!("undersampled {up} positive of {}", under.len()))?;
        if seed == 1 {
            detail.push(format!("oversampled {} ({op} positive)", over.len()));
            detail.push(format!("undersampled {} ({up} positive)", under.len()));
        }
    }
    Ok(detail.join(", "))
}

// ---- CRF ----

const WORDS: &[&str] = &["i", "got", "a", "bad", "Headache", "from", "it", "and", "rash", "2", "NOW", "sleepy"];

fn random_words(rng: &mut impl Rng, len: usize) -> Vec<String> {
    (0..len).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

fn random_crf(rng: &mut impl Rng, l2: f64) -> CrfModel {
    let sentences: Vec<Vec<&str>> = vec![WORDS.to_vec()];
    let refs: Vec<&[&str]> = sentences.iter().map(|s| s.as_slice()).collect();
    let mut m = CrfModel::for_corpus(&refs, l2);
    for w in m.emission.iter_mut().flatten() {
        *w = rng.gen_range(-1.0..1.0);
    }
    for w in m.transitions.iter_mut().flatten() {
        *w = rng.gen_range(-1.0..1.0);
    }
    m
}

fn all_paths(n: usize) -> Vec<Vec<BioTag>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<BioTag>| {
                BioTag::ALL.iter().map(move |t| {
                    let mut q = p.clone();
                    q.push(*t);
                    q
                })
            })
            .collect();
    }
    out
}

/// Brute-force path score from the raw weights, independent of the model's
/// own scorer.
fn brute_score(m: &CrfModel, words: &[String], tags: &[BioTag]) -> f64 {
    let seq = m.encode(words);
    let mut s = 0.0;
    for (t, fs) in seq.features.iter().enumerate() {
        for &f in fs {
            s += m.emission[f][tags[t].index()];
        }
        if t > 0 {
            s += m.transitions[tags[t - 1].index()][tags[t].index()];
        }
    }
    s
}

fn crf_partition() -> Check {
    let mut rng = seeded(21);
    let m = random_crf(&mut rng, 0.0);
    let mut worst = 0.0f64;
    for len in 1..=8 {
        for _ in 0..3 {
            let words = random_words(&mut rng, len);
            let scores: Vec<f64> = all_paths(len).iter().map(|p| brute_score(&m, &words, p)).collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            let lattice = m.lattice(&m.encode(&words));
            for log_z in [lattice.log_partition_forward(), lattice.log_partition_backward()] {
                let rel = (log_z.exp() - z).abs() / z;
                worst = worst.max(rel);
                ensure(rel <= 1e-8, format!("length {len}: Z {} vs enumerated {z} (rel {rel:e})", log_z.exp()))?;
            }
        }
    }
    Ok(format!("forward and backward Z match enumeration for lengths 1-8, worst rel {worst:.1e}"))
}

fn crf_gradient() -> Check {
    let mut rng = seeded(22);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for n in 0..20 {
        let mut m = random_crf(&mut rng, 0.1);
        let len = rng.gen_range(1..=7);
        let words = random_words(&mut rng, len);
        let mut gold = Vec::with_capacity(len);
        for t in 0..len {
            let tag = match rng.gen_range(0..3) {
                0 => BioTag::B,
                1 if t > 0 && gold[t - 1] != BioTag::O => BioTag::I,
                _ => BioTag::O,
            };
            gold.push(tag);
        }
        let (_, grad) = crf_log_likelihood_and_gradient(&m, &words, &gold).map_err(err)?;
        let objective = |m: &CrfModel| crf_log_likelihood_and_gradient(m, &words, &gold).unwrap().0;
        let features: Vec<usize> = {
            let mut f: Vec<usize> = m.encode(&words).features.concat();
            f.sort_unstable();
            f.dedup();
            f
        };
        let mut coords: Vec<(Option<usize>, usize, usize)> = Vec::new();
        for &f in &features {
            coords.extend((0..3).map(|y| (Some(f), y, 0)));
        }
        for p in 0..3 {
            coords.extend((0..3).map(|q| (None, p, q)));
        }
        for (f, a, b) in coords {
            let analytic = match f {
                Some(f) => grad.emission[f][a],
                None => grad.transitions[a][b],
            };
            let bump = |d: f64, m: &mut CrfModel| match f {
                Some(f) => m.emission[f][a] += d,
                None => m.transitions[a][b] += d,
            };
            bump(h, &mut m);
            let up = objective(&m);
            bump(-2.0 * h, &mut m);
            let down = objective(&m);
            bump(h, &mut m);
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
            checked += 1;
            ensure(rel <= 1e-4, format!("sequence {n}: analytic {analytic} vs numeric {numeric}"))?;
        }
    }
    Ok(format!("{checked} coordinates over 20 sequences, worst rel {worst:.1e}"))
}

fn crf_viterbi() -> Check {
    let mut rng = seeded(23);
    let m = random_crf(&mut rng, 0.0);
    for len in 1..=8 {
        for _ in 0..3 {
            let words = random_words(&mut rng, len);
            let best = all_paths(len).iter().map(|p| brute_score(&m, &words, p)).fold(f64::NEG_INFINITY, f64::max);
            let (path, score) = viterbi(&m, &m.encode(&words));
            ensure((score - best).abs() <= 1e-9 * best.abs().max(1.0), format!("length {len}: viterbi {score} vs max {best}"))?;
            let own = brute_score(&m, &words, &path);
            ensure((own - score).abs() <= 1e-9 * own.abs().max(1.0), "viterbi path does not score its reported value")?;
        }
    }
    Ok("viterbi score equals the enumerated max for lengths 1-8".into())
}

// ---- classical oracles ----

fn nb_oracle() -> Check {
    let vocab = ["pain", "good", "bad", "sleep", "rash", "ok"];
    let classes = ["positive", "neutral", "negative"];
    let mut agreed = 0;
    for corpus in 0..10u64 {
        let mut rng = seeded(100 + corpus);
        let alpha = rng.gen_range(0.1..2.0);
        let docs: Vec<(NgramVector, usize)> = (0..20)
            .map(|i| {
                let len = rng.gen_range(1..6);
                let words: Vec<&str> = (0..len).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
                (ngram_featurize(&words, (1, 2)).unwrap(), if i < 3 { i } else { rng.gen_range(0..3) })
            })
            .collect();
        let model = nb_train(&docs, &classes, alpha).map_err(err)?;
        // Brute force: raw counts, products of probabilities, explicit normalization.
        let mut seen = std::collections::BTreeSet::new();
        for (d, _) in &docs {
            seen.extend(d.counts.keys().cloned());
        }
        let v = seen.len() as f64;
        for _ in 0..10 {
            let len = rng.gen_range(1..6);
            let mut words: Vec<&str> = (0..len).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
            if rng.gen_bool(0.3) {
                words.push("unseen");
            }
            let x = ngram_featurize(&words, (1, 2)).unwrap();
            let mut joint = [0.0f64; 3];
            for (c, j) in joint.iter_mut().enumerate() {
                let in_class: Vec<&NgramVector> = docs.iter().filter(|(_, y)| *y == c).map(|(d, _)| d).collect();
                let total: f64 = in_class.iter().map(|d| d.total() as f64).sum();
                let mut p = in_class.len() as f64 / docs.len() as f64;
                for (g, &n) in &x.counts {
                    let count: f64 = in_class.iter().map(|d| *d.counts.get(g).unwrap_or(&0) as f64).sum();
                    p *= ((count + alpha) / (total + alpha * v)).powi(n as i32);
                }
                *j = p;
            }
            let z: f64 = joint.iter().sum();
            let want = (0..3).fold(0, |b, c| if joint[c] > joint[b] { c } else { b });
            let pred = nb_predict(&model, &x);
            ensure(pred.class == want, format!("corpus {corpus}: predicted {} vs brute force {want}", pred.class))?;
            for c in 0..3 {
                let p = pred.log_posterior[c].exp();
                ensure((p - joint[c] / z).abs() <= 1e-9, format!("posterior {p} vs {}", joint[c] / z))?;
            }
            agreed += 1;
        }
    }
    Ok(format!("{agreed} predictions over 10 corpora of 20 documents match"))
}

fn metrics_oracle() -> Check {
    let mut rng = seeded(31);
    for trial in 0..200 {
        let k = rng.gen_range(2..=4);
        let labels: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let mut golds = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..rng.gen_range(1..60) {
            golds.push(labels[rng.gen_range(0..k)].clone());
            preds.push(labels[rng.gen_range(0..k)].clone());
        }
        let cm: ConfusionMatrix = confusion(&golds, &preds, &labels).map_err(err)?;
        let positive = labels[rng.gen_range(0..k)].clone();
        let r = metrics(&cm, Some(&positive)).map_err(err)?;
        let pairs: Vec<(&String, &String)> = golds.iter().zip(&preds).collect();
        let acc = pairs.iter().filter(|(g, p)| g == p).count() as f64 / pairs.len() as f64;
        ensure((r.accuracy - acc).abs() < 1e-12, format!("trial {trial}: accuracy"))?;
        let mut fs = Vec::new();
        for l in &labels {
            let tp = pairs.iter().filter(|(g, p)| *g == l && *p == l).count() as f64;
            let fp = pairs.iter().filter(|(g, p)| *g != l && *p == l).count() as f64;
            let fneg = pairs.iter().filter(|(g, p)| *g == l && *p != l).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            let f = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            let got = r.class(l).ok_or("missing class")?;
            ensure(
                (got.precision - prec).abs() < 1e-12 && (got.recall - rec).abs() < 1e-12 && (got.f1 - f).abs() < 1e-12,
                format!("trial {trial}: class {l}"),
            )?;
            fs.push(f);
            if *l == positive {
                ensure((r.positive_f.unwrap() - f).abs() < 1e-12, format!("trial {trial}: positive F"))?;
            }
        }
        let macro_f = fs.iter().sum::<f64>() / k as f64;
        ensure((r.macro_f - macro_f).abs() < 1e-12, format!("trial {trial}: macro F"))?;
    }
    Ok("200 random confusion matrices".into())
}

fn lr_separable() -> Check {
    let mut rng = seeded(41);
    let centers = [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..90 {
        let c = i % 3;
        xs.push(centers[c].iter().map(|v| v + rng.gen_range(-0.8..0.8)).collect::<Vec<f64>>());
        ys.push(c);
    }
    let t = lr_train(&xs, &ys, 3, &LrConfig::default()).map_err(err)?;
    let right = xs.iter().zip(&ys).filter(|(x, y)| t.model.predict(x) == **y).count();
    ensure(right == xs.len(), format!("{right}/{} correct", xs.len()))?;
    Ok(format!("{right}/{} correct on a separable 3-class fixture", xs.len()))
}

// ---- desk-scale neural harness ----

fn desk_config(head: TaskHead) -> FinetuneConfig {
    let mut cfg = FinetuneConfig::new(head, 30, 7);
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 8;
    cfg.max_seq_len = 64;
    cfg
}

fn finetune_overfit() -> Check {
    let ckpt = fixtures::mini_checkpoint(VariantKey::BertCased, 3).map_err(err)?;
    let mut detail = Vec::new();
    for (head, data) in [
        (TaskHead::Classify3, fixtures::classification(TaskHead::Classify3, 32, 1)),
        (TaskHead::Classify2, fixtures::classification(TaskHead::Classify2, 32, 2)),
        (TaskHead::TagBio, fixtures::tagging(32, 3)),
    ] {
        let model = fine_tune(&ckpt, &data, &[], &desk_config(head)).map_err(err)?;
        let words: Vec<Vec<String>> = data.iter().map(|d| d.words.clone()).collect();
        let right = if head == TaskHead::TagBio {
            let tags = predict_tags_words(&model, &words).map_err(err)?;
            data.iter().zip(tags).filter(|(d, t)| d.target == Target::Tags(t.clone())).count()
        } else {
            let p = predict_classify_words(&model, &words).map_err(err)?;
            data.iter().zip(&p.labels).filter(|(d, l)| d.target == Target::Class(**l)).count()
        };
        ensure(right == data.len(), format!("{head:?}: {right}/{} after 30 epochs", data.len()))?;
        detail.push(format!("{head:?} {right}/{}", data.len()));
    }
    Ok(format!("{} after 30 epochs", detail.join(", ")))
}

fn extract_then_downstream() -> Check {
    let ckpt = fixtures::mini_checkpoint(VariantKey::BertCased, 5).map_err(err)?;
    let data = fixtures::classification(TaskHead::Classify2, 16, 6);
    let words: Vec<Vec<String>> = data.iter().map(|d| d.words.clone()).collect();
    let ys: Vec<usize> = data
        .iter()
        .map(|d| match d.target {
            Target::Class(c) => c,
            Target::Tags(_) => unreachable!(),
        })
        .collect();
    let f = extract_embeddings_words(&ckpt, &words, 64).map_err(err)?;
    let bare: Vec<_> = f.token_matrices.iter().map(|m| m.unpad()).collect();
    let rows = bare.iter().map(|m| m.rows).max().unwrap_or(0) + 2;
    let xs = bare.iter().map(|m| front_pad(m, rows)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let train = TrainSettings { epochs: 60, learning_rate: 5e-3, batch_size: 4, seed: 11 };
    let cnn = train_cnn(&xs, &ys, 2, &CnnClassifierConfig { filters_per_width: 16, train, ..Default::default() }).map_err(err)?;
    let lstm = train_lstm(&xs, &ys, 2, &LstmClassifierConfig { hidden_dim: 16, train }).map_err(err)?;
    let acc = |p: Vec<usize>| p.iter().zip(&ys).filter(|(a, b)| a == b).count() as f64 / ys.len() as f64;
    let a_cnn = acc(cnn.model.predict_many(&xs).map_err(err)?);
    let a_lstm = acc(lstm.model.predict_many(&xs).map_err(err)?);
    ensure(a_cnn == 1.0 && a_lstm == 1.0, format!("CNN {a_cnn}, LSTM {a_lstm}"))?;
    Ok(format!("CNN {a_cnn:.1}, LSTM {a_lstm:.1} on 16 front-padded extracted examples"))
}

// ---- error analysis ----

fn error_breakdown() -> Check {
    use SentimentLabel::*;
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    let neutral_pairs = [(Positive, Neutral), (Neutral, Positive), (Negative, Neutral), (Neutral, Negative)];
    for i in 0..5252 {
        let (g, p) = neutral_pairs[i % 4];
        golds.push(g);
        preds.push(p);
    }
    golds.extend(std::iter::repeat_n(Negative, 390));
    preds.extend(std::iter::repeat_n(Positive, 390));
    golds.extend(std::iter::repeat_n(Positive, 337));
    preds.extend(std::iter::repeat_n(Negative, 337));
    let correct = 53_766 - golds.len();
    for i in 0..correct {
        let l = SentimentLabel::ALL[i % 3];
        golds.push(l);
        preds.push(l);
    }
    let mut order: Vec<usize> = (0..golds.len()).collect();
    order.shuffle(&mut seeded(51));
    let golds: Vec<_> = order.iter().map(|&i| golds[i]).collect();
    let preds: Vec<_> = order.iter().map(|&i| preds[i]).collect();
    let ids: Vec<String> = (0..golds.len()).map(|i| format!("r{i}")).collect();
    let b = sentiment_error_breakdown(&golds, &preds, &ids, 50, 13).map_err(err)?;
    ensure(b.total_misclassified == 5979, format!("total {}", b.total_misclassified))?;
    ensure((b.neutral_involved, b.false_positive, b.false_negative) == (5252, 390, 337), "partition counts")?;
    within("neutral share %", 100.0 * b.neutral_share(), 87.8, 0.05)?;
    within("error rate %", 100.0 * b.error_rate(), 11.1, 0.05)?;
    ensure(b.sampled_fp.len() == 50 && b.sampled_fn.len() == 50, "samples of 50")?;
    Ok(format!(
        "misclassified {} ({:.1}%), neutral {:.2}%, false positive {:.1}%, false negative {:.1}%",
        b.total_misclassified,
        100.0 * b.error_rate(),
        100.0 * b.neutral_share(),
        100.0 * b.false_positive_share(),
        100.0 * b.false_negative_share()
    ))
}

fn token_report_oracle() -> Check {
    let mut rng = seeded(61);
    let vocab = ["Rash", "rash", "pain", "itchy", "the", "dizzy", "i"];
    for trial in 0..50 {
        let n = rng.gen_range(1..8);
        let mut golds = Vec::new();
        let mut preds = Vec::new();
        let mut words = Vec::new();
        for _ in 0..n {
            let len = rng.gen_range(1..10);
            golds.push((0..len).map(|_| *BioTag::ALL.choose(&mut rng).unwrap()).collect::<Vec<_>>());
            preds.push((0..len).map(|_| *BioTag::ALL.choose(&mut rng).unwrap()).collect::<Vec<_>>());
            words.push((0..len).map(|_| vocab.choose(&mut rng).unwrap().to_string()).collect::<Vec<_>>());
        }
        let r = token_confusion_report(&golds, &preds, &words).map_err(err)?;
        for (missed, got) in [(true, &r.fn_word_counts), (false, &r.fp_word_counts)] {
            let mut want: Vec<(String, usize)> = Vec::new();
            for w in ["dizzy", "i", "itchy", "pain", "rash", "the"] {
                let mut c = 0;
                for s in 0..n {
                    for t in 0..words[s].len() {
                        let g = golds[s][t] != BioTag::O;
                        let p = preds[s][t] != BioTag::O;
                        if words[s][t].to_lowercase() == w && g == missed && p != missed {
                            c += 1;
                        }
                    }
                }
                if c > 0 {
                    want.push((w.to_string(), c));
                }
            }
            want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ensure(*got == want, format!("trial {trial}: {got:?} vs {want:?}"))?;
        }
    }
    Ok("50 random tag fixtures".into())
}

// ---- determinism ----

fn run_everything(cfg: &ToolkitConfig) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for task in [Task::Sentiment, Task::Presence, Task::Ner] {
        prepare(cfg, task, cfg.seed).map_err(err)?;
    }
    let key = |s: &str| s.parse::<ModelKey>().unwrap();
    let mut jobs: Vec<TrainArgs> = vec![
        TrainArgs::new(Task::Sentiment, key("most-common")),
        TrainArgs::new(Task::Sentiment, key("nb")),
        TrainArgs::new(Task::Ner, key("crf")),
        TrainArgs::new(Task::Ner, key("most-common")),
    ];
    let mut ft = TrainArgs::new(Task::Presence, key("b-c"));
    ft.epochs = Some(1);
    jobs.push(ft);
    let mut records = Vec::new();
    for j in &jobs {
        records.push(train(cfg, j).map_err(err)?.run_id);
    }
    extract(cfg, Task::Presence, VariantKey::BertCased, None).map_err(err)?;
    for m in ["b-c-features-lr", "b-c-features-cnn", "b-c-features-lstm"] {
        records.push(train(cfg, &TrainArgs::new(Task::Presence, key(m))).map_err(err)?.run_id);
    }
    for id in records {
        let bytes = fs::read(run_path(&cfg.run_dir, &id).join(RECORD_FILE)).map_err(err)?;
        out.push((id, bytes));
    }
    for task in ["sentiment", "presence", "ner"] {
        let dir = cfg.run_dir.join("bundles").join(task);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir).map_err(err)?.map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files {
            out.push((f.display().to_string().replace(&cfg.run_dir.display().to_string(), ""), fs::read(&f).map_err(err)?));
        }
    }
    Ok(out)
}

fn determinism() -> Check {
    let ws = Workspace::new();
    let other = tempfile::tempdir().unwrap();
    let a = run_everything(&ws.config()).map_err(|e| format!("first pass: {e}"))?;
    let b = run_everything(&ws.config_with_run_dir(other.path())).map_err(|e| format!("second pass: {e}"))?;
    ensure(a.len() == b.len(), "different artifact sets")?;
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        ensure(na == nb, format!("{na} vs {nb}"))?;
        ensure(ba == bb, format!("{na} differs between reruns"))?;
    }
    Ok(format!("{} records and bundle files byte-identical across two run directories", a.len()))
}

#[test]
fn acceptance() {
    let results = [
        run("sentiment most-common accuracy", || pass(sentiment_most_common)()),
        run("NER all-O accuracy and macro F", || pass(ner_all_o)()),
        run("presence all-negative accuracy and positive F", || pass(presence_all_negative)()),
        run("rating mapping class percentages on the public dataset", class_percentages_public),
        run("rating mapping class percentages on count-matched files", || pass(class_percentages_synthetic)()),
        run("rebalancer on 275/2226", || pass(rebalancer)()),
        run("CRF partition function vs enumeration", || pass(crf_partition)()),
        run("CRF gradient vs central differences", || pass(crf_gradient)()),
        run("CRF Viterbi vs enumeration", || pass(crf_viterbi)()),
        run("Naive Bayes vs brute-force posterior", || pass(nb_oracle)()),
        run("metrics vs brute-force P/R/F", || pass(metrics_oracle)()),
        run("logistic regression on separable data", || pass(lr_separable)()),
        run("fine-tune overfits 32 examples per head", || pass(finetune_overfit)()),
        run("extract, front-pad, CNN/LSTM overfit 16 examples", || pass(extract_then_downstream)()),
        run("sentiment error breakdown arithmetic", || pass(error_breakdown)()),
        run("token confusion report vs brute force", || pass(token_report_oracle)()),
        run("determinism of prepare and train", || pass(determinism)()),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
