use std::fs;
use std::path::Path;

use pharmvig_neural::checkpoint::{load_checkpoint, save_checkpoint, WEIGHTS_FILE};
use pharmvig_neural::fixtures;
use pharmvig_neural::{registry_load, Checkpoint, NeuralError, VariantKey};

const KEYS: [&str; 8] = ["B-C", "B-U", "BB-1.0", "BB-1.1", "CB-A", "CB-D", "CBB-A", "CBB-D"];

fn entry(key: &str, checkpoint: &str) -> serde_json::Value {
    serde_json::json!({"key": key, "checkpoint": checkpoint, "cased": key != "B-U", "hidden_dim": 32})
}

fn write(dir: &Path, entries: Vec<serde_json::Value>) -> std::path::PathBuf {
    let path = dir.join("registry.json");
    fs::write(&path, serde_json::to_string_pretty(&serde_json::json!({"variants": entries})).unwrap()).unwrap();
    path
}

fn all_mini() -> Vec<serde_json::Value> {
    KEYS.iter().enumerate().map(|(i, k)| entry(k, &format!("mini:hidden=32,seed={i}"))).collect()
}

#[test]
fn valid_registry_has_eight_variants() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry_load(write(dir.path(), all_mini())).unwrap();
    assert_eq!(reg.variants.len(), 8);
    for k in VariantKey::ALL {
        assert_eq!(reg.get(k).cased, k != VariantKey::BertUncased);
    }
    let ckpt = reg.load(VariantKey::ClinicalDischarge).unwrap();
    assert_eq!(ckpt.config.hidden_size, 32);
}

#[test]
fn missing_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<_> = all_mini().into_iter().filter(|e| e["key"] != "CB-D").collect();
    let err = registry_load(write(dir.path(), entries)).unwrap_err().to_string();
    assert!(err.contains("CB-D"), "{err}");
}

#[test]
fn duplicate_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = all_mini();
    entries.push(entry("B-C", "mini:"));
    let err = registry_load(write(dir.path(), entries)).unwrap_err().to_string();
    assert!(err.contains("duplicate"), "{err}");
}

#[test]
fn only_bert_uncased_may_be_uncased() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = all_mini();
    entries[4]["cased"] = serde_json::json!(false);
    assert!(registry_load(write(dir.path(), entries)).is_err());
}

#[test]
fn unresolvable_checkpoint_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = all_mini();
    entries[2] = entry("BB-1.0", "no/such/dir");
    let err = registry_load(write(dir.path(), entries)).unwrap_err().to_string();
    assert!(err.contains("BB-1.0"), "{err}");

    let mut entries = all_mini();
    entries[3]["hidden_dim"] = serde_json::json!(768);
    let err = registry_load(write(dir.path(), entries)).unwrap_err().to_string();
    assert!(err.contains("BB-1.1"), "{err}");
}

#[test]
fn elmo_slot_is_reserved() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = all_mini();
    entries.push(serde_json::json!({"key": "ELMo", "checkpoint": "elmo/original", "cased": true, "hidden_dim": 1024}));
    let reg = registry_load(write(dir.path(), entries)).unwrap();
    assert_eq!(reg.elmo.as_deref(), Some("elmo/original"));
    assert_eq!(reg.variants.len(), 8);
}

#[test]
fn directory_checkpoint_round_trips_with_transposed_dense_weights() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fixtures::mini_checkpoint(VariantKey::BioBert11, 9).unwrap();
    let ck_dir = dir.path().join("biobert");
    save_checkpoint(&ck_dir, &ckpt.config, &ckpt.vocab, &ckpt.params).unwrap();

    let bytes = fs::read(ck_dir.join(WEIGHTS_FILE)).unwrap();
    let st = safetensors::SafeTensors::deserialize(&bytes).unwrap();
    assert_eq!(st.tensor("encoder.layer.0.intermediate.dense.weight").unwrap().shape(), &[64, 32]);
    assert_eq!(st.tensor("embeddings.LayerNorm.weight").unwrap().shape(), &[32]);

    let mut entries = all_mini();
    entries[3] = entry("BB-1.1", "biobert");
    let reg = registry_load(write(dir.path(), entries)).unwrap();
    let loaded = reg.load(VariantKey::BioBert11).unwrap();
    assert_eq!(loaded.params.to_named(), ckpt.params.to_named());
    assert_eq!(loaded.vocab, ckpt.vocab);
}

#[test]
fn prefixed_and_legacy_tensor_names_load() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fixtures::mini_checkpoint(VariantKey::BertCased, 9).unwrap();
    save_checkpoint(dir.path(), &ckpt.config, &ckpt.vocab, &ckpt.params).unwrap();
    // rewrite with a `bert.` prefix and gamma/beta layer-norm names
    let bytes = fs::read(dir.path().join(WEIGHTS_FILE)).unwrap();
    let st = safetensors::SafeTensors::deserialize(&bytes).unwrap();
    let renamed: Vec<(String, safetensors::tensor::TensorView)> = st
        .tensors()
        .into_iter()
        .map(|(n, v)| {
            let n = n.replace("LayerNorm.weight", "LayerNorm.gamma").replace("LayerNorm.bias", "LayerNorm.beta");
            (format!("bert.{n}"), v)
        })
        .collect();
    fs::write(dir.path().join(WEIGHTS_FILE), safetensors::serialize(renamed, &None).unwrap()).unwrap();
    let (_, _, ps) = load_checkpoint(dir.path(), &[]).unwrap();
    assert_eq!(ps.to_named(), ckpt.params.to_named());
}

#[test]
fn checkpoint_hidden_size_must_match_variant() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fixtures::mini_checkpoint(VariantKey::BertCased, 9).unwrap();
    save_checkpoint(dir.path(), &ckpt.config, &ckpt.vocab, &ckpt.params).unwrap();
    let mut v = ckpt.variant.clone();
    v.checkpoint_ref = dir.path().to_string_lossy().into_owned();
    v.hidden_dim = 48;
    assert!(matches!(Checkpoint::load(&v, Path::new(".")), Err(NeuralError::Registry(_))));
}
