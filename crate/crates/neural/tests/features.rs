use pharmvig_core::textprep::{subword_tokenize, word_tokenize};
use pharmvig_neural::fixtures;
use pharmvig_neural::{
    extract_embeddings, fine_tune, read_features, write_features, FinetuneConfig, TaskHead, VariantKey,
};

const TEXTS: [&str; 4] = [
    "this drug gave me a bad headache",
    "refill at the pharmacy",
    "this drug gave me a bad headache",
    "Nausea!",
];

#[test]
fn extraction_is_deterministic_and_shaped() {
    let ckpt = fixtures::mini_checkpoint(VariantKey::ClinicalAll, 4).unwrap();
    let f = extract_embeddings(&ckpt, &TEXTS, 64).unwrap();
    assert!(!f.from_finetuned);
    assert_eq!(f.len(), 4);
    assert_eq!(f.cls_vectors[0], f.cls_vectors[2]);
    assert_eq!(f.token_matrices[0], f.token_matrices[2]);
    let again = extract_embeddings(&ckpt, &TEXTS, 64).unwrap();
    assert_eq!(f, again);

    let lens: Vec<usize> = TEXTS.iter().map(|t| subword_tokenize(t, &ckpt.vocab, true, 64).unwrap().len()).collect();
    let max = *lens.iter().max().unwrap();
    for ((v, m), len) in f.cls_vectors.iter().zip(&f.token_matrices).zip(&lens) {
        assert_eq!(v.len(), ckpt.variant.hidden_dim);
        assert_eq!(m.valid_rows(), *len);
        assert_eq!(m.matrix.rows, max);
        assert!(m.matrix.data[..m.valid_from * m.matrix.dim].iter().all(|x| *x == 0.0));
        // the cls vector is the first real row
        assert_eq!(m.matrix.row(m.valid_from), v.as_slice());
    }
}

#[test]
fn finetuned_source_is_flagged() {
    let ckpt = fixtures::mini_checkpoint(VariantKey::ClinicalAll, 4).unwrap();
    let data = fixtures::classification(TaskHead::Classify2, 8, 1);
    let mut cfg = FinetuneConfig::new(TaskHead::Classify2, 1, 3);
    cfg.max_seq_len = 64;
    cfg.learning_rate = 1e-3;
    let model = fine_tune(&ckpt, &data, &[], &cfg).unwrap();
    let f = extract_embeddings(&model, &TEXTS, 64).unwrap();
    assert!(f.from_finetuned);
    let base = extract_embeddings(&ckpt, &TEXTS, 64).unwrap();
    assert_ne!(f.cls_vectors, base.cls_vectors);
}

#[test]
fn uncased_extraction_ignores_case() {
    let ckpt = fixtures::mini_checkpoint(VariantKey::BertUncased, 4).unwrap();
    let a = extract_embeddings(&ckpt, &["BAD Headache"], 64).unwrap();
    let b = extract_embeddings(&ckpt, &["bad headache"], 64).unwrap();
    assert_eq!(a.cls_vectors, b.cls_vectors);
    assert_eq!(word_tokenize("BAD Headache").len(), 2);
}

#[test]
fn feature_file_round_trip() {
    let ckpt = fixtures::mini_checkpoint(VariantKey::ClinicalAll, 4).unwrap();
    let f = extract_embeddings(&ckpt, &TEXTS, 64).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.feat");
    write_features(&path, &f).unwrap();
    let back = read_features(&path).unwrap();
    assert_eq!(back, f);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_features(&path).is_err());
}
