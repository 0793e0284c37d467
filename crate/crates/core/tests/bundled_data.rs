use std::path::PathBuf;

use llmchain_core::backends::{load_dataset, write_jsonl, DatasetFormat};
use llmchain_core::synth::{generate, SynthConfig, CONTEXTS, GRADED_MODELS};

fn dataset_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/graded_500.jsonl")
}

#[test]
fn bundled_dataset_matches_generator() {
    let bundled = load_dataset(&dataset_path(), DatasetFormat::Jsonl).unwrap();
    assert_eq!(bundled, generate(&SynthConfig::default()));
    assert_eq!(bundled.len(), 500);
    let contexts: std::collections::BTreeSet<_> = bundled.iter().map(|t| t.context.as_str()).collect();
    assert_eq!(contexts.len(), CONTEXTS.len());
    assert!(bundled.iter().all(|t| t.answers.len() == GRADED_MODELS.len()));
}

/// `cargo test -p llmchain-core --test bundled_data -- --ignored` rewrites the file.
#[test]
#[ignore]
fn regenerate_bundled_dataset() {
    write_jsonl(&dataset_path(), &generate(&SynthConfig::default())).unwrap();
}
