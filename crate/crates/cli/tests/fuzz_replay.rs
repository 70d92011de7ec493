//! Runs the fuzz-target properties over the checked-in corpus and over
//! generated inputs, so they hold on stable without a fuzzing engine.

use std::fs;
use std::path::{Path, PathBuf};

use fracpinn::checkpoint::{decode, encode};
use fracpinn_cli::config::{parse_config, parse_override, ExperimentConfig};
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<String> {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

fn check_config(text: &str) {
    if let Ok(raw) = parse_config(text) {
        if let Ok(cfg) = ExperimentConfig::from_raw(&raw) {
            let again = ExperimentConfig::from_text(&cfg.to_text(), &[]).expect("resolved config reparses");
            assert_eq!(again, cfg);
        }
    }
}

fn check_checkpoint(text: &str) {
    if let Ok(ck) = decode(text) {
        assert_eq!(decode(&encode(&ck)).expect("encoded checkpoint decodes"), ck);
    }
}

fn check_override(text: &str) {
    if let Ok((key, value)) = parse_override(text) {
        assert!(key.contains('.'));
        assert_eq!(value, value.trim());
        let mut raw = parse_config("[experiment]\nkind = forward_fpoisson\n").unwrap();
        raw.apply_overrides(&[text.to_string()]).expect("accepted override applies");
        assert_eq!(raw.entries[&key].0, value);
    }
}

#[test]
fn corpus_seeds_satisfy_the_properties() {
    let configs = corpus("config_parser");
    assert!(configs.iter().filter(|t| ExperimentConfig::from_text(t, &[]).is_ok()).count() >= 6);
    configs.iter().for_each(|t| check_config(t));
    let checkpoints = corpus("checkpoint_decoder");
    assert_eq!(checkpoints.iter().filter(|t| decode(t).is_ok()).count(), 2);
    checkpoints.iter().for_each(|t| check_checkpoint(t));
    corpus("override_parser").iter().for_each(|t| check_override(t));
}

/// Deletes, duplicates or replaces one byte range of a seed.
fn mutate(seed: &str, at: usize, len: usize, insert: &str) -> String {
    let b = seed.as_bytes();
    let at = at % (b.len() + 1);
    let end = (at + len).min(b.len());
    let mut v = b[..at].to_vec();
    v.extend_from_slice(insert.as_bytes());
    v.extend_from_slice(&b[end..]);
    String::from_utf8_lossy(&v).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
        check_config(&s);
        check_checkpoint(&s);
        check_override(&s);
    }

    #[test]
    fn mutated_configs_never_panic(i in 0usize..9, at in any::<usize>(), len in 0usize..20, insert in "[a-z_.=#, 0-9\\[\\]\n-]{0,12}") {
        let seeds = corpus("config_parser");
        check_config(&mutate(&seeds[i % seeds.len()], at, len, &insert));
    }

    #[test]
    fn mutated_checkpoints_never_panic(i in 0usize..4, at in any::<usize>(), len in 0usize..20, insert in "[a-z .e0-9\n-]{0,12}") {
        let seeds = corpus("checkpoint_decoder");
        check_checkpoint(&mutate(&seeds[i % seeds.len()], at, len, &insert));
    }

    #[test]
    fn mutated_overrides_never_panic(i in 0usize..5, at in any::<usize>(), len in 0usize..6, insert in "[a-z_.= ,0-9-]{0,8}") {
        let seeds = corpus("override_parser");
        check_override(&mutate(&seeds[i % seeds.len()], at, len, &insert));
    }
}
