use std::fs;
use std::path::{Path, PathBuf};

use gradgrow::checkpoint;
use gradgrow::harness::{sweep, ConfigFile};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(PathBuf, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {dir:?}");
    out
}

#[test]
fn fuzz_corpus_seeds_are_valid_inputs() {
    for (p, text) in seeds("fuzz_config") {
        ConfigFile::parse(&text).unwrap_or_else(|e| panic!("{p:?}: {e}"));
    }
    for (p, text) in seeds("fuzz_checkpoint") {
        let net = checkpoint::decode(&text).unwrap_or_else(|e| panic!("{p:?}: {e}"));
        assert_eq!(checkpoint::decode(&checkpoint::encode(&net)).unwrap(), net);
    }
    for (p, text) in seeds("fuzz_sweep_table") {
        sweep::parse_table(&text).unwrap_or_else(|e| panic!("{p:?}: {e}"));
    }
}
