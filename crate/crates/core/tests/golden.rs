use std::path::PathBuf;

use mcmin::fixtures::catalogue;
use mcmin::io::json::{chain_from_json, chain_to_json};
use mcmin::io::{read_chain_file, ReadOptions};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/v1")
}

/// Set MCMIN_BLESS=1 to rewrite the files after an intended change.
#[test]
fn fixtures_match_golden_json() {
    let bless = std::env::var_os("MCMIN_BLESS").is_some();
    for (name, chain) in catalogue() {
        let path = golden_dir().join(format!("{name}.json"));
        let text = chain_to_json(&chain);
        if bless {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, want, "{name} drifted from its golden file");
        let back = chain_from_json(&want, ReadOptions::strict()).unwrap();
        assert!(back.approx_eq(&chain, 0.0), "{name}");
    }
}

#[test]
fn golden_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (name, chain) in catalogue() {
        let path = dir.path().join(format!("{name}.json"));
        std::fs::copy(golden_dir().join(format!("{name}.json")), &path).unwrap();
        let read = read_chain_file(&path, ReadOptions::strict()).unwrap();
        assert!(read.approx_eq(&chain, 0.0), "{name}");
    }
}
