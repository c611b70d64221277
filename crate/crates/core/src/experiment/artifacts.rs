use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&fs::read(path)?))
}

/// What a finished stage left behind: the key it ran under and the hash of
/// every file it wrote (paths relative to the output directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub key: String,
    pub outputs: BTreeMap<String, String>,
}

impl StageRecord {
    /// Whether every recorded output still exists with its recorded hash.
    pub fn outputs_intact(&self, root: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(rel, hash)| sha256_file(&root.join(rel)).is_ok_and(|h| &h == hash))
    }
}

/// `stages.json`: stage name to record.
pub type StageLedger = BTreeMap<String, StageRecord>;

pub const LEDGER_FILE: &str = "stages.json";

pub fn read_ledger(root: &Path) -> Result<StageLedger> {
    let path = root.join(LEDGER_FILE);
    if !path.exists() {
        return Ok(StageLedger::new());
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_ledger(root: &Path, ledger: &StageLedger) -> Result<()> {
    fs::create_dir_all(root)?;
    fs::write(
        root.join(LEDGER_FILE),
        serde_json::to_string_pretty(ledger)? + "\n",
    )?;
    Ok(())
}

/// Hashes of the given relative paths under `root`.
pub fn hash_files(root: &Path, rel: &[String]) -> Result<BTreeMap<String, String>> {
    rel.iter()
        .map(|r| Ok((r.clone(), sha256_file(&root.join(r))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tampered_outputs_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "one").unwrap();
        let rec = StageRecord {
            key: "k".into(),
            outputs: hash_files(dir.path(), &["a.txt".into()]).unwrap(),
        };
        assert!(rec.outputs_intact(dir.path()));
        fs::write(dir.path().join("a.txt"), "two").unwrap();
        assert!(!rec.outputs_intact(dir.path()));
        fs::remove_file(dir.path().join("a.txt")).unwrap();
        assert!(!rec.outputs_intact(dir.path()));
    }
}
