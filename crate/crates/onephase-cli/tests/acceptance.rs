//! Acceptance: determinism of the experiment runner. Two runs of the bundled
//! config with the same seed must produce byte-identical artifacts, verified
//! through the MANIFEST content hashes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_onephase"))
}

fn bundled_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/strip_p2.cfg")
}

#[test]
fn acceptance_11_determinism() {
    let base = std::env::temp_dir().join(format!("onephase_accept11_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let mut manifests = Vec::new();
    for run in 0..2 {
        let out = base.join(format!("run{run}"));
        let status = bin()
            .args(["run", bundled_config().to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success(), "run {run} failed");
        manifests.push(std::fs::read_to_string(out.join("MANIFEST")).unwrap());
    }
    assert_eq!(
        manifests[0], manifests[1],
        "identical config + seed must yield byte-identical artifact hashes"
    );
    assert!(manifests[0].lines().count() >= 6, "manifest lists every artifact");
    println!(
        "[criterion 11] PASS: two runs of the bundled config produced identical MANIFEST \
         ({} artifacts)",
        manifests[0].lines().count()
    );
}
