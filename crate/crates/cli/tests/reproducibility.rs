//! End-to-end reproducibility check: two runs of the bundled scenario
//! with the same seed must write byte-identical path CSVs.

use std::process::Command;

#[test]
fn criterion_10_reproducibility() {
    let bin = env!("CARGO_BIN_EXE_mildsim");
    let base = std::env::temp_dir().join(format!("mildsim-repro-{}", std::process::id()));
    let run = |tag: &str| -> Vec<u8> {
        let dir = base.join(tag);
        std::fs::create_dir_all(&dir).unwrap();
        let status = Command::new(bin)
            .arg("example4")
            .env("MILDSIM_REPORT_DIR", &dir)
            .status()
            .expect("binary runs");
        assert!(status.success(), "example4 exited nonzero");
        std::fs::read(dir.join("path.csv")).expect("path.csv written")
    };
    let first = run("a");
    let second = run("b");
    let ok = !first.is_empty() && first == second;
    println!(
        "ACCEPTANCE 10 (reproducibility): {}",
        if ok { "pass" } else { "FAIL" }
    );
    std::fs::remove_dir_all(&base).ok();
    assert!(ok, "path CSVs differ between identically seeded runs");
}
