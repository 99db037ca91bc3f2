use std::path::Path;
use std::process::Command;

fn erpf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_erpf"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("sweep.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SWEEP: &str = r#"
dt_over_tc = [1e-3, 1e4]
variant = "auto"
[[problems]]
kind = "mandel"
a_over_h = 10
"#;

#[test]
fn run_writes_summary_and_histories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let out = dir.path().join("out");
    let status = erpf()
        .args(["run", "-q", "--strict", "--workers", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",1e-3,") && lines[1].contains(",rpf,"));
    assert!(lines[2].contains(",1e4,") && lines[2].contains(",erpf2-A-side,"));
    assert!(out.join("residuals/case-001.csv").exists());
    assert!(out.join("setup/case-000.txt").exists());
}

#[test]
fn strict_flag_controls_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("max_it = 1\ntol = 1e-12\n{SWEEP}"));
    let out = dir.path().join("out");
    let lenient = erpf()
        .args(["run", "-q", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(lenient.success());
    let strict = erpf()
        .args(["run", "-q", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(strict.code(), Some(1));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("tol = []\n{SWEEP}"));
    let status = erpf()
        .args(["run", "-q", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn generated_files_feed_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let sys_dir = dir.path().join("sys");
    let ok = erpf()
        .args(["generate", "--a-over-h", "10", "--out"])
        .arg(&sys_dir)
        .status()
        .unwrap();
    assert!(ok.success());
    assert!(sys_dir.join("B.mtx").exists() && sys_dir.join("metadata.toml").exists());
    let body = format!(
        "dt_over_tc = [1e-3]\n[[problems]]\nkind = \"files\"\ndir = \"{}\"\n",
        sys_dir.display()
    );
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let status = erpf()
        .args(["run", "-q", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn spectrum_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eigs.csv");
    let ok = erpf()
        .args(["spectrum", "eigs", "--ratio", "0.5", "--side", "a", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("index,real,imag\n"));
    assert_eq!(text.lines().count(), 421);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = erpf_core::SweepConfig::from_file(&path).unwrap();
            assert!(!cfg.cases().is_empty(), "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 3);
}
