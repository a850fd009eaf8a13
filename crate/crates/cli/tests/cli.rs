use lforge_core::orchestrator::load_records;
use lforge_core::rdmodel::{analytic_optimal_bdrate, SyntheticClipModel};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
scratch_dir = "scratch"
modes = ["KF"]

[search_profile]
label = "synthetic"

[backend]
kind = "synthetic"

[[backend.models]]
clip_id = "s1"
q_max = 0.997
alpha = 0.004
beta0 = 5.0
beta1 = 0.03
k_star = [1.6]
gamma = [0.02]
cross = 0.0
noise_amplitude = 0.0

[[backend.models]]
clip_id = "s2"
q_max = 0.997
alpha = 0.004
beta0 = 5.0
beta1 = 0.03
k_star = [1.8, 0.7]
gamma = [0.02, 0.01]
cross = 0.0
noise_amplitude = 0.0

[[clips]]
clip_id = "s1"
shot_group = "drama"

[[clips]]
clip_id = "s2"
shot_group = "sport"
"#;

fn lforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lforge"))
        .args(args)
        .env_remove("LFORGE_SCRATCH")
        .env_remove("LFORGE_JOBS")
        .output()
        .unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn model(id: &str) -> SyntheticClipModel {
    let t: toml::Value = toml::from_str(CONFIG).unwrap();
    let models = t["backend"]["models"].as_array().unwrap();
    let m = models.iter().find(|m| m["clip_id"].as_str() == Some(id)).unwrap();
    m.clone().try_into().unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = lforge(&["optimize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn malformed_override_is_a_usage_error() {
    let (_dir, cfg) = setup();
    let o = lforge(&["--config", cfg.to_str().unwrap(), "--set", "no-equals-sign", "optimize"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_config_is_a_domain_error() {
    let o = lforge(&["--config", "/nonexistent/campaign.toml", "optimize"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn optimize_reaches_the_analytic_optimum_and_resumes() {
    let (dir, cfg) = setup();
    let cfg = cfg.to_str().unwrap();
    let o = lforge(&["--config", cfg, "--set", "mode=ALL_FRAMES", "optimize"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("optimized 2, reused 0, failed 0"), "{}", stdout(&o));

    let scratch = dir.path().join("scratch");
    let records = load_records(&scratch.join("results.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    let r = records.iter().find(|r| r.clip_id == "s1").unwrap();
    let bd = r.bd_rate_final.unwrap();
    assert!((bd - analytic_optimal_bdrate(&model("s1"))).abs() < 0.01, "{bd}");
    for name in ["records.csv", "summary.csv", "histogram.csv"] {
        assert!(scratch.join("reports").join(name).is_file(), "{name}");
    }

    let again = lforge(&["--config", cfg, "--set", "mode=ALL_FRAMES", "optimize"]);
    assert!(again.status.success());
    assert!(stdout(&again).contains("optimized 0, reused 2, failed 0, encoder launches 0"), "{}", stdout(&again));

    let report = lforge(&["--config", cfg, "report", "--bin-width", "0.5"]);
    assert!(report.status.success());
}

#[test]
fn dimension_mismatch_fails_the_pair_but_not_the_run() {
    let (dir, cfg) = setup();
    let o = lforge(&["--config", cfg.to_str().unwrap(), "--set", "mode=POWELL_KF_X_GFARF", "optimize"]);
    // s1 is a 1-D model: its pair fails, s2 completes
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("optimized 1") && stdout(&o).contains("failed 1"), "{}", stdout(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s1"));
    let records = load_records(&dir.path().join("scratch/results.jsonl")).unwrap();
    assert!(records.iter().any(|r| r.clip_id == "s2" && r.is_complete()));
}

#[test]
fn grid_exports_a_full_contour() {
    let (dir, cfg) = setup();
    let o = lforge(&["--config", cfg.to_str().unwrap(), "grid", "--clip", "s2", "--with-path"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports = dir.path().join("scratch/reports");
    let long = std::fs::read_to_string(reports.join("contour-s2.long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 49 * 49);
    let matrix = std::fs::read_to_string(reports.join("contour-s2.matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 50);
    assert!(reports.join("contour-s2.path.csv").is_file());
    assert!(!Path::new(&reports.join("contour-s1.long.csv")).exists());
}

#[test]
fn selftest_runs_a_single_criterion_without_config() {
    let o = lforge(&["selftest", "--criterion", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("criterion  2 PASS"), "{}", stdout(&o));
    assert_eq!(lforge(&["selftest", "--criterion", "11"]).status.code(), Some(2));
}
