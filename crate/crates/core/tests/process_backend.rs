use lforge_core::corpus::{build_corpus, Manifest};
use lforge_core::multipliers::OptimizationMode;
use lforge_core::orchestrator::{BackendConfig, CampaignConfig, CancelToken, Phase, ResultsStore};
use lforge_core::selftest::mock::{self, MockTools};
use serde_json::json;
use std::path::Path;

fn no_env(_: &str) -> Option<String> {
    None
}

/// A JSON campaign over one generated clip, driving the mock tools through
/// the process backend. Paths in the file are relative to its directory.
fn campaign(dir: &Path, backend: BackendConfig, modes: &[&str]) -> CampaignConfig {
    std::fs::create_dir_all(dir.join("clips")).unwrap();
    mock::write_source_clip(&dir.join("clips/gradient.y4m"), 3).unwrap();
    let cfg = json!({
        "scratch_dir": "scratch",
        "modes": modes,
        "backend": backend,
        "search_profile": { "label": "32x18-S6", "target_width": 32, "target_height": 18, "speed_preset": 6 },
        "final_profile": { "label": "native-S2", "speed_preset": 2 },
        "jobs": 2,
        "clips": [{ "clip_id": "gradient", "path": "clips/gradient.y4m", "shot_group": "test" }],
    });
    let path = dir.join("campaign.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    CampaignConfig::load(Some(&path), no_env, &[]).unwrap()
}

#[test]
fn corpus_scan_reads_the_generated_clip() {
    let dir = tempfile::tempdir().unwrap();
    let tools = MockTools::install(&dir.path().join("tools")).unwrap();
    let cfg = campaign(dir.path(), BackendConfig::Process(tools.backend_config()), &["KF"]);
    let records = build_corpus(&Manifest { clips: cfg.clips().unwrap() }, true);
    let rec = records.into_iter().next().unwrap().unwrap();
    assert_eq!((rec.width, rec.height, rec.frame_count), (64, 36, 3));
    assert!(rec.si.is_some() && rec.ti.is_some());
}

#[test]
fn campaign_finds_each_frame_type_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let tools = MockTools::install(&dir.path().join("tools")).unwrap();
    let cfg = campaign(dir.path(), BackendConfig::Process(tools.backend_config()), &["KF", "GF_ARF"]);
    let pipeline = cfg.pipeline(CancelToken::new()).unwrap();
    let store = ResultsStore::open(cfg.store_path()).unwrap();
    let out = pipeline
        .run_campaign(&cfg.clips().unwrap(), &cfg.modes, &cfg.search_profile, cfg.final_profile(), Some(&store))
        .unwrap();
    assert_eq!(out.failures().count(), 0);
    let k = |mode| out.records.iter().find(|r| r.mode == mode).unwrap().final_k[0];
    assert!((k(OptimizationMode::Kf) - mock::MOCK_K_STAR_KF).abs() < 0.05);
    assert!((k(OptimizationMode::GfArf) - mock::MOCK_K_STAR_GF_ARF).abs() < 0.05);
    assert!(out.records.iter().all(|r| r.has_all_columns() && r.bd_rate_final.unwrap() < 0.0));
}

#[test]
fn encoder_failure_is_recorded_against_the_clip() {
    let dir = tempfile::tempdir().unwrap();
    let tools = MockTools::install(&dir.path().join("tools")).unwrap();
    let mut backend = tools.backend_config();
    backend.encoder = "sh -c 'echo broken encoder >&2; exit 3'".into();
    let cfg = campaign(dir.path(), BackendConfig::Process(backend), &["KF"]);
    let pipeline = cfg.pipeline(CancelToken::new()).unwrap();
    let out = pipeline
        .run_campaign(&cfg.clips().unwrap(), &cfg.modes, &cfg.search_profile, cfg.final_profile(), None)
        .unwrap();
    let failed: Vec<_> = out.failures().collect();
    assert_eq!(failed.len(), 1);
    let f = failed[0].failure.as_ref().unwrap();
    assert_eq!(f.phase, Phase::Reference);
    assert!(f.message.contains("gradient"), "{}", f.message);
}
