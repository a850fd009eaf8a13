//! End-to-end acceptance checks over the synthetic backend and a mock
//! external encoder. Each criterion is self-contained, seeded and timed;
//! `lforge selftest` and the `acceptance` test target both run these.

pub mod mock;
pub mod oracle;

use crate::bdrate::{bd_rate, build_curve, Metric, RdCurve, RdPoint};
use crate::corpus::{compute_si_ti, si_ti_of_frames, ManifestEntry};
use crate::encoders::{CachedBackend, EncodeBackend, ProcessBackend, ProxyProfile, SyntheticBackend};
use crate::multipliers::OptimizationMode;
use crate::optim::{grid_search, GridAxis};
use crate::orchestrator::{OptimizationRecord, Pipeline, SearchSettings};
use crate::rdmodel::{analytic_optimal_bdrate, SyntheticClipModel};
use crate::reporting::{export_contour, histogram, summarize, summary_csv};
use crate::y4m::{write_file, Chroma, Colorspace, Frame, Ratio, Y4mHeader};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 0x5eed_1a3b_da7e;

#[derive(Debug, Clone)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Where criterion 7 keeps its clip, scripts and cache; a temporary
    /// directory when `None`.
    pub work_dir: Option<PathBuf>,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            seed: DEFAULT_SEED,
            work_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} ({:.2}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

type Check = fn(&SelftestOptions) -> Result<(bool, String), String>;

pub const CRITERIA: [(u8, &str, Check); 10] = [
    (1, "BD-rate matches an independent quadrature", bd_oracle),
    (2, "BD-rate scale and zero laws", bd_laws),
    (3, "Brent convergence on 1-D models", brent_convergence),
    (4, "Powell convergence on 2-D models", powell_convergence),
    (5, "Grid cardinality", grid_cardinality),
    (6, "Single-iteration Powell stays close", early_stop),
    (7, "End-to-end run against a mock encoder", mock_end_to_end),
    (8, "Cost at identity is zero", cost_at_identity),
    (9, "SI/TI invariance", si_ti_invariance),
    (10, "Reporting determinism", reporting_determinism),
];

pub fn run_criterion(id: u8, options: &SelftestOptions) -> Option<CriterionOutcome> {
    let &(id, title, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let t = Instant::now();
    let (passed, detail) = match check(options) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionOutcome {
        id,
        title,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn run_all(options: &SelftestOptions) -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .filter_map(|c| run_criterion(c.0, options))
        .collect()
}

fn rng(options: &SelftestOptions, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(options.seed);
    r.set_stream(stream);
    r
}

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

fn random_curve_points(r: &mut ChaCha8Rng, q0: f64, log_r0: f64) -> Vec<(f64, f64)> {
    let (mut q, mut lr) = (q0, log_r0);
    (0..5)
        .map(|_| {
            let p = (q, 10f64.powf(lr));
            q += r.gen_range(0.005..0.03);
            lr += r.gen_range(0.05..0.5);
            p
        })
        .collect()
}

fn to_curve(id: &str, pts: &[(f64, f64)]) -> Result<RdCurve, String> {
    let points = pts
        .iter()
        .enumerate()
        .map(|(i, &(q, b))| RdPoint::new(63 - 9 * i as i32, b, q, Metric::MsSsim))
        .collect();
    build_curve(id, points).map_err(err)
}

fn bd_oracle(o: &SelftestOptions) -> Result<(bool, String), String> {
    let mut r = rng(o, 1);
    let t = Instant::now();
    let (mut worst, mut pairs) = (0.0f64, 0);
    while pairs < 1000 {
        let q0 = r.gen_range(0.80..0.85);
        let lr0 = r.gen_range(2.0..3.0);
        let reference = random_curve_points(&mut r, q0, lr0);
        let span = reference[4].0 - reference[0].0;
        let (shift, lr1) = (r.gen_range(-0.3..0.3) * span, r.gen_range(1.8..3.2));
        let test = random_curve_points(&mut r, q0 + shift, lr1);
        if oracle::overlap_fraction(&test, &reference) < 0.55 {
            continue;
        }
        let fast = bd_rate(&to_curve("t", &test)?, &to_curve("r", &reference)?).map_err(err)?;
        let slow = oracle::bd_rate(&test, &reference, 24_000);
        worst = worst.max((fast.value_percent - slow).abs());
        pairs += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        worst < 1e-6 && secs < 10.0,
        format!("{pairs} pairs, max |diff| {worst:.2e} pp (tol 1e-6), {secs:.2}s (limit 10s)"),
    ))
}

fn bd_laws(o: &SelftestOptions) -> Result<(bool, String), String> {
    let mut r = rng(o, 2);
    let (mut scale_err, mut zero_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (q0, lr0) = (r.gen_range(0.80..0.9), r.gen_range(2.0..3.0));
        let pts = random_curve_points(&mut r, q0, lr0);
        let c = to_curve("c", &pts)?;
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(q, b)| (q, b * 1.10)).collect();
        let s = bd_rate(&to_curve("s", &scaled)?, &c).map_err(err)?;
        scale_err = scale_err.max((s.value_percent - 10.0).abs());
        zero_err = zero_err.max(bd_rate(&c, &c).map_err(err)?.value_percent.abs());
    }
    Ok((
        scale_err < 1e-9 && zero_err == 0.0,
        format!("x1.10 gives +10% within {scale_err:.1e} (tol 1e-9); bd(c,c) max |{zero_err:.1e}| over 100 curves"),
    ))
}

fn base_model(r: &mut ChaCha8Rng, id: String, k_star: Vec<f64>, gamma: Vec<f64>, cross: f64) -> Result<SyntheticClipModel, String> {
    SyntheticClipModel::new(
        id,
        r.gen_range(0.995..0.999),
        r.gen_range(0.003..0.005),
        r.gen_range(4.0..5.5),
        r.gen_range(0.02..0.05),
        k_star,
        gamma,
        cross,
    )
    .map_err(err)
}

/// Twenty 1-D models with gamma in [0.005, 0.05] and k* in [0.7, 5.0].
pub fn random_1d_models(seed: u64) -> Result<Vec<SyntheticClipModel>, String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x1d);
    (0..20)
        .map(|i| {
            let (k, g) = (r.gen_range(0.7..5.0), r.gen_range(0.005..0.05));
            base_model(&mut r, format!("one-d-{i:02}"), vec![k], vec![g], 0.0)
        })
        .collect()
}

/// Twenty 2-D models with a nonzero cross term: |rho| in [0.1, 0.6] of the
/// positive-definite limit.
pub fn random_2d_models(seed: u64) -> Result<Vec<SyntheticClipModel>, String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x2d);
    (0..20)
        .map(|i| {
            let k = vec![r.gen_range(0.7..5.0), r.gen_range(0.7..5.0)];
            let g: Vec<f64> = vec![r.gen_range(0.005..0.05), r.gen_range(0.005..0.05)];
            let rho = r.gen_range(0.1..0.6) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            let cross = rho * 2.0 * (g[0] * g[1]).sqrt();
            base_model(&mut r, format!("two-d-{i:02}"), k, g, cross)
        })
        .collect()
}

fn entry(id: &str) -> ManifestEntry {
    ManifestEntry {
        clip_id: id.to_string(),
        path: None,
        shot_group: "synthetic".into(),
        dynamic_range: Default::default(),
    }
}

fn native() -> ProxyProfile {
    ProxyProfile::native("native-S2", 2)
}

fn synthetic_pipeline(models: Vec<SyntheticClipModel>, settings: SearchSettings) -> Result<Pipeline, String> {
    let backend = Arc::new(CachedBackend::in_memory(SyntheticBackend::new(models)));
    Pipeline::new(backend, settings, std::env::temp_dir(), None).map_err(err)
}

fn brent_convergence(o: &SelftestOptions) -> Result<(bool, String), String> {
    let models = random_1d_models(o.seed)?;
    let t = Instant::now();
    let p = synthetic_pipeline(models.clone(), SearchSettings::default())?;
    let (mut k_err, mut bd_err, mut evals) = (0.0f64, 0.0f64, 0usize);
    for m in &models {
        let rec = p
            .optimize_clip(&entry(&m.clip_id), OptimizationMode::AllFrames, &native(), &native())
            .map_err(err)?
            .record;
        if let Some(f) = &rec.failure {
            return Err(format!("{}: {}", m.clip_id, f.message));
        }
        k_err = k_err.max((rec.final_k[0] - m.k_star[0]).abs());
        bd_err = bd_err.max((rec.bd_rate_final.ok_or("no final BD-rate")? - analytic_optimal_bdrate(m)).abs());
        evals = evals.max(rec.cost_evals);
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        k_err <= 1e-3 && bd_err <= 0.01 && evals <= 30 && secs < 5.0,
        format!(
            "20 models: max |k-k*| {k_err:.1e} (tol 1e-3), max BD err {bd_err:.1e} pp (tol 0.01), max {evals} evals (limit 30), {secs:.2}s (limit 5s)"
        ),
    ))
}

fn optimize_2d(p: &Pipeline, m: &SyntheticClipModel, mode: OptimizationMode) -> Result<(OptimizationRecord, Vec<f64>), String> {
    let out = p.optimize_clip(&entry(&m.clip_id), mode, &native(), &native()).map_err(err)?;
    if let Some(f) = &out.record.failure {
        return Err(format!("{} {mode}: {}", m.clip_id, f.message));
    }
    let best = out.trace.ok_or("no trace")?.best_point;
    Ok((out.record, best))
}

fn powell_convergence(o: &SelftestOptions) -> Result<(bool, String), String> {
    let models = random_2d_models(o.seed)?;
    let t = Instant::now();
    let p = synthetic_pipeline(models.clone(), SearchSettings::default())?;
    let (mut ln_err, mut grid_gap) = (0.0f64, 0.0f64);
    for m in &models {
        let (_, k) = optimize_2d(&p, m, OptimizationMode::PowellKfXGfArf)?;
        for (a, b) in k.iter().zip(&m.k_star) {
            ln_err = ln_err.max((a.ln() - b.ln()).abs());
        }
        let (_, g) = optimize_2d(&p, m, OptimizationMode::Grid2d)?;
        for (a, b) in g.iter().zip(&k) {
            grid_gap = grid_gap.max((a - b).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let step = GridAxis::multiplier_study().step;
    Ok((
        ln_err <= 1e-2 && grid_gap <= step + 1e-9 && secs < 30.0,
        format!(
            "20 models: max |ln k - ln k*| {ln_err:.1e} (tol 1e-2), max grid/Powell gap {grid_gap:.3} (limit {step}), {secs:.2}s (limit 30s)"
        ),
    ))
}

fn grid_cardinality(o: &SelftestOptions) -> Result<(bool, String), String> {
    let m = random_2d_models(o.seed)?.remove(0);
    // No cache here: every RD point must come from a fresh synthetic encode.
    let backend = Arc::new(SyntheticBackend::new([m.clone()]));
    let p = Pipeline::new(backend.clone(), SearchSettings::default(), std::env::temp_dir(), None).map_err(err)?;
    let clip = entry(&m.clip_id);
    let prof = native();
    let reference = p.run_reference(&clip, &prof).map_err(err)?;
    let before = backend.launches();
    let cost = p.make_cost(&clip, &reference, OptimizationMode::Grid2d, &prof);
    let scan = grid_search(cost, &[GridAxis::multiplier_study(); 2]).map_err(err)?;
    let points = backend.launches() - before;
    Ok((
        scan.len() == 2401 && points == 12_005,
        format!("{} grid evaluations (expect 2401), {points} RD points (expect 12005)", scan.len()),
    ))
}

fn early_stop(o: &SelftestOptions) -> Result<(bool, String), String> {
    let models = random_2d_models(o.seed)?;
    let full = synthetic_pipeline(models.clone(), SearchSettings::default())?;
    let mut settings = SearchSettings::default();
    settings.optimizer.max_iterations = 1;
    let once = synthetic_pipeline(models.clone(), settings)?;
    let mut close = 0;
    let mut ratios = Vec::new();
    for m in &models {
        let (a, _) = optimize_2d(&once, m, OptimizationMode::PowellKfXGfArf)?;
        let (b, _) = optimize_2d(&full, m, OptimizationMode::PowellKfXGfArf)?;
        let (c1, cinf) = (a.bd_rate_search.ok_or("no cost")?, b.bd_rate_search.ok_or("no cost")?);
        let rel = (c1 - cinf).abs() / cinf.abs().max(1e-12);
        ratios.push(rel);
        if rel <= 0.25 {
            close += 1;
        }
    }
    ratios.sort_by(f64::total_cmp);
    Ok((
        close * 2 >= models.len(),
        format!(
            "{close}/20 within 25% of the converged cost (need >= 10); median relative gap {:.1}%",
            100.0 * (ratios[9] + ratios[10]) / 2.0
        ),
    ))
}

fn mock_end_to_end(o: &SelftestOptions) -> Result<(bool, String), String> {
    let tmp;
    let dir: &Path = match &o.work_dir {
        Some(d) => d,
        None => {
            tmp = tempfile::tempdir().map_err(err)?;
            tmp.path()
        }
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let clip_path = dir.join("gradient.y4m");
    mock::write_source_clip(&clip_path, 3).map_err(err)?;
    let tools = mock::MockTools::install(&dir.join("tools")).map_err(err)?;
    let clip = ManifestEntry {
        path: Some(clip_path),
        ..entry("gradient")
    };
    let search = ProxyProfile::new("32x18-S6", 32, 18, 6).map_err(err)?;
    let final_ = native();

    let run = || -> Result<(OptimizationRecord, u64), String> {
        let inner = ProcessBackend::new(tools.backend_config());
        let backend = Arc::new(CachedBackend::persistent(inner, dir.join("cache")).map_err(err)?);
        let p = Pipeline::new(backend.clone(), SearchSettings::default(), dir.join("scratch"), Some(4)).map_err(err)?;
        let rec = p
            .optimize_clip(&clip, OptimizationMode::Kf, &search, &final_)
            .map_err(err)?
            .record;
        Ok((rec, backend.launches()))
    };
    let (first, launched) = run()?;
    if let Some(f) = &first.failure {
        return Err(format!("{:?} phase: {}", f.phase, f.message));
    }
    let (second, relaunched) = run()?;
    let ok = first.has_all_columns()
        && first.iterations >= 1
        && launched > 0
        && relaunched == 0
        && second.bd_rate_final == first.bd_rate_final;
    Ok((
        ok,
        format!(
            "k_KF {:.3} (mock optimum {}), BDR {:.3}%, {} iterations, {launched} launches; re-run {relaunched} launches",
            first.final_k[0],
            mock::MOCK_K_STAR_KF,
            first.bd_rate_final.unwrap_or(f64::NAN),
            first.iterations
        ),
    ))
}

fn campaign_models(seed: u64) -> Result<Vec<SyntheticClipModel>, String> {
    let mut models = random_1d_models(seed)?;
    models.truncate(3);
    models.extend(random_2d_models(seed)?.into_iter().take(3));
    models[0] = models[0].clone().with_noise(seed, 1e-3).map_err(err)?;
    models[4] = models[4].clone().with_noise(seed + 1, 5e-4).map_err(err)?;
    Ok(models)
}

fn cost_at_identity(o: &SelftestOptions) -> Result<(bool, String), String> {
    let models = campaign_models(o.seed)?;
    let p = synthetic_pipeline(models.clone(), SearchSettings::default())?;
    let prof = native();
    let (mut worst, mut checked) = (0.0f64, 0);
    for m in &models {
        let clip = entry(&m.clip_id);
        let reference = p.run_reference(&clip, &prof).map_err(err)?;
        let modes = if m.dims() == 2 {
            &OptimizationMode::ALL[..]
        } else {
            &OptimizationMode::ALL[..4]
        };
        for &mode in modes {
            let mut cost = p.make_cost(&clip, &reference, mode, &prof);
            let c = cost(&vec![1.0; mode.dims()]).map_err(err)?;
            worst = worst.max(c.abs());
            checked += 1;
        }
    }
    Ok((worst <= 1e-9, format!("{checked} clip/mode pairs, max |cost(1)| {worst:.1e} (tol 1e-9)")))
}

fn si_ti_invariance(o: &SelftestOptions) -> Result<(bool, String), String> {
    let (w, h) = (48, 32);
    let tmp = tempfile::tempdir().map_err(err)?;
    let path = tmp.path().join("flat.y4m");
    let header = Y4mHeader::new(w, h, Ratio { num: 30, den: 1 }, Colorspace::new(Chroma::C420, 8).map_err(err)?);
    let flat: Vec<Frame> = (0..4).map(|_| Frame::filled(&header, &[90, 128, 128])).collect();
    write_file(&path, &header, &flat).map_err(err)?;
    let constant = compute_si_ti(&path).map_err(err)?;

    let mut r = rng(o, 9);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let frames: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..w * h).map(|_| r.gen_range(16..=200) as f64).collect())
            .collect();
        let offset = r.gen_range(1..=55) as f64;
        let shifted: Vec<Vec<f64>> = frames.iter().map(|f| f.iter().map(|v| v + offset).collect()).collect();
        let (a, b) = (si_ti_of_frames(&frames, w, h), si_ti_of_frames(&shifted, w, h));
        worst = worst.max((a.si - b.si).abs()).max((a.ti - b.ti).abs());
    }
    Ok((
        constant.si == 0.0 && constant.ti == 0.0 && worst < 1e-9,
        format!(
            "constant clip (SI, TI) = ({}, {}); max change under luma offset {worst:.1e} (tol 1e-9)",
            constant.si, constant.ti
        ),
    ))
}

fn reporting_determinism(o: &SelftestOptions) -> Result<(bool, String), String> {
    let models = campaign_models(o.seed)?;
    let p = synthetic_pipeline(models.clone(), SearchSettings::default())?;
    let clips: Vec<ManifestEntry> = models
        .iter()
        .enumerate()
        .map(|(i, m)| ManifestEntry {
            shot_group: ["Meridian", "Sol Levante", "Cosmos"][i % 3].into(),
            ..entry(&m.clip_id)
        })
        .collect();
    let modes = [OptimizationMode::AllFrames, OptimizationMode::Kf, OptimizationMode::KfGfArf];
    let outcome = p.run_campaign(&clips, &modes, &native(), &native(), None).map_err(err)?;
    let records = outcome.records;

    let render = |rs: &[OptimizationRecord]| -> Result<(String, String), String> {
        let s = summary_csv(&summarize(rs).map_err(err)?).map_err(err)?;
        let h = histogram(rs, 1.0).map_err(err)?.to_csv().map_err(err)?;
        Ok((s, h))
    };
    let first = render(&records)?;
    let second = render(&records)?;
    let mut shuffled = records.clone();
    shuffled.shuffle(&mut rng(o, 10));
    let third = render(&shuffled)?;

    let m = &models[3];
    let clip = entry(&m.clip_id);
    let reference = p.run_reference(&clip, &native()).map_err(err)?;
    let axes = [GridAxis::new(0.6, 5.4, 0.4); 2];
    let contour = |_: ()| -> Result<String, String> {
        let prof = native();
        let scan = grid_search(p.make_cost(&clip, &reference, OptimizationMode::Grid2d, &prof), &axes).map_err(err)?;
        let c = export_contour(&scan, None).map_err(err)?;
        Ok(c.to_matrix_csv().map_err(err)? + &c.to_long_csv().map_err(err)?)
    };
    let (c1, c2) = (contour(())?, contour(())?);

    let with_bd = records.iter().filter(|r| r.bd_rate_final.is_some()).count();
    let conserved = [0.05, 0.3, 1.0, 2.5]
        .iter()
        .map(|&w| histogram(&records, w).map(|h| h.total() == with_bd))
        .collect::<Result<Vec<bool>, _>>()
        .map_err(err)?
        .into_iter()
        .all(|b| b);
    let identical = first == second && first == third && c1 == c2;
    Ok((
        identical && conserved && with_bd == records.len(),
        format!(
            "{} records; summary/histogram/contour byte-identical across runs and shuffles: {identical}; histogram totals conserved: {conserved}",
            records.len()
        ),
    ))
}
