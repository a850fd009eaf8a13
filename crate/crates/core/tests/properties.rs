use lforge_core::bdrate::{bd_rate, build_curve, Metric, RdCurve, RdPoint};
use lforge_core::corpus::si_ti_of_frames;
use lforge_core::multipliers::OptimizationMode;
use lforge_core::optim::{brent_minimize, powell_minimize, Bounds, OptimizerConfig};
use lforge_core::orchestrator::{OptimizationRecord, PhaseTimes};
use lforge_core::optim::Termination;
use lforge_core::reporting::{histogram_values, summarize, summary_csv};
use lforge_core::selftest::oracle;
use proptest::prelude::*;

/// Monotone RD samples: quality and rate both rise as qp falls.
fn samples() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (4usize..=7, 28.0f64..36.0, 100.0f64..2000.0).prop_flat_map(|(n, q0, r0)| {
        (
            prop::collection::vec((0.8f64..3.0, 1.1f64..2.5), n - 1),
            Just((q0, r0)),
        )
            .prop_map(|(steps, (q0, r0))| {
                let mut out = vec![(q0, r0)];
                for (dq, dr) in steps {
                    let (q, r) = *out.last().unwrap();
                    out.push((q + dq, r * dr));
                }
                out
            })
    })
}

fn curve(pts: &[(f64, f64)]) -> RdCurve {
    let points = pts
        .iter()
        .enumerate()
        .map(|(i, &(q, r))| RdPoint::new(63 - 4 * i as i32, r, q, Metric::Psnr))
        .collect();
    build_curve("p", points).unwrap()
}

fn scaled(pts: &[(f64, f64)], s: f64) -> Vec<(f64, f64)> {
    pts.iter().map(|&(q, r)| (q, r * s)).collect()
}

/// A second curve over a shifted but overlapping quality span.
fn pair() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    (samples(), -0.6f64..0.6, prop::collection::vec(0.7f64..1.3, 7)).prop_map(|(a, dq, jitter)| {
        let mut b: Vec<(f64, f64)> = a.iter().map(|&(q, r)| (q + dq, r)).collect();
        // multiply rates by a running product that keeps them increasing
        let mut f = 1.0;
        for (p, j) in b.iter_mut().zip(jitter) {
            f *= j.sqrt();
            p.1 *= f;
        }
        for i in 1..b.len() {
            if b[i].1 <= b[i - 1].1 {
                b[i].1 = b[i - 1].1 * 1.01;
            }
        }
        (a, b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn identical_curves_have_zero_bd_rate(pts in samples()) {
        let c = curve(&pts);
        prop_assert_eq!(bd_rate(&c, &c).unwrap().value_percent, 0.0);
    }

    #[test]
    fn uniform_rate_scaling_is_exact(pts in samples(), s in 0.5f64..2.0) {
        let bd = bd_rate(&curve(&scaled(&pts, s)), &curve(&pts)).unwrap().value_percent;
        prop_assert!((bd - (s - 1.0) * 100.0).abs() < 1e-9, "{} vs {}", bd, (s - 1.0) * 100.0);
    }

    #[test]
    fn scaling_the_test_curve_composes((a, b) in pair(), s in 0.5f64..2.0) {
        let base = bd_rate(&curve(&a), &curve(&b));
        prop_assume!(base.is_ok());
        let base = base.unwrap().value_percent;
        let bd = bd_rate(&curve(&scaled(&a, s)), &curve(&b)).unwrap().value_percent;
        let expect = ((1.0 + base / 100.0) * s - 1.0) * 100.0;
        prop_assert!((bd - expect).abs() < 1e-9 * (1.0 + expect.abs()));
    }

    #[test]
    fn swapping_curves_inverts_the_rate_ratio((a, b) in pair()) {
        let (ca, cb) = (curve(&a), curve(&b));
        let ab = bd_rate(&ca, &cb);
        prop_assume!(ab.is_ok());
        let ab = ab.unwrap().value_percent;
        let ba = bd_rate(&cb, &ca).unwrap().value_percent;
        let expect = (1.0 / (1.0 + ba / 100.0) - 1.0) * 100.0;
        prop_assert!((ab - expect).abs() < 1e-9 * (1.0 + ab.abs()));
    }

    #[test]
    fn agrees_with_independent_quadrature((a, b) in pair()) {
        let fast = bd_rate(&curve(&a), &curve(&b));
        prop_assume!(fast.is_ok());
        let slow = oracle::bd_rate(&a, &b, 4000);
        prop_assert!((fast.unwrap().value_percent - slow).abs() < 1e-4);
    }

    #[test]
    fn brent_stays_in_bounds_and_repeats(c in 0.1f64..10.0, lo in 0.05f64..1.0, width in 0.5f64..10.0) {
        let bounds = Bounds::new(lo, lo + width).unwrap();
        let f = |x: f64| Ok((x.ln() - c.ln()).powi(2));
        let cfg = OptimizerConfig::default();
        let a = brent_minimize(f, bounds, &cfg).unwrap();
        let b = brent_minimize(f, bounds, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.evaluations.iter().all(|e| bounds.contains(e.point[0])));
        prop_assert!(a.evaluations.iter().all(|e| a.best_cost <= e.cost));
    }

    #[test]
    fn powell_never_worsens_the_start(c1 in 0.3f64..5.0, c2 in 0.3f64..5.0, cross in -0.5f64..0.5) {
        let f = |k: &[f64]| {
            let (u, v) = (k[0].ln() - c1.ln(), k[1].ln() - c2.ln());
            Ok(u * u + v * v + cross * u * v)
        };
        let bounds = [Bounds::new(0.2, 8.0).unwrap(); 2];
        let t = powell_minimize(f, &[1.0, 1.0], &bounds, &OptimizerConfig::default()).unwrap();
        let start = f(&[1.0, 1.0]).unwrap();
        prop_assert!(t.best_cost <= start);
        prop_assert!(t.evaluations.iter().all(|e| e.point.iter().zip(&bounds).all(|(x, b)| b.contains(*x))));
    }

    #[test]
    fn si_ti_ignore_a_luma_offset(
        pixels in prop::collection::vec(0u16..900, 3 * 12 * 8),
        offset in 0u16..100,
    ) {
        let (w, h) = (12, 8);
        let frames: Vec<Vec<f64>> = pixels.chunks(w * h).map(|f| f.iter().map(|&p| p as f64).collect()).collect();
        let shifted: Vec<Vec<f64>> = frames.iter().map(|f| f.iter().map(|p| p + offset as f64).collect()).collect();
        let (a, b) = (si_ti_of_frames(&frames, w, h), si_ti_of_frames(&shifted, w, h));
        prop_assert!((a.si - b.si).abs() < 1e-9 && (a.ti - b.ti).abs() < 1e-9);
    }

    #[test]
    fn histogram_conserves_every_value(values in prop::collection::vec(-30.0f64..5.0, 1..200), width in 0.1f64..5.0) {
        let h = histogram_values(&values, width).unwrap();
        prop_assert_eq!(h.total(), values.len());
        for w in h.bins.windows(2) {
            prop_assert!((w[1].0 - w[0].0 - width).abs() < 1e-9 * (1.0 + w[0].0.abs()));
        }
    }

    #[test]
    fn summaries_ignore_record_order(bds in prop::collection::vec(-20.0f64..2.0, 1..40), seed in any::<u64>()) {
        let modes = [OptimizationMode::AllFrames, OptimizationMode::Kf];
        let groups = ["drama", "sport", "animation"];
        let records: Vec<OptimizationRecord> = bds
            .iter()
            .enumerate()
            .map(|(i, &bd)| record(&format!("c{i}"), groups[i % 3], modes[i % 2], bd))
            .collect();
        let mut shuffled = records.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(
            summary_csv(&summarize(&records).unwrap()).unwrap(),
            summary_csv(&summarize(&shuffled).unwrap()).unwrap()
        );
    }
}

fn record(clip: &str, group: &str, mode: OptimizationMode, bd: f64) -> OptimizationRecord {
    OptimizationRecord {
        clip_id: clip.into(),
        shot_group: group.into(),
        mode,
        search_profile: "proxy".into(),
        final_profile: "proxy".into(),
        final_k: vec![1.0 - bd / 40.0; mode.dims()],
        bd_rate_search: Some(bd),
        bd_rate_final: Some(bd),
        no_overlap: false,
        iterations: 4,
        cost_evals: 11,
        converged: true,
        termination: Some(Termination::Converged),
        bitrate_savings_avg: Some(bd * 1.05),
        bitrate_savings_q39: Some(bd * 0.95),
        msssim_change_db: Some(0.0),
        vmaf_change: Some(0.0),
        wall_clock: PhaseTimes { reference_s: 1.0, search_s: 5.0, final_s: 0.0 },
        failure: None,
    }
}
