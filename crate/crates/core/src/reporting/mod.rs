//! Summary tables, histograms, contour matrices and proxy comparisons.
//!
//! Every export is a pure function of its input: rows are sorted, floating
//! point sums are taken in a canonical order and numbers are printed with a
//! fixed format, so the same records always produce the same bytes.

mod contour;
mod proxy;

pub use contour::{export_contour, optimizer_path, Contour};
pub use proxy::{proxy_comparison, ProxyCell, ProxyGap, ProxyRow, ProxyTable};

use crate::multipliers::OptimizationMode;
use crate::orchestrator::OptimizationRecord;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no usable records")]
    EmptyInput,
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("contours need a 2-axis grid, got {found} axes")]
    DimensionMismatch { found: usize },
    #[error("grid scan has {found} evaluations, expected {expected}")]
    IncompleteScan { expected: usize, found: usize },
    #[error("proxy comparison: {0}")]
    MissingPairing(String),
    #[error("malformed CSV: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Six significant digits in fixed notation; empty for missing values.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    // Take the exponent after rounding so 9.999996 prints as 10.0000.
    let sci = format!("{:.5e}", x);
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    let decimals = (5 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

/// Mean in a canonical summation order, so the result does not depend on
/// how the inputs were ordered.
fn canonical_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| canonical_mean(&mut v))
}

/// Per (shot group, mode) aggregate of final-profile results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub shot_group: String,
    pub mode: OptimizationMode,
    pub clip_count: usize,
    /// Mean multiplier per axis.
    pub avg_k: Vec<f64>,
    pub avg_bd_rate: f64,
    pub min_bd_rate: f64,
    pub max_bd_rate: f64,
    pub avg_iterations: f64,
    pub avg_cost_evals: f64,
    pub avg_bitrate_savings: Option<f64>,
    pub avg_bitrate_savings_q39: Option<f64>,
    pub avg_msssim_change_db: Option<f64>,
    pub avg_vmaf_change: Option<f64>,
}

/// Groups complete records that have a final BD-rate, ordered by shot
/// group then mode. Failed and non-overlapping records are left out.
pub fn summarize(records: &[OptimizationRecord]) -> Result<Vec<GroupSummary>, ReportError> {
    let mut groups: BTreeMap<(&str, OptimizationMode), Vec<&OptimizationRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_complete() && r.bd_rate_final.is_some()) {
        groups.entry((r.shot_group.as_str(), r.mode)).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(groups
        .into_iter()
        .map(|((group, mode), rs)| {
            let col = |f: fn(&OptimizationRecord) -> Option<f64>| mean_of(rs.iter().map(|r| f(r)));
            let mut bd: Vec<f64> = rs.iter().filter_map(|r| r.bd_rate_final).collect();
            let dims = rs.iter().map(|r| r.final_k.len()).max().unwrap_or(0);
            let avg_k = (0..dims)
                .map(|i| canonical_mean(&mut rs.iter().map(|r| r.final_k.get(i).copied().unwrap_or(1.0)).collect::<Vec<_>>()))
                .collect();
            let min = bd.iter().copied().fold(f64::INFINITY, f64::min);
            let max = bd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            GroupSummary {
                shot_group: group.to_string(),
                mode,
                clip_count: rs.len(),
                avg_k,
                avg_bd_rate: canonical_mean(&mut bd).clamp(min, max),
                min_bd_rate: min,
                max_bd_rate: max,
                avg_iterations: canonical_mean(&mut rs.iter().map(|r| r.iterations as f64).collect::<Vec<_>>()),
                avg_cost_evals: canonical_mean(&mut rs.iter().map(|r| r.cost_evals as f64).collect::<Vec<_>>()),
                avg_bitrate_savings: col(|r| r.bitrate_savings_avg),
                avg_bitrate_savings_q39: col(|r| r.bitrate_savings_q39),
                avg_msssim_change_db: col(|r| r.msssim_change_db),
                avg_vmaf_change: col(|r| r.vmaf_change),
            }
        })
        .collect())
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| ReportError::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The shot-group table as CSV. For 1-D modes `avg_k2` is empty.
pub fn summary_csv(summaries: &[GroupSummary]) -> Result<String, ReportError> {
    csv_string(|w| {
        w.write_record([
            "shot_group",
            "mode",
            "clips",
            "avg_k1",
            "avg_k2",
            "bdr_avg",
            "bdr_min",
            "bdr_max",
            "avg_iterations",
            "avg_cost_evals",
            "avg_bitrate_savings_pct",
            "avg_q39_bitrate_savings_pct",
            "avg_msssim_change_db",
            "avg_vmaf_change",
        ])?;
        for s in summaries {
            w.write_record([
                s.shot_group.clone(),
                s.mode.as_str().to_string(),
                s.clip_count.to_string(),
                fmt_opt(s.avg_k.first().copied()),
                fmt_opt(s.avg_k.get(1).copied()),
                fmt6(s.avg_bd_rate),
                fmt6(s.min_bd_rate),
                fmt6(s.max_bd_rate),
                fmt6(s.avg_iterations),
                fmt6(s.avg_cost_evals),
                fmt_opt(s.avg_bitrate_savings),
                fmt_opt(s.avg_bitrate_savings_q39),
                fmt_opt(s.avg_msssim_change_db),
                fmt_opt(s.avg_vmaf_change),
            ])?;
        }
        Ok(())
    })
}

/// One row per record, in the order given.
pub fn records_csv(records: &[OptimizationRecord]) -> Result<String, ReportError> {
    csv_string(|w| {
        w.write_record([
            "clip_id",
            "shot_group",
            "mode",
            "search_profile",
            "final_profile",
            "k1",
            "k2",
            "bdr_search",
            "bdr_final",
            "no_overlap",
            "iterations",
            "cost_evals",
            "converged",
            "bitrate_savings_pct",
            "q39_bitrate_savings_pct",
            "msssim_change_db",
            "vmaf_change",
            "reference_s",
            "search_s",
            "final_s",
            "failure",
        ])?;
        for r in records {
            let failure = r
                .failure
                .as_ref()
                .map(|f| format!("{:?}: {}", f.phase, f.message).to_lowercase())
                .unwrap_or_default();
            w.write_record([
                r.clip_id.clone(),
                r.shot_group.clone(),
                r.mode.as_str().to_string(),
                r.search_profile.clone(),
                r.final_profile.clone(),
                fmt_opt(r.final_k.first().copied()),
                fmt_opt(r.final_k.get(1).copied()),
                fmt_opt(r.bd_rate_search),
                fmt_opt(r.bd_rate_final),
                r.no_overlap.to_string(),
                r.iterations.to_string(),
                r.cost_evals.to_string(),
                r.converged.to_string(),
                fmt_opt(r.bitrate_savings_avg),
                fmt_opt(r.bitrate_savings_q39),
                fmt_opt(r.msssim_change_db),
                fmt_opt(r.vmaf_change),
                fmt6(r.wall_clock.reference_s),
                fmt6(r.wall_clock.search_s),
                fmt6(r.wall_clock.final_s),
                failure,
            ])?;
        }
        Ok(())
    })
}

pub const DEFAULT_BIN_WIDTH: f64 = 1.0;

/// Counts over half-open bins `[low, low + width)` aligned to 0. Bins run
/// contiguously from the lowest to the highest occupied one, so empty
/// interior bins appear with a zero count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `(bin_low, count)`, ascending.
    pub bins: Vec<(f64, usize)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.1).sum()
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        csv_string(|w| {
            w.write_record(["bin_low", "count"])?;
            for (low, count) in &self.bins {
                w.write_record([fmt6(*low), count.to_string()])?;
            }
            Ok(())
        })
    }
}

pub fn histogram_values(values: &[f64], bin_width: f64) -> Result<Histogram, ReportError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(ReportError::InvalidBinWidth(bin_width));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in finite {
        let mut idx = (v / bin_width).floor() as i64;
        // Guard the division's rounding so v always lies in its bin.
        if v < idx as f64 * bin_width {
            idx -= 1;
        } else if v >= (idx + 1) as f64 * bin_width {
            idx += 1;
        }
        *counts.entry(idx).or_default() += 1;
    }
    let (&first, _) = counts.first_key_value().expect("nonempty");
    let (&last, _) = counts.last_key_value().expect("nonempty");
    let bins = (first..=last)
        .map(|i| (i as f64 * bin_width, counts.get(&i).copied().unwrap_or(0)))
        .collect();
    Ok(Histogram { bin_width, bins })
}

/// Histogram of final BD-rates over the records that have one.
pub fn histogram(records: &[OptimizationRecord], bin_width: f64) -> Result<Histogram, ReportError> {
    let values: Vec<f64> = records.iter().filter_map(|r| r.bd_rate_final).collect();
    histogram_values(&values, bin_width)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::optim::Termination;
    use crate::orchestrator::PhaseTimes;

    pub(crate) fn rec(clip: &str, group: &str, mode: OptimizationMode, bd: f64) -> OptimizationRecord {
        OptimizationRecord {
            clip_id: clip.into(),
            shot_group: group.into(),
            mode,
            search_profile: "1080p-S6".into(),
            final_profile: "4K-S2".into(),
            final_k: vec![1.0 - bd / 10.0; mode.dims()],
            bd_rate_search: Some(bd),
            bd_rate_final: Some(bd),
            no_overlap: false,
            iterations: 3,
            cost_evals: 12,
            converged: true,
            termination: Some(Termination::Converged),
            bitrate_savings_avg: Some(bd * 1.1),
            bitrate_savings_q39: Some(bd * 0.9),
            msssim_change_db: Some(0.01),
            vmaf_change: Some(-0.1),
            wall_clock: PhaseTimes {
                reference_s: 1.0,
                search_s: 10.0,
                final_s: 2.0,
            },
            failure: None,
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(-1.63), "-1.63000");
        assert_eq!(fmt6(12005.0), "12005.0");
        assert_eq!(fmt6(0.000123456789), "0.000123457");
        assert_eq!(fmt6(9.9999996), "10.0000");
        assert_eq!(fmt6(1234567.0), "1234567");
        assert_eq!(fmt6(0.0), "0.00000");
        assert_eq!(fmt6(f64::NAN), "");
    }

    #[test]
    fn group_statistics() {
        let rs = [
            rec("a", "g", OptimizationMode::Kf, -2.0),
            rec("b", "g", OptimizationMode::Kf, -4.0),
        ];
        let s = summarize(&rs).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].avg_bd_rate, s[0].min_bd_rate, s[0].max_bd_rate), (-3.0, -4.0, -2.0));
        assert_eq!(s[0].clip_count, 2);
        approx::assert_abs_diff_eq!(s[0].avg_k[0], 1.3, epsilon = 1e-12);

        let one = summarize(&rs[..1]).unwrap();
        assert_eq!((one[0].avg_bd_rate, one[0].min_bd_rate, one[0].max_bd_rate), (-2.0, -2.0, -2.0));
    }

    #[test]
    fn grouping_and_order() {
        use OptimizationMode::*;
        let rs = [
            rec("a", "Sol", PowellKfXGfArf, -1.0),
            rec("b", "Meridian", Kf, -2.0),
            rec("a", "Sol", Kf, -3.0),
            rec("b", "Meridian", PowellKfXGfArf, -4.0),
        ];
        let keys: Vec<_> = summarize(&rs)
            .unwrap()
            .into_iter()
            .map(|s| (s.shot_group, s.mode))
            .collect();
        assert_eq!(
            keys,
            [
                ("Meridian".to_string(), Kf),
                ("Meridian".to_string(), PowellKfXGfArf),
                ("Sol".to_string(), Kf),
                ("Sol".to_string(), PowellKfXGfArf)
            ]
        );
    }

    #[test]
    fn failed_records_are_left_out() {
        let mut bad = rec("a", "g", OptimizationMode::Kf, -2.0);
        bad.failure = Some(crate::orchestrator::PhaseFailure {
            phase: crate::orchestrator::Phase::Final,
            message: "boom".into(),
        });
        assert!(matches!(summarize(&[bad.clone()]), Err(ReportError::EmptyInput)));
        let s = summarize(&[bad, rec("b", "g", OptimizationMode::Kf, -1.0)]).unwrap();
        assert_eq!(s[0].clip_count, 1);
        assert!(matches!(summarize(&[]), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn summary_csv_layout() {
        let s = summarize(&[rec("a", "g", OptimizationMode::PowellKfXGfArf, -2.5)]).unwrap();
        let text = summary_csv(&s).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("g,POWELL_KF_X_GFARF,1,1.25000,1.25000,-2.50000,"), "{}", lines[1]);
    }

    #[test]
    fn histogram_bins() {
        let h = histogram_values(&[-0.5, -0.4, 0.2], 1.0).unwrap();
        assert_eq!(h.bins, [(-1.0, 2), (0.0, 1)]);
        assert_eq!(h.to_csv().unwrap(), "bin_low,count\n-1.00000,2\n0.00000,1\n");

        let same = histogram_values(&[-1.3; 7], 0.5).unwrap();
        assert_eq!(same.bins, [(-1.5, 7)]);

        let gap = histogram_values(&[-3.0, 0.0], 1.0).unwrap();
        assert_eq!(gap.bins, [(-3.0, 1), (-2.0, 0), (-1.0, 0), (0.0, 1)]);

        assert!(matches!(histogram_values(&[1.0], 0.0), Err(ReportError::InvalidBinWidth(_))));
        assert!(matches!(histogram_values(&[], 1.0), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn bin_edges_are_half_open() {
        let h = histogram_values(&[0.3, 0.6, 0.9], 0.3).unwrap();
        for (low, count) in &h.bins {
            let inside = [0.3, 0.6, 0.9].iter().filter(|v| **v >= *low && **v < low + 0.3).count();
            assert_eq!(*count, inside, "bin {low}");
        }
    }
}
