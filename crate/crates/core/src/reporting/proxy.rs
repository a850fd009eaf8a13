use super::{csv_string, fmt6, fmt_opt, ReportError};
use crate::multipliers::OptimizationMode;
use crate::orchestrator::OptimizationRecord;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// One profile's result for one clip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyCell {
    /// Reference plus search wall-clock on the proxy, seconds.
    pub time_s: f64,
    pub final_k: Vec<f64>,
    pub bd_rate_final: Option<f64>,
    /// Slowest profile's time over this one's.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyRow {
    pub clip_id: String,
    pub mode: OptimizationMode,
    /// Parallel to [`ProxyTable::profiles`].
    pub cells: Vec<ProxyCell>,
}

/// A (clip, mode) that was not run under every profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyGap {
    pub clip_id: String,
    pub mode: OptimizationMode,
    pub present: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyTable {
    /// Search profiles, sorted by label.
    pub profiles: Vec<String>,
    /// Profile with the largest total time over the paired rows.
    pub slowest: String,
    pub rows: Vec<ProxyRow>,
    /// Mean per-row speedup of each profile.
    pub mean_speedup: Vec<f64>,
    pub gaps: Vec<ProxyGap>,
}

fn proxy_time(r: &OptimizationRecord) -> f64 {
    r.wall_clock.reference_s + r.wall_clock.search_s
}

/// Compares search profiles on the clips every profile has a complete
/// record for. Later records for the same (clip, mode, profile) win.
pub fn proxy_comparison(records: &[OptimizationRecord]) -> Result<ProxyTable, ReportError> {
    let mut by_pair: BTreeMap<(&str, OptimizationMode), BTreeMap<&str, &OptimizationRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_complete()) {
        by_pair
            .entry((r.clip_id.as_str(), r.mode))
            .or_default()
            .insert(r.search_profile.as_str(), r);
    }
    let profiles: Vec<String> = by_pair
        .values()
        .flat_map(|m| m.keys())
        .copied()
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .map(String::from)
        .collect();
    if profiles.len() < 2 {
        return Err(ReportError::MissingPairing(format!(
            "need at least two search profiles, found {}",
            profiles.len()
        )));
    }

    let mut paired = Vec::new();
    let mut gaps = Vec::new();
    for ((clip, mode), per_profile) in &by_pair {
        if per_profile.len() == profiles.len() {
            paired.push((*clip, *mode, profiles.iter().map(|p| per_profile[p.as_str()]).collect::<Vec<_>>()));
        } else {
            gaps.push(ProxyGap {
                clip_id: clip.to_string(),
                mode: *mode,
                present: per_profile.keys().map(|p| p.to_string()).collect(),
            });
        }
    }
    if paired.is_empty() {
        return Err(ReportError::MissingPairing("no clip was run under every profile".into()));
    }

    let totals: Vec<f64> = (0..profiles.len())
        .map(|i| paired.iter().map(|(_, _, rs)| proxy_time(rs[i])).sum())
        .collect();
    let slowest = (0..profiles.len())
        .max_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(b.cmp(&a)))
        .expect("at least two profiles");

    let rows: Vec<ProxyRow> = paired
        .into_iter()
        .map(|(clip, mode, rs)| {
            let slow = proxy_time(rs[slowest]);
            ProxyRow {
                clip_id: clip.to_string(),
                mode,
                cells: rs
                    .iter()
                    .map(|r| ProxyCell {
                        time_s: proxy_time(r),
                        final_k: r.final_k.clone(),
                        bd_rate_final: r.bd_rate_final,
                        speedup: slow / proxy_time(r),
                    })
                    .collect(),
            }
        })
        .collect();
    let mean_speedup = (0..profiles.len())
        .map(|i| rows.iter().map(|r| r.cells[i].speedup).sum::<f64>() / rows.len() as f64)
        .collect();

    Ok(ProxyTable {
        slowest: profiles[slowest].clone(),
        profiles,
        rows,
        mean_speedup,
        gaps,
    })
}

impl ProxyTable {
    /// Long-form rows, one per (clip, mode, profile), then a `# gaps`
    /// section listing unpaired clips.
    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut out = csv_string(|w| {
            w.write_record(["clip_id", "mode", "profile", "proxy_time_s", "k1", "k2", "bdr_final", "speedup"])?;
            for row in &self.rows {
                for (p, c) in self.profiles.iter().zip(&row.cells) {
                    w.write_record([
                        row.clip_id.clone(),
                        row.mode.as_str().to_string(),
                        p.clone(),
                        fmt6(c.time_s),
                        fmt_opt(c.final_k.first().copied()),
                        fmt_opt(c.final_k.get(1).copied()),
                        fmt_opt(c.bd_rate_final),
                        fmt6(c.speedup),
                    ])?;
                }
            }
            for (p, s) in self.profiles.iter().zip(&self.mean_speedup) {
                w.write_record(["MEAN", "", p, "", "", "", "", &fmt6(*s)])?;
            }
            Ok(())
        })?;
        out.push_str("\n# gaps\n");
        out.push_str(&csv_string(|w| {
            w.write_record(["clip_id", "mode", "present_in"])?;
            for g in &self.gaps {
                w.write_record([g.clip_id.as_str(), g.mode.as_str(), &g.present.join(" ")])?;
            }
            Ok(())
        })?);
        Ok(out)
    }
}
