//! Rate-distortion curves and the Bjontegaard delta-rate cost.
//!
//! Curves are interpolated in the (quality, log10 bitrate) plane with a
//! monotone piecewise cubic, and the delta rate is the mean log-rate gap
//! over the shared quality interval, integrated exactly segment by segment.

mod pchip;

pub use pchip::Pchip;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Points whose qualities differ by less than this are treated as one.
pub const DUPLICATE_QUALITY_EPS: f64 = 1e-9;

/// Default minimum ratio of shared to combined quality range.
pub const DEFAULT_MIN_OVERLAP_FRACTION: f64 = 0.5;

/// Minimum number of points a curve must keep.
pub const MIN_CURVE_POINTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdRateError {
    #[error("curve needs at least {MIN_CURVE_POINTS} points, found {found}")]
    TooFewPoints { found: usize },
    #[error("curve is not monotone: {0}")]
    NonMonotone(String),
    #[error("points mix quality metrics ({0} and {1})")]
    MixedMetrics(Metric, Metric),
    #[error("invalid RD point: {0}")]
    InvalidPoint(String),
    #[error("quality {q} outside curve range [{min}, {max}]")]
    OutOfRange { q: f64, min: f64, max: f64 },
    #[error("quality ranges overlap over {fraction:.3} of their union (minimum {required:.3})")]
    NoOverlap { fraction: f64, required: f64 },
    #[error("value {0} outside the MS-SSIM domain [0, 1)")]
    Domain(f64),
}

/// Quality metric a curve is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MsSsim,
    Vmaf,
    Psnr,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::MsSsim => "ms_ssim",
            Metric::Vmaf => "vmaf",
            Metric::Psnr => "psnr",
        })
    }
}

/// One encode: the quantizer it ran at, the bitrate it cost and the
/// quality it reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub qp: i32,
    /// Kilobits per second.
    pub bitrate: f64,
    pub quality: f64,
    pub metric: Metric,
}

impl RdPoint {
    pub fn new(qp: i32, bitrate: f64, quality: f64, metric: Metric) -> Self {
        RdPoint {
            qp,
            bitrate,
            quality,
            metric,
        }
    }

    fn validate(&self) -> Result<(), BdRateError> {
        if !(self.bitrate > 0.0) || !self.bitrate.is_finite() {
            return Err(BdRateError::InvalidPoint(format!(
                "bitrate {} at qp {} is not positive",
                self.bitrate, self.qp
            )));
        }
        if !self.quality.is_finite() {
            return Err(BdRateError::InvalidPoint(format!(
                "quality at qp {} is not finite",
                self.qp
            )));
        }
        if self.metric == Metric::MsSsim && !(self.quality > 0.0 && self.quality <= 1.0) {
            return Err(BdRateError::InvalidPoint(format!(
                "MS-SSIM {} at qp {} outside (0, 1]",
                self.quality, self.qp
            )));
        }
        Ok(())
    }
}

/// A validated RD curve, sorted by ascending quality.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct RdCurve {
    clip_id: String,
    metric: Metric,
    points: Vec<RdPoint>,
    #[serde(skip)]
    interp: Option<Pchip>,
}

#[derive(Deserialize)]
struct RawCurve {
    clip_id: String,
    points: Vec<RdPoint>,
}

impl TryFrom<RawCurve> for RdCurve {
    type Error = BdRateError;

    fn try_from(raw: RawCurve) -> Result<Self, Self::Error> {
        build_curve(raw.clip_id, raw.points)
    }
}

impl PartialEq for RdCurve {
    fn eq(&self, other: &Self) -> bool {
        self.clip_id == other.clip_id && self.metric == other.metric && self.points == other.points
    }
}

impl RdCurve {
    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn min_quality(&self) -> f64 {
        self.points[0].quality
    }

    pub fn max_quality(&self) -> f64 {
        self.points[self.points.len() - 1].quality
    }

    /// The point measured at `qp`, if any survived de-duplication.
    pub fn at_qp(&self, qp: i32) -> Option<&RdPoint> {
        self.points.iter().find(|p| p.qp == qp)
    }

    fn interpolant(&self) -> &Pchip {
        self.interp.as_ref().expect("curves are always built through build_curve")
    }
}

/// Validates samples and assembles them into a curve.
///
/// Samples are sorted by quality; qualities closer than
/// [`DUPLICATE_QUALITY_EPS`] collapse to the cheaper point. Bitrate must then
/// rise strictly with quality and fall strictly with qp.
pub fn build_curve(
    clip_id: impl Into<String>,
    samples: Vec<RdPoint>,
) -> Result<RdCurve, BdRateError> {
    if samples.len() < MIN_CURVE_POINTS {
        return Err(BdRateError::TooFewPoints {
            found: samples.len(),
        });
    }
    let metric = samples[0].metric;
    for p in &samples {
        if p.metric != metric {
            return Err(BdRateError::MixedMetrics(metric, p.metric));
        }
        p.validate()?;
    }

    let mut sorted = samples;
    sorted.sort_by(|a, b| a.quality.total_cmp(&b.quality).then(a.bitrate.total_cmp(&b.bitrate)));

    let mut points: Vec<RdPoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        match points.last_mut() {
            Some(last) if p.quality - last.quality < DUPLICATE_QUALITY_EPS => {
                if p.bitrate < last.bitrate {
                    *last = p;
                }
            }
            _ => points.push(p),
        }
    }
    if points.len() < MIN_CURVE_POINTS {
        return Err(BdRateError::TooFewPoints {
            found: points.len(),
        });
    }

    for w in points.windows(2) {
        if w[1].bitrate <= w[0].bitrate {
            return Err(BdRateError::NonMonotone(format!(
                "bitrate {} at quality {} does not exceed {} at quality {}",
                w[1].bitrate, w[1].quality, w[0].bitrate, w[0].quality
            )));
        }
    }
    let mut by_qp: Vec<&RdPoint> = points.iter().collect();
    by_qp.sort_by_key(|p| p.qp);
    for w in by_qp.windows(2) {
        if w[1].qp > w[0].qp && w[1].bitrate >= w[0].bitrate {
            return Err(BdRateError::NonMonotone(format!(
                "bitrate {} at qp {} is not below {} at qp {}",
                w[1].bitrate, w[1].qp, w[0].bitrate, w[0].qp
            )));
        }
    }

    let xs = points.iter().map(|p| p.quality).collect();
    let ys = points.iter().map(|p| p.bitrate.log10()).collect();
    Ok(RdCurve {
        clip_id: clip_id.into(),
        metric,
        points,
        interp: Some(Pchip::new(xs, ys)),
    })
}

/// log10 bitrate of `curve` at quality `q`.
pub fn interpolate_log_rate(curve: &RdCurve, q: f64) -> Result<f64, BdRateError> {
    let (min, max) = (curve.min_quality(), curve.max_quality());
    if !(q >= min && q <= max) {
        return Err(BdRateError::OutOfRange { q, min, max });
    }
    Ok(curve.interpolant().eval(q))
}

/// Outcome of a delta-rate comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdRateResult {
    /// Mean bitrate difference in percent; negative means the test curve
    /// needs fewer bits.
    pub value_percent: f64,
    pub overlap_low: f64,
    pub overlap_high: f64,
    /// Shared quality span over the combined span.
    pub overlap_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdRateOptions {
    pub min_overlap_fraction: f64,
}

impl Default for BdRateOptions {
    fn default() -> Self {
        BdRateOptions {
            min_overlap_fraction: DEFAULT_MIN_OVERLAP_FRACTION,
        }
    }
}

/// Delta rate of `test` against `reference` with the default overlap rule.
pub fn bd_rate(test: &RdCurve, reference: &RdCurve) -> Result<BdRateResult, BdRateError> {
    bd_rate_with(test, reference, BdRateOptions::default())
}

pub fn bd_rate_with(
    test: &RdCurve,
    reference: &RdCurve,
    opts: BdRateOptions,
) -> Result<BdRateResult, BdRateError> {
    if test.metric != reference.metric {
        return Err(BdRateError::MixedMetrics(test.metric, reference.metric));
    }
    let low = test.min_quality().max(reference.min_quality());
    let high = test.max_quality().min(reference.max_quality());
    let union = test.max_quality().max(reference.max_quality())
        - test.min_quality().min(reference.min_quality());
    let fraction = if high > low { (high - low) / union } else { 0.0 };
    if !(high > low) || fraction < opts.min_overlap_fraction {
        return Err(BdRateError::NoOverlap {
            fraction,
            required: opts.min_overlap_fraction,
        });
    }

    let test_area = test.interpolant().integrate(low, high);
    let ref_area = reference.interpolant().integrate(low, high);
    let mean_log_gap = (test_area - ref_area) / (high - low);
    Ok(BdRateResult {
        value_percent: (10f64.powf(mean_log_gap) - 1.0) * 100.0,
        overlap_low: low,
        overlap_high: high,
        overlap_fraction: fraction,
    })
}

/// Maps MS-SSIM to decibels as `-10 log10(1 - s)`.
pub fn msssim_to_db(s: f64) -> Result<f64, BdRateError> {
    if !(0.0..1.0).contains(&s) {
        return Err(BdRateError::Domain(s));
    }
    Ok(-10.0 * (1.0 - s).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(i32, f64, f64)]) -> RdCurve {
        let samples = points
            .iter()
            .map(|&(qp, r, q)| RdPoint::new(qp, r, q, Metric::MsSsim))
            .collect();
        build_curve("c", samples).unwrap()
    }

    fn five_anchor_curve() -> RdCurve {
        curve(&[
            (27, 8000.0, 0.990),
            (39, 3500.0, 0.978),
            (49, 1600.0, 0.961),
            (59, 700.0, 0.935),
            (63, 480.0, 0.920),
        ])
    }

    #[test]
    fn five_anchor_curve_sorted_by_quality() {
        let c = five_anchor_curve();
        assert_eq!(c.points().len(), 5);
        let qps: Vec<i32> = c.points().iter().map(|p| p.qp).collect();
        assert_eq!(qps, vec![63, 59, 49, 39, 27]);
    }

    #[test]
    fn too_few_points() {
        let samples = (0..3)
            .map(|i| RdPoint::new(30 + i, 100.0 - i as f64, 0.9 - 0.01 * i as f64, Metric::MsSsim))
            .collect();
        assert_eq!(
            build_curve("c", samples),
            Err(BdRateError::TooFewPoints { found: 3 })
        );
    }

    #[test]
    fn duplicate_quality_keeps_cheaper_point() {
        let c = curve(&[
            (27, 5000.0, 0.99),
            (38, 1001.0, 0.97),
            (39, 1000.0, 0.97),
            (49, 500.0, 0.95),
            (59, 200.0, 0.93),
        ]);
        assert_eq!(c.points().len(), 4);
        let dup = c.points().iter().find(|p| p.quality == 0.97).unwrap();
        assert_eq!(dup.bitrate, 1000.0);
        assert_eq!(dup.qp, 39);
    }

    #[test]
    fn non_monotone_rejected() {
        let samples = vec![
            RdPoint::new(27, 5000.0, 0.99, Metric::MsSsim),
            RdPoint::new(39, 6000.0, 0.97, Metric::MsSsim),
            RdPoint::new(49, 500.0, 0.95, Metric::MsSsim),
            RdPoint::new(59, 200.0, 0.93, Metric::MsSsim),
        ];
        assert!(matches!(
            build_curve("c", samples),
            Err(BdRateError::NonMonotone(_))
        ));
    }

    #[test]
    fn mixed_metrics_rejected() {
        let mut samples: Vec<RdPoint> = five_anchor_curve().points().to_vec();
        samples[2].metric = Metric::Vmaf;
        assert!(matches!(
            build_curve("c", samples),
            Err(BdRateError::MixedMetrics(..))
        ));
    }

    #[test]
    fn invalid_bitrate_and_msssim_rejected() {
        let mut samples: Vec<RdPoint> = five_anchor_curve().points().to_vec();
        samples[0].bitrate = 0.0;
        assert!(matches!(
            build_curve("c", samples),
            Err(BdRateError::InvalidPoint(_))
        ));
        let mut samples: Vec<RdPoint> = five_anchor_curve().points().to_vec();
        samples[0].quality = 1.2;
        assert!(matches!(
            build_curve("c", samples),
            Err(BdRateError::InvalidPoint(_))
        ));
    }

    #[test]
    fn knot_exactness_and_range() {
        let c = five_anchor_curve();
        for p in c.points() {
            assert_eq!(interpolate_log_rate(&c, p.quality).unwrap(), p.bitrate.log10());
        }
        assert!(matches!(
            interpolate_log_rate(&c, 0.5),
            Err(BdRateError::OutOfRange { .. })
        ));
    }

    #[test]
    fn affine_midpoint() {
        let c = curve(&[
            (27, 10f64.powf(4.0), 0.99),
            (39, 10f64.powf(3.6), 0.97),
            (49, 10f64.powf(3.2), 0.95),
            (59, 10f64.powf(2.8), 0.93),
        ]);
        let v = interpolate_log_rate(&c, 0.96).unwrap();
        assert!((v - 3.4).abs() < 1e-12);
    }

    #[test]
    fn identical_curves_give_zero() {
        let c = five_anchor_curve();
        assert_eq!(bd_rate(&c, &c).unwrap().value_percent, 0.0);
    }

    #[test]
    fn ten_percent_more_bits_is_plus_ten() {
        let reference = five_anchor_curve();
        let scaled = build_curve(
            "c",
            reference
                .points()
                .iter()
                .map(|p| RdPoint { bitrate: p.bitrate * 1.10, ..*p })
                .collect(),
        )
        .unwrap();
        let r = bd_rate(&scaled, &reference).unwrap();
        assert!((r.value_percent - 10.0).abs() < 1e-9, "{}", r.value_percent);
        assert_eq!(r.overlap_fraction, 1.0);
    }

    #[test]
    fn disjoint_ranges_are_no_overlap() {
        let a = five_anchor_curve();
        let b = curve(&[
            (27, 8000.0, 0.999),
            (39, 3500.0, 0.998),
            (49, 1600.0, 0.997),
            (59, 700.0, 0.996),
        ]);
        assert!(matches!(bd_rate(&a, &b), Err(BdRateError::NoOverlap { .. })));
    }

    #[test]
    fn partial_overlap_below_threshold() {
        let a = curve(&[
            (27, 8000.0, 0.99),
            (39, 3500.0, 0.98),
            (49, 1600.0, 0.97),
            (59, 700.0, 0.96),
        ]);
        let b = curve(&[
            (27, 8000.0, 0.975),
            (39, 3500.0, 0.965),
            (49, 1600.0, 0.955),
            (59, 700.0, 0.945),
        ]);
        // shared [0.96, 0.975] over union [0.945, 0.99]: one third
        let err = bd_rate(&a, &b).unwrap_err();
        match err {
            BdRateError::NoOverlap { fraction, .. } => assert!((fraction - 1.0 / 3.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        let lenient = BdRateOptions {
            min_overlap_fraction: 0.25,
        };
        assert!(bd_rate_with(&a, &b, lenient).is_ok());
    }

    #[test]
    fn msssim_db_mapping() {
        assert!((msssim_to_db(0.9).unwrap() - 10.0).abs() < 1e-12);
        assert!((msssim_to_db(0.99).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(msssim_to_db(0.0).unwrap(), 0.0);
        assert_eq!(msssim_to_db(1.0), Err(BdRateError::Domain(1.0)));
        assert!(msssim_to_db(-0.1).is_err());
    }

    #[test]
    fn curve_json_round_trip_revalidates() {
        let c = five_anchor_curve();
        let json = serde_json::to_string(&c).unwrap();
        let back: RdCurve = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(bd_rate(&back, &c).unwrap().value_percent, 0.0);
        let bad = r#"{"clip_id":"x","points":[]}"#;
        assert!(serde_json::from_str::<RdCurve>(bad).is_err());
    }
}
