//! Closed-form rate/quality model standing in for a real encoder.
//!
//! Quality falls linearly with qp and log10-bitrate falls linearly with qp,
//! plus a multiplier penalty `g(k)` that is a quadratic in `ln k` centred on
//! `k_star`. Because `g` does not depend on qp, the BD-rate between any two
//! multiplier settings is a pure log-offset and has a closed form.

use crate::bdrate::{Metric, RdPoint};
use crate::multipliers::MultiplierAssignment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Legal qp range of the synthetic backend.
pub const QP_RANGE: (i32, i32) = (1, 63);
/// Largest allowed noise amplitude, as a fraction of log10-bitrate.
pub const MAX_NOISE_AMPLITUDE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdModelError {
    #[error("invalid synthetic model: {0}")]
    InvalidModel(String),
    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("model has {model} multiplier dimension(s) but mode {mode} supplies {found}")]
    DimensionMismatch {
        model: usize,
        mode: String,
        found: usize,
    },
    #[error("invalid lambda model: {0}")]
    InvalidLambdaModel(String),
}

fn default_noise_amplitude() -> f64 {
    MAX_NOISE_AMPLITUDE
}

/// One synthetic clip. Built through [`SyntheticClipModel::new`] or serde,
/// both of which validate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct SyntheticClipModel {
    pub clip_id: String,
    pub metric: Metric,
    pub q_max: f64,
    pub alpha: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub k_star: Vec<f64>,
    pub gamma: Vec<f64>,
    pub cross: f64,
    /// Enables a deterministic perturbation of log-rate when set.
    pub noise_seed: Option<u64>,
    pub noise_amplitude: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    clip_id: String,
    #[serde(default = "default_metric")]
    metric: Metric,
    q_max: f64,
    alpha: f64,
    beta0: f64,
    beta1: f64,
    k_star: Vec<f64>,
    gamma: Vec<f64>,
    #[serde(default)]
    cross: f64,
    #[serde(default)]
    noise_seed: Option<u64>,
    #[serde(default = "default_noise_amplitude")]
    noise_amplitude: f64,
}

fn default_metric() -> Metric {
    Metric::MsSsim
}

impl TryFrom<RawModel> for SyntheticClipModel {
    type Error = RdModelError;

    fn try_from(r: RawModel) -> Result<Self, Self::Error> {
        let m = SyntheticClipModel {
            clip_id: r.clip_id,
            metric: r.metric,
            q_max: r.q_max,
            alpha: r.alpha,
            beta0: r.beta0,
            beta1: r.beta1,
            k_star: r.k_star,
            gamma: r.gamma,
            cross: r.cross,
            noise_seed: r.noise_seed,
            noise_amplitude: r.noise_amplitude,
        };
        m.validate()?;
        Ok(m)
    }
}

impl SyntheticClipModel {
    /// Noise-free MS-SSIM model.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        clip_id: impl Into<String>,
        q_max: f64,
        alpha: f64,
        beta0: f64,
        beta1: f64,
        k_star: Vec<f64>,
        gamma: Vec<f64>,
        cross: f64,
    ) -> Result<Self, RdModelError> {
        let m = SyntheticClipModel {
            clip_id: clip_id.into(),
            metric: Metric::MsSsim,
            q_max,
            alpha,
            beta0,
            beta1,
            k_star,
            gamma,
            cross,
            noise_seed: None,
            noise_amplitude: MAX_NOISE_AMPLITUDE,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_noise(mut self, seed: u64, amplitude: f64) -> Result<Self, RdModelError> {
        self.noise_seed = Some(seed);
        self.noise_amplitude = amplitude;
        self.validate()?;
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.k_star.len()
    }

    fn validate(&self) -> Result<(), RdModelError> {
        let bad = |s: String| Err(RdModelError::InvalidModel(s));
        let finite = [self.q_max, self.alpha, self.beta0, self.beta1, self.cross];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        if !(self.alpha > 0.0) || !(self.beta1 > 0.0) {
            return bad("alpha and beta1 must be positive".into());
        }
        let n = self.k_star.len();
        if !(1..=2).contains(&n) || self.gamma.len() != n {
            return bad(format!(
                "k_star and gamma must both have length 1 or 2 (got {} and {})",
                n,
                self.gamma.len()
            ));
        }
        if self.k_star.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return bad("k_star components must be positive".into());
        }
        if self.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return bad("gamma components must be positive".into());
        }
        if n == 1 && self.cross != 0.0 {
            return bad("cross term requires two dimensions".into());
        }
        if n == 2 && 4.0 * self.gamma[0] * self.gamma[1] <= self.cross * self.cross {
            return bad("quadratic form is not positive-definite".into());
        }
        if !(0.0..=MAX_NOISE_AMPLITUDE).contains(&self.noise_amplitude) {
            return Err(RdModelError::OutOfRange {
                what: "noise_amplitude",
                value: self.noise_amplitude,
                min: 0.0,
                max: MAX_NOISE_AMPLITUDE,
            });
        }
        let (lo, hi) = match self.metric {
            Metric::MsSsim => (0.0, 1.0),
            Metric::Vmaf => (0.0, 100.0),
            Metric::Psnr => (0.0, f64::INFINITY),
        };
        let best = self.q_max - self.alpha * QP_RANGE.0 as f64;
        let worst = self.q_max - self.alpha * QP_RANGE.1 as f64;
        if !(worst > lo) || best > hi {
            return bad(format!(
                "quality over qp {}..={} spans [{worst}, {best}], outside ({lo}, {hi}]",
                QP_RANGE.0, QP_RANGE.1
            ));
        }
        Ok(())
    }

    /// Multiplier penalty in log10-rate units; zero at `k_star`.
    pub fn penalty(&self, k: &[f64]) -> f64 {
        let d: Vec<f64> = k
            .iter()
            .zip(&self.k_star)
            .map(|(k, ks)| k.ln() - ks.ln())
            .collect();
        let mut g: f64 = d.iter().zip(&self.gamma).map(|(d, g)| g * d * d).sum();
        if d.len() == 2 {
            g += self.cross * d[0] * d[1];
        }
        g
    }

    pub fn quality_at(&self, qp: i32) -> f64 {
        self.q_max - self.alpha * qp as f64
    }

    /// Multiplier vector in this model's own dimensionality. A 1-D model
    /// needs a 1-D mode; a 2-D model reads the routed (KF, GF/ARF) pair, so
    /// every mode works against it.
    pub fn multipliers_for(&self, k: &MultiplierAssignment) -> Result<Vec<f64>, RdModelError> {
        match (self.dims(), k.values().len()) {
            (1, 1) => Ok(k.values().to_vec()),
            (2, _) => Ok(k.routed().effective_pair().to_vec()),
            (model, found) => Err(RdModelError::DimensionMismatch {
                model,
                mode: k.mode().to_string(),
                found,
            }),
        }
    }

    fn noise(&self, qp: i32, k: &[f64], log_rate: f64) -> f64 {
        let Some(seed) = self.noise_seed else {
            return 0.0;
        };
        if self.noise_amplitude == 0.0 {
            return 0.0;
        }
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(qp.to_le_bytes());
        for v in k {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        let u: f64 = ChaCha8Rng::from_seed(bytes).gen_range(-1.0..=1.0);
        u * self.noise_amplitude * log_rate.abs()
    }
}

/// One operating point of the synthetic encoder. Pure: equal inputs give
/// bit-identical outputs.
pub fn synthetic_encode(
    model: &SyntheticClipModel,
    qp: i32,
    k: &MultiplierAssignment,
) -> Result<RdPoint, RdModelError> {
    if !(QP_RANGE.0..=QP_RANGE.1).contains(&qp) {
        return Err(RdModelError::OutOfRange {
            what: "qp",
            value: qp as f64,
            min: QP_RANGE.0 as f64,
            max: QP_RANGE.1 as f64,
        });
    }
    let kv = model.multipliers_for(k)?;
    let base = model.beta0 - model.beta1 * qp as f64;
    let log_rate = base + model.penalty(&kv);
    let log_rate = log_rate + model.noise(qp, &kv, log_rate);
    Ok(RdPoint {
        qp,
        bitrate: 10f64.powf(log_rate),
        quality: model.quality_at(qp),
        metric: model.metric,
    })
}

/// BD-rate of the optimum against the all-ones baseline, in percent.
pub fn analytic_optimal_bdrate(model: &SyntheticClipModel) -> f64 {
    let ones = vec![1.0; model.dims()];
    (10f64.powf(-model.penalty(&ones)) - 1.0) * 100.0
}

/// Maps a quantizer index to its DC dequantization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DcTable {
    /// `q_dc = intercept + slope * q_i`. The default (4, 0.168) is a smooth
    /// placeholder, not libaom's lookup table.
    Affine { intercept: f64, slope: f64 },
    /// 256 explicit entries, nondecreasing.
    Lookup { values: Vec<f64> },
}

impl Default for DcTable {
    fn default() -> Self {
        DcTable::Affine {
            intercept: 4.0,
            slope: 0.168,
        }
    }
}

impl DcTable {
    pub fn q_dc(&self, q_index: u8) -> f64 {
        match self {
            DcTable::Affine { intercept, slope } => intercept + slope * q_index as f64,
            DcTable::Lookup { values } => values[q_index as usize],
        }
    }

    fn validate(&self) -> Result<(), RdModelError> {
        let values: Vec<f64> = match self {
            DcTable::Affine { .. } => (0..=255u8).map(|q| self.q_dc(q)).collect(),
            DcTable::Lookup { values } => {
                if values.len() != 256 {
                    return Err(RdModelError::InvalidLambdaModel(format!(
                        "lookup table needs 256 entries, has {}",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(RdModelError::InvalidLambdaModel("q_dc must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(RdModelError::InvalidLambdaModel("dc table must be nondecreasing".into()));
        }
        Ok(())
    }
}

/// The encoder's default Lagrangian as a function of quantizer index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLambda")]
pub struct LambdaModel {
    a: f64,
    dc_table: DcTable,
}

#[derive(Deserialize)]
struct RawLambda {
    a: f64,
    #[serde(default)]
    dc_table: DcTable,
}

impl TryFrom<RawLambda> for LambdaModel {
    type Error = RdModelError;

    fn try_from(r: RawLambda) -> Result<Self, Self::Error> {
        LambdaModel::new(r.a, r.dc_table)
    }
}

impl LambdaModel {
    pub const A_RANGE: (f64, f64) = (3.2, 3.3);

    pub fn new(a: f64, dc_table: DcTable) -> Result<Self, RdModelError> {
        if !(Self::A_RANGE.0..=Self::A_RANGE.1).contains(&a) {
            return Err(RdModelError::OutOfRange {
                what: "A",
                value: a,
                min: Self::A_RANGE.0,
                max: Self::A_RANGE.1,
            });
        }
        dc_table.validate()?;
        Ok(LambdaModel { a, dc_table })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn dc_table(&self) -> &DcTable {
        &self.dc_table
    }
}

/// `q_dc^2 * (A + 0.0035 * q_i)`.
pub fn default_lambda(model: &LambdaModel, q_index: u32) -> Result<f64, RdModelError> {
    let q = u8::try_from(q_index).map_err(|_| RdModelError::OutOfRange {
        what: "q_i",
        value: q_index as f64,
        min: 0.0,
        max: 255.0,
    })?;
    let dc = model.dc_table.q_dc(q);
    Ok(dc * dc * (model.a + 0.0035 * q_index as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdrate::{bd_rate, build_curve};
    use crate::multipliers::OptimizationMode;
    use std::f64::consts::E;

    fn one_d(gamma: f64, k_star: f64) -> SyntheticClipModel {
        SyntheticClipModel::new("c", 0.999, 0.004, 5.0, 0.04, vec![k_star], vec![gamma], 0.0)
            .unwrap()
    }

    fn assign(mode: OptimizationMode, v: &[f64]) -> MultiplierAssignment {
        MultiplierAssignment::new(mode, v.to_vec()).unwrap()
    }

    fn curve(m: &SyntheticClipModel, k: &MultiplierAssignment) -> crate::bdrate::RdCurve {
        let pts = [22, 27, 32, 39, 46]
            .iter()
            .map(|&qp| synthetic_encode(m, qp, k).unwrap())
            .collect();
        build_curve(&m.clip_id, pts).unwrap()
    }

    #[test]
    fn lambda_examples() {
        let flat0 = LambdaModel::new(3.2, DcTable::default()).unwrap();
        assert!((default_lambda(&flat0, 0).unwrap() - 51.2).abs() < 1e-12);
        let m = LambdaModel::new(3.3, DcTable::default()).unwrap();
        // q_dc = 4 + 16.8 = 20.8; 20.8^2 * (3.3 + 0.35)
        assert!((default_lambda(&m, 100).unwrap() - 1579.136).abs() < 1e-9);
        for q in 0..255 {
            assert!(default_lambda(&m, q + 1).unwrap() > default_lambda(&m, q).unwrap());
        }
        assert!(default_lambda(&m, 256).is_err());
    }

    #[test]
    fn lambda_model_guards() {
        assert!(LambdaModel::new(3.4, DcTable::default()).is_err());
        let mut values: Vec<f64> = (0..256).map(|i| 4.0 + i as f64).collect();
        assert!(LambdaModel::new(3.25, DcTable::Lookup { values: values.clone() }).is_ok());
        values[10] = 1.0;
        assert!(LambdaModel::new(3.25, DcTable::Lookup { values }).is_err());
        assert!(LambdaModel::new(3.25, DcTable::Lookup { values: vec![1.0; 3] }).is_err());
    }

    #[test]
    fn analytic_optimum_examples() {
        assert_eq!(analytic_optimal_bdrate(&one_d(0.01, 1.0)), 0.0);
        let m = one_d(0.01, E);
        assert!((analytic_optimal_bdrate(&m) - -2.276277904418933).abs() < 1e-9);
        let m2 = SyntheticClipModel::new("c", 0.999, 0.004, 5.0, 0.04, vec![E, E], vec![0.01, 0.02], 0.0)
            .unwrap();
        assert!((analytic_optimal_bdrate(&m2) - -6.674569920300899).abs() < 1e-9);
    }

    #[test]
    fn optimum_reproduces_baseline() {
        let m = one_d(0.02, 2.5);
        let at_opt = synthetic_encode(&m, 30, &assign(OptimizationMode::Kf, &[2.5])).unwrap();
        assert_eq!(at_opt.bitrate, 10f64.powf(5.0 - 0.04 * 30.0));
        let ones = one_d(0.02, 1.0);
        let base = curve(&ones, &MultiplierAssignment::identity(OptimizationMode::Kf));
        assert_eq!(bd_rate(&base, &base).unwrap().value_percent, 0.0);
    }

    #[test]
    fn constant_offset_reaches_bdrate_exactly() {
        let m = SyntheticClipModel::new("c", 0.999, 0.004, 5.0, 0.04, vec![1.0, 1.0], vec![0.01, 0.02], 0.0)
            .unwrap();
        let test = curve(&m, &assign(OptimizationMode::PowellKfXGfArf, &[E, 1.0]));
        let base = curve(&m, &MultiplierAssignment::identity(OptimizationMode::PowellKfXGfArf));
        let bd = bd_rate(&test, &base).unwrap().value_percent;
        assert!((bd - 2.32929922807541).abs() < 1e-9, "{bd}");
    }

    #[test]
    fn routing_into_two_dimensional_model() {
        let m = SyntheticClipModel::new("c", 0.999, 0.004, 5.0, 0.04, vec![2.0, 3.0], vec![0.01, 0.02], 0.005)
            .unwrap();
        let v = m.multipliers_for(&assign(OptimizationMode::KfGfArf, &[1.5])).unwrap();
        assert_eq!(v, vec![1.5, 1.5]);
        let v = m.multipliers_for(&assign(OptimizationMode::GfArf, &[1.5])).unwrap();
        assert_eq!(v, vec![1.0, 1.5]);
        let one = one_d(0.01, 2.0);
        assert!(matches!(
            one.multipliers_for(&assign(OptimizationMode::Grid2d, &[1.0, 1.0])),
            Err(RdModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_models() {
        let mk = |g: Vec<f64>, c: f64| {
            SyntheticClipModel::new("c", 0.999, 0.004, 5.0, 0.04, vec![1.0; g.len()], g, c)
        };
        assert!(mk(vec![0.01, 0.01], 0.02).is_err()); // 4*g1*g2 == c^2
        assert!(mk(vec![0.01, 0.01], 0.019).is_ok());
        assert!(mk(vec![0.0], 0.0).is_err());
        assert!(mk(vec![0.01], 0.001).is_err());
        // quality would drop below zero by qp 63
        assert!(SyntheticClipModel::new("c", 0.2, 0.004, 5.0, 0.04, vec![1.0], vec![0.01], 0.0).is_err());
        assert!(one_d(0.01, 1.0).with_noise(1, 0.01).is_err());
    }

    #[test]
    fn qp_range_enforced() {
        let m = one_d(0.01, 1.0);
        let k = MultiplierAssignment::identity(OptimizationMode::Kf);
        assert!(synthetic_encode(&m, 0, &k).is_err());
        assert!(synthetic_encode(&m, 64, &k).is_err());
        assert!(synthetic_encode(&m, 63, &k).is_ok());
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let clean = one_d(0.01, 2.0);
        let noisy = clean.clone().with_noise(42, 1e-3).unwrap();
        let k = assign(OptimizationMode::AllFrames, &[1.3]);
        for qp in 1..=63 {
            let a = synthetic_encode(&noisy, qp, &k).unwrap();
            let b = synthetic_encode(&noisy, qp, &k).unwrap();
            assert_eq!(a.bitrate.to_bits(), b.bitrate.to_bits());
            let c = synthetic_encode(&clean, qp, &k).unwrap();
            let rel = (a.bitrate.log10() - c.bitrate.log10()).abs() / c.bitrate.log10().abs();
            assert!(rel <= 1e-3 + 1e-12);
        }
    }

    #[test]
    fn serde_validates() {
        let ok = r#"{"clip_id":"a","q_max":0.999,"alpha":0.004,"beta0":5,"beta1":0.04,"k_star":[2.0],"gamma":[0.02]}"#;
        let m: SyntheticClipModel = serde_json::from_str(ok).unwrap();
        assert_eq!(m.metric, Metric::MsSsim);
        let bad = ok.replace("[0.02]", "[-0.02]");
        assert!(serde_json::from_str::<SyntheticClipModel>(&bad).is_err());
    }
}
