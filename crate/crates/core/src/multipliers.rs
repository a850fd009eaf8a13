//! Frame-type groupings and the multiplier vectors routed to them.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("mode {mode} takes {expected} multiplier(s), got {found}")]
    WrongLength {
        mode: OptimizationMode,
        expected: usize,
        found: usize,
    },
    #[error("multiplier {index} = {value} must be positive and finite")]
    NotPositive { index: usize, value: f64 },
}

/// Which frame types receive a tuned multiplier, and how many independent
/// multipliers are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum OptimizationMode {
    /// One multiplier for every frame.
    #[serde(rename = "ALL_FRAMES")]
    AllFrames,
    /// Keyframes only.
    #[serde(rename = "KF")]
    Kf,
    /// Golden and alternate-reference frames.
    #[serde(rename = "GF_ARF")]
    GfArf,
    /// One multiplier shared by KF, GF and ARF frames.
    #[serde(rename = "KF_GF_ARF")]
    KfGfArf,
    /// Joint Powell search over (k_KF, k_GF/ARF).
    #[serde(rename = "POWELL_KF_X_GFARF")]
    PowellKfXGfArf,
    /// Exhaustive grid over (k_KF, k_GF/ARF).
    #[serde(rename = "GRID_2D")]
    Grid2d,
}

/// Search strategy a mode implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchKind {
    Scalar,
    Powell,
    Grid,
}

impl OptimizationMode {
    pub const ALL: [OptimizationMode; 6] = [
        OptimizationMode::AllFrames,
        OptimizationMode::Kf,
        OptimizationMode::GfArf,
        OptimizationMode::KfGfArf,
        OptimizationMode::PowellKfXGfArf,
        OptimizationMode::Grid2d,
    ];

    pub fn dims(self) -> usize {
        match self.search_kind() {
            SearchKind::Scalar => 1,
            SearchKind::Powell | SearchKind::Grid => 2,
        }
    }

    pub fn search_kind(self) -> SearchKind {
        match self {
            OptimizationMode::PowellKfXGfArf => SearchKind::Powell,
            OptimizationMode::Grid2d => SearchKind::Grid,
            _ => SearchKind::Scalar,
        }
    }

    /// Wire name, as used in config files and records.
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizationMode::AllFrames => "ALL_FRAMES",
            OptimizationMode::Kf => "KF",
            OptimizationMode::GfArf => "GF_ARF",
            OptimizationMode::KfGfArf => "KF_GF_ARF",
            OptimizationMode::PowellKfXGfArf => "POWELL_KF_X_GFARF",
            OptimizationMode::Grid2d => "GRID_2D",
        }
    }

    /// Human label for report tables.
    pub fn label(self) -> &'static str {
        match self {
            OptimizationMode::AllFrames => "All Frames",
            OptimizationMode::Kf => "KF",
            OptimizationMode::GfArf => "GF, ARF",
            OptimizationMode::KfGfArf => "KF, GF, ARF",
            OptimizationMode::PowellKfXGfArf => "Powell (KF, GF/ARF)",
            OptimizationMode::Grid2d => "Grid (KF, GF/ARF)",
        }
    }
}

impl fmt::Display for OptimizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OptimizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptimizationMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown optimization mode {s:?}"))
    }
}

impl TryFrom<String> for OptimizationMode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Per-flag multipliers handed to an encoder. Groups a mode does not
/// touch stay at 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMultipliers {
    pub all: f64,
    pub kf: f64,
    pub gf_arf: f64,
}

impl FrameMultipliers {
    /// Net scale applied to (KF, GF/ARF) frames.
    pub fn effective_pair(&self) -> [f64; 2] {
        [self.all * self.kf, self.all * self.gf_arf]
    }
}

/// A multiplier vector tied to the mode that routes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment")]
pub struct MultiplierAssignment {
    mode: OptimizationMode,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawAssignment {
    mode: OptimizationMode,
    values: Vec<f64>,
}

impl TryFrom<RawAssignment> for MultiplierAssignment {
    type Error = MultiplierError;

    fn try_from(raw: RawAssignment) -> Result<Self, Self::Error> {
        MultiplierAssignment::new(raw.mode, raw.values)
    }
}

impl MultiplierAssignment {
    pub fn new(mode: OptimizationMode, values: Vec<f64>) -> Result<Self, MultiplierError> {
        if values.len() != mode.dims() {
            return Err(MultiplierError::WrongLength {
                mode,
                expected: mode.dims(),
                found: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(MultiplierError::NotPositive { index, value });
            }
        }
        Ok(MultiplierAssignment { mode, values })
    }

    /// The default encoder behaviour: every multiplier 1.
    pub fn identity(mode: OptimizationMode) -> Self {
        MultiplierAssignment {
            mode,
            values: vec![1.0; mode.dims()],
        }
    }

    pub fn mode(&self) -> OptimizationMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_identity(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    /// KF_GF_ARF applies its single value to all three keyframe types;
    /// the two-dimensional modes split into (k_KF, k_GF/ARF).
    pub fn routed(&self) -> FrameMultipliers {
        let mut m = FrameMultipliers {
            all: 1.0,
            kf: 1.0,
            gf_arf: 1.0,
        };
        match self.mode {
            OptimizationMode::AllFrames => m.all = self.values[0],
            OptimizationMode::Kf => m.kf = self.values[0],
            OptimizationMode::GfArf => m.gf_arf = self.values[0],
            OptimizationMode::KfGfArf => {
                m.kf = self.values[0];
                m.gf_arf = self.values[0];
            }
            OptimizationMode::PowellKfXGfArf | OptimizationMode::Grid2d => {
                m.kf = self.values[0];
                m.gf_arf = self.values[1];
            }
        }
        m
    }
}
