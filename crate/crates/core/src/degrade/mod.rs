//! Ordered multi-degradation simulation.
//!
//! A [`Recipe`] is an ordered list of one to four [`DegradationStep`]s, each of
//! a distinct [`DegradationKind`]. Applying a recipe yields the degraded image
//! and its ground-truth [`LabelVector`]. [`generate_dataset`] samples recipes
//! for a directory of sources and writes a JSONL manifest.

mod apply;
mod dataset;
pub mod recipe;

pub use apply::{apply_recipe, apply_step, step_rng};
pub use dataset::{
    generate_dataset, list_images, read_manifest, write_manifest, DatasetOptions, Manifest,
    ManifestRecord, ManifestStep,
};
pub use recipe::{recipe_to_label, sample_recipe, sample_recipe_with_count, sample_step, Recipe};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelBit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    Noise,
    MotionBlur,
    DefocusBlur,
    Jpeg,
    LowLight,
    LowRes,
    Haze,
    Rain,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 8] = [
        DegradationKind::Noise,
        DegradationKind::MotionBlur,
        DegradationKind::DefocusBlur,
        DegradationKind::Jpeg,
        DegradationKind::LowLight,
        DegradationKind::LowRes,
        DegradationKind::Haze,
        DegradationKind::Rain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DegradationKind::Noise => "noise",
            DegradationKind::MotionBlur => "motion_blur",
            DegradationKind::DefocusBlur => "defocus_blur",
            DegradationKind::Jpeg => "jpeg",
            DegradationKind::LowLight => "low_light",
            DegradationKind::LowRes => "low_res",
            DegradationKind::Haze => "haze",
            DegradationKind::Rain => "rain",
        }
    }

    /// Label bit for this kind; noise depends on severity.
    pub fn label_bit(self, severity: Severity) -> LabelBit {
        match self {
            DegradationKind::Noise => match severity {
                Severity::Low => LabelBit::NoiseLow,
                Severity::Mid => LabelBit::NoiseMid,
                Severity::High => LabelBit::NoiseHigh,
            },
            DegradationKind::MotionBlur => LabelBit::MotionBlur,
            DegradationKind::DefocusBlur => LabelBit::DefocusBlur,
            DegradationKind::Jpeg => LabelBit::Jpeg,
            DegradationKind::LowLight => LabelBit::LowLight,
            DegradationKind::LowRes => LabelBit::LowRes,
            DegradationKind::Haze => LabelBit::Haze,
            DegradationKind::Rain => LabelBit::Rain,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Mid,
    High,
}

impl Severity {
    /// Generator noise level in intensity units.
    pub fn noise_sigma(self) -> f32 {
        match self {
            Severity::Low => 10.0 / 255.0,
            Severity::Mid => 25.0 / 255.0,
            Severity::High => 50.0 / 255.0,
        }
    }
}

/// Kind-specific parameters. Angles are degrees counter-clockwise from +x (y up).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum StepParams {
    Noise {
        sigma: f32,
    },
    MotionBlur {
        length: f32,
        angle: f32,
    },
    DefocusBlur {
        radius: f32,
    },
    Jpeg {
        quality: u8,
    },
    LowLight {
        gamma: f32,
        gain: f32,
    },
    LowRes {
        factor: u32,
    },
    Haze {
        t: f32,
        airlight: [f32; 3],
    },
    Rain {
        angle: f32,
        length: f32,
        density: f32,
        beta: f32,
    },
}

impl StepParams {
    pub fn kind(&self) -> DegradationKind {
        match self {
            StepParams::Noise { .. } => DegradationKind::Noise,
            StepParams::MotionBlur { .. } => DegradationKind::MotionBlur,
            StepParams::DefocusBlur { .. } => DegradationKind::DefocusBlur,
            StepParams::Jpeg { .. } => DegradationKind::Jpeg,
            StepParams::LowLight { .. } => DegradationKind::LowLight,
            StepParams::LowRes { .. } => DegradationKind::LowRes,
            StepParams::Haze { .. } => DegradationKind::Haze,
            StepParams::Rain { .. } => DegradationKind::Rain,
        }
    }

    /// Checks the physically meaningful domain of each parameter. The sampling
    /// ranges in [`ranges`] are a strict subset.
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, what: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::ParamOutOfRange(what.to_string()))
            }
        }
        let finite_in = |v: f32, lo: f32, hi: f32| v.is_finite() && v >= lo && v <= hi;
        match *self {
            StepParams::Noise { sigma } => check(finite_in(sigma, 0.0, 1.0), "noise sigma ∉ [0,1]"),
            StepParams::MotionBlur { length, angle } => {
                check(finite_in(length, 1.0, 64.0), "motion length ∉ [1,64]")?;
                check(
                    finite_in(angle, 0.0, 180.0) && angle < 180.0,
                    "motion angle ∉ [0,180)",
                )
            }
            StepParams::DefocusBlur { radius } => {
                check(finite_in(radius, 0.5, 16.0), "defocus radius ∉ [0.5,16]")
            }
            StepParams::Jpeg { quality } => {
                check((1..=100).contains(&quality), "jpeg quality ∉ [1,100]")
            }
            StepParams::LowLight { gamma, gain } => {
                check(finite_in(gamma, 0.1, 10.0), "gamma ∉ [0.1,10]")?;
                check(finite_in(gain, 0.0, 1.0), "gain ∉ [0,1]")
            }
            StepParams::LowRes { factor } => {
                check((1..=8).contains(&factor), "low-res factor ∉ [1,8]")
            }
            StepParams::Haze { t, airlight } => {
                check(finite_in(t, 0.0, 1.0), "haze t ∉ [0,1]")?;
                check(
                    airlight.iter().all(|&a| finite_in(a, 0.0, 1.0)),
                    "airlight ∉ [0,1]",
                )
            }
            StepParams::Rain {
                angle,
                length,
                density,
                beta,
            } => {
                check(finite_in(angle, 0.0, 180.0), "rain angle ∉ [0,180]")?;
                check(finite_in(length, 1.0, 64.0), "rain length ∉ [1,64]")?;
                check(finite_in(density, 0.0, 0.05), "rain density ∉ [0,0.05]")?;
                check(finite_in(beta, 0.0, 1.0), "rain beta ∉ [0,1]")
            }
        }
    }
}

/// Sampling ranges used by the dataset generator.
pub mod ranges {
    pub const NOISE_SIGMAS_255: [f32; 3] = [10.0, 25.0, 50.0];
    pub const MOTION_LENGTH: (f32, f32) = (9.0, 21.0);
    pub const MOTION_ANGLE: (f32, f32) = (0.0, 180.0);
    pub const DEFOCUS_RADIUS: (f32, f32) = (2.0, 6.0);
    pub const JPEG_QUALITY: (u8, u8) = (10, 40);
    pub const LOWLIGHT_GAMMA: (f32, f32) = (1.8, 3.0);
    pub const LOWLIGHT_GAIN: (f32, f32) = (0.5, 0.9);
    pub const LOWRES_FACTORS: [u32; 3] = [2, 3, 4];
    pub const HAZE_T: (f32, f32) = (0.4, 0.75);
    pub const HAZE_AIRLIGHT: (f32, f32) = (0.8, 1.0);
    pub const RAIN_ANGLE: (f32, f32) = (60.0, 120.0);
    pub const RAIN_LENGTH: (f32, f32) = (12.0, 30.0);
    pub const RAIN_DENSITY: (f32, f32) = (0.002, 0.01);
    pub const RAIN_BETA: (f32, f32) = (0.6, 0.9);
}

/// One parameterised degradation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationStep {
    #[serde(flatten)]
    pub params: StepParams,
    /// Noise intensity class; `Mid` for every other kind.
    pub severity: Severity,
}

impl DegradationStep {
    pub fn new(params: StepParams) -> Self {
        Self {
            params,
            severity: Severity::Mid,
        }
    }

    pub fn noise(severity: Severity) -> Self {
        Self {
            params: StepParams::Noise {
                sigma: severity.noise_sigma(),
            },
            severity,
        }
    }

    pub fn kind(&self) -> DegradationKind {
        self.params.kind()
    }

    pub fn label_bit(&self) -> LabelBit {
        self.kind().label_bit(self.severity)
    }

    /// Rough severity in `[0, 1]` across the generator's parameter ranges,
    /// used as a regression target. Zero means no visible effect.
    pub fn strength(&self) -> f64 {
        let s = match self.params {
            StepParams::Noise { sigma } => sigma as f64 * 255.0 / 50.0,
            StepParams::MotionBlur { length, .. } => (length as f64 - 1.0) / 20.0,
            StepParams::DefocusBlur { radius } => radius as f64 / 6.0,
            StepParams::Jpeg { quality } => (50.0 - quality as f64) / 40.0,
            StepParams::LowLight { gamma, gain } => {
                1.0 - 2.0 * gain as f64 * 0.5f64.powf(gamma as f64)
            }
            StepParams::LowRes { factor } => (factor as f64 - 1.0) / 3.0,
            StepParams::Haze { t, .. } => (1.0 - t as f64) / 0.6,
            StepParams::Rain { density, beta, .. } => density as f64 / 0.01 * beta as f64 / 0.9,
        };
        s.clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.kind() != DegradationKind::Noise && self.severity != Severity::Mid {
            return Err(Error::ParamOutOfRange(format!(
                "severity must be mid for {}",
                self.kind().name()
            )));
        }
        Ok(())
    }
}
