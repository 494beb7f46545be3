//! Classical restoration toolbox.
//!
//! Every [`TaskLabel`] has at least one tool in the [`ToolRegistry`]. A tool is
//! addressed by a [`ToolSpec`], whose `params` variant selects the operator.
//! Tools that search over their own parameters (the two Wiener deblurring
//! tools and the motion-kernel fallback) rank candidates with a
//! [`QualityProbe`].

mod deblock;
mod deblur;
mod dehaze;
mod denoise;
mod derain;
mod enhance;
mod registry;
mod upscale;

pub use deblock::deblock_grid;
pub use deblur::{
    estimate_motion_kernel, wiener_deconvolve, MotionEstimate, FALLBACK_ANGLES, FALLBACK_LENGTHS,
};
pub use dehaze::{airlight, dehaze_dark_channel, guided_filter, recover_scene};
pub use denoise::{bilateral, nlm};
pub use derain::{derain_median, derain_opening};
pub use enhance::{adaptive_gamma, tile_equalize};
pub use registry::{default_registry, ToolRegistry};
pub use upscale::back_projection;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqa::{IqaContext, QualityMode};
use crate::ImageF;

/// Restoration task slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskLabel {
    #[serde(rename = "DN_L")]
    DnL,
    #[serde(rename = "DN_M")]
    DnM,
    #[serde(rename = "DN_H")]
    DnH,
    #[serde(rename = "DJ")]
    Dj,
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "DH")]
    Dh,
    #[serde(rename = "MDB")]
    Mdb,
    #[serde(rename = "DDB")]
    Ddb,
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "SR")]
    Sr,
}

impl TaskLabel {
    pub const ALL: [TaskLabel; 10] = [
        TaskLabel::DnL,
        TaskLabel::DnM,
        TaskLabel::DnH,
        TaskLabel::Dj,
        TaskLabel::Dr,
        TaskLabel::Dh,
        TaskLabel::Mdb,
        TaskLabel::Ddb,
        TaskLabel::Le,
        TaskLabel::Sr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskLabel::DnL => "DN_L",
            TaskLabel::DnM => "DN_M",
            TaskLabel::DnH => "DN_H",
            TaskLabel::Dj => "DJ",
            TaskLabel::Dr => "DR",
            TaskLabel::Dh => "DH",
            TaskLabel::Mdb => "MDB",
            TaskLabel::Ddb => "DDB",
            TaskLabel::Le => "LE",
            TaskLabel::Sr => "SR",
        }
    }
}

impl std::fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskLabel::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::ParamOutOfRange(format!("unknown task label {s:?}")))
    }
}

/// Operator parameters. The variant decides which operator runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ToolParams {
    /// Non-local means with joint colour patch distance.
    Nlm {
        patch: usize,
        window: usize,
        h: f32,
    },
    Bilateral {
        sigma_s: f32,
        sigma_r: f32,
    },
    /// Boundary smoothing on the 8-pixel grid, then a light NLM pass.
    Deblock {
        gate: f32,
        max_step: f32,
        h: f32,
    },
    /// Streak removal with a directional median on the residual.
    DirectionalMedian {
        length: usize,
    },
    DirectionalOpening {
        length: usize,
    },
    DarkChannel {
        omega: f32,
        t_min: f32,
        radius: usize,
        eps: f32,
    },
    WienerMotion {
        nsr: Vec<f32>,
    },
    WienerDisk {
        radii: Vec<f32>,
        nsr: Vec<f32>,
    },
    AdaptiveGamma {
        target_mean: f32,
        low_pct: f32,
        high_pct: f32,
    },
    TileEqualize {
        tiles: usize,
        clip: f32,
    },
    BackProjection {
        iterations: usize,
        amount: f32,
        radius: f32,
    },
}

impl ToolParams {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, what: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::ParamOutOfRange(what.to_string()))
            }
        }
        let pos = |v: f32| v.is_finite() && v > 0.0;
        let grid = |g: &[f32]| !g.is_empty() && g.iter().all(|&v| pos(v));
        match self {
            ToolParams::Nlm { patch, window, h } => {
                check(
                    patch % 2 == 1 && window % 2 == 1 && patch <= window,
                    "nlm patch/window must be odd, patch <= window",
                )?;
                check(*window <= 31, "nlm window > 31")?;
                check(pos(*h), "nlm h must be > 0")
            }
            ToolParams::Bilateral { sigma_s, sigma_r } => check(
                pos(*sigma_s) && *sigma_s <= 16.0 && pos(*sigma_r),
                "bilateral sigmas out of range",
            ),
            ToolParams::Deblock { gate, max_step, h } => check(
                pos(*gate) && pos(*max_step) && *max_step <= 1.0 && h.is_finite() && *h >= 0.0,
                "deblock parameters out of range",
            ),
            ToolParams::DirectionalMedian { length }
            | ToolParams::DirectionalOpening { length } => check(
                (3..=31).contains(length),
                "streak filter length not in 3..=31",
            ),
            ToolParams::DarkChannel {
                omega,
                t_min,
                radius,
                eps,
            } => check(
                pos(*omega)
                    && *omega <= 1.0
                    && pos(*t_min)
                    && *t_min < 1.0
                    && *radius >= 1
                    && pos(*eps),
                "dark channel parameters out of range",
            ),
            ToolParams::WienerMotion { nsr } => check(grid(nsr), "empty or non-positive nsr grid"),
            ToolParams::WienerDisk { radii, nsr } => check(
                grid(nsr) && grid(radii) && radii.iter().all(|&r| r <= 16.0),
                "empty or invalid radius/nsr grid",
            ),
            ToolParams::AdaptiveGamma {
                target_mean,
                low_pct,
                high_pct,
            } => check(
                pos(*target_mean)
                    && *target_mean < 1.0
                    && *low_pct >= 0.0
                    && low_pct < high_pct
                    && *high_pct <= 100.0,
                "adaptive gamma parameters out of range",
            ),
            ToolParams::TileEqualize { tiles, clip } => check(
                (1..=32).contains(tiles) && pos(*clip),
                "tile equalisation parameters out of range",
            ),
            ToolParams::BackProjection {
                iterations,
                amount,
                radius,
            } => check(
                *iterations <= 50 && amount.is_finite() && *amount >= 0.0 && pos(*radius),
                "back-projection parameters out of range",
            ),
        }
    }
}

/// One registered tool for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub task: TaskLabel,
    pub tool_id: String,
    pub params: ToolParams,
}

impl ToolSpec {
    pub fn new(task: TaskLabel, tool_id: impl Into<String>, params: ToolParams) -> Self {
        Self {
            task,
            tool_id: tool_id.into(),
            params,
        }
    }
}

/// No-reference score used by tools that search over their own parameters.
/// Higher is better.
pub trait QualityProbe: Sync {
    fn score(&self, img: &ImageF) -> Result<f64>;
}

impl QualityProbe for IqaContext {
    fn score(&self, img: &ImageF) -> Result<f64> {
        self.quality(img, QualityMode::Normalized)
    }
}

/// Calibration-free probe: log sharpness of luma minus a penalty on the
/// estimated noise level. Good enough to rank deconvolution candidates of one
/// image against each other.
#[derive(Clone, Copy, Debug, Default)]
pub struct SharpnessProbe;

impl QualityProbe for SharpnessProbe {
    fn score(&self, img: &ImageF) -> Result<f64> {
        use crate::imagecore::{laplacian, to_luma, Plane};
        let l: Plane<f64> = to_luma(img).cast();
        let sigma = crate::perceive::detectors::immerkaer_channel(&l);
        let sharp = laplacian(&l).variance() / l.variance().max(1e-9);
        Ok((sharp + 1e-9).ln() - 60.0 * sigma)
    }
}

/// Runs the operator selected by `spec.params`. The result has the input's
/// dimensions and lies in `[0, 1]`.
pub fn apply_tool(img: &ImageF, spec: &ToolSpec, probe: &dyn QualityProbe) -> Result<ImageF> {
    spec.params.validate()?;
    let out = match &spec.params {
        ToolParams::Nlm { patch, window, h } => nlm(img, *patch, *window, *h),
        ToolParams::Bilateral { sigma_s, sigma_r } => bilateral(img, *sigma_s, *sigma_r),
        ToolParams::Deblock { gate, max_step, h } => {
            let d = deblock_grid(img, 8, *gate, *max_step);
            if *h > 0.0 {
                nlm(&d, 5, 11, *h)
            } else {
                d
            }
        }
        ToolParams::DirectionalMedian { length } => derain_median(img, *length),
        ToolParams::DirectionalOpening { length } => derain_opening(img, *length),
        ToolParams::DarkChannel {
            omega,
            t_min,
            radius,
            eps,
        } => dehaze_dark_channel(img, *omega, *t_min, *radius, *eps)?,
        ToolParams::WienerMotion { nsr } => deblur::deblur_motion(img, nsr, probe)?,
        ToolParams::WienerDisk { radii, nsr } => deblur::deblur_disk(img, radii, nsr, probe)?,
        ToolParams::AdaptiveGamma {
            target_mean,
            low_pct,
            high_pct,
        } => adaptive_gamma(img, *target_mean, *low_pct, *high_pct),
        ToolParams::TileEqualize { tiles, clip } => tile_equalize(img, *tiles, *clip),
        ToolParams::BackProjection {
            iterations,
            amount,
            radius,
        } => back_projection(img, *iterations, *amount, *radius),
    };
    Ok(clamp_unit(out))
}

fn clamp_unit(img: ImageF) -> ImageF {
    img.map_samples(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
}
