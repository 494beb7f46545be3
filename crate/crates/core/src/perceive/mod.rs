//! Degradation perception as a sequence of independent yes/no questions.
//!
//! Each degradation has its own detector that looks only at the image. When
//! noise is reported, a follow-up classifies its intensity as low, medium or
//! high. The answers populate a [`PerceptionVector`] in the shared label order.
//! [`external`] carries the same question sequence over a line-delimited JSON
//! channel so a learned perceiver can answer instead.

pub mod detectors;
pub mod external;
mod scoring;

pub use detectors::{
    detect_blur, detect_haze, detect_jpeg, detect_low_light, detect_low_res, detect_noise,
    detect_rain, estimate_noise_sigma, interpolation_grid, BlurKind, BlurReport, GridEvidence,
    HazeReport, JpegReport, LowLightReport, LowResReport, NoiseReport, RainReport,
};
pub use external::{
    external_perceive, ExternalPerceiver, PerceiverAnswer, PerceiverQuestion, Transport,
};
pub use scoring::{dacc, macc, precision};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degrade::Severity;
use crate::error::Result;
use crate::labels::{LabelBit, PerceptionVector};
use crate::ImageF;

/// Decision thresholds of every detector. Values are in `[0, 1]` intensity
/// units unless noted. `value == threshold` always counts as positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorThresholds {
    pub noise_present: f64,
    pub noise_mid: f64,
    pub noise_high: f64,
    pub jpeg_blockiness: f64,
    pub haze_dark: f64,
    pub haze_contrast: f64,
    /// Lowest 1st percentile of the dark channel that still counts as hazy.
    pub haze_floor: f64,
    pub lowlight_mean: f64,
    pub lowlight_dark_fraction: f64,
    pub lowlight_dark_level: f64,
    /// Luma 99th percentile at or below which highlights count as suppressed.
    pub lowlight_highlight: f64,
    pub rain_ratio: f64,
    pub rain_density_min: f64,
    pub rain_density_max: f64,
    /// Contrast-normalised Laplacian variance at or below which an image counts as blurred.
    pub blur_sharpness: f64,
    pub motion_anisotropy: f64,
    /// High-frequency energy share at or below which an image counts as upsampled.
    pub lowres_fraction: f64,
    /// Grid phase-residual ratio at or above which content counts as gridded.
    pub lowres_grid: f64,
}

impl Default for DetectorThresholds {
    fn default() -> Self {
        Self {
            noise_present: 6.0 / 255.0,
            noise_mid: 17.5 / 255.0,
            noise_high: 37.5 / 255.0,
            jpeg_blockiness: 1.15,
            haze_dark: 0.35,
            haze_contrast: 0.18,
            haze_floor: 0.15,
            lowlight_mean: 0.43,
            lowlight_dark_fraction: 0.006,
            lowlight_dark_level: 0.12,
            lowlight_highlight: 0.83,
            rain_ratio: 2.0,
            rain_density_min: 0.011,
            rain_density_max: 0.6,
            blur_sharpness: 0.05,
            motion_anisotropy: 1.6,
            lowres_fraction: 0.016,
            lowres_grid: 1.17,
        }
    }
}

/// Evidence behind every answer of one perception pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub noise: NoiseReport,
    pub jpeg: JpegReport,
    pub rain: RainReport,
    pub haze: HazeReport,
    pub blur: BlurReport,
    pub low_light: LowLightReport,
    pub low_res: LowResReport,
}

impl DetectorReport {
    pub fn to_vector(&self) -> PerceptionVector {
        let mut v = PerceptionVector::empty();
        if self.noise.present {
            v.set(match self.noise.severity {
                Severity::Low => LabelBit::NoiseLow,
                Severity::Mid => LabelBit::NoiseMid,
                Severity::High => LabelBit::NoiseHigh,
            });
        }
        let flags = [
            (self.jpeg.present, LabelBit::Jpeg),
            (self.rain.present, LabelBit::Rain),
            (self.haze.present, LabelBit::Haze),
            (self.blur.kind == BlurKind::Motion, LabelBit::MotionBlur),
            (self.blur.kind == BlurKind::Defocus, LabelBit::DefocusBlur),
            (self.low_light.present, LabelBit::LowLight),
            (self.low_res.present, LabelBit::LowRes),
        ];
        for (on, bit) in flags {
            if on {
                v.set(bit);
            }
        }
        v
    }
}

/// One named detector, so callers can run them in any order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detector {
    Noise,
    Jpeg,
    Rain,
    Haze,
    Blur,
    LowLight,
    LowRes,
}

impl Detector {
    pub const ALL: [Detector; 7] = [
        Detector::Noise,
        Detector::Jpeg,
        Detector::Rain,
        Detector::Haze,
        Detector::Blur,
        Detector::LowLight,
        Detector::LowRes,
    ];
}

/// Runs the detectors in the given order. Each sees only the image, so any
/// permutation yields the same report.
pub fn perceive_in_order(
    img: &ImageF,
    t: &DetectorThresholds,
    order: &[Detector],
) -> DetectorReport {
    let mut noise = None;
    let mut jpeg = None;
    let mut rain = None;
    let mut haze = None;
    let mut blur = None;
    let mut low_light = None;
    let mut low_res = None;
    for d in order {
        match d {
            Detector::Noise => noise = Some(detect_noise(img, t)),
            Detector::Jpeg => jpeg = Some(detect_jpeg(img, t)),
            Detector::Rain => rain = Some(detect_rain(img, t)),
            Detector::Haze => haze = Some(detect_haze(img, t)),
            Detector::Blur => blur = Some(detect_blur(img, t)),
            Detector::LowLight => low_light = Some(detect_low_light(img, t)),
            Detector::LowRes => low_res = Some(detect_low_res(img, t)),
        }
    }
    DetectorReport {
        noise: noise.unwrap_or_else(|| detect_noise(img, t)),
        jpeg: jpeg.unwrap_or_else(|| detect_jpeg(img, t)),
        rain: rain.unwrap_or_else(|| detect_rain(img, t)),
        haze: haze.unwrap_or_else(|| detect_haze(img, t)),
        blur: blur.unwrap_or_else(|| detect_blur(img, t)),
        low_light: low_light.unwrap_or_else(|| detect_low_light(img, t)),
        low_res: low_res.unwrap_or_else(|| detect_low_res(img, t)),
    }
}

/// All detectors, then the noise intensity follow-up.
pub fn perceive(img: &ImageF, t: &DetectorThresholds) -> (PerceptionVector, DetectorReport) {
    let report = perceive_in_order(img, t, &Detector::ALL);
    (report.to_vector(), report)
}

/// Result of asking a perceiver about one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionOutcome {
    pub vector: PerceptionVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<DetectorReport>,
    /// Why the internal detectors had to stand in, if they did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

/// Anything that can answer the degradation questions for an image.
pub trait Perceiver: Sync {
    fn perceive(&self, img: &ImageF, image_ref: Option<&Path>) -> Result<PerceptionOutcome>;
}

/// The built-in classical detectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InternalPerceiver {
    pub thresholds: DetectorThresholds,
}

impl InternalPerceiver {
    pub fn new(thresholds: DetectorThresholds) -> Self {
        Self { thresholds }
    }
}

impl Perceiver for InternalPerceiver {
    fn perceive(&self, img: &ImageF, _image_ref: Option<&Path>) -> Result<PerceptionOutcome> {
        let (vector, report) = perceive(img, &self.thresholds);
        Ok(PerceptionOutcome {
            vector,
            report: Some(report),
            fallback: None,
        })
    }
}

/// Adapts a closure, e.g. a label oracle in tests.
pub struct FnPerceiver<F>(pub F);

impl<F> Perceiver for FnPerceiver<F>
where
    F: Fn(&ImageF, Option<&Path>) -> PerceptionVector + Sync,
{
    fn perceive(&self, img: &ImageF, image_ref: Option<&Path>) -> Result<PerceptionOutcome> {
        Ok(PerceptionOutcome {
            vector: (self.0)(img, image_ref),
            report: None,
            fallback: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceive::detectors::detector_stats;
    use crate::synth::natural_scene;

    #[test]
    fn detector_order_does_not_matter() {
        let img = natural_scene(96, 96, 3);
        let t = DetectorThresholds::default();
        let a = perceive_in_order(&img, &t, &Detector::ALL);
        let mut rev = Detector::ALL;
        rev.reverse();
        let b = perceive_in_order(&img, &t, &rev);
        assert_eq!(a, b);
        assert_eq!(a.to_vector(), b.to_vector());
    }

    #[test]
    fn batched_stats_agree_with_perceive() {
        use crate::degrade::{apply_recipe, sample_recipe};
        use rand::SeedableRng;
        let t = DetectorThresholds::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for i in 0..6 {
            let src = natural_scene(96, 96, i);
            let img = if i == 0 {
                src
            } else {
                apply_recipe(&src, &sample_recipe(&mut rng, "s")).unwrap().0
            };
            let fast = detector_stats(&img, t.lowlight_dark_level).to_vector(&t);
            assert_eq!(fast, perceive(&img, &t).0);
        }
    }

    #[test]
    fn thresholds_round_trip() {
        let t = DetectorThresholds::default();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<DetectorThresholds>(&s).unwrap(), t);
        assert!(serde_json::from_str::<DetectorThresholds>(r#"{"bogus": 1}"#).is_err());
    }
}
