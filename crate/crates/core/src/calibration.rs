//! Fitting every data-derived artefact from a pristine corpus.
//!
//! [`calibrate`] fits the naturalness model on the pristine images, then
//! degrades each of them with a seeded sweep of single and mixed recipes. The
//! sweep supplies training targets for the distortion regressor, the
//! population behind each percentile range, and labelled examples for the
//! detector threshold search. The result is one JSON document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::{
    apply_recipe, sample_recipe_with_count, sample_step, DegradationKind, Recipe,
};
use crate::error::{Error, Result};
use crate::imagecore::{load_image, to_luma, Plane};
use crate::iqa::{
    self, anomaly_level, clarity_components, fit_naturalness, BrisqueRegressor, Features,
    IqaContext, NaturalnessModel, PercentileRange, PercentileTable,
};
use crate::labels::{LabelBit, LabelVector};
use crate::perceive::detectors::{detector_stats, DetectorStats};
use crate::perceive::DetectorThresholds;
use crate::ImageF;

pub const CALIBRATION_VERSION: u32 = 1;
/// Environment variable naming a calibration file.
pub const CALIBRATION_ENV: &str = "Q_AGENT_CALIBRATION";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationOptions {
    pub seed: u64,
    /// Single-degradation variants per pristine image.
    pub singles_per_image: usize,
    /// Mixed (2 to 4 step) variants per pristine image.
    pub mixes_per_image: usize,
    pub ridge_lambda: f64,
    /// Highest pristine false-positive rate the threshold search accepts.
    pub max_pristine_fpr: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            singles_per_image: 3,
            mixes_per_image: 1,
            ridge_lambda: 1.0,
            max_pristine_fpr: 0.08,
        }
    }
}

/// Fit-quality figures recorded next to the artefacts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    pub sweep_size: usize,
    /// Spearman correlation of regressor output with the severity target on
    /// the training items.
    pub regressor_spearman: f64,
    /// Per label: recall on sweep items carrying it.
    pub recall: BTreeMap<String, f64>,
    /// Per label: share of pristine images flagged with it.
    pub pristine_fpr: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub version: u32,
    pub options: CalibrationOptions,
    pub model: NaturalnessModel,
    pub regressor: BrisqueRegressor,
    pub thresholds: DetectorThresholds,
    pub diagnostics: CalibrationDiagnostics,
}

impl Calibration {
    pub fn digest(&self) -> &str {
        &self.model.fitted_on.digest
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CALIBRATION_VERSION {
            return Err(Error::CalibrationMissing(format!(
                "unsupported calibration version {}",
                self.version
            )));
        }
        self.model.validate()?;
        self.regressor.validate()?;
        for key in iqa::SLOT_NAMES {
            if !self.model.percentile_table.contains_key(key) {
                return Err(Error::CalibrationMissing(format!(
                    "percentile range for '{key}' missing"
                )));
            }
        }
        Ok(())
    }

    pub fn iqa_context(&self) -> Result<IqaContext> {
        IqaContext::new(self.model.clone(), self.regressor.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Reads and validates a calibration file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::CalibrationMissing(format!("{}: {e}", path.display())))?;
        let cal: Calibration = serde_json::from_str(&text)
            .map_err(|e| Error::CalibrationMissing(format!("{}: {e}", path.display())))?;
        cal.validate()?;
        Ok(cal)
    }

    /// Loads from `path` if given, else from the file named by [`CALIBRATION_ENV`].
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let p: PathBuf = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(CALIBRATION_ENV)
                .map(PathBuf::from)
                .ok_or_else(|| {
                    Error::CalibrationMissing(format!("no path given and {CALIBRATION_ENV} unset"))
                })?,
        };
        Self::load(p)
    }
}

/// Everything measured once per calibration image.
struct SweepItem {
    label: LabelVector,
    pristine: bool,
    target: f64,
    features: Features,
    raw: iqa::RawMeasurement,
    detectors: DetectorStats,
}

fn sweep_recipes(n_images: usize, opts: &CalibrationOptions) -> Vec<(usize, Recipe)> {
    let mut out = Vec::new();
    let mut kind_cursor = 0usize;
    for i in 0..n_images {
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed ^ (i as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        let id = format!("cal{i:04}");
        for _ in 0..opts.singles_per_image {
            // kinds cycle across the corpus so every kind is equally represented
            let kind = DegradationKind::ALL[kind_cursor % DegradationKind::ALL.len()];
            kind_cursor += 1;
            let step = sample_step(kind, &mut rng);
            out.push((
                i,
                Recipe {
                    steps: vec![step],
                    seed: rng.gen(),
                    source_id: id.clone(),
                },
            ));
        }
        for _ in 0..opts.mixes_per_image {
            let count = rng.gen_range(2..=4);
            out.push((i, sample_recipe_with_count(&mut rng, &id, count)));
        }
    }
    out
}

fn measure_item(
    img: &ImageF,
    label: LabelVector,
    target: f64,
    model: &NaturalnessModel,
    dark_level: f64,
) -> Result<SweepItem> {
    let luma: Plane<f64> = to_luma(img).cast();
    let features = iqa::nss::nss_features_plane(&luma)?;
    let raw = iqa::RawMeasurement {
        ni: iqa::niqe_luma(&luma, model)?,
        br: 0.0,
        cp: iqa::cpbd_luma(&luma).score,
        clarity: clarity_components(img),
        anomaly: anomaly_level(&luma, &model.tile_reference)?,
    };
    Ok(SweepItem {
        pristine: label.is_empty(),
        label,
        target,
        features,
        raw,
        detectors: detector_stats(img, dark_level),
    })
}

/// Fits the naturalness model, regressor, percentile table and detector
/// thresholds. Deterministic in `(images, opts)`.
pub fn calibrate(images: &[ImageF], opts: &CalibrationOptions) -> Result<Calibration> {
    let mut model = fit_naturalness(images)?;
    let defaults = DetectorThresholds::default();
    let dark_level = defaults.lowlight_dark_level;

    let mut items = Vec::new();
    for img in images {
        items.push(measure_item(
            img,
            LabelVector::empty(),
            0.0,
            &model,
            dark_level,
        )?);
    }
    for (i, recipe) in sweep_recipes(images.len(), opts) {
        let (out, label) = apply_recipe(&images[i], &recipe)?;
        items.push(measure_item(
            &out,
            label,
            100.0 * recipe.strength(),
            &model,
            dark_level,
        )?);
    }
    log::info!("calibration sweep: {} images", items.len());

    let feats: Vec<Features> = items.iter().map(|it| it.features).collect();
    let targets: Vec<f64> = items.iter().map(|it| it.target).collect();
    let regressor = BrisqueRegressor::train(&feats, &targets, opts.ridge_lambda)?;
    let predicted: Vec<f64> = feats.iter().map(|f| regressor.predict(f)).collect();
    let regressor_spearman = crate::stats::spearman(&predicted, &targets);
    for (it, p) in items.iter_mut().zip(&predicted) {
        it.raw.br = *p;
    }

    model.percentile_table = percentile_table(&items)?;
    let thresholds = fit_thresholds(&items, &defaults, opts.max_pristine_fpr);
    let (recall, pristine_fpr) = detector_rates(&items, &thresholds);

    let cal = Calibration {
        version: CALIBRATION_VERSION,
        options: opts.clone(),
        model,
        regressor,
        thresholds,
        diagnostics: CalibrationDiagnostics {
            sweep_size: items.len(),
            regressor_spearman,
            recall,
            pristine_fpr,
        },
    };
    cal.validate()?;
    Ok(cal)
}

/// Loads every image in `dir` (sorted by file name) and calibrates on them.
pub fn calibrate_dir(dir: &Path, opts: &CalibrationOptions) -> Result<Calibration> {
    let paths = crate::degrade::list_images(dir)?;
    let images = paths.iter().map(load_image).collect::<Result<Vec<_>>>()?;
    calibrate(&images, opts)
}

fn percentile_table(items: &[SweepItem]) -> Result<PercentileTable> {
    let mut table = PercentileTable::new();
    let put = |table: &mut PercentileTable, key: &str, vals: Vec<f64>| {
        table.insert(key.to_string(), PercentileRange::from_values(&vals));
    };
    put(
        &mut table,
        "colorfulness",
        items.iter().map(|it| it.raw.clarity.colorfulness).collect(),
    );
    put(
        &mut table,
        "rms_contrast",
        items.iter().map(|it| it.raw.clarity.rms_contrast).collect(),
    );
    put(
        &mut table,
        "entropy",
        items.iter().map(|it| it.raw.clarity.entropy).collect(),
    );
    put(
        &mut table,
        "tile_anomaly",
        items.iter().map(|it| it.raw.anomaly).collect(),
    );
    put(&mut table, "ni", items.iter().map(|it| it.raw.ni).collect());
    put(&mut table, "br", items.iter().map(|it| it.raw.br).collect());
    put(&mut table, "cp", items.iter().map(|it| it.raw.cp).collect());
    let cl = items
        .iter()
        .map(|it| iqa::clarity_from(&it.raw.clarity, &table))
        .collect::<Result<Vec<_>>>()?;
    let hy = items
        .iter()
        .map(|it| iqa::hy_from(it.raw.anomaly, &table))
        .collect::<Result<Vec<_>>>()?;
    put(&mut table, "cl", cl);
    put(&mut table, "hy", hy);
    Ok(table)
}

type Accessor = fn(&mut DetectorThresholds) -> &mut f64;

/// Detector parameter groups and the label bits each group decides.
fn threshold_groups() -> Vec<(Vec<Accessor>, Vec<LabelBit>)> {
    vec![
        (
            vec![|t| &mut t.noise_present],
            vec![LabelBit::NoiseLow, LabelBit::NoiseMid, LabelBit::NoiseHigh],
        ),
        (vec![|t| &mut t.jpeg_blockiness], vec![LabelBit::Jpeg]),
        (
            vec![|t| &mut t.haze_floor, |t| &mut t.haze_dark, |t| {
                &mut t.haze_contrast
            }],
            vec![LabelBit::Haze],
        ),
        (
            vec![
                |t| &mut t.lowlight_highlight,
                |t| &mut t.lowlight_mean,
                |t| &mut t.lowlight_dark_fraction,
            ],
            vec![LabelBit::LowLight],
        ),
        (
            vec![|t| &mut t.rain_ratio, |t| &mut t.rain_density_min, |t| {
                &mut t.rain_density_max
            }],
            vec![LabelBit::Rain],
        ),
        // the blur decision reads the grid threshold, so it is fitted after it
        (
            vec![|t| &mut t.lowres_fraction, |t| &mut t.lowres_grid],
            vec![LabelBit::LowRes],
        ),
        (
            vec![|t| &mut t.blur_sharpness, |t| &mut t.motion_anisotropy],
            vec![LabelBit::MotionBlur, LabelBit::DefocusBlur],
        ),
    ]
}

/// Recall minus the false-positive rate on degraded negatives, summed over
/// `bits`, with a steep penalty once the pristine false-positive rate exceeds
/// `max_fpr`.
fn group_objective(
    preds: &[LabelVector],
    items: &[SweepItem],
    bits: &[LabelBit],
    max_fpr: f64,
) -> f64 {
    let mut score = 0.0;
    for &bit in bits {
        let (mut tp, mut pos, mut fp, mut neg, mut pfp, mut pn) =
            (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
        for (p, it) in preds.iter().zip(items) {
            let hit = p.get(bit);
            if it.label.get(bit) {
                pos += 1;
                tp += hit as usize;
            } else if it.pristine {
                pn += 1;
                pfp += hit as usize;
            } else {
                neg += 1;
                fp += hit as usize;
            }
        }
        let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let pristine = rate(pfp, pn);
        score += rate(tp, pos) - rate(fp, neg) - 10.0 * (pristine - max_fpr).max(0.0);
    }
    score
}

/// Coordinate search over a multiplicative grid around the shipped defaults.
/// Candidates are visited in a fixed order and only a strict improvement
/// moves the estimate, so the result is deterministic.
fn fit_thresholds(
    items: &[SweepItem],
    defaults: &DetectorThresholds,
    max_fpr: f64,
) -> DetectorThresholds {
    let mut t = defaults.clone();
    let grid: Vec<f64> = (-16..=16).map(|k| 2f64.powf(k as f64 / 8.0)).collect();
    for (params, bits) in threshold_groups() {
        let eval = |t: &DetectorThresholds| {
            let preds: Vec<LabelVector> =
                items.iter().map(|it| it.detectors.to_vector(t)).collect();
            group_objective(&preds, items, &bits, max_fpr)
        };
        let mut best = eval(&t);
        for _pass in 0..2 {
            for acc in &params {
                let centre = *acc(&mut t);
                for g in &grid {
                    let mut cand = t.clone();
                    *acc(&mut cand) = centre * g;
                    let s = eval(&cand);
                    if s > best + 1e-12 {
                        best = s;
                        t = cand;
                    }
                }
            }
        }
    }
    t
}

fn detector_rates(
    items: &[SweepItem],
    t: &DetectorThresholds,
) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let preds: Vec<LabelVector> = items.iter().map(|it| it.detectors.to_vector(t)).collect();
    let mut recall = BTreeMap::new();
    let mut fpr = BTreeMap::new();
    let n_pristine = items.iter().filter(|it| it.pristine).count().max(1);
    for i in 0..10 {
        let bit = LabelBit::from_index(i).expect("index");
        let pos: Vec<usize> = (0..items.len())
            .filter(|&k| items[k].label.get(bit))
            .collect();
        if !pos.is_empty() {
            let hit = pos.iter().filter(|&&k| preds[k].get(bit)).count();
            recall.insert(bit.name().to_string(), hit as f64 / pos.len() as f64);
        }
        let pf = (0..items.len())
            .filter(|&k| items[k].pristine && preds[k].get(bit))
            .count();
        fpr.insert(bit.name().to_string(), pf as f64 / n_pristine as f64);
    }
    (recall, fpr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_balanced_and_deterministic() {
        let opts = CalibrationOptions::default();
        let a = sweep_recipes(16, &opts);
        let b = sweep_recipes(16, &opts);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16 * 4);
        let mut counts = BTreeMap::new();
        for (_, r) in a.iter().filter(|(_, r)| r.steps.len() == 1) {
            *counts.entry(r.steps[0].kind()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 8);
        assert!(counts.values().all(|&c| c == 6));
        assert!(a.iter().all(|(_, r)| r.validate().is_ok()));
    }

    #[test]
    fn missing_file_is_calibration_missing() {
        let e = Calibration::load("/nonexistent/calibration.json").unwrap_err();
        assert!(matches!(e, Error::CalibrationMissing(_)));
    }
}
