//! No-reference quality metrics and their signed aggregation.
//!
//! Five metrics fill the slots `v = [ni, br, cp, cl, hy]`:
//!
//! * `ni`: Mahalanobis distance of patch NSS statistics to a pristine model (lower is better)
//! * `br`: ridge-regressed distortion index in `[0, 100]` (lower is better)
//! * `cp`: cumulative probability of blur detection (higher is better)
//! * `cl`: global appearance proxy from colourfulness, contrast and entropy
//! * `hy`: tile anomaly proxy from blockiness and MSCN kurtosis
//!
//! [`quality_score`] combines them as `(cp + cl + hy - ni - br) / 5`, either on
//! raw values or on percentile-normalised ones.

mod brisque;
mod cpbd;
mod niqe;
pub mod nss;
mod proxies;

pub use brisque::{brisque_score, BrisqueRegressor};
pub use cpbd::{cpbd, cpbd_score, CpbdOutcome};
pub use niqe::{
    corpus_digest, fit_naturalness, mahalanobis, niqe_score, CorpusDescriptor, NaturalnessModel,
    PercentileRange, PercentileTable, TileReference, MIN_CORPUS,
};
pub use nss::{mscn, nss_features, Features, FEATURE_DIM};
pub use proxies::{
    anomaly_level, clarity_components, clarity_proxy, colorfulness, local_distortion_proxy,
    tile_anomalies, ClarityComponents,
};

pub(crate) use cpbd::cpbd_luma;
pub(crate) use niqe::niqe_luma;
pub(crate) use proxies::{clarity_from, hy_from};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{to_luma, Plane};
use crate::ImageF;

pub const SLOT_NAMES: [&str; 5] = ["ni", "br", "cp", "cl", "hy"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub ni: f64,
    pub br: f64,
    pub cp: f64,
    pub cl: f64,
    pub hy: f64,
    /// Percentile-normalised `[ni, br, cp, cl, hy]`, each in `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<[f64; 5]>,
}

impl MetricVector {
    pub fn raw(ni: f64, br: f64, cp: f64, cl: f64, hy: f64) -> Self {
        Self {
            ni,
            br,
            cp,
            cl,
            hy,
            normalized: None,
        }
    }

    pub fn raw_slots(&self) -> [f64; 5] {
        [self.ni, self.br, self.cp, self.cl, self.hy]
    }

    pub fn is_finite(&self) -> bool {
        self.raw_slots().iter().all(|v| v.is_finite())
            && self
                .normalized
                .map_or(true, |n| n.iter().all(|v| v.is_finite()))
    }

    /// Fills `normalized` from a table holding ranges for all five slots.
    pub fn normalize_with(&mut self, table: &PercentileTable) -> Result<()> {
        let raw = self.raw_slots();
        let mut out = [0.0; 5];
        for (i, key) in SLOT_NAMES.iter().enumerate() {
            let r = table
                .get(*key)
                .ok_or(Error::MissingSlots("percentile range for a metric slot"))?;
            out[i] = r.normalize(raw[i]);
        }
        self.normalized = Some(out);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QualityMode {
    /// Raw metric values, as in the original aggregation.
    RawEq1,
    /// Percentile-normalised slots with `ni` and `br` flipped to `1 - x`.
    #[default]
    Normalized,
}

impl std::str::FromStr for QualityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raweq1" | "raw" => Ok(QualityMode::RawEq1),
            "normalized" | "normalised" => Ok(QualityMode::Normalized),
            _ => Err(Error::ParamOutOfRange(format!(
                "unknown quality mode {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub value: f64,
    pub mode: QualityMode,
}

/// `(cp + cl + hy - ni - br) / 5`. In normalised mode the slots are the
/// percentile-normalised values and `ni`, `br` enter as `1 - x`, which differs
/// from the raw form by a constant offset of `2/5` only.
pub fn quality_score(v: &MetricVector, mode: QualityMode) -> Result<QualityScore> {
    let value = match mode {
        QualityMode::RawEq1 => (v.cp + v.cl + v.hy - v.ni - v.br) / 5.0,
        QualityMode::Normalized => {
            let [ni, br, cp, cl, hy] = v
                .normalized
                .ok_or(Error::MissingSlots("normalized metric slots"))?;
            (cp + cl + hy + (1.0 - ni) + (1.0 - br)) / 5.0
        }
    };
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite quality".into()));
    }
    Ok(QualityScore { value, mode })
}

/// Fitted artefacts needed to score an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqaContext {
    pub model: NaturalnessModel,
    pub regressor: BrisqueRegressor,
}

impl IqaContext {
    pub fn new(model: NaturalnessModel, regressor: BrisqueRegressor) -> Result<Self> {
        model.validate()?;
        regressor.validate()?;
        Ok(Self { model, regressor })
    }

    pub fn measure(&self, img: &ImageF) -> Result<MetricVector> {
        measure(img, &self.model, &self.regressor)
    }

    pub fn quality(&self, img: &ImageF, mode: QualityMode) -> Result<f64> {
        Ok(quality_score(&self.measure(img)?, mode)?.value)
    }
}

/// Unnormalised slot values plus the clarity and anomaly inputs, before any
/// percentile table is consulted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct RawMeasurement {
    pub ni: f64,
    pub br: f64,
    pub cp: f64,
    pub clarity: ClarityComponents,
    pub anomaly: f64,
}

pub(crate) fn raw_measurement(
    img: &ImageF,
    model: &NaturalnessModel,
    reg: &BrisqueRegressor,
) -> Result<RawMeasurement> {
    let (w, h) = img.dims();
    if w.min(h) < 64 {
        return Err(Error::ImageTooSmall {
            min: 64,
            width: w,
            height: h,
        });
    }
    let luma: Plane<f64> = to_luma(img).cast();
    let feats = nss::nss_features_plane(&luma)?;
    Ok(RawMeasurement {
        ni: niqe_luma(&luma, model)?,
        br: reg.predict(&feats),
        cp: cpbd::cpbd_luma(&luma).score,
        clarity: clarity_components(img),
        anomaly: anomaly_level(&luma, &model.tile_reference)?,
    })
}

pub(crate) fn finish_measurement(
    raw: &RawMeasurement,
    table: &PercentileTable,
) -> Result<MetricVector> {
    let mut v = MetricVector::raw(
        raw.ni,
        raw.br,
        raw.cp,
        clarity_from(&raw.clarity, table)?,
        hy_from(raw.anomaly, table)?,
    );
    if SLOT_NAMES.iter().all(|k| table.contains_key(*k)) {
        v.normalize_with(table)?;
    }
    Ok(v)
}

/// All five slots; `normalized` is filled when the model's table covers them.
pub fn measure(
    img: &ImageF,
    model: &NaturalnessModel,
    regressor: &BrisqueRegressor,
) -> Result<MetricVector> {
    let raw = raw_measurement(img, model, regressor)?;
    finish_measurement(&raw, &model.percentile_table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eq1_substitutions() {
        let q = quality_score(
            &MetricVector::raw(0.0, 0.0, 1.0, 1.0, 1.0),
            QualityMode::RawEq1,
        )
        .unwrap();
        assert!((q.value - 0.6).abs() < 1e-15);
        let z = quality_score(
            &MetricVector::raw(0.0, 0.0, 0.0, 0.0, 0.0),
            QualityMode::RawEq1,
        )
        .unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn normalized_requires_slots() {
        let v = MetricVector::raw(1.0, 2.0, 0.5, 0.5, 0.5);
        assert!(matches!(
            quality_score(&v, QualityMode::Normalized),
            Err(Error::MissingSlots(_))
        ));
    }

    #[test]
    fn normalized_orientation() {
        let mut v = MetricVector::raw(0.0, 0.0, 0.0, 0.0, 0.0);
        v.normalized = Some([0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            quality_score(&v, QualityMode::Normalized).unwrap().value,
            1.0
        );
        v.normalized = Some([1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            quality_score(&v, QualityMode::Normalized).unwrap().value,
            0.0
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "RawEq1".parse::<QualityMode>().unwrap(),
            QualityMode::RawEq1
        );
        assert_eq!(
            "normalized".parse::<QualityMode>().unwrap(),
            QualityMode::Normalized
        );
        assert!("x".parse::<QualityMode>().is_err());
    }

    proptest! {
        #[test]
        fn raw_slot_coefficients_are_exact(
            base in prop::array::uniform5(-50.0f64..50.0),
            slot in 0usize..5,
            delta in 1e-3f64..10.0,
        ) {
            let mk = |s: [f64; 5]| MetricVector::raw(s[0], s[1], s[2], s[3], s[4]);
            let mut bumped = base;
            bumped[slot] += delta;
            let q0 = quality_score(&mk(base), QualityMode::RawEq1).unwrap().value;
            let q1 = quality_score(&mk(bumped), QualityMode::RawEq1).unwrap().value;
            let sign = if slot < 2 { -1.0 } else { 1.0 };
            let tol = 1e-12 * (1.0 + base.iter().map(|v| v.abs()).sum::<f64>() + delta);
            prop_assert!((q1 - q0 - sign * delta / 5.0).abs() <= tol);
        }
    }
}
