use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::nss::{local_moments, nss_features_plane, Features, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::imagecore::{to_luma, Plane};
use crate::ImageF;

pub const PATCH: usize = 96;
pub const PATCH_STRIDE: usize = 48;
pub const MIN_CORPUS: usize = 50;
const MIN_SHARP_PATCHES: usize = 4;

/// `(p1, p99)` of one metric over the calibration population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileRange {
    pub p1: f64,
    pub p99: f64,
}

impl PercentileRange {
    /// `clamp((x - p1) / (p99 - p1), 0, 1)`; a degenerate range maps to a step at `p1`.
    pub fn normalize(&self, x: f64) -> f64 {
        let span = self.p99 - self.p1;
        if span.abs() < 1e-12 {
            return if x >= self.p1 { 1.0 } else { 0.0 };
        }
        ((x - self.p1) / span).clamp(0.0, 1.0)
    }

    pub fn from_values(v: &[f64]) -> Self {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            p1: crate::stats::percentile_sorted(&s, 1.0),
            p99: crate::stats::percentile_sorted(&s, 99.0),
        }
    }
}

/// Metric name to normalisation range. Keys used by this crate: `ni`, `br`,
/// `cp`, `cl`, `hy`, `colorfulness`, `rms_contrast`, `entropy`, `tile_anomaly`.
pub type PercentileTable = BTreeMap<String, PercentileRange>;

pub(crate) fn table_range(table: &PercentileTable, key: &'static str) -> Result<PercentileRange> {
    table.get(key).copied().ok_or(Error::ModelMissing(key))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusDescriptor {
    pub images: usize,
    pub patches: usize,
    /// SHA-256 over the sorted per-image digests.
    pub digest: String,
}

/// Reference distribution of per-tile MSCN log-kurtosis on pristine content.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileReference {
    pub log_kurtosis_median: f64,
    pub log_kurtosis_spread: f64,
}

impl Default for TileReference {
    fn default() -> Self {
        Self {
            log_kurtosis_median: 3f64.ln(),
            log_kurtosis_spread: 0.5,
        }
    }
}

/// Multivariate Gaussian of patch NSS features on pristine content.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalnessModel {
    pub feature_mean: Vec<f64>,
    /// Row-major `36 x 36`.
    pub feature_cov: Vec<Vec<f64>>,
    pub fitted_on: CorpusDescriptor,
    pub tile_reference: TileReference,
    pub percentile_table: PercentileTable,
}

impl NaturalnessModel {
    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(FEATURE_DIM, FEATURE_DIM, |i, j| self.feature_cov[i][j])
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.feature_mean)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.feature_mean.len() == FEATURE_DIM
            && self.feature_cov.len() == FEATURE_DIM
            && self.feature_cov.iter().all(|r| r.len() == FEATURE_DIM)
            && self.feature_mean.iter().all(|v| v.is_finite())
            && self.feature_cov.iter().flatten().all(|v| v.is_finite());
        if !ok {
            return Err(Error::CalibrationMissing(
                "malformed naturalness model".into(),
            ));
        }
        Ok(())
    }

    pub fn percentile(&self, key: &'static str) -> Result<PercentileRange> {
        table_range(&self.percentile_table, key)
    }
}

/// Top-left corners of all `PATCH`-sized windows at `PATCH_STRIDE`.
fn patch_origins(n: usize) -> Vec<usize> {
    if n < PATCH {
        return vec![];
    }
    (0..=(n - PATCH) / PATCH_STRIDE)
        .map(|i| i * PATCH_STRIDE)
        .collect()
}

/// Features of every patch; images smaller than one patch contribute themselves.
pub(crate) fn patch_features(luma: &Plane<f64>, sharpest_half: bool) -> Result<Vec<Features>> {
    let (w, h) = luma.dims();
    let xs = patch_origins(w);
    let ys = patch_origins(h);
    if xs.is_empty() || ys.is_empty() {
        return Ok(vec![nss_features_plane(luma)?]);
    }
    let mut patches: Vec<(f64, usize, usize)> = Vec::new();
    let sigma = if sharpest_half {
        Some(local_moments(luma).1)
    } else {
        None
    };
    for &y in &ys {
        for &x in &xs {
            let sharp = sigma
                .as_ref()
                .map_or(0.0, |s| s.crop(x, y, PATCH, PATCH).mean());
            patches.push((sharp, x, y));
        }
    }
    if sharpest_half {
        patches.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let keep = patches
            .len()
            .div_ceil(2)
            .max(MIN_SHARP_PATCHES)
            .min(patches.len());
        patches.truncate(keep);
    }
    patches
        .iter()
        .map(|&(_, x, y)| nss_features_plane(&luma.crop(x, y, PATCH, PATCH)))
        .collect()
}

/// Sample mean and covariance (`n - 1` denominator, zero for a single sample).
/// Rows are sorted first so the result does not depend on input order.
pub(crate) fn mean_cov(rows: &[Features]) -> (DVector<f64>, DMatrix<f64>) {
    let mut sorted: Vec<&Features> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = sorted.len();
    let mut mu = DVector::zeros(FEATURE_DIM);
    for r in &sorted {
        mu += DVector::from_column_slice(&r[..]);
    }
    mu /= n.max(1) as f64;
    let mut cov = DMatrix::zeros(FEATURE_DIM, FEATURE_DIM);
    if n > 1 {
        for r in &sorted {
            let d = DVector::from_column_slice(&r[..]) - &mu;
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
    }
    (mu, cov)
}

/// Regularised Mahalanobis distance `sqrt(d^T (S + eps I)^-1 d)` with
/// `eps = 1e-6 * trace(S) / dim`.
pub fn mahalanobis(d: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let n = s.nrows();
    let eps = (1e-6 * s.trace() / n as f64).max(1e-12);
    let reg = s + DMatrix::identity(n, n) * eps;
    let x = match reg.clone().cholesky() {
        Some(c) => c.solve(d),
        None => reg
            .lu()
            .solve(d)
            .ok_or_else(|| Error::Numerical("singular covariance".into()))?,
    };
    Ok(d.dot(&x).max(0.0).sqrt())
}

/// Fits the pristine feature Gaussian. The percentile table is left empty;
/// [`crate::calibration`] fills it from a degraded sweep.
pub fn fit_naturalness(images: &[ImageF]) -> Result<NaturalnessModel> {
    if images.len() < MIN_CORPUS {
        return Err(Error::CorpusTooSmall {
            needed: MIN_CORPUS,
            found: images.len(),
        });
    }
    let mut rows = Vec::new();
    let mut logk = Vec::new();
    for img in images {
        let luma: Plane<f64> = to_luma(img).cast();
        rows.extend(patch_features(&luma, true)?);
        logk.extend(super::proxies::tile_log_kurtosis(&luma));
    }
    let (mu, cov) = mean_cov(&rows);
    let eig = SymmetricEigen::new(cov.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-8 {
        return Err(Error::Numerical(format!(
            "feature covariance not PSD (min eigenvalue {min_eig})"
        )));
    }
    let med = crate::stats::median(&logk);
    let dev: Vec<f64> = logk.iter().map(|v| (v - med).abs()).collect();
    let spread = (crate::stats::median(&dev) * 1.4826).max(1e-3);
    Ok(NaturalnessModel {
        feature_mean: mu.iter().copied().collect(),
        feature_cov: (0..FEATURE_DIM)
            .map(|i| (0..FEATURE_DIM).map(|j| cov[(i, j)]).collect())
            .collect(),
        fitted_on: CorpusDescriptor {
            images: images.len(),
            patches: rows.len(),
            digest: corpus_digest(images),
        },
        tile_reference: TileReference {
            log_kurtosis_median: med,
            log_kurtosis_spread: spread,
        },
        percentile_table: PercentileTable::new(),
    })
}

/// Order-independent digest of a set of images (8-bit content).
pub fn corpus_digest(images: &[ImageF]) -> String {
    use sha2::{Digest, Sha256};
    let mut per: Vec<[u8; 32]> = images
        .iter()
        .map(|img| {
            let mut h = Sha256::new();
            h.update((img.width() as u64).to_le_bytes());
            h.update((img.height() as u64).to_le_bytes());
            h.update(crate::imagecore::to_rgb8(img).as_raw());
            h.finalize().into()
        })
        .collect();
    per.sort();
    let mut h = Sha256::new();
    for d in &per {
        h.update(d);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// NIQE-style distance between the image's patch statistics and the model. Higher is worse.
pub fn niqe_score(img: &ImageF, model: &NaturalnessModel) -> Result<f64> {
    niqe_luma(&to_luma(img).cast(), model)
}

pub(crate) fn niqe_luma(luma: &Plane<f64>, model: &NaturalnessModel) -> Result<f64> {
    let rows = patch_features(luma, false)?;
    let (mu, cov) = mean_cov(&rows);
    let d = mu - model.mean_vector();
    let s = (cov + model.cov_matrix()) * 0.5;
    mahalanobis(&d, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mahalanobis_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2usize, 4, 7] {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let s = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            let d = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let eps = 1e-6 * s.trace() / n as f64;
            // Gauss-Jordan inverse, independent of the factorisation used above
            let mut m = s.clone() + DMatrix::identity(n, n) * eps;
            let mut inv = DMatrix::<f64>::identity(n, n);
            for c in 0..n {
                let p = (c..n)
                    .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
                    .unwrap();
                m.swap_rows(c, p);
                inv.swap_rows(c, p);
                let piv = m[(c, c)];
                for k in 0..n {
                    m[(c, k)] /= piv;
                    inv[(c, k)] /= piv;
                }
                for r in 0..n {
                    if r != c {
                        let f = m[(r, c)];
                        for k in 0..n {
                            m[(r, k)] -= f * m[(c, k)];
                            inv[(r, k)] -= f * inv[(c, k)];
                        }
                    }
                }
            }
            let want = (d.transpose() * inv * &d)[(0, 0)].sqrt();
            assert!((mahalanobis(&d, &s).unwrap() - want).abs() < 1e-6);
        }
    }

    #[test]
    fn percentile_range_normalize() {
        let r = PercentileRange { p1: 2.0, p99: 6.0 };
        assert_eq!(r.normalize(1.0), 0.0);
        assert_eq!(r.normalize(4.0), 0.5);
        assert_eq!(r.normalize(9.0), 1.0);
    }

    #[test]
    fn corpus_too_small() {
        let imgs = vec![ImageF::gray(64, 64, 0.5); 3];
        assert!(matches!(
            fit_naturalness(&imgs),
            Err(Error::CorpusTooSmall { .. })
        ));
    }

    #[test]
    fn patch_grid() {
        assert_eq!(patch_origins(256), vec![0, 48, 96, 144]);
        assert_eq!(patch_origins(96), vec![0]);
        assert!(patch_origins(95).is_empty());
    }
}
