use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nss::{nss_features, Features, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::ImageF;

/// Indices of the variance-like features, which are log-compressed before regression.
fn is_variance_slot(i: usize) -> bool {
    let j = i % 18;
    j == 1 || (j >= 2 && matches!((j - 2) % 4, 1 | 2))
}

/// Ridge regressor from NSS features to a distortion index in `[0, 100]`.
///
/// Inputs are log-compressed where they are variances, standardised, and
/// expanded with their squares so the linear model can bend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrisqueRegressor {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

fn compress(f: &Features) -> [f64; FEATURE_DIM] {
    let mut out = *f;
    for (i, v) in out.iter_mut().enumerate() {
        if is_variance_slot(i) {
            *v = (v.max(0.0) + 1e-6).ln();
        }
    }
    out
}

impl BrisqueRegressor {
    fn design_row(&self, f: &Features) -> Vec<f64> {
        let c = compress(f);
        let z: Vec<f64> = (0..FEATURE_DIM)
            .map(|i| ((c[i] - self.center[i]) / self.scale[i]).clamp(-8.0, 8.0))
            .collect();
        let mut row = z.clone();
        row.extend(z.iter().map(|v| v * v));
        row
    }

    /// Closed-form ridge fit: `(X^T X + lambda I)^-1 X^T (y - mean y)` on
    /// centred design columns.
    pub fn train(features: &[Features], targets: &[f64], lambda: f64) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch(features.len(), targets.len()));
        }
        if features.len() < 2 {
            return Err(Error::Empty("regressor training set"));
        }
        let n = features.len();
        let comp: Vec<[f64; FEATURE_DIM]> = features.iter().map(compress).collect();
        let mut center = vec![0.0; FEATURE_DIM];
        let mut scale = vec![0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            let col: Vec<f64> = comp.iter().map(|r| r[i]).collect();
            let m = crate::stats::mean(&col);
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            center[i] = m;
            scale[i] = if sd > 1e-12 { sd } else { 1.0 };
        }
        let mut reg = Self {
            center,
            scale,
            weights: vec![],
            intercept: 0.0,
            lambda,
        };
        let rows: Vec<Vec<f64>> = features.iter().map(|f| reg.design_row(f)).collect();
        let p = rows[0].len();
        let x = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
        let col_mean = DVector::from_fn(p, |c, _| x.column(c).mean());
        let mut xc = x.clone();
        for c in 0..p {
            let m = col_mean[c];
            xc.column_mut(c).add_scalar_mut(-m);
        }
        let y = DVector::from_column_slice(targets);
        let ym = y.mean();
        let yc = y.add_scalar(-ym);
        let a = xc.transpose() * &xc + DMatrix::identity(p, p) * lambda;
        let b = xc.transpose() * yc;
        let w = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge system not positive definite".into()))?
            .solve(&b);
        reg.intercept = ym - w.dot(&col_mean);
        reg.weights = w.iter().copied().collect();
        Ok(reg)
    }

    /// Unclamped linear prediction.
    pub fn predict_raw(&self, f: &Features) -> f64 {
        let row = self.design_row(f);
        self.intercept
            + row
                .iter()
                .zip(&self.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn predict(&self, f: &Features) -> f64 {
        let v = self.predict_raw(f);
        if v.is_finite() {
            v.clamp(0.0, 100.0)
        } else {
            100.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.center.len() == FEATURE_DIM
            && self.scale.len() == FEATURE_DIM
            && self.weights.len() == 2 * FEATURE_DIM
            && self.intercept.is_finite();
        if !ok {
            return Err(Error::ModelMissing("brisque regressor"));
        }
        Ok(())
    }
}

/// Distortion index in `[0, 100]`; higher is worse.
pub fn brisque_score(img: &ImageF, regressor: &BrisqueRegressor) -> Result<f64> {
    Ok(regressor.predict(&nss_features(img)?))
}
