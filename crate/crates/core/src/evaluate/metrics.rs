use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_1d, to_luma, Image, Plane, Scalar};

/// Reported PSNR for identical images, and the ceiling for near-identical ones.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Full-reference scores of one output against its reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub psnr_db: f64,
    pub ssim: f64,
}

fn same_dims<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Peak 1, MSE over all samples of all channels, capped at [`PSNR_CAP`].
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.sample_count() as f64;
    let mse = a
        .samples()
        .zip(b.samples())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        / n;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Correlation of `p` with the normalised window over every position where it
/// fits entirely.
fn filter_valid(p: &Plane<f64>, g: &[f64]) -> Plane<f64> {
    let k = g.len();
    let (w, h) = p.dims();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let rows: Plane<f64> = Plane::from_fn(ow, h, |x, y| {
        g.iter()
            .enumerate()
            .map(|(i, t)| t * p.get(x + i, y))
            .sum::<f64>()
    });
    Plane::from_fn(ow, oh, |x, y| {
        g.iter()
            .enumerate()
            .map(|(i, t)| t * rows.get(x, y + i))
            .sum::<f64>()
    })
}

/// Luma SSIM with an 11x11 Gaussian window (sigma 1.5), `L = 1`, averaged
/// over the positions where the window fits.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = a.dims();
    if w.min(h) < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            min: SSIM_WINDOW,
            width: w,
            height: h,
        });
    }
    let x: Plane<f64> = to_luma(a).cast();
    let y: Plane<f64> = to_luma(b).cast();
    let g = gaussian_1d(SSIM_SIGMA, SSIM_WINDOW / 2);
    let mx = filter_valid(&x, &g);
    let my = filter_valid(&y, &g);
    let xx = filter_valid(&x.zip_map(&x, |u, v| u * v)?, &g);
    let yy = filter_valid(&y.zip_map(&y, |u, v| u * v)?, &g);
    let xy = filter_valid(&x.zip_map(&y, |u, v| u * v)?, &g);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx.as_slice()[i], my.as_slice()[i]);
        let sx = xx.as_slice()[i] - ux * ux;
        let sy = yy.as_slice()[i] - uy * uy;
        let sxy = xy.as_slice()[i] - ux * uy;
        total +=
            ((2.0 * ux * uy + c1) * (2.0 * sxy + c2)) / ((ux * ux + uy * uy + c1) * (sx + sy + c2));
    }
    Ok(total / mx.len() as f64)
}

pub fn pair_score<T: Scalar>(output: &Image<T>, reference: &Image<T>) -> Result<PairScore> {
    Ok(PairScore {
        psnr_db: psnr(output, reference)?,
        ssim: ssim(output, reference)?,
    })
}
