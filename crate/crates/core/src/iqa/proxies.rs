//! Classical stand-ins for the two learned metric slots: global appearance
//! (clarity) and tile-level anomaly (local distortion).

use super::niqe::{table_range, NaturalnessModel, PercentileTable, TileReference};
use super::nss::mscn_unchecked;
use crate::error::{Error, Result};
use crate::imagecore::{to_luma, Plane};
use crate::ImageF;

pub const TILE: usize = 32;
const BLOCK: usize = 8;
const BLOCK_C: f64 = 1.0 / 255.0;

/// Raw components of the clarity proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClarityComponents {
    pub colorfulness: f64,
    pub rms_contrast: f64,
    /// Shannon entropy of the 256-bin luma histogram, in bits.
    pub entropy: f64,
}

/// Hasler-Suesstrunk colourfulness on `[0, 1]` samples.
pub fn colorfulness(img: &ImageF) -> f64 {
    let n = (img.width() * img.height()) as f64;
    let (r, g, b) = (
        img.plane(0).as_slice(),
        img.plane(1).as_slice(),
        img.plane(2).as_slice(),
    );
    let (mut s_rg, mut s_yb, mut q_rg, mut q_yb) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..r.len() {
        let (r, g, b) = (r[i] as f64, g[i] as f64, b[i] as f64);
        let rg = r - g;
        let yb = 0.5 * (r + g) - b;
        s_rg += rg;
        s_yb += yb;
        q_rg += rg * rg;
        q_yb += yb * yb;
    }
    let (m_rg, m_yb) = (s_rg / n, s_yb / n);
    let var_rg = (q_rg / n - m_rg * m_rg).max(0.0);
    let var_yb = (q_yb / n - m_yb * m_yb).max(0.0);
    (var_rg + var_yb).sqrt() + 0.3 * (m_rg * m_rg + m_yb * m_yb).sqrt()
}

pub fn luma_entropy(luma: &Plane<f64>) -> f64 {
    let mut hist = [0usize; 256];
    for &v in luma.as_slice() {
        hist[(v.clamp(0.0, 1.0) * 255.0 + 0.5) as usize] += 1;
    }
    let n = luma.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn clarity_components(img: &ImageF) -> ClarityComponents {
    let luma: Plane<f64> = to_luma(img).cast();
    ClarityComponents {
        colorfulness: colorfulness(img),
        rms_contrast: luma.variance().sqrt(),
        entropy: luma_entropy(&luma),
    }
}

pub(crate) fn clarity_from(c: &ClarityComponents, table: &PercentileTable) -> Result<f64> {
    let cf = table_range(table, "colorfulness")?.normalize(c.colorfulness);
    let rc = table_range(table, "rms_contrast")?.normalize(c.rms_contrast);
    let en = table_range(table, "entropy")?.normalize(c.entropy);
    Ok((0.4 * cf + 0.3 * rc + 0.3 * en).clamp(0.0, 1.0))
}

/// `0.4 colourfulness' + 0.3 rms_contrast' + 0.3 entropy'` with each component
/// normalised by the model's percentile table. Higher is better.
pub fn clarity_proxy(img: &ImageF, model: &NaturalnessModel) -> Result<f64> {
    clarity_from(&clarity_components(img), &model.percentile_table)
}

fn tile_origins(n: usize) -> impl Iterator<Item = usize> {
    (0..n / TILE).map(|i| i * TILE)
}

/// Excess edge strength across the 8-pixel grid inside one tile, `max(0, ratio - 1)`.
pub fn tile_blockiness(luma: &Plane<f64>, x0: usize, y0: usize) -> f64 {
    let (mut on, mut on_n, mut off, mut off_n) = (0.0, 0usize, 0.0, 0usize);
    for y in y0..y0 + TILE {
        for x in x0.max(1)..x0 + TILE {
            let d = (luma.get(x, y) - luma.get(x - 1, y)).abs();
            if x % BLOCK == 0 {
                on += d;
                on_n += 1;
            } else {
                off += d;
                off_n += 1;
            }
        }
    }
    for y in y0.max(1)..y0 + TILE {
        for x in x0..x0 + TILE {
            let d = (luma.get(x, y) - luma.get(x, y - 1)).abs();
            if y % BLOCK == 0 {
                on += d;
                on_n += 1;
            } else {
                off += d;
                off_n += 1;
            }
        }
    }
    if on_n == 0 || off_n == 0 {
        return 0.0;
    }
    let ratio = (on / on_n as f64 + BLOCK_C) / (off / off_n as f64 + BLOCK_C);
    (ratio - 1.0).max(0.0)
}

fn kurtosis(m: &Plane<f64>, x0: usize, y0: usize) -> f64 {
    let (mut s2, mut s4) = (0.0, 0.0);
    for y in y0..y0 + TILE {
        for x in x0..x0 + TILE {
            let v = m.get(x, y);
            s2 += v * v;
            s4 += v * v * v * v;
        }
    }
    let n = (TILE * TILE) as f64;
    let (m2, m4) = (s2 / n, s4 / n);
    if m2 < 1e-10 {
        return 3.0;
    }
    m4 / (m2 * m2)
}

/// `ln` kurtosis of the MSCN field for every full tile.
pub(crate) fn tile_log_kurtosis(luma: &Plane<f64>) -> Vec<f64> {
    if luma.width().min(luma.height()) < 16 {
        return vec![];
    }
    let m = mscn_unchecked(luma);
    let mut out = Vec::new();
    for y0 in tile_origins(luma.height()) {
        for x0 in tile_origins(luma.width()) {
            out.push(kurtosis(&m, x0, y0).max(1e-6).ln());
        }
    }
    out
}

/// Per-tile anomaly: the larger of the blockiness index and the kurtosis
/// deviation from pristine, scaled by three robust standard deviations.
pub fn tile_anomalies(luma: &Plane<f64>, reference: &TileReference) -> Vec<f64> {
    let m = mscn_unchecked(luma);
    let mut out = Vec::new();
    for y0 in tile_origins(luma.height()) {
        for x0 in tile_origins(luma.width()) {
            let block = tile_blockiness(luma, x0, y0);
            let lk = kurtosis(&m, x0, y0).max(1e-6).ln();
            let kdev =
                (lk - reference.log_kurtosis_median).abs() / (3.0 * reference.log_kurtosis_spread);
            out.push(block.max(kdev));
        }
    }
    out
}

/// Mean of the worst quarter of tile anomalies.
pub fn anomaly_level(luma: &Plane<f64>, reference: &TileReference) -> Result<f64> {
    let (w, h) = luma.dims();
    if w.min(h) < 64 {
        return Err(Error::ImageTooSmall {
            min: 64,
            width: w,
            height: h,
        });
    }
    let mut a = tile_anomalies(luma, reference);
    a.sort_by(|x, y| y.total_cmp(x));
    let k = a.len().div_ceil(4).max(1);
    Ok(a[..k].iter().sum::<f64>() / k as f64)
}

/// `1 - normalised anomaly level`, in `[0, 1]`; higher is better.
pub fn local_distortion_proxy(img: &ImageF, model: &NaturalnessModel) -> Result<f64> {
    let luma: Plane<f64> = to_luma(img).cast();
    hy_from(
        anomaly_level(&luma, &model.tile_reference)?,
        &model.percentile_table,
    )
}

pub(crate) fn hy_from(level: f64, table: &PercentileTable) -> Result<f64> {
    Ok(1.0 - table_range(table, "tile_anomaly")?.normalize(level))
}
