//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use iragent::calibration::{calibrate, Calibration, CalibrationOptions};
use iragent::imagecore::to_luma;
use iragent::iqa::IqaContext;
use iragent::synth::corpus;
use iragent::ImageF;

pub const SMALL_SIZE: usize = 96;

/// A quick calibration on 50 small synthetic scenes, fitted once and cached
/// under the cargo test scratch directory.
pub fn small_calibration() -> Calibration {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("small_calibration_v1.json");
    if let Ok(cal) = Calibration::load(&path) {
        return cal;
    }
    let opts = CalibrationOptions {
        seed: 3,
        singles_per_image: 1,
        mixes_per_image: 1,
        ..CalibrationOptions::default()
    };
    let cal = calibrate(&corpus(50, SMALL_SIZE, 900), &opts).expect("calibration");
    // another test binary may be writing the same file; write then rename
    let tmp = path.with_extension(format!("{}.tmp", std::process::id()));
    cal.save(&tmp).expect("save calibration");
    std::fs::rename(&tmp, &path).expect("rename calibration");
    cal
}

pub fn small_context() -> IqaContext {
    small_calibration().iqa_context().expect("context")
}

/// PSNR straight from the definition, peak 1, capped at 99 dB.
pub fn psnr_oracle(a: &ImageF, b: &ImageF) -> f64 {
    let mut sse = 0.0f64;
    let mut n = 0usize;
    for c in 0..3 {
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.plane(c).get(x, y) as f64 - b.plane(c).get(x, y) as f64;
                sse += d * d;
                n += 1;
            }
        }
    }
    (10.0 * (1.0 / (sse / n as f64)).log10()).min(99.0)
}

/// SSIM oracle: explicit 11x11 weighted statistics at every valid window position.
pub fn ssim_oracle(a: &ImageF, b: &ImageF) -> f64 {
    let (x, y) = (to_luma(a), to_luma(b));
    let mut w = [[0.0f64; 11]; 11];
    let mut s = 0.0;
    for (j, row) in w.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            s += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (width, height) = x.dims();
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=height - 11 {
        for ox in 0..=width - 11 {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let g = w[j][i] / s;
                    let p = x.get(ox + i, oy + j) as f64;
                    let q = y.get(ox + i, oy + j) as f64;
                    mx += g * p;
                    my += g * q;
                    xx += g * p * p;
                    yy += g * q * q;
                    xy += g * p * q;
                }
            }
            let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}
