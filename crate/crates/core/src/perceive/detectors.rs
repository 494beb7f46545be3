//! Independent classical detectors, one per degradation question.

use serde::{Deserialize, Serialize};

use super::DetectorThresholds;
use crate::degrade::Severity;
use crate::error::{Error, Result};
use crate::imagecore::{
    fft2, laplacian, median_filter, min_filter, reflect101, resize_plane, sobel, to_luma, Plane,
    ResizeFilter,
};
use crate::labels::{LabelBit, PerceptionVector};
use crate::ImageF;

/// Confidence from a signed margin: 0.5 at the threshold, approaching 1 far from it.
pub(crate) fn logistic_confidence(margin: f64, scale: f64) -> f64 {
    let z = (margin.abs() / scale.max(1e-12)).min(50.0);
    let c = 1.0 / (1.0 + (-z).exp());
    if c.is_finite() {
        c.clamp(0.5, 1.0)
    } else {
        0.5
    }
}

/// Linear ramp confidence: 0.5 at the threshold, 1 once `|margin| >= scale`.
fn ramp_confidence(margin: f64, scale: f64) -> f64 {
    (0.5 + 0.5 * (margin.abs() / scale.max(1e-12))).clamp(0.5, 1.0)
}

fn luma(img: &ImageF) -> Plane<f64> {
    to_luma(img).cast()
}

// ---------------------------------------------------------------- noise

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub present: bool,
    pub severity: Severity,
    pub confidence: f64,
    pub sigma: f64,
}

pub fn immerkaer_channel(p: &Plane<f64>) -> f64 {
    let (w, h) = p.dims();
    let (gx, gy) = sobel(p);
    let mut mags: Vec<f64> = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            mags.push(gx.get(x, y).hypot(gy.get(x, y)));
        }
    }
    // structure-dominated pixels (top decile of gradient) are excluded
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = crate::stats::percentile_sorted(&sorted, 90.0);
    let (mut acc, mut n) = (0.0, 0usize);
    let mut i = 0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let g = |dx: isize, dy: isize| {
                p.get((x as isize + dx) as usize, (y as isize + dy) as usize)
            };
            if mags[i] <= cut {
                let l = g(-1, -1) - 2.0 * g(0, -1) + g(1, -1) - 2.0 * g(-1, 0) + 4.0 * g(0, 0)
                    - 2.0 * g(1, 0)
                    + g(-1, 1)
                    - 2.0 * g(0, 1)
                    + g(1, 1);
                acc += l.abs();
                n += 1;
            }
            i += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    (std::f64::consts::PI / 2.0).sqrt() * acc / (6.0 * n as f64)
}

/// Immerkaer noise estimate, averaged over the three channels, in `[0, 1]` units.
pub fn estimate_noise_sigma(img: &ImageF) -> Result<f64> {
    let (w, h) = img.dims();
    if w.min(h) < 32 {
        return Err(Error::ImageTooSmall {
            min: 32,
            width: w,
            height: h,
        });
    }
    let s: f64 = (0..3)
        .map(|c| immerkaer_channel(&img.plane(c).cast()))
        .sum();
    Ok((s / 3.0).max(0.0))
}

pub fn classify_noise(sigma: f64, t: &DetectorThresholds) -> NoiseReport {
    let present = sigma >= t.noise_present;
    let severity = if sigma >= t.noise_high {
        Severity::High
    } else if sigma >= t.noise_mid {
        Severity::Mid
    } else {
        Severity::Low
    };
    let nearest = [t.noise_present, t.noise_mid, t.noise_high]
        .iter()
        .map(|th| sigma - th)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    NoiseReport {
        present,
        severity,
        confidence: logistic_confidence(nearest, 2.0 / 255.0),
        sigma,
    }
}

pub fn detect_noise(img: &ImageF, t: &DetectorThresholds) -> NoiseReport {
    let sigma = estimate_noise_sigma(img).unwrap_or(0.0);
    classify_noise(sigma, t)
}

// ---------------------------------------------------------------- jpeg

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JpegReport {
    pub present: bool,
    pub confidence: f64,
    pub blockiness: f64,
}

/// Mean absolute step across 8-aligned boundaries over the mean step elsewhere.
/// A constant image scores exactly 1.
pub fn blockiness(l: &Plane<f64>) -> f64 {
    let (w, h) = l.dims();
    let (mut on, mut on_n, mut off, mut off_n) = (0.0, 0usize, 0.0, 0usize);
    let mut add = |d: f64, boundary: bool| {
        if boundary {
            on += d.abs();
            on_n += 1;
        } else {
            off += d.abs();
            off_n += 1;
        }
    };
    for y in 0..h {
        for x in 1..w {
            add(l.get(x, y) - l.get(x - 1, y), x % 8 == 0);
        }
    }
    for y in 1..h {
        for x in 0..w {
            add(l.get(x, y) - l.get(x, y - 1), y % 8 == 0);
        }
    }
    if on_n == 0 || off_n == 0 {
        return 1.0;
    }
    let off = off / off_n as f64;
    if off < 1e-9 {
        return 1.0;
    }
    (on / on_n as f64) / off
}

pub fn detect_jpeg(img: &ImageF, t: &DetectorThresholds) -> JpegReport {
    classify_jpeg(blockiness(&luma(img)), t)
}

pub fn classify_jpeg(b: f64, t: &DetectorThresholds) -> JpegReport {
    JpegReport {
        present: b >= t.jpeg_blockiness,
        confidence: logistic_confidence(b - t.jpeg_blockiness, 0.05),
        blockiness: b,
    }
}

// ---------------------------------------------------------------- haze

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazeReport {
    pub present: bool,
    pub confidence: f64,
    pub dark_channel: f64,
    pub contrast: f64,
    /// 1st percentile of the dark channel.
    pub dark_floor: f64,
    pub transmission: f64,
    pub airlight: f64,
    /// Set when the image is too bright and flat to tell haze from content.
    pub ambiguous: bool,
}

pub const DARK_CHANNEL_RADIUS: usize = 7;

/// 15x15 minimum filter over the per-pixel channel minimum.
pub fn dark_channel(img: &ImageF) -> Plane<f64> {
    let (w, h) = img.dims();
    let m = Plane::from_fn(w, h, |x, y| {
        let p = img.pixel(x, y);
        p[0].min(p[1]).min(p[2]) as f64
    });
    min_filter(&m, DARK_CHANNEL_RADIUS)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HazeStats {
    pub dark_channel: f64,
    pub contrast: f64,
    /// Haze lifts even the darkest regions, so a low percentile of the dark
    /// channel stays well above zero.
    pub dark_floor: f64,
    pub airlight: f64,
}

/// Mean dark channel, RMS luma contrast, dark-channel 1st percentile and the
/// mean of the brightest 0.1% of the dark channel.
pub fn haze_stats(img: &ImageF) -> HazeStats {
    let dc = dark_channel(img);
    let mut sorted = dc.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (sorted.len() / 1000).max(1);
    HazeStats {
        dark_channel: dc.mean(),
        contrast: luma(img).variance().sqrt(),
        dark_floor: crate::stats::percentile_sorted(&sorted, 1.0),
        airlight: sorted[sorted.len() - k..].iter().sum::<f64>() / k as f64,
    }
}

pub fn detect_haze(img: &ImageF, t: &DetectorThresholds) -> HazeReport {
    classify_haze(&haze_stats(img), t)
}

pub fn classify_haze(st: &HazeStats, t: &DetectorThresholds) -> HazeReport {
    let (d, c, a) = (st.dark_channel, st.contrast, st.airlight);
    let trans = if a > 1e-9 {
        (1.0 - d / a).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let present = d >= t.haze_dark && c <= t.haze_contrast && st.dark_floor >= t.haze_floor;
    let ambiguous = d >= 0.95 && c <= 0.01;
    // the binding condition decides the margin
    let m = (d - t.haze_dark)
        .min(t.haze_contrast - c)
        .min(st.dark_floor - t.haze_floor);
    let margin = if present { m } else { m.min(0.0) };
    let confidence = if ambiguous {
        0.5
    } else {
        logistic_confidence(margin, 0.03)
    };
    HazeReport {
        present,
        confidence,
        dark_channel: d,
        contrast: c,
        dark_floor: st.dark_floor,
        transmission: trans,
        airlight: a,
        ambiguous,
    }
}

// ---------------------------------------------------------------- low light

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowLightReport {
    pub present: bool,
    pub confidence: f64,
    pub mean_luma: f64,
    pub dark_fraction: f64,
    pub highlight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowLightStats {
    pub mean_luma: f64,
    /// Fraction of luma samples below the dark level.
    pub dark_fraction: f64,
    /// 99th percentile of luma. Under-exposure pulls highlights down too.
    pub highlight: f64,
}

pub fn low_light_stats(img: &ImageF, dark_level: f64) -> LowLightStats {
    let l = luma(img);
    let mut sorted = l.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let dark = sorted.partition_point(|&v| v < dark_level);
    LowLightStats {
        mean_luma: l.mean(),
        dark_fraction: dark as f64 / sorted.len() as f64,
        highlight: crate::stats::percentile_sorted(&sorted, 99.0),
    }
}

pub fn detect_low_light(img: &ImageF, t: &DetectorThresholds) -> LowLightReport {
    classify_low_light(&low_light_stats(img, t.lowlight_dark_level), t)
}

pub fn classify_low_light(st: &LowLightStats, t: &DetectorThresholds) -> LowLightReport {
    let (m, f, hl) = (st.mean_luma, st.dark_fraction, st.highlight);
    let present =
        m <= t.lowlight_mean && f >= t.lowlight_dark_fraction && hl <= t.lowlight_highlight;
    let nm = (t.lowlight_mean - m) / t.lowlight_mean.max(1e-9);
    let nf = (f - t.lowlight_dark_fraction) / (1.0 - t.lowlight_dark_fraction).max(1e-9);
    let nh = (t.lowlight_highlight - hl) / t.lowlight_highlight.max(1e-9);
    LowLightReport {
        present,
        confidence: ramp_confidence(nm.min(nf).min(nh), 1.0),
        mean_luma: m,
        dark_fraction: f,
        highlight: hl,
    }
}

// ---------------------------------------------------------------- rain

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainReport {
    pub present: bool,
    pub confidence: f64,
    /// Dominant streak orientation, degrees counter-clockwise from +x.
    pub angle: f64,
    /// Peak near-vertical bin energy over the median bin energy.
    pub orientation_ratio: f64,
    /// Fraction of pixels with a bright thin residual.
    pub density: f64,
}

pub const RAIN_BINS: usize = 12;
const RAIN_RESIDUAL_LEVEL: f64 = 0.04;

/// Bright thin structures: the positive part of `luma - median5x5(luma)`.
pub fn rain_residual(l: &Plane<f64>) -> Plane<f64> {
    let med = median_filter(l, 2);
    l.zip_map(&med, |a, b| (a - b).max(0.0)).expect("dims")
}

/// Structure-orientation histogram of the residual (15 degree bins over [0, 180)).
pub fn orientation_histogram(r: &Plane<f64>) -> [f64; RAIN_BINS] {
    let (gx, gy) = sobel(r);
    let mut hist = [0.0; RAIN_BINS];
    for (a, b) in gx.as_slice().iter().zip(gy.as_slice()) {
        let e = a * a + b * b;
        if e <= 0.0 {
            continue;
        }
        // gradient angle in y-up coordinates; the structure runs perpendicular
        let ang = ((-b).atan2(*a).to_degrees() + 90.0).rem_euclid(180.0);
        hist[((ang / 15.0) as usize).min(RAIN_BINS - 1)] += e;
    }
    hist
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RainStats {
    pub orientation_ratio: f64,
    pub density: f64,
    pub angle: f64,
    pub energy: f64,
}

pub fn rain_stats(img: &ImageF) -> RainStats {
    let l = luma(img);
    let r = rain_residual(&l);
    let density = r
        .as_slice()
        .iter()
        .filter(|&&v| v >= RAIN_RESIDUAL_LEVEL)
        .count() as f64
        / r.len() as f64;
    let hist = orientation_histogram(&r);
    let total: f64 = hist.iter().sum();
    let mut sorted = hist.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = 0.5 * (sorted[RAIN_BINS / 2 - 1] + sorted[RAIN_BINS / 2]);
    // bins 4..8 cover [60, 120)
    let (peak_bin, peak) = (4..8)
        .map(|i| (i, hist[i]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("bins");
    let ratio = if total <= 1e-12 {
        0.0
    } else if med <= 1e-15 {
        f64::from(RAIN_BINS as u32)
    } else {
        peak / med
    };
    RainStats {
        orientation_ratio: ratio,
        density,
        angle: peak_bin as f64 * 15.0 + 7.5,
        energy: total,
    }
}

pub fn detect_rain(img: &ImageF, t: &DetectorThresholds) -> RainReport {
    classify_rain(&rain_stats(img), t)
}

pub fn classify_rain(st: &RainStats, t: &DetectorThresholds) -> RainReport {
    let in_range = st.density >= t.rain_density_min && st.density <= t.rain_density_max;
    let present = st.energy > 1e-12 && st.orientation_ratio >= t.rain_ratio && in_range;
    let margin = if in_range {
        (st.orientation_ratio - t.rain_ratio) / t.rain_ratio
    } else {
        -1.0
    };
    RainReport {
        present,
        confidence: logistic_confidence(margin, 0.25),
        angle: st.angle,
        orientation_ratio: st.orientation_ratio,
        density: st.density,
    }
}

// ---------------------------------------------------------------- blur

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlurKind {
    #[default]
    None,
    Motion,
    Defocus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurReport {
    pub kind: BlurKind,
    pub confidence: f64,
    /// Variance of the Laplacian of luma over the variance of luma.
    pub sharpness: f64,
    /// Structure-tensor eigenvalue ratio.
    pub anisotropy: f64,
    /// Motion direction, degrees counter-clockwise from +x in `[0, 180)`.
    pub angle: f64,
    /// Motion length or defocus radius in pixels; 0 when unresolved.
    pub extent: f64,
}

/// `(lambda1 / lambda2, motion angle)` of the global structure tensor. The
/// motion direction is the eigenvector with the least gradient energy.
pub fn structure_anisotropy(l: &Plane<f64>) -> (f64, f64) {
    structure_anisotropy_denoised(l, 0.0)
}

/// As [`structure_anisotropy`], after removing the expected gradient energy
/// of white noise with variance `noise_var` from both axes.
pub fn structure_anisotropy_denoised(l: &Plane<f64>, noise_var: f64) -> (f64, f64) {
    let (gx, gy) = sobel(l);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (x, y) in gx.as_slice().iter().zip(gy.as_slice()) {
        a += x * x;
        b += x * y;
        c += y * y;
    }
    // Sobel taps square-sum to 12
    let floor = 12.0 * noise_var * l.len() as f64;
    a = (a - floor).max(0.0);
    c = (c - floor).max(0.0);
    let tr = a + c;
    let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    let rho = if l2 > 1e-12 {
        l1 / l2
    } else if l1 > 1e-12 {
        1e6
    } else {
        1.0
    };
    // eigenvector of the smaller eigenvalue, pixel coordinates (y down)
    let (ex, ey) = if b.abs() > 1e-15 {
        (b, l2 - a)
    } else if a <= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let angle = (-ey).atan2(ex).to_degrees().rem_euclid(180.0);
    (rho.min(1e6), angle)
}

/// Hann-windowed power spectrum of the zero-mean plane.
pub fn windowed_power(l: &Plane<f64>) -> Plane<f64> {
    let (w, h) = l.dims();
    let m = l.mean();
    let hann = |i: usize, n: usize| {
        0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n as f64 - 1.0)).cos()
    };
    let win = Plane::from_fn(w, h, |x, y| (l.get(x, y) - m) * hann(x, w) * hann(y, h));
    fft2(&win).power()
}

/// First pronounced local minimum of a 1-D log-power profile indexed by frequency bin.
fn first_minimum(profile: &[f64]) -> Option<usize> {
    let sm: Vec<f64> = (0..profile.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(profile.len() - 1);
            profile[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    (2..sm.len().saturating_sub(2)).find(|&i| {
        sm[i] < sm[i - 1] && sm[i] <= sm[i + 1] && {
            let right = sm[i + 1..(i + 4).min(sm.len())]
                .iter()
                .cloned()
                .fold(f64::MIN, f64::max);
            right - sm[i] > 0.15
        }
    })
}

/// Spectral extent estimate: motion length `1/f0` along `angle`, or defocus
/// radius `0.61/f0` from the radial profile.
pub(crate) fn blur_extent(l: &Plane<f64>, kind: BlurKind, angle: f64) -> f64 {
    let (w, h) = l.dims();
    let p = windowed_power(l);
    let n = w.min(h) / 2;
    let profile: Vec<f64> = match kind {
        BlurKind::Motion => {
            let (s, c) = angle.to_radians().sin_cos();
            (0..n)
                .map(|r| {
                    // frequency along the motion direction, averaged over a thin strip
                    let mut acc = 0.0;
                    let mut cnt = 0.0;
                    for off in -2i32..=2 {
                        let fx = r as f64 * c + off as f64 * s;
                        let fy = -(r as f64) * s + off as f64 * c;
                        let u = (fx.round() as isize).rem_euclid(w as isize) as usize;
                        let v = (fy.round() as isize).rem_euclid(h as isize) as usize;
                        acc += (p.get(u, v) + 1e-12).ln();
                        cnt += 1.0;
                    }
                    acc / cnt
                })
                .collect()
        }
        _ => {
            let mut acc = vec![0.0; n];
            let mut cnt = vec![0.0; n];
            for v in 0..h {
                for u in 0..w {
                    let fu = crate::imagecore::bin_frequency(u, w) * w as f64;
                    let fv = crate::imagecore::bin_frequency(v, h) * h as f64;
                    let r = (fu * fu + fv * fv).sqrt().round() as usize;
                    if r < n {
                        acc[r] += (p.get(u, v) + 1e-12).ln();
                        cnt[r] += 1.0;
                    }
                }
            }
            acc.iter()
                .zip(&cnt)
                .map(|(a, c)| if *c > 0.0 { a / c } else { 0.0 })
                .collect()
        }
    };
    match first_minimum(&profile) {
        Some(i) => {
            let f0 = i as f64 / w.min(h) as f64;
            match kind {
                BlurKind::Motion => 1.0 / f0,
                _ => 0.61 / f0,
            }
        }
        None => 0.0,
    }
}

pub fn laplacian_variance(l: &Plane<f64>) -> f64 {
    laplacian(l).variance()
}

/// Below this luma variance an image carries no usable structure.
const FLAT_VARIANCE: f64 = 1e-6;

/// Noise-compensated `var(Laplacian) / var(luma)`; the 4-neighbour Laplacian
/// taps square-sum to 20.
fn denoised_sharpness(l: &Plane<f64>, noise_var: f64) -> f64 {
    let v = (l.variance() - noise_var).max(FLAT_VARIANCE);
    (laplacian_variance(l) - 20.0 * noise_var).max(0.0) / v
}

/// Evidence that an image was upsampled from a coarser pixel grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEvidence {
    /// Most likely integer upsampling factor.
    pub factor: usize,
    /// Spread of the re-sampling residual across grid phases, `max / min`.
    /// Near 1 for content without a preferred grid.
    pub ratio: f64,
}

pub const GRID_FACTORS: [usize; 3] = [2, 3, 4];
const GRID_MARGIN: usize = 8;

fn grid_size(n: usize, f: usize) -> usize {
    ((n + f / 2) / f).max(1)
}

/// Residual energy of box-downsampling by `f` and bicubic upsampling back,
/// for each of the `f` diagonal grid phases.
fn grid_phase_residuals(l: &Plane<f64>, f: usize) -> Vec<f64> {
    let (w, h) = l.dims();
    let (lw, lh) = (grid_size(w, f), grid_size(h, f));
    (0..f as isize)
        .map(|s| {
            let t = Plane::from_fn(w, h, |x, y| {
                l.get(reflect101(x as isize + s, w), reflect101(y as isize + s, h))
            });
            let u = resize_plane(
                &resize_plane(&t, lw, lh, ResizeFilter::Box),
                w,
                h,
                ResizeFilter::Bicubic,
            );
            let (mut acc, mut n) = (0.0, 0usize);
            for y in GRID_MARGIN..h.saturating_sub(GRID_MARGIN) {
                for x in GRID_MARGIN..w.saturating_sub(GRID_MARGIN) {
                    acc += (t.get(x, y) - u.get(x, y)).powi(2);
                    n += 1;
                }
            }
            acc / n.max(1) as f64
        })
        .collect()
}

/// Content upsampled from a grid re-samples almost losslessly in phase with
/// that grid and noticeably worse out of phase, while shift-invariant
/// processing such as optical blur shows no phase preference.
pub fn interpolation_grid(l: &Plane<f64>) -> GridEvidence {
    let (w, h) = l.dims();
    let mut best = GridEvidence {
        factor: 1,
        ratio: 1.0,
    };
    if w.min(h) < 4 * GRID_MARGIN {
        return best;
    }
    for f in GRID_FACTORS {
        let r = grid_phase_residuals(l, f);
        let mx = r.iter().cloned().fold(0.0, f64::max);
        let mn = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = (mx + 1e-12) / (mn + 1e-12);
        if ratio > best.ratio {
            best = GridEvidence { factor: f, ratio };
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurStats {
    /// Noise-compensated `var(Laplacian) / var(luma)`.
    pub sharpness: f64,
    /// The same measured after reducing to the detected pixel grid, so
    /// upsampling alone does not read as blur.
    pub native_sharpness: f64,
    pub grid: GridEvidence,
    pub anisotropy: f64,
    pub angle: f64,
    pub flat: bool,
}

fn blur_stats_with(l: &Plane<f64>, noise_var: f64, grid: GridEvidence) -> BlurStats {
    let flat = l.variance() < FLAT_VARIANCE;
    let (anisotropy, angle) = structure_anisotropy_denoised(l, noise_var);
    let sharpness = if flat {
        0.0
    } else {
        denoised_sharpness(l, noise_var)
    };
    let native_sharpness = if flat || grid.factor < 2 {
        sharpness
    } else {
        let (w, h) = l.dims();
        let f = grid.factor;
        let small = resize_plane(l, grid_size(w, f), grid_size(h, f), ResizeFilter::Box);
        denoised_sharpness(&small, noise_var / (f * f) as f64)
    };
    BlurStats {
        sharpness,
        native_sharpness,
        grid,
        anisotropy,
        angle,
        flat,
    }
}

pub fn blur_stats_luma(l: &Plane<f64>) -> BlurStats {
    let noise_var = immerkaer_channel(l).powi(2);
    blur_stats_with(l, noise_var, interpolation_grid(l))
}

pub fn blur_stats(img: &ImageF) -> BlurStats {
    blur_stats_luma(&luma(img))
}

impl BlurStats {
    /// Sharpness on the grid the content lives on under `t`.
    pub fn effective_sharpness(&self, t: &DetectorThresholds) -> f64 {
        if self.grid.ratio >= t.lowres_grid {
            self.native_sharpness
        } else {
            self.sharpness
        }
    }
}

pub fn classify_blur(st: &BlurStats, t: &DetectorThresholds) -> BlurKind {
    if st.flat || st.effective_sharpness(t) > t.blur_sharpness {
        BlurKind::None
    } else if st.anisotropy >= t.motion_anisotropy {
        BlurKind::Motion
    } else {
        BlurKind::Defocus
    }
}

pub fn detect_blur(img: &ImageF, t: &DetectorThresholds) -> BlurReport {
    let l = luma(img);
    let st = blur_stats_luma(&l);
    blur_report(&l, &st, t)
}

fn blur_report(l: &Plane<f64>, st: &BlurStats, t: &DetectorThresholds) -> BlurReport {
    let kind = classify_blur(st, t);
    let sharpness = st.effective_sharpness(t);
    let confidence = if st.flat {
        0.5
    } else {
        logistic_confidence(
            (sharpness.max(1e-12) / t.blur_sharpness.max(1e-12)).ln(),
            0.5,
        )
    };
    let extent = if kind == BlurKind::None {
        0.0
    } else {
        blur_extent(l, kind, st.angle)
    };
    BlurReport {
        kind,
        confidence,
        sharpness,
        anisotropy: st.anisotropy,
        angle: st.angle,
        extent: if extent.is_finite() { extent } else { 0.0 },
    }
}

// ---------------------------------------------------------------- low resolution

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowResReport {
    pub present: bool,
    pub confidence: f64,
    /// Share of non-DC spectral energy above 0.35 of Nyquist.
    pub hf_fraction: f64,
    /// Phase-residual spread of the best interpolation grid.
    pub grid_ratio: f64,
    pub scale: f64,
}

pub const LOWRES_CUTOFF: f64 = 0.35;

/// `(high-frequency energy fraction, cutoff radius in cycles/pixel)` after
/// removing a white-noise floor of variance `noise_var` from every bin.
pub fn spectral_profile(l: &Plane<f64>, noise_var: f64) -> (f64, f64) {
    let (w, h) = l.dims();
    let p = windowed_power(l);
    let nyq = 0.5;
    let hann_energy = |n: usize| {
        (0..n)
            .map(|i| {
                (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n as f64 - 1.0)).cos())
                    .powi(2)
            })
            .sum::<f64>()
    };
    let floor = noise_var * hann_energy(w) * hann_energy(h);
    let mut radial: Vec<(f64, f64)> = Vec::with_capacity(w * h);
    let (mut hi, mut tot) = (0.0, 0.0);
    for v in 0..h {
        for u in 0..w {
            let fu = crate::imagecore::bin_frequency(u, w);
            let fv = crate::imagecore::bin_frequency(v, h);
            let r = (fu * fu + fv * fv).sqrt();
            if r < 2.0 / w.min(h) as f64 {
                continue;
            }
            let e = (p.get(u, v) - floor).max(0.0);
            tot += e;
            if r >= LOWRES_CUTOFF * nyq {
                hi += e;
            }
            radial.push((r, e));
        }
    }
    if tot <= 1e-18 {
        return (1.0, nyq);
    }
    radial.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut cutoff = nyq;
    for (r, e) in &radial {
        acc += e;
        if acc >= 0.995 * tot {
            cutoff = *r;
            break;
        }
    }
    (hi / tot, cutoff.min(nyq))
}

pub fn detect_low_res(img: &ImageF, t: &DetectorThresholds) -> LowResReport {
    let l = luma(img);
    let (frac, cutoff) = spectral_profile(&l, immerkaer_channel(&l).powi(2));
    classify_low_res(frac, cutoff, &interpolation_grid(&l), t)
}

/// Upsampled content is both short of high frequencies and tied to a grid.
pub fn classify_low_res(
    frac: f64,
    cutoff: f64,
    grid: &GridEvidence,
    t: &DetectorThresholds,
) -> LowResReport {
    let gridded = grid.ratio >= t.lowres_grid;
    let present = frac <= t.lowres_fraction && gridded;
    let m_frac = (t.lowres_fraction.max(1e-12) / frac.max(1e-12)).ln();
    let m_grid = (grid.ratio.max(1e-12) / t.lowres_grid.max(1e-12)).ln();
    let margin = if present {
        m_frac.min(m_grid)
    } else {
        m_frac.min(m_grid).min(0.0)
    };
    LowResReport {
        present,
        confidence: logistic_confidence(margin, 0.5),
        hf_fraction: frac,
        grid_ratio: grid.ratio,
        scale: if gridded {
            grid.factor as f64
        } else {
            (0.5 / cutoff.max(1e-3)).clamp(1.0, 8.0)
        },
    }
}

// ---------------------------------------------------------------- all at once

/// Every threshold-independent statistic the detectors decide on. Computing
/// these once lets a threshold search re-classify an image cheaply.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorStats {
    pub sigma: f64,
    pub blockiness: f64,
    pub haze: HazeStats,
    pub low_light: LowLightStats,
    pub rain: RainStats,
    pub blur: BlurStats,
    pub hf_fraction: f64,
    pub cutoff: f64,
}

/// `dark_level` is the luma level below which a pixel counts as dark.
pub fn detector_stats(img: &ImageF, dark_level: f64) -> DetectorStats {
    let l = luma(img);
    let noise_var = immerkaer_channel(&l).powi(2);
    let (hf_fraction, cutoff) = spectral_profile(&l, noise_var);
    let grid = interpolation_grid(&l);
    DetectorStats {
        sigma: estimate_noise_sigma(img).unwrap_or(0.0),
        blockiness: blockiness(&l),
        haze: haze_stats(img),
        low_light: low_light_stats(img, dark_level),
        rain: rain_stats(img),
        blur: blur_stats_with(&l, noise_var, grid),
        hf_fraction,
        cutoff,
    }
}

impl DetectorStats {
    /// The label vector the detectors would report under `t`. `t.lowlight_dark_level`
    /// is assumed to match the level the stats were computed with.
    pub fn to_vector(&self, t: &DetectorThresholds) -> PerceptionVector {
        let mut v = PerceptionVector::empty();
        let noise = classify_noise(self.sigma, t);
        if noise.present {
            v.set(match noise.severity {
                Severity::Low => LabelBit::NoiseLow,
                Severity::Mid => LabelBit::NoiseMid,
                Severity::High => LabelBit::NoiseHigh,
            });
        }
        let blur = classify_blur(&self.blur, t);
        let flags = [
            (classify_jpeg(self.blockiness, t).present, LabelBit::Jpeg),
            (classify_rain(&self.rain, t).present, LabelBit::Rain),
            (classify_haze(&self.haze, t).present, LabelBit::Haze),
            (blur == BlurKind::Motion, LabelBit::MotionBlur),
            (blur == BlurKind::Defocus, LabelBit::DefocusBlur),
            (
                classify_low_light(&self.low_light, t).present,
                LabelBit::LowLight,
            ),
            (
                classify_low_res(self.hf_fraction, self.cutoff, &self.blur.grid, t).present,
                LabelBit::LowRes,
            ),
        ];
        for (on, bit) in flags {
            if on {
                v.set(bit);
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{apply_step, DegradationStep, StepParams};
    use crate::imagecore::Image;
    use crate::synth::natural_scene;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t() -> DetectorThresholds {
        DetectorThresholds::default()
    }

    #[test]
    fn smooth_gradient_has_tiny_noise_estimate() {
        let img = ImageF::from_fn(128, 128, |x, y| [(x + y) as f32 / 256.0; 3]);
        assert!(estimate_noise_sigma(&img).unwrap() <= 3.0 / 255.0);
    }

    #[test]
    fn constant_plus_gaussian_noise() {
        let img: ImageF = Image::gray(128, 128, 0.5);
        let step = DegradationStep::noise(Severity::Mid);
        let noisy = apply_step(&img, &step, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = estimate_noise_sigma(&noisy).unwrap() * 255.0;
        assert!((20.0..=30.0).contains(&s), "{s}");
    }

    #[test]
    fn noise_threshold_tie_is_positive() {
        let r = classify_noise(t().noise_present, &t());
        assert!(r.present && r.severity == Severity::Low);
        assert_eq!(
            classify_noise(t().noise_high, &t()).severity,
            Severity::High
        );
    }

    #[test]
    fn constant_image_blockiness_guard() {
        let img = ImageF::gray(64, 64, 0.4);
        let r = detect_jpeg(&img, &t());
        assert_eq!(r.blockiness, 1.0);
        assert!(!r.present);
    }

    #[test]
    fn white_image_is_ambiguous_haze() {
        let r = detect_haze(&ImageF::gray(64, 64, 1.0), &t());
        assert!(r.present && r.ambiguous && r.confidence <= 0.5);
    }

    #[test]
    fn black_image_is_low_light() {
        let r = detect_low_light(&ImageF::gray(64, 64, 0.0), &t());
        assert!(r.present);
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn flat_image_has_no_rain() {
        assert!(!detect_rain(&ImageF::gray(64, 64, 0.3), &t()).present);
    }

    #[test]
    fn impulse_is_not_low_res() {
        let mut p = Plane::new(64, 64);
        p.set(32, 32, 1.0f32);
        let img = ImageF::from_luma(&p);
        assert!(!detect_low_res(&img, &t()).present);
    }

    #[test]
    fn motion_angle_recovered() {
        let img = natural_scene(128, 128, 11);
        for angle in [0.0f32, 45.0, 90.0, 135.0] {
            let s = DegradationStep::new(StepParams::MotionBlur {
                length: 15.0,
                angle,
            });
            let b = apply_step(&img, &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let (rho, est) = structure_anisotropy(&luma(&b));
            let d = (est - angle as f64).rem_euclid(180.0);
            let d = d.min(180.0 - d);
            assert!(rho > 2.5 && d <= 15.0, "angle {angle}: rho {rho} est {est}");
        }
    }
}
