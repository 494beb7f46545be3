use crate::imagecore::{to_luma, Image, Plane};
use crate::stats::percentile;
use crate::ImageF;

/// Brightens toward `target_mean` and stretches the result.
///
/// With luma mean `m < target_mean` every sample is raised to the power
/// `ln(target_mean) / ln(m)`, which maps a sample at the mean onto the target.
/// A linear stretch then maps the `low_pct` and `high_pct` percentiles of all
/// samples to 0 and 1.
pub fn adaptive_gamma(img: &ImageF, target_mean: f32, low_pct: f32, high_pct: f32) -> ImageF {
    let m = to_luma(img).mean().max(1e-3);
    let lifted = if m < target_mean as f64 {
        let g = ((target_mean as f64).ln() / m.ln()) as f32;
        img.map_samples(|v| v.max(0.0).powf(g))
    } else {
        img.clone()
    };
    let samples: Vec<f64> = lifted.samples().map(f64::from).collect();
    let lo = percentile(&samples, low_pct as f64) as f32;
    let hi = percentile(&samples, high_pct as f64) as f32;
    if hi - lo < 1e-6 {
        return lifted;
    }
    lifted.map_samples(|v| (v - lo) / (hi - lo))
}

/// Contrast-limited equalisation of luma over a `tiles x tiles` grid, with
/// bilinear blending between tile mappings. Colour is scaled by the luma ratio.
pub fn tile_equalize(img: &ImageF, tiles: usize, clip: f32) -> ImageF {
    const BINS: usize = 256;
    let l = to_luma(img);
    let (w, h) = l.dims();
    let tx = tiles.min(w).max(1);
    let ty = tiles.min(h).max(1);
    let bin = |v: f32| ((v.clamp(0.0, 1.0) * BINS as f32) as usize).min(BINS - 1);
    let bounds = |i: usize, n: usize, t: usize| (i * n / t, (i + 1) * n / t);
    let mut maps = vec![[0.0f32; BINS]; tx * ty];
    for j in 0..ty {
        for i in 0..tx {
            let (x0, x1) = bounds(i, w, tx);
            let (y0, y1) = bounds(j, h, ty);
            let mut hist = [0.0f64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin(l.get(x, y))] += 1.0;
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            let limit = (clip as f64 * count / BINS as f64).max(1.0);
            let mut excess = 0.0;
            for v in hist.iter_mut() {
                if *v > limit {
                    excess += *v - limit;
                    *v = limit;
                }
            }
            let mut cdf = 0.0;
            let map = &mut maps[j * tx + i];
            for (b, v) in hist.iter().enumerate() {
                cdf += v + excess / BINS as f64;
                map[b] = (cdf / count) as f32;
            }
        }
    }
    // tile centres along each axis
    let centre = |i: usize, n: usize, t: usize| {
        let (a, b) = bounds(i, n, t);
        (a + b) as f32 / 2.0
    };
    let locate = |p: f32, n: usize, t: usize| -> (usize, usize, f32) {
        if p <= centre(0, n, t) {
            return (0, 0, 0.0);
        }
        for i in 0..t - 1 {
            let (c0, c1) = (centre(i, n, t), centre(i + 1, n, t));
            if p <= c1 {
                return (i, i + 1, (p - c0) / (c1 - c0));
            }
        }
        (t - 1, t - 1, 0.0)
    };
    let eq = Plane::from_fn(w, h, |x, y| {
        let (i0, i1, fx) = locate(x as f32 + 0.5, w, tx);
        let (j0, j1, fy) = locate(y as f32 + 0.5, h, ty);
        let b = bin(l.get(x, y));
        let m = |i: usize, j: usize| maps[j * tx + i][b];
        (1.0 - fy) * ((1.0 - fx) * m(i0, j0) + fx * m(i1, j0))
            + fy * ((1.0 - fx) * m(i0, j1) + fx * m(i1, j1))
    });
    let planes = std::array::from_fn(|c| {
        Plane::from_fn(w, h, |x, y| {
            let (lo, ln) = (l.get(x, y), eq.get(x, y));
            if lo > 1e-4 {
                img.plane(c).get(x, y) * ln / lo
            } else {
                ln
            }
        })
    });
    Image::from_planes(planes).expect("dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::natural_scene;

    #[test]
    fn gamma_lifts_dark_image() {
        let img = natural_scene(64, 64, 1).map_samples(|v| 0.6 * v.powf(2.5));
        let out = adaptive_gamma(&img, 0.45, 2.0, 98.0);
        assert!(to_luma(&out).mean() > to_luma(&img).mean() + 0.15);
    }

    #[test]
    fn stretch_spans_unit_range() {
        let img = Image::from_fn(32, 32, |x, _| [0.5 + x as f32 / 200.0; 3]);
        let out = adaptive_gamma(&img, 0.45, 0.0, 100.0);
        let s: Vec<f32> = out.samples().collect();
        assert!(s.iter().cloned().fold(1.0, f32::min).abs() < 1e-6);
        assert!((s.iter().cloned().fold(0.0, f32::max) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equalisation_keeps_constant_tiles_constant() {
        let img: ImageF = Image::filled(64, 64, [0.3; 3]);
        let out = tile_equalize(&img, 8, 2.0);
        let first = out.plane(0).get(0, 0);
        assert!(out.samples().all(|v| (v - first).abs() < 1e-5));
    }

    #[test]
    fn equalisation_raises_dark_contrast() {
        let img = natural_scene(64, 64, 2).map_samples(|v| 0.3 * v);
        let out = tile_equalize(&img, 8, 2.0);
        assert!(to_luma(&out).variance() > to_luma(&img).variance());
    }
}
