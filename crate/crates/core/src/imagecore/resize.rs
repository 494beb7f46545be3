use serde::{Deserialize, Serialize};

use super::image::{reflect101, Image, Plane};
use super::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    /// Keys cubic convolution, `a = -0.5`.
    Bicubic,
    /// Exact area averaging.
    Box,
}

/// Resamples every plane to `w x h`; output is clamped to `[0, 1]`.
pub fn resize<T: Scalar>(img: &Image<T>, w: usize, h: usize, filter: ResizeFilter) -> Image<T> {
    assert!(w > 0 && h > 0, "target dimensions must be positive");
    let planes = img.planes();
    Image::from_planes([
        resize_plane(&planes[0], w, h, filter),
        resize_plane(&planes[1], w, h, filter),
        resize_plane(&planes[2], w, h, filter),
    ])
    .expect("planes share dimensions")
}

/// Plane resampling without clamping.
pub fn resize_plane<T: Scalar>(p: &Plane<T>, w: usize, h: usize, filter: ResizeFilter) -> Plane<T> {
    let wx = weights_1d(p.width(), w, filter);
    let wy = weights_1d(p.height(), h, filter);
    let mut tmp = Plane::new(w, p.height());
    for y in 0..p.height() {
        let row = p.row(y);
        for (x, taps) in wx.iter().enumerate() {
            let v = taps
                .iter()
                .fold(T::zero(), |acc, &(i, t)| acc + T::lit(t) * row[i]);
            tmp.set(x, y, v);
        }
    }
    let mut out = Plane::new(w, h);
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..w {
            let v = taps
                .iter()
                .fold(T::zero(), |acc, &(i, t)| acc + T::lit(t) * tmp.get(x, i));
            out.set(x, y, v);
        }
    }
    out
}

fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

fn weights_1d(n_in: usize, n_out: usize, filter: ResizeFilter) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| match filter {
            ResizeFilter::Bicubic => {
                let src = (o as f64 + 0.5) * scale - 0.5;
                let base = src.floor() as isize;
                let mut taps: Vec<(usize, f64)> = (base - 1..=base + 2)
                    .map(|i| (reflect101(i, n_in), cubic(src - i as f64)))
                    .filter(|&(_, t)| t != 0.0)
                    .collect();
                let s: f64 = taps.iter().map(|t| t.1).sum();
                taps.iter_mut().for_each(|t| t.1 /= s);
                taps
            }
            ResizeFilter::Box => {
                let lo = o as f64 * scale;
                let hi = lo + scale;
                let mut taps = Vec::new();
                let mut i = lo.floor() as usize;
                while (i as f64) < hi && i < n_in {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    if overlap > 0.0 {
                        taps.push((i, overlap / scale));
                    }
                    i += 1;
                }
                taps
            }
        })
        .collect()
}
