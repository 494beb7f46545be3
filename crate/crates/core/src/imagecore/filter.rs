//! Spatial filters over [`Plane`]s. Every filter uses reflect-101 borders.

use super::image::{reflect101, Plane};
use super::kernel::{gaussian_1d, Kernel2D};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Full 2-D convolution (kernel flipped) with reflect-101 borders.
pub fn convolve2d<T: Scalar>(p: &Plane<T>, k: &Kernel2D<T>) -> Result<Plane<T>> {
    let (w, h) = p.dims();
    let lim = 2 * w.min(h);
    if k.width() >= lim || k.height() >= lim {
        return Err(Error::KernelTooLarge {
            kw: k.width(),
            kh: k.height(),
            width: w,
            height: h,
        });
    }
    let (kw, kh) = (k.width(), k.height());
    let (cx, cy) = ((kw / 2) as isize, (kh / 2) as isize);
    // non-zero taps only; motion and disk kernels are sparse
    let taps: Vec<(isize, isize, T)> = (0..kh)
        .flat_map(|ky| (0..kw).map(move |kx| (kx, ky)))
        .filter_map(|(kx, ky)| {
            let t = k.tap(kx, ky);
            (t != T::zero()).then(|| (cx - kx as isize, cy - ky as isize, t))
        })
        .collect();
    let mut out = Plane::new(w, h);
    let interior = |x: usize, y: usize| {
        x as isize >= cx
            && (x as isize) < w as isize - cx
            && y as isize >= cy
            && (y as isize) < h as isize - cy
    };
    let src = p.as_slice();
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            if interior(x, y) {
                for &(dx, dy, t) in &taps {
                    let xx = (x as isize + dx) as usize;
                    let yy = (y as isize + dy) as usize;
                    acc = acc + t * src[yy * w + xx];
                }
            } else {
                for &(dx, dy, t) in &taps {
                    acc = acc + t * p.get_reflect(x as isize + dx, y as isize + dy);
                }
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Separable convolution with (symmetric or not) row and column taps.
pub fn convolve_separable<T: Scalar>(p: &Plane<T>, kx: &[T], ky: &[T]) -> Plane<T> {
    let (w, h) = p.dims();
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        let row = p.row(y);
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &t) in kx.iter().enumerate() {
                let xx = reflect101(x as isize + rx - i as isize, w);
                acc = acc + t * row[xx];
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &t) in ky.iter().enumerate() {
                let yy = reflect101(y as isize + ry - i as isize, h);
                acc = acc + t * tmp.get(x, yy);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Gaussian blur with the window truncated at `radius`.
pub fn gaussian_blur<T: Scalar>(p: &Plane<T>, sigma: f64, radius: usize) -> Plane<T> {
    let g: Vec<T> = gaussian_1d(sigma, radius).into_iter().map(T::lit).collect();
    convolve_separable(p, &g, &g)
}

/// Mean over a `(2r+1)^2` window.
pub fn box_mean<T: Scalar>(p: &Plane<T>, radius: usize) -> Plane<T> {
    let (w, h) = p.dims();
    let r = radius as isize;
    let n = T::lit((2 * radius + 1) as f64);
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        let row = p.row(y);
        let mut acc = T::zero();
        for i in -r..=r {
            acc = acc + row[reflect101(i, w)];
        }
        for x in 0..w {
            tmp.set(x, y, acc / n);
            let add = row[reflect101(x as isize + r + 1, w)];
            let sub = row[reflect101(x as isize - r, w)];
            acc = acc + add - sub;
        }
    }
    let mut out = Plane::new(w, h);
    for x in 0..w {
        let mut acc = T::zero();
        for i in -r..=r {
            acc = acc + tmp.get(x, reflect101(i, h));
        }
        for y in 0..h {
            out.set(x, y, acc / n);
            let add = tmp.get(x, reflect101(y as isize + r + 1, h));
            let sub = tmp.get(x, reflect101(y as isize - r, h));
            acc = acc + add - sub;
        }
    }
    out
}

/// Minimum over a `(2r+1)^2` window (separable).
pub fn min_filter<T: Scalar>(p: &Plane<T>, radius: usize) -> Plane<T> {
    rank_separable(p, radius, |a, b| a.min(b))
}

/// Maximum over a `(2r+1)^2` window (separable).
pub fn max_filter<T: Scalar>(p: &Plane<T>, radius: usize) -> Plane<T> {
    rank_separable(p, radius, |a, b| a.max(b))
}

fn rank_separable<T: Scalar>(p: &Plane<T>, radius: usize, op: impl Fn(T, T) -> T) -> Plane<T> {
    let (w, h) = p.dims();
    let r = radius as isize;
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        let row = p.row(y);
        for x in 0..w {
            let mut m = row[x];
            for i in -r..=r {
                m = op(m, row[reflect101(x as isize + i, w)]);
            }
            tmp.set(x, y, m);
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut m = tmp.get(x, y);
            for i in -r..=r {
                m = op(m, tmp.get(x, reflect101(y as isize + i, h)));
            }
            out.set(x, y, m);
        }
    }
    out
}

/// Median over a `(2r+1)^2` window.
pub fn median_filter<T: Scalar>(p: &Plane<T>, radius: usize) -> Plane<T> {
    let (w, h) = p.dims();
    let r = radius as isize;
    let mut buf = Vec::with_capacity((2 * radius + 1).pow(2));
    let mid = (2 * radius + 1).pow(2) / 2;
    Plane::from_fn(w, h, |x, y| {
        buf.clear();
        for dy in -r..=r {
            for dx in -r..=r {
                buf.push(p.get_reflect(x as isize + dx, y as isize + dy));
            }
        }
        let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
        *m
    })
}

/// Median along a line of `length` samples through each pixel at `angle_deg`
/// (counter-clockwise from +x, y up). Off-grid samples are bilinear.
pub fn directional_median<T: Scalar>(p: &Plane<T>, length: usize, angle_deg: f64) -> Plane<T> {
    let offsets = line_offsets(length, angle_deg);
    let mut buf = Vec::with_capacity(offsets.len());
    let mid = offsets.len() / 2;
    Plane::from_fn(p.width(), p.height(), |x, y| {
        buf.clear();
        for &(dx, dy) in &offsets {
            buf.push(sample_bilinear(p, x as f64 + dx, y as f64 + dy));
        }
        let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
        *m
    })
}

/// Erosion then dilation along a line structuring element.
pub fn directional_opening<T: Scalar>(p: &Plane<T>, length: usize, angle_deg: f64) -> Plane<T> {
    let offsets = line_offsets(length, angle_deg);
    let line_rank = |src: &Plane<T>, take_min: bool| {
        Plane::from_fn(src.width(), src.height(), |x, y| {
            let mut m = if take_min {
                T::infinity()
            } else {
                T::neg_infinity()
            };
            for &(dx, dy) in &offsets {
                let v = sample_bilinear(src, x as f64 + dx, y as f64 + dy);
                m = if take_min { m.min(v) } else { m.max(v) };
            }
            m
        })
    };
    let eroded = line_rank(p, true);
    line_rank(&eroded, false)
}

fn line_offsets(length: usize, angle_deg: f64) -> Vec<(f64, f64)> {
    let n = length.max(1);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let half = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| {
            let t = i as f64 - half;
            (t * c, -t * s)
        })
        .collect()
}

/// Bilinear sample with reflect-101 outside the grid.
pub fn sample_bilinear<T: Scalar>(p: &Plane<T>, x: f64, y: f64) -> T {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = T::lit(x - x0);
    let fy = T::lit(y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let a = p.get_reflect(xi, yi);
    let b = p.get_reflect(xi + 1, yi);
    let c = p.get_reflect(xi, yi + 1);
    let d = p.get_reflect(xi + 1, yi + 1);
    let one = T::one();
    (a * (one - fx) + b * fx) * (one - fy) + (c * (one - fx) + d * fx) * fy
}

/// Horizontal and vertical Sobel responses.
pub fn sobel<T: Scalar>(p: &Plane<T>) -> (Plane<T>, Plane<T>) {
    let (w, h) = p.dims();
    let two = T::lit(2.0);
    let mut gx = Plane::new(w, h);
    let mut gy = Plane::new(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let g = |dx: isize, dy: isize| p.get_reflect(x + dx, y + dy);
            let sx = (g(1, -1) + two * g(1, 0) + g(1, 1)) - (g(-1, -1) + two * g(-1, 0) + g(-1, 1));
            let sy = (g(-1, 1) + two * g(0, 1) + g(1, 1)) - (g(-1, -1) + two * g(0, -1) + g(1, -1));
            gx.set(x as usize, y as usize, sx);
            gy.set(x as usize, y as usize, sy);
        }
    }
    (gx, gy)
}

/// 4-neighbour Laplacian.
pub fn laplacian<T: Scalar>(p: &Plane<T>) -> Plane<T> {
    let four = T::lit(4.0);
    Plane::from_fn(p.width(), p.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        p.get_reflect(x - 1, y)
            + p.get_reflect(x + 1, y)
            + p.get_reflect(x, y - 1)
            + p.get_reflect(x, y + 1)
            - four * p.get_reflect(x, y)
    })
}
