use crate::error::{Error, Result};
use crate::imagecore::{sobel, to_luma, Plane};
use crate::ImageF;

pub const BETA: f64 = 3.6;
pub const P_JNB: f64 = 0.63;
const HIGH_FLOOR: f64 = 0.16;
const LOW_FLOOR: f64 = 0.08;
const MAX_WALK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpbdOutcome {
    /// Fraction of edge pixels below the just-noticeable blur probability.
    pub score: f64,
    pub edge_pixels: usize,
    /// True when no edge survived detection; `score` is then 0.
    pub no_edges: bool,
}

/// Sobel edges after non-maximum suppression and hysteresis (high/low at the
/// 80th/40th magnitude percentile, with absolute floors).
fn edge_map(gx: &Plane<f64>, gy: &Plane<f64>) -> Vec<bool> {
    let (w, h) = gx.dims();
    let mag: Vec<f64> = gx
        .as_slice()
        .iter()
        .zip(gy.as_slice())
        .map(|(a, b)| a.hypot(*b))
        .collect();
    let mut sorted = mag.clone();
    sorted.sort_by(f64::total_cmp);
    let high = crate::stats::percentile_sorted(&sorted, 80.0).max(HIGH_FLOOR);
    let low = crate::stats::percentile_sorted(&sorted, 40.0)
        .max(LOW_FLOOR)
        .min(high);

    let mut thin = vec![false; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (dx, dy) = (gx.as_slice()[i], gy.as_slice()[i]);
            let ang = dy.atan2(dx).to_degrees().rem_euclid(180.0);
            let (ox, oy): (isize, isize) = if !(22.5..157.5).contains(&ang) {
                (1, 0)
            } else if ang < 67.5 {
                (1, 1)
            } else if ang < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let a = mag[((y as isize + oy) as usize) * w + (x as isize + ox) as usize];
            let b = mag[((y as isize - oy) as usize) * w + (x as isize - ox) as usize];
            thin[i] = m >= a && m >= b;
        }
    }
    let mut edge = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] && mag[i] >= high).collect();
    for &i in &stack {
        edge[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if thin[j] && !edge[j] {
                    edge[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edge
}

/// Walks from `(x, y)` along `(sx, sy)` while luminance keeps moving in
/// direction `sign`; returns the number of steps and the end value.
fn walk(
    l: &Plane<f64>,
    x: usize,
    y: usize,
    sx: isize,
    sy: isize,
    sign: f64,
    tol: f64,
) -> (usize, f64) {
    let (w, h) = (l.width() as isize, l.height() as isize);
    let (mut cx, mut cy) = (x as isize, y as isize);
    let mut steps = 0;
    while steps < MAX_WALK {
        let (nx, ny) = (cx + sx, cy + sy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            break;
        }
        let diff = (l.get(nx as usize, ny as usize) - l.get(cx as usize, cy as usize)) * sign;
        if diff <= tol {
            break;
        }
        cx = nx;
        cy = ny;
        steps += 1;
    }
    (steps, l.get(cx as usize, cy as usize))
}

pub fn cpbd(img: &ImageF) -> Result<CpbdOutcome> {
    let (w, h) = img.dims();
    if w.min(h) < 64 {
        return Err(Error::ImageTooSmall {
            min: 64,
            width: w,
            height: h,
        });
    }
    Ok(cpbd_luma(&to_luma(img).cast()))
}

pub(crate) fn cpbd_luma(l: &Plane<f64>) -> CpbdOutcome {
    let (gx, gy) = sobel(l);
    let edges = edge_map(&gx, &gy);
    let w = l.width();
    let (mut total, mut sharp) = (0usize, 0usize);
    for (i, _) in edges.iter().enumerate().filter(|(_, e)| **e) {
        let (x, y) = (i % w, i / w);
        let (dx, dy) = (gx.get(x, y), gy.get(x, y));
        let (sx, sy, g) = if dx.abs() >= dy.abs() {
            (1, 0, dx)
        } else {
            (0, 1, dy)
        };
        let sign = g.signum();
        // Sobel responds with 8x the per-pixel slope; stop once the slope falls below a tenth
        let tol = (0.1 * g.abs() / 8.0).max(0.5 / 255.0);
        let (up, hi) = walk(l, x, y, sx, sy, sign, tol);
        let (down, lo) = walk(l, x, y, -sx, -sy, -sign, tol);
        let width = (up + down) as f64;
        let contrast = (hi - lo).abs();
        let w_jnb = if contrast > 0.2 { 3.0 } else { 5.0 };
        let p_blur = 1.0 - (-(width / w_jnb).powf(BETA)).exp();
        total += 1;
        if p_blur <= P_JNB {
            sharp += 1;
        }
    }
    if total == 0 {
        return CpbdOutcome {
            score: 0.0,
            edge_pixels: 0,
            no_edges: true,
        };
    }
    CpbdOutcome {
        score: sharp as f64 / total as f64,
        edge_pixels: total,
        no_edges: false,
    }
}

/// Cumulative probability of blur detection in `[0, 1]`; higher is sharper.
/// An image with no detectable edges scores 0.
pub fn cpbd_score(img: &ImageF) -> Result<f64> {
    Ok(cpbd(img)?.score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{convolve2d, Kernel2D};

    pub(crate) fn step_image() -> ImageF {
        // vertical and horizontal step edges of varied contrast
        ImageF::from_fn(128, 128, |x, y| {
            let a = if (x / 32) % 2 == 0 { 0.2 } else { 0.8 };
            let b = if (y / 40) % 2 == 0 { 0.0 } else { 0.15 };
            [a + b; 3]
        })
    }

    #[test]
    fn sharp_steps_score_high() {
        let out = cpbd(&step_image()).unwrap();
        assert!(!out.no_edges);
        assert!(out.score >= 0.9, "{out:?}");
    }

    #[test]
    fn defocus_drops_score() {
        let img = step_image();
        let k = Kernel2D::disk(4.5).unwrap();
        let blurred = img.try_map_planes(|p| convolve2d(p, &k)).unwrap();
        let a = cpbd_score(&img).unwrap();
        let b = cpbd_score(&blurred).unwrap();
        assert!(a - b >= 0.3, "{a} -> {b}");
    }

    #[test]
    fn flat_image_has_no_edges() {
        let out = cpbd(&ImageF::gray(64, 64, 0.3)).unwrap();
        assert!(out.no_edges && out.score == 0.0);
    }

    #[test]
    fn too_small() {
        assert!(cpbd(&ImageF::gray(63, 80, 0.3)).is_err());
    }
}
