//! Procedural "pristine" scenes.
//!
//! A dead-leaves model (occluding shapes with power-law sizes) reproduces the
//! scale-invariant edge statistics of natural photographs. Shapes carry smooth
//! shading and some carry low-contrast gratings so that every frequency band is
//! populated. A light optical blur avoids aliasing. Used to build pristine
//! corpora when no photographs are available.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imagecore::{gaussian_blur, save_image, Image, Plane};
use crate::ImageF;

#[derive(Clone, Copy)]
enum Shape {
    Disc {
        r: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
        cos: f64,
        sin: f64,
    },
    Rect {
        hw: f64,
        hh: f64,
        cos: f64,
        sin: f64,
    },
}

impl Shape {
    /// Approximate signed distance (negative inside) in pixels.
    fn distance(&self, dx: f64, dy: f64) -> f64 {
        match *self {
            Shape::Disc { r } => (dx * dx + dy * dy).sqrt() - r,
            Shape::Ellipse { a, b, cos, sin } => {
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                let k = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
                (k - 1.0) * a.min(b)
            }
            Shape::Rect { hw, hh, cos, sin } => {
                let u = (dx * cos + dy * sin).abs() - hw;
                let v = (-dx * sin + dy * cos).abs() - hh;
                u.max(v)
            }
        }
    }

    fn extent(&self) -> f64 {
        match *self {
            Shape::Disc { r } => r,
            Shape::Ellipse { a, b, .. } => a.max(b),
            Shape::Rect { hw, hh, .. } => (hw * hw + hh * hh).sqrt(),
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let base: f64 = rng.gen_range(0.08..0.92);
    let sat: f64 = rng.gen_range(0.0..0.35);
    let mut c = [0.0; 3];
    for v in c.iter_mut() {
        *v = (base + sat * rng.gen_range(-1.0..1.0)).clamp(0.02, 0.98);
    }
    c
}

/// One seeded natural-like scene.
pub fn natural_scene(width: usize, height: usize, seed: u64) -> ImageF {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
    let (w, h) = (width as f64, height as f64);
    let scale = w.min(h) / 256.0;

    let top = random_color(&mut rng);
    let bottom = random_color(&mut rng);
    let mut planes: [Plane<f64>; 3] = std::array::from_fn(|c| {
        Plane::from_fn(width, height, |x, y| {
            let t = y as f64 / h;
            let s = x as f64 / w;
            top[c] * (1.0 - t) + bottom[c] * t + 0.05 * (s - 0.5)
        })
    });

    let n_shapes = rng.gen_range(120..260);
    for _ in 0..n_shapes {
        // sizes ~ r^-3 between 3 and 70 px at 256x256
        let u: f64 = rng.gen();
        let (rmin, rmax) = (3.0 * scale, 70.0 * scale);
        let r =
            1.0 / (1.0 / (rmin * rmin) - u * (1.0 / (rmin * rmin) - 1.0 / (rmax * rmax))).sqrt();
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (sin, cos) = theta.sin_cos();
        let shape = match rng.gen_range(0..10) {
            0..=4 => Shape::Disc { r },
            5..=7 => Shape::Ellipse {
                a: r,
                b: r * rng.gen_range(0.35..1.0),
                cos,
                sin,
            },
            _ => Shape::Rect {
                hw: r,
                hh: r * rng.gen_range(0.3..1.0),
                cos,
                sin,
            },
        };
        let cx = rng.gen_range(-0.05 * w..1.05 * w);
        let cy = rng.gen_range(-0.05 * h..1.05 * h);
        let color = random_color(&mut rng);
        let shade_dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let shade_amp = rng.gen_range(0.0..0.12);
        let grating = if rng.gen_bool(0.35) {
            let period = rng.gen_range(5.0..18.0) * scale.max(0.5);
            let dir: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            Some((period, dir, rng.gen_range(0.02..0.08)))
        } else {
            None
        };

        let ext = shape.extent() + 1.0;
        let x0 = ((cx - ext).floor().max(0.0)) as usize;
        let x1 = ((cx + ext).ceil().min(w - 1.0)).max(0.0) as usize;
        let y0 = ((cy - ext).floor().max(0.0)) as usize;
        let y1 = ((cy + ext).ceil().min(h - 1.0)).max(0.0) as usize;
        if x0 > x1 || y0 > y1 || cx + ext < 0.0 || cy + ext < 0.0 {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let coverage = (0.5 - shape.distance(dx, dy)).clamp(0.0, 1.0);
                if coverage <= 0.0 {
                    continue;
                }
                let along = (dx * shade_dir.cos() + dy * shade_dir.sin()) / ext;
                let mut tex = shade_amp * along;
                if let Some((period, dir, amp)) = grating {
                    let p = dx * dir.cos() + dy * dir.sin();
                    tex += amp * (std::f64::consts::TAU * p / period).sin();
                }
                for (c, plane) in planes.iter_mut().enumerate() {
                    let v = (color[c] + tex).clamp(0.0, 1.0);
                    let old = plane.get(x, y);
                    plane.set(x, y, old * (1.0 - coverage) + v * coverage);
                }
            }
        }
    }

    let blurred = planes.map(|p| gaussian_blur(&p, 0.6, 2).cast::<f32>());
    Image::from_planes(blurred).expect("same dims")
}

/// Writes `count` scenes as `scene_XXXX.png` into `dir`; returns the paths.
pub fn write_corpus(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("scene_{i:04}.png"));
            save_image(
                &natural_scene(size, size, seed.wrapping_add(i as u64)),
                &path,
            )?;
            Ok(path)
        })
        .collect()
}

/// In-memory corpus with the same seeding as [`write_corpus`].
pub fn corpus(count: usize, size: usize, seed: u64) -> Vec<ImageF> {
    (0..count)
        .map(|i| natural_scene(size, size, seed.wrapping_add(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::to_luma;

    #[test]
    fn deterministic_and_valid() {
        let a = natural_scene(64, 48, 3);
        let b = natural_scene(64, 48, 3);
        assert_eq!(a, b);
        assert!(a.is_valid());
        assert_ne!(a, natural_scene(64, 48, 4));
    }

    #[test]
    fn scenes_have_mid_tones_and_contrast() {
        for s in 0..5 {
            let l = to_luma(&natural_scene(128, 128, s));
            let m = l.mean();
            assert!(m > 0.15 && m < 0.85, "mean {m}");
            assert!(l.variance().sqrt() > 0.05);
        }
    }
}
