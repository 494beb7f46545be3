use crate::imagecore::{box_mean, reflect101, Image, Plane};
use crate::ImageF;

/// Non-local means with one weight per neighbour shared by the three channels.
///
/// The patch distance `d` is the mean squared difference over the patch and
/// channels, and the weight is `exp(-d / h^2)`. The centre pixel takes part
/// with weight 1.
pub fn nlm(img: &ImageF, patch: usize, window: usize, h: f32) -> ImageF {
    let (w, ht) = img.dims();
    let planes: [Plane<f64>; 3] = std::array::from_fn(|c| img.plane(c).cast());
    let pr = patch / 2;
    let wr = (window / 2) as isize;
    let h2 = (h as f64).powi(2).max(1e-12);
    let mut acc: [Vec<f64>; 3] = std::array::from_fn(|c| planes[c].as_slice().to_vec());
    let mut wsum = vec![1.0f64; w * ht];
    for dy in -wr..=wr {
        for dx in -wr..=wr {
            if dx == 0 && dy == 0 {
                continue;
            }
            let shifted: [Plane<f64>; 3] = std::array::from_fn(|c| {
                Plane::from_fn(w, ht, |x, y| {
                    planes[c].get_reflect(x as isize + dx, y as isize + dy)
                })
            });
            let diff = Plane::from_fn(w, ht, |x, y| {
                (0..3)
                    .map(|c| (planes[c].get(x, y) - shifted[c].get(x, y)).powi(2))
                    .sum::<f64>()
                    / 3.0
            });
            let dist = box_mean(&diff, pr);
            for (i, &d) in dist.as_slice().iter().enumerate() {
                let wt = (-d / h2).exp();
                wsum[i] += wt;
                for c in 0..3 {
                    acc[c][i] += wt * shifted[c].as_slice()[i];
                }
            }
        }
    }
    let out: [Plane; 3] = std::array::from_fn(|c| {
        Plane::from_vec(
            w,
            ht,
            acc[c]
                .iter()
                .zip(&wsum)
                .map(|(a, s)| (a / s) as f32)
                .collect(),
        )
        .expect("dims")
    });
    Image::from_planes(out).expect("dims")
}

/// Bilateral filter with a Gaussian spatial kernel (radius `ceil(2 sigma_s)`)
/// and a Gaussian range kernel on the Euclidean colour distance.
pub fn bilateral(img: &ImageF, sigma_s: f32, sigma_r: f32) -> ImageF {
    let (w, h) = img.dims();
    let r = (2.0 * sigma_s).ceil() as isize;
    let ss = 2.0 * (sigma_s as f64).powi(2);
    let sr = 2.0 * (sigma_r as f64).powi(2);
    let spatial: Vec<(isize, isize, f64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (dx, dy, (-((dx * dx + dy * dy) as f64) / ss).exp()))
        .collect();
    let mut out: [Plane; 3] = std::array::from_fn(|_| Plane::new(w, h));
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            let mut acc = [0.0f64; 3];
            let mut norm = 0.0;
            for &(dx, dy, ws) in &spatial {
                let q = img.pixel(
                    reflect101(x as isize + dx, w),
                    reflect101(y as isize + dy, h),
                );
                let d2: f64 = (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum();
                let wt = ws * (-d2 / sr).exp();
                norm += wt;
                for c in 0..3 {
                    acc[c] += wt * q[c] as f64;
                }
            }
            for c in 0..3 {
                out[c].set(x, y, (acc[c] / norm) as f32);
            }
        }
    }
    Image::from_planes(out).expect("dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::natural_scene;

    /// Direct per-pixel evaluation of the same weights.
    fn nlm_brute(img: &ImageF, patch: usize, window: usize, h: f32) -> ImageF {
        let (w, ht) = img.dims();
        let pr = (patch / 2) as isize;
        let wr = (window / 2) as isize;
        let at = |c: usize, x: isize, y: isize| img.plane(c).get_reflect(x, y) as f64;
        let mut out: [Plane; 3] = std::array::from_fn(|_| Plane::new(w, ht));
        for y in 0..ht as isize {
            for x in 0..w as isize {
                let mut acc = [0.0; 3];
                let mut norm = 0.0;
                for dy in -wr..=wr {
                    for dx in -wr..=wr {
                        let wt = if dx == 0 && dy == 0 {
                            1.0
                        } else {
                            // patch distance with reflect-101 at the centre positions
                            let mut d = 0.0;
                            for py in -pr..=pr {
                                for px in -pr..=pr {
                                    let (ax, ay) = (
                                        reflect101(x + px, w) as isize,
                                        reflect101(y + py, ht) as isize,
                                    );
                                    for c in 0..3 {
                                        d += (at(c, ax, ay) - at(c, ax + dx, ay + dy)).powi(2);
                                    }
                                }
                            }
                            d /= (3 * patch * patch) as f64;
                            (-d / (h as f64).powi(2)).exp()
                        };
                        norm += wt;
                        for c in 0..3 {
                            acc[c] += wt * at(c, x + dx, y + dy);
                        }
                    }
                }
                for c in 0..3 {
                    out[c].set(x as usize, y as usize, (acc[c] / norm) as f32);
                }
            }
        }
        Image::from_planes(out).unwrap()
    }

    #[test]
    fn nlm_matches_brute_force() {
        let img = natural_scene(20, 17, 5);
        let fast = nlm(&img, 3, 5, 0.08);
        let slow = nlm_brute(&img, 3, 5, 0.08);
        assert!(fast.mean_abs_diff(&slow).unwrap() < 1e-6);
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img: ImageF = Image::filled(24, 24, [0.2, 0.5, 0.7]);
        for out in [nlm(&img, 5, 11, 0.05), bilateral(&img, 3.0, 0.2)] {
            assert!(out.mean_abs_diff(&img).unwrap() < 1e-6);
        }
    }

    #[test]
    fn bilateral_preserves_strong_edge() {
        let img = Image::from_fn(32, 32, |x, _| if x < 16 { [0.1; 3] } else { [0.9; 3] });
        let out = bilateral(&img, 3.0, 0.05);
        assert!(out.mean_abs_diff(&img).unwrap() < 1e-4);
    }
}
