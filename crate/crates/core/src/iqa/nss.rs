//! Natural-scene statistics: MSCN coefficients and (A)GGD moment fits.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_blur, resize_plane, to_luma, Plane, ResizeFilter};
use crate::ImageF;

/// Stabilising constant of the MSCN divisive normalisation, in `[0,1]` intensity units.
pub const MSCN_C: f64 = 1.0 / 255.0;
pub const MSCN_SIGMA: f64 = 7.0 / 6.0;
pub const MSCN_RADIUS: usize = 3;
pub const FEATURE_DIM: usize = 36;

pub type Features = [f64; FEATURE_DIM];

/// Local mean and local standard deviation fields from the 7x7 Gaussian window.
pub fn local_moments(p: &Plane<f64>) -> (Plane<f64>, Plane<f64>) {
    let mu = gaussian_blur(p, MSCN_SIGMA, MSCN_RADIUS);
    let sq = gaussian_blur(&p.map(|v| v * v), MSCN_SIGMA, MSCN_RADIUS);
    let sigma = sq
        .zip_map(&mu, |s, m| (s - m * m).abs().sqrt())
        .expect("dims");
    (mu, sigma)
}

/// `(I - mu) / (sigma + C)` over a 7x7 Gaussian window.
pub fn mscn(p: &Plane) -> Result<Plane> {
    Ok(mscn_f64(&p.cast())?.cast())
}

pub fn mscn_f64(p: &Plane<f64>) -> Result<Plane<f64>> {
    let (w, h) = p.dims();
    if w.min(h) < 16 {
        return Err(Error::ImageTooSmall {
            min: 16,
            width: w,
            height: h,
        });
    }
    Ok(mscn_unchecked(p))
}

pub(crate) fn mscn_unchecked(p: &Plane<f64>) -> Plane<f64> {
    let (mu, sigma) = local_moments(p);
    Plane::from_fn(p.width(), p.height(), |x, y| {
        (p.get(x, y) - mu.get(x, y)) / (sigma.get(x, y) + MSCN_C)
    })
}

fn gamma_ratio_ggd(alpha: f64) -> f64 {
    // Γ(1/a)Γ(3/a)/Γ(2/a)^2, decreasing in a
    (ln_gamma(1.0 / alpha) + ln_gamma(3.0 / alpha) - 2.0 * ln_gamma(2.0 / alpha)).exp()
}

fn solve_decreasing(target: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.05f64.ln(), 10.0f64.ln());
    if target >= f(lo.exp()) {
        return lo.exp();
    }
    if target <= f(hi.exp()) {
        return hi.exp();
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Generalised Gaussian fit by moment matching: `(shape alpha, variance)`.
/// A zero-variance input returns `(2, 0)`.
pub fn fit_ggd(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let m1 = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if !(m1 > 1e-12) {
        return (2.0, 0.0);
    }
    let rho = m2 / (m1 * m1);
    (solve_decreasing(rho, gamma_ratio_ggd), m2)
}

/// Asymmetric GGD fit: `(alpha, left variance, right variance, mean)`.
pub fn fit_aggd(x: &[f64]) -> (f64, f64, f64, f64) {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in x {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    let n = x.len().max(1) as f64;
    let lvar = if ln > 0 { ls / ln as f64 } else { 0.0 };
    let rvar = if rn > 0 { rs / rn as f64 } else { 0.0 };
    if !(sq_sum > 1e-18) || lvar <= 0.0 || rvar <= 0.0 {
        return (2.0, lvar, rvar, 0.0);
    }
    let (sl, sr) = (lvar.sqrt(), rvar.sqrt());
    let g = sl / sr;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    // Γ(2/a)^2/(Γ(1/a)Γ(3/a)) is increasing, i.e. its reciprocal is decreasing
    let alpha = solve_decreasing(1.0 / r_norm, gamma_ratio_ggd);
    let ratio = (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp();
    let scale = (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp().sqrt();
    let mean = (sr - sl) * ratio * scale;
    (alpha, lvar, rvar, mean)
}

fn scale_features(m: &Plane<f64>, out: &mut [f64]) {
    let (w, h) = m.dims();
    let (alpha, var) = fit_ggd(m.as_slice());
    out[0] = alpha;
    out[1] = var;
    let shifts: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];
    let mut prod = Vec::with_capacity(w * h);
    for (k, (dx, dy)) in shifts.into_iter().enumerate() {
        prod.clear();
        for y in 0..h {
            let yy = y as isize + dy;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            for x in 0..w {
                let xx = x as isize + dx;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                prod.push(m.get(x, y) * m.get(xx as usize, yy as usize));
            }
        }
        let (a, l, r, mu) = fit_aggd(&prod);
        out[2 + 4 * k..6 + 4 * k].copy_from_slice(&[a, l, r, mu]);
    }
}

/// 18 features per scale at full and half resolution of a luma plane.
pub fn nss_features_plane(p: &Plane<f64>) -> Result<Features> {
    let (w, h) = p.dims();
    if w.min(h) < 32 {
        return Err(Error::ImageTooSmall {
            min: 32,
            width: w,
            height: h,
        });
    }
    let mut f = [0.0; FEATURE_DIM];
    scale_features(&mscn_unchecked(p), &mut f[..18]);
    let half = resize_plane(p, w / 2, h / 2, ResizeFilter::Box);
    scale_features(&mscn_unchecked(&half), &mut f[18..]);
    Ok(f)
}

/// NSS feature vector of an RGB image (on BT.601 luma).
pub fn nss_features(img: &ImageF) -> Result<Features> {
    nss_features_plane(&to_luma(img).cast())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::reflect101;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_plane_mscn_is_zero() {
        let p = Plane::filled(20, 20, 0.4f32);
        let m = mscn(&p).unwrap();
        assert!(m.as_slice().iter().all(|v| v.abs() <= 1e-6));
    }

    #[test]
    fn too_small_rejected() {
        assert!(mscn(&Plane::<f32>::new(15, 40)).is_err());
        assert!(nss_features_plane(&Plane::<f64>::new(31, 40)).is_err());
    }

    #[test]
    fn mscn_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Plane::from_fn(16, 16, |_, _| rand::Rng::gen::<f64>(&mut rng));
        // explicit 7x7 window with reflect-101 borders
        let s = MSCN_SIGMA;
        let mut wts = [[0.0f64; 7]; 7];
        let mut tot = 0.0;
        for (j, row) in wts.iter_mut().enumerate() {
            for (i, w) in row.iter_mut().enumerate() {
                let (dx, dy) = (i as f64 - 3.0, j as f64 - 3.0);
                *w = (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
                tot += *w;
            }
        }
        let fast = mscn_f64(&p).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let (mut mu, mut m2) = (0.0, 0.0);
                for j in 0..7 {
                    for i in 0..7 {
                        let xx = reflect101(x as isize + i as isize - 3, 16);
                        let yy = reflect101(y as isize + j as isize - 3, 16);
                        let v = p.get(xx, yy);
                        mu += wts[j][i] / tot * v;
                        m2 += wts[j][i] / tot * v * v;
                    }
                }
                let sd = (m2 - mu * mu).abs().sqrt();
                let want = (p.get(x, y) - mu) / (sd + MSCN_C);
                assert!((fast.get(x, y) - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn ggd_fit_recovers_gaussian_and_laplacian_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gauss: Vec<f64> = (0..50_000)
            .map(|_| Normal::new(0.0, 0.7).unwrap().sample(&mut rng))
            .collect();
        let (a, v) = fit_ggd(&gauss);
        assert!((1.8..=2.2).contains(&a), "alpha {a}");
        assert!((v - 0.49).abs() < 0.02);
        let lap: Vec<f64> = (0..50_000)
            .map(|_| {
                let u: f64 = rand::Rng::gen_range(&mut rng, -0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let (a, _) = fit_ggd(&lap);
        assert!((0.85..=1.15).contains(&a), "alpha {a}");
    }

    #[test]
    fn aggd_symmetric_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..40_000)
            .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
            .collect();
        let (a, l, r, m) = fit_aggd(&x);
        assert!((1.8..=2.2).contains(&a));
        assert!((l - 1.0).abs() < 0.05 && (r - 1.0).abs() < 0.05);
        assert!(m.abs() < 0.05);
    }

    #[test]
    fn features_finite_on_constant_image() {
        let img: ImageF = ImageF::gray(40, 40, 0.5);
        let f = nss_features(&img).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
    }
}
