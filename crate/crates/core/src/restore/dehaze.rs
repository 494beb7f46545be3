use crate::error::Result;
use crate::imagecore::{box_mean, min_filter, to_luma, Image, Plane};
use crate::perceive::detectors::{dark_channel, DARK_CHANNEL_RADIUS};
use crate::ImageF;

/// Per-channel mean of the pixels whose dark channel lies in the brightest 0.1%.
pub fn airlight(img: &ImageF) -> [f64; 3] {
    let dc = dark_channel(img);
    let mut idx: Vec<usize> = (0..dc.len()).collect();
    // stable sort keeps ties in raster order, so the choice is deterministic
    idx.sort_by(|&a, &b| dc.as_slice()[b].total_cmp(&dc.as_slice()[a]));
    let k = (idx.len() / 1000).max(1);
    std::array::from_fn(|c| {
        let s = img.plane(c).as_slice();
        idx[..k].iter().map(|&i| s[i] as f64).sum::<f64>() / k as f64
    })
}

/// Guided filter of `p` with guide `g`, box radius `r`, regulariser `eps`.
pub fn guided_filter(g: &Plane<f64>, p: &Plane<f64>, r: usize, eps: f64) -> Plane<f64> {
    let (w, h) = g.dims();
    let r = r.min(w.min(h).saturating_sub(2) / 2);
    let mean_g = box_mean(g, r);
    let mean_p = box_mean(p, r);
    let corr_gp = box_mean(&g.zip_map(p, |a, b| a * b).expect("dims"), r);
    let corr_gg = box_mean(&g.map(|a| a * a), r);
    let n = w * h;
    let mut a = Plane::new(w, h);
    let mut b = Plane::new(w, h);
    for i in 0..n {
        let mg = mean_g.as_slice()[i];
        let mp = mean_p.as_slice()[i];
        let var = corr_gg.as_slice()[i] - mg * mg;
        let cov = corr_gp.as_slice()[i] - mg * mp;
        let ai = cov / (var + eps);
        a.as_mut_slice()[i] = ai;
        b.as_mut_slice()[i] = mp - ai * mg;
    }
    let mean_a = box_mean(&a, r);
    let mean_b = box_mean(&b, r);
    Plane::from_fn(w, h, |x, y| {
        mean_a.get(x, y) * g.get(x, y) + mean_b.get(x, y)
    })
}

/// Inverts `I = J t + A (1 - t)` for `J`, with `t` floored at `t_min`.
pub fn recover_scene(img: &ImageF, a: [f64; 3], t: &Plane<f64>, t_min: f64) -> ImageF {
    let planes: [Plane; 3] = std::array::from_fn(|c| {
        Plane::from_fn(img.width(), img.height(), |x, y| {
            let i = img.plane(c).get(x, y) as f64;
            ((i - a[c]) / t.get(x, y).max(t_min) + a[c]) as f32
        })
    });
    Image::from_planes(planes).expect("dims")
}

/// Dark-channel-prior dehazing with a guided-filter refined transmission.
pub fn dehaze_dark_channel(
    img: &ImageF,
    omega: f32,
    t_min: f32,
    radius: usize,
    eps: f32,
) -> Result<ImageF> {
    let a = airlight(img);
    let (w, h) = img.dims();
    let norm = Plane::from_fn(w, h, |x, y| {
        let p = img.pixel(x, y);
        (0..3)
            .map(|c| p[c] as f64 / a[c].max(1e-3))
            .fold(f64::INFINITY, f64::min)
    });
    let dark = min_filter(&norm, DARK_CHANNEL_RADIUS);
    let raw_t = dark.map(|d| 1.0 - omega as f64 * d);
    let guide: Plane<f64> = to_luma(img).cast();
    let t = guided_filter(&guide, &raw_t, radius, eps as f64);
    Ok(recover_scene(img, a, &t, t_min as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::natural_scene;

    fn hazy(j: &ImageF, t: f64, a: [f64; 3]) -> ImageF {
        let planes =
            std::array::from_fn(|c| j.plane(c).map(|v| (v as f64 * t + a[c] * (1.0 - t)) as f32));
        Image::from_planes(planes).unwrap()
    }

    #[test]
    fn known_transmission_inverts_exactly() {
        let j = natural_scene(64, 64, 2);
        let a = [0.9, 0.85, 0.95];
        let i = hazy(&j, 0.5, a);
        let t = Plane::filled(64, 64, 0.5);
        let back = recover_scene(&i, a, &t, 0.1);
        assert!(back.mean_abs_diff(&j).unwrap() < 2.0 / 255.0);
    }

    /// Box-sum evaluation of the guided filter coefficients.
    fn guided_brute(g: &Plane<f64>, p: &Plane<f64>, r: usize, eps: f64) -> Plane<f64> {
        let (w, h) = g.dims();
        let win = |x: usize, y: usize, f: &dyn Fn(isize, isize) -> f64| {
            let r = r as isize;
            let mut s = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    s += f(x as isize + dx, y as isize + dy);
                }
            }
            s / ((2 * r + 1) * (2 * r + 1)) as f64
        };
        let ab: Vec<(f64, f64)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                let mg = win(x, y, &|u, v| g.get_reflect(u, v));
                let mp = win(x, y, &|u, v| p.get_reflect(u, v));
                let gg = win(x, y, &|u, v| g.get_reflect(u, v).powi(2));
                let gp = win(x, y, &|u, v| g.get_reflect(u, v) * p.get_reflect(u, v));
                let a = (gp - mg * mp) / (gg - mg * mg + eps);
                (a, mp - a * mg)
            })
            .collect();
        let pa = Plane::from_vec(w, h, ab.iter().map(|v| v.0).collect()).unwrap();
        let pb = Plane::from_vec(w, h, ab.iter().map(|v| v.1).collect()).unwrap();
        Plane::from_fn(w, h, |x, y| {
            win(x, y, &|u, v| pa.get_reflect(u, v)) * g.get(x, y)
                + win(x, y, &|u, v| pb.get_reflect(u, v))
        })
    }

    #[test]
    fn guided_filter_matches_brute_force() {
        let img = natural_scene(24, 20, 9);
        let g: Plane<f64> = to_luma(&img).cast();
        let p: Plane<f64> = img.plane(0).cast();
        let fast = guided_filter(&g, &p, 3, 1e-3);
        let slow = guided_brute(&g, &p, 3, 1e-3);
        let err = fast
            .as_slice()
            .iter()
            .zip(slow.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn dark_channel_prior_improves_hazy_scene() {
        let j = natural_scene(96, 96, 4);
        let i = hazy(&j, 0.55, [0.9, 0.9, 0.9]);
        let out = dehaze_dark_channel(&i, 0.95, 0.1, 20, 1e-3).unwrap();
        assert!(out.mean_abs_diff(&j).unwrap() < i.mean_abs_diff(&j).unwrap());
    }
}
