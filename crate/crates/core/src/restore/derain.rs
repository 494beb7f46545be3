use crate::imagecore::{directional_median, directional_opening, to_luma, Plane};
use crate::perceive::detectors::{rain_residual, structure_anisotropy};
use crate::ImageF;

/// Streak orientation in degrees: the least-energy axis of the structure
/// tensor of the bright thin residual.
fn streak_angle(img: &ImageF) -> f64 {
    structure_anisotropy(&rain_residual(&to_luma(img).cast())).1
}

/// Removes bright streaks along the detected angle. The background is a
/// directional median across the streaks; the positive residual is filtered
/// with a directional median along them, which keeps elongated streak energy
/// and drops isotropic texture, and that part is subtracted.
pub fn derain_median(img: &ImageF, length: usize) -> ImageF {
    let angle = streak_angle(img);
    let streaks = streak_layer(
        img,
        |p| directional_median(p, length, angle + 90.0),
        |r| directional_median(r, length, angle),
    );
    subtract_layer(img, &streaks)
}

/// Same structure with morphology: a top-hat across the streaks, then an
/// opening along them.
pub fn derain_opening(img: &ImageF, length: usize) -> ImageF {
    let angle = streak_angle(img);
    let streaks = streak_layer(
        img,
        |p| directional_opening(p, length, angle + 90.0),
        |r| directional_opening(r, length, angle),
    );
    subtract_layer(img, &streaks)
}

/// Streak estimate on luma; rain is achromatic, so the same layer is removed
/// from every channel.
fn streak_layer(
    img: &ImageF,
    background: impl Fn(&Plane) -> Plane,
    along: impl Fn(&Plane) -> Plane,
) -> Plane {
    let l = to_luma(img);
    let bg = background(&l);
    let residual = l.zip_map(&bg, |a, b| (a - b).max(0.0)).expect("dims");
    along(&residual).map(|v| v.max(0.0))
}

fn subtract_layer(img: &ImageF, layer: &Plane) -> ImageF {
    img.map_planes(|p| p.zip_map(layer, |a, s| a - s).expect("dims"))
        .expect("dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Image;

    #[test]
    fn flat_image_untouched() {
        let img: ImageF = Image::filled(40, 40, [0.3, 0.4, 0.5]);
        assert!(derain_median(&img, 9).mean_abs_diff(&img).unwrap() < 1e-6);
        assert!(derain_opening(&img, 9).mean_abs_diff(&img).unwrap() < 1e-6);
    }

    #[test]
    fn vertical_streak_removed() {
        let mut p = Plane::filled(48, 48, 0.3f32);
        for y in 5..40 {
            p.set(20, y, 0.9);
        }
        let img = Image::from_luma(&p);
        for out in [derain_median(&img, 9), derain_opening(&img, 9)] {
            assert!(
                out.plane(0).get(20, 22) < 0.45,
                "{}",
                out.plane(0).get(20, 22)
            );
        }
    }
}
