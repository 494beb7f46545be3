use crate::imagecore::{gaussian_blur, resize_plane, to_luma, Plane, ResizeFilter};
use crate::perceive::interpolation_grid;
use crate::ImageF;

fn low_size(n: usize, f: usize) -> usize {
    ((n + f / 2) / f).max(1)
}

/// Iterative back-projection at the detected upsampling factor (2 when none is
/// detected), followed by an unsharp mask with Gaussian `radius`.
///
/// The low-resolution observation is the box-reduced input; each iteration
/// adds the bicubic-upsampled reduction error of the current estimate.
pub fn back_projection(img: &ImageF, iterations: usize, amount: f32, radius: f32) -> ImageF {
    let grid = interpolation_grid(&to_luma(img).cast());
    let f = grid.factor.max(2);
    let (w, h) = img.dims();
    let (lw, lh) = (low_size(w, f), low_size(h, f));
    img.map_planes(|p| {
        let obs = resize_plane(p, lw, lh, ResizeFilter::Box);
        let mut x = p.clone();
        for _ in 0..iterations {
            let err = obs
                .zip_map(&resize_plane(&x, lw, lh, ResizeFilter::Box), |a, b| a - b)
                .expect("dims");
            let up = resize_plane(&err, w, h, ResizeFilter::Bicubic);
            x = x.zip_map(&up, |a, b| a + b).expect("dims");
        }
        unsharp(&x, amount, radius)
    })
    .expect("dims")
}

fn unsharp(p: &Plane, amount: f32, radius: f32) -> Plane {
    let blurred = gaussian_blur(p, radius as f64, (3.0 * radius).ceil() as usize);
    p.zip_map(&blurred, |a, b| a + amount * (a - b))
        .expect("dims")
}
