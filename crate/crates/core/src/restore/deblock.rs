use crate::imagecore::Plane;
use crate::ImageF;

/// Smooths steps across the block boundaries of a `block`-pixel grid.
///
/// At each boundary pair `(p1 | q1)` with inner neighbours `p2`, `q2`, the step
/// `d = q1 - p1` is treated as an artefact when `|d| <= max_step` and
/// `|d| >= gate * (|p1 - p2| + |q2 - q1|) / 2`. Such a step is spread over the
/// four samples as a ramp, leaving a third of it at the boundary. Vertical
/// boundaries are processed first, then horizontal ones.
pub fn deblock_grid(img: &ImageF, block: usize, gate: f32, max_step: f32) -> ImageF {
    img.map_planes(|p| {
        let v = filter_columns(p, block, gate, max_step);
        transpose(&filter_columns(&transpose(&v), block, gate, max_step))
    })
    .expect("dims")
}

fn filter_columns(p: &Plane, block: usize, gate: f32, max_step: f32) -> Plane {
    let (w, h) = p.dims();
    let mut out = p.clone();
    let mut bx = block;
    while bx + 1 < w && bx >= 2 {
        for y in 0..h {
            let (p2, p1, q1, q2) = (
                p.get(bx - 2, y),
                p.get(bx - 1, y),
                p.get(bx, y),
                p.get(bx + 1, y),
            );
            let d = q1 - p1;
            let inner = 0.5 * ((p1 - p2).abs() + (q2 - q1).abs());
            if d.abs() <= max_step && d.abs() >= gate * inner && d != 0.0 {
                out.set(bx - 2, y, p2 + d / 6.0);
                out.set(bx - 1, y, p1 + d / 3.0);
                out.set(bx, y, q1 - d / 3.0);
                out.set(bx + 1, y, q2 - d / 6.0);
            }
        }
        bx += block;
    }
    out
}

fn transpose(p: &Plane) -> Plane {
    Plane::from_fn(p.height(), p.width(), |x, y| p.get(y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Image;

    #[test]
    fn blocky_steps_are_reduced() {
        // piecewise constant 8x8 blocks with small steps
        let img: ImageF = Image::from_fn(32, 32, |x, y| {
            [((x / 8 + y / 8) % 3) as f32 * 0.03 + 0.4; 3]
        });
        let out = deblock_grid(&img, 8, 1.5, 0.12);
        let step = |im: &ImageF| {
            (0..32)
                .map(|y| (im.plane(0).get(8, y) - im.plane(0).get(7, y)).abs())
                .sum::<f32>()
        };
        assert!(step(&out) < 0.5 * step(&img));
    }

    #[test]
    fn strong_edges_are_kept() {
        let img: ImageF = Image::from_fn(32, 32, |x, _| [if x < 8 { 0.1 } else { 0.9 }; 3]);
        assert_eq!(deblock_grid(&img, 8, 1.5, 0.12), img);
    }
}
