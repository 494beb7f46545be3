use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Odd-sized 2-D filter kernel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D<T: Scalar = f32> {
    width: usize,
    height: usize,
    taps: Vec<T>,
}

impl<T: Scalar> Kernel2D<T> {
    pub fn new(width: usize, height: usize, taps: Vec<T>) -> Result<Self> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "dimensions must be odd, got {width}x{height}"
            )));
        }
        if taps.len() != width * height {
            return Err(Error::InvalidKernel(format!(
                "expected {} taps, got {}",
                width * height,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidKernel("non-finite tap".into()));
        }
        Ok(Self {
            width,
            height,
            taps,
        })
    }

    pub fn identity() -> Self {
        Self {
            width: 1,
            height: 1,
            taps: vec![T::one()],
        }
    }

    /// Normalised square Gaussian of side `size` (odd).
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        let g = gaussian_1d(sigma, size / 2);
        let mut taps = Vec::with_capacity(size * size);
        for &a in &g {
            for &b in &g {
                taps.push(T::lit(a * b));
            }
        }
        Self::new(size, size, taps)
    }

    /// Uniform disk of the given radius, antialiased by 8x8 supersampling, unit sum.
    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidKernel(format!("disk radius {radius}")));
        }
        let half = radius.ceil() as usize;
        let size = 2 * half + 1;
        let ss = 8;
        let mut w = vec![0.0f64; size * size];
        for ky in 0..size {
            for kx in 0..size {
                let mut inside = 0;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let dx = kx as f64 - half as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                        let dy = ky as f64 - half as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                        if dx * dx + dy * dy <= radius * radius {
                            inside += 1;
                        }
                    }
                }
                w[ky * size + kx] = inside as f64;
            }
        }
        Self::from_weights(size, size, w)
    }

    /// Linear motion kernel of `length` pixels along `angle_deg`
    /// (counter-clockwise from +x with y pointing up), unit sum.
    pub fn motion_line(length: f64, angle_deg: f64) -> Result<Self> {
        if !(length >= 1.0) {
            return Err(Error::InvalidKernel(format!("motion length {length}")));
        }
        let half = (length / 2.0).ceil() as usize + 1;
        let size = 2 * half + 1;
        let (s, c) = angle_deg.to_radians().sin_cos();
        let mut w = vec![0.0f64; size * size];
        let steps = (length * 16.0).ceil() as usize;
        for i in 0..=steps {
            let t = -length / 2.0 + length * i as f64 / steps as f64;
            let x = half as f64 + t * c;
            let y = half as f64 - t * s;
            // bilinear splat
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (x0, y0) = (x0 as usize, y0 as usize);
            for (dx, dy, wt) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                let (xx, yy) = (x0 + dx, y0 + dy);
                if xx < size && yy < size {
                    w[yy * size + xx] += wt;
                }
            }
        }
        Self::from_weights(size, size, w)
    }

    fn from_weights(width: usize, height: usize, w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidKernel("zero-sum weights".into()));
        }
        Self::new(
            width,
            height,
            w.into_iter().map(|v| T::lit(v / sum)).collect(),
        )
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn tap(&self, x: usize, y: usize) -> T {
        self.taps[y * self.width + x]
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().map(|t| t.as_f64()).sum()
    }
}

/// Normalised 1-D Gaussian taps over `[-radius, radius]`.
pub fn gaussian_1d(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut g: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_kernels_sum_to_one() {
        for r in [2.0, 3.5, 6.0] {
            let k = Kernel2D::<f32>::disk(r).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-6);
            assert_eq!(k.width() % 2, 1);
        }
        for (l, a) in [(9.0, 0.0), (15.0, 30.0), (21.0, 135.0)] {
            let k = Kernel2D::<f64>::motion_line(l, a).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-9);
        }
        let g = Kernel2D::<f32>::gaussian(7, 7.0 / 6.0).unwrap();
        assert!((g.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(Kernel2D::<f32>::new(2, 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn horizontal_motion_kernel_is_one_row() {
        let k = Kernel2D::<f64>::motion_line(9.0, 0.0).unwrap();
        let c = k.height() / 2;
        let off: f64 = (0..k.height())
            .filter(|&y| y != c)
            .flat_map(|y| (0..k.width()).map(move |x| (x, y)))
            .map(|(x, y)| k.tap(x, y))
            .sum();
        assert!(off < 1e-12);
    }
}
