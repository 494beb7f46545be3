use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Single-channel sample grid with an unbounded value range.
///
/// Used for luma, residuals and any intermediate quantity. Samples are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T: Scalar = f32> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with reflect-101 border handling (`-1 -> 1`, `w -> w-2`).
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> T {
        let xi = reflect101(x, self.width);
        let yi = reflect101(y, self.height);
        self.data[yi * self.width + xi]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::DimMismatch(self.dims(), other.dims()));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data
            .iter()
            .map(|v| {
                let d = v.as_f64() - m;
                d * d
            })
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rectangular sub-region copy; panics if the rectangle exceeds the plane.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    pub fn cast<U: Scalar>(&self) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Planar RGB image with samples clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T: Scalar = f32> {
    planes: [Plane<T>; 3],
}

impl<T: Scalar> Image<T> {
    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let c = |v: T| clamp01(v);
        Self {
            planes: [
                Plane::filled(width, height, c(rgb[0])),
                Plane::filled(width, height, c(rgb[1])),
                Plane::filled(width, height, c(rgb[2])),
            ],
        }
    }

    pub fn gray(width: usize, height: usize, v: T) -> Self {
        Self::filled(width, height, [v, v, v])
    }

    /// Builds an image from three planes, clamping every sample into `[0, 1]`.
    /// Non-finite samples become 0.
    pub fn from_planes(planes: [Plane<T>; 3]) -> Result<Self> {
        let d = planes[0].dims();
        for p in &planes[1..] {
            if p.dims() != d {
                return Err(Error::DimMismatch(d, p.dims()));
            }
        }
        let [r, g, b] = planes;
        Ok(Self {
            planes: [clamp_plane(r), clamp_plane(g), clamp_plane(b)],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut planes = [
            Plane::new(width, height),
            Plane::new(width, height),
            Plane::new(width, height),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c].set(x, y, clamp01(px[c]));
                }
            }
        }
        Self { planes }
    }

    /// Grayscale image replicating a single plane into R, G and B.
    pub fn from_luma(p: &Plane<T>) -> Self {
        let q = clamp_plane(p.clone());
        Self {
            planes: [q.clone(), q.clone(), q],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &Plane<T> {
        &self.planes[c]
    }

    pub fn planes(&self) -> &[Plane<T>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Plane<T>; 3] {
        self.planes
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        [
            self.planes[0].get(x, y),
            self.planes[1].get(x, y),
            self.planes[2].get(x, y),
        ]
    }

    /// Sample count (`width * height * 3`).
    pub fn sample_count(&self) -> usize {
        self.planes.iter().map(|p| p.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = T> + '_ {
        self.planes
            .iter()
            .flat_map(|p| p.as_slice().iter().copied())
    }

    /// Applies `f` to every plane and re-clamps the result.
    pub fn map_planes(&self, mut f: impl FnMut(&Plane<T>) -> Plane<T>) -> Result<Self> {
        Self::from_planes([f(&self.planes[0]), f(&self.planes[1]), f(&self.planes[2])])
    }

    pub fn try_map_planes(&self, mut f: impl FnMut(&Plane<T>) -> Result<Plane<T>>) -> Result<Self> {
        Self::from_planes([
            f(&self.planes[0])?,
            f(&self.planes[1])?,
            f(&self.planes[2])?,
        ])
    }

    pub fn map_samples(&self, f: impl Fn(T) -> T) -> Self {
        let [r, g, b] = &self.planes;
        Self {
            planes: [
                clamp_plane(r.map(&f)),
                clamp_plane(g.map(&f)),
                clamp_plane(b.map(&f)),
            ],
        }
    }

    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::DimMismatch(self.dims(), other.dims()));
        }
        let s: f64 = self
            .samples()
            .zip(other.samples())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .sum();
        Ok(s / self.sample_count() as f64)
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self {
            planes: [
                self.planes[0].crop(x0, y0, w, h),
                self.planes[1].crop(x0, y0, w, h),
                self.planes[2].crop(x0, y0, w, h),
            ],
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            planes: [
                self.planes[0].cast(),
                self.planes[1].cast(),
                self.planes[2].cast(),
            ],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.samples()
            .all(|v| v.is_finite() && v >= T::zero() && v <= T::one())
    }
}

#[inline]
pub(crate) fn clamp01<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

fn clamp_plane<T: Scalar>(mut p: Plane<T>) -> Plane<T> {
    for v in p.as_mut_slice() {
        *v = clamp01(*v);
    }
    p
}

/// BT.601 luma.
pub fn to_luma<T: Scalar>(img: &Image<T>) -> Plane<T> {
    let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    let [r, g, b] = img.planes();
    let data = r
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .zip(b.as_slice())
        .map(|((&r, &g), &b)| wr * r + wg * g + wb * b)
        .collect();
    Plane::from_vec(img.width(), img.height(), data).expect("dims match")
}
