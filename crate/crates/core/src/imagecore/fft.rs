use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use super::image::Plane;
use super::kernel::Kernel2D;
use super::scalar::Scalar;

/// Complex frequency grid, row-major, DC at index 0.
#[derive(Clone, Debug)]
pub struct Spectrum<T: Scalar = f32> {
    width: usize,
    height: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Complex<T> {
        self.data[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    /// Squared magnitudes as a plane, same indexing.
    pub fn power(&self) -> Plane<T> {
        Plane::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|c| c.norm_sqr()).collect(),
        )
        .expect("dims")
    }

    /// Pointwise product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

fn transform<T: Scalar>(data: &mut [Complex<T>], w: usize, h: usize, dir: FftDirection) {
    let mut planner = FftPlanner::<T>::new();
    let row_fft = planner.plan_fft(w, dir);
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft(h, dir);
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Forward 2-D DFT (unnormalised). Any size is supported directly.
pub fn fft2<T: Scalar>(p: &Plane<T>) -> Spectrum<T> {
    let (w, h) = p.dims();
    let mut data: Vec<Complex<T>> = p
        .as_slice()
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    transform(&mut data, w, h, FftDirection::Forward);
    Spectrum {
        width: w,
        height: h,
        data,
    }
}

/// Inverse 2-D DFT, normalised by `1/N`; returns the real part.
pub fn ifft2<T: Scalar>(s: &Spectrum<T>) -> Plane<T> {
    let mut data = s.data.clone();
    transform(&mut data, s.width, s.height, FftDirection::Inverse);
    let n = T::lit((s.width * s.height) as f64);
    Plane::from_vec(
        s.width,
        s.height,
        data.into_iter().map(|c| c.re / n).collect(),
    )
    .expect("dims")
}

/// Transfer function of `k` on a `w x h` grid, kernel centre moved to the origin.
pub fn kernel_otf<T: Scalar>(k: &Kernel2D<T>, w: usize, h: usize) -> Spectrum<T> {
    let mut p = Plane::new(w, h);
    let (cx, cy) = ((k.width() / 2) as isize, (k.height() / 2) as isize);
    for ky in 0..k.height() {
        for kx in 0..k.width() {
            let x = (kx as isize - cx).rem_euclid(w as isize) as usize;
            let y = (ky as isize - cy).rem_euclid(h as isize) as usize;
            let v = p.get(x, y) + k.tap(kx, ky);
            p.set(x, y, v);
        }
    }
    fft2(&p)
}

/// Signed frequency (cycles/sample) of DFT bin `i` out of `n`.
#[inline]
pub fn bin_frequency(i: usize, n: usize) -> f64 {
    let i = i as isize;
    let n = n as isize;
    let k = if i <= n / 2 { i } else { i - n };
    k as f64 / n as f64
}
