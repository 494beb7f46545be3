use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::QualityProbe;
use crate::error::Result;
use crate::imagecore::{fft2, ifft2, kernel_otf, to_luma, Image, Kernel2D, Plane, Spectrum};
use crate::perceive::detectors::{blur_extent, immerkaer_channel, structure_anisotropy_denoised};
use crate::perceive::BlurKind;
use crate::ImageF;

pub const FALLBACK_LENGTHS: [f64; 4] = [9.0, 13.0, 17.0, 21.0];
pub const FALLBACK_ANGLES: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

/// Below this eigenvalue ratio the blur has no usable direction.
const MIN_ANISOTROPY: f64 = 1.5;
const LENGTH_RANGE: (f64, f64) = (3.0, 40.0);
/// Width in pixels of the transition from the reflected image to its blur.
const TAPER_WIDTH: f64 = 1.0;
/// Noise-to-signal ratio used while ranking fallback kernels.
const FALLBACK_NSR: f32 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub length: f64,
    /// Degrees counter-clockwise from +x, in `[0, 180)`.
    pub angle: f64,
    /// Set when the spectral estimate was unreliable and the candidate grid
    /// was searched instead.
    pub fallback: bool,
}

/// Reflect-padded channels, kept in both domains so that each kernel can
/// taper the padding on its own.
struct Padded {
    width: usize,
    height: usize,
    pad: usize,
    planes: Vec<Plane<f64>>,
    spectra: Vec<Spectrum<f64>>,
}

impl Padded {
    fn new(img: &ImageF, pad: usize) -> Self {
        let (w, h) = img.dims();
        let (pw, ph) = (w + 2 * pad, h + 2 * pad);
        let planes: Vec<Plane<f64>> = img
            .planes()
            .iter()
            .map(|p| {
                Plane::from_fn(pw, ph, |x, y| {
                    p.get_reflect(x as isize - pad as isize, y as isize - pad as isize) as f64
                })
            })
            .collect();
        let spectra = planes.iter().map(fft2).collect();
        Self {
            width: w,
            height: h,
            pad,
            planes,
            spectra,
        }
    }

    /// Weight 1 on the image, falling to 0 within a few pixels of padding.
    fn taper(&self, x: usize, y: usize) -> f64 {
        let ramp = |i: usize, n: usize| {
            let d = if i < self.pad {
                self.pad - i
            } else if i >= self.pad + n {
                i + 1 - self.pad - n
            } else {
                0
            };
            let t = (d as f64 / (TAPER_WIDTH + 1.0)).min(1.0);
            0.5 + 0.5 * (std::f64::consts::PI * t).cos()
        };
        ramp(x, self.width) * ramp(y, self.height)
    }

    /// Blends the padding with its circular blur by the kernel, which makes the
    /// wrap-around seam consistent with the blur model before inversion.
    fn tapered_spectra(&self, otf: &Spectrum<f64>) -> Vec<Spectrum<f64>> {
        self.planes
            .iter()
            .zip(&self.spectra)
            .map(|(p, s)| {
                let blurred = ifft2(&s.mul(otf));
                let (pw, ph) = p.dims();
                let mixed = Plane::from_fn(pw, ph, |x, y| {
                    let a = self.taper(x, y);
                    a * p.get(x, y) + (1.0 - a) * blurred.get(x, y)
                });
                fft2(&mixed)
            })
            .collect()
    }

    fn deconvolve(&self, otf: &Spectrum<f64>, nsr: f64) -> ImageF {
        self.deconvolve_all(otf, &[nsr]).pop().expect("one nsr")
    }

    fn deconvolve_all(&self, otf: &Spectrum<f64>, nsr: &[f64]) -> Vec<ImageF> {
        let spectra = self.tapered_spectra(otf);
        nsr.iter()
            .map(|&n| {
                let planes: Vec<Plane> = spectra
                    .iter()
                    .map(|s| {
                        let mut out = s.clone();
                        for (y, hk) in out.as_mut_slice().iter_mut().zip(otf.as_slice()) {
                            *y = *y * hk.conj() / Complex::new(hk.norm_sqr() + n, 0.0);
                        }
                        let full = ifft2(&out);
                        Plane::from_fn(self.width, self.height, |x, y| {
                            full.get(x + self.pad, y + self.pad) as f32
                        })
                    })
                    .collect();
                let [r, g, b]: [Plane; 3] = planes.try_into().expect("three planes");
                Image::from_planes([r, g, b]).expect("dims")
            })
            .collect()
    }

    fn otf(&self, k: &Kernel2D<f64>) -> Spectrum<f64> {
        kernel_otf(k, self.width + 2 * self.pad, self.height + 2 * self.pad)
    }
}

fn pad_for(k: &Kernel2D<f64>) -> usize {
    2 * k.width().max(k.height())
}

/// Wiener deconvolution `Y H* / (|H|^2 + nsr)` on a reflect-padded copy of the
/// image, so the circular boundary of the DFT falls outside the output.
pub fn wiener_deconvolve(img: &ImageF, k: &Kernel2D<f64>, nsr: f64) -> ImageF {
    let padded = Padded::new(img, pad_for(k));
    padded.deconvolve(&padded.otf(k), nsr)
}

fn motion_kernel(length: f64, angle: f64) -> Kernel2D<f64> {
    Kernel2D::motion_line(length.max(1.0), angle).expect("length >= 1")
}

/// Blind estimate of a linear motion kernel.
///
/// The angle is the least-energy axis of the noise-compensated structure
/// tensor; the length is `1/f0` for the first spectral minimum `f0` along that
/// axis. When the tensor is close to isotropic or no minimum is found, the
/// candidate grid is ranked by `probe` after deconvolution.
pub fn estimate_motion_kernel(img: &ImageF, probe: &dyn QualityProbe) -> Result<MotionEstimate> {
    let l: Plane<f64> = to_luma(img).cast();
    let sigma = immerkaer_channel(&l);
    let (rho, angle) = structure_anisotropy_denoised(&l, sigma * sigma);
    if rho >= MIN_ANISOTROPY {
        let length = blur_extent(&l, BlurKind::Motion, angle);
        if (LENGTH_RANGE.0..=LENGTH_RANGE.1).contains(&length) {
            return Ok(MotionEstimate {
                length,
                angle,
                fallback: false,
            });
        }
    }
    let pad = pad_for(&motion_kernel(FALLBACK_LENGTHS[3], 45.0));
    let padded = Padded::new(img, pad);
    let mut best: Option<(f64, MotionEstimate)> = None;
    for &length in &FALLBACK_LENGTHS {
        for &angle in &FALLBACK_ANGLES {
            let out = padded.deconvolve(
                &padded.otf(&motion_kernel(length, angle)),
                FALLBACK_NSR as f64,
            );
            let s = probe.score(&super::clamp_unit(out))?;
            if best.map_or(true, |(b, _)| s > b) {
                best = Some((
                    s,
                    MotionEstimate {
                        length,
                        angle,
                        fallback: true,
                    },
                ));
            }
        }
    }
    Ok(best.expect("non-empty grid").1)
}

/// Smallest NSR the measured noise allows: the Wiener ratio of the estimated
/// noise variance to the luma variance. Candidates below it would mostly
/// amplify noise, which the quality probe tends to read as extra sharpness.
fn noise_nsr_floor(img: &ImageF) -> f64 {
    let l: Plane<f64> = to_luma(img).cast();
    let sigma = immerkaer_channel(&l);
    let n = l.as_slice().len().max(1) as f64;
    let mean = l.as_slice().iter().sum::<f64>() / n;
    let var = l.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return 0.0;
    }
    sigma * sigma / var
}

/// Highest-scoring deconvolution over a set of kernels and NSR values; the
/// first candidate wins ties.
fn best_of(
    img: &ImageF,
    kernels: &[Kernel2D<f64>],
    nsr: &[f32],
    probe: &dyn QualityProbe,
) -> Result<ImageF> {
    let pad = kernels.iter().map(pad_for).max().unwrap_or(1);
    let padded = Padded::new(img, pad);
    let mut best: Option<(f64, ImageF)> = None;
    let floor = noise_nsr_floor(img);
    let mut nsr64: Vec<f64> = nsr.iter().map(|&n| (n as f64).max(floor)).collect();
    nsr64.dedup();
    for k in kernels {
        for out in padded.deconvolve_all(&padded.otf(k), &nsr64) {
            let out = super::clamp_unit(out);
            let s = probe.score(&out)?;
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, out));
            }
        }
    }
    Ok(best.map(|b| b.1).unwrap_or_else(|| img.clone()))
}

pub(crate) fn deblur_motion(img: &ImageF, nsr: &[f32], probe: &dyn QualityProbe) -> Result<ImageF> {
    let est = estimate_motion_kernel(img, probe)?;
    best_of(img, &[motion_kernel(est.length, est.angle)], nsr, probe)
}

/// Disk deconvolution. The radius comes from the first zero of the radial
/// spectrum when that estimate lies within one pixel of the radius grid;
/// otherwise every grid radius is tried. The probe picks the NSR, and the
/// radius in the second case.
pub(crate) fn deblur_disk(
    img: &ImageF,
    radii: &[f32],
    nsr: &[f32],
    probe: &dyn QualityProbe,
) -> Result<ImageF> {
    let l: Plane<f64> = to_luma(img).cast();
    let r_hat = blur_extent(&l, BlurKind::Defocus, 0.0);
    let lo = radii.iter().cloned().fold(f32::INFINITY, f32::min) as f64 - 1.0;
    let hi = radii.iter().cloned().fold(0.0, f32::max) as f64 + 1.0;
    let kernels = if r_hat >= lo.max(0.5) && r_hat <= hi {
        vec![Kernel2D::disk(r_hat)?]
    } else {
        radii
            .iter()
            .map(|&r| Kernel2D::disk(r as f64))
            .collect::<Result<Vec<_>>>()?
    };
    best_of(img, &kernels, nsr, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::convolve2d;
    use crate::restore::SharpnessProbe;
    use crate::synth::natural_scene;

    fn blur(img: &ImageF, k: &Kernel2D<f32>) -> ImageF {
        img.try_map_planes(|p| convolve2d(p, k)).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let img = natural_scene(40, 33, 1);
        let out = wiener_deconvolve(&img, &Kernel2D::identity(), 1e-12);
        let err = img
            .samples()
            .zip(out.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn known_kernel_deconvolution_helps() {
        let img = natural_scene(96, 96, 3);
        let k32 = Kernel2D::<f32>::motion_line(15.0, 30.0).unwrap();
        let k64 = Kernel2D::<f64>::motion_line(15.0, 30.0).unwrap();
        let blurred = blur(&img, &k32);
        let out = super::super::clamp_unit(wiener_deconvolve(&blurred, &k64, 0.002));
        assert!(out.mean_abs_diff(&img).unwrap() < blurred.mean_abs_diff(&img).unwrap());
    }

    #[test]
    fn isotropic_blur_falls_back() {
        let img = natural_scene(96, 96, 6);
        let blurred = blur(&img, &Kernel2D::disk(4.0).unwrap());
        let est = estimate_motion_kernel(&blurred, &SharpnessProbe).unwrap();
        assert!(est.fallback);
        assert!(FALLBACK_LENGTHS.contains(&est.length) && FALLBACK_ANGLES.contains(&est.angle));
        assert_eq!(
            est,
            estimate_motion_kernel(&blurred, &SharpnessProbe).unwrap()
        );
    }
}
