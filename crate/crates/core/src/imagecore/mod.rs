//! Image carrier types and the shared numerical kernels: convolution,
//! resampling, FFT and PNG/JPEG codecs.
//!
//! The containers and kernels are generic over [`Scalar`] (`f32`/`f64`);
//! the rest of the crate works on the `f32` aliases exported at the crate root.

mod fft;
mod filter;
mod image;
mod io;
mod kernel;
mod resize;
mod scalar;

pub use self::fft::{bin_frequency, fft2, ifft2, kernel_otf, Spectrum};
pub use self::filter::{
    box_mean, convolve2d, convolve_separable, directional_median, directional_opening,
    gaussian_blur, laplacian, max_filter, median_filter, min_filter, sample_bilinear, sobel,
};
pub use self::image::{to_luma, Image, Plane};
pub use self::io::{
    encode_png, from_rgb8, jpeg_roundtrip, load_image, quantize, save_image, to_rgb8,
};
pub use self::kernel::{gaussian_1d, Kernel2D};
pub use self::resize::{resize, resize_plane, ResizeFilter};
pub use self::scalar::Scalar;

pub use self::image::reflect101;
