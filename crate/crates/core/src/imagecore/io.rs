use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat, ImageReader, RgbImage};

use super::image::{Image, Plane};
use crate::error::{Error, Result};

/// Decodes a PNG or JPEG file; 8-bit samples map to `s / 255`, gray is replicated.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(Error::Io)?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(Error::UnsupportedFormat(path.display().to_string())),
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(from_rgb8(&decoded.to_rgb8()))
}

/// Writes an 8-bit RGB PNG with round-half-up quantisation.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path.as_ref(), ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Io(std::io::Error::other(other.to_string())),
        })
}

/// Encodes as PNG into memory.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_rgb8(img)
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(buf.into_inner())
}

/// JPEG encode/decode round trip at `quality` (1..=100).
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Result<Image> {
    let rgb = to_rgb8(img);
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality.clamp(1, 100))
        .encode(
            rgb.as_raw(),
            rgb.width(),
            rgb.height(),
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let decoded = image::load_from_memory_with_format(&buf, ImageFormat::Jpeg).map_err(|e| {
        Error::Decode {
            path: "<memory>".into(),
            reason: e.to_string(),
        }
    })?;
    Ok(from_rgb8(&decoded.to_rgb8()))
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) as f64 + 0.5).floor().min(255.0) as u8
}

pub fn to_rgb8(img: &Image) -> RgbImage {
    let (w, h) = img.dims();
    let mut out = RgbImage::new(w as u32, h as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let p = img.pixel(x as usize, y as usize);
        px.0 = [quantize(p[0]), quantize(p[1]), quantize(p[2])];
    }
    out
}

pub fn from_rgb8(rgb: &RgbImage) -> Image {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut planes = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            planes[c].set(x as usize, y as usize, px.0[c] as f32 / 255.0);
        }
    }
    Image::from_planes(planes).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantization_endpoints() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn zero_png_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.png");
        RgbImage::new(4, 4).save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (4, 4));
        assert!(img.samples().all(|v| v == 0.0));
    }

    #[test]
    fn gray_png_replicates_and_255_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        image::GrayImage::from_pixel(3, 2, image::Luma([255]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert!(img.samples().all(|v| v == 1.0));
    }

    #[test]
    fn round_trip_error_within_half_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = Image::from_fn(16, 12, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.samples().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-7);
        }
    }

    #[test]
    fn save_of_loaded_8bit_png_is_byte_identical_in_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..20 {
            let src = RgbImage::from_fn(9, 7, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
            let a = dir.path().join(format!("a{i}.png"));
            let b = dir.path().join(format!("b{i}.png"));
            src.save(&a).unwrap();
            save_image(&load_image(&a).unwrap(), &b).unwrap();
            let back = image::open(&b).unwrap().to_rgb8();
            assert_eq!(back.as_raw(), src.as_raw());
        }
    }

    #[test]
    fn unsupported_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let bmp = dir.path().join("x.bmp");
        std::fs::write(&bmp, b"BM\x00\x00garbage").unwrap();
        assert!(matches!(load_image(&bmp), Err(Error::UnsupportedFormat(_))));
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"\x89PNG\r\n\x1a\n\x00\x00broken").unwrap();
        assert!(matches!(load_image(&bad), Err(Error::Decode { .. })));
    }

    #[test]
    fn jpeg_roundtrip_keeps_dims() {
        let img = Image::from_fn(24, 16, |x, y| [x as f32 / 24.0, y as f32 / 16.0, 0.5]);
        let out = jpeg_roundtrip(&img, 20).unwrap();
        assert_eq!(out.dims(), img.dims());
        assert!(out.is_valid());
    }
}
