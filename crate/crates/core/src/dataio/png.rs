use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::image::ImageBuffer;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Decodes an 8- or 16-bit grayscale or RGB PNG to `[0, 1]` (value / maxval),
/// keeping its channel count.
pub fn read_image<S: Scalar>(path: &Path) -> Result<ImageBuffer<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, path)
}

/// As [`read_image`], but single-channel images are replicated to RGB.
/// The flag reports whether replication happened.
pub fn read_image_rgb<S: Scalar>(path: &Path) -> Result<(ImageBuffer<S>, bool)> {
    let img = read_image(path)?;
    let replicated = img.channels == 1;
    Ok((img.to_rgb(), replicated))
}

pub fn decode_png<S: Scalar>(bytes: &[u8], path: &Path) -> Result<ImageBuffer<S>> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: "only PNG files are supported".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let scale8 = |v: u8| S::lit(v as f64 / 255.0);
    let scale16 = |v: u16| S::lit(v as f64 / 65535.0);
    let (channels, data): (usize, Vec<S>) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(scale8).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(scale8).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(scale16).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(scale16).collect()),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                message: format!("unsupported pixel layout {:?}", other.color()),
            })
        }
    };
    ImageBuffer::from_vec(w, h, channels, data)
}

fn quantize<S: Scalar>(v: S, max: f64) -> f64 {
    (v.as_f64().clamp(0.0, 1.0) * max + 0.5).floor()
}

/// Encodes a 1- or 3-channel image; values are clamped to `[0, 1]` and
/// rounded half up.
pub fn encode_png<S: Scalar>(img: &ImageBuffer<S>, depth: BitDepth) -> Result<Vec<u8>> {
    let max = depth.max_value();
    let (w, h) = (img.width as u32, img.height as u32);
    let mut out = Vec::new();
    let enc = PngEncoder::new(&mut out);
    let err = |e: image::ImageError| Error::InvalidParameter(format!("PNG encoding failed: {e}"));
    match (img.channels, depth) {
        (1, BitDepth::Eight) => {
            let raw: Vec<u8> = img.data.iter().map(|&v| quantize(v, max) as u8).collect();
            image::ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap().write_with_encoder(enc).map_err(err)?;
        }
        (3, BitDepth::Eight) => {
            let raw: Vec<u8> = img.data.iter().map(|&v| quantize(v, max) as u8).collect();
            image::ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).unwrap().write_with_encoder(enc).map_err(err)?;
        }
        (1, BitDepth::Sixteen) => {
            let raw: Vec<u16> = img.data.iter().map(|&v| quantize(v, max) as u16).collect();
            image::ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).unwrap().write_with_encoder(enc).map_err(err)?;
        }
        (3, BitDepth::Sixteen) => {
            let raw: Vec<u16> = img.data.iter().map(|&v| quantize(v, max) as u16).collect();
            image::ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).unwrap().write_with_encoder(enc).map_err(err)?;
        }
        (c, _) => return Err(Error::Shape(format!("cannot encode a {c}-channel image"))),
    }
    Ok(out)
}

/// Atomically writes `img` as PNG.
pub fn write_image<S: Scalar>(path: &Path, img: &ImageBuffer<S>, depth: BitDepth) -> Result<()> {
    write_atomic(path, &encode_png(img, depth)?)
}

/// First channel of an image (used to store replicated grayscale compactly).
pub fn first_channel<S: Scalar>(img: &ImageBuffer<S>) -> ImageBuffer<S> {
    let data = img.data.iter().step_by(img.channels).copied().collect();
    ImageBuffer::from_vec(img.width, img.height, 1, data).unwrap()
}
