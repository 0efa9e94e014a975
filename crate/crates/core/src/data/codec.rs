use std::path::Path;

use image::{imageops::FilterType, RgbImage};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

pub fn to_unit(v: u8) -> f32 {
    f32::from(v) / 127.5 - 1.0
}

pub fn from_unit(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Decodes a PNG to RGB (grayscale is replicated), resized to `size` x `size`.
pub fn decode_png(path: &Path, size: u32) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    if rgb.width() == size && rgb.height() == size {
        Ok(rgb)
    } else {
        Ok(image::imageops::resize(&rgb, size, size, FilterType::Triangle))
    }
}

/// `(3, h, w)` uint8 tensor in channel-major order.
pub fn rgb_to_u8_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as i64, img.height() as i64);
    Tensor::from_slice(img.as_raw())
        .view([h, w, 3])
        .permute([2, 0, 1])
        .contiguous()
}

pub fn u8_to_unit(t: &Tensor) -> Tensor {
    t.to_kind(Kind::Float) / 127.5 - 1.0
}

/// `(3, h, w)` float tensor in `[-1, 1]` to an 8-bit image.
pub fn unit_tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    let size = t.size();
    if size.len() != 3 || size[0] != 3 {
        return Err(Error::dim("(3, h, w)", format!("{size:?}")));
    }
    let hwc = t.detach().to_kind(Kind::Float).permute([1, 2, 0]).contiguous();
    let values: Vec<f32> = Vec::try_from(hwc.reshape([-1]))?;
    let bytes = values.into_iter().map(from_unit).collect();
    RgbImage::from_raw(size[2] as u32, size[1] as u32, bytes)
        .ok_or_else(|| Error::Argument("image buffer size mismatch".into()))
}

pub fn save_png(t: &Tensor, path: &Path) -> Result<()> {
    let img = unit_tensor_to_rgb(t)?;
    img.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints() {
        assert_eq!(to_unit(0), -1.0);
        assert_eq!(to_unit(255), 1.0);
        assert!(to_unit(127).abs() < 0.01 && to_unit(128).abs() < 0.01);
        assert_eq!(from_unit(-1.0), 0);
        assert_eq!(from_unit(1.0), 255);
        assert_eq!(from_unit(3.0), 255);
    }

    #[test]
    fn grayscale_is_replicated() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("g.png");
        image::GrayImage::from_fn(4, 4, |x, y| image::Luma([(x * 10 + y) as u8]))
            .save(&path)
            .unwrap();
        let rgb = decode_png(&path, 4).unwrap();
        let px = rgb.get_pixel(2, 1);
        assert_eq!(px.0, [21, 21, 21]);
    }

    #[test]
    fn undecodable_file_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("broken.png");
        std::fs::write(&path, b"not a png").unwrap();
        let err = decode_png(&path, 8).unwrap_err().to_string();
        assert!(err.contains("broken.png"), "{err}");
    }

    proptest! {
        #[test]
        fn normalization_is_bijective(v in any::<u8>()) {
            prop_assert_eq!(from_unit(to_unit(v)), v);
        }

        #[test]
        fn png_round_trip_is_exact(bytes in prop::collection::vec(any::<u8>(), 8 * 8 * 3)) {
            let tmp = tempfile::tempdir().unwrap();
            let path = tmp.path().join("x.png");
            let img = RgbImage::from_raw(8, 8, bytes.clone()).unwrap();
            let t = u8_to_unit(&rgb_to_u8_tensor(&img));
            save_png(&t, &path).unwrap();
            let back = decode_png(&path, 8).unwrap();
            prop_assert_eq!(back.into_raw(), bytes);
        }
    }
}
