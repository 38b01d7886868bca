//! Beer-Lambert conversion between 8-bit intensities and optical density.

use crate::raster::RgbImage;

/// Per-pixel optical densities, one 3-vector per pixel in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct OdImage {
    pub height: usize,
    pub width: usize,
    pub od: Vec<[f64; 3]>,
}

/// `-ln(max(I, 1) / white_point)`, floored at zero for intensities brighter
/// than the white point.
#[inline]
pub fn intensity_to_od(intensity: u8, white_point: f64) -> f64 {
    let i = f64::from(intensity.max(1));
    (-(i / white_point).ln()).max(0.0)
}

#[inline]
pub fn od_to_intensity(od: f64, white_point: f64) -> u8 {
    let v = (white_point * (-od).exp()).round();
    v.clamp(0.0, 255.0) as u8
}

pub fn rgb_to_od(image: &RgbImage, white_point: f64) -> OdImage {
    assert!(white_point >= 1.0, "white point must be >= 1");
    // 256-entry lookup keeps the conversion exact and cheap
    let lut: Vec<f64> = (0..=255u8)
        .map(|i| intensity_to_od(i, white_point))
        .collect();
    let od = image
        .pixels()
        .map(|p| [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]])
        .collect();
    OdImage {
        height: image.height(),
        width: image.width(),
        od,
    }
}

pub fn od_to_rgb(od: &OdImage, white_point: f64) -> RgbImage {
    let data = od
        .od
        .iter()
        .flat_map(|v| v.map(|c| od_to_intensity(c, white_point)))
        .collect();
    RgbImage::new(od.height, od.width, data).expect("od image dims are valid")
}
