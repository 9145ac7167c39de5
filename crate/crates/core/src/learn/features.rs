use crate::mask::ImageRaster;
use crate::region::color::rgb_to_hsv;

/// Per-pixel feature count: RGB, HSV, normalized x/y, 3x3 gray mean and
/// standard deviation, and the clamped-window LBP code.
pub const FEATURES: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    width: u32,
    height: u32,
    data: Vec<[f64; FEATURES]>,
}

impl FeatureField {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel(&self, i: usize) -> &[f64; FEATURES] {
        &self.data[i]
    }

    pub fn pixels(&self) -> &[[f64; FEATURES]] {
        &self.data
    }

    pub fn from_pixels(width: u32, height: u32, data: Vec<[f64; FEATURES]>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        FeatureField { width, height, data }
    }
}

// Clockwise from the top-left neighbor; bit k is set iff neighbor k is
// strictly brighter than the center.
pub(crate) const LBP_OFFSETS: [(i32, i32); 8] =
    [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

pub fn featurize(image: &ImageRaster) -> FeatureField {
    let (w, h) = (image.width() as i32, image.height() as i32);
    let gray = image.gray_plane();
    let g = |x: i32, y: i32| gray[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize] as f64;
    let mut data = Vec::with_capacity(image.len());
    for y in 0..h {
        for x in 0..w {
            let rgb = image.pixel(x as u32, y as u32);
            let (hue, s, v) = rgb_to_hsv(rgb);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let val = g(x + dx, y + dy);
                    sum += val;
                    sq += val * val;
                }
            }
            let mean = sum / 9.0;
            let std = (sq / 9.0 - mean * mean).max(0.0).sqrt();
            let center = g(x, y);
            let code = LBP_OFFSETS
                .iter()
                .enumerate()
                .filter(|(_, &(dx, dy))| g(x + dx, y + dy) > center)
                .fold(0u32, |acc, (k, _)| acc | 1 << k);
            data.push([
                rgb[0] as f64 / 255.0,
                rgb[1] as f64 / 255.0,
                rgb[2] as f64 / 255.0,
                hue / 360.0,
                s,
                v,
                x as f64 / w as f64,
                y as f64 / h as f64,
                mean / 255.0,
                std / 255.0,
                code as f64 / 255.0,
            ]);
        }
    }
    FeatureField { width: image.width(), height: image.height(), data }
}
