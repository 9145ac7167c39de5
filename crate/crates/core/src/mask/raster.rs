use super::{ClassId, MaskError, NUM_CLASSES};

fn check_dims(width: u32, height: u32) -> Result<usize, MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::InvalidDimensions { width, height });
    }
    Ok(width as usize * height as usize)
}

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRaster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        if pixels.len() != n * 3 {
            return Err(MaskError::TruncatedPayload { expected: n * 3, actual: pixels.len() });
        }
        Ok(ImageRaster { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        Ok(ImageRaster { width, height, pixels: rgb.repeat(n) })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(n * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Ok(ImageRaster { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.at(y as usize * self.width as usize + x as usize)
    }

    /// Pixel by row-major index.
    pub fn at(&self, i: usize) -> [u8; 3] {
        [self.pixels[3 * i], self.pixels[3 * i + 1], self.pixels[3 * i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Integer luma used for texture codes and window statistics.
    pub fn gray(&self, i: usize) -> u8 {
        let [r, g, b] = self.at(i);
        luma(r, g, b)
    }

    pub fn gray_plane(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.gray(i)).collect()
    }
}

pub(crate) fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Row-major per-pixel class ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    labels: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        if labels.len() != n {
            return Err(MaskError::TruncatedPayload { expected: n, actual: labels.len() });
        }
        if let Some((index, &label)) =
            labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES)
        {
            return Err(MaskError::LabelOutOfRange { index, label });
        }
        Ok(SegmentationMask { width, height, labels })
    }

    pub fn filled(width: u32, height: u32, class: ClassId) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        Ok(SegmentationMask { width, height, labels: vec![class.get(); n] })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_at(&self, i: usize) -> ClassId {
        ClassId::new(self.labels[i]).expect("validated label")
    }

    pub fn get(&self, x: u32, y: u32) -> ClassId {
        self.class_at(y as usize * self.width as usize + x as usize)
    }

    pub fn set(&mut self, i: usize, class: ClassId) {
        self.labels[i] = class.get();
    }

    pub fn same_dims(&self, w: u32, h: u32) -> bool {
        self.width == w && self.height == h
    }
}

/// Per-pixel class scores, `NUM_CLASSES` values per pixel, pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl LogitMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        if values.len() != n * NUM_CLASSES {
            return Err(MaskError::TruncatedPayload {
                expected: n * NUM_CLASSES,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MaskError::Manifest("non-finite logit".into()));
        }
        Ok(LogitMap { width, height, values })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(usize) -> [f64; NUM_CLASSES],
    ) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        let values = (0..n).flat_map(|i| f(i)).collect();
        LogitMap::new(width, height, values)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-pixel class probabilities; each pixel sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, MaskError> {
        let n = check_dims(width, height)?;
        if values.len() != n * NUM_CLASSES {
            return Err(MaskError::TruncatedPayload {
                expected: n * NUM_CLASSES,
                actual: values.len(),
            });
        }
        for (i, px) in values.chunks(NUM_CLASSES).enumerate() {
            let sum: f64 = px.iter().sum();
            if px.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
                return Err(MaskError::Manifest(format!("pixel {i} is not a distribution")));
            }
        }
        Ok(ProbabilityMap { width, height, values })
    }

    pub(crate) fn new_unchecked(width: u32, height: u32, values: Vec<f64>) -> Self {
        ProbabilityMap { width, height, values }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_labels_and_sizes() {
        assert!(matches!(
            SegmentationMask::new(2, 1, vec![0, 7]),
            Err(MaskError::LabelOutOfRange { index: 1, label: 7 })
        ));
        assert!(SegmentationMask::new(0, 1, vec![]).is_err());
        assert!(ImageRaster::new(1, 1, vec![0, 0]).is_err());
    }

    #[test]
    fn luma_extremes() {
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 255, 255), 255);
    }
}
