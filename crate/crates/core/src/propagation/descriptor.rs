use serde::{Deserialize, Serialize};

use super::PropagationError;
use crate::learn::{featurize, hidden_activations, ToyBackboneParams, HIDDEN};
use crate::learn::LBP_OFFSETS;
use crate::mask::{ImageRaster, RegionSelection};
use crate::region::color::rgb_to_hsv;

pub const HSV_BINS: usize = 64;
pub const LBP_BINS: usize = 256;
pub const EMBED_LEN: usize = HIDDEN;

/// Color, texture and optional embedding summary of a region. Values are
/// held at f32 precision so that persisted indices round-trip exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub hsv_hist: Vec<f32>,
    pub lbp_hist: Vec<f32>,
    pub embedding: Option<Vec<f32>>,
}

/// 8 hue × 4 saturation × 2 value bins, laid out as `h·8 + s·2 + v`.
pub fn hsv_bin(rgb: [u8; 3]) -> usize {
    let (h, s, v) = rgb_to_hsv(rgb);
    let hb = ((h / 45.0) as usize).min(7);
    let sb = ((s * 4.0) as usize).min(3);
    let vb = ((v * 2.0) as usize).min(1);
    hb * 8 + sb * 2 + vb
}

/// Radius-1 LBP code on the luma plane, or `None` when a neighbor falls
/// outside the image.
pub fn lbp_code(gray: &[u8], width: u32, height: u32, x: u32, y: u32) -> Option<u8> {
    if x == 0 || y == 0 || x + 1 >= width || y + 1 >= height {
        return None;
    }
    let w = width as usize;
    let center = gray[y as usize * w + x as usize];
    let mut code = 0u8;
    for (k, &(dx, dy)) in LBP_OFFSETS.iter().enumerate() {
        let n = gray[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize];
        if n > center {
            code |= 1 << k;
        }
    }
    Some(code)
}

fn normalize(counts: &[f64]) -> Vec<f32> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|&c| (c / total) as f32).collect()
}

pub fn compute_descriptor(
    image: &ImageRaster,
    sel: &RegionSelection,
    model: Option<&ToyBackboneParams>,
) -> Result<RegionDescriptor, PropagationError> {
    let hidden = model.map(|m| hidden_activations(m, &featurize(image)));
    compute_descriptor_with_hidden(image, sel, hidden.as_deref())
}

/// As [`compute_descriptor`], with per-pixel hidden activations supplied by
/// the caller so one featurization can serve many regions of an image.
pub fn compute_descriptor_with_hidden(
    image: &ImageRaster,
    sel: &RegionSelection,
    hidden: Option<&[[f64; HIDDEN]]>,
) -> Result<RegionDescriptor, PropagationError> {
    let (w, h) = (image.width(), image.height());
    if sel.width() != w || sel.height() != h {
        return Err(PropagationError::DimensionMismatch("selection vs image".into()));
    }
    if sel.is_empty() {
        return Err(PropagationError::EmptyRegion);
    }
    let gray = image.gray_plane();
    let mut hsv = vec![0.0; HSV_BINS];
    let mut lbp = vec![0.0; LBP_BINS];
    let mut lbp_n = 0usize;
    let mut emb = vec![0.0; EMBED_LEN];
    for i in sel.iter() {
        let (x, y) = ((i % w as usize) as u32, (i / w as usize) as u32);
        hsv[hsv_bin(image.at(i))] += 1.0;
        if let Some(code) = lbp_code(&gray, w, h, x, y) {
            lbp[code as usize] += 1.0;
            lbp_n += 1;
        }
        if let Some(hd) = hidden {
            for (e, v) in emb.iter_mut().zip(hd[i].iter()) {
                *e += v;
            }
        }
    }
    if lbp_n == 0 {
        return Err(PropagationError::RegionTooThin);
    }
    let n = sel.count() as f64;
    Ok(RegionDescriptor {
        hsv_hist: normalize(&hsv),
        lbp_hist: normalize(&lbp),
        embedding: hidden.map(|_| emb.iter().map(|v| (v / n) as f32).collect()),
    })
}

/// Cosine similarity in f64; zero when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_red_lands_in_bin_seven() {
        let img = ImageRaster::filled(5, 5, [255, 0, 0]).unwrap();
        let d = compute_descriptor(&img, &RegionSelection::full(5, 5), None).unwrap();
        assert_eq!(d.hsv_hist[7], 1.0);
        assert_eq!(hsv_bin([255, 0, 0]), 7);
    }

    #[test]
    fn uniform_region_is_lbp_code_zero() {
        let img = ImageRaster::filled(6, 6, [90, 90, 90]).unwrap();
        let d = compute_descriptor(&img, &RegionSelection::full(6, 6), None).unwrap();
        assert_eq!(d.lbp_hist[0], 1.0);
        assert!(d.embedding.is_none());
    }

    #[test]
    fn lbp_code_bits_follow_offsets() {
        // Only the top-left neighbor is brighter: bit 0. Only the left one: bit 7.
        let mut gray = vec![10u8; 9];
        gray[0] = 200;
        assert_eq!(lbp_code(&gray, 3, 3, 1, 1), Some(1));
        let mut gray = vec![10u8; 9];
        gray[3] = 200;
        assert_eq!(lbp_code(&gray, 3, 3, 1, 1), Some(128));
        assert_eq!(lbp_code(&gray, 3, 3, 0, 1), None);
    }

    #[test]
    fn errors_and_determinism() {
        let img = ImageRaster::from_fn(6, 6, |x, y| [(x * 40) as u8, (y * 40) as u8, 7]).unwrap();
        assert!(matches!(
            compute_descriptor(&img, &RegionSelection::empty(6, 6), None),
            Err(PropagationError::EmptyRegion)
        ));
        let edge = RegionSelection::from_fn(6, 6, |x, _| x == 0);
        assert!(matches!(compute_descriptor(&img, &edge, None), Err(PropagationError::RegionTooThin)));
        let sel = RegionSelection::from_fn(6, 6, |x, y| x > 1 && y < 4);
        let m = ToyBackboneParams::init(3);
        let a = compute_descriptor(&img, &sel, Some(&m)).unwrap();
        assert_eq!(a, compute_descriptor(&img.clone(), &sel, Some(&m)).unwrap());
        assert_eq!(a.embedding.as_ref().unwrap().len(), EMBED_LEN);
        let s: f32 = a.hsv_hist.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cosine_properties() {
        let a = [0.2f32, 0.0, 0.8];
        let b = [0.0f32, 1.0, 0.0];
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
        assert_eq!(cosine(&a, &b), 0.0);
        assert_eq!(cosine(&a, &[0.0; 3]), 0.0);
        let c = [0.5f32, 0.3, 0.1];
        assert_eq!(cosine(&a, &c), cosine(&c, &a));
    }
}
