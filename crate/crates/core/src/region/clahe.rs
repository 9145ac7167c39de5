//! Contrast-limited adaptive histogram equalization on the HSV value channel.
//!
//! Per-tile histograms are clipped at `clip_limit * tile_area / 256`, the
//! excess is spread evenly over all bins, and each pixel's new value is a
//! bilinear blend of the four nearest tile mappings. Hue and saturation are
//! kept by rescaling RGB with the ratio of new to old value.

use serde::{Deserialize, Serialize};

use super::color::hsv_to_rgb;
use crate::mask::ImageRaster;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    pub clip_limit: f64,
    pub tiles: (u32, u32),
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams { clip_limit: 2.0, tiles: (8, 8) }
    }
}

fn tile_lut(values: &[u8], clip_limit: f64) -> [u8; 256] {
    let mut hist = [0u32; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    let area = values.len() as u32;
    let clip = ((clip_limit * area as f64 / 256.0) as u32).max(1);
    let mut excess = 0u32;
    for h in hist.iter_mut() {
        if *h > clip {
            excess += *h - clip;
            *h = clip;
        }
    }
    let batch = excess / 256;
    let residual = (excess % 256) as usize;
    for h in hist.iter_mut() {
        *h += batch;
    }
    if residual > 0 {
        let step = (256 / residual).max(1);
        for i in (0..256).step_by(step).take(residual) {
            hist[i] += 1;
        }
    }
    let scale = 255.0 / area.max(1) as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0u32;
    for (i, h) in hist.iter().enumerate() {
        cdf += h;
        lut[i] = (cdf as f64 * scale).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Tile boundaries along one axis: `n` tiles over `len` pixels.
fn bounds(len: u32, n: u32) -> Vec<(u32, u32)> {
    (0..n).map(|t| (t * len / n, (t + 1) * len / n)).collect()
}

pub fn clahe(image: &ImageRaster, params: ClaheParams) -> ImageRaster {
    let (w, h) = (image.width(), image.height());
    let tx = params.tiles.0.clamp(1, w);
    let ty = params.tiles.1.clamp(1, h);
    let clip_limit = if params.clip_limit > 0.0 { params.clip_limit } else { 2.0 };
    let value: Vec<u8> = (0..image.len()).map(|i| image.at(i).into_iter().max().unwrap()).collect();

    let xb = bounds(w, tx);
    let yb = bounds(h, ty);
    let mut luts = Vec::with_capacity((tx * ty) as usize);
    for &(y0, y1) in &yb {
        for &(x0, x1) in &xb {
            let vals: Vec<u8> = (y0..y1)
                .flat_map(|y| (x0..x1).map(move |x| (y * w + x) as usize))
                .map(|i| value[i])
                .collect();
            luts.push(tile_lut(&vals, clip_limit));
        }
    }
    let centers = |b: &[(u32, u32)]| b.iter().map(|&(a, z)| (a + z) as f64 / 2.0 - 0.5).collect::<Vec<_>>();
    let (cx, cy) = (centers(&xb), centers(&yb));

    // Neighboring tile pair and blend weight toward the second tile.
    let locate = |c: &[f64], p: f64| -> (usize, usize, f64) {
        if p <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if p >= c[last] {
            return (last, last, 0.0);
        }
        let k = c.iter().rposition(|&v| v <= p).unwrap();
        (k, k + 1, (p - c[k]) / (c[k + 1] - c[k]))
    };

    ImageRaster::from_fn(w, h, |x, y| {
        let i = (y * w + x) as usize;
        let v = value[i];
        let (x0, x1, fx) = locate(&cx, x as f64);
        let (y0, y1, fy) = locate(&cy, y as f64);
        let at = |ty: usize, tx_: usize| luts[ty * tx as usize + tx_][v as usize] as f64;
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        let new_v = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0);
        let rgb = image.at(i);
        if v == 0 {
            let g = new_v as u8;
            return [g, g, g];
        }
        let (hh, s, _) = super::color::rgb_to_hsv(rgb);
        hsv_to_rgb(hh, s, new_v / 255.0)
    })
    .expect("same dims")
}
