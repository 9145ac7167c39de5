use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::RegionError;
use crate::mask::{ImageRaster, RegionSelection};

/// Largest Euclidean distance between two 8-bit RGB colors, `sqrt(3 * 255^2)`.
pub const MAX_RGB_DISTANCE: f64 = 441.672_955_930_063_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(format!("connectivity must be 4 or 8, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(i32, i32)] {
        const FOUR: [(i32, i32); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(i32, i32); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WandParams {
    /// Euclidean RGB distance to the seed color.
    pub tolerance: f64,
    pub connectivity: Connectivity,
}

impl WandParams {
    pub fn new(tolerance: f64, connectivity: Connectivity) -> Result<Self, RegionError> {
        if !(0.0..=442.0).contains(&tolerance) {
            return Err(RegionError::InvalidParams(format!("tolerance {tolerance} not in [0, 442]")));
        }
        Ok(WandParams { tolerance, connectivity })
    }
}

/// Connected component containing `seed` among pixels accepted by `accept`.
/// The seed is always included.
pub fn grow_region(
    width: u32,
    height: u32,
    seed: (u32, u32),
    connectivity: Connectivity,
    accept: impl Fn(usize) -> bool,
) -> Result<RegionSelection, RegionError> {
    let (sx, sy) = seed;
    if sx >= width || sy >= height {
        return Err(RegionError::SeedOutOfBounds { x: sx, y: sy, width, height });
    }
    let w = width as usize;
    let mut sel = RegionSelection::empty(width, height);
    let start = sy as usize * w + sx as usize;
    sel.insert(start);
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i32, (i / w) as i32);
        for &(dx, dy) in connectivity.offsets() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= width as i32 || ny >= height as i32 {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if !sel.contains(j) && accept(j) {
                sel.insert(j);
                queue.push_back(j);
            }
        }
    }
    Ok(sel)
}

/// Magic wand: region growing from `seed` over pixels whose RGB distance to
/// the seed color is within tolerance.
pub fn wand_select(
    image: &ImageRaster,
    seed: (u32, u32),
    params: WandParams,
) -> Result<RegionSelection, RegionError> {
    let (w, h) = (image.width(), image.height());
    if seed.0 >= w || seed.1 >= h {
        return Err(RegionError::SeedOutOfBounds { x: seed.0, y: seed.1, width: w, height: h });
    }
    let origin = image.pixel(seed.0, seed.1);
    let tol2 = params.tolerance * params.tolerance;
    grow_region(w, h, seed, params.connectivity, |j| {
        let p = image.at(j);
        let d2: i32 = (0..3).map(|c| (p[c] as i32 - origin[c] as i32).pow(2)).sum();
        d2 as f64 <= tol2
    })
}
