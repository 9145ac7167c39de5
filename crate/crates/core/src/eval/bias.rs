//! Synthetic spurious-correlation bench. Train scenes pair blue with sky;
//! pool and OOD scenes each contain one blue building. Some pool buildings
//! are near-clones of designated source buildings, recorded as ground truth
//! for scoring propagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mask::{ClassId, ImageRaster, RegionSelection, SegmentationMask};
use crate::propagation::{compute_descriptor, cosine};
use crate::region::color::{hsv_to_rgb, rgb_to_hsv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub seed: u64,
    pub n_train: usize,
    /// Train-split scenes without labels, each holding one blue building;
    /// these are what a critic corrects.
    pub n_pool: usize,
    pub n_ood: usize,
    pub width: u32,
    pub height: u32,
    /// Fraction of pool buildings that are near-clones of a source building.
    pub clone_rate: f64,
    pub clones_per_source: usize,
    /// How many distinct HSV bins facade families cycle through (1..=8).
    pub facade_bins: usize,
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec {
            seed: 0,
            n_train: 25,
            n_pool: 21,
            n_ood: 14,
            width: 32,
            height: 32,
            clone_rate: 13.0 / 21.0,
            clones_per_source: 5,
            facade_bins: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasImage {
    pub id: String,
    pub image: ImageRaster,
    pub gt: SegmentationMask,
    /// The blue building, for pool and OOD scenes.
    pub building: Option<RegionSelection>,
    pub family: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CloneRegistry {
    /// Pool indices whose building is a designated correction source.
    pub sources: Vec<usize>,
    /// `(clone pool index, source pool index, [hsv sim, lbp sim])`.
    pub clones: Vec<(usize, usize, [f64; 2])>,
    /// Pool buildings that are neither sources nor clones.
    pub uniques: Vec<usize>,
}

impl CloneRegistry {
    pub fn clones_of(&self, source: usize) -> Vec<usize> {
        self.clones.iter().filter(|c| c.1 == source).map(|c| c.0).collect()
    }

    /// Clones over all correctable pool buildings.
    pub fn planted_rate(&self) -> f64 {
        let total = self.sources.len() + self.clones.len() + self.uniques.len();
        if total == 0 {
            0.0
        } else {
            self.clones.len() as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasDataset {
    pub spec: BiasSpec,
    pub train: Vec<BiasImage>,
    pub pool: Vec<BiasImage>,
    pub ood: Vec<BiasImage>,
    pub registry: CloneRegistry,
}

/// Blue in the sense of the bias: hue in [200°, 260°] and saturation ≥ 0.4.
pub fn is_blue(rgb: [u8; 3]) -> bool {
    let (h, s, _) = rgb_to_hsv(rgb);
    (200.0..=260.0).contains(&h) && s >= 0.4
}

/// Facade base colors, one per HSV bin, as (hue°, saturation, value).
/// Bright bins come first.
const FACADE_HSV: [(f64, f64, f64); 8] = [
    (212.0, 0.62, 0.80),
    (242.0, 0.62, 0.80),
    (212.0, 0.88, 0.80),
    (242.0, 0.88, 0.80),
    (245.0, 0.45, 0.80),
    (212.0, 0.62, 0.35),
    (242.0, 0.62, 0.35),
    (212.0, 0.88, 0.35),
];

const NON_BLUE_FACADES: [[u8; 3]; 4] = [[70, 70, 70], [190, 170, 140], [150, 70, 50], [95, 65, 45]];

#[derive(Clone, Copy, Debug, PartialEq)]
struct BlueBuilding {
    family: usize,
    w: u32,
    h: u32,
}

/// Window and floor texture: a brightness factor per facade offset.
fn facade_factor(dx: u32, dy: u32) -> f64 {
    if dy % 4 == 0 {
        0.94
    } else if dx % 3 == 1 && dy % 4 == 2 {
        1.06
    } else {
        1.0
    }
}

fn scale(rgb: [u8; 3], f: f64) -> [u8; 3] {
    rgb.map(|c| (c as f64 * f).round().clamp(0.0, 255.0) as u8)
}

fn jitter(rng: &mut ChaCha8Rng, rgb: [u8; 3], amp: i32) -> [u8; 3] {
    if amp == 0 {
        return rgb;
    }
    rgb.map(|c| (c as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8)
}

struct Canvas {
    w: u32,
    rgb: Vec<[u8; 3]>,
    labels: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, x: u32, y: u32, rgb: [u8; 3], class: ClassId) {
        let i = (y * self.w + x) as usize;
        self.rgb[i] = rgb;
        self.labels[i] = class.get();
    }
}

/// Free horizontal spans along the ground, keeping one sky column between
/// buildings and away from the image border.
fn place(rng: &mut ChaCha8Rng, occupied: &mut [bool], width: u32) -> Option<u32> {
    let w = occupied.len() as u32;
    let fits: Vec<u32> = (1..w.saturating_sub(width))
        .filter(|&x| (x - 1..=(x + width).min(w - 1)).all(|c| !occupied[c as usize]))
        .collect();
    if fits.is_empty() {
        return None;
    }
    let x = fits[rng.random_range(0..fits.len())];
    for c in x..x + width {
        occupied[c as usize] = true;
    }
    Some(x)
}

fn scene(spec: &BiasSpec, rng: &mut ChaCha8Rng, blue: Option<BlueBuilding>) -> (ImageRaster, SegmentationMask, Option<RegionSelection>) {
    let (w, h) = (spec.width, spec.height);
    let n = (w * h) as usize;
    let ground = (h as f64 * rng.random_range(0.74..0.82)) as u32;
    let sky_base = hsv_to_rgb(rng.random_range(205.0..220.0), rng.random_range(0.30..0.45), rng.random_range(0.85..0.95));
    let sky_amp = if rng.random_bool(0.3) { 8 } else { 2 };
    let road = jitter(rng, [128, 64, 128], 6);
    let mut c = Canvas { w, rgb: vec![[0; 3]; n], labels: vec![0; n] };
    for y in 0..h {
        for x in 0..w {
            if y < ground {
                let px = jitter(rng, sky_base, sky_amp);
                c.put(x, y, px, ClassId::SKY);
            } else {
                let px = jitter(rng, road, 3);
                c.put(x, y, px, ClassId::IMPERVIOUS);
            }
        }
    }
    if rng.random_bool(0.4) {
        let (cx, cy) = (rng.random_range(0..w) as f64, rng.random_range(0..ground / 2 + 1) as f64);
        let (rx, ry) = (rng.random_range(3.0..6.0), rng.random_range(1.5..3.0));
        for y in 0..ground {
            for x in 0..w {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                if dx * dx + dy * dy <= 1.0 {
                    let v = rng.random_range(228..=245);
                    c.put(x, y, [v, v, v.saturating_add(3)], ClassId::SKY);
                }
            }
        }
    }

    let mut occupied = vec![false; w as usize];
    let mut building = None;
    if let Some(b) = blue {
        let (hue, s, v) = FACADE_HSV[b.family % FACADE_HSV.len()];
        let base = hsv_to_rgb(hue, s, v);
        let x0 = place(rng, &mut occupied, b.w).expect("blue building fits");
        let y0 = ground - b.h;
        let mut sel = RegionSelection::empty(w, h);
        for y in y0..ground {
            for x in x0..x0 + b.w {
                c.put(x, y, scale(base, facade_factor(x - x0, y - y0)), ClassId::BUILDINGS);
                sel.insert((y * w + x) as usize);
            }
        }
        building = Some(sel);
    }
    for _ in 0..rng.random_range(1..=3) {
        let bw = rng.random_range(4..=8);
        let Some(x0) = place(rng, &mut occupied, bw) else { break };
        let bh = rng.random_range(5..=ground.saturating_sub(3).max(6));
        let y0 = ground.saturating_sub(bh);
        let pick = NON_BLUE_FACADES[rng.random_range(0..NON_BLUE_FACADES.len())];
        let base = jitter(rng, pick, 10);
        let windows = rng.random_bool(0.6);
        for y in y0..ground {
            for x in x0..x0 + bw {
                let px = if windows { scale(base, facade_factor(x - x0, y - y0)) } else { jitter(rng, base, 2) };
                c.put(x, y, px, ClassId::BUILDINGS);
            }
        }
    }
    if rng.random_bool(0.5) {
        if let Some(x0) = place(rng, &mut occupied, 5) {
            let (cx, cy) = (x0 as f64 + 2.0, ground as f64 - 3.0);
            for y in ground.saturating_sub(6)..ground {
                for x in x0..x0 + 5 {
                    let (dx, dy) = (x as f64 - cx, (y as f64 - cy) / 1.3);
                    if dx * dx + dy * dy <= 6.5 {
                        let px = jitter(rng, [107, 142, 35], 8);
                        c.put(x, y, px, ClassId::TREES);
                    }
                }
            }
        }
    }
    let pixels = c.rgb.iter().flatten().copied().collect();
    (
        ImageRaster::new(w, h, pixels).expect("sized"),
        SegmentationMask::new(w, h, c.labels).expect("valid labels"),
        building,
    )
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn building_shape(rng: &mut ChaCha8Rng, spec: &BiasSpec, family: usize) -> BlueBuilding {
    let max_h = (spec.height as f64 * 0.74) as u32 - 3;
    BlueBuilding { family, w: rng.random_range(7..=10), h: rng.random_range(9..=max_h.max(10)) }
}

fn region_sims(a: &BiasImage, b: &BiasImage) -> [f64; 2] {
    let da = compute_descriptor(&a.image, a.building.as_ref().expect("blue"), None).expect("descriptor");
    let db = compute_descriptor(&b.image, b.building.as_ref().expect("blue"), None).expect("descriptor");
    [cosine(&da.hsv_hist, &db.hsv_hist), cosine(&da.lbp_hist, &db.lbp_hist)]
}

/// Deterministic in `spec`. Clone buildings share family, size and facade
/// phase with their source; each is re-drawn until both its HSV and LBP
/// similarity to the source reach 0.97.
pub fn gen_biased_dataset(spec: &BiasSpec) -> BiasDataset {
    let bins = spec.facade_bins.clamp(1, FACADE_HSV.len());
    let n_clones = ((spec.clone_rate * spec.n_pool as f64).round() as usize).min(spec.n_pool);
    let per = spec.clones_per_source.max(1);
    let n_sources = n_clones.div_ceil(per).min(spec.n_pool - n_clones);
    let n_clones = n_clones.min(n_sources * per);
    let n_unique = spec.n_pool - n_clones - n_sources;

    let train = (0..spec.n_train)
        .map(|i| {
            let mut rng = rng_for(spec.seed, i as u64);
            let (image, gt, _) = scene(spec, &mut rng, None);
            BiasImage { id: format!("train{i:03}"), image, gt, building: None, family: None }
        })
        .collect();

    // Pool layout: sources, then their clones in source order, then uniques.
    let mut shape_rng = rng_for(spec.seed, 1 << 32);
    let shapes: Vec<BlueBuilding> = (0..n_sources + n_unique).map(|f| building_shape(&mut shape_rng, spec, f % bins)).collect();
    let mut plan: Vec<(BlueBuilding, Option<usize>)> = (0..n_sources).map(|s| (shapes[s], None)).collect();
    for k in 0..n_clones {
        let s = k % n_sources.max(1);
        plan.push((shapes[s], Some(s)));
    }
    plan[n_sources..].sort_by_key(|p| p.1);
    for u in 0..n_unique {
        plan.push((shapes[n_sources + u], None));
    }

    let mut pool: Vec<BiasImage> = Vec::with_capacity(spec.n_pool);
    let mut registry = CloneRegistry { sources: (0..n_sources).collect(), ..Default::default() };
    for (i, (shape, source)) in plan.iter().enumerate() {
        let mut attempt = 0u64;
        loop {
            let mut rng = rng_for(spec.seed, (2 << 32) + ((i as u64) << 8) + attempt);
            let (image, gt, building) = scene(spec, &mut rng, Some(*shape));
            let img = BiasImage { id: format!("pool{i:03}"), image, gt, building, family: Some(shape.family) };
            if let Some(s) = source {
                let sims = region_sims(&pool[*s], &img);
                if (sims[0] < 0.97 || sims[1] < 0.97) && attempt < 64 {
                    attempt += 1;
                    continue;
                }
                registry.clones.push((i, *s, sims));
            } else if i >= n_sources {
                registry.uniques.push(i);
            }
            pool.push(img);
            break;
        }
    }

    let ood = (0..spec.n_ood)
        .map(|i| {
            let mut rng = rng_for(spec.seed, (3 << 32) + i as u64);
            let family = rng.random_range(0..bins);
            let shape = building_shape(&mut rng, spec, family);
            let (image, gt, building) = scene(spec, &mut rng, Some(shape));
            BiasImage { id: format!("ood{i:03}"), image, gt, building, family: Some(family) }
        })
        .collect();

    BiasDataset { spec: spec.clone(), train, pool, ood, registry }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let s = BiasSpec { n_train: 3, n_pool: 6, n_ood: 2, clone_rate: 0.5, ..BiasSpec::default() };
        assert_eq!(gen_biased_dataset(&s), gen_biased_dataset(&s));
    }

    #[test]
    fn bias_holds_in_train_and_is_violated_in_ood() {
        let d = gen_biased_dataset(&BiasSpec { n_pool: 0, clone_rate: 0.0, ..BiasSpec::default() });
        for im in &d.train {
            for i in 0..im.image.len() {
                if is_blue(im.image.at(i)) {
                    assert_eq!(im.gt.class_at(i), ClassId::SKY, "{} pixel {i}", im.id);
                }
            }
        }
        for im in &d.ood {
            let b = im.building.as_ref().unwrap();
            assert!(b.iter().all(|i| is_blue(im.image.at(i)) && im.gt.class_at(i) == ClassId::BUILDINGS));
        }
    }

    #[test]
    fn clone_plan_matches_rate() {
        let d = gen_biased_dataset(&BiasSpec::default());
        let r = &d.registry;
        assert_eq!((r.sources.len(), r.clones.len(), r.uniques.len()), (3, 13, 5));
        assert!((r.planted_rate() - 13.0 / 21.0).abs() < 1e-12);
        assert_eq!(r.clones_of(0).len(), 5);
        for &(c, s, sims) in &r.clones {
            assert!(sims[0] >= 0.97 && sims[1] >= 0.97, "clone {c} of {s}: {sims:?}");
            assert_eq!(sims, region_sims(&d.pool[s], &d.pool[c]));
        }
    }
}
