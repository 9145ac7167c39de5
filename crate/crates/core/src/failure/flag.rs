use serde::{Deserialize, Serialize};

use super::{FailureError, ScoreMap};
use crate::mask::RegionSelection;
use crate::region::{grow_region, Connectivity};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagParams {
    pub threshold: f64,
    pub min_area: usize,
    pub connectivity: Connectivity,
}

impl FlagParams {
    pub fn new(threshold: f64, min_area: usize, connectivity: Connectivity) -> Result<Self, FailureError> {
        if min_area == 0 || !threshold.is_finite() {
            return Err(FailureError::InvalidParams("min_area must be ≥ 1 and threshold finite".into()));
        }
        Ok(FlagParams { threshold, min_area, connectivity })
    }
}

impl Default for FlagParams {
    fn default() -> Self {
        FlagParams { threshold: 1.0, min_area: 16, connectivity: Connectivity::Eight }
    }
}

/// Connected components of `score ≥ threshold` with at least `min_area`
/// pixels, ordered by descending mean score (ties keep raster order).
pub fn flag_regions(score: &ScoreMap, params: &FlagParams) -> Vec<RegionSelection> {
    let (w, h) = (score.width(), score.height());
    let hot = |i: usize| score.get(i) >= params.threshold;
    let mut seen = RegionSelection::empty(w, h);
    let mut found: Vec<(f64, RegionSelection)> = Vec::new();
    for i in 0..score.scores().len() {
        if seen.contains(i) || !hot(i) {
            continue;
        }
        let seed = ((i % w as usize) as u32, (i / w as usize) as u32);
        let comp = grow_region(w, h, seed, params.connectivity, hot).expect("seed in bounds");
        seen.union_with(&comp);
        let area = comp.count();
        if area >= params.min_area.max(1) {
            let mean = comp.iter().map(|j| score.get(j)).sum::<f64>() / area as f64;
            found.push((mean, comp));
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0));
    found.into_iter().map(|(_, r)| r).collect()
}
