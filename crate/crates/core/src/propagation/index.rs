use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::descriptor::{compute_descriptor_with_hidden, cosine, RegionDescriptor};
use super::PropagationError;
use crate::learn::{featurize, hidden_activations, ToyBackboneParams};
use crate::mask::{DatasetManifest, Digest, Face, ImageRaster, RegionSelection, Split};
use crate::region::{wand_select, Connectivity, WandParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    /// Seeds per axis.
    pub grid: u32,
    pub tolerance: f64,
    pub connectivity: Connectivity,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams { grid: 8, tolerance: 40.0, connectivity: Connectivity::Four }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRegion {
    pub site_id: String,
    pub face: Face,
    pub image_hash: Digest,
    pub selection: RegionSelection,
    pub descriptor: RegionDescriptor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationIndex {
    pub manifest_digest: Digest,
    pub params: IndexParams,
    pub train_hashes: BTreeSet<Digest>,
    pub candidates: Vec<CandidateRegion>,
}

/// An image offered for indexing, identified by its content digest.
#[derive(Clone, Debug)]
pub struct IndexImage<'a> {
    pub site_id: String,
    pub face: Face,
    pub hash: Digest,
    pub image: &'a ImageRaster,
}

/// Candidate regions of one image from a uniform grid of wand seeds. A seed
/// already covered by an earlier region is skipped.
fn grid_regions(image: &ImageRaster, params: &IndexParams) -> Result<Vec<RegionSelection>, PropagationError> {
    let (w, h) = (image.width(), image.height());
    let g = params.grid.max(1);
    let wand = WandParams::new(params.tolerance, params.connectivity)?;
    let mut covered = RegionSelection::empty(w, h);
    let mut out = Vec::new();
    for gy in 0..g {
        for gx in 0..g {
            let x = ((2 * gx + 1) as u64 * w as u64 / (2 * g) as u64) as u32;
            let y = ((2 * gy + 1) as u64 * h as u64 / (2 * g) as u64) as u32;
            if covered.contains_xy(x, y) {
                continue;
            }
            let region = wand_select(image, (x, y), wand)?;
            covered.union_with(&region);
            out.push(region);
        }
    }
    Ok(out)
}

/// Builds the retrieval index from train-split images only. Regions too thin
/// for an LBP histogram are not indexed.
pub fn build_index(
    manifest: &DatasetManifest,
    images: &[IndexImage<'_>],
    params: IndexParams,
    model: Option<&ToyBackboneParams>,
) -> Result<PropagationIndex, PropagationError> {
    let train_hashes: BTreeSet<Digest> = manifest.hashes_in(Split::Train).collect();
    if let Some(bad) = images.iter().find(|im| !train_hashes.contains(&im.hash)) {
        return Err(PropagationError::LeakageViolation { hash: bad.hash });
    }
    let per_image: Vec<Vec<CandidateRegion>> = images
        .par_iter()
        .map(|im| {
            let hidden = model.map(|m| hidden_activations(m, &featurize(im.image)));
            let mut cands = Vec::new();
            for selection in grid_regions(im.image, &params)? {
                match compute_descriptor_with_hidden(im.image, &selection, hidden.as_deref()) {
                    Ok(descriptor) => cands.push(CandidateRegion {
                        site_id: im.site_id.clone(),
                        face: im.face,
                        image_hash: im.hash,
                        selection,
                        descriptor,
                    }),
                    Err(PropagationError::RegionTooThin) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(cands)
        })
        .collect::<Result<_, PropagationError>>()?;
    Ok(PropagationIndex {
        manifest_digest: manifest.digest(),
        params,
        train_hashes,
        candidates: per_image.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Position of the candidate in the index.
    pub candidate: usize,
    /// Cosine similarity per family: HSV, LBP, embedding.
    pub sims: [Option<f64>; 3],
    pub combined: f64,
    pub corroboration: u8,
}

impl Match {
    pub fn max_family_sim(&self) -> f64 {
        self.sims.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn score(desc: &RegionDescriptor, cand: &RegionDescriptor, candidate: usize, tau: f64) -> Match {
    let emb = match (&desc.embedding, &cand.embedding) {
        (Some(a), Some(b)) => Some(cosine(a, b)),
        _ => None,
    };
    let sims = [Some(cosine(&desc.hsv_hist, &cand.hsv_hist)), Some(cosine(&desc.lbp_hist, &cand.lbp_hist)), emb];
    let avail: Vec<f64> = sims.iter().flatten().copied().collect();
    let combined = avail.iter().sum::<f64>() / avail.len() as f64;
    let corroboration = avail.iter().filter(|&&s| s >= tau).count() as u8;
    Match { candidate, sims, combined, corroboration }
}

/// Top-`k` candidates by combined similarity, ties in insertion order.
pub fn query(index: &PropagationIndex, desc: &RegionDescriptor, k: usize) -> Vec<Match> {
    query_excluding(index, desc, k, 0.85, |_| false)
}

/// As [`query`], skipping candidates for which `exclude` holds. `tau` only
/// affects the reported corroboration count.
pub fn query_excluding(
    index: &PropagationIndex,
    desc: &RegionDescriptor,
    k: usize,
    tau: f64,
    exclude: impl Fn(&CandidateRegion) -> bool + Sync,
) -> Vec<Match> {
    let mut matches: Vec<Match> = index
        .candidates
        .par_iter()
        .enumerate()
        .filter(|(_, c)| !exclude(c))
        .map(|(i, c)| score(desc, &c.descriptor, i, tau))
        .collect();
    matches.sort_by(|a, b| b.combined.total_cmp(&a.combined).then(a.candidate.cmp(&b.candidate)));
    matches.truncate(k);
    matches
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageViolation {
    /// Offending candidate, or `None` for an entry of the train-hash set.
    pub candidate: Option<usize>,
    pub hash: Digest,
    /// Split the hash belongs to in the manifest, `None` if unknown.
    pub split: Option<Split>,
}

/// Every candidate hash and every recorded train hash must be a train hash
/// of `manifest`.
pub fn verify_no_leakage(index: &PropagationIndex, manifest: &DatasetManifest) -> Result<(), Vec<LeakageViolation>> {
    let train: BTreeSet<Digest> = manifest.hashes_in(Split::Train).collect();
    let mut v = Vec::new();
    for (i, c) in index.candidates.iter().enumerate() {
        if !train.contains(&c.image_hash) {
            v.push(LeakageViolation { candidate: Some(i), hash: c.image_hash, split: manifest.split_of_hash(&c.image_hash) });
        }
    }
    for h in &index.train_hashes {
        if !train.contains(h) {
            v.push(LeakageViolation { candidate: None, hash: *h, split: manifest.split_of_hash(h) });
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
