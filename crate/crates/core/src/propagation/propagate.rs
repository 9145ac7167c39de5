use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::descriptor::compute_descriptor;
use super::index::{query_excluding, CandidateRegion, Match, PropagationIndex};
use super::PropagationError;
use crate::learn::ToyBackboneParams;
use crate::mask::{ClassId, CorrectionRecord, Face, ImageRaster, Provenance, SegmentationMask};
use crate::region::{apply_correction, CorrectionMeta};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagateParams {
    pub tau: f64,
    pub k: usize,
    /// Review admission: combined ≥ `review_factor · tau`.
    pub review_factor: f64,
}

impl Default for PropagateParams {
    fn default() -> Self {
        PropagateParams { tau: 0.85, k: 5, review_factor: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposedCorrection {
    pub matched: Match,
    pub record: CorrectionRecord,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationOutcome {
    pub auto_applied: Vec<ProposedCorrection>,
    pub review_queue: Vec<ProposedCorrection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Auto,
    Review,
    Drop,
}

/// Auto-apply on two or more corroborating families; otherwise review when
/// some family is positive and the combined score clears the review bar.
pub fn disposition(m: &Match, params: &PropagateParams) -> Disposition {
    if m.corroboration >= 2 {
        Disposition::Auto
    } else if m.max_family_sim() > 0.0 && m.combined >= params.review_factor * params.tau {
        Disposition::Review
    } else {
        Disposition::Drop
    }
}

pub fn propagated_record_id(source: &str, candidate: usize) -> String {
    format!("{source}.c{candidate}")
}

/// Transfers a human correction to its nearest indexed regions. Matches with
/// at least two families at or above `tau` are auto-applied; weaker matches
/// whose combined score clears the review bar are queued. Candidates from the
/// source image itself are never matched.
///
/// `current_mask` supplies the working mask of a candidate's image; when it
/// has none, an all-background mask is assumed. Records for several matches
/// in one image chain their prior states in match order.
pub fn propagate(
    correction: &CorrectionRecord,
    source_image: &ImageRaster,
    index: &PropagationIndex,
    params: PropagateParams,
    model: Option<&ToyBackboneParams>,
    current_mask: &dyn Fn(&CandidateRegion) -> Option<SegmentationMask>,
    now: DateTime<Utc>,
) -> Result<PropagationOutcome, PropagationError> {
    if !correction.provenance.is_human() {
        return Err(PropagationError::NotHumanProvenance(correction.record_id.clone()));
    }
    let desc = compute_descriptor(source_image, &correction.region, model)?;
    let source_key = (correction.site_id.as_str(), correction.face);
    let matches = query_excluding(index, &desc, params.k, params.tau, |c| (c.site_id.as_str(), c.face) == source_key);

    let mut working: HashMap<(String, Face), SegmentationMask> = HashMap::new();
    let mut make = |m: &Match, confirmed_auto: bool| -> Result<ProposedCorrection, PropagationError> {
        let cand = &index.candidates[m.candidate];
        let key = (cand.site_id.clone(), cand.face);
        let mask = match working.get(&key) {
            Some(mask) => mask.clone(),
            None => current_mask(cand).unwrap_or(SegmentationMask::filled(
                cand.selection.width(),
                cand.selection.height(),
                ClassId::BACKGROUND,
            )?),
        };
        let provenance = Provenance::Propagated {
            source_record: correction.record_id.clone(),
            family_similarities: m.sims,
            confirmed: false,
        };
        let meta = CorrectionMeta {
            record_id: propagated_record_id(&correction.record_id, m.candidate),
            site_id: cand.site_id.clone(),
            face: cand.face,
            created_at: now,
        };
        let (next, record) = apply_correction(
            &mask,
            &cand.selection,
            correction.corrected_class.get(),
            correction.intervention_type,
            provenance,
            meta,
        )?;
        if confirmed_auto {
            working.insert(key, next);
        }
        Ok(ProposedCorrection { matched: m.clone(), record })
    };

    let mut out = PropagationOutcome::default();
    for m in matches.iter().filter(|m| disposition(m, &params) == Disposition::Auto) {
        out.auto_applied.push(make(m, true)?);
    }
    for m in matches.iter().filter(|m| disposition(m, &params) == Disposition::Review) {
        out.review_queue.push(make(m, false)?);
    }
    Ok(out)
}
