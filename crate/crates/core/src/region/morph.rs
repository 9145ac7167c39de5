//! Binary morphology with a square (Chebyshev) structuring element.
//!
//! Windows are clipped to the image: pixels outside the frame neither
//! contribute to a dilation nor erode a region.

use serde::{Deserialize, Serialize};

use super::RegionError;
use crate::mask::{ClassId, LogitMap, RegionSelection, SegmentationMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Open,
    Close,
    Dilate,
    Erode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphParams {
    pub radius: u32,
    pub op: MorphOp,
}

impl MorphParams {
    pub fn new(radius: u32, op: MorphOp) -> Result<Self, RegionError> {
        if radius == 0 {
            return Err(RegionError::InvalidParams("structuring element radius must be >= 1".into()));
        }
        Ok(MorphParams { radius, op })
    }

    pub fn apply(&self, sel: &RegionSelection) -> RegionSelection {
        let r = self.radius;
        match self.op {
            MorphOp::Dilate => dilate(sel, r),
            MorphOp::Erode => erode(sel, r),
            MorphOp::Open => dilate(&erode(sel, r), r),
            MorphOp::Close => erode(&dilate(sel, r), r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    Expand,
    Shrink,
}

// 1-D pass: `any` selects dilation (OR over the window), otherwise erosion (AND).
fn pass(src: &[bool], w: usize, h: usize, r: usize, horizontal: bool, any: bool) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    let (outer, inner) = if horizontal { (h, w) } else { (w, h) };
    let idx = |o: usize, i: usize| if horizontal { o * w + i } else { i * w + o };
    for o in 0..outer {
        // Prefix counts of set pixels along the line.
        let mut prefix = vec![0usize; inner + 1];
        for i in 0..inner {
            prefix[i + 1] = prefix[i] + src[idx(o, i)] as usize;
        }
        for i in 0..inner {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(inner - 1);
            let set = prefix[hi + 1] - prefix[lo];
            out[idx(o, i)] = if any { set > 0 } else { set == hi - lo + 1 };
        }
    }
    out
}

fn separable(sel: &RegionSelection, r: u32, any: bool) -> RegionSelection {
    let (w, h) = (sel.width() as usize, sel.height() as usize);
    let mut bits = vec![false; w * h];
    for i in sel.iter() {
        bits[i] = true;
    }
    let rows = pass(&bits, w, h, r as usize, true, any);
    let both = pass(&rows, w, h, r as usize, false, any);
    RegionSelection::from_indices(sel.width(), sel.height(), (0..w * h).filter(|&i| both[i]))
}

pub fn dilate(sel: &RegionSelection, radius: u32) -> RegionSelection {
    separable(sel, radius, true)
}

pub fn erode(sel: &RegionSelection, radius: u32) -> RegionSelection {
    separable(sel, radius, false)
}

/// Expand (dilate) or shrink (erode) a selection.
pub fn refine_selection(
    sel: &RegionSelection,
    mode: RefineMode,
    radius: u32,
) -> Result<RegionSelection, RegionError> {
    let op = match mode {
        RefineMode::Expand => MorphOp::Dilate,
        RefineMode::Shrink => MorphOp::Erode,
    };
    Ok(MorphParams::new(radius, op)?.apply(sel))
}

/// Open-then-close the indicator of `target`. Pixels dropped from the class
/// take their runner-up logit class when logits are given, else background;
/// pixels gained take `target`.
pub fn morph_cleanup(
    mask: &SegmentationMask,
    target: ClassId,
    open_r: u32,
    close_r: u32,
    logits: Option<&LogitMap>,
) -> Result<SegmentationMask, RegionError> {
    let (w, h) = (mask.width(), mask.height());
    if let Some(l) = logits {
        if l.width() != w || l.height() != h {
            return Err(RegionError::DimensionMismatch("logits vs mask".into()));
        }
    }
    let indicator = RegionSelection::from_indices(
        w,
        h,
        (0..mask.len()).filter(|&i| mask.class_at(i) == target),
    );
    let opened = MorphParams::new(open_r, MorphOp::Open)?.apply(&indicator);
    let cleaned = MorphParams::new(close_r, MorphOp::Close)?.apply(&opened);

    let mut out = mask.clone();
    for i in 0..mask.len() {
        match (indicator.contains(i), cleaned.contains(i)) {
            (true, false) => {
                let replacement = logits
                    .map(|l| runner_up(l.pixel(i), target))
                    .unwrap_or(ClassId::BACKGROUND);
                out.set(i, replacement);
            }
            (false, true) => out.set(i, target),
            _ => {}
        }
    }
    Ok(out)
}

fn runner_up(scores: &[f64], excluded: ClassId) -> ClassId {
    let mut best: Option<usize> = None;
    for (c, &s) in scores.iter().enumerate() {
        if c == excluded.index() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(c);
        }
    }
    ClassId::new(best.unwrap_or(0) as u8).expect("class index")
}
