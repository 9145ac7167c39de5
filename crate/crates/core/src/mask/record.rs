use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::rle;
use super::{ClassId, RegionSelection, SegmentationMask};

/// Directional face of a cubemap capture, or `Flat` for a plain image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Up,
    Down,
    North,
    South,
    East,
    West,
    Flat,
}

impl Face {
    pub const CUBEMAP: [Face; 6] =
        [Face::Up, Face::Down, Face::North, Face::South, Face::East, Face::West];

    pub fn as_str(self) -> &'static str {
        match self {
            Face::Up => "up",
            Face::Down => "down",
            Face::North => "north",
            Face::South => "south",
            Face::East => "east",
            Face::West => "west",
            Face::Flat => "flat",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Face> {
        [Face::Up, Face::Down, Face::North, Face::South, Face::East, Face::West, Face::Flat]
            .get(c as usize)
            .copied()
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Face {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        (0..7)
            .filter_map(Face::from_code)
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown face {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionType {
    /// Suppress reliance on a superficial cue such as color.
    FeatureSuppression,
    /// Emphasize object edges and shape.
    BoundaryRefinement,
    /// Override a spatial or contextual prior.
    ContextReweighting,
}

impl FromStr for InterventionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "feature_suppression" => Ok(InterventionType::FeatureSuppression),
            "boundary_refinement" => Ok(InterventionType::BoundaryRefinement),
            "context_reweighting" => Ok(InterventionType::ContextReweighting),
            _ => Err(format!("unknown intervention type {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Human {
        interactions: u32,
        elapsed_s: f64,
    },
    Propagated {
        source_record: String,
        /// Cosine similarity per descriptor family: HSV, LBP, embedding.
        family_similarities: [Option<f64>; 3],
        confirmed: bool,
    },
}

impl Provenance {
    pub fn is_human(&self) -> bool {
        matches!(self, Provenance::Human { .. })
    }
}

/// One intervention `mask[R] <- y*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub record_id: String,
    pub site_id: String,
    pub face: Face,
    pub region: RegionSelection,
    pub corrected_class: ClassId,
    pub intervention_type: InterventionType,
    pub provenance: Provenance,
    pub created_at: DateTime<Utc>,
    /// Hex SHA-256 of the SEGB encoding of the mask before the edit.
    pub prior_digest: String,
    /// Labels under the region before the edit, in region order, as value runs.
    pub prior_labels: Vec<(u8, u32)>,
}

impl CorrectionRecord {
    pub fn image_key(&self) -> (String, Face) {
        (self.site_id.clone(), self.face)
    }

    pub fn prior_label_values(&self) -> Vec<u8> {
        rle::decode_values(&self.prior_labels)
    }
}

/// `(image, predicted, corrected)` with the region where they may differ.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualTriple {
    pub image_ref: String,
    pub predicted: SegmentationMask,
    pub corrected: SegmentationMask,
    pub region: RegionSelection,
}

impl CounterfactualTriple {
    pub fn new(
        image_ref: impl Into<String>,
        predicted: SegmentationMask,
        corrected: SegmentationMask,
        region: RegionSelection,
    ) -> Result<Self, super::MaskError> {
        let (w, h) = (predicted.width(), predicted.height());
        if !corrected.same_dims(w, h) || region.width() != w || region.height() != h {
            return Err(super::MaskError::DimensionMismatch("triple components".into()));
        }
        let outside = (0..predicted.len())
            .find(|&i| !region.contains(i) && predicted.labels()[i] != corrected.labels()[i]);
        if let Some(i) = outside {
            return Err(super::MaskError::DimensionMismatch(format!(
                "masks differ outside the region at pixel {i}"
            )));
        }
        Ok(CounterfactualTriple { image_ref: image_ref.into(), predicted, corrected, region })
    }

    /// The corrected label for the first region pixel; corrections assign one class.
    pub fn corrected_class(&self) -> Option<ClassId> {
        self.region.iter().next().map(|i| self.corrected.class_at(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_parse() {
        for c in 0..7 {
            let f = Face::from_code(c).unwrap();
            assert_eq!(f.as_str().parse::<Face>().unwrap(), f);
        }
        assert!("sideways".parse::<Face>().is_err());
    }

    #[test]
    fn triple_rejects_changes_outside_region() {
        let p = SegmentationMask::new(2, 1, vec![0, 0]).unwrap();
        let c = SegmentationMask::new(2, 1, vec![1, 1]).unwrap();
        let r = RegionSelection::from_indices(2, 1, [0]);
        assert!(CounterfactualTriple::new("x", p.clone(), c, r.clone()).is_err());
        let c = SegmentationMask::new(2, 1, vec![1, 0]).unwrap();
        let t = CounterfactualTriple::new("x", p, c, r).unwrap();
        assert_eq!(t.corrected_class(), Some(ClassId::SKY));
    }

    #[test]
    fn provenance_json_shape() {
        let p = Provenance::Propagated {
            source_record: "r1".into(),
            family_similarities: [Some(0.9), Some(0.8), None],
            confirmed: false,
        };
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["kind"], "propagated");
        assert!(v["family_similarities"][2].is_null());
    }
}
