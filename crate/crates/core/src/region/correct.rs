use chrono::{DateTime, Utc};

use super::RegionError;
use crate::mask::{
    content_hash, encode_bin, rle, ClassId, CorrectionRecord, Face, InterventionType, Provenance,
    RegionSelection, SegmentationMask, NUM_CLASSES,
};

/// Identity and placement of a record being created.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionMeta {
    pub record_id: String,
    pub site_id: String,
    pub face: Face,
    pub created_at: DateTime<Utc>,
}

pub(crate) fn mask_digest(mask: &SegmentationMask) -> String {
    content_hash(&encode_bin(mask)).to_hex()
}

/// Apply `mask[sel] <- new_class` and return the edited mask with a record
/// that captures enough of the prior state to undo the edit.
pub fn apply_correction(
    mask: &SegmentationMask,
    sel: &RegionSelection,
    new_class: u8,
    intervention_type: InterventionType,
    provenance: Provenance,
    meta: CorrectionMeta,
) -> Result<(SegmentationMask, CorrectionRecord), RegionError> {
    if sel.width() != mask.width() || sel.height() != mask.height() {
        return Err(RegionError::DimensionMismatch(format!(
            "selection {}x{} vs mask {}x{}",
            sel.width(),
            sel.height(),
            mask.width(),
            mask.height()
        )));
    }
    if sel.is_empty() {
        return Err(RegionError::EmptySelection);
    }
    if new_class as usize >= NUM_CLASSES {
        return Err(RegionError::ClassOutOfRange(new_class));
    }
    let class = ClassId::new(new_class).expect("checked");

    let prior: Vec<u8> = sel.iter().map(|i| mask.labels()[i]).collect();
    let mut out = mask.clone();
    for i in sel.iter() {
        out.set(i, class);
    }
    let record = CorrectionRecord {
        record_id: meta.record_id,
        site_id: meta.site_id,
        face: meta.face,
        region: sel.clone(),
        corrected_class: class,
        intervention_type,
        provenance,
        created_at: meta.created_at,
        prior_digest: mask_digest(mask),
        prior_labels: rle::encode_values(&prior),
    };
    Ok((out, record))
}

/// Restore the labels a record overwrote. The result must hash to the
/// record's prior digest.
pub fn undo_correction(
    mask: &SegmentationMask,
    record: &CorrectionRecord,
) -> Result<SegmentationMask, RegionError> {
    if record.region.width() != mask.width() || record.region.height() != mask.height() {
        return Err(RegionError::DimensionMismatch("record region vs mask".into()));
    }
    let prior = record.prior_label_values();
    if prior.len() != record.region.count() {
        return Err(RegionError::DigestMismatch);
    }
    let mut out = mask.clone();
    for (i, label) in record.region.iter().zip(prior) {
        out.set(i, ClassId::new(label).ok_or(RegionError::ClassOutOfRange(label))?);
    }
    if mask_digest(&out) != record.prior_digest {
        return Err(RegionError::DigestMismatch);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> CorrectionMeta {
        CorrectionMeta {
            record_id: "r1".into(),
            site_id: "s".into(),
            face: Face::Flat,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    fn human() -> Provenance {
        Provenance::Human { interactions: 1, elapsed_s: 2.0 }
    }

    #[test]
    fn full_selection_to_sky() {
        let m = SegmentationMask::new(3, 2, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let (out, rec) = apply_correction(
            &m,
            &RegionSelection::full(3, 2),
            1,
            InterventionType::FeatureSuppression,
            human(),
            meta(),
        )
        .unwrap();
        assert_eq!(out, SegmentationMask::filled(3, 2, ClassId::SKY).unwrap());
        assert_eq!(undo_correction(&out, &rec).unwrap(), m);
    }

    #[test]
    fn error_paths() {
        let m = SegmentationMask::filled(2, 2, ClassId::SKY).unwrap();
        let t = InterventionType::BoundaryRefinement;
        assert!(matches!(
            apply_correction(&m, &RegionSelection::empty(2, 2), 1, t, human(), meta()),
            Err(RegionError::EmptySelection)
        ));
        assert!(matches!(
            apply_correction(&m, &RegionSelection::full(2, 2), 9, t, human(), meta()),
            Err(RegionError::ClassOutOfRange(9))
        ));
        assert!(matches!(
            apply_correction(&m, &RegionSelection::full(3, 2), 1, t, human(), meta()),
            Err(RegionError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn undo_against_wrong_state_is_detected() {
        let m = SegmentationMask::new(2, 1, vec![0, 0]).unwrap();
        let sel = RegionSelection::from_indices(2, 1, [0]);
        let (out, rec) =
            apply_correction(&m, &sel, 3, InterventionType::ContextReweighting, human(), meta()).unwrap();
        let mut tampered = out.clone();
        tampered.set(1, ClassId::SKY);
        assert!(matches!(undo_correction(&tampered, &rec), Err(RegionError::DigestMismatch)));
    }

    proptest! {
        #[test]
        fn changes_only_inside_region(
            labels in proptest::collection::vec(0u8..7, 36),
            bits in proptest::collection::vec(any::<bool>(), 36),
            class in 0u8..7,
        ) {
            let m = SegmentationMask::new(6, 6, labels).unwrap();
            let sel = RegionSelection::from_indices(6, 6, (0..36).filter(|&i| bits[i]));
            prop_assume!(!sel.is_empty());
            let (out, rec) = apply_correction(&m, &sel, class, InterventionType::FeatureSuppression, human(), meta()).unwrap();
            let changed = (0..36).filter(|&i| out.labels()[i] != m.labels()[i]).count();
            prop_assert!(changed <= sel.count());
            for i in 0..36 {
                if sel.contains(i) {
                    prop_assert_eq!(out.labels()[i], class);
                } else {
                    prop_assert_eq!(out.labels()[i], m.labels()[i]);
                }
            }
            prop_assert_eq!(undo_correction(&out, &rec).unwrap(), m);
        }
    }
}
