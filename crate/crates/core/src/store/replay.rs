//! Rebuilding mask versions from the session log. The same code path
//! validates and applies events during a live session.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::StoreError;
use crate::eval::{BaseMask, SessionEvent, SessionLog};
use crate::mask::{CorrectionRecord, Face, SegmentationMask};
use crate::propagation::ProposedCorrection;
use crate::region::{mask_digest, undo_correction};

pub type ImageKey = (String, Face);

#[derive(Clone, Debug, PartialEq)]
pub struct ReviewEntry {
    pub item: ProposedCorrection,
    pub decided: Option<bool>,
}

/// Everything derivable from the log: mask versions per image, live
/// records, and the review queue.
#[derive(Clone, Debug, Default)]
pub struct ReplayState {
    /// Version 0 is the base mask; each applied record or undo adds one.
    pub versions: BTreeMap<ImageKey, Vec<SegmentationMask>>,
    pub records: HashMap<String, CorrectionRecord>,
    /// Live record ids in application order.
    pub order: Vec<String>,
    pub undone: HashSet<String>,
    pub review: BTreeMap<String, ReviewEntry>,
}

enum Step<'a> {
    Apply(&'a CorrectionRecord),
    Undo(&'a str),
}

impl ReplayState {
    pub fn current(&self, key: &ImageKey) -> Option<&SegmentationMask> {
        self.versions.get(key).and_then(|v| v.last())
    }

    pub fn version_count(&self, key: &ImageKey) -> usize {
        self.versions.get(key).map_or(0, Vec::len)
    }

    pub fn live_records(&self) -> impl Iterator<Item = &CorrectionRecord> {
        self.order.iter().filter_map(|id| self.records.get(id))
    }

    /// Whether `(source, candidate)` already produced a record or a review item.
    pub fn has_propagated(&self, item_id: &str) -> bool {
        self.records.contains_key(item_id) || self.review.contains_key(item_id) || self.undone.contains(item_id)
    }

    /// The most recent live record touching `key`.
    pub fn last_record_on(&self, key: &ImageKey) -> Option<&CorrectionRecord> {
        self.order.iter().rev().filter_map(|id| self.records.get(id)).find(|r| &r.image_key() == key)
    }

    /// Validates `event` against the state and applies it atomically: on
    /// error the state is unchanged.
    pub fn apply_event(&mut self, event: &SessionEvent) -> Result<(), StoreError> {
        let mut bases: Vec<&BaseMask> = Vec::new();
        let mut steps: Vec<Step> = Vec::new();
        match event {
            SessionEvent::SessionOpened { .. } => {}
            SessionEvent::CorrectionApplied { record, base, .. } => {
                bases.extend(base);
                steps.push(Step::Apply(record));
            }
            SessionEvent::PropagationRun { auto_applied, review, bases: b, .. } => {
                bases.extend(b);
                steps.extend(auto_applied.iter().map(Step::Apply));
                for item in review {
                    if self.has_propagated(&item.record.record_id) {
                        return Err(StoreError::Conflict(format!("duplicate review item {}", item.record.record_id)));
                    }
                }
            }
            SessionEvent::ReviewDecision { source_record: _, candidate: _, accept, record, base, .. } => {
                let id = match record {
                    Some(r) => r.record_id.clone(),
                    None => return self.reject_by_event(event),
                };
                let entry = self.review.get(&id).ok_or_else(|| StoreError::NotFound(format!("review item {id}")))?;
                if entry.decided.is_some() {
                    return Err(StoreError::AlreadyDecided(id));
                }
                if !accept {
                    return Err(StoreError::Conflict("rejection must not carry a record".into()));
                }
                bases.extend(base);
                steps.push(Step::Apply(record.as_ref().expect("checked")));
            }
            SessionEvent::Undo { record_id, .. } => steps.push(Step::Undo(record_id)),
        }

        // Stage new versions, then commit.
        let mut staged: BTreeMap<ImageKey, Vec<SegmentationMask>> = BTreeMap::new();
        let mut staged_ids: HashSet<&str> = HashSet::new();
        for b in &bases {
            let key = (b.site_id.clone(), b.face);
            if self.versions.contains_key(&key) || staged.contains_key(&key) {
                return Err(StoreError::Replay(format!("base mask for {}/{} given twice", b.site_id, b.face)));
            }
            staged.insert(key, vec![b.mask.to_mask()?]);
        }
        for step in &steps {
            match step {
                Step::Apply(r) => {
                    if self.records.contains_key(&r.record_id) || self.undone.contains(&r.record_id) || !staged_ids.insert(&r.record_id) {
                        return Err(StoreError::Conflict(format!("record id {} already used", r.record_id)));
                    }
                    let key = r.image_key();
                    let cur = staged
                        .get(&key)
                        .and_then(|v| v.last())
                        .or_else(|| self.current(&key))
                        .ok_or_else(|| StoreError::Replay(format!("no base mask for {}/{}", key.0, key.1)))?;
                    if mask_digest(cur) != r.prior_digest {
                        return Err(StoreError::Replay(format!("record {} does not match the current mask", r.record_id)));
                    }
                    if r.region.width() != cur.width() || r.region.height() != cur.height() {
                        return Err(StoreError::Replay(format!("record {} has the wrong dimensions", r.record_id)));
                    }
                    let mut next = cur.clone();
                    for i in r.region.iter() {
                        next.set(i, r.corrected_class);
                    }
                    staged.entry(key).or_default().push(next);
                }
                Step::Undo(id) => {
                    let r = self.records.get(*id).ok_or_else(|| StoreError::NotFound(format!("record {id}")))?;
                    let key = r.image_key();
                    if self.last_record_on(&key).map(|l| l.record_id.as_str()) != Some(*id) {
                        return Err(StoreError::Conflict(format!("record {id} is not the latest edit on its image")));
                    }
                    let cur = self.current(&key).expect("record implies versions");
                    staged.entry(key).or_default().push(undo_correction(cur, r)?);
                }
            }
        }

        for (key, masks) in staged {
            self.versions.entry(key).or_default().extend(masks);
        }
        for step in steps {
            match step {
                Step::Apply(r) => {
                    if let Some(e) = self.review.get_mut(&r.record_id) {
                        e.decided = Some(true);
                    }
                    self.order.push(r.record_id.clone());
                    self.records.insert(r.record_id.clone(), r.clone());
                }
                Step::Undo(id) => {
                    self.records.remove(id);
                    self.order.retain(|x| x != id);
                    self.undone.insert(id.to_string());
                }
            }
        }
        if let SessionEvent::PropagationRun { review, .. } = event {
            for item in review {
                self.review.insert(item.record.record_id.clone(), ReviewEntry { item: item.clone(), decided: None });
            }
        }
        Ok(())
    }

    fn reject_by_event(&mut self, event: &SessionEvent) -> Result<(), StoreError> {
        let SessionEvent::ReviewDecision { source_record, candidate, accept, .. } = event else { unreachable!() };
        if *accept {
            return Err(StoreError::Conflict("acceptance must carry the applied record".into()));
        }
        let id = crate::propagation::propagated_record_id(source_record, *candidate);
        let entry = self.review.get_mut(&id).ok_or_else(|| StoreError::NotFound(format!("review item {id}")))?;
        if entry.decided.is_some() {
            return Err(StoreError::AlreadyDecided(id));
        }
        entry.decided = Some(false);
        Ok(())
    }
}

pub fn replay(log: &SessionLog) -> Result<ReplayState, StoreError> {
    let mut s = ReplayState::default();
    for (n, e) in log.events.iter().enumerate() {
        s.apply_event(e).map_err(|err| StoreError::Replay(format!("event {}: {err}", n + 1)))?;
    }
    Ok(s)
}
