//! The append-only session log: newline-delimited JSON events, plus the
//! efficiency statistics computed from it.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::mask::{rle, CorrectionRecord, Face, MaskError, Provenance, SegmentationMask};
use crate::propagation::ProposedCorrection;

/// Run-length encoded labels of a whole mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSnapshot {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<(u8, u32)>,
}

impl MaskSnapshot {
    pub fn of(mask: &SegmentationMask) -> Self {
        MaskSnapshot { width: mask.width(), height: mask.height(), labels: rle::encode_values(mask.labels()) }
    }

    pub fn to_mask(&self) -> Result<SegmentationMask, MaskError> {
        SegmentationMask::new(self.width, self.height, rle::decode_values(&self.labels))
    }
}

/// Working mask of an image before the first edit touched it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseMask {
    pub site_id: String,
    pub face: Face,
    pub mask: MaskSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    SessionOpened {
        at: DateTime<Utc>,
        session_id: String,
    },
    CorrectionApplied {
        at: DateTime<Utc>,
        record: CorrectionRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base: Option<BaseMask>,
    },
    PropagationRun {
        at: DateTime<Utc>,
        source_record: String,
        auto_applied: Vec<CorrectionRecord>,
        review: Vec<ProposedCorrection>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        bases: Vec<BaseMask>,
    },
    ReviewDecision {
        at: DateTime<Utc>,
        source_record: String,
        candidate: usize,
        accept: bool,
        /// The confirmed record, present when accepted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record: Option<CorrectionRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base: Option<BaseMask>,
    },
    Undo {
        at: DateTime<Utc>,
        record_id: String,
    },
}

impl SessionEvent {
    pub fn at(&self) -> DateTime<Utc> {
        match self {
            SessionEvent::SessionOpened { at, .. }
            | SessionEvent::CorrectionApplied { at, .. }
            | SessionEvent::PropagationRun { at, .. }
            | SessionEvent::ReviewDecision { at, .. }
            | SessionEvent::Undo { at, .. } => *at,
        }
    }

    /// Records this event adds to the session, in application order.
    pub fn records(&self) -> Vec<&CorrectionRecord> {
        match self {
            SessionEvent::CorrectionApplied { record, .. } => vec![record],
            SessionEvent::PropagationRun { auto_applied, .. } => auto_applied.iter().collect(),
            SessionEvent::ReviewDecision { record: Some(r), .. } => vec![r],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub events: Vec<SessionEvent>,
}

impl SessionLog {
    /// Parses JSONL; a torn final line (from an interrupted append) is dropped.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut events = Vec::with_capacity(lines.len());
        for (n, line) in lines.iter().enumerate() {
            match serde_json::from_str(line) {
                Ok(e) => events.push(e),
                Err(_) if n + 1 == lines.len() && !text.ends_with('\n') => break,
                Err(e) => return Err(EvalError::Log(format!("line {}: {e}", n + 1))),
            }
        }
        Ok(SessionLog { events })
    }

    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
    }

    /// Timestamps never decrease and record ids are unique.
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = HashSet::new();
        for w in self.events.windows(2) {
            if w[1].at() < w[0].at() {
                return Err(EvalError::Log("timestamps decrease".into()));
            }
        }
        for e in &self.events {
            for r in e.records() {
                if !seen.insert(r.record_id.as_str()) {
                    return Err(EvalError::Log(format!("duplicate record id {}", r.record_id)));
                }
            }
        }
        Ok(())
    }

    /// Records still in effect, in application order.
    pub fn live_records(&self) -> Vec<&CorrectionRecord> {
        let undone: HashSet<&str> = self
            .events
            .iter()
            .filter_map(|e| match e {
                SessionEvent::Undo { record_id, .. } => Some(record_id.as_str()),
                _ => None,
            })
            .collect();
        self.events.iter().flat_map(|e| e.records()).filter(|r| !undone.contains(r.record_id.as_str())).collect()
    }
}

/// Propagated records (auto-applied or confirmed) over all live records.
pub fn propagation_gain(log: &SessionLog) -> Result<f64, EvalError> {
    let records = log.live_records();
    if records.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let propagated = records.iter().filter(|r| !r.provenance.is_human()).count();
    Ok(propagated as f64 / records.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffortStats {
    pub mean_seconds_per_image: f64,
    pub mean_interactions_per_image: f64,
    pub images: usize,
}

/// Human effort summed per image, then averaged over images.
pub fn effort_stats(log: &SessionLog) -> Result<EffortStats, EvalError> {
    let mut per_image: BTreeMap<(String, Face), (f64, f64)> = BTreeMap::new();
    for r in log.live_records() {
        if let Provenance::Human { interactions, elapsed_s } = r.provenance {
            let e = per_image.entry(r.image_key()).or_default();
            e.0 += elapsed_s;
            e.1 += interactions as f64;
        }
    }
    if per_image.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let n = per_image.len() as f64;
    Ok(EffortStats {
        mean_seconds_per_image: per_image.values().map(|v| v.0).sum::<f64>() / n,
        mean_interactions_per_image: per_image.values().map(|v| v.1).sum::<f64>() / n,
        images: per_image.len(),
    })
}

/// Counts of each event kind, for status displays.
pub fn event_counts(log: &SessionLog) -> HashMap<&'static str, usize> {
    let mut m = HashMap::new();
    for e in &log.events {
        let k = match e {
            SessionEvent::SessionOpened { .. } => "session_opened",
            SessionEvent::CorrectionApplied { .. } => "correction_applied",
            SessionEvent::PropagationRun { .. } => "propagation_run",
            SessionEvent::ReviewDecision { .. } => "review_decision",
            SessionEvent::Undo { .. } => "undo",
        };
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mask::{ClassId, InterventionType, RegionSelection};

    pub(crate) fn rec(id: &str, site: &str, provenance: Provenance) -> CorrectionRecord {
        CorrectionRecord {
            record_id: id.into(),
            site_id: site.into(),
            face: Face::North,
            region: RegionSelection::from_indices(2, 2, [0]),
            corrected_class: ClassId::SKY,
            intervention_type: InterventionType::BoundaryRefinement,
            provenance,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            prior_digest: "00".into(),
            prior_labels: vec![(0, 1)],
        }
    }

    fn human(s: f64, n: u32) -> Provenance {
        Provenance::Human { interactions: n, elapsed_s: s }
    }

    fn auto() -> Provenance {
        Provenance::Propagated { source_record: "h".into(), family_similarities: [Some(0.9), Some(0.9), None], confirmed: false }
    }

    fn applied(r: CorrectionRecord) -> SessionEvent {
        SessionEvent::CorrectionApplied { at: DateTime::<Utc>::UNIX_EPOCH, record: r, base: None }
    }

    fn log_with(human_n: usize, auto_n: usize) -> SessionLog {
        let mut events: Vec<SessionEvent> = (0..human_n).map(|i| applied(rec(&format!("h{i}"), "s", human(1.0, 1)))).collect();
        if auto_n > 0 {
            events.push(SessionEvent::PropagationRun {
                at: DateTime::<Utc>::UNIX_EPOCH,
                source_record: "h0".into(),
                auto_applied: (0..auto_n).map(|i| rec(&format!("a{i}"), "t", auto())).collect(),
                review: vec![],
                bases: vec![],
            });
        }
        SessionLog { events }
    }

    #[test]
    fn gain_examples() {
        assert!((propagation_gain(&log_with(19, 31)).unwrap() - 0.62).abs() < 1e-12);
        assert_eq!(propagation_gain(&log_with(3, 0)).unwrap(), 0.0);
        assert_eq!(propagation_gain(&log_with(0, 4)).unwrap(), 1.0);
        assert!(matches!(propagation_gain(&SessionLog::default()), Err(EvalError::EmptyLog)));
    }

    #[test]
    fn gain_is_monotone_in_auto_count() {
        let total = 20;
        let gains: Vec<f64> = (0..total).map(|a| propagation_gain(&log_with(total - a, a)).unwrap()).collect();
        assert!(gains.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn effort_examples() {
        let log = SessionLog {
            events: vec![applied(rec("a", "s", human(10.0, 2))), applied(rec("b", "s", human(14.0, 1))), applied(rec("c", "t2", auto()))],
        };
        let e = effort_stats(&log).unwrap();
        assert_eq!((e.mean_seconds_per_image, e.mean_interactions_per_image), (24.0, 3.0));
        let one = SessionLog { events: vec![applied(rec("a", "s", human(95.0, 7)))] };
        assert_eq!(effort_stats(&one).unwrap().mean_seconds_per_image, 95.0);
        assert!(matches!(effort_stats(&log_with(0, 2)), Err(EvalError::EmptyLog)));
    }

    #[test]
    fn undo_removes_record() {
        let mut log = log_with(2, 0);
        log.events.push(SessionEvent::Undo { at: DateTime::<Utc>::UNIX_EPOCH, record_id: "h1".into() });
        assert_eq!(log.live_records().len(), 1);
    }

    #[test]
    fn jsonl_round_trip_and_torn_tail() {
        let log = log_with(2, 3);
        let text = log.to_jsonl();
        assert_eq!(SessionLog::from_jsonl(&text).unwrap(), log);
        let torn = &text[..text.len() - 10];
        assert_eq!(SessionLog::from_jsonl(torn).unwrap().events.len(), 2);
        assert!(SessionLog::from_jsonl("{\"event\":\"nope\"}\n{}\n").is_err());
        log.validate().unwrap();
        let mut dup = log.clone();
        dup.events.push(applied(rec("h0", "s", human(1.0, 1))));
        assert!(dup.validate().is_err());
    }
}
