//! The debias pipeline on a [`BiasDataset`]: pretrain on the biased train
//! split, simulate human corrections on pool buildings, propagate them, and
//! fine-tune with the composite objective.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::bias::BiasDataset;
use super::log::{SessionEvent, SessionLog};
use super::robust::predict_mask;
use crate::learn::{
    featurize, finetune, Correspondence, CorrespondenceSet, CounterfactualItem, FeatureField, LabeledPixels,
    LearnError, SupervisionBatch, ToyBackboneParams, TrainConfig, TrainingLog,
};
use crate::mask::{
    content_hash, encode_rgb_png, ClassId, CorrectionRecord, DatasetManifest, Digest, Face, InterventionType,
    Provenance, RegionSelection, SegmentationMask, SiteEntry, Split,
};
use crate::propagation::{build_index, propagate, IndexImage, IndexParams, PropagateParams, PropagationError, PropagationIndex};
use crate::region::{apply_correction, CorrectionMeta};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub index: IndexParams,
    pub propagate: PropagateParams,
    /// Seconds charged per simulated human correction.
    pub seconds_per_correction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            pretrain: TrainConfig { lr: 1e-2, epochs: 30, batch_size: 4, weight_decay: 1e-5, ..TrainConfig::default() },
            finetune: TrainConfig { lr: 3e-3, epochs: 30, batch_size: 4, ..TrainConfig::default() },
            index: IndexParams::default(),
            propagate: PropagateParams::default(),
            seconds_per_correction: 24.0,
        }
    }
}

/// Train and pool scenes in feature form, train first.
pub struct BenchFeatures {
    pub fields: Vec<FeatureField>,
    pub n_train: usize,
}

impl BenchFeatures {
    pub fn new(ds: &BiasDataset) -> Self {
        let fields = ds.train.iter().chain(&ds.pool).map(|im| featurize(&im.image)).collect();
        BenchFeatures { fields, n_train: ds.train.len() }
    }

    pub fn pool_index(&self, pool: usize) -> usize {
        self.n_train + pool
    }
}

fn image_hash(im: &super::bias::BiasImage) -> Digest {
    content_hash(&encode_rgb_png(&im.image))
}

/// One flat-face site per scene: train and pool scenes in the train split,
/// OOD scenes in the test split.
pub fn bench_manifest(ds: &BiasDataset) -> DatasetManifest {
    let entry = |im: &super::bias::BiasImage, split| SiteEntry {
        site_id: im.id.clone(),
        split,
        faces: BTreeMap::from([(Face::Flat, format!("images/{}/flat.png", im.id))]),
        hashes: BTreeMap::from([(Face::Flat, image_hash(im))]),
    };
    DatasetManifest {
        sites: ds
            .train
            .iter()
            .chain(&ds.pool)
            .map(|im| entry(im, Split::Train))
            .chain(ds.ood.iter().map(|im| entry(im, Split::Test)))
            .collect(),
    }
}

pub fn bench_index(ds: &BiasDataset, params: IndexParams, model: Option<&ToyBackboneParams>) -> Result<PropagationIndex, PropagationError> {
    let manifest = bench_manifest(ds);
    let offers: Vec<IndexImage> = ds
        .train
        .iter()
        .chain(&ds.pool)
        .map(|im| IndexImage { site_id: im.id.clone(), face: Face::Flat, hash: image_hash(im), image: &im.image })
        .collect();
    build_index(&manifest, &offers, params, model)
}

/// L_seg-only training on the labeled train scenes.
pub fn pretrain_baseline(
    ds: &BiasDataset,
    feats: &BenchFeatures,
    config: &TrainConfig,
) -> Result<(ToyBackboneParams, TrainingLog), LearnError> {
    let theta0 = ToyBackboneParams::init(config.seed);
    finetune(&theta0, &feats.fields, &SupervisionBatch { seg: seg_items(ds), ..Default::default() }, config)
}

fn seg_items(ds: &BiasDataset) -> Vec<LabeledPixels> {
    ds.train
        .iter()
        .enumerate()
        .map(|(i, im)| LabeledPixels { image: i, labels: im.gt.clone(), valid: RegionSelection::full(im.gt.width(), im.gt.height()) })
        .collect()
}

/// Records produced by a simulated critic session over pool scenes.
#[derive(Clone, Debug, Default)]
pub struct SessionOutcome {
    pub human: Vec<(usize, CorrectionRecord)>,
    pub auto: Vec<(usize, CorrectionRecord)>,
    pub review: usize,
    pub log: SessionLog,
    /// Pool index → working mask after all edits.
    pub masks: HashMap<usize, SegmentationMask>,
}

/// The critic relabels the blue building of each pool scene in `targets`
/// as buildings, then propagates the correction.
pub fn simulate_session(
    ds: &BiasDataset,
    model: &ToyBackboneParams,
    index: &PropagationIndex,
    targets: &[usize],
    config: &BenchConfig,
    embed: Option<&ToyBackboneParams>,
) -> Result<SessionOutcome, PropagationError> {
    let pool_of: HashMap<&str, usize> = ds.pool.iter().enumerate().map(|(i, im)| (im.id.as_str(), i)).collect();
    let mut out = SessionOutcome::default();
    let t0 = DateTime::<Utc>::UNIX_EPOCH;
    let mut clock = 0i64;
    let mut tick = || {
        clock += 1;
        t0 + Duration::seconds(clock)
    };
    out.log.events.push(SessionEvent::SessionOpened { at: tick(), session_id: format!("bench-{}", ds.spec.seed) });
    for (n, &p) in targets.iter().enumerate() {
        let im = &ds.pool[p];
        let region = im.building.clone().expect("pool scenes hold a blue building");
        let mask = out.masks.entry(p).or_insert_with(|| predict_mask(model, im)).clone();
        let meta = CorrectionMeta { record_id: format!("h{n:03}"), site_id: im.id.clone(), face: Face::Flat, created_at: tick() };
        let provenance = Provenance::Human { interactions: 1, elapsed_s: config.seconds_per_correction };
        let (next, record) = apply_correction(&mask, &region, ClassId::BUILDINGS.get(), InterventionType::FeatureSuppression, provenance, meta)?;
        out.masks.insert(p, next);
        out.log.events.push(SessionEvent::CorrectionApplied { at: record.created_at, record: record.clone(), base: None });

        let masks = &out.masks;
        let lookup = |c: &crate::propagation::CandidateRegion| {
            let q = *pool_of.get(c.site_id.as_str())?;
            Some(masks.get(&q).cloned().unwrap_or_else(|| predict_mask(model, &ds.pool[q])))
        };
        let at = tick();
        let outcome = propagate(&record, &im.image, index, config.propagate, embed, &lookup, at)?;
        let mut auto = Vec::new();
        for a in &outcome.auto_applied {
            if let Some(&q) = pool_of.get(a.record.site_id.as_str()) {
                let base = out.masks.get(&q).cloned().unwrap_or_else(|| predict_mask(model, &ds.pool[q]));
                let mut m = base;
                for i in a.record.region.iter() {
                    m.set(i, a.record.corrected_class);
                }
                out.masks.insert(q, m);
                out.auto.push((q, a.record.clone()));
            } else {
                out.auto.push((usize::MAX, a.record.clone()));
            }
            auto.push(a.record.clone());
        }
        out.review += outcome.review_queue.len();
        out.log.events.push(SessionEvent::PropagationRun {
            at,
            source_record: record.record_id.clone(),
            auto_applied: auto,
            review: outcome.review_queue,
            bases: vec![],
        });
        out.human.push((p, record));
    }
    Ok(out)
}

/// Counterfactual items from human records and correspondences from
/// auto-applied records on pool scenes, added to the train labels.
pub fn session_supervision(ds: &BiasDataset, feats: &BenchFeatures, session: &SessionOutcome) -> SupervisionBatch {
    let cf = session
        .human
        .iter()
        .map(|(p, r)| CounterfactualItem { image: feats.pool_index(*p), region: r.region.clone(), class: r.corrected_class })
        .collect();
    let entries = session
        .auto
        .iter()
        .filter(|(p, _)| *p != usize::MAX)
        .map(|(p, r)| Correspondence { image: feats.pool_index(*p), pixels: r.region.clone(), class: r.corrected_class })
        .collect();
    SupervisionBatch { seg: seg_items(ds), cf, prop: CorrespondenceSet { entries } }
}

/// Fine-tunes `baseline` on the session's supervision with the given weights.
pub fn finetune_variant(
    baseline: &ToyBackboneParams,
    feats: &BenchFeatures,
    supervision: &SupervisionBatch,
    config: &TrainConfig,
    lambda_cf: f64,
    lambda_prop: f64,
) -> Result<(ToyBackboneParams, TrainingLog), LearnError> {
    let cfg = TrainConfig { lambda_cf, lambda_prop, ..config.clone() };
    finetune(baseline, &feats.fields, supervision, &cfg)
}
