use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::logits::{decode_logits, encode_logits};
use super::{write_atomic, ImageKey, ReviewEntry, Store, StoreConfig, StoreError};
use crate::eval::bench::{bench_manifest, pretrain_baseline, BenchFeatures};
use crate::eval::{
    boundary_iou, confusion_matrix, effort_stats, gen_biased_dataset, miou, propagation_gain,
    robustness_from_masks, BiasImage, BiasSpec, CloneRegistry, ConfusionMatrix,
    EffortStats, EvalError, IouReport, SessionEvent,
};
use crate::failure::{decode_score_map, encode_score_map, entropy_map, flag_regions, ScoreMap};
use crate::learn::{
    decode_checkpoint, encode_checkpoint, featurize, finetune, forward, Correspondence, CorrespondenceSet,
    CounterfactualItem, FeatureField, LabeledPixels, LossBreakdown, SupervisionBatch, ToyBackboneParams,
};
use crate::mask::{
    argmax_mask, colorize, content_hash, decode_bin, decode_indexed_png, decode_rgb_png, encode_bin,
    encode_color_png, encode_indexed_png, encode_rgb_png, softmax, ClassId, CorrectionRecord,
    Face, ImageRaster, InterventionType, Provenance, RegionSelection, SegmentationMask, SiteEntry, Split,
    NUM_CLASSES,
};
use crate::propagation::{
    build_index, decode_index, encode_index, propagate, verify_no_leakage, IndexImage,
    PropagationIndex,
};
use crate::region::{apply_correction, wand_select, CorrectionMeta, WandParams};

const BASELINE: &str = "checkpoints/baseline.segw";
const CURRENT: &str = "checkpoints/current.segw";
const INDEX: &str = "index/index.segi";
const REGISTRY: &str = "synth/registry.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedRegion {
    pub selection: RegionSelection,
    pub area: usize,
    pub mean_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub site_id: String,
    pub face: Face,
    pub max_score: f64,
    pub regions: Vec<FlaggedRegion>,
}

/// Planted clones of a synthetic store and a wand seed per pool building.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRegistry {
    pub spec: BiasSpec,
    pub registry: CloneRegistry,
    pub pool_sites: Vec<String>,
    /// Pool site → seed pixel whose wand selection is the building.
    pub building_seeds: BTreeMap<String, (u32, u32)>,
    pub buildings: BTreeMap<String, RegionSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationSummary {
    pub source_record: String,
    pub auto_applied: Vec<String>,
    pub review: Vec<String>,
    /// Matches already handled by an earlier run of the same record.
    pub suppressed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seg_items: usize,
    pub cf_items: usize,
    pub prop_items: usize,
    pub initial: Option<LossBreakdown>,
    pub last: Option<LossBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub split: Split,
    pub miou: f64,
    pub iou: [Option<f64>; NUM_CLASSES],
    pub boundary_iou_sky: Option<f64>,
    pub violating_error: Option<f64>,
    pub propagation_gain: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    pub labels: Option<std::path::PathBuf>,
    pub ratios: Option<(f64, f64, f64)>,
}

/// Composites the class colors of `mask` over `image` at weight `alpha`.
pub fn overlay(image: &ImageRaster, mask: &SegmentationMask, alpha: f64) -> Result<ImageRaster, StoreError> {
    if !mask.same_dims(image.width(), image.height()) {
        return Err(StoreError::Invalid("mask and image sizes differ".into()));
    }
    let colors = colorize(mask);
    let a = alpha.clamp(0.0, 1.0);
    let w = image.width();
    Ok(ImageRaster::from_fn(image.width(), image.height(), |x, y| {
        let i = (y * w + x) as usize;
        let (p, c) = (image.at(i), colors.at(i));
        std::array::from_fn(|k| ((1.0 - a) * p[k] as f64 + a * c[k] as f64).round() as u8)
    })?)
}

fn read_mask_file(path: &Path) -> Result<SegmentationMask, StoreError> {
    let bytes = fs::read(path)?;
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => decode_bin(&bytes)?,
        _ => decode_indexed_png(&bytes)?,
    })
}

fn mask_files(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>, StoreError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("bin" | "png")) {
                let rel = p.strip_prefix(dir).expect("under dir").with_extension("");
                out.insert(rel.to_string_lossy().into_owned(), p);
            }
        }
    }
    Ok(out)
}

/// Pooled confusion matrix of every mask under `pred` against the file of
/// the same relative name under `gt`.
pub fn eval_dirs(pred: &Path, gt: &Path) -> Result<IouReport, StoreError> {
    let preds = mask_files(pred)?;
    let gts = mask_files(gt)?;
    if gts.is_empty() {
        return Err(StoreError::NotFound(format!("no masks under {}", gt.display())));
    }
    let mut cm = ConfusionMatrix::default();
    for (name, g) in &gts {
        let p = preds.get(name).ok_or_else(|| StoreError::NotFound(format!("prediction for {name}")))?;
        cm.add(&confusion_matrix(&read_mask_file(p)?, &read_mask_file(g)?, None)?);
    }
    Ok(miou(&cm)?)
}

impl Store {
    pub fn image(&self, site: &str, face: Face) -> Result<ImageRaster, StoreError> {
        self.check_face(site, face)?;
        let rel = &self.manifest.site(site).expect("checked").faces[&face];
        Ok(decode_rgb_png(&fs::read(self.path(rel))?)?)
    }

    pub fn image_bytes(&self, site: &str, face: Face) -> Result<Vec<u8>, StoreError> {
        self.check_face(site, face)?;
        Ok(fs::read(self.path(&self.manifest.site(site).expect("checked").faces[&face]))?)
    }

    fn faces(&self) -> Vec<(String, Face, Split)> {
        self.manifest
            .sites
            .iter()
            .flat_map(|s| s.faces.keys().map(move |f| (s.site_id.clone(), *f, s.split)))
            .collect()
    }

    fn read_optional_mask(&self, dir: &str, site: &str, face: Face) -> Result<Option<SegmentationMask>, StoreError> {
        let p = self.face_path(dir, site, face, "png");
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(decode_indexed_png(&fs::read(p)?)?))
    }

    /// Copies `src/{site}/{face}.png` into the store and splits the sites.
    /// Labels under `opts.labels` become training labels for train sites and
    /// ground truth for every site.
    pub fn ingest(&mut self, src: &Path, opts: &IngestOptions) -> Result<(), StoreError> {
        let mut found: BTreeMap<String, Vec<Face>> = BTreeMap::new();
        for s in fs::read_dir(src)? {
            let s = s?;
            if !s.path().is_dir() {
                continue;
            }
            let site = s.file_name().to_string_lossy().into_owned();
            for f in fs::read_dir(s.path())? {
                let p = f?.path();
                let stem = p.file_stem().and_then(|x| x.to_str()).unwrap_or("");
                if p.extension().and_then(|x| x.to_str()) == Some("png") {
                    let face = stem.parse::<Face>().map_err(StoreError::Invalid)?;
                    found.entry(site.clone()).or_default().push(face);
                }
            }
        }
        if found.keys().any(|s| self.manifest.site(s).is_some()) {
            return Err(StoreError::Conflict("a site is already in the store".into()));
        }
        let ids: Vec<String> = found.keys().cloned().collect();
        let mut fresh = crate::mask::split_sites(&ids, self.config.seed, opts.ratios.unwrap_or(self.config.split_ratios))?;
        for entry in &mut fresh.sites {
            let faces = &found[&entry.site_id];
            entry.faces.retain(|f, _| faces.contains(f));
            for &f in faces {
                entry.faces.entry(f).or_insert_with(|| format!("images/{}/{f}.png", entry.site_id));
            }
            for (&f, rel) in &entry.faces {
                let bytes = fs::read(src.join(&entry.site_id).join(format!("{f}.png")))?;
                decode_rgb_png(&bytes)?;
                write_atomic(&self.path(rel), &bytes)?;
                entry.hashes.insert(f, content_hash(&bytes));
                if let Some(labels) = &opts.labels {
                    let lp = labels.join(&entry.site_id).join(format!("{f}.png"));
                    if lp.exists() {
                        let lb = fs::read(&lp)?;
                        decode_indexed_png(&lb)?;
                        if entry.split == Split::Train {
                            write_atomic(&self.face_path("labels", &entry.site_id, f, "png"), &lb)?;
                        }
                        write_atomic(&self.face_path("gt", &entry.site_id, f, "png"), &lb)?;
                    }
                }
            }
        }
        let mut manifest = self.manifest.clone();
        manifest.sites.extend(fresh.sites);
        self.save_manifest(manifest)
    }

    /// Writes a synthetic bias dataset as flat-face sites and pretrains the
    /// baseline on its labeled train scenes.
    pub fn synth_gen(&mut self, spec: &BiasSpec) -> Result<SynthRegistry, StoreError> {
        if !self.manifest.sites.is_empty() {
            return Err(StoreError::Conflict("synth-gen needs an empty store".into()));
        }
        let ds = gen_biased_dataset(spec);
        let manifest = bench_manifest(&ds);
        let write = |im: &BiasImage, labels: bool| -> Result<(), StoreError> {
            write_atomic(&self.face_path("images", &im.id, Face::Flat, "png"), &encode_rgb_png(&im.image))?;
            if labels {
                write_atomic(&self.face_path("labels", &im.id, Face::Flat, "png"), &encode_indexed_png(&im.gt))?;
            }
            write_atomic(&self.face_path("gt", &im.id, Face::Flat, "png"), &encode_indexed_png(&im.gt))
        };
        for im in &ds.train {
            write(im, true)?;
        }
        for im in ds.pool.iter().chain(&ds.ood) {
            write(im, false)?;
        }
        self.save_manifest(manifest)?;

        let mut reg = SynthRegistry {
            spec: spec.clone(),
            registry: ds.registry.clone(),
            pool_sites: ds.pool.iter().map(|p| p.id.clone()).collect(),
            building_seeds: BTreeMap::new(),
            buildings: BTreeMap::new(),
        };
        for im in &ds.pool {
            let Some(b) = &im.building else { continue };
            reg.buildings.insert(im.id.clone(), b.clone());
            if let Some(seed) = best_seed(&im.image, b, self.config.wand) {
                reg.building_seeds.insert(im.id.clone(), seed);
            }
        }
        write_atomic(&self.path(REGISTRY), serde_json::to_string_pretty(&reg)?.as_bytes())?;

        let feats = BenchFeatures::new(&ds);
        let cfg = crate::learn::TrainConfig { seed: self.config.seed, ..self.config.pretrain.clone() };
        let (params, _) = pretrain_baseline(&ds, &feats, &cfg)?;
        write_atomic(&self.path(BASELINE), &encode_checkpoint(&params))?;
        write_atomic(&self.path(CURRENT), &encode_checkpoint(&params))?;
        Ok(reg)
    }

    pub fn synth_registry(&self) -> Result<SynthRegistry, StoreError> {
        let text = fs::read_to_string(self.path(REGISTRY)).map_err(|_| StoreError::NotFound("synth registry".into()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn checkpoint(&self, name: &str) -> Result<Option<ToyBackboneParams>, StoreError> {
        match fs::read(self.path(format!("checkpoints/{name}.segw"))) {
            Ok(b) => Ok(Some(decode_checkpoint(&b)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn model(&self) -> Result<ToyBackboneParams, StoreError> {
        match self.checkpoint("current")? {
            Some(m) => Ok(m),
            None => self.checkpoint("baseline")?.ok_or_else(|| StoreError::NotFound("no checkpoint; run train".into())),
        }
    }

    /// Predicts every face with the current checkpoint, or reads logits from
    /// `external/{site}/{face}.segl`. Returns the number of faces written.
    pub fn predict(&self, external: Option<&Path>) -> Result<usize, StoreError> {
        let model = if external.is_none() { Some(self.model()?) } else { None };
        let mut n = 0;
        for (site, face, _) in self.faces() {
            let image = self.image(&site, face)?;
            let logits = match (external, &model) {
                (Some(dir), _) => decode_logits(&fs::read(dir.join(&site).join(format!("{face}.segl")))?)?,
                (None, Some(m)) => forward(m, &featurize(&image)),
                _ => unreachable!(),
            };
            if logits.width() != image.width() || logits.height() != image.height() {
                return Err(StoreError::Invalid(format!("logits for {site}/{face} do not match the image size")));
            }
            write_atomic(&self.face_path("predictions", &site, face, "segl"), &encode_logits(&logits))?;
            write_atomic(&self.face_path("predictions", &site, face, "bin"), &encode_bin(&argmax_mask(&logits)))?;
            n += 1;
        }
        Ok(n)
    }

    /// Entropy of the predicted distribution, or external score maps from
    /// `external/{site}/{face}.segf`, thresholded into flagged regions.
    pub fn detect(&self, external: Option<&Path>) -> Result<Vec<FailureReport>, StoreError> {
        let mut out = Vec::new();
        for (site, face, _) in self.faces() {
            let map = match external {
                Some(dir) => decode_score_map(&fs::read(dir.join(&site).join(format!("{face}.segf")))?)?,
                None => {
                    let p = self.face_path("predictions", &site, face, "segl");
                    let bytes = fs::read(&p).map_err(|_| StoreError::NotFound(format!("prediction for {site}/{face}; run predict")))?;
                    entropy_map(&softmax(&decode_logits(&bytes)?))
                }
            };
            let report = failure_report(&site, face, &map, &self.config.flag);
            write_atomic(&self.face_path("failures", &site, face, "segf"), &encode_score_map(&map))?;
            write_atomic(&self.face_path("failures", &site, face, "json"), serde_json::to_string(&report)?.as_bytes())?;
            out.push(report);
        }
        Ok(out)
    }

    pub fn failures(&self, site: &str, face: Face) -> Result<FailureReport, StoreError> {
        self.check_face(site, face)?;
        let text = fs::read_to_string(self.face_path("failures", site, face, "json"))
            .map_err(|_| StoreError::NotFound(format!("failures for {site}/{face}; run detect")))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn wand(&self, site: &str, face: Face, seed: (u32, u32), params: WandParams) -> Result<RegionSelection, StoreError> {
        let params = WandParams::new(params.tolerance, params.connectivity)?;
        Ok(wand_select(&self.image(site, face)?, seed, params)?)
    }

    pub fn open_session(&mut self) -> Result<String, StoreError> {
        let n = self.log.events.iter().filter(|e| matches!(e, SessionEvent::SessionOpened { .. })).count();
        let session_id = format!("s{:04}", n + 1);
        self.commit(SessionEvent::SessionOpened { at: self.now(), session_id: session_id.clone() })?;
        Ok(session_id)
    }

    /// Applies a human correction `mask[selection] <- class` to the working
    /// mask of an image.
    #[allow(clippy::too_many_arguments)]
    pub fn submit_correction(
        &mut self,
        site: &str,
        face: Face,
        selection: &RegionSelection,
        class: u8,
        intervention_type: InterventionType,
        interactions: u32,
        elapsed_s: f64,
    ) -> Result<CorrectionRecord, StoreError> {
        let image = self.image(site, face)?;
        let (w, h) = (image.width(), image.height());
        let mask = match self.state.current(&(site.to_string(), face)) {
            Some(m) => m.clone(),
            None => self.base_mask(site, face, w, h)?,
        };
        let n = self.log.events.iter().filter(|e| matches!(e, SessionEvent::CorrectionApplied { .. })).count();
        let meta = CorrectionMeta { record_id: format!("r{:04}", n + 1), site_id: site.into(), face, created_at: self.now() };
        let provenance = Provenance::Human { interactions, elapsed_s };
        let (_, record) = apply_correction(&mask, selection, class, intervention_type, provenance, meta)?;
        let base = self.base_event(site, face, &mask);
        self.commit(SessionEvent::CorrectionApplied { at: record.created_at, record: record.clone(), base })?;
        Ok(record)
    }

    pub fn undo(&mut self, record_id: &str) -> Result<(), StoreError> {
        if !self.state.records.contains_key(record_id) {
            return Err(StoreError::NotFound(format!("live record {record_id}")));
        }
        self.commit(SessionEvent::Undo { at: self.now(), record_id: record_id.into() })
    }

    fn train_offers(&self) -> Result<Vec<(String, Face, crate::mask::Digest, ImageRaster)>, StoreError> {
        let mut out = Vec::new();
        for s in self.manifest.sites.iter().filter(|s| s.split == Split::Train) {
            for (&face, rel) in &s.faces {
                let bytes = fs::read(self.path(rel))?;
                let hash = content_hash(&bytes);
                if s.hashes.get(&face) != Some(&hash) {
                    return Err(StoreError::Integrity(format!("{}/{face} does not match its manifest hash", s.site_id)));
                }
                out.push((s.site_id.clone(), face, hash, decode_rgb_png(&bytes)?));
            }
        }
        Ok(out)
    }

    fn embed_model(&self) -> Result<Option<ToyBackboneParams>, StoreError> {
        if self.config.use_embedding {
            Ok(Some(self.checkpoint("baseline")?.ok_or_else(|| StoreError::NotFound("baseline checkpoint".into()))?))
        } else {
            Ok(None)
        }
    }

    /// Builds the index over train-split faces and saves it.
    pub fn build_index(&self) -> Result<PropagationIndex, StoreError> {
        let offers = self.train_offers()?;
        let images: Vec<IndexImage> = offers
            .iter()
            .map(|(site, face, hash, image)| IndexImage { site_id: site.clone(), face: *face, hash: *hash, image })
            .collect();
        let embed = self.embed_model()?;
        let index = build_index(&self.manifest, &images, self.config.index, embed.as_ref())?;
        write_atomic(&self.path(INDEX), &encode_index(&index))?;
        Ok(index)
    }

    /// The saved index when it was built from the current manifest with the
    /// current parameters, else a fresh build.
    pub fn index(&self) -> Result<PropagationIndex, StoreError> {
        if let Ok(bytes) = fs::read(self.path(INDEX)) {
            let idx = decode_index(&bytes)?;
            let embed_ok = idx.candidates.iter().all(|c| c.descriptor.embedding.is_some() == self.config.use_embedding);
            if idx.manifest_digest == self.manifest.digest() && idx.params == self.config.index && embed_ok {
                if let Err(v) = verify_no_leakage(&idx, &self.manifest) {
                    return Err(StoreError::Integrity(format!("saved index leaks {} candidates", v.len())));
                }
                return Ok(idx);
            }
        }
        self.build_index()
    }

    /// Propagates a human record. Matches already produced by an earlier run
    /// of the same record are suppressed. Appends one event.
    pub fn propagate(&mut self, record_id: &str) -> Result<PropagationSummary, StoreError> {
        let record = self
            .state
            .records
            .get(record_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("live record {record_id}")))?;
        if !record.provenance.is_human() {
            return Err(crate::propagation::PropagationError::NotHumanProvenance(record_id.into()).into());
        }
        let index = self.index()?;
        let source = self.image(&record.site_id, record.face)?;
        let embed = self.embed_model()?;
        let mut bases: BTreeMap<ImageKey, SegmentationMask> = BTreeMap::new();
        for c in &index.candidates {
            let key = (c.site_id.clone(), c.face);
            if !bases.contains_key(&key) && self.state.current(&key).is_none() {
                let m = self.base_mask(&c.site_id, c.face, c.selection.width(), c.selection.height())?;
                bases.insert(key, m);
            }
        }
        let lookup = |c: &crate::propagation::CandidateRegion| {
            let key = (c.site_id.clone(), c.face);
            self.state.current(&key).or_else(|| bases.get(&key)).cloned()
        };
        let at = self.now();
        let outcome = propagate(&record, &source, &index, self.config.propagate, embed.as_ref(), &lookup, at)?;
        let total = outcome.auto_applied.len() + outcome.review_queue.len();
        let auto: Vec<CorrectionRecord> = outcome
            .auto_applied
            .into_iter()
            .map(|p| p.record)
            .filter(|r| !self.state.has_propagated(&r.record_id))
            .collect();
        let review: Vec<_> =
            outcome.review_queue.into_iter().filter(|p| !self.state.has_propagated(&p.record.record_id)).collect();
        let suppressed = total - auto.len() - review.len();
        let mut used: Vec<ImageKey> = auto.iter().map(|r| r.image_key()).collect();
        used.sort();
        used.dedup();
        let base_events = used
            .iter()
            .filter_map(|k| bases.get(k).and_then(|m| self.base_event(&k.0, k.1, m)))
            .collect();
        let summary = PropagationSummary {
            source_record: record_id.into(),
            auto_applied: auto.iter().map(|r| r.record_id.clone()).collect(),
            review: review.iter().map(|p| p.record.record_id.clone()).collect(),
            suppressed,
        };
        self.commit(SessionEvent::PropagationRun {
            at,
            source_record: record_id.into(),
            auto_applied: auto,
            review,
            bases: base_events,
        })?;
        Ok(summary)
    }

    pub fn review_queue(&self) -> Vec<&ReviewEntry> {
        self.state.review.values().filter(|e| e.decided.is_none()).collect()
    }

    /// Accepting applies the proposed region to the target's current mask as
    /// a confirmed propagated record; rejecting archives the item.
    pub fn review(&mut self, item_id: &str, accept: bool) -> Result<Option<CorrectionRecord>, StoreError> {
        let entry = self.state.review.get(item_id).ok_or_else(|| StoreError::NotFound(format!("review item {item_id}")))?;
        if entry.decided.is_some() {
            return Err(StoreError::AlreadyDecided(item_id.into()));
        }
        let proposed = entry.item.record.clone();
        let Provenance::Propagated { source_record, family_similarities, .. } = proposed.provenance.clone() else {
            return Err(StoreError::Replay(format!("review item {item_id} is not a propagated record")));
        };
        let candidate = entry.item.matched.candidate;
        let at = self.now();
        if !accept {
            self.commit(SessionEvent::ReviewDecision { at, source_record, candidate, accept, record: None, base: None })?;
            return Ok(None);
        }
        let (site, face) = proposed.image_key();
        let (w, h) = (proposed.region.width(), proposed.region.height());
        let mask = match self.state.current(&(site.clone(), face)) {
            Some(m) => m.clone(),
            None => self.base_mask(&site, face, w, h)?,
        };
        let provenance = Provenance::Propagated { source_record: source_record.clone(), family_similarities, confirmed: true };
        let meta = CorrectionMeta { record_id: item_id.into(), site_id: site.clone(), face, created_at: at };
        let (_, record) = apply_correction(
            &mask,
            &proposed.region,
            proposed.corrected_class.get(),
            proposed.intervention_type,
            provenance,
            meta,
        )?;
        let base = self.base_event(&site, face, &mask);
        self.commit(SessionEvent::ReviewDecision {
            at,
            source_record,
            candidate,
            accept,
            record: Some(record.clone()),
            base,
        })?;
        Ok(Some(record))
    }

    /// Fine-tunes from the current checkpoint (or a seeded initialization)
    /// on training labels, human records and propagated records of
    /// train-split images.
    pub fn train(&self, epochs: Option<usize>) -> Result<TrainReport, StoreError> {
        let mut fields: Vec<FeatureField> = Vec::new();
        let mut slot: HashMap<ImageKey, usize> = HashMap::new();
        let mut field_of = |store: &Store, site: &str, face: Face| -> Result<usize, StoreError> {
            let key = (site.to_string(), face);
            if let Some(&i) = slot.get(&key) {
                return Ok(i);
            }
            fields.push(featurize(&store.image(site, face)?));
            slot.insert(key, fields.len() - 1);
            Ok(fields.len() - 1)
        };
        let mut batch = SupervisionBatch::default();
        for (site, face, split) in self.faces() {
            if split != Split::Train {
                continue;
            }
            if let Some(labels) = self.read_optional_mask("labels", &site, face)? {
                let image = field_of(self, &site, face)?;
                let valid = RegionSelection::full(labels.width(), labels.height());
                batch.seg.push(LabeledPixels { image, labels, valid });
            }
        }
        let mut prop = Vec::new();
        for r in self.state.live_records() {
            if self.manifest.split_of(&r.site_id) != Some(Split::Train) {
                log::warn!("record {} is on a non-train image; not used for training", r.record_id);
                continue;
            }
            let image = field_of(self, &r.site_id, r.face)?;
            if r.provenance.is_human() {
                batch.cf.push(CounterfactualItem { image, region: r.region.clone(), class: r.corrected_class });
            } else {
                prop.push(Correspondence { image, pixels: r.region.clone(), class: r.corrected_class });
            }
        }
        batch.prop = CorrespondenceSet { entries: prop };
        let report_counts = (batch.seg.len(), batch.cf.len(), batch.prop.entries.len());

        let config = crate::learn::TrainConfig {
            seed: self.config.seed,
            epochs: epochs.unwrap_or(self.config.train.epochs),
            ..self.config.train.clone()
        };
        let theta0 = match self.checkpoint("current")? {
            Some(p) => p,
            None => ToyBackboneParams::init(config.seed),
        };
        if self.checkpoint("baseline")?.is_none() {
            write_atomic(&self.path(BASELINE), &encode_checkpoint(&theta0))?;
        }
        let (params, log) = if config.epochs == 0 {
            (theta0, Default::default())
        } else {
            finetune(&theta0, &fields, &batch, &config)?
        };
        write_atomic(&self.path(CURRENT), &encode_checkpoint(&params))?;
        let report = TrainReport {
            seg_items: report_counts.0,
            cf_items: report_counts.1,
            prop_items: report_counts.2,
            initial: log.initial().cloned(),
            last: log.last().cloned(),
        };
        write_atomic(&self.path("reports/train.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
        Ok(report)
    }

    /// Scores the baseline and current checkpoints on the faces of `split`
    /// that have ground truth, and writes the metrics reports.
    pub fn eval(&self, split: Split) -> Result<Vec<MetricsRow>, StoreError> {
        let mut scenes = Vec::new();
        for (site, face, s) in self.faces() {
            if s != split {
                continue;
            }
            if let Some(gt) = self.read_optional_mask("gt", &site, face)? {
                scenes.push(BiasImage { id: format!("{site}/{face}"), image: self.image(&site, face)?, gt, building: None, family: None });
            }
        }
        if scenes.is_empty() {
            return Err(StoreError::NotFound(format!("no ground truth in the {split:?} split")));
        }
        let gain = match propagation_gain(&self.log) {
            Ok(g) => Some(g),
            Err(EvalError::EmptyLog) => None,
            Err(e) => return Err(e.into()),
        };
        let fields: Vec<FeatureField> = scenes.iter().map(|s| featurize(&s.image)).collect();
        let mut rows = Vec::new();
        for name in ["baseline", "current"] {
            let Some(model) = self.checkpoint(name)? else { continue };
            let preds: Vec<SegmentationMask> = fields.iter().map(|f| argmax_mask(&forward(&model, f))).collect();
            let mut cm = ConfusionMatrix::default();
            let mut biou = Vec::new();
            for (p, s) in preds.iter().zip(&scenes) {
                cm.add(&confusion_matrix(p, &s.gt, None)?);
                biou.extend(boundary_iou(p, &s.gt, ClassId::SKY, self.config.boundary_width)?);
            }
            let report = miou(&cm)?;
            let violating_error = match robustness_from_masks(&preds, &scenes, None) {
                Ok(r) => Some(r.violating_error),
                Err(EvalError::NoViolatingPixels) => None,
                Err(e) => return Err(e.into()),
            };
            rows.push(MetricsRow {
                model: name.into(),
                split,
                miou: report.mean,
                iou: report.per_class,
                boundary_iou_sky: (!biou.is_empty()).then(|| biou.iter().sum::<f64>() / biou.len() as f64),
                violating_error,
                propagation_gain: gain,
            });
        }
        if rows.is_empty() {
            return Err(StoreError::NotFound("no checkpoint to evaluate".into()));
        }
        self.write_reports(&rows)?;
        Ok(rows)
    }

    fn write_reports(&self, rows: &[MetricsRow]) -> Result<(), StoreError> {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        let mut csv = String::from("model,split,miou");
        for c in 0..NUM_CLASSES {
            csv += &format!(",iou_{c}");
        }
        csv += ",boundary_iou_sky,violating_error,propagation_gain\n";
        let mut txt = String::new();
        for r in rows {
            let split = serde_json::to_value(r.split)?.as_str().unwrap_or_default().to_string();
            csv += &format!("{},{split},{:.4}", r.model, r.miou);
            for v in r.iou {
                csv += &format!(",{}", cell(v));
            }
            csv += &format!(
                ",{},{},{}\n",
                cell(r.boundary_iou_sky),
                cell(r.violating_error),
                cell(r.propagation_gain)
            );
            txt += &format!(
                "{:<9} {split:<5} mIoU {:.4}  boundary-sky {}  violating {}  gain {}\n",
                r.model,
                r.miou,
                cell(r.boundary_iou_sky),
                cell(r.violating_error),
                cell(r.propagation_gain)
            );
        }
        write_atomic(&self.path("reports/metrics.csv"), csv.as_bytes())?;
        write_atomic(&self.path("reports/metrics.txt"), txt.as_bytes())?;
        write_atomic(&self.path("reports/metrics.json"), serde_json::to_string_pretty(rows)?.as_bytes())
    }

    pub fn metrics(&self) -> Result<Vec<MetricsRow>, StoreError> {
        let text = fs::read_to_string(self.path("reports/metrics.json"))
            .map_err(|_| StoreError::NotFound("metrics; run eval".into()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn effort(&self) -> Result<Option<EffortStats>, StoreError> {
        match effort_stats(&self.log) {
            Ok(s) => Ok(Some(s)),
            Err(EvalError::EmptyLog) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes the working mask of every face with one, in all three formats,
    /// plus the live records.
    pub fn export(&self, out: &Path) -> Result<usize, StoreError> {
        let mut n = 0;
        for (site, face, _) in self.faces() {
            let Some(mask) = self.current_mask(&site, face)? else { continue };
            let dir = out.join(&site);
            write_atomic(&dir.join(format!("{face}.bin")), &encode_bin(&mask))?;
            write_atomic(&dir.join(format!("{face}.png")), &encode_indexed_png(&mask))?;
            write_atomic(&dir.join(format!("{face}_vis.png")), &encode_color_png(&mask))?;
            n += 1;
        }
        let records: String = self
            .state
            .live_records()
            .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
            .collect::<Result<_, _>>()?;
        write_atomic(&out.join("records.jsonl"), records.as_bytes())?;
        write_atomic(&out.join(super::MANIFEST_FILE), self.manifest.to_json().as_bytes())?;
        Ok(n)
    }

    pub fn sites(&self) -> &[SiteEntry] {
        &self.manifest.sites
    }

    pub fn config_for(root: &Path) -> Result<StoreConfig, StoreError> {
        Ok(serde_json::from_str(&fs::read_to_string(root.join(super::CONFIG_FILE))?)?)
    }
}

fn failure_report(site: &str, face: Face, map: &ScoreMap, params: &crate::failure::FlagParams) -> FailureReport {
    let regions = flag_regions(map, params)
        .into_iter()
        .map(|sel| {
            let area = sel.count();
            let mean_score = sel.iter().map(|i| map.get(i)).sum::<f64>() / area as f64;
            FlaggedRegion { selection: sel, area, mean_score }
        })
        .collect();
    FailureReport { site_id: site.into(), face, max_score: map.max(), regions }
}

/// The region pixel whose wand selection best overlaps `region`.
fn best_seed(image: &ImageRaster, region: &RegionSelection, params: WandParams) -> Option<(u32, u32)> {
    let w = image.width() as usize;
    let mut best: Option<(f64, (u32, u32))> = None;
    for i in region.iter().step_by(3).take(48) {
        let seed = ((i % w) as u32, (i / w) as u32);
        let Ok(sel) = wand_select(image, seed, params) else { continue };
        let iou = sel.intersection_count(region) as f64 / sel.union_count(region) as f64;
        if best.is_none_or(|(b, _)| iou > b) {
            best = Some((iou, seed));
        }
    }
    best.map(|(_, s)| s)
}
