use super::*;
use crate::eval::BiasSpec;
use crate::mask::{CorrectionRecord, InterventionType, Provenance, RegionSelection, Split};

fn small_store(dir: &Path) -> (Store, SynthRegistry) {
    let mut cfg = StoreConfig::default();
    cfg.pretrain.epochs = 2;
    cfg.train.epochs = 2;
    let mut s = Store::init(dir, cfg).unwrap();
    let spec = BiasSpec { n_train: 4, n_pool: 7, n_ood: 2, clones_per_source: 2, clone_rate: 4.0 / 7.0, ..BiasSpec::default() };
    let reg = s.synth_gen(&spec).unwrap();
    s.predict(None).unwrap();
    (s, reg)
}

fn correct_source(s: &mut Store, reg: &SynthRegistry) -> CorrectionRecord {
    let src = &reg.pool_sites[reg.registry.sources[0]];
    let sel = reg.buildings[src].clone();
    s.submit_correction(src, Face::Flat, &sel, 3, InterventionType::FeatureSuppression, 1, 20.0).unwrap()
}

fn bins(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.join("masks")];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "bin") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn init_twice_and_missing_store() {
    let d = tempfile::tempdir().unwrap();
    Store::init(d.path(), StoreConfig::default()).unwrap();
    assert!(matches!(Store::init(d.path(), StoreConfig::default()), Err(StoreError::AlreadyInitialized(_))));
    assert!(matches!(Store::open(&d.path().join("nope")), Err(StoreError::NotInitialized(_))));
}

#[test]
fn correction_undo_and_validation() {
    let d = tempfile::tempdir().unwrap();
    let (mut s, reg) = small_store(d.path());
    let site = reg.pool_sites[0].clone();
    let before = s.current_mask(&site, Face::Flat).unwrap().unwrap();
    let sel = RegionSelection::from_indices(32, 32, 0..10);
    assert!(matches!(
        s.submit_correction(&site, Face::Flat, &sel, 9, InterventionType::BoundaryRefinement, 1, 1.0),
        Err(StoreError::Region(RegionError::ClassOutOfRange(9)))
    ));
    assert!(matches!(
        s.submit_correction(&site, Face::Flat, &RegionSelection::empty(32, 32), 1, InterventionType::BoundaryRefinement, 1, 1.0),
        Err(StoreError::Region(RegionError::EmptySelection))
    ));
    let r = s.submit_correction(&site, Face::Flat, &sel, 6, InterventionType::BoundaryRefinement, 2, 5.0).unwrap();
    let after = s.current_mask(&site, Face::Flat).unwrap().unwrap();
    assert!(sel.iter().all(|i| after.labels()[i] == 6));
    let v0 = fs::read(s.version_path(&site, Face::Flat, 0, ".bin")).unwrap();
    s.undo(&r.record_id).unwrap();
    let v2 = fs::read(s.version_path(&site, Face::Flat, 2, ".bin")).unwrap();
    assert_eq!(v0, v2);
    assert_eq!(v0, encode_bin(&before));
    assert!(matches!(s.undo(&r.record_id), Err(StoreError::NotFound(_))));
    assert!(s.verify_cache().unwrap().is_empty());
}

#[test]
fn propagation_is_idempotent_and_reviews_decide_once() {
    let d = tempfile::tempdir().unwrap();
    let (mut s, reg) = small_store(d.path());
    let r = correct_source(&mut s, &reg);
    let first = s.propagate(&r.record_id).unwrap();
    let clones: Vec<String> =
        reg.registry.clones_of(reg.registry.sources[0]).iter().map(|&c| reg.pool_sites[c].clone()).collect();
    assert!(!clones.is_empty());
    for c in &clones {
        let m = s.current_mask(c, Face::Flat).unwrap().unwrap();
        assert!(reg.buildings[c].iter().all(|i| m.labels()[i] == 3), "{c}");
    }
    let events = s.log().events.len();
    let again = s.propagate(&r.record_id).unwrap();
    assert!(again.auto_applied.is_empty() && again.review.is_empty());
    assert_eq!(again.suppressed, first.auto_applied.len() + first.review.len());
    assert_eq!(s.log().events.len(), events + 1);

    let auto = first.auto_applied[0].clone();
    assert!(matches!(s.propagate(&auto), Err(StoreError::Propagation(PropagationError::NotHumanProvenance(_)))));
    assert!(matches!(s.review("missing", true), Err(StoreError::NotFound(_))));
}

#[test]
fn review_accept_and_reject() {
    let d = tempfile::tempdir().unwrap();
    let (mut s, reg) = small_store(d.path());
    s.config.propagate.tau = 1.5;
    s.config.propagate.review_factor = 0.5;
    let r = correct_source(&mut s, &reg);
    let out = s.propagate(&r.record_id).unwrap();
    assert!(out.review.len() >= 2, "{out:?}");
    let (a, b) = (out.review[0].clone(), out.review[1].clone());
    let rec = s.review(&a, true).unwrap().unwrap();
    assert!(matches!(rec.provenance, Provenance::Propagated { confirmed: true, .. }));
    let m = s.current_mask(&rec.site_id, rec.face).unwrap().unwrap();
    assert!(rec.region.iter().all(|i| m.labels()[i] == 3));
    let target = s.state().review[&b].item.record.image_key();
    let before = s.current_mask(&target.0, target.1).unwrap();
    assert_eq!(s.review(&b, false).unwrap(), None);
    assert_eq!(s.current_mask(&target.0, target.1).unwrap(), before);
    assert!(matches!(s.review(&a, false), Err(StoreError::AlreadyDecided(_))));
    assert!(matches!(s.review(&b, true), Err(StoreError::AlreadyDecided(_))));
    assert_eq!(s.review_queue().len(), out.review.len() - 2);
}

#[test]
fn reopen_replays_and_drops_torn_tail() {
    let d = tempfile::tempdir().unwrap();
    let (mut s, reg) = small_store(d.path());
    let r = correct_source(&mut s, &reg);
    let snapshot = bins(d.path());
    s.propagate(&r.record_id).unwrap();
    drop(s);

    let log_path = d.path().join(LOG_FILE);
    let text = fs::read_to_string(&log_path).unwrap();
    let cut = text[..text.len() - 1].rfind('\n').unwrap() + 1;
    fs::write(&log_path, &text[..cut + (text.len() - cut) / 2]).unwrap();
    let s = Store::open(d.path()).unwrap();
    assert_eq!(bins(d.path()), snapshot);
    assert_eq!(fs::read_to_string(&log_path).unwrap(), text[..cut]);
    assert!(s.verify_cache().unwrap().is_empty());
}

#[test]
fn train_with_zero_epochs_keeps_initialization() {
    let d = tempfile::tempdir().unwrap();
    let s = Store::init(d.path(), StoreConfig { seed: 7, ..StoreConfig::default() }).unwrap();
    let src = tempfile::tempdir().unwrap();
    for site in ["a", "b", "c"] {
        let img = crate::mask::ImageRaster::filled(8, 8, [10, 20, 30]).unwrap();
        write_atomic(&src.path().join(site).join("flat.png"), &crate::mask::encode_rgb_png(&img)).unwrap();
    }
    let mut s = s;
    s.ingest(src.path(), &IngestOptions::default()).unwrap();
    assert_eq!(s.manifest().sites.len(), 3);
    assert!(s.manifest().sites.iter().all(|x| x.hashes.len() == 1));
    assert_eq!(s.manifest().count(Split::Train), 3 - s.manifest().count(Split::Val) - s.manifest().count(Split::Test));
    s.train(Some(0)).unwrap();
    let cur = s.checkpoint("current").unwrap().unwrap();
    assert_eq!(cur, crate::learn::ToyBackboneParams::init(7));
    assert_eq!(s.checkpoint("baseline").unwrap().unwrap(), cur);
}

#[test]
fn index_is_reused_until_manifest_changes() {
    let d = tempfile::tempdir().unwrap();
    let (s, _) = small_store(d.path());
    let a = s.index().unwrap();
    assert!(d.path().join("index/index.segi").exists());
    assert_eq!(s.index().unwrap(), a);
    assert!(a.candidates.iter().all(|c| s.manifest().split_of(&c.site_id) == Some(Split::Train)));
}
