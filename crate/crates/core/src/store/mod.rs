//! On-disk store. `records.log` is the single source of truth; mask files
//! under `masks/` are caches regenerated by replaying it.
//!
//! ```text
//! store.json                      StoreConfig
//! manifest.json                   DatasetManifest
//! images/{site}/{face}.png        RGB input
//! labels/{site}/{face}.png        training labels (train split)
//! gt/{site}/{face}.png            evaluation ground truth
//! predictions/{site}/{face}.bin   argmax mask (SEGB) and .segl logits
//! failures/{site}/{face}.segf     score map and .json flagged regions
//! masks/{site}/{face}/v{n}.bin    mask versions, with v{n}.png and v{n}_vis.png
//! records.log                     JSONL session log
//! index/index.segi                propagation index
//! checkpoints/{baseline,current}.segw
//! reports/metrics.{csv,txt,json}
//! synth/registry.json             planted clones of a synthetic store
//! ```

mod logits;
mod ops;
mod replay;

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logits::{decode_logits, encode_logits, LOGITS_MAGIC};
pub use ops::{
    eval_dirs, overlay, FailureReport, FlaggedRegion, IngestOptions, MetricsRow, PropagationSummary, SynthRegistry, TrainReport,
};
pub use replay::{replay, ImageKey, ReplayState, ReviewEntry};

use crate::eval::{BaseMask, EvalError, MaskSnapshot, SessionEvent, SessionLog};
use crate::failure::{FailureError, FlagParams};
use crate::learn::{LearnError, TrainConfig};
use crate::mask::{
    decode_bin, encode_bin, encode_color_png, encode_indexed_png, ClassId, DatasetManifest, Face, MaskError,
    SegmentationMask,
};
use crate::propagation::{IndexParams, PropagateParams, PropagationError};
use crate::region::{Connectivity, RegionError, WandParams};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no store at {0}")]
    NotInitialized(PathBuf),
    #[error("a store already exists at {0}")]
    AlreadyInitialized(PathBuf),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("review item {0} was already decided")]
    AlreadyDecided(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Failure(#[from] FailureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub seed: u64,
    /// Weight of the class colors in overlays.
    pub overlay_alpha: f64,
    pub wand: WandParams,
    pub index: IndexParams,
    pub propagate: PropagateParams,
    pub flag: FlagParams,
    pub train: TrainConfig,
    pub pretrain: TrainConfig,
    /// Add baseline-model embeddings to index descriptors.
    pub use_embedding: bool,
    pub split_ratios: (f64, f64, f64),
    /// Band width for boundary IoU.
    pub boundary_width: u32,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            seed: 0,
            overlay_alpha: 0.5,
            wand: WandParams { tolerance: 40.0, connectivity: Connectivity::Four },
            index: IndexParams::default(),
            propagate: PropagateParams::default(),
            flag: FlagParams::default(),
            train: TrainConfig { lr: 3e-3, epochs: 30, ..TrainConfig::default() },
            pretrain: TrainConfig { lr: 1e-2, epochs: 30, ..TrainConfig::default() },
            use_embedding: false,
            split_ratios: (0.7, 0.1, 0.2),
            boundary_width: 2,
        }
    }
}

pub const CONFIG_FILE: &str = "store.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "records.log";
const DIRS: [&str; 10] =
    ["images", "labels", "gt", "predictions", "failures", "masks", "index", "checkpoints", "reports", "synth"];

pub struct Store {
    root: PathBuf,
    pub config: StoreConfig,
    manifest: DatasetManifest,
    log: SessionLog,
    state: ReplayState,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    pub fn init(root: &Path, config: StoreConfig) -> Result<Store, StoreError> {
        if root.join(CONFIG_FILE).exists() {
            return Err(StoreError::AlreadyInitialized(root.to_path_buf()));
        }
        for d in DIRS {
            fs::create_dir_all(root.join(d))?;
        }
        write_atomic(&root.join(CONFIG_FILE), serde_json::to_string_pretty(&config)?.as_bytes())?;
        write_atomic(&root.join(MANIFEST_FILE), DatasetManifest::default().to_json().as_bytes())?;
        File::create(root.join(LOG_FILE))?;
        Store::open(root)
    }

    /// Opens a store, dropping a torn final log line and regenerating the
    /// mask caches from the log.
    pub fn open(root: &Path) -> Result<Store, StoreError> {
        if !root.join(CONFIG_FILE).exists() {
            return Err(StoreError::NotInitialized(root.to_path_buf()));
        }
        let config: StoreConfig = serde_json::from_str(&fs::read_to_string(root.join(CONFIG_FILE))?)?;
        let manifest = DatasetManifest::from_json(&fs::read_to_string(root.join(MANIFEST_FILE))?)?;
        let log_path = root.join(LOG_FILE);
        let text = fs::read_to_string(&log_path).unwrap_or_default();
        let log = SessionLog::from_jsonl(&text)?;
        if !text.is_empty() && !text.ends_with('\n') {
            let kept = text.rfind('\n').map_or(0, |i| i + 1);
            let tail = &text[kept..];
            if serde_json::from_str::<SessionEvent>(tail).is_ok() {
                OpenOptions::new().append(true).open(&log_path)?.write_all(b"\n")?;
            } else {
                log::warn!("records.log: dropping a torn final line");
                OpenOptions::new().write(true).open(&log_path)?.set_len(kept as u64)?;
            }
        }
        let state = replay(&log)?;
        let store = Store { root: root.to_path_buf(), config, manifest, log, state };
        store.sync_cache()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn state(&self) -> &ReplayState {
        &self.state
    }

    pub fn set_config(&mut self, config: StoreConfig) {
        self.config = config;
    }

    pub fn save_config(&self) -> Result<(), StoreError> {
        write_atomic(&self.root.join(CONFIG_FILE), serde_json::to_string_pretty(&self.config)?.as_bytes())
    }

    pub(crate) fn save_manifest(&mut self, manifest: DatasetManifest) -> Result<(), StoreError> {
        write_atomic(&self.root.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;
        self.manifest = manifest;
        Ok(())
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub(crate) fn face_path(&self, dir: &str, site: &str, face: Face, ext: &str) -> PathBuf {
        self.root.join(dir).join(site).join(format!("{face}.{ext}"))
    }

    pub fn version_path(&self, site: &str, face: Face, n: usize, suffix: &str) -> PathBuf {
        self.root.join("masks").join(site).join(face.as_str()).join(format!("v{n}{suffix}"))
    }

    pub(crate) fn check_face(&self, site: &str, face: Face) -> Result<(), StoreError> {
        let entry = self.manifest.site(site).ok_or_else(|| StoreError::NotFound(format!("site {site}")))?;
        if !entry.faces.contains_key(&face) {
            return Err(StoreError::NotFound(format!("face {site}/{face}")));
        }
        Ok(())
    }

    pub fn now(&self) -> DateTime<Utc> {
        let t = Utc::now();
        self.log.events.last().map_or(t, |e| e.at().max(t))
    }

    /// Validates and applies `event`, then appends it to the log with fsync.
    pub(crate) fn commit(&mut self, event: SessionEvent) -> Result<(), StoreError> {
        let touched: Vec<ImageKey> = match &event {
            SessionEvent::Undo { record_id, .. } => {
                self.state.records.get(record_id).map(|r| r.image_key()).into_iter().collect()
            }
            e => e.records().iter().map(|r| r.image_key()).collect(),
        };
        self.state.apply_event(&event)?;
        let line = serde_json::to_string(&event)? + "\n";
        let appended = OpenOptions::new()
            .append(true)
            .create(true)
            .open(self.root.join(LOG_FILE))
            .and_then(|mut f| f.write_all(line.as_bytes()).and_then(|_| f.sync_data()));
        if let Err(e) = appended {
            self.state = replay(&self.log)?;
            return Err(e.into());
        }
        self.log.events.push(event);
        for key in touched {
            self.sync_image(&key)?;
        }
        Ok(())
    }

    fn write_version(&self, key: &ImageKey, n: usize, mask: &SegmentationMask) -> Result<bool, StoreError> {
        let bin = encode_bin(mask);
        let path = self.version_path(&key.0, key.1, n, ".bin");
        if fs::read(&path).ok().as_deref() == Some(&bin[..]) {
            return Ok(false);
        }
        write_atomic(&self.version_path(&key.0, key.1, n, ".png"), &encode_indexed_png(mask))?;
        write_atomic(&self.version_path(&key.0, key.1, n, "_vis.png"), &encode_color_png(mask))?;
        write_atomic(&path, &bin)?;
        Ok(true)
    }

    fn sync_image(&self, key: &ImageKey) -> Result<(), StoreError> {
        let versions = self.state.versions.get(key).map_or(&[][..], |v| &v[..]);
        for (n, m) in versions.iter().enumerate() {
            self.write_version(key, n, m)?;
        }
        let dir = self.root.join("masks").join(&key.0).join(key.1.as_str());
        if let Ok(entries) = fs::read_dir(&dir) {
            for e in entries.flatten() {
                let name = e.file_name().to_string_lossy().into_owned();
                let n = name.strip_prefix('v').and_then(|s| {
                    s.split(|c: char| !c.is_ascii_digit()).next().and_then(|d| d.parse::<usize>().ok())
                });
                if matches!(n, Some(n) if n >= versions.len()) {
                    fs::remove_file(e.path())?;
                }
            }
        }
        Ok(())
    }

    /// Rewrites any mask cache file that differs from the replayed state and
    /// removes versions the log no longer contains.
    pub fn sync_cache(&self) -> Result<(), StoreError> {
        let mut keys: Vec<ImageKey> = self.state.versions.keys().cloned().collect();
        let masks = self.root.join("masks");
        if let Ok(sites) = fs::read_dir(&masks) {
            for s in sites.flatten() {
                for f in fs::read_dir(s.path()).into_iter().flatten().flatten() {
                    let site = s.file_name().to_string_lossy().into_owned();
                    if let Ok(face) = f.file_name().to_string_lossy().parse::<Face>() {
                        keys.push((site, face));
                    }
                }
            }
        }
        keys.sort();
        keys.dedup();
        for k in &keys {
            self.sync_image(k)?;
        }
        Ok(())
    }

    /// Replays the log from scratch and compares every version with the
    /// cached `.bin` file. Returns the paths that differ or are missing.
    pub fn verify_cache(&self) -> Result<Vec<PathBuf>, StoreError> {
        let fresh = replay(&SessionLog::from_jsonl(&fs::read_to_string(self.root.join(LOG_FILE))?)?)?;
        let mut bad = Vec::new();
        for (key, versions) in &fresh.versions {
            for (n, m) in versions.iter().enumerate() {
                let p = self.version_path(&key.0, key.1, n, ".bin");
                if fs::read(&p).ok() != Some(encode_bin(m)) {
                    bad.push(p);
                }
            }
        }
        Ok(bad)
    }

    pub fn prediction(&self, site: &str, face: Face) -> Result<Option<SegmentationMask>, StoreError> {
        match fs::read(self.face_path("predictions", site, face, "bin")) {
            Ok(b) => Ok(Some(decode_bin(&b)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// The working mask of an image: its latest version, else its prediction.
    pub fn current_mask(&self, site: &str, face: Face) -> Result<Option<SegmentationMask>, StoreError> {
        match self.state.current(&(site.to_string(), face)) {
            Some(m) => Ok(Some(m.clone())),
            None => self.prediction(site, face),
        }
    }

    /// The mask an image starts from on its first edit: the prediction, or
    /// all background when there is none.
    pub(crate) fn base_mask(&self, site: &str, face: Face, width: u32, height: u32) -> Result<SegmentationMask, StoreError> {
        match self.prediction(site, face)? {
            Some(p) if p.same_dims(width, height) => Ok(p),
            _ => Ok(SegmentationMask::filled(width, height, ClassId::BACKGROUND)?),
        }
    }

    pub(crate) fn base_event(&self, site: &str, face: Face, mask: &SegmentationMask) -> Option<BaseMask> {
        let key = (site.to_string(), face);
        (!self.state.versions.contains_key(&key))
            .then(|| BaseMask { site_id: site.to_string(), face, mask: MaskSnapshot::of(mask) })
    }
}

#[cfg(test)]
mod tests;
