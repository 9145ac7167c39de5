//! Site-level dataset manifest with per-face content digests.
//!
//! Every face of a site shares the site's split, and each face image is
//! hashed from its stored bytes before any features are extracted from it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{Face, MaskError};

/// 256-bit SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Digest, MaskError> {
        let bytes = hex::decode(s).map_err(|e| MaskError::Manifest(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| MaskError::Manifest("digest must be 32 bytes".into()))?;
        Ok(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn content_hash(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteEntry {
    pub site_id: String,
    pub split: Split,
    /// Image path per face, relative to the store root.
    pub faces: BTreeMap<Face, String>,
    #[serde(default)]
    pub hashes: BTreeMap<Face, Digest>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sites: Vec<SiteEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingImage,
    MissingHash,
    HashMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestViolation {
    pub site_id: String,
    pub face: Face,
    pub kind: ViolationKind,
}

pub fn default_face_path(site_id: &str, face: Face) -> String {
    format!("images/{site_id}/{face}.png")
}

/// Seeded site-level split. Val and test get `floor(n * ratio)` sites, the
/// remainder goes to train.
pub fn split_sites(
    site_ids: &[String],
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<DatasetManifest, MaskError> {
    if site_ids.len() < 3 {
        return Err(MaskError::TooFewSites(site_ids.len()));
    }
    let (tr, va, te) = ratios;
    if tr < 0.0 || va < 0.0 || te < 0.0 || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(MaskError::BadRatios);
    }
    let n = site_ids.len();
    let n_val = (n as f64 * va + 1e-9).floor() as usize;
    let n_test = (n as f64 * te + 1e-9).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Train; n];
    for &i in &order[..n_val] {
        split[i] = Split::Val;
    }
    for &i in &order[n_val..n_val + n_test] {
        split[i] = Split::Test;
    }

    let sites = site_ids
        .iter()
        .zip(split)
        .map(|(id, split)| SiteEntry {
            site_id: id.clone(),
            split,
            faces: Face::CUBEMAP.iter().map(|&f| (f, default_face_path(id, f))).collect(),
            hashes: BTreeMap::new(),
        })
        .collect();
    Ok(DatasetManifest { sites })
}

impl DatasetManifest {
    pub fn site(&self, site_id: &str) -> Option<&SiteEntry> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }

    pub fn split_of(&self, site_id: &str) -> Option<Split> {
        self.site(site_id).map(|s| s.split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.sites.iter().filter(|s| s.split == split).count()
    }

    pub fn hashes_in(&self, split: Split) -> impl Iterator<Item = Digest> + '_ {
        self.sites.iter().filter(move |s| s.split == split).flat_map(|s| s.hashes.values().copied())
    }

    /// Which split a content digest belongs to, if any.
    pub fn split_of_hash(&self, digest: &Digest) -> Option<Split> {
        self.sites
            .iter()
            .find(|s| s.hashes.values().any(|h| h == digest))
            .map(|s| s.split)
    }

    /// Hash every face image under `root` and store the digests.
    pub fn record_hashes(&mut self, root: &Path) -> Result<(), MaskError> {
        for site in &mut self.sites {
            for (face, rel) in &site.faces {
                let bytes = std::fs::read(root.join(rel))?;
                site.hashes.insert(*face, content_hash(&bytes));
            }
        }
        Ok(())
    }

    /// Digest of the manifest's canonical JSON encoding.
    pub fn digest(&self) -> Digest {
        content_hash(&serde_json::to_vec(self).expect("manifest serializes"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MaskError> {
        serde_json::from_str(s).map_err(|e| MaskError::Manifest(e.to_string()))
    }
}

/// Recompute every face digest from the store and report discrepancies.
pub fn verify_manifest(manifest: &DatasetManifest, root: &Path) -> Result<(), Vec<ManifestViolation>> {
    let mut violations = Vec::new();
    for site in &manifest.sites {
        for (face, rel) in &site.faces {
            let violation = |kind| ManifestViolation { site_id: site.site_id.clone(), face: *face, kind };
            let Ok(bytes) = std::fs::read(root.join(rel)) else {
                violations.push(violation(ViolationKind::MissingImage));
                continue;
            };
            match site.hashes.get(face) {
                None => violations.push(violation(ViolationKind::MissingHash)),
                Some(h) if *h != content_hash(&bytes) => {
                    violations.push(violation(ViolationKind::HashMismatch))
                }
                Some(_) => {}
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("site{i:03}")).collect()
    }

    const RATIOS: (f64, f64, f64) = (0.70, 0.10, 0.20);

    #[test]
    fn eighty_sites() {
        let m = split_sites(&ids(80), 1, RATIOS).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (56, 8, 16));
    }

    #[test]
    fn ten_sites_floor_allocation() {
        let m = split_sites(&ids(10), 1, RATIOS).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (7, 1, 2));
    }

    #[test]
    fn deterministic_and_partitioning() {
        let a = split_sites(&ids(37), 9, RATIOS).unwrap();
        assert_eq!(a, split_sites(&ids(37), 9, RATIOS).unwrap());
        let seen: HashSet<_> = a.sites.iter().map(|s| s.site_id.clone()).collect();
        assert_eq!(seen, ids(37).into_iter().collect());
        assert!(a.sites.iter().all(|s| s.faces.len() == 6));
        assert_ne!(a, split_sites(&ids(37), 10, RATIOS).unwrap());
    }

    #[test]
    fn too_few_sites() {
        assert!(matches!(split_sites(&ids(2), 0, RATIOS), Err(MaskError::TooFewSites(2))));
        assert!(matches!(split_sites(&ids(5), 0, (0.5, 0.5, 0.5)), Err(MaskError::BadRatios)));
    }

    #[test]
    fn verify_detects_tamper_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = split_sites(&ids(3), 0, RATIOS).unwrap();
        for s in &m.sites {
            for rel in s.faces.values() {
                let p = dir.path().join(rel);
                std::fs::create_dir_all(p.parent().unwrap()).unwrap();
                std::fs::write(&p, rel.as_bytes()).unwrap();
            }
        }
        m.record_hashes(dir.path()).unwrap();
        assert_eq!(verify_manifest(&m, dir.path()), Ok(()));

        let target = dir.path().join(&m.sites[1].faces[&Face::East]);
        let mut bytes = std::fs::read(&target).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&target, bytes).unwrap();
        let v = verify_manifest(&m, dir.path()).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].site_id, m.sites[1].site_id);
        assert_eq!(v[0].face, Face::East);
        assert_eq!(v[0].kind, ViolationKind::HashMismatch);

        std::fs::remove_file(dir.path().join(&m.sites[2].faces[&Face::Up])).unwrap();
        let v = verify_manifest(&m, dir.path()).unwrap_err();
        assert!(v.iter().any(|x| x.kind == ViolationKind::MissingImage && x.face == Face::Up));
    }

    #[test]
    fn json_shape() {
        let m = split_sites(&ids(3), 0, RATIOS).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert!(v["sites"][0]["faces"]["up"].is_string());
        assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
    }
}
