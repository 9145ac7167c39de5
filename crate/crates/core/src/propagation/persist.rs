//! SEGI index files: magic, version, manifest digest and build parameters,
//! the train-hash set, then the candidate table. All integers and floats
//! are little-endian.

use std::collections::BTreeSet;

use super::descriptor::{RegionDescriptor, EMBED_LEN, HSV_BINS, LBP_BINS};
use super::index::{CandidateRegion, IndexParams, PropagationIndex};
use super::PropagationError;
use crate::mask::rle::Run;
use crate::mask::{Digest, Face, RegionSelection};
use crate::region::Connectivity;

pub const INDEX_MAGIC: &[u8; 4] = b"SEGI";
const INDEX_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_index(index: &PropagationIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    put_u32(&mut out, INDEX_VERSION);
    out.extend_from_slice(&index.manifest_digest.0);
    put_u32(&mut out, index.params.grid);
    out.extend_from_slice(&index.params.tolerance.to_le_bytes());
    out.push(match index.params.connectivity {
        Connectivity::Four => 4,
        Connectivity::Eight => 8,
    });
    put_u32(&mut out, index.train_hashes.len() as u32);
    for h in &index.train_hashes {
        out.extend_from_slice(&h.0);
    }
    put_u32(&mut out, index.candidates.len() as u32);
    for c in &index.candidates {
        put_u32(&mut out, c.site_id.len() as u32);
        out.extend_from_slice(c.site_id.as_bytes());
        out.push(c.face.code());
        out.extend_from_slice(&c.image_hash.0);
        put_u32(&mut out, c.selection.width());
        put_u32(&mut out, c.selection.height());
        let runs = c.selection.to_runs();
        put_u32(&mut out, runs.len() as u32);
        for r in runs {
            put_u32(&mut out, r.start);
            put_u32(&mut out, r.len);
        }
        out.push(c.descriptor.embedding.is_some() as u8);
        put_f32s(&mut out, &c.descriptor.hsv_hist);
        put_f32s(&mut out, &c.descriptor.lbp_hist);
        if let Some(e) = &c.descriptor.embedding {
            put_f32s(&mut out, e);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PropagationError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| PropagationError::Format(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PropagationError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PropagationError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn digest(&mut self) -> Result<Digest, PropagationError> {
        Ok(Digest(self.take(32)?.try_into().expect("32 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, PropagationError> {
        let raw = self.take(4 * n)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<PropagationIndex, PropagationError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != INDEX_MAGIC {
        return Err(PropagationError::Format("bad magic, expected SEGI".into()));
    }
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(PropagationError::Format(format!("unsupported version {version}")));
    }
    let manifest_digest = r.digest()?;
    let grid = r.u32()?;
    let tolerance = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let connectivity = match r.u8()? {
        4 => Connectivity::Four,
        8 => Connectivity::Eight,
        c => return Err(PropagationError::Format(format!("connectivity {c}"))),
    };
    let n_train = r.u32()?;
    let mut train_hashes = BTreeSet::new();
    for _ in 0..n_train {
        train_hashes.insert(r.digest()?);
    }
    let n_cand = r.u32()?;
    let mut candidates = Vec::new();
    for _ in 0..n_cand {
        let len = r.u32()? as usize;
        let site_id = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| PropagationError::Format("site id is not UTF-8".into()))?;
        let code = r.u8()?;
        let face = Face::from_code(code).ok_or_else(|| PropagationError::Format(format!("face code {code}")))?;
        let image_hash = r.digest()?;
        let (w, h) = (r.u32()?, r.u32()?);
        let n_runs = r.u32()?;
        let mut runs = Vec::new();
        for _ in 0..n_runs {
            runs.push(Run { start: r.u32()?, len: r.u32()? });
        }
        let selection = RegionSelection::from_runs(w, h, &runs)?;
        let has_emb = r.u8()? != 0;
        let hsv_hist = r.f32s(HSV_BINS)?;
        let lbp_hist = r.f32s(LBP_BINS)?;
        let embedding = if has_emb { Some(r.f32s(EMBED_LEN)?) } else { None };
        candidates.push(CandidateRegion {
            site_id,
            face,
            image_hash,
            selection,
            descriptor: RegionDescriptor { hsv_hist, lbp_hist, embedding },
        });
    }
    if r.at != bytes.len() {
        return Err(PropagationError::Format("trailing bytes".into()));
    }
    Ok(PropagationIndex { manifest_digest, params: IndexParams { grid, tolerance, connectivity }, train_hashes, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::ToyBackboneParams;
    use crate::mask::{content_hash, ImageRaster, Split};
    use crate::propagation::index::tests::manifest_with;
    use crate::propagation::{build_index, IndexImage};

    #[test]
    fn round_trip() {
        let img = ImageRaster::from_fn(16, 16, |x, y| [(x * 15) as u8, (y * 15) as u8, 99]).unwrap();
        let h = content_hash(b"p");
        let m = manifest_with(&[("p", Split::Train, h)]);
        let offer = [IndexImage { site_id: "p".into(), face: Face::Flat, hash: h, image: &img }];
        for model in [None, Some(ToyBackboneParams::init(2))] {
            let idx = build_index(&m, &offer, IndexParams::default(), model.as_ref()).unwrap();
            assert!(!idx.candidates.is_empty());
            let bytes = encode_index(&idx);
            assert_eq!(decode_index(&bytes).unwrap(), idx);
            assert!(decode_index(&bytes[..bytes.len() - 1]).is_err());
        }
        assert!(decode_index(b"SEGBxxxx").is_err());
    }
}
