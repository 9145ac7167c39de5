use serde::{Deserialize, Serialize};

use super::rle::{self, Run};
use super::MaskError;

/// A pixel subset of an image, one bit per pixel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RegionSelection {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl std::fmt::Debug for RegionSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegionSelection")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl RegionSelection {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        RegionSelection { width, height, words: vec![0; n.div_ceil(64)] }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let mut s = Self::empty(width, height);
        for i in 0..s.len() {
            s.insert(i);
        }
        s
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut s = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    s.insert(y as usize * width as usize + x as usize);
                }
            }
        }
        s
    }

    pub fn from_indices(width: u32, height: u32, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(width, height);
        for i in idx {
            s.insert(i);
        }
        s
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of pixels in the host image.
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn contains_xy(&self, x: u32, y: u32) -> bool {
        self.contains(y as usize * self.width as usize + x as usize)
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    /// Popcount.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn same_shape(&self, other: &RegionSelection) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_subset(&self, other: &RegionSelection) -> bool {
        self.same_shape(other) && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn intersects(&self, other: &RegionSelection) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn union_with(&mut self, other: &RegionSelection) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersection_count(&self, other: &RegionSelection) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    pub fn union_count(&self, other: &RegionSelection) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    pub fn complement(&self) -> RegionSelection {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.clear_tail();
        out
    }

    fn clear_tail(&mut self) {
        let n = self.len();
        if n % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
    }

    pub fn to_runs(&self) -> Vec<Run> {
        rle::runs_from_sorted(self.iter())
    }

    pub fn from_runs(width: u32, height: u32, runs: &[Run]) -> Result<Self, MaskError> {
        let n = width as usize * height as usize;
        let mut s = Self::empty(width, height);
        for r in runs {
            let end = r.start as usize + r.len as usize;
            if end > n {
                return Err(MaskError::DimensionMismatch(format!(
                    "run {}+{} exceeds {} pixels",
                    r.start, r.len, n
                )));
            }
            for i in r.start as usize..end {
                s.insert(i);
            }
        }
        Ok(s)
    }
}

/// Wire form of a selection: run-length encoded row-major indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRle {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<Run>,
}

impl From<&RegionSelection> for SelectionRle {
    fn from(s: &RegionSelection) -> Self {
        SelectionRle { width: s.width, height: s.height, runs: s.to_runs() }
    }
}

impl TryFrom<SelectionRle> for RegionSelection {
    type Error = MaskError;

    fn try_from(r: SelectionRle) -> Result<Self, MaskError> {
        RegionSelection::from_runs(r.width, r.height, &r.runs)
    }
}

impl Serialize for RegionSelection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SelectionRle::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegionSelection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rle = SelectionRle::deserialize(d)?;
        RegionSelection::try_from(rle).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complement_respects_tail() {
        let s = RegionSelection::empty(3, 3);
        assert_eq!(s.complement().count(), 9);
        assert_eq!(RegionSelection::full(10, 7).count(), 70);
    }

    proptest! {
        #[test]
        fn runs_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let w = bits.len() as u32;
            let s = RegionSelection::from_indices(w, 1, bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i));
            let back = RegionSelection::from_runs(w, 1, &s.to_runs()).unwrap();
            prop_assert_eq!(&back, &s);
            let json = serde_json::to_string(&s).unwrap();
            let back: RegionSelection = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
