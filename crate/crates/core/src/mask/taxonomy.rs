use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of classes in the taxonomy.
pub const NUM_CLASSES: usize = 7;

pub type Rgb = [u8; 3];

/// A validated class id in `0..7`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClassId(u8);

impl ClassId {
    pub const BACKGROUND: ClassId = ClassId(0);
    pub const SKY: ClassId = ClassId(1);
    pub const TREES: ClassId = ClassId(2);
    pub const BUILDINGS: ClassId = ClassId(3);
    pub const IMPERVIOUS: ClassId = ClassId(4);
    pub const PERVIOUS: ClassId = ClassId(5);
    pub const NON_PERMANENT: ClassId = ClassId(6);

    pub fn new(id: u8) -> Option<ClassId> {
        ((id as usize) < NUM_CLASSES).then_some(ClassId(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..NUM_CLASSES as u8).map(ClassId)
    }

    pub fn name(self) -> &'static str {
        ClassTaxonomy::standard().entries[self.index()].name
    }
}

impl TryFrom<u8> for ClassId {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        ClassId::new(v).ok_or_else(|| format!("class id {v} out of range 0..{NUM_CLASSES}"))
    }
}

impl From<ClassId> for u8 {
    fn from(c: ClassId) -> u8 {
        c.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaxonomyEntry {
    pub id: ClassId,
    pub name: &'static str,
    pub color: Rgb,
}

/// The fixed 7-class taxonomy with its visualization palette.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTaxonomy {
    pub entries: [TaxonomyEntry; NUM_CLASSES],
}

const STANDARD: ClassTaxonomy = ClassTaxonomy {
    entries: [
        TaxonomyEntry { id: ClassId(0), name: "background", color: [0, 0, 0] },
        TaxonomyEntry { id: ClassId(1), name: "sky", color: [70, 130, 180] },
        TaxonomyEntry { id: ClassId(2), name: "trees/plants", color: [107, 142, 35] },
        TaxonomyEntry { id: ClassId(3), name: "buildings", color: [70, 70, 70] },
        TaxonomyEntry { id: ClassId(4), name: "impervious surfaces", color: [128, 64, 128] },
        TaxonomyEntry { id: ClassId(5), name: "pervious surfaces", color: [152, 251, 152] },
        TaxonomyEntry { id: ClassId(6), name: "non-permanent objects", color: [0, 0, 142] },
    ],
};

impl ClassTaxonomy {
    pub fn standard() -> &'static ClassTaxonomy {
        &STANDARD
    }

    pub fn color(&self, class: ClassId) -> Rgb {
        self.entries[class.index()].color
    }

    /// Palette bytes in class order, as written into indexed PNGs.
    pub fn palette(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|e| e.color).collect()
    }

    pub fn by_name(&self, name: &str) -> Option<ClassId> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.id)
    }
}
