//! Domain types shared by every stage: the 7-class taxonomy, image and mask
//! rasters, selections, correction records, mask codecs and the site-level
//! dataset manifest.

mod codec;
mod error;
mod manifest;
mod probs;
mod raster;
mod record;
pub mod rle;
mod selection;
mod taxonomy;

pub use codec::{
    colorize, decode_bin, decode_indexed_png, decode_rgb_png, encode_bin, encode_color_png,
    encode_indexed_png, encode_rgb_png, BIN_HEADER_LEN, BIN_MAGIC, BIN_VERSION,
};
pub use error::MaskError;
pub use manifest::{
    content_hash, split_sites, verify_manifest, DatasetManifest, Digest, ManifestViolation,
    SiteEntry, Split, ViolationKind,
};
pub use probs::{argmax_mask, softmax};
pub use raster::{ImageRaster, LogitMap, ProbabilityMap, SegmentationMask};
pub use record::{
    CorrectionRecord, CounterfactualTriple, Face, InterventionType, Provenance,
};
pub use selection::RegionSelection;
pub use taxonomy::{ClassId, ClassTaxonomy, Rgb, NUM_CLASSES};
