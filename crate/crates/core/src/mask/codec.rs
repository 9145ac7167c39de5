//! Mask and image codecs: the SEGB binary layout, palette PNGs, colorized
//! visualizations and plain RGB PNGs.

use std::io::Cursor;

use super::{ClassId, ClassTaxonomy, ImageRaster, MaskError, SegmentationMask, NUM_CLASSES};

pub const BIN_MAGIC: &[u8; 4] = b"SEGB";
pub const BIN_VERSION: u32 = 1;
pub const BIN_HEADER_LEN: usize = 16;

/// SEGB: 16-byte little-endian header (magic, version, width, height) then
/// one label byte per pixel, row-major.
pub fn encode_bin(mask: &SegmentationMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(BIN_HEADER_LEN + mask.len());
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&mask.width().to_le_bytes());
    out.extend_from_slice(&mask.height().to_le_bytes());
    out.extend_from_slice(mask.labels());
    out
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_bin(bytes: &[u8]) -> Result<SegmentationMask, MaskError> {
    if bytes.len() < 4 || &bytes[..4] != BIN_MAGIC {
        return Err(MaskError::BadMagic { expected: "SEGB" });
    }
    if bytes.len() < BIN_HEADER_LEN {
        return Err(MaskError::TruncatedPayload { expected: BIN_HEADER_LEN, actual: bytes.len() });
    }
    let version = read_u32(bytes, 4);
    if version != BIN_VERSION {
        return Err(MaskError::UnsupportedVersion(version));
    }
    let (width, height) = (read_u32(bytes, 8), read_u32(bytes, 12));
    let expected = BIN_HEADER_LEN + width as usize * height as usize;
    if bytes.len() != expected {
        return Err(MaskError::TruncatedPayload { expected, actual: bytes.len() });
    }
    SegmentationMask::new(width, height, bytes[BIN_HEADER_LEN..].to_vec())
}

/// 8-bit palette PNG whose pixel values are class ids.
pub fn encode_indexed_png(mask: &SegmentationMask) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, mask.width(), mask.height());
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(ClassTaxonomy::standard().palette());
        let mut w = enc.write_header().expect("in-memory png header");
        w.write_image_data(mask.labels()).expect("in-memory png data");
    }
    out
}

fn read_png(bytes: &[u8]) -> Result<(png::OutputInfo, Vec<u8>, Option<png::ColorType>), MaskError> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info()?;
    let color = Some(reader.info().color_type);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| MaskError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok((info, buf, color))
}

pub fn decode_indexed_png(bytes: &[u8]) -> Result<SegmentationMask, MaskError> {
    let (info, buf, _) = read_png(bytes)?;
    if info.color_type != png::ColorType::Indexed {
        return Err(MaskError::WrongColorType(format!("{:?}", info.color_type)));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(MaskError::WrongBitDepth(info.bit_depth as u8));
    }
    if let Some(&bad) = buf.iter().find(|&&v| v as usize >= NUM_CLASSES) {
        return Err(MaskError::PaletteIndexOutOfRange(bad));
    }
    SegmentationMask::new(info.width, info.height, buf)
}

/// Map each label to its taxonomy color.
pub fn colorize(mask: &SegmentationMask) -> ImageRaster {
    let tax = ClassTaxonomy::standard();
    let pixels = mask.labels().iter().flat_map(|&l| tax.color(ClassId::new(l).expect("label"))).collect();
    ImageRaster::new(mask.width(), mask.height(), pixels).expect("same dims")
}

pub fn encode_rgb_png(image: &ImageRaster) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width(), image.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory png header");
        w.write_image_data(image.as_bytes()).expect("in-memory png data");
    }
    out
}

/// Colorized visualization of a mask as a truecolor PNG.
pub fn encode_color_png(mask: &SegmentationMask) -> Vec<u8> {
    encode_rgb_png(&colorize(mask))
}

/// Decodes 8-bit RGB, RGBA, gray or palette PNGs into an RGB raster.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<ImageRaster, MaskError> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| MaskError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => return Err(MaskError::WrongColorType(format!("{other:?}"))),
    };
    ImageRaster::new(info.width, info.height, rgb)
}
