//! Frame manifests, images, box geometry and object-level splits.
//!
//! A manifest is a JSON Lines file with one frame per line:
//!
//! ```text
//! {"class_id":0,"object_id":3,"video_id":21,"video_kind":"rotation_z+","t":1.5,"image":"frames/000123.ppm","bbox":[4.0,6.0,30.0,22.0]}
//! ```
//!
//! Unknown keys are rejected. Image paths are relative to the manifest's directory.

mod bbox;
mod image;
mod manifest;
mod split;


pub use bbox::{interpolate_bbox, square_crop, BBox, SquareCrop};
pub use image::{
    decode_mvim, decode_ppm, encode_mvim, encode_ppm, read_image, write_image, Image, MVIM_F32, MVIM_F64, MVIM_MAGIC,
};
pub use manifest::{load_manifest, parse_manifest, write_manifest, FrameRecord, Manifest, VideoKind};
pub use split::{sample_eval_indices, sample_eval_subset, split_objects, SplitSpec};

use crate::error::Result;

/// Square region around the frame's box at native resolution, snapped to
/// whole pixels.
pub fn extract_square(img: &Image, bbox: BBox) -> Result<Image> {
    let sq = square_crop(bbox, img.width, img.height)?.bbox;
    let side = (sq.w.round() as usize).clamp(1, img.width.min(img.height));
    let x0 = (sq.x.round() as usize).min(img.width - side);
    let y0 = (sq.y.round() as usize).min(img.height - side);
    Ok(img.crop(x0, y0, side, side))
}

/// Read every frame of `manifest` and cut its square object crop.
pub fn load_crops(manifest: &Manifest) -> Result<Vec<Image>> {
    (0..manifest.len())
        .map(|i| extract_square(&read_image(&manifest.image_path(i))?, manifest.record(i).bbox))
        .collect()
}
