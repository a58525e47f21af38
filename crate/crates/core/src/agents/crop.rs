use super::AgentError;
use crate::model::{box_area_fraction, CropRegion, ImageRef, NormalizedBox};

/// Boxes smaller than this fraction of the image are treated as points.
pub const DEGENERATE_AREA: f64 = 1e-8;

/// Square crop around `bbox`, padded symmetrically on its shorter side and
/// shifted (or clipped) to stay inside `image`.
///
/// The returned reference points at the same source with a pixel region; its
/// id is derived from the parent id and the region, so equal inputs give equal
/// outputs.
pub fn crop_ref(image: &ImageRef, bbox: &NormalizedBox) -> Result<ImageRef, AgentError> {
    if box_area_fraction(bbox) < DEGENERATE_AREA {
        return Err(AgentError::DegenerateBox(bbox.coords()));
    }
    let (img_w, img_h) = (image.width, image.height);
    let [x1, y1, x2, y2] = bbox.to_pixels(image);
    let side = (x2 - x1).max(y2 - y1);
    let crop_w = (side.round() as u32).clamp(1, img_w);
    let crop_h = (side.round() as u32).clamp(1, img_h);

    let (cx, cy) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
    let x = place(cx, crop_w, img_w);
    let y = place(cy, crop_h, img_h);

    let (off_x, off_y) = image.region.map_or((0, 0), |r| (r.x, r.y));
    let region = CropRegion {
        x: off_x + x,
        y: off_y + y,
        width: crop_w,
        height: crop_h,
    };
    Ok(ImageRef {
        id: format!(
            "{}@{},{},{}x{}",
            image.id, region.x, region.y, region.width, region.height
        ),
        width: crop_w,
        height: crop_h,
        source: image.source.clone(),
        region: Some(region),
    })
}

/// Left/top edge of a span of `len` centered on `center`, kept inside `[0, limit]`.
fn place(center: f64, len: u32, limit: u32) -> u32 {
    let start = (center - len as f64 / 2.0).round();
    start.clamp(0.0, (limit - len) as f64) as u32
}
