//! Slice payloads: 8-bit pixels plus an optional run-length contour overlay.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ApiResult, Session};
use crate::annosim::{boundary_2d, extract_slice};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    /// Alternating run lengths over the row-major slice, starting with a
    /// run of 0 (possibly empty).
    pub rle: Vec<u32>,
    pub raster_revision: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicePayload {
    pub axis: usize,
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub revision: u64,
    /// Base64 of `rows * cols` bytes, intensities scaled by the whole
    /// volume's min and max.
    pub pixels: String,
    /// No raster at the current revision: none yet, or it predates the
    /// latest point edit. The overlay is then omitted.
    pub stale: bool,
    pub overlay: Option<Overlay>,
}

/// Min-max scale to 0..=255; a constant range maps to 0.
pub fn normalize_u8(values: &[f32], lo: f32, hi: f32) -> Vec<u8> {
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !(span > 0.0) || !v.is_finite() {
                0
            } else {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        })
        .collect()
}

/// Run-length encode a 0/1 mask, first run counts zeros.
pub fn contour_rle(mask: &[u8]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut cur = 0u8;
    let mut len = 0u32;
    for &m in mask {
        let m = (m != 0) as u8;
        if m == cur {
            len += 1;
        } else {
            runs.push(len);
            cur = m;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[u32]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, &r) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n((i % 2) as u8, r as usize));
    }
    out
}

pub(super) fn build(s: &Session, axis: usize, index: usize, overlay: bool) -> ApiResult<SlicePayload> {
    let (rows, cols, vals) = extract_slice(&s.volume, axis, index)?;
    let (lo, hi) = s.intensity_range;
    let pixels = STANDARD.encode(normalize_u8(&vals, lo, hi));
    let current = s.raster.as_ref().filter(|r| r.revision == s.revision);
    let overlay = match (current, overlay) {
        (Some(r), true) => {
            let (_, _, m) = extract_slice(&r.value, axis, index)?;
            Some(Overlay { rle: contour_rle(&boundary_2d(rows, cols, &m)), raster_revision: r.revision })
        }
        _ => None,
    };
    Ok(SlicePayload {
        axis,
        index,
        rows,
        cols,
        revision: s.revision,
        pixels,
        stale: current.is_none(),
        overlay,
    })
}
