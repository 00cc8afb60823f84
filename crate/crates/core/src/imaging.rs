//! Screenshot processing: Sobel row profiles, blank-band slimming,
//! full-page segmentation and model-side resizing.

use std::io::Cursor;

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageFormat, RgbaImage};

use crate::exec::Execution;
use crate::model::{ImageAsset, ImageKind, ResizeMode};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("cannot read image {id}: {source}")]
    Io { id: String, source: std::io::Error },
    #[error("cannot decode image {id}: {message}")]
    Decode { id: String, message: String },
    #[error("cannot encode image: {0}")]
    Encode(String),
}

/// Mean Sobel gradient magnitude of every row, in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProfile(pub Vec<f64>);

impl GradientProfile {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn decode(asset: &ImageAsset) -> Result<DynamicImage, ImagingError> {
    let bytes = asset.encoded().map_err(|source| ImagingError::Io { id: asset.id.clone(), source })?;
    image::load_from_memory(&bytes).map_err(|e| ImagingError::Decode { id: asset.id.clone(), message: e.to_string() })
}

pub fn encode_png(image: &RgbaImage) -> Result<Vec<u8>, ImagingError> {
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png).map_err(|e| ImagingError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn asset_from_rgba(id: impl Into<String>, kind: ImageKind, image: &RgbaImage) -> Result<ImageAsset, ImagingError> {
    Ok(ImageAsset::from_bytes(id, kind, image.width(), image.height(), encode_png(image)?))
}

/// Wraps encoded image bytes, reading the dimensions from the header.
pub fn asset_from_encoded(id: impl Into<String>, kind: ImageKind, bytes: Vec<u8>) -> Result<ImageAsset, ImagingError> {
    let id = id.into();
    let (width, height) = image::ImageReader::new(Cursor::new(&bytes))
        .with_guessed_format()
        .map_err(|source| ImagingError::Io { id: id.clone(), source })?
        .into_dimensions()
        .map_err(|e| ImagingError::Decode { id: id.clone(), message: e.to_string() })?;
    Ok(ImageAsset::from_bytes(id, kind, width, height, bytes))
}

/// Mean gradient magnitude of one row. Borders replicate the edge pixels.
fn row_gradient(gray: &GrayImage, y: u32) -> f64 {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let raw = gray.as_raw();
    let row = |r: usize| &raw[r * w..(r + 1) * w];
    let y = y as usize;
    let (up, mid, down) = (row(y.saturating_sub(1)), row(y), row((y + 1).min(h - 1)));
    let mut sum = 0.0;
    for x in 0..w {
        let (l, r) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let p = |row: &[u8], i: usize| row[i] as i32;
        let gx = (p(up, r) + 2 * p(mid, r) + p(down, r)) - (p(up, l) + 2 * p(mid, l) + p(down, l));
        let gy = (p(down, l) + 2 * p(down, x) + p(down, r)) - (p(up, l) + 2 * p(up, x) + p(up, r));
        sum += ((gx * gx + gy * gy) as f64).sqrt().min(255.0);
    }
    sum / w as f64
}

pub fn gray_profile(gray: &GrayImage, exec: Execution) -> GradientProfile {
    if gray.width() == 0 {
        return GradientProfile(vec![0.0; gray.height() as usize]);
    }
    GradientProfile(exec.map_range(gray.height() as usize, |y| row_gradient(gray, y as u32)))
}

/// Per-row mean Sobel magnitude of the image's grayscale rendition.
pub fn gradient_magnitude(asset: &ImageAsset) -> Result<GradientProfile, ImagingError> {
    Ok(gray_profile(&decode(asset)?.to_luma8(), Execution::default()))
}

/// Maximal runs of rows below `threshold` that are at least `min_band` tall.
pub fn blank_bands(profile: &GradientProfile, threshold: f64, min_band: usize) -> Vec<std::ops::Range<usize>> {
    let mut bands = Vec::new();
    let mut start = None;
    for (i, &v) in profile.0.iter().chain(std::iter::once(&f64::INFINITY)).enumerate() {
        match (v < threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_band {
                    bands.push(s..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    bands
}

fn gather_rows(gray: &GrayImage, rows: &[usize]) -> GrayImage {
    let w = gray.width() as usize;
    let mut buf = Vec::with_capacity(w * rows.len());
    for &r in rows {
        buf.extend_from_slice(&gray.as_raw()[r * w..(r + 1) * w]);
    }
    GrayImage::from_raw(gray.width(), rows.len() as u32, buf).expect("row buffer matches dimensions")
}

/// Source rows that survive slimming, in order.
///
/// Each pass removes the interior of every blank band and keeps the band's
/// first and last rows, so every surviving non-band row keeps its original
/// 3x3 neighbourhood. Passes repeat until no band qualifies.
pub fn slim_rows(gray: &GrayImage, threshold: f64, min_band: usize, exec: Execution) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..gray.height() as usize).collect();
    let min_band = min_band.max(3);
    loop {
        let current = if kept.len() == gray.height() as usize { gray.clone() } else { gather_rows(gray, &kept) };
        let bands = blank_bands(&gray_profile(&current, exec), threshold, min_band);
        if bands.is_empty() {
            return kept;
        }
        let mut drop = vec![false; kept.len()];
        for band in bands {
            for flag in &mut drop[band.start + 1..band.end - 1] {
                *flag = true;
            }
        }
        kept = kept.into_iter().zip(drop).filter(|(_, d)| !d).map(|(r, _)| r).collect();
    }
}

/// Removes blank horizontal bands. Returns the input untouched when nothing
/// qualifies; a fully blank page shrinks to a two-row stub.
pub fn slim_screenshot(asset: &ImageAsset, threshold: f64, min_band: usize) -> Result<ImageAsset, ImagingError> {
    slim_screenshot_with(asset, threshold, min_band, Execution::default())
}

pub fn slim_screenshot_with(
    asset: &ImageAsset,
    threshold: f64,
    min_band: usize,
    exec: Execution,
) -> Result<ImageAsset, ImagingError> {
    let decoded = decode(asset)?;
    let rows = slim_rows(&decoded.to_luma8(), threshold, min_band, exec);
    if rows.len() == decoded.height() as usize {
        return Ok(asset.clone());
    }
    let rgba = decoded.to_rgba8();
    let stride = rgba.width() as usize * 4;
    let mut buf = Vec::with_capacity(stride * rows.len());
    for &r in &rows {
        buf.extend_from_slice(&rgba.as_raw()[r * stride..(r + 1) * stride]);
    }
    let out = RgbaImage::from_raw(rgba.width(), rows.len() as u32, buf).expect("row buffer matches dimensions");
    asset_from_rgba(asset.id.clone(), asset.kind, &out)
}

/// Top-down slices of `segment_height` rows (the last may be shorter), at most
/// `max_segments` of them; content below the cap is dropped.
pub fn segment_fullpage(
    asset: &ImageAsset,
    segment_height: u32,
    max_segments: usize,
) -> Result<Vec<ImageAsset>, ImagingError> {
    let rgba = decode(asset)?.to_rgba8();
    segment_rgba(&rgba, segment_height, max_segments)
        .into_iter()
        .enumerate()
        .map(|(i, seg)| asset_from_rgba(format!("{}-seg{}", asset.id, i), ImageKind::FullpageSegment, &seg))
        .collect()
}

pub fn segment_rgba(image: &RgbaImage, segment_height: u32, max_segments: usize) -> Vec<RgbaImage> {
    let h = image.height();
    let count = (h.div_ceil(segment_height) as usize).min(max_segments);
    (0..count)
        .map(|i| {
            let top = i as u32 * segment_height;
            let height = segment_height.min(h - top);
            image::imageops::crop_imm(image, 0, top, image.width(), height).to_image()
        })
        .collect()
}

/// Target dimensions when scaling the longest edge to `max_edge`.
pub fn scaled_dimensions(width: u32, height: u32, max_edge: u32) -> (u32, u32) {
    let scale = |short: u32, long: u32| ((short as f64 * max_edge as f64 / long as f64).round() as u32).max(1);
    if width >= height {
        (max_edge, scale(height, width))
    } else {
        (scale(width, height), max_edge)
    }
}

/// `LowRes` scales (up or down) so the longest edge equals `max_edge`;
/// `AnyRes` returns the image unchanged.
pub fn resize_for_model(asset: &ImageAsset, mode: ResizeMode, max_edge: u32) -> Result<ImageAsset, ImagingError> {
    if mode == ResizeMode::AnyRes {
        return Ok(asset.clone());
    }
    let (w, h) = scaled_dimensions(asset.width, asset.height, max_edge);
    if (w, h) == (asset.width, asset.height) {
        return Ok(asset.clone());
    }
    let decoded = decode(asset)?;
    let resized = decoded.resize_exact(w, h, FilterType::Triangle).to_rgba8();
    asset_from_rgba(asset.id.clone(), asset.kind, &resized)
}

/// Forces an image to exact dimensions (used for top-section captures).
pub fn fit_exact(asset: &ImageAsset, width: u32, height: u32) -> Result<ImageAsset, ImagingError> {
    if (asset.width, asset.height) == (width, height) {
        return Ok(asset.clone());
    }
    let decoded = decode(asset)?;
    let resized = decoded.resize_exact(width, height, FilterType::Triangle).to_rgba8();
    asset_from_rgba(asset.id.clone(), asset.kind, &resized)
}
