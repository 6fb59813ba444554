//! 16-frame square person clips.
//!
//! A clip is anchored at its 9th frame (0-based position 8): the crop window
//! is centered on the anchor-frame box, the same window is cut from all 16
//! frames, and the anchor annotation labels the whole clip.

use std::fs;
use std::path::Path;

use std::cell::RefCell;

use fast_image_resize::images::{Image, ImageRef};
use fast_image_resize::{FilterType, PixelType, ResizeAlg, ResizeOptions, Resizer};
use image::imageops;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{write_frame, FrameStore, IngestError, Track, TrackAnnotation};
use crate::model::{BBox, ClipKey, DamageStatus};

pub const CLIP_LEN: usize = 16;
/// 0-based position of the anchor (9th) frame inside a clip.
pub const ANCHOR_OFFSET: u64 = 8;
pub const DEFAULT_CONTEXT: f64 = 1.5;
pub const DEFAULT_STRIDE: u64 = 8;
pub const MIN_OUT_SIDE: u32 = 8;

const SIDECAR: &str = "clip.json";

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("track {track_id} has no annotation at frame {frame_index}")]
    GapInTrack { track_id: u64, frame_index: u64 },
    #[error("output side {0} is below the minimum of {MIN_OUT_SIDE}")]
    InvalidOutSide(u32),
    #[error("clip directory {0}: {1}")]
    Export(String, String),
    #[error(transparent)]
    Frame(#[from] IngestError),
}

/// Square crop rectangle in source-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropWindow {
    pub x0: u32,
    pub y0: u32,
    pub side: u32,
}

impl CropWindow {
    pub fn center(&self) -> (f64, f64) {
        let half = self.side as f64 / 2.0;
        (self.x0 as f64 + half, self.y0 as f64 + half)
    }

    pub fn fits(&self, frame_w: u32, frame_h: u32) -> bool {
        self.side >= 1
            && self.x0 as u64 + self.side as u64 <= frame_w as u64
            && self.y0 as u64 + self.side as u64 <= frame_h as u64
    }
}

/// A crop window plus whether the frame border forced it off-center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPlacement {
    pub window: CropWindow,
    pub clamped: bool,
}

/// Places a square window around `bbox`.
///
/// The side is `ceil(max(w, h) * context)` capped at the short frame edge;
/// the window is centered on the box and shifted back inside the frame when
/// it would cross a border.
pub fn place_crop_window(bbox: BBox, frame_w: u32, frame_h: u32, context: f64) -> CropPlacement {
    debug_assert!(context >= 1.0, "context ratio must be >= 1");
    // The epsilon keeps exact products like 100 * 1.1 from rounding up a pixel.
    let wanted = (bbox.w.max(bbox.h) as f64 * context - 1e-9).ceil().max(1.0) as u64;
    let limit = frame_w.min(frame_h) as u64;
    let side = wanted.min(limit);
    let (cx, cy) = bbox.center();
    let half = side as f64 / 2.0;
    let place = |center: f64, dim: u32| -> (u32, bool) {
        let ideal = (center - half).round();
        let max = (dim as u64 - side) as f64;
        let clamped = ideal.clamp(0.0, max);
        (clamped as u32, clamped != ideal)
    };
    let (x0, cx_clamped) = place(cx, frame_w);
    let (y0, cy_clamped) = place(cy, frame_h);
    CropPlacement {
        window: CropWindow {
            x0,
            y0,
            side: side as u32,
        },
        clamped: side < wanted || cx_clamped || cy_clamped,
    }
}

pub fn compute_crop_window(bbox: BBox, frame_w: u32, frame_h: u32, context: f64) -> CropWindow {
    place_crop_window(bbox, frame_w, frame_h, context).window
}

/// Anchors whose full 16-frame window lies inside one contiguous segment,
/// stepping by `stride` from the earliest valid anchor of each segment.
pub fn enumerate_anchors(track: &Track, stride: u64) -> Vec<u64> {
    let stride = stride.max(1);
    let mut anchors = Vec::new();
    for seg in track.segments() {
        if seg.len() < CLIP_LEN {
            continue;
        }
        let first = seg[0].frame_index + ANCHOR_OFFSET;
        let last = seg[seg.len() - 1].frame_index - (CLIP_LEN as u64 - 1 - ANCHOR_OFFSET);
        anchors.extend((first..=last).step_by(stride as usize));
    }
    anchors
}

/// Frames `anchor - 8 ..= anchor + 7` of a track, or the first missing frame.
pub fn clip_annotations(track: &Track, anchor: u64) -> Result<&[TrackAnnotation], ClipError> {
    let first = anchor.checked_sub(ANCHOR_OFFSET).ok_or(ClipError::GapInTrack {
        track_id: track.track_id,
        frame_index: 0,
    })?;
    track.window(first, CLIP_LEN).ok_or_else(|| {
        let missing = (first..first + CLIP_LEN as u64)
            .find(|f| track.annotation_at(*f).is_none())
            .unwrap_or(first);
        ClipError::GapInTrack {
            track_id: track.track_id,
            frame_index: missing,
        }
    })
}

thread_local! {
    static RESIZER: RefCell<Resizer> = RefCell::new(Resizer::new());
}

/// Bilinear resize of `img` to `side x side`.
pub fn resize_square(img: &RgbImage, side: u32) -> RgbImage {
    if img.width() == side && img.height() == side {
        return img.clone();
    }
    let src = ImageRef::new(img.width(), img.height(), img.as_raw(), PixelType::U8x3)
        .expect("RgbImage buffers are tightly packed U8x3");
    let mut dst = Image::new(side, side, PixelType::U8x3);
    let options = ResizeOptions::new().resize_alg(ResizeAlg::Convolution(FilterType::Bilinear));
    RESIZER.with(|r| {
        r.borrow_mut()
            .resize(&src, &mut dst, &options)
            .expect("source and destination share a pixel type")
    });
    RgbImage::from_raw(side, side, dst.into_vec()).expect("destination buffer matches its size")
}

/// Cuts `window` out of `frame` and scales it to `out_side` with a bilinear filter.
pub fn crop_and_resize(frame: &RgbImage, window: CropWindow, out_side: u32) -> RgbImage {
    let crop = imageops::crop_imm(frame, window.x0, window.y0, window.side, window.side).to_image();
    resize_square(&crop, out_side)
}

/// Sixteen same-window square crops of one person.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub video_id: String,
    pub track_id: u64,
    pub anchor_frame_index: u64,
    pub window: CropWindow,
    pub label: DamageStatus,
    pub frames: Vec<RgbImage>,
    pub source_frame_indices: Vec<u64>,
    /// Track boxes on the 16 source frames, in source-frame pixels.
    pub source_boxes: Vec<BBox>,
}

impl Clip {
    pub fn key(&self) -> ClipKey {
        ClipKey::new(self.video_id.clone(), self.track_id, self.anchor_frame_index)
    }

    /// Side length of every clip frame in pixels.
    pub fn side(&self) -> u32 {
        self.frames.first().map(|f| f.width()).unwrap_or(0)
    }

    pub fn anchor_box(&self) -> BBox {
        self.source_boxes[ANCHOR_OFFSET as usize]
    }

    /// Same clip rescaled so every frame is `side x side`.
    pub fn resized(&self, side: u32) -> Clip {
        if side == self.side() {
            return self.clone();
        }
        Clip {
            frames: self
                .frames
                .iter()
                .map(|f| resize_square(f, side))
                .collect(),
            ..self.clone()
        }
    }

    /// Writes `frame_00.ppm .. frame_15.ppm` plus a `clip.json` sidecar.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ClipError> {
        let export_err = |e: &dyn std::fmt::Display| ClipError::Export(dir.display().to_string(), e.to_string());
        fs::create_dir_all(dir).map_err(|e| export_err(&e))?;
        for (i, frame) in self.frames.iter().enumerate() {
            write_frame(&dir.join(format!("frame_{i:02}.ppm")), frame)?;
        }
        let sidecar = ClipSidecar {
            video_id: self.video_id.clone(),
            track_id: self.track_id,
            anchor_frame_index: self.anchor_frame_index,
            window: self.window,
            label: self.label,
            side: self.side(),
            source_frame_indices: self.source_frame_indices.clone(),
            source_boxes: self.source_boxes.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| export_err(&e))?;
        fs::write(dir.join(SIDECAR), json).map_err(|e| export_err(&e))?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Clip, ClipError> {
        let export_err = |e: &dyn std::fmt::Display| ClipError::Export(dir.display().to_string(), e.to_string());
        let text = fs::read_to_string(dir.join(SIDECAR)).map_err(|e| export_err(&e))?;
        let meta: ClipSidecar = serde_json::from_str(&text).map_err(|e| export_err(&e))?;
        let frames = (0..CLIP_LEN)
            .map(|i| {
                image::open(dir.join(format!("frame_{i:02}.ppm")))
                    .map(|img| img.into_rgb8())
                    .map_err(|e| ClipError::Frame(e.into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Clip {
            video_id: meta.video_id,
            track_id: meta.track_id,
            anchor_frame_index: meta.anchor_frame_index,
            window: meta.window,
            label: meta.label,
            frames,
            source_frame_indices: meta.source_frame_indices,
            source_boxes: meta.source_boxes,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ClipSidecar {
    video_id: String,
    track_id: u64,
    anchor_frame_index: u64,
    window: CropWindow,
    label: DamageStatus,
    side: u32,
    source_frame_indices: Vec<u64>,
    source_boxes: Vec<BBox>,
}

/// Builds the clip anchored at `anchor`.
pub fn assemble_clip(
    track: &Track,
    frames: &dyn FrameStore,
    anchor: u64,
    context: f64,
    out_side: u32,
) -> Result<Clip, ClipError> {
    if out_side < MIN_OUT_SIDE {
        return Err(ClipError::InvalidOutSide(out_side));
    }
    let anns = clip_annotations(track, anchor)?;
    let anchor_ann = &anns[ANCHOR_OFFSET as usize];
    let anchor_frame = frames.frame(anchor)?;
    let window = compute_crop_window(anchor_ann.bbox, anchor_frame.width(), anchor_frame.height(), context);

    let mut crops = Vec::with_capacity(CLIP_LEN);
    for ann in anns {
        let frame = if ann.frame_index == anchor {
            anchor_frame.clone()
        } else {
            frames.frame(ann.frame_index)?
        };
        crops.push(crop_and_resize(&frame, window, out_side));
    }

    Ok(Clip {
        video_id: track.video_id.clone(),
        track_id: track.track_id,
        anchor_frame_index: anchor,
        window,
        label: anchor_ann.status,
        frames: crops,
        source_frame_indices: anns.iter().map(|a| a.frame_index).collect(),
        source_boxes: anns.iter().map(|a| a.bbox).collect(),
    })
}
