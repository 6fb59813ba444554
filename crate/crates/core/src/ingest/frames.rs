use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, RgbImage};

use super::{IngestError, VideoMeta};
use crate::model::FrameRef;

/// A decoded RGB frame together with its identity.
#[derive(Debug, Clone)]
pub struct Frame {
    pub frame_ref: FrameRef,
    pub image: Arc<RgbImage>,
}

/// Pull-based, single-consumer stream of frames in index order.
pub trait FrameSource: Iterator<Item = Result<Frame, IngestError>> + Send {
    fn meta(&self) -> &VideoMeta;
}

/// Random access to frames by index.
pub trait FrameStore: Send + Sync {
    fn frame(&self, index: u64) -> Result<Arc<RgbImage>, IngestError>;
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.ppm")
}

/// Writes one frame as a binary PPM.
pub fn write_frame(path: &Path, image: &RgbImage) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let encoder = PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary));
    encoder.write_image(
        image.as_raw(),
        image.width(),
        image.height(),
        ExtendedColorType::Rgb8,
    )?;
    Ok(())
}

fn load_frame(dir: &Path, meta: &VideoMeta, index: u64) -> Result<RgbImage, IngestError> {
    let path = dir.join(frame_file_name(index));
    if !path.is_file() {
        return Err(IngestError::MissingFrame(index));
    }
    let img = image::open(&path)?.into_rgb8();
    if img.width() != meta.width || img.height() != meta.height {
        return Err(IngestError::DimensionMismatch {
            frame_index: index,
            expected_w: meta.width,
            expected_h: meta.height,
            found_w: img.width(),
            found_h: img.height(),
        });
    }
    Ok(img)
}

/// Frames read from an image-sequence directory.
pub struct DirFrameSource {
    meta: VideoMeta,
    dir: PathBuf,
    next: u64,
}

/// Opens `<root>/frame_%06d.ppm` for `meta.frame_count` frames.
///
/// Every file must exist up front; decoding and dimension checks happen as
/// frames are pulled.
pub fn open_frame_source(meta: &VideoMeta, root: impl AsRef<Path>) -> Result<DirFrameSource, IngestError> {
    let dir = root.as_ref().to_path_buf();
    if let Some(missing) = (0..meta.frame_count).find(|i| !dir.join(frame_file_name(*i)).is_file()) {
        return Err(IngestError::MissingFrame(missing));
    }
    Ok(DirFrameSource {
        meta: meta.clone(),
        dir,
        next: 0,
    })
}

impl Iterator for DirFrameSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.meta.frame_count {
            return None;
        }
        let index = self.next;
        self.next += 1;
        Some(load_frame(&self.dir, &self.meta, index).map(|img| Frame {
            frame_ref: FrameRef::new(self.meta.video_id.clone(), index, self.meta.fps),
            image: Arc::new(img),
        }))
    }
}

impl FrameSource for DirFrameSource {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }
}

/// Loads frames from a directory on demand.
pub struct DirFrameStore {
    meta: VideoMeta,
    dir: PathBuf,
}

impl DirFrameStore {
    pub fn new(meta: &VideoMeta, dir: impl Into<PathBuf>) -> Self {
        DirFrameStore {
            meta: meta.clone(),
            dir: dir.into(),
        }
    }
}

impl FrameStore for DirFrameStore {
    fn frame(&self, index: u64) -> Result<Arc<RgbImage>, IngestError> {
        if index >= self.meta.frame_count {
            return Err(IngestError::MissingFrame(index));
        }
        load_frame(&self.dir, &self.meta, index).map(Arc::new)
    }
}

/// Frames held in memory, keyed by index.
#[derive(Default, Clone)]
pub struct MemoryFrameStore {
    frames: HashMap<u64, Arc<RgbImage>>,
}

impl MemoryFrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: u64, image: Arc<RgbImage>) {
        self.frames.insert(index, image);
    }

    pub fn remove(&mut self, index: u64) -> Option<Arc<RgbImage>> {
        self.frames.remove(&index)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl FrameStore for MemoryFrameStore {
    fn frame(&self, index: u64) -> Result<Arc<RgbImage>, IngestError> {
        self.frames
            .get(&index)
            .cloned()
            .ok_or(IngestError::MissingFrame(index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{PathKind, Pattern};

    fn meta(w: u32, h: u32, n: u64) -> VideoMeta {
        VideoMeta {
            video_id: "s1".into(),
            pattern: Pattern::C,
            altitude_m: 20,
            path_kind: PathKind::Straight,
            width: w,
            height: h,
            fps: 30.0,
            frame_count: n,
            synthetic: true,
        }
    }

    fn write_frames(dir: &Path, w: u32, h: u32, n: u64) {
        for i in 0..n {
            let img = RgbImage::from_pixel(w, h, image::Rgb([i as u8, 2, 3]));
            write_frame(&dir.join(frame_file_name(i)), &img).unwrap();
        }
    }

    #[test]
    fn yields_frames_in_order() {
        let tmp = tempfile::tempdir().unwrap();
        write_frames(tmp.path(), 8, 6, 10);
        let src = open_frame_source(&meta(8, 6, 10), tmp.path()).unwrap();
        let frames: Vec<Frame> = src.map(Result::unwrap).collect();
        assert_eq!(frames.len(), 10);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.frame_ref.frame_index, i as u64);
            assert_eq!(f.image.get_pixel(0, 0)[0], i as u8);
        }
        assert_eq!(frames[3].frame_ref.timestamp_ms, 100);
    }

    #[test]
    fn missing_frame_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        write_frames(tmp.path(), 8, 6, 10);
        std::fs::remove_file(tmp.path().join(frame_file_name(4))).unwrap();
        match open_frame_source(&meta(8, 6, 10), tmp.path()) {
            Err(IngestError::MissingFrame(4)) => {}
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected MissingFrame"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        write_frames(tmp.path(), 16, 9, 2);
        let mut src = open_frame_source(&meta(32, 18, 2), tmp.path()).unwrap();
        assert!(matches!(
            src.next().unwrap(),
            Err(IngestError::DimensionMismatch { frame_index: 0, found_w: 16, .. })
        ));
        let store = DirFrameStore::new(&meta(32, 18, 2), tmp.path());
        assert!(matches!(store.frame(1), Err(IngestError::DimensionMismatch { .. })));
        assert!(matches!(store.frame(5), Err(IngestError::MissingFrame(5))));
    }

    #[test]
    fn ppm_round_trip_is_lossless() {
        let tmp = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(7, 5, |x, y| image::Rgb([x as u8 * 30, y as u8 * 40, 7]));
        let path = tmp.path().join("f.ppm");
        write_frame(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6"));
        assert_eq!(image::open(&path).unwrap().into_rgb8(), img);
    }
}
