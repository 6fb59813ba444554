use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use super::DatasetError;
use crate::ingest::synthetic::corpus_scripts;
use crate::ingest::{
    parse_annotations, parse_manifest, Archetype, DatasetLayout, DirFrameStore, FrameStore,
    IngestError, SyntheticScene, Track, VideoMeta,
};
use crate::model::ClipKey;
use crate::windower::{assemble_clip, Clip};

/// Videos, their tracks and frame access, ready for sampling and clip
/// assembly.
#[derive(Clone)]
pub struct Corpus {
    pub videos: Vec<VideoMeta>,
    pub tracks: BTreeMap<String, Vec<Track>>,
    stores: HashMap<String, Arc<dyn FrameStore>>,
}

impl std::fmt::Debug for Corpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Corpus")
            .field("videos", &self.videos.len())
            .field("tracks", &self.tracks.values().map(Vec::len).sum::<usize>())
            .finish()
    }
}

impl Corpus {
    pub fn new() -> Self {
        Corpus {
            videos: Vec::new(),
            tracks: BTreeMap::new(),
            stores: HashMap::new(),
        }
    }

    pub fn add_video(&mut self, meta: VideoMeta, tracks: Vec<Track>, store: Arc<dyn FrameStore>) {
        self.tracks.insert(meta.video_id.clone(), tracks);
        self.stores.insert(meta.video_id.clone(), store);
        self.videos.retain(|v| v.video_id != meta.video_id);
        self.videos.push(meta);
    }

    /// Reads a dataset root laid out as described in [`crate::ingest`].
    pub fn load(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let layout = DatasetLayout::new(root.as_ref());
        let videos = parse_manifest(layout.manifest())?;
        let mut corpus = Corpus::new();
        for meta in videos {
            let tracks = parse_annotations(layout.annotations(&meta.video_id), &meta)?;
            let store = Arc::new(DirFrameStore::new(&meta, layout.frames(&meta.video_id)));
            corpus.add_video(meta, tracks, store);
        }
        Ok(corpus)
    }

    /// Synthetic corpus with `per_pattern` videos for each of the five
    /// patterns, each holding one actor per entry of `cast`. Frames render
    /// on demand.
    pub fn synthetic(
        seed: u64,
        per_pattern: usize,
        frame_count: u64,
        (width, height): (u32, u32),
        cast: &[Archetype],
    ) -> Result<Self, IngestError> {
        let mut corpus = Corpus::new();
        for script in corpus_scripts(seed, per_pattern, frame_count, (width, height), cast)? {
            let scene = SyntheticScene::new(script)?;
            let meta = scene.meta().clone();
            let tracks = scene.tracks().to_vec();
            corpus.add_video(meta, tracks, Arc::new(scene));
        }
        Ok(corpus)
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoMeta> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn track(&self, key: &ClipKey) -> Option<&Track> {
        self.tracks
            .get(&key.video_id)?
            .iter()
            .find(|t| t.track_id == key.track_id)
    }

    pub fn clip(&self, key: &ClipKey, context: f64, out_side: u32) -> Result<Clip, DatasetError> {
        let unknown = || DatasetError::UnknownVideo(key.video_id.clone());
        let store = self.stores.get(&key.video_id).ok_or_else(unknown)?;
        let track = self.track(key).ok_or_else(|| {
            DatasetError::InsufficientData(format!("no track {} in {}", key.track_id, key.video_id))
        })?;
        Ok(assemble_clip(track, store.as_ref(), key.anchor, context, out_side)?)
    }
}

impl Default for Corpus {
    fn default() -> Self {
        Self::new()
    }
}
