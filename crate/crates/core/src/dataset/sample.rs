use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::ingest::{Pattern, Track, VideoMeta};
use crate::model::{ClipKey, DamageStatus};
use crate::windower::enumerate_anchors;

/// Clips per class used for the reference experiments.
pub const REFERENCE_CLASS_QUOTA: usize = 1000;
pub const DEFAULT_MIN_SPACING: u64 = 4;

/// Per-class clip keys drawn by [`sample_balanced_clips`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledClips {
    pub seed: u64,
    pub quota: usize,
    pub min_spacing: u64,
    pub by_class: BTreeMap<DamageStatus, Vec<ClipKey>>,
}

/// Every anchor with a full 16-frame window, keyed by its anchor-frame label.
pub fn candidate_anchors(
    tracks_by_video: &BTreeMap<String, Vec<Track>>,
) -> BTreeMap<DamageStatus, Vec<ClipKey>> {
    let mut out: BTreeMap<DamageStatus, Vec<ClipKey>> = BTreeMap::new();
    for (video_id, tracks) in tracks_by_video {
        for track in tracks {
            for anchor in enumerate_anchors(track, 1) {
                let status = track
                    .annotation_at(anchor)
                    .expect("enumerated anchors are annotated")
                    .status;
                out.entry(status)
                    .or_default()
                    .push(ClipKey::new(video_id.clone(), track.track_id, anchor));
            }
        }
    }
    out
}

/// Accepted anchors per (video, track), shared across classes.
type SpacingBook = HashMap<(String, u64), Vec<u64>>;

fn spaced_ok(book: &SpacingBook, key: &ClipKey, min_spacing: u64) -> bool {
    book.get(&(key.video_id.clone(), key.track_id))
        .is_none_or(|taken| taken.iter().all(|a| a.abs_diff(key.anchor) >= min_spacing.max(1)))
}

fn draw(
    pool: &[ClipKey],
    want: usize,
    min_spacing: u64,
    rng: &mut ChaCha8Rng,
    book: &mut SpacingBook,
) -> Vec<ClipKey> {
    let mut order: Vec<&ClipKey> = pool.iter().collect();
    order.shuffle(rng);
    let mut picked = Vec::with_capacity(want);
    for key in order {
        if picked.len() == want {
            break;
        }
        if spaced_ok(book, key, min_spacing) {
            book.entry((key.video_id.clone(), key.track_id))
                .or_default()
                .push(key.anchor);
            picked.push(key.clone());
        }
    }
    picked
}

/// Draws exactly `quota` clip keys per class, without replacement.
///
/// Each class takes `quota / 10` keys from pattern-B videos and the rest from
/// patterns A, C, D and E, each uniformly at random. When one side runs short
/// the other side fills in, so the total still reaches `quota`; the
/// resulting shortage surfaces later in [`super::make_split`]. Any two keys on
/// the same track are at least `min_spacing` frames apart.
pub fn sample_balanced_clips(
    tracks_by_video: &BTreeMap<String, Vec<Track>>,
    videos: &[VideoMeta],
    quota: usize,
    seed: u64,
    min_spacing: u64,
) -> Result<SampledClips, DatasetError> {
    if quota == 0 || !quota.is_multiple_of(10) {
        return Err(DatasetError::InvalidQuota(quota));
    }
    let patterns: HashMap<&str, Pattern> =
        videos.iter().map(|v| (v.video_id.as_str(), v.pattern)).collect();
    if let Some(unknown) = tracks_by_video.keys().find(|v| !patterns.contains_key(v.as_str())) {
        return Err(DatasetError::UnknownVideo(unknown.clone()));
    }

    let candidates = candidate_anchors(tracks_by_video);
    let count = |s: DamageStatus| candidates.get(&s).map_or(0, Vec::len);
    let short: Vec<String> = DamageStatus::ALL
        .iter()
        .filter(|s| count(**s) < quota)
        .map(|s| format!("{s}: {} < {quota}", count(*s)))
        .collect();
    if !short.is_empty() {
        return Err(DatasetError::InsufficientData(short.join(", ")));
    }

    let want_test = quota / 10;
    let mut book = SpacingBook::new();
    let mut by_class = BTreeMap::new();
    for status in DamageStatus::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(status.index() as u64);
        let (test_pool, train_pool): (Vec<ClipKey>, Vec<ClipKey>) = candidates[&status]
            .iter()
            .cloned()
            .partition(|k| patterns[k.video_id.as_str()].is_test_pattern());

        let mut picked = draw(&test_pool, want_test, min_spacing, &mut rng, &mut book);
        let want_train = quota - picked.len();
        let train = draw(&train_pool, want_train, min_spacing, &mut rng, &mut book);
        let topped_up = quota - picked.len() - train.len();
        picked.extend(train);
        if topped_up > 0 {
            let rest: Vec<ClipKey> = test_pool
                .iter()
                .filter(|k| !picked.contains(k))
                .cloned()
                .collect();
            picked.extend(draw(&rest, topped_up, min_spacing, &mut rng, &mut book));
        }
        if picked.len() < quota {
            return Err(DatasetError::InsufficientData(format!(
                "{status}: {} < {quota} after min_spacing {min_spacing}",
                picked.len()
            )));
        }
        picked.sort();
        by_class.insert(status, picked);
    }

    Ok(SampledClips {
        seed,
        quota,
        min_spacing,
        by_class,
    })
}
