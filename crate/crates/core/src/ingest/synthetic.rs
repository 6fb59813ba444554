//! Deterministic synthetic scenes with exact ground truth.
//!
//! A scene is a flat background with one solid rectangle per actor. Actors
//! follow a fixed motion model per archetype, so every annotation box equals
//! the rendered sprite extent exactly (as long as sprites do not overlap).
//!
//! Scripts are TOML:
//!
//! ```toml
//! seed = 7
//! video_id = "synth_01"   # optional, default "synthetic"
//! pattern = "B"           # optional, default "A"
//! altitude_m = 30         # optional
//! path_kind = "straight"  # optional
//! width = 384
//! height = 216
//! fps = 30.0              # optional
//! frame_count = 64
//!
//! [[actor]]
//! archetype = "runner"    # stander | onlooker | runner | walker | waver | prone
//! x = 10                  # spawn top-left
//! y = 20
//! w = 8
//! h = 16
//! heading_deg = 0.0       # 0 = +x, 90 = +y
//! speed = 4.0             # px/frame
//! spawn_frame = 0         # optional
//! despawn_frame = 40      # optional, exclusive
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    frame_file_name, write_annotations, write_frame, DatasetLayout, Frame, FrameSource,
    FrameStore, IngestError, PathKind, Pattern, Track, TrackAnnotation, VideoMeta,
};
use crate::model::{BBox, DamageStatus, FrameRef};

pub const RUNNER_MIN_SPEED: f64 = 3.0;
pub const PRONE_MIN_ASPECT: f64 = 1.5;
pub const WAVE_AMPLITUDE_PX: f64 = 2.0;
pub const WAVE_PERIOD_FRAMES: u64 = 8;
/// Narrowest body that can hold a waving sub-sprite with full amplitude.
pub const WAVER_MIN_WIDTH: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Stander,
    Onlooker,
    Runner,
    Walker,
    Waver,
    Prone,
}

impl Archetype {
    pub const ALL: [Archetype; 6] = [
        Archetype::Stander,
        Archetype::Onlooker,
        Archetype::Runner,
        Archetype::Walker,
        Archetype::Waver,
        Archetype::Prone,
    ];

    /// Ground-truth status for the archetype.
    pub fn status(self) -> DamageStatus {
        match self {
            Archetype::Stander | Archetype::Onlooker => DamageStatus::Safe,
            Archetype::Walker | Archetype::Runner => DamageStatus::Evacuation,
            Archetype::Waver => DamageStatus::CallForHelp,
            Archetype::Prone => DamageStatus::Emergency,
        }
    }

    pub fn is_moving(self) -> bool {
        matches!(self, Archetype::Walker | Archetype::Runner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub archetype: Archetype,
    #[serde(default)]
    pub spawn_frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub despawn_frame: Option<u64>,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default)]
    pub speed: f64,
}

impl ActorSpec {
    fn alive_at(&self, t: u64) -> bool {
        t >= self.spawn_frame && self.despawn_frame.is_none_or(|d| t < d)
    }

    /// Sprite box at frame `t`, bouncing off the frame borders.
    pub fn bbox_at(&self, t: u64, frame_w: u32, frame_h: u32) -> Option<BBox> {
        if !self.alive_at(t) {
            return None;
        }
        let dt = (t - self.spawn_frame) as f64;
        let (sin, cos) = self.heading_deg.to_radians().sin_cos();
        let x = fold(self.x as f64 + cos * self.speed * dt, (frame_w - self.w) as f64);
        let y = fold(self.y as f64 + sin * self.speed * dt, (frame_h - self.h) as f64);
        Some(BBox::new(x.round() as u32, y.round() as u32, self.w, self.h))
    }

    /// Horizontal offset of the waving sub-sprite `dt` frames after spawn.
    pub fn wave_offset(dt: u64) -> i64 {
        let phase = 2.0 * PI * (dt % WAVE_PERIOD_FRAMES) as f64 / WAVE_PERIOD_FRAMES as f64;
        (WAVE_AMPLITUDE_PX * phase.sin()).round() as i64
    }

    /// Waving sub-sprite rectangle at frame `t` (wavers only). Always inside the body box.
    pub fn arm_at(&self, t: u64, frame_w: u32, frame_h: u32) -> Option<BBox> {
        if self.archetype != Archetype::Waver {
            return None;
        }
        let body = self.bbox_at(t, frame_w, frame_h)?;
        let arm_w = (body.w / 3).min(body.w - 4).max(1);
        let arm_h = (body.h / 2).max(1);
        let offset = Self::wave_offset(t - self.spawn_frame);
        let x = (body.x + (body.w - arm_w) / 2) as i64 + offset;
        Some(BBox::new(x as u32, body.y + body.h / 8, arm_w, arm_h))
    }
}

/// Reflects `p` into `[0, limit]`.
fn fold(p: f64, limit: f64) -> f64 {
    if limit <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * limit;
    let m = p.rem_euclid(period);
    if m > limit {
        period - m
    } else {
        m
    }
}

fn default_video_id() -> String {
    "synthetic".into()
}
fn default_pattern() -> Pattern {
    Pattern::A
}
fn default_altitude() -> u32 {
    30
}
fn default_path_kind() -> PathKind {
    PathKind::Straight
}
fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScript {
    pub seed: u64,
    #[serde(default = "default_video_id")]
    pub video_id: String,
    #[serde(default = "default_pattern")]
    pub pattern: Pattern,
    #[serde(default = "default_altitude")]
    pub altitude_m: u32,
    #[serde(default = "default_path_kind")]
    pub path_kind: PathKind,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frame_count: u64,
    #[serde(default, rename = "actor")]
    pub actors: Vec<ActorSpec>,
}

impl SyntheticScript {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::InvalidScript(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script is always representable as TOML")
    }

    pub fn meta(&self) -> VideoMeta {
        VideoMeta {
            video_id: self.video_id.clone(),
            pattern: self.pattern,
            altitude_m: self.altitude_m,
            path_kind: self.path_kind,
            width: self.width,
            height: self.height,
            fps: self.fps,
            frame_count: self.frame_count,
            synthetic: true,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |msg: String| Err(IngestError::InvalidScript(msg));
        self.meta()
            .validate(None)
            .map_err(|e| IngestError::InvalidScript(e.to_string()))?;

        for (i, a) in self.actors.iter().enumerate() {
            let name = format!("actor {i} ({:?})", a.archetype);
            if !(a.speed.is_finite() && a.speed >= 0.0) {
                return invalid(format!("{name}: speed must be >= 0, got {}", a.speed));
            }
            if !a.heading_deg.is_finite() {
                return invalid(format!("{name}: heading must be finite"));
            }
            if a.w == 0 || a.h == 0 || a.w > self.width || a.h > self.height {
                return invalid(format!("{name}: body {}x{} does not fit the frame", a.w, a.h));
            }
            if BBox::new(a.x, a.y, a.w, a.h).validate(self.width, self.height).is_err() {
                return invalid(format!("{name}: spawn box outside the frame"));
            }
            if a.spawn_frame >= self.frame_count {
                return invalid(format!("{name}: spawns after the last frame"));
            }
            if a.despawn_frame.is_some_and(|d| d <= a.spawn_frame) {
                return invalid(format!("{name}: despawns before it spawns"));
            }
            match a.archetype {
                Archetype::Runner if a.speed < RUNNER_MIN_SPEED => {
                    return invalid(format!("{name}: runners need speed >= {RUNNER_MIN_SPEED}"));
                }
                Archetype::Walker if a.speed <= 0.0 => {
                    return invalid(format!("{name}: walkers need a positive speed"));
                }
                Archetype::Stander | Archetype::Onlooker | Archetype::Waver | Archetype::Prone
                    if a.speed != 0.0 =>
                {
                    return invalid(format!("{name}: stationary archetype with speed {}", a.speed));
                }
                Archetype::Prone if (a.w as f64) < PRONE_MIN_ASPECT * a.h as f64 => {
                    return invalid(format!("{name}: prone body needs w/h >= {PRONE_MIN_ASPECT}"));
                }
                Archetype::Waver if a.w < WAVER_MIN_WIDTH || a.h < 2 => {
                    return invalid(format!("{name}: waver body must be at least {WAVER_MIN_WIDTH}x2"));
                }
                _ => {}
            }
        }

        for (i, a) in self.actors.iter().enumerate() {
            for (j, b) in self.actors.iter().enumerate().skip(i + 1) {
                let t = a.spawn_frame.max(b.spawn_frame);
                if let (Some(ba), Some(bb)) = (
                    a.bbox_at(t, self.width, self.height),
                    b.bbox_at(t, self.width, self.height),
                ) {
                    if ba.intersects(&bb) {
                        return invalid(format!("actors {i} and {j} overlap at spawn"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A validated script with its derived colors and ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    script: SyntheticScript,
    meta: VideoMeta,
    tracks: Vec<Track>,
    background: Rgb<u8>,
    body_colors: Vec<Rgb<u8>>,
}

impl SyntheticScene {
    pub fn new(script: SyntheticScript) -> Result<Self, IngestError> {
        script.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
        let background = Rgb([
            rng.random_range(30..=90),
            rng.random_range(30..=90),
            rng.random_range(30..=90),
        ]);
        let body_colors = script
            .actors
            .iter()
            .map(|_| {
                Rgb([
                    rng.random_range(200..=250),
                    rng.random_range(200..=250),
                    rng.random_range(200..=250),
                ])
            })
            .collect();

        let tracks = script
            .actors
            .iter()
            .enumerate()
            .filter_map(|(i, actor)| {
                let track_id = i as u64 + 1;
                let annotations: Vec<TrackAnnotation> = (0..script.frame_count)
                    .filter_map(|t| {
                        actor
                            .bbox_at(t, script.width, script.height)
                            .map(|bbox| TrackAnnotation {
                                frame_index: t,
                                track_id,
                                bbox,
                                status: actor.archetype.status(),
                            })
                    })
                    .collect();
                (!annotations.is_empty()).then(|| Track {
                    track_id,
                    video_id: script.video_id.clone(),
                    annotations,
                })
            })
            .collect();

        Ok(SyntheticScene {
            meta: script.meta(),
            script,
            tracks,
            background,
            body_colors,
        })
    }

    pub fn script(&self) -> &SyntheticScript {
        &self.script
    }

    pub fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    /// Ground-truth tracks; track id `i + 1` belongs to actor `i`.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn background(&self) -> Rgb<u8> {
        self.background
    }

    pub fn body_color(&self, actor: usize) -> Rgb<u8> {
        self.body_colors[actor]
    }

    /// Sub-sprite color: every channel 190 below the body color.
    pub fn arm_color(&self, actor: usize) -> Rgb<u8> {
        let Rgb(c) = self.body_colors[actor];
        Rgb(c.map(|v| v - 190))
    }

    pub fn render(&self, t: u64) -> RgbImage {
        let (w, h) = (self.script.width, self.script.height);
        let mut img = RgbImage::from_pixel(w, h, self.background);
        for (i, actor) in self.script.actors.iter().enumerate() {
            if let Some(body) = actor.bbox_at(t, w, h) {
                fill(&mut img, body, self.body_colors[i]);
            }
            if let Some(arm) = actor.arm_at(t, w, h) {
                fill(&mut img, arm, self.arm_color(i));
            }
        }
        img
    }

    pub fn frames(self: &Arc<Self>) -> SyntheticFrameSource {
        SyntheticFrameSource {
            scene: Arc::clone(self),
            next: 0,
        }
    }

    /// Writes frames and annotations under a dataset root. The caller owns the manifest.
    pub fn write_to(&self, layout: &DatasetLayout) -> Result<(), IngestError> {
        let frames_dir = layout.frames(&self.meta.video_id);
        fs::create_dir_all(&frames_dir).map_err(|e| IngestError::io(&frames_dir, e))?;
        for t in 0..self.meta.frame_count {
            write_frame(&frames_dir.join(frame_file_name(t)), &self.render(t))?;
        }
        let ann_path = layout.annotations(&self.meta.video_id);
        if let Some(parent) = ann_path.parent() {
            fs::create_dir_all(parent).map_err(|e| IngestError::io(parent, e))?;
        }
        let file = fs::File::create(&ann_path).map_err(|e| IngestError::io(&ann_path, e))?;
        write_annotations(&self.tracks, file)
    }
}

fn fill(img: &mut RgbImage, b: BBox, color: Rgb<u8>) {
    for y in b.y..b.y + b.h {
        for x in b.x..b.x + b.w {
            img.put_pixel(x, y, color);
        }
    }
}

impl FrameStore for SyntheticScene {
    fn frame(&self, index: u64) -> Result<Arc<RgbImage>, IngestError> {
        if index >= self.meta.frame_count {
            return Err(IngestError::MissingFrame(index));
        }
        Ok(Arc::new(self.render(index)))
    }
}

/// Renders scene frames on demand, in order.
pub struct SyntheticFrameSource {
    scene: Arc<SyntheticScene>,
    next: u64,
}

impl SyntheticFrameSource {
    pub fn scene(&self) -> &Arc<SyntheticScene> {
        &self.scene
    }
}

impl Iterator for SyntheticFrameSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let meta = self.scene.meta();
        if self.next >= meta.frame_count {
            return None;
        }
        let t = self.next;
        self.next += 1;
        Some(Ok(Frame {
            frame_ref: FrameRef::new(meta.video_id.clone(), t, meta.fps),
            image: Arc::new(self.scene.render(t)),
        }))
    }
}

impl FrameSource for SyntheticFrameSource {
    fn meta(&self) -> &VideoMeta {
        self.scene.meta()
    }
}

pub fn generate_synthetic_scene(
    script: SyntheticScript,
) -> Result<(SyntheticFrameSource, Vec<Track>, VideoMeta), IngestError> {
    let scene = Arc::new(SyntheticScene::new(script)?);
    let tracks = scene.tracks().to_vec();
    let meta = scene.meta().clone();
    Ok((scene.frames(), tracks, meta))
}

/// Scripts for `per_pattern` videos of each of the five patterns, ids
/// `A00`, `A01`, .., each holding one lane actor per entry of `cast`.
pub fn corpus_scripts(
    seed: u64,
    per_pattern: usize,
    frame_count: u64,
    (width, height): (u32, u32),
    cast: &[Archetype],
) -> Result<Vec<SyntheticScript>, IngestError> {
    let mut out = Vec::with_capacity(per_pattern * Pattern::ALL.len());
    for (p, pattern) in Pattern::ALL.into_iter().enumerate() {
        for v in 0..per_pattern {
            let video_seed = seed.wrapping_mul(1000).wrapping_add((p * per_pattern + v) as u64);
            let video_id = format!("{pattern}{v:02}");
            let mut script = lane_script(video_seed, &video_id, width, height, frame_count, cast)?;
            script.pattern = pattern;
            out.push(script);
        }
    }
    Ok(out)
}

const LANE_PITCH: u32 = 24;
const SLOT_PITCH: u32 = 32;
const SLOT_MARGIN: u32 = 12;

/// Builds a script whose sprites never overlap: each moving actor bounces
/// horizontally in a lane of its own, stationary actors share the remaining
/// lanes. Body sizes and speeds are drawn from `seed`.
pub fn lane_script(
    seed: u64,
    video_id: &str,
    width: u32,
    height: u32,
    frame_count: u64,
    archetypes: &[Archetype],
) -> Result<SyntheticScript, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6e65);
    let lanes = height / LANE_PITCH;
    let slots_per_lane = width.saturating_sub(SLOT_MARGIN) / SLOT_PITCH;
    let moving = archetypes.iter().filter(|a| a.is_moving()).count() as u32;
    let stationary = archetypes.len() as u32 - moving;
    let stationary_lanes = stationary.div_ceil(slots_per_lane.max(1));
    if slots_per_lane == 0 || moving + stationary_lanes > lanes {
        return Err(IngestError::InvalidScript(format!(
            "{} actors do not fit a {width}x{height} frame",
            archetypes.len()
        )));
    }

    let mut actors = Vec::with_capacity(archetypes.len());
    let mut lane = 0;
    let mut slot = 0;
    let mut ordered: Vec<Archetype> = archetypes.iter().copied().filter(|a| a.is_moving()).collect();
    ordered.extend(archetypes.iter().copied().filter(|a| !a.is_moving()));
    for archetype in ordered {
        let (w, h) = if archetype == Archetype::Prone {
            let h: u32 = rng.random_range(6..=8);
            (rng.random_range((h * 3).div_ceil(2)..=14), h)
        } else {
            (rng.random_range(5..=8), rng.random_range(10..=14))
        };
        let lane_top = lane * LANE_PITCH;
        let y = lane_top + (LANE_PITCH - h) / 2;
        let (x, heading_deg, speed) = match archetype {
            Archetype::Runner | Archetype::Walker => {
                let speed = if archetype == Archetype::Runner {
                    rng.random_range(3..=5) as f64
                } else {
                    rng.random_range(2..=4) as f64 / 2.0
                };
                let heading = if rng.random_bool(0.5) { 0.0 } else { 180.0 };
                let x = rng.random_range(0..=width - w);
                lane += 1;
                (x, heading, speed)
            }
            _ => {
                let x = SLOT_MARGIN + slot * SLOT_PITCH;
                slot += 1;
                if slot == slots_per_lane {
                    slot = 0;
                    lane += 1;
                }
                (x, 0.0, 0.0)
            }
        };
        actors.push(ActorSpec {
            archetype,
            spawn_frame: 0,
            despawn_frame: None,
            x,
            y,
            w,
            h,
            heading_deg,
            speed,
        });
    }

    let script = SyntheticScript {
        seed,
        video_id: video_id.to_string(),
        pattern: Pattern::A,
        altitude_m: 30,
        path_kind: PathKind::Straight,
        width,
        height,
        fps: 30.0,
        frame_count,
        actors,
    };
    script.validate()?;
    Ok(script)
}
