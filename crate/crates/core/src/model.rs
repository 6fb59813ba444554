//! Shared vocabulary: damage statuses, scene categories, geometry, frame
//! identity and the overlay color code.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of person damage statuses.
pub const NUM_STATUSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown status label {0:?}")]
    UnknownLabel(String),
    #[error("unknown scene category {0:?}")]
    UnknownCategory(String),
    #[error("invalid color {0:?}")]
    InvalidColor(String),
    #[error("bbox {bbox} is {reason} for a {frame_w}x{frame_h} frame")]
    InvalidBBox {
        bbox: BBox,
        frame_w: u32,
        frame_h: u32,
        reason: &'static str,
    },
}

/// Triage status of one tracked person.
///
/// Variants are declared in urgency order, so the derived `Ord` is the
/// urgency chain `Safe < Evacuation < CallForHelp < Emergency`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DamageStatus {
    Safe,
    Evacuation,
    CallForHelp,
    Emergency,
}

impl DamageStatus {
    /// All statuses in canonical (and urgency) order. Confusion matrices,
    /// probability vectors and the wire protocol all use this order.
    pub const ALL: [DamageStatus; NUM_STATUSES] = [
        DamageStatus::Safe,
        DamageStatus::Evacuation,
        DamageStatus::CallForHelp,
        DamageStatus::Emergency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DamageStatus::Safe => "safe",
            DamageStatus::Evacuation => "evacuation",
            DamageStatus::CallForHelp => "call_for_help",
            DamageStatus::Emergency => "emergency",
        }
    }

    /// Position in [`DamageStatus::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<DamageStatus> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for DamageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn normalize_label(label: &str) -> String {
    label
        .trim()
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|s| !s.is_empty())
        .map(str::to_ascii_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Parses a status label, tolerating case and space/underscore/hyphen
/// variants ("Call For Help", "call_for_help", "call-for-help").
pub fn status_from_label(label: &str) -> Result<DamageStatus, ModelError> {
    match normalize_label(label).as_str() {
        "safe" => Ok(DamageStatus::Safe),
        "evacuation" => Ok(DamageStatus::Evacuation),
        "call_for_help" => Ok(DamageStatus::CallForHelp),
        "emergency" => Ok(DamageStatus::Emergency),
        _ => Err(ModelError::UnknownLabel(label.to_string())),
    }
}

impl FromStr for DamageStatus {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        status_from_label(s)
    }
}

impl From<DamageStatus> for String {
    fn from(s: DamageStatus) -> String {
        s.as_str().to_string()
    }
}

impl TryFrom<String> for DamageStatus {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        status_from_label(&s)
    }
}

/// Returns the more urgent of two statuses.
pub fn status_priority(a: DamageStatus, b: DamageStatus) -> DamageStatus {
    a.max(b)
}

/// Anything the pipeline can put a box around: a person status or an
/// auxiliary scene detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SceneCategory {
    Safe,
    Evacuation,
    CallForHelp,
    Emergency,
    Smoke,
    Flame,
}

impl SceneCategory {
    pub const ALL: [SceneCategory; 6] = [
        SceneCategory::Safe,
        SceneCategory::Evacuation,
        SceneCategory::CallForHelp,
        SceneCategory::Emergency,
        SceneCategory::Smoke,
        SceneCategory::Flame,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SceneCategory::Smoke => "smoke",
            SceneCategory::Flame => "flame",
            other => other.as_status().expect("person category").as_str(),
        }
    }

    /// The person status, or `None` for auxiliary detections.
    pub fn as_status(self) -> Option<DamageStatus> {
        match self {
            SceneCategory::Safe => Some(DamageStatus::Safe),
            SceneCategory::Evacuation => Some(DamageStatus::Evacuation),
            SceneCategory::CallForHelp => Some(DamageStatus::CallForHelp),
            SceneCategory::Emergency => Some(DamageStatus::Emergency),
            SceneCategory::Smoke | SceneCategory::Flame => None,
        }
    }

    pub fn is_person(self) -> bool {
        self.as_status().is_some()
    }
}

impl From<DamageStatus> for SceneCategory {
    fn from(s: DamageStatus) -> Self {
        match s {
            DamageStatus::Safe => SceneCategory::Safe,
            DamageStatus::Evacuation => SceneCategory::Evacuation,
            DamageStatus::CallForHelp => SceneCategory::CallForHelp,
            DamageStatus::Emergency => SceneCategory::Emergency,
        }
    }
}

impl fmt::Display for SceneCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneCategory {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_label(s).as_str() {
            "smoke" => Ok(SceneCategory::Smoke),
            "flame" => Ok(SceneCategory::Flame),
            _ => status_from_label(s)
                .map(SceneCategory::from)
                .map_err(|_| ModelError::UnknownCategory(s.to_string())),
        }
    }
}

impl From<SceneCategory> for String {
    fn from(c: SceneCategory) -> String {
        c.as_str().to_string()
    }
}

impl TryFrom<String> for SceneCategory {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Axis-aligned box in source-frame pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        (self.x as u64) < other.right()
            && (other.x as u64) < self.right()
            && (self.y as u64) < other.bottom()
            && (other.y as u64) < self.bottom()
    }

    /// Checks `w, h >= 1` and that the box lies inside a `frame_w x frame_h` frame.
    pub fn validate(&self, frame_w: u32, frame_h: u32) -> Result<(), ModelError> {
        let err = |reason| ModelError::InvalidBBox {
            bbox: *self,
            frame_w,
            frame_h,
            reason,
        };
        if self.w == 0 || self.h == 0 {
            return Err(err("empty"));
        }
        if self.right() > frame_w as u64 || self.bottom() > frame_h as u64 {
            return Err(err("out of bounds"));
        }
        Ok(())
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}x{})", self.x, self.y, self.w, self.h)
    }
}

/// Identity of one frame within a video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: u64,
    pub timestamp_ms: u64,
}

impl FrameRef {
    /// Builds a frame reference, deriving the timestamp from the video frame rate.
    pub fn new(video_id: impl Into<String>, frame_index: u64, fps: f64) -> Self {
        FrameRef {
            video_id: video_id.into(),
            frame_index,
            timestamp_ms: frame_timestamp_ms(frame_index, fps),
        }
    }
}

pub fn frame_timestamp_ms(frame_index: u64, fps: f64) -> u64 {
    (frame_index as f64 * 1000.0 / fps).round() as u64
}

/// Identity of one clip: the track it follows and its anchor frame.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClipKey {
    pub video_id: String,
    pub track_id: u64,
    pub anchor: u64,
}

impl ClipKey {
    pub fn new(video_id: impl Into<String>, track_id: u64, anchor: u64) -> Self {
        ClipKey {
            video_id: video_id.into(),
            track_id,
            anchor,
        }
    }
}

impl fmt::Display for ClipKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.video_id, self.track_id, self.anchor)
    }
}

/// 8-bit RGB display color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const BLUE: Color = Color::rgb(0x00, 0x00, 0xff);
    pub const GREEN: Color = Color::rgb(0x00, 0x80, 0x00);
    pub const YELLOW: Color = Color::rgb(0xff, 0xff, 0x00);
    pub const RED: Color = Color::rgb(0xff, 0x00, 0x00);
    pub const PURPLE: Color = Color::rgb(0x80, 0x00, 0x80);
    pub const ORANGE: Color = Color::rgb(0xff, 0xa5, 0x00);

    const NAMED: [(&'static str, Color); 6] = [
        ("blue", Color::BLUE),
        ("green", Color::GREEN),
        ("yellow", Color::YELLOW),
        ("red", Color::RED),
        ("purple", Color::PURPLE),
        ("orange", Color::ORANGE),
    ];

    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Color { r, g, b }
    }

    /// The palette name, if this is one of the named colors.
    pub fn name(&self) -> Option<&'static str> {
        Self::NAMED.iter().find(|(_, c)| c == self).map(|(n, _)| *n)
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(name) => f.write_str(name),
            None => write!(f, "#{:02x}{:02x}{:02x}", self.r, self.g, self.b),
        }
    }
}

impl FromStr for Color {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if let Some((_, c)) = Self::NAMED.iter().find(|(n, _)| *n == t) {
            return Ok(*c);
        }
        let hex = t
            .strip_prefix('#')
            .filter(|h| h.len() == 6)
            .ok_or_else(|| ModelError::InvalidColor(s.to_string()))?;
        let v = u32::from_str_radix(hex, 16).map_err(|_| ModelError::InvalidColor(s.to_string()))?;
        Ok(Color::rgb((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }
}

impl Serialize for Color {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Color {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayEntry {
    pub color: Color,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

/// Display color and optional text tag for every scene category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlayStyle {
    entries: BTreeMap<SceneCategory, OverlayEntry>,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        let entry = |color, tag: Option<&str>| OverlayEntry {
            color,
            tag: tag.map(str::to_string),
        };
        let entries = BTreeMap::from([
            (SceneCategory::Safe, entry(Color::BLUE, None)),
            (SceneCategory::Evacuation, entry(Color::GREEN, None)),
            (SceneCategory::CallForHelp, entry(Color::YELLOW, Some("SOS"))),
            (SceneCategory::Emergency, entry(Color::RED, None)),
            (SceneCategory::Smoke, entry(Color::PURPLE, None)),
            (SceneCategory::Flame, entry(Color::ORANGE, None)),
        ]);
        OverlayStyle { entries }
    }
}

impl OverlayStyle {
    /// Default palette with the given entries replaced.
    pub fn with_overrides(
        overrides: impl IntoIterator<Item = (SceneCategory, OverlayEntry)>,
    ) -> Self {
        let mut style = OverlayStyle::default();
        style.entries.extend(overrides);
        style
    }

    pub fn entries(&self) -> impl Iterator<Item = (SceneCategory, &OverlayEntry)> {
        self.entries.iter().map(|(c, e)| (*c, e))
    }
}

/// Looks up the display entry for a category.
pub fn category_color(category: SceneCategory, style: &OverlayStyle) -> &OverlayEntry {
    // Every constructor starts from the full default map, so the style is total.
    &style.entries[&category]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn parses_canonical_and_spaced_labels() {
        assert_eq!(status_from_label("safe").unwrap(), DamageStatus::Safe);
        assert_eq!(
            status_from_label("Call For Help").unwrap(),
            DamageStatus::CallForHelp
        );
        assert_eq!(
            status_from_label(" call_for_help ").unwrap(),
            DamageStatus::CallForHelp
        );
        assert_eq!(status_from_label("EMERGENCY").unwrap(), DamageStatus::Emergency);
        assert_eq!(
            status_from_label("rescuer"),
            Err(ModelError::UnknownLabel("rescuer".into()))
        );
        assert!(status_from_label("").is_err());
    }

    #[test]
    fn label_round_trip() {
        for s in DamageStatus::ALL {
            assert_eq!(status_from_label(s.as_str()).unwrap(), s);
            assert!(!s.as_str().contains(' '));
        }
    }

    #[test]
    fn priority_examples() {
        use DamageStatus::*;
        assert_eq!(status_priority(Safe, Emergency), Emergency);
        assert_eq!(status_priority(Evacuation, CallForHelp), CallForHelp);
        assert_eq!(status_priority(Safe, Safe), Safe);
    }

    #[test]
    fn priority_is_a_join() {
        for a in DamageStatus::ALL {
            for b in DamageStatus::ALL {
                assert_eq!(status_priority(a, b), status_priority(b, a));
                assert_eq!(status_priority(a, a), a);
                for c in DamageStatus::ALL {
                    assert_eq!(
                        status_priority(status_priority(a, b), c),
                        status_priority(a, status_priority(b, c))
                    );
                }
            }
        }
    }

    #[test]
    fn default_palette() {
        let style = OverlayStyle::default();
        let safe = category_color(SceneCategory::Safe, &style);
        assert_eq!(safe.color.to_string(), "blue");
        assert_eq!(safe.tag, None);
        let cfh = category_color(SceneCategory::CallForHelp, &style);
        assert_eq!(cfh.color.to_string(), "yellow");
        assert_eq!(cfh.tag.as_deref(), Some("SOS"));
        let smoke = category_color(SceneCategory::Smoke, &style);
        assert_eq!(smoke.color.to_string(), "purple");
        assert_eq!(smoke.tag, None);
        assert_eq!(category_color(SceneCategory::Evacuation, &style).color, Color::GREEN);
        assert_eq!(category_color(SceneCategory::Emergency, &style).color, Color::RED);
        assert_eq!(category_color(SceneCategory::Flame, &style).color, Color::ORANGE);

        let colors: HashSet<_> = style.entries().map(|(_, e)| e.color).collect();
        assert_eq!(style.entries().count(), 6);
        assert_eq!(colors.len(), 6);
    }

    #[test]
    fn palette_override_keeps_other_entries() {
        let style = OverlayStyle::with_overrides([(
            SceneCategory::CallForHelp,
            OverlayEntry {
                color: Color::RED,
                tag: Some("SOS".into()),
            },
        )]);
        assert_eq!(category_color(SceneCategory::CallForHelp, &style).color, Color::RED);
        assert_eq!(category_color(SceneCategory::Safe, &style).color, Color::BLUE);
    }

    #[test]
    fn colors_parse_names_and_hex() {
        assert_eq!("Purple".parse::<Color>().unwrap(), Color::PURPLE);
        assert_eq!("#102030".parse::<Color>().unwrap(), Color::rgb(0x10, 0x20, 0x30));
        assert_eq!(Color::rgb(1, 2, 3).to_string(), "#010203");
        assert!("teal".parse::<Color>().is_err());
    }

    #[test]
    fn scene_categories() {
        assert_eq!(SceneCategory::ALL.len(), 6);
        for c in SceneCategory::ALL {
            assert_eq!(c.as_str().parse::<SceneCategory>().unwrap(), c);
        }
        assert!(!SceneCategory::Smoke.is_person());
        assert_eq!(
            SceneCategory::from(DamageStatus::Emergency).as_status(),
            Some(DamageStatus::Emergency)
        );
        let json = serde_json::to_string(&SceneCategory::CallForHelp).unwrap();
        assert_eq!(json, "\"call_for_help\"");
    }

    #[test]
    fn frame_timestamps() {
        assert_eq!(FrameRef::new("v", 0, 30.0).timestamp_ms, 0);
        assert_eq!(FrameRef::new("v", 1, 30.0).timestamp_ms, 33);
        assert_eq!(FrameRef::new("v", 2, 30.0).timestamp_ms, 67);
        assert_eq!(FrameRef::new("v", 30, 30.0).timestamp_ms, 1000);
    }

    #[test]
    fn bbox_validation() {
        assert!(BBox::new(0, 0, 3840, 2160).validate(3840, 2160).is_ok());
        assert!(BBox::new(3800, 0, 100, 10).validate(3840, 2160).is_err());
        assert!(BBox::new(0, 0, 0, 10).validate(3840, 2160).is_err());
    }

    proptest! {
        #[test]
        fn label_variants_parse(idx in 0usize..4, upper in any::<bool>(), sep in prop::sample::select(vec![" ", "_", "-", "  "])) {
            let s = DamageStatus::ALL[idx];
            let mut label = s.as_str().replace('_', sep);
            if upper {
                label = label.to_uppercase();
            }
            prop_assert_eq!(status_from_label(&label).unwrap(), s);
        }
    }
}
