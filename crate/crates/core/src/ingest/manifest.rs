use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;

const MANIFEST_HEADER: [&str; 9] = [
    "video_id",
    "pattern",
    "altitude_m",
    "path_kind",
    "width",
    "height",
    "fps",
    "frame_count",
    "synthetic",
];

/// Allowed drone altitudes in meters.
pub const ALTITUDES_M: [u32; 4] = [10, 20, 30, 50];

/// Resolution and frame rate every real (non-synthetic) capture declares.
pub const REAL_WIDTH: u32 = 3840;
pub const REAL_HEIGHT: u32 = 2160;
pub const REAL_FPS: f64 = 30.0;

/// Scripted disaster scenario a video was captured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pattern {
    A,
    B,
    C,
    D,
    E,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [Pattern::A, Pattern::B, Pattern::C, Pattern::D, Pattern::E];

    /// Pattern B is reserved for test clips.
    pub fn is_test_pattern(self) -> bool {
        self == Pattern::B
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Pattern::A),
            "B" | "b" => Ok(Pattern::B),
            "C" | "c" => Ok(Pattern::C),
            "D" | "d" => Ok(Pattern::D),
            "E" | "e" => Ok(Pattern::E),
            other => Err(format!("pattern must be one of A-E, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Straight,
    TurnSmall,
    TurnLarge,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Straight => "straight",
            PathKind::TurnSmall => "turn_small",
            PathKind::TurnLarge => "turn_large",
        }
    }
}

impl FromStr for PathKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "straight" => Ok(PathKind::Straight),
            "turn_small" => Ok(PathKind::TurnSmall),
            "turn_large" => Ok(PathKind::TurnLarge),
            other => Err(format!("expected straight|turn_small|turn_large, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub pattern: Pattern,
    pub altitude_m: u32,
    pub path_kind: PathKind,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: u64,
    pub synthetic: bool,
}

impl VideoMeta {
    /// Checks every per-row invariant. `line` is only used for error reporting.
    pub fn validate(&self, line: Option<u64>) -> Result<(), IngestError> {
        let fail = |rule, detail: String| Err(IngestError::validation(line, rule, detail));
        if self.video_id.is_empty() {
            return fail("video_id", "empty video id".into());
        }
        if !ALTITUDES_M.contains(&self.altitude_m) {
            return fail(
                "altitude",
                format!("{} m not in {:?}", self.altitude_m, ALTITUDES_M),
            );
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail("fps", format!("fps must be positive, got {}", self.fps));
        }
        if self.frame_count < 1 {
            return fail("frame_count", "frame_count must be at least 1".into());
        }
        if self.width == 0 || self.height == 0 {
            return fail("dimensions", "width and height must be positive".into());
        }
        if !self.synthetic
            && (self.width != REAL_WIDTH || self.height != REAL_HEIGHT || self.fps != REAL_FPS)
        {
            return fail(
                "capture format",
                format!(
                    "non-synthetic video must be {REAL_WIDTH}x{REAL_HEIGHT}@{REAL_FPS}, got {}x{}@{}",
                    self.width, self.height, self.fps
                ),
            );
        }
        Ok(())
    }
}

fn field<T: FromStr>(record: &csv::StringRecord, idx: usize, line: u64) -> Result<T, IngestError>
where
    T::Err: fmt::Display,
{
    let raw = record.get(idx).ok_or_else(|| IngestError::Parse {
        line,
        field: MANIFEST_HEADER[idx].into(),
        message: "missing field".into(),
    })?;
    raw.trim().parse().map_err(|e: T::Err| IngestError::Parse {
        line,
        field: MANIFEST_HEADER[idx].into(),
        message: e.to_string(),
    })
}

/// Parses and validates a manifest from any reader.
pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<VideoMeta>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != MANIFEST_HEADER {
        return Err(IngestError::Parse {
            line: 1,
            field: "header".into(),
            message: format!("expected `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut videos = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let synthetic: u8 = field(&record, 8, line)?;
        if synthetic > 1 {
            return Err(IngestError::Parse {
                line,
                field: "synthetic".into(),
                message: "expected 0 or 1".into(),
            });
        }
        let meta = VideoMeta {
            video_id: field(&record, 0, line)?,
            pattern: field(&record, 1, line)?,
            altitude_m: field(&record, 2, line)?,
            path_kind: field(&record, 3, line)?,
            width: field(&record, 4, line)?,
            height: field(&record, 5, line)?,
            fps: field(&record, 6, line)?,
            frame_count: field(&record, 7, line)?,
            synthetic: synthetic == 1,
        };
        meta.validate(Some(line))?;
        if !seen.insert(meta.video_id.clone()) {
            return Err(IngestError::validation(
                Some(line),
                "duplicate id",
                format!("video_id {:?} appears more than once", meta.video_id),
            ));
        }
        videos.push(meta);
    }
    Ok(videos)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<VideoMeta>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_manifest(file)
}

pub fn write_manifest<W: Write>(videos: &[VideoMeta], writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MANIFEST_HEADER)?;
    for v in videos {
        w.write_record([
            v.video_id.clone(),
            v.pattern.to_string(),
            v.altitude_m.to_string(),
            v.path_kind.as_str().to_string(),
            v.width.to_string(),
            v.height.to_string(),
            v.fps.to_string(),
            v.frame_count.to_string(),
            u8::from(v.synthetic).to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::io(Path::new("<manifest>"), e))?;
    Ok(())
}
