use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, VideoMeta};
use crate::model::{status_from_label, BBox, DamageStatus};

const ANNOTATION_HEADER: [&str; 7] = ["frame_index", "track_id", "x", "y", "w", "h", "status"];

/// One person box on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackAnnotation {
    pub frame_index: u64,
    pub track_id: u64,
    pub bbox: BBox,
    pub status: DamageStatus,
}

/// Time-ordered boxes of one person identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub video_id: String,
    /// Strictly increasing `frame_index`.
    pub annotations: Vec<TrackAnnotation>,
}

impl Track {
    /// Maximal runs of consecutive frame indices.
    pub fn segments(&self) -> Vec<&[TrackAnnotation]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.annotations.len() {
            let split = i == self.annotations.len()
                || self.annotations[i].frame_index != self.annotations[i - 1].frame_index + 1;
            if split {
                out.push(&self.annotations[start..i]);
                start = i;
            }
        }
        out
    }

    pub fn annotation_at(&self, frame_index: u64) -> Option<&TrackAnnotation> {
        self.annotations
            .binary_search_by_key(&frame_index, |a| a.frame_index)
            .ok()
            .map(|i| &self.annotations[i])
    }

    /// Annotations for `frame_index..frame_index + len`, or `None` if any is missing.
    pub fn window(&self, first_frame: u64, len: usize) -> Option<&[TrackAnnotation]> {
        let start = self
            .annotations
            .binary_search_by_key(&first_frame, |a| a.frame_index)
            .ok()?;
        let slice = self.annotations.get(start..start + len)?;
        let last = slice.last()?;
        (last.frame_index == first_frame + len as u64 - 1).then_some(slice)
    }
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    line: u64,
) -> Result<T, IngestError>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(idx).ok_or_else(|| IngestError::Parse {
        line,
        field: ANNOTATION_HEADER[idx].into(),
        message: "missing field".into(),
    })?;
    raw.trim().parse().map_err(|e: T::Err| IngestError::Parse {
        line,
        field: ANNOTATION_HEADER[idx].into(),
        message: e.to_string(),
    })
}

/// Parses annotation CSV rows for one video into tracks sorted by id.
pub fn read_annotations<R: Read>(reader: R, meta: &VideoMeta) -> Result<Vec<Track>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ANNOTATION_HEADER {
        return Err(IngestError::Parse {
            line: 1,
            field: "header".into(),
            message: format!("expected `{}`", ANNOTATION_HEADER.join(",")),
        });
    }

    let mut by_track: BTreeMap<u64, BTreeMap<u64, TrackAnnotation>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let frame_index: u64 = parse_field(&record, 0, line)?;
        let track_id: u64 = parse_field(&record, 1, line)?;
        let bbox = BBox::new(
            parse_field(&record, 2, line)?,
            parse_field(&record, 3, line)?,
            parse_field(&record, 4, line)?,
            parse_field(&record, 5, line)?,
        );
        let label = record.get(6).unwrap_or_default();
        let status = status_from_label(label).map_err(|e| {
            IngestError::validation(Some(line), "unknown label", e.to_string())
        })?;

        if track_id == 0 {
            return Err(IngestError::validation(Some(line), "track id", "track_id must be positive"));
        }
        if frame_index >= meta.frame_count {
            return Err(IngestError::validation(
                Some(line),
                "frame range",
                format!("frame {frame_index} beyond frame_count {}", meta.frame_count),
            ));
        }
        bbox.validate(meta.width, meta.height)
            .map_err(|e| IngestError::validation(Some(line), "bbox bounds", e.to_string()))?;

        let ann = TrackAnnotation {
            frame_index,
            track_id,
            bbox,
            status,
        };
        if by_track
            .entry(track_id)
            .or_default()
            .insert(frame_index, ann)
            .is_some()
        {
            return Err(IngestError::validation(
                Some(line),
                "duplicate (frame, track)",
                format!("frame {frame_index} track {track_id} annotated twice"),
            ));
        }
    }

    Ok(by_track
        .into_iter()
        .map(|(track_id, rows)| Track {
            track_id,
            video_id: meta.video_id.clone(),
            annotations: rows.into_values().collect(),
        })
        .collect())
}

pub fn parse_annotations(path: impl AsRef<Path>, meta: &VideoMeta) -> Result<Vec<Track>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_annotations(file, meta)
}

/// Writes tracks as annotation CSV, ordered by frame then track.
pub fn write_annotations<W: Write>(tracks: &[Track], writer: W) -> Result<(), IngestError> {
    let mut rows: Vec<&TrackAnnotation> = tracks.iter().flat_map(|t| &t.annotations).collect();
    rows.sort_by_key(|a| (a.frame_index, a.track_id));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ANNOTATION_HEADER)?;
    for a in rows {
        w.write_record([
            a.frame_index.to_string(),
            a.track_id.to_string(),
            a.bbox.x.to_string(),
            a.bbox.y.to_string(),
            a.bbox.w.to_string(),
            a.bbox.h.to_string(),
            a.status.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| IngestError::io(Path::new("<annotations>"), e))?;
    Ok(())
}

pub fn serialize_annotations(tracks: &[Track]) -> String {
    let mut buf = Vec::new();
    write_annotations(tracks, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{PathKind, Pattern};
    use proptest::prelude::*;

    fn meta() -> VideoMeta {
        VideoMeta {
            video_id: "v01".into(),
            pattern: Pattern::A,
            altitude_m: 30,
            path_kind: PathKind::Straight,
            width: 3840,
            height: 2160,
            fps: 30.0,
            frame_count: 1000,
            synthetic: false,
        }
    }

    fn parse(body: &str) -> Result<Vec<Track>, IngestError> {
        read_annotations(
            format!("frame_index,track_id,x,y,w,h,status\n{body}").as_bytes(),
            &meta(),
        )
    }

    #[test]
    fn groups_contiguous_rows() {
        let tracks = parse("6,7,10,10,20,40,safe\n5,7,10,10,20,40,safe\n").unwrap();
        assert_eq!(tracks.len(), 1);
        let t = &tracks[0];
        assert_eq!(t.track_id, 7);
        assert_eq!(t.annotations[0].frame_index, 5);
        let segs = t.segments();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 2);
    }

    #[test]
    fn gap_splits_segments() {
        let tracks = parse("5,7,10,10,20,40,safe\n9,7,10,10,20,40,Call For Help\n").unwrap();
        let segs = tracks[0].segments();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1][0].status, DamageStatus::CallForHelp);
    }

    #[test]
    fn rejects_box_outside_frame() {
        let err = parse("0,1,3800,0,100,40,safe\n").unwrap_err();
        assert_eq!(err.rule(), Some("bbox bounds"));
    }

    #[test]
    fn rejects_duplicates_and_labels() {
        let err = parse("0,1,0,0,10,10,safe\n0,1,5,5,10,10,safe\n").unwrap_err();
        assert_eq!(err.rule(), Some("duplicate (frame, track)"));
        let err = parse("0,1,0,0,10,10,rescuer\n").unwrap_err();
        assert_eq!(err.rule(), Some("unknown label"));
        assert!(matches!(
            parse("x,1,0,0,10,10,safe\n").unwrap_err(),
            IngestError::Parse { .. }
        ));
    }

    #[test]
    fn window_lookup() {
        let tracks = parse("0,1,0,0,9,9,safe\n1,1,0,0,9,9,safe\n2,1,0,0,9,9,safe\n4,1,0,0,9,9,safe\n").unwrap();
        let t = &tracks[0];
        assert_eq!(t.window(0, 3).map(|w| w.len()), Some(3));
        assert!(t.window(1, 3).is_none());
        assert!(t.window(3, 1).is_none());
        assert_eq!(t.annotation_at(4).unwrap().frame_index, 4);
    }

    fn arb_tracks() -> impl Strategy<Value = Vec<Track>> {
        prop::collection::btree_map(
            1u64..50,
            prop::collection::btree_map(
                0u64..1000,
                (0u32..3000, 0u32..2000, 1u32..200, 1u32..160, 0usize..4),
                1..20,
            ),
            0..6,
        )
        .prop_map(|tracks| {
            tracks
                .into_iter()
                .map(|(track_id, rows)| Track {
                    track_id,
                    video_id: "v01".into(),
                    annotations: rows
                        .into_iter()
                        .map(|(frame_index, (x, y, w, h, s))| TrackAnnotation {
                            frame_index,
                            track_id,
                            bbox: BBox::new(x, y, w, h),
                            status: DamageStatus::ALL[s],
                        })
                        .collect(),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(tracks in arb_tracks()) {
            let text = serialize_annotations(&tracks);
            let parsed = read_annotations(text.as_bytes(), &meta()).unwrap();
            prop_assert_eq!(parsed, tracks);
        }

        #[test]
        fn segments_concatenate_to_track(tracks in arb_tracks()) {
            for t in &tracks {
                let joined: Vec<TrackAnnotation> = t.segments().concat();
                prop_assert_eq!(&joined, &t.annotations);
                for seg in t.segments() {
                    for pair in seg.windows(2) {
                        prop_assert_eq!(pair[1].frame_index, pair[0].frame_index + 1);
                    }
                }
            }
        }
    }
}
