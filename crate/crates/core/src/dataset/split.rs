use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, SampledClips};
use crate::ingest::{Pattern, VideoMeta};
use crate::model::{ClipKey, DamageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitEntry {
    pub split: Split,
    pub label: DamageStatus,
}

/// Train/val/test assignment for a sampled clip set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub quota: usize,
    pub min_spacing: u64,
    pub entries: BTreeMap<ClipKey, SplitEntry>,
}

const SPLIT_HEADER: &str = "video_id,track_id,anchor,label,split";

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys_in(&self, split: Split) -> impl Iterator<Item = (&ClipKey, DamageStatus)> {
        self.entries
            .iter()
            .filter(move |(_, e)| e.split == split)
            .map(|(k, e)| (k, e.label))
    }

    /// Clip counts indexed by `[class][split]`.
    pub fn counts(&self) -> [[usize; 3]; 4] {
        let mut out = [[0; 3]; 4];
        for e in self.entries.values() {
            out[e.label.index()][e.split as usize] += 1;
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# clip split plan")?;
        writeln!(w, "seed={}", self.seed)?;
        writeln!(w, "quota={}", self.quota)?;
        writeln!(w, "min_spacing={}", self.min_spacing)?;
        writeln!(w, "{SPLIT_HEADER}")?;
        for (k, e) in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                k.video_id, k.track_id, k.anchor, e.label, e.split
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| DatasetError::io(path, e))
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut seed = None;
        let mut quota = None;
        let mut min_spacing = None;
        let mut in_body = false;
        let mut entries = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let parse_err = |message: String| DatasetError::Parse {
                line: line_no,
                message,
            };
            let line = line.map_err(|e| parse_err(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !in_body {
                if line == SPLIT_HEADER {
                    in_body = true;
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
                let v = v.trim();
                match k.trim() {
                    "seed" => seed = Some(v.parse().map_err(|_| parse_err(format!("bad seed {v:?}")))?),
                    "quota" => quota = Some(v.parse().map_err(|_| parse_err(format!("bad quota {v:?}")))?),
                    "min_spacing" => {
                        min_spacing =
                            Some(v.parse().map_err(|_| parse_err(format!("bad min_spacing {v:?}")))?)
                    }
                    other => return Err(parse_err(format!("unknown header key {other:?}"))),
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(parse_err(format!("expected 5 columns, got {}", cols.len())));
            }
            let track_id = cols[1]
                .parse()
                .map_err(|_| parse_err(format!("bad track_id {:?}", cols[1])))?;
            let anchor = cols[2]
                .parse()
                .map_err(|_| parse_err(format!("bad anchor {:?}", cols[2])))?;
            let label = DamageStatus::from_str(cols[3]).map_err(|e| parse_err(e.to_string()))?;
            let split = Split::from_str(cols[4]).map_err(parse_err)?;
            let key = ClipKey::new(cols[0], track_id, anchor);
            if entries.insert(key.clone(), SplitEntry { split, label }).is_some() {
                return Err(parse_err(format!("duplicate clip {key}")));
            }
        }
        let missing = |what: &str| DatasetError::Parse {
            line: 0,
            message: format!("missing {what}"),
        };
        if !in_body {
            return Err(missing("column header"));
        }
        Ok(SplitPlan {
            seed: seed.ok_or_else(|| missing("seed"))?,
            quota: quota.ok_or_else(|| missing("quota"))?,
            min_spacing: min_spacing.ok_or_else(|| missing("min_spacing"))?,
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

/// Assigns sampled keys to train/val/test at 8:1:1 per class.
///
/// Test keys come only from pattern-B videos, train and val keys only from
/// the other patterns.
pub fn make_split(
    sampled: &SampledClips,
    videos: &[VideoMeta],
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    let quota = sampled.quota;
    if quota == 0 || !quota.is_multiple_of(10) {
        return Err(DatasetError::InvalidQuota(quota));
    }
    let patterns: HashMap<&str, Pattern> =
        videos.iter().map(|v| (v.video_id.as_str(), v.pattern)).collect();
    let tenth = quota / 10;
    let mut entries = BTreeMap::new();

    for status in DamageStatus::ALL {
        let keys = sampled.by_class.get(&status).map(Vec::as_slice).unwrap_or(&[]);
        if keys.len() != quota {
            return Err(DatasetError::UnbalancedSample(format!(
                "{status} has {} keys, expected {quota}",
                keys.len()
            )));
        }
        let mut test_side = Vec::new();
        let mut train_side = Vec::new();
        for k in keys {
            let pattern = patterns
                .get(k.video_id.as_str())
                .ok_or_else(|| DatasetError::UnknownVideo(k.video_id.clone()))?;
            if pattern.is_test_pattern() {
                test_side.push(k);
            } else {
                train_side.push(k);
            }
        }
        if test_side.len() < tenth {
            return Err(DatasetError::PatternShortage {
                class: status.to_string(),
                side: "pattern B",
                have: test_side.len(),
                need: tenth,
            });
        }
        if train_side.len() < 9 * tenth {
            return Err(DatasetError::PatternShortage {
                class: status.to_string(),
                side: "patterns A/C/D/E",
                have: train_side.len(),
                need: 9 * tenth,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(status.index() as u64);
        test_side.sort();
        train_side.sort();
        test_side.shuffle(&mut rng);
        train_side.shuffle(&mut rng);

        let assign = test_side
            .into_iter()
            .take(tenth)
            .map(|k| (k, Split::Test))
            .chain(train_side.iter().take(8 * tenth).map(|k| (*k, Split::Train)))
            .chain(train_side.iter().skip(8 * tenth).take(tenth).map(|k| (*k, Split::Val)));
        for (k, split) in assign {
            entries.insert(k.clone(), SplitEntry { split, label: status });
        }
    }

    Ok(SplitPlan {
        seed,
        quota,
        min_spacing: sampled.min_spacing,
        entries,
    })
}
