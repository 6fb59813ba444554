//! Training manifest and clip export tree.
//!
//! The manifest is a flat `key=value` text file. Keys, in order:
//!
//! | key | default |
//! |---|---|
//! | `loss` | `cross_entropy` |
//! | `optimizer` | `momentum_sgd` |
//! | `momentum` | `0.9` |
//! | `dampening` | `0` |
//! | `weight_decay` | `0.001` |
//! | `learning_rate` | `0.1` |
//! | `batch_size` | `128` |
//! | `epochs` | `200` |
//! | `lr_step_epochs` | `50` |
//! | `lr_step_factor` | `0.1` |
//! | `input_frames` | `16` |
//! | `input_side` | `112` |
//! | `input_channels` | `3` |
//! | `augment_random_crop` | `true` |
//! | `augment_hflip_probability` | `0.5` |
//! | `classes` | `safe,evacuation,call_for_help,emergency` |
//! | `split_file` | `split.csv` |
//! | `overridden` | comma list of keys changed from their default |
//!
//! Clips go to `<split>/<class>/<video>_<track>_<anchor>/`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{DatasetError, Split, SplitPlan};
use crate::model::{ClipKey, DamageStatus};
use crate::windower::Clip;

pub const MANIFEST_FILE: &str = "training_manifest.txt";
pub const SPLIT_FILE: &str = "split.csv";

const DEFAULTS: [(&str, &str); 17] = [
    ("loss", "cross_entropy"),
    ("optimizer", "momentum_sgd"),
    ("momentum", "0.9"),
    ("dampening", "0"),
    ("weight_decay", "0.001"),
    ("learning_rate", "0.1"),
    ("batch_size", "128"),
    ("epochs", "200"),
    ("lr_step_epochs", "50"),
    ("lr_step_factor", "0.1"),
    ("input_frames", "16"),
    ("input_side", "112"),
    ("input_channels", "3"),
    ("augment_random_crop", "true"),
    ("augment_hflip_probability", "0.5"),
    ("classes", "safe,evacuation,call_for_help,emergency"),
    ("split_file", SPLIT_FILE),
];

const NUMERIC_KEYS: [&str; 11] = [
    "momentum",
    "dampening",
    "weight_decay",
    "learning_rate",
    "batch_size",
    "epochs",
    "lr_step_epochs",
    "lr_step_factor",
    "input_frames",
    "input_side",
    "input_channels",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingManifest {
    values: Vec<(String, String)>,
    overridden: BTreeSet<String>,
}

impl Default for TrainingManifest {
    fn default() -> Self {
        TrainingManifest {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            overridden: BTreeSet::new(),
        }
    }
}

impl TrainingManifest {
    /// Defaults with `overrides` applied. Unknown keys and malformed numbers
    /// are rejected.
    pub fn with_overrides<'a>(
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, DatasetError> {
        let mut m = Self::default();
        for (k, v) in overrides {
            m.set(k, v)?;
        }
        Ok(m)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), DatasetError> {
        let bad = |message: String| DatasetError::Manifest {
            key: key.to_string(),
            message,
        };
        let value = value.trim();
        if NUMERIC_KEYS.contains(&key) && value.parse::<f64>().map_or(true, |x| !x.is_finite()) {
            return Err(bad(format!("expected a number, got {value:?}")));
        }
        if key == "augment_random_crop" && value != "true" && value != "false" {
            return Err(bad(format!("expected true or false, got {value:?}")));
        }
        if value.contains('\n') || value.contains('=') {
            return Err(bad("value may not contain newlines or '='".into()));
        }
        let default = DEFAULTS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| bad("unknown key".into()))?;
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| k == key)
            .expect("defaults cover every key");
        slot.1 = value.to_string();
        if value == default {
            self.overridden.remove(key);
        } else {
            self.overridden.insert(key.to_string());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_overridden(&self, key: &str) -> bool {
        self.overridden.contains(key)
    }

    pub fn overridden(&self) -> impl Iterator<Item = &str> {
        self.overridden.iter().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        let list: Vec<&str> = self.overridden().collect();
        let _ = writeln!(out, "overridden={}", list.join(","));
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut m = Self::default();
        let mut declared: Option<BTreeSet<String>> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DatasetError::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            if k == "overridden" {
                declared = Some(
                    v.split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect(),
                );
            } else {
                m.set(k.trim(), v)?;
            }
        }
        if let Some(declared) = declared {
            if declared != m.overridden {
                return Err(DatasetError::Manifest {
                    key: "overridden".into(),
                    message: format!(
                        "declares {:?} but values differ from defaults for {:?}",
                        declared, m.overridden
                    ),
                });
            }
        }
        Ok(m)
    }
}

/// Relative directory of one exported clip.
pub fn clip_dir_name(split: Split, label: DamageStatus, key: &ClipKey) -> String {
    format!("{split}/{label}/{}_{}_{}", key.video_id, key.track_id, key.anchor)
}

/// Writes the split file, the training manifest and every clip of `plan`
/// under `out_dir`.
///
/// `clip_for` materializes a clip by key. Clips are written as produced, with
/// no augmentation; the trainer applies it per epoch.
pub fn export_training_manifest<F>(
    plan: &SplitPlan,
    manifest: &TrainingManifest,
    out_dir: &Path,
    mut clip_for: F,
) -> Result<(), DatasetError>
where
    F: FnMut(&ClipKey) -> Result<Clip, DatasetError>,
{
    if plan.is_empty() {
        return Err(DatasetError::EmptySplit);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| DatasetError::io(out_dir, e))?;
    plan.save(&out_dir.join(manifest.get("split_file").unwrap_or(SPLIT_FILE)))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, manifest.to_text()).map_err(|e| DatasetError::io(&manifest_path, e))?;

    for (key, entry) in &plan.entries {
        let clip = clip_for(key)?;
        clip.write_dir(&out_dir.join(clip_dir_name(entry.split, entry.label, key)))?;
    }
    Ok(())
}
