use image::imageops;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::DatasetError;
use crate::windower::{resize_square, Clip};

pub const DEFAULT_INPUT_SIDE: u32 = 112;
pub const DEFAULT_HFLIP_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationSpec {
    /// Side of the network input.
    pub out_side: u32,
    /// Side of the random sub-square taken before resizing. `None` uses
    /// `out_side`.
    pub crop_side: Option<u32>,
    pub random_crop: bool,
    pub hflip_probability: f64,
    pub rng_seed: u64,
}

impl AugmentationSpec {
    pub fn train(rng_seed: u64) -> Self {
        AugmentationSpec {
            out_side: DEFAULT_INPUT_SIDE,
            crop_side: None,
            random_crop: true,
            hflip_probability: DEFAULT_HFLIP_PROBABILITY,
            rng_seed,
        }
    }

    /// Resize only.
    pub fn eval(out_side: u32) -> Self {
        AugmentationSpec {
            out_side,
            crop_side: None,
            random_crop: false,
            hflip_probability: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..=1.0).contains(&self.hflip_probability) {
            return Err(DatasetError::InvalidSpec(format!(
                "hflip_probability {} outside [0, 1]",
                self.hflip_probability
            )));
        }
        if self.out_side == 0 || self.crop_side == Some(0) {
            return Err(DatasetError::InvalidSpec("zero output side".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedClip {
    pub clip: Clip,
    pub flipped: bool,
    /// Top-left of the shared crop in the input clip's pixel space.
    pub crop_origin: (u32, u32),
}

fn stream_seed(spec: &AugmentationSpec, clip: &Clip, sample_index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"augment/v1");
    h.update(spec.rng_seed.to_le_bytes());
    h.update((clip.video_id.len() as u64).to_le_bytes());
    h.update(clip.video_id.as_bytes());
    h.update(clip.track_id.to_le_bytes());
    h.update(clip.anchor_frame_index.to_le_bytes());
    h.update(sample_index.to_le_bytes());
    h.finalize().into()
}

/// Applies the training-time transforms to a whole clip.
///
/// One crop position and one flip decision are drawn per call and shared by
/// all 16 frames. The random stream depends only on the augmentation seed, the clip
/// key and `sample_index`.
pub fn augment_clip(
    clip: &Clip,
    spec: &AugmentationSpec,
    sample_index: u64,
) -> Result<AugmentedClip, DatasetError> {
    spec.validate()?;
    let side = clip.side();
    let mut rng = ChaCha8Rng::from_seed(stream_seed(spec, clip, sample_index));

    let (origin, crop_side) = if spec.random_crop {
        let crop_side = spec.crop_side.unwrap_or(spec.out_side);
        if crop_side > side {
            return Err(DatasetError::InvalidSpec(format!(
                "crop side {crop_side} exceeds clip side {side}"
            )));
        }
        let slack = side - crop_side;
        ((rng.random_range(0..=slack), rng.random_range(0..=slack)), crop_side)
    } else {
        ((0, 0), side)
    };
    let flipped = spec.hflip_probability > 0.0 && rng.random_bool(spec.hflip_probability);

    let frames = clip
        .frames
        .iter()
        .map(|f| {
            let cropped = if crop_side == side {
                f.clone()
            } else {
                imageops::crop_imm(f, origin.0, origin.1, crop_side, crop_side).to_image()
            };
            let resized = if crop_side == spec.out_side {
                cropped
            } else {
                resize_square(&cropped, spec.out_side)
            };
            if flipped {
                imageops::flip_horizontal(&resized)
            } else {
                resized
            }
        })
        .collect();

    Ok(AugmentedClip {
        clip: Clip {
            frames,
            ..clip.clone()
        },
        flipped,
        crop_origin: origin,
    })
}
