use image::RgbImage;

use crate::model::BBox;
use crate::windower::Clip;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionFeatures {
    /// Mean centroid displacement per frame as a fraction of the window side.
    pub speed: f64,
    /// Anchor box width over height.
    pub aspect: f64,
    /// Mean absolute inter-frame difference inside the person region, in [0, 1].
    pub motion_energy: f64,
}

/// Person region of frame `t` in clip pixels: anchor-box sized, centered on
/// that frame's box center.
fn region(clip: &Clip, t: usize, size: (u32, u32)) -> (u32, u32) {
    let scale = clip.side() as f64 / clip.window.side as f64;
    let (cx, cy) = clip.source_boxes[t].center();
    let cx = (cx - clip.window.x0 as f64) * scale;
    let cy = (cy - clip.window.y0 as f64) * scale;
    let side = clip.side() as f64;
    let x = (cx - size.0 as f64 / 2.0).round().clamp(0.0, side - size.0 as f64);
    let y = (cy - size.1 as f64 / 2.0).round().clamp(0.0, side - size.1 as f64);
    (x as u32, y as u32)
}

fn region_diff(a: &RgbImage, ao: (u32, u32), b: &RgbImage, bo: (u32, u32), size: (u32, u32)) -> u64 {
    let mut sum = 0u64;
    for dy in 0..size.1 {
        for dx in 0..size.0 {
            let pa = a.get_pixel(ao.0 + dx, ao.1 + dy).0;
            let pb = b.get_pixel(bo.0 + dx, bo.1 + dy).0;
            for c in 0..3 {
                sum += pa[c].abs_diff(pb[c]) as u64;
            }
        }
    }
    sum
}

fn scaled_size(b: BBox, scale: f64, side: u32) -> (u32, u32) {
    let w = ((b.w as f64 * scale).round() as u32).clamp(1, side);
    let h = ((b.h as f64 * scale).round() as u32).clamp(1, side);
    (w, h)
}

/// Speed, posture and local motion of the tracked person over a clip.
pub fn extract_features(clip: &Clip) -> MotionFeatures {
    let n = clip.source_boxes.len();
    let speed = if n < 2 || clip.window.side == 0 {
        0.0
    } else {
        let total: f64 = clip
            .source_boxes
            .windows(2)
            .map(|w| {
                let (ax, ay) = w[0].center();
                let (bx, by) = w[1].center();
                (bx - ax).hypot(by - ay)
            })
            .sum();
        total / (n - 1) as f64 / clip.window.side as f64
    };

    let anchor = clip.anchor_box();
    let aspect = anchor.w as f64 / anchor.h.max(1) as f64;

    let side = clip.side();
    let frames = clip.frames.len().min(n);
    let motion_energy = if frames < 2 || side == 0 {
        0.0
    } else {
        let scale = side as f64 / clip.window.side as f64;
        let size = scaled_size(anchor, scale, side);
        let mut sum = 0u64;
        for t in 0..frames - 1 {
            let a = region(clip, t, size);
            let b = region(clip, t + 1, size);
            sum += region_diff(&clip.frames[t], a, &clip.frames[t + 1], b, size);
        }
        let samples = (frames - 1) as u64 * size.0 as u64 * size.1 as u64 * 3;
        sum as f64 / samples as f64 / 255.0
    };

    MotionFeatures {
        speed,
        aspect,
        motion_energy,
    }
}
