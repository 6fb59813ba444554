use serde::{Deserialize, Serialize};

use super::{ClassifierError, ClassifierOutput, MotionFeatures};
use crate::model::DamageStatus;

/// Probability mass spread over the three losing classes.
pub const BASELINE_EPSILON: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub aspect_lying: f64,
    pub speed_still: f64,
    pub speed_moving: f64,
    pub energy_wave: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            aspect_lying: 1.3,
            speed_still: 0.01,
            speed_moving: 0.02,
            energy_wave: 0.05,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let all = [
            ("aspect_lying", self.aspect_lying),
            ("speed_still", self.speed_still),
            ("speed_moving", self.speed_moving),
            ("energy_wave", self.energy_wave),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(ClassifierError::InvalidThresholds(format!("{name} must be positive, got {v}")));
        }
        if self.speed_still > self.speed_moving {
            return Err(ClassifierError::InvalidThresholds(format!(
                "speed_still {} exceeds speed_moving {}",
                self.speed_still, self.speed_moving
            )));
        }
        Ok(())
    }

    /// The status chosen by the first matching rule.
    pub fn decide(&self, f: &MotionFeatures) -> DamageStatus {
        if f.aspect >= self.aspect_lying && f.speed < self.speed_still {
            DamageStatus::Emergency
        } else if f.speed >= self.speed_moving {
            DamageStatus::Evacuation
        } else if f.motion_energy >= self.energy_wave {
            DamageStatus::CallForHelp
        } else {
            DamageStatus::Safe
        }
    }
}

/// Rule-based classification of motion features.
pub fn classify_baseline(f: &MotionFeatures, t: &Thresholds) -> Result<ClassifierOutput, ClassifierError> {
    t.validate()?;
    let winner = t.decide(f);
    let mut probabilities = [BASELINE_EPSILON / 3.0; 4];
    probabilities[winner.index()] = 1.0 - BASELINE_EPSILON;
    Ok(ClassifierOutput::from_probabilities(probabilities, 0.0))
}
