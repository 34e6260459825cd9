//! Feature encodings of action commands and kinematic state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::labeling::{ActionLabel, ActionType};
use super::normalize_angle_deg;

/// Number of action classes in the one-hot encoding.
pub const N_ACTION_TYPES: usize = 3;

/// Encoded action command: distance one-hot `D`, action one-hot `A` and the
/// angle as `[sin, cos]`. Lane keeping is the all-zero action vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFeatures {
    /// One-hot over [lane_change_left, lane_change_right, turn]; all zeros
    /// encodes lane keeping.
    pub action_onehot: [f64; N_ACTION_TYPES],
    /// One-hot over uniform distance bins.
    pub distance_onehot: Vec<f64>,
    /// `[sin(theta), cos(theta)]`, unit norm.
    pub angle_sincos: [f64; 2],
}

impl ActionFeatures {
    /// Full feature vector in the concatenation order `[D; A; Theta]`.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.distance_onehot);
        out.extend_from_slice(&self.action_onehot);
        out.extend_from_slice(&self.angle_sincos);
        out
    }

    pub fn dim(&self) -> usize {
        self.distance_onehot.len() + N_ACTION_TYPES + 2
    }
}

/// Encodes an action command (or lane keeping when `label` is `None`).
///
/// The distance bin is `floor(distance / max_distance * n_bins)`, clamped to
/// the last bin; lane keeping encodes as the all-zero action vector with
/// distance bin 0 and angle 0.
pub fn encode_action(
    label: Option<&ActionLabel>,
    n_distance_bins: usize,
    max_distance_m: f64,
) -> Result<ActionFeatures> {
    if n_distance_bins == 0 {
        return Err(Error::InvalidInput("n_distance_bins must be >= 1".into()));
    }
    if !(max_distance_m.is_finite() && max_distance_m > 0.0) {
        return Err(Error::InvalidInput(format!(
            "max_distance must be finite and > 0, got {max_distance_m}"
        )));
    }
    let mut action_onehot = [0.0; N_ACTION_TYPES];
    let mut distance_onehot = vec![0.0; n_distance_bins];
    let (bin, angle_deg) = match label {
        None => (0, 0.0),
        Some(label) => {
            if !(label.distance_m.is_finite() && label.distance_m >= 0.0) {
                return Err(Error::InvalidLabel(format!(
                    "action distance must be finite and >= 0, got {}",
                    label.distance_m
                )));
            }
            let slot = match label.action {
                ActionType::LaneChangeLeft => 0,
                ActionType::LaneChangeRight => 1,
                ActionType::Turn => 2,
            };
            action_onehot[slot] = 1.0;
            let bin = ((label.distance_m / max_distance_m * n_distance_bins as f64).floor()
                as usize)
                .min(n_distance_bins - 1);
            (bin, normalize_angle_deg(label.angle_deg))
        }
    };
    distance_onehot[bin] = 1.0;
    let theta = angle_deg.to_radians();
    Ok(ActionFeatures {
        action_onehot,
        distance_onehot,
        angle_sincos: [theta.sin(), theta.cos()],
    })
}

/// Instantaneous kinematic state: speed, acceleration, jerk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub speed_mps: f64,
    pub accel_mps2: f64,
    pub jerk_mps3: f64,
}

impl KinematicState {
    pub fn new(speed_mps: f64, accel_mps2: f64, jerk_mps3: f64) -> Result<Self> {
        if ![speed_mps, accel_mps2, jerk_mps3].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "kinematic state must be finite".into(),
            ));
        }
        Ok(KinematicState {
            speed_mps,
            accel_mps2,
            jerk_mps3,
        })
    }

    pub fn as_vector(&self) -> [f64; 3] {
        [self.speed_mps, self.accel_mps2, self.jerk_mps3]
    }
}
