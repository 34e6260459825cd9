//! Lane-graph action auto-labeling: anchor-path enumeration, ego/anchor
//! matching, action detection, label voting, quality auditing and the
//! feature encodings consumed by the prediction model.

mod encoding;
mod geometry;
mod graph;
mod labeling;

pub use encoding::{encode_action, ActionFeatures, KinematicState};
pub use geometry::{buffer_polyline, match_score, polyline_length, region_iou};
pub use graph::{
    enumerate_anchor_paths, read_lane_graph_json, AnchorPath, AnchorPathSet, EdgeType, LaneEdge,
    LaneGraph, Lanelet,
};
pub use labeling::{
    audit_turn_angles, detect_actions, read_ego_snapshots_jsonl, vote_labels, write_labels_csv,
    ActionLabel, ActionType, AngleBin, EgoSnapshot, VoteResult,
};

/// Default weighting between area overlap and lanelet containment in the
/// matching score.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Default polyline buffer radius in meters for the overlap term.
pub const DEFAULT_BUFFER_M: f64 = 1.0;

/// Default number of distance bins in the action encoding.
pub const DEFAULT_DISTANCE_BINS: usize = 20;

/// Default maximum encodable action distance in meters.
pub const DEFAULT_MAX_DISTANCE_M: f64 = 200.0;

/// Default cap on enumerated anchor paths.
pub const DEFAULT_BRANCH_CAP: usize = 256;

/// Window (meters of arc length) over which lanelet ends are linearly
/// approximated when measuring turn angles.
pub const HEADING_WINDOW_M: f64 = 5.0;

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn normalize_angle_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}
