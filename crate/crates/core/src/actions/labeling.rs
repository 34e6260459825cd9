//! Action detection along an anchor path, per-snapshot label voting and
//! turn-angle quality auditing.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::polyline_length;
use super::graph::{AnchorPath, EdgeType, LaneGraph};
use super::{normalize_angle_deg, HEADING_WINDOW_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Turn,
    LaneChangeLeft,
    LaneChangeRight,
}

impl std::fmt::Display for ActionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActionType::Turn => write!(f, "turn"),
            ActionType::LaneChangeLeft => write!(f, "lane_change_left"),
            ActionType::LaneChangeRight => write!(f, "lane_change_right"),
        }
    }
}

/// One detected driving action, positioned in the global arc-length frame
/// (driven distance from session start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLabel {
    pub action: ActionType,
    pub distance_m: f64,
    /// Signed turn angle in `(-180, 180]`; 0 for lane changes.
    pub angle_deg: f64,
}

impl ActionLabel {
    pub fn new(action: ActionType, distance_m: f64, angle_deg: f64) -> Result<Self> {
        if !(distance_m.is_finite() && distance_m >= 0.0) {
            return Err(Error::InvalidLabel(format!(
                "action distance must be finite and >= 0, got {distance_m}"
            )));
        }
        if !angle_deg.is_finite() {
            return Err(Error::InvalidLabel("action angle must be finite".into()));
        }
        let angle_deg = if action == ActionType::Turn {
            normalize_angle_deg(angle_deg)
        } else {
            0.0
        };
        Ok(ActionLabel {
            action,
            distance_m,
            angle_deg,
        })
    }
}

/// Heading (degrees) of the least-squares line over the points within
/// `window_m` of arc length from one end of the polyline, oriented along the
/// direction of travel.
fn end_heading_deg(points: &[[f64; 2]], from_end: bool, window_m: f64) -> f64 {
    // Collect the window in travel order.
    let mut window: Vec<[f64; 2]> = Vec::new();
    if from_end {
        let mut acc = 0.0;
        window.push(*points.last().unwrap());
        for w in points.windows(2).rev() {
            acc += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            window.push(w[0]);
            if acc >= window_m {
                break;
            }
        }
        window.reverse();
    } else {
        let mut acc = 0.0;
        window.push(points[0]);
        for w in points.windows(2) {
            acc += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            window.push(w[1]);
            if acc >= window_m {
                break;
            }
        }
    }
    // Principal axis of the centered window (total least squares direction).
    let n = window.len() as f64;
    let cx = window.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = window.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for p in &window {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (mut dx, mut dy) = (theta.cos(), theta.sin());
    // Orient along travel using the window chord.
    let chord = (
        window.last().unwrap()[0] - window[0][0],
        window.last().unwrap()[1] - window[0][1],
    );
    if dx * chord.0 + dy * chord.1 < 0.0 {
        dx = -dx;
        dy = -dy;
    }
    dy.atan2(dx).to_degrees()
}

/// Walks the anchor path and emits action labels:
///
/// * every longitudinal transition out of a fork (>= 2 outgoing longitudinal
///   edges) is a turn whose angle is the heading change between the local
///   linear approximations of the two lanelet ends;
/// * every lateral transition is a lane change.
///
/// Distances are global arc lengths: `arclength_offset` plus the driven
/// distance along the path; an event sits at the end of the lanelet it
/// leaves. An empty result means lane keeping throughout.
pub fn detect_actions(
    graph: &LaneGraph,
    anchor: &AnchorPath,
    arclength_offset: f64,
) -> Result<Vec<ActionLabel>> {
    if !(arclength_offset.is_finite() && arclength_offset >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "arclength offset must be finite and >= 0, got {arclength_offset}"
        )));
    }
    let mut labels = Vec::new();
    let mut cumulative = arclength_offset;
    for pair in anchor.lanelets.windows(2) {
        let from = graph
            .lanelet(&pair[0])
            .ok_or_else(|| Error::UnknownLanelet(pair[0].clone()))?;
        let to = graph
            .lanelet(&pair[1])
            .ok_or_else(|| Error::UnknownLanelet(pair[1].clone()))?;
        let edge = graph.edge_between(&pair[0], &pair[1]).ok_or_else(|| {
            Error::InvalidInput(format!(
                "anchor path is not edge-connected at {} -> {}",
                pair[0], pair[1]
            ))
        })?;
        cumulative += polyline_length(&from.centerline);
        match edge.edge_type {
            EdgeType::Longitudinal => {
                if graph.longitudinal_out_degree(&pair[0]) >= 2 {
                    let heading_in = end_heading_deg(&from.centerline, true, HEADING_WINDOW_M);
                    let heading_out = end_heading_deg(&to.centerline, false, HEADING_WINDOW_M);
                    labels.push(ActionLabel::new(
                        ActionType::Turn,
                        cumulative,
                        heading_out - heading_in,
                    )?);
                }
            }
            EdgeType::LateralLeft => {
                labels.push(ActionLabel::new(ActionType::LaneChangeLeft, cumulative, 0.0)?);
            }
            EdgeType::LateralRight => {
                labels.push(ActionLabel::new(ActionType::LaneChangeRight, cumulative, 0.0)?);
            }
        }
    }
    Ok(labels)
}

/// Outcome of consolidating per-snapshot labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub labels: Vec<ActionLabel>,
    /// Groups dropped because no action type had a strict plurality.
    pub discarded_ties: usize,
}

/// Majority-votes labels from multiple snapshots sharing the global
/// arc-length frame. Labels within `position_tolerance_m` of one another
/// (single-linkage on sorted positions) form a group; each group resolves to
/// its modal action type with the median distance and angle of the modal
/// members, and groups whose vote ties are discarded. The result does not
/// depend on snapshot order.
pub fn vote_labels(snapshots: &[Vec<ActionLabel>], position_tolerance_m: f64) -> VoteResult {
    let mut all: Vec<&ActionLabel> = snapshots.iter().flatten().collect();
    all.sort_by(|a, b| {
        (a.distance_m, a.action, a.angle_deg)
            .partial_cmp(&(b.distance_m, b.action, b.angle_deg))
            .unwrap()
    });

    let mut labels = Vec::new();
    let mut discarded_ties = 0usize;
    let mut group: Vec<&ActionLabel> = Vec::new();
    let flush = |group: &mut Vec<&ActionLabel>, labels: &mut Vec<ActionLabel>, ties: &mut usize| {
        if group.is_empty() {
            return;
        }
        let mut counts: [usize; 3] = [0; 3];
        for label in group.iter() {
            counts[label.action as usize] += 1;
        }
        let max = *counts.iter().max().unwrap();
        let winners: Vec<usize> = (0..3).filter(|&i| counts[i] == max).collect();
        if winners.len() != 1 {
            *ties += 1;
            group.clear();
            return;
        }
        let modal = match winners[0] {
            0 => ActionType::Turn,
            1 => ActionType::LaneChangeLeft,
            _ => ActionType::LaneChangeRight,
        };
        let mut distances: Vec<f64> = group
            .iter()
            .filter(|l| l.action == modal)
            .map(|l| l.distance_m)
            .collect();
        let mut angles: Vec<f64> = group
            .iter()
            .filter(|l| l.action == modal)
            .map(|l| l.angle_deg)
            .collect();
        distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        labels.push(ActionLabel {
            action: modal,
            distance_m: median(&distances),
            angle_deg: median(&angles),
        });
        group.clear();
    };

    for label in all {
        if let Some(last) = group.last() {
            if label.distance_m - last.distance_m > position_tolerance_m {
                flush(&mut group, &mut labels, &mut discarded_ties);
            }
        }
        group.push(label);
    }
    flush(&mut group, &mut labels, &mut discarded_ties);

    VoteResult {
        labels,
        discarded_ties,
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Per-bin agreement between two turn-angle measurements of the same labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub total: usize,
    pub agreeing: usize,
    pub ratio: f64,
}

/// Bins paired (local, global) turn angles by global magnitude and reports
/// the fraction per bin whose local measurement agrees within
/// `tolerance_deg`. Falling agreement toward sharper bins is a diagnostic
/// the caller may inspect; it is not asserted here.
pub fn audit_turn_angles(
    local_deg: &[f64],
    global_deg: &[f64],
    bin_width_deg: f64,
    tolerance_deg: f64,
) -> Result<Vec<AngleBin>> {
    if local_deg.len() != global_deg.len() {
        return Err(Error::ShapeError(format!(
            "angle lists differ in length: {} vs {}",
            local_deg.len(),
            global_deg.len()
        )));
    }
    if !(bin_width_deg.is_finite() && bin_width_deg > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bin width must be finite and > 0, got {bin_width_deg}"
        )));
    }
    if local_deg.is_empty() {
        return Ok(Vec::new());
    }
    let max_mag = global_deg.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
    let n_bins = (max_mag / bin_width_deg).floor() as usize + 1;
    let mut totals = vec![0usize; n_bins];
    let mut agreeing = vec![0usize; n_bins];
    for (&l, &g) in local_deg.iter().zip(global_deg) {
        let bin = ((g.abs() / bin_width_deg).floor() as usize).min(n_bins - 1);
        totals[bin] += 1;
        if normalize_angle_deg(l - g).abs() <= tolerance_deg {
            agreeing[bin] += 1;
        }
    }
    Ok((0..n_bins)
        .filter(|&b| totals[b] > 0)
        .map(|b| AngleBin {
            lo_deg: b as f64 * bin_width_deg,
            hi_deg: (b + 1) as f64 * bin_width_deg,
            total: totals[b],
            agreeing: agreeing[b],
            ratio: agreeing[b] as f64 / totals[b] as f64,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

/// One ego observation: the driven path since the map snapshot was taken,
/// where it starts on the lane graph, and how far into the session it sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSnapshot {
    pub session_id: String,
    pub start_lanelet: String,
    pub arclength_offset_m: f64,
    pub path: Vec<[f64; 2]>,
}

/// Reads ego snapshots from JSON lines
/// `{session_id, start_lanelet, arclength_offset_m, path: [[x,y]..]}`.
pub fn read_ego_snapshots_jsonl<R: Read>(reader: R) -> Result<Vec<EgoSnapshot>> {
    let mut snapshots = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let snap: EgoSnapshot = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("ego JSONL line {}: {e}", lineno + 1)))?;
        if snap.path.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "ego JSONL line {}: path must have >= 2 points",
                lineno + 1
            )));
        }
        snapshots.push(snap);
    }
    if snapshots.is_empty() {
        return Err(Error::EmptyInput("ego JSONL contains no snapshots".into()));
    }
    Ok(snapshots)
}

/// Writes labels as CSV `session_id,arclength_m,action,angle_deg`.
pub fn write_labels_csv<W: Write>(mut writer: W, rows: &[(String, ActionLabel)]) -> Result<()> {
    writer.write_all(b"session_id,arclength_m,action,angle_deg\n")?;
    for (session, label) in rows {
        writeln!(
            writer,
            "{session},{},{},{}",
            label.distance_m, label.action, label.angle_deg
        )?;
    }
    Ok(())
}
