//! Trajectory-prediction metrics (ADE, FDE, miss rate) and the closed-loop
//! mean-distance-between-failures aggregate.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Endpoint-error threshold (meters) above which a prediction is a miss.
pub const MISS_THRESHOLD_M: f64 = 2.0;

/// Default trajectory sampling period in seconds (5 Hz).
pub const DEFAULT_DT_S: f64 = 0.2;

/// Default prediction horizon in steps (3 s at 5 Hz).
pub const DEFAULT_HORIZON_STEPS: usize = 15;

/// A 2D trajectory sampled at a fixed period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<[f64; 2]>,
    dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        Self::with_dt(points, DEFAULT_DT_S)
    }

    pub fn with_dt(points: Vec<[f64; 2]>, dt: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::ShapeError("trajectory must have >= 1 point".into()));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::ShapeError(
                "trajectory coordinates must be finite".into(),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::ShapeError(format!("dt must be > 0, got {dt}")));
        }
        Ok(Trajectory { points, dt })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// A (prediction, ground truth) pair with free-form series tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub pred: Trajectory,
    pub truth: Trajectory,
    pub tags: BTreeMap<String, String>,
}

/// Average displacement error: mean Euclidean distance over all steps.
pub fn ade(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeError(format!(
            "trajectory lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let sum: f64 = pred
        .points()
        .iter()
        .zip(truth.points())
        .map(|(p, t)| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Final displacement error: Euclidean distance between the last points.
pub fn fde(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    let p = pred
        .points()
        .last()
        .ok_or_else(|| Error::ShapeError("empty predicted trajectory".into()))?;
    let t = truth
        .points()
        .last()
        .ok_or_else(|| Error::ShapeError("empty ground-truth trajectory".into()))?;
    Ok(((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt())
}

/// Fraction of pairs whose endpoint error strictly exceeds `threshold`
/// meters; an endpoint error of exactly `threshold` is a hit.
pub fn miss_rate(pairs: &[TrajectoryPair], threshold: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("miss rate over no pairs".into()));
    }
    let mut misses = 0usize;
    for pair in pairs {
        if fde(&pair.pred, &pair.truth)? > threshold {
            misses += 1;
        }
    }
    Ok(misses as f64 / pairs.len() as f64)
}

/// One closed-loop run: distance driven and the number of drivable-area
/// departures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: String,
    pub total_km: f64,
    pub failures: u64,
}

impl RunLog {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_km.is_finite() && self.total_km >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "total_km must be finite and >= 0, got {}",
                self.total_km
            )));
        }
        Ok(())
    }
}

/// Mean distance between failures, pooled across logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mdbf {
    pub km: f64,
    /// True when no failure occurred anywhere: `km` is then the total driven
    /// distance and is a censored lower bound, not a mean.
    pub censored: bool,
}

/// Pools distance and failure counts across all logs (ratio of sums, which
/// is robust to short runs) and returns total/failures. With zero failures
/// the result is the censored total distance.
pub fn mdbf(logs: &[RunLog]) -> Result<Mdbf> {
    if logs.is_empty() {
        return Err(Error::EmptyInput("mdbf over no run logs".into()));
    }
    let mut total_km = 0.0;
    let mut failures = 0u64;
    for log in logs {
        log.validate()?;
        total_km += log.total_km;
        failures += log.failures;
    }
    if failures == 0 {
        Ok(Mdbf {
            km: total_km,
            censored: true,
        })
    } else {
        Ok(Mdbf {
            km: total_km / failures as f64,
            censored: false,
        })
    }
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PairDoc {
    pred: Vec<[f64; 2]>,
    truth: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tags: BTreeMap<String, String>,
}

/// Reads trajectory pairs from JSON lines `{pred: [[x,y]..], truth: [[x,y]..], tags: {..}}`.
pub fn read_trajectory_pairs<R: Read>(reader: R) -> Result<Vec<TrajectoryPair>> {
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: PairDoc = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("trajectory JSONL line {}: {e}", lineno + 1))
        })?;
        pairs.push(TrajectoryPair {
            pred: Trajectory::new(doc.pred)?,
            truth: Trajectory::new(doc.truth)?,
            tags: doc.tags,
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("trajectory JSONL contains no pairs".into()));
    }
    Ok(pairs)
}

/// Writes trajectory pairs as JSON lines.
pub fn write_trajectory_pairs<W: Write>(mut writer: W, pairs: &[TrajectoryPair]) -> Result<()> {
    for pair in pairs {
        let doc = PairDoc {
            pred: pair.pred.points().to_vec(),
            truth: pair.truth.points().to_vec(),
            tags: pair.tags.clone(),
        };
        serde_json::to_writer(&mut writer, &doc)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads run logs from CSV with header `scenario,total_km,failures`.
pub fn read_run_logs_csv<R: Read>(reader: R) -> Result<Vec<RunLog>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut logs = Vec::new();
    for record in rdr.deserialize::<RunLog>() {
        let log = record?;
        log.validate()?;
        logs.push(log);
    }
    if logs.is_empty() {
        return Err(Error::EmptyInput("run-log CSV contains no rows".into()));
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: Vec<[f64; 2]>) -> Trajectory {
        Trajectory::new(points).unwrap()
    }

    #[test]
    fn ade_zero_for_identical() {
        let t = traj(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]]);
        assert_eq!(ade(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn ade_of_constant_offset_is_its_norm() {
        let truth = traj((0..15).map(|i| [i as f64, 0.0]).collect());
        let pred = traj((0..15).map(|i| [i as f64 + 3.0, 4.0]).collect());
        assert!((ade(&pred, &truth).unwrap() - 5.0).abs() < 1e-12);
        assert!((fde(&pred, &truth).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ade_rejects_length_mismatch() {
        let a = traj(vec![[0.0, 0.0], [1.0, 0.0]]);
        let b = traj(vec![[0.0, 0.0]]);
        assert!(matches!(ade(&a, &b).unwrap_err(), Error::ShapeError(_)));
    }

    #[test]
    fn fde_endpoint_distance() {
        let a = traj(vec![[5.0, 5.0], [0.0, 0.0]]);
        let b = traj(vec![[9.0, 9.0], [0.0, 2.5]]);
        assert_eq!(fde(&a, &b).unwrap(), 2.5);
    }

    #[test]
    fn fde_equals_ade_for_single_step() {
        let a = traj(vec![[1.0, 2.0]]);
        let b = traj(vec![[4.0, 6.0]]);
        assert_eq!(fde(&a, &b).unwrap(), ade(&a, &b).unwrap());
    }

    #[test]
    fn miss_rate_threshold_is_strict() {
        let truth = traj(vec![[0.0, 0.0]]);
        let at_threshold = TrajectoryPair {
            pred: traj(vec![[0.0, 2.0]]),
            truth: truth.clone(),
            tags: BTreeMap::new(),
        };
        let just_over = TrajectoryPair {
            pred: traj(vec![[0.0, 2.01]]),
            truth,
            tags: BTreeMap::new(),
        };
        let rate = miss_rate(&[at_threshold, just_over], MISS_THRESHOLD_M).unwrap();
        assert_eq!(rate, 0.5);
    }

    #[test]
    fn miss_rate_counts() {
        let truth = traj(vec![[0.0, 0.0]]);
        let make = |d: f64| TrajectoryPair {
            pred: traj(vec![[d, 0.0]]),
            truth: truth.clone(),
            tags: BTreeMap::new(),
        };
        let pairs = vec![make(3.0), make(4.0), make(5.0), make(1.0)];
        assert_eq!(miss_rate(&pairs, 2.0).unwrap(), 0.75);
        assert_eq!(miss_rate(&[make(0.0)], 2.0).unwrap(), 0.0);
    }

    #[test]
    fn mdbf_pools_across_logs() {
        let logs = vec![
            RunLog {
                scenario: "a".into(),
                total_km: 3.0,
                failures: 1,
            },
            RunLog {
                scenario: "b".into(),
                total_km: 7.0,
                failures: 1,
            },
        ];
        let out = mdbf(&logs).unwrap();
        assert_eq!(out.km, 5.0);
        assert!(!out.censored);

        let single = vec![RunLog {
            scenario: "c".into(),
            total_km: 10.0,
            failures: 4,
        }];
        assert_eq!(mdbf(&single).unwrap().km, 2.5);
    }

    #[test]
    fn mdbf_without_failures_is_censored() {
        let logs = vec![RunLog {
            scenario: "a".into(),
            total_km: 2.0,
            failures: 0,
        }];
        let out = mdbf(&logs).unwrap();
        assert!(out.censored);
        assert_eq!(out.km, 2.0);
    }

    #[test]
    fn jsonl_round_trip() {
        let pairs = vec![TrajectoryPair {
            pred: traj(vec![[0.0, 0.0], [1.5, 0.25]]),
            truth: traj(vec![[0.0, 0.0], [1.0, 0.5]]),
            tags: BTreeMap::from([("action".to_string(), "turning".to_string())]),
        }];
        let mut buffer = Vec::new();
        write_trajectory_pairs(&mut buffer, &pairs).unwrap();
        let back = read_trajectory_pairs(buffer.as_slice()).unwrap();
        assert_eq!(pairs, back);
    }
}
