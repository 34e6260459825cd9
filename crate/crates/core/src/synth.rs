//! Seeded synthetic generators: metric series drawn from known estimator
//! curves and session corpora with controlled cluster topology. These serve
//! as ground-truth oracles for the fitting, planning and curation suites,
//! and write the same formats the ingest paths read.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curation::{OddLabels, OddTargets, RoadType, SessionRecord, Solar, Surface};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorModel, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    MultiplicativeGaussian {
        sigma: f64,
    },
}

/// Specification of a synthetic observation series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub model: EstimatorModel,
    /// Strictly increasing dataset sizes in hours.
    pub grid: Vec<f64>,
    pub noise: NoiseModel,
    pub seed: u64,
    #[serde(default)]
    pub action: String,
    #[serde(default)]
    pub metric: String,
    #[serde(default)]
    pub backbone: String,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::EmptyInput("synthetic grid is empty".into()));
        }
        for pair in self.grid.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidInput(
                    "synthetic grid must be strictly increasing".into(),
                ));
            }
        }
        if self.grid[0] <= 0.0 || !self.grid.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(
                "synthetic grid must be finite and positive".into(),
            ));
        }
        if let NoiseModel::MultiplicativeGaussian { sigma } = self.noise {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "noise sigma must be finite and >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluates the true curve on the grid and applies the noise model:
/// `y_i = f(x_i) * (1 + eps_i)`, `eps_i ~ N(0, sigma^2)` seeded. Draws that
/// would produce a non-positive value are redrawn so every observation
/// stays valid.
pub fn generate_series(spec: &SynthSpec) -> Result<Vec<Observation>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut series = Vec::with_capacity(spec.grid.len());
    for &x in &spec.grid {
        let clean = spec.model.evaluate(x)?;
        let value = match spec.noise {
            NoiseModel::None => clean,
            NoiseModel::MultiplicativeGaussian { sigma } => {
                if sigma == 0.0 {
                    clean
                } else {
                    let normal = Normal::new(0.0, sigma)
                        .map_err(|e| Error::InvalidInput(format!("noise model: {e}")))?;
                    loop {
                        let eps: f64 = normal.sample(&mut rng);
                        let candidate = clean * (1.0 + eps);
                        if candidate > 0.0 {
                            break candidate;
                        }
                    }
                }
            }
        };
        series.push(Observation {
            hours: x,
            value,
            action: spec.action.clone(),
            metric: spec.metric.clone(),
            backbone: spec.backbone.clone(),
        });
    }
    Ok(series)
}

/// Convenience grid of `n` sizes doubling from `start` hours.
pub fn doubling_grid(start: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start * 2f64.powi(i as i32)).collect()
}

/// How synthetic sessions share cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterTopology {
    /// Every session visits only its own cells.
    Isolated,
    /// Adjacent sessions share a cell with probability `share_prob`.
    Chained { share_prob: f64 },
}

fn sample_index(rng: &mut ChaCha8Rng, distribution: &[f64]) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in distribution.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    distribution.len() - 1
}

const ROAD_TYPES: [RoadType; 4] = [
    RoadType::Motorway,
    RoadType::Urban,
    RoadType::Residential,
    RoadType::Rural,
];
const SOLARS: [Solar; 3] = [Solar::Day, Solar::Night, Solar::Twilight];
const SURFACES: [Surface; 3] = [Surface::Dry, Surface::Wet, Surface::SnowIce];

/// Generates `n` sessions with ODD labels drawn per category from
/// `odd_targets`, durations uniform in [0.25, 2.0] hours, and cells wired
/// according to `topology`.
pub fn generate_sessions(
    n: usize,
    odd_targets: &OddTargets,
    topology: ClusterTopology,
    seed: u64,
) -> Result<Vec<SessionRecord>> {
    if n == 0 {
        return Err(Error::InvalidInput("session count must be > 0".into()));
    }
    odd_targets.validate()?;
    if let ClusterTopology::Chained { share_prob } = topology {
        if !(0.0..=1.0).contains(&share_prob) {
            return Err(Error::InvalidInput(format!(
                "share_prob must lie in [0, 1], got {share_prob}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions: Vec<SessionRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let odd = OddLabels {
            road_type: ROAD_TYPES[sample_index(&mut rng, &odd_targets.road)],
            solar: SOLARS[sample_index(&mut rng, &odd_targets.solar)],
            surface: SURFACES[sample_index(&mut rng, &odd_targets.surface)],
        };
        let hours = rng.random_range(0.25..2.0);
        let mut cells: BTreeSet<String> = BTreeSet::from([format!("cell{i:07}a"), format!("cell{i:07}b")]);
        if let ClusterTopology::Chained { share_prob } = topology {
            if i > 0 && rng.random_range(0.0..1.0) < share_prob {
                let link = format!("link{i:07}");
                cells.insert(link.clone());
                sessions[i - 1].cells.insert(link);
            }
        }
        sessions.push(SessionRecord {
            session_id: format!("s{i:07}"),
            cells,
            hours,
            odd,
        });
    }
    Ok(sessions)
}
