//! Geofenced, ODD-balanced, cumulative dataset splitting over driving-session
//! metadata.
//!
//! Sessions reference the spatial cells they visited (opaque hexagonal-grid
//! identifiers, pre-indexed upstream). Connected components of the
//! session-cell graph form *clusters*, the atomic unit of assignment: no
//! cell can ever appear in two splits because whole components move
//! together. Clusters are then distributed over train/val/test by a seeded
//! greedy that tracks both duration shares and the operational-design-domain
//! (ODD) mix, and the train split is finally organized into cumulative
//! tiers (each smaller tier fully contained in every larger one).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadType {
    Motorway,
    Urban,
    Residential,
    Rural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solar {
    Day,
    Night,
    Twilight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Dry,
    Wet,
    SnowIce,
}

pub const N_ROAD: usize = 4;
pub const N_SOLAR: usize = 3;
pub const N_SURFACE: usize = 3;

/// One label per ODD category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OddLabels {
    pub road_type: RoadType,
    pub solar: Solar,
    pub surface: Surface,
}

/// Target probability distribution per ODD category. Label order is the
/// declaration order of the corresponding enums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddTargets {
    pub road: [f64; N_ROAD],
    pub solar: [f64; N_SOLAR],
    pub surface: [f64; N_SURFACE],
}

impl Default for OddTargets {
    /// Reference mix observed in large-scale real-world driving:
    /// motorway/urban/residential/rural 36/52/8/4, day/night/twilight
    /// 84/9/7, dry/wet/snow-ice 70/25/5 (percent).
    fn default() -> Self {
        OddTargets {
            road: [0.36, 0.52, 0.08, 0.04],
            solar: [0.84, 0.09, 0.07],
            surface: [0.70, 0.25, 0.05],
        }
    }
}

impl OddTargets {
    pub fn validate(&self) -> Result<()> {
        for (name, dist) in [
            ("road", &self.road[..]),
            ("solar", &self.solar[..]),
            ("surface", &self.surface[..]),
        ] {
            if dist.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "odd target '{name}' has a negative or non-finite entry"
                )));
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "odd target '{name}' sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Duration-weighted ODD tallies (hours per label, per category).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OddHours {
    pub road: [f64; N_ROAD],
    pub solar: [f64; N_SOLAR],
    pub surface: [f64; N_SURFACE],
}

impl OddHours {
    pub fn record(&mut self, odd: &OddLabels, hours: f64) {
        self.road[odd.road_type as usize] += hours;
        self.solar[odd.solar as usize] += hours;
        self.surface[odd.surface as usize] += hours;
    }

    pub fn merge(&mut self, other: &OddHours) {
        for i in 0..N_ROAD {
            self.road[i] += other.road[i];
        }
        for i in 0..N_SOLAR {
            self.solar[i] += other.solar[i];
        }
        for i in 0..N_SURFACE {
            self.surface[i] += other.surface[i];
        }
    }

    pub fn total(&self) -> f64 {
        self.road.iter().sum()
    }

    /// Per-category L1 distance between the normalized tallies and the
    /// targets, in order (road, solar, surface). An empty tally (zero hours)
    /// is scored as zero distance: an empty split distorts nothing.
    pub fn l1(&self, targets: &OddTargets) -> [f64; 3] {
        fn dist(hours: &[f64], target: &[f64]) -> f64 {
            let total: f64 = hours.iter().sum();
            if total <= 0.0 {
                return 0.0;
            }
            hours
                .iter()
                .zip(target)
                .map(|(&h, &t)| (h / total - t).abs())
                .sum()
        }
        [
            dist(&self.road, &targets.road),
            dist(&self.solar, &targets.solar),
            dist(&self.surface, &targets.surface),
        ]
    }

    pub fn mean_l1(&self, targets: &OddTargets) -> f64 {
        let l1 = self.l1(targets);
        (l1[0] + l1[1] + l1[2]) / 3.0
    }

    pub fn max_l1(&self, targets: &OddTargets) -> f64 {
        let l1 = self.l1(targets);
        l1[0].max(l1[1]).max(l1[2])
    }
}

/// One driving session: visited cells, duration and ODD labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub cells: BTreeSet<String>,
    pub hours: f64,
    pub odd: OddLabels,
}

impl SessionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.session_id.is_empty() {
            return Err(Error::InvalidInput("empty session_id".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidInput(format!(
                "session {} has no cells",
                self.session_id
            )));
        }
        if !(self.hours.is_finite() && self.hours > 0.0) {
            return Err(Error::InvalidInput(format!(
                "session {} duration must be finite and > 0, got {}",
                self.session_id, self.hours
            )));
        }
        Ok(())
    }
}

/// A geographically disjoint group of sessions (one connected component of
/// the session-cell graph).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCluster {
    /// Minimum member session id; stable across runs.
    pub cluster_id: String,
    pub sessions: Vec<String>,
    pub cells: BTreeSet<String>,
    pub hours: f64,
    pub odd_hours: OddHours,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Desired duration shares per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitTargets {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitTargets {
    fn default() -> Self {
        SplitTargets {
            train: 0.96,
            val: 0.02,
            test: 0.02,
        }
    }
}

impl SplitTargets {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let arr = self.as_array();
        if arr.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::InvalidInput(
                "split targets must be finite and > 0".into(),
            ));
        }
        let sum: f64 = arr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split targets sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Connected components of the bipartite session-cell graph.
pub fn cluster_sessions(sessions: &[SessionRecord]) -> Result<Vec<SessionCluster>> {
    let mut seen = BTreeSet::new();
    for s in sessions {
        s.validate()?;
        if !seen.insert(s.session_id.as_str()) {
            return Err(Error::DuplicateInput(format!(
                "duplicate session_id '{}'",
                s.session_id
            )));
        }
    }

    let mut uf = UnionFind::new(sessions.len());
    let mut cell_owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        for cell in &s.cells {
            match cell_owner.get(cell.as_str()) {
                Some(&first) => uf.union(first, i),
                None => {
                    cell_owner.insert(cell, i);
                }
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..sessions.len() {
        components.entry(uf.find(i)).or_default().push(i);
    }

    let mut clusters: Vec<SessionCluster> = components
        .into_values()
        .map(|members| {
            let mut session_ids: Vec<String> = members
                .iter()
                .map(|&i| sessions[i].session_id.clone())
                .collect();
            session_ids.sort();
            let mut cells = BTreeSet::new();
            let mut hours = 0.0;
            let mut odd_hours = OddHours::default();
            for &i in &members {
                cells.extend(sessions[i].cells.iter().cloned());
                hours += sessions[i].hours;
                odd_hours.record(&sessions[i].odd, sessions[i].hours);
            }
            SessionCluster {
                cluster_id: session_ids[0].clone(),
                sessions: session_ids,
                cells,
                hours,
                odd_hours,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    Ok(clusters)
}

// ---------------------------------------------------------------------------
// Split assignment
// ---------------------------------------------------------------------------

/// Configuration for [`assign_splits`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignConfig {
    pub targets: SplitTargets,
    pub odd_targets: OddTargets,
    pub seed: u64,
    pub n_restarts: usize,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            targets: SplitTargets::default(),
            odd_targets: OddTargets::default(),
            seed: 42,
            n_restarts: 16,
        }
    }
}

/// Cluster-to-split assignment with its deficiency score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub clusters: BTreeMap<String, Split>,
    /// Final deficiency score of the kept restart (see [`assign_splits`]).
    pub score: f64,
    /// Worst per-split per-category ODD L1 distance of the kept restart.
    pub odd_worst: f64,
    /// Set when a single cluster exceeds the train target share, making the
    /// requested proportions unattainable.
    pub infeasible: bool,
    /// Index of the restart that produced the kept assignment.
    pub restart_used: usize,
}

#[derive(Clone, Default)]
struct SplitState {
    hours: f64,
    odd: OddHours,
}

/// Deficiency of a (partial) assignment: the L1 distance between split
/// duration shares and their targets, plus — weighted 1:1 — the splits' mean
/// per-category ODD L1 distances. Each split's ODD distance is weighted by
/// its duration share so that a still-small split is judged by how much
/// corpus actually sits in it, which is what lets the greedy seed the tiny
/// val/test splits at all.
fn deficiency(states: &[SplitState; 3], total_hours: f64, cfg: &AssignConfig) -> f64 {
    let targets = cfg.targets.as_array();
    let mut duration_term = 0.0;
    let mut odd_term = 0.0;
    for (state, &target) in states.iter().zip(&targets) {
        let share = state.hours / total_hours;
        duration_term += (share - target).abs();
        odd_term += share * state.odd.mean_l1(&cfg.odd_targets);
    }
    duration_term + odd_term
}

/// Fenwick tree over alive flags, for order-statistic sampling.
struct Fenwick {
    n: usize,
    tree: Vec<i64>,
}

impl Fenwick {
    fn all_alive(n: usize) -> Self {
        let mut tree = vec![0i64; n + 1];
        for i in 1..=n {
            tree[i] += 1;
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                tree[j] += tree[i];
            }
        }
        Fenwick { n, tree }
    }

    fn remove(&mut self, idx0: usize) {
        let mut i = idx0 + 1;
        while i <= self.n {
            self.tree[i] -= 1;
            i += i & i.wrapping_neg();
        }
    }

    /// 0-based index of the k-th (0-based) alive element.
    fn kth(&self, k: usize) -> usize {
        let mut pos = 0usize;
        let mut rem = k as i64 + 1;
        let mut step = self.n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.n && self.tree[next] < rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Greedy split assignment with seeded restarts and a deterministic
/// refinement pass.
///
/// Each restart repeatedly samples a cluster uniformly from the smaller half
/// (by duration, ties by id) of the still-unassigned clusters and commits it
/// to the split whose post-assignment deficiency score is lowest. Among
/// restarts, the configuration closest to the target distribution wins:
/// first by the worst per-split per-category ODD L1 distance, then by the
/// deficiency score, then by restart index. The winning assignment is then
/// polished by single-cluster moves accepted on the same lexicographic
/// order, which fixes the residual ODD imbalance the sampling order leaves
/// in the small splits.
pub fn assign_splits(clusters: &[SessionCluster], cfg: &AssignConfig) -> Result<SplitAssignment> {
    if clusters.is_empty() {
        return Err(Error::EmptyInput("no clusters to assign".into()));
    }
    if cfg.n_restarts < 1 {
        return Err(Error::InvalidInput("n_restarts must be >= 1".into()));
    }
    cfg.targets.validate()?;
    cfg.odd_targets.validate()?;

    let total_hours: f64 = clusters.iter().map(|c| c.hours).sum();
    if total_hours <= 0.0 {
        return Err(Error::InvalidInput("total cluster duration is zero".into()));
    }
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| {
        clusters[a]
            .hours
            .partial_cmp(&clusters[b].hours)
            .unwrap()
            .then_with(|| clusters[a].cluster_id.cmp(&clusters[b].cluster_id))
    });

    let max_share = clusters
        .iter()
        .map(|c| c.hours / total_hours)
        .fold(0.0, f64::max);
    let infeasible = max_share > cfg.targets.train;

    let mut best: Option<(f64, f64, usize, Vec<Split>)> = None;
    for restart in 0..cfg.n_restarts {
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(restart as u64)));
        let mut alive = Fenwick::all_alive(order.len());
        let mut states: [SplitState; 3] = Default::default();
        let mut assignment = vec![Split::Train; clusters.len()];

        for step in 0..order.len() {
            let remaining = order.len() - step;
            let half = remaining.div_ceil(2);
            let pick = rng.random_range(0..half);
            let order_idx = alive.kth(pick);
            alive.remove(order_idx);
            let cluster = &clusters[order[order_idx]];

            let mut best_split = Split::Train;
            let mut best_score = f64::INFINITY;
            for split in Split::ALL {
                let s = split as usize;
                states[s].hours += cluster.hours;
                states[s].odd.merge(&cluster.odd_hours);
                let score = deficiency(&states, total_hours, cfg);
                states[s].hours -= cluster.hours;
                unmerge(&mut states[s].odd, &cluster.odd_hours);
                if score < best_score {
                    best_score = score;
                    best_split = split;
                }
            }
            let s = best_split as usize;
            states[s].hours += cluster.hours;
            states[s].odd.merge(&cluster.odd_hours);
            assignment[order[order_idx]] = best_split;
        }

        let score = deficiency(&states, total_hours, cfg);
        let odd_worst = states
            .iter()
            .map(|s| s.odd.max_l1(&cfg.odd_targets))
            .fold(0.0, f64::max);
        if best
            .as_ref()
            .is_none_or(|(w, s, _, _)| (odd_worst, score) < (*w, *s))
        {
            best = Some((odd_worst, score, restart, assignment));
        }
    }

    let (_, _, restart_used, mut assignment) = best.unwrap();
    let (odd_worst, score) = polish_moves(clusters, &mut assignment, total_hours, cfg);
    Ok(SplitAssignment {
        clusters: clusters
            .iter()
            .zip(&assignment)
            .map(|(c, &split)| (c.cluster_id.clone(), split))
            .collect(),
        score,
        odd_worst,
        infeasible,
        restart_used,
    })
}

const POLISH_MAX_ROUNDS: usize = 32;

/// Quantization step for the worst-ODD objective during polishing; duration
/// balance only yields to ODD gains of at least this size.
const POLISH_ODD_STEP: f64 = 0.005;

/// Deterministic hill climbing on single-cluster moves: a move is accepted
/// when it lowers (worst per-split per-category ODD L1 quantized to
/// [`POLISH_ODD_STEP`], deficiency score) lexicographically. Runs to a
/// fixpoint or the round cap and returns the final (odd_worst, score).
fn polish_moves(
    clusters: &[SessionCluster],
    assignment: &mut [Split],
    total_hours: f64,
    cfg: &AssignConfig,
) -> (f64, f64) {
    let mut states: [SplitState; 3] = Default::default();
    for (cluster, &split) in clusters.iter().zip(assignment.iter()) {
        states[split as usize].hours += cluster.hours;
        states[split as usize].odd.merge(&cluster.odd_hours);
    }
    let odd_worst = |states: &[SplitState; 3]| {
        states
            .iter()
            .map(|s| s.odd.max_l1(&cfg.odd_targets))
            .fold(0.0, f64::max)
    };
    let measure = |states: &[SplitState; 3]| {
        (
            (odd_worst(states) / POLISH_ODD_STEP).ceil() as u64,
            deficiency(states, total_hours, cfg),
        )
    };
    let mut current = measure(&states);
    for _ in 0..POLISH_MAX_ROUNDS {
        let mut improved = false;
        for (idx, cluster) in clusters.iter().enumerate() {
            let from = assignment[idx];
            for to in Split::ALL {
                if to == from {
                    continue;
                }
                states[from as usize].hours -= cluster.hours;
                unmerge(&mut states[from as usize].odd, &cluster.odd_hours);
                states[to as usize].hours += cluster.hours;
                states[to as usize].odd.merge(&cluster.odd_hours);
                let candidate = measure(&states);
                if candidate < current {
                    current = candidate;
                    assignment[idx] = to;
                    improved = true;
                    break;
                }
                states[to as usize].hours -= cluster.hours;
                unmerge(&mut states[to as usize].odd, &cluster.odd_hours);
                states[from as usize].hours += cluster.hours;
                states[from as usize].odd.merge(&cluster.odd_hours);
            }
        }
        if !improved {
            break;
        }
    }
    (odd_worst(&states), deficiency(&states, total_hours, cfg))
}

fn unmerge(acc: &mut OddHours, other: &OddHours) {
    for i in 0..N_ROAD {
        acc.road[i] -= other.road[i];
    }
    for i in 0..N_SOLAR {
        acc.solar[i] -= other.solar[i];
    }
    for i in 0..N_SURFACE {
        acc.surface[i] -= other.surface[i];
    }
}

// ---------------------------------------------------------------------------
// Cumulative tiers
// ---------------------------------------------------------------------------

/// Configuration for [`cumulative_tiers`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierConfig {
    /// Ascending tier duration targets in hours.
    pub tier_hours: Vec<f64>,
    pub seed: u64,
    pub odd_targets: OddTargets,
    /// Per-category L1 tolerance a tier's ODD mix should stay within.
    pub odd_tolerance: f64,
    /// How many upcoming clusters the tier builder may look ahead over when
    /// picking the next cluster to keep the tier's ODD mix on target.
    pub lookahead: usize,
}

impl Default for TierConfig {
    fn default() -> Self {
        TierConfig {
            tier_hours: (4..=13).map(|k| 2f64.powi(k)).collect(),
            seed: 42,
            odd_targets: OddTargets::default(),
            odd_tolerance: 0.05,
            lookahead: 128,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierSummary {
    /// Tier label: the base-2 exponent of the target size.
    pub k: u32,
    pub target_hours: f64,
    pub actual_hours: f64,
    /// Cumulative cluster count in the tier.
    pub n_clusters: usize,
    /// Per-category ODD L1 distance (road, solar, surface) of the tier.
    pub odd_l1: [f64; 3],
    pub within_tolerance: bool,
    /// Target exceeded the available train hours.
    pub truncated: bool,
    /// The tier had to overshoot its target (indivisible clusters).
    pub overshoot: bool,
}

/// Cumulative tier structure over the train split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TieredSplits {
    /// Cluster id -> tier label `k` of the tier it first appears in. Train
    /// clusters beyond the largest tier are absent.
    pub cluster_tier: BTreeMap<String, u32>,
    pub tiers: Vec<TierSummary>,
}

/// Organizes the train clusters into cumulative tiers.
///
/// Clusters are shuffled with the seed and committed one at a time; within a
/// bounded lookahead window the cluster whose addition keeps the tier's ODD
/// mix closest to target is preferred, which amounts to swapping
/// not-yet-committed clusters forward. Tier boundaries fall as close to the
/// target duration as the indivisible clusters allow (overshooting only when
/// that lands nearer the target, or when a tier would otherwise be empty).
pub fn cumulative_tiers(
    assignment: &SplitAssignment,
    clusters: &[SessionCluster],
    cfg: &TierConfig,
) -> Result<TieredSplits> {
    cfg.odd_targets.validate()?;
    if cfg.tier_hours.is_empty() {
        return Err(Error::InvalidInput("no tier targets given".into()));
    }
    for pair in cfg.tier_hours.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::InvalidInput(
                "tier targets must be strictly ascending".into(),
            ));
        }
    }
    if cfg.tier_hours[0] <= 0.0 {
        return Err(Error::InvalidInput("tier targets must be positive".into()));
    }
    if cfg.lookahead == 0 {
        return Err(Error::InvalidInput("lookahead must be >= 1".into()));
    }

    let mut remaining: Vec<usize> = (0..clusters.len())
        .filter(|&i| assignment.clusters.get(&clusters[i].cluster_id) == Some(&Split::Train))
        .collect();
    // Seeded shuffle (Fisher-Yates).
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in (1..remaining.len()).rev() {
        let j = rng.random_range(0..=i);
        remaining.swap(i, j);
    }

    let mut committed_ids: Vec<usize> = Vec::new();
    let mut committed_hours = 0.0;
    let mut committed_odd = OddHours::default();
    let mut cluster_tier = BTreeMap::new();
    let mut tiers = Vec::new();

    for &target in &cfg.tier_hours {
        let k = target.log2().round() as u32;
        let mut truncated = false;
        let mut overshoot = false;
        while committed_hours < target {
            if remaining.is_empty() {
                truncated = true;
                break;
            }
            let window = cfg.lookahead.min(remaining.len());
            // Prefer candidates that fit under the target; among them pick
            // the one whose addition keeps the ODD mix closest to target.
            let mut best_fitting: Option<(f64, usize)> = None;
            let mut smallest_over: Option<(f64, usize)> = None;
            for w in 0..window {
                let cluster = &clusters[remaining[w]];
                if committed_hours + cluster.hours <= target {
                    let mut probe = committed_odd;
                    probe.merge(&cluster.odd_hours);
                    // Minimax over categories keeps every category near
                    // target, not just the average.
                    let l1 = probe.max_l1(&cfg.odd_targets);
                    if best_fitting.is_none_or(|(best, _)| l1 < best) {
                        best_fitting = Some((l1, w));
                    }
                } else if smallest_over.is_none_or(|(h, _)| cluster.hours < h) {
                    smallest_over = Some((cluster.hours, w));
                }
            }
            let chosen = match (best_fitting, smallest_over) {
                (Some((_, w)), _) => w,
                (None, Some((hours, w))) => {
                    let under = target - committed_hours;
                    let over = committed_hours + hours - target;
                    if over < under || committed_ids.is_empty() {
                        overshoot = true;
                        w
                    } else {
                        break;
                    }
                }
                (None, None) => unreachable!("window is non-empty"),
            };
            let idx = remaining.remove(chosen);
            committed_hours += clusters[idx].hours;
            committed_odd.merge(&clusters[idx].odd_hours);
            committed_ids.push(idx);
            if overshoot {
                break;
            }
        }
        for &idx in &committed_ids {
            cluster_tier
                .entry(clusters[idx].cluster_id.clone())
                .or_insert(k);
        }
        let odd_l1 = committed_odd.l1(&cfg.odd_targets);
        tiers.push(TierSummary {
            k,
            target_hours: target,
            actual_hours: committed_hours,
            n_clusters: committed_ids.len(),
            odd_l1,
            within_tolerance: odd_l1.iter().all(|&d| d <= cfg.odd_tolerance),
            truncated,
            overshoot: overshoot || committed_hours > target,
        });
    }

    Ok(TieredSplits {
        cluster_tier,
        tiers,
    })
}

// ---------------------------------------------------------------------------
// Audit & I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAudit {
    pub split: Split,
    pub hours: f64,
    pub share: f64,
    pub target_share: f64,
    pub odd_hours: OddHours,
    pub odd_l1: [f64; 3],
}

/// Distribution audit over an assignment (and optional tiers).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurationAudit {
    pub total_hours: f64,
    pub score: f64,
    pub infeasible: bool,
    pub splits: Vec<SplitAudit>,
    pub tiers: Vec<TierSummary>,
}

pub fn audit(
    clusters: &[SessionCluster],
    assignment: &SplitAssignment,
    tiered: Option<&TieredSplits>,
    targets: &SplitTargets,
    odd_targets: &OddTargets,
) -> CurationAudit {
    let total_hours: f64 = clusters.iter().map(|c| c.hours).sum();
    let target_arr = targets.as_array();
    let splits = Split::ALL
        .iter()
        .map(|&split| {
            let mut hours = 0.0;
            let mut odd = OddHours::default();
            for cluster in clusters {
                if assignment.clusters.get(&cluster.cluster_id) == Some(&split) {
                    hours += cluster.hours;
                    odd.merge(&cluster.odd_hours);
                }
            }
            SplitAudit {
                split,
                hours,
                share: if total_hours > 0.0 { hours / total_hours } else { 0.0 },
                target_share: target_arr[split as usize],
                odd_hours: odd,
                odd_l1: odd.l1(odd_targets),
            }
        })
        .collect();
    CurationAudit {
        total_hours,
        score: assignment.score,
        infeasible: assignment.infeasible,
        splits,
        tiers: tiered.map(|t| t.tiers.clone()).unwrap_or_default(),
    }
}

/// Reads sessions from JSON lines
/// `{session_id, cells: [..], hours, odd: {road_type, solar, surface}}`.
pub fn read_sessions_jsonl<R: Read>(reader: R) -> Result<Vec<SessionRecord>> {
    let mut sessions = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let session: SessionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("session JSONL line {}: {e}", lineno + 1)))?;
        session.validate()?;
        sessions.push(session);
    }
    if sessions.is_empty() {
        return Err(Error::EmptyInput("session JSONL contains no records".into()));
    }
    Ok(sessions)
}

/// Writes sessions as JSON lines.
pub fn write_sessions_jsonl<W: Write>(mut writer: W, sessions: &[SessionRecord]) -> Result<()> {
    for session in sessions {
        serde_json::to_writer(&mut writer, session)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `session_id,split,tier` rows (tier empty for non-train sessions
/// and for train clusters beyond the largest tier), sorted by session id.
pub fn write_assignment_csv<W: Write>(
    mut writer: W,
    clusters: &[SessionCluster],
    assignment: &SplitAssignment,
    tiered: Option<&TieredSplits>,
) -> Result<()> {
    let mut rows: Vec<(String, Split, Option<u32>)> = Vec::new();
    for cluster in clusters {
        let split = *assignment
            .clusters
            .get(&cluster.cluster_id)
            .ok_or_else(|| {
                Error::InvalidInput(format!("cluster {} missing from assignment", cluster.cluster_id))
            })?;
        let tier = tiered.and_then(|t| t.cluster_tier.get(&cluster.cluster_id).copied());
        for session in &cluster.sessions {
            rows.push((session.clone(), split, tier));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    writer.write_all(b"session_id,split,tier\n")?;
    for (session, split, tier) in rows {
        let tier_cell = tier.map(|k| k.to_string()).unwrap_or_default();
        writeln!(writer, "{session},{split},{tier_cell}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, cells: &[&str], hours: f64) -> SessionRecord {
        SessionRecord {
            session_id: id.to_string(),
            cells: cells.iter().map(|c| c.to_string()).collect(),
            hours,
            odd: OddLabels {
                road_type: RoadType::Urban,
                solar: Solar::Day,
                surface: Surface::Dry,
            },
        }
    }

    #[test]
    fn clusters_sessions_sharing_cells() {
        let sessions = vec![
            session("s1", &["c1", "c2"], 1.0),
            session("s2", &["c2", "c3"], 1.0),
            session("s3", &["c4"], 1.0),
        ];
        let clusters = cluster_sessions(&sessions).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].cluster_id, "s1");
        assert_eq!(clusters[0].sessions, vec!["s1", "s2"]);
        assert_eq!(clusters[1].sessions, vec!["s3"]);
    }

    #[test]
    fn transitive_chains_form_one_cluster() {
        let sessions = vec![
            session("s1", &["c1"], 1.0),
            session("s2", &["c1", "c2"], 1.0),
            session("s3", &["c2"], 1.0),
        ];
        let clusters = cluster_sessions(&sessions).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].sessions.len(), 3);
    }

    #[test]
    fn disjoint_sessions_stay_singletons() {
        let sessions: Vec<SessionRecord> = (0..10)
            .map(|i| session(&format!("s{i:02}"), &[&format!("c{i}")], 0.5))
            .collect();
        let clusters = cluster_sessions(&sessions).unwrap();
        assert_eq!(clusters.len(), 10);
    }

    #[test]
    fn duplicate_session_id_is_rejected() {
        let sessions = vec![session("s1", &["c1"], 1.0), session("s1", &["c2"], 1.0)];
        assert!(matches!(
            cluster_sessions(&sessions).unwrap_err(),
            Error::DuplicateInput(_)
        ));
    }

    #[test]
    fn no_cell_in_two_clusters() {
        let sessions: Vec<SessionRecord> = (0..50)
            .map(|i| {
                session(
                    &format!("s{i:03}"),
                    &[&format!("c{}", i / 3), &format!("d{i}")],
                    0.5,
                )
            })
            .collect();
        let clusters = cluster_sessions(&sessions).unwrap();
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        for cluster in &clusters {
            for cell in &cluster.cells {
                assert!(seen.insert(cell), "cell {cell} in two clusters");
            }
        }
    }

    #[test]
    fn single_cluster_is_infeasible_but_assigned() {
        let sessions = vec![session("s1", &["c1"], 5.0)];
        let clusters = cluster_sessions(&sessions).unwrap();
        let out = assign_splits(&clusters, &AssignConfig::default()).unwrap();
        assert!(out.infeasible);
        assert_eq!(out.clusters["s1"], Split::Train);
    }

    #[test]
    fn fenwick_order_statistics() {
        let mut fw = Fenwick::all_alive(10);
        assert_eq!(fw.kth(0), 0);
        assert_eq!(fw.kth(9), 9);
        fw.remove(0);
        fw.remove(5);
        assert_eq!(fw.kth(0), 1);
        assert_eq!(fw.kth(4), 6);
        assert_eq!(fw.kth(7), 9);
    }

    #[test]
    fn assignment_is_deterministic() {
        let sessions: Vec<SessionRecord> = (0..200)
            .map(|i| session(&format!("s{i:03}"), &[&format!("c{i}")], 0.5 + (i % 7) as f64 * 0.1))
            .collect();
        let clusters = cluster_sessions(&sessions).unwrap();
        let cfg = AssignConfig::default();
        let a = assign_splits(&clusters, &cfg).unwrap();
        let b = assign_splits(&clusters, &cfg).unwrap();
        assert_eq!(a.clusters, b.clusters);
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn tiers_are_cumulative_and_sized() {
        let sessions: Vec<SessionRecord> = (0..100)
            .map(|i| session(&format!("s{i:03}"), &[&format!("c{i}")], 1.0))
            .collect();
        let clusters = cluster_sessions(&sessions).unwrap();
        let mut assignment_map = BTreeMap::new();
        for c in &clusters {
            assignment_map.insert(c.cluster_id.clone(), Split::Train);
        }
        let assignment = SplitAssignment {
            clusters: assignment_map,
            score: 0.0,
            odd_worst: 0.0,
            infeasible: false,
            restart_used: 0,
        };
        let cfg = TierConfig {
            tier_hours: vec![16.0, 32.0],
            ..TierConfig::default()
        };
        let tiered = cumulative_tiers(&assignment, &clusters, &cfg).unwrap();
        assert_eq!(tiered.tiers.len(), 2);
        assert_eq!(tiered.tiers[0].actual_hours, 16.0);
        assert_eq!(tiered.tiers[1].actual_hours, 32.0);
        // Containment: every tier-4 cluster is labeled with the first tier.
        let t16: Vec<&String> = tiered
            .cluster_tier
            .iter()
            .filter(|(_, &k)| k == 4)
            .map(|(id, _)| id)
            .collect();
        assert_eq!(t16.len(), 16);
        assert_eq!(tiered.tiers[1].n_clusters, 32);
    }

    #[test]
    fn indivisible_cluster_overshoots_first_tier() {
        let sessions = vec![session("big", &["c"], 100.0)];
        let clusters = cluster_sessions(&sessions).unwrap();
        let assignment = SplitAssignment {
            clusters: BTreeMap::from([("big".to_string(), Split::Train)]),
            score: 0.0,
            odd_worst: 0.0,
            infeasible: true,
            restart_used: 0,
        };
        let cfg = TierConfig {
            tier_hours: vec![16.0],
            ..TierConfig::default()
        };
        let tiered = cumulative_tiers(&assignment, &clusters, &cfg).unwrap();
        assert_eq!(tiered.tiers[0].n_clusters, 1);
        assert!(tiered.tiers[0].overshoot);
        assert_eq!(tiered.cluster_tier["big"], 4);
    }

    #[test]
    fn tier_targets_beyond_total_are_truncated() {
        let sessions = vec![session("s1", &["c1"], 4.0)];
        let clusters = cluster_sessions(&sessions).unwrap();
        let assignment = SplitAssignment {
            clusters: BTreeMap::from([("s1".to_string(), Split::Train)]),
            score: 0.0,
            odd_worst: 0.0,
            infeasible: true,
            restart_used: 0,
        };
        let cfg = TierConfig {
            tier_hours: vec![16.0],
            ..TierConfig::default()
        };
        let tiered = cumulative_tiers(&assignment, &clusters, &cfg).unwrap();
        assert!(tiered.tiers[0].truncated);
        assert_eq!(tiered.tiers[0].actual_hours, 4.0);
    }

    #[test]
    fn sessions_jsonl_round_trip() {
        let sessions = vec![
            SessionRecord {
                session_id: "s1".into(),
                cells: BTreeSet::from(["8b1".to_string(), "8b2".to_string()]),
                hours: 1.25,
                odd: OddLabels {
                    road_type: RoadType::Motorway,
                    solar: Solar::Twilight,
                    surface: Surface::SnowIce,
                },
            },
        ];
        let mut buffer = Vec::new();
        write_sessions_jsonl(&mut buffer, &sessions).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert!(text.contains("\"snow_ice\""));
        let back = read_sessions_jsonl(buffer.as_slice()).unwrap();
        assert_eq!(sessions, back);
    }
}
