use drivescale_core::curation::*;
use drivescale_core::synth::{generate_sessions, ClusterTopology};
use std::time::Instant;

fn main() {
    for &n_restarts in &[16usize, 32, 64] {
        for corpus_seed in 0..5u64 {
            let sessions = generate_sessions(10_000, &OddTargets::default(), ClusterTopology::Chained { share_prob: 0.3 }, corpus_seed).unwrap();
            let clusters = cluster_sessions(&sessions).unwrap();
            let t0 = Instant::now();
            let cfg = AssignConfig { n_restarts, ..AssignConfig::default() };
            let assignment = assign_splits(&clusters, &cfg).unwrap();
            let audit_out = audit(&clusters, &assignment, None, &cfg.targets, &cfg.odd_targets);
            let worst = audit_out
                .splits
                .iter()
                .flat_map(|s| s.odd_l1.iter().cloned())
                .fold(0.0f64, f64::max);
            let shares: Vec<f64> = audit_out.splits.iter().map(|s| s.share).collect();
            println!(
                "restarts {n_restarts:2} corpus {corpus_seed}: worst_odd_l1 {worst:.4} shares [{:.4} {:.4} {:.4}] elapsed {:?}",
                shares[0], shares[1], shares[2], t0.elapsed()
            );
        }
    }
}
