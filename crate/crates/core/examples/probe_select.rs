use drivescale_core::estimators::{EstimatorKind, EstimatorModel};
use drivescale_core::fitting::{select, FitConfig};
use drivescale_core::synth::{doubling_grid, generate_series, NoiseModel, SynthSpec};

fn main() {
    let truth = EstimatorModel::m2(2.0, -0.5, 0.1).unwrap();
    let grid = doubling_grid(16.0, 8);
    // Noiseless generation; trials vary the optimizer seed.
    let series = generate_series(&SynthSpec {
        model: truth.clone(),
        grid: grid.clone(),
        noise: NoiseModel::None,
        seed: 0,
        action: String::new(),
        metric: String::new(),
        backbone: String::new(),
    })
    .unwrap();
    for kinds in [&[EstimatorKind::M2, EstimatorKind::M4][..], &EstimatorKind::ALL[..]] {
        let mut m2_wins = 0;
        let mut ties = 0;
        for seed in 0..100u64 {
            let config = FitConfig { n_starts: 16, seed, ..FitConfig::default() };
            let report = select(&series, 6, 2, kinds, &config).unwrap();
            if report.winner == EstimatorKind::M2 { m2_wins += 1; }
            if report.tie_break_applied { ties += 1; }
        }
        println!("noiseless kinds={}: m2 wins {m2_wins}/100, tie_breaks {ties}", kinds.len());
    }
    // Noisy data-seeded behavior for reference.
    let mut m2_wins = 0;
    for seed in 0..100u64 {
        let series = generate_series(&SynthSpec {
            model: truth.clone(),
            grid: grid.clone(),
            noise: NoiseModel::MultiplicativeGaussian { sigma: 0.01 },
            seed,
            action: String::new(),
            metric: String::new(),
            backbone: String::new(),
        })
        .unwrap();
        let config = FitConfig { n_starts: 16, seed, ..FitConfig::default() };
        let report = select(&series, 6, 2, &[EstimatorKind::M2, EstimatorKind::M4], &config).unwrap();
        if report.winner == EstimatorKind::M2 { m2_wins += 1; }
    }
    println!("noisy sigma=0.01 data-seeded: m2 wins {m2_wins}/100");
}
