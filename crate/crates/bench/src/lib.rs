//! Shared fixtures for the benchmarks.

use tgkrig::pipeline::simulate_truth;
use tgkrig::sampling::gen_design;
use tgkrig::{CorrelationLengths, KrigingModel, SyntheticTruth, TrendBasis};

/// Synthetic data set on a maximin design with the default truth.
pub fn fixture(n: usize, r: usize) -> (KrigingModel, Vec<f64>) {
    let design = gen_design(n, r, 1).expect("valid design size");
    let truth = SyntheticTruth {
        theta_true: vec![0.3; r],
        ..SyntheticTruth::default()
    };
    let z = simulate_truth(&design, TrendBasis::AffineA, &truth).expect("valid truth");
    let model = KrigingModel::new(design, TrendBasis::AffineA).expect("full rank trend");
    (model, z)
}

pub fn theta(r: usize) -> CorrelationLengths {
    CorrelationLengths::new(vec![0.3; r]).expect("positive lengths")
}

/// `m` correlation lengths spread around 0.3, standing in for posterior draws.
pub fn theta_draws(r: usize, m: usize) -> Vec<CorrelationLengths> {
    (0..m)
        .map(|i| {
            let v = (0..r)
                .map(|j| 0.3 * (1.0 + 0.2 * (((i * r + j) as f64) * 0.7).sin()))
                .collect();
            CorrelationLengths::new(v).expect("positive lengths")
        })
        .collect()
}
