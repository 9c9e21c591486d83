//! Shared fixtures for the stage benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rpca_synth::Panel;

/// Rank-2 matrix with `spikes` large sparse corruptions.
pub fn planted_matrix(seed: u64, m: usize, n: usize, spikes: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(2, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = a * b;
    for idx in rand::seq::index::sample(&mut rng, m * n, spikes) {
        y[(idx / n, idx % n)] = if rng.gen_bool(0.5) { 5.0 } else { -5.0 };
    }
    y
}

/// Two-group noisy panel sized for end-to-end stage benchmarks.
pub fn grouped_panel(n_units: usize, n_times: usize, t0: usize, seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = DMatrix::from_fn(n_units, n_times, |u, t| {
        let x = 0.35 * t as f64;
        let base = if u < n_units / 2 {
            1.0 + 0.4 * (x + (u % 5) as f64).sin()
        } else {
            8.0 + 0.4 * (x + (u % 5) as f64).cos()
        };
        base + 0.05 * rng.sample::<f64, _>(StandardNormal)
    });
    let mask = DMatrix::from_element(n_units, n_times, true);
    let labels = (0..n_units).map(|u| format!("u{u}")).collect();
    let times = (0..n_times).map(|t| t as f64).collect();
    Panel::new(values, mask, labels, times, 0, t0).expect("valid benchmark panel")
}
