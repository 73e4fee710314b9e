//! Empirical check of the default Lyapunov constants.
//!
//! Prints the largest `deviation / eps^{1/4}` seen for the scalar selection
//! and `deviation / (B^{7/8} eps^{1/8})` for the weighted selection, over
//! random Bessel systems and scaled orthonormal bases.
//!
//!     cargo run --release -p framekit --example calibrate_constants

use framekit::lyapunov::{subset_for_scalar, subset_for_weights, LyapunovConfig};
use framekit::{ComplexVector, FrameSystem};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_bessel(rng: &mut ChaCha8Rng, d: usize, m: usize) -> FrameSystem {
    let vectors = (0..m)
        .map(|_| {
            let e = (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            ComplexVector::new(e).unwrap()
        })
        .collect();
    let p = FrameSystem::from_vectors(vectors).unwrap().canonical_parseval().unwrap();
    let s: f64 = rng.gen_range(0.2..=1.0);
    p.scaled(s.sqrt())
}

fn scaled_onb(d: usize, copies: usize) -> FrameSystem {
    let c = (1.0 / copies as f64).sqrt();
    let vectors = (0..copies).flat_map(|_| (0..d).map(move |j| ComplexVector::basis(d, j).scaled(c))).collect();
    FrameSystem::from_vectors(vectors).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = LyapunovConfig::default();
    let mut worst_scalar = 0.0f64;
    let mut worst_weights = 0.0f64;
    let mut systems: Vec<FrameSystem> = (0..200)
        .map(|_| {
            let d = rng.gen_range(1..=3);
            let m = rng.gen_range(d + 1..=16);
            random_bessel(&mut rng, d, m)
        })
        .collect();
    for d in 1..=3 {
        for copies in [4, 16, 64] {
            systems.push(scaled_onb(d, copies));
        }
    }
    for f in &systems {
        let eps = f.delta();
        let b = f.frame_bounds().unwrap().upper;
        for t in [0.1, 0.25, 0.5, 0.75] {
            let c = subset_for_scalar(f, eps, t, &cfg).unwrap();
            worst_scalar = worst_scalar.max(c.deviation / eps.powf(0.25));
        }
        let weights: Vec<f64> = (0..f.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let c = subset_for_weights(f, &weights, eps, &cfg).unwrap();
        worst_weights = worst_weights.max(c.deviation / (b.powf(0.875) * eps.powf(0.125)));
    }
    println!("systems: {}", systems.len());
    println!("max deviation / eps^(1/4):              {worst_scalar:.4}");
    println!("max deviation / (B^(7/8) eps^(1/8)):    {worst_weights:.4}");
}
