mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgrasp::kl_divergence;

#[test]
fn matches_high_precision_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(2..=512);
        let a = random_signature(&mut rng, n);
        let b = random_signature(&mut rng, n);
        let d = kl_divergence(&a, &b).unwrap();
        let o = kl_oracle(&a.bins, &b.bins);
        assert!((d - o).abs() <= 1e-9, "n={n}: {d} vs {o}");
        assert!(d >= 0.0);
        assert!(kl_divergence(&a, &a).unwrap().abs() <= 1e-12);
    }
}

#[test]
fn oracle_sanity() {
    // two-point distributions have a closed form
    let (p, q) = ([0.25, 0.75], [0.5, 0.5]);
    let expected = 0.25 * (0.5f64).ln() + 0.75 * (1.5f64).ln();
    assert!((kl_oracle(&p, &q) - expected).abs() < 1e-16);
}
