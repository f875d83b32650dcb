use dpn_core::config::DemandParams;
use dpn_core::demand::{empirical_on_fraction, simulate_demand, stationary_on_probability};
use dpn_core::metrics::Welford;
use dpn_core::rng::{Concern, RngStream};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn welford_matches_two_pass_on_long_stream() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let xs: Vec<f64> = (0..100_000).map(|_| 1e3 + rng.random::<f64>() * 50.0).collect();
    let w: Welford = xs.iter().copied().collect();
    let (mean, var) = two_pass(&xs);
    assert!((w.mean() - mean).abs() <= 1e-9 * mean.abs());
    assert!((w.variance() - var).abs() <= 1e-9 * var);
}

proptest! {
    #[test]
    fn welford_merge_equals_single_pass(
        xs in prop::collection::vec(-1e3f64..1e3, 2..200),
        split in 0usize..200,
    ) {
        let split = split % xs.len();
        let mut a: Welford = xs[..split].iter().copied().collect();
        let b: Welford = xs[split..].iter().copied().collect();
        a.merge(&b);
        let (mean, var) = two_pass(&xs);
        prop_assert_eq!(a.count(), xs.len() as u64);
        prop_assert!((a.mean() - mean).abs() < 1e-9);
        prop_assert!((a.variance() - var).abs() < 1e-6 * var.max(1.0));
    }
}

/// The empirical ON fraction of a 500-user, 2000-round trajectory sits
/// within three standard errors of the stationary probability. The error
/// accounts for the chain's autocorrelation: with lag-one correlation
/// `l = p_stay_on - p_request`, the variance of the time average is
/// `pi (1 - pi) (1 + l) / ((1 - l) N T)`.
#[test]
fn markov_grid_converges_to_stationary() {
    let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (users, rounds, burn_in) = (500, 2000, 100);
    let mut seed = 0;
    for &p_request in &grid {
        for &p_stay_on in &grid {
            seed += 1;
            let params = DemandParams::new(p_request, p_stay_on);
            let pi = stationary_on_probability(&params).unwrap();
            let mut rng = RngStream::new(seed, Concern::Demand);
            let traj = simulate_demand(users, &params, rounds, &mut rng);
            let got = empirical_on_fraction(&traj, burn_in).unwrap();
            let l = p_stay_on - p_request;
            let t = (rounds - burn_in) as f64;
            let se = (pi * (1.0 - pi) * (1.0 + l) / ((1.0 - l) * users as f64 * t)).sqrt();
            assert!(
                (got - pi).abs() <= 3.0 * se,
                "p_request {p_request} p_stay_on {p_stay_on}: {got} vs {pi} (se {se})"
            );
        }
    }
}
