use discotag::policies::{argmax, softmax, MabConfig, MabState, McmConfig, McmState, PopState, SelectionStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 100_000;

fn frequencies(k: usize, mut draw: impl FnMut() -> usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for _ in 0..DRAWS {
        counts[draw()] += 1;
    }
    counts.into_iter().map(|c| c as f64 / DRAWS as f64).collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn epsilon_greedy_hits_greedy_arm_at_expected_rate() {
    let mut mab = MabState::new(4, MabConfig::default()).unwrap();
    for _ in 0..5 {
        mab.update("q", 2, 1).unwrap();
    }
    let greedy = mab.greedy("q");
    assert_eq!(greedy, 2);
    let strategy = SelectionStrategy::epsilon_greedy(0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let freq = frequencies(4, || mab.select("q", strategy, &mut rng));
    assert!((freq[greedy] - 0.925).abs() < 0.01, "{freq:?}");
    for (a, f) in freq.iter().enumerate().filter(|(a, _)| *a != greedy) {
        assert!((f - 0.025).abs() < 0.005, "arm {a}: {f}");
    }
}

#[test]
fn thompson_with_symmetric_posteriors_is_uniform() {
    for k in [2usize, 4, 8] {
        let mab = MabState::new(k, MabConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let freq = frequencies(k, || mab.select("anything", SelectionStrategy::Sample, &mut rng));
        let p = 1.0 / k as f64;
        let sigma = (p * (1.0 - p) / DRAWS as f64).sqrt();
        for f in freq {
            assert!((f - p).abs() < 3.0 * sigma + 1e-12, "k={k}: {f} vs {p}");
        }
    }
}

#[test]
fn pop_samples_its_distribution() {
    let mut pop = PopState::new(5);
    for (arm, n) in [(0, 6), (1, 3), (3, 1)] {
        for _ in 0..n {
            pop.update("q", arm).unwrap();
        }
    }
    let dist = pop.distribution("q");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let freq = frequencies(5, || pop.select("q", SelectionStrategy::Sample, &mut rng));
    assert!(total_variation(&freq, &dist) < 0.01);
    assert_eq!(freq[2], 0.0);
    assert_eq!(freq[4], 0.0);
}

#[test]
fn mcm_sample_mode_follows_softmax() {
    let cfg = McmConfig {
        input_dim: 6,
        hidden_layers: vec![16],
        seed: 9,
        ..Default::default()
    };
    let mcm = McmState::new(8, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (scores, dist) = mcm.scores(&x).unwrap();
    assert_eq!(dist, softmax(&scores));
    assert_eq!(mcm.greedy(&x).unwrap(), argmax(&scores));
    let freq = frequencies(8, || mcm.select(&x, SelectionStrategy::Sample, &mut rng).unwrap());
    assert!(total_variation(&freq, &dist) < 0.01);
}
