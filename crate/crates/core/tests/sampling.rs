use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use local_regret::polytope::{sample_block, sample_feasible, uniform_matrix};
use local_regret::{FtrlState, InnerSolverConfig, ProblemDims};

fn counts(m: &local_regret::PseudoMomentMatrix, draws: usize, seed: u64) -> Vec<usize> {
    let l = m.dims().n_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0; l * l];
    for _ in 0..draws {
        let s = sample_block(m, 0, 1, &mut rng).unwrap();
        assert!(!s.fallback);
        c[s.labels.0 * l + s.labels.1] += 1;
    }
    c
}

fn chi_square_p(observed: &[usize], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = expected.iter().filter(|&&e| e > 0.0).count() - 1;
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

#[test]
fn uniform_block_draws_are_uniform() {
    let dims = ProblemDims::new(3, 3).unwrap();
    let draws = 10_000;
    let c = counts(&uniform_matrix(dims), draws, 1);
    let expected = vec![draws as f64 / 9.0; 9];
    assert!(chi_square_p(&c, &expected) > 0.01);
}

#[test]
fn random_feasible_block_draws_follow_the_block() {
    let dims = ProblemDims::new(2, 3).unwrap();
    let m = sample_feasible(dims, &mut ChaCha8Rng::seed_from_u64(9));
    let draws = 10_000;
    let c = counts(&m, draws, 2);
    let block = m.block(0, 1);
    let total: f64 = block.iter().map(|v| v.max(0.0)).sum();
    let expected: Vec<f64> = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| block[(a, b)].max(0.0) / total * draws as f64)
        .collect();
    for (o, e) in c.iter().zip(&expected) {
        if *e == 0.0 {
            assert_eq!(*o, 0);
        }
    }
    assert!(chi_square_p(&c, &expected) > 0.01);
}

#[test]
fn trained_learner_plays_the_rewarded_pair() {
    let dims = ProblemDims::new(2, 3).unwrap();
    let mut state = FtrlState::init(dims, 1.0, InnerSolverConfig::for_labels(3)).unwrap();
    let mut block = nalgebra::DMatrix::from_element(3, 3, -1.0);
    block[(2, 0)] = 1.0;
    let payoff = local_regret::PayoffFunction::new((0, 1), block).unwrap();
    for _ in 0..30 {
        state.update(&payoff).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hits = (0..1000)
        .filter(|_| state.predict(0, 1, &mut rng).unwrap() == (2, 0))
        .count();
    assert!(hits >= 900, "{hits}");
}
