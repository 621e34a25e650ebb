use cqft::poly::{rat, Rat};
use cqft::wick::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetric matrix with entries in [−1,1], negative eigenvalues clipped.
fn random_psd(m: usize, rng: &mut impl Rng) -> GaussianVector {
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(a);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
    let p = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    let p = (&p + p.transpose()) * 0.5;
    GaussianVector::from_matrix(p).unwrap()
}

/// Matchings by recursive brute force, used as an independent count.
fn brute_matchings(items: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let first = items[0];
    let mut out = Vec::new();
    for k in 1..items.len() {
        let rest: Vec<usize> = items[1..].iter().enumerate().filter(|&(i, _)| i + 1 != k).map(|(_, &x)| x).collect();
        for mut m in brute_matchings(&rest) {
            m.insert(0, (first, items[k]));
            out.push(m);
        }
    }
    out
}

#[test]
fn pairing_stream_matches_brute_force() {
    for size in [2usize, 4, 6, 8] {
        let items: Vec<usize> = (0..size).collect();
        let mut expected: Vec<_> = brute_matchings(&items);
        let mut got: Vec<_> = enumerate_pairings(size).unwrap().map(|p| p.0).collect();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);
        assert_eq!(got.len() as u128, double_factorial(size as i64 - 1));
    }
    assert_eq!(enumerate_pairings(16).unwrap().count(), 2_027_025);
}

#[test]
fn enumeration_agrees_with_multiplicity_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let m = rng.gen_range(1..=4);
        let g = random_psd(m, &mut rng);
        let order = 2 * rng.gen_range(1..=4);
        let idx: Vec<usize> = (0..order).map(|_| rng.gen_range(0..m)).collect();
        let mut mult = vec![0u32; m];
        for &i in &idx {
            mult[i] += 1;
        }
        let by_pairs = wick_moment(&g, &idx).unwrap();
        let by_ibp = gaussian_moment(&mult, &|i, j| g.cov(i, j), &1.0);
        assert!((by_pairs - by_ibp).abs() < 1e-10 * (1.0 + by_pairs.abs()));
    }
}

#[test]
fn rational_moments_are_exact() {
    let c = vec![vec![rat(1, 1), rat(1, 3)], vec![rat(1, 3), rat(2, 1)]];
    // E X²Y² = c11 c22 + 2 c12²
    assert_eq!(rational_moment(&[2, 2], &c), rat(2, 1) + rat(2, 9));
    assert_eq!(rational_moment(&[0, 4], &c), rat(12, 1));
    assert_eq!(rational_moment(&[1, 2], &c), Rat::from_integer(0.into()));
}

#[test]
fn moments_match_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..6 {
        let m = rng.gen_range(1..=4);
        let g = random_psd(m, &mut rng);
        let order = 2 * rng.gen_range(1..=3);
        let idx: Vec<usize> = (0..order).map(|_| rng.gen_range(0..m)).collect();
        let exact = wick_moment(&g, &idx).unwrap();
        let mc = monte_carlo_moment(&g, &idx, 200_000, trial).unwrap();
        assert!((mc.mean - exact).abs() <= 5.0 * mc.stderr + 1e-12, "{exact} vs {mc:?}");
    }
}

#[test]
fn bound_dominates_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let m = rng.gen_range(1..=4);
        let g = random_psd(m, &mut rng);
        let order = 2 * rng.gen_range(1..=4);
        let idx: Vec<usize> = (0..order).map(|_| rng.gen_range(0..m)).collect();
        let moment = wick_moment(&g, &idx).unwrap().abs();
        for k in [0.01, 0.3, 1.0, 3.0, 100.0] {
            assert!(wick_bound(&g, &idx, k).unwrap() >= moment * (1.0 - 1e-12));
        }
        let (_, best) = optimal_wick_bound(&g, &idx).unwrap();
        assert!(best >= moment * (1.0 - 1e-9));
        assert!(best <= wick_bound(&g, &idx, 1.0).unwrap() * (1.0 + 1e-9));
    }
}

#[test]
fn optimal_bound_scales_with_the_moment() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g = random_psd(3, &mut rng);
    let idx = [0, 1, 2, 0, 1, 2];
    let (_, base) = optimal_wick_bound(&g, &idx).unwrap();
    for t in [0.1f64, 1.0, 10.0] {
        let (_, b) = optimal_wick_bound(&g.scaled(t * t), &idx).unwrap();
        let expected = base * t.powi(6);
        assert!((b - expected).abs() < 1e-8 * expected, "t={t}: {b} vs {expected}");
    }
}

#[test]
fn bound_rejects_nonpositive_k() {
    let g = GaussianVector::standard(1);
    assert!(wick_bound(&g, &[0, 0], 0.0).is_err());
    assert!(wick_bound(&g, &[0, 0], f64::NAN).is_err());
    assert!(wick_moment(&g, &[1, 0]).is_err());
}

#[test]
fn two_cubes_with_decay() {
    let r = local_factorial_experiment(&CubeGraph::chain(2), &[2, 2], &decayed_kernel(2), 8, 0).unwrap();
    // oracle: off-diagonal 1/4, three pairings 1 + 1/16 + 1/16
    assert!((r.unweighted - 1.125).abs() < 1e-12);
    assert!((r.weighted - 1.125 / 9.0).abs() < 1e-12);
    assert!(r.holds && r.slack < 1.0);
    assert!(matches!(r.method, SumMethod::Exact));
}

#[test]
fn zero_cross_covariance_factorizes() {
    let cov = |d: i64| if d == 0 { 1.0 } else { 0.0 };
    let r = local_factorial_experiment(&CubeGraph::chain(2), &[4, 2], &cov, 8, 0).unwrap();
    assert_eq!(r.unweighted, 3.0 * 1.0);
    assert!(r.holds);
}

#[test]
fn weights_tame_accumulation_in_one_cube() {
    let r = local_factorial_experiment(&CubeGraph::chain(1), &[8], &|_| 1.0, 8, 0).unwrap();
    let ratios: Vec<f64> = r.accumulation.iter().map(|a| a.unweighted_ratio).collect();
    // successive ratio (2k+1)/8 grows linearly: factorial growth
    let steps: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0]).collect();
    assert!(steps.windows(2).all(|w| w[1] > w[0]));
    for a in &r.accumulation {
        assert!(a.weighted_ratio < a.unweighted_ratio);
    }
}

#[test]
fn large_configurations_fall_back_to_sampling() {
    let r = local_factorial_experiment(&CubeGraph::chain(3), &[6, 6, 6], &decayed_kernel(2), 8, 1).unwrap();
    match r.method {
        SumMethod::MonteCarlo { stderr, .. } => assert!(stderr > 0.0 && stderr < r.unweighted),
        SumMethod::Exact => panic!("expected sampling"),
    }
    assert!(r.holds);
    assert!(local_factorial_experiment(&CubeGraph::chain(1), &[20], &|_| 1.0, 8, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_psd(3, &mut rng);
        let mut idx: Vec<usize> = (0..6).map(|_| rng.gen_range(0..3)).collect();
        let a = wick_moment(&g, &idx).unwrap();
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let b = wick_moment(&g, &idx).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }
}
