use mclab::linalg::{self, Matrix};
use mclab::model::{coherence, coherence_profile, make_random_low_rank, MatrixModel, TangentSpace};
use mclab::rng::{next_unit, stream_rng};
use mclab::sampling::{
    apply_r_omega, max_multiplicity, partition, sample_bernoulli, sample_uniform, sample_with_replacement,
    SamplingModel,
};
use proptest::prelude::*;

fn random_matrix(n1: usize, n2: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, 99);
    Matrix::from_fn(n1, n2, |_, _| next_unit(&mut rng) * 2.0 - 1.0)
}

fn model() -> impl Strategy<Value = MatrixModel> {
    prop_oneof![
        Just(MatrixModel::Haar),
        Just(MatrixModel::BoundedEntry),
        Just(MatrixModel::Spiky)
    ]
}

fn shape() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=12).prop_flat_map(|n1| (Just(n1), n1..=16)).prop_flat_map(|(n1, n2)| (Just(n1), Just(n2), 1..=n1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tangent_projector_identities((n1, n2, r) in shape(), m in model(), seed in any::<u64>()) {
        let f = make_random_low_rank(n1, n2, r, m, seed).unwrap();
        let ts = f.tangent_space();
        let a = random_matrix(n1, n2, seed ^ 1);
        let b = random_matrix(n1, n2, seed ^ 2);
        let pa = ts.project(&a).unwrap();
        let tol = 1e-10 * a.norm().max(1.0);
        prop_assert!((ts.project(&pa).unwrap() - &pa).norm() <= tol);
        let lhs = pa.dot(&b);
        let rhs = a.dot(&ts.project(&b).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * a.norm() * b.norm());
        let split = &pa + ts.project_perp(&a).unwrap();
        prop_assert!((split - &a).norm() <= tol);
        let perp = ts.project_perp(&a).unwrap();
        prop_assert!((pa.norm_squared() + perp.norm_squared() - a.norm_squared()).abs() <= tol);
    }

    #[test]
    fn basis_norm_closed_form((n1, n2, r) in shape(), m in model(), seed in any::<u64>()) {
        let f = make_random_low_rank(n1, n2, r, m, seed).unwrap();
        let ts = f.tangent_space();
        let c = coherence_profile(&f);
        let bound = c.mu0 * (r * (n1 + n2)) as f64 / (n1 * n2) as f64;
        for a in 0..n1 {
            for b in 0..n2 {
                let mut e = Matrix::zeros(n1, n2);
                e[(a, b)] = 1.0;
                let direct = ts.project(&e).unwrap().norm_squared();
                let closed = ts.basis_norm_sq(a, b).unwrap();
                prop_assert!((direct - closed).abs() <= 1e-10);
                prop_assert!(closed <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn coherence_ranges((n1, n2, r) in shape(), m in model(), seed in any::<u64>()) {
        let f = make_random_low_rank(n1, n2, r, m, seed).unwrap();
        let c = coherence_profile(&f);
        prop_assert!(c.mu_u >= 1.0 - 1e-12 && c.mu_u <= n1 as f64 / r as f64 + 1e-12);
        prop_assert!(c.mu_v >= 1.0 - 1e-12 && c.mu_v <= n2 as f64 / r as f64 + 1e-12);
        prop_assert!(c.mu1 <= c.mu0 * (r as f64).sqrt() + 1e-12);
        let pu = f.u() * f.u().transpose();
        prop_assert!((coherence(&pu).unwrap() - c.mu_u).abs() <= 1e-12 * c.mu_u.max(1.0));
    }

    #[test]
    fn r_omega_is_psd_diagonal(n1 in 1usize..8, n2 in 1usize..8, m in 1usize..60, seed in any::<u64>()) {
        let obs = sample_with_replacement(n1, n2, m, seed).unwrap();
        let z = random_matrix(n1, n2, seed);
        prop_assert!(z.dot(&apply_r_omega(&obs, &z).unwrap()) >= 0.0);
        let start = random_matrix(n1, n2, seed ^ 7);
        let est = linalg::lanczos_operator_norm(|x| apply_r_omega(&obs, x).unwrap(), &start, 1e-12, 1000).unwrap();
        prop_assert!((est.value - max_multiplicity(&obs) as f64).abs() <= 1e-8);
    }

    #[test]
    fn sampling_sizes(n1 in 1usize..10, n2 in 1usize..10, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let cells = n1 * n2;
        let m = ((frac * cells as f64) as usize).max(1);
        let u = sample_uniform(n1, n2, m, seed).unwrap();
        prop_assert_eq!(u.m(), m);
        prop_assert_eq!(u.distinct(), m);
        let w = sample_with_replacement(n1, n2, m, seed).unwrap();
        prop_assert_eq!(w.m(), m);
        prop_assert_eq!(w.cells().iter().map(|c| c.multiplicity as usize).sum::<usize>(), m);
        let b = sample_bernoulli(n1, n2, frac, seed).unwrap();
        prop_assert!(b.cells().iter().all(|c| c.multiplicity == 1));
    }

    #[test]
    fn partition_preserves_draws(m in 1usize..80, p in 1usize..10, seed in any::<u64>()) {
        prop_assume!(p <= m);
        let obs = sample_with_replacement(6, 7, m, seed).unwrap();
        let blocks = partition(&obs, p).unwrap();
        prop_assert_eq!(blocks.len(), p);
        let joined: Vec<(u32, u32)> = blocks.iter().flat_map(|b| b.draws().to_vec()).collect();
        prop_assert_eq!(joined, obs.draws().to_vec());
        let sizes: Vec<usize> = blocks.iter().map(|b| b.m()).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
    }
}

#[test]
fn spiky_has_maximal_row_coherence() {
    let f = make_random_low_rank(10, 12, 2, MatrixModel::Spiky, 5).unwrap();
    assert!((coherence_profile(&f).mu0 - 5.0).abs() < 1e-12);
}

#[test]
fn projectors_from_matrices_match_factorization() {
    let f = make_random_low_rank(6, 9, 2, MatrixModel::Haar, 11).unwrap();
    let pu = f.u() * f.u().transpose();
    let pv = f.v() * f.v().transpose();
    let ts = TangentSpace::from_projectors(pu, pv).unwrap();
    let z = random_matrix(6, 9, 4);
    let diff = ts.project(&z).unwrap() - f.tangent_space().project(&z).unwrap();
    assert!(diff.norm() < 1e-12);
}

#[test]
fn sampling_mean_is_scaled_identity() {
    let (n1, n2, m, trials) = (3usize, 4usize, 6usize, 10_000u64);
    let z = random_matrix(n1, n2, 1);
    let mut sum = Matrix::zeros(n1, n2);
    let mut sq = Matrix::zeros(n1, n2);
    for s in 0..trials {
        let rz = apply_r_omega(&sample_with_replacement(n1, n2, m, s).unwrap(), &z).unwrap();
        sq += rz.component_mul(&rz);
        sum += rz;
    }
    let t = trials as f64;
    let mean = &sum / t;
    let expected = &z * (m as f64 / (n1 * n2) as f64);
    for i in 0..n1 {
        for j in 0..n2 {
            let var = sq[(i, j)] / t - mean[(i, j)].powi(2);
            let se = (var / t).sqrt();
            assert!((mean[(i, j)] - expected[(i, j)]).abs() <= 5.0 * se, "cell ({i},{j})");
        }
    }
}

#[test]
fn uniform_model_rejects_repeats() {
    let obs = sample_uniform(5, 5, 25, 3).unwrap();
    assert_eq!(obs.model(), SamplingModel::UniformNoReplace);
    assert!(sample_uniform(5, 5, 26, 3).is_err());
    assert!(partition(&obs, 2).is_err());
}
