use mclab::bounds::{
    bernstein_condensed, bernstein_tail_raw, golden_thompson_check, hermitian_dilation, inf_norm_deviation,
    pt_romega_inf_deviation, spectral_vs_inf_bound_check, superop_deviation_norm,
};
use mclab::linalg::{self, Matrix};
use mclab::model::{make_random_low_rank, MatrixModel};
use mclab::rng::{next_unit, stream_rng};
use mclab::sampling::{ObservationSet, SamplingModel};
use proptest::prelude::*;

fn random_matrix(n1: usize, n2: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, 99);
    Matrix::from_fn(n1, n2, |_, _| next_unit(&mut rng) * 2.0 - 1.0)
}

fn symmetric(d: usize, seed: u64) -> Matrix {
    let a = random_matrix(d, d, seed);
    (&a + a.transpose()) * 0.5
}

fn full_coverage(n1: usize, n2: usize, times: usize) -> ObservationSet {
    let draws = (0..times)
        .flat_map(|_| (0..n1 as u32).flat_map(move |a| (0..n2 as u32).map(move |b| (a, b))))
        .collect();
    ObservationSet::from_draws(n1, n2, SamplingModel::WithReplace, 0, draws).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dilation_spectrum(d1 in 1usize..7, d2 in 1usize..7, seed in any::<u64>()) {
        let x = random_matrix(d1, d2, seed);
        let mut eig = linalg::sym_eigenvalues(&hermitian_dilation(&x));
        let sv = linalg::singular_values(&x);
        let mut expected: Vec<f64> = sv.iter().flat_map(|&s| [s, -s]).collect();
        expected.extend(std::iter::repeat_n(0.0, d1.abs_diff(d2)));
        eig.sort_by(f64::total_cmp);
        expected.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn condensed_dominates_full(d1 in 1usize..20, d2 in 1usize..20, rho in 0.01f64..100.0, m in 0.01f64..10.0, frac in 0.0f64..=1.0) {
        let tau = frac * rho / m;
        let full = bernstein_tail_raw(d1, d2, rho, m, tau).unwrap();
        let cond = bernstein_condensed(d1, d2, rho, m, tau).unwrap();
        prop_assert!(full <= cond * (1.0 + 1e-12));
    }

    #[test]
    fn golden_thompson_random(d in 1usize..6, seed in any::<u64>()) {
        let pair = golden_thompson_check(&symmetric(d, seed), &symmetric(d, seed ^ 5)).unwrap();
        prop_assert!(pair.holds());
    }

    #[test]
    fn spectral_below_scaled_inf(n1 in 1usize..9, n2 in 1usize..9, seed in any::<u64>()) {
        let pair = spectral_vs_inf_bound_check(&random_matrix(n1, n2, seed));
        prop_assert!(pair.lhs <= pair.rhs * (1.0 + 1e-12));
    }

    #[test]
    fn full_coverage_has_no_deviation(n1 in 2usize..7, extra in 0usize..4, r in 1usize..3, seed in any::<u64>()) {
        let n2 = n1 + extra;
        prop_assume!(r <= n1);
        let f = make_random_low_rank(n1, n2, r, MatrixModel::Haar, seed).unwrap();
        let obs = full_coverage(n1, n2, 1);
        prop_assert!(superop_deviation_norm(&f.tangent_space(), &obs).unwrap() <= 1e-8);
        let twice = full_coverage(n1, n2, 2);
        prop_assert!(superop_deviation_norm(&f.tangent_space(), &twice).unwrap() <= 1e-8);
        let z = f.uv_t();
        prop_assert!(inf_norm_deviation(&obs, &z).unwrap() <= 1e-12);
        prop_assert!(pt_romega_inf_deviation(&f.tangent_space(), &obs, &z).unwrap() <= 1e-12);
    }
}

#[test]
fn commuting_pairs_are_equal() {
    for seed in 0..20u64 {
        let mut rng = stream_rng(seed, 3);
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_fn(4, |_, _| next_unit(&mut rng) * 4.0 - 2.0));
        let b = Matrix::from_diagonal(&nalgebra::DVector::from_fn(4, |_, _| next_unit(&mut rng) * 4.0 - 2.0));
        let p = golden_thompson_check(&a, &b).unwrap();
        assert!((p.lhs - p.rhs).abs() <= 1e-10 * p.rhs.abs().max(1.0));
    }
}

#[test]
fn asymmetric_input_rejected() {
    let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    assert!(golden_thompson_check(&a, &Matrix::zeros(2, 2)).is_err());
}

#[test]
fn off_tangent_input_rejected() {
    let f = make_random_low_rank(5, 6, 1, MatrixModel::Haar, 2).unwrap();
    let obs = full_coverage(5, 6, 1);
    let z = f.tangent_space().project_perp(&random_matrix(5, 6, 1)).unwrap();
    assert!(pt_romega_inf_deviation(&f.tangent_space(), &obs, &z).is_err());
}

#[test]
fn scalar_deviation_on_one_cell() {
    let f = make_random_low_rank(1, 1, 1, MatrixModel::Haar, 0).unwrap();
    let obs = ObservationSet::from_draws(1, 1, SamplingModel::WithReplace, 0, vec![(0, 0); 7]).unwrap();
    assert!(superop_deviation_norm(&f.tangent_space(), &obs).unwrap() <= 1e-8);
}
