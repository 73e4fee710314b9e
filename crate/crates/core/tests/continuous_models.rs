use framekit::continuous::{approximate_by_countable, default_oracle, RefinementLimits};
use framekit::exemplars::{
    continuous_fourier_frame, finite_fourier_frame, geometric_scale_grid, haar_wavelet, quadrature_wavelet_frame,
};
use framekit::{ErrorClass, HermitianOperator};
use proptest::prelude::*;

fn support_strategy() -> impl Strategy<Value = (u64, Vec<i64>)> {
    (2u64..=24).prop_flat_map(|m| {
        prop::collection::btree_set(0..m as i64, 1..=(m as usize).min(5))
            .prop_map(move |s| (m, s.into_iter().collect::<Vec<_>>()))
    })
}

fn distance_to_identity(s: &HermitianOperator) -> f64 {
    s.minus(&HermitianOperator::identity(s.dim())).operator_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn finite_fourier_is_parseval((m, support) in support_strategy()) {
        let model = finite_fourier_frame(m, &support).unwrap();
        prop_assert!(distance_to_identity(&model.frame_operator().unwrap()) <= 1e-12);
        prop_assert!((model.max_norm_sqr() - support.len() as f64).abs() <= 1e-12);
    }

    #[test]
    fn subdividing_a_piecewise_constant_model_keeps_its_operator((m, support) in support_strategy(), levels in 0u32..4) {
        let model = continuous_fourier_frame(m, &support).unwrap().piecewise_constant();
        let (fine, parent) = model.subdivide(levels).unwrap();
        prop_assert_eq!(fine.len(), model.len() << levels);
        prop_assert!(parent.windows(2).all(|w| w[0] <= w[1]));
        let diff = fine.frame_operator().unwrap().minus(&model.frame_operator().unwrap()).operator_norm();
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn midpoint_quadrature_stays_parseval_under_refinement((m, support) in support_strategy(), levels in 0u32..4) {
        let (fine, _) = continuous_fourier_frame(m, &support).unwrap().subdivide(levels).unwrap();
        prop_assert!(distance_to_identity(&fine.frame_operator().unwrap()) <= 1e-11);
    }

    #[test]
    fn countable_approximation_meets_its_bound((m, support) in support_strategy(), eps in 0.05f64..1.0) {
        let model = continuous_fourier_frame(m, &support).unwrap();
        let oracle = default_oracle(&model);
        let approx = approximate_by_countable(&model, eps, oracle.as_ref(), RefinementLimits::default()).unwrap();
        prop_assert!((approx.error_bound - 6.0 * eps).abs() <= 1e-12);
        prop_assert!(approx.worst_ratio <= 1.0);
        prop_assert_eq!(approx.parent.len(), approx.model.len());
        // the exact operator of this model is the identity
        prop_assert!(distance_to_identity(&approx.model.frame_operator().unwrap()) <= approx.error_bound);
    }
}

#[test]
fn finer_scale_grids_bring_wavelet_bounds_closer_to_one() {
    for k in [1, 2] {
        let mut last = f64::INFINITY;
        for per_octave in [1, 2, 4, 8] {
            let scales = geometric_scale_grid(1e-3, 1e3, per_octave).unwrap();
            let (_, report) = quadrature_wavelet_frame(&haar_wavelet(), &scales, 2 * k + 1, k, false).unwrap();
            let gap = (report.bounds[0] - 1.0).abs().max((report.bounds[1] - 1.0).abs());
            assert!(gap < last, "K = {k}, {per_octave} per octave: gap {gap} after {last}");
            last = gap;
        }
    }
}

#[test]
fn divisible_wavelet_refinement_hits_the_cell_limit() {
    let scales = geometric_scale_grid(1e-3, 1e3, 1).unwrap();
    let (model, _) = quadrature_wavelet_frame(&haar_wavelet(), &scales, 3, 1, true).unwrap();
    let oracle = default_oracle(&model);
    let limits = RefinementLimits { max_depth: 48, max_cells: 1 << 16 };
    let err = approximate_by_countable(&model, 1.0, oracle.as_ref(), limits).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Budget);
}

#[test]
fn atomic_wavelet_model_needs_no_refinement() {
    let scales = geometric_scale_grid(1e-2, 1e2, 2).unwrap();
    let (model, _) = quadrature_wavelet_frame(&haar_wavelet(), &scales, 5, 2, false).unwrap();
    let oracle = default_oracle(&model);
    let approx = approximate_by_countable(&model, 0.1, oracle.as_ref(), RefinementLimits::default()).unwrap();
    assert_eq!(approx.model.len(), model.len());
    let diff = approx.model.frame_operator().unwrap().minus(&model.frame_operator().unwrap()).operator_norm();
    assert!(diff <= 1e-12);
}
