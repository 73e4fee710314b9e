//! Sampling of scalable frames and discretization of bounded continuous
//! frames.
//!
//! A scalable frame `{a_i phi_i}` is flattened by replicating `phi_i`
//! `N_i = ceil(K |a_i|^2 / eta)` times, the replicated family is partitioned
//! into frames with uniform bounds, and one block becomes the sample.

use serde::{Deserialize, Serialize};

use crate::continuous::{approximate_by_countable, default_oracle, ContinuousFrameModel, RefinementLimits};
use crate::error::{FrameError, Result};
use crate::frame::{block_bounds, FrameSystem};
use crate::operator::HermitianOperator;
use crate::partition::{partition_general, uniform_partition_constants, SearchConfig};

/// Largest replicated family the sampler will build.
pub const MAX_REPLICATED: u64 = 1 << 20;
/// Attempts at refining the approximation before giving up.
pub const DISCRETIZE_ATTEMPTS: usize = 8;

/// Output of the sampling routines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingResult {
    /// `"finite"`, `"general"` or `"continuous"`.
    pub route: String,
    pub epsilon: f64,
    /// Source index of every sample, repeats allowed.
    pub pi: Vec<usize>,
    /// Replication count per source index (0 for trimmed entries).
    pub counts: Vec<u64>,
    pub k: u64,
    pub eta: f64,
    /// `[min |b_n|^2, max |b_n|^2]`.
    pub b_range: [f64; 2],
    /// `||sum |b_n|^2 phi phi^* - sum |a_i|^2 phi phi^*||`.
    pub conservation_error: f64,
    /// Measured bounds of `{phi_{pi(n)}}`.
    pub achieved_bounds: [f64; 2],
    /// `(A_0, B_0)`.
    pub constants: [f64; 2],
    /// Window proved for this finite-dimensional route.
    pub finite_window: [f64; 2],
    /// Looser window with `eps` absorbed into the constants.
    pub guaranteed_window: [f64; 2],
    pub within_finite_window: bool,
    pub within_guaranteed_window: bool,
    pub block_count: usize,
    pub chosen_block: usize,
    /// Lower bound of every block of the replicated partition, in the
    /// scale of the sampled vectors.
    pub block_lower_bounds: Vec<f64>,
    /// Bounds `(A, B)` and norm cap `N` of the general route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_cap: Option<f64>,
    /// Sample points `t_{pi(n)}` of the continuous route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<DiscretizationRecord>,
}

/// How the continuous frame was turned into a scalable frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationRecord {
    /// Approximation accuracy that succeeded.
    pub accuracy: f64,
    pub attempts: usize,
    pub cells: usize,
    /// Bounds of `{sqrt(mu(X_n)) phi_{t_n}}`.
    pub measured_bounds: [f64; 2],
    /// Bounds `(A, B)` of the continuous frame the window is computed from.
    pub input_bounds: [f64; 2],
}

/// `|a_i|^2`, from explicit scalars or from the frame's weights.
fn squared_scalars(f: &FrameSystem, scalars: Option<&[f64]>) -> Result<Vec<f64>> {
    let c: Vec<f64> = match scalars {
        Some(a) => {
            if a.len() != f.len() {
                return Err(FrameError::Shape(format!("{} scalars for {} vectors", a.len(), f.len())));
            }
            if f.weights().is_some() {
                return Err(FrameError::InvalidInput("give either scalars or frame weights, not both".into()));
            }
            a.iter().map(|x| x * x).collect()
        }
        None => (0..f.len()).map(|i| f.weight(i)).collect(),
    };
    if let Some(x) = c.iter().find(|x| !x.is_finite()) {
        return Err(FrameError::DegenerateScalars(format!("scalar with |a|^2 = {x}")));
    }
    Ok(c)
}

/// Indices with nonzero scalar and nonzero vector.
fn active_set(f: &FrameSystem, c: &[f64]) -> Result<Vec<usize>> {
    let active: Vec<usize> = (0..f.len()).filter(|&i| c[i] > 0.0 && !f.vectors()[i].is_zero()).collect();
    if active.is_empty() {
        return Err(FrameError::DegenerateScalars("every scalar or vector is zero".into()));
    }
    Ok(active)
}

/// Smallest `K >= 1` with `eta/K <= 1 - eps/2` and `(K+1)/(K(1 - eps/2)) <= 1 + eps`.
pub fn choose_k(eta: f64, eps: f64) -> Result<u64> {
    let ok = |k: u64| {
        let k = k as f64;
        eta / k <= 1.0 - eps / 2.0 && (k + 1.0) / (k * (1.0 - eps / 2.0)) <= 1.0 + eps
    };
    let mut hi = 1u64;
    while !ok(hi) {
        hi = hi.checked_mul(2).ok_or_else(|| FrameError::Domain(format!("no K for eta = {eta}, eps = {eps}")))?;
        if hi > 1 << 50 {
            return Err(FrameError::Domain(format!("no K for eta = {eta}, eps = {eps}")));
        }
    }
    let mut lo = hi / 2;
    // ok(lo) is false (or lo = 0); both conditions are monotone in K
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FrameError::InvalidInput(format!("epsilon {eps} must lie in (0, 1)")));
    }
    Ok(())
}

fn bounds_of(f: &FrameSystem, indices: &[usize]) -> [f64; 2] {
    let (lo, hi) = block_bounds(f, indices);
    [lo, hi]
}

fn within(b: [f64; 2], w: [f64; 2]) -> bool {
    let tol = 1e-9 * w[1].abs().max(1.0);
    b[0] >= w[0] - tol && b[1] <= w[1] + tol
}

/// Samples `{phi_i}` given scalars making `{a_i phi_i}` a frame with bounds
/// `1 - eps/2` and `1`; all `||phi_i|| <= 1`.
///
/// `scalars = None` takes `|a_i|^2` from the frame's weights.
pub fn sample_scalable_finite(
    f: &FrameSystem,
    scalars: Option<&[f64]>,
    eps: f64,
    config: &SearchConfig,
) -> Result<SamplingResult> {
    check_epsilon(eps)?;
    let c = squared_scalars(f, scalars)?;
    let active = active_set(f, &c)?;
    let plain = FrameSystem::new(f.dimension(), f.vectors().to_vec(), None, f.label())?;
    let weighted = FrameSystem::new(f.dimension(), f.vectors().to_vec(), Some(c.clone()), f.label())?;
    if let Some(&i) = active.iter().find(|&&i| plain.vectors()[i].norm_sqr() > 1.0 + 1e-12) {
        return Err(FrameError::Hypothesis(format!(
            "vector {i} has squared norm {} > 1",
            plain.vectors()[i].norm_sqr()
        )));
    }
    let s = weighted.partial_operator(&active);
    let (lo, hi) = s.extreme_eigenvalues();
    if lo < 1.0 - eps / 2.0 - 1e-9 || hi > 1.0 + 1e-9 {
        return Err(FrameError::Hypothesis(format!(
            "bounds ({lo}, {hi}) of the scaled family are outside [1 - eps/2, 1] = [{}, 1]",
            1.0 - eps / 2.0
        )));
    }
    let eta = active.iter().map(|&i| c[i]).fold(f64::INFINITY, f64::min);
    let k = choose_k(eta, eps)?;
    let mut counts = vec![0u64; f.len()];
    for &i in &active {
        counts[i] = (k as f64 * c[i] / eta).ceil() as u64;
    }
    let total: u64 = counts.iter().sum();
    if total > MAX_REPLICATED {
        return Err(FrameError::SearchBudget { needed: total as f64, cap: MAX_REPLICATED as f64 });
    }
    let kappa: Vec<usize> = active.iter().flat_map(|&i| std::iter::repeat(i).take(counts[i] as usize)).collect();
    let b2: Vec<f64> = kappa.iter().map(|&i| c[i] / counts[i] as f64).collect();
    let b_range = [b2.iter().cloned().fold(f64::INFINITY, f64::min), b2.iter().cloned().fold(0.0, f64::max)];
    let mut replicated_op = HermitianOperator::zeros(f.dimension());
    for (&i, &w) in kappa.iter().zip(&b2) {
        replicated_op.add_outer(&plain.vectors()[i], w);
    }
    let conservation_error = replicated_op.minus(&s).operator_norm();

    let scale = eta / k as f64;
    let g = plain.subsystem(&kappa).scaled(scale.sqrt());
    let parts = partition_general(&g, scale, config)?;
    let sampled = plain.subsystem(&kappa);
    let lowers: Vec<f64> = parts.blocks.iter().map(|blk| bounds_of(&sampled, blk)[0]).collect();
    let mut chosen = 0;
    for (j, l) in lowers.iter().enumerate() {
        if *l > lowers[chosen] {
            chosen = j;
        }
    }
    let mut block = parts.blocks[chosen].clone();
    block.sort_unstable();
    let pi: Vec<usize> = block.iter().map(|&n| kappa[n]).collect();
    let all: Vec<usize> = (0..pi.len()).collect();
    let achieved = bounds_of(&plain.subsystem(&pi), &all);
    let (a0, b0) = uniform_partition_constants();
    let finite_window = [a0, b0 * (1.0 + eps)];
    let guaranteed_window = [a0 * (1.0 - eps), 2.0 * b0 * (1.0 + eps)];
    Ok(SamplingResult {
        route: "finite".into(),
        epsilon: eps,
        within_finite_window: within(achieved, finite_window),
        within_guaranteed_window: within(achieved, guaranteed_window),
        pi,
        counts,
        k,
        eta,
        b_range,
        conservation_error,
        achieved_bounds: achieved,
        constants: [a0, b0],
        finite_window,
        guaranteed_window,
        block_count: parts.blocks.len(),
        chosen_block: chosen,
        block_lower_bounds: lowers,
        frame_bounds: None,
        norm_cap: None,
        sample_points: None,
        discretization: None,
    })
}

/// Samples `{phi_i}` given scalars making `{a_i phi_i}` a frame with bounds
/// `A, B`, where `||phi_i||^2 <= N`.
///
/// Runs the finite construction on `(A/N)^{1/2} S^{-1/2} phi_i` with
/// scalars `a_i (N/A)^{1/2}`, then measures the sample on the original
/// vectors.
pub fn sample_scalable_general(
    f: &FrameSystem,
    scalars: Option<&[f64]>,
    norm_cap: f64,
    eps: f64,
    config: &SearchConfig,
) -> Result<SamplingResult> {
    check_epsilon(eps)?;
    let c = squared_scalars(f, scalars)?;
    let active = active_set(f, &c)?;
    let plain = FrameSystem::new(f.dimension(), f.vectors().to_vec(), None, f.label())?;
    let weighted = FrameSystem::new(f.dimension(), f.vectors().to_vec(), Some(c.clone()), f.label())?;
    if !(norm_cap > 0.0) {
        return Err(FrameError::Hypothesis(format!("norm cap {norm_cap} must be positive")));
    }
    if let Some(&i) = active.iter().find(|&&i| plain.vectors()[i].norm_sqr() > norm_cap * (1.0 + 1e-12)) {
        return Err(FrameError::Hypothesis(format!(
            "vector {i} has squared norm {} above N = {norm_cap}",
            plain.vectors()[i].norm_sqr()
        )));
    }
    let s = weighted.partial_operator(&active);
    let (a, b) = s.extreme_eigenvalues();
    if a <= 1e-12 * b.max(1.0) {
        return Err(FrameError::NotAFrame { lower: a });
    }
    let root = s.power(-0.5, 1e-12 * b)?;
    let transformed = plain.transformed(&root).scaled((a / norm_cap).sqrt());
    let c_prime: Vec<f64> = c.iter().map(|x| x * norm_cap / a).collect();
    let inner =
        sample_scalable_finite(&transformed, Some(&c_prime.iter().map(|x| x.sqrt()).collect::<Vec<_>>()), eps, config)?;
    let all: Vec<usize> = (0..inner.pi.len()).collect();
    let achieved = bounds_of(&plain.subsystem(&inner.pi), &all);
    let (a0, b0) = (inner.constants[0], inner.constants[1]);
    let ratio = b / a;
    let finite_window = [a0 * norm_cap, b0 * norm_cap * ratio * (1.0 + eps)];
    let guaranteed_window = [a0 * norm_cap * (1.0 - eps), 2.0 * b0 * norm_cap * ratio * (1.0 + eps)];
    Ok(SamplingResult {
        route: "general".into(),
        within_finite_window: within(achieved, finite_window),
        within_guaranteed_window: within(achieved, guaranteed_window),
        achieved_bounds: achieved,
        finite_window,
        guaranteed_window,
        frame_bounds: Some([a, b]),
        norm_cap: Some(norm_cap),
        ..inner
    })
}

/// Bounds of a continuous frame: declared if present, else measured on
/// the cell model.
pub fn model_bounds(model: &ContinuousFrameModel) -> Result<[f64; 2]> {
    if let Some(b) = model.declared_bounds() {
        return Ok(b);
    }
    let (lo, hi) = model.frame_operator()?.extreme_eigenvalues();
    Ok([lo, hi])
}

/// Norm cap of a continuous frame: declared if present, else the largest
/// squared norm at the sample points.
pub fn model_norm_cap(model: &ContinuousFrameModel) -> f64 {
    model.norm_cap().unwrap_or_else(|| model.max_norm_sqr())
}

/// Picks sample points `t_n` so that `{phi_{t_n}}` is a frame with bounds
/// `A_0 N` and `3 B_0 N B / A`.
pub fn discretize_continuous(model: &ContinuousFrameModel, eps: f64, config: &SearchConfig) -> Result<SamplingResult> {
    check_epsilon(eps)?;
    let [a, b] = model_bounds(model)?;
    if !(a > 0.0) {
        return Err(FrameError::NotAFrame { lower: a });
    }
    let n = model_norm_cap(model);
    let oracle = default_oracle(model);
    let mut accuracy = eps * a / 6.0;
    let mut last = [0.0, 0.0];
    let mut found = None;
    for attempt in 1..=DISCRETIZE_ATTEMPTS {
        let approx = approximate_by_countable(model, accuracy, oracle.as_ref(), RefinementLimits::default())?;
        let discrete = approx.model.equivalent_discrete()?;
        let (lo, hi) = discrete.frame_operator()?.extreme_eigenvalues();
        last = [lo, hi];
        if lo > a * (1.0 - eps) && hi < b * (1.0 + eps) {
            found = Some((approx.model, discrete, attempt));
            break;
        }
        accuracy /= 4.0;
    }
    let Some((cells, discrete, attempts)) = found else {
        return Err(FrameError::DiscretizationTooCoarse { lower: last[0], upper: last[1], suggested: accuracy });
    };
    let cap = n / (1.0 - eps);
    let inner = sample_scalable_general(&discrete, None, cap, eps, config)?;
    let (a0, b0) = (inner.constants[0], inner.constants[1]);
    let guaranteed_window = [a0 * n * (1.0 - eps), 3.0 * b0 * n * (b / a) * (1.0 + eps)];
    let points: Vec<Vec<f64>> = inner.pi.iter().map(|&i| cells.cells()[i].point.clone()).collect();
    Ok(SamplingResult {
        route: "continuous".into(),
        within_guaranteed_window: within(inner.achieved_bounds, guaranteed_window),
        guaranteed_window,
        sample_points: Some(points),
        discretization: Some(DiscretizationRecord {
            accuracy,
            attempts,
            cells: cells.len(),
            measured_bounds: last,
            input_bounds: [a, b],
        }),
        ..inner
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::MeasureCell;
    use crate::operator::ComplexVector;

    fn real(xs: &[f64]) -> ComplexVector {
        ComplexVector::from_real(xs).unwrap()
    }

    #[test]
    fn k_is_minimal() {
        for &(eta, eps) in &[(1.0, 0.5), (0.5, 0.5), (0.1, 0.1), (1.0, 0.01)] {
            let k = choose_k(eta, eps).unwrap();
            let ok = |k: f64| eta / k <= 1.0 - eps / 2.0 && (k + 1.0) / (k * (1.0 - eps / 2.0)) <= 1.0 + eps;
            assert!(ok(k as f64));
            assert!(k == 1 || !ok((k - 1) as f64));
        }
        assert_eq!(choose_k(1.0, 0.5).unwrap(), 8);
    }

    #[test]
    fn counts_follow_ceiling_rule() {
        let f = FrameSystem::from_vectors(vec![real(&[1.0, 0.0]), real(&[0.0, 1.0])]).unwrap();
        let a = [1.0, std::f64::consts::FRAC_1_SQRT_2];
        // {a_i e_i} has bounds (1/2, 1): only the general route applies
        assert!(sample_scalable_finite(&f, Some(&a), 0.5, &SearchConfig::auto(0, 100)).is_err());
        let r = sample_scalable_general(&f, Some(&a), 1.0, 0.5, &SearchConfig::auto(0, 100)).unwrap();
        assert!((r.eta - 1.0).abs() < 1e-12);
        assert_eq!(r.counts, vec![2 * r.k, r.k]);
        assert!(r.conservation_error < 1e-12);
        assert!(r.b_range[0] >= r.eta / (r.k + 1) as f64 && r.b_range[1] <= r.eta / r.k as f64);
        assert!(r.within_finite_window);
    }

    #[test]
    fn parseval_uniform_scalars() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let f = FrameSystem::from_vectors(vec![real(&[1.0, 0.0]), real(&[0.0, 1.0]), real(&[h, h]), real(&[h, -h])])
            .unwrap();
        let r = sample_scalable_finite(&f, Some(&[h; 4]), 0.5, &SearchConfig::auto(0, 100)).unwrap();
        assert!(r.counts.iter().all(|&n| n == r.counts[0]));
        assert!(r.achieved_bounds[0] > 0.0);
        assert!(r.within_finite_window && r.within_guaranteed_window);
    }

    #[test]
    fn zero_scalars_are_trimmed() {
        let f = FrameSystem::from_vectors(vec![real(&[1.0]), real(&[0.7])]).unwrap();
        let r = sample_scalable_finite(&f, Some(&[1.0, 0.0]), 0.5, &SearchConfig::auto(0, 10)).unwrap();
        assert_eq!(r.counts[1], 0);
        assert!(r.pi.iter().all(|&i| i == 0));
        assert!(matches!(
            sample_scalable_finite(&f, Some(&[0.0, 0.0]), 0.5, &SearchConfig::auto(0, 10)),
            Err(FrameError::DegenerateScalars(_))
        ));
    }

    #[test]
    fn general_route_scales() {
        let f = FrameSystem::from_vectors(vec![real(&[2.0, 0.0]), real(&[0.0, 1.0]), real(&[1.0, 1.0])]).unwrap();
        let a = [1.0, 1.5, 0.5];
        let cfg = SearchConfig::auto(3, 100);
        let r1 = sample_scalable_general(&f, Some(&a), 4.0, 0.25, &cfg).unwrap();
        assert!(r1.within_finite_window, "{:?} {:?}", r1.achieved_bounds, r1.finite_window);
        let g = f.scaled(3.0);
        let r2 = sample_scalable_general(&g, Some(&a.map(|x| x / 3.0)), 36.0, 0.25, &cfg).unwrap();
        assert_eq!(r1.pi, r2.pi);
        for k in 0..2 {
            assert!((r2.achieved_bounds[k] - 9.0 * r1.achieved_bounds[k]).abs() < 1e-9 * r2.achieved_bounds[k]);
        }
    }

    #[test]
    fn atom_model_skips_refinement() {
        let cells = vec![MeasureCell::atom("a", 0.5, vec![0.0]), MeasureCell::atom("b", 0.5, vec![1.0])];
        let m = ContinuousFrameModel::new(2, cells, vec![real(&[1.0, 0.0]), real(&[0.0, 1.0])]).unwrap();
        let r = discretize_continuous(&m, 0.25, &SearchConfig::auto(0, 100)).unwrap();
        let d = r.discretization.as_ref().unwrap();
        assert_eq!(d.cells, 2);
        assert_eq!(d.attempts, 1);
        assert!(r.within_guaranteed_window);
        assert_eq!(r.sample_points.as_ref().unwrap().len(), r.pi.len());
    }
}
