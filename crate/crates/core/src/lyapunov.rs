//! Lyapunov-type subset selection: choose a subfamily whose partial frame
//! operator approximates a weighted frame operator.
//!
//! Discretely the subset comes from a two-block Weaver search on the
//! normalised vectors `S^{-1/2} P phi_i`; in the non-atomic cell model the
//! subset takes exactly the fraction `tau` of every cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuous::{
    approximate_by_countable, default_oracle, CellPortion, ContinuousFrameModel, RefinementLimits,
};
use crate::error::{FrameError, Result};
use crate::frame::FrameSystem;
use crate::operator::{add_outer_raw, HermitianOperator};
use crate::partition::{
    search_weaver_partition, two_sided_bound, Objective, PartitionCertificate, PartitionSpec, SearchConfig, BESSEL_TOL,
    DEFAULT_TRIALS,
};

/// Default constant in the `C eps^{1/4}` target of the scalar selection.
pub const DEFAULT_C: f64 = 2.0;
/// Default constant in the `C0 eps^{1/8}` target of the weighted selection.
pub const DEFAULT_C0: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct LyapunovConfig {
    pub c: f64,
    pub c0: f64,
    /// Search used inside each bucket; its objective is always the
    /// two-sided deviation.
    pub search: SearchConfig,
    /// Bucket count; `None` means `floor(eps^{-1/8})`.
    pub buckets: Option<usize>,
    /// Compute the exhaustive optimum when `m` is at most this.
    pub oracle_max_vectors: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            c: DEFAULT_C,
            c0: DEFAULT_C0,
            search: SearchConfig::auto(0, DEFAULT_TRIALS),
            buckets: None,
            oracle_max_vectors: 16,
        }
    }
}

/// Selection inside one bucket `{i : (k-1)/n < t_i <= k/n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRecord {
    pub k: usize,
    /// `k / n`.
    pub t: f64,
    pub indices: Vec<usize>,
    pub selected: Vec<usize>,
    /// `||sum_{selected} phi phi^* - t sum_{bucket} phi phi^*||`.
    pub deviation: f64,
    /// `||sum_{selected} psi psi^* - t P||`.
    pub psi_deviation: f64,
    /// `2 sqrt(2 delta') + 2 delta'` for `delta' = max ||psi_i||^2`.
    pub psi_bound: f64,
    /// `||P (D - t S) P||`.
    pub projected_deviation: f64,
    /// `||D (I - P)||`, at most `sqrt(eps)` up to rounding.
    pub leakage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<PartitionCertificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetCertificate {
    pub epsilon: f64,
    /// The weights `t_i`.
    pub weights: Vec<f64>,
    pub selected: Vec<usize>,
    /// `||sum_{selected} phi phi^* - sum t_i phi phi^*||`.
    pub deviation: f64,
    /// The constant used in `target`.
    pub constant: f64,
    /// `C eps^{1/4}` (one weight) or `C0 eps^{1/8}` (weights).
    pub target: f64,
    pub satisfied: bool,
    pub n_buckets: usize,
    /// `(1/n) ||S||`.
    pub quantization_bound: f64,
    /// `||sum (k_i/n - t_i) phi phi^*||`.
    pub quantization_measured: f64,
    /// Sum of the bucket deviations.
    pub search_slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_optimum: Option<f64>,
    pub buckets: Vec<BucketRecord>,
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(FrameError::InvalidInput(format!("epsilon {eps} must be positive")));
    }
    Ok(())
}

fn check_hypotheses(f: &FrameSystem, eps: f64) -> Result<HermitianOperator> {
    check_epsilon(eps)?;
    let s = f.frame_operator()?;
    let bessel = s.extreme_eigenvalues().1;
    if bessel > 1.0 + BESSEL_TOL {
        return Err(FrameError::Hypothesis(format!("Bessel bound {bessel} exceeds 1")));
    }
    let delta = f.delta();
    if delta > eps * (1.0 + 1e-12) {
        return Err(FrameError::Hypothesis(format!("a vector has squared norm {delta} above epsilon = {eps}")));
    }
    Ok(s)
}

/// `||sum_{i in selected} a_i phi_i phi_i^* - target||`.
pub fn deviation(f: &FrameSystem, selected: &[usize], target: &HermitianOperator) -> f64 {
    f.partial_operator(selected).minus(target).operator_norm()
}

fn scalar_selection(
    f: &FrameSystem,
    s: &HermitianOperator,
    eps: f64,
    t: f64,
    search: &SearchConfig,
) -> Result<(Vec<usize>, BucketRecord)> {
    let m = f.len();
    let trivial = |selected: Vec<usize>| {
        let dev = deviation(f, &selected, &s.scaled(t));
        let rec = BucketRecord {
            k: 0,
            t,
            indices: (0..m).collect(),
            selected: selected.clone(),
            deviation: dev,
            psi_deviation: 0.0,
            psi_bound: 0.0,
            projected_deviation: dev,
            leakage: 0.0,
            search: None,
        };
        (selected, rec)
    };
    if t == 0.0 {
        return Ok(trivial(Vec::new()));
    }
    if t == 1.0 {
        return Ok(trivial((0..m).collect()));
    }
    let eig = s.spectral_decompose();
    let top = eig.eigenvalues.last().copied().unwrap_or(0.0).max(1.0) + BESSEL_TOL;
    let cut = eps.sqrt();
    let in_range = |l: f64| l >= cut && l <= top;
    let p = eig.map(|l| if in_range(l) { 1.0 } else { 0.0 });
    let b = eig.map(|l| if in_range(l) { l.powf(-0.5) } else { 0.0 });
    let psi = f.absorb_weights().transformed(&b);
    let spec = PartitionSpec::new(vec![t, 1.0 - t])?;
    let cfg = SearchConfig { objective: Objective::Deviation, ..search.clone() };
    // sum psi psi^* = P, so the Bessel precondition of the search holds.
    let cert = search_weaver_partition(&psi, &spec, &cfg)?;
    let selected = cert.blocks().swap_remove(0);
    let d_op = f.partial_operator(&selected);
    let dev = d_op.minus(&s.scaled(t)).operator_norm();
    let psi_dev = psi.partial_operator(&selected).minus(&p.scaled(t)).operator_norm();
    let projected = d_op.minus(&s.scaled(t)).congruence(&p).operator_norm();
    let complement = HermitianOperator::identity(f.dimension()).minus(&p);
    let leakage = spectral_norm_of_product(&d_op, &complement);
    let rec = BucketRecord {
        k: 0,
        t,
        indices: (0..m).collect(),
        selected: selected.clone(),
        deviation: dev,
        psi_deviation: psi_dev,
        psi_bound: two_sided_bound(2, psi.delta()),
        projected_deviation: projected,
        leakage,
        search: Some(cert),
    };
    Ok((selected, rec))
}

/// `||A B||` for Hermitian `A, B`, via `sqrt(||(AB)^*(AB)||) = sqrt(||B A^2 B||)`.
fn spectral_norm_of_product(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
    let a2 = HermitianOperator::from_dense_trusted(a.dim(), a.product(a));
    a2.congruence(b).operator_norm().max(0.0).sqrt()
}

/// Exhaustive `min_I ||sum_{i in I} a_i phi_i phi_i^* - target||` over all subsets.
pub fn oracle_min_deviation(f: &FrameSystem, target: &HermitianOperator) -> Result<(f64, Vec<usize>)> {
    let m = f.len();
    if m > 24 {
        return Err(FrameError::SearchBudget { needed: 2f64.powi(m as i32), cap: 2f64.powi(24) });
    }
    let d = f.dimension();
    let g = f.absorb_weights();
    let vecs: Vec<_> = g.vectors().iter().map(|v| v.entries().to_vec()).collect();
    let eval = |mask: u64| -> f64 {
        let mut data = target.scaled(-1.0).as_slice().to_vec();
        for (i, v) in vecs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                add_outer_raw(&mut data, d, v, 1.0);
            }
        }
        HermitianOperator::from_dense_trusted(d, data).operator_norm()
    };
    let (best, mask) = (0..1u64 << m)
        .into_par_iter()
        .map(|mask| (eval(mask), mask))
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("at least the empty subset");
    Ok((best, (0..m).filter(|i| mask >> i & 1 == 1).collect()))
}

/// Picks `I_0` with `sum_{I_0} phi phi^*` close to `t S`.
///
/// Requires `||phi_i||^2 <= eps` and Bessel bound at most 1. Reports the
/// target `C eps^{1/4}`.
pub fn subset_for_scalar(f: &FrameSystem, eps: f64, t: f64, config: &LyapunovConfig) -> Result<SubsetCertificate> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FrameError::InvalidWeight { index: 0, value: t });
    }
    let s = check_hypotheses(f, eps)?;
    let (selected, rec) = scalar_selection(f, &s, eps, t, &config.search)?;
    let oracle =
        if f.len() <= config.oracle_max_vectors { Some(oracle_min_deviation(f, &s.scaled(t))?.0) } else { None };
    let target = config.c * eps.powf(0.25);
    Ok(SubsetCertificate {
        epsilon: eps,
        weights: vec![t; f.len()],
        deviation: rec.deviation,
        satisfied: rec.deviation <= target,
        selected,
        constant: config.c,
        target,
        n_buckets: 1,
        quantization_bound: 0.0,
        quantization_measured: 0.0,
        search_slack: rec.deviation,
        oracle_optimum: oracle,
        buckets: vec![BucketRecord { k: 1, ..rec }],
    })
}

/// `floor(eps^{-1/8})`, at least 1.
pub fn default_bucket_count(eps: f64) -> usize {
    (eps.powf(-0.125).floor() as usize).max(1)
}

/// Bucket `k` in `1..=n` holding weight `t`, `None` for `t = 0`.
pub fn bucket_of(t: f64, n: usize) -> Option<usize> {
    if t <= 0.0 {
        return None;
    }
    // smallest k with t <= k/n
    let mut k = (t * n as f64).ceil() as usize;
    while k > 1 && t <= (k - 1) as f64 / n as f64 {
        k -= 1;
    }
    while t > k as f64 / n as f64 {
        k += 1;
    }
    Some(k.clamp(1, n))
}

/// Picks `I_0` with `sum_{I_0} phi phi^*` close to `sum t_i phi phi^*`.
///
/// Indices are bucketed by `t_i` into `n` groups, each group is split with
/// the scalar selection at `t = k/n`, and the selections are joined.
pub fn subset_for_weights(
    f: &FrameSystem,
    weights: &[f64],
    eps: f64,
    config: &LyapunovConfig,
) -> Result<SubsetCertificate> {
    if weights.len() != f.len() {
        return Err(FrameError::Shape(format!("{} weights for {} vectors", weights.len(), f.len())));
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, t)| !(**t >= 0.0 && **t <= 1.0)) {
        return Err(FrameError::InvalidWeight { index, value });
    }
    let s = check_hypotheses(f, eps)?;
    let n = config.buckets.unwrap_or_else(|| default_bucket_count(eps));
    if n == 0 {
        return Err(FrameError::InvalidInput("bucket count must be positive".into()));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &t) in weights.iter().enumerate() {
        if let Some(k) = bucket_of(t, n) {
            groups[k - 1].push(i);
        }
    }
    let records: Vec<Result<Option<BucketRecord>>> = groups
        .par_iter()
        .enumerate()
        .map(|(j, idx)| {
            if idx.is_empty() {
                return Ok(None);
            }
            let k = j + 1;
            let t = k as f64 / n as f64;
            let sub = f.subsystem(idx);
            let s_k = sub.frame_operator()?;
            let (sel, rec) = scalar_selection(&sub, &s_k, eps, t, &config.search).map_err(|e| match e {
                FrameError::SearchBudget { .. } => e,
                other => FrameError::SearchFailed {
                    level: k,
                    reason: format!("bucket {k}: {other}"),
                    completed_blocks: Vec::new(),
                },
            })?;
            Ok(Some(BucketRecord { k, indices: idx.clone(), selected: sel.iter().map(|&i| idx[i]).collect(), ..rec }))
        })
        .collect();
    let mut buckets = Vec::new();
    for r in records {
        if let Some(b) = r? {
            buckets.push(b);
        }
    }
    let mut selected: Vec<usize> = buckets.iter().flat_map(|b| b.selected.iter().copied()).collect();
    selected.sort_unstable();
    let target_op = f.weighted_frame_operator(weights)?;
    let dev = deviation(f, &selected, &target_op);
    let quantized: Vec<f64> = weights.iter().map(|&t| bucket_of(t, n).map_or(0.0, |k| k as f64 / n as f64)).collect();
    let quantization_measured = f.weighted_frame_operator(&quantized)?.minus(&target_op).operator_norm();
    let oracle = if f.len() <= config.oracle_max_vectors { Some(oracle_min_deviation(f, &target_op)?.0) } else { None };
    let target = config.c0 * eps.powf(0.125);
    Ok(SubsetCertificate {
        epsilon: eps,
        weights: weights.to_vec(),
        selected,
        deviation: dev,
        constant: config.c0,
        target,
        satisfied: dev <= target,
        n_buckets: n,
        quantization_bound: s.operator_norm() / n as f64,
        quantization_measured,
        search_slack: buckets.iter().map(|b| b.deviation).sum(),
        oracle_optimum: oracle,
        buckets,
    })
}

/// A discrete subset approximating `lambda S_{E1} + (1 - lambda) S_{E2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConvexityWitness {
    pub lambda: f64,
    pub e1: Vec<usize>,
    pub e2: Vec<usize>,
    /// Bessel bound `B` the family was normalised by.
    pub bessel_bound: f64,
    pub selected: Vec<usize>,
    /// `||S_E - (lambda S_{E1} + (1 - lambda) S_{E2})||`.
    pub deviation: f64,
    /// `C0 B^{7/8} eps^{1/8}`.
    pub target: f64,
    pub satisfied: bool,
    /// Selection on `B^{-1/2} phi`.
    pub normalized: SubsetCertificate,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FrameError::InvalidInput(format!("lambda = {lambda} is outside [0, 1]")));
    }
    Ok(())
}

pub fn convexity_witness_discrete(
    f: &FrameSystem,
    e1: &[usize],
    e2: &[usize],
    lambda: f64,
    eps: f64,
    config: &LyapunovConfig,
) -> Result<DiscreteConvexityWitness> {
    check_lambda(lambda)?;
    check_epsilon(eps)?;
    let m = f.len();
    let mut tau = vec![0.0; m];
    for (set, w) in [(e1, lambda), (e2, 1.0 - lambda)] {
        let mut seen = vec![false; m];
        for &i in set {
            if i >= m {
                return Err(FrameError::InvalidInput(format!("index {i} out of range")));
            }
            if !seen[i] {
                seen[i] = true;
                tau[i] += w;
            }
        }
    }
    for t in &mut tau {
        *t = t.clamp(0.0, 1.0);
    }
    let b = f.frame_operator()?.extreme_eigenvalues().1;
    if !(b > 0.0) {
        return Err(FrameError::InvalidInput("all vectors are zero".into()));
    }
    let normalized = subset_for_weights(&f.scaled(b.sqrt().recip()), &tau, eps / b, config)?;
    let target_op = f.partial_operator(e1).scaled(lambda).plus(&f.partial_operator(e2).scaled(1.0 - lambda));
    let dev = deviation(f, &normalized.selected, &target_op);
    let target = config.c0 * b.powf(0.875) * eps.powf(0.125);
    Ok(DiscreteConvexityWitness {
        lambda,
        e1: e1.to_vec(),
        e2: e2.to_vec(),
        bessel_bound: b,
        selected: normalized.selected.clone(),
        deviation: dev,
        target,
        satisfied: dev <= target,
        normalized,
    })
}

/// A cell selection `E` with `S_{phi,E}` close to `S_{sqrt(tau) phi}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSubsetCertificate {
    pub epsilon: f64,
    /// Whether the model was refined first (generator-backed input).
    pub refined: bool,
    /// Number of cells the selection refers to.
    pub cells: usize,
    /// Selected portions; cell indices refer to the refined model when
    /// `refined` is set.
    pub selection: Vec<CellPortion>,
    pub selected_ids: Vec<String>,
    /// `||S_{psi,E} - S_{sqrt(tau) psi}||` on the cell model.
    pub deviation: f64,
    /// `2 * 6 (eps/2)` from the refinement, 0 otherwise.
    pub approximation_error: f64,
    /// `deviation + approximation_error`.
    pub certified_bound: f64,
    /// `eps` on piecewise-constant input, `6 eps` after refinement.
    pub target: f64,
    pub satisfied: bool,
}

/// Selects sub-weights realising `tau` on every cell.
///
/// Models with a generator are first replaced by a piecewise-constant
/// approximation at accuracy `eps / 2`, each new cell inheriting its
/// parent's `tau`.
pub fn continuous_lyapunov(model: &ContinuousFrameModel, tau: &[f64], eps: f64) -> Result<ContinuousSubsetCertificate> {
    check_epsilon(eps)?;
    if tau.len() != model.len() {
        return Err(FrameError::Shape(format!("{} weights for {} cells", tau.len(), model.len())));
    }
    let (work, tau_w, approx_err, refined) = if model.generator().is_some() {
        let oracle = default_oracle(model);
        let approx = approximate_by_countable(model, eps / 2.0, oracle.as_ref(), RefinementLimits::default())?;
        let tau_child: Vec<f64> = approx.parent.iter().map(|&p| tau[p]).collect();
        (approx.model, tau_child, 2.0 * approx.error_bound, true)
    } else {
        (model.clone(), tau.to_vec(), 0.0, false)
    };
    let target = if refined { 6.0 * eps } else { eps };
    let selection = work.select_subset_matching_weights(&tau_w)?;
    let dev = work.partial_frame_operator(&selection)?.minus(&work.weighted_frame_operator(&tau_w)?).operator_norm();
    Ok(ContinuousSubsetCertificate {
        epsilon: eps,
        refined,
        cells: work.len(),
        selected_ids: selection.iter().map(|p| work.cells()[p.cell].id.clone()).collect(),
        selection,
        deviation: dev,
        approximation_error: approx_err,
        certified_bound: dev + approx_err,
        target,
        satisfied: dev + approx_err < target + 1e-12,
    })
}

/// Per-cell weights `sub_weight / mu` of a selection.
pub fn selection_weights(model: &ContinuousFrameModel, selection: &[CellPortion]) -> Result<Vec<f64>> {
    let mut tau = vec![0.0; model.len()];
    for p in selection {
        let c = model
            .cells()
            .get(p.cell)
            .ok_or_else(|| FrameError::InvalidInput(format!("cell index {} out of range", p.cell)))?;
        if c.weight > 0.0 && c.weight.is_finite() {
            tau[p.cell] += p.sub_weight / c.weight;
        }
    }
    if let Some((index, &value)) = tau.iter().enumerate().find(|(_, t)| **t > 1.0 + 1e-12) {
        return Err(FrameError::InvalidWeight { index, value });
    }
    Ok(tau.into_iter().map(|t| t.min(1.0)).collect())
}

/// A cell selection realising `lambda S_{E1} + (1 - lambda) S_{E2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousConvexityWitness {
    pub lambda: f64,
    pub tau: Vec<f64>,
    pub certificate: ContinuousSubsetCertificate,
    /// `||S_E - (lambda S_{E1} + (1 - lambda) S_{E2})||` on the cell model.
    pub deviation: f64,
}

pub fn convexity_witness_continuous(
    model: &ContinuousFrameModel,
    e1: &[CellPortion],
    e2: &[CellPortion],
    lambda: f64,
    eps: f64,
) -> Result<ContinuousConvexityWitness> {
    check_lambda(lambda)?;
    let t1 = selection_weights(model, e1)?;
    let t2 = selection_weights(model, e2)?;
    let tau: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| (lambda * a + (1.0 - lambda) * b).clamp(0.0, 1.0)).collect();
    let certificate = continuous_lyapunov(model, &tau, eps)?;
    let deviation = if certificate.refined {
        certificate.deviation
    } else {
        let target = model
            .partial_frame_operator(e1)?
            .scaled(lambda)
            .plus(&model.partial_frame_operator(e2)?.scaled(1.0 - lambda));
        model.partial_frame_operator(&certificate.selection)?.minus(&target).operator_norm()
    };
    Ok(ContinuousConvexityWitness { lambda, tau, certificate, deviation })
}
