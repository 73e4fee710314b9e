//! Weaver-type partitions of frames and the recursive bisection that
//! splits a tight frame into frames with uniform bounds.
//!
//! Existence of good partitions is non-constructive; here they are found
//! by exhaustive enumeration (small systems) or by i.i.d. random
//! assignments drawn with the block proportions as probabilities, and
//! every result carries the measured block norms.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FrameError, Result};
use crate::frame::FrameSystem;
use crate::operator::{add_outer_raw, HermitianOperator};

/// Tolerance on the Bessel bound `<= 1` required by the partition search.
pub const BESSEL_TOL: f64 = 1e-9;
/// Slack allowed when comparing a block norm with its target.
pub const TARGET_TOL: f64 = 1e-9;
/// Randomized trials are processed in fixed-size chunks.
const CHUNK: u64 = 1024;
/// Default number of randomized trials.
pub const DEFAULT_TRIALS: u64 = 100_000;

/// Block proportions `t_1, ..., t_r`, positive and summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct PartitionSpec {
    proportions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    r: usize,
    proportions: Vec<f64>,
}

impl TryFrom<RawSpec> for PartitionSpec {
    type Error = FrameError;
    fn try_from(raw: RawSpec) -> Result<Self> {
        if raw.r != raw.proportions.len() {
            return Err(FrameError::InvalidInput(format!("r = {} but {} proportions", raw.r, raw.proportions.len())));
        }
        PartitionSpec::new(raw.proportions)
    }
}

impl From<PartitionSpec> for RawSpec {
    fn from(s: PartitionSpec) -> Self {
        RawSpec { r: s.proportions.len(), proportions: s.proportions }
    }
}

impl PartitionSpec {
    pub fn new(proportions: Vec<f64>) -> Result<Self> {
        if proportions.is_empty() {
            return Err(FrameError::InvalidInput("at least one block is required".into()));
        }
        if let Some(t) = proportions.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(FrameError::InvalidInput(format!("proportion {t} is not positive")));
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(FrameError::InvalidInput(format!("proportions sum to {sum}, not 1")));
        }
        Ok(PartitionSpec { proportions })
    }

    /// `r` equal blocks.
    pub fn uniform(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(FrameError::InvalidInput("at least one block is required".into()));
        }
        Self::new(vec![1.0 / r as f64; r])
    }

    pub fn r(&self) -> usize {
        self.proportions.len()
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }
}

/// `t_k (1 + sqrt(r delta))^2`.
pub fn weaver_target(r: usize, delta: f64, t: f64) -> f64 {
    t * (1.0 + (r as f64 * delta).sqrt()).powi(2)
}

/// `t_k (1 + 2 sqrt(eps) sqrt(1 - eps))` with `eps = r delta`, valid for two
/// blocks when `eps < 1/2`.
pub fn two_value_target(r: usize, delta: f64, t: f64) -> Option<f64> {
    let eps = r as f64 * delta;
    (r == 2 && eps < 0.5).then(|| t * (1.0 + 2.0 * eps.sqrt() * (1.0 - eps).sqrt()))
}

/// `2 sqrt(r delta) + r delta`.
pub fn two_sided_bound(r: usize, delta: f64) -> f64 {
    let rd = r as f64 * delta;
    2.0 * rd.sqrt() + rd
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SearchMode {
    /// All `r^m` assignments.
    Exhaustive,
    /// I.i.d. assignments with probabilities `t_k`.
    Randomized { seed: u64, trials: u64 },
    /// Exhaustive when within the caps, randomized otherwise.
    Auto { seed: u64, trials: u64 },
}

/// What the search minimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `max_k ||sum_{I_k}|| / target_k`.
    Weaver,
    /// `max_k ||sum_{I_k} - t_k S||`.
    Deviation,
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub exhaustive_max_vectors: usize,
    pub exhaustive_max_assignments: u64,
    /// Stop a randomized search after the first chunk containing a
    /// satisfying assignment.
    pub early_stop: bool,
    /// Use the sharper two-value target when it applies.
    pub two_value_target: bool,
    pub objective: Objective,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::Exhaustive,
            exhaustive_max_vectors: 16,
            exhaustive_max_assignments: 1 << 20,
            early_stop: false,
            two_value_target: false,
            objective: Objective::Weaver,
        }
    }
}

impl SearchConfig {
    pub fn exhaustive() -> Self {
        Self::default()
    }

    pub fn randomized(seed: u64, trials: u64) -> Self {
        SearchConfig { mode: SearchMode::Randomized { seed, trials }, ..Self::default() }
    }

    pub fn auto(seed: u64, trials: u64) -> Self {
        SearchConfig { mode: SearchMode::Auto { seed, trials }, early_stop: true, ..Self::default() }
    }

    fn fits_exhaustive(&self, m: usize, r: usize) -> bool {
        m <= self.exhaustive_max_vectors && assignments(r, m) <= self.exhaustive_max_assignments as f64
    }
}

fn assignments(r: usize, m: usize) -> f64 {
    (r as f64).powi(m as i32)
}

/// How a certificate was found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    pub evaluated: u64,
}

/// A partition with its measured block norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCertificate {
    pub spec: PartitionSpec,
    pub delta: f64,
    pub bessel_bound: f64,
    /// Block index of every vector.
    pub assignment: Vec<usize>,
    pub per_block_upper: Vec<f64>,
    pub per_block_lower: Vec<f64>,
    /// `||sum_{I_k} - t_k S||`.
    pub per_block_deviation: Vec<f64>,
    pub target_bound_per_block: Vec<f64>,
    pub satisfied: bool,
    pub two_value: bool,
    /// Every partition meets the targets because they exceed the Bessel bound.
    pub vacuous_target: bool,
    pub objective: Objective,
    /// Value of the objective at the returned assignment.
    pub score: f64,
    /// `1 - max_k upper_k / target_k`.
    pub slack: f64,
    pub search: SearchRecord,
}

impl PartitionCertificate {
    /// Vector indices of each block.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        blocks_of(&self.assignment, self.spec.r())
    }
}

pub(crate) fn blocks_of(assignment: &[usize], r: usize) -> Vec<Vec<usize>> {
    let mut blocks = vec![Vec::new(); r];
    for (i, &k) in assignment.iter().enumerate() {
        blocks[k].push(i);
    }
    blocks
}

/// Flattened `{sqrt(a_i) phi_i}` for fast block assembly.
struct Packed {
    d: usize,
    entries: Vec<Vec<Complex64>>,
}

impl Packed {
    fn new(f: &FrameSystem) -> Self {
        let g = f.absorb_weights();
        Packed { d: g.dimension(), entries: g.vectors().iter().map(|v| v.entries().to_vec()).collect() }
    }

    fn blocks(&self, assignment: &[usize], r: usize) -> Vec<Vec<Complex64>> {
        let d = self.d;
        let mut out = vec![vec![Complex64::new(0.0, 0.0); d * d]; r];
        for (v, &k) in self.entries.iter().zip(assignment) {
            add_outer_raw(&mut out[k], d, v, 1.0);
        }
        out
    }
}

fn to_operator(d: usize, data: Vec<Complex64>) -> HermitianOperator {
    HermitianOperator::from_dense_trusted(d, data)
}

/// Scores assignments; lower is better.
struct Scorer<'a> {
    packed: &'a Packed,
    r: usize,
    objective: Objective,
    targets: &'a [f64],
    proportions: &'a [f64],
    total: &'a HermitianOperator,
}

impl Scorer<'_> {
    fn score(&self, assignment: &[usize]) -> f64 {
        let d = self.packed.d;
        let blocks = self.packed.blocks(assignment, self.r);
        let mut worst = 0.0_f64;
        for (k, data) in blocks.into_iter().enumerate() {
            let op = to_operator(d, data);
            let s = match self.objective {
                Objective::Weaver => op.extreme_eigenvalues().1 / self.targets[k],
                Objective::Deviation => op.minus(&self.total.scaled(self.proportions[k])).operator_norm(),
            };
            worst = worst.max(s);
        }
        worst
    }
}

fn decode(mut index: u64, r: usize, m: usize) -> Vec<usize> {
    let mut a = vec![0; m];
    for slot in a.iter_mut().rev() {
        *slot = (index % r as u64) as usize;
        index /= r as u64;
    }
    a
}

fn better(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn pick(a: (f64, Vec<usize>), b: (f64, Vec<usize>)) -> (f64, Vec<usize>) {
    if better(&b, &a) {
        b
    } else {
        a
    }
}

fn exhaustive_search(scorer: &Scorer, m: usize) -> (f64, Vec<usize>, u64) {
    let r = scorer.r;
    let total = assignments(r, m) as u64;
    let chunks = total.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut best: Option<(f64, Vec<usize>)> = None;
            for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let a = decode(idx, r, m);
                let cand = (scorer.score(&a), a);
                // indices increase within a chunk, so ties keep the earlier one
                if best.as_ref().map_or(true, |b| cand.0 < b.0) {
                    best = Some(cand);
                }
            }
            best.expect("chunk is non-empty")
        })
        .reduce_with(pick)
        .expect("at least one assignment");
    (best.0, best.1, total)
}

fn draw(seed: u64, trial: u64, m: usize, cumulative: &[f64]) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    (0..m)
        .map(|_| {
            let u: f64 = rng.gen();
            cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
        })
        .collect()
}

fn randomized_search(
    scorer: &Scorer,
    m: usize,
    seed: u64,
    trials: u64,
    stop_at: Option<f64>,
) -> (f64, Vec<usize>, u64) {
    let mut acc = 0.0;
    let cumulative: Vec<f64> = scorer
        .proportions
        .iter()
        .map(|t| {
            acc += t;
            acc
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0;
    let mut start = 0;
    while start < trials {
        let end = (start + CHUNK).min(trials);
        let chunk_best = (start..end)
            .into_par_iter()
            .map(|t| {
                let a = draw(seed, t, m, &cumulative);
                (scorer.score(&a), a)
            })
            .reduce_with(pick)
            .expect("chunk is non-empty");
        evaluated = end;
        best = Some(match best {
            None => chunk_best,
            Some(b) => pick(b, chunk_best),
        });
        if let (Some(limit), Some(b)) = (stop_at, &best) {
            if b.0 <= limit {
                break;
            }
        }
        start = end;
    }
    let best = best.unwrap_or_else(|| (f64::INFINITY, vec![0; m]));
    (best.0, best.1, evaluated)
}

/// Weaver targets for a system with the given `delta`.
pub fn block_targets(spec: &PartitionSpec, delta: f64, two_value: bool) -> (Vec<f64>, bool) {
    let r = spec.r();
    let tv = two_value && two_value_target(r, delta, 1.0).is_some();
    let targets = spec
        .proportions()
        .iter()
        .map(|&t| if tv { two_value_target(r, delta, t).unwrap() } else { weaver_target(r, delta, t) })
        .collect();
    (targets, tv)
}

/// Recomputes every measured field of a certificate for `assignment`.
pub fn certify_assignment(
    f: &FrameSystem,
    spec: &PartitionSpec,
    assignment: Vec<usize>,
    two_value: bool,
    objective: Objective,
    search: SearchRecord,
) -> Result<PartitionCertificate> {
    let r = spec.r();
    if assignment.len() != f.len() {
        return Err(FrameError::Shape(format!("{} block labels for {} vectors", assignment.len(), f.len())));
    }
    if let Some(&k) = assignment.iter().find(|&&k| k >= r) {
        return Err(FrameError::InvalidInput(format!("block label {k} with only {r} blocks")));
    }
    let s = f.frame_operator()?;
    let bessel_bound = s.extreme_eigenvalues().1;
    let delta = f.delta();
    let (targets, tv) = block_targets(spec, delta, two_value);
    let packed = Packed::new(f);
    let mut upper = Vec::with_capacity(r);
    let mut lower = Vec::with_capacity(r);
    let mut deviation = Vec::with_capacity(r);
    for (k, data) in packed.blocks(&assignment, r).into_iter().enumerate() {
        let op = to_operator(f.dimension(), data);
        let (lo, hi) = op.extreme_eigenvalues();
        lower.push(lo);
        upper.push(hi);
        deviation.push(op.minus(&s.scaled(spec.proportions()[k])).operator_norm());
    }
    let ratio = upper.iter().zip(&targets).map(|(u, t)| u / t).fold(0.0, f64::max);
    let score = match objective {
        Objective::Weaver => ratio,
        Objective::Deviation => deviation.iter().cloned().fold(0.0, f64::max),
    };
    Ok(PartitionCertificate {
        spec: spec.clone(),
        delta,
        bessel_bound,
        satisfied: upper.iter().zip(&targets).all(|(u, t)| *u <= t + TARGET_TOL),
        vacuous_target: targets.iter().all(|t| *t >= bessel_bound),
        assignment,
        per_block_upper: upper,
        per_block_lower: lower,
        per_block_deviation: deviation,
        target_bound_per_block: targets,
        two_value: tv,
        objective,
        score,
        slack: 1.0 - ratio,
        search,
    })
}

/// Searches for a partition meeting `||sum_{I_k} phi_i phi_i^*|| <= t_k (1 + sqrt(r delta))^2`.
///
/// The system must be Bessel with bound at most `1 + BESSEL_TOL`. A search
/// that finds nothing acceptable still returns its best certificate, with
/// `satisfied = false`.
pub fn search_weaver_partition(
    f: &FrameSystem,
    spec: &PartitionSpec,
    config: &SearchConfig,
) -> Result<PartitionCertificate> {
    let s = f.frame_operator()?;
    let bessel = s.extreme_eigenvalues().1;
    if bessel > 1.0 + BESSEL_TOL {
        return Err(FrameError::Hypothesis(format!("Bessel bound {bessel} exceeds 1")));
    }
    search_unchecked(f, &s, spec, config)
}

fn search_unchecked(
    f: &FrameSystem,
    s: &HermitianOperator,
    spec: &PartitionSpec,
    config: &SearchConfig,
) -> Result<PartitionCertificate> {
    let m = f.len();
    let r = spec.r();
    let (targets, tv) = block_targets(spec, f.delta(), config.two_value_target);
    let packed = Packed::new(f);
    let scorer = Scorer {
        packed: &packed,
        r,
        objective: config.objective,
        targets: &targets,
        proportions: spec.proportions(),
        total: s,
    };
    let mode = match config.mode {
        SearchMode::Auto { seed, trials } => {
            if config.fits_exhaustive(m, r) {
                SearchMode::Exhaustive
            } else {
                SearchMode::Randomized { seed, trials }
            }
        }
        other => other,
    };
    let (assignment, record) = match mode {
        SearchMode::Exhaustive => {
            if !config.fits_exhaustive(m, r) {
                return Err(FrameError::SearchBudget {
                    needed: assignments(r, m),
                    cap: (config.exhaustive_max_assignments as f64).min(assignments(r, config.exhaustive_max_vectors)),
                });
            }
            let (_, a, n) = exhaustive_search(&scorer, m);
            (a, SearchRecord { mode: "exhaustive".into(), seed: None, trials: None, evaluated: n })
        }
        SearchMode::Randomized { seed, trials } => {
            if trials == 0 {
                return Err(FrameError::InvalidInput("randomized search needs at least one trial".into()));
            }
            let stop = match (config.early_stop, config.objective) {
                (true, Objective::Weaver) => Some(1.0),
                _ => None,
            };
            let (_, a, n) = randomized_search(&scorer, m, seed, trials, stop);
            (a, SearchRecord { mode: "randomized".into(), seed: Some(seed), trials: Some(trials), evaluated: n })
        }
        SearchMode::Auto { .. } => unreachable!("resolved above"),
    };
    let _ = tv;
    certify_assignment(f, spec, assignment, config.two_value_target, config.objective, record)
}

/// Per-block check of `||sum_{I_k} - t_k I|| <= 2 sqrt(r delta) + r delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedReport {
    pub deviations: Vec<f64>,
    pub bound: f64,
    pub within: Vec<bool>,
    pub all_within: bool,
}

pub fn two_sided_certificate(f: &FrameSystem, cert: &PartitionCertificate) -> Result<TwoSidedReport> {
    let report = f.frame_bounds()?;
    if !report.is_parseval {
        return Err(FrameError::Hypothesis(format!(
            "two-sided bound needs a Parseval frame; bounds are ({}, {})",
            report.lower, report.upper
        )));
    }
    if cert.assignment.len() != f.len() {
        return Err(FrameError::Shape("certificate does not match the frame".into()));
    }
    let r = cert.spec.r();
    let bound = two_sided_bound(r, report.delta);
    let id = HermitianOperator::identity(f.dimension());
    let deviations: Vec<f64> = cert
        .blocks()
        .iter()
        .zip(cert.spec.proportions())
        .map(|(block, &t)| f.partial_operator(block).minus(&id.scaled(t)).operator_norm())
        .collect();
    let within: Vec<bool> = deviations.iter().map(|d| *d <= bound + TARGET_TOL).collect();
    Ok(TwoSidedReport { all_within: within.iter().all(|w| *w), deviations, within, bound })
}

/// Two halves of a frame with their measured bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bisection {
    /// Indices into the input system.
    pub blocks: [Vec<usize>; 2],
    pub block_bounds: [[f64; 2]; 2],
    /// Bounds `(A, B)` the window is computed from.
    pub input_bounds: [f64; 2],
    pub delta: f64,
    /// `[(1 - 5 sqrt(delta/A)) A / 2, (1 + 5 sqrt(delta/A)) B / 2]`.
    pub window: [f64; 2],
    pub window_met: bool,
    /// Search certificate on the canonical Parseval frame.
    pub certificate: PartitionCertificate,
}

/// `[(1 - 5 sqrt(delta/A)) A / 2, (1 + 5 sqrt(delta/A)) B / 2]`.
pub fn bisection_window(a: f64, b: f64, delta: f64) -> [f64; 2] {
    let c = 5.0 * (delta / a).sqrt();
    [(1.0 - c) * a / 2.0, (1.0 + c) * b / 2.0]
}

/// Splits a frame with bounds `A, B` and `||phi_i||^2 <= delta < A` in two.
///
/// `bounds` and `delta` default to the measured values; when given they
/// must be valid (the measured bounds inside them, the measured maximal
/// norm below `delta`). The split is found by a two-block Weaver search on
/// `{S^{-1/2} phi_i}`.
pub fn bisect_frame(
    f: &FrameSystem,
    bounds: Option<[f64; 2]>,
    delta: Option<f64>,
    config: &SearchConfig,
) -> Result<Bisection> {
    let report = f.frame_bounds()?;
    let scale = report.upper.abs().max(1.0);
    let tol = 1e-9 * scale;
    let [a, b] = bounds.unwrap_or([report.lower, report.upper]);
    if report.lower < a - tol || report.upper > b + tol {
        return Err(FrameError::Hypothesis(format!(
            "measured bounds ({}, {}) are outside the declared ({a}, {b})",
            report.lower, report.upper
        )));
    }
    let delta = delta.unwrap_or(report.delta);
    if report.delta > delta * (1.0 + 1e-12) {
        return Err(FrameError::Hypothesis(format!(
            "a vector has squared norm {} above delta = {delta}",
            report.delta
        )));
    }
    if !(a > delta) {
        return Err(FrameError::Hypothesis(format!("lower bound {a} does not exceed delta = {delta}")));
    }
    let parseval = f.canonical_parseval()?;
    let s = parseval.frame_operator()?;
    let cert = search_unchecked(&parseval, &s, &PartitionSpec::uniform(2)?, config)?;
    let blocks = cert.blocks();
    let bb: Vec<[f64; 2]> = blocks
        .iter()
        .map(|blk| {
            if blk.is_empty() {
                [0.0, 0.0]
            } else {
                let (lo, hi) = f.partial_operator(blk).extreme_eigenvalues();
                [lo, hi]
            }
        })
        .collect();
    let window = bisection_window(a, b, delta);
    let window_met = bb.iter().all(|[lo, hi]| *lo >= window[0] - tol && *hi <= window[1] + tol);
    Ok(Bisection {
        blocks: [blocks[0].clone(), blocks[1].clone()],
        block_bounds: [bb[0], bb[1]],
        input_bounds: [a, b],
        delta,
        window,
        window_met,
        certificate: cert,
    })
}

/// `prod_{j>=0} (1 + 2^{-1-j/2}) / (1 - 2^{-1-j/2})`, summed in log form
/// until the terms drop below machine precision.
pub fn universal_schedule_constant() -> f64 {
    let mut log = 0.0;
    let mut j = 0;
    loop {
        let x = 2f64.powf(-1.0 - j as f64 / 2.0);
        let term = (x.ln_1p() - (-x).ln_1p()).abs();
        log += term;
        if term < 1e-18 {
            break;
        }
        j += 1;
    }
    log.exp()
}

/// The bound sequences that drive the recursive bisection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SouSchedule {
    pub delta: f64,
    /// `A_0, ..., A_{L+1}`.
    pub a_seq: Vec<f64>,
    /// `B_0, ..., B_{L+1}` with `B_{j+1} = B_j (1 + 5 sqrt(delta/B_j)) / 2`.
    pub b_seq: Vec<f64>,
    /// Upper bounds actually delivered by the bisection step,
    /// `B'_{j+1} = B'_j (1 + 5 sqrt(delta/A_j)) / 2`.
    pub b_window_seq: Vec<f64>,
    /// Largest `j` with `A_j >= 100 delta`.
    pub l: usize,
    /// `prod_{j=0}^{L} (1 + C_j) / (1 - C_j)`, `C_j = 5 sqrt(delta/A_j)`.
    pub c_estimate: f64,
    /// The `delta`-free constant bounding every `c_estimate`.
    pub c_universal: f64,
}

pub fn compute_sou_schedule(delta: f64) -> Result<SouSchedule> {
    if !(delta > 0.0 && delta < 0.01) {
        return Err(FrameError::Domain(format!("delta = {delta} is outside (0, 1/100)")));
    }
    let mut a = vec![1.0];
    let mut b = vec![1.0];
    let mut bw = vec![1.0];
    let mut c_estimate = 1.0;
    loop {
        let j = a.len() - 1;
        let (aj, bj, bwj) = (a[j], b[j], bw[j]);
        let c = 5.0 * (delta / aj).sqrt();
        a.push(aj * (1.0 - c) / 2.0);
        b.push(bj * (1.0 + 5.0 * (delta / bj).sqrt()) / 2.0);
        bw.push(bwj * (1.0 + c) / 2.0);
        c_estimate *= (1.0 + c) / (1.0 - c);
        if a[j + 1] < 100.0 * delta {
            break;
        }
    }
    let l = a.len() - 2;
    Ok(SouSchedule {
        delta,
        a_seq: a,
        b_seq: b,
        b_window_seq: bw,
        l,
        c_estimate,
        c_universal: universal_schedule_constant(),
    })
}

impl SouSchedule {
    /// Named checks of the schedule relations, each `true` when it holds.
    pub fn check_invariants(&self) -> Vec<(&'static str, bool)> {
        let d = self.delta;
        let l = self.l;
        let rec_a = (0..=l).all(|j| {
            let want = self.a_seq[j] * (1.0 - 5.0 * (d / self.a_seq[j]).sqrt()) / 2.0;
            (self.a_seq[j + 1] - want).abs() <= 1e-12 * want.abs().max(1e-300)
        });
        let rec_b = (0..=l).all(|j| {
            let want = self.b_seq[j] * (1.0 + 5.0 * (d / self.b_seq[j]).sqrt()) / 2.0;
            (self.b_seq[j + 1] - want).abs() <= 1e-12 * want.abs()
        });
        let a_last = self.a_seq[l + 1];
        vec![
            ("A_0 = B_0 = 1", self.a_seq[0] == 1.0 && self.b_seq[0] == 1.0),
            ("A recursion", rec_a),
            ("B recursion", rec_b),
            ("A_j >= 100 delta for j <= L", self.a_seq[..=l].iter().all(|a| *a >= 100.0 * d)),
            ("25 delta <= A_{L+1} < 100 delta", 25.0 * d <= a_last && a_last < 100.0 * d),
            ("B_{L+1} <= C_estimate A_{L+1}", self.b_seq[l + 1] <= self.c_estimate * a_last * (1.0 + 1e-12)),
            ("B_{L+1} < C A_{L+1}", self.b_seq[l + 1] < self.c_universal * a_last),
            ("C_estimate < C", self.c_estimate < self.c_universal),
        ]
    }
}

/// Partition of a tight frame into frames with bounds in `[A_0, B_0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformPartition {
    /// Tight frame constant.
    pub k: f64,
    /// Indices into the input system.
    pub blocks: Vec<Vec<usize>>,
    pub block_bounds: Vec<[f64; 2]>,
    /// `[A_0, B_0] = [1, 100 C]`.
    pub window: [f64; 2],
    pub within_window: bool,
    /// `None` in the trivial branch `K <= 100`.
    pub schedule: Option<SouSchedule>,
    /// The bisection steps, level by level.
    pub levels: Vec<Vec<Bisection>>,
}

/// `(A_0, B_0) = (1, 100 C)` for the universal schedule constant `C`.
pub fn uniform_partition_constants() -> (f64, f64) {
    (1.0, 100.0 * universal_schedule_constant())
}

/// Partitions a tight frame with constant `K >= 1` of vectors in the unit
/// ball into frames with bounds `1` and `100 C`.
///
/// `tightness_tol` is the relative gap `(B - A)/B` accepted as tight.
pub fn partition_to_uniform(f: &FrameSystem, tightness_tol: f64, config: &SearchConfig) -> Result<UniformPartition> {
    let report = f.frame_bounds()?;
    let (a, b) = (report.lower, report.upper);
    if (b - a) > tightness_tol * b.max(1.0) {
        return Err(FrameError::Hypothesis(format!("frame is not tight: bounds ({a}, {b})")));
    }
    if report.delta > 1.0 + 1e-12 {
        return Err(FrameError::Hypothesis(format!("a vector has squared norm {} > 1", report.delta)));
    }
    let k = 0.5 * (a + b);
    if k < 1.0 - tightness_tol {
        return Err(FrameError::Hypothesis(format!("tight constant {k} is below 1")));
    }
    let (a0, b0) = uniform_partition_constants();
    let window = [a0, b0];
    let tol = 1e-9 * b0;
    let all: Vec<usize> = (0..f.len()).collect();
    if k <= 100.0 {
        let bounds = [a, b];
        return Ok(UniformPartition {
            k,
            within_window: a >= a0 - tol && b <= b0 + tol,
            blocks: vec![all],
            block_bounds: vec![bounds],
            window,
            schedule: None,
            levels: Vec::new(),
        });
    }
    let delta = 1.0 / k;
    let schedule = compute_sou_schedule(delta)?;
    let psi = f.scaled(delta.sqrt());
    let mut current: Vec<Vec<usize>> = vec![all];
    let mut levels = Vec::new();
    for j in 0..=schedule.l {
        let declared = [schedule.a_seq[j], schedule.b_window_seq[j]];
        let mut next = Vec::with_capacity(current.len() * 2);
        let mut records = Vec::with_capacity(current.len());
        for block in &current {
            let sub = psi.subsystem(block);
            let step = bisect_frame(&sub, Some(declared), Some(delta), config).map_err(|e| match e {
                FrameError::SearchBudget { .. } => e,
                other => {
                    FrameError::SearchFailed { level: j, reason: other.to_string(), completed_blocks: current.clone() }
                }
            })?;
            if !step.window_met {
                return Err(FrameError::SearchFailed {
                    level: j,
                    reason: format!("block bounds {:?} miss the window {:?}", step.block_bounds, step.window),
                    completed_blocks: current.clone(),
                });
            }
            for half in &step.blocks {
                next.push(half.iter().map(|&i| block[i]).collect());
            }
            records.push(step);
        }
        levels.push(records);
        current = next;
    }
    let block_bounds: Vec<[f64; 2]> = current
        .iter()
        .map(|blk| {
            let (lo, hi) = crate::frame::block_bounds(f, blk);
            [lo, hi]
        })
        .collect();
    let within_window = block_bounds.iter().all(|[lo, hi]| *lo >= a0 - tol && *hi <= b0 + tol);
    Ok(UniformPartition { k, blocks: current, block_bounds, window, within_window, schedule: Some(schedule), levels })
}

/// Partition of a general frame into frames with bounds `A_0 N` and `B_0 N B/A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralPartition {
    pub frame_bounds: [f64; 2],
    pub norm_cap: f64,
    pub constants: [f64; 2],
    pub blocks: Vec<Vec<usize>>,
    pub block_bounds: Vec<[f64; 2]>,
    /// `[A_0 N, B_0 N B / A]`.
    pub window: [f64; 2],
    pub within_window: bool,
    pub uniform: UniformPartition,
}

/// Partitions a frame with bounds `A <= B` and `||phi_i||^2 <= N <= A`.
pub fn partition_general(f: &FrameSystem, norm_cap: f64, config: &SearchConfig) -> Result<GeneralPartition> {
    let report = f.frame_bounds()?;
    let (a, b) = (report.lower, report.upper);
    if !(norm_cap > 0.0) {
        return Err(FrameError::Hypothesis(format!("norm cap {norm_cap} must be positive")));
    }
    if report.delta > norm_cap * (1.0 + 1e-12) {
        return Err(FrameError::Hypothesis(format!("a vector has squared norm {} above N = {norm_cap}", report.delta)));
    }
    if a < norm_cap * (1.0 - 1e-12) {
        return Err(FrameError::Hypothesis(format!("lower frame bound {a} is below N = {norm_cap}")));
    }
    let root = f.frame_operator()?.power(-0.5, 1e-12 * b)?;
    let psi = f.absorb_weights().transformed(&root).scaled((a / norm_cap).sqrt());
    // psi is tight with constant A/N up to rounding; accept the rounding.
    let uniform = partition_to_uniform(&psi, 1e-8, config)?;
    let (a0, b0) = uniform_partition_constants();
    let window = [a0 * norm_cap, b0 * norm_cap * b / a];
    let tol = 1e-9 * window[1];
    let block_bounds: Vec<[f64; 2]> = uniform
        .blocks
        .iter()
        .map(|blk| {
            let (lo, hi) = crate::frame::block_bounds(f, blk);
            [lo, hi]
        })
        .collect();
    let within_window = block_bounds.iter().all(|[lo, hi]| *lo >= window[0] - tol && *hi <= window[1] + tol);
    Ok(GeneralPartition {
        frame_bounds: [a, b],
        norm_cap,
        constants: [a0, b0],
        blocks: uniform.blocks.clone(),
        block_bounds,
        window,
        within_window,
        uniform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ComplexVector;
    use proptest::prelude::*;

    fn real(xs: &[f64]) -> ComplexVector {
        ComplexVector::from_real(xs).unwrap()
    }

    fn onb2() -> FrameSystem {
        FrameSystem::from_vectors(vec![real(&[1.0, 0.0]), real(&[0.0, 1.0])]).unwrap()
    }

    #[test]
    fn weaver_target_values() {
        assert_eq!(weaver_target(2, 0.0, 0.5), 0.5);
        assert!((weaver_target(2, 0.5, 0.5) - 2.0).abs() < 1e-15);
        assert!((weaver_target(3, 1.0 / 12.0, 1.0 / 3.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(PartitionSpec::new(vec![0.5, 0.4]).is_err());
        assert!(PartitionSpec::new(vec![1.0, 0.0]).is_err());
        assert_eq!(PartitionSpec::uniform(3).unwrap().r(), 3);
    }

    #[test]
    fn onb_split() {
        let cert =
            search_weaver_partition(&onb2(), &PartitionSpec::uniform(2).unwrap(), &SearchConfig::exhaustive()).unwrap();
        assert!(cert.satisfied);
        // every assignment has max block norm 1, so the first one wins the tie
        assert_eq!(cert.assignment, vec![0, 0]);
        assert_eq!(cert.per_block_upper, vec![1.0, 0.0]);
        assert!((cert.target_bound_per_block[0] - 0.5 * (1.0 + 2f64.sqrt()).powi(2)).abs() < 1e-12);
        assert_eq!(cert.search.evaluated, 4);
    }

    #[test]
    fn duplicated_onb_split_separates_copies() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let f = FrameSystem::from_vectors(vec![real(&[h, 0.0]), real(&[h, 0.0]), real(&[0.0, h]), real(&[0.0, h])])
            .unwrap();
        let cert =
            search_weaver_partition(&f, &PartitionSpec::uniform(2).unwrap(), &SearchConfig::exhaustive()).unwrap();
        assert!(cert.satisfied);
        assert_eq!(cert.assignment, vec![0, 1, 0, 1]);
        for u in &cert.per_block_upper {
            assert!((u - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_vector_allows_empty_block() {
        let f = FrameSystem::from_vectors(vec![real(&[0.5])]).unwrap();
        let cert =
            search_weaver_partition(&f, &PartitionSpec::uniform(2).unwrap(), &SearchConfig::exhaustive()).unwrap();
        assert!(cert.satisfied);
        assert!(cert.per_block_upper.contains(&0.0));
    }

    #[test]
    fn non_bessel_input_is_rejected() {
        let f = FrameSystem::from_vectors(vec![real(&[1.0]), real(&[1.0])]).unwrap();
        let err =
            search_weaver_partition(&f, &PartitionSpec::uniform(2).unwrap(), &SearchConfig::exhaustive()).unwrap_err();
        assert!(matches!(err, FrameError::Hypothesis(_)));
    }

    #[test]
    fn exhaustive_cap_is_enforced() {
        let v = real(&[0.2]);
        let f = FrameSystem::from_vectors(vec![v; 17]).unwrap();
        let err =
            search_weaver_partition(&f, &PartitionSpec::uniform(2).unwrap(), &SearchConfig::exhaustive()).unwrap_err();
        assert!(matches!(err, FrameError::SearchBudget { .. }));
    }

    #[test]
    fn randomized_search_is_reproducible() {
        let c = 0.25;
        let vs: Vec<_> = (0..16).map(|i| if i % 2 == 0 { real(&[c, 0.0]) } else { real(&[0.0, c]) }).collect();
        let f = FrameSystem::from_vectors(vs).unwrap();
        let spec = PartitionSpec::uniform(2).unwrap();
        let a = search_weaver_partition(&f, &spec, &SearchConfig::randomized(9, 3000)).unwrap();
        let b = search_weaver_partition(&f, &spec, &SearchConfig::randomized(9, 3000)).unwrap();
        assert_eq!(a, b);
        assert!(a.satisfied);
        assert_eq!(a.search.evaluated, 3000);
    }

    #[test]
    fn two_sided_examples() {
        let spec = PartitionSpec::uniform(2).unwrap();
        let cfg = SearchConfig { objective: Objective::Deviation, ..SearchConfig::exhaustive() };
        let cert = search_weaver_partition(&onb2(), &spec, &cfg).unwrap();
        let rep = two_sided_certificate(&onb2(), &cert).unwrap();
        assert_eq!(rep.deviations, vec![0.5, 0.5]);
        assert!((rep.bound - (2.0 * 2f64.sqrt() + 2.0)).abs() < 1e-12);
        assert!(rep.all_within);

        let one = PartitionSpec::uniform(1).unwrap();
        let cert = search_weaver_partition(&onb2(), &one, &SearchConfig::exhaustive()).unwrap();
        assert_eq!(two_sided_certificate(&onb2(), &cert).unwrap().deviations, vec![0.0]);

        let f = FrameSystem::from_vectors(vec![real(&[1.0, 0.0]), real(&[1.0, 0.0])]).unwrap();
        assert!(two_sided_certificate(&f, &cert).is_err());
    }

    #[test]
    fn bisect_two_onb_copies() {
        let f =
            FrameSystem::from_vectors(vec![real(&[1.0, 0.0]), real(&[0.0, 1.0]), real(&[1.0, 0.0]), real(&[0.0, 1.0])])
                .unwrap();
        let b = bisect_frame(&f, None, None, &SearchConfig::exhaustive()).unwrap();
        assert!(b.window_met);
        assert!((b.window[1] - (1.0 + 5.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!(b.window[0] < 0.0);
        for [lo, hi] in b.block_bounds {
            assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
        let f = onb2();
        assert!(matches!(bisect_frame(&f, None, None, &SearchConfig::exhaustive()), Err(FrameError::Hypothesis(_))));
    }

    #[test]
    fn schedule_hand_case() {
        let s = compute_sou_schedule(1.0 / 400.0).unwrap();
        assert_eq!(s.l, 1);
        assert!((s.a_seq[1] - 0.375).abs() < 1e-15);
        assert!(s.a_seq[2] < 0.25);
        assert!(s.check_invariants().iter().all(|(_, ok)| *ok), "{:?}", s.check_invariants());
        assert!(compute_sou_schedule(0.01).is_err());
    }

    #[test]
    fn universal_constant_is_finite_and_near_35() {
        let c = universal_schedule_constant();
        assert!(c > 30.0 && c < 40.0, "{c}");
    }

    #[test]
    fn trivial_uniform_branch() {
        let f =
            FrameSystem::from_vectors(vec![real(&[1.0, 0.0]), real(&[0.0, 1.0]), real(&[1.0, 0.0]), real(&[0.0, 1.0])])
                .unwrap();
        let u = partition_to_uniform(&f, 1e-8, &SearchConfig::auto(1, 1000)).unwrap();
        assert_eq!(u.blocks, vec![vec![0, 1, 2, 3]]);
        assert!(u.within_window);
        assert!(u.schedule.is_none());
    }

    #[test]
    fn uniform_partition_of_400_unit_vectors() {
        let f = FrameSystem::from_vectors(vec![real(&[1.0]); 400]).unwrap();
        let u = partition_to_uniform(&f, 1e-8, &SearchConfig::auto(5, 20_000)).unwrap();
        assert_eq!(u.blocks.len(), 4);
        assert!(u.within_window, "{:?}", u.block_bounds);
        let mut all: Vec<usize> = u.blocks.concat();
        all.sort_unstable();
        assert_eq!(all, (0..400).collect::<Vec<_>>());
    }

    #[test]
    fn general_single_vector() {
        let f = FrameSystem::from_vectors(vec![real(&[0.5])]).unwrap();
        let g = partition_general(&f, 0.25, &SearchConfig::auto(1, 100)).unwrap();
        assert_eq!(g.blocks, vec![vec![0]]);
        assert!((g.block_bounds[0][0] - 0.25).abs() < 1e-15);
        assert!(g.within_window);
    }

    proptest! {
        #[test]
        fn schedule_invariants(delta in 1e-6f64..0.0099) {
            let s = compute_sou_schedule(delta).unwrap();
            for (name, ok) in s.check_invariants() {
                prop_assert!(ok, "{} fails for delta = {}", name, delta);
            }
        }
    }
}
