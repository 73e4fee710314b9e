//! Self-describing result documents and their verification.
//!
//! An [`Envelope`] stores the raw input, its SHA-256 digest, the full
//! parameter set and the result. [`verify`] checks the digest, reruns the
//! operation and compares the result exactly, then recomputes the measured
//! quantities from the input by a separate path.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::continuous::ContinuousFrameModel;
use crate::error::{FrameError, Result};
use crate::frame::{FrameBoundsReport, FrameSystem};
use crate::json::to_string_compact;
use crate::lyapunov::{
    continuous_lyapunov, subset_for_scalar, subset_for_weights, ContinuousSubsetCertificate, LyapunovConfig,
    SubsetCertificate, DEFAULT_C, DEFAULT_C0,
};
use crate::operator::HermitianOperator;
use crate::partition::{search_weaver_partition, PartitionCertificate, PartitionSpec, SearchConfig, DEFAULT_TRIALS};
use crate::sampler::{discretize_continuous, sample_scalable_finite, sample_scalable_general, SamplingResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Agreement required between stored and recomputed measurements.
pub const RECOMPUTE_TOL: f64 = 1e-10;

/// A frame system or a continuous frame model.
#[derive(Clone, Debug, PartialEq)]
pub enum InputDocument {
    Frame(FrameSystem),
    Model(ContinuousFrameModel),
}

impl InputDocument {
    /// Documents with a `cells` key are continuous models.
    pub fn from_value(v: &Value) -> Result<Self> {
        let is_model = v.get("cells").is_some();
        if is_model {
            serde_json::from_value(v.clone()).map(InputDocument::Model)
        } else {
            serde_json::from_value(v.clone()).map(InputDocument::Frame)
        }
        .map_err(|e| FrameError::Malformed(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<(Value, Self)> {
        let v: Value = serde_json::from_str(text).map_err(|e| FrameError::Malformed(e.to_string()))?;
        let doc = Self::from_value(&v)?;
        Ok((v, doc))
    }

    fn frame(&self, op: &str) -> Result<&FrameSystem> {
        match self {
            InputDocument::Frame(f) => Ok(f),
            InputDocument::Model(_) => {
                Err(FrameError::InvalidInput(format!("{op} needs a frame system, not a continuous model")))
            }
        }
    }

    fn model(&self) -> Result<ContinuousFrameModel> {
        match self {
            InputDocument::Frame(f) => ContinuousFrameModel::from_frame_system(f),
            InputDocument::Model(m) => Ok(m.clone()),
        }
    }
}

/// Search settings shared by the operations that search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// `exhaustive`, `randomized` or `auto`.
    pub mode: String,
    pub seed: u64,
    pub trials: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { mode: "auto".into(), seed: 0, trials: DEFAULT_TRIALS }
    }
}

impl SearchParams {
    pub fn config(&self) -> Result<SearchConfig> {
        let (seed, trials) = (self.seed, self.trials);
        Ok(match self.mode.as_str() {
            "exhaustive" => SearchConfig::exhaustive(),
            "randomized" => SearchConfig::randomized(seed, trials),
            "auto" => SearchConfig::auto(seed, trials),
            other => return Err(FrameError::InvalidInput(format!("unknown search mode `{other}`"))),
        })
    }
}

/// Target weights of a Lyapunov selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSpec {
    /// The same weight for every vector, handled by the scalar selection.
    Uniform(f64),
    List(Vec<f64>),
}

/// Everything an operation needs besides the input document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "lowercase")]
pub enum Operation {
    Analyze,
    Partition {
        proportions: Vec<f64>,
        two_value: bool,
        search: SearchParams,
    },
    Lyapunov {
        weights: WeightSpec,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        buckets: Option<usize>,
        c: f64,
        c0: f64,
        search: SearchParams,
    },
    Sample {
        epsilon: f64,
        search: SearchParams,
    },
    Discretize {
        epsilon: f64,
        search: SearchParams,
    },
}

impl Operation {
    pub fn kind(&self) -> &'static str {
        match self {
            Operation::Analyze => "analyze",
            Operation::Partition { .. } => "partition",
            Operation::Lyapunov { .. } => "lyapunov",
            Operation::Sample { .. } => "sample",
            Operation::Discretize { .. } => "discretize",
        }
    }

    /// Lyapunov parameters with default constants.
    pub fn lyapunov(weights: WeightSpec, epsilon: f64, search: SearchParams) -> Self {
        Operation::Lyapunov { weights, epsilon, buckets: None, c: DEFAULT_C, c0: DEFAULT_C0, search }
    }
}

/// Bounds of an input document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResult {
    /// `frame` or `continuous`.
    pub input: String,
    pub dimension: usize,
    pub count: usize,
    pub bounds: FrameBoundsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_cap: Option<f64>,
}

/// Typed result of an operation.
#[derive(Clone, Debug, PartialEq)]
pub enum OperationResult {
    Analyze(AnalyzeResult),
    Partition(PartitionCertificate),
    Subset(SubsetCertificate),
    ContinuousSubset(ContinuousSubsetCertificate),
    Sampling(SamplingResult),
}

impl OperationResult {
    /// Whether the result meets its own acceptance condition.
    pub fn satisfied(&self) -> bool {
        match self {
            OperationResult::Analyze(_) => true,
            OperationResult::Partition(c) => c.satisfied,
            OperationResult::Subset(c) => c.satisfied,
            OperationResult::ContinuousSubset(c) => c.satisfied,
            OperationResult::Sampling(s) => s.achieved_bounds[0] > 0.0 && s.within_guaranteed_window,
        }
    }

    pub fn to_value(&self) -> Result<Value> {
        let v = match self {
            OperationResult::Analyze(r) => serde_json::to_value(r),
            OperationResult::Partition(r) => serde_json::to_value(r),
            OperationResult::Subset(r) => serde_json::to_value(r),
            OperationResult::ContinuousSubset(r) => serde_json::to_value(r),
            OperationResult::Sampling(r) => serde_json::to_value(r),
        };
        v.map_err(|e| FrameError::Malformed(e.to_string()))
    }
}

fn analyze(doc: &InputDocument) -> Result<AnalyzeResult> {
    match doc {
        InputDocument::Frame(f) => Ok(AnalyzeResult {
            input: "frame".into(),
            dimension: f.dimension(),
            count: f.len(),
            bounds: f.frame_bounds()?,
            norm_cap: None,
        }),
        InputDocument::Model(m) => Ok(AnalyzeResult {
            input: "continuous".into(),
            dimension: m.dimension(),
            count: m.len(),
            bounds: m.equivalent_discrete()?.frame_bounds()?,
            norm_cap: Some(crate::sampler::model_norm_cap(m)),
        }),
    }
}

/// Runs `op` on `doc`.
pub fn run(op: &Operation, doc: &InputDocument) -> Result<OperationResult> {
    match op {
        Operation::Analyze => analyze(doc).map(OperationResult::Analyze),
        Operation::Partition { proportions, two_value, search } => {
            let f = doc.frame("partition")?;
            let spec = PartitionSpec::new(proportions.clone())?;
            let cfg = SearchConfig { two_value_target: *two_value, ..search.config()? };
            search_weaver_partition(f, &spec, &cfg).map(OperationResult::Partition)
        }
        Operation::Lyapunov { weights, epsilon, buckets, c, c0, search } => {
            let cfg = LyapunovConfig {
                c: *c,
                c0: *c0,
                search: search.config()?,
                buckets: *buckets,
                ..LyapunovConfig::default()
            };
            match doc {
                InputDocument::Frame(f) => match weights {
                    WeightSpec::Uniform(t) => subset_for_scalar(f, *epsilon, *t, &cfg),
                    WeightSpec::List(w) => subset_for_weights(f, w, *epsilon, &cfg),
                }
                .map(OperationResult::Subset),
                InputDocument::Model(m) => {
                    let tau = match weights {
                        WeightSpec::Uniform(t) => vec![*t; m.len()],
                        WeightSpec::List(w) => w.clone(),
                    };
                    continuous_lyapunov(m, &tau, *epsilon).map(OperationResult::ContinuousSubset)
                }
            }
        }
        Operation::Sample { epsilon, search } => {
            let f = doc.frame("sample")?;
            let cfg = search.config()?;
            let finite = sample_scalable_finite(f, None, *epsilon, &cfg);
            match finite {
                Err(FrameError::Hypothesis(_)) => {
                    let cap = (0..f.len())
                        .filter(|&i| f.weight(i) > 0.0)
                        .map(|i| f.vectors()[i].norm_sqr())
                        .fold(0.0, f64::max);
                    sample_scalable_general(f, None, cap, *epsilon, &cfg)
                }
                other => other,
            }
            .map(OperationResult::Sampling)
        }
        Operation::Discretize { epsilon, search } => {
            let m = doc.model()?;
            discretize_continuous(&m, *epsilon, &search.config()?).map(OperationResult::Sampling)
        }
    }
}

/// A result document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: String,
    pub tool_version: String,
    pub input_sha256: String,
    pub input: Value,
    pub parameters: Operation,
    pub satisfied: bool,
    pub result: Value,
}

/// SHA-256 of the compact round-trip serialization of `input`.
pub fn digest(input: &Value) -> Result<String> {
    Ok(hex::encode(Sha256::digest(to_string_compact(input)?.as_bytes())))
}

/// Runs `op` and wraps the result.
pub fn issue(op: Operation, input: Value) -> Result<(Envelope, OperationResult)> {
    let doc = InputDocument::from_value(&input)?;
    let result = run(&op, &doc)?;
    // store exactly what a reader will parse back
    let stored: Value = serde_json::from_str(&to_string_compact(&result.to_value()?)?)
        .map_err(|e| FrameError::Malformed(e.to_string()))?;
    let env = Envelope {
        kind: op.kind().into(),
        tool_version: TOOL_VERSION.into(),
        input_sha256: digest(&input)?,
        satisfied: result.satisfied(),
        input,
        parameters: op,
        result: stored,
    };
    Ok((env, result))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub kind: String,
    pub digest_ok: bool,
    pub rerun_ok: bool,
    pub recompute_ok: bool,
    pub mismatches: Vec<String>,
    pub ok: bool,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RECOMPUTE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn parse_result<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| FrameError::Malformed(format!("result: {e}")))
}

fn check(mismatches: &mut Vec<String>, what: &str, stored: f64, fresh: f64) {
    if !close(stored, fresh) {
        mismatches.push(format!("{what}: stored {stored:e}, recomputed {fresh:e}"));
    }
}

fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                match y.get(k) {
                    Some(vb) => diff_values(&format!("{path}.{k}"), va, vb, out),
                    None => out.push(format!("{path}.{k}: missing from rerun")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(format!("{path}.{k}: missing from document"));
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                diff_values(&format!("{path}[{i}]"), va, vb, out);
            }
        }
        _ if a != b => out.push(format!("{path}: stored {a}, rerun {b}")),
        _ => {}
    }
}

/// Checks the digest, reruns the operation and recomputes the measured
/// quantities from the raw input.
pub fn verify(env: &Envelope) -> Result<VerifyReport> {
    let mut mismatches = Vec::new();
    let digest_ok = digest(&env.input)? == env.input_sha256;
    if !digest_ok {
        mismatches.push("input_sha256 does not match the input".into());
    }
    if env.tool_version != TOOL_VERSION {
        mismatches.push(format!("tool_version `{}` differs from {TOOL_VERSION}", env.tool_version));
    }
    if env.kind != env.parameters.kind() {
        mismatches.push(format!("kind `{}` does not match parameters `{}`", env.kind, env.parameters.kind()));
    }
    let doc = InputDocument::from_value(&env.input)?;
    let (fresh, _) = issue(env.parameters.clone(), env.input.clone())?;
    let before = mismatches.len();
    diff_values("result", &env.result, &fresh.result, &mut mismatches);
    if env.satisfied != fresh.satisfied {
        mismatches.push(format!("satisfied: stored {}, rerun {}", env.satisfied, fresh.satisfied));
    }
    let rerun_ok = mismatches.len() == before;
    let before = mismatches.len();
    recompute(env, &doc, &mut mismatches)?;
    let recompute_ok = mismatches.len() == before;
    Ok(VerifyReport {
        kind: env.kind.clone(),
        ok: digest_ok && rerun_ok && recompute_ok && mismatches.is_empty(),
        digest_ok,
        rerun_ok,
        recompute_ok,
        mismatches,
    })
}

fn partial(f: &FrameSystem, indices: &[usize]) -> Result<HermitianOperator> {
    let mut s = HermitianOperator::zeros(f.dimension());
    for &i in indices {
        let v = f.vectors().get(i).ok_or_else(|| FrameError::InvalidInput(format!("index {i} out of range")))?;
        s.add_outer(v, f.weight(i));
    }
    Ok(s)
}

fn eig_bounds(s: &HermitianOperator) -> (f64, f64) {
    let e = s.eigenvalues();
    (e.first().copied().unwrap_or(0.0), e.last().copied().unwrap_or(0.0))
}

fn recompute(env: &Envelope, doc: &InputDocument, m: &mut Vec<String>) -> Result<()> {
    match &env.parameters {
        Operation::Analyze => {
            let r: AnalyzeResult = parse_result(&env.result)?;
            let f = match doc {
                InputDocument::Frame(f) => f.clone(),
                InputDocument::Model(model) => model.equivalent_discrete()?,
            };
            let all: Vec<usize> = (0..f.len()).collect();
            let (lo, hi) = eig_bounds(&partial(&f, &all)?);
            check(m, "bounds.lower", r.bounds.lower, lo);
            check(m, "bounds.upper", r.bounds.upper, hi);
        }
        Operation::Partition { proportions, .. } => {
            let c: PartitionCertificate = parse_result(&env.result)?;
            let f = doc.frame("partition")?;
            if c.assignment.len() != f.len() || c.assignment.iter().any(|&k| k >= proportions.len()) {
                m.push("assignment does not fit the input".into());
                return Ok(());
            }
            for k in 0..proportions.len() {
                let block: Vec<usize> = (0..f.len()).filter(|&i| c.assignment[i] == k).collect();
                let (lo, hi) = if block.is_empty() { (0.0, 0.0) } else { eig_bounds(&partial(f, &block)?) };
                check(m, &format!("per_block_upper[{k}]"), c.per_block_upper.get(k).copied().unwrap_or(f64::NAN), hi);
                check(m, &format!("per_block_lower[{k}]"), c.per_block_lower.get(k).copied().unwrap_or(f64::NAN), lo);
            }
            let sat = c.per_block_upper.iter().zip(&c.target_bound_per_block).all(|(u, t)| *u <= t + 1e-9);
            if sat != c.satisfied {
                m.push("satisfied flag disagrees with the block norms".into());
            }
        }
        Operation::Lyapunov { weights, .. } => match doc {
            InputDocument::Frame(f) => {
                let c: SubsetCertificate = parse_result(&env.result)?;
                let w = match weights {
                    WeightSpec::Uniform(t) => vec![*t; f.len()],
                    WeightSpec::List(w) => w.clone(),
                };
                let all: Vec<usize> = (0..f.len()).collect();
                let mut target = HermitianOperator::zeros(f.dimension());
                for &i in &all {
                    target.add_outer(&f.vectors()[i], w.get(i).copied().unwrap_or(0.0) * f.weight(i));
                }
                let fresh = partial(f, &c.selected)?.minus(&target).operator_norm();
                check(m, "deviation", c.deviation, fresh);
            }
            InputDocument::Model(_) => {
                let c: ContinuousSubsetCertificate = parse_result(&env.result)?;
                if !c.refined {
                    let model = doc.model()?;
                    let tau = match weights {
                        WeightSpec::Uniform(t) => vec![*t; model.len()],
                        WeightSpec::List(w) => w.clone(),
                    };
                    let fresh = model
                        .partial_frame_operator(&c.selection)?
                        .minus(&model.weighted_frame_operator(&tau)?)
                        .operator_norm();
                    check(m, "deviation", c.deviation, fresh);
                }
            }
        },
        Operation::Sample { .. } => {
            let s: SamplingResult = parse_result(&env.result)?;
            let f = doc.frame("sample")?;
            let plain = FrameSystem::new(f.dimension(), f.vectors().to_vec(), None, f.label())?;
            for (i, &n) in s.counts.iter().enumerate() {
                let used = s.pi.iter().filter(|&&p| p == i).count() as u64;
                if used > n {
                    m.push(format!("index {i} sampled {used} times with count {n}"));
                }
            }
            let (lo, hi) = eig_bounds(&partial(&plain, &s.pi)?);
            check(m, "achieved_bounds[0]", s.achieved_bounds[0], lo);
            check(m, "achieved_bounds[1]", s.achieved_bounds[1], hi);
        }
        Operation::Discretize { .. } => {
            let s: SamplingResult = parse_result(&env.result)?;
            let model = doc.model()?;
            if let Some(g) = model.generator() {
                let points = s.sample_points.clone().unwrap_or_default();
                let mut op = HermitianOperator::zeros(model.dimension());
                for p in &points {
                    op.add_outer(&g.evaluate(p)?, 1.0);
                }
                if points.len() != s.pi.len() {
                    m.push("sample_points and pi differ in length".into());
                }
                let (lo, hi) = eig_bounds(&op);
                check(m, "achieved_bounds[0]", s.achieved_bounds[0], lo);
                check(m, "achieved_bounds[1]", s.achieved_bounds[1], hi);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn onb() -> Value {
        json!({"dimension": 2, "vectors": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]})
    }

    #[test]
    fn analyze_and_verify() {
        let (env, _) = issue(Operation::Analyze, onb()).unwrap();
        assert!(env.satisfied);
        assert!(verify(&env).unwrap().ok);
    }

    #[test]
    fn tampering_is_detected() {
        let op =
            Operation::Partition { proportions: vec![0.5, 0.5], two_value: false, search: SearchParams::default() };
        let (env, _) = issue(op, onb()).unwrap();
        assert!(verify(&env).unwrap().ok);
        let mut bad = env.clone();
        bad.result["assignment"][0] = json!(1);
        let rep = verify(&bad).unwrap();
        assert!(!rep.ok && !rep.rerun_ok);
        let mut bad = env.clone();
        bad.input["vectors"][0][0][0] = json!(0.5);
        assert!(!verify(&bad).unwrap().digest_ok);
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(InputDocument::parse("{"), Err(FrameError::Malformed(_))));
        assert!(matches!(InputDocument::parse("{\"dimension\": 2}"), Err(FrameError::Malformed(_))));
    }
}
