//! Finite frame systems in `C^d`.

use serde::{Deserialize, Serialize};

use crate::error::{FrameError, Result};
use crate::operator::{ComplexVector, HermitianOperator};

/// Tolerance for declaring a system Parseval or tight.
pub const PARSEVAL_TOL: f64 = 1e-8;

/// A finite family `{phi_i}` with optional weights `a_i >= 0`.
///
/// Weights multiply outer products, so the frame operator is
/// `sum_i a_i phi_i phi_i^*`. A caller holding amplitudes `c_i` (so that the
/// family of interest is `{c_i phi_i}`) should pass `a_i = |c_i|^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame", into = "RawFrame")]
pub struct FrameSystem {
    dimension: usize,
    vectors: Vec<ComplexVector>,
    weights: Option<Vec<f64>>,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    dimension: usize,
    vectors: Vec<ComplexVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    label: String,
}

impl TryFrom<RawFrame> for FrameSystem {
    type Error = FrameError;
    fn try_from(raw: RawFrame) -> Result<Self> {
        FrameSystem::new(raw.dimension, raw.vectors, raw.weights, raw.label)
    }
}

impl From<FrameSystem> for RawFrame {
    fn from(f: FrameSystem) -> Self {
        RawFrame { dimension: f.dimension, vectors: f.vectors, weights: f.weights, label: f.label }
    }
}

/// Optimal frame bounds together with a few derived flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameBoundsReport {
    pub lower: f64,
    pub upper: f64,
    pub is_parseval: bool,
    pub is_tight: bool,
    /// `max_i a_i ||phi_i||^2`.
    pub delta: f64,
    /// Indices of zero vectors; they never affect the bounds.
    pub zero_vectors: Vec<usize>,
}

impl FrameSystem {
    pub fn new(
        dimension: usize,
        vectors: Vec<ComplexVector>,
        weights: Option<Vec<f64>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(FrameError::InvalidInput("dimension must be positive".into()));
        }
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.dim() != dimension) {
            return Err(FrameError::Shape(format!(
                "vector {i} has dimension {} but the system has dimension {dimension}",
                v.dim()
            )));
        }
        if let Some(w) = &weights {
            if w.len() != vectors.len() {
                return Err(FrameError::Shape(format!("{} weights for {} vectors", w.len(), vectors.len())));
            }
            if let Some((i, a)) = w.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a >= 0.0)) {
                return Err(FrameError::InvalidInput(format!(
                    "weight {a} at index {i} is not a finite non-negative number"
                )));
            }
        }
        Ok(FrameSystem { dimension, vectors, weights, label: label.into() })
    }

    /// An unweighted system; the dimension is taken from the first vector.
    pub fn from_vectors(vectors: Vec<ComplexVector>) -> Result<Self> {
        let d =
            vectors.first().map(|v| v.dim()).ok_or_else(|| FrameError::InvalidInput("empty frame system".into()))?;
        Self::new(d, vectors, None, "")
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[ComplexVector] {
        &self.vectors
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `a_i`, or 1 when the system is unweighted.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// `a_i ||phi_i||^2`.
    pub fn weighted_norm_sqr(&self, i: usize) -> f64 {
        self.weight(i) * self.vectors[i].norm_sqr()
    }

    pub fn delta(&self) -> f64 {
        (0..self.len()).map(|i| self.weighted_norm_sqr(i)).fold(0.0, f64::max)
    }

    /// Folds the weights into the vectors: `{sqrt(a_i) phi_i}` unweighted.
    pub fn absorb_weights(&self) -> FrameSystem {
        let vectors = match &self.weights {
            None => self.vectors.clone(),
            Some(w) => self.vectors.iter().zip(w).map(|(v, a)| v.scaled(a.sqrt())).collect(),
        };
        FrameSystem { dimension: self.dimension, vectors, weights: None, label: self.label.clone() }
    }

    /// `S = sum_i a_i phi_i phi_i^*`.
    pub fn frame_operator(&self) -> Result<HermitianOperator> {
        if self.is_empty() {
            return Err(FrameError::InvalidInput("empty frame system".into()));
        }
        let mut s = HermitianOperator::zeros(self.dimension);
        for (i, v) in self.vectors.iter().enumerate() {
            s.add_outer(v, self.weight(i));
        }
        Ok(s)
    }

    pub fn frame_bounds(&self) -> Result<FrameBoundsReport> {
        let s = self.frame_operator()?;
        let (lower, upper) = s.extreme_eigenvalues();
        Ok(FrameBoundsReport {
            lower,
            upper,
            is_parseval: (lower - 1.0).abs() <= PARSEVAL_TOL && (upper - 1.0).abs() <= PARSEVAL_TOL,
            is_tight: (upper - lower).abs() <= PARSEVAL_TOL * upper.abs().max(1.0),
            delta: self.delta(),
            zero_vectors: self.vectors.iter().enumerate().filter(|(_, v)| v.is_zero()).map(|(i, _)| i).collect(),
        })
    }

    /// `{S^{-1/2} phi_i}` with the weights kept, a Parseval frame.
    pub fn canonical_parseval(&self) -> Result<FrameSystem> {
        let s = self.frame_operator()?;
        let (lower, upper) = s.extreme_eigenvalues();
        if lower <= 1e-12 * upper.max(1.0) {
            return Err(FrameError::NotAFrame { lower });
        }
        let root = s.power(-0.5, s.default_floor())?;
        Ok(self.transformed(&root))
    }

    /// `{T phi_i}` with the weights kept.
    pub fn transformed(&self, t: &HermitianOperator) -> FrameSystem {
        FrameSystem {
            dimension: self.dimension,
            vectors: self.vectors.iter().map(|v| t.apply(v)).collect(),
            weights: self.weights.clone(),
            label: self.label.clone(),
        }
    }

    /// `{c phi_i}`.
    pub fn scaled(&self, c: f64) -> FrameSystem {
        FrameSystem {
            dimension: self.dimension,
            vectors: self.vectors.iter().map(|v| v.scaled(c)).collect(),
            weights: self.weights.clone(),
            label: self.label.clone(),
        }
    }

    /// `sum_i tau_i a_i phi_i phi_i^*`.
    pub fn weighted_frame_operator(&self, tau: &[f64]) -> Result<HermitianOperator> {
        if tau.len() != self.len() {
            return Err(FrameError::Shape(format!("{} weights for {} vectors", tau.len(), self.len())));
        }
        if let Some((index, &value)) = tau.iter().enumerate().find(|(_, t)| !(**t >= 0.0 && **t <= 1.0)) {
            return Err(FrameError::InvalidWeight { index, value });
        }
        let mut s = HermitianOperator::zeros(self.dimension);
        for (i, v) in self.vectors.iter().enumerate() {
            if tau[i] != 0.0 {
                s.add_outer(v, tau[i] * self.weight(i));
            }
        }
        Ok(s)
    }

    /// `sum_{i in indices} a_i phi_i phi_i^*`; the zero operator for no indices.
    pub fn partial_operator(&self, indices: &[usize]) -> HermitianOperator {
        let mut s = HermitianOperator::zeros(self.dimension);
        for &i in indices {
            s.add_outer(&self.vectors[i], self.weight(i));
        }
        s
    }

    /// The subfamily at `indices`, in the given order (repeats allowed).
    pub fn subsystem(&self, indices: &[usize]) -> FrameSystem {
        FrameSystem {
            dimension: self.dimension,
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            weights: self.weights.as_ref().map(|w| indices.iter().map(|&i| w[i]).collect()),
            label: self.label.clone(),
        }
    }
}

/// Extreme eigenvalues of a partial operator, `(0, 0)` for an empty block.
pub(crate) fn block_bounds(f: &FrameSystem, indices: &[usize]) -> (f64, f64) {
    if indices.is_empty() {
        return (0.0, 0.0);
    }
    f.partial_operator(indices).extreme_eigenvalues()
}
