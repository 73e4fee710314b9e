//! Continuous frames over a measure space, modelled as finite cell lists.
//!
//! A cell is either an atom (indivisible, the vector is constant on it) or
//! a divisible piece of a non-atomic measure that can be split into
//! sub-cells of any prescribed measure.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FrameError, Result};
use crate::frame::FrameSystem;
use crate::operator::{ComplexVector, HermitianOperator};

/// One cell `X_n` of the measure space with its sample point `t_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureCell {
    pub id: String,
    #[serde(with = "extended_weight")]
    pub weight: f64,
    pub point: Vec<f64>,
    /// Axis-aligned box covered by the cell, one `[lo, hi]` per coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<[f64; 2]>>,
    pub divisible: bool,
}

impl MeasureCell {
    pub fn atom(id: impl Into<String>, weight: f64, point: Vec<f64>) -> Self {
        MeasureCell { id: id.into(), weight, point, extent: None, divisible: false }
    }

    pub fn interval(id: impl Into<String>, weight: f64, lo: f64, hi: f64) -> Self {
        MeasureCell {
            id: id.into(),
            weight,
            point: vec![0.5 * (lo + hi)],
            extent: Some(vec![[lo, hi]]),
            divisible: true,
        }
    }

    /// Largest distance from the sample point to the cell boundary, per axis.
    fn reach(&self) -> Option<Vec<f64>> {
        self.extent
            .as_ref()
            .map(|ext| ext.iter().zip(&self.point).map(|([lo, hi], p)| (p - lo).abs().max((hi - p).abs())).collect())
    }
}

/// Weights are finite non-negative numbers or the string `"infinity"`.
mod extended_weight {
    use super::*;

    pub fn serialize<S: Serializer>(w: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if w.is_infinite() {
            s.serialize_str("infinity")
        } else {
            s.serialize_f64(*w)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum W {
            Num(f64),
            Text(String),
        }
        match W::deserialize(d)? {
            W::Num(x) => Ok(x),
            W::Text(t) if t == "infinity" || t == "inf" => Ok(f64::INFINITY),
            W::Text(t) => Err(serde::de::Error::custom(format!("bad weight {t:?}"))),
        }
    }
}

/// Closed-form families that can be evaluated at any parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    /// `t -> (e^{2 pi i t x / M})_{x in support}`, parameter `t` real.
    Fourier { modulus: u64, support: Vec<i64> },
    /// Frequency-side wavelet `(a, b) -> (|a|^{1/2} psi^(a xi) e^{-2 pi i b xi})_xi`
    /// for `xi` in `-K..=-1, 1..=K`, with `psi` a step function on `[0, 1)`
    /// given by equally spaced values.
    Wavelet { psi: Vec<f64>, max_frequency: usize },
}

impl Generator {
    pub fn dimension(&self) -> usize {
        match self {
            Generator::Fourier { support, .. } => support.len(),
            Generator::Wavelet { max_frequency, .. } => 2 * max_frequency,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Generator::Fourier { modulus, support } => {
                if *modulus == 0 {
                    return Err(FrameError::InvalidInput("modulus must be positive".into()));
                }
                if support.is_empty() {
                    return Err(FrameError::InvalidInput("empty Fourier support".into()));
                }
                let mut s = support.clone();
                s.sort_unstable();
                s.dedup();
                if s.len() != support.len() {
                    return Err(FrameError::InvalidInput("repeated element in Fourier support".into()));
                }
            }
            Generator::Wavelet { psi, max_frequency } => {
                if psi.is_empty() || *max_frequency == 0 {
                    return Err(FrameError::InvalidInput("empty wavelet grid".into()));
                }
                if psi.iter().any(|x| !x.is_finite()) {
                    return Err(FrameError::InvalidInput("non-finite wavelet sample".into()));
                }
            }
        }
        Ok(())
    }

    fn arity(&self) -> usize {
        match self {
            Generator::Fourier { .. } => 1,
            Generator::Wavelet { .. } => 2,
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<ComplexVector> {
        if point.len() != self.arity() {
            return Err(FrameError::Shape(format!(
                "generator expects {} coordinates, got {}",
                self.arity(),
                point.len()
            )));
        }
        let entries = match self {
            Generator::Fourier { modulus, support } => {
                let t = point[0];
                support.iter().map(|&x| Complex64::from_polar(1.0, 2.0 * PI * t * x as f64 / *modulus as f64)).collect()
            }
            Generator::Wavelet { psi, max_frequency } => {
                let (a, b) = (point[0], point[1]);
                wavelet_frequencies(*max_frequency)
                    .map(|xi| {
                        let xi = xi as f64;
                        step_fourier(psi, a * xi) * a.abs().sqrt() * Complex64::from_polar(1.0, -2.0 * PI * b * xi)
                    })
                    .collect()
            }
        };
        ComplexVector::new(entries)
    }
}

/// `-K..=-1` followed by `1..=K`.
pub(crate) fn wavelet_frequencies(k: usize) -> impl Iterator<Item = i64> {
    let k = k as i64;
    (-k..=-1).chain(1..=k)
}

/// Fourier transform `int psi(x) e^{-2 pi i w x} dx` of the step function
/// taking value `c_j` on `[j/J, (j+1)/J)`.
pub(crate) fn step_fourier(c: &[f64], w: f64) -> Complex64 {
    let j = c.len() as f64;
    let sinc = if (PI * w / j).abs() < 1e-12 { 1.0 / j } else { (PI * w / j).sin() / (PI * w) };
    c.iter()
        .enumerate()
        .map(|(idx, &cj)| Complex64::from_polar(cj, -2.0 * PI * w * (idx as f64 + 0.5) / j))
        .sum::<Complex64>()
        * sinc
}

/// A sub-weight of one cell, `0 <= sub_weight <= mu_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPortion {
    pub cell: usize,
    #[serde(with = "extended_weight")]
    pub sub_weight: f64,
}

/// Desk-scale continuous frame: cells with weights and the vector at each
/// sample point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ContinuousFrameModel {
    dimension: usize,
    cells: Vec<MeasureCell>,
    vectors: Vec<ComplexVector>,
    generator: Option<Generator>,
    norm_cap: Option<f64>,
    declared_bounds: Option<[f64; 2]>,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    dimension: usize,
    #[serde(default)]
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    declared_bounds: Option<[f64; 2]>,
    cells: Vec<MeasureCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vectors: Option<Vec<ComplexVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<Generator>,
}

impl TryFrom<RawModel> for ContinuousFrameModel {
    type Error = FrameError;
    fn try_from(raw: RawModel) -> Result<Self> {
        let mut model = match (raw.vectors, raw.generator) {
            (Some(vectors), None) => ContinuousFrameModel::new(raw.dimension, raw.cells, vectors)?,
            (None, Some(g)) => {
                let m = ContinuousFrameModel::from_generator(g, raw.cells)?;
                if m.dimension != raw.dimension {
                    return Err(FrameError::Shape(format!(
                        "generator has dimension {} but the model declares {}",
                        m.dimension, raw.dimension
                    )));
                }
                m
            }
            (Some(_), Some(_)) => {
                return Err(FrameError::Malformed("give either \"vectors\" or \"generator\", not both".into()))
            }
            (None, None) => return Err(FrameError::Malformed("missing \"vectors\" or \"generator\"".into())),
        };
        model.label = raw.label;
        if let Some(n) = raw.norm_cap {
            model = model.with_norm_cap(n)?;
        }
        if let Some([a, b]) = raw.declared_bounds {
            model = model.with_declared_bounds(a, b)?;
        }
        Ok(model)
    }
}

impl From<ContinuousFrameModel> for RawModel {
    fn from(m: ContinuousFrameModel) -> Self {
        let (vectors, generator) = match m.generator {
            Some(g) => (None, Some(g)),
            None => (Some(m.vectors), None),
        };
        RawModel {
            dimension: m.dimension,
            label: m.label,
            norm_cap: m.norm_cap,
            declared_bounds: m.declared_bounds,
            cells: m.cells,
            vectors,
            generator,
        }
    }
}

fn validate_cells(cells: &[MeasureCell]) -> Result<()> {
    if cells.is_empty() {
        return Err(FrameError::InvalidInput("model has no cells".into()));
    }
    for (i, c) in cells.iter().enumerate() {
        if c.weight.is_nan() || c.weight < 0.0 {
            return Err(FrameError::InvalidInput(format!("cell {i} has weight {}", c.weight)));
        }
        if c.point.iter().any(|x| !x.is_finite()) {
            return Err(FrameError::InvalidInput(format!("cell {i} has a non-finite sample point")));
        }
        if let Some(ext) = &c.extent {
            if ext.len() != c.point.len() {
                return Err(FrameError::Shape(format!("cell {i}: extent and point have different arity")));
            }
            if ext.iter().any(|[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
                return Err(FrameError::InvalidInput(format!("cell {i} has a malformed extent")));
            }
        }
    }
    Ok(())
}

impl ContinuousFrameModel {
    /// A model with an explicit vector per cell.
    pub fn new(dimension: usize, cells: Vec<MeasureCell>, vectors: Vec<ComplexVector>) -> Result<Self> {
        if dimension == 0 {
            return Err(FrameError::InvalidInput("dimension must be positive".into()));
        }
        validate_cells(&cells)?;
        if vectors.len() != cells.len() {
            return Err(FrameError::Shape(format!("{} vectors for {} cells", vectors.len(), cells.len())));
        }
        if let Some(i) = vectors.iter().position(|v| v.dim() != dimension) {
            return Err(FrameError::Shape(format!("vector {i} does not have dimension {dimension}")));
        }
        Ok(ContinuousFrameModel {
            dimension,
            cells,
            vectors,
            generator: None,
            norm_cap: None,
            declared_bounds: None,
            label: String::new(),
        })
    }

    /// A model whose vectors are evaluated from `generator` at each sample point.
    pub fn from_generator(generator: Generator, cells: Vec<MeasureCell>) -> Result<Self> {
        generator.validate()?;
        validate_cells(&cells)?;
        let vectors = cells.iter().map(|c| generator.evaluate(&c.point)).collect::<Result<Vec<_>>>()?;
        let mut m = Self::new(generator.dimension(), cells, vectors)?;
        m.generator = Some(generator);
        Ok(m)
    }

    /// Atomic cells with weights `a_i` carrying the vectors of `f`.
    pub fn from_frame_system(f: &FrameSystem) -> Result<Self> {
        let cells = (0..f.len()).map(|i| MeasureCell::atom(i.to_string(), f.weight(i), vec![i as f64])).collect();
        let mut m = Self::new(f.dimension(), cells, f.vectors().to_vec())?;
        m.label = f.label().to_string();
        Ok(m)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Declares `||phi_t||^2 <= cap` and checks it at every sample point.
    pub fn with_norm_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(FrameError::InvalidInput(format!("norm cap {cap} must be positive")));
        }
        if let Some(i) = self.vectors.iter().position(|v| v.norm_sqr() > cap * (1.0 + 1e-12)) {
            return Err(FrameError::InvalidInput(format!(
                "cell {i} has squared norm {} above the cap {cap}",
                self.vectors[i].norm_sqr()
            )));
        }
        self.norm_cap = Some(cap);
        Ok(self)
    }

    pub fn with_declared_bounds(mut self, a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= a && b.is_finite()) {
            return Err(FrameError::InvalidInput(format!("declared bounds ({a}, {b}) are not ordered")));
        }
        self.declared_bounds = Some([a, b]);
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cells(&self) -> &[MeasureCell] {
        &self.cells
    }

    pub fn vectors(&self) -> &[ComplexVector] {
        &self.vectors
    }

    pub fn generator(&self) -> Option<&Generator> {
        self.generator.as_ref()
    }

    pub fn norm_cap(&self) -> Option<f64> {
        self.norm_cap
    }

    pub fn declared_bounds(&self) -> Option<[f64; 2]> {
        self.declared_bounds
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `max_t ||phi_t||^2` over sample points.
    pub fn max_norm_sqr(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }

    fn check_bessel(&self) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            if c.weight.is_infinite() && !self.vectors[i].is_zero() {
                return Err(FrameError::NotBessel { cell: i });
            }
        }
        Ok(())
    }

    /// The discrete frame `{phi_{t_n}}` with weights `mu_n`. Cells of
    /// infinite weight carrying the zero vector get weight 0.
    pub fn equivalent_discrete(&self) -> Result<FrameSystem> {
        self.check_bessel()?;
        let weights = self.cells.iter().map(|c| if c.weight.is_infinite() { 0.0 } else { c.weight }).collect();
        FrameSystem::new(self.dimension, self.vectors.clone(), Some(weights), self.label.clone())
    }

    /// Cell-quadrature frame operator `sum_n mu_n phi_{t_n} phi_{t_n}^*`.
    pub fn frame_operator(&self) -> Result<HermitianOperator> {
        self.equivalent_discrete()?.frame_operator()
    }

    /// `S_{phi,E} = sum_{(n, s) in E} s phi_{t_n} phi_{t_n}^*`.
    pub fn partial_frame_operator(&self, selection: &[CellPortion]) -> Result<HermitianOperator> {
        let mut s = HermitianOperator::zeros(self.dimension);
        for p in selection {
            let cell = self
                .cells
                .get(p.cell)
                .ok_or_else(|| FrameError::InvalidInput(format!("cell index {} out of range", p.cell)))?;
            if !(p.sub_weight >= 0.0) || p.sub_weight > cell.weight * (1.0 + 1e-12) {
                return Err(FrameError::InvalidInput(format!(
                    "sub-weight {} of cell {} is outside [0, {}]",
                    p.sub_weight, p.cell, cell.weight
                )));
            }
            if !cell.divisible && p.sub_weight > 0.0 && p.sub_weight < cell.weight {
                return Err(FrameError::Atomicity { cell: p.cell, sub_weight: p.sub_weight, weight: cell.weight });
            }
            if p.sub_weight == 0.0 || self.vectors[p.cell].is_zero() {
                continue;
            }
            if p.sub_weight.is_infinite() {
                return Err(FrameError::NotBessel { cell: p.cell });
            }
            s.add_outer(&self.vectors[p.cell], p.sub_weight);
        }
        Ok(s)
    }

    /// `S_{sqrt(tau) phi} = sum_n tau_n mu_n phi_{t_n} phi_{t_n}^*`.
    pub fn weighted_frame_operator(&self, tau: &[f64]) -> Result<HermitianOperator> {
        check_tau(tau, self.len())?;
        self.check_bessel()?;
        let mut s = HermitianOperator::zeros(self.dimension);
        for (n, c) in self.cells.iter().enumerate() {
            if tau[n] == 0.0 || self.vectors[n].is_zero() {
                continue;
            }
            s.add_outer(&self.vectors[n], tau[n] * c.weight);
        }
        Ok(s)
    }

    /// Selects sub-weight `tau_n mu_n` of every cell, so that
    /// `S_{psi,E} = S_{sqrt(tau) psi}` holds with identical arithmetic.
    pub fn select_subset_matching_weights(&self, tau: &[f64]) -> Result<Vec<CellPortion>> {
        check_tau(tau, self.len())?;
        let mut out = Vec::new();
        for (n, c) in self.cells.iter().enumerate() {
            let t = tau[n];
            if t == 0.0 {
                continue;
            }
            if t < 1.0 && !c.divisible {
                return Err(FrameError::Atomicity { cell: n, sub_weight: t * c.weight, weight: c.weight });
            }
            out.push(CellPortion { cell: n, sub_weight: if t == 1.0 { c.weight } else { t * c.weight } });
        }
        Ok(out)
    }

    /// Splits a cell in two along `axis`. Without an extent the halves keep
    /// the sample point and vector.
    fn split(&self, n: usize, axis: usize) -> Result<[(MeasureCell, ComplexVector); 2]> {
        let c = &self.cells[n];
        let half = 0.5 * c.weight;
        match &c.extent {
            None => {
                let mk = |suffix: &str| MeasureCell {
                    id: format!("{}.{suffix}", c.id),
                    weight: half,
                    point: c.point.clone(),
                    extent: None,
                    divisible: true,
                };
                Ok([(mk("0"), self.vectors[n].clone()), (mk("1"), self.vectors[n].clone())])
            }
            Some(ext) => {
                let [lo, hi] = ext[axis];
                let mid = 0.5 * (lo + hi);
                let child = |suffix: &str, lo: f64, hi: f64| -> Result<(MeasureCell, ComplexVector)> {
                    let mut extent = ext.clone();
                    extent[axis] = [lo, hi];
                    let point: Vec<f64> = extent.iter().map(|[l, h]| 0.5 * (l + h)).collect();
                    let vector = match &self.generator {
                        Some(g) => g.evaluate(&point)?,
                        None => self.vectors[n].clone(),
                    };
                    let cell = MeasureCell {
                        id: format!("{}.{suffix}", c.id),
                        weight: half,
                        point,
                        extent: Some(extent),
                        divisible: true,
                    };
                    Ok((cell, vector))
                };
                Ok([child("0", lo, mid)?, child("1", mid, hi)?])
            }
        }
    }

    /// Halves every divisible cell `levels` times along its longest axis.
    /// Returns the refined model and, for each new cell, its parent index.
    pub fn subdivide(&self, levels: u32) -> Result<(ContinuousFrameModel, Vec<usize>)> {
        let mut model = self.clone();
        let mut parent: Vec<usize> = (0..self.len()).collect();
        for _ in 0..levels {
            let mut cells = Vec::with_capacity(model.len() * 2);
            let mut vectors = Vec::with_capacity(model.len() * 2);
            let mut next_parent = Vec::with_capacity(model.len() * 2);
            for n in 0..model.len() {
                if model.cells[n].divisible {
                    let axis = longest_axis(&model.cells[n]);
                    for (c, v) in model.split(n, axis)? {
                        cells.push(c);
                        vectors.push(v);
                        next_parent.push(parent[n]);
                    }
                } else {
                    cells.push(model.cells[n].clone());
                    vectors.push(model.vectors[n].clone());
                    next_parent.push(parent[n]);
                }
            }
            model.cells = cells;
            model.vectors = vectors;
            parent = next_parent;
        }
        Ok((model, parent))
    }

    /// The same cells and vectors with the generator dropped, so the vector
    /// is constant on every cell.
    pub fn piecewise_constant(&self) -> ContinuousFrameModel {
        ContinuousFrameModel { generator: None, ..self.clone() }
    }
}

fn check_tau(tau: &[f64], len: usize) -> Result<()> {
    if tau.len() != len {
        return Err(FrameError::Shape(format!("{} weights for {len} cells", tau.len())));
    }
    if let Some((index, &value)) = tau.iter().enumerate().find(|(_, t)| !(**t >= 0.0 && **t <= 1.0)) {
        return Err(FrameError::InvalidWeight { index, value });
    }
    Ok(())
}

fn longest_axis(c: &MeasureCell) -> usize {
    c.extent
        .as_ref()
        .map(|ext| {
            let mut best = 0;
            for (k, [lo, hi]) in ext.iter().enumerate() {
                if hi - lo > ext[best][1] - ext[best][0] {
                    best = k;
                }
            }
            best
        })
        .unwrap_or(0)
}

/// Bound on `sup_{t in cell} ||phi_t - phi_{t_n}||`.
pub trait OscillationOracle {
    fn oscillation(&self, model: &ContinuousFrameModel, cell: usize) -> f64;

    /// Axis along which to split a cell whose oscillation is too large.
    fn split_axis(&self, model: &ContinuousFrameModel, cell: usize) -> usize {
        longest_axis(&model.cells[cell])
    }
}

/// The vector is constant on every cell.
#[derive(Clone, Copy, Debug, Default)]
pub struct PiecewiseConstant;

impl OscillationOracle for PiecewiseConstant {
    fn oscillation(&self, _: &ContinuousFrameModel, _: usize) -> f64 {
        0.0
    }
}

/// Analytic Lipschitz bounds for the built-in generators. Atoms and cells
/// without an extent are points and have oscillation 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct GeneratorLipschitz;

impl GeneratorLipschitz {
    /// Per-axis terms `L_k * reach_k` whose sum bounds the oscillation.
    fn terms(model: &ContinuousFrameModel, n: usize) -> Vec<f64> {
        let cell = &model.cells[n];
        let (Some(g), Some(reach)) = (&model.generator, cell.reach()) else {
            return vec![0.0];
        };
        if !cell.divisible {
            return vec![0.0];
        }
        match g {
            Generator::Fourier { modulus, support } => {
                let l = 2.0 * PI / *modulus as f64 * support.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                vec![l * reach[0]]
            }
            Generator::Wavelet { psi, max_frequency } => {
                let ext = cell.extent.as_ref().expect("checked above");
                let [a_lo, a_hi] = ext[0];
                // |a| over a box that straddles 0 is unbounded below.
                if a_lo <= 0.0 && a_hi >= 0.0 {
                    return vec![f64::INFINITY, 0.0];
                }
                let a_min = a_lo.abs().min(a_hi.abs());
                let a_max = a_lo.abs().max(a_hi.abs());
                let l1 = psi.iter().map(|c| c.abs()).sum::<f64>() / psi.len() as f64;
                let k = *max_frequency as f64;
                let xi_norm = wavelet_frequencies(*max_frequency).map(|x| (x * x) as f64).sum::<f64>().sqrt();
                let l_a = 0.5 / a_min.sqrt() * l1 * (2.0 * k).sqrt() + 2.0 * PI * a_max.sqrt() * l1 * xi_norm;
                let l_b = 2.0 * PI * a_max.sqrt() * l1 * xi_norm;
                vec![l_a * reach[0], l_b * reach[1]]
            }
        }
    }
}

impl OscillationOracle for GeneratorLipschitz {
    fn oscillation(&self, model: &ContinuousFrameModel, cell: usize) -> f64 {
        Self::terms(model, cell).iter().sum()
    }

    fn split_axis(&self, model: &ContinuousFrameModel, cell: usize) -> usize {
        let t = Self::terms(model, cell);
        (0..t.len()).fold(0, |best, k| if t[k] > t[best] { k } else { best })
    }
}

/// The oracle matching how the model was built.
pub fn default_oracle(model: &ContinuousFrameModel) -> Box<dyn OscillationOracle + Send + Sync> {
    if model.generator.is_some() {
        Box::new(GeneratorLipschitz)
    } else {
        Box::new(PiecewiseConstant)
    }
}

/// Limits on the refinement loop.
#[derive(Clone, Copy, Debug)]
pub struct RefinementLimits {
    pub max_depth: u32,
    pub max_cells: usize,
}

impl Default for RefinementLimits {
    fn default() -> Self {
        RefinementLimits { max_depth: 48, max_cells: 1 << 21 }
    }
}

/// Result of [`approximate_by_countable`].
#[derive(Clone, Debug)]
pub struct CountableApproximation {
    /// Piecewise-constant model: the vector on each cell is `phi` at its
    /// sample point.
    pub model: ContinuousFrameModel,
    /// Certified bound on `||S_{sqrt(tau) phi} - S_{sqrt(tau) psi}||`, valid for every `tau`.
    pub error_bound: f64,
    /// Index of the input cell each output cell was cut from.
    pub parent: Vec<usize>,
    /// Largest ratio of oscillation to its allowance over all cells.
    pub worst_ratio: f64,
}

/// Norm shell: 0 for `||phi|| < 1`, else `n` with `2^{n-1} <= ||phi|| < 2^n`.
pub fn norm_shell(norm: f64) -> u32 {
    if norm < 1.0 {
        0
    } else {
        (norm.log2().floor() as i64 + 1).max(1) as u32
    }
}

/// Greedy weight groups `m >= 1` per norm shell, in cell order, each of
/// total weight at most 1. Only divisible cells are grouped; atoms get `None`.
pub fn weight_groups(model: &ContinuousFrameModel) -> Vec<Option<(u32, u32)>> {
    use std::collections::HashMap;
    let mut state: HashMap<u32, (u32, f64)> = HashMap::new();
    model
        .cells
        .iter()
        .zip(&model.vectors)
        .map(|(c, v)| {
            if !c.divisible || c.weight == 0.0 || c.weight.is_infinite() {
                return None;
            }
            let n = norm_shell(v.norm());
            let entry = state.entry(n).or_insert((1, 0.0));
            if entry.1 + c.weight > 1.0 && entry.1 > 0.0 {
                entry.0 += 1;
                entry.1 = 0.0;
            }
            entry.1 += c.weight;
            Some((n, entry.0))
        })
        .collect()
}

/// Refines divisible cells until the cell in shell `n` and weight group `m`
/// has oscillation at most `eps / (4^n 2^(m+1))`, then freezes each cell's
/// vector at its sample point. The returned bound is `6 eps`.
///
/// Atoms keep their vector unchanged; the oracle must report 0 for them.
pub fn approximate_by_countable(
    model: &ContinuousFrameModel,
    epsilon: f64,
    oracle: &dyn OscillationOracle,
    limits: RefinementLimits,
) -> Result<CountableApproximation> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(FrameError::InvalidInput(format!("epsilon {epsilon} must be positive")));
    }
    // With eps <= 1 every oscillation stays below 1, so a cell whose sample
    // point lies in shell n still has ||phi_t|| < 2^n + 1 everywhere.
    let eps = epsilon.min(1.0);
    let mut current = model.clone();
    let mut parent: Vec<usize> = (0..model.len()).collect();
    let mut depth: Vec<u32> = vec![0; model.len()];

    for (n, c) in model.cells.iter().enumerate() {
        if c.weight.is_infinite() && (!model.vectors[n].is_zero() || oracle.oscillation(model, n) > 0.0) {
            return Err(FrameError::NotBessel { cell: n });
        }
    }

    let mut worst_ratio;
    loop {
        let groups = weight_groups(&current);
        let mut split: Vec<Option<usize>> = vec![None; current.len()];
        let mut any = false;
        worst_ratio = 0.0_f64;
        for (n, cell) in current.cells.iter().enumerate() {
            if cell.weight == 0.0 || cell.weight.is_infinite() {
                continue;
            }
            let osc = oracle.oscillation(&current, n);
            if !cell.divisible {
                if osc > 0.0 {
                    return Err(FrameError::IrreducibleCell { cell: parent[n], oscillation: osc, required: 0.0 });
                }
                continue;
            }
            let needs_split = cell.weight > 1.0 || {
                let (shell, m) = groups[n].expect("divisible cells are grouped");
                let required = eps / (4f64.powi(shell as i32) * 2f64.powi(m as i32 + 1));
                worst_ratio = worst_ratio.max(osc / required);
                osc > required
            };
            if needs_split {
                if depth[n] >= limits.max_depth {
                    return Err(FrameError::RefinementLimit(format!(
                        "cell {} still oscillates by {osc:e} after {} halvings",
                        current.cells[n].id, depth[n]
                    )));
                }
                split[n] = Some(oracle.split_axis(&current, n));
                any = true;
            }
        }
        if !any {
            break;
        }
        let extra = split.iter().filter(|s| s.is_some()).count();
        if current.len() + extra > limits.max_cells {
            return Err(FrameError::RefinementLimit(format!("refinement needs more than {} cells", limits.max_cells)));
        }
        let mut cells = Vec::with_capacity(current.len() + extra);
        let mut vectors = Vec::with_capacity(current.len() + extra);
        let mut next_parent = Vec::with_capacity(current.len() + extra);
        let mut next_depth = Vec::with_capacity(current.len() + extra);
        for n in 0..current.len() {
            match split[n] {
                Some(axis) => {
                    for (c, v) in current.split(n, axis)? {
                        cells.push(c);
                        vectors.push(v);
                        next_parent.push(parent[n]);
                        next_depth.push(depth[n] + 1);
                    }
                }
                None => {
                    cells.push(current.cells[n].clone());
                    vectors.push(current.vectors[n].clone());
                    next_parent.push(parent[n]);
                    next_depth.push(depth[n]);
                }
            }
        }
        current.cells = cells;
        current.vectors = vectors;
        parent = next_parent;
        depth = next_depth;
    }

    Ok(CountableApproximation { model: current.piecewise_constant(), error_bound: 6.0 * epsilon, parent, worst_ratio })
}
