//! Example frames with known tightness: Fourier frames on a cyclic group,
//! finite Gabor systems, and a quadrature model of the continuous wavelet
//! transform. Also a Beurling-type density count for sample sets.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuous::{step_fourier, ContinuousFrameModel, Generator, MeasureCell};
use crate::error::{FrameError, Result};
use crate::frame::FrameSystem;
use crate::operator::ComplexVector;

fn check_support(modulus: u64, support: &[i64]) -> Result<()> {
    if modulus == 0 {
        return Err(FrameError::InvalidInput("group size must be positive".into()));
    }
    if support.is_empty() {
        return Err(FrameError::InvalidInput("empty Fourier support".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &x in support {
        if x < 0 || x as u64 >= modulus {
            return Err(FrameError::InvalidInput(format!("support element {x} is outside 0..{modulus}")));
        }
        if !seen.insert(x) {
            return Err(FrameError::InvalidInput(format!("support element {x} is repeated")));
        }
    }
    Ok(())
}

/// Characters of `Z_M` restricted to `S`, one atom of weight `1/M` per
/// `t in Z_M`. Parseval; every vector has squared norm `|S|`.
pub fn finite_fourier_frame(modulus: u64, support: &[i64]) -> Result<ContinuousFrameModel> {
    check_support(modulus, support)?;
    let g = Generator::Fourier { modulus, support: support.to_vec() };
    let w = 1.0 / modulus as f64;
    let cells = (0..modulus).map(|t| MeasureCell::atom(format!("t{t}"), w, vec![t as f64])).collect();
    ContinuousFrameModel::from_generator(g, cells)?
        .with_norm_cap(support.len() as f64)?
        .with_declared_bounds(1.0, 1.0)
        .map(|m| m.with_label(format!("fourier M={modulus}")))
}

/// `t -> (e^{2 pi i t x / M})_{x in S}` on `[0, M)` with measure `dt / M`,
/// one divisible unit interval per cell. Parseval both as a continuous
/// frame and at the cell midpoints.
pub fn continuous_fourier_frame(modulus: u64, support: &[i64]) -> Result<ContinuousFrameModel> {
    check_support(modulus, support)?;
    let g = Generator::Fourier { modulus, support: support.to_vec() };
    let w = 1.0 / modulus as f64;
    let cells = (0..modulus).map(|t| MeasureCell::interval(format!("t{t}"), w, t as f64, t as f64 + 1.0)).collect();
    ContinuousFrameModel::from_generator(g, cells)?
        .with_norm_cap(support.len() as f64)?
        .with_declared_bounds(1.0, 1.0)
        .map(|m| m.with_label(format!("fourier M={modulus} continuous")))
}

/// `M_l T_k g` for `k, l in Z_d`, stored at index `k d + l`. Tight with
/// constant `d ||g||^2`.
pub fn finite_gabor_frame(g: &ComplexVector) -> Result<FrameSystem> {
    if g.is_zero() {
        return Err(FrameError::InvalidInput("zero Gabor window".into()));
    }
    let d = g.dim();
    let mut vectors = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            let entries = (0..d)
                .map(|x| {
                    let phase = Complex64::from_polar(1.0, 2.0 * PI * (l * x) as f64 / d as f64);
                    phase * g.entries()[(x + d - k) % d]
                })
                .collect();
            vectors.push(ComplexVector::new(entries)?);
        }
    }
    Ok(FrameSystem::from_vectors(vectors)?.with_label(format!("gabor d={d}")))
}

/// The Haar-type step function `c (1_[0,1/2) - 1_[1/2,1))`, scaled so
/// that `int |psi^(xi)|^2 / |xi| dxi = 1`.
pub fn haar_wavelet() -> Vec<f64> {
    // int_R |psi^|^2 / |xi| = 2 ln 2 for the unscaled Haar function
    let c = (2.0 * std::f64::consts::LN_2).sqrt().recip();
    vec![c, -c]
}

/// `per_octave` geometric steps per factor 2 from `a_min` to `a_max`.
pub fn geometric_scale_grid(a_min: f64, a_max: f64, per_octave: usize) -> Result<Vec<f64>> {
    if !(a_min > 0.0 && a_max > a_min && per_octave > 0) {
        return Err(FrameError::InvalidInput(format!("bad scale range ({a_min}, {a_max}) or resolution {per_octave}")));
    }
    let steps = ((a_max / a_min).log2() * per_octave as f64).ceil() as usize;
    Ok((0..=steps).map(|j| a_min * 2f64.powf(j as f64 / per_octave as f64)).collect())
}

/// `sum_j (1/a_j - 1/a_{j+1}) a_j' |psi^(a_j' xi)|^2` over both signs of
/// `a`, with `a_j'` the geometric midpoint: the quadrature of
/// `int |psi^(a xi)|^2 |a| da / a^2`.
pub fn admissibility_sum(psi: &[f64], scales: &[f64], xi: f64) -> f64 {
    scales
        .windows(2)
        .map(|w| {
            let a = (w[0] * w[1]).sqrt();
            2.0 * (1.0 / w[0] - 1.0 / w[1]) * a * step_fourier(psi, a * xi).norm_sqr()
        })
        .sum()
}

/// Diagnostics of a wavelet model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletReport {
    /// Admissibility sum at `xi = 1`.
    pub admissibility: f64,
    /// Measured bounds of the cell model.
    pub bounds: [f64; 2],
    pub scale_cells: usize,
    pub shift_cells: usize,
}

/// Quadrature model of `{pi(a, b) psi}` with measure `|a|^{-2} da db` on
/// the span of the frequencies `-K..=-1, 1..=K`.
///
/// `scales` are increasing positive cell edges, mirrored to negative
/// scales; shifts are `shift_cells` equal cells of `[0, 1)`. With more
/// than `2K` shift cells the frame operator is diagonal and its entries are
/// the admissibility sums at `xi = +-1, ..., +-K`. Cells are atoms unless
/// `divisible` is set.
pub fn quadrature_wavelet_frame(
    psi: &[f64],
    scales: &[f64],
    shift_cells: usize,
    max_frequency: usize,
    divisible: bool,
) -> Result<(ContinuousFrameModel, WaveletReport)> {
    if psi.is_empty() || scales.len() < 2 || shift_cells == 0 || max_frequency == 0 {
        return Err(FrameError::InvalidInput("empty wavelet grid".into()));
    }
    if scales[0] <= 0.0 || scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FrameError::InvalidInput("scale edges must be positive and increasing".into()));
    }
    let sum = admissibility_sum(psi, scales, 1.0);
    if !((sum - 1.0).abs() <= 0.1) {
        return Err(FrameError::Admissibility { sum });
    }
    let g = Generator::Wavelet { psi: psi.to_vec(), max_frequency };
    let db = 1.0 / shift_cells as f64;
    let mut cells = Vec::new();
    for sign in [-1.0, 1.0] {
        for (j, w) in scales.windows(2).enumerate() {
            let weight = (1.0 / w[0] - 1.0 / w[1]) * db;
            let a = sign * (w[0] * w[1]).sqrt();
            let a_ext = if sign > 0.0 { [w[0], w[1]] } else { [-w[1], -w[0]] };
            for k in 0..shift_cells {
                let b_ext = [k as f64 * db, (k + 1) as f64 * db];
                cells.push(MeasureCell {
                    id: format!("a{}{j}b{k}", if sign > 0.0 { "+" } else { "-" }),
                    weight,
                    point: vec![a, 0.5 * (b_ext[0] + b_ext[1])],
                    extent: Some(vec![a_ext, b_ext]),
                    divisible,
                });
            }
        }
    }
    let model = ContinuousFrameModel::from_generator(g, cells)?.with_label("wavelet");
    let (lo, hi) = model.frame_operator()?.extreme_eigenvalues();
    let report = WaveletReport { admissibility: sum, bounds: [lo, hi], scale_cells: scales.len() - 1, shift_cells };
    Ok((model, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub points: usize,
    pub window: f64,
    /// Largest count in a window `[x, x + window]` anchored at a point.
    pub max_count: usize,
    /// `max_count / window`.
    pub max_density: f64,
    /// `4 C |S|`.
    pub bound: f64,
    pub within: bool,
}

/// Upper Beurling-type density of `points` over closed windows of the
/// given length, compared with `4 C |S|`.
pub fn beurling_density_check(points: &[f64], support_measure: f64, c: f64, window: f64) -> Result<DensityReport> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(FrameError::InvalidInput(format!("window length {window} must be positive")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(FrameError::InvalidInput("non-finite sample point".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut max_count = 0;
    let mut hi = 0;
    for lo in 0..sorted.len() {
        hi = hi.max(lo);
        while hi < sorted.len() && sorted[hi] <= sorted[lo] + window {
            hi += 1;
        }
        max_count = max_count.max(hi - lo);
    }
    let max_density = max_count as f64 / window;
    let bound = 4.0 * c * support_measure;
    Ok(DensityReport { points: points.len(), window, max_count, max_density, bound, within: max_density <= bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_trivial_and_full() {
        let m = finite_fourier_frame(1, &[0]).unwrap();
        let b = m.equivalent_discrete().unwrap().frame_bounds().unwrap();
        assert!(b.is_parseval);
        let m = finite_fourier_frame(8, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let (lo, hi) = m.frame_operator().unwrap().extreme_eigenvalues();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!(finite_fourier_frame(8, &[]).is_err());
        assert!(finite_fourier_frame(8, &[8]).is_err());
    }

    #[test]
    fn continuous_fourier_is_parseval_at_midpoints() {
        let m = continuous_fourier_frame(8, &[0, 3, 5]).unwrap();
        let (lo, hi) = m.frame_operator().unwrap().extreme_eigenvalues();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let (fine, _) = m.subdivide(3).unwrap();
        let (lo, hi) = fine.frame_operator().unwrap().extreme_eigenvalues();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gabor_basis_vector_window() {
        let g = ComplexVector::basis(2, 0);
        let f = finite_gabor_frame(&g).unwrap();
        assert_eq!(f.len(), 4);
        let b = f.frame_bounds().unwrap();
        assert!((b.lower - 2.0).abs() < 1e-12 && (b.upper - 2.0).abs() < 1e-12);
        assert!(finite_gabor_frame(&ComplexVector::zeros(3)).is_err());
    }

    #[test]
    fn haar_admissibility_converges() {
        let psi = haar_wavelet();
        let coarse = admissibility_sum(&psi, &geometric_scale_grid(1e-3, 1e3, 4).unwrap(), 1.0);
        let fine = admissibility_sum(&psi, &geometric_scale_grid(1e-4, 1e4, 32).unwrap(), 1.0);
        assert!((coarse - 1.0).abs() < 0.1, "{coarse}");
        assert!((fine - 1.0).abs() < (coarse - 1.0).abs().max(1e-3), "{fine}");
    }

    #[test]
    fn wavelet_model_is_diagonal() {
        let scales = geometric_scale_grid(1e-2, 1e2, 4).unwrap();
        let (m, rep) = quadrature_wavelet_frame(&haar_wavelet(), &scales, 5, 2, false).unwrap();
        let s = m.frame_operator().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(s.get(i, j).norm() < 1e-12);
                }
            }
        }
        assert!(rep.bounds[1] / rep.bounds[0] <= 4.0);
        assert!(quadrature_wavelet_frame(&haar_wavelet(), &[1.0], 5, 2, false).is_err());
        assert!(matches!(
            quadrature_wavelet_frame(&[1.0, 1.0], &scales, 5, 2, false),
            Err(FrameError::Admissibility { .. })
        ));
    }

    #[test]
    fn density_counts() {
        let pts: Vec<f64> = (0..=100).map(|x| x as f64).collect();
        let r = beurling_density_check(&pts, 1.0, 1.0, 10.0).unwrap();
        assert_eq!(r.max_count, 11);
        assert!((r.max_density - 1.1).abs() < 1e-15);
        let r = beurling_density_check(&[], 1.0, 1.0, 10.0).unwrap();
        assert_eq!(r.max_density, 0.0);
        assert!(beurling_density_check(&[], 1.0, 1.0, 0.0).is_err());
    }
}
