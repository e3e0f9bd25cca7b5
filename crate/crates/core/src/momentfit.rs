//! Low-order Taylor coefficients of the data function from gridded images,
//! and removal of in-plane translations.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multi_index::{all2, idx2, len2};
use crate::optics::{gamma3, FourierImage};
use crate::real::cis;
use crate::series::{plane_wave_series, TruncatedSeries2};

type C64 = Complex<f64>;

/// Largest accepted condition number of the weighted design matrix.
pub const MAX_DESIGN_CONDITION: f64 = 1e10;
/// Extra polynomial degrees fitted to absorb truncation bias.
pub const GUARD_DEGREES: usize = 2;
/// Minimum ratio of in-disc samples to unknowns.
pub const MIN_SAMPLES_PER_UNKNOWN: usize = 3;
/// `|c₀₀|` below this cannot fix a translation.
pub const MASS_TOLERANCE: f64 = 1e-14;
/// Image-path translation refits stop once the correction drops below this.
pub const SHIFT_REFIT_TOLERANCE: f64 = 1e-13;
const MAX_SHIFT_REFITS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("design matrix condition number {0:.3e} exceeds the limit")]
    IllConditioned(f64),
    #[error("{have} samples inside the fitting disc, {need} required")]
    TooFewSamples { have: usize, need: usize },
    #[error("zeroth-order coefficient {0:.3e} too small to fix a translation")]
    DegenerateMass(f64),
}

/// `c_ij` for `i + j ≤ order` with one-sigma style uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable2 {
    pub order: usize,
    pub values: Vec<C64>,
    pub uncertainties: Vec<f64>,
}

impl CoefficientTable2 {
    /// Exact table (zero uncertainties).
    pub fn exact(series: &TruncatedSeries2<f64>) -> Self {
        Self {
            order: series.order(),
            values: series.coeffs().to_vec(),
            uncertainties: vec![0.0; len2(series.order())],
        }
    }

    pub fn series(&self) -> TruncatedSeries2<f64> {
        TruncatedSeries2::from_coeffs(self.order, self.values.clone()).expect("table length")
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i + j > self.order {
            return C64::new(0.0, 0.0);
        }
        self.values[idx2(i, j)]
    }

    pub fn uncertainty(&self, i: usize, j: usize) -> f64 {
        if i + j > self.order {
            return 0.0;
        }
        self.uncertainties[idx2(i, j)]
    }

    pub fn truncated(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Self {
            order,
            values: self.values[..len2(order)].to_vec(),
            uncertainties: self.uncertainties[..len2(order)].to_vec(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.values.len() == len2(self.order) && self.uncertainties.len() == len2(self.order)
    }
}

/// Weighted least-squares fit of a degree-`order + 2` polynomial to
/// `2(γ₃ − k)·F[I]` on `|ξ| ≤ ρ` with weights `exp(−|ξ|²/ρ²)`.
///
/// Uncertainties are `sqrt(diag((AᵀWA)⁻¹) · RSS_w)`, with the weighted
/// residual sum of squares left undivided so that deterministic truncation
/// residue is counted in full.
pub fn fit_coefficients(
    image: &FourierImage,
    order: usize,
    rho: f64,
    k: f64,
) -> Result<CoefficientTable2, FitError> {
    fit_samples(image, order, rho, k, [0.0, 0.0])
}

fn fit_samples(
    image: &FourierImage,
    order: usize,
    rho: f64,
    k: f64,
    shift: [f64; 2],
) -> Result<CoefficientTable2, FitError> {
    let degree = order + GUARD_DEGREES;
    let unknowns = len2(degree);
    let grid = image.grid;
    let n = grid.n;
    let mut points = Vec::new();
    let mut targets = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let xi = grid.point(row, col);
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            if r2 > rho * rho {
                continue;
            }
            let mut y = image.get(row, col) * (2.0 * (gamma3(r2, k) - k));
            if shift != [0.0, 0.0] {
                y *= cis(shift[0] * xi[0] + shift[1] * xi[1]);
            }
            let w = (-r2 / (rho * rho)).exp().sqrt();
            points.push(([xi[0] / rho, xi[1] / rho], w));
            targets.push(y * w);
        }
    }
    let need = MIN_SAMPLES_PER_UNKNOWN * unknowns;
    if points.len() < need {
        return Err(FitError::TooFewSamples {
            have: points.len(),
            need,
        });
    }
    let monomials: Vec<(usize, usize)> = all2(degree).collect();
    let a = DMatrix::from_fn(points.len(), unknowns, |r, c| {
        let ([u, v], w) = points[r];
        let (i, j) = monomials[c];
        w * u.powi(i as i32) * v.powi(j as i32)
    });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_DESIGN_CONDITION {
        return Err(FitError::IllConditioned(condition));
    }
    let re = DMatrix::from_fn(points.len(), 1, |r, _| targets[r].re);
    let im = DMatrix::from_fn(points.len(), 1, |r, _| targets[r].im);
    let xr = svd.solve(&re, 0.0).expect("svd with vectors");
    let xi = svd.solve(&im, 0.0).expect("svd with vectors");
    let rss = (&a * &xr - &re).norm_squared() + (&a * &xi - &im).norm_squared();
    let v_t = svd.v_t.as_ref().expect("svd with vectors");
    let mut values = Vec::with_capacity(len2(order));
    let mut uncertainties = Vec::with_capacity(len2(order));
    for (c, &(i, j)) in monomials.iter().enumerate().take(len2(order)) {
        let var: f64 = (0..unknowns)
            .map(|s| (v_t[(s, c)] / svd.singular_values[s]).powi(2))
            .sum();
        let scale = rho.powi((i + j) as i32);
        values.push(C64::new(xr[c], xi[c]) / scale);
        uncertainties.push((var * rss).sqrt() / scale);
    }
    Ok(CoefficientTable2 {
        order,
        values,
        uncertainties,
    })
}

/// `(c₁, c₂) = i (c₁₀, c₀₁) / c₀₀`, from `c₁₀ = −i(z + z̄) f̂(0) c₁`.
fn shift_from_first_order(table: &CoefficientTable2) -> Result<[f64; 2], FitError> {
    let c00 = table.get(0, 0);
    if c00.norm() < MASS_TOLERANCE {
        return Err(FitError::DegenerateMass(c00.norm()));
    }
    let i = C64::new(0.0, 1.0);
    Ok([
        (i * table.get(1, 0) / c00).re,
        (i * table.get(0, 1) / c00).re,
    ])
}

/// Oracle path: reads the shift off the first-order coefficients and
/// multiplies the series by `e^{+i(c₁,c₂)·ξ}`.
pub fn remove_translation(table: &CoefficientTable2) -> Result<([f64; 2], CoefficientTable2), FitError> {
    let shift = shift_from_first_order(table)?;
    if shift == [0.0, 0.0] {
        return Ok((shift, table.clone()));
    }
    let wave = plane_wave_series(table.order, shift);
    let centered = wave.mul_unchecked(&table.series());
    Ok((
        shift,
        CoefficientTable2 {
            order: table.order,
            values: centered.coeffs().to_vec(),
            uncertainties: table.uncertainties.clone(),
        },
    ))
}

/// Image path: fit, read the shift, multiply the samples by
/// `e^{+i(c₁,c₂)·ξ}` and refit until the residual shift is negligible.
pub fn remove_translation_image(
    image: &FourierImage,
    order: usize,
    rho: f64,
    k: f64,
) -> Result<([f64; 2], CoefficientTable2), FitError> {
    let mut shift = [0.0, 0.0];
    let mut table = fit_samples(image, order, rho, k, shift)?;
    for _ in 0..MAX_SHIFT_REFITS {
        let delta = shift_from_first_order(&table)?;
        shift = [shift[0] + delta[0], shift[1] + delta[1]];
        table = fit_samples(image, order, rho, k, shift)?;
        if delta[0].hypot(delta[1]) < SHIFT_REFIT_TOLERANCE {
            break;
        }
    }
    Ok((shift, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::GridSpec;

    fn polynomial_image(coeffs: &[(usize, usize, C64)], grid: GridSpec, k: f64) -> FourierImage {
        let n = grid.n;
        let mut samples = vec![C64::new(0.0, 0.0); n * n];
        for row in 0..n {
            for col in 0..n {
                let xi = grid.point(row, col);
                let r2 = xi[0] * xi[0] + xi[1] * xi[1];
                let h: C64 = coeffs
                    .iter()
                    .map(|&(i, j, c)| c * xi[0].powi(i as i32) * xi[1].powi(j as i32))
                    .sum();
                samples[row * n + col] = h / (2.0 * (gamma3(r2, k) - k));
            }
        }
        FourierImage { grid, samples }
    }

    #[test]
    fn reproduces_a_cubic_exactly() {
        let k = 2.0;
        let grid = GridSpec { n: 128, xi_max: 0.4 };
        let coeffs = [
            (0, 0, C64::new(0.2, 0.0)),
            (1, 0, C64::new(0.0, -0.3)),
            (1, 1, C64::new(0.5, 0.1)),
            (0, 2, C64::new(-0.7, 0.0)),
            (3, 0, C64::new(0.0, 0.04)),
            (1, 2, C64::new(0.9, -0.2)),
        ];
        let img = polynomial_image(&coeffs, grid, k);
        let t = fit_coefficients(&img, 3, 0.1, k).unwrap();
        for &(i, j, c) in &coeffs {
            assert!((t.get(i, j) - c).norm() < 1e-10, "{i}{j}");
        }
        assert!((t.get(2, 1)).norm() < 1e-10);
    }

    #[test]
    fn fit_is_linear_in_the_image() {
        let k = 2.0;
        let grid = GridSpec { n: 64, xi_max: 0.4 };
        let img = polynomial_image(&[(2, 0, C64::new(1.0, 0.5)), (0, 0, C64::new(0.3, 0.0))], grid, k);
        let mut scaled = img.clone();
        for v in &mut scaled.samples {
            *v *= 3.5;
        }
        let a = fit_coefficients(&img, 2, 0.2, k).unwrap();
        let b = fit_coefficients(&scaled, 2, 0.2, k).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x * 3.5 - y).norm() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let grid = GridSpec { n: 16, xi_max: 0.4 };
        let img = polynomial_image(&[(0, 0, C64::new(1.0, 0.0))], grid, 2.0);
        assert!(matches!(
            fit_coefficients(&img, 3, 0.06, 2.0),
            Err(FitError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn zero_shift_is_identity() {
        let mut t = CoefficientTable2::exact(&TruncatedSeries2::one(3));
        t.values[idx2(2, 0)] = C64::new(0.4, 0.0);
        let (shift, out) = remove_translation(&t).unwrap();
        assert_eq!(shift, [0.0, 0.0]);
        assert_eq!(out, t);
    }

    #[test]
    fn degenerate_mass() {
        let t = CoefficientTable2::exact(&TruncatedSeries2::zeros(3));
        assert!(matches!(remove_translation(&t), Err(FitError::DegenerateMass(_))));
    }
}
