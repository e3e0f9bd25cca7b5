//! Image formation: the Fourier-domain Born model through the diffraction
//! slice theorem, gridded images, the nonlinear intensity and the flat
//! (ray-transform) baseline.

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidMotion, Sign};
use crate::phantom::Phantom;
use crate::real::{cis, Real};

type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid optics configuration: {0}")]
    InvalidConfig(String),
    #[error("|ξ| = {radius} is outside the Ewald disc of radius k = {k}")]
    OutsideEwaldDisc { radius: f64, k: f64 },
    #[error("|ξ| = {radius} is outside the aperture of radius {aperture}")]
    OutsideAperture { radius: f64, aperture: f64 },
    #[error("pose axial offset {c3} differs from the configured c0 = {c0}")]
    AxialOffsetMismatch { c3: f64, c0: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// Wavenumber.
    pub k: f64,
    /// Defocus Δz.
    pub defocus: f64,
    /// Spherical aberration C_s.
    pub cs: f64,
    /// Amplitude contrast ratio.
    pub q: f64,
    /// Common axial offset of every pose.
    pub c0: f64,
    /// Aperture radius.
    pub aperture: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        let k = 2.0;
        Self {
            k,
            defocus: 1.0,
            cs: 2.0,
            q: 0.5,
            c0: 0.5,
            aperture: 0.5 * k,
        }
    }
}

impl OpticsConfig {
    pub fn validate(&self) -> Result<(), OpticsError> {
        let fields = [
            ("k", self.k),
            ("defocus", self.defocus),
            ("cs", self.cs),
            ("q", self.q),
            ("c0", self.c0),
            ("aperture", self.aperture),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(OpticsError::InvalidConfig(format!("{name} is not finite")));
        }
        for (name, v) in [("k", self.k), ("q", self.q), ("c0", self.c0), ("aperture", self.aperture)] {
            if v <= 0.0 {
                return Err(OpticsError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.aperture >= self.k {
            return Err(OpticsError::InvalidConfig(format!(
                "aperture {} must be smaller than k = {}",
                self.aperture, self.k
            )));
        }
        Ok(())
    }

    /// `Δz / 2k`.
    pub fn a(&self) -> f64 {
        self.defocus / (2.0 * self.k)
    }

    /// `−C_s / 4k³`.
    pub fn b(&self) -> f64 {
        -self.cs / (4.0 * self.k.powi(3))
    }

    /// `Q − i`.
    pub fn z(&self) -> C64 {
        Complex::new(self.q, -1.0)
    }

    /// `χ(ξ) = a|ξ|² + b|ξ|⁴` as a function of `|ξ|²`.
    pub fn chi<T: Real>(&self, r2: T) -> T {
        r2 * T::from_f64(self.a()) + r2 * r2 * T::from_f64(self.b())
    }

    /// Same optics at another wavenumber, with the aperture scaled along.
    pub fn with_k(&self, k: f64) -> Self {
        Self {
            k,
            aperture: self.aperture * k / self.k,
            ..*self
        }
    }

    fn check_pose(&self, pose: &RigidMotion) -> Result<(), OpticsError> {
        let c3 = pose.translation[2];
        if (c3 - self.c0).abs() > 1e-12 * self.c0.abs().max(1.0) {
            return Err(OpticsError::AxialOffsetMismatch { c3, c0: self.c0 });
        }
        Ok(())
    }

    fn check_aperture(&self, r2: f64) -> Result<(), OpticsError> {
        if r2 >= self.aperture * self.aperture {
            return Err(OpticsError::OutsideAperture {
                radius: r2.sqrt(),
                aperture: self.aperture,
            });
        }
        Ok(())
    }
}

fn radius2<T: Real>(xi: [T; 2]) -> T {
    xi[0] * xi[0] + xi[1] * xi[1]
}

/// `γ₃ = k − √(k² − |ξ|²)`, written as `|ξ|²/(k + √(k² − |ξ|²))` to avoid cancellation.
pub fn gamma3<T: Real>(r2: T, k: T) -> T {
    r2 / (k + (k * k - r2).sqrt())
}

/// `γ^±(ξ) = (ξ₁, ξ₂, ±γ₃(ξ))`.
pub fn lift<T: Real>(xi: [T; 2], k: T, hemisphere: Sign) -> Result<[T; 3], OpticsError> {
    let r2 = radius2(xi);
    if !(r2 < k * k) {
        return Err(OpticsError::OutsideEwaldDisc {
            radius: r2.to_f64().sqrt(),
            k: k.to_f64(),
        });
    }
    let g = gamma3(r2, k);
    let g = if hemisphere == Sign::Plus { g } else { -g };
    Ok([xi[0], xi[1], g])
}

/// `F[(R,c)·f](ζ) = e^{−ic·ζ} f̂(R⁻¹ζ)`, evaluated in `T`.
pub fn posed_hat<T: Real>(phantom: &Phantom, pose: &RigidMotion, zeta: [T; 3]) -> Complex<T> {
    let inv = pose.rotation.inverse().matrix();
    let rotated: [T; 3] = std::array::from_fn(|d| {
        T::from_f64(inv[d][0]) * zeta[0] + T::from_f64(inv[d][1]) * zeta[1] + T::from_f64(inv[d][2]) * zeta[2]
    });
    let c = pose.translation.map(T::from_f64);
    let phase = -(c[0] * zeta[0] + c[1] * zeta[1] + c[2] * zeta[2]);
    cis(phase) * phantom.fourier_hat(rotated)
}

/// `h⁽¹⁾(ξ) = z e^{iχ} F[(R,c)·f](γ⁺) + z̄ e^{−iχ} F[(R,c)·f](γ⁻) = 2(γ₃ − k) F[I](ξ)`.
pub fn eval_h1<T: Real>(
    xi: [T; 2],
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
) -> Result<Complex<T>, OpticsError> {
    optics.check_pose(pose)?;
    let r2 = radius2(xi);
    optics.check_aperture(r2.to_f64())?;
    let k = T::from_f64(optics.k);
    let chi = optics.chi(r2);
    let z = Complex::new(T::from_f64(optics.q), -T::one());
    let plus = posed_hat(phantom, pose, lift(xi, k, Sign::Plus)?);
    let minus = posed_hat(phantom, pose, lift(xi, k, Sign::Minus)?);
    Ok(z * cis(chi) * plus + z.conj() * cis(-chi) * minus)
}

/// `F[I((R,c)·f)](ξ)` inside the aperture.
pub fn born_fourier<T: Real>(
    xi: [T; 2],
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
) -> Result<Complex<T>, OpticsError> {
    let h = eval_h1(xi, phantom, pose, optics)?;
    let k = T::from_f64(optics.k);
    let denom = (gamma3(radius2(xi), k) - k) * T::from_f64(2.0);
    Ok(h / denom)
}

/// `F[U(f)](ξ) = (i/2) k/(k − γ₃) f̂(γ⁺(ξ))`.
pub fn propagated_hat<T: Real>(xi: [T; 2], phantom: &Phantom, k: T) -> Result<Complex<T>, OpticsError> {
    let lifted = lift(xi, k, Sign::Plus)?;
    let phi = k / (k - lifted[2]) * T::from_f64(0.5);
    Ok(phantom.fourier_hat(lifted) * Complex::new(T::zero(), phi))
}

/// Flat-Ewald prediction `−k⁻¹ (Q cos χ + sin χ) e^{−i(c₁,c₂)·ξ} f̂(R⁻¹(ξ₁, ξ₂, 0))`.
pub fn ray_baseline(
    xi: [f64; 2],
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
) -> Result<C64, OpticsError> {
    let r2 = radius2(xi);
    optics.check_aperture(r2)?;
    let chi = optics.chi(r2);
    let psf = optics.q * chi.cos() + chi.sin();
    let inv = pose.rotation.inverse();
    let c = pose.translation;
    let shift = cis(-(c[0] * xi[0] + c[1] * xi[1]));
    Ok(shift * phantom.fourier_hat(inv.apply([xi[0], xi[1], 0.0])) * (-psf / optics.k))
}

/// Square `N×N` grid `ξ_p = (p − N/2)Δ`, `Δ = 2ξ_max/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub xi_max: f64,
}

impl GridSpec {
    pub fn default_for(optics: &OpticsConfig) -> Self {
        Self {
            n: 512,
            xi_max: 0.2 * optics.k,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.xi_max / self.n as f64
    }

    pub fn coordinate(&self, p: usize) -> f64 {
        (p as f64 - (self.n / 2) as f64) * self.spacing()
    }

    /// `(ξ₁, ξ₂)` of the sample at `(row, col)`; columns run along ξ₁.
    pub fn point(&self, row: usize, col: usize) -> [f64; 2] {
        [self.coordinate(col), self.coordinate(row)]
    }

    pub fn validate(&self, optics: &OpticsConfig) -> Result<(), OpticsError> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(OpticsError::InvalidGrid(format!("N = {} must be even and ≥ 2", self.n)));
        }
        if !(self.xi_max > 0.0 && self.xi_max < optics.k.min(optics.aperture)) {
            return Err(OpticsError::InvalidGrid(format!(
                "ξ_max = {} must lie in (0, min(k, r))",
                self.xi_max
            )));
        }
        Ok(())
    }

    /// Real-space spacing of the inverse transform.
    pub fn real_spacing(&self) -> f64 {
        std::f64::consts::TAU / (self.n as f64 * self.spacing())
    }
}

/// Samples of `F[I]` on a [`GridSpec`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierImage {
    pub grid: GridSpec,
    pub samples: Vec<C64>,
}

impl FourierImage {
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.samples[row * self.grid.n + col]
    }

    /// Largest `|X(ξ) − conj X(−ξ)|` over pairs present on the grid,
    /// relative to the largest sample.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let scale = self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for row in 1..n {
            for col in 1..n {
                let d = self.get(row, col) - self.get(n - row, n - col).conj();
                worst = worst.max(d.norm());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }

    /// Inverse continuous transform approximated on the grid, after
    /// Hermitian symmetrization (the Nyquist row and column have no partner).
    pub fn inverse_transform(&self) -> RealImage {
        let n = self.grid.n;
        let mut sym = vec![C64::zero(); n * n];
        for row in 0..n {
            for col in 0..n {
                let mirror = self.get((n - row) % n, (n - col) % n).conj();
                sym[row * n + col] = (self.get(row, col) + mirror) * 0.5;
            }
        }
        let field = centered_inverse_fft(&sym, &self.grid);
        RealImage {
            n,
            spacing: self.grid.real_spacing(),
            values: field.iter().map(|v| v.re).collect(),
            imaginary_residual: field.iter().map(|v| v.im.abs()).fold(0.0, f64::max),
        }
    }
}

/// Real-space image on `x_n = (n − N/2)Δx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub n: usize,
    pub spacing: f64,
    pub values: Vec<f64>,
    /// Largest discarded imaginary part.
    pub imaginary_residual: f64,
}

fn map_grid(
    grid: &GridSpec,
    optics: &OpticsConfig,
    f: impl Fn([f64; 2]) -> Result<C64, OpticsError> + Sync,
) -> Result<Vec<C64>, OpticsError> {
    grid.validate(optics)?;
    let n = grid.n;
    let r2max = optics.aperture * optics.aperture;
    let rows: Result<Vec<Vec<C64>>, OpticsError> = (0..n)
        .into_par_iter()
        .map(|row| {
            (0..n)
                .map(|col| {
                    let xi = grid.point(row, col);
                    if radius2(xi) >= r2max {
                        Ok(C64::zero())
                    } else {
                        f(xi)
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows?.concat())
}

/// Gridded Born image `F[I] = h⁽¹⁾ / 2(γ₃ − k)`; zero outside the aperture.
pub fn fourier_image(
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
    grid: &GridSpec,
) -> Result<FourierImage, OpticsError> {
    optics.check_pose(pose)?;
    let samples = map_grid(grid, optics, |xi| born_fourier(xi, phantom, pose, optics))?;
    Ok(FourierImage { grid: *grid, samples })
}

/// Gridded flat-Ewald baseline.
pub fn ray_image(
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
    grid: &GridSpec,
) -> Result<FourierImage, OpticsError> {
    let samples = map_grid(grid, optics, |xi| ray_baseline(xi, phantom, pose, optics))?;
    Ok(FourierImage { grid: *grid, samples })
}

/// `|h ∗ {1 + k⁻¹U((1+iQ) s·(R,c)·f)}|²` on the real-space grid. The DC
/// impulse passes the aperture with phase `χ(0) = 0` and is added as the
/// constant 1 after the transform.
pub fn nonlinear_intensity(
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
    grid: &GridSpec,
    scale: f64,
) -> Result<NonlinearImages, OpticsError> {
    optics.check_pose(pose)?;
    let posed = phantom.transformed(pose).scaled(scale);
    let k = optics.k;
    let contrast = Complex::new(1.0, optics.q);
    let spectrum = map_grid(grid, optics, |xi| {
        let u = propagated_hat(xi, &posed, k)?;
        Ok(cis(optics.chi(radius2(xi))) * contrast * u / k)
    })?;
    let wave = centered_inverse_fft(&spectrum, grid);
    let nonlinear = wave.iter().map(|w| (C64::new(1.0, 0.0) + w).norm_sqr()).collect();
    let linear = wave.iter().map(|w| 1.0 + 2.0 * w.re).collect();
    Ok(NonlinearImages {
        n: grid.n,
        spacing: grid.real_spacing(),
        nonlinear,
        linear,
    })
}

/// Nonlinear intensity and its linearization `1 + I₀` on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearImages {
    pub n: usize,
    pub spacing: f64,
    pub nonlinear: Vec<f64>,
    pub linear: Vec<f64>,
}

/// `y(x) = (2π)⁻² Σ X(ξ) e^{iξ·x} Δ²` for centered grids in both domains.
fn centered_inverse_fft(samples: &[C64], grid: &GridSpec) -> Vec<C64> {
    let n = grid.n;
    let half = n / 2;
    let mut buf = vec![C64::zero(); n * n];
    // ifftshift: frequency index p − N/2 to slot (p + N/2) mod N
    for row in 0..n {
        for col in 0..n {
            buf[((row + half) % n) * n + (col + half) % n] = samples[row * n + col];
        }
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    for chunk in buf.chunks_mut(n) {
        fft.process(chunk);
    }
    let mut t = transpose(&buf, n);
    for chunk in t.chunks_mut(n) {
        fft.process(chunk);
    }
    let buf = transpose(&t, n);
    let norm = grid.spacing().powi(2) / (std::f64::consts::TAU * std::f64::consts::TAU);
    let mut out = vec![C64::zero(); n * n];
    for row in 0..n {
        for col in 0..n {
            out[row * n + col] = buf[((row + half) % n) * n + (col + half) % n] * norm;
        }
    }
    out
}

fn transpose(a: &[C64], n: usize) -> Vec<C64> {
    let mut t = vec![C64::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = a[r * n + c];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{family_rotation, sample_rotations, Rotation};
    use crate::real::Dd;
    use proptest::prelude::*;

    fn pose(rotation: Rotation, shift: [f64; 2], optics: &OpticsConfig) -> RigidMotion {
        RigidMotion::new(rotation, [shift[0], shift[1], optics.c0])
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift([0.0, 0.0], 1.0, Sign::Plus).unwrap(), [0.0, 0.0, 0.0]);
        let g = lift([0.6, 0.0], 1.0, Sign::Plus).unwrap();
        assert!((g[2] - 0.2).abs() < 1e-15);
        assert!(matches!(
            lift([1.0, 0.0], 1.0, Sign::Plus),
            Err(OpticsError::OutsideEwaldDisc { .. })
        ));
    }

    proptest! {
        #[test]
        fn lift_lies_on_the_ewald_sphere(r in 0.0f64..0.999, t in 0.0f64..6.3, k in 0.5f64..20.0) {
            let xi = [r * k * t.cos(), r * k * t.sin()];
            let p = lift(xi, k, Sign::Plus).unwrap();
            let m = lift(xi, k, Sign::Minus).unwrap();
            let s = p[0] * p[0] + p[1] * p[1] + (p[2] - k).powi(2);
            prop_assert!((s - k * k).abs() < 1e-12 * k * k);
            let s = m[0] * m[0] + m[1] * m[1] + (m[2] + k).powi(2);
            prop_assert!((s - k * k).abs() < 1e-12 * k * k);
        }
    }

    #[test]
    fn dc_values() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let r = sample_rotations(1, 5)[0];
        let g = pose(r, [0.2, -0.1], &optics);
        let h = eval_h1([0.0, 0.0], &p, &g, &optics).unwrap();
        assert!((h - C64::new(2.0 * optics.q * p.mass(), 0.0)).norm() < 1e-14);
        let f = born_fourier([0.0, 0.0], &p, &g, &optics).unwrap();
        assert!((f.re + optics.q * p.mass() / optics.k).abs() < 1e-15);
        let ray = ray_baseline([0.0, 0.0], &p, &g, &optics).unwrap();
        assert!((ray - f).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let bad_pose = RigidMotion::new(Rotation::identity(), [0.0, 0.0, 0.0]);
        assert!(matches!(
            eval_h1([0.1, 0.0], &p, &bad_pose, &optics),
            Err(OpticsError::AxialOffsetMismatch { .. })
        ));
        let g = pose(Rotation::identity(), [0.0, 0.0], &optics);
        assert!(matches!(
            eval_h1([optics.aperture, 0.0], &p, &g, &optics),
            Err(OpticsError::OutsideAperture { .. })
        ));
        let mut o = optics;
        o.aperture = o.k;
        assert!(o.validate().is_err());
        assert!(optics.validate().is_ok());
    }

    #[test]
    fn omega_form_of_the_born_model() {
        // F[I] = ω₂ F[(R,c)f](γ⁺) + conj(ω₂) F[(R,c)f](γ⁻), ω₂ = (Q−i)e^{iχ}/(2(γ₃−k))
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let g = pose(sample_rotations(1, 8)[0], [0.1, 0.3], &optics);
        for xi in [[0.05, 0.0], [0.3, -0.4], [-0.6, 0.2]] {
            let r2 = radius2(xi);
            let g3 = gamma3(r2, optics.k);
            let omega = optics.z() * cis(optics.chi(r2)) / (2.0 * (g3 - optics.k));
            let plus = posed_hat(&p, &g, lift(xi, optics.k, Sign::Plus).unwrap());
            let minus = posed_hat(&p, &g, lift(xi, optics.k, Sign::Minus).unwrap());
            let expected = omega * plus + omega.conj() * minus;
            let got = born_fourier(xi, &p, &g, &optics).unwrap();
            assert!((got - expected).norm() < 1e-12 * expected.norm().max(1e-3));
        }
    }

    #[test]
    fn in_plane_shift_is_a_phase() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let r = sample_rotations(1, 9)[0];
        let t = [0.37, -0.21];
        let xi = [0.3, 0.2];
        let base = eval_h1(xi, &p, &pose(r, [0.0, 0.0], &optics), &optics).unwrap();
        let moved = eval_h1(xi, &p, &pose(r, t, &optics), &optics).unwrap();
        let expected = base * cis(-(t[0] * xi[0] + t[1] * xi[1]));
        assert!((moved - expected).norm() < 1e-14);
    }

    #[test]
    fn ray_baseline_is_blind_to_the_mirror() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let pm = p.mirror();
        for r in sample_rotations(20, 4) {
            let g = pose(r, [0.1, 0.2], &optics);
            let gm = pose(r.mirror_conjugate(), [0.1, 0.2], &optics);
            for xi in [[0.1, 0.05], [-0.4, 0.3]] {
                let a = ray_baseline(xi, &p, &g, &optics).unwrap();
                let b = ray_baseline(xi, &pm, &gm, &optics).unwrap();
                assert!((a - b).norm() <= 1e-15 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn curved_model_sees_the_mirror() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let pm = p.mirror();
        let xi = [0.5 * optics.k * 0.99, 0.0];
        let mut worst = 0.0f64;
        for r in sample_rotations(50, 12) {
            let g = pose(r, [0.0, 0.0], &optics);
            let gm = pose(r.mirror_conjugate(), [0.0, 0.0], &optics);
            let a = eval_h1(xi, &p, &g, &optics).unwrap();
            let b = eval_h1(xi, &pm, &gm, &optics).unwrap();
            worst = worst.max((a - b).norm() / a.norm());
        }
        assert!(worst > 1e-3, "{worst}");
    }

    #[test]
    fn classical_limit_difference_shrinks_like_one_over_k() {
        let base = OpticsConfig::default();
        let p = Phantom::reference();
        let r = sample_rotations(1, 2)[0];
        let xi = [0.3, 0.2];
        let gap = |k: f64| {
            let o = base.with_k(k);
            let g = pose(r, [0.0, 0.0], &o);
            let born = born_fourier(xi, &p, &g, &o).unwrap();
            let ray = ray_baseline(xi, &p, &g, &o).unwrap();
            (born - ray).norm() / ray.norm()
        };
        let (d1, d10) = (gap(20.0), gap(200.0));
        let ratio = d1 / d10;
        assert!((ratio / 10.0 - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn double_double_path_agrees_with_f64() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let g = pose(family_rotation(Sign::Plus, 0.4), [0.1, 0.0], &optics);
        let xi = [0.21, -0.13];
        let a = eval_h1(xi, &p, &g, &optics).unwrap();
        let b = eval_h1(xi.map(Dd::from_f64), &p, &g, &optics).unwrap();
        assert!((a.re - b.re.to_f64()).abs() < 1e-14 && (a.im - b.im.to_f64()).abs() < 1e-14);
    }

    #[test]
    fn grid_image_is_hermitian_and_real() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let g = pose(sample_rotations(1, 21)[0], [0.2, -0.1], &optics);
        let grid = GridSpec { n: 64, xi_max: 0.2 * optics.k };
        let img = fourier_image(&p, &g, &optics, &grid).unwrap();
        assert!(img.hermitian_defect() < 1e-10);
        let dc = img.get(32, 32);
        assert!((dc.re + optics.q * p.mass() / optics.k).abs() < 1e-15);
        let real = img.inverse_transform();
        let scale = real.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(real.imaginary_residual <= 1e-9 * scale);
    }

    #[test]
    fn nonlinear_zero_phantom_is_flat() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let g = pose(Rotation::identity(), [0.0, 0.0], &optics);
        let grid = GridSpec { n: 32, xi_max: 0.2 * optics.k };
        let out = nonlinear_intensity(&p, &g, &optics, &grid, 0.0).unwrap();
        assert!(out.nonlinear.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn nonlinear_residual_is_quadratic_in_scale() {
        let optics = OpticsConfig::default();
        let p = Phantom::reference();
        let g = pose(sample_rotations(1, 1)[0], [0.0, 0.0], &optics);
        let grid = GridSpec { n: 64, xi_max: 0.2 * optics.k };
        let residual = |s: f64| {
            let out = nonlinear_intensity(&p, &g, &optics, &grid, s).unwrap();
            out.nonlinear
                .iter()
                .zip(&out.linear)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let scales = [1e-3f64, 1e-2, 1e-1];
        let logs: Vec<(f64, f64)> = scales.iter().map(|&s| (s.ln(), residual(s).ln())).collect();
        let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
        assert!((slope - 2.0).abs() < 0.1, "{slope}");
    }
}
