//! Numerical studies shared by the command line and the acceptance checks.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{compare, read_dataset, simulate, write_dataset, RunConfig};
use crate::geometry::{sample_rotations, RigidMotion, Rotation};
use crate::multi_index::{all3, idx3};
use crate::optics::{born_fourier, eval_h1, propagated_hat, ray_baseline, OpticsConfig, OpticsError};
use crate::phantom::Phantom;
use crate::real::{cabs, Dd, Real};
use crate::recovery::{recover, Mode};
use crate::series::{data_series, SeriesError};

type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub radius: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub order: usize,
    /// Least-squares slope of `log error` against `log |ξ|`.
    pub slope: f64,
    pub rows: Vec<ConvergenceRow>,
}

fn loglog_slope(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.radius.ln(), r.error.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `|h⁽¹⁾(ξ) − Σ_{|α|≤M} c_α ξ^α|` in double-double along a ray, for
/// `|ξ|` log-spaced over `[1e-3, 1e-1]·k`.
pub fn series_convergence(
    phantom: &Phantom,
    pose: &RigidMotion,
    optics: &OpticsConfig,
    order: usize,
    samples: usize,
) -> Result<ConvergenceStudy, SeriesError> {
    let taylor = phantom.taylor_of_hat::<Dd>(order);
    let series = data_series(&taylor, &pose.rotation, pose.translation, optics, order)?;
    let (dy, dx) = 0.7f64.sin_cos();
    let rows = (0..samples)
        .map(|p| {
            let t = p as f64 / (samples - 1) as f64;
            let radius = optics.k * 10f64.powf(-3.0 + 2.0 * t);
            let xi = [Dd::from(radius * dx), Dd::from(radius * dy)];
            let exact = eval_h1(xi, phantom, pose, optics).expect("inside the aperture");
            let error = cabs(exact - series.eval(xi)).to_f64();
            ConvergenceRow { radius, error }
        })
        .collect::<Vec<_>>();
    Ok(ConvergenceStudy {
        order,
        slope: loglog_slope(&rows),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatLimitRow {
    pub k: f64,
    /// `|2F[U(f)](ξ) − i f̂(ξ₁, ξ₂, 0)|`.
    pub distance: f64,
    /// Distance at the previous k divided by this one.
    pub ratio: Option<f64>,
}

/// Propagated-wave deviation from the projection at a fixed ξ for
/// `k = k₀, 2k₀, 4k₀, …`. The leading term is `O(1/k)` once
/// `k |∂₃f̂| ≫ |f̂|`; below that the `O(1/k²)` prefactor term dominates.
pub fn flat_limit_table(phantom: &Phantom, k0: f64, xi: [f64; 2], steps: usize) -> Result<Vec<FlatLimitRow>, OpticsError> {
    let mut rows: Vec<FlatLimitRow> = Vec::with_capacity(steps);
    for n in 0..steps {
        let k = k0 * 2f64.powi(n as i32);
        let u = propagated_hat(xi, phantom, k)?;
        let projection = phantom.fourier_hat([xi[0], xi[1], 0.0]);
        let distance = (u * 2.0 - C64::new(0.0, 1.0) * projection).norm();
        let ratio = rows.last().map(|r| r.distance / distance);
        rows.push(FlatLimitRow { k, distance, ratio });
    }
    Ok(rows)
}

/// The phantom moved by a seeded rotation and the shift `(0.1, −0.2, c₀)`,
/// so that its axial centroid sits at the focal offset.
pub fn flat_limit_object(phantom: &Phantom, c0: f64, seed: u64) -> Phantom {
    let r = sample_rotations(1, seed)[0];
    phantom.centered().transformed(&RigidMotion::new(r, [0.1, -0.2, c0]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandReport {
    /// Largest flat-model difference relative to the largest sample.
    pub flat_distance: f64,
    /// Curved-model `‖I(f) − I(O·f)‖ / ‖I(f)‖` on the ring `|ξ| = ring·k`.
    pub curved_distance: f64,
    pub rotations: usize,
    pub ring_points: usize,
}

/// Paired datasets of `f` and its mirror under conjugated rotations.
pub fn hand_demo(
    phantom: &Phantom,
    optics: &OpticsConfig,
    rotations: usize,
    seed: u64,
    ring: f64,
) -> Result<HandReport, OpticsError> {
    let mirror = phantom.mirror();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ring_points = 24;
    let (mut flat_diff, mut flat_scale) = (0.0f64, 0.0f64);
    let (mut curved_diff, mut curved_norm) = (0.0f64, 0.0f64);
    for r in sample_rotations(rotations, seed) {
        let shift = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), optics.c0];
        let pose = RigidMotion::new(r, shift);
        let pose_m = RigidMotion::new(r.mirror_conjugate(), shift);
        for p in 0..ring_points {
            let (s, c) = (std::f64::consts::TAU * p as f64 / ring_points as f64).sin_cos();
            for radius in [ring * optics.k, 0.3 * optics.k, 0.45 * optics.k] {
                let xi = [radius * c, radius * s];
                let a = ray_baseline(xi, phantom, &pose, optics)?;
                let b = ray_baseline(xi, &mirror, &pose_m, optics)?;
                flat_diff = flat_diff.max((a - b).norm());
                flat_scale = flat_scale.max(a.norm());
            }
            let xi = [ring * optics.k * c, ring * optics.k * s];
            let a: C64 = born_fourier(xi, phantom, &pose, optics)?;
            let b: C64 = born_fourier(xi, &mirror, &pose_m, optics)?;
            curved_diff += (a - b).norm_sqr();
            curved_norm += a.norm_sqr();
        }
    }
    Ok(HandReport {
        flat_distance: flat_diff / flat_scale.max(f64::MIN_POSITIVE),
        curved_distance: (curved_diff / curved_norm.max(f64::MIN_POSITIVE)).sqrt(),
        rotations,
        ring_points,
    })
}

/// `(offset, weight)` stencils for central differences of order 0–3.
fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(1, 0.5), (-1, -0.5)],
        2 => &[(1, 1.0), (0, -2.0), (-1, 1.0)],
        3 => &[(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)],
        _ => panic!("stencil order {order} unsupported"),
    }
}

/// Finite-difference derivatives `∂^α f̂(0)` for `|α| ≤ 3` against
/// `(−i)^{|α|} m_α`; returns the largest error normalized per order.
pub fn origin_derivative_check(phantom: &Phantom, h: f64) -> f64 {
    let moments = phantom.moments_analytic(3);
    let hd = Dd::from(h);
    let mut err = [0.0f64; 4];
    let mut scale = [0.0f64; 4];
    for (i, j, k) in all3(3) {
        let n = i + j + k;
        let mut acc = Complex::new(Dd::from(0.0), Dd::from(0.0));
        for &(a, wa) in stencil(i) {
            for &(b, wb) in stencil(j) {
                for &(c, wc) in stencil(k) {
                    let zeta = [hd * Dd::from(a as f64), hd * Dd::from(b as f64), hd * Dd::from(c as f64)];
                    let w = Dd::from(wa * wb * wc);
                    let v = phantom.fourier_hat(zeta);
                    acc = acc + Complex::new(v.re * w, v.im * w);
                }
            }
        }
        let denom = hd.powi_dd(n);
        let fd = Complex::new((acc.re / denom).to_f64(), (acc.im / denom).to_f64());
        let m = moments.values()[idx3(i, j, k)];
        let exact = C64::new(0.0, -1.0).powu(n as u32) * m;
        err[n] = err[n].max((fd - exact).norm());
        scale[n] = scale[n].max(m.abs());
    }
    (0..4).map(|n| err[n] / scale[n].max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

/// Largest `|F[(R,c)f](ζ) − e^{−ic·ζ} f̂(R⁻¹ζ)|` over random motions and
/// frequencies, the left side computed from the moved phantom.
pub fn rigid_motion_check(phantom: &Phantom, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotations: Vec<Rotation> = sample_rotations(trials, seed.wrapping_add(1));
    let mut worst = 0.0f64;
    for r in rotations {
        let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let zeta: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let motion = RigidMotion::new(r, c);
        let moved = phantom.transformed(&motion).fourier_hat(zeta);
        let phase = -(c[0] * zeta[0] + c[1] * zeta[1] + c[2] * zeta[2]);
        let direct = C64::from_polar(1.0, phase) * phantom.fourier_hat(r.inverse().apply(zeta));
        worst = worst.max((moved - direct).norm());
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn upper(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value <= limit, format!("{value:.3e} <= {limit:.1e}"))
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, err.to_string())
    }
}

/// A quick end-to-end pass over the core invariants on a small dataset.
pub fn selftest() -> Vec<Check> {
    let phantom = Phantom::reference();
    let optics = OpticsConfig::default();
    let pose = RigidMotion::new(sample_rotations(1, 3)[0], [0.3, -0.2, optics.c0]);
    let mut checks = vec![
        Check::upper("derivatives at the origin", origin_derivative_check(&phantom.transformed(&pose), 1e-4), 1e-6),
        Check::upper("rigid-motion transform", rigid_motion_check(&phantom, 64, 7), 1e-12),
    ];
    match series_convergence(&phantom, &pose, &optics, 4, 9) {
        Ok(s) => checks.push(Check::new("series truncation slope", s.slope >= 4.5, format!("{:.3} >= 4.5", s.slope))),
        Err(e) => checks.push(Check::failed("series truncation slope", e)),
    }
    match hand_demo(&phantom, &optics, 8, 1, 0.1) {
        Ok(h) => {
            checks.push(Check::upper("flat mirror distance", h.flat_distance, 1e-12));
            checks.push(Check::new(
                "curved mirror distance",
                h.curved_distance >= 1e-3,
                format!("{:.3e} >= 1.0e-3", h.curved_distance),
            ));
        }
        Err(e) => checks.push(Check::failed("mirror distances", e)),
    }
    let config = RunConfig {
        n_uniform: 64,
        n_family: 24,
        order: 4,
        ..RunConfig::default()
    };
    for mirror in [false, true] {
        let name = if mirror { "mirrored recovery" } else { "oracle recovery" };
        let cfg = RunConfig { mirror, ..config.clone() };
        let outcome = simulate(&cfg).map_err(|e| e.to_string()).and_then(|d| {
            recover(&d.records, &d.optics, cfg.order, Mode::Oracle, &cfg.tolerances)
                .map(|r| (compare(&d.truth, &r), r))
                .map_err(|e| e.to_string())
        });
        match outcome {
            Ok((c, r)) => {
                let passed = c.max_relative_error <= 1e-8 && c.hand_match && r.redundancy <= 1e-10;
                checks.push(Check::new(
                    name,
                    passed,
                    format!(
                        "error {:.3e}, redundancy {:.3e}, hand {:?}",
                        c.max_relative_error, r.redundancy, c.hand_recovered
                    ),
                ));
            }
            Err(e) => checks.push(Check::failed(name, e)),
        }
    }
    match (simulate(&config), simulate(&config)) {
        (Ok(a), Ok(b)) => checks.push(Check::new("determinism", a == b, "two simulations compared".into())),
        (Err(e), _) | (_, Err(e)) => checks.push(Check::failed("determinism", e)),
    }
    checks.push(round_trip_check(&config));
    checks
}

fn round_trip_check(config: &RunConfig) -> Check {
    let name = "dataset round trip";
    let dir = std::env::temp_dir().join(format!("ewald-selftest-{}", std::process::id()));
    let outcome = simulate(config).and_then(|d| {
        write_dataset(&dir, &d)?;
        let (_, records) = read_dataset(&dir)?;
        Ok(records == d.records)
    });
    let _ = std::fs::remove_dir_all(&dir);
    match outcome {
        Ok(same) => Check::new(name, same, "records re-read bit for bit".into()),
        Err(e) => Check::failed(name, e),
    }
}

trait PowDd {
    fn powi_dd(self, n: usize) -> Self;
}

impl PowDd for Dd {
    fn powi_dd(self, n: usize) -> Self {
        (0..n).fold(Dd::from(1.0), |acc, _| acc * self)
    }
}
