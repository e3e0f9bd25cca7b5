//! Moment recovery from pose-blinded data: translations, the extremal
//! rotation family, the hand, and every moment up to a requested order.

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetRecord;
use crate::geometry::{canonicalize, family_rotation, GeometryError, Sign};
use crate::moments::MomentTable;
use crate::momentfit::{remove_translation, remove_translation_image, CoefficientTable2, FitError};
use crate::multi_index::{all3, factorial, order2};
use crate::optics::OpticsConfig;
use crate::phantom::moments_from_taylor;
use crate::series::{data_series, SeriesError, TruncatedSeries3};

type C64 = Complex<f64>;

/// Oracle-mode tie tolerance for the extremes of the ξ₂² coefficient.
pub const SIGMA_TIE_RELATIVE: f64 = 1e-13;
/// Oracle-mode floor for family admission, relative to the largest |Re c₂₀|;
/// keeps family-only datasets, whose spread is pure roundoff, admissible.
pub const EXTREMAL_ROUNDOFF: f64 = 1e-12;
const NEWTON_STEPS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact Taylor tables of the data function.
    Oracle,
    /// Coefficients fitted from gridded Fourier images.
    Image,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "image" => Ok(Mode::Image),
            other => Err(format!("unknown mode '{other}' (expected oracle or image)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryTolerances {
    /// Oracle-mode family admission, relative to the spread of Re c₂₀.
    pub extremal_relative: f64,
    /// Image-mode family admission in fitted uncertainties.
    pub extremal_sigmas: f64,
    /// Allowed relative spread of c₀₀ across records.
    pub mass_consistency: f64,
    /// Oracle-mode floor for |Im c₃₀| relative to |c₀₀|.
    pub sign_relative: f64,
    /// Exclusion zone of the sine extraction, relative to its maximum.
    pub exclusion: f64,
    /// Largest accepted condition number of a trigonometric system.
    pub max_condition: f64,
    /// Image-path fitting radius as a fraction of k.
    pub fit_radius_fraction: f64,
}

impl Default for RecoveryTolerances {
    fn default() -> Self {
        Self {
            extremal_relative: 1e-6,
            extremal_sigmas: 3.0,
            mass_consistency: 1e-6,
            sign_relative: 1e-10,
            exclusion: 1e-3,
            max_condition: 1e8,
            fit_radius_fraction: 0.05,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("recovery order {0} is below 3")]
    OrderTooLow(usize),
    #[error("record {id}: coefficient table has order {have}, {need} required")]
    InsufficientOrder { id: usize, have: usize, need: usize },
    #[error("record {id} has no {what} payload")]
    MissingPayload { id: usize, what: &'static str },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("record {id}: {source}")]
    Fit { id: usize, source: FitError },
    #[error("zeroth-order coefficients disagree across records (relative spread {0:.3e})")]
    InconsistentMass(f64),
    #[error("no record lies within the extremal tolerance")]
    EmptyFamily,
    #[error("record {id}: sign of Im c30 is ambiguous ({value:.3e})")]
    AmbiguousSign { id: usize, value: f64 },
    #[error("incomplete coverage: {0}")]
    IncompleteCoverage(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("no family member within the threshold angle {epsilon:.4e}")]
    NoSmallTheta { epsilon: f64 },
    #[error("the rotation-dependent term B vanishes ({0:.3e})")]
    DegenerateB(f64),
    #[error("order {order}, j = {j}: condition number {condition:.3e} exceeds the limit")]
    IllConditionedSystem { order: usize, j: usize, condition: f64 },
    #[error("{have} family angles available, {need} required")]
    InsufficientAngles { have: usize, need: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{step}: {source}")]
    InStep {
        step: &'static str,
        source: Box<RecoveryError>,
    },
}

fn in_step<T>(step: &'static str, r: Result<T, RecoveryError>) -> Result<T, RecoveryError> {
    r.map_err(|e| RecoveryError::InStep {
        step,
        source: Box::new(e),
    })
}

/// A translation-removed record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredRecord {
    pub id: usize,
    pub shift: [f64; 2],
    pub table: CoefficientTable2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step2Output {
    pub records: Vec<CenteredRecord>,
    pub fhat0: f64,
    pub mass_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub id: usize,
    pub table: CoefficientTable2,
    pub s1: Sign,
    /// Distance of Re c₂₀ above the dataset minimum.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step3Output {
    /// Admitted members with `s1 = +1`.
    pub members: Vec<FamilyMember>,
    pub discarded_negative: usize,
    pub c_constant: f64,
    pub minimum: f64,
    pub tau: f64,
}

/// Diagonal order-2 Taylor coefficients (real).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrder {
    pub a200: f64,
    pub a020: f64,
    pub a002: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Magnitudes of the imaginary coefficients `a₂₁₀`, `a₂₀₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrder {
    pub a210_abs: f64,
    pub a201_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilon {
    /// Angle below which the cosine term of c₂₁ dominates.
    pub raw: f64,
    /// After removing the neighbourhood where the sine extraction degenerates.
    pub value: f64,
}

/// `ε = arctan[2Q|a₂₁₀| / (2Q|a₂₀₁| + (2/k)|a₀₀₂ − a₀₂₀|)]`, shrunk so that
/// `|2Q a₂₀₁ − (2i/k)(a₀₀₂ − a₀₂₀) cos θ|` stays above `exclusion` times its
/// maximum for `|cos θ| > cos ε`.
pub fn epsilon_threshold(third: ThirdOrder, gap: f64, optics: &OpticsConfig, exclusion: f64) -> Epsilon {
    let two_q = 2.0 * optics.q;
    let slope = 2.0 * gap.abs() / optics.k;
    let raw = (two_q * third.a210_abs / (two_q * third.a201_abs + slope)).atan();
    let peak = two_q * third.a201_abs + slope;
    if slope == 0.0 {
        return Epsilon { raw, value: raw };
    }
    let c_star = two_q * third.a201_abs / slope;
    let width = exclusion * peak / slope;
    let (lo, hi) = (c_star - width, c_star + width);
    let cos_raw = raw.cos();
    let value = if hi <= cos_raw || lo >= 1.0 {
        raw
    } else if hi < 1.0 {
        hi.acos()
    } else {
        0.0
    };
    Epsilon { raw, value }
}

/// The threshold implied by a canonical moment table.
pub fn epsilon_from_moments(moments: &MomentTable, optics: &OpticsConfig, exclusion: f64) -> Epsilon {
    let third = ThirdOrder {
        a210_abs: moments.get(2, 1, 0).abs() / 2.0,
        a201_abs: moments.get(2, 0, 1).abs() / 2.0,
    };
    let gap = (moments.get(0, 2, 0) - moments.get(0, 0, 2)) / 2.0;
    epsilon_threshold(third, gap, optics, exclusion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step6Output {
    pub epsilon: Epsilon,
    pub a201_sign: Sign,
    /// `(id, θ)` of members with `|θ| < ε` or `|θ − π| < ε`.
    pub angles: Vec<(usize, f64)>,
    /// Relative separation of the two sign hypotheses.
    pub sign_margin: f64,
    /// Largest `||A + B| − D|` for the chosen sign.
    pub magnitude_residual: f64,
    /// Largest `|sin²θ + cos²θ − 1|`.
    pub unit_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step7Output {
    pub taylor: TruncatedSeries3<f64>,
    /// Worst condition number per total order (index = order).
    pub conditions: Vec<f64>,
    /// Smallest singular value of any trigonometric system solved.
    pub min_singular_value: f64,
    /// Largest deviation of the step-7 order-2 block from the step-4 values.
    pub redundancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub order: usize,
    pub mode: Mode,
    /// Canonical-frame moments.
    pub moments: MomentTable,
    pub fhat0: f64,
    pub c_constant: f64,
    pub epsilon: Epsilon,
    pub conditions: Vec<f64>,
    pub min_singular_value: f64,
    pub redundancy: f64,
    /// Sign of the canonical `m₂₀₁`.
    pub hand: Sign,
    pub family_size: usize,
    pub small_angle_members: usize,
    pub shifts: Vec<(usize, [f64; 2])>,
    pub angles: Vec<(usize, f64)>,
    pub second_order: SecondOrder,
    pub third_order: ThirdOrder,
    pub sign_margin: f64,
    pub magnitude_residual: f64,
    /// Largest imaginary part left in `i^{|α|} α! a_α`, relative to its order scale.
    pub reality_residual: f64,
}

fn extremal_tau(mode: Mode, tol: &RecoveryTolerances, spread: f64, u_a: f64, u_b: f64) -> f64 {
    match mode {
        Mode::Oracle => tol.extremal_relative * spread,
        Mode::Image => tol.extremal_sigmas * u_a.hypot(u_b),
    }
}

/// Removes the in-plane shift of every record and checks that all
/// records share one zeroth-order coefficient.
pub fn step2_translations(
    records: &[DatasetRecord],
    optics: &OpticsConfig,
    order: usize,
    mode: Mode,
    tol: &RecoveryTolerances,
) -> Result<Step2Output, RecoveryError> {
    if records.is_empty() {
        return Err(RecoveryError::EmptyDataset);
    }
    let rho = tol.fit_radius_fraction * optics.k;
    let mut out: Vec<CenteredRecord> = records
        .par_iter()
        .map(|r| {
            let (shift, table) = match mode {
                Mode::Oracle => {
                    let t = r.coefficients.as_ref().ok_or(RecoveryError::MissingPayload {
                        id: r.id,
                        what: "coefficient",
                    })?;
                    if t.order < order {
                        return Err(RecoveryError::InsufficientOrder {
                            id: r.id,
                            have: t.order,
                            need: order,
                        });
                    }
                    remove_translation(&t.truncated(order))
                }
                Mode::Image => {
                    let img = r.image.as_ref().ok_or(RecoveryError::MissingPayload {
                        id: r.id,
                        what: "image",
                    })?;
                    remove_translation_image(img, order, rho, optics.k)
                }
            }
            .map_err(|source| RecoveryError::Fit { id: r.id, source })?;
            Ok(CenteredRecord {
                id: r.id,
                shift,
                table,
            })
        })
        .collect::<Result<_, _>>()?;
    out.sort_by_key(|r| r.id);
    let c00: Vec<f64> = out.iter().map(|r| r.table.get(0, 0).re).collect();
    let mean = stable_mean(&c00);
    let spread = c00.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean.abs();
    if !(spread <= tol.mass_consistency) {
        return Err(RecoveryError::InconsistentMass(spread));
    }
    Ok(Step2Output {
        records: out,
        fhat0: mean / (2.0 * optics.q),
        mass_spread: spread,
    })
}

/// `C = 2 f̂(0) Re(z i (a − c₀/2k)) = 2 f̂(0)(a − c₀/2k)`.
pub fn c_constant(fhat0: f64, optics: &OpticsConfig) -> f64 {
    let psi2 = optics.a() - optics.c0 / (2.0 * optics.k);
    (optics.z() * C64::new(0.0, psi2)).re * 2.0 * fhat0
}

/// Records whose Re c₂₀ is extremal, with `S₁` from the sign of Im c₃₀.
pub fn step3_select_family(
    records: &[CenteredRecord],
    optics: &OpticsConfig,
    fhat0: f64,
    mode: Mode,
    tol: &RecoveryTolerances,
) -> Result<Step3Output, RecoveryError> {
    let x: Vec<f64> = records.iter().map(|r| r.table.get(2, 0).re).collect();
    let (imin, &minimum) = x
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(RecoveryError::EmptyFamily)?;
    let maximum = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = maximum - minimum;
    let roundoff = EXTREMAL_ROUNDOFF * minimum.abs().max(maximum.abs());
    let u_min = records[imin].table.uncertainty(2, 0);
    let mut members = Vec::new();
    let mut discarded_negative = 0;
    let mut tau_used: f64 = 0.0;
    let c00 = records[imin].table.get(0, 0).norm();
    for (r, &xv) in records.iter().zip(&x) {
        let mut tau = extremal_tau(mode, tol, spread, r.table.uncertainty(2, 0), u_min);
        if mode == Mode::Oracle {
            tau = tau.max(roundoff);
        }
        if xv - minimum > tau {
            continue;
        }
        tau_used = tau_used.max(tau);
        let im30 = r.table.get(3, 0).im;
        let floor = match mode {
            Mode::Oracle => tol.sign_relative * c00,
            Mode::Image => tol.extremal_sigmas * r.table.uncertainty(3, 0),
        };
        if im30.abs() <= floor {
            return Err(RecoveryError::AmbiguousSign { id: r.id, value: im30 });
        }
        // Im c₃₀ = 2Q S₁ m₃₀₀/6 with m₃₀₀ > 0 in the canonical gauge
        let s1 = Sign::of(im30);
        if s1 == Sign::Minus {
            discarded_negative += 1;
            continue;
        }
        members.push(FamilyMember {
            id: r.id,
            table: r.table.clone(),
            s1,
            residual: xv - minimum,
        });
    }
    if members.is_empty() {
        return Err(RecoveryError::EmptyFamily);
    }
    Ok(Step3Output {
        members,
        discarded_negative,
        c_constant: c_constant(fhat0, optics),
        minimum,
        tau: tau_used,
    })
}

fn sigma_extremes(
    family: &[FamilyMember],
    mode: Mode,
    tol: &RecoveryTolerances,
) -> Result<(Vec<usize>, Vec<usize>, f64, f64), RecoveryError> {
    let sig: Vec<f64> = family.iter().map(|m| m.table.get(0, 2).re).collect();
    let (imin, &smin) = sig.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let (imax, &smax) = sig.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let spread = smax - smin;
    let resolution = match mode {
        Mode::Oracle => 1e-12 * smax.abs().max(smin.abs()),
        Mode::Image => {
            tol.extremal_sigmas * family[imin].table.uncertainty(0, 2).hypot(family[imax].table.uncertainty(0, 2))
        }
    };
    if !(spread > resolution) {
        return Err(RecoveryError::IncompleteCoverage(format!(
            "ξ₂² coefficient spread {spread:.3e} over {} members is unresolved",
            family.len()
        )));
    }
    // exact tables: only roundoff-level ties, since the ξ₁²ξ₂ coefficient
    // moves linearly in θ while σ moves quadratically
    let near = |target: f64, anchor: usize| -> Vec<usize> {
        (0..family.len())
            .filter(|&i| {
                let tau = match mode {
                    Mode::Oracle => SIGMA_TIE_RELATIVE * smax.abs().max(smin.abs()),
                    Mode::Image => extremal_tau(
                        mode,
                        tol,
                        spread,
                        family[i].table.uncertainty(0, 2),
                        family[anchor].table.uncertainty(0, 2),
                    ),
                };
                (sig[i] - target).abs() <= tau
            })
            .collect()
    };
    Ok((near(smin, imin), near(smax, imax), smin, smax))
}

/// Mean as an offset from the first value, exact for constant inputs.
fn stable_mean(values: &[f64]) -> f64 {
    let x0 = values[0];
    x0 + values.iter().map(|v| v - x0).sum::<f64>() / values.len() as f64
}

fn mean_of(family: &[FamilyMember], idx: &[usize], f: impl Fn(&FamilyMember) -> f64) -> f64 {
    let v: Vec<f64> = idx.iter().map(|&i| f(&family[i])).collect();
    stable_mean(&v)
}

/// `a₂₀₀` from the extremal ξ₁² value, `a₀₂₀` and `a₀₀₂` from the extremes
/// of the ξ₂² coefficient over the family.
pub fn step4_second_moments(
    step3: &Step3Output,
    optics: &OpticsConfig,
    mode: Mode,
    tol: &RecoveryTolerances,
) -> Result<SecondOrder, RecoveryError> {
    let family = &step3.members;
    let two_q = 2.0 * optics.q;
    let c = step3.c_constant;
    let all: Vec<usize> = (0..family.len()).collect();
    let x_mean = mean_of(family, &all, |m| m.table.get(2, 0).re);
    let (lo, hi, _, _) = sigma_extremes(family, mode, tol)?;
    let s_lo = mean_of(family, &lo, |m| m.table.get(0, 2).re);
    let s_hi = mean_of(family, &hi, |m| m.table.get(0, 2).re);
    let out = SecondOrder {
        a200: (x_mean - c) / two_q,
        a020: (s_lo - c) / two_q,
        a002: (s_hi - c) / two_q,
        sigma_min: s_lo,
        sigma_max: s_hi,
    };
    if !(out.a200 < out.a020 && out.a020 < out.a002) {
        return Err(RecoveryError::AssumptionViolated(format!(
            "second-order coefficients not ordered: a200={:.6e}, a020={:.6e}, a002={:.6e}",
            out.a200, out.a020, out.a002
        )));
    }
    Ok(out)
}

/// `|a₂₁₀|` and `|a₂₀₁|` from the ξ₁²ξ₂ coefficient at the two extremes of σ.
pub fn step5_third_moments(
    family: &[FamilyMember],
    optics: &OpticsConfig,
    mode: Mode,
    tol: &RecoveryTolerances,
) -> Result<ThirdOrder, RecoveryError> {
    let two_q = 2.0 * optics.q;
    let (lo, hi, _, _) = sigma_extremes(family, mode, tol)?;
    let third = ThirdOrder {
        a210_abs: mean_of(family, &lo, |m| m.table.get(2, 1).im.abs()) / two_q,
        a201_abs: mean_of(family, &hi, |m| m.table.get(2, 1).im.abs()) / two_q,
    };
    if third.a210_abs == 0.0 {
        return Err(RecoveryError::AssumptionViolated("a210 vanishes".into()));
    }
    Ok(third)
}

/// Hand and rotation angles of the members close to `θ = 0` or `θ = π`.
pub fn step6_resolve(
    family: &[FamilyMember],
    second: &SecondOrder,
    third: &ThirdOrder,
    optics: &OpticsConfig,
    tol: &RecoveryTolerances,
) -> Result<Step6Output, RecoveryError> {
    let two_q = 2.0 * optics.q;
    let k = optics.k;
    let gap = second.a002 - second.a020;
    let b_scale = 2.0 * gap / k;
    if !(b_scale.abs() > 1e-14 * two_q * third.a210_abs) {
        return Err(RecoveryError::DegenerateB(b_scale));
    }
    let epsilon = epsilon_threshold(*third, gap, optics, tol.exclusion);
    let cos_eps2 = epsilon.value.cos().powi(2);
    let a210 = C64::new(0.0, third.a210_abs);
    struct Candidate {
        id: usize,
        c: f64,
        s_abs: f64,
        rest: C64,
    }
    let mut cands = Vec::new();
    for m in family {
        let sigma = m.table.get(0, 2).re;
        let cos2 = ((sigma - second.sigma_max) / (second.sigma_min - second.sigma_max)).clamp(0.0, 1.0);
        if epsilon.value <= 0.0 || cos2 <= cos_eps2 {
            continue;
        }
        let h21 = m.table.get(2, 1);
        // branch of cos θ: inside the threshold the cosine term sets the sign of Im c₂₁
        let c = cos2.sqrt() * Sign::of(h21.im).value();
        cands.push(Candidate {
            id: m.id,
            c,
            s_abs: (1.0 - cos2).sqrt(),
            rest: h21 - a210 * (c * two_q),
        });
    }
    if cands.is_empty() {
        return Err(RecoveryError::NoSmallTheta {
            epsilon: epsilon.value,
        });
    }
    let a_mag = two_q * third.a201_abs;
    let b_of = |c: f64| C64::new(0.0, -b_scale * c);
    // D = |h₂₁ − cos θ (z+z̄) a₂₁₀| / |sin θ| must equal |A + B|
    let (mut r_plus, mut r_minus, mut used) = (0.0, 0.0, 0);
    for cd in &cands {
        if cd.s_abs < 1e-6 {
            continue;
        }
        let d = cd.rest.norm() / cd.s_abs;
        let b = b_of(cd.c);
        r_plus += ((C64::new(0.0, a_mag) + b).norm() - d).abs();
        r_minus += ((C64::new(0.0, -a_mag) + b).norm() - d).abs();
        used += 1;
    }
    if used == 0 {
        return Err(RecoveryError::NoSmallTheta {
            epsilon: epsilon.value,
        });
    }
    let a201_sign = if r_plus <= r_minus { Sign::Plus } else { Sign::Minus };
    let sign_margin = (r_plus - r_minus).abs() / r_plus.max(r_minus).max(f64::MIN_POSITIVE);
    let a = C64::new(0.0, a201_sign.value() * a_mag);
    let mut angles = Vec::with_capacity(cands.len());
    let (mut magnitude_residual, mut unit_residual) = (0.0f64, 0.0f64);
    for cd in &cands {
        let ab = a + b_of(cd.c);
        let s0 = cd.rest.im / ab.im;
        if cd.s_abs >= 1e-6 {
            magnitude_residual = magnitude_residual.max((ab.norm() - cd.rest.norm() / cd.s_abs).abs());
        }
        unit_residual = unit_residual.max((s0 * s0 + cd.c * cd.c - 1.0).abs());
        // cos θ from the ξ₂² coefficient carries the large constant C; polish
        // θ on Im c₂₁ = α cos θ + β sin θ − γ sin θ cos θ instead
        let y = family.iter().find(|m| m.id == cd.id).expect("member id").table.get(2, 1).im;
        let (alpha, beta, gamma) = (two_q * third.a210_abs, a.im, b_scale);
        let mut theta = s0.clamp(-1.0, 1.0).asin();
        if cd.c < 0.0 {
            theta = std::f64::consts::PI - theta;
        }
        for _ in 0..NEWTON_STEPS {
            let (s, c) = theta.sin_cos();
            let f = alpha * c + beta * s - gamma * s * c - y;
            let df = -alpha * s + beta * c - gamma * (c * c - s * s);
            let step = f / df;
            theta -= step;
            if !(step.abs() > 1e-17) {
                break;
            }
        }
        let (s, c) = theta.sin_cos();
        angles.push((cd.id, s.atan2(c)));
    }
    Ok(Step6Output {
        epsilon,
        a201_sign,
        angles,
        sign_margin,
        magnitude_residual,
        unit_residual,
    })
}

/// Order-by-order solution of the trigonometric systems
/// `Σ_k a_{i,k,j−k} cos^kθ sin^{j−k}θ = (c_ij − b_ij(θ)) / (z + z̄)`.
pub fn step7_all_moments(
    family: &[FamilyMember],
    angles: &[(usize, f64)],
    fhat0: f64,
    second: &SecondOrder,
    optics: &OpticsConfig,
    order: usize,
    tol: &RecoveryTolerances,
) -> Result<Step7Output, RecoveryError> {
    if angles.len() < order + 1 {
        return Err(RecoveryError::InsufficientAngles {
            have: angles.len(),
            need: order + 1,
        });
    }
    let two_q = 2.0 * optics.q;
    let members: Vec<(&FamilyMember, f64)> = angles
        .iter()
        .map(|&(id, th)| (family.iter().find(|m| m.id == id).expect("member id"), th))
        .collect();
    let mut working = TruncatedSeries3::<f64>::zeros(order);
    working.set(0, 0, 0, C64::new(fhat0, 0.0));
    let mut conditions = vec![1.0f64; order + 1];
    let mut min_singular = f64::INFINITY;
    let c0 = [0.0, 0.0, optics.c0];
    for m in 2..=order {
        // spill-over of the already known lower orders
        let spill: Vec<_> = members
            .par_iter()
            .map(|&(_, th)| data_series(&working, &family_rotation(Sign::Plus, th), c0, optics, m))
            .collect::<Result<_, _>>()?;
        for (i, j) in order2(m) {
            let rows = members.len();
            let mat = DMatrix::from_fn(rows, j + 1, |r, kk| {
                let (s, c) = members[r].1.sin_cos();
                c.powi(kk as i32) * s.powi((j - kk) as i32)
            });
            let rhs_re = DMatrix::from_fn(rows, 1, |r, _| {
                ((members[r].0.table.get(i, j) - spill[r].coeff(i, j)) / two_q).re
            });
            let rhs_im = DMatrix::from_fn(rows, 1, |r, _| {
                ((members[r].0.table.get(i, j) - spill[r].coeff(i, j)) / two_q).im
            });
            let sv = mat.clone().singular_values();
            let smax = sv.max();
            let smin = sv.min();
            let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            min_singular = min_singular.min(smin);
            if condition > tol.max_condition {
                return Err(RecoveryError::IllConditionedSystem { order: m, j, condition });
            }
            conditions[m] = conditions[m].max(condition);
            // solve with unit-norm columns
            let norms: Vec<f64> = (0..=j).map(|kk| mat.column(kk).norm()).collect();
            let mut scaled = mat;
            for (kk, n) in norms.iter().enumerate() {
                scaled.column_mut(kk).unscale_mut(*n);
            }
            let svd = scaled.svd(true, true);
            let xr = svd.solve(&rhs_re, 0.0).expect("svd with vectors");
            let xi = svd.solve(&rhs_im, 0.0).expect("svd with vectors");
            for kk in 0..=j {
                working.set(i, kk, j - kk, C64::new(xr[kk] / norms[kk], xi[kk] / norms[kk]));
            }
        }
    }
    let diag = [
        (working.coeff(2, 0, 0), second.a200),
        (working.coeff(0, 2, 0), second.a020),
        (working.coeff(0, 0, 2), second.a002),
        (working.coeff(1, 1, 0), 0.0),
        (working.coeff(1, 0, 1), 0.0),
        (working.coeff(0, 1, 1), 0.0),
    ];
    let redundancy = diag.iter().map(|(a, b)| (a - C64::new(*b, 0.0)).norm()).fold(0.0, f64::max);
    Ok(Step7Output {
        taylor: working,
        conditions,
        min_singular_value: min_singular,
        redundancy,
    })
}

/// Largest imaginary residue of `i^{|α|} α! a_α`, relative to the
/// per-order scale of the real parts.
fn reality_residual(taylor: &TruncatedSeries3<f64>) -> f64 {
    let order = taylor.order();
    let mut re = vec![0.0f64; order + 1];
    let mut im = vec![0.0f64; order + 1];
    for (i, j, k) in all3(order) {
        let n = i + j + k;
        let rot = match n % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        let v = rot * taylor.coeff(i, j, k) * (factorial(i) * factorial(j) * factorial(k));
        re[n] = re[n].max(v.re.abs());
        im[n] = im[n].max(v.im.abs());
    }
    (0..=order)
        .filter(|&n| re[n] > 0.0)
        .map(|n| im[n] / re[n])
        .fold(0.0, f64::max)
}

/// Steps 2 through 7 followed by canonicalization of the recovered table.
pub fn recover(
    records: &[DatasetRecord],
    optics: &OpticsConfig,
    order: usize,
    mode: Mode,
    tol: &RecoveryTolerances,
) -> Result<RecoveryResult, RecoveryError> {
    if order < 3 {
        return Err(RecoveryError::OrderTooLow(order));
    }
    let mut sorted: Vec<DatasetRecord> = records.to_vec();
    sorted.sort_by_key(|r| r.id);
    let s2 = in_step("step 2", step2_translations(&sorted, optics, order, mode, tol))?;
    let s3 = in_step("step 3", step3_select_family(&s2.records, optics, s2.fhat0, mode, tol))?;
    let second = in_step("step 4", step4_second_moments(&s3, optics, mode, tol))?;
    let third = in_step("step 5", step5_third_moments(&s3.members, optics, mode, tol))?;
    let s6 = in_step("step 6", step6_resolve(&s3.members, &second, &third, optics, tol))?;
    let s7 = in_step(
        "step 7",
        step7_all_moments(&s3.members, &s6.angles, s2.fhat0, &second, optics, order, tol),
    )?;
    let raw = moments_from_taylor(&s7.taylor);
    let (_, moments) = in_step("canonicalize", canonicalize(&raw).map_err(RecoveryError::from))?;
    Ok(RecoveryResult {
        order,
        mode,
        hand: Sign::of(moments.get(2, 0, 1)),
        moments,
        fhat0: s2.fhat0,
        c_constant: s3.c_constant,
        epsilon: s6.epsilon,
        conditions: s7.conditions,
        min_singular_value: s7.min_singular_value,
        redundancy: s7.redundancy,
        family_size: s3.members.len(),
        small_angle_members: s6.angles.len(),
        shifts: s2.records.iter().map(|r| (r.id, r.shift)).collect(),
        angles: s6.angles,
        second_order: second,
        third_order: third,
        sign_margin: s6.sign_margin,
        magnitude_residual: s6.magnitude_residual,
        reality_residual: reality_residual(&s7.taylor),
    })
}

/// Per-order error of `recovered` against `truth`. Each order is normalized
/// by the larger of its largest true `|m_α|` and `m₀₀₀ ℓⁿ` with
/// `ℓ = (m₂₀₀/m₀₀₀)^{1/2}`, so that orders whose moments vanish in the
/// canonical frame are measured on the natural scale.
pub fn per_order_relative_error(truth: &MomentTable, recovered: &MomentTable) -> Vec<f64> {
    let order = truth.max_order().min(recovered.max_order());
    let scales = truth.order_scales();
    let mass = truth.mass().abs();
    let length = if order >= 2 && mass > 0.0 {
        (truth.get(2, 0, 0).abs() / mass).sqrt()
    } else {
        0.0
    };
    let mut err = vec![0.0f64; order + 1];
    for (i, j, k) in all3(order) {
        let n = i + j + k;
        let scale = scales[n].max(mass * length.powi(n as i32)).max(f64::MIN_POSITIVE);
        let d = (truth.get(i, j, k) - recovered.get(i, j, k)).abs();
        err[n] = err[n].max(d / scale);
    }
    err
}
