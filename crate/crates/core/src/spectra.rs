//! Eigenvalue counting functions of the Laplacian on the model manifolds.
//!
//! Counts are of Laplace eigenvalues `≤ Λ`; the semiclassical count of
//! `h²Δ` on `[a, 1]` with `a < 0` is the same number at `Λ = 1/h²`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{domain, LabError, Result};
use crate::lattice::{count_integral, Lattice};
use crate::models::{FlowModel, ModelKind};
use crate::ode::Dopri5;
use crate::scalar::Real;
use crate::surfrev::RevolutionProfile;

/// Threshold of a count, given either as `Λ` or as `h` with `Λ = 1/h²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountQuery {
    Lambda(f64),
    H(f64),
}

impl CountQuery {
    pub fn lambda(self) -> Result<f64> {
        match self {
            CountQuery::Lambda(l) if l >= 0.0 && l.is_finite() => Ok(l),
            CountQuery::Lambda(l) => Err(domain(format!("Λ must be finite and ≥ 0, got {l}"))),
            CountQuery::H(h) => Ok(1.0 / check_h(h)?.powi(2)),
        }
    }

    pub fn h(self) -> Result<f64> {
        match self {
            CountQuery::H(h) => check_h(h),
            CountQuery::Lambda(l) if l > 1.0 && l.is_finite() => Ok(1.0 / l.sqrt()),
            CountQuery::Lambda(l) => Err(domain(format!("Λ = {l} has no h in (0, 1)"))),
        }
    }
}

fn check_h<T: Real>(h: T) -> Result<T> {
    if h > T::zero() && h < T::one() {
        Ok(h)
    } else {
        Err(domain(format!("h must lie in (0, 1), got {h}")))
    }
}

/// Number of torus eigenvalues `|k|² ≤ R²`, i.e. dual-lattice points in the
/// closed ball of radius `R`.
///
/// For bases `2π·M` with integer `M` the dual Gram matrix is `adj(MMᵀ)/det`
/// and the count is done in exact integer arithmetic.
pub fn torus_count(lattice: &Lattice, r: f64) -> Result<u64> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(domain(format!("radius must be finite and ≥ 0, got {r}")));
    }
    match lattice.dual_exact_gram() {
        Some((adj, det)) => {
            let bound = det as f64 * r * r;
            if bound >= 9.0e15 {
                return Err(LabError::Overflow);
            }
            // A radius given as √k squares to k only up to rounding; a few
            // ulps of slack keep such shells inside the ball.
            let b = (bound * (1.0 + 1e-14)).floor() as i64;
            count_integral(&adj, lattice.dim(), b)
        }
        None => lattice.dual().count_in_ball(r),
    }
}

/// Number of eigenvalues `k(k+2) ≤ Λ` of the round unit 3-sphere, each with
/// multiplicity `(k+1)²`.
pub fn sphere3_count(lambda: f64) -> Result<u64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(domain(format!("Λ must be finite and ≥ 0, got {lambda}")));
    }
    // k(k+2) ≤ Λ  ⇔  k ≤ √(Λ+1) − 1; fix the float guess exactly.
    let mut k = ((lambda + 1.0).sqrt() - 1.0).floor().max(0.0) as u128;
    while k > 0 && (k * (k + 2)) as f64 > lambda {
        k -= 1;
    }
    while ((k + 1) * (k + 3)) as f64 <= lambda {
        k += 1;
    }
    // Σ_{j=1}^{k+1} j² = (k+1)(k+2)(2k+3)/6.
    let total = (k + 1) * (k + 2) * (2 * k + 3) / 6;
    u64::try_from(total).map_err(|_| LabError::Overflow)
}

/// `(2πh)⁻ⁿ · |Bⁿ| · vol(X)`.
pub fn leading_term<T: Real>(n: usize, volume: T, h: T) -> Result<T> {
    let h = check_h(h)?;
    let nf = T::from_count(n);
    let half = T::lit(0.5);
    let ball = T::PI().powf(nf * half) / gamma_half_int(n + 2);
    Ok(ball * volume / (T::lit(2.0) * T::PI() * h).powi(n as i32))
}

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half_int<T: Real>(k: usize) -> T {
    let (mut acc, mut x) = if k.is_multiple_of(2) {
        (T::one(), T::one())
    } else {
        (T::PI().sqrt(), T::lit(0.5))
    };
    let target = T::from_count(k) * T::lit(0.5);
    while x < target {
        acc = acc * x;
        x = x + T::one();
    }
    acc
}

/// Dimension and Riemannian volume of the configuration manifold.
pub fn manifold_data(model: &FlowModel) -> Result<(usize, f64)> {
    match model.kind() {
        ModelKind::FlatTorus(t) => Ok((t.dim(), t.lattice().covolume())),
        ModelKind::Sphere3(_) => Ok((3, 2.0 * PI * PI)),
        ModelKind::SurfaceOfRevolution(s) => Ok((2, s.profile().area())),
        ModelKind::CatMapSuspension(_) => Err(domain("the suspension flow is not a geodesic flow")),
    }
}

/// Leading Weyl term of the count at `h`.
pub fn weyl_leading(model: &FlowModel, h: f64) -> Result<f64> {
    let (n, vol) = manifold_data(model)?;
    leading_term(n, vol, h)
}

/// Exact count for the model at the query threshold.
pub fn count(model: &FlowModel, query: CountQuery) -> Result<u64> {
    let lambda = query.lambda()?;
    match model.kind() {
        ModelKind::FlatTorus(t) => torus_count(t.lattice(), lambda.sqrt()),
        ModelKind::Sphere3(_) => sphere3_count(lambda),
        ModelKind::SurfaceOfRevolution(s) => surfrev_count(s.profile(), lambda),
        ModelKind::CatMapSuspension(_) => Err(domain("the suspension flow has no Laplace spectrum")),
    }
}

/// Distance from the poles at which the radial shooting starts and stops.
pub const POLE_OFFSET: f64 = 1e-6;
/// Phase slack under which an eigenvalue is counted as lying on the
/// threshold; well above the integration error of the phase (≲ 1e-6 at
/// Λ ~ 10⁴), well below the phase gap π between eigenvalues.
const PHASE_TIE: f64 = 1e-5;
const RADIAL_TOL: f64 = 1e-11;

/// Radial equation of the `m`-th Fourier mode,
/// `−(p f′)′ + q f = Λ w f` in the height `z`, with
/// `p = ρ/√(1+ρ′²) = 2ρ²/S`, `w = ρ√(1+ρ′²) = S/2` and
/// `q = m² w/ρ²`, where `S = √(4ρ² + (ρ²)′²)`.
#[derive(Debug, Clone)]
pub struct RadialProblem<'a> {
    profile: &'a RevolutionProfile,
    m: u32,
    tol: f64,
}

impl<'a> RadialProblem<'a> {
    pub fn new(profile: &'a RevolutionProfile, m: u32) -> Self {
        Self {
            profile,
            m,
            tol: RADIAL_TOL,
        }
    }

    /// Scales the integration tolerance (for stability checks).
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// `(p, q, w)` at `z`.
    pub fn coefficients(&self, z: f64) -> (f64, f64, f64) {
        let [g, g1, ..] = self.profile.g(z);
        let s = (4.0 * g + g1 * g1).sqrt();
        let m2 = (self.m as f64).powi(2);
        (2.0 * g / s, m2 * s / (2.0 * g), s / 2.0)
    }

    /// `p f′/f` at distance `d` from a pole for the solution bounded there,
    /// from the Frobenius expansion `f = d^μ (1 + c d)`, `μ = |m|/2`, in the
    /// distance `d` measured along z; sign as seen from the pole.
    fn pole_ratio(&self, pole: f64, outward: f64, lambda: f64, d: f64) -> f64 {
        // ρ²(pole + outward·d) = G₁ d + G₂ d² + …
        let [_, g1, g2, _] = self.profile.g(pole);
        let big_g1 = outward * g1;
        let big_g2 = g2 / 2.0;
        let m2 = (self.m as f64).powi(2);
        let mu = self.m as f64 / 2.0;
        // p = P₁d + P₂d², q·d = Q₀ + Q₁d, w = W₀ + …
        let p1 = 2.0;
        let p2 = -2.0 * (2.0 + big_g2) / big_g1;
        let q1 = m2 * (2.0 + big_g2) / (2.0 * big_g1);
        let w0 = big_g1 / 2.0;
        let c = (q1 - lambda * w0 - mu * (mu + 1.0) * p2) / (p1 * (2.0 * mu + 1.0));
        (p1 * mu + (p1 * c * (mu + 1.0) + p2 * mu) * d) / (1.0 + c * d)
    }

    /// Prüfer phase mismatch at the equator between the solutions bounded at
    /// the lower and at the upper pole: the `k`-th eigenvalue solves
    /// `D(Λ) = kπ`, and `D` increases with Λ.
    ///
    /// Each phase is integrated away from its pole, the direction in which
    /// the bounded solution dominates; shooting through to the far pole
    /// would chase the recessive solution there.
    fn phase_gap(&self, lambda: f64) -> Result<f64> {
        let (lo, hi) = self.profile.domain();
        let mid = self.profile.z0();
        let left = self.pole_ratio(lo, 1.0, lambda, POLE_OFFSET);
        let right = -self.pole_ratio(hi, -1.0, lambda, POLE_OFFSET);
        let opts = Dopri5::new(self.tol, self.tol);
        let rhs = |z: f64, y: &[f64; 1]| {
            let (p, q, w) = self.coefficients(z);
            let (s, c) = y[0].sin_cos();
            [c * c / p + (lambda * w - q) * s * s]
        };
        let [theta_l] = opts.integrate(rhs, lo + POLE_OFFSET, [1f64.atan2(left)], mid)?;
        let [theta_r] = opts.integrate(rhs, hi - POLE_OFFSET, [1f64.atan2(right)], mid)?;
        Ok(theta_l - theta_r)
    }

    /// Number of eigenvalues `≤ Λ`.
    pub fn count(&self, lambda: f64) -> Result<usize> {
        let n = ((self.phase_gap(lambda)? + PHASE_TIE) / PI).floor();
        Ok(if n < 0.0 { 0 } else { n as usize + 1 })
    }

    fn mismatch(&self, lambda: f64, k: usize) -> Result<f64> {
        Ok(self.phase_gap(lambda)? - k as f64 * PI)
    }
}

/// All eigenvalues `≤ Λ_max` of the radial problem, ascending, by Prüfer
/// shooting and bisection to relative tolerance `1e-8`.
pub fn radial_eigenvalues(problem: &RadialProblem, lambda_max: f64) -> Result<Vec<f64>> {
    if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
        return Err(domain(format!("Λ_max must be finite and ≥ 0, got {lambda_max}")));
    }
    let n = problem.count(lambda_max)?;
    let mut out = Vec::with_capacity(n);
    let mut lo_start = 0.0;
    for k in 0..n {
        let mut lo = lo_start;
        let mut hi = lambda_max;
        let f_lo = problem.mismatch(lo, k)?;
        if f_lo.abs() <= PHASE_TIE {
            out.push(lo);
            continue;
        }
        if f_lo > 0.0 || problem.mismatch(hi, k)? < -PHASE_TIE {
            return Err(LabError::Bracket {
                index: k,
                reason: format!("phase does not cross level {k} on [{lo}, {hi}]"),
            });
        }
        while hi - lo > 1e-8 * hi.max(1e-6) {
            let mid = 0.5 * (lo + hi);
            if problem.mismatch(mid, k)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        if out.last().is_some_and(|&prev| lambda <= prev) {
            return Err(LabError::Bracket {
                index: k,
                reason: format!("eigenvalue {lambda} does not exceed its predecessor"),
            });
        }
        out.push(lambda);
        lo_start = lambda;
    }
    Ok(out)
}

/// Angular cutoff: sectors with `|m| > ρ_max √Λ` have no eigenvalue `≤ Λ`.
pub fn angular_cutoff(profile: &RevolutionProfile, lambda: f64) -> u32 {
    (profile.rho_max() * lambda.sqrt()).ceil() as u32 + 2
}

/// Laplace eigenvalues `≤ Λ` of the surface, summed over Fourier modes.
pub fn surfrev_count(profile: &RevolutionProfile, lambda: f64) -> Result<u64> {
    surfrev_count_with(profile, lambda, RADIAL_TOL)
}

/// [`surfrev_count`] with an explicit integration tolerance.
pub fn surfrev_count_with(profile: &RevolutionProfile, lambda: f64, tol: f64) -> Result<u64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(domain(format!("Λ must be finite and ≥ 0, got {lambda}")));
    }
    let cutoff = angular_cutoff(profile, lambda);
    let per_m: Vec<Result<u64>> = (0..=cutoff)
        .into_par_iter()
        .map(|m| {
            let c = RadialProblem::new(profile, m).with_tolerance(tol).count(lambda)? as u64;
            Ok(if m == 0 { c } else { 2 * c })
        })
        .collect();
    let mut total = 0u64;
    for (m, r) in per_m.into_iter().enumerate() {
        let c = r.map_err(|e| LabError::Bracket {
            index: m,
            reason: format!("sector m = {m}: {e}"),
        })?;
        total = total.checked_add(c).ok_or(LabError::Overflow)?;
    }
    Ok(total)
}
