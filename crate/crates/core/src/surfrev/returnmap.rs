use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::RevolutionProfile;
use crate::error::{LabError, Result};
use crate::models::{PhaseState, SurfaceModel};
use crate::ode::Dopri5;

/// Equatorial return data for one initial heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapSample {
    pub alpha: f64,
    pub tau: f64,
    /// Rotation angle in `[0, 2π)`.
    pub theta: f64,
    pub clairaut: f64,
}

const RETURN_BUDGET: f64 = 1e3;
const TIME_TOL: f64 = 1e-10;

/// `ρ cos α`, read off a state as `x v_y − y v_x`.
pub fn clairaut_constant(model: &SurfaceModel, state: &PhaseState) -> f64 {
    model.clairaut(state)
}

/// First return of the geodesic leaving the equator at azimuth 0 with
/// heading `α` from the parallel.
pub fn first_return(model: &SurfaceModel, alpha: f64) -> Result<ReturnMapSample> {
    first_return_from(model, 0.0, alpha)
}

/// As [`first_return`], from the equatorial point at azimuth `phi0`.
pub fn first_return_from(model: &SurfaceModel, phi0: f64, alpha: f64) -> Result<ReturnMapSample> {
    if !(alpha > 0.0 && alpha < PI) {
        return Err(crate::error::domain(format!("heading α = {alpha} must lie in (0, π)")));
    }
    let profile = model.profile();
    let z0 = profile.z0();
    let s = model.state_at(z0, phi0, alpha);
    let mut y = [0.0; 6];
    y[..3].copy_from_slice(s.position());
    y[3..].copy_from_slice(s.momentum());
    let opts = Dopri5::new(1e-12, 1e-13).with_max_steps(2_000_000);
    let hit = opts.integrate_to_event(
        |_, y: &[f64; 6]| model.geodesic_rhs(y),
        0.0,
        y,
        RETURN_BUDGET,
        |_, y| y[2] - z0,
        TIME_TOL,
    )?;
    let (tau, y) = hit.ok_or(LabError::NoReturn { budget: RETURN_BUDGET })?;
    let theta = (y[1].atan2(y[0]) - phi0).rem_euclid(2.0 * PI);
    Ok(ReturnMapSample {
        alpha,
        tau,
        theta: if theta >= 2.0 * PI { 0.0 } else { theta },
        clairaut: model.clairaut(&s),
    })
}

/// Return map sampled on a uniform heading grid, with θ lifted to a
/// continuous function of α.
#[derive(Debug, Clone)]
pub struct ReturnMapTable {
    pub samples: Vec<ReturnMapSample>,
    pub theta_lift: Vec<f64>,
    pub step: f64,
}

impl ReturnMapTable {
    /// `n` headings evenly spaced on `[α_min, π − α_min]`.
    pub fn compute(model: &SurfaceModel, n: usize, alpha_min: f64) -> Result<Self> {
        if n < 2 || !(alpha_min > 0.0 && alpha_min < PI / 2.0) {
            return Err(crate::error::domain("return-map grid needs n ≥ 2 and 0 < α_min < π/2"));
        }
        let step = (PI - 2.0 * alpha_min) / (n - 1) as f64;
        let samples = (0..n)
            .into_par_iter()
            .map(|i| first_return(model, alpha_min + i as f64 * step))
            .collect::<Result<Vec<_>>>()?;
        let mut theta_lift = Vec::with_capacity(n);
        for s in &samples {
            let lifted = match theta_lift.last() {
                None => s.theta,
                Some(&prev) => prev + wrap_pi(s.theta - prev),
            };
            theta_lift.push(lifted);
        }
        Ok(Self {
            samples,
            theta_lift,
            step,
        })
    }

    pub fn tau_min(&self) -> f64 {
        self.samples.iter().map(|s| s.tau).fold(f64::INFINITY, f64::min)
    }

    pub fn tau_max(&self) -> f64 {
        self.samples.iter().map(|s| s.tau).fold(0.0, f64::max)
    }
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Outcome of [`vanishing_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct VanishingOrder {
    /// Largest order of vanishing of `θ − θ(α₀)` over the grid; 0 when
    /// degenerate.
    pub r: u32,
    /// Heading where `r` is attained (the first grid point when `r = 1`).
    pub worst_alpha: f64,
    /// θ is constant to tolerance, as on a Zoll surface.
    pub degenerate: bool,
}

/// Headings closer than this to the equator direction are excluded: there
/// `dθ/dα ∝ sin α` vanishes for every profile.
pub const ALPHA_MARGIN: f64 = 0.05;
const FIT_DEGREE: usize = 6;

/// Order of vanishing of the equatorial rotation map.
pub fn vanishing_order(model: &SurfaceModel, grid_size: usize) -> Result<VanishingOrder> {
    if grid_size < 1000 {
        return Err(crate::error::domain(
            "vanishing order needs a grid of at least 10³ headings",
        ));
    }
    let table = ReturnMapTable::compute(model, grid_size, ALPHA_MARGIN)?;
    vanishing_order_from(&table)
}

pub fn vanishing_order_from(table: &ReturnMapTable) -> Result<VanishingOrder> {
    let th = &table.theta_lift;
    let n = th.len();
    let h = table.step;
    let alpha = |i: usize| table.samples[i].alpha;
    let (lo, hi) = th
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // Noise level of the samples from the fourth difference: for smooth θ it
    // is O(h⁴); for independent errors of size σ its rms is √70·σ.
    let d4: Vec<f64> = (2..n - 2)
        .map(|i| th[i - 2] - 4.0 * th[i - 1] + 6.0 * th[i] - 4.0 * th[i + 1] + th[i + 2])
        .collect();
    let sigma = (d4.iter().map(|x| x * x).sum::<f64>() / d4.len() as f64 / 70.0).sqrt();
    let sigma = sigma.max(1e-13 * (1.0 + hi.abs()));
    if hi - lo < 1e3 * sigma.max(1e-9) {
        return Ok(VanishingOrder {
            r: 0,
            worst_alpha: alpha(0),
            degenerate: true,
        });
    }
    let deriv: Vec<f64> = (1..n - 1).map(|i| (th[i + 1] - th[i - 1]) / (2.0 * h)).collect();
    // Local truncation error of the central difference, h²|θ‴|/6, from
    // third differences.
    let d3: Vec<f64> = (1..n - 2)
        .map(|i| (th[i + 2] - 3.0 * th[i + 1] + 3.0 * th[i] - th[i - 1]).abs())
        .collect();
    let floor = |k: usize| {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(d3.len() - 1);
        let d3loc = d3[lo..=hi].iter().fold(0.0f64, |a, &b| a.max(b));
        10.0 * (sigma / h + d3loc / (6.0 * h))
    };

    // Zeros of θ′: sign changes, plus runs below the noise floor without a
    // sign change (even-order zeros of θ′). Indices refer to `th`.
    let mut flips: Vec<usize> = Vec::new();
    for k in 0..deriv.len() - 1 {
        if (deriv[k] > 0.0) != (deriv[k + 1] > 0.0) {
            flips.push(k + 1);
        }
    }
    for w in flips.windows(2) {
        if w[1] - w[0] < 4 {
            return Err(LabError::Resolution(format!(
                "zeros of θ′ near α = {:.6} and α = {:.6} are within 4 grid steps",
                alpha(w[0]),
                alpha(w[1])
            )));
        }
    }
    let mut centers = flips.clone();
    let mut k = 0;
    while k < deriv.len() {
        if deriv[k].abs() <= floor(k) {
            let start = k;
            while k < deriv.len() && deriv[k].abs() <= floor(k) {
                k += 1;
            }
            let (a, b) = (start + 1, k);
            if !flips.iter().any(|&f| f >= a && f <= b + 1) {
                centers.push((a + b) / 2);
            }
        } else {
            k += 1;
        }
    }
    let mut best = VanishingOrder {
        r: 1,
        worst_alpha: alpha(0),
        degenerate: false,
    };
    for &c in &centers {
        let (order, at) = local_order(table, c, sigma)?;
        if order > best.r {
            best.r = order;
            best.worst_alpha = at;
        }
    }
    Ok(best)
}

/// Fits θ near grid index `c` by a degree-6 polynomial, moves to the nearby
/// critical point and returns the lowest order of its nonzero Taylor terms.
fn local_order(table: &ReturnMapTable, c: usize, sigma: f64) -> Result<(u32, f64)> {
    let n = table.theta_lift.len();
    let half = (n / 40).clamp(12, 200);
    let a = c.saturating_sub(half);
    let b = (c + half).min(n - 1);
    if b - a < 2 * FIT_DEGREE {
        return Err(LabError::Resolution(
            "too few points near a zero of θ′ for a local fit".into(),
        ));
    }
    let center = table.samples[c].alpha;
    let width = table.step * half as f64;
    let xs: Vec<f64> = (a..=b).map(|i| (table.samples[i].alpha - center) / width).collect();
    let ys: Vec<f64> = (a..=b).map(|i| table.theta_lift[i]).collect();
    let coef = poly_fit(&xs, &ys, FIT_DEGREE)?;
    // Newton on p′ from x = 0 to the critical point.
    let mut x0 = 0.0;
    for _ in 0..50 {
        let d1 = poly_deriv_at(&coef, x0, 1);
        let d2 = poly_deriv_at(&coef, x0, 2);
        if d2 == 0.0 {
            break;
        }
        let step = d1 / d2;
        x0 -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    if !(x0.abs() <= 1.0) {
        x0 = 0.0;
    }
    // Taylor coefficients p⁽ᵏ⁾(x₀)/k! in the scaled variable.
    let taylor: Vec<f64> = (0..=FIT_DEGREE)
        .map(|k| poly_deriv_at(&coef, x0, k) / factorial(k))
        .collect();
    let scale: f64 = taylor[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = (10.0 * sigma).max(1e-3 * scale);
    let order = (1..=FIT_DEGREE).find(|&k| taylor[k].abs() > tol).unwrap_or(FIT_DEGREE) as u32;
    Ok((order, center + x0 * width))
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn poly_deriv_at(coef: &[f64], x: f64, k: usize) -> f64 {
    let mut acc = 0.0;
    for j in (k..coef.len()).rev() {
        let f: f64 = ((j - k + 1)..=j).map(|v| v as f64).product();
        acc = acc * x + f * coef[j];
    }
    acc
}

/// Least-squares polynomial coefficients (ascending powers).
pub(crate) fn poly_fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let m = DMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(LabError::RankDeficient("polynomial fit design matrix".into()));
    }
    let sol = svd
        .solve(&DVector::from_column_slice(ys), 0.0)
        .map_err(|e| LabError::RankDeficient(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// Number of returns per unit time is at most `1/τ_min`; this is the
/// default constant bounding the denominators in the rational approximation.
pub fn default_return_constant(table: &ReturnMapTable) -> f64 {
    1.0 / table.tau_min()
}

/// Measure of the headings whose normalized rotation `θ/2π` is within `ε/p`
/// of some `q/p` with `1 ≤ p ≤ C·T`, as a fraction of the whole section.
///
/// Headings are weighted by the invariant area `dc dφ` of the equatorial
/// section (`c = ρ_max cos α`), i.e. by `sin α dα / 2`. Uniform weight in α
/// would make the near-equatorial directions, where `dθ/dα → 0`, dominate
/// the small-ε behaviour.
///
/// θ is interpolated linearly between table nodes, which makes each cell
/// monotone; the preimages of all bands are merged and measured exactly.
pub fn rational_recurrence_measure(table: &ReturnMapTable, t: f64, eps: f64, c: f64) -> Result<f64> {
    if !(t > 0.0) || !(eps > 0.0) || !(c > 0.0) {
        return Err(crate::error::domain("T, ε and C must be positive"));
    }
    let pmax = (c * t).floor();
    if pmax < 1.0 {
        return Ok(0.0);
    }
    let pmax = pmax as i64;
    let nu: Vec<f64> = table.theta_lift.iter().map(|x| x / (2.0 * PI)).collect();
    let alphas: Vec<f64> = table.samples.iter().map(|s| s.alpha).collect();
    let n = nu.len();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    // Cells, plus constant extensions to the excluded margins at both ends.
    let mut cells: Vec<(f64, f64, f64, f64)> = (0..n - 1)
        .map(|i| (alphas[i], alphas[i + 1], nu[i], nu[i + 1]))
        .collect();
    cells.push((0.0, alphas[0], nu[0], nu[0]));
    cells.push((alphas[n - 1], PI, nu[n - 1], nu[n - 1]));
    for (a0, a1, v0, v1) in cells {
        let (vmin, vmax) = (v0.min(v1), v0.max(v1));
        for p in 1..=pmax {
            let pf = p as f64;
            let w = eps / pf;
            let qlo = ((vmin - w) * pf).ceil() as i64;
            let qhi = ((vmax + w) * pf).floor() as i64;
            for q in qlo..=qhi {
                let (lo, hi) = (q as f64 / pf - w, q as f64 / pf + w);
                if let Some(iv) = preimage(a0, a1, v0, v1, lo, hi) {
                    intervals.push(iv);
                }
            }
        }
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let weight = |a: f64, b: f64| (a.cos() - b.cos()) / 2.0;
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in intervals {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += weight(ca, cb);
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((a, b)) = cur {
        total += weight(a, b);
    }
    Ok(total.min(1.0))
}

/// Sub-interval of `[a0, a1]` where the linear interpolant from `v0` to `v1`
/// lies in `[lo, hi]`.
fn preimage(a0: f64, a1: f64, v0: f64, v1: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if a1 <= a0 {
        return None;
    }
    if v0 == v1 {
        return (v0 >= lo && v0 <= hi).then_some((a0, a1));
    }
    let at = |v: f64| a0 + (v - v0) / (v1 - v0) * (a1 - a0);
    let (x, y) = (at(lo), at(hi));
    let (s, e) = (x.min(y).max(a0), x.max(y).min(a1));
    (s < e).then_some((s, e))
}

/// Independent check on θ: `θ(c) = c ∫_{z₀}^{z₊} S/(ρ²√(ρ² − c²)) dz` with
/// `S = 2ρ√(1 + ρ′²)`, for `0 < c < ρ_max`; `z₊` is the upper turning point.
pub fn theta_quadrature(profile: &RevolutionProfile, c: f64) -> Result<f64> {
    if !(c > 0.0 && c < profile.rho_max()) {
        return Err(crate::error::domain("quadrature θ needs 0 < c < ρ_max"));
    }
    let z0 = profile.z0();
    let (_, top) = profile.domain();
    let (mut a, mut b) = (z0, top);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if profile.g(m)[0] > c * c {
            a = m;
        } else {
            b = m;
        }
    }
    let zp = 0.5 * (a + b);
    // With z = z₊ − 2L sin²(w/2), L = z₊ − z₀, and the divided difference
    // D = (ρ²(z) − ρ²(z₊))/(z − z₊), the integrand becomes
    // S/ρ² · cos(w/2) · √(2L/−D), smooth on [0, π/2].
    let len = zp - z0;
    let coeffs = profile.rho_squared_coeffs();
    let f = |w: f64| {
        let z = zp - 2.0 * len * (0.5 * w).sin().powi(2);
        let mut d = 0.0;
        for (k, &ck) in coeffs.iter().enumerate().skip(1) {
            let mut sum = 0.0;
            for j in 0..k {
                sum += z.powi(j as i32) * zp.powi((k - 1 - j) as i32);
            }
            d += ck * sum;
        }
        profile.s(z) / profile.g(z)[0] * (0.5 * w).cos() * (2.0 * len / -d).sqrt()
    };
    Ok(c * crate::quad::integrate(f, 0.0, PI / 2.0, 1e-13, 1e-13)?)
}
