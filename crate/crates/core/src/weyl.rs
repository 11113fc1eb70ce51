//! Weyl remainders, their fitted decay, the parameter planner and bound
//! verification.

use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::models::FlowModel;
use crate::scalar::Real;
use crate::spectra;

/// One point of a remainder series: `N = leading·(1 + h·R_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylSeriesRow<T> {
    pub h: T,
    #[serde(rename = "N")]
    pub n: u64,
    pub leading: T,
    #[serde(rename = "R_h")]
    pub r_h: T,
}

impl<T: Real> WeylSeriesRow<T> {
    pub fn new(h: T, n: u64, leading: T) -> Result<Self> {
        if !(h > T::zero() && h < T::one()) {
            return Err(domain(format!("h must lie in (0, 1), got {h}")));
        }
        if !(leading > T::zero()) {
            return Err(domain(format!("leading term must be positive, got {leading}")));
        }
        let nf = T::from_u64(n).ok_or(LabError::Overflow)?;
        Ok(Self {
            h,
            n,
            leading,
            r_h: (nf / leading - T::one()) / h,
        })
    }
}

/// Remainder rows for exact counts `(h, N)` of a model.
pub fn remainder_series(model: &FlowModel, counts: &[(f64, u64)]) -> Result<Vec<WeylSeriesRow<f64>>> {
    let mut hs: Vec<f64> = counts.iter().map(|c| c.0).collect();
    hs.sort_by(f64::total_cmp);
    if hs.windows(2).any(|w| w[0] == w[1]) {
        return Err(domain("h values must be distinct"));
    }
    counts
        .iter()
        .map(|&(h, n)| WeylSeriesRow::new(h, n, spectra::weyl_leading(model, h)?))
        .collect()
}

/// Functional form of a remainder bound in `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BoundShape<T> {
    /// `h^exponent`.
    Power { exponent: T },
    /// `|ln h|⁻¹`.
    InverseLog,
}

impl<T: Real> BoundShape<T> {
    pub fn eval(&self, h: T) -> T {
        match *self {
            BoundShape::Power { exponent } => h.powf(exponent),
            BoundShape::InverseLog => T::one() / h.ln().abs(),
        }
    }
}

/// Regression variable for the remainder fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `ln|R_h| = ln C + e·ln h`.
    Power,
    /// `ln|R_h| = ln C + e·ln |ln h|⁻¹`.
    InverseLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit<T> {
    pub exponent: T,
    pub constant: T,
    /// Largest absolute residual in `ln|R_h|`.
    pub residual: T,
    pub rows_used: usize,
}

/// Least-squares decay exponent of `|R_h|`. Rows with `R_h = 0` are skipped.
pub fn remainder_exponent_fit<T: Real>(series: &[WeylSeriesRow<T>], mode: FitMode) -> Result<ExponentFit<T>> {
    let pts: Vec<(T, T)> = series
        .iter()
        .filter(|r| r.r_h != T::zero())
        .map(|r| {
            let x = match mode {
                FitMode::Power => r.h.ln(),
                FitMode::InverseLog => -(r.h.ln().abs().ln()),
            };
            (x, r.r_h.abs().ln())
        })
        .collect();
    if pts.len() < 8 {
        return Err(LabError::Insufficient(format!(
            "need at least 8 nonzero remainders, got {}",
            pts.len()
        )));
    }
    let (hmin, hmax) = series
        .iter()
        .fold((T::infinity(), T::zero()), |(a, b), r| (a.min(r.h), b.max(r.h)));
    if hmax / hmin < T::lit(100.0) {
        return Err(LabError::Insufficient(format!(
            "h spans {:.3} decades, need 2",
            (hmax / hmin).log10()
        )));
    }
    let (slope, intercept) = linear_fit(&pts)?;
    let residual = pts
        .iter()
        .map(|&(x, y)| (y - intercept - slope * x).abs())
        .fold(T::zero(), T::max);
    Ok(ExponentFit {
        exponent: slope,
        constant: intercept.exp(),
        residual,
        rows_used: pts.len(),
    })
}

/// Ordinary least squares `y = a·x + b`, returning `(a, b)`.
pub fn linear_fit<T: Real>(pts: &[(T, T)]) -> Result<(T, T)> {
    let n = T::from_count(pts.len());
    let (sx, sy) = pts.iter().fold((T::zero(), T::zero()), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pts.iter().fold((T::zero(), T::zero()), |(a, b), p| {
        let dx = p.0 - mx;
        (a + dx * dx, b + dx * (p.1 - my))
    });
    if !(sxx > T::zero()) {
        return Err(LabError::RankDeficient("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Model class of the planner, with its structural parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PlanClass<T> {
    Anosov { lambda_max: T, ell: T },
    LieGroup { p: u32 },
    Surfrev { r: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanResult<T> {
    #[serde(flatten)]
    pub class: PlanClass<T>,
    pub delta: T,
    pub eps: T,
    #[serde(rename = "T")]
    pub t: T,
    pub predicted_bound: T,
    /// Decay exponent of the bound in h; zero for the logarithmic case.
    pub exponent: T,
    /// Ehrenfest time, `None` when infinite.
    pub ehrenfest: Option<T>,
}

/// `|ln h|/(Λ_max + ℓ)`, or `None` (infinite) for polynomial growth.
pub fn ehrenfest_time<T: Real>(lambda_max: T, ell: T, h: T, polynomial: bool) -> Result<Option<T>> {
    if !(h > T::zero() && h < T::one()) {
        return Err(domain(format!("h must lie in (0, 1), got {h}")));
    }
    if !(ell > T::zero()) {
        return Err(domain(format!("ℓ must be positive, got {ell}")));
    }
    if polynomial {
        return Ok(None);
    }
    if !(lambda_max >= T::zero()) {
        return Err(domain(format!("Λ_max must be ≥ 0, got {lambda_max}")));
    }
    Ok(Some(h.ln().abs() / (lambda_max + ell)))
}

/// The scale `ε = h^δ`, time `T` and predicted remainder bound for a class.
///
/// `growth` supplies `(Λ_max, ℓ)` for non-Anosov classes whose flow grows
/// exponentially; `None` means polynomial growth (infinite Ehrenfest time).
/// The constant in `ε = c·h^δ` is taken as `c = 1`.
pub fn plan_parameters<T: Real>(class: PlanClass<T>, h: T, growth: Option<(T, T)>) -> Result<PlanResult<T>> {
    if !(h > T::zero() && h < T::one()) {
        return Err(domain(format!("h must lie in (0, 1), got {h}")));
    }
    let one = T::one();
    let lnh = h.ln().abs();
    let (delta, t, bound, exponent, te) = match class {
        PlanClass::Anosov { lambda_max, ell } => {
            let te = ehrenfest_time(lambda_max, ell, h, false)?.expect("finite");
            let quarter = T::lit(0.25);
            (
                quarter,
                quarter * te,
                T::lit(4.0) * (lambda_max + ell) / lnh,
                T::zero(),
                Some(te),
            )
        }
        PlanClass::LieGroup { p } => {
            if p < 1 {
                return Err(domain("rank p must be ≥ 1"));
            }
            let pf = T::from_u32(p).expect("small integer");
            let denom = T::lit(3.0) * pf + one;
            let delta = if p == 1 { T::zero() } else { (pf + one) / denom };
            let e = (pf - one) / denom;
            (delta, h.powf(-e), h.powf(e), e, cap_time(growth, h)?)
        }
        PlanClass::Surfrev { r } => {
            if r < 1 {
                return Err(domain("vanishing order r must be ≥ 1"));
            }
            let rf = T::from_u32(r).expect("small integer");
            let denom = T::lit(4.0) * rf - one;
            let e = one / denom;
            (
                (T::lit(2.0) * rf - one) / denom,
                h.powf(-e),
                h.powf(e),
                e,
                cap_time(growth, h)?,
            )
        }
    };
    if let Some(te) = te {
        let cap = (T::lit(0.5) - delta) * te;
        // Equality is feasible; allow for the rounding of both sides.
        if t > cap * (one + T::epsilon() * T::lit(16.0)) {
            return Err(LabError::PlanInfeasible {
                time: t.as_f64(),
                cap: cap.as_f64(),
            });
        }
    }
    Ok(PlanResult {
        class,
        delta,
        eps: h.powf(delta),
        t,
        predicted_bound: bound,
        exponent,
        ehrenfest: te,
    })
}

fn cap_time<T: Real>(growth: Option<(T, T)>, h: T) -> Result<Option<T>> {
    match growth {
        Some((lambda_max, ell)) => ehrenfest_time(lambda_max, ell, h, false),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub pass: bool,
    /// Constant calibrated at the largest h.
    pub constant: T,
    pub slack: T,
    /// Largest `|R_h| / (C·shape(h))`.
    pub worst_margin: T,
    pub worst_h: T,
    /// `(h, |R_h|, slack·C·shape(h), pass)` per row.
    pub rows: Vec<(T, T, T, bool)>,
}

/// Slack applied to calibrated bounds.
pub const BOUND_SLACK: f64 = 1.5;

/// Checks `|R_h| ≤ slack·C·shape(h)` on every row, with `C` calibrated at the
/// largest `h` of the series.
pub fn verify_bound<T: Real>(series: &[WeylSeriesRow<T>], shape: BoundShape<T>) -> Result<BoundReport<T>> {
    let anchor = series
        .iter()
        .max_by(|a, b| a.h.partial_cmp(&b.h).expect("finite h"))
        .ok_or_else(|| LabError::Insufficient("empty series".into()))?;
    let constant = anchor.r_h.abs() / shape.eval(anchor.h);
    verify_bound_with(series, shape, constant)
}

/// [`verify_bound`] with an explicit constant.
pub fn verify_bound_with<T: Real>(
    series: &[WeylSeriesRow<T>],
    shape: BoundShape<T>,
    constant: T,
) -> Result<BoundReport<T>> {
    if series.is_empty() {
        return Err(LabError::Insufficient("empty series".into()));
    }
    let slack = T::lit(BOUND_SLACK);
    let mut worst_margin = T::zero();
    let mut worst_h = series[0].h;
    let rows: Vec<(T, T, T, bool)> = series
        .iter()
        .map(|r| {
            let bound = constant * shape.eval(r.h);
            let abs = r.r_h.abs();
            let margin = if abs == T::zero() { T::zero() } else { abs / bound };
            if margin > worst_margin || margin.is_nan() {
                worst_margin = margin;
                worst_h = r.h;
            }
            (r.h, abs, slack * bound, abs <= slack * bound)
        })
        .collect();
    Ok(BoundReport {
        pass: rows.iter().all(|r| r.3),
        constant,
        slack,
        worst_margin,
        worst_h,
        rows,
    })
}

/// `count` geometric points from `start` to `stop` inclusive.
pub fn geometric_grid<T: Real>(start: T, stop: T, count: usize) -> Result<Vec<T>> {
    if count == 0 || !(start > T::zero() && stop > T::zero()) {
        return Err(domain("geometric grid needs positive endpoints and count ≥ 1"));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let ratio = (stop / start).ln() / T::from_count(count - 1);
    Ok((0..count)
        .map(|i| match i {
            0 => start,
            _ if i == count - 1 => stop,
            _ => start * (ratio * T::from_count(i)).exp(),
        })
        .collect())
}
