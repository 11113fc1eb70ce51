//! Recurrence sets `S_{T,ε}`: membership scans, Monte-Carlo volumes and
//! scaling-law fits.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::models::{FlowModel, PhaseState, WindowPlan};

/// Golden-section time tolerance for refining a distance minimum.
pub const REFINE_TOL: f64 = 1e-9;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Parameters of a recurrence set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSpec {
    #[serde(rename = "T")]
    pub t: f64,
    pub eps: f64,
    /// Scan start, `T₀/2` by default.
    pub t_min: f64,
    /// Radius factor `K` of the extended-set surrogate `S_{T,Kε}`.
    pub surrogate_factor: f64,
    /// Lipschitz bound `L` entering the scan step `Δt = ε/(2vL)`.
    pub lipschitz: f64,
}

impl RecurrenceSpec {
    /// `t_min = T₀/2`, `K = 2`, `L = 1`.
    pub fn new(model: &FlowModel, t: f64, eps: f64) -> Self {
        Self {
            t,
            eps,
            t_min: model.shortest_period() / 2.0,
            surrogate_factor: 2.0,
            lipschitz: 1.0,
        }
    }

    pub fn with_surrogate_factor(mut self, k: f64) -> Self {
        self.surrogate_factor = k;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(LabError::Invalid {
                what: "recurrence spec",
                reason: what.to_string(),
            })
        };
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(&format!("ε must be positive, got {}", self.eps));
        }
        if !(self.t_min >= 0.0 && self.t.is_finite()) {
            return bad("times must be finite and t_min ≥ 0");
        }
        if !(self.t > self.t_min) {
            return bad(&format!("empty scan window: T = {} ≤ t_min = {}", self.t, self.t_min));
        }
        if !(self.surrogate_factor >= 1.0) {
            return bad(&format!("surrogate factor must be ≥ 1, got {}", self.surrogate_factor));
        }
        if !(self.lipschitz >= 1.0 && self.lipschitz.is_finite()) {
            return bad(&format!("Lipschitz bound must be ≥ 1, got {}", self.lipschitz));
        }
        Ok(())
    }

    /// Time step of the scan.
    pub fn step(&self, model: &FlowModel) -> f64 {
        self.eps / (2.0 * model.speed_bound() * self.lipschitz)
    }
}

/// Evaluates `t ↦ d(flow(s, t), s)` on a window, reusing integration for
/// models without a closed-form flow.
struct Orbit<'a> {
    model: &'a FlowModel,
    start: PhaseState,
    base: crate::models::Prepared,
}

impl<'a> Orbit<'a> {
    fn new(model: &'a FlowModel, s: &PhaseState) -> Self {
        Self {
            model,
            start: *s,
            base: model.prepare(s),
        }
    }

    fn dist_of(&self, st: &PhaseState) -> f64 {
        self.model.prepared_distance(&self.model.prepare(st), &self.base)
    }

    fn state(&self, from: (f64, &PhaseState), t: f64) -> Result<PhaseState> {
        if self.model.is_closed_form() {
            self.model.flow(&self.start, t)
        } else {
            self.model.flow(from.1, t - from.0)
        }
    }

    /// Golden-section minimum of the distance on `[a, b]` given the state at `a`.
    fn refine(&self, a: f64, sa: &PhaseState, b: f64) -> Result<(f64, f64)> {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (a, b);
        let mut s_lo = *sa;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut s1 = self.state((lo, &s_lo), x1)?;
        let mut f1 = self.dist_of(&s1);
        let mut f2 = self.dist_of(&self.state((x1, &s1), x2)?);
        while hi - lo > REFINE_TOL {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                s1 = self.state((lo, &s_lo), x1)?;
                f1 = self.dist_of(&s1);
            } else {
                lo = x1;
                s_lo = s1;
                x1 = x2;
                f1 = f2;
                s1 = self.state((lo, &s_lo), x1)?;
                x2 = lo + g * (hi - lo);
                f2 = self.dist_of(&self.state((x1, &s1), x2)?);
            }
        }
        Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
    }
}

/// Membership in `S_{T,ε}`: the first time in `[t_min, T]` at which the
/// orbit of `s` is within ε of `s`, or `None`.
///
/// Candidate windows come from [`FlowModel::window_plan`]; each is sampled
/// with step `Δt = ε/(2vL)` and every sampled local minimum that could
/// reach ε is refined by golden section to [`REFINE_TOL`]. The witness is
/// the refined minimizer.
pub fn is_recurrent(model: &FlowModel, s: &PhaseState, spec: &RecurrenceSpec) -> Result<Option<f64>> {
    spec.validate()?;
    let plan = model.window_plan(spec.t, spec.eps);
    scan(model, s, spec, &plan, spec.step(model))
}

fn scan(model: &FlowModel, s: &PhaseState, spec: &RecurrenceSpec, plan: &WindowPlan, dt: f64) -> Result<Option<f64>> {
    let orbit = Orbit::new(model, s);
    let reach = spec.eps + model.speed_bound() * dt;
    for (a, b) in plan.windows(s, spec.t_min, spec.t, spec.eps) {
        let n = ((b - a) / dt).ceil().max(1.0) as usize;
        let times: Vec<f64> = (0..=n).map(|k| if k == n { b } else { a + k as f64 * dt }).collect();
        let mut states = Vec::with_capacity(n + 1);
        let mut prev = (a, model.flow(s, a)?);
        for &t in &times {
            let st = if t == prev.0 {
                prev.1
            } else {
                orbit.state((prev.0, &prev.1), t)?
            };
            prev = (t, st);
            states.push(st);
        }
        let d: Vec<f64> = states.iter().map(|st| orbit.dist_of(st)).collect();
        for k in 0..=n {
            let left = if k > 0 { d[k - 1] } else { f64::INFINITY };
            let right = if k < n { d[k + 1] } else { f64::INFINITY };
            if d[k] > reach || d[k] > left || d[k] > right {
                continue;
            }
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n);
            let (t_star, d_star) = if lo == hi {
                (times[k], d[k])
            } else {
                orbit.refine(times[lo], &states[lo], times[hi])?
            };
            let (t_best, d_best) = if d[k] < d_star {
                (times[k], d[k])
            } else {
                (t_star, d_star)
            };
            if d_best <= spec.eps {
                return Ok(Some(t_best));
            }
        }
    }
    Ok(None)
}

/// Monte-Carlo estimate of a recurrence-set volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceEstimate {
    pub spec: RecurrenceSpec,
    pub volume: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
    pub seed: u64,
    pub hits: usize,
    pub failed_samples: usize,
}

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson_interval(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // The endpoints are exact when every or no sample hits.
    let low = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if hits == n { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// The `index`-th Liouville sample of the stream `seed`.
///
/// Each sample has its own ChaCha stream, so results do not depend on how
/// samples are split across workers.
pub fn sample_state(model: &FlowModel, seed: u64, index: u64) -> PhaseState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    model.liouville_sample(&mut rng)
}

/// Estimate of `ν(S_{T,ε})` from `samples ≥ 10³` Liouville samples.
pub fn recurrence_volume(
    model: &FlowModel,
    spec: &RecurrenceSpec,
    samples: usize,
    seed: u64,
) -> Result<RecurrenceEstimate> {
    estimate(model, spec, samples, seed, 1.0)
}

/// Surrogate `S_{T,Kε}` for the extended set, `K = spec.surrogate_factor`.
///
/// The extended set lies between `S_{T,ε}` and `S_{T,(2+c·e^{λT})ε}`, since
/// orbits through points ε-close to `S_{T,ε}` separate at most at the rate
/// of the flow's expansion.
pub fn extended_volume(
    model: &FlowModel,
    spec: &RecurrenceSpec,
    samples: usize,
    seed: u64,
) -> Result<RecurrenceEstimate> {
    estimate(model, spec, samples, seed, spec.surrogate_factor)
}

fn estimate(
    model: &FlowModel,
    spec: &RecurrenceSpec,
    samples: usize,
    seed: u64,
    factor: f64,
) -> Result<RecurrenceEstimate> {
    spec.validate()?;
    if samples < 1000 {
        return Err(domain(format!("need at least 10³ samples, got {samples}")));
    }
    let scaled = RecurrenceSpec {
        eps: spec.eps * factor,
        ..*spec
    };
    let plan = model.window_plan(scaled.t, scaled.eps);
    let dt = scaled.step(model);
    let outcomes: Vec<Option<bool>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = sample_state(model, seed, i as u64);
            scan(model, &s, &scaled, &plan, dt).ok().map(|w| w.is_some())
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
    let used = samples - failed;
    let vol = model.level_volume();
    let (lo, hi) = wilson_interval(hits, used);
    let frac = if used == 0 { 0.0 } else { hits as f64 / used as f64 };
    Ok(RecurrenceEstimate {
        spec: *spec,
        volume: vol * frac,
        ci_low: vol * lo,
        ci_high: vol * hi,
        samples,
        seed,
        hits,
        failed_samples: failed,
    })
}

/// Regression variable for the time dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeLaw {
    /// `log v = log C + a·log ε + b·log T`.
    Power,
    /// `log v = log C + a·log ε + b·T`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a_eps: f64,
    pub b_t: f64,
    pub log_c: f64,
    /// Largest absolute residual in `log v`.
    pub residual: f64,
}

/// Least-squares fit of `(ε, T, volume)` rows to a power or exponential law.
pub fn scaling_fit(table: &[(f64, f64, f64)], law: TimeLaw) -> Result<ScalingFit> {
    if table.len() < 6 {
        return Err(LabError::Insufficient(format!(
            "need at least 6 rows, got {}",
            table.len()
        )));
    }
    if let Some(row) = table.iter().find(|r| !(r.2 > 0.0) || !(r.0 > 0.0) || !(r.1 > 0.0)) {
        return Err(domain(format!("volumes, ε and T must be positive, got {row:?}")));
    }
    let distinct = |f: fn(&(f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = table.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct(|r| r.0) < 3 || distinct(|r| r.1) < 3 {
        return Err(LabError::Insufficient(
            "need at least 3 distinct ε and 3 distinct T".into(),
        ));
    }
    let x = DMatrix::from_fn(table.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => table[i].0.ln(),
        _ => match law {
            TimeLaw::Power => table[i].1.ln(),
            TimeLaw::Exponential => table[i].1,
        },
    });
    let y = DVector::from_iterator(table.len(), table.iter().map(|r| r.2.ln()));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(LabError::RankDeficient("ε and T columns are collinear".into()));
    }
    let beta = svd
        .solve(&y, 1e-12 * smax)
        .map_err(|e| LabError::RankDeficient(e.to_string()))?;
    let residual = (&x * &beta - &y).amax();
    Ok(ScalingFit {
        log_c: beta[0],
        a_eps: beta[1],
        b_t: beta[2],
        residual,
    })
}

/// Bound shape `ε^a · f(T)` for [`bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum VolumeLaw {
    /// `ε^eps_exp · T^time_exp`.
    Power { eps_exp: f64, time_exp: f64 },
    /// `ε^eps_exp · e^{rate·T}`.
    Exponential { eps_exp: f64, rate: f64 },
}

impl VolumeLaw {
    /// Lie-group law `ε^{p−1} T^p`.
    pub fn lie_group(p: u32) -> Self {
        VolumeLaw::Power {
            eps_exp: p as f64 - 1.0,
            time_exp: p as f64,
        }
    }

    /// Anosov law `ε^m e^{mλT}`.
    pub fn anosov(m: usize, lambda: f64) -> Self {
        VolumeLaw::Exponential {
            eps_exp: m as f64,
            rate: m as f64 * lambda,
        }
    }

    pub fn eval(&self, eps: f64, t: f64) -> f64 {
        match *self {
            VolumeLaw::Power { eps_exp, time_exp } => eps.powf(eps_exp) * t.powf(time_exp),
            VolumeLaw::Exponential { eps_exp, rate } => eps.powf(eps_exp) * (rate * t).exp(),
        }
    }
}

/// Slack on calibrated volume bounds.
pub const VOLUME_SLACK: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    pub constant: f64,
    /// Largest `ci_low / (C·law)`.
    pub worst_margin: f64,
    pub worst_index: usize,
    /// Indices of rows with `ci_low > slack·C·law`.
    pub violations: Vec<usize>,
}

/// Checks `ci_low ≤ slack·C·law(ε, T)` on every estimate, with `C`
/// calibrated on the anchor row.
pub fn bound_check(estimates: &[RecurrenceEstimate], law: VolumeLaw, anchor: usize) -> Result<BoundCheck> {
    let a = estimates
        .get(anchor)
        .ok_or_else(|| domain(format!("anchor {anchor} out of range")))?;
    let constant = a.volume / law.eval(a.spec.eps, a.spec.t);
    let mut worst_margin = 0.0;
    let mut worst_index = anchor;
    let mut violations = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        let bound = constant * law.eval(e.spec.eps, e.spec.t);
        let margin = if e.ci_low == 0.0 { 0.0 } else { e.ci_low / bound };
        if margin > worst_margin {
            worst_margin = margin;
            worst_index = i;
        }
        if e.ci_low > VOLUME_SLACK * bound {
            violations.push(i);
        }
    }
    Ok(BoundCheck {
        pass: violations.is_empty(),
        constant,
        worst_margin,
        worst_index,
        violations,
    })
}

/// Calibration row for [`bound_check`]: among the rows with positive volume
/// at the smallest such `T`, the one with the largest ε.
pub fn default_anchor(estimates: &[RecurrenceEstimate]) -> Option<usize> {
    let t = estimates
        .iter()
        .filter(|e| e.volume > 0.0)
        .map(|e| e.spec.t)
        .min_by(f64::total_cmp)?;
    estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| e.volume > 0.0 && e.spec.t == t)
        .max_by(|a, b| a.1.spec.eps.total_cmp(&b.1.spec.eps))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests;
