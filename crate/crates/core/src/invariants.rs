//! Dynamical invariants: expansion rate, Lyapunov spectrum, χ, Bowen
//! entropy and the inequalities relating them.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::models::{FlowModel, Prepared};
use crate::recurrence::sample_state;

pub use crate::weyl::ehrenfest_time;

/// Exponents at or below this count as zero in χ.
pub const POSITIVE_THRESHOLD: f64 = 1e-6;
/// Additive slack of every inequality check.
pub const INEQUALITY_SLACK: f64 = 0.1;
/// Relative slope disagreement that raises the entropy caveat.
pub const CAVEAT_SPREAD: f64 = 0.2;

/// Sampled maximal expansion rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionEstimate {
    /// `max_s t⁻¹ ln‖dφ_t(s)‖` at `t = t_max`.
    pub rate: f64,
    /// The same maximum at `2·t_max`.
    pub rate_double: f64,
    /// Growth looks polynomial rather than exponential.
    pub polynomial: bool,
}

/// `max_s t⁻¹ ln‖dφ_t(s)‖` over `orbit_samples` Liouville samples, with the
/// operator norm.
///
/// Growth is flagged polynomial when the rate over `[t, 2t]`, namely
/// `2·rate(2t) − rate(t)`, is below half of `rate(t)`. Exponential growth
/// keeps the two equal; `‖dφ_t‖ ~ t^C` makes the first `O(1/t)` and the
/// second `O(ln t / t)`.
pub fn max_expansion_rate(model: &FlowModel, t_max: f64, orbit_samples: usize, seed: u64) -> Result<ExpansionEstimate> {
    if !(t_max >= 10.0 && t_max.is_finite()) {
        return Err(domain(format!("t_max must be ≥ 10, got {t_max}")));
    }
    if orbit_samples < 100 {
        return Err(domain(format!("need ≥ 100 orbit samples, got {orbit_samples}")));
    }
    let rates = (0..orbit_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sample_state(model, seed, i);
            let a = log_norm(&model.tangent_flow(&s, t_max)?) / t_max;
            let b = log_norm(&model.tangent_flow(&s, 2.0 * t_max)?) / (2.0 * t_max);
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let rate = rates.iter().map(|r| r.0).fold(0.0, f64::max);
    let rate_double = rates.iter().map(|r| r.1).fold(0.0, f64::max);
    let increment = 2.0 * rate_double - rate;
    Ok(ExpansionEstimate {
        rate,
        rate_double,
        polynomial: rate <= POSITIVE_THRESHOLD || increment < rate / 2.0,
    })
}

fn log_norm(j: &DMatrix<f64>) -> f64 {
    j.singular_values().max().ln()
}

/// Lyapunov exponents along the orbit of `s`, sorted descending.
///
/// Step Jacobians over `renorm_step` are multiplied into an orthonormal
/// frame that is re-orthogonalized by QR after every step; the exponents
/// are the time averages of `ln |R_ii|`.
pub fn lyapunov_spectrum(
    model: &FlowModel,
    s: &crate::models::PhaseState,
    t_max: f64,
    renorm_step: f64,
) -> Result<Vec<f64>> {
    if !(0.1..=1.0).contains(&renorm_step) {
        return Err(domain(format!("renorm_step must lie in [0.1, 1], got {renorm_step}")));
    }
    if !(t_max >= 50.0 * renorm_step && t_max.is_finite()) {
        return Err(domain(format!("t_max must be ≥ 50·renorm_step, got {t_max}")));
    }
    let steps = (t_max / renorm_step).round() as usize;
    let m = model.level_dim();
    let mut frame = DMatrix::<f64>::identity(m, m);
    let mut sums = vec![0.0; m];
    let mut state = *s;
    for k in 0..steps {
        let j = model.tangent_flow(&state, renorm_step)?;
        let qr = (j * frame).qr();
        let r = qr.r();
        for (i, acc) in sums.iter_mut().enumerate() {
            let d = r[(i, i)].abs();
            if !(d > f64::MIN_POSITIVE && d.is_finite()) {
                return Err(LabError::DegenerateFrame((k + 1) as f64 * renorm_step));
            }
            *acc += d.ln();
        }
        frame = qr.q();
        state = model.flow(&state, renorm_step)?;
    }
    let total = steps as f64 * renorm_step;
    let mut out: Vec<f64> = sums.into_iter().map(|x| x / total).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// `Σ mult_j λ_j` over exponents above [`POSITIVE_THRESHOLD`]; 0 if none.
pub fn positive_sum_chi(spectrum: &[f64], multiplicities: &[usize]) -> Result<f64> {
    if spectrum.len() != multiplicities.len() {
        return Err(LabError::LengthMismatch(spectrum.len(), multiplicities.len()));
    }
    Ok(spectrum
        .iter()
        .zip(multiplicities)
        .filter(|(l, _)| **l > POSITIVE_THRESHOLD)
        .map(|(l, &k)| l * k as f64)
        .sum())
}

/// One cell of the separated-set table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyCell {
    #[serde(rename = "T")]
    pub t: f64,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

/// Result of [`bowen_entropy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub h_top: f64,
    /// Slope of `ln N` against `T` for every ε, in `eps_list` order.
    pub slopes: Vec<f64>,
    /// The slopes at the two smallest ε differ by more than 20%.
    pub caveat: bool,
    pub table: Vec<EntropyCell>,
}

/// Separated-set entropy estimate.
///
/// For each `(T, ε)` a `(T, ε)`-separated set is built greedily from a fixed
/// pool of Liouville samples, with `d_T` the maximum of the model distance
/// over the scan grid `{kΔt} ∪ T_list`, `Δt = ε_min/(2v)`. Any set separated
/// for `(T', ε')` with `T' ≤ T`, `ε' ≥ ε` is also separated for `(T, ε)`, so
/// the table reports the monotone envelope of the greedy counts; every entry
/// stays a lower bound on the maximal cardinality.
pub fn bowen_entropy(
    model: &FlowModel,
    t_list: &[f64],
    eps_list: &[f64],
    samples: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    if t_list.len() < 3 || !t_list.windows(2).all(|w| w[0] < w[1]) || !(t_list[0] >= 0.0) {
        return Err(domain("T_list must be increasing, non-negative, with ≥ 3 entries"));
    }
    if eps_list.len() < 2 || !eps_list.windows(2).all(|w| w[0] > w[1]) || !(eps_list[eps_list.len() - 1] > 0.0) {
        return Err(domain("eps_list must be decreasing and positive with ≥ 2 entries"));
    }
    let t_end = t_list[t_list.len() - 1];
    let dt = eps_list[eps_list.len() - 1] / (2.0 * model.speed_bound());
    let mut grid: Vec<f64> = (0..).map(|k| k as f64 * dt).take_while(|&t| t < t_end).collect();
    grid.extend_from_slice(t_list);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let pool = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sample_state(model, seed, i);
            grid.iter()
                .map(|&t| Ok(model.prepare(&model.flow(&s, t)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, usize)> = (0..eps_list.len())
        .flat_map(|e| (0..t_list.len()).map(move |t| (e, t)))
        .collect();
    let counts = cells
        .par_iter()
        .map(|&(e, t)| {
            let upto = grid.partition_point(|&g| g <= t_list[t]);
            greedy_separated(model, &pool, upto, eps_list[e])
        })
        .collect::<Vec<_>>();

    let nt = t_list.len();
    let mut n = vec![0usize; counts.len()];
    for e in 0..eps_list.len() {
        for t in 0..nt {
            let mut v = counts[e * nt + t];
            if t > 0 {
                v = v.max(n[e * nt + t - 1]);
            }
            if e > 0 {
                v = v.max(n[(e - 1) * nt + t]);
            }
            n[e * nt + t] = v;
        }
    }
    if let Some(&full) = n.iter().find(|&&v| v >= samples) {
        return Err(LabError::SampleStarvation(full));
    }

    let table: Vec<EntropyCell> = cells
        .iter()
        .zip(&n)
        .map(|(&(e, t), &n)| EntropyCell {
            t: t_list[t],
            eps: eps_list[e],
            n,
        })
        .collect();
    let slopes: Vec<f64> = (0..eps_list.len())
        .map(|e| {
            let ln_n: Vec<f64> = n[e * nt..(e + 1) * nt]
                .iter()
                .map(|&v| (v.max(1) as f64).ln())
                .collect();
            slope(t_list, &ln_n)
        })
        .collect();
    let h_top = slopes[slopes.len() - 1].max(0.0);
    let prev = slopes[slopes.len() - 2];
    let caveat = (h_top - prev).abs() > CAVEAT_SPREAD * h_top.abs().max(prev.abs());
    Ok(EntropyEstimate {
        h_top,
        slopes,
        caveat,
        table,
    })
}

/// Greedy `(T, ε)`-separated subset of the pool, scanning in pool order.
fn greedy_separated(model: &FlowModel, pool: &[Vec<Prepared>], upto: usize, eps: f64) -> usize {
    let mut chosen: Vec<&[Prepared]> = Vec::new();
    for orbit in pool {
        let orbit = &orbit[..upto];
        // Separation usually shows first at late times, so scan backwards.
        let separated = chosen.iter().all(|c| {
            c.iter()
                .zip(orbit)
                .rev()
                .any(|(a, b)| model.prepared_distance(a, b) > eps)
        });
        if separated {
            chosen.push(orbit);
        }
    }
    chosen.len()
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Budgets for [`invariant_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvariantConfig {
    pub t_max: f64,
    pub orbit_samples: usize,
    pub lyapunov_t_max: f64,
    pub renorm_step: f64,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub entropy_samples: usize,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            t_max: 30.0,
            orbit_samples: 200,
            lyapunov_t_max: 200.0,
            renorm_step: 0.5,
            t_list: vec![1.0, 2.0, 3.0, 4.0],
            eps_list: vec![0.35, 0.25],
            entropy_samples: 20_000,
        }
    }
}

/// Invariant estimates of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub lambda_max: f64,
    pub lyapunov: Vec<f64>,
    pub chi: f64,
    pub h_top: f64,
    pub m: usize,
    pub t_horizon: f64,
    pub epsilon_list: Vec<f64>,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub polynomial: bool,
    pub entropy_caveat: bool,
}

impl InvariantReport {
    /// Checks sortedness, finiteness and `χ ≤ #{λ_j > 0}·λ₁`.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| {
            Err(LabError::Invalid {
                what: "invariant report",
                reason,
            })
        };
        let finite = [self.lambda_max, self.chi, self.h_top, self.t_horizon]
            .iter()
            .chain(&self.lyapunov)
            .all(|x| x.is_finite());
        if !finite {
            return bad("non-finite estimate".into());
        }
        if !self.lyapunov.windows(2).all(|w| w[0] >= w[1]) {
            return bad("Lyapunov exponents not sorted descending".into());
        }
        let positive = self.lyapunov.iter().filter(|&&l| l > POSITIVE_THRESHOLD).count();
        let top = self.lyapunov.first().copied().unwrap_or(0.0);
        if self.chi > positive as f64 * top.max(0.0) + 1e-12 {
            return bad(format!("χ = {} exceeds {positive}·λ₁", self.chi));
        }
        if self.lambda_max < 0.0 || self.chi < 0.0 || self.h_top < 0.0 {
            return bad("negative rate".into());
        }
        Ok(())
    }

    /// Short flag string for tables, `;`-separated.
    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.polynomial {
            f.push("polynomial");
        }
        if self.entropy_caveat {
            f.push("entropy_caveat");
        }
        f.join(";")
    }
}

/// All invariants of `model` with the budgets in `cfg`, together with the
/// separated-set table behind `h_top`. The Lyapunov spectrum is taken along
/// the orbit of the first pool sample.
pub fn invariant_report(
    model: &FlowModel,
    cfg: &InvariantConfig,
    seed: u64,
) -> Result<(InvariantReport, EntropyEstimate)> {
    let expansion = max_expansion_rate(model, cfg.t_max, cfg.orbit_samples, seed)?;
    let lyapunov = lyapunov_spectrum(
        model,
        &sample_state(model, seed, 0),
        cfg.lyapunov_t_max,
        cfg.renorm_step,
    )?;
    let chi = positive_sum_chi(&lyapunov, &vec![1; lyapunov.len()])?;
    let entropy = bowen_entropy(model, &cfg.t_list, &cfg.eps_list, cfg.entropy_samples, seed)?;
    let report = InvariantReport {
        lambda_max: expansion.rate,
        lyapunov,
        chi,
        h_top: entropy.h_top,
        m: model.level_dim(),
        t_horizon: cfg.t_max,
        epsilon_list: cfg.eps_list.clone(),
        t_list: cfg.t_list.clone(),
        polynomial: expansion.polynomial,
        entropy_caveat: entropy.caveat,
    };
    report.validate()?;
    Ok((report, entropy))
}

/// One evaluated inequality `lhs ≤ rhs + slack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `h_top ≤ m·Λ_max`, `h_top ≤ χ` (volume-measure form of Margulis–Ruelle)
/// and, for Anosov flows, `(m/4)·Λ_max ≤ h_top`, each with additive slack
/// [`INEQUALITY_SLACK`].
pub fn inequality_report(report: &InvariantReport, anosov: bool) -> Vec<InequalityCheck> {
    let m = report.m as f64;
    let check = |name: &str, lhs: f64, rhs: f64| InequalityCheck {
        name: name.to_string(),
        lhs,
        rhs,
        pass: lhs <= rhs + INEQUALITY_SLACK,
    };
    let mut out = vec![
        check("h_top <= m*lambda_max", report.h_top, m * report.lambda_max),
        check("h_top <= chi", report.h_top, report.chi),
    ];
    if anosov {
        out.push(check(
            "(m/4)*lambda_max <= h_top",
            m / 4.0 * report.lambda_max,
            report.h_top,
        ));
    }
    out
}

#[cfg(test)]
mod tests;
