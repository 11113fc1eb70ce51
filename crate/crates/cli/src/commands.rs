//! One function per subcommand. Each returns its artifacts in memory so that
//! `--check` can compare them against a manifest before anything is written.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use weylab::invariants::{inequality_report, invariant_report, InvariantConfig};
use weylab::models::{FlowModel, ModelKind};
use weylab::recurrence::{
    bound_check, default_anchor, extended_volume, scaling_fit, RecurrenceEstimate, RecurrenceSpec, TimeLaw, VolumeLaw,
};
use weylab::spectra::{count, weyl_leading, CountQuery};
use weylab::surfrev::{vanishing_order_from, ReturnMapTable, ALPHA_MARGIN};
use weylab::weyl::{plan_parameters, remainder_series, verify_bound, verify_bound_with, BoundShape, PlanClass};

use crate::config::{sha256_hex, Config, Order};
use crate::error::{CliError, Result};

/// A file produced by a command, relative to the output directory.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Input files read, with their SHA-256.
    pub inputs: Vec<(String, String)>,
    /// Lines printed to stdout.
    pub summary: Vec<String>,
}

impl RunOutput {
    fn csv<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Config(format!("writing {name}: {e}"));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Config(format!("writing {name}: {e}")))?;
        self.artifacts.push(Artifact {
            name: name.to_string(),
            bytes,
        });
        self.summary.push(format!("wrote {name} ({} rows)", rows.len()));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        bytes.push(b'\n');
        self.artifacts.push(Artifact {
            name: name.to_string(),
            bytes,
        });
        self.summary.push(format!("wrote {name}"));
        Ok(())
    }
}

pub const RECURRENCE_HEADER: [&str; 10] = [
    "model",
    "T",
    "eps",
    "K",
    "samples",
    "seed",
    "volume",
    "ci_low",
    "ci_high",
    "failed_samples",
];
pub const INVARIANTS_HEADER: [&str; 8] = [
    "model",
    "lambda_max",
    "lyap1",
    "lyap2",
    "lyap3",
    "chi",
    "h_top",
    "flags",
];
pub const ENTROPY_HEADER: [&str; 3] = ["T", "eps", "N"];
pub const SPECTRUM_HEADER: [&str; 5] = ["model", "h", "lambda", "count", "leading"];
pub const WEYL_HEADER: [&str; 5] = ["model", "h", "N", "leading", "R_h"];
pub const RETURNMAP_HEADER: [&str; 4] = ["alpha", "tau", "theta", "clairaut"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub model: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub eps: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub samples: usize,
    pub seed: u64,
    pub volume: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub failed_samples: usize,
}

impl RecurrenceRow {
    fn estimate(&self) -> RecurrenceEstimate {
        RecurrenceEstimate {
            spec: RecurrenceSpec {
                t: self.t,
                eps: self.eps,
                t_min: 0.0,
                surrogate_factor: self.k,
                lipschitz: 1.0,
            },
            volume: self.volume,
            ci_low: self.ci_low,
            ci_high: self.ci_high,
            samples: self.samples,
            seed: self.seed,
            hits: 0,
            failed_samples: self.failed_samples,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeylRow {
    pub model: String,
    pub h: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub leading: f64,
    #[serde(rename = "R_h")]
    pub r_h: f64,
}

pub fn recurrence(cfg: &Config) -> Result<RunOutput> {
    let model = cfg.model()?;
    let seed = cfg.seed()?;
    let ts = cfg.grid("T", Order::Increasing)?;
    let epss = cfg.grid("eps", Order::Increasing)?;
    let samples: usize = cfg.get_or("samples", 10_000)?;
    if samples < 1000 {
        return Err(CliError::field("samples", "need at least 1000"));
    }
    let k: f64 = cfg.get_or("K", 1.0)?;
    let lipschitz: f64 = cfg.get_or("lipschitz", 1.0)?;
    let t_min: Option<f64> = cfg.get("t_min")?;
    let mut specs = Vec::new();
    for &t in &ts {
        for &eps in &epss {
            let mut spec = RecurrenceSpec::new(&model, t, eps)
                .with_surrogate_factor(k)
                .with_lipschitz(lipschitz);
            if let Some(t_min) = t_min {
                spec.t_min = t_min;
            }
            spec.validate().map_err(|e| CliError::field("T", e))?;
            specs.push(spec);
        }
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in &specs {
        let e = extended_volume(&model, spec, samples, seed)?;
        rows.push(RecurrenceRow {
            model: model.label().to_string(),
            t: spec.t,
            eps: spec.eps,
            k: spec.surrogate_factor,
            samples,
            seed,
            volume: e.volume,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            failed_samples: e.failed_samples,
        });
    }
    let mut out = RunOutput::default();
    out.csv("recurrence.csv", &RECURRENCE_HEADER, &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct InvariantsRow {
    model: String,
    lambda_max: f64,
    lyap1: Option<f64>,
    lyap2: Option<f64>,
    lyap3: Option<f64>,
    chi: f64,
    h_top: f64,
    flags: String,
}

#[derive(Serialize)]
struct EntropyRow {
    #[serde(rename = "T")]
    t: f64,
    eps: f64,
    #[serde(rename = "N")]
    n: usize,
}

pub fn invariants(cfg: &Config) -> Result<RunOutput> {
    let model = cfg.model()?;
    let seed = cfg.seed()?;
    let d = InvariantConfig::default();
    let ic = InvariantConfig {
        t_max: cfg.get_or("t_max", d.t_max)?,
        orbit_samples: cfg.get_or("orbit_samples", d.orbit_samples)?,
        lyapunov_t_max: cfg.get_or("lyapunov_t_max", d.lyapunov_t_max)?,
        renorm_step: cfg.get_or("renorm_step", d.renorm_step)?,
        t_list: if cfg.has("T_list") {
            cfg.grid("T_list", Order::Increasing)?
        } else {
            d.t_list
        },
        eps_list: if cfg.has("eps_list") {
            cfg.grid("eps_list", Order::Decreasing)?
        } else {
            d.eps_list
        },
        entropy_samples: cfg.get_or("entropy_samples", d.entropy_samples)?,
    };
    let anosov = matches!(model.kind(), ModelKind::CatMapSuspension(_));
    let (report, entropy) = invariant_report(&model, &ic, seed)?;
    let checks = inequality_report(&report, anosov);
    let l = |i: usize| report.lyapunov.get(i).copied();
    let row = InvariantsRow {
        model: model.label().to_string(),
        lambda_max: report.lambda_max,
        lyap1: l(0),
        lyap2: l(1),
        lyap3: l(2),
        chi: report.chi,
        h_top: report.h_top,
        flags: report.flags(),
    };
    let table: Vec<EntropyRow> = entropy
        .table
        .iter()
        .map(|c| EntropyRow {
            t: c.t,
            eps: c.eps,
            n: c.n,
        })
        .collect();
    let mut out = RunOutput::default();
    out.csv("invariants.csv", &INVARIANTS_HEADER, &[row])?;
    out.csv("entropy.csv", &ENTROPY_HEADER, &table)?;
    out.json(
        "invariants.json",
        &json!({
            "model": model.label(),
            "report": report,
            "entropy_slopes": entropy.slopes,
            "anosov": anosov,
            "inequalities": checks,
        }),
    )?;
    for c in &checks {
        out.summary.push(format!(
            "{} {}: {} vs {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.lhs,
            c.rhs
        ));
    }
    Ok(out)
}

/// `(h, Λ)` pairs from whichever of `h` and `lambda` is configured.
fn queries(cfg: &Config) -> Result<Vec<(f64, f64)>> {
    match (cfg.has("h"), cfg.has("lambda")) {
        (true, false) => cfg
            .grid("h", Order::Increasing)?
            .into_iter()
            .map(|h| {
                let lambda = CountQuery::H(h).lambda().map_err(|e| CliError::field("h", e))?;
                Ok((h, lambda))
            })
            .collect(),
        (false, true) => cfg
            .grid("lambda", Order::Increasing)?
            .into_iter()
            .map(|l| {
                let h = CountQuery::Lambda(l).h().map_err(|e| CliError::field("lambda", e))?;
                Ok((h, l))
            })
            .collect(),
        _ => Err(CliError::Config("give exactly one of `h` and `lambda`".into())),
    }
}

fn spectral_model(cfg: &Config) -> Result<FlowModel> {
    let model = cfg.model()?;
    if matches!(model.kind(), ModelKind::CatMapSuspension(_)) {
        return Err(CliError::field(
            "model",
            "the cat-map suspension has no Laplace spectrum",
        ));
    }
    Ok(model)
}

fn counts(model: &FlowModel, qs: &[(f64, f64)]) -> Result<Vec<u64>> {
    qs.par_iter()
        .map(|&(_, lambda)| count(model, CountQuery::Lambda(lambda)).map_err(CliError::from))
        .collect()
}

pub fn spectrum(cfg: &Config) -> Result<RunOutput> {
    #[derive(Serialize)]
    struct Row {
        model: String,
        h: f64,
        lambda: f64,
        count: u64,
        leading: f64,
    }
    let model = spectral_model(cfg)?;
    let qs = queries(cfg)?;
    let ns = counts(&model, &qs)?;
    let rows = qs
        .iter()
        .zip(&ns)
        .map(|(&(h, lambda), &count)| {
            Ok(Row {
                model: model.label().to_string(),
                h,
                lambda,
                count,
                leading: weyl_leading(&model, h)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = RunOutput::default();
    out.csv("spectrum.csv", &SPECTRUM_HEADER, &rows)?;
    Ok(out)
}

pub fn weyl(cfg: &Config) -> Result<RunOutput> {
    let model = spectral_model(cfg)?;
    let qs = queries(cfg)?;
    let ns = counts(&model, &qs)?;
    let pairs: Vec<(f64, u64)> = qs.iter().map(|q| q.0).zip(ns).collect();
    let rows: Vec<WeylRow> = remainder_series(&model, &pairs)?
        .into_iter()
        .map(|r| WeylRow {
            model: model.label().to_string(),
            h: r.h,
            n: r.n,
            leading: r.leading,
            r_h: r.r_h,
        })
        .collect();
    let mut out = RunOutput::default();
    out.csv("weyl.csv", &WEYL_HEADER, &rows)?;
    Ok(out)
}

pub fn plan(cfg: &Config) -> Result<RunOutput> {
    let class: PlanClass<f64> = cfg.whole()?;
    let hs = cfg.grid("h", Order::Increasing)?;
    let growth: Option<(f64, f64)> = cfg.get("growth")?;
    let plans = hs
        .iter()
        .map(|&h| plan_parameters(class, h, growth).map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;
    let mut out = RunOutput::default();
    if let [single] = plans.as_slice() {
        out.json("plan.json", single)?;
    } else {
        out.json("plan.json", &plans)?;
    }
    Ok(out)
}

pub fn returnmap(cfg: &Config) -> Result<RunOutput> {
    #[derive(Serialize)]
    struct Row {
        alpha: f64,
        tau: f64,
        theta: f64,
        clairaut: f64,
    }
    let model = cfg.model()?;
    let ModelKind::SurfaceOfRevolution(surface) = model.kind() else {
        return Err(CliError::field("model", "return maps need a surface of revolution"));
    };
    let n: usize = cfg.get_or("n", 64)?;
    let alpha_min: f64 = cfg.get_or("alpha_min", ALPHA_MARGIN)?;
    if n < 2 {
        return Err(CliError::field("n", "need at least 2 headings"));
    }
    if !(alpha_min > 0.0 && alpha_min < std::f64::consts::FRAC_PI_2) {
        return Err(CliError::field("alpha_min", "must lie in (0, π/2)"));
    }
    let table = ReturnMapTable::compute(surface, n, alpha_min)?;
    let order = vanishing_order_from(&table)?;
    let rows: Vec<Row> = table
        .samples
        .iter()
        .map(|s| Row {
            alpha: s.alpha,
            tau: s.tau,
            theta: s.theta,
            clairaut: s.clairaut,
        })
        .collect();
    let mut out = RunOutput::default();
    out.csv("returnmap.csv", &RETURNMAP_HEADER, &rows)?;
    out.json(
        "returnmap.json",
        &json!({
            "model": model.label(),
            "r": order.r,
            "worst_alpha": order.worst_alpha,
            "degenerate": order.degenerate,
            "tau_min": table.tau_min(),
            "tau_max": table.tau_max(),
        }),
    )?;
    Ok(out)
}

/// Reads a CSV with a declared schema; an empty table is a schema error.
fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, out: &mut RunOutput) -> Result<Vec<T>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::field("input", format!("{}: {e}", path.display())))?;
    out.inputs.push((path.display().to_string(), sha256_hex(&bytes)));
    let rows = csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| CliError::field("input", format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::field("input", format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| CliError::field("input", format!("{}: {e}", path.display())))?;
    let h = r
        .headers()
        .map_err(|e| CliError::field("input", format!("{}: {e}", path.display())))?;
    Ok(h.iter().map(str::to_string).collect())
}

pub fn scaling_fit_cmd(cfg: &Config) -> Result<RunOutput> {
    let input: String = cfg.require("input")?;
    let law: TimeLaw = cfg.get_or("law", TimeLaw::Power)?;
    let mut out = RunOutput::default();
    let rows: Vec<RecurrenceRow> = read_csv(Path::new(&input), &mut out)?;
    let table: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.volume > 0.0)
        .map(|r| (r.eps, r.t, r.volume))
        .collect();
    let fit = scaling_fit(&table, law)?;
    out.summary.push(format!(
        "a_eps = {:.3}, b_T = {:.3}, residual = {:.3e}",
        fit.a_eps, fit.b_t, fit.residual
    ));
    out.json(
        "scaling_fit.json",
        &json!({
            "law": law,
            "a_eps": fit.a_eps,
            "b_T": fit.b_t,
            "log_c": fit.log_c,
            "residual": fit.residual,
            "rows_used": table.len(),
            "rows_skipped": rows.len() - table.len(),
        }),
    )?;
    Ok(out)
}

pub fn verify_bound_cmd(cfg: &Config) -> Result<RunOutput> {
    let input: String = cfg.require("input")?;
    let path = Path::new(&input);
    let header = csv_header(path)?;
    let mut out = RunOutput::default();
    if header.iter().any(|c| c == "R_h") {
        let shape: BoundShape<f64> = cfg.require("bound")?;
        let constant: Option<f64> = cfg.get("constant")?;
        let rows: Vec<WeylRow> = read_csv(path, &mut out)?;
        let series: Vec<weylab::WeylRow> = rows
            .iter()
            .map(|r| weylab::WeylRow {
                h: r.h,
                n: r.n,
                leading: r.leading,
                r_h: r.r_h,
            })
            .collect();
        let report = match constant {
            Some(c) => verify_bound_with(&series, shape, c)?,
            None => verify_bound(&series, shape)?,
        };
        out.summary.push(format!(
            "{} worst margin {:.4} at h = {}",
            if report.pass { "PASS" } else { "FAIL" },
            report.worst_margin,
            report.worst_h
        ));
        out.json("verify_bound.json", &json!({ "bound": shape, "report": report }))?;
    } else if header.iter().any(|c| c == "ci_low") {
        let law: VolumeLaw = cfg.require("law")?;
        let rows: Vec<RecurrenceRow> = read_csv(path, &mut out)?;
        let estimates: Vec<RecurrenceEstimate> = rows.iter().map(RecurrenceRow::estimate).collect();
        let anchor = match cfg.get::<usize>("anchor")? {
            Some(a) if a < estimates.len() => a,
            Some(a) => return Err(CliError::field("anchor", format!("row {a} out of range"))),
            None => default_anchor(&estimates).ok_or_else(|| CliError::field("input", "every volume is zero"))?,
        };
        let report = bound_check(&estimates, law, anchor)?;
        out.summary.push(format!(
            "{} worst margin {:.4} at row {}",
            if report.pass { "PASS" } else { "FAIL" },
            report.worst_margin,
            report.worst_index
        ));
        out.json(
            "verify_bound.json",
            &json!({ "law": law, "anchor": anchor, "report": report }),
        )?;
    } else {
        return Err(CliError::field("input", "neither a weyl nor a recurrence table"));
    }
    Ok(out)
}
