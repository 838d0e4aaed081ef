//! The three experiment drivers. Each writes its files into the output
//! directory and returns the JSON summary it also prints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use mlmc_boed::diagnostics::{decay_study, DecayConfig};
use mlmc_boed::eig::estimate_eig;
use mlmc_boed::model::ProblemModel;
use mlmc_boed::optim::{optimize_with, OptimizeConfig, OptimizerConfig};
use mlmc_boed::parallel::Workers;
use mlmc_boed::problems::{Pk, TestCase};

use crate::config::{ProblemId, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub const DECAY_CSV: &str = "decay.csv";
pub const DECAY_JSON: &str = "decay.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const OPTIMIZE_JSON: &str = "optimize.json";
pub const EIG_JSON: &str = "eig.json";
pub const CONFIG_JSON: &str = "config.json";

fn prepare(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_text(&out.join(CONFIG_JSON), &cfg.to_json())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, format!("{text}\n")).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value).expect("serializable summary"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn decay(cfg: &RunConfig, workers: &Workers, out: &Path) -> Result<Value> {
    prepare(cfg, out)?;
    match cfg.problem {
        ProblemId::Testcase => decay_with(&TestCase::default(), cfg, workers, out),
        ProblemId::Pk => decay_with(&Pk::default(), cfg, workers, out),
    }
}

fn decay_with<M: ProblemModel>(model: &M, cfg: &RunConfig, workers: &Workers, out: &Path) -> Result<Value> {
    let mut dc = DecayConfig::new(cfg.decay.levels, cfg.decay.samples_per_level);
    dc.m0 = cfg.estimator.m0;
    dc.construction = cfg.construction();
    dc.proposal = cfg.proposal;
    dc.laplace_step = cfg.laplace_step;
    dc.fit_range = (cfg.decay.fit_from, cfg.decay.levels);
    let report = decay_study(model, &cfg.xi0, &dc, cfg.seed, workers)?;

    let path = out.join(DECAY_CSV);
    let mut w = csv_writer(&path)?;
    let io = |e: csv::Error| CliError::io(&path, e);
    w.write_record(["level", "mean_sq_psi", "mean_sq_delta", "n"]).map_err(io)?;
    for r in &report.rows {
        w.write_record([
            r.level.to_string(),
            r.mean_sq_psi.to_string(),
            r.mean_sq_delta.to_string(),
            r.n.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let summary = json!({
        "problem": cfg.problem,
        "design": cfg.xi0,
        "construction": dc.construction,
        "beta_hat": finite_or_null(report.beta_hat),
        "fit_range": [report.fit_range.0, report.fit_range.1],
        "reliable": report.reliable,
    });
    write_json(&out.join(DECAY_JSON), &summary)?;
    Ok(summary)
}

pub fn optimize(cfg: &RunConfig, workers: &Workers, out: &Path) -> Result<Value> {
    prepare(cfg, out)?;
    match cfg.problem {
        ProblemId::Testcase => optimize_with_model(&TestCase::default(), cfg, workers, out),
        ProblemId::Pk => optimize_with_model(&Pk::default(), cfg, workers, out),
    }
}

fn optimize_with_model<M: ProblemModel>(
    model: &M,
    cfg: &RunConfig,
    workers: &Workers,
    out: &Path,
) -> Result<Value> {
    let optimizer = cfg.optimizer()?;
    let config = OptimizeConfig {
        gradient: cfg.gradient()?,
        optimizer,
        domain: cfg.bounds.to_domain()?,
        initial: cfg.xi0.clone(),
        max_iters: cfg.max_iters,
        seed: cfg.seed,
        eig_every: cfg.eig.every,
        eig: Some(cfg.eig_config()?),
    };
    let d = cfg.xi0.len();
    let path = out.join(TRACE_CSV);
    let mut w = csv_writer(&path)?;
    let io = |e: csv::Error| CliError::io(&path, e);
    let mut header = vec!["t".to_string(), "cost_cumulative".to_string()];
    header.extend((1..=d).map(|i| format!("xi_{i}")));
    header.extend((1..=d).map(|i| format!("avg_{i}")));
    header.extend(["grad_norm", "eig", "eig_se"].map(String::from));
    w.write_record(&header).map_err(io)?;

    let mut last_eig = None;
    let mut write_err = None;
    let result = optimize_with(model, &config, workers, |row| {
        let mut rec = vec![row.t.to_string(), row.cost_cumulative.to_string()];
        rec.extend(row.design.iter().map(f64::to_string));
        rec.extend(row.averaged.iter().map(f64::to_string));
        rec.push(fmt_opt(row.grad_norm));
        rec.push(fmt_opt(row.eig));
        rec.push(fmt_opt(row.eig_std_error));
        if let (Some(v), Some(se)) = (row.eig, row.eig_std_error) {
            last_eig = Some((row.t, v, se));
        }
        w.write_record(&rec).map_err(|e| {
            write_err = Some(e);
            mlmc_boed::Error::Config("trace output failed".into())
        })
    });
    if let Some(e) = write_err {
        return Err(io(e));
    }
    let trace = result?;
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let polyak = matches!(optimizer, OptimizerConfig::Rm { polyak: true, .. });
    let reported = if polyak { &trace.averaged_design } else { &trace.final_design };
    let summary = json!({
        "problem": cfg.problem,
        "iterations": cfg.max_iters,
        "final_design": trace.final_design,
        "averaged_design": trace.averaged_design,
        "reported_design": reported,
        "reported_is_average": polyak,
        "total_cost": trace.total_cost,
        "laplace_fallbacks": trace.laplace_fallbacks,
        "last_eig": last_eig.map(|(t, v, se)| json!({"t": t, "value": v, "std_error": se})),
    });
    write_json(&out.join(OPTIMIZE_JSON), &summary)?;
    Ok(summary)
}

pub fn eig(cfg: &RunConfig, workers: &Workers, out: &Path) -> Result<Value> {
    prepare(cfg, out)?;
    let ec = cfg.eig_config()?;
    let key = mlmc_boed::rng::StreamKey::new(cfg.seed, mlmc_boed::rng::Phase::Eig, 0);
    let mut summary = match cfg.problem {
        ProblemId::Testcase => {
            let tc = TestCase::default();
            let e = estimate_eig(&tc, &cfg.xi0, &ec, key, workers)?;
            let mut v = serde_json::to_value(e).expect("serializable estimate");
            v["closed_form"] = json!(tc.eig_closed(cfg.xi0[0]));
            v["upper_bound"] = json!(tc.eig_upper(cfg.xi0[0]));
            v
        }
        ProblemId::Pk => {
            serde_json::to_value(estimate_eig(&Pk::default(), &cfg.xi0, &ec, key, workers)?)
                .expect("serializable estimate")
        }
    };
    summary["problem"] = json!(cfg.problem);
    summary["design"] = json!(cfg.xi0);
    summary["estimator"] = json!(cfg.eig.kind);
    write_json(&out.join(EIG_JSON), &summary)?;
    Ok(summary)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Prints a summary to stdout as a single JSON line.
pub fn print_summary(summary: &Value) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{summary}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}
