//! Experiment runner: parses experiment files, trains ensembles, and writes
//! `report.json`, `loss_history.csv`, `allocation_curve.csv` and `oracle.json`.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use infconv_core::measures::{analytic_allocation, analytic_infconv};
use infconv_core::oracle::brute_force_infconv;
use infconv_core::sharing::{l2_error, mean_std, train_ensemble};
use infconv_core::{EmpiricalMeasure, Error as CoreError, OracleResult, RngSeed};

pub use config::{ConfigError, ExperimentSpec, OracleSettings, Profile};
pub use report::{AllocationCurve, ExperimentReport, OracleSummary};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Process exit code for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        match cause.downcast_ref::<CoreError>() {
            Some(CoreError::Training { .. } | CoreError::Ensemble { .. }) => return EXIT_TRAINING,
            Some(CoreError::Budget { .. }) => return EXIT_BUDGET,
            _ => {}
        }
    }
    1
}

pub fn load_spec(path: &Path, overrides: &Overrides) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec = ExperimentSpec::parse(&text, overrides.profile)?;
    if let Some(seed) = overrides.seed {
        spec.train.seed = seed;
    }
    Ok(spec)
}

fn output_dir(spec: &ExperimentSpec, overrides: &Overrides) -> PathBuf {
    overrides
        .out
        .clone()
        .or_else(|| spec.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&spec.name))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn oracle_sample(spec: &ExperimentSpec, settings: &OracleSettings) -> Result<EmpiricalMeasure> {
    let xs = spec.distribution.draw(settings.sample_size, RngSeed::new(spec.train.seed, 3))?;
    Ok(EmpiricalMeasure::new(&xs)?)
}

fn run_oracle(spec: &ExperimentSpec, settings: &OracleSettings) -> Result<OracleResult> {
    let m = oracle_sample(spec, settings)?;
    Ok(brute_force_infconv(&m, &spec.rho1, &spec.rho2, settings.segments, settings.levels)?)
}

/// Trains the configured ensemble and writes the report files into the
/// output directory.
pub fn run(config: &Path, overrides: &Overrides) -> Result<(ExperimentReport, PathBuf)> {
    let spec = load_spec(config, overrides)?;
    let dir = output_dir(&spec, overrides);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let t = &spec.train;
    let data = spec.distribution.draw(t.n_samples, t.data_seed())?;
    let (ensemble, history) = match train_ensemble(t, &spec.rho1, &spec.rho2, &data) {
        Ok(r) => r,
        Err(err) => {
            if let CoreError::Ensemble { histories, .. } = &err {
                write(&dir, "loss_history.csv", &report::partial_history_csv(histories))?;
            }
            return Err(err).context(format!("training '{}'", spec.name));
        }
    };

    let (loss_mean, loss_std) = history.final_stats();
    let infimum = analytic_infconv(&spec.rho1, &spec.rho2, &spec.distribution);
    let (rel_mean, rel_std) = match infimum {
        Some(inf) => {
            let (m, s) = mean_std(history.final_losses.iter().map(|l| (l - inf).abs() / inf.abs()));
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    let l2 = match analytic_allocation(&spec.rho1, &spec.rho2) {
        Some(exact) if exact.phi1(0.0).is_some() => {
            let eval_sample = spec.distribution.draw(t.n_samples, RngSeed::new(t.seed, 2))?;
            Some(l2_error(&ensemble, &exact, &eval_sample)?)
        }
        _ => None,
    };
    let oracle = match &spec.oracle {
        Some(settings) => Some(OracleSummary::from(&run_oracle(&spec, settings)?)),
        None => None,
    };

    let (lo, hi) = spec.distribution.support();
    let xs: Vec<f64> = (0..report::CURVE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (report::CURVE_POINTS - 1) as f64)
        .collect();
    let curve_rows = ensemble.curve(&xs)?;
    let curve = AllocationCurve {
        phi1_mean: curve_rows.iter().map(|r| r.0).collect(),
        phi1_std: curve_rows.iter().map(|r| r.1).collect(),
        phi2_mean: curve_rows.iter().map(|r| r.2).collect(),
        phi2_std: curve_rows.iter().map(|r| r.3).collect(),
        x: xs,
    };

    let report = ExperimentReport {
        schema: report::SCHEMA.into(),
        version: report::VERSION.into(),
        name: spec.name.clone(),
        activation: t.activation.to_string(),
        config: spec.render(),
        final_loss_mean: loss_mean,
        final_loss_std: loss_std,
        member_final_losses: history.final_losses.clone(),
        analytic_infimum: infimum,
        relative_error_mean: rel_mean,
        relative_error_std: rel_std,
        l2_error: l2,
        oracle,
        allocation_curve: curve,
    }
    .rounded();

    write(&dir, "report.json", &report.to_json())?;
    write(&dir, "loss_history.csv", &report::loss_history_csv(&history))?;
    write(&dir, "allocation_curve.csv", &report.allocation_curve.to_csv())?;
    Ok((report, dir))
}

/// Runs only the brute-force oracle and writes `oracle.json`.
pub fn oracle(config: &Path, overrides: &Overrides) -> Result<(OracleResult, PathBuf)> {
    let spec = load_spec(config, overrides)?;
    let Some(settings) = spec.oracle else {
        return Err(ConfigError {
            line: None,
            field: "oracle".into(),
            message: "oracle.segments and oracle.levels are required".into(),
        }
        .into());
    };
    let result = run_oracle(&spec, &settings)?;
    let dir = output_dir(&spec, overrides);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut json = serde_json::to_string_pretty(&OracleSummary::from(&result))?;
    json.push('\n');
    write(&dir, "oracle.json", &json)?;
    Ok((result, dir))
}

/// One row per report: `experiment,activation,avg_loss,std_loss,rel_error,
/// rel_error_std,l2_error,best`, with `best` marking the lowest average loss
/// within each experiment.
pub fn compare(reports: &[PathBuf]) -> Result<String> {
    if reports.is_empty() {
        bail!("compare needs at least one report");
    }
    let mut rows = vec![];
    for path in reports {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
        if schema != report::SCHEMA {
            bail!("{}: incompatible report schema '{schema}', expected '{}'", path.display(), report::SCHEMA);
        }
        let r: ExperimentReport =
            serde_json::from_value(value).with_context(|| format!("reading fields of {}", path.display()))?;
        rows.push(r);
    }
    let opt = |v: Option<f64>| v.map(report::fmt9).unwrap_or_default();
    let mut out = String::from("experiment,activation,avg_loss,std_loss,rel_error,rel_error_std,l2_error,best\n");
    for r in &rows {
        let best = rows
            .iter()
            .filter(|o| o.name == r.name)
            .all(|o| o.final_loss_mean >= r.final_loss_mean);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.name,
            r.activation,
            report::fmt9(r.final_loss_mean),
            report::fmt9(r.final_loss_std),
            opt(r.relative_error_mean),
            opt(r.relative_error_std),
            opt(r.l2_error),
            if best { "*" } else { "" }
        ));
    }
    Ok(out)
}
