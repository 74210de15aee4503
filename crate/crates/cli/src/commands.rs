//! The experiment commands. Each returns a serializable report and writes its
//! files under `cfg.out`.
//!
//! Streams, all below `StreamKey::new(cfg.seed)`:
//! offline control law `/ OFFLINE_LAW`; estimate run `k` of the `M2` sweep
//! `/ STUDY / k`; adaptive runs use the root key; convergence study `k`
//! `/ STUDY / k` and the variance study `/ STUDY / 4`; variance reduction
//! `/ ESTIMATE`; table1 cell `(i, j, c)` `/ STUDY / i / j / c`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use mvdlmc::control::{solve_control, ControlField, Grid1D, KbeOptions};
use mvdlmc::dlmc::{adaptive_dlmc, dlmc_estimate, ControlSource, EstimatorResult, LevelRecord};
use mvdlmc::model::{ModelSpec, Observable};
use mvdlmc::particle::simulate_particles;
use mvdlmc::rng::{purpose, StreamKey};
use mvdlmc::sampler::Control;
use mvdlmc::studies::{
    convergence_study, variance_reduction, variance_study, ConvergenceStudy, Coupling, StudyBase,
    VarianceReduction, VarianceStudy,
};

use crate::artifact::{model_hash, read_control, write_control};
use crate::config::{ControlMode, RunConfig};
use crate::CliError;

fn root_key(cfg: &RunConfig) -> StreamKey {
    StreamKey::new(cfg.seed)
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    Ok(cfg.out.join(name))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)
        .map_err(|e| CliError::io(path, e.into()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Solve the control against a reference particle system of the configured
/// size.
fn solve_offline(
    cfg: &RunConfig,
    model: &ModelSpec,
    observable: &Observable,
) -> Result<(mvdlmc::control::ValueField, ControlField), CliError> {
    let law = simulate_particles(
        model,
        cfg.control.particles,
        cfg.control.steps,
        root_key(cfg).derive(purpose::OFFLINE_LAW),
    )?;
    Ok(solve_control(model, observable, Some(&law), &cfg.grid()?, &cfg.kbe_options())?)
}

/// Control as configured, owning any solved field.
pub enum ResolvedControl {
    Zero,
    Offline(ControlField),
    PerLaw { grid: Grid1D, options: KbeOptions },
}

impl ResolvedControl {
    pub fn source(&self) -> ControlSource<'_> {
        match self {
            ResolvedControl::Zero => ControlSource::Zero,
            ResolvedControl::Offline(f) => ControlSource::Offline(f),
            ResolvedControl::PerLaw { grid, options } => ControlSource::PerLaw {
                grid: *grid,
                options: *options,
            },
        }
    }
}

/// Load the artifact when one is configured, otherwise solve in-process.
pub fn resolve_control(
    cfg: &RunConfig,
    model: &ModelSpec,
    observable: &Observable,
) -> Result<ResolvedControl, CliError> {
    Ok(match cfg.control.mode {
        ControlMode::None => ResolvedControl::Zero,
        ControlMode::PerLaw => ResolvedControl::PerLaw {
            grid: cfg.grid()?,
            options: cfg.kbe_options(),
        },
        ControlMode::Offline => match &cfg.control.artifact {
            Some(path) => ResolvedControl::Offline(read_control(path, cfg)?),
            None => ResolvedControl::Offline(solve_offline(cfg, model, observable)?.1),
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub artifact: PathBuf,
    pub model_hash: String,
    pub n_space: usize,
    pub n_time: usize,
    pub max_abs_control: f64,
    /// `v(0, x)` at the node nearest `x = 0`.
    pub value_at_origin: f64,
}

pub fn solve_control_cmd(cfg: &RunConfig) -> Result<SolveReport, CliError> {
    let model = cfg.model_spec()?;
    let observable = cfg.observable()?;
    let (v, zeta) = solve_offline(cfg, &model, &observable)?;
    let artifact = match &cfg.control.artifact {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            p.clone()
        }
        None => out_file(cfg, "control.bin")?,
    };
    let hash = model_hash(cfg);
    write_control(&artifact, &hash, &zeta)?;
    if cfg.control.dump_csv {
        let p = out_file(cfg, "value.csv")?;
        v.write_csv(create(&p)?).map_err(|e| CliError::io(&p, e))?;
        let p = out_file(cfg, "control.csv")?;
        zeta.write_csv(create(&p)?).map_err(|e| CliError::io(&p, e))?;
    }
    let g = *zeta.grid();
    let origin = ((g.x_bound / g.dx()).round() as usize).min(g.n_space);
    Ok(SolveReport {
        artifact,
        model_hash: hex::encode(hash),
        n_space: g.n_space,
        n_time: g.n_time,
        max_abs_control: zeta.max_abs(),
        value_at_origin: v.at(0, origin),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRun {
    pub result: EstimatorResult,
    /// `v2 / estimate^2`: squared coefficient of variation of one inner sample.
    pub squared_cv: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub config: RunConfig,
    pub runs: Vec<EstimateRun>,
}

pub fn estimate_cmd(cfg: &RunConfig) -> Result<EstimateReport, CliError> {
    let model = cfg.model_spec()?;
    let observable = cfg.observable()?;
    let control = resolve_control(cfg, &model, &observable)?;
    let runs = cfg
        .estimate
        .m2
        .iter()
        .enumerate()
        .map(|(k, &m2)| {
            let result = dlmc_estimate(
                &model,
                &observable,
                &control.source(),
                cfg.estimate.params(m2),
                root_key(cfg).derive_all(&[purpose::STUDY, k as u64]),
            )?;
            Ok(EstimateRun {
                squared_cv: result.v2 / (result.estimate * result.estimate),
                result,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = EstimateReport {
        config: cfg.clone(),
        runs,
    };
    write_json(&out_file(cfg, "estimate.json")?, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptiveReport {
    pub config: RunConfig,
    pub result: EstimatorResult,
    pub total_work_units: f64,
    pub trace: Vec<LevelRecord>,
}

/// Levels are appended to `adaptive_trace.jsonl` as they finish, so the
/// trace survives a level-cap failure.
pub fn adaptive_cmd(cfg: &RunConfig) -> Result<AdaptiveReport, CliError> {
    let model = cfg.model_spec()?;
    let observable = cfg.observable()?;
    let control = resolve_control(cfg, &model, &observable)?;
    let trace_path = out_file(cfg, "adaptive_trace.jsonl")?;
    let mut trace = create(&trace_path)?;
    let mut write_err = None;
    let outcome = adaptive_dlmc(
        &model,
        &observable,
        &control.source(),
        &cfg.adaptive.settings(cfg.adaptive.tol_r),
        root_key(cfg),
        |rec| {
            let line = serde_json::to_string(rec).expect("records serialize");
            if let Err(e) = writeln!(trace, "{line}").and_then(|_| trace.flush()) {
                write_err.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_err {
        return Err(CliError::io(&trace_path, e));
    }
    let outcome = outcome?;
    let report = AdaptiveReport {
        config: cfg.clone(),
        result: outcome.result,
        total_work_units: outcome.total_work_units,
        trace: outcome.trace,
    };
    write_json(&out_file(cfg, "adaptive.json")?, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub studies: Vec<ConvergenceStudy>,
    pub variance: VarianceStudy,
}

pub fn verify_assumptions_cmd(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let model = cfg.model_spec()?;
    let observable = cfg.observable()?;
    let resolved = if observable.sign_constant() {
        resolve_control(cfg, &model, &observable)?
    } else {
        // no control exists for a sign-changing observable
        ResolvedControl::Zero
    };
    let control = match &resolved {
        ResolvedControl::Zero => Control::Zero,
        ResolvedControl::Offline(f) => Control::Field(f),
        ResolvedControl::PerLaw { .. } => {
            return Err(CliError::Config(
                "convergence studies need an offline control or none".into(),
            ))
        }
    };
    let v = &cfg.verify;
    let with_particles = |n1, n2| StudyBase {
        particles: v.base_particles,
        n1,
        n2,
    };
    let plan = [
        (Coupling::Particles, v.particle_base(), &v.particles),
        (Coupling::LawSteps, with_particles(0, v.reference_steps), &v.steps),
        (Coupling::PathSteps, with_particles(v.reference_steps, 0), &v.steps),
        (Coupling::Steps, with_particles(0, 0), &v.steps),
    ];
    let key = root_key(cfg);
    let studies = plan
        .iter()
        .enumerate()
        .map(|(k, (coupling, base, values))| {
            convergence_study(
                &model,
                &observable,
                control,
                *coupling,
                *base,
                values,
                v.m1,
                v.m2,
                key.derive_all(&[purpose::STUDY, k as u64]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let variance = variance_study(
        &model,
        &observable,
        &resolved.source(),
        &v.variance_particles,
        v.variance_steps,
        v.variance_m1,
        v.variance_m2,
        key.derive_all(&[purpose::STUDY, 4]),
    )?;

    let p = out_file(cfg, "convergence.csv")?;
    let mut w = create(&p)?;
    let io = |e| CliError::io(&p, e);
    writeln!(w, "study,parameter,mean,standard_error").map_err(io)?;
    for s in &studies {
        for pt in &s.points {
            writeln!(w, "{},{},{:e},{:e}", s.coupling.name(), pt.parameter, pt.mean, pt.standard_error)
                .map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let p = out_file(cfg, "variance.csv")?;
    let mut w = create(&p)?;
    let io = |e| CliError::io(&p, e);
    writeln!(w, "particles,v1,v1_corrected,v2").map_err(io)?;
    for pt in &variance.points {
        writeln!(w, "{},{:e},{:e},{:e}", pt.particles, pt.v1, pt.v1_corrected, pt.v2).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let p = out_file(cfg, "slopes.csv")?;
    let mut w = create(&p)?;
    let io = |e| CliError::io(&p, e);
    writeln!(w, "quantity,slope").map_err(io)?;
    for s in &studies {
        writeln!(w, "bias_vs_{},{}", s.coupling.name(), s.slope).map_err(io)?;
    }
    writeln!(w, "v1_vs_P,{}", variance.slope_v1).map_err(io)?;
    writeln!(w, "v2_vs_P,{}", variance.slope_v2).map_err(io)?;
    w.flush().map_err(io)?;

    Ok(VerifyReport { studies, variance })
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReductionReport {
    pub config: RunConfig,
    #[serde(flatten)]
    pub comparison: VarianceReduction,
    pub reduction_factor: f64,
}

/// Crude against importance-sampled inner estimators on one law.
pub fn variance_reduction_cmd(cfg: &RunConfig) -> Result<VarianceReductionReport, CliError> {
    let model = cfg.model_spec()?;
    let observable = cfg.observable()?;
    let c = &cfg.variance_reduction;
    let key = root_key(cfg).derive(purpose::ESTIMATE);
    let law = simulate_particles(&model, c.particles, c.n1, key.derive(purpose::LAW))?;
    let per_law;
    let resolved = resolve_control(cfg, &model, &observable)?;
    let control = match &resolved {
        ResolvedControl::Zero => Control::Zero,
        ResolvedControl::Offline(f) => Control::Field(f),
        ResolvedControl::PerLaw { grid, options } => {
            per_law = solve_control(&model, &observable, Some(&law), grid, options)?.1;
            Control::Field(&per_law)
        }
    };
    let comparison = variance_reduction(&model, &observable, &law, control, c.n2, c.m2, key)?;
    let report = VarianceReductionReport {
        config: cfg.clone(),
        reduction_factor: comparison.reduction_factor(),
        comparison,
    };
    write_json(&out_file(cfg, "variance_reduction.json")?, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub threshold: f64,
    pub tol_r: f64,
    pub importance_sampling: bool,
    pub level: Option<usize>,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub estimate: Option<f64>,
    pub work_units: Option<f64>,
    pub total_work_units: Option<f64>,
    /// Set when the run failed, e.g. at the level cap.
    pub error: Option<String>,
}

/// Adaptive runs over thresholds and tolerances, with and without the
/// control. Failed cells are reported, not fatal.
pub fn table1_cmd(cfg: &RunConfig) -> Result<Vec<Table1Row>, CliError> {
    let model = cfg.model_spec()?;
    let t = &cfg.table1;
    let mut rows = Vec::new();
    for (i, &threshold) in t.thresholds.iter().enumerate() {
        let observable = cfg.observable_with_threshold(threshold)?;
        let field = match cfg.control.mode {
            ControlMode::None => None,
            _ => Some(solve_offline(cfg, &model, &observable)?.1),
        };
        for (j, &tol_r) in t.tolerances.iter().enumerate() {
            let mut variants = Vec::new();
            if let Some(f) = &field {
                variants.push((true, ControlSource::Offline(f)));
            }
            if t.crude || field.is_none() {
                variants.push((false, ControlSource::Zero));
            }
            for (is, source) in variants {
                let key = root_key(cfg).derive_all(&[purpose::STUDY, i as u64, j as u64, is as u64]);
                let run = adaptive_dlmc(
                    &model,
                    &observable,
                    &source,
                    &cfg.adaptive.settings(tol_r),
                    key,
                    |_| {},
                );
                let row = match run {
                    Ok(o) => Table1Row {
                        threshold,
                        tol_r,
                        importance_sampling: is,
                        level: o.result.level,
                        m1: Some(o.result.m1),
                        m2: Some(o.result.m2),
                        estimate: Some(o.result.estimate),
                        work_units: Some(o.result.work_units),
                        total_work_units: Some(o.total_work_units),
                        error: None,
                    },
                    Err(e) => Table1Row {
                        threshold,
                        tol_r,
                        importance_sampling: is,
                        level: None,
                        m1: None,
                        m2: None,
                        estimate: None,
                        work_units: None,
                        total_work_units: None,
                        error: Some(e.to_string()),
                    },
                };
                rows.push(row);
            }
        }
    }

    let p = out_file(cfg, "table1.csv")?;
    let mut w = create(&p)?;
    let io = |e| CliError::io(&p, e);
    writeln!(w, "threshold,tol_r,importance_sampling,level,m1,m2,estimate,work_units,total_work_units,error")
        .map_err(io)?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.threshold,
            r.tol_r,
            r.importance_sampling,
            opt(r.level.map(|x| x.to_string())),
            opt(r.m1.map(|x| x.to_string())),
            opt(r.m2.map(|x| x.to_string())),
            opt(r.estimate.map(|x| format!("{x:e}"))),
            opt(r.work_units.map(|x| format!("{x:e}"))),
            opt(r.total_work_units.map(|x| format!("{x:e}"))),
            opt(r.error.as_ref().map(|e| format!("\"{}\"", e.replace('"', "'")))),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(rows)
}
