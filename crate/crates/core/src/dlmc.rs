//! Double loop Monte Carlo estimator, sample-size and parameter formulas,
//! antithetic bias estimation and the adaptive driver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::{solve_control, ControlField, Grid1D, KbeOptions};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::model::{ModelSpec, Observable};
use crate::particle::{partition_antithetic, simulate_particles, EmpiricalLaw};
use crate::rng::{purpose, StreamKey};
use crate::sampler::{inner_samples, simulate_coupled_levels, Control, InnerStats};

/// How `tol` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    /// `TOL = tol * |E[G]|`, using the running estimate of `E[G]`.
    #[default]
    Relative,
    Absolute,
}

/// Error budget: total tolerance, its bias share `theta` and the confidence
/// quantile `c_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceBudget {
    pub tol: f64,
    pub theta_split: f64,
    pub c_alpha: f64,
    #[serde(default)]
    pub mode: ToleranceMode,
}

impl ToleranceBudget {
    pub fn relative(tol: f64) -> Self {
        ToleranceBudget {
            tol,
            theta_split: 0.5,
            c_alpha: 1.96,
            mode: ToleranceMode::Relative,
        }
    }

    pub fn absolute(tol: f64) -> Self {
        ToleranceBudget {
            mode: ToleranceMode::Absolute,
            ..Self::relative(tol)
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.theta_split > 0.0 && self.theta_split < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bias share must lie in (0, 1), got {}",
                self.theta_split
            )));
        }
        if !(self.c_alpha > 0.0 && self.c_alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "confidence quantile must be positive, got {}",
                self.c_alpha
            )));
        }
        Ok(self)
    }

    /// Absolute tolerance given the current estimate of `E[G]`.
    pub fn absolute_tolerance(&self, estimate: f64) -> Result<f64> {
        match self.mode {
            ToleranceMode::Absolute => Ok(self.tol),
            ToleranceMode::Relative => {
                if estimate == 0.0 || !estimate.is_finite() {
                    Err(Error::ZeroEstimate)
                } else {
                    Ok(self.tol * estimate.abs())
                }
            }
        }
    }
}

/// Hierarchy `P_l = p0 tau^l`, `N_l = n0 tau^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelParams {
    pub p0: usize,
    pub n0: usize,
    pub tau: usize,
    pub level: usize,
}

impl LevelParams {
    pub fn new(p0: usize, n0: usize, level: usize) -> Self {
        LevelParams { p0, n0, tau: 2, level }
    }

    pub fn particles(&self) -> usize {
        self.p0 * self.tau.pow(self.level as u32)
    }

    pub fn steps(&self) -> usize {
        self.n0 * self.tau.pow(self.level as u32)
    }

    pub fn at(&self, level: usize) -> Self {
        LevelParams { level, ..*self }
    }
}

/// `v1 = Var[E[G L | law]]`, `v2 = E[Var[G L | law]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceConstants {
    pub v1: f64,
    pub v2: f64,
}

/// Discretization and sample sizes of one DLMC run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlmcParams {
    pub particles: usize,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl DlmcParams {
    /// `M1 N1 P^2 + M1 M2 N2 P`.
    pub fn work_units(&self) -> f64 {
        let (p, n1, n2, m1, m2) = (
            self.particles as f64,
            self.n1 as f64,
            self.n2 as f64,
            self.m1 as f64,
            self.m2 as f64,
        );
        m1 * n1 * p * p + m1 * m2 * n2 * p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    /// `sqrt(v1 / M1)`, the sample standard error of the outer mean.
    pub standard_error: f64,
    pub particles: usize,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
    pub level: Option<usize>,
    pub bias_estimate: Option<f64>,
    /// Sample variance of the inner means.
    pub v1: f64,
    /// Mean of the inner sample variances.
    pub v2: f64,
    pub work_units: f64,
    pub wall_time: f64,
}

/// Where the importance sampling control comes from.
#[derive(Debug, Clone, Copy)]
pub enum ControlSource<'a> {
    Zero,
    /// One control solved in advance against a reference law.
    Offline(&'a ControlField),
    /// A control solved against each simulated law.
    PerLaw { grid: Grid1D, options: KbeOptions },
}

impl ControlSource<'_> {
    fn solve_for(
        &self,
        model: &ModelSpec,
        observable: &Observable,
        law: &EmpiricalLaw,
    ) -> Result<Option<ControlField>> {
        match self {
            ControlSource::PerLaw { grid, options } => {
                Ok(Some(solve_control(model, observable, Some(law), grid, options)?.1))
            }
            _ => Ok(None),
        }
    }

    fn control<'b>(&'b self, solved: &'b Option<ControlField>) -> Control<'b> {
        match (self, solved) {
            (_, Some(f)) => Control::Field(f),
            (ControlSource::Offline(f), None) => Control::Field(f),
            _ => Control::Zero,
        }
    }
}

/// `(1/M1) sum_m1 (1/M2) sum_m2 G(X(T)) L` with a fresh particle system per
/// outer sample. Outer sample `m` simulates its law from
/// `key / LAW / m` and its inner paths from `key / INNER / m / j`.
pub fn dlmc_estimate(
    model: &ModelSpec,
    observable: &Observable,
    control: &ControlSource<'_>,
    params: DlmcParams,
    key: StreamKey,
) -> Result<EstimatorResult> {
    let DlmcParams {
        particles,
        n1,
        n2,
        m1,
        m2,
    } = params;
    if particles == 0 {
        return Err(Error::InvalidParticleCount(0));
    }
    if n1 == 0 || n2 == 0 || m1 == 0 || m2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "step and sample counts must be positive: {params:?}"
        )));
    }
    let start = Instant::now();
    let law_key = key.derive(purpose::LAW);
    let inner_key = key.derive(purpose::INNER);
    let stats = try_map_indexed(m1, |m| {
        let run = || {
            let law = simulate_particles(model, particles, n1, law_key.derive(m as u64))?;
            let solved = control.solve_for(model, observable, &law)?;
            let slices = law.slices(n2)?;
            let values = inner_samples(
                model,
                observable,
                &slices,
                control.control(&solved),
                m2,
                inner_key.derive(m as u64),
            )?;
            Ok(InnerStats::from_values(&values))
        };
        run().map_err(|e: Error| e.at_outer(m))
    })?;
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let outer = InnerStats::from_values(&means);
    let v2 = stats.iter().map(|s| s.variance).sum::<f64>() / m1 as f64;
    Ok(EstimatorResult {
        estimate: outer.mean,
        standard_error: (outer.variance / m1 as f64).sqrt(),
        particles,
        n1,
        n2,
        m1,
        m2,
        level: None,
        bias_estimate: None,
        v1: outer.variance,
        v2,
        work_units: params.work_units(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Pilot estimate of `(v1, v2)` at `P = P_l`, `N1 = N2 = N_l`.
pub fn estimate_variance_constants(
    model: &ModelSpec,
    observable: &Observable,
    control: &ControlSource<'_>,
    level: LevelParams,
    m1_pilot: usize,
    m2_pilot: usize,
    key: StreamKey,
) -> Result<VarianceConstants> {
    if m1_pilot < 2 || m2_pilot < 2 {
        return Err(Error::InvalidArgument(format!(
            "pilot sizes must be at least 2, got ({m1_pilot}, {m2_pilot})"
        )));
    }
    let n = level.steps();
    let r = dlmc_estimate(
        model,
        observable,
        control,
        DlmcParams {
            particles: level.particles(),
            n1: n,
            n2: n,
            m1: m1_pilot,
            m2: m2_pilot,
        },
        key,
    )?;
    Ok(VarianceConstants { v1: r.v1, v2: r.v2 })
}

/// Monte Carlo estimate of `E[G_l L_l - ((G L)_{l-1,1} + (G L)_{l-1,2}) / 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDifference {
    pub mean: f64,
    pub standard_error: f64,
}

/// Antithetic level difference at `level >= 1`: each outer sample simulates
/// `P_l` particles with `N_l` steps and splits them into two coarse systems
/// with `P_{l-1}` particles and `N_{l-1}` steps.
pub fn estimate_bias_antithetic(
    model: &ModelSpec,
    observable: &Observable,
    control: &ControlSource<'_>,
    level: LevelParams,
    m1: usize,
    m2: usize,
    key: StreamKey,
) -> Result<LevelDifference> {
    if level.level == 0 || level.tau != 2 {
        return Err(Error::InvalidArgument(
            "antithetic differences need level >= 1 and refinement factor 2".into(),
        ));
    }
    coupled_difference(model, observable, control, level.particles(), level.steps(), m1, m2, key)
}

#[allow(clippy::too_many_arguments)]
fn coupled_difference(
    model: &ModelSpec,
    observable: &Observable,
    control: &ControlSource<'_>,
    particles: usize,
    steps: usize,
    m1: usize,
    m2: usize,
    key: StreamKey,
) -> Result<LevelDifference> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::InvalidArgument("sample counts must be positive".into()));
    }
    let law_key = key.derive(purpose::LAW);
    let inner_key = key.derive(purpose::INNER);
    let means = try_map_indexed(m1, |m| {
        let run = || {
            let fine = simulate_particles(model, particles, steps, law_key.derive(m as u64))?;
            let (a, b) = partition_antithetic(model, &fine)?;
            let solved = [
                control.solve_for(model, observable, &fine)?,
                control.solve_for(model, observable, &a)?,
                control.solve_for(model, observable, &b)?,
            ];
            let fine_slices = fine.slices(steps)?;
            let coarse_slices = [a.slices(steps / 2)?, b.slices(steps / 2)?];
            let key_m = inner_key.derive(m as u64);
            let mut sum = 0.0;
            for j in 0..m2 {
                let mut rng = key_m.derive(j as u64).rng();
                let s = simulate_coupled_levels(
                    model,
                    observable,
                    &fine_slices,
                    [&coarse_slices[0], &coarse_slices[1]],
                    control.control(&solved[0]),
                    [control.control(&solved[1]), control.control(&solved[2])],
                    &mut rng,
                )
                .map_err(|e| e.at_inner(j))?;
                sum += s.difference();
            }
            Ok(sum / m2 as f64)
        };
        run().map_err(|e: Error| e.at_outer(m))
    })?;
    let s = InnerStats::from_values(&means);
    Ok(LevelDifference {
        mean: s.mean,
        standard_error: (s.variance / m1 as f64).sqrt(),
    })
}

/// Sample sizes meeting the statistical constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub m1: usize,
    pub m2: usize,
    /// Both variance constants were zero; `(1, 1)` was returned.
    pub degenerate: bool,
}

/// `M1 = (V1 + sqrt(V1 V2 / P)) C^2 / ((1 - theta)^2 TOL^2)`,
/// `M2 = sqrt(V2 P / V1)`, rounded up.
pub fn optimal_samples(
    v: VarianceConstants,
    particles: usize,
    budget: &ToleranceBudget,
    tol_abs: f64,
) -> Result<SampleSizes> {
    let budget = budget.validated()?;
    if !(tol_abs > 0.0 && tol_abs.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol_abs}")));
    }
    if !(v.v1 >= 0.0 && v.v2 >= 0.0 && v.v1.is_finite() && v.v2.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid variance constants {v:?}")));
    }
    if particles == 0 {
        return Err(Error::InvalidParticleCount(0));
    }
    let c = budget.c_alpha;
    let k = c * c / ((1.0 - budget.theta_split).powi(2) * tol_abs * tol_abs);
    let p = particles as f64;
    let round = |x: f64| (x.ceil().max(1.0)) as usize;
    if v.v1 == 0.0 && v.v2 == 0.0 {
        return Ok(SampleSizes {
            m1: 1,
            m2: 1,
            degenerate: true,
        });
    }
    if v.v1 == 0.0 {
        return Ok(SampleSizes {
            m1: 1,
            m2: round(k * v.v2),
            degenerate: false,
        });
    }
    Ok(SampleSizes {
        m1: round((v.v1 + (v.v1 * v.v2 / p).sqrt()) * k),
        m2: round((v.v2 * p / v.v1).sqrt()),
        degenerate: false,
    })
}

/// Constants of the error and work model: bias `C_p / P + C_n1 / N1 + C_n2 / N2`,
/// variance `C_1 / P + C_2 / M2` per outer sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub cp: f64,
    pub cn1: f64,
    pub cn2: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Work-minimizing `(P, N1, N2, M1, M2)`, both as real numbers and rounded up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalParameters {
    pub params: DlmcParams,
    pub exact: [f64; 5],
}

pub fn optimal_parameters(
    constants: ModelConstants,
    budget: &ToleranceBudget,
    tol_abs: f64,
) -> Result<OptimalParameters> {
    let budget = budget.validated()?;
    let ModelConstants { cp, cn1, cn2, c1, c2 } = constants;
    if [cp, cn1, cn2, c1, c2, tol_abs].iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "constants and tolerance must be positive: {constants:?}, tol {tol_abs}"
        )));
    }
    let theta = budget.theta_split;
    let ca2 = budget.c_alpha * budget.c_alpha;
    let alpha = (c2 / c1).cbrt() * (cn1 / cn2).powf(2.0 / 3.0);
    let gamma = (c2 / c1).powf(2.0 / 3.0) * (cn1 / cn2).cbrt();
    let beta = (alpha * alpha * cp / cn1) / (alpha + gamma);
    let bias_sum = cp + beta * cn1 / alpha + beta * cn2;
    let p = bias_sum / (theta * tol_abs);
    let n1 = (alpha * cp / beta + cn1 + alpha * cn2) / (theta * tol_abs);
    let n2 = (cp / beta + cn1 / alpha + cn2) / (theta * tol_abs);
    let m1 = theta / (1.0 - theta).powi(2) * ca2 * (c1 + c2 / gamma) / (bias_sum * tol_abs);
    let m2 = gamma * bias_sum / (theta * tol_abs);
    let up = |x: f64| x.ceil().max(1.0) as usize;
    Ok(OptimalParameters {
        params: DlmcParams {
            particles: up(p),
            n1: up(n1),
            n2: up(n2),
            m1: up(m1),
            m2: up(m2),
        },
        exact: [p, n1, n2, m1, m2],
    })
}

/// Settings of the adaptive driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSettings {
    pub p0: usize,
    pub n0: usize,
    pub budget: ToleranceBudget,
    /// Sample sizes of the initial rough estimate.
    pub rough_m1: usize,
    pub rough_m2: usize,
    /// Pilot sizes for the variance constants.
    pub pilot_m1: usize,
    pub pilot_m2: usize,
    /// Lower bounds on the bias estimator's sample sizes.
    pub bias_min_m1: usize,
    pub bias_min_m2: usize,
    /// Variance constants are estimated by pilot runs up to this level and
    /// extrapolated beyond it.
    pub pilot_levels: usize,
    pub level_cap: usize,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        AdaptiveSettings {
            p0: 5,
            n0: 4,
            budget: ToleranceBudget::relative(0.2),
            rough_m1: 1000,
            rough_m2: 100,
            pilot_m1: 50,
            pilot_m2: 1000,
            bias_min_m1: 100,
            bias_min_m2: 50,
            pilot_levels: 3,
            level_cap: 12,
        }
    }
}

/// How the variance constants of a level were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    Pilot,
    Extrapolated,
}

/// Progress record of one adaptive level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub particles: usize,
    pub steps: usize,
    pub v1: f64,
    pub v2: f64,
    pub variance_source: VarianceSource,
    pub tol_abs: f64,
    pub m1: usize,
    pub m2: usize,
    /// `2 |E[Delta G_{l+1}]|` from the antithetic sampler.
    pub bias_direct: f64,
    /// Bias used for the stopping test.
    pub bias: f64,
    pub alpha_hat: f64,
    pub standard_error: f64,
    pub work_units: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOutcome {
    pub result: EstimatorResult,
    pub trace: Vec<LevelRecord>,
    /// Work of every run made by the driver, pilots included.
    pub total_work_units: f64,
}

/// Increase the level until the estimated bias is below
/// `theta * TOL`; at each level size the samples for the statistical
/// constraint and refresh the estimate.
///
/// Streams: the rough estimate uses `key / ESTIMATE / u64::MAX`, level `l`
/// uses `key / PILOT / l`, `key / BIAS / l` and `key / ESTIMATE / l`.
pub fn adaptive_dlmc(
    model: &ModelSpec,
    observable: &Observable,
    control: &ControlSource<'_>,
    settings: &AdaptiveSettings,
    key: StreamKey,
    mut on_level: impl FnMut(&LevelRecord),
) -> Result<AdaptiveOutcome> {
    let budget = settings.budget.validated()?;
    if settings.p0 < 1 || settings.n0 < 1 {
        return Err(Error::InvalidArgument("p0 and n0 must be positive".into()));
    }
    let hierarchy = LevelParams::new(settings.p0, settings.n0, 0);
    let mut total_work = 0.0;

    let rough = dlmc_estimate(
        model,
        observable,
        control,
        DlmcParams {
            particles: settings.p0,
            n1: settings.n0,
            n2: settings.n0,
            m1: settings.rough_m1,
            m2: settings.rough_m2,
        },
        key.derive_all(&[purpose::ESTIMATE, u64::MAX]),
    )?;
    total_work += rough.work_units;
    let mut alpha_hat = rough.estimate;

    let mut trace: Vec<LevelRecord> = Vec::new();
    let mut pilot_ref: Option<(usize, VarianceConstants)> = None;
    for level in 0..=settings.level_cap {
        let lp = hierarchy.at(level);
        let (p, n) = (lp.particles(), lp.steps());

        let (v, source) = match pilot_ref {
            Some((p_ref, v_ref)) if level > settings.pilot_levels => (
                VarianceConstants {
                    v1: v_ref.v1 * p_ref as f64 / p as f64,
                    v2: v_ref.v2,
                },
                VarianceSource::Extrapolated,
            ),
            _ => {
                let v = estimate_variance_constants(
                    model,
                    observable,
                    control,
                    lp,
                    settings.pilot_m1,
                    settings.pilot_m2,
                    key.derive_all(&[purpose::PILOT, level as u64]),
                )?;
                total_work += DlmcParams {
                    particles: p,
                    n1: n,
                    n2: n,
                    m1: settings.pilot_m1,
                    m2: settings.pilot_m2,
                }
                .work_units();
                pilot_ref = Some((p, v));
                (v, VarianceSource::Pilot)
            }
        };

        let tol_abs = budget.absolute_tolerance(alpha_hat)?;
        let sizes = optimal_samples(v, p, &budget, tol_abs)?;

        let (bm1, bm2) = (sizes.m1.max(settings.bias_min_m1), sizes.m2.max(settings.bias_min_m2));
        let diff = estimate_bias_antithetic(
            model,
            observable,
            control,
            lp.at(level + 1),
            bm1,
            bm2,
            key.derive_all(&[purpose::BIAS, level as u64]),
        )?;
        let fine = lp.at(level + 1);
        total_work += DlmcParams {
            particles: fine.particles(),
            n1: fine.steps(),
            n2: fine.steps(),
            m1: bm1,
            m2: bm2,
        }
        .work_units();
        let bias_direct = 2.0 * diff.mean.abs();
        let bias = if level > settings.pilot_levels {
            let k = trace.len();
            bias_direct
                .max(trace[k - 1].bias / 2.0)
                .max(trace[k - 2].bias / 4.0)
        } else {
            bias_direct
        };

        let params = DlmcParams {
            particles: p,
            n1: n,
            n2: n,
            m1: sizes.m1,
            m2: sizes.m2,
        };
        let mut result = dlmc_estimate(
            model,
            observable,
            control,
            params,
            key.derive_all(&[purpose::ESTIMATE, level as u64]),
        )?;
        total_work += result.work_units;
        alpha_hat = result.estimate;
        let tol_now = budget.absolute_tolerance(alpha_hat)?;

        // level 0 is accepted only when nothing at all varies
        let degenerate = v.v1 == 0.0 && v.v2 == 0.0 && bias == 0.0;
        let converged = bias <= budget.theta_split * tol_now && (level >= 1 || degenerate);
        let record = LevelRecord {
            level,
            particles: p,
            steps: n,
            v1: v.v1,
            v2: v.v2,
            variance_source: source,
            tol_abs: tol_now,
            m1: sizes.m1,
            m2: sizes.m2,
            bias_direct,
            bias,
            alpha_hat,
            standard_error: result.standard_error,
            work_units: result.work_units,
            converged,
        };
        on_level(&record);
        trace.push(record);
        if converged {
            result.level = Some(level);
            result.bias_estimate = Some(bias);
            return Ok(AdaptiveOutcome {
                result,
                trace,
                total_work_units: total_work,
            });
        }
    }
    Err(Error::LevelCapExceeded {
        cap: settings.level_cap,
        trace,
    })
}
