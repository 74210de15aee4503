//! Convergence and variance experiments: coupled differences over doubling
//! discretization parameters, variance constants over particle counts, and
//! the inner-loop variance reduction of importance sampling.

use serde::{Deserialize, Serialize};

use crate::dlmc::{ControlSource, DlmcParams, dlmc_estimate};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::model::{ModelSpec, Observable};
use crate::particle::{coarsen_time, simulate_particles, split_particles, EmpiricalLaw};
use crate::rng::{purpose, standard_normal, StreamKey};
use crate::sampler::{drive_path, inner_samples, Control, InnerStats};

/// Which discretization parameter is doubled between the coarse and the fine
/// estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `2P` particles against two disjoint systems of `P`; same time grids.
    Particles,
    /// Law simulated with `2 N1` steps against the same particles on `N1`
    /// steps; decoupled paths unchanged.
    LawSteps,
    /// Same law; decoupled path with `2 N2` steps against `N2` steps.
    PathSteps,
    /// `N1 = N2 = N` doubled together.
    Steps,
}

impl Coupling {
    pub fn name(&self) -> &'static str {
        match self {
            Coupling::Particles => "P",
            Coupling::LawSteps => "N1",
            Coupling::PathSteps => "N2",
            Coupling::Steps => "N",
        }
    }
}

/// Fixed discretization around the swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyBase {
    pub particles: usize,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyPoint {
    /// Coarse value of the swept parameter.
    pub parameter: usize,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub coupling: Coupling,
    pub points: Vec<StudyPoint>,
    /// Least-squares slope of `log |mean|` against `log parameter`.
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

struct CoupledLaws {
    fine: EmpiricalLaw,
    coarse: Vec<EmpiricalLaw>,
    fine_path_steps: usize,
    coarse_path_steps: usize,
}

fn build_laws(
    model: &ModelSpec,
    coupling: Coupling,
    base: StudyBase,
    value: usize,
    key: StreamKey,
) -> Result<CoupledLaws> {
    Ok(match coupling {
        Coupling::Particles => {
            let fine = simulate_particles(model, 2 * value, base.n1, key)?;
            let (a, b) = split_particles(model, &fine, false)?;
            CoupledLaws {
                fine,
                coarse: vec![a, b],
                fine_path_steps: base.n2,
                coarse_path_steps: base.n2,
            }
        }
        Coupling::LawSteps => {
            let fine = simulate_particles(model, base.particles, 2 * value, key)?;
            let coarse = coarsen_time(model, &fine)?;
            CoupledLaws {
                fine,
                coarse: vec![coarse],
                fine_path_steps: base.n2,
                coarse_path_steps: base.n2,
            }
        }
        Coupling::PathSteps => {
            let law = simulate_particles(model, base.particles, base.n1, key)?;
            CoupledLaws {
                fine: law.clone(),
                coarse: vec![law],
                fine_path_steps: 2 * value,
                coarse_path_steps: value,
            }
        }
        Coupling::Steps => {
            let fine = simulate_particles(model, base.particles, 2 * value, key)?;
            let coarse = coarsen_time(model, &fine)?;
            CoupledLaws {
                fine,
                coarse: vec![coarse],
                fine_path_steps: 2 * value,
                coarse_path_steps: value,
            }
        }
    })
}

/// Estimate `E[G_fine L_fine] - mean_k E[G_coarse,k L_coarse,k]` for one value
/// of the swept parameter. Fine and coarse decoupled paths share their initial
/// state, parameter and Brownian path.
#[allow(clippy::too_many_arguments)]
pub fn coupled_difference(
    model: &ModelSpec,
    observable: &Observable,
    control: Control<'_>,
    coupling: Coupling,
    base: StudyBase,
    value: usize,
    m1: usize,
    m2: usize,
    key: StreamKey,
) -> Result<StudyPoint> {
    if value == 0 || m1 < 2 || m2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid study point: value {value}, M1 {m1}, M2 {m2}"
        )));
    }
    let law_key = key.derive(purpose::LAW);
    let inner_key = key.derive(purpose::INNER);
    let means = try_map_indexed(m1, |m| {
        let run = || {
            let laws = build_laws(model, coupling, base, value, law_key.derive(m as u64))?;
            let fine = laws.fine.slices(laws.fine_path_steps)?;
            let coarse = laws
                .coarse
                .iter()
                .map(|l| l.slices(laws.coarse_path_steps))
                .collect::<Result<Vec<_>>>()?;
            let ratio = laws.fine_path_steps / laws.coarse_path_steps;
            let key_m = inner_key.derive(m as u64);
            let mut sum = 0.0;
            for j in 0..m2 {
                let mut rng = key_m.derive(j as u64).rng();
                let x0 = model.sample_decoupled_initial(&mut rng);
                let nu = model.sample_parameter(&mut rng);
                let normals: Vec<f64> =
                    (0..laws.fine_path_steps).map(|_| standard_normal(&mut rng)).collect();
                let coarse_normals: Vec<f64> = normals
                    .chunks_exact(ratio)
                    .map(|c| c.iter().sum::<f64>() / (ratio as f64).sqrt())
                    .collect();
                let f = drive_path(model, observable, &fine, control, x0, nu, &normals)
                    .map_err(|e| e.at_inner(j))?;
                let mut c = 0.0;
                for s in &coarse {
                    c += drive_path(model, observable, s, control, x0, nu, &coarse_normals)
                        .map_err(|e| e.at_inner(j))?
                        .weighted();
                }
                sum += f.weighted() - c / coarse.len() as f64;
            }
            Ok(sum / m2 as f64)
        };
        run().map_err(|e: Error| e.at_outer(m))
    })?;
    let s = InnerStats::from_values(&means);
    Ok(StudyPoint {
        parameter: value,
        mean: s.mean,
        standard_error: (s.variance / m1 as f64).sqrt(),
    })
}

/// Coupled differences over `values`, with the fitted log-log slope.
/// Point `k` uses the stream `key / STUDY / k`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    model: &ModelSpec,
    observable: &Observable,
    control: Control<'_>,
    coupling: Coupling,
    base: StudyBase,
    values: &[usize],
    m1: usize,
    m2: usize,
    key: StreamKey,
) -> Result<ConvergenceStudy> {
    let points = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            coupled_difference(
                model,
                observable,
                control,
                coupling,
                base,
                v,
                m1,
                m2,
                key.derive_all(&[purpose::STUDY, k as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.parameter as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean.abs()).collect();
    Ok(ConvergenceStudy {
        coupling,
        slope: fit_loglog_slope(&xs, &ys),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub particles: usize,
    /// Sample variance of the inner means.
    pub v1: f64,
    /// `v1 - v2 / M2`: removes the inner sampling noise from `v1`.
    pub v1_corrected: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceStudy {
    pub points: Vec<VariancePoint>,
    pub slope_v1: f64,
    pub slope_v2: f64,
}

/// Variance constants at `N1 = N2 = n` over particle counts.
#[allow(clippy::too_many_arguments)]
pub fn variance_study(
    model: &ModelSpec,
    observable: &Observable,
    control: &ControlSource<'_>,
    particles: &[usize],
    n: usize,
    m1: usize,
    m2: usize,
    key: StreamKey,
) -> Result<VarianceStudy> {
    if m1 < 2 || m2 < 2 {
        return Err(Error::InvalidArgument("variance study needs M1, M2 >= 2".into()));
    }
    let points = particles
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let r = dlmc_estimate(
                model,
                observable,
                control,
                DlmcParams {
                    particles: p,
                    n1: n,
                    n2: n,
                    m1,
                    m2,
                },
                key.derive_all(&[purpose::STUDY, k as u64]),
            )?;
            Ok(VariancePoint {
                particles: p,
                v1: r.v1,
                v1_corrected: r.v1 - r.v2 / m2 as f64,
                v2: r.v2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.particles as f64).collect();
    let v1: Vec<f64> = points.iter().map(|p| p.v1_corrected).collect();
    let v2: Vec<f64> = points.iter().map(|p| p.v2).collect();
    Ok(VarianceStudy {
        slope_v1: fit_loglog_slope(&xs, &v1),
        slope_v2: fit_loglog_slope(&xs, &v2),
        points,
    })
}

/// Crude and importance-sampled inner estimators on one law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReduction {
    pub m2: usize,
    pub crude_mean: f64,
    pub crude_variance: f64,
    pub is_mean: f64,
    pub is_variance: f64,
    pub crude_squared_cv: f64,
    pub is_squared_cv: f64,
}

impl VarianceReduction {
    /// Crude over importance-sampled squared coefficient of variation.
    pub fn reduction_factor(&self) -> f64 {
        self.crude_squared_cv / self.is_squared_cv
    }

    /// `|is_mean - crude_mean|` in units of the combined standard error.
    pub fn mean_discrepancy(&self) -> f64 {
        let se = (self.crude_variance / self.m2 as f64 + self.is_variance / self.m2 as f64).sqrt();
        (self.is_mean - self.crude_mean).abs() / se
    }
}

/// Inner-loop comparison at matched `m2` on a single law with `n2` path
/// steps. Crude paths use `key / INNER / 0`, IS paths `key / INNER / 1`.
pub fn variance_reduction(
    model: &ModelSpec,
    observable: &Observable,
    law: &EmpiricalLaw,
    control: Control<'_>,
    n2: usize,
    m2: usize,
    key: StreamKey,
) -> Result<VarianceReduction> {
    if m2 < 2 {
        return Err(Error::InvalidArgument("need at least two inner samples".into()));
    }
    let slices = law.slices(n2)?;
    let inner = key.derive(purpose::INNER);
    let crude = InnerStats::from_values(&inner_samples(
        model,
        observable,
        &slices,
        Control::Zero,
        m2,
        inner.derive(0),
    )?);
    let is = InnerStats::from_values(&inner_samples(
        model,
        observable,
        &slices,
        control,
        m2,
        inner.derive(1),
    )?);
    Ok(VarianceReduction {
        m2,
        crude_mean: crude.mean,
        crude_variance: crude.variance,
        is_mean: is.mean,
        is_variance: is.variance,
        crude_squared_cv: crude.squared_cv(),
        is_squared_cv: is.squared_cv(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarLaw;

    #[test]
    fn slope_of_a_power_law() {
        let xs = [10.0, 20.0, 40.0, 80.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.0)).collect();
        assert!((fit_loglog_slope(&xs, &ys) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_differences_vanish() {
        let model =
            ModelSpec::kuramoto(0.0, ScalarLaw::constant(0.2), ScalarLaw::constant(0.0), 1.0).unwrap();
        let base = StudyBase {
            particles: 4,
            n1: 8,
            n2: 8,
        };
        for c in [Coupling::Particles, Coupling::LawSteps, Coupling::PathSteps, Coupling::Steps] {
            let p = coupled_difference(
                &model,
                &Observable::Cosine,
                Control::Zero,
                c,
                base,
                4,
                3,
                3,
                StreamKey::new(0),
            )
            .unwrap();
            assert_eq!(p.mean, 0.0, "{c:?}");
        }
    }
}
