//! Importance-sampled Euler paths of the decoupled SDE
//!
//! ```text
//! dX = (b(X, m1(t, X)) + sigma(X, m2(t, X)) zeta(t, X)) dt + sigma(X, m2(t, X)) dW
//! ```
//!
//! whose kernel means are taken against a fixed empirical law, together with
//! the discrete likelihood ratio
//! `L = prod_n exp(-dt zeta_n^2 / 2 - sqrt(dt) eps_n zeta_n)`.

use rand::Rng;

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Observable};
use crate::particle::{EmpiricalLaw, TimeSlices};
use crate::rng::{standard_normal, StreamKey};

/// Drift shift used by the sampler.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    Zero,
    Field(&'a ControlField),
}

impl Control<'_> {
    pub fn is_zero(&self) -> bool {
        matches!(self, Control::Zero)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            Control::Zero => Ok(0.0),
            Control::Field(f) => f.eval(t, x),
        }
    }
}

/// One decoupled path: terminal state, likelihood and `G` at the terminal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSample {
    pub terminal_state: f64,
    pub likelihood: f64,
    pub log_likelihood: f64,
    pub observable_value: f64,
}

impl WeightedSample {
    /// `G(X(T)) L`, the quantity averaged by the estimators.
    pub fn weighted(&self) -> f64 {
        self.observable_value * self.likelihood
    }
}

/// Run one path from `x0` with parameter `nu`, driven by the given standard
/// normals. The number of steps is `slices.n_steps()`.
pub fn drive_path(
    model: &ModelSpec,
    observable: &Observable,
    slices: &TimeSlices<'_>,
    control: Control<'_>,
    x0: f64,
    nu: f64,
    normals: &[f64],
) -> Result<WeightedSample> {
    let n_steps = slices.n_steps();
    if normals.len() != n_steps {
        return Err(Error::InvalidArgument(format!(
            "{} normals for {n_steps} steps",
            normals.len()
        )));
    }
    let dt = slices.horizon() / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut x = x0;
    let mut log_l = 0.0;
    for (n, &eps) in normals.iter().enumerate() {
        let set = slices.at(n);
        let m1 = set.kernel_mean(&model.drift_kernel, x);
        let m2 = set.kernel_mean(&model.diffusion_kernel, x);
        let b = model.drift(x, m1, nu);
        let s = model.diffusion(x, m2);
        let z = control.eval(n as f64 * dt, x)?;
        x += (b + s * z) * dt + s * sqrt_dt * eps;
        if !control.is_zero() {
            log_l += -0.5 * dt * z * z - sqrt_dt * eps * z;
        }
        if !(x.is_finite() && log_l.is_finite()) {
            return Err(Error::NonFinitePath {
                step: n,
                state: x,
                log_likelihood: log_l,
            });
        }
    }
    let likelihood = if control.is_zero() { 1.0 } else { log_l.exp() };
    Ok(WeightedSample {
        terminal_state: x,
        likelihood,
        log_likelihood: log_l,
        observable_value: observable.eval(x),
    })
}

/// Randomness of one decoupled path: initial state, parameter and normals,
/// drawn in that order from one stream.
fn draw_path_inputs<R: Rng + ?Sized>(model: &ModelSpec, n_steps: usize, rng: &mut R) -> (f64, f64, Vec<f64>) {
    let x0 = model.sample_decoupled_initial(rng);
    let nu = model.sample_parameter(rng);
    let normals = (0..n_steps).map(|_| standard_normal(rng)).collect();
    (x0, nu, normals)
}

/// One decoupled path with a fresh initial state, parameter and noise.
pub fn simulate_decoupled_path<R: Rng + ?Sized>(
    model: &ModelSpec,
    observable: &Observable,
    slices: &TimeSlices<'_>,
    control: Control<'_>,
    rng: &mut R,
) -> Result<WeightedSample> {
    let (x0, nu, normals) = draw_path_inputs(model, slices.n_steps(), rng);
    drive_path(model, observable, slices, control, x0, nu, &normals)
}

/// Sample mean and unbiased sample variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStats {
    pub mean: f64,
    pub variance: f64,
}

impl InnerStats {
    pub fn from_values(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        InnerStats { mean, variance }
    }

    /// Squared coefficient of variation `variance / mean^2`.
    pub fn squared_cv(&self) -> f64 {
        self.variance / (self.mean * self.mean)
    }
}

/// `G(X(T)) L` over `m2` paths given the law; path `j` uses `key.derive(j)`.
pub fn inner_samples(
    model: &ModelSpec,
    observable: &Observable,
    slices: &TimeSlices<'_>,
    control: Control<'_>,
    m2: usize,
    key: StreamKey,
) -> Result<Vec<f64>> {
    (0..m2)
        .map(|j| {
            let mut rng = key.derive(j as u64).rng();
            simulate_decoupled_path(model, observable, slices, control, &mut rng)
                .map(|s| s.weighted())
                .map_err(|e| e.at_inner(j))
        })
        .collect()
}

/// Conditional mean and variance of `G(X(T)) L` given the law from `m2 >= 2`
/// paths with `n2` steps.
pub fn inner_estimator(
    model: &ModelSpec,
    observable: &Observable,
    law: &EmpiricalLaw,
    control: Control<'_>,
    n2: usize,
    m2: usize,
    key: StreamKey,
) -> Result<InnerStats> {
    if m2 < 2 {
        return Err(Error::InvalidArgument(format!("inner sample size must be at least 2, got {m2}")));
    }
    let slices = law.slices(n2)?;
    let values = inner_samples(model, observable, &slices, control, m2, key)?;
    Ok(InnerStats::from_values(&values))
}

/// A fine path and two coarse paths sharing initial state, parameter and
/// Brownian path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledSample {
    pub fine: WeightedSample,
    pub coarse: [WeightedSample; 2],
}

impl CoupledSample {
    /// `G_fine L_fine - (G_c1 L_c1 + G_c2 L_c2) / 2`.
    pub fn difference(&self) -> f64 {
        self.fine.weighted() - 0.5 * (self.coarse[0].weighted() + self.coarse[1].weighted())
    }
}

/// Fine path on `fine` with its step count, coarse paths on each coarse law
/// with half the steps, driven by `(e_{2n} + e_{2n+1}) / sqrt(2)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled_levels<R: Rng + ?Sized>(
    model: &ModelSpec,
    observable: &Observable,
    fine: &TimeSlices<'_>,
    coarse: [&TimeSlices<'_>; 2],
    control_fine: Control<'_>,
    control_coarse: [Control<'_>; 2],
    rng: &mut R,
) -> Result<CoupledSample> {
    let n_fine = fine.n_steps();
    if !n_fine.is_multiple_of(2) || coarse.iter().any(|c| 2 * c.n_steps() != n_fine) {
        return Err(Error::InvalidArgument(
            "coarse paths need exactly half the fine steps".into(),
        ));
    }
    let (x0, nu, normals) = draw_path_inputs(model, n_fine, rng);
    let aggregated: Vec<f64> = normals
        .chunks_exact(2)
        .map(|p| (p[0] + p[1]) * std::f64::consts::FRAC_1_SQRT_2)
        .collect();
    let f = drive_path(model, observable, fine, control_fine, x0, nu, &normals)?;
    let c0 = drive_path(model, observable, coarse[0], control_coarse[0], x0, nu, &aggregated)?;
    let c1 = drive_path(model, observable, coarse[1], control_coarse[1], x0, nu, &aggregated)?;
    Ok(CoupledSample {
        fine: f,
        coarse: [c0, c1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Grid1D;
    use crate::model::ScalarLaw;
    use crate::particle::{partition_antithetic, simulate_particles};

    fn abm(nu: f64, x0: f64) -> ModelSpec {
        ModelSpec::zero_kernel(0.4, ScalarLaw::constant(nu), ScalarLaw::constant(x0), 1.0).unwrap()
    }

    fn constant_field(c: f64) -> ControlField {
        let grid = Grid1D::new(4.0, 0.5, 0.5, 1.0).unwrap();
        let n = (grid.n_time + 1) * grid.n_nodes();
        ControlField::from_values(grid, vec![c; n]).unwrap()
    }

    #[test]
    fn zero_control_has_unit_likelihood() {
        let model = abm(0.1, 0.0);
        let law = simulate_particles(&model, 4, 8, StreamKey::new(0)).unwrap();
        let slices = law.slices(8).unwrap();
        let mut rng = StreamKey::new(1).rng();
        for _ in 0..100 {
            let s = simulate_decoupled_path(&model, &Observable::Cosine, &slices, Control::Zero, &mut rng)
                .unwrap();
            assert_eq!(s.likelihood, 1.0);
        }
    }

    #[test]
    fn single_step_likelihood() {
        let model = abm(0.0, 0.0);
        let law = simulate_particles(&model, 2, 1, StreamKey::new(0)).unwrap();
        let slices = law.slices(1).unwrap();
        let field = constant_field(1.0);
        let s = drive_path(
            &model,
            &Observable::constant(1.0),
            &slices,
            Control::Field(&field),
            0.0,
            0.0,
            &[0.0],
        )
        .unwrap();
        assert!((s.likelihood - (-0.5f64).exp()).abs() < 1e-15);
        assert!((s.terminal_state - 0.4).abs() < 1e-15);
    }

    #[test]
    fn log_likelihood_is_the_sum_of_step_factors() {
        let model = abm(0.1, 0.0);
        let law = simulate_particles(&model, 2, 16, StreamKey::new(0)).unwrap();
        let slices = law.slices(16).unwrap();
        let grid = Grid1D::new(4.0, 0.1, 0.5, 1.0).unwrap();
        let values: Vec<f64> = (0..=grid.n_time)
            .flat_map(|n| (0..grid.n_nodes()).map(move |i| 0.3 * grid.x(i) + 0.01 * n as f64))
            .collect();
        let field = ControlField::from_values(grid, values).unwrap();
        let normals: Vec<f64> = {
            let mut rng = StreamKey::new(4).rng();
            (0..16).map(|_| standard_normal(&mut rng)).collect()
        };
        let s = drive_path(
            &model,
            &Observable::Cosine,
            &slices,
            Control::Field(&field),
            0.0,
            0.1,
            &normals,
        )
        .unwrap();
        // replay the path, collecting each factor separately
        let dt = 1.0 / 16.0;
        let mut x = 0.0;
        let mut factors = Vec::new();
        for (n, e) in normals.iter().enumerate() {
            let z = field.eval(n as f64 * dt, x).unwrap();
            factors.push((-0.5 * dt * z * z - dt.sqrt() * e * z).exp());
            x += (0.1 + 0.4 * z) * dt + 0.4 * dt.sqrt() * e;
        }
        let product: f64 = factors.iter().product();
        assert!((s.likelihood - product).abs() < 1e-12 * product);
        assert!((s.terminal_state - x).abs() < 1e-12);
    }

    #[test]
    fn constant_control_shifts_the_mean() {
        let (nu, c) = (0.1, 0.5);
        let model = abm(nu, 0.0);
        let law = simulate_particles(&model, 2, 10, StreamKey::new(0)).unwrap();
        let slices = law.slices(10).unwrap();
        let field = constant_field(c);
        let key = StreamKey::new(8);
        let m = 100_000;
        let xs: Vec<f64> = (0..m)
            .map(|j| {
                let mut rng = key.derive(j).rng();
                simulate_decoupled_path(&model, &Observable::Cosine, &slices, Control::Field(&field), &mut rng)
                    .unwrap()
                    .terminal_state
            })
            .collect();
        let stats = InnerStats::from_values(&xs);
        let se = (stats.variance / m as f64).sqrt();
        let want = nu + 0.4 * c;
        assert!((stats.mean - want).abs() < 4.0 * se, "{} vs {want}", stats.mean);
        assert!((stats.variance - 0.16).abs() < 0.01);
    }

    #[test]
    fn constant_observable_inner_stats_are_exact() {
        let model = abm(0.1, 0.0);
        let law = simulate_particles(&model, 4, 8, StreamKey::new(0)).unwrap();
        let s = inner_estimator(&model, &Observable::constant(1.0), &law, Control::Zero, 8, 50, StreamKey::new(2))
            .unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
        assert!(inner_estimator(&model, &Observable::constant(1.0), &law, Control::Zero, 8, 1, StreamKey::new(2)).is_err());
    }

    #[test]
    fn deterministic_levels_coincide() {
        let model = ModelSpec::kuramoto(0.0, ScalarLaw::constant(0.3), ScalarLaw::constant(0.1), 1.0)
            .unwrap();
        let law = simulate_particles(&model, 4, 8, StreamKey::new(0)).unwrap();
        let (a, b) = partition_antithetic(&model, &law).unwrap();
        let fine = law.slices(8).unwrap();
        let ca = a.slices(4).unwrap();
        let cb = b.slices(4).unwrap();
        let mut rng = StreamKey::new(3).rng();
        let s = simulate_coupled_levels(
            &model,
            &Observable::Cosine,
            &fine,
            [&ca, &cb],
            Control::Zero,
            [Control::Zero, Control::Zero],
            &mut rng,
        )
        .unwrap();
        assert_eq!(s.difference(), 0.0);
    }

    #[test]
    fn zero_kernel_levels_share_terminal_state() {
        let model = ModelSpec::zero_kernel(
            0.4,
            ScalarLaw::constant(0.2),
            ScalarLaw::Normal { mean: 0.0, std_dev: 0.2 },
            1.0,
        )
        .unwrap();
        let law = simulate_particles(&model, 4, 16, StreamKey::new(0)).unwrap();
        let (a, b) = partition_antithetic(&model, &law).unwrap();
        let fine = law.slices(16).unwrap();
        let (ca, cb) = (a.slices(8).unwrap(), b.slices(8).unwrap());
        let mut rng = StreamKey::new(3).rng();
        for _ in 0..20 {
            let s = simulate_coupled_levels(
                &model,
                &Observable::indicator(0.3),
                &fine,
                [&ca, &cb],
                Control::Zero,
                [Control::Zero, Control::Zero],
                &mut rng,
            )
            .unwrap();
            for c in s.coarse {
                assert!((c.terminal_state - s.fine.terminal_state).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn path_errors_carry_the_inner_index() {
        let model = ModelSpec {
            drift: crate::model::Drift::Custom(std::sync::Arc::new(|x, _, _| 1e300 * x * x)),
            ..abm(0.0, 1.0)
        };
        let law = simulate_particles(&abm(0.0, 1.0), 2, 4, StreamKey::new(0)).unwrap();
        let err = inner_estimator(&model, &Observable::Cosine, &law, Control::Zero, 4, 3, StreamKey::new(0))
            .unwrap_err();
        assert!(matches!(err, Error::Sample { inner: Some(0), .. }), "{err}");
    }
}
