//! Finite-difference solver for the backward equation
//!
//! ```text
//! dv/dt + b(x, m1(t, x)) dv/dx + 0.5 sigma(x, m2(t, x))^2 d2v/dx2 = 0,   v(T, x) = |G(x)|
//! ```
//!
//! on `[-x_b, x_b] x [0, T]`, and extraction of the importance sampling
//! control `zeta = sigma d/dx log v`.
//!
//! Time stepping is the theta-scheme
//! `(I + (1 - w) dt A^{n-1}) v^{n-1} = (I - w dt A^n) v^n` with
//! `A v = -b v_x - 0.5 sigma^2 v_xx` (central differences); `w = 0.5` is
//! Crank-Nicolson, `w = 0` fully implicit. The boundary values are linear
//! extrapolations of the two nearest interior nodes.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Observable, StateSet};
use crate::particle::EmpiricalLaw;

/// Uniform space-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_bound: f64,
    /// Number of space intervals; nodes are `x_i = -x_b + i dx`, `i = 0..=n_space`.
    pub n_space: usize,
    /// Number of time steps; levels are `t_n = n dt`, `n = 0..=n_time`.
    pub n_time: usize,
    /// Theta-scheme weight `w` (0.5 = Crank-Nicolson).
    pub scheme_weight: f64,
    pub horizon: f64,
}

impl Grid1D {
    /// Grid with spacing `dx` and the smallest number of time steps such that
    /// `dt / dx <= ratio`.
    pub fn new(x_bound: f64, dx: f64, ratio: f64, horizon: f64) -> Result<Self> {
        if !(x_bound > 0.0 && dx > 0.0 && ratio > 0.0 && horizon > 0.0)
            || !(x_bound.is_finite() && dx.is_finite() && ratio.is_finite() && horizon.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "invalid grid: x_b={x_bound}, dx={dx}, ratio={ratio}, T={horizon}"
            )));
        }
        let n_space = (2.0 * x_bound / dx).round() as usize;
        let n_time = ((horizon / (ratio * dx)) - 1e-9).ceil().max(1.0) as usize;
        Grid1D {
            x_bound,
            n_space,
            n_time,
            scheme_weight: 0.5,
            horizon,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.n_space < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 4 space intervals, got {}",
                self.n_space
            )));
        }
        if self.n_time < 1 {
            return Err(Error::InvalidArgument("grid needs at least one time step".into()));
        }
        if !(0.0..=1.0).contains(&self.scheme_weight) {
            return Err(Error::InvalidArgument(format!(
                "scheme weight must lie in [0, 1], got {}",
                self.scheme_weight
            )));
        }
        if !(self.x_bound > 0.0 && self.horizon > 0.0) {
            return Err(Error::InvalidArgument("grid extent must be positive".into()));
        }
        Ok(self)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_bound / self.n_space as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_time as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.x_bound + i as f64 * self.dx()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_space + 1
    }

    fn len(&self) -> usize {
        (self.n_time + 1) * (self.n_space + 1)
    }
}

/// Solver settings besides the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KbeOptions {
    /// Number of initial backward steps taken fully implicitly.
    pub damping_steps: usize,
    /// Bound on `|zeta|`.
    pub control_cap: f64,
    /// `v` is floored at `floor_ratio * max_i v_i` per level before the log.
    pub floor_ratio: f64,
}

impl Default for KbeOptions {
    fn default() -> Self {
        KbeOptions {
            damping_steps: 2,
            control_cap: 20.0,
            floor_ratio: 1e-16,
        }
    }
}

/// Values `v(t_n, x_i)` stored row by row in time.
#[derive(Debug, Clone)]
pub struct ValueField {
    grid: Grid1D,
    values: Vec<f64>,
}

/// Control values `zeta(t_n, x_i)` stored row by row in time.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: Grid1D,
    values: Vec<f64>,
}

macro_rules! field_accessors {
    ($t:ty) => {
        impl $t {
            pub fn grid(&self) -> &Grid1D {
                &self.grid
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            #[inline]
            pub fn at(&self, n: usize, i: usize) -> f64 {
                self.values[n * self.grid.n_nodes() + i]
            }

            pub fn row(&self, n: usize) -> &[f64] {
                let w = self.grid.n_nodes();
                &self.values[n * w..(n + 1) * w]
            }

            /// Write `time_index,node,value` rows.
            pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
                writeln!(out, "time_index,node,value")?;
                for n in 0..=self.grid.n_time {
                    for (i, v) in self.row(n).iter().enumerate() {
                        writeln!(out, "{n},{i},{v:e}")?;
                    }
                }
                Ok(())
            }
        }
    };
}

field_accessors!(ValueField);
field_accessors!(ControlField);

impl ValueField {
    /// Wrap externally computed values (e.g. for testing extraction).
    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        Ok(ValueField { grid, values })
    }
}

impl ControlField {
    /// Rebuild a field from stored values; every entry must be finite.
    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                level: k / grid.n_nodes(),
            });
        }
        Ok(ControlField { grid, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation in `(t, x)`; `x` is clamped to the grid.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        let g = &self.grid;
        if !(t >= 0.0 && t <= g.horizon * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { t, horizon: g.horizon });
        }
        let s = (t / g.dt()).min(g.n_time as f64);
        let n0 = (s.floor() as usize).min(g.n_time - 1);
        let wt = s - n0 as f64;
        let r = ((x.clamp(-g.x_bound, g.x_bound) + g.x_bound) / g.dx()).min(g.n_space as f64);
        let i0 = (r.floor() as usize).min(g.n_space - 1);
        let wx = r - i0 as f64;
        let lo = (1.0 - wx) * self.at(n0, i0) + wx * self.at(n0, i0 + 1);
        let hi = (1.0 - wx) * self.at(n0 + 1, i0) + wx * self.at(n0 + 1, i0 + 1);
        Ok((1.0 - wt) * lo + wt * hi)
    }
}

fn check_len(grid: &Grid1D, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "field has {} values, grid needs {}",
            values.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Free function form of [`ControlField::eval`].
pub fn eval_control(field: &ControlField, t: f64, x: f64) -> Result<f64> {
    field.eval(t, x)
}

/// Kernel means of the law at the grid nodes for one time level.
fn level_means(
    model: &ModelSpec,
    law: Option<&EmpiricalLaw>,
    grid: &Grid1D,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = grid.n_nodes();
    let needs_law = !(model.drift_kernel.is_zero() && model.diffusion_kernel.is_zero());
    if !needs_law {
        return Ok((vec![0.0; nodes], vec![0.0; nodes]));
    }
    let law = law.ok_or_else(|| {
        Error::InvalidArgument("an empirical law is required for interacting models".into())
    })?;
    if (law.horizon() - grid.horizon).abs() > 1e-12 * grid.horizon {
        return Err(Error::InvalidArgument(format!(
            "law horizon {} differs from grid horizon {}",
            law.horizon(),
            grid.horizon
        )));
    }
    let set = law.state_set_at(grid.t(n).min(law.horizon()))?;
    let set: &StateSet = &set;
    let m1 = (0..nodes)
        .map(|i| set.kernel_mean(&model.drift_kernel, grid.x(i)))
        .collect();
    let m2 = (0..nodes)
        .map(|i| set.kernel_mean(&model.diffusion_kernel, grid.x(i)))
        .collect();
    Ok((m1, m2))
}

/// Interior tridiagonal rows `(lower, diag, upper)` of `A` for unknowns
/// `1..n_space`, with the extrapolated boundary folded into the first and
/// last rows.
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    fn assemble(model: &ModelSpec, grid: &Grid1D, m1: &[f64], m2: &[f64]) -> Result<Self> {
        let dx = grid.dx();
        let nu = model.representative_parameter();
        let m = grid.n_space - 1;
        let (mut lower, mut diag, mut upper) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for k in 0..m {
            let i = k + 1;
            let x = grid.x(i);
            let b = model.drift(x, m1[i], nu);
            let s = model.diffusion(x, m2[i]);
            let s2 = s * s;
            lower[k] = b / (2.0 * dx) - s2 / (2.0 * dx * dx);
            diag[k] = s2 / (dx * dx);
            upper[k] = -b / (2.0 * dx) - s2 / (2.0 * dx * dx);
        }
        // v_0 = 2 v_1 - v_2 and v_N = 2 v_{N-1} - v_{N-2}
        let (l, d, u) = (lower[0], diag[0], upper[0]);
        diag[0] = 2.0 * l + d;
        upper[0] = u - l;
        lower[0] = 0.0;
        let e = m - 1;
        let (l, d, u) = (lower[e], diag[e], upper[e]);
        lower[e] = l - u;
        diag[e] = d + 2.0 * u;
        upper[e] = 0.0;
        for v in lower.iter().chain(&diag).chain(&upper) {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite PDE coefficient".into()));
            }
        }
        Ok(Operator { lower, diag, upper })
    }

    /// `(I + scale A) v` on the interior unknowns.
    fn apply_shifted(&self, scale: f64, v: &[f64]) -> Vec<f64> {
        let m = v.len();
        (0..m)
            .map(|k| {
                let mut a = self.diag[k] * v[k];
                if k > 0 {
                    a += self.lower[k] * v[k - 1];
                }
                if k + 1 < m {
                    a += self.upper[k] * v[k + 1];
                }
                v[k] + scale * a
            })
            .collect()
    }
}

/// Solve `a_k x_{k-1} + b_k x_k + c_k x_{k+1} = d_k` by forward elimination
/// and back substitution. `a_0` and `c_{m-1}` are ignored.
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let m = d.len();
    if m == 0 || a.len() != m || b.len() != m || c.len() != m {
        return None;
    }
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    let mut denom = b[0];
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for k in 1..m {
        denom = b[k] - a[k] * cp[k - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        cp[k] = c[k] / denom;
        dp[k] = (d[k] - a[k] * dp[k - 1]) / denom;
    }
    let mut x = dp;
    for k in (0..m - 1).rev() {
        x[k] -= cp[k] * x[k + 1];
    }
    Some(x)
}

/// Backward sweep from `v(T, x_i) = |G|` averaged over the cell around `x_i`. The law supplies the kernel
/// means of the coefficients at each time level; it may be omitted when both
/// kernels vanish.
pub fn solve_kbe(
    model: &ModelSpec,
    observable: &Observable,
    law: Option<&EmpiricalLaw>,
    grid: &Grid1D,
    options: &KbeOptions,
) -> Result<ValueField> {
    if !observable.sign_constant() {
        return Err(Error::SignChangingObservable);
    }
    let grid = grid.validated()?;
    if (grid.horizon - model.horizon).abs() > 1e-12 * model.horizon {
        return Err(Error::InvalidArgument(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon, model.horizon
        )));
    }
    if let Observable::Constant { value } = *observable {
        // constants solve the equation exactly
        return Ok(ValueField {
            grid,
            values: vec![value.abs(); grid.len()],
        });
    }
    let nodes = grid.n_nodes();
    let nt = grid.n_time;
    let dt = grid.dt();
    let mut values = vec![0.0; grid.len()];
    for i in 0..nodes {
        values[nt * nodes + i] = observable.cell_average(grid.x(i), grid.dx()).abs();
    }

    let (m1, m2) = level_means(model, law, &grid, nt)?;
    let mut op_next = Operator::assemble(model, &grid, &m1, &m2)?;
    for n in (1..=nt).rev() {
        let (m1, m2) = level_means(model, law, &grid, n - 1)?;
        let op_prev = Operator::assemble(model, &grid, &m1, &m2)?;
        let w = if nt - n < options.damping_steps {
            0.0
        } else {
            grid.scheme_weight
        };
        let interior = values[n * nodes + 1..(n + 1) * nodes - 1].to_vec();
        let rhs = op_next.apply_shifted(-w * dt, &interior);
        let s = (1.0 - w) * dt;
        let a: Vec<f64> = op_prev.lower.iter().map(|l| s * l).collect();
        let b: Vec<f64> = op_prev.diag.iter().map(|d| 1.0 + s * d).collect();
        let c: Vec<f64> = op_prev.upper.iter().map(|u| s * u).collect();
        let sol = solve_tridiagonal(&a, &b, &c, &rhs).ok_or(Error::SingularSystem { level: n - 1 })?;
        let row = &mut values[(n - 1) * nodes..n * nodes];
        row[1..nodes - 1].copy_from_slice(&sol);
        row[0] = 2.0 * row[1] - row[2];
        row[nodes - 1] = 2.0 * row[nodes - 2] - row[nodes - 3];
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { level: n - 1 });
        }
        op_next = op_prev;
    }
    Ok(ValueField { grid, values })
}

/// `zeta = sigma * d/dx log v` by central differences (one-sided at the
/// boundary nodes), after flooring `v` per time level, capped at
/// `options.control_cap`.
pub fn extract_control(
    v: &ValueField,
    model: &ModelSpec,
    law: Option<&EmpiricalLaw>,
    options: &KbeOptions,
) -> Result<ControlField> {
    let grid = *v.grid();
    let nodes = grid.n_nodes();
    let dx = grid.dx();
    let cap = options.control_cap;
    let mut values = vec![0.0; grid.len()];
    let mut logs = vec![0.0; nodes];
    for n in 0..=grid.n_time {
        let row = v.row(n);
        let top = row.iter().fold(0.0f64, |m, &x| m.max(x));
        if !(top > 0.0) {
            continue;
        }
        let floor = options.floor_ratio * top;
        for (l, &x) in logs.iter_mut().zip(row) {
            *l = x.max(floor).ln();
        }
        let m2 = if model.diffusion_kernel.is_zero() {
            vec![0.0; nodes]
        } else {
            level_means(model, law, &grid, n)?.1
        };
        let out = &mut values[n * nodes..(n + 1) * nodes];
        for i in 0..nodes {
            let grad = if i == 0 {
                (logs[1] - logs[0]) / dx
            } else if i == nodes - 1 {
                (logs[i] - logs[i - 1]) / dx
            } else {
                (logs[i + 1] - logs[i - 1]) / (2.0 * dx)
            };
            let z = model.diffusion(grid.x(i), m2[i]) * grad;
            out[i] = if z.is_finite() { z.clamp(-cap, cap) } else { 0.0 };
        }
    }
    Ok(ControlField { grid, values })
}

/// Solve the backward equation and extract the control in one call.
pub fn solve_control(
    model: &ModelSpec,
    observable: &Observable,
    law: Option<&EmpiricalLaw>,
    grid: &Grid1D,
    options: &KbeOptions,
) -> Result<(ValueField, ControlField)> {
    let v = solve_kbe(model, observable, law, grid, options)?;
    let zeta = extract_control(&v, model, law, options)?;
    Ok((v, zeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarLaw;
    use crate::particle::simulate_particles;
    use crate::rng::StreamKey;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn abm() -> ModelSpec {
        ModelSpec::zero_kernel(0.4, ScalarLaw::constant(0.1), ScalarLaw::constant(0.0), 1.0)
            .unwrap()
    }

    fn analytic(t: f64, x: f64) -> f64 {
        let tau = 1.0 - t;
        Normal::standard().cdf((x + 0.1 * tau - 2.0) / (0.4 * tau.sqrt()))
    }

    #[test]
    fn grid_construction() {
        let g = Grid1D::new(4.0, 0.01, 0.2, 1.0).unwrap();
        assert_eq!(g.n_space, 800);
        assert_eq!(g.n_time, 500);
        assert!((g.dt() - 0.002).abs() < 1e-15);
        assert_eq!(g.x(0), -4.0);
        assert!((g.x(800) - 4.0).abs() < 1e-12);
        assert!(Grid1D::new(1.0, 0.6, 0.2, 1.0).is_err());
        assert!(Grid1D::new(-1.0, 0.1, 0.2, 1.0).is_err());
    }

    #[test]
    fn tridiagonal_matches_dense_product() {
        let a = [0.0, 1.0, -0.5, 0.3];
        let b = [4.0, 5.0, 3.0, 2.5];
        let c = [1.0, -1.0, 0.7, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let d: Vec<f64> = (0..4)
            .map(|k| {
                let mut s = b[k] * x[k];
                if k > 0 {
                    s += a[k] * x[k - 1];
                }
                if k < 3 {
                    s += c[k] * x[k + 1];
                }
                s
            })
            .collect();
        let sol = solve_tridiagonal(&a, &b, &c, &d).unwrap();
        for k in 0..4 {
            assert!((sol[k] - x[k]).abs() < 1e-14);
        }
        assert!(solve_tridiagonal(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn constants_are_preserved() {
        let law = simulate_particles(
            &ModelSpec::kuramoto(
                0.4,
                ScalarLaw::Uniform { low: -0.2, high: 0.2 },
                ScalarLaw::Normal { mean: 0.0, std_dev: 0.2 },
                1.0,
            )
            .unwrap(),
            50,
            10,
            StreamKey::new(3),
        )
        .unwrap();
        let model = ModelSpec::kuramoto(
            0.4,
            ScalarLaw::Uniform { low: -0.2, high: 0.2 },
            ScalarLaw::Normal { mean: 0.0, std_dev: 0.2 },
            1.0,
        )
        .unwrap();
        let grid = Grid1D::new(4.0, 0.05, 0.2, 1.0).unwrap();
        let opts = KbeOptions::default();
        let (v, zeta) =
            solve_control(&model, &Observable::constant(2.5), Some(&law), &grid, &opts).unwrap();
        assert!(v.values().iter().all(|&x| x == 2.5));
        assert_eq!(zeta.max_abs(), 0.0);

        // an indicator that is 1 on the whole grid goes through the sweep
        let (v, zeta) =
            solve_control(&model, &Observable::indicator(-10.0), Some(&law), &grid, &opts).unwrap();
        for &x in v.values() {
            assert!((x - 1.0).abs() <= 1e-12, "{x}");
        }
        // only round-off remains in the log-gradient
        assert!(zeta.max_abs() < 1e-10, "{}", zeta.max_abs());
    }

    #[test]
    fn refuses_sign_changing_observable() {
        let grid = Grid1D::new(4.0, 0.1, 0.2, 1.0).unwrap();
        let err = solve_kbe(&abm(), &Observable::Cosine, None, &grid, &KbeOptions::default());
        assert!(matches!(err, Err(Error::SignChangingObservable)));
    }

    #[test]
    fn interacting_model_needs_a_law() {
        let model = ModelSpec::kuramoto(0.4, ScalarLaw::constant(0.0), ScalarLaw::constant(0.0), 1.0)
            .unwrap();
        let grid = Grid1D::new(4.0, 0.1, 0.2, 1.0).unwrap();
        let r = solve_kbe(&model, &Observable::indicator(2.0), None, &grid, &KbeOptions::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn terminal_row_is_the_cell_averaged_observable() {
        let grid = Grid1D::new(4.0, 0.05, 0.2, 1.0).unwrap();
        let v = solve_kbe(&abm(), &Observable::indicator(2.03), None, &grid, &KbeOptions::default())
            .unwrap();
        for i in 0..grid.n_nodes() {
            let x = grid.x(i);
            let want = if (x - 2.05).abs() < 1e-9 {
                0.9
            } else if x > 2.03 {
                1.0
            } else {
                0.0
            };
            assert!((v.at(grid.n_time, i) - want).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn gaussian_tail_oracle() {
        let grid = Grid1D::new(4.0, 0.01, 0.2, 1.0).unwrap();
        let v = solve_kbe(&abm(), &Observable::indicator(2.0), None, &grid, &KbeOptions::default())
            .unwrap();
        let mid = grid.n_space / 2;
        let exact = analytic(0.0, 0.0);
        let rel = (v.at(0, mid) - exact).abs() / exact;
        assert!(rel < 0.1, "v(0,0) = {} vs {exact}", v.at(0, mid));
    }

    #[test]
    fn log_linear_values_give_constant_control() {
        let grid = Grid1D::new(2.0, 0.1, 0.5, 1.0).unwrap();
        let a = 1.7;
        let values: Vec<f64> = (0..=grid.n_time)
            .flat_map(|_| (0..grid.n_nodes()).map(move |i| (a * grid.x(i)).exp()))
            .collect();
        let v = ValueField::from_values(grid, values).unwrap();
        let zeta = extract_control(&v, &abm(), None, &KbeOptions::default()).unwrap();
        for n in 0..=grid.n_time {
            for i in 0..grid.n_nodes() {
                assert!((zeta.at(n, i) - 0.4 * a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn control_is_capped_and_finite() {
        let grid = Grid1D::new(4.0, 0.05, 0.2, 1.0).unwrap();
        let opts = KbeOptions::default();
        let (_, zeta) =
            solve_control(&abm(), &Observable::indicator(2.0), None, &grid, &opts).unwrap();
        assert!(zeta.values().iter().all(|z| z.is_finite() && z.abs() <= opts.control_cap));
        // left of the threshold the control pushes towards it
        let n = grid.n_time / 2;
        for x in [1.0, 1.5, 1.9] {
            assert!(zeta.eval(grid.t(n), x).unwrap() > 0.0);
        }
    }

    #[test]
    fn bilinear_interpolation() {
        let grid = Grid1D {
            x_bound: 2.0,
            n_space: 4,
            n_time: 2,
            scheme_weight: 0.5,
            horizon: 1.0,
        };
        let values = vec![
            0.0, 0.0, 0.0, 0.0, 0.0, //
            1.0, 1.0, 1.0, 1.0, 1.0, //
            2.0, 3.0, 5.0, 7.0, 11.0,
        ];
        let z = ControlField::from_values(grid, values).unwrap();
        assert_eq!(z.eval(0.5, 1.0).unwrap(), 1.0);
        assert_eq!(z.eval(1.0, 0.0).unwrap(), 5.0);
        assert_eq!(z.eval(0.25, 0.5).unwrap(), 0.5);
        assert_eq!(z.eval(1.0, 10.0).unwrap(), 11.0);
        assert_eq!(z.eval(1.0, -10.0).unwrap(), 2.0);
        assert!(z.eval(1.5, 0.0).is_err());
        assert!(z.eval(-0.1, 0.0).is_err());
    }
}
