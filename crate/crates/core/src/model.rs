//! Problem definition: coefficients, interaction kernels, initial law and
//! observables of a one-dimensional McKean-Vlasov SDE
//!
//! ```text
//! dX = b(X, E[k1(X, Y)], nu) dt + sigma(X, E[k2(X, Y)]) dW,   Y ~ law of X(t)
//! ```
//!
//! where `nu` is an optional random parameter attached to each particle.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// One-dimensional distribution used for initial states and particle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarLaw {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl ScalarLaw {
    pub fn constant(value: f64) -> Self {
        ScalarLaw::Constant { value }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value,
            ScalarLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ScalarLaw::Normal { mean, std_dev } => mean + std_dev * standard_normal(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value,
            ScalarLaw::Uniform { low, high } => 0.5 * (low + high),
            ScalarLaw::Normal { mean, .. } => mean,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarLaw::Constant { value } => value.is_finite(),
            ScalarLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            ScalarLaw::Normal { mean, std_dev } => {
                mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid distribution {self:?}")))
        }
    }
}

/// Pairwise interaction kernel `k(x, y)`.
#[derive(Clone)]
pub enum Kernel {
    Zero,
    /// `sin(x - y)`
    Sine,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl Kernel {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Sine => (x - y).sin(),
            Kernel::Custom(f) => f(x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Kernel::Zero)
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Zero => f.write_str("Zero"),
            Kernel::Sine => f.write_str("Sine"),
            Kernel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Drift `b(x, kernel_mean, parameter)`.
#[derive(Clone)]
pub enum Drift {
    /// `b = parameter + kernel_mean`
    ParameterPlusMean,
    Custom(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::ParameterPlusMean => f.write_str("ParameterPlusMean"),
            Drift::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Diffusion `sigma(x, kernel_mean)`.
#[derive(Clone)]
pub enum Diffusion {
    Constant(f64),
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Constant(s) => write!(f, "Constant({s})"),
            Diffusion::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A McKean-Vlasov problem instance. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub drift_kernel: Kernel,
    pub diffusion_kernel: Kernel,
    pub initial_law: ScalarLaw,
    /// Law of the parameter attached to each particle; `None` means 0.
    pub parameter_law: Option<ScalarLaw>,
    /// Initial law of the decoupled process; `None` means `initial_law`.
    pub decoupled_initial_law: Option<ScalarLaw>,
    pub horizon: f64,
}

impl ModelSpec {
    /// Fully connected Kuramoto oscillators:
    /// `dX_p = (nu_p + 1/P sum_q sin(X_p - X_q)) dt + sigma dW_p`.
    pub fn kuramoto(sigma: f64, nu: ScalarLaw, x0: ScalarLaw, horizon: f64) -> Result<Self> {
        ModelSpec {
            name: "kuramoto".into(),
            drift: Drift::ParameterPlusMean,
            diffusion: Diffusion::Constant(sigma),
            drift_kernel: Kernel::Sine,
            diffusion_kernel: Kernel::Zero,
            initial_law: x0,
            parameter_law: Some(nu),
            decoupled_initial_law: None,
            horizon,
        }
        .validated()
    }

    /// Arithmetic Brownian motion `dX = nu dt + sigma dW`: both kernels vanish,
    /// which gives closed-form answers for testing.
    pub fn zero_kernel(sigma: f64, nu: ScalarLaw, x0: ScalarLaw, horizon: f64) -> Result<Self> {
        ModelSpec {
            name: "zero-kernel-drift".into(),
            drift: Drift::ParameterPlusMean,
            diffusion: Diffusion::Constant(sigma),
            drift_kernel: Kernel::Zero,
            diffusion_kernel: Kernel::Zero,
            initial_law: x0,
            parameter_law: Some(nu),
            decoupled_initial_law: None,
            horizon,
        }
        .validated()
    }

    /// Look a model up in the named registry.
    pub fn from_registry(
        name: &str,
        sigma: f64,
        nu: ScalarLaw,
        x0: ScalarLaw,
        horizon: f64,
    ) -> Result<Self> {
        match name {
            "kuramoto" => Self::kuramoto(sigma, nu, x0, horizon),
            "zero-kernel-drift" => Self::zero_kernel(sigma, nu, x0, horizon),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "terminal time must be positive, got {}",
                self.horizon
            )));
        }
        if let Diffusion::Constant(s) = self.diffusion {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "diffusion must be finite and non-negative, got {s}"
                )));
            }
        }
        self.initial_law.validate()?;
        if let Some(l) = &self.decoupled_initial_law {
            l.validate()?;
        }
        if let Some(p) = &self.parameter_law {
            p.validate()?;
        }
        Ok(self)
    }

    #[inline]
    pub fn drift(&self, x: f64, kernel_mean: f64, parameter: f64) -> f64 {
        match &self.drift {
            Drift::ParameterPlusMean => parameter + kernel_mean,
            Drift::Custom(f) => f(x, kernel_mean, parameter),
        }
    }

    #[inline]
    pub fn diffusion(&self, x: f64, kernel_mean: f64) -> f64 {
        match &self.diffusion {
            Diffusion::Constant(s) => *s,
            Diffusion::Custom(f) => f(x, kernel_mean),
        }
    }

    /// Start the decoupled process from `law` instead of the particles' initial law.
    pub fn with_decoupled_initial_law(mut self, law: ScalarLaw) -> Result<Self> {
        self.decoupled_initial_law = Some(law);
        self.validated()
    }

    pub fn sample_decoupled_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.decoupled_initial_law
            .unwrap_or(self.initial_law)
            .sample(rng)
    }

    pub fn sample_parameter<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.parameter_law.map_or(0.0, |l| l.sample(rng))
    }

    /// Parameter value used where a single deterministic value is needed
    /// (the control PDE coefficients).
    pub fn representative_parameter(&self) -> f64 {
        self.parameter_law.map_or(0.0, |l| l.mean())
    }
}

/// Naive `(1/P) sum_j kernel(x, states_j)`.
///
/// Accumulated as a running mean so that `P` copies of the same value return
/// exactly `kernel(x, y)`.
pub fn interaction_mean(x: f64, states: &[f64], kernel: &Kernel) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidParticleCount(0));
    }
    let mut mean = 0.0;
    for (j, &y) in states.iter().enumerate() {
        mean += (kernel.eval(x, y) - mean) / (j + 1) as f64;
    }
    Ok(mean)
}

/// Particle states at one instant, with the trigonometric tables used by the
/// sine kernel precomputed. Kernel means remain an O(P) pairwise loop.
#[derive(Debug, Clone)]
pub struct StateSet {
    states: Vec<f64>,
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl StateSet {
    pub fn new(states: Vec<f64>) -> Self {
        let (sin, cos) = states.iter().map(|y| y.sin_cos()).unzip();
        StateSet { states, sin, cos }
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `(1/P) sum_j kernel(x, y_j)`.
    #[inline]
    pub fn kernel_mean(&self, kernel: &Kernel, x: f64) -> f64 {
        let p = self.states.len() as f64;
        match kernel {
            Kernel::Zero => 0.0,
            Kernel::Sine => {
                // sin(x - y) = sin x cos y - cos x sin y, summed pair by pair
                let (sx, cx) = x.sin_cos();
                let mut acc = [0.0f64; 4];
                let cs = self.cos.chunks_exact(4);
                let ss = self.sin.chunks_exact(4);
                let (cr, sr) = (cs.remainder(), ss.remainder());
                for (c, s) in cs.zip(ss) {
                    for k in 0..4 {
                        acc[k] += sx * c[k] - cx * s[k];
                    }
                }
                let mut tail = 0.0;
                for (c, s) in cr.iter().zip(sr) {
                    tail += sx * c - cx * s;
                }
                ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail) / p
            }
            Kernel::Custom(f) => self.states.iter().map(|&y| f(x, y)).sum::<f64>() / p,
        }
    }
}

/// Scalar observable `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Cosine,
    /// `1{x > threshold}`
    Indicator { threshold: f64 },
    Constant { value: f64 },
}

impl Observable {
    pub fn indicator(threshold: f64) -> Self {
        Observable::Indicator { threshold }
    }

    pub fn constant(value: f64) -> Self {
        Observable::Constant { value }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Cosine => x.cos(),
            Observable::Indicator { threshold } => {
                if x > threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Constant { value } => value,
        }
    }

    /// Mean of `G` over `[x - h/2, x + h/2]`. Used as the terminal row of the
    /// backward PDE so that a jump between nodes is not shifted by half a cell.
    pub fn cell_average(&self, x: f64, h: f64) -> f64 {
        match *self {
            Observable::Cosine => {
                if h > 0.0 {
                    ((x + 0.5 * h).sin() - (x - 0.5 * h).sin()) / h
                } else {
                    x.cos()
                }
            }
            Observable::Indicator { threshold } => {
                if h > 0.0 {
                    ((x + 0.5 * h - threshold) / h).clamp(0.0, 1.0)
                } else {
                    self.eval(x)
                }
            }
            Observable::Constant { value } => value,
        }
    }

    /// Whether `G` keeps one sign on the real line.
    pub fn sign_constant(&self) -> bool {
        !matches!(self, Observable::Cosine)
    }

    pub fn threshold(&self) -> Option<f64> {
        match *self {
            Observable::Indicator { threshold } => Some(threshold),
            _ => None,
        }
    }

    pub fn from_registry(name: &str, threshold: Option<f64>, value: Option<f64>) -> Result<Self> {
        match name {
            "cos" | "cosine" => Ok(Observable::Cosine),
            "indicator" => threshold
                .map(Observable::indicator)
                .ok_or_else(|| Error::InvalidArgument("indicator needs a threshold".into())),
            "constant" => Ok(Observable::constant(value.unwrap_or(1.0))),
            other => Err(Error::InvalidArgument(format!("unknown observable '{other}'"))),
        }
    }
}
