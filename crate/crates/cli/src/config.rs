//! Run configuration. Every field has a default, so an empty file is a valid
//! configuration: Kuramoto oscillators with `G = 1{x > 2}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mvdlmc::control::{Grid1D, KbeOptions};
use mvdlmc::dlmc::{AdaptiveSettings, DlmcParams, ToleranceBudget};
use mvdlmc::model::{ModelSpec, Observable, ScalarLaw};
use mvdlmc::studies::StudyBase;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed of every random stream.
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub observable: ObservableConfig,
    pub grid: GridConfig,
    pub control: ControlConfig,
    pub estimate: EstimateConfig,
    pub adaptive: AdaptiveConfig,
    pub verify: VerifyConfig,
    pub variance_reduction: VarianceReductionConfig,
    pub table1: Table1Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            workers: 0,
            out: PathBuf::from("out"),
            model: ModelConfig::default(),
            observable: ObservableConfig::default(),
            grid: GridConfig::default(),
            control: ControlConfig::default(),
            estimate: EstimateConfig::default(),
            adaptive: AdaptiveConfig::default(),
            verify: VerifyConfig::default(),
            variance_reduction: VarianceReductionConfig::default(),
            table1: Table1Config::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub sigma: f64,
    pub horizon: f64,
    pub initial_law: ScalarLaw,
    pub parameter_law: ScalarLaw,
    /// Starting law of the decoupled process; the particles' initial law
    /// when absent.
    pub decoupled_initial_law: Option<ScalarLaw>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            name: "kuramoto".into(),
            sigma: 0.4,
            horizon: 1.0,
            initial_law: ScalarLaw::Normal { mean: 0.0, std_dev: 0.2 },
            parameter_law: ScalarLaw::Uniform { low: -0.2, high: 0.2 },
            decoupled_initial_law: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub threshold: Option<f64>,
    pub value: Option<f64>,
}

impl Default for ObservableConfig {
    fn default() -> Self {
        ObservableConfig {
            name: "indicator".into(),
            threshold: Some(2.0),
            value: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x_bound: f64,
    pub dx: f64,
    /// `dt / dx`.
    pub ratio: f64,
    pub scheme_weight: f64,
    pub damping_steps: usize,
    pub control_cap: f64,
    pub floor_ratio: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let o = KbeOptions::default();
        GridConfig {
            x_bound: 4.0,
            dx: 0.01,
            ratio: 0.2,
            scheme_weight: 0.5,
            damping_steps: o.damping_steps,
            control_cap: o.control_cap,
            floor_ratio: o.floor_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// One control from a reference particle system, reused for every law.
    Offline,
    /// A control solved against every simulated law.
    PerLaw,
    /// No importance sampling.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub mode: ControlMode,
    /// Reference system size for the offline control.
    pub particles: usize,
    pub steps: usize,
    /// Artifact written by `solve-control`. When absent the offline control
    /// is solved in-process.
    pub artifact: Option<PathBuf>,
    /// Also write `v` and `zeta` as CSV.
    pub dump_csv: bool,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            mode: ControlMode::Offline,
            particles: 1000,
            steps: 100,
            artifact: None,
            dump_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub particles: usize,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    /// One run per inner sample size.
    pub m2: Vec<usize>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            particles: 100,
            n1: 32,
            n2: 32,
            m1: 1000,
            m2: vec![10, 100, 1000],
        }
    }
}

impl EstimateConfig {
    pub fn params(&self, m2: usize) -> DlmcParams {
        DlmcParams {
            particles: self.particles,
            n1: self.n1,
            n2: self.n2,
            m1: self.m1,
            m2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub p0: usize,
    pub n0: usize,
    pub tol_r: f64,
    pub theta_split: f64,
    pub c_alpha: f64,
    pub rough_m1: usize,
    pub rough_m2: usize,
    pub pilot_m1: usize,
    pub pilot_m2: usize,
    pub bias_min_m1: usize,
    pub bias_min_m2: usize,
    pub pilot_levels: usize,
    pub level_cap: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        let s = AdaptiveSettings::default();
        AdaptiveConfig {
            p0: s.p0,
            n0: s.n0,
            tol_r: s.budget.tol,
            theta_split: s.budget.theta_split,
            c_alpha: s.budget.c_alpha,
            rough_m1: s.rough_m1,
            rough_m2: s.rough_m2,
            pilot_m1: s.pilot_m1,
            pilot_m2: s.pilot_m2,
            bias_min_m1: s.bias_min_m1,
            bias_min_m2: s.bias_min_m2,
            pilot_levels: s.pilot_levels,
            level_cap: s.level_cap,
        }
    }
}

impl AdaptiveConfig {
    pub fn settings(&self, tol_r: f64) -> AdaptiveSettings {
        AdaptiveSettings {
            p0: self.p0,
            n0: self.n0,
            budget: ToleranceBudget {
                theta_split: self.theta_split,
                c_alpha: self.c_alpha,
                ..ToleranceBudget::relative(tol_r)
            },
            rough_m1: self.rough_m1,
            rough_m2: self.rough_m2,
            pilot_m1: self.pilot_m1,
            pilot_m2: self.pilot_m2,
            bias_min_m1: self.bias_min_m1,
            bias_min_m2: self.bias_min_m2,
            pilot_levels: self.pilot_levels,
            level_cap: self.level_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Values held fixed while another parameter is swept.
    pub base_particles: usize,
    pub base_steps: usize,
    /// Steps used for the fine discretization that is not swept.
    pub reference_steps: usize,
    pub particles: Vec<usize>,
    pub steps: Vec<usize>,
    pub m1: usize,
    pub m2: usize,
    pub variance_particles: Vec<usize>,
    pub variance_steps: usize,
    pub variance_m1: usize,
    pub variance_m2: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            base_particles: 40,
            base_steps: 16,
            reference_steps: 64,
            particles: vec![10, 20, 40, 80, 160],
            steps: vec![4, 8, 16, 32],
            m1: 1000,
            m2: 20,
            variance_particles: vec![16, 32, 64, 128],
            variance_steps: 16,
            variance_m1: 400,
            variance_m2: 20_000,
        }
    }
}

impl VerifyConfig {
    pub fn particle_base(&self) -> StudyBase {
        StudyBase {
            particles: 0,
            n1: self.base_steps,
            n2: self.base_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceReductionConfig {
    pub particles: usize,
    pub n1: usize,
    pub n2: usize,
    pub m2: usize,
}

impl Default for VarianceReductionConfig {
    fn default() -> Self {
        VarianceReductionConfig {
            particles: 200,
            n1: 32,
            n2: 32,
            m2: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    pub thresholds: Vec<f64>,
    pub tolerances: Vec<f64>,
    /// Also run without importance sampling.
    pub crude: bool,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            thresholds: vec![1.0, 1.5, 2.0],
            tolerances: vec![0.2, 0.1, 0.05],
            crude: true,
        }
    }
}

impl RunConfig {
    /// Read a TOML file, or a JSON file; a JSON result file is accepted too,
    /// in which case its embedded `config` is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg: RunConfig = if is_json {
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if let Some(embedded) = value.get_mut("config") {
                value = embedded.take();
            }
            serde_json::from_value(value)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validated()
    }

    /// Check that every name resolves and every derived object builds.
    pub fn validated(self) -> Result<Self, CliError> {
        self.model_spec()?;
        self.observable()?;
        self.grid()?;
        self.adaptive.settings(self.adaptive.tol_r).budget.validated()?;
        Ok(self)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let spec = ModelSpec::from_registry(&m.name, m.sigma, m.parameter_law, m.initial_law, m.horizon)?;
        Ok(match m.decoupled_initial_law {
            Some(law) => spec.with_decoupled_initial_law(law)?,
            None => spec,
        })
    }

    pub fn observable(&self) -> Result<Observable, CliError> {
        let o = &self.observable;
        Ok(Observable::from_registry(&o.name, o.threshold, o.value)?)
    }

    pub fn observable_with_threshold(&self, threshold: f64) -> Result<Observable, CliError> {
        Ok(Observable::from_registry(&self.observable.name, Some(threshold), self.observable.value)?)
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        let g = &self.grid;
        let grid = Grid1D::new(g.x_bound, g.dx, g.ratio, self.model.horizon)?;
        Ok(Grid1D {
            scheme_weight: g.scheme_weight,
            ..grid
        }
        .validated()?)
    }

    pub fn kbe_options(&self) -> KbeOptions {
        KbeOptions {
            damping_steps: self.grid.damping_steps,
            control_cap: self.grid.control_cap,
            floor_ratio: self.grid.floor_ratio,
        }
    }
}
