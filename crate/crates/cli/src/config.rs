//! Run configuration. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skyrmap_core::KAPPA_CAL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Analyze,
    Energy,
    Critical,
    MinimizeProfile,
    Stability,
    Reproduce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Must match the command given on the command line, when present.
    pub command: Option<Command>,
    /// Map family specifier, e.g. `alpha_join(arccos_cos2, 2, 1)`.
    pub map: Option<String>,
    pub kappa: f64,
    pub seed: u64,
    pub chart: ChartConfig,
    pub quad: QuadConfig,
    pub grid: GridConfig,
    pub tol: TolConfig,
    pub output: OutputConfig,
    /// Named grid profiles: `name = "path.csv"`, relative to the config file.
    pub profiles: std::collections::BTreeMap<String, PathBuf>,
    pub critical: CriticalConfig,
    pub profile: ProfileConfig,
    pub stability: StabilityConfig,
    pub reproduce: ReproduceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            map: None,
            kappa: KAPPA_CAL,
            seed: 0,
            chart: ChartConfig::default(),
            quad: QuadConfig::default(),
            grid: GridConfig::default(),
            tol: TolConfig::default(),
            output: OutputConfig::default(),
            profiles: Default::default(),
            critical: CriticalConfig::default(),
            profile: ProfileConfig::default(),
            stability: StabilityConfig::default(),
            reproduce: ReproduceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartConfig {
    /// Deformation applied to the map's domain, e.g. `radius_scale(2)` or `hopf_squash(2, 1)`.
    pub deform: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadConfig {
    pub order_1d: usize,
    pub order_3d: usize,
    pub order_radial: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        let d = skyrmap_core::QuadOrders::default();
        QuadConfig { order_1d: d.order_1d, order_3d: d.order_3d, order_radial: d.order_radial }
    }
}

impl QuadConfig {
    pub fn orders(&self) -> skyrmap_core::QuadOrders {
        skyrmap_core::QuadOrders { order_1d: self.order_1d, order_3d: self.order_3d, order_radial: self.order_radial }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points per axis for residual grids.
    pub residual: usize,
    /// Distance kept from singular loci on non-periodic axes.
    pub inset: f64,
    /// Points per axis for `analyze`.
    pub analyze: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { residual: 64, inset: 0.0, analyze: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolConfig {
    /// Criticality threshold; unset means the map's default (1e-6 analytic, 1e-4 finite differences).
    pub crit: Option<f64>,
    /// Tolerance of the class predicates in `analyze`.
    pub classify: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        TolConfig { crit: None, classify: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemChoice {
    /// `fh` for two-dimensional targets, `sig3` for three-dimensional ones.
    Auto,
    Fh,
    Sig3,
    Contactsig3,
    Fourharm,
    Nomizu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalConfig {
    pub system: SystemChoice,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig { system: SystemChoice::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub k: f64,
    pub l: f64,
    pub cells: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub log_every: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let s = skyrmap_core::euler_lagrange::ProfileSettings::default();
        ProfileConfig { k: 2.0, l: 1.0, cells: 64, max_iter: s.max_iter, grad_tol: s.grad_tol, log_every: s.log_every }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormChoice {
    Sigma2,
    Full,
    Dirichlet,
    Hopf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    /// Domain chart of the variation fields.
    pub chart: String,
    pub form: FormChoice,
    /// Target dimension `n` of the homothety.
    pub n: usize,
    pub lambda: f64,
    /// Number of seeded random fields added to the Killing and conformal ones.
    pub random_fields: usize,
    pub band: usize,
    pub order: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_steps: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            chart: "s3_suspension(1)".into(),
            form: FormChoice::Full,
            n: 3,
            lambda: 1.0,
            random_fields: 2,
            band: 1,
            order: 16,
            lambda_min: 0.05,
            lambda_max: 2.0,
            lambda_steps: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceConfig {
    /// One of [`crate::reproduce::CASES`], or `all`.
    pub case: String,
    /// Random fields in the `yano-identity` case.
    pub yano_fields: usize,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        ReproduceConfig { case: "all".into(), yano_fields: 20 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.profiles.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            bail!("kappa must be ≥ 0, got {}", self.kappa);
        }
        if self.quad.order_1d == 0 || self.quad.order_3d == 0 || self.quad.order_radial == 0 {
            bail!("quad orders must be positive");
        }
        if self.grid.residual == 0 || self.grid.analyze == 0 {
            bail!("grid sizes must be positive");
        }
        if self.stability.lambda_steps < 2 || !(self.stability.lambda_min > 0.0 && self.stability.lambda_max > self.stability.lambda_min) {
            bail!("stability needs lambda_steps ≥ 2 and 0 < lambda_min < lambda_max");
        }
        Ok(())
    }

    /// The effective configuration, every default spelled out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
