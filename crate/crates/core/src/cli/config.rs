use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::fuselink::{parse_deployment, Deployment, EnumerationPolicy};
use crate::hypergate::InputSpec;
use crate::netspec::{builtin_preset, parse_dual_network, DualNetwork, NetError};
use crate::simulator::ArchConfig;

pub const DEFAULT_OUTPUT: &str = "a3sim-out";

/// Top-level experiment file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub network: NetworkSource,
    #[serde(default)]
    pub deployment: Option<DeploymentSource>,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub hypernet: Option<HypernetConfig>,
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSource {
    pub preset: Option<String>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentSource {
    pub path: Option<PathBuf>,
    pub policy: Option<EnumerationPolicy>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypernetConfig {
    #[serde(default)]
    pub seed: u64,
    pub weights: Option<PathBuf>,
    pub input: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub synthetic: bool,
    #[serde(default = "default_k_out")]
    pub k_out: usize,
    #[serde(default)]
    pub input_spec: InputSpec,
}

impl Default for HypernetConfig {
    fn default() -> Self {
        HypernetConfig {
            seed: 0,
            weights: None,
            input: None,
            synthetic: true,
            k_out: default_k_out(),
            input_spec: InputSpec::default(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_k_out() -> usize {
    8
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        rebase(&mut cfg.network.path);
        rebase(&mut cfg.output);
        if let Some(dep) = cfg.deployment.as_mut() {
            rebase(&mut dep.path);
        }
        if let Some(hn) = cfg.hypernet.as_mut() {
            rebase(&mut hn.weights);
            rebase(&mut hn.input);
        }
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }

    pub fn load_network(&self) -> Result<DualNetwork, CliError> {
        let result = match (&self.network.preset, &self.network.path) {
            (Some(name), None) => builtin_preset(name),
            (None, Some(path)) => parse_dual_network(&read_text(path)?),
            (Some(_), Some(_)) => {
                return Err(CliError::Config("network: give either a preset or a path, not both".into()))
            }
            (None, None) => return Err(CliError::Config("network: a preset or a path is required".into())),
        };
        result.map_err(|e| match e {
            NetError::Syntax { .. } => CliError::Config(format!("network: {e}")),
            NetError::UnknownPreset(_) => CliError::Config(e.to_string()),
            other => CliError::domain(format!("network: {other}")),
        })
    }

    /// The deployment named by path; empty when none is configured.
    pub fn load_deployment(&self, nets: &DualNetwork) -> Result<Deployment, CliError> {
        let Some(path) = self.deployment.as_ref().and_then(|d| d.path.as_ref()) else {
            return Ok(Deployment::empty("none"));
        };
        let doc = parse_deployment(&read_text(path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        doc.resolve(nets).map_err(|report| CliError::Violations {
            message: format!("deployment '{}' is invalid", doc.name),
            report,
        })
    }

    pub fn policy(&self) -> Option<&EnumerationPolicy> {
        self.deployment.as_ref().and_then(|d| d.policy.as_ref())
    }
}
