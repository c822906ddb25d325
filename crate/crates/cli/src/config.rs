use std::fs;
use std::path::{Path, PathBuf};

use rgorbit::hierarchical::{HierParams, HierarchicalRemainder};
use rgorbit::orbit::SolverConfig;
use rgorbit::remainder::CubicRemainder;
use rgorbit::{default_remainder_model, CubicCoefficients, Model, ModelParams, Remainder};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run depends on. Every section and every field is optional in
/// the file; missing entries take the defaults below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub remainder: RemainderConfig,
    pub solver: SolverConfig,
    pub hier: HierParams,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RemainderKind {
    /// The cubic stand-in with the configured coefficients.
    #[default]
    Cubic,
    /// ξ ≡ 0 with the plain contraction on `R`.
    Zero,
    /// The hierarchical recursion in `(g, μ, R)` coordinates; overrides
    /// `a`, `γ` and `d_R` of the model section.
    Hierarchical,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemainderConfig {
    pub model: RemainderKind,
    pub coefficients: CubicCoefficients,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            format: Format::Csv,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub strict: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(eps) = o.epsilon {
            self.set_epsilon(eps);
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        if let Some(s) = o.strict {
            self.solver.strict_omega_domain = s;
        }
    }

    /// ε is shared by the truncated map and the hierarchical backend.
    pub fn set_epsilon(&mut self, eps: f64) {
        self.model.epsilon = eps;
        self.hier.epsilon = eps;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.solver.validate()?;
        self.hier.validate()?;
        Ok(())
    }

    /// The model and remainder a run actually uses.
    pub fn build(&self) -> Result<(Model, Box<dyn Remainder>), CliError> {
        match self.remainder.model {
            RemainderKind::Cubic => {
                let rem = default_remainder_model(&self.model, self.remainder.coefficients)?;
                Ok((Model::new(self.model)?, Box::new(rem)))
            }
            RemainderKind::Zero => Ok((Model::new(self.model)?, Box::new(CubicRemainder::zero(&self.model)))),
            RemainderKind::Hierarchical => {
                let rem = HierarchicalRemainder::new(&self.hier, self.remainder.coefficients.lipschitz_budget)?;
                let mut params = rem.model_params()?;
                params.epsilon_max = self.model.epsilon_max;
                Ok((Model::new(params)?, Box::new(rem)))
            }
        }
    }
}
