//! Synthesis configuration files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use uvc_core::models::{manipulator_polytope, rov_polytope, RovParameters};
use uvc_core::{PolytopicSystem, SaturationLimits, SolverSettings, SynthesisParameters};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSpec,
    pub u_bar: Limits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub rho: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Either a named model (selected by a `model` key) or explicit vertices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(try_from = "serde_json::Value")]
pub enum SystemSpec {
    Model(ModelSpec),
    Explicit(ExplicitSystem),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Manipulator(ManipulatorConfig),
    Rov(RovConfig),
}

impl TryFrom<serde_json::Value> for SystemSpec {
    type Error = serde_json::Error;

    fn try_from(value: serde_json::Value) -> Result<Self, Self::Error> {
        if value.get("model").is_some() {
            serde_json::from_value(value).map(SystemSpec::Model)
        } else {
            serde_json::from_value(value).map(SystemSpec::Explicit)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorConfig {
    pub phi_bar: f64,
    pub delta_bar: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RovConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_hi: Option<f64>,
}

impl RovConfig {
    pub fn resolve(&self) -> RovParameters {
        let d = RovParameters::default();
        RovParameters {
            m0: self.m0.unwrap_or(d.m0),
            iz: self.iz.unwrap_or(d.iz),
            psi1: self.psi1.unwrap_or(d.psi1),
            psi2: self.psi2.unwrap_or(d.psi2),
            g_lo: self.g_lo.unwrap_or(d.g_lo),
            g_hi: self.g_hi.unwrap_or(d.g_hi),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    pub n: usize,
    pub m: usize,
    pub vertices: Vec<VertexData>,
}

/// A vertex given as rows, or as a flat row-major array of `n·m` entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexData {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Limits {
    Uniform(f64),
    PerChannel(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_eps_strict")]
    pub eps_strict: f64,
}

fn default_tol() -> f64 {
    SolverSettings::default().tol
}

fn default_max_iterations() -> usize {
    SolverSettings::default().max_iterations
}

fn default_eps_strict() -> f64 {
    SynthesisParameters::new(1.0, 1.0).eps_strict
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iterations: default_max_iterations(),
            eps_strict: default_eps_strict(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.into(),
            source,
        })
    }

    pub fn build_system(&self) -> CliResult<PolytopicSystem> {
        Ok(match &self.system {
            SystemSpec::Model(ModelSpec::Manipulator(c)) => {
                manipulator_polytope(c.phi_bar, c.delta_bar)?
            }
            SystemSpec::Model(ModelSpec::Rov(c)) => rov_polytope(&c.resolve())?,
            SystemSpec::Explicit(sys) => {
                if sys.vertices.is_empty() {
                    return Err(CliError::invalid("system.vertices is empty"));
                }
                let vertices = sys
                    .vertices
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vertex_matrix(v, sys.n, sys.m, i))
                    .collect::<CliResult<Vec<_>>>()?;
                PolytopicSystem::new(vertices)?
            }
        })
    }

    pub fn limits(&self, m: usize) -> CliResult<SaturationLimits> {
        Ok(match &self.u_bar {
            Limits::Uniform(v) => SaturationLimits::uniform(*v, m)?,
            Limits::PerChannel(v) => {
                if v.len() != m {
                    return Err(CliError::invalid(format!(
                        "u_bar has {} entries, the system has {m} inputs",
                        v.len()
                    )));
                }
                SaturationLimits::new(v.clone())?
            }
        })
    }

    /// Parameters for a single solve at `mu`.
    pub fn parameters(&self, mu: f64) -> SynthesisParameters {
        let mut p = SynthesisParameters::new(mu, self.rho);
        p.eps_strict = self.solver.eps_strict;
        p.solver.tol = self.solver.tol;
        p.solver.max_iterations = self.solver.max_iterations;
        p
    }
}

fn vertex_matrix(v: &VertexData, n: usize, m: usize, index: usize) -> CliResult<DMatrix<f64>> {
    let flat: Vec<f64> = match v {
        VertexData::Rows(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(CliError::invalid(format!("vertex {index} is not {n}x{m}")));
            }
            rows.concat()
        }
        VertexData::Flat(data) => {
            if data.len() != n * m {
                return Err(CliError::invalid(format!(
                    "vertex {index} has {} entries, expected {}",
                    data.len(),
                    n * m
                )));
            }
            data.clone()
        }
    };
    Ok(DMatrix::from_row_slice(n, m, &flat))
}
