//! Self-describing design documents.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use uvc_core::synthesis::GridPoint;
use uvc_core::{ControllerDesign, PolytopicSystem, ResidualReport, SaturationLimits};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Dense matrix stored row-major with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let data = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| m[(r, c)]))
            .collect();
        Self { rows, cols, data }
    }

    pub fn to_dmatrix(&self, name: &str) -> CliResult<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::invalid(format!(
                "{name}: {} entries for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDocument {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    pub vertex_count: usize,
    pub input: InputEcho,
    pub gains: Gains,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu_grid: Vec<GridEntry>,
}

/// Everything needed to reproduce or re-verify the design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEcho {
    pub vertices: Vec<Matrix>,
    pub u_bar: Vec<f64>,
    pub mu: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k: Matrix,
    pub l: Matrix,
    pub p: Matrix,
    pub q: Matrix,
    pub phi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Residuals {
    pub max_violation: f64,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub label: String,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&ResidualReport> for Residuals {
    fn from(r: &ResidualReport) -> Self {
        Self {
            max_violation: r.max_violation,
            blocks: r
                .blocks
                .iter()
                .map(|b| BlockEntry {
                    label: b.label.clone(),
                    min_eigenvalue: b.min_eigenvalue,
                })
                .collect(),
        }
    }
}

impl From<&GridPoint> for GridEntry {
    fn from(p: &GridPoint) -> Self {
        Self {
            mu: p.mu,
            phi: p.phi,
            error: p.error.clone(),
        }
    }
}

impl DesignDocument {
    pub fn new(design: &ControllerDesign, config: Option<Config>, grid: &[GridPoint]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n: design.n(),
            m: design.m(),
            vertex_count: design.system.num_vertices(),
            input: InputEcho {
                vertices: design.system.vertices().iter().map(Matrix::from_dmatrix).collect(),
                u_bar: design.u_bar.as_vector().iter().copied().collect(),
                mu: design.mu,
                rho: design.rho,
                config,
            },
            gains: Gains {
                k: Matrix::from_dmatrix(&design.k),
                l: Matrix::from_dmatrix(&design.l),
                p: Matrix::from_dmatrix(&design.p),
                q: Matrix::from_dmatrix(&design.q),
                phi: design.phi,
            },
            residuals: design.residuals.as_ref().map(Residuals::from),
            mu_grid: grid.iter().map(GridEntry::from).collect(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let doc: Self = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.into(),
            source,
        })?;
        if doc.format_version != FORMAT_VERSION {
            return Err(CliError::invalid(format!(
                "{}: format_version {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| CliError::invalid(format!("serialize design: {e}")))
    }

    /// Rebuilds the design; the certificate is not re-checked here.
    pub fn to_design(&self) -> CliResult<ControllerDesign> {
        if self.input.vertices.len() != self.vertex_count {
            return Err(CliError::invalid(format!(
                "vertex_count is {} but {} vertices are stored",
                self.vertex_count,
                self.input.vertices.len()
            )));
        }
        let vertices = self
            .input
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| v.to_dmatrix(&format!("vertex {i}")))
            .collect::<CliResult<Vec<_>>>()?;
        let system = PolytopicSystem::new(vertices)?;
        if (system.n(), system.m()) != (self.n, self.m) {
            return Err(CliError::invalid(format!(
                "vertices are {}x{}, header says {}x{}",
                system.n(),
                system.m(),
                self.n,
                self.m
            )));
        }
        let mut design = ControllerDesign::from_parts(
            self.gains.k.to_dmatrix("K")?,
            self.gains.l.to_dmatrix("L")?,
            self.gains.p.to_dmatrix("P")?,
            self.gains.q.to_dmatrix("Q")?,
            self.gains.phi,
            self.input.mu,
            self.input.rho,
            SaturationLimits::new(self.input.u_bar.clone())?,
            system,
        )?;
        design.residuals = self.residuals.as_ref().map(|r| ResidualReport {
            max_violation: r.max_violation,
            blocks: r
                .blocks
                .iter()
                .map(|b| uvc_core::sdp::BlockResidual {
                    label: b.label.clone(),
                    min_eigenvalue: b.min_eigenvalue,
                })
                .collect(),
        });
        Ok(design)
    }
}
