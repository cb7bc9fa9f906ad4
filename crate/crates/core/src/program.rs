//! Affine symmetric-matrix constraints `F₀ + Σ_k x_k F_k ⪰ 0` and the
//! linear-objective program built from them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UvcError};

/// One labeled constraint `F₀ + Σ_k x_k F_k ⪰ 0`.
///
/// Coefficient matrices are kept only for variables that actually appear,
/// ordered by variable index so evaluation order is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    label: String,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl LmiBlock {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self {
            label: label.into(),
            constant: DMatrix::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    /// Non-zero coefficient matrices keyed by variable index.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(k, f)| (*k, f))
    }

    pub fn coefficient(&self, var: usize) -> Option<&DMatrix<f64>> {
        self.terms.get(&var)
    }

    fn term_mut(&mut self, var: usize) -> &mut DMatrix<f64> {
        let dim = self.dim();
        self.terms
            .entry(var)
            .or_insert_with(|| DMatrix::zeros(dim, dim))
    }

    /// Adds `value` at `(r, c)` only. Callers keep the result symmetric.
    pub fn add_constant_single(&mut self, r: usize, c: usize, value: f64) {
        self.constant[(r, c)] += value;
    }

    /// Adds `value` at `(r, c)` and at `(c, r)`; on the diagonal this adds twice.
    pub fn add_constant_mirrored(&mut self, r: usize, c: usize, value: f64) {
        self.constant[(r, c)] += value;
        self.constant[(c, r)] += value;
    }

    pub fn add_term_single(&mut self, var: usize, r: usize, c: usize, value: f64) {
        if value != 0.0 {
            self.term_mut(var)[(r, c)] += value;
        }
    }

    pub fn add_term_mirrored(&mut self, var: usize, r: usize, c: usize, value: f64) {
        if value != 0.0 {
            let f = self.term_mut(var);
            f[(r, c)] += value;
            f[(c, r)] += value;
        }
    }

    /// Multiplies every coefficient (constant included) by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            label: self.label.clone(),
            constant: &self.constant * factor,
            terms: self
                .terms
                .iter()
                .map(|(k, f)| (*k, f * factor))
                .collect(),
        }
    }

    /// Copy with each `F_k` multiplied by `weights[k]`.
    pub fn with_variable_weights(&self, weights: &[f64]) -> Self {
        Self {
            label: self.label.clone(),
            constant: self.constant.clone(),
            terms: self
                .terms
                .iter()
                .map(|(k, f)| (*k, f * weights[*k]))
                .collect(),
        }
    }

    /// Negated copy: `−F₀ − Σ x_k F_k`.
    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// `F₀ + Σ_k x_k F_k`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, f) in &self.terms {
            let xk = x[*k];
            if xk != 0.0 {
                out += f * xk;
            }
        }
        out
    }

    /// Frobenius norm of the stacked data `[F₀, F_1, …]`.
    pub fn data_norm(&self) -> f64 {
        let mut acc = self.constant.norm_squared();
        for f in self.terms.values() {
            acc += f.norm_squared();
        }
        acc.sqrt()
    }
}

/// Minimize `cᵀx` subject to every block being positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProgram {
    num_vars: usize,
    objective: DVector<f64>,
    blocks: Vec<LmiBlock>,
}

impl LmiProgram {
    pub fn new(objective: DVector<f64>, blocks: Vec<LmiBlock>) -> Result<Self> {
        let program = Self {
            num_vars: objective.len(),
            objective,
            blocks,
        };
        program.validate()?;
        Ok(program)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn block(&self, label: &str) -> Option<&LmiBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn blocks_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a LmiBlock> {
        self.blocks.iter().filter(move |b| b.label.starts_with(prefix))
    }

    /// Checks symmetry of all data, square shapes, finite entries and
    /// variable indices within range.
    pub fn validate(&self) -> Result<()> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(UvcError::invalid("objective has non-finite entries"));
        }
        for block in &self.blocks {
            let dim = block.dim();
            if dim == 0 || !block.constant.is_square() {
                return Err(UvcError::invalid(format!("block {} is not square", block.label)));
            }
            check_symmetric(&block.label, &block.constant)?;
            for (k, f) in &block.terms {
                if *k >= self.num_vars {
                    return Err(UvcError::invalid(format!(
                        "block {} references variable {k} but the program has {}",
                        block.label, self.num_vars
                    )));
                }
                if f.shape() != (dim, dim) {
                    return Err(UvcError::invalid(format!(
                        "block {} coefficient {k} has wrong shape",
                        block.label
                    )));
                }
                check_symmetric(&block.label, f)?;
            }
        }
        Ok(())
    }
}

fn check_symmetric(label: &str, f: &DMatrix<f64>) -> Result<()> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(UvcError::invalid(format!("block {label} has non-finite data")));
    }
    let scale = f.amax().max(1.0);
    let asym = (f - f.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(UvcError::invalid(format!(
            "block {label} has an asymmetric coefficient (|F - Fᵀ| = {asym:e})"
        )));
    }
    Ok(())
}
