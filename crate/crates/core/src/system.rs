//! Plant description: the polytope of input matrices, the simplex weights
//! that pick a member of it, and the actuator limits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Result, UvcError};
use crate::linalg::spectral_norm;

/// Uncertain input map `B ∈ co{B_1, …, B_N}` of the plant `σ̇ = B sat(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicSystem {
    n: usize,
    m: usize,
    vertices: Vec<DMatrix<f64>>,
}

impl PolytopicSystem {
    pub fn new(vertices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| UvcError::invalid("polytope needs at least one vertex"))?;
        let (n, m) = first.shape();
        if n == 0 || m == 0 {
            return Err(UvcError::invalid("vertex matrices must be non-empty"));
        }
        for (i, b) in vertices.iter().enumerate() {
            if b.shape() != (n, m) {
                return Err(UvcError::invalid(format!(
                    "vertex {i} has shape {:?}, expected ({n}, {m})",
                    b.shape()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(UvcError::invalid(format!("vertex {i} has non-finite entries")));
            }
        }
        Ok(Self { n, m, vertices })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[DMatrix<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &DMatrix<f64> {
        &self.vertices[i]
    }

    /// `max(1, max_i ‖B_i‖₂)`, used to scale the strictness margin.
    pub fn scale_factor(&self) -> f64 {
        self.vertices
            .iter()
            .map(spectral_norm)
            .fold(1.0_f64, f64::max)
    }

    /// Convex combination `Σ α_i B_i`.
    pub fn blend(&self, weights: &SimplexWeights) -> Result<DMatrix<f64>> {
        if weights.len() != self.vertices.len() {
            return Err(UvcError::invalid(format!(
                "got {} weights for {} vertices",
                weights.len(),
                self.vertices.len()
            )));
        }
        let mut b = DMatrix::zeros(self.n, self.m);
        for (alpha, vertex) in weights.as_slice().iter().zip(&self.vertices) {
            b += vertex * *alpha;
        }
        Ok(b)
    }
}

/// A point of the unit simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    const SUM_TOL: f64 = 1e-12;

    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(UvcError::invalid("simplex weights must be non-empty"));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(UvcError::invalid("simplex weights must be finite and non-negative"));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(UvcError::invalid(format!("simplex weights sum to {sum}, not 1")));
        }
        Ok(Self(alpha))
    }

    /// Indicator weights selecting vertex `i` of `count`.
    pub fn vertex(i: usize, count: usize) -> Result<Self> {
        if i >= count {
            return Err(UvcError::invalid(format!("vertex {i} out of range 0..{count}")));
        }
        let mut alpha = vec![0.0; count];
        alpha[i] = 1.0;
        Ok(Self(alpha))
    }

    pub fn uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(UvcError::invalid("simplex weights must be non-empty"));
        }
        Ok(Self(vec![1.0 / count as f64; count]))
    }

    /// Uniform sample on the simplex: normalized i.i.d. standard exponentials.
    pub fn sample<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Result<Self> {
        if count == 0 {
            return Err(UvcError::invalid("simplex weights must be non-empty"));
        }
        let draws: Vec<f64> = (0..count).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        let mut alpha: Vec<f64> = draws.iter().map(|d| d / total).collect();
        // absorb round-off in the last weight so the sum is 1 to the ulp
        let head: f64 = alpha[..count - 1].iter().sum();
        alpha[count - 1] = (1.0 - head).max(0.0);
        Ok(Self(alpha))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-channel actuator limits `ū`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationLimits(DVector<f64>);

impl SaturationLimits {
    pub fn new(u_bar: Vec<f64>) -> Result<Self> {
        if u_bar.is_empty() {
            return Err(UvcError::invalid("saturation limits must be non-empty"));
        }
        if u_bar.iter().any(|u| !u.is_finite() || *u <= 0.0) {
            return Err(UvcError::invalid("saturation limits must be finite and positive"));
        }
        Ok(Self(DVector::from_vec(u_bar)))
    }

    pub fn uniform(value: f64, m: usize) -> Result<Self> {
        Self::new(vec![value; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, channel: usize) -> f64 {
        self.0[channel]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}
