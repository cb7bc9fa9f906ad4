//! Polytopic models of the two reference plants: a planar manipulator seen
//! through an uncalibrated camera, and a four-thruster underwater vehicle.

use std::f64::consts::{FRAC_PI_2, FRAC_1_SQRT_2};

use nalgebra::DMatrix;

use crate::error::{Result, UvcError};
use crate::system::PolytopicSystem;

/// Physical parameters of the underwater vehicle model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RovParameters {
    /// Mass (kg).
    pub m0: f64,
    /// Yaw moment of inertia (kg·m²).
    pub iz: f64,
    pub psi1: f64,
    /// Thruster lever arm (m).
    pub psi2: f64,
    pub g_lo: f64,
    pub g_hi: f64,
}

impl Default for RovParameters {
    fn default() -> Self {
        Self {
            m0: 290.0,
            iz: 290.0,
            psi1: FRAC_1_SQRT_2,
            psi2: 0.35,
            g_lo: 0.5,
            g_hi: 1.0,
        }
    }
}

/// `[[c, s], [−s, c]]`.
pub fn rotation(c: f64, s: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

/// Camera-rotated manipulator: `B(φ) = B(Δφ) B(φ̄)` with `|Δφ| ≤ Δ̄`, the
/// pair `(cos Δφ, sin Δφ)` enclosed by four points.
pub fn manipulator_polytope(phi_bar: f64, delta_bar: f64) -> Result<PolytopicSystem> {
    if !phi_bar.is_finite() {
        return Err(UvcError::invalid("phi_bar must be finite"));
    }
    if !(0.0..=FRAC_PI_2).contains(&delta_bar) {
        return Err(UvcError::invalid(format!(
            "delta_bar = {delta_bar} outside [0, pi/2]"
        )));
    }
    let nominal = rotation(phi_bar.cos(), phi_bar.sin());
    let (cd, sd) = (delta_bar.cos(), delta_bar.sin());
    let corners = [(cd, sd), (1.0, sd), (cd, -sd), (1.0, -sd)];
    let vertices = corners
        .iter()
        .map(|&(c, s)| rotation(c, s) * &nominal)
        .collect();
    PolytopicSystem::new(vertices)
}

/// `B(g) = M⁻¹ Ψ Π(g)` with `Π(g) = diag(g₁, 1, g₃, 1)` and
/// `(g₁, g₃) ∈ {g_lo, g_hi}²`, ordered lexicographically.
pub fn rov_polytope(p: &RovParameters) -> Result<PolytopicSystem> {
    if !(p.m0 > 0.0) || !(p.iz > 0.0) {
        return Err(UvcError::invalid("mass and inertia must be positive"));
    }
    if !(p.g_lo > 0.0) || !(p.g_lo <= p.g_hi) || !p.g_hi.is_finite() {
        return Err(UvcError::invalid("actuator gains need 0 < g_lo <= g_hi"));
    }
    if !p.psi1.is_finite() || !p.psi2.is_finite() {
        return Err(UvcError::invalid("thruster geometry must be finite"));
    }
    let (a, b) = (p.psi1, p.psi2);
    #[rustfmt::skip]
    let psi = DMatrix::from_row_slice(3, 4, &[
         a,  a,  a, a,
         a, -a, -a, a,
        -b,  b, -b, b,
    ]);
    let m_inv = [1.0 / p.m0, 1.0 / p.m0, 1.0 / p.iz];
    let mut vertices = Vec::with_capacity(4);
    for g1 in [p.g_lo, p.g_hi] {
        for g3 in [p.g_lo, p.g_hi] {
            let gains = [g1, 1.0, g3, 1.0];
            vertices.push(DMatrix::from_fn(3, 4, |r, c| m_inv[r] * psi[(r, c)] * gains[c]));
        }
    }
    PolytopicSystem::new(vertices)
}
