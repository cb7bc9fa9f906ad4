//! Decision-variable layout, block assembly of the synthesis conditions, and
//! recovery of the controller certificate from a solver point.
//!
//! Unknowns are `X = Xᵀ (n×n)`, `S` diagonal `(m×m)`, `Z, Y (m×n)`,
//! `Q̃ = Q̃ᵀ (n×n)` and the scalar `φ`. The program is
//!
//! ```text
//! min φ  s.t.  X ⪰ εI,  S ⪰ εI,  −Λ_i ⪰ εI  (every vertex i),
//!              [X, (Z−Y)_ℓᵀ; (Z−Y)_ℓ, ū_ℓ²] ⪰ 0  (every channel ℓ),
//!              [Q̃, X; X, ρI] ⪰ 0,  [φI, I; I, X] ⪰ 0,
//! ```
//!
//! with
//!
//! ```text
//! Λ_i = [ B_iZ + ZᵀB_iᵀ + (μ/4)I + Q̃   Yᵀ − B_iS   ZᵀB_iᵀ ]
//!       [ Y − SB_iᵀ                     −2S          0      ]
//!       [ B_iZ                           0          −μI     ].
//! ```
//!
//! The gain is `K = ZX⁻¹`, `L = YX⁻¹`, `P = X⁻¹`, `Q = X⁻¹Q̃X⁻¹`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UvcError};
use crate::linalg::{min_eigenvalue, spd_condition, symmetrize};
use crate::program::{LmiBlock, LmiProgram};
use crate::sdp::{ResidualReport, SdpSolution, SolverSettings};
use crate::system::{PolytopicSystem, SaturationLimits};

pub const LAMBDA_PREFIX: &str = "Lambda_vertex_";
pub const INCLUSION_PREFIX: &str = "inclusion_row_";
pub const QMAX_LABEL: &str = "Qmax";
pub const U0MAX_LABEL: &str = "U0max";
pub const XPOS_LABEL: &str = "Xpos";
pub const SPOS_LABEL: &str = "Spos";

/// Default cap on the 2-norm condition number of `X` during recovery.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Tolerance used for the design invariants checked at recovery.
pub const CERTIFICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisParameters {
    pub mu: f64,
    /// Guaranteed reaching-time bound in seconds.
    pub rho: f64,
    /// Base strictness margin; the applied margin is `eps_strict` times
    /// `max(1, max_i ‖B_i‖₂)`.
    pub eps_strict: f64,
    pub condition_cap: f64,
    pub solver: SolverSettings,
}

impl SynthesisParameters {
    pub fn new(mu: f64, rho: f64) -> Self {
        Self {
            mu,
            rho,
            eps_strict: 1e-6,
            condition_cap: DEFAULT_CONDITION_CAP,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("rho", self.rho), ("eps_strict", self.eps_strict)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(UvcError::invalid(format!("{name} must be positive and finite")));
            }
        }
        if !(self.condition_cap > 1.0) {
            return Err(UvcError::invalid("condition_cap must exceed 1"));
        }
        self.solver.validate()
    }

    /// Margin actually applied to the strict inequalities for `system`.
    pub fn margin_for(&self, system: &PolytopicSystem) -> f64 {
        self.eps_strict * system.scale_factor()
    }
}

/// Canonical ordering of the scalar decision variables.
///
/// Symmetric matrices store their upper triangle row by row, `S` its
/// diagonal, and `Z`, `Y` all entries row by row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecisionLayout {
    n: usize,
    m: usize,
    pub x: Range<usize>,
    pub s: Range<usize>,
    pub z: Range<usize>,
    pub y: Range<usize>,
    pub q_tilde: Range<usize>,
    pub phi: usize,
    pub total_vars: usize,
}

pub fn decision_layout(n: usize, m: usize) -> Result<DecisionLayout> {
    if n == 0 || m == 0 {
        return Err(UvcError::invalid(format!(
            "dimensions must be positive, got n={n}, m={m}"
        )));
    }
    let sym = n * (n + 1) / 2;
    let x = 0..sym;
    let s = x.end..x.end + m;
    let z = s.end..s.end + m * n;
    let y = z.end..z.end + m * n;
    let q_tilde = y.end..y.end + sym;
    let phi = q_tilde.end;
    Ok(DecisionLayout {
        n,
        m,
        x,
        s,
        z,
        y,
        q_tilde,
        phi,
        total_vars: phi + 1,
    })
}

impl DecisionLayout {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn sym_offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row i of the upper triangle starts after rows 0..i
        i * self.n - i * (i.saturating_sub(1)) / 2 + (j - i)
    }

    /// Index of `X[i, j]` (either triangle).
    pub fn x_index(&self, i: usize, j: usize) -> usize {
        self.x.start + self.sym_offset(i, j)
    }

    pub fn s_index(&self, l: usize) -> usize {
        self.s.start + l
    }

    pub fn z_index(&self, l: usize, c: usize) -> usize {
        self.z.start + l * self.n + c
    }

    pub fn y_index(&self, l: usize, c: usize) -> usize {
        self.y.start + l * self.n + c
    }

    pub fn q_index(&self, i: usize, j: usize) -> usize {
        self.q_tilde.start + self.sym_offset(i, j)
    }

    fn sym_matrix(&self, v: &[f64], index: impl Fn(usize, usize) -> usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| v[index(i, j)])
    }

    pub fn extract_x(&self, v: &[f64]) -> DMatrix<f64> {
        self.sym_matrix(v, |i, j| self.x_index(i, j))
    }

    pub fn extract_q_tilde(&self, v: &[f64]) -> DMatrix<f64> {
        self.sym_matrix(v, |i, j| self.q_index(i, j))
    }

    pub fn extract_s(&self, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(self.m, |l, _| v[self.s_index(l)]))
    }

    pub fn extract_z(&self, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.n, |l, c| v[self.z_index(l, c)])
    }

    pub fn extract_y(&self, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.n, |l, c| v[self.y_index(l, c)])
    }

    /// Inverse of the `extract_*` family: packs matrices into a point.
    pub fn pack(
        &self,
        x: &DMatrix<f64>,
        s_diag: &[f64],
        z: &DMatrix<f64>,
        y: &DMatrix<f64>,
        q_tilde: &DMatrix<f64>,
        phi: f64,
    ) -> DVector<f64> {
        let mut v = DVector::zeros(self.total_vars);
        for i in 0..self.n {
            for j in i..self.n {
                v[self.x_index(i, j)] = x[(i, j)];
                v[self.q_index(i, j)] = q_tilde[(i, j)];
            }
        }
        for l in 0..self.m {
            v[self.s_index(l)] = s_diag[l];
            for c in 0..self.n {
                v[self.z_index(l, c)] = z[(l, c)];
                v[self.y_index(l, c)] = y[(l, c)];
            }
        }
        v[self.phi] = phi;
        v
    }
}

/// Builds the synthesis program for `system`.
pub fn assemble_program(
    system: &PolytopicSystem,
    limits: &SaturationLimits,
    params: &SynthesisParameters,
    layout: &DecisionLayout,
) -> Result<LmiProgram> {
    params.validate()?;
    let (n, m) = (system.n(), system.m());
    if layout.n() != n || layout.m() != m {
        return Err(UvcError::invalid(format!(
            "layout is ({}, {}) but the system is ({n}, {m})",
            layout.n(),
            layout.m()
        )));
    }
    if limits.len() != m {
        return Err(UvcError::invalid(format!(
            "{} saturation limits for {m} inputs",
            limits.len()
        )));
    }
    let eps = params.margin_for(system);
    let mut blocks = Vec::with_capacity(system.num_vertices() + m + 4);

    let mut xpos = LmiBlock::new(XPOS_LABEL, n);
    add_sym_var(&mut xpos, layout, Var::X, 0, 1.0);
    add_identity(&mut xpos, 0, n, -eps);
    blocks.push(xpos);

    let mut spos = LmiBlock::new(SPOS_LABEL, m);
    for l in 0..m {
        spos.add_term_single(layout.s_index(l), l, l, 1.0);
        spos.add_constant_single(l, l, -eps);
    }
    blocks.push(spos);

    for (i, b) in system.vertices().iter().enumerate() {
        let lambda = vertex_block(i, b, layout, params.mu);
        let mut neg = lambda.negated();
        add_identity(&mut neg, 0, 2 * n + m, -eps);
        blocks.push(neg);
    }

    for l in 0..m {
        let mut inc = LmiBlock::new(format!("{INCLUSION_PREFIX}{}", l + 1), n + 1);
        add_sym_var(&mut inc, layout, Var::X, 0, 1.0);
        for c in 0..n {
            inc.add_term_mirrored(layout.z_index(l, c), n, c, 1.0);
            inc.add_term_mirrored(layout.y_index(l, c), n, c, -1.0);
        }
        let u = limits.get(l);
        inc.add_constant_single(n, n, u * u);
        blocks.push(inc);
    }

    let mut qmax = LmiBlock::new(QMAX_LABEL, 2 * n);
    add_sym_var(&mut qmax, layout, Var::QTilde, 0, 1.0);
    for r in 0..n {
        for c in 0..n {
            qmax.add_term_mirrored(layout.x_index(r, c), n + r, c, 1.0);
        }
    }
    add_identity(&mut qmax, n, n, params.rho);
    blocks.push(qmax);

    let mut u0max = LmiBlock::new(U0MAX_LABEL, 2 * n);
    for r in 0..n {
        u0max.add_term_single(layout.phi, r, r, 1.0);
        u0max.add_constant_mirrored(n + r, r, 1.0);
    }
    add_sym_var(&mut u0max, layout, Var::X, n, 1.0);
    blocks.push(u0max);

    let mut objective = DVector::zeros(layout.total_vars);
    objective[layout.phi] = 1.0;
    LmiProgram::new(objective, blocks)
}

#[derive(Clone, Copy)]
enum Var {
    X,
    QTilde,
}

fn add_sym_var(block: &mut LmiBlock, layout: &DecisionLayout, var: Var, offset: usize, coeff: f64) {
    let n = layout.n();
    for r in 0..n {
        for c in 0..n {
            let k = match var {
                Var::X => layout.x_index(r, c),
                Var::QTilde => layout.q_index(r, c),
            };
            block.add_term_single(k, offset + r, offset + c, coeff);
        }
    }
}

fn add_identity(block: &mut LmiBlock, offset: usize, size: usize, value: f64) {
    for r in 0..size {
        block.add_constant_single(offset + r, offset + r, value);
    }
}

/// `Λ_i` for vertex `b` (not negated, no margin).
fn vertex_block(index: usize, b: &DMatrix<f64>, layout: &DecisionLayout, mu: f64) -> LmiBlock {
    let (n, m) = b.shape();
    let (r2, r3) = (n, n + m);
    let mut lam = LmiBlock::new(format!("{LAMBDA_PREFIX}{}", index + 1), 2 * n + m);

    // (1,1): B Z + Zᵀ Bᵀ + (μ/4) I + Q̃
    for r in 0..n {
        for c in 0..n {
            for l in 0..m {
                lam.add_term_mirrored(layout.z_index(l, c), r, c, b[(r, l)]);
            }
        }
    }
    add_identity(&mut lam, 0, n, mu / 4.0);
    add_sym_var(&mut lam, layout, Var::QTilde, 0, 1.0);

    // (1,2) = Yᵀ − B S, mirrored into (2,1)
    for r in 0..n {
        for c in 0..m {
            lam.add_term_mirrored(layout.y_index(c, r), r, r2 + c, 1.0);
            lam.add_term_mirrored(layout.s_index(c), r, r2 + c, -b[(r, c)]);
        }
    }

    // (2,2) = −2S
    for l in 0..m {
        lam.add_term_single(layout.s_index(l), r2 + l, r2 + l, -2.0);
    }

    // (3,1) = B Z, mirrored into (1,3)
    for r in 0..n {
        for c in 0..n {
            for l in 0..m {
                lam.add_term_mirrored(layout.z_index(l, c), r3 + r, c, b[(r, l)]);
            }
        }
    }

    // (3,3) = −μ I
    add_identity(&mut lam, r3, n, -mu);
    lam
}

/// Gains and Lyapunov certificate recovered from a solved program.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDesign {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub phi: f64,
    pub mu: f64,
    pub rho: f64,
    pub u_bar: SaturationLimits,
    pub system: PolytopicSystem,
    /// Block residuals of the program at the solver point, when available.
    pub residuals: Option<ResidualReport>,
}

/// Outcome of [`ControllerDesign::check_invariants`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub p_min_eigenvalue: f64,
    pub q_min_eigenvalue: f64,
    /// `λ_max(P) − φ`, non-positive when `P ⪯ φI`.
    pub p_excess_over_phi: f64,
    /// `ū_ℓ² − (K−L)_ℓ P⁻¹ (K−L)_ℓᵀ` per channel.
    pub inclusion_margins: Vec<f64>,
}

impl CertificateCheck {
    pub fn holds(&self, rho: f64, u_bar: &SaturationLimits, tol: f64) -> bool {
        self.p_min_eigenvalue > 0.0
            && self.q_min_eigenvalue > 0.0
            && self.q_min_eigenvalue >= 1.0 / rho - tol
            && self
                .inclusion_margins
                .iter()
                .enumerate()
                .all(|(l, m)| *m >= -tol * u_bar.get(l).powi(2))
    }
}

impl ControllerDesign {
    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    /// Builds a design from externally supplied matrices.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        k: DMatrix<f64>,
        l: DMatrix<f64>,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        phi: f64,
        mu: f64,
        rho: f64,
        u_bar: SaturationLimits,
        system: PolytopicSystem,
    ) -> Result<Self> {
        let (n, m) = (system.n(), system.m());
        for (name, mat, shape) in [
            ("K", &k, (m, n)),
            ("L", &l, (m, n)),
            ("P", &p, (n, n)),
            ("Q", &q, (n, n)),
        ] {
            if mat.shape() != shape {
                return Err(UvcError::invalid(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    mat.shape()
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(UvcError::invalid(format!("{name} has non-finite entries")));
            }
        }
        if u_bar.len() != m {
            return Err(UvcError::invalid("u_bar length differs from the input dimension"));
        }
        Ok(Self {
            k,
            l,
            p: symmetrize(&p),
            q: symmetrize(&q),
            phi,
            mu,
            rho,
            u_bar,
            system,
            residuals: None,
        })
    }

    pub fn check_invariants(&self) -> Result<CertificateCheck> {
        let p_inv = self
            .p
            .clone()
            .cholesky()
            .ok_or_else(|| UvcError::IllConditioned("P is not positive definite".into()))?
            .inverse();
        let diff = &self.k - &self.l;
        let inclusion_margins = (0..self.m())
            .map(|l| {
                let row = diff.row(l);
                let quad = (row * &p_inv * row.transpose())[(0, 0)];
                self.u_bar.get(l).powi(2) - quad
            })
            .collect();
        Ok(CertificateCheck {
            p_min_eigenvalue: min_eigenvalue(&self.p),
            q_min_eigenvalue: min_eigenvalue(&self.q),
            p_excess_over_phi: crate::linalg::max_eigenvalue(&self.p) - self.phi,
            inclusion_margins,
        })
    }
}

/// Recovers `K = ZX⁻¹`, `L = YX⁻¹`, `P = X⁻¹`, `Q = X⁻¹Q̃X⁻¹` from a solver point.
pub fn recover_design(
    solution: &SdpSolution,
    layout: &DecisionLayout,
    system: &PolytopicSystem,
    limits: &SaturationLimits,
    params: &SynthesisParameters,
) -> Result<ControllerDesign> {
    if !solution.status.is_success() {
        return Err(UvcError::NoDesign {
            reason: format!("solver status {}", solution.status),
            report: Some(Box::new(solution.report.clone())),
        });
    }
    if solution.x.len() != layout.total_vars {
        return Err(UvcError::invalid("solution length differs from the layout"));
    }
    if layout.n() != system.n() || layout.m() != system.m() || limits.len() != system.m() {
        return Err(UvcError::invalid("layout, system and limits disagree on dimensions"));
    }
    let v = solution.x.as_slice();
    let x = symmetrize(&layout.extract_x(v));
    let cond = spd_condition(&x);
    if !(cond <= params.condition_cap) {
        return Err(UvcError::IllConditioned(format!(
            "X has condition number {cond:e} (cap {:e})",
            params.condition_cap
        )));
    }
    let x_inv = x
        .clone()
        .cholesky()
        .ok_or_else(|| UvcError::IllConditioned("X is not positive definite".into()))?
        .inverse();
    let q_tilde = symmetrize(&layout.extract_q_tilde(v));
    let k = layout.extract_z(v) * &x_inv;
    let l = layout.extract_y(v) * &x_inv;
    let p = symmetrize(&x_inv);
    let q = symmetrize(&(&x_inv * q_tilde * &x_inv));
    Ok(ControllerDesign {
        k,
        l,
        p,
        q,
        phi: v[layout.phi],
        mu: params.mu,
        rho: params.rho,
        u_bar: limits.clone(),
        system: system.clone(),
        residuals: Some(solution.report.clone()),
    })
}
