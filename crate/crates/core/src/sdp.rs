//! Dense primal–dual interior-point solver for small block LMI programs.
//!
//! The program `min cᵀx  s.t.  F_j(x) = F_j0 + Σ_k x_k F_jk ⪰ 0` is paired
//! with its conic dual `max −Σ_j ⟨F_j0, Z_j⟩  s.t.  Σ_j ⟨F_jk, Z_j⟩ = c_k,
//! Z_j ⪰ 0`. The iteration is an infeasible-start path-following method on
//! `(x, S, Z)` with `S_j` the slack of block `j`. Search directions use the
//! HKM linearization of `Z S = τ I` with a Mehrotra predictor–corrector.
//! Each block is rescaled to unit Frobenius data norm before the solve and
//! all reported residuals refer to the original, unscaled program.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, UvcError};
use crate::linalg::{frobenius_dot, min_eigenvalue, symmetrize};
use crate::program::{LmiBlock, LmiProgram};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Tolerance on relative primal/dual infeasibility, relative gap and
    /// the absolute block violation of the returned point.
    pub tol: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Steps shorter than this for `stall_limit` consecutive iterations
    /// end the solve with a numerical failure.
    pub min_step: f64,
    pub stall_limit: usize,
    /// The bundled backend is always reproducible; the flag is forwarded to
    /// external backends plugged in through [`SdpBackend`].
    pub deterministic: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 200,
            step_fraction: 0.98,
            min_step: 1e-10,
            stall_limit: 8,
            deterministic: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(UvcError::invalid("solver tol must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(UvcError::invalid("solver max_iterations must be at least 1"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(UvcError::invalid("solver step_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// A verified primal point: either the objective is zero, or the gap
    /// closed only to `√tol` before progress stopped.
    Feasible,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResidual {
    pub label: String,
    pub min_eigenvalue: f64,
}

/// Smallest eigenvalue of every block evaluated at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub blocks: Vec<BlockResidual>,
    /// `max(0, −min_j λ_min(F_j(x)))`.
    pub max_violation: f64,
}

impl ResidualReport {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.blocks
            .iter()
            .find(|b| b.label == label)
            .map(|b| b.min_eigenvalue)
    }
}

impl std::fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<24} {:>14}", "block", "lambda_min")?;
        for b in &self.blocks {
            writeln!(f, "{:<24} {:>14.6e}", b.label, b.min_eigenvalue)?;
        }
        write!(f, "max violation: {:.3e}", self.max_violation)
    }
}

/// Normalized dual ray `Z ⪰ 0` with `Σ⟨F_jk, Z_j⟩ ≈ 0` and `Σ⟨F_j0, Z_j⟩ < 0`,
/// which proves the constraints cannot all hold.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    /// `Σ_j ⟨F_j0, Z_j⟩` for the ray scaled to unit trace (negative).
    pub constant_pairing: f64,
    /// `‖(Σ_j ⟨F_jk, Z_j⟩)_k‖₂` for the same ray (near zero).
    pub operator_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// Largest block violation at `x` in the unscaled program.
    pub max_residual: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub report: ResidualReport,
    pub certificate: Option<InfeasibilityCertificate>,
}

/// Seam for swapping in an external conic solver.
pub trait SdpBackend: Sync {
    fn solve(&self, program: &LmiProgram, settings: &SolverSettings) -> Result<SdpSolution>;
}

/// The bundled dense interior-point method.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn solve(&self, program: &LmiProgram, settings: &SolverSettings) -> Result<SdpSolution> {
        solve_sdp(program, settings)
    }
}

/// Evaluates every block at `x` and reports its smallest eigenvalue.
pub fn residuals(program: &LmiProgram, x: &[f64]) -> Result<ResidualReport> {
    if x.len() != program.num_vars() {
        return Err(UvcError::invalid(format!(
            "point has {} entries, program has {} variables",
            x.len(),
            program.num_vars()
        )));
    }
    let blocks: Vec<BlockResidual> = program
        .blocks()
        .iter()
        .map(|b| BlockResidual {
            label: b.label().to_string(),
            min_eigenvalue: min_eigenvalue(&b.evaluate(x)),
        })
        .collect();
    let worst = blocks
        .iter()
        .map(|b| b.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    Ok(ResidualReport {
        blocks,
        max_violation: if worst.is_finite() { (-worst).max(0.0) } else { 0.0 },
    })
}

struct BlockState {
    s: DMatrix<f64>,
    z: DMatrix<f64>,
}

struct Direction {
    dx: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
}

/// Solves `program` with the bundled interior-point method.
pub fn solve_sdp(program: &LmiProgram, settings: &SolverSettings) -> Result<SdpSolution> {
    program.validate()?;
    settings.validate()?;
    Solver::new(program, settings).run()
}

struct Solver<'a> {
    original: &'a LmiProgram,
    settings: &'a SolverSettings,
    blocks: Vec<LmiBlock>,
    c: DVector<f64>,
    var_scale: Vec<f64>,
    f0_norm: f64,
    /// Cholesky factor of `A*A`, used to keep dual steps on the affine set.
    gram: Option<Cholesky<f64, Dyn>>,
}

impl<'a> Solver<'a> {
    fn new(original: &'a LmiProgram, settings: &'a SolverSettings) -> Self {
        let blocks: Vec<LmiBlock> = original
            .blocks()
            .iter()
            .map(|b| {
                let nrm = b.data_norm();
                if nrm > 0.0 {
                    b.scaled(1.0 / nrm)
                } else {
                    b.clone()
                }
            })
            .collect();
        // unit column norms: x = D x'
        let mut col = vec![0.0_f64; original.num_vars()];
        for b in &blocks {
            for (k, f) in b.terms() {
                col[k] += f.norm_squared();
            }
        }
        let var_scale: Vec<f64> = col
            .iter()
            .map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        let blocks: Vec<LmiBlock> = blocks
            .iter()
            .map(|b| b.with_variable_weights(&var_scale))
            .collect();
        let c = original.objective().component_mul(&DVector::from_column_slice(&var_scale));
        let c = &c / c.amax().max(1.0);
        let f0_norm = blocks
            .iter()
            .map(|b| b.constant().norm())
            .fold(0.0, f64::max);
        let p = original.num_vars();
        let mut g = DMatrix::zeros(p, p);
        for b in &blocks {
            let terms: Vec<(usize, &DMatrix<f64>)> = b.terms().collect();
            for (a, (k, fk)) in terms.iter().enumerate() {
                for (l, fl) in terms.iter().skip(a) {
                    let v = frobenius_dot(fk, fl);
                    g[(*k, *l)] += v;
                    if k != l {
                        g[(*l, *k)] += v;
                    }
                }
            }
        }
        let gram = Cholesky::new(g);
        Self {
            original,
            settings,
            blocks,
            c,
            var_scale,
            f0_norm,
            gram,
        }
    }

    fn unscale(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.var_scale).map(|(v, d)| v * d))
    }

    fn num_vars(&self) -> usize {
        self.c.len()
    }

    fn operator(&self, dx: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut out = DMatrix::zeros(b.dim(), b.dim());
                for (k, f) in b.terms() {
                    if dx[k] != 0.0 {
                        out += f * dx[k];
                    }
                }
                out
            })
            .collect()
    }

    /// `(Σ_j ⟨F_jk, Z_j⟩)_k`.
    fn adjoint(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars());
        for (b, zj) in self.blocks.iter().zip(z) {
            for (k, f) in b.terms() {
                out[k] += frobenius_dot(f, zj);
            }
        }
        out
    }

    fn initial_point(&self) -> Vec<BlockState> {
        let c_max = self.c.amax();
        self.blocks
            .iter()
            .map(|b| {
                let dim = b.dim() as f64;
                let xi_s = 10.0_f64.max(dim.sqrt());
                let xi_z = 10.0_f64.max(dim.sqrt()).max(dim * (1.0 + c_max));
                BlockState {
                    s: DMatrix::identity(b.dim(), b.dim()) * xi_s,
                    z: DMatrix::identity(b.dim(), b.dim()) * xi_z,
                }
            })
            .collect()
    }

    fn run(&self) -> Result<SdpSolution> {
        let tol = self.settings.tol;
        let p = self.num_vars();
        let total_dim: usize = self.blocks.iter().map(|b| b.dim()).sum();
        let is_feasibility = self.c.iter().all(|v| *v == 0.0);

        let mut x = DVector::zeros(p);
        let mut state = self.initial_point();
        let mut stalls = 0usize;
        let mut last = Metrics::default();
        let mut last_dobj = 0.0;

        for iter in 0..=self.settings.max_iterations {
            // residuals and stopping tests
            let fx: Vec<DMatrix<f64>> =
                self.blocks.iter().map(|b| b.evaluate(x.as_slice())).collect();
            let rp: Vec<DMatrix<f64>> = fx
                .iter()
                .zip(&state)
                .map(|(f, st)| f - &st.s)
                .collect();
            let zs: Vec<DMatrix<f64>> = state.iter().map(|st| st.z.clone()).collect();
            let rd = &self.c - self.adjoint(&zs);
            let pobj = self.c.dot(&x);
            let dobj: f64 = -self
                .blocks
                .iter()
                .zip(&state)
                .map(|(b, st)| frobenius_dot(b.constant(), &st.z))
                .sum::<f64>();
            let gap: f64 = state.iter().map(|st| frobenius_dot(&st.s, &st.z)).sum();
            last_dobj = dobj;
            last = Metrics {
                pinf: rp.iter().map(|r| r.norm()).fold(0.0, f64::max) / (1.0 + self.f0_norm),
                dinf: rd.norm() / (1.0 + self.c.norm()),
                relgap: gap.max(0.0) / (1.0 + pobj.abs() + dobj.abs()),
            };

            if last.pinf <= tol && last.dinf <= tol && last.relgap <= tol {
                let report = residuals(self.original, self.unscale(&x).as_slice())?;
                if report.max_violation <= tol {
                    let status = if is_feasibility {
                        SolveStatus::Feasible
                    } else {
                        SolveStatus::Optimal
                    };
                    return Ok(self.finish(status, x, iter, last, report, None));
                }
            }

            if let Some(cert) = self.infeasibility_ray(&state, dobj, false) {
                let report = residuals(self.original, self.unscale(&x).as_slice())?;
                return Ok(self.finish(SolveStatus::Infeasible, x, iter, last, report, Some(cert)));
            }

            if iter == self.settings.max_iterations {
                break;
            }

            let Some(s_inv) = state
                .iter()
                .map(|st| Cholesky::new(symmetrize(&st.s)).map(|c| c.inverse()))
                .collect::<Option<Vec<_>>>()
            else {
                return self.give_up(SolveStatus::NumericalFailure, x, iter, last, &state, dobj);
            };

            let Some(schur) = self.schur_factor(&state, &s_inv) else {
                return self.give_up(SolveStatus::NumericalFailure, x, iter, last, &state, dobj);
            };

            // predictor
            let rc_pred: Vec<DMatrix<f64>> = state.iter().map(|st| -&st.z).collect();
            let pred = self.direction(&schur, &state, &s_inv, &rp, &rd, &rc_pred);
            let ap = self.max_step(&state, &pred.ds, |st| &st.s).min(1.0);
            let ad = self.max_step(&state, &pred.dz, |st| &st.z).min(1.0);
            let mu = gap / total_dim as f64;
            let gap_pred: f64 = state
                .iter()
                .zip(pred.ds.iter().zip(&pred.dz))
                .map(|(st, (ds, dz))| frobenius_dot(&(&st.s + ds * ap), &(&st.z + dz * ad)))
                .sum();
            let sigma = if gap > 0.0 {
                (gap_pred.max(0.0) / gap).powi(3).clamp(0.0, 1.0)
            } else {
                0.0
            };
            // keep complementarity from outrunning the infeasibilities
            let infeas = last.pinf.max(last.dinf);
            let sigma = if last.relgap < infeas {
                sigma.max((1.0 - ap.min(ad)).max(0.5))
            } else {
                sigma
            };

            // corrector
            let rc_corr: Vec<DMatrix<f64>> = state
                .iter()
                .zip(&s_inv)
                .zip(pred.ds.iter().zip(&pred.dz))
                .map(|((st, si), (ds, dz))| si * (sigma * mu) - &st.z - dz * ds * si)
                .collect();
            let corr = self.direction(&schur, &state, &s_inv, &rp, &rd, &rc_corr);
            let gamma = self.settings.step_fraction;
            let ap = (gamma * self.max_step(&state, &corr.ds, |st| &st.s)).min(1.0);
            let ad = (gamma * self.max_step(&state, &corr.dz, |st| &st.z)).min(1.0);

            if !ap.is_finite() || !ad.is_finite() || corr.dx.iter().any(|v| !v.is_finite()) {
                return self.give_up(SolveStatus::NumericalFailure, x, iter, last, &state, dobj);
            }
            if ap.min(ad) < self.settings.min_step {
                stalls += 1;
                if stalls >= self.settings.stall_limit {
                    return self.give_up(SolveStatus::NumericalFailure, x, iter, last, &state, dobj);
                }
            } else {
                stalls = 0;
            }

            x += &corr.dx * ap;
            for (st, (ds, dz)) in state.iter_mut().zip(corr.ds.iter().zip(&corr.dz)) {
                st.s = symmetrize(&(&st.s + ds * ap));
                st.z = symmetrize(&(&st.z + dz * ad));
            }
        }

        let iters = self.settings.max_iterations;
        self.give_up(SolveStatus::MaxIterations, x, iters, last, &state, last_dobj)
    }

    /// Ends a run that did not converge. A verified primal point whose gap
    /// is within `√tol` is still reported as feasible; otherwise the dual
    /// iterate is checked for an infeasibility ray.
    fn give_up(
        &self,
        status: SolveStatus,
        x: DVector<f64>,
        iter: usize,
        last: Metrics,
        state: &[BlockState],
        dobj: f64,
    ) -> Result<SdpSolution> {
        let report = residuals(self.original, self.unscale(&x).as_slice())?;
        let tol = self.settings.tol;
        if last.pinf <= tol
            && last.dinf <= tol
            && last.relgap <= tol.sqrt()
            && report.max_violation <= tol
        {
            return Ok(self.finish(SolveStatus::Feasible, x, iter, last, report, None));
        }
        match self.infeasibility_ray(state, dobj, true) {
            Some(cert) => Ok(self.finish(SolveStatus::Infeasible, x, iter, last, report, Some(cert))),
            None => Ok(self.finish(status, x, iter, last, report, None)),
        }
    }

    fn finish(
        &self,
        status: SolveStatus,
        x: DVector<f64>,
        iterations: usize,
        metrics: Metrics,
        report: ResidualReport,
        certificate: Option<InfeasibilityCertificate>,
    ) -> SdpSolution {
        let x = self.unscale(&x);
        SdpSolution {
            status,
            objective_value: self.original.objective().dot(&x),
            x,
            iterations,
            max_residual: report.max_violation,
            primal_infeasibility: metrics.pinf,
            dual_infeasibility: metrics.dinf,
            relative_gap: metrics.relgap,
            report,
            certificate,
        }
    }

    /// Cholesky factor of `M_kl = Σ_j tr(F_jk Z_j F_jl S_j⁻¹)`.
    fn schur_factor(
        &self,
        state: &[BlockState],
        s_inv: &[DMatrix<f64>],
    ) -> Option<Schur> {
        let p = self.num_vars();
        let mut m = DMatrix::zeros(p, p);
        for ((b, st), si) in self.blocks.iter().zip(state).zip(s_inv) {
            let terms: Vec<(usize, &DMatrix<f64>)> = b.terms().collect();
            let products: Vec<DMatrix<f64>> =
                terms.iter().map(|(_, f)| &st.z * *f * si).collect();
            for (a, (k, _)) in terms.iter().enumerate() {
                for (l, fl) in terms.iter().skip(a) {
                    let v = frobenius_dot(fl, &products[a]);
                    m[(*k, *l)] += v;
                    if k != l {
                        m[(*l, *k)] += v;
                    }
                }
            }
        }
        let m = symmetrize(&m);
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Some(Schur { m, chol });
        }
        // near-singular Schur matrix: retry with a small diagonal shift
        let shift = 1e-14 * m.diagonal().amax().max(1e-300);
        let chol = Cholesky::new(&m + DMatrix::identity(p, p) * shift)?;
        Some(Schur { m, chol })
    }

    fn direction(
        &self,
        schur: &Schur,
        state: &[BlockState],
        s_inv: &[DMatrix<f64>],
        rp: &[DMatrix<f64>],
        rd: &DVector<f64>,
        rc: &[DMatrix<f64>],
    ) -> Direction {
        let h: Vec<DMatrix<f64>> = state
            .iter()
            .zip(s_inv)
            .zip(rp.iter().zip(rc))
            .map(|((st, si), (r, c))| c - &st.z * r * si)
            .collect();
        let rhs = self.adjoint(&h) - rd;
        let dx = schur.solve(&rhs);
        let a_dx = self.operator(&dx);
        let ds: Vec<DMatrix<f64>> = rp.iter().zip(&a_dx).map(|(r, a)| r + a).collect();
        let mut dz: Vec<DMatrix<f64>> = state
            .iter()
            .zip(s_inv)
            .zip(rc.iter().zip(&ds))
            .map(|((st, si), (c, d))| symmetrize(&(c - &st.z * d * si)))
            .collect();
        if let Some(gram) = &self.gram {
            let err = rd - self.adjoint(&dz);
            let fix = self.operator(&gram.solve(&err));
            for (d, f) in dz.iter_mut().zip(fix) {
                *d += f;
            }
        }
        Direction { dx, ds, dz }
    }

    /// Largest `α` with `M_j + α Δ_j ⪰ 0` for every block (∞ if unbounded).
    fn max_step<F>(&self, state: &[BlockState], delta: &[DMatrix<f64>], pick: F) -> f64
    where
        F: Fn(&BlockState) -> &DMatrix<f64>,
    {
        let mut alpha = f64::INFINITY;
        for (st, d) in state.iter().zip(delta) {
            let Some(chol) = Cholesky::new(symmetrize(pick(st))) else {
                return 0.0;
            };
            let l = chol.l();
            let Some(l_inv) = l.clone().try_inverse() else {
                return 0.0;
            };
            let w = &l_inv * d * l_inv.transpose();
            let lam = min_eigenvalue(&w);
            if lam < 0.0 {
                alpha = alpha.min(-1.0 / lam);
            }
        }
        alpha
    }

    /// Normalized dual ray proving primal infeasibility. Mid-run the ray must
    /// meet `tol` with a diverging dual objective; once progress has stopped a
    /// residual of `√tol` is accepted.
    fn infeasibility_ray(
        &self,
        state: &[BlockState],
        dobj: f64,
        terminal: bool,
    ) -> Option<InfeasibilityCertificate> {
        let trace: f64 = state.iter().map(|st| st.z.trace()).sum();
        if !(trace > 0.0) || !(dobj > 0.0) {
            return None;
        }
        let z_unit: Vec<DMatrix<f64>> = state.iter().map(|st| &st.z / trace).collect();
        let pairing: f64 = self
            .blocks
            .iter()
            .zip(&z_unit)
            .map(|(b, z)| frobenius_dot(b.constant(), z))
            .sum();
        let op = self.adjoint(&z_unit).norm();
        let tol = self.settings.tol;
        let accepted = if terminal {
            op <= tol.sqrt() * (-pairing)
        } else {
            op <= tol * (-pairing) && dobj > 1.0 / tol
        };
        if pairing < 0.0 && accepted {
            Some(InfeasibilityCertificate {
                constant_pairing: pairing,
                operator_residual: op,
            })
        } else {
            None
        }
    }
}

struct Schur {
    m: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Schur {
    /// Cholesky solve followed by two rounds of iterative refinement.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        for _ in 0..2 {
            let r = rhs - &self.m * &x;
            x += self.chol.solve(&r);
        }
        x
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Metrics {
    pinf: f64,
    dinf: f64,
    relgap: f64,
}
