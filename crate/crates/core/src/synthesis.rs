//! End-to-end design: assemble, solve, recover, certify. Also the scalar
//! search over `μ`.

use crate::error::{Result, UvcError};
use crate::lmi::{
    assemble_program, decision_layout, recover_design, ControllerDesign, SynthesisParameters,
    CERTIFICATE_TOL,
};
use crate::par::{self, Execution};
use crate::sdp::{InteriorPoint, SdpBackend, SolveStatus};
use crate::system::{PolytopicSystem, SaturationLimits};

/// Designs a gain with the bundled solver.
pub fn synthesize(
    system: &PolytopicSystem,
    limits: &SaturationLimits,
    params: &SynthesisParameters,
) -> Result<ControllerDesign> {
    synthesize_with(&InteriorPoint, system, limits, params)
}

pub fn synthesize_with(
    backend: &dyn SdpBackend,
    system: &PolytopicSystem,
    limits: &SaturationLimits,
    params: &SynthesisParameters,
) -> Result<ControllerDesign> {
    params.validate()?;
    let layout = decision_layout(system.n(), system.m())?;
    let program = assemble_program(system, limits, params, &layout)?;
    let solution = backend.solve(&program, &params.solver)?;
    if !solution.status.is_success() {
        return Err(UvcError::NoDesign {
            reason: format!(
                "solver returned {} after {} iterations (max violation {:.3e})",
                solution.status, solution.iterations, solution.max_residual
            ),
            report: Some(Box::new(solution.report)),
        });
    }
    let design = recover_design(&solution, &layout, system, limits, params)?;
    let check = design.check_invariants()?;
    if !check.holds(params.rho, limits, CERTIFICATE_TOL) {
        return Err(UvcError::NoDesign {
            reason: format!("recovered design fails its certificate: {check:?}"),
            report: Some(Box::new(solution.report)),
        });
    }
    Ok(design)
}

/// `count` logarithmically spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || count == 0 {
        return Err(UvcError::invalid(format!(
            "bad grid lo={lo} hi={hi} count={count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Sixteen points over `[1e-2, 1e2]`.
pub fn default_mu_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 16).expect("static grid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub mu: f64,
    /// `None` when the design succeeded.
    pub status: Option<SolveStatus>,
    pub phi: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: ControllerDesign,
    pub best_index: usize,
    pub points: Vec<GridPoint>,
}

/// Solves one program per `μ` and keeps the feasible design with the
/// smallest `φ`; ties within the solver tolerance go to the earlier,
/// then smaller, `μ`.
pub fn mu_grid_search(
    system: &PolytopicSystem,
    limits: &SaturationLimits,
    base: &SynthesisParameters,
    mu_grid: &[f64],
) -> Result<GridSearchOutcome> {
    mu_grid_search_with(Execution::default(), system, limits, base, mu_grid)
}

pub fn mu_grid_search_with(
    exec: Execution,
    system: &PolytopicSystem,
    limits: &SaturationLimits,
    base: &SynthesisParameters,
    mu_grid: &[f64],
) -> Result<GridSearchOutcome> {
    if mu_grid.is_empty() {
        return Err(UvcError::invalid("mu grid is empty"));
    }
    if let Some(bad) = mu_grid.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(UvcError::invalid(format!("mu grid entry {bad} is not positive")));
    }
    let results = par::map(exec, mu_grid, |_, &mu| {
        let params = SynthesisParameters {
            mu,
            ..base.clone()
        };
        synthesize(system, limits, &params)
    });

    let tie_tol = 10.0 * base.solver.tol;
    let mut points = Vec::with_capacity(mu_grid.len());
    let mut best: Option<(usize, ControllerDesign)> = None;
    for (i, (mu, res)) in mu_grid.iter().zip(results).enumerate() {
        match res {
            Ok(design) => {
                points.push(GridPoint {
                    mu: *mu,
                    status: None,
                    phi: Some(design.phi),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, cur)) => {
                        design.phi < cur.phi - tie_tol
                            || ((design.phi - cur.phi).abs() <= tie_tol && design.mu < cur.mu)
                    }
                };
                if better {
                    best = Some((i, design));
                }
            }
            Err(err) => points.push(GridPoint {
                mu: *mu,
                status: Some(status_of(&err)),
                phi: None,
                error: Some(err.to_string()),
            }),
        }
    }
    match best {
        Some((best_index, best)) => Ok(GridSearchOutcome {
            best,
            best_index,
            points,
        }),
        None => Err(UvcError::NoDesign {
            reason: format!(
                "no feasible mu in grid: {}",
                points
                    .iter()
                    .map(|p| format!("mu={:.4e}: {}", p.mu, p.error.as_deref().unwrap_or("?")))
                    .collect::<Vec<_>>()
                    .join("; ")
            ),
            report: None,
        }),
    }
}

fn status_of(err: &UvcError) -> SolveStatus {
    match err {
        UvcError::NoDesign { reason, .. } if reason.contains("infeasible") => SolveStatus::Infeasible,
        UvcError::NoDesign { reason, .. } if reason.contains("max_iterations") => {
            SolveStatus::MaxIterations
        }
        _ => SolveStatus::NumericalFailure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_logarithmic() {
        let g = default_mu_grid();
        assert_eq!(g.len(), 16);
        assert!((g[0] - 1e-2).abs() < 1e-15);
        assert!((g[15] - 1e2).abs() < 1e-10);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
        assert!(log_grid(0.0, 1.0, 3).is_err());
        assert_eq!(log_grid(2.0, 5.0, 1).unwrap(), vec![2.0]);
    }

    #[test]
    fn empty_grid_rejected() {
        let sys = PolytopicSystem::new(vec![nalgebra::DMatrix::identity(1, 1)]).unwrap();
        let lim = SaturationLimits::uniform(1.0, 1).unwrap();
        let base = SynthesisParameters::new(1.0, 1.0);
        assert!(mu_grid_search(&sys, &lim, &base, &[]).is_err());
        assert!(mu_grid_search(&sys, &lim, &base, &[-1.0]).is_err());
    }
}
