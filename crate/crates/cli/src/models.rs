//! Built-in plant models emitted as ready-to-run configs.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

use uvc_core::models::{manipulator_polytope, rov_polytope};
use uvc_core::PolytopicSystem;

use crate::config::{Config, ExplicitSystem, Limits, RovConfig, SolverConfig, SystemSpec, VertexData};
use crate::error::{CliError, CliResult};

pub struct ModelInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static str,
}

pub const CATALOG: &[ModelInfo] = &[
    ModelInfo {
        name: "manipulator",
        description: "planar manipulator behind an uncalibrated camera (n=2, m=2, 4 vertices)",
        params: "phi_bar=0.5236 delta_bar=0.7854 u_bar=2 mu=3 rho=1",
    },
    ModelInfo {
        name: "rov",
        description: "four-thruster underwater vehicle, surge/sway/yaw (n=3, m=4, 4 vertices)",
        params: "m0=290 iz=290 psi1=0.7071 psi2=0.35 g_lo=0.5 g_hi=1 u_bar=30 mu=0.1 rho=10",
    },
];

/// Builds a config with explicit vertices for `name`, overriding defaults
/// with `key=value` pairs.
pub fn emit(name: &str, params: &[String]) -> CliResult<Config> {
    let mut pairs = Vec::with_capacity(params.len());
    for p in params.iter().flat_map(|p| p.split(',')).filter(|p| !p.is_empty()) {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects key=value, got {p:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--param {k}: {v:?} is not a number")))?;
        pairs.push((k.trim().to_string(), v));
    }
    let take = |key: &str, default: f64, pairs: &mut Vec<(String, f64)>| -> f64 {
        match pairs.iter().position(|(k, _)| k == key) {
            Some(i) => pairs.remove(i).1,
            None => default,
        }
    };

    let (system, u_bar, mu, rho) = match name {
        "manipulator" => {
            let phi_bar = take("phi_bar", FRAC_PI_6, &mut pairs);
            let delta_bar = take("delta_bar", FRAC_PI_4, &mut pairs);
            let sys = manipulator_polytope(phi_bar, delta_bar)?;
            (sys, take("u_bar", 2.0, &mut pairs), take("mu", 3.0, &mut pairs), take("rho", 1.0, &mut pairs))
        }
        "rov" => {
            let rov = RovConfig {
                m0: Some(take("m0", 290.0, &mut pairs)),
                iz: Some(take("iz", 290.0, &mut pairs)),
                psi1: Some(take("psi1", std::f64::consts::FRAC_1_SQRT_2, &mut pairs)),
                psi2: Some(take("psi2", 0.35, &mut pairs)),
                g_lo: Some(take("g_lo", 0.5, &mut pairs)),
                g_hi: Some(take("g_hi", 1.0, &mut pairs)),
            };
            let sys = rov_polytope(&rov.resolve())?;
            (sys, take("u_bar", 30.0, &mut pairs), take("mu", 0.1, &mut pairs), take("rho", 10.0, &mut pairs))
        }
        other => {
            return Err(CliError::invalid(format!(
                "unknown model {other:?}; expected manipulator or rov"
            )))
        }
    };
    if let Some((k, _)) = pairs.first() {
        return Err(CliError::invalid(format!("unknown parameter {k:?} for model {name}")));
    }
    Ok(Config {
        system: SystemSpec::Explicit(explicit(&system)),
        u_bar: Limits::PerChannel(vec![u_bar; system.m()]),
        mu: Some(mu),
        rho,
        solver: SolverConfig::default(),
        seed: 0,
    })
}

fn explicit(sys: &PolytopicSystem) -> ExplicitSystem {
    ExplicitSystem {
        n: sys.n(),
        m: sys.m(),
        vertices: sys
            .vertices()
            .iter()
            .map(|b| VertexData::Rows(b.row_iter().map(|r| r.iter().copied().collect()).collect()))
            .collect(),
    }
}
