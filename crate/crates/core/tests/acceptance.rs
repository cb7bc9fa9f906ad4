//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero only when a clause fails that is not listed in
//! `KNOWN_RED`.

mod common;

use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvc_core::analysis::{
    completion_of_squares, lyapunov_value_with, omega_boundary, planar_directions,
    sector_condition,
};
use uvc_core::linalg::{min_eigenvalue, projection, spectral_norm, symmetrize};
use uvc_core::models::{manipulator_polytope, rov_polytope, RovParameters};
use uvc_core::simulation::{batch_verify, random_weights, simulate, IntegratorSettings, Trajectory};
use uvc_core::synthesis::synthesize;
use uvc_core::{
    solve_sdp, ControllerDesign, PolytopicSystem, Result, SaturationLimits, SimplexWeights,
    SolveStatus, SolverSettings, SynthesisParameters,
};

/// Clauses that cannot pass with the published data; see the README.
const KNOWN_RED: &[(u8, &str)] = &[
    (2, "saturated at t=0"),
    (4, "feasible"),
    (4, "residuals"),
    (4, "lambda_min(Q)"),
    (4, "inclusion margins"),
    (5, "reach within 10.5 s"),
];

const SEED: u64 = 20240917;

struct Clause {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn clause(name: &'static str, pass: bool, detail: impl Into<String>) -> Clause {
    Clause {
        name,
        pass,
        detail: detail.into(),
    }
}

fn manipulator() -> (PolytopicSystem, SaturationLimits) {
    (
        manipulator_polytope(FRAC_PI_6, FRAC_PI_4).expect("manipulator"),
        SaturationLimits::uniform(2.0, 2).expect("limits"),
    )
}

fn vehicle() -> (PolytopicSystem, SaturationLimits) {
    (
        rov_polytope(&RovParameters::default()).expect("vehicle"),
        SaturationLimits::uniform(30.0, 4).expect("limits"),
    )
}

fn vertex_weights(count: usize) -> Vec<SimplexWeights> {
    (0..count)
        .map(|i| SimplexWeights::vertex(i, count).expect("vertex"))
        .collect()
}

fn certificate_clauses(
    design: &Result<ControllerDesign>,
    q_floor: f64,
    out: &mut Vec<Clause>,
) {
    match design {
        Ok(d) => {
            out.push(clause("feasible", true, format!("phi = {:.6}", d.phi)));
            let violation = d.residuals.as_ref().map_or(f64::INFINITY, |r| r.max_violation);
            out.push(clause("residuals", violation <= 1e-8, format!("{violation:.2e}")));
            match d.check_invariants() {
                Ok(check) => {
                    out.push(clause(
                        "lambda_min(Q)",
                        check.q_min_eigenvalue >= q_floor - 1e-6,
                        format!("{:.6}", check.q_min_eigenvalue),
                    ));
                    let worst = check
                        .inclusion_margins
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min);
                    out.push(clause("inclusion margins", worst >= -1e-8, format!("min {worst:.2e}")));
                }
                Err(e) => out.push(clause("lambda_min(Q)", false, e.to_string())),
            }
        }
        Err(e) => {
            let msg = e.to_string();
            out.push(clause("feasible", false, msg.chars().take(120).collect::<String>()));
            for name in ["residuals", "lambda_min(Q)", "inclusion margins"] {
                out.push(clause(name, false, "no design"));
            }
        }
    }
}

fn criterion_1(design: &Result<ControllerDesign>, elapsed: Duration) -> Vec<Clause> {
    let mut out = vec![clause(
        "under 10 s",
        elapsed < Duration::from_secs(10),
        format!("{:.3} s", elapsed.as_secs_f64()),
    )];
    certificate_clauses(design, 1.0, &mut out);
    out
}

fn criterion_2() -> Vec<Clause> {
    let (sys, lim) = manipulator();
    let k = DMatrix::from_row_slice(2, 2, &[-1.9368, 1.1182, -1.1182, -1.9368]);
    let norm = spectral_norm(&k);
    let sigma0 = DVector::from_vec(vec![0.0587, -0.7976]);
    let mut weights = vertex_weights(4);
    weights.extend(random_weights(10, 4, SEED).expect("weights"));
    let settings = IntegratorSettings {
        t_max: 2.0,
        ..IntegratorSettings::default()
    };
    let mut worst = 0.0_f64;
    let mut reached = true;
    let mut saturated = false;
    for w in &weights {
        let b = sys.blend(w).expect("blend");
        let traj = simulate(&b, &k, &lim, &sigma0, &settings, None).expect("simulate");
        match traj.reach_time {
            Some(t) => worst = worst.max(t),
            None => reached = false,
        }
        saturated |= traj.saturated_at_start();
    }
    let u0 = &k * &sigma0 / sigma0.norm();
    vec![
        clause("norm", (norm - 2.2364).abs() <= 1e-3, format!("{norm:.4}")),
        clause(
            "reach within 1.05 s",
            reached && worst <= 1.05,
            format!("max {worst:.4} s over {} cases", weights.len()),
        ),
        clause(
            "saturated at t=0",
            saturated,
            format!("u(0) = ({:.3}, {:.3}), limit 2", u0[0], u0[1]),
        ),
    ]
}

fn criterion_3(design: &Result<ControllerDesign>) -> Vec<Clause> {
    let Ok(d) = design else {
        return vec![clause("design", false, "no design")];
    };
    let start = Instant::now();
    let sample = omega_boundary(d, &planar_directions(64)).expect("boundary");
    let points = sample.omega_points();
    let settings = IntegratorSettings {
        t_max: 2.0 * d.rho,
        ..IntegratorSettings::default()
    };
    let report = batch_verify(d, &points, &vertex_weights(4), &settings).expect("batch");
    let elapsed = start.elapsed();
    let worst = report.max_reach_time;
    vec![
        clause(
            "reach within 1.05 rho",
            worst.is_some_and(|t| t <= 1.05 * d.rho),
            format!(
                "max {:?} s over {} cases, {} unreached",
                worst.map(|t| (t * 1e4).round() / 1e4),
                report.cases.len(),
                report.unreached
            ),
        ),
        clause(
            "V non-increasing",
            report.lyapunov_violations == 0 && report.failures == 0,
            format!("{} increases", report.lyapunov_violations),
        ),
        clause(
            "under 60 s",
            elapsed < Duration::from_secs(60),
            format!("{:.2} s", elapsed.as_secs_f64()),
        ),
    ]
}

fn criterion_4() -> Vec<Clause> {
    let (sys, lim) = vehicle();
    let design = synthesize(&sys, &lim, &SynthesisParameters::new(0.4, 10.0));
    let mut out = Vec::new();
    certificate_clauses(&design, 0.1, &mut out);
    out
}

fn criterion_5() -> Vec<Clause> {
    let (sys, lim) = vehicle();
    #[rustfmt::skip]
    let k = DMatrix::from_row_slice(4, 3, &[
        -30.9190, -5.7321, 5.9126,
        -20.2414, 23.8253, -0.3787,
        -31.0926, 0.9531, 4.8242,
        -22.5835, -26.6822, -14.9989,
    ]);
    let norm = spectral_norm(&k);
    let sigma0 = DVector::from_vec(vec![0.60, 0.60, 0.4712]);
    let settings = IntegratorSettings {
        t_max: 40.0,
        ..IntegratorSettings::default()
    };
    let trajs: Vec<Trajectory> = sys
        .vertices()
        .iter()
        .map(|b| simulate(b, &k, &lim, &sigma0, &settings, None).expect("simulate"))
        .collect();
    let reach: Vec<Option<f64>> = trajs.iter().map(|t| t.reach_time).collect();
    let within = reach.iter().all(|t| t.is_some_and(|t| t <= 10.5));
    let longest: Vec<f64> = trajs
        .iter()
        .map(|t| (0..4).map(|ch| t.longest_saturation(ch)).fold(0.0, f64::max))
        .collect();
    let channel_4: Vec<f64> = trajs.iter().map(|t| t.longest_saturation(3)).collect();
    vec![
        clause("norm", (norm - 53.7608).abs() <= 1e-2, format!("{norm:.4}")),
        clause(
            "reach within 10.5 s",
            within,
            format!(
                "{:?} s",
                reach
                    .iter()
                    .map(|t| t.map(|t| (t * 100.0).round() / 100.0))
                    .collect::<Vec<_>>()
            ),
        ),
        clause(
            "saturation >= 1 s",
            longest.iter().all(|s| *s >= 1.0),
            format!(
                "u4 longest {:?} s",
                channel_4.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>()
            ),
        ),
    ]
}

fn criterion_6() -> Vec<Clause> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = f64::NEG_INFINITY;
    let samples = 10_000;
    for _ in 0..samples {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let k = DMatrix::from_fn(m, n, |_, _| rng.random_range(-10.0..10.0));
        let l = DMatrix::from_fn(m, n, |_, _| rng.random_range(-10.0..10.0));
        let u = DVector::from_fn(m, |_, _| rng.random_range(0.01..10.0));
        let z = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let gap = (&k - &l) * &z;
        let limits = SaturationLimits::new(
            gap.iter()
                .map(|g: &f64| g.abs() * rng.random_range(1.0..4.0) + 1e-9)
                .collect(),
        )
        .expect("limits");
        let v = sector_condition(&k, &l, &u, &limits, &z).expect("sector");
        worst = worst.max(v);
    }
    vec![clause(
        "sector <= 1e-12",
        worst <= 1e-12,
        format!("max {worst:.2e} over {samples} samples"),
    )]
}

fn criterion_7(design: &Result<ControllerDesign>) -> Vec<Clause> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let unit = |n: usize, rng: &mut ChaCha8Rng| loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 {
            return v;
        }
    };
    let samples = 1000;

    let mut proj_err = 0.0_f64;
    for _ in 0..samples {
        let s = unit(4, &mut rng) * rng.random_range(0.01..100.0);
        let pi = projection(&s);
        proj_err = proj_err
            .max((&pi - pi.transpose()).amax())
            .max((&pi * &pi - &pi).amax())
            .max((spectral_norm(&pi) - 1.0).abs());
    }

    let mut homog_err = 0.0_f64;
    for _ in 0..samples {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = symmetrize(&(a.transpose() * &a + DMatrix::identity(3, 3) * 0.1));
        let s = unit(3, &mut rng) * rng.random_range(0.01..10.0);
        let v = lyapunov_value_with(&p, &s);
        homog_err = homog_err.max((lyapunov_value_with(&p, &(&s * 2.0)) - 2.0 * v).abs() / v.max(1.0));
    }

    let Ok(d) = design else {
        return vec![clause("design", false, "no design")];
    };
    let mut cos_min = f64::INFINITY;
    for _ in 0..samples {
        let s = unit(2, &mut rng) * rng.random_range(1e-3..10.0);
        for b in d.system.vertices() {
            let w = completion_of_squares(&d.k, b, &d.p, d.mu, &s);
            cos_min = cos_min.min(min_eigenvalue(&symmetrize(&w)));
        }
    }

    let diff = &d.k - &d.l;
    let inclusion_ok = d
        .check_invariants()
        .map(|c| c.inclusion_margins.iter().all(|m| *m >= 0.0))
        .unwrap_or(false);
    let mut incl_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let dir = unit(2, &mut rng);
        let z = &dir / (dir.transpose() * &d.p * &dir)[(0, 0)].sqrt();
        let g = &diff * &z;
        for ch in 0..d.m() {
            incl_excess = incl_excess.max(g[ch].abs() / (d.u_bar.get(ch) * (1.0 + 1e-9)) - 1.0);
        }
    }
    let incl_pass = !inclusion_ok || incl_excess <= 0.0;

    vec![
        clause("projection", proj_err <= 1e-12, format!("{proj_err:.1e}")),
        clause("homogeneity", homog_err <= 1e-12, format!("{homog_err:.1e}")),
        clause("completion of squares", cos_min >= -1e-9, format!("min eig {cos_min:.2e}")),
        clause(
            "inclusion consistency",
            incl_pass,
            format!("margins>=0: {inclusion_ok}, max excess {incl_excess:.2e}"),
        ),
    ]
}

fn criterion_8() -> Vec<Clause> {
    let settings = SolverSettings::default();
    let lb = solve_sdp(&common::lower_bound(), &settings).expect("solve");
    let lyap = solve_sdp(&common::lyapunov_feasibility(1e-3), &settings).expect("solve");
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]));
    let shift = solve_sdp(&common::largest_shift(&d), &settings).expect("solve");
    let again = solve_sdp(&common::largest_shift(&d), &settings).expect("solve");
    let p = DMatrix::from_row_slice(2, 2, &[lyap.x[0], lyap.x[1], lyap.x[1], lyap.x[2]]);
    let bits = |v: &DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    vec![
        clause(
            "x >= 1",
            lb.status == SolveStatus::Optimal && (lb.x[0] - 1.0).abs() <= 1e-7,
            format!("x = {:.10}", lb.x[0]),
        ),
        clause(
            "lyapunov",
            lyap.status == SolveStatus::Feasible
                && min_eigenvalue(&p) >= 1e-3 - 1e-7
                && lyap.max_residual <= 1e-7,
            format!("{}, lambda_min(P) = {:.3e}", lyap.status, min_eigenvalue(&p)),
        ),
        clause(
            "eigen shift",
            shift.status == SolveStatus::Optimal && (shift.x[0] - min_eigenvalue(&d)).abs() <= 1e-7,
            format!("t = {:.10}", shift.x[0]),
        ),
        clause("deterministic", bits(&shift.x) == bits(&again.x), "bitwise"),
    ]
}

fn criterion_9(design: &Result<ControllerDesign>) -> Vec<Clause> {
    let mut out = Vec::new();
    let h = IntegratorSettings::default().step;
    if let Ok(d) = design {
        let sigma0 = DVector::from_vec(vec![0.0587, -0.7976]);
        let mut worst = 0.0_f64;
        let mut ok = true;
        for b in d.system.vertices() {
            let coarse = IntegratorSettings {
                t_max: 2.0,
                ..IntegratorSettings::default()
            };
            let fine = IntegratorSettings {
                step: h / 2.0,
                ..coarse.clone()
            };
            let a = simulate(b, &d.k, &d.u_bar, &sigma0, &coarse, None).expect("simulate");
            let c = simulate(b, &d.k, &d.u_bar, &sigma0, &fine, None).expect("simulate");
            match (a.reach_time, c.reach_time) {
                (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
                _ => ok = false,
            }
        }
        out.push(clause(
            "step halving",
            ok && worst <= 5.0 * h,
            format!("max change {worst:.2e} s, 5h = {:.1e}", 5.0 * h),
        ));
    } else {
        out.push(clause("step halving", false, "no design"));
    }

    // σ̇ = sat(k sgn σ) with b = 1: speed min(|k|, ū)
    let sys = PolytopicSystem::new(vec![DMatrix::identity(1, 1)]).expect("scalar");
    let settings = IntegratorSettings::default();
    let mut analytic = Vec::new();
    for (k, ubar, s0) in [(-1.0, 2.0, 0.5), (-3.0, 2.0, 0.5), (-0.7, 5.0, -0.3), (-10.0, 1.0, -0.8)] {
        let lim = SaturationLimits::uniform(ubar, 1).expect("limits");
        let kk = DMatrix::from_element(1, 1, k);
        let traj = simulate(
            sys.vertex(0),
            &kk,
            &lim,
            &DVector::from_element(1, s0),
            &settings,
            None,
        )
        .expect("simulate");
        let expected = (f64::abs(s0) - settings.delta_stop) / f64::min(-k, ubar);
        analytic.push(traj.reach_time.map_or(f64::INFINITY, |t| (t - expected).abs()));
    }
    let worst = analytic.iter().cloned().fold(0.0, f64::max);
    out.push(clause(
        "scalar closed form",
        worst <= h,
        format!("max error {worst:.2e} s over {} cases", analytic.len()),
    ));
    out
}

fn main() -> ExitCode {
    let (sys, lim) = manipulator();
    let start = Instant::now();
    let design = synthesize(&sys, &lim, &SynthesisParameters::new(3.0, 1.0));
    let elapsed = start.elapsed();

    let results: Vec<(u8, &str, Vec<Clause>)> = vec![
        (1, "manipulator synthesis", criterion_1(&design, elapsed)),
        (2, "manipulator printed gain", criterion_2()),
        (3, "manipulator boundary sweep", criterion_3(&design)),
        (4, "vehicle synthesis", criterion_4()),
        (5, "vehicle printed gain", criterion_5()),
        (6, "sector condition", criterion_6()),
        (7, "geometry properties", criterion_7(&design)),
        (8, "sdp backend", criterion_8()),
        (9, "integrator convergence", criterion_9(&design)),
    ];

    let mut unexpected = Vec::new();
    for (id, title, clauses) in &results {
        let pass = clauses.iter().all(|c| c.pass);
        println!("criterion {id}: {} | {title}", if pass { "PASS" } else { "FAIL" });
        for c in clauses {
            let known = KNOWN_RED.contains(&(*id, c.name));
            let mark = match (c.pass, known) {
                (true, _) => "ok",
                (false, true) => "FAIL (known)",
                (false, false) => "FAIL",
            };
            println!("    {:<24} {:<13} {}", c.name, mark, c.detail);
            if !c.pass && !known {
                unexpected.push(format!("criterion {id}: {}", c.name));
            }
        }
    }
    let passed = results
        .iter()
        .filter(|(_, _, c)| c.iter().all(|c| c.pass))
        .count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
