use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use uvc_core::analysis::{du_polyhedral_contains, omega_boundary, sample_directions};
use uvc_core::linalg::{min_eigenvalue, spectral_norm};
use uvc_core::lmi::CERTIFICATE_TOL;
use uvc_core::simulation::{batch_verify, random_weights, simulate, IntegratorSettings, Trajectory};
use uvc_core::synthesis::{default_mu_grid, log_grid, mu_grid_search, synthesize, GridPoint};
use uvc_core::{ControllerDesign, SimplexWeights};

use crate::config::Config;
use crate::design::DesignDocument;
use crate::error::{CliError, CliResult};
use crate::models;

/// Slack on the reaching-time bound accepted by `verify`.
const REACH_SLACK: f64 = 1.05;

pub struct SynthArgs {
    pub config: PathBuf,
    pub mu: Option<f64>,
    pub mu_grid: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn synth(args: SynthArgs) -> CliResult<()> {
    let config = Config::load(&args.config)?;
    let system = config.build_system()?;
    let limits = config.limits(system.m())?;
    if !(config.rho > 0.0) || !config.rho.is_finite() {
        return Err(CliError::invalid("rho must be positive and finite"));
    }

    let grid = match (args.mu, &args.mu_grid) {
        (Some(mu), None) => vec![mu],
        (None, Some(spec)) => parse_grid(spec)?,
        (None, None) => config.mu.map_or_else(default_mu_grid, |mu| vec![mu]),
        (Some(_), Some(_)) => return Err(CliError::Usage("--mu and --mu-grid are exclusive".into())),
    };

    let base = config.parameters(grid[0]);
    let (design, points) = if grid.len() == 1 {
        (synthesize(&system, &limits, &base)?, Vec::new())
    } else {
        let out = mu_grid_search(&system, &limits, &base, &grid)?;
        eprint!("{}", grid_table(&out.points));
        (out.best, out.points)
    };

    let doc = DesignDocument::new(&design, Some(config), &points);
    let json = doc.to_json()?;
    let summary = design_summary(&design);
    match &args.out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            print!("{summary}");
            println!("design written to {}", path.display());
        }
        None => {
            eprint!("{summary}");
            print!("{json}");
        }
    }
    Ok(())
}

fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(CliError::Usage(format!("--mu-grid expects lo:hi:count, got {spec:?}")));
    };
    let bad = |what: &str| CliError::Usage(format!("--mu-grid: bad {what} in {spec:?}"));
    let lo: f64 = lo.trim().parse().map_err(|_| bad("lo"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad("hi"))?;
    let count: usize = count.trim().parse().map_err(|_| bad("count"))?;
    Ok(log_grid(lo, hi, count)?)
}

fn grid_table(points: &[GridPoint]) -> String {
    let mut s = format!("{:>12} {:>14}  {}\n", "mu", "phi", "status");
    for p in points {
        let status = match (&p.phi, &p.error) {
            (Some(_), _) => "ok".to_string(),
            (None, Some(e)) => e.clone(),
            (None, None) => "-".to_string(),
        };
        let phi = p.phi.map_or("-".to_string(), |v| format!("{v:.6e}"));
        s += &format!("{:>12.5e} {:>14}  {}\n", p.mu, phi, status);
    }
    s
}

fn design_summary(d: &ControllerDesign) -> String {
    let mut s = String::new();
    s += &format!("mu              {:.6e}\n", d.mu);
    s += &format!("rho             {:.6e}\n", d.rho);
    s += &format!("phi             {:.6e}\n", d.phi);
    s += &format!("norm2(K)        {:.6e}\n", spectral_norm(&d.k));
    s += &format!("lambda_min(Q)   {:.6e}\n", min_eigenvalue(&d.q));
    if let Some(r) = &d.residuals {
        s += &format!("max violation   {:.3e}\n", r.max_violation);
    }
    s
}

pub enum AlphaChoice {
    Weights(Vec<f64>),
    Vertex(usize),
    Random(usize),
    Centroid,
}

pub struct SimArgs {
    pub design: PathBuf,
    pub x0: Vec<f64>,
    pub alpha: AlphaChoice,
    pub step: Option<f64>,
    pub t_max: Option<f64>,
    pub stride: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn sim(args: SimArgs) -> CliResult<()> {
    let design = DesignDocument::load(&args.design)?.to_design()?;
    let n_vertices = design.system.num_vertices();
    if args.x0.len() != design.n() {
        return Err(CliError::invalid(format!(
            "--x0 has {} entries, the design has n = {}",
            args.x0.len(),
            design.n()
        )));
    }
    let weights = match args.alpha {
        AlphaChoice::Weights(w) => {
            if w.len() != n_vertices {
                return Err(CliError::invalid(format!(
                    "--alpha has {} entries, the design has {n_vertices} vertices",
                    w.len()
                )));
            }
            vec![SimplexWeights::new(w)?]
        }
        AlphaChoice::Vertex(i) => {
            if i >= n_vertices {
                return Err(CliError::invalid(format!(
                    "--vertex {i} out of range (0..{n_vertices})"
                )));
            }
            vec![SimplexWeights::vertex(i, n_vertices)?]
        }
        AlphaChoice::Random(count) => {
            if count == 0 {
                return Err(CliError::invalid("--random-alpha needs at least 1 sample"));
            }
            random_weights(count, n_vertices, args.seed)?
        }
        AlphaChoice::Centroid => vec![SimplexWeights::uniform(n_vertices)?],
    };
    let settings = IntegratorSettings {
        step: args.step.unwrap_or(IntegratorSettings::default().step),
        t_max: args.t_max.unwrap_or(2.0 * design.rho),
        record_stride: args.stride,
        ..IntegratorSettings::default()
    };
    let sigma0 = DVector::from_vec(args.x0);

    let mut stdout = std::io::stdout().lock();
    let many = weights.len() > 1;
    for (i, w) in weights.iter().enumerate() {
        let b = design.system.blend(w)?;
        let traj = simulate(&b, &design.k, &design.u_bar, &sigma0, &settings, Some(&design.p))?;
        let reach = traj
            .reach_time
            .map_or("not reached".to_string(), |t| format!("{t:.6}"));
        let alpha = w
            .as_slice()
            .iter()
            .map(|a| format!("{a:.4}"))
            .collect::<Vec<_>>()
            .join(",");
        match &args.out {
            Some(path) => {
                let path = if many { indexed_path(path, i) } else { path.clone() };
                let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
                write_trajectory(file, &traj)?;
                writeln!(stdout, "alpha=[{alpha}] reach_time={reach} -> {}", path.display())
                    .map_err(|e| CliError::io("<stdout>", e))?;
            }
            None if many => writeln!(stdout, "alpha=[{alpha}] reach_time={reach}")
                .map_err(|e| CliError::io("<stdout>", e))?,
            None => write_trajectory(&mut stdout, &traj)?,
        }
    }
    Ok(())
}

fn indexed_path(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{i}.{ext}"),
        None => format!("{stem}_{i}"),
    };
    path.with_file_name(name)
}

pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> CliResult<()> {
    let n = traj.states.first().map_or(0, |s| s.len());
    let m = traj.inputs.first().map_or(0, |u| u.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("sigma_{i}")));
    header.extend((1..=m).map(|i| format!("u_{i}")));
    header.extend((1..=m).map(|i| format!("sat_u_{i}")));
    header.push("V".into());
    out.write_record(&header)?;
    for k in 0..traj.len() {
        let mut row = vec![traj.times[k].to_string()];
        row.extend(traj.states[k].iter().map(f64::to_string));
        row.extend(traj.inputs[k].iter().map(f64::to_string));
        row.extend(traj.sat_inputs[k].iter().map(f64::to_string));
        row.push(traj.lyapunov.as_ref().map_or(String::new(), |v| v[k].to_string()));
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| CliError::io("<csv>", e))
}

pub struct RegionArgs {
    pub design: PathBuf,
    pub samples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn region(args: RegionArgs) -> CliResult<()> {
    if args.samples == 0 {
        return Err(CliError::invalid("--samples must be at least 1"));
    }
    let design = DesignDocument::load(&args.design)?.to_design()?;
    let dirs = sample_directions(design.n(), args.samples, args.seed)?;
    let sample = omega_boundary(&design, &dirs)?;
    let write = |w: &mut dyn Write| -> CliResult<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=design.n()).map(|i| format!("dir_{i}")).collect();
        header.push("omega_radius".into());
        header.push("du_admissible".into());
        out.write_record(&header)?;
        for ((d, r), ok) in sample
            .directions
            .iter()
            .zip(&sample.omega_radius)
            .zip(&sample.du_admissible)
        {
            let mut row: Vec<String> = d.iter().map(f64::to_string).collect();
            row.push(r.to_string());
            row.push(u8::from(*ok).to_string());
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| CliError::io("<csv>", e))
    };
    match &args.out {
        Some(path) => {
            let mut file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            write(&mut file)?;
            let admissible = sample.du_admissible.iter().filter(|a| **a).count();
            println!(
                "{} directions, {admissible} inside D_u -> {}",
                sample.len(),
                path.display()
            );
        }
        None => write(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

pub struct VerifyArgs {
    pub design: PathBuf,
    pub boundary_points: usize,
    pub random_alpha: usize,
    pub step: Option<f64>,
    pub seed: u64,
}

struct Check {
    name: &'static str,
    value: String,
    limit: String,
    pass: bool,
}

pub fn verify(args: VerifyArgs) -> CliResult<()> {
    if args.boundary_points == 0 {
        return Err(CliError::invalid("--boundary-points must be at least 1"));
    }
    let design = DesignDocument::load(&args.design)?.to_design()?;
    let mut checks = Vec::new();

    if let Some(r) = &design.residuals {
        checks.push(Check {
            name: "stored LMI violation",
            value: format!("{:.3e}", r.max_violation),
            limit: format!("<= {CERTIFICATE_TOL:.0e}"),
            pass: r.max_violation <= CERTIFICATE_TOL,
        });
    }

    let cert = design.check_invariants()?;
    checks.push(Check {
        name: "lambda_min(P)",
        value: format!("{:.6e}", cert.p_min_eigenvalue),
        limit: "> 0".into(),
        pass: cert.p_min_eigenvalue > 0.0,
    });
    let p_tol = CERTIFICATE_TOL * design.phi.abs().max(1.0);
    checks.push(Check {
        name: "lambda_max(P) - phi",
        value: format!("{:.3e}", cert.p_excess_over_phi),
        limit: format!("<= {p_tol:.1e}"),
        pass: cert.p_excess_over_phi <= p_tol,
    });
    let q_floor = 1.0 / design.rho - CERTIFICATE_TOL;
    checks.push(Check {
        name: "lambda_min(Q)",
        value: format!("{:.6e}", cert.q_min_eigenvalue),
        limit: format!(">= {q_floor:.6e}"),
        pass: cert.q_min_eigenvalue >= q_floor && cert.q_min_eigenvalue > 0.0,
    });
    let worst_margin = cert
        .inclusion_margins
        .iter()
        .enumerate()
        .map(|(l, m)| m / design.u_bar.get(l).powi(2))
        .fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "inclusion margin / u_bar^2",
        value: format!("{worst_margin:.3e}"),
        limit: format!(">= -{CERTIFICATE_TOL:.0e}"),
        pass: worst_margin >= -CERTIFICATE_TOL,
    });

    let dirs = sample_directions(design.n(), args.boundary_points, args.seed)?;
    let region = omega_boundary(&design, &dirs)?;
    let inside = dirs
        .iter()
        .filter(|d| {
            let z = *d / (d.transpose() * &design.p * *d)[(0, 0)].sqrt();
            du_polyhedral_contains(&design.k, &design.l, &design.u_bar, &(z * (1.0 - 1e-8)))
        })
        .count();
    checks.push(Check {
        name: "level set inside D_u",
        value: format!("{inside}/{}", dirs.len()),
        limit: "all".into(),
        pass: inside == dirs.len(),
    });

    let n_vertices = design.system.num_vertices();
    let mut weights = (0..n_vertices)
        .map(|i| SimplexWeights::vertex(i, n_vertices))
        .collect::<uvc_core::Result<Vec<_>>>()?;
    weights.extend(random_weights(args.random_alpha, n_vertices, args.seed)?);
    let settings = IntegratorSettings {
        step: args.step.unwrap_or(1e-4 * design.rho),
        t_max: 1.5 * design.rho,
        record_stride: 1,
        ..IntegratorSettings::default()
    };
    let points = region.omega_points();
    let report = batch_verify(&design, &points, &weights, &settings)?;
    let cases = report.cases.len();
    checks.push(Check {
        name: "simulations reaching",
        value: format!("{}/{cases}", cases - report.unreached - report.failures),
        limit: "all".into(),
        pass: report.unreached == 0 && report.failures == 0,
    });
    let worst = report
        .cases
        .iter()
        .filter_map(|c| c.reach_time)
        .fold(0.0_f64, f64::max);
    checks.push(Check {
        name: "max reach time",
        value: format!("{worst:.6}"),
        limit: format!("<= {:.6}", design.rho * REACH_SLACK),
        pass: report.max_reach_time.is_some_and(|t| t <= design.rho * REACH_SLACK),
    });
    checks.push(Check {
        name: "Lyapunov increases",
        value: report.lyapunov_violations.to_string(),
        limit: "0".into(),
        pass: report.lyapunov_violations == 0,
    });

    println!("{:<28} {:>16} {:>18}  result", "check", "value", "limit");
    for c in &checks {
        println!(
            "{:<28} {:>16} {:>18}  {}",
            c.name,
            c.value,
            c.limit,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "{} boundary points x {} weights, step {:.1e} s",
        points.len(),
        weights.len(),
        settings.step
    );
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("all checks pass");
        Ok(())
    } else {
        Err(CliError::Rejected(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn models_list() {
    for m in models::CATALOG {
        println!("{:<12} {}", m.name, m.description);
        println!("{:<12} params: {}", "", m.params);
    }
}

pub fn models_emit(name: &str, params: &[String], out: Option<&Path>) -> CliResult<()> {
    let config = models::emit(name, params)?;
    let json = serde_json::to_string_pretty(&config)
        .map_err(|e| CliError::invalid(format!("serialize config: {e}")))?
        + "\n";
    match out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            println!("{name} config written to {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
