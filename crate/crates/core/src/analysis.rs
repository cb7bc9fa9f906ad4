//! Certification geometry: the Lyapunov level set `Ω`, the sector validity
//! region `D_u`, inclusion margins, reaching-time bounds and boundary
//! sampling for plots.
//!
//! `V(σ) = σᵀPσ / ‖σ‖` is homogeneous of degree one, so `Ω = {V ≤ 1}` is
//! star-shaped with radius `1 / (dᵀPd)` along a unit direction `d`.
//! Membership in `D_u` in state coordinates depends only on the direction
//! of `σ`. At the origin both sets are taken to contain the point and
//! `V(0) = 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, UvcError};
use crate::linalg::{min_eigenvalue, projection};
use crate::lmi::ControllerDesign;
use crate::simulation::{dead_zone, saturate};
use crate::system::SaturationLimits;

const UNIT_TOL: f64 = 1e-12;
const OMEGA_TOL: f64 = 1e-12;

/// Plot radius for admissible `D_u` directions, relative to the largest
/// `Ω` radius.
pub const DU_RADIUS_FACTOR: f64 = 10.0;

/// `σᵀPσ / ‖σ‖`, with `V(0) = 0`.
pub fn lyapunov_value_with(p: &DMatrix<f64>, sigma: &DVector<f64>) -> f64 {
    let nrm = sigma.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    (sigma.transpose() * p * sigma)[(0, 0)] / nrm
}

pub fn lyapunov_value(design: &ControllerDesign, sigma: &DVector<f64>) -> f64 {
    lyapunov_value_with(&design.p, sigma)
}

/// Time derivative of `V` along `σ̇ = f`.
pub fn lyapunov_rate(p: &DMatrix<f64>, sigma: &DVector<f64>, f: &DVector<f64>) -> f64 {
    let nrm = sigma.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    let p_sigma = p * sigma;
    let quad = sigma.dot(&p_sigma);
    2.0 * p_sigma.dot(f) / nrm - quad * sigma.dot(f) / nrm.powi(3)
}

pub fn omega_contains(design: &ControllerDesign, sigma: &DVector<f64>) -> bool {
    lyapunov_value(design, sigma) <= 1.0 + OMEGA_TOL
}

/// `|(K−L)_ℓ σ/‖σ‖| ≤ ū_ℓ` for every channel; true at the origin.
pub fn du_contains_with(
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    limits: &SaturationLimits,
    sigma: &DVector<f64>,
) -> bool {
    let nrm = sigma.norm();
    if nrm == 0.0 {
        return true;
    }
    let v = (k - l) * sigma / nrm;
    v.iter()
        .enumerate()
        .all(|(ch, vi)| vi.abs() <= limits.get(ch))
}

pub fn du_contains(design: &ControllerDesign, limits: &SaturationLimits, sigma: &DVector<f64>) -> bool {
    du_contains_with(&design.k, &design.l, limits, sigma)
}

/// Polyhedral form `|(K−L)_ℓ z| ≤ ū_ℓ` in `z`-coordinates.
pub fn du_polyhedral_contains(
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    limits: &SaturationLimits,
    z: &DVector<f64>,
) -> bool {
    let v = (k - l) * z;
    v.iter()
        .enumerate()
        .all(|(ch, vi)| vi.abs() <= limits.get(ch))
}

/// `ū_ℓ² − (K−L)_ℓ P⁻¹ (K−L)_ℓᵀ` for each channel.
pub fn inclusion_margins(design: &ControllerDesign, limits: &SaturationLimits) -> Result<Vec<f64>> {
    inclusion_margins_with(&design.k, &design.l, &design.p, limits)
}

pub fn inclusion_margins_with(
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    p: &DMatrix<f64>,
    limits: &SaturationLimits,
) -> Result<Vec<f64>> {
    if limits.len() != k.nrows() {
        return Err(UvcError::invalid("limits length differs from the gain rows"));
    }
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| UvcError::IllConditioned("P is not positive definite".into()))?;
    let diff = k - l;
    Ok((0..k.nrows())
        .map(|ch| {
            let row = diff.row(ch).transpose();
            let w = chol.solve(&row);
            limits.get(ch).powi(2) - row.dot(&w)
        })
        .collect())
}

/// `V(σ₀) / λ_min(Q)` in seconds.
pub fn reaching_time_bound(design: &ControllerDesign, sigma0: &DVector<f64>) -> Result<f64> {
    if sigma0.norm() == 0.0 {
        return Err(UvcError::invalid("reaching-time bound needs a non-zero state"));
    }
    let lam = min_eigenvalue(&design.q);
    if !(lam > 0.0) {
        return Err(UvcError::IllConditioned("Q is not positive definite".into()));
    }
    Ok(lyapunov_value(design, sigma0) / lam)
}

/// Boundary description of `Ω` and `D_u` along sampled directions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub directions: Vec<DVector<f64>>,
    pub omega_radius: Vec<f64>,
    pub du_admissible: Vec<bool>,
    /// Plot radius of `D_u`: a cap for admissible directions, 0 otherwise.
    pub du_plot_radius: Vec<f64>,
}

impl RegionSample {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Points `r(d)·d` on the boundary of `Ω`.
    pub fn omega_points(&self) -> Vec<DVector<f64>> {
        self.directions
            .iter()
            .zip(&self.omega_radius)
            .map(|(d, r)| d * *r)
            .collect()
    }
}

pub fn omega_boundary(design: &ControllerDesign, directions: &[DVector<f64>]) -> Result<RegionSample> {
    let n = design.n();
    let mut omega_radius = Vec::with_capacity(directions.len());
    let mut du_admissible = Vec::with_capacity(directions.len());
    for (i, d) in directions.iter().enumerate() {
        if d.len() != n {
            return Err(UvcError::invalid(format!("direction {i} has length {}", d.len())));
        }
        if (d.norm() - 1.0).abs() > UNIT_TOL {
            return Err(UvcError::invalid(format!("direction {i} is not unit-norm")));
        }
        let quad = (d.transpose() * &design.p * d)[(0, 0)];
        omega_radius.push(if quad > 0.0 { 1.0 / quad } else { f64::INFINITY });
        du_admissible.push(du_contains_with(&design.k, &design.l, &design.u_bar, d));
    }
    let cap = DU_RADIUS_FACTOR
        * omega_radius
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max);
    let du_plot_radius = du_admissible
        .iter()
        .map(|ok| if *ok { cap } else { 0.0 })
        .collect();
    Ok(RegionSample {
        directions: directions.to_vec(),
        omega_radius,
        du_admissible,
        du_plot_radius,
    })
}

/// `count` uniformly spaced angles on the unit circle, starting at angle 0.
pub fn planar_directions(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / count as f64;
            DVector::from_vec(vec![t.cos(), t.sin()])
        })
        .collect()
}

/// Fibonacci lattice on the unit sphere.
pub fn fibonacci_sphere(count: usize) -> Vec<DVector<f64>> {
    let golden = PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let t = golden * k as f64;
            DVector::from_vec(vec![r * t.cos(), r * t.sin(), z]).normalize()
        })
        .collect()
}

/// Deterministic unit directions in `R^n`: both signs for `n = 1`, uniform
/// angles for `n = 2`, a Fibonacci lattice for `n = 3`, and normalized
/// Gaussian draws from `seed` beyond that.
pub fn sample_directions(n: usize, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    match n {
        0 => Err(UvcError::invalid("state dimension must be positive")),
        1 => Ok((0..count)
            .map(|k| DVector::from_element(1, if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect()),
        2 => Ok(planar_directions(count)),
        3 => Ok(fibonacci_sphere(count)),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count).map(|_| random_unit(n, &mut rng)).collect())
        }
    }
}

pub(crate) fn random_unit<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let nrm: f64 = v.norm();
        if nrm > 1e-12 {
            return v / nrm;
        }
    }
}

/// `ψ(u)ᵀ U (ψ(u) − L z)` with `u = K z`; non-positive whenever
/// `|(K−L)_ℓ z| ≤ ū_ℓ` for every channel.
pub fn sector_condition(
    k: &DMatrix<f64>,
    l: &DMatrix<f64>,
    u_diag: &DVector<f64>,
    limits: &SaturationLimits,
    z: &DVector<f64>,
) -> Result<f64> {
    if u_diag.iter().any(|u| !(*u > 0.0)) {
        return Err(UvcError::invalid("sector weight must be diagonal positive"));
    }
    let u = k * z;
    let psi = dead_zone(&u, limits);
    let lz = l * z;
    Ok(psi
        .iter()
        .zip(u_diag.iter())
        .zip(lz.iter())
        .map(|((p, w), q)| p * w * (p - q))
        .sum())
}

/// `(1/μ)KᵀBᵀBK + (μ/4)P² + ½KᵀBᵀΠ_σP + ½PΠ_σBK`, positive semidefinite for
/// every `σ ≠ 0` by completion of squares.
pub fn completion_of_squares(
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p: &DMatrix<f64>,
    mu: f64,
    sigma: &DVector<f64>,
) -> DMatrix<f64> {
    let bk = b * k;
    let pi = projection(sigma);
    let cross = bk.transpose() * &pi * p;
    bk.transpose() * &bk / mu + p * p * (mu / 4.0) + (&cross + cross.transpose()) * 0.5
}

/// Saturated closed-loop field `B sat(K σ/‖σ‖)`, zero at the origin.
pub fn closed_loop_field(
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    limits: &SaturationLimits,
    sigma: &DVector<f64>,
) -> DVector<f64> {
    let nrm = sigma.norm();
    if nrm == 0.0 {
        return DVector::zeros(b.nrows());
    }
    b * saturate(&(k * sigma / nrm), limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::PolytopicSystem;

    fn design_with(p: DMatrix<f64>, k: DMatrix<f64>, l: DMatrix<f64>, u_bar: Vec<f64>) -> ControllerDesign {
        let n = p.nrows();
        let m = k.nrows();
        let sys = PolytopicSystem::new(vec![DMatrix::identity(n, m)]).unwrap();
        ControllerDesign::from_parts(
            k,
            l,
            p,
            DMatrix::identity(n, n),
            1.0,
            1.0,
            1.0,
            SaturationLimits::new(u_bar).unwrap(),
            sys,
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn lyapunov_identity_cases() {
        let d = design_with(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), vec![1.0, 1.0]);
        assert!((lyapunov_value(&d, &v(&[4.0, 3.0])) - 5.0).abs() < 1e-15);
        assert!((lyapunov_value(&d, &v(&[0.6, 0.8])) - 1.0).abs() < 1e-15);
        assert_eq!(lyapunov_value(&d, &v(&[0.0, 0.0])), 0.0);
        assert!(omega_contains(&d, &v(&[0.5, 0.0])));
        assert!(!omega_contains(&d, &v(&[1.5, 0.0])));
        assert!(omega_contains(&d, &v(&[0.0, 0.0])));
    }

    #[test]
    fn du_cases() {
        let k = DMatrix::from_row_slice(1, 1, &[2.0]);
        let l = DMatrix::from_row_slice(1, 1, &[0.0]);
        let lim = SaturationLimits::new(vec![1.0]).unwrap();
        assert!(!du_contains_with(&k, &l, &lim, &v(&[5.0])));
        assert!(du_contains_with(&k, &k, &lim, &v(&[5.0])));
        assert!(du_contains_with(&k, &l, &lim, &v(&[0.0])));
    }

    #[test]
    fn margins_direct_arithmetic() {
        let d = design_with(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 2),
            vec![2.0],
        );
        let m = inclusion_margins(&d, &d.u_bar).unwrap();
        assert!((m[0] - 3.0).abs() < 1e-15);

        let same = design_with(DMatrix::identity(2, 2), d.k.clone(), d.k.clone(), vec![2.0]);
        assert_eq!(inclusion_margins(&same, &same.u_bar).unwrap(), vec![4.0]);
    }

    #[test]
    fn singular_p_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let k = DMatrix::zeros(1, 2);
        let lim = SaturationLimits::new(vec![1.0]).unwrap();
        assert!(matches!(
            inclusion_margins_with(&k, &k, &p, &lim),
            Err(UvcError::IllConditioned(_))
        ));
    }

    #[test]
    fn reaching_bound_identity() {
        let d = design_with(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), vec![1.0, 1.0]);
        assert!((reaching_time_bound(&d, &v(&[4.0, 3.0])).unwrap() - 5.0).abs() < 1e-15);
        assert!(reaching_time_bound(&d, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn boundary_radii() {
        let d = design_with(
            DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            vec![1.0, 1.0],
        );
        let s = omega_boundary(&d, &[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        assert_eq!(s.omega_radius, vec![0.25, 1.0]);
        assert_eq!(s.du_plot_radius, vec![10.0, 10.0]);
        assert!(omega_boundary(&d, &[v(&[2.0, 0.0])]).is_err());

        let unit = design_with(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), vec![1.0, 1.0]);
        let s = omega_boundary(&unit, &planar_directions(36)).unwrap();
        assert!(s.omega_radius.iter().all(|r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sector_examples() {
        let lim = SaturationLimits::new(vec![1.0]).unwrap();
        let one = DVector::from_element(1, 1.0);
        let k = DMatrix::from_element(1, 1, 2.0);
        let l = DMatrix::from_element(1, 1, 1.0);
        let val = sector_condition(&k, &l, &one, &lim, &v(&[0.8])).unwrap();
        assert!((val + 0.12).abs() < 1e-12);

        let l0 = DMatrix::from_element(1, 1, 0.0);
        let val = sector_condition(&k, &l0, &one, &lim, &v(&[5.0])).unwrap();
        assert!((val - 81.0).abs() < 1e-12);

        // unsaturated: ψ = 0
        let val = sector_condition(&k, &l0, &one, &lim, &v(&[0.3])).unwrap();
        assert_eq!(val, 0.0);
        assert!(sector_condition(&k, &l0, &DVector::from_element(1, 0.0), &lim, &v(&[0.3])).is_err());
    }

    #[test]
    fn direction_generators_are_unit() {
        for d in fibonacci_sphere(100).iter().chain(planar_directions(17).iter()) {
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
        let high = sample_directions(5, 10, 3).unwrap();
        assert!(high.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
        assert_eq!(sample_directions(5, 10, 3).unwrap(), high);
    }

    #[test]
    fn lyapunov_rate_matches_finite_difference() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = v(&[0.4, -0.7]);
        let f = v(&[-1.0, 0.5]);
        let h = 1e-6;
        let fd = (lyapunov_value_with(&p, &(&s + &f * h)) - lyapunov_value_with(&p, &(&s - &f * h))) / (2.0 * h);
        assert!((lyapunov_rate(&p, &s, &f) - fd).abs() < 1e-8);
    }
}
