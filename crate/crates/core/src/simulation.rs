//! Closed-loop simulation of `σ̇ = B sat(K σ/‖σ‖)` with fixed-step RK4.
//!
//! The field is smooth away from the origin and discontinuous at it, so the
//! integration stops once `‖σ‖ ≤ delta_stop`. When a step carries the state
//! across the origin without landing in the stop ball, the step is halved
//! and retried; the reduced step is kept for the rest of the run.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{closed_loop_field, lyapunov_value_with};
use crate::error::{Result, UvcError};
use crate::lmi::ControllerDesign;
use crate::par::{self, Execution};
use crate::system::{PolytopicSystem, SaturationLimits, SimplexWeights};

/// Step halvings allowed when approaching the origin.
const MAX_HALVINGS: u32 = 40;

/// Largest accepted step travel as a fraction of `‖σ‖`.
const MAX_TRAVEL: f64 = 0.05;

/// Tolerance on the increase of recorded `V` samples.
pub const LYAPUNOV_TOL: f64 = 1e-6;

/// Componentwise clamp to `[−ū_ℓ, ū_ℓ]`.
pub fn saturate(u: &DVector<f64>, limits: &SaturationLimits) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| {
        let cap = limits.get(i);
        u[i].clamp(-cap, cap)
    })
}

/// `ψ(u) = u − sat(u)`.
pub fn dead_zone(u: &DVector<f64>, limits: &SaturationLimits) -> DVector<f64> {
    u - saturate(u, limits)
}

pub fn blend_vertices(system: &PolytopicSystem, weights: &SimplexWeights) -> Result<DMatrix<f64>> {
    system.blend(weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    /// Fixed step `h` (s).
    pub step: f64,
    /// Horizon (s).
    pub t_max: f64,
    /// Reach threshold on `‖σ‖`.
    pub delta_stop: f64,
    /// Record every `record_stride`-th accepted step.
    pub record_stride: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            step: 1e-4,
            t_max: 10.0,
            delta_stop: 1e-5,
            record_stride: 1,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(UvcError::invalid("step must be positive"));
        }
        if !(self.t_max > self.step) || !self.t_max.is_finite() {
            return Err(UvcError::invalid("t_max must exceed the step"));
        }
        if !(self.delta_stop > 0.0) {
            return Err(UvcError::invalid("delta_stop must be positive"));
        }
        if self.record_stride == 0 {
            return Err(UvcError::invalid("record_stride must be at least 1"));
        }
        Ok(())
    }
}

/// Time-sampled closed-loop response.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub sat_inputs: Vec<DVector<f64>>,
    /// `V(σ(t))`, present when a Lyapunov matrix was supplied.
    pub lyapunov: Option<Vec<f64>>,
    /// First time `‖σ‖ ≤ delta_stop`, if reached before the horizon.
    pub reach_time: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn is_saturated(&self, sample: usize, channel: usize) -> bool {
        self.inputs[sample][channel] != self.sat_inputs[sample][channel]
    }

    /// Whether any channel is clipped in the first sample.
    pub fn saturated_at_start(&self) -> bool {
        !self.is_empty() && (0..self.inputs[0].len()).any(|ch| self.is_saturated(0, ch))
    }

    /// Longest contiguous stretch (s) over which `channel` stays clipped,
    /// measured between recorded samples.
    pub fn longest_saturation(&self, channel: usize) -> f64 {
        let mut best = 0.0_f64;
        let mut start: Option<f64> = None;
        for k in 0..self.len() {
            if self.is_saturated(k, channel) {
                let t0 = *start.get_or_insert(self.times[k]);
                best = best.max(self.times[k] - t0);
            } else {
                start = None;
            }
        }
        best
    }

    /// Fraction of recorded samples in which each channel is clipped.
    pub fn saturation_duty(&self) -> Vec<f64> {
        let m = self.inputs.first().map_or(0, |u| u.len());
        let total = self.len().max(1) as f64;
        (0..m)
            .map(|ch| (0..self.len()).filter(|&k| self.is_saturated(k, ch)).count() as f64 / total)
            .collect()
    }

    /// Number of consecutive recorded pairs where `V` grows by more than
    /// `tol` while the state is outside the stop ball.
    pub fn lyapunov_increases(&self, delta_stop: f64, tol: f64) -> usize {
        let Some(v) = &self.lyapunov else {
            return 0;
        };
        (1..v.len())
            .filter(|&k| self.states[k].norm() > delta_stop && v[k] > v[k - 1] + tol)
            .count()
    }
}

struct Recorder<'a> {
    k: &'a DMatrix<f64>,
    limits: &'a SaturationLimits,
    p: Option<&'a DMatrix<f64>>,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, sigma: &DVector<f64>) {
        let nrm = sigma.norm();
        let u = if nrm > 0.0 {
            self.k * sigma / nrm
        } else {
            DVector::zeros(self.k.nrows())
        };
        let sat = saturate(&u, self.limits);
        self.traj.times.push(t);
        self.traj.states.push(sigma.clone());
        self.traj.inputs.push(u);
        self.traj.sat_inputs.push(sat);
        if let (Some(p), Some(v)) = (self.p, self.traj.lyapunov.as_mut()) {
            v.push(lyapunov_value_with(p, sigma));
        }
    }
}

fn rk4_step(
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    limits: &SaturationLimits,
    sigma: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let f = |s: &DVector<f64>| closed_loop_field(b, k, limits, s);
    let k1 = f(sigma);
    let k2 = f(&(sigma + &k1 * (h / 2.0)));
    let k3 = f(&(sigma + &k2 * (h / 2.0)));
    let k4 = f(&(sigma + &k3 * h));
    sigma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Parameter `s ∈ [0, 1]` where the segment `a + s(b − a)` first enters the
/// ball of radius `r`, if it does.
fn segment_entry(a: &DVector<f64>, b: &DVector<f64>, r: f64) -> Option<f64> {
    let d = b - a;
    let dd = d.norm_squared();
    if dd == 0.0 {
        return None;
    }
    // |a + s d|² = r²  ⇔  dd s² + 2 (a·d) s + (|a|² − r²) = 0
    let ad = a.dot(&d);
    let c = a.norm_squared() - r * r;
    let disc = ad * ad - dd * c;
    if disc < 0.0 {
        return None;
    }
    let s = (-ad - disc.sqrt()) / dd;
    (0.0..=1.0).contains(&s).then_some(s)
}

/// Integrates `σ̇ = B sat(K σ/‖σ‖)` from `sigma0`. When `lyapunov` is given,
/// `V(σ) = σᵀPσ/‖σ‖` is recorded along the way.
pub fn simulate(
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    limits: &SaturationLimits,
    sigma0: &DVector<f64>,
    settings: &IntegratorSettings,
    lyapunov: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    settings.validate()?;
    let (n, m) = b.shape();
    if k.shape() != (m, n) || sigma0.len() != n || limits.len() != m {
        return Err(UvcError::invalid(format!(
            "inconsistent shapes: B {:?}, K {:?}, sigma0 {}, limits {}",
            b.shape(),
            k.shape(),
            sigma0.len(),
            limits.len()
        )));
    }
    if let Some(p) = lyapunov {
        if p.shape() != (n, n) {
            return Err(UvcError::invalid("Lyapunov matrix has the wrong shape"));
        }
    }
    if sigma0.norm() == 0.0 {
        return Err(UvcError::invalid("initial state must be non-zero"));
    }
    if sigma0.iter().any(|v| !v.is_finite()) {
        return Err(UvcError::invalid("initial state must be finite"));
    }

    let delta = settings.delta_stop;
    let mut rec = Recorder {
        k,
        limits,
        p: lyapunov,
        traj: Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
            sat_inputs: Vec::new(),
            lyapunov: lyapunov.map(|_| Vec::new()),
            reach_time: None,
        },
    };

    let mut t = 0.0;
    let mut sigma = sigma0.clone();
    rec.push(t, &sigma);
    if sigma.norm() <= delta {
        rec.traj.reach_time = Some(0.0);
        return Ok(rec.traj);
    }

    let h_min = settings.step / 2f64.powi(MAX_HALVINGS as i32);
    let mut h = settings.step;
    let mut accepted = 0usize;
    let mut last_recorded = 0usize;

    while t < settings.t_max {
        let h_eff = h.min(settings.t_max - t);
        let next = rk4_step(b, k, limits, &sigma, h_eff);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(UvcError::NumericalFailure(format!(
                "non-finite state at t = {t}"
            )));
        }
        let (n0, n1) = (sigma.norm(), next.norm());

        if n1 <= delta {
            // linear interpolation of ‖σ‖ across the step
            let frac = ((n0 - delta) / (n0 - n1)).clamp(0.0, 1.0);
            let t_reach = t + frac * h_eff;
            let t_end = t + h_eff;
            if t_end > *rec.traj.times.last().unwrap_or(&f64::NEG_INFINITY) {
                rec.push(t_end, &next);
            }
            rec.traj.reach_time = Some(t_reach);
            return Ok(rec.traj);
        }

        // the field is constant along rays, so resolve it relative to ‖σ‖
        let step_vec = &next - &sigma;
        let len = step_vec.norm();
        if len > MAX_TRAVEL * n0 && h_eff > h_min {
            h = h_eff / 2.0;
            continue;
        }

        let s_star = -sigma.dot(&step_vec) / (len * len);
        if s_star > 0.0 && s_star < 1.0 {
            if let Some(s) = segment_entry(&sigma, &next, delta) {
                let t_reach = t + s * h_eff;
                let point = &sigma + &step_vec * s;
                if t_reach > *rec.traj.times.last().unwrap_or(&f64::NEG_INFINITY) {
                    rec.push(t_reach, &point);
                }
                rec.traj.reach_time = Some(t_reach);
                return Ok(rec.traj);
            }
        }

        sigma = next;
        t += h_eff;
        accepted += 1;
        if accepted - last_recorded >= settings.record_stride {
            rec.push(t, &sigma);
            last_recorded = accepted;
        }
    }
    if accepted != last_recorded {
        rec.push(t, &sigma);
    }
    Ok(rec.traj)
}

/// Deterministic simplex samples: case `i` draws from stream `i` of a
/// ChaCha generator seeded with `seed`.
pub fn random_weights(count: usize, vertices: usize, seed: u64) -> Result<Vec<SimplexWeights>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            SimplexWeights::sample(vertices, &mut rng)
        })
        .collect()
}

/// One `(σ₀, α)` simulation inside a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub point_index: usize,
    pub weight_index: usize,
    pub reach_time: Option<f64>,
    /// `V(σ₀)/λ_min(Q)`.
    pub bound: Option<f64>,
    pub lyapunov_increases: usize,
    pub saturation_duty: Vec<f64>,
    pub saturated_at_start: bool,
    pub longest_saturation: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub cases: Vec<CaseResult>,
    /// Largest reach time among cases that reached; `None` if any case did
    /// not reach or failed.
    pub max_reach_time: Option<f64>,
    pub unreached: usize,
    pub failures: usize,
    pub lyapunov_violations: usize,
    /// Mean clipped fraction per actuator over all successful cases.
    pub saturation_duty: Vec<f64>,
}

impl BatchReport {
    /// Largest `reach_time / bound` over the batch.
    pub fn worst_bound_ratio(&self) -> Option<f64> {
        self.cases
            .iter()
            .filter_map(|c| Some(c.reach_time? / c.bound?))
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    }
}

/// Simulates every pair of initial point and simplex weight.
pub fn batch_verify(
    design: &ControllerDesign,
    initial_points: &[DVector<f64>],
    weight_samples: &[SimplexWeights],
    settings: &IntegratorSettings,
) -> Result<BatchReport> {
    batch_verify_with(Execution::default(), design, initial_points, weight_samples, settings)
}

pub fn batch_verify_with(
    exec: Execution,
    design: &ControllerDesign,
    initial_points: &[DVector<f64>],
    weight_samples: &[SimplexWeights],
    settings: &IntegratorSettings,
) -> Result<BatchReport> {
    settings.validate()?;
    let system = &design.system;
    let blends: Vec<DMatrix<f64>> = weight_samples
        .iter()
        .map(|w| system.blend(w))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..initial_points.len())
        .flat_map(|i| (0..blends.len()).map(move |j| (i, j)))
        .collect();

    let cases = par::map(exec, &pairs, |_, &(i, j)| {
        let sigma0 = &initial_points[i];
        let bound = crate::analysis::reaching_time_bound(design, sigma0).ok();
        match simulate(&blends[j], &design.k, &design.u_bar, sigma0, settings, Some(&design.p)) {
            Ok(traj) => CaseResult {
                point_index: i,
                weight_index: j,
                reach_time: traj.reach_time,
                bound,
                lyapunov_increases: traj.lyapunov_increases(settings.delta_stop, LYAPUNOV_TOL),
                saturation_duty: traj.saturation_duty(),
                saturated_at_start: traj.saturated_at_start(),
                longest_saturation: (0..design.m()).map(|ch| traj.longest_saturation(ch)).collect(),
                error: None,
            },
            Err(err) => CaseResult {
                point_index: i,
                weight_index: j,
                reach_time: None,
                bound,
                lyapunov_increases: 0,
                saturation_duty: vec![],
                saturated_at_start: false,
                longest_saturation: vec![],
                error: Some(err.to_string()),
            },
        }
    });

    let failures = cases.iter().filter(|c| c.error.is_some()).count();
    let unreached = cases
        .iter()
        .filter(|c| c.error.is_none() && c.reach_time.is_none())
        .count();
    let max_reach_time = if failures == 0 && unreached == 0 {
        cases
            .iter()
            .filter_map(|c| c.reach_time)
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    } else {
        None
    };
    let ok: Vec<&CaseResult> = cases.iter().filter(|c| c.error.is_none()).collect();
    let saturation_duty = (0..design.m())
        .map(|ch| {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|c| c.saturation_duty[ch]).sum::<f64>() / ok.len() as f64
            }
        })
        .collect();
    Ok(BatchReport {
        lyapunov_violations: cases.iter().map(|c| c.lyapunov_increases).sum(),
        cases,
        max_reach_time,
        unreached,
        failures,
        saturation_duty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn clamp_examples() {
        let lim = SaturationLimits::new(vec![2.0, 2.0, 2.0]).unwrap();
        let u = DVector::from_vec(vec![0.0, 3.0, -5.0]);
        assert_eq!(saturate(&u, &lim), DVector::from_vec(vec![0.0, 2.0, -2.0]));
        assert_eq!(dead_zone(&u, &lim), DVector::from_vec(vec![0.0, 1.0, -3.0]));
    }

    #[test]
    fn unit_speed_decay() {
        let lim = SaturationLimits::new(vec![2.0]).unwrap();
        let s = IntegratorSettings {
            t_max: 2.0,
            ..IntegratorSettings::default()
        };
        let tr = simulate(&scalar(1.0), &scalar(-1.0), &lim, &DVector::from_element(1, 0.5), &s, None).unwrap();
        let t = tr.reach_time.unwrap();
        assert!((t - 0.5).abs() <= s.step, "reach {t}");
        assert!(!tr.saturated_at_start());
    }

    #[test]
    fn saturated_decay() {
        let lim = SaturationLimits::new(vec![2.0]).unwrap();
        let s = IntegratorSettings {
            t_max: 2.0,
            ..IntegratorSettings::default()
        };
        let tr = simulate(&scalar(1.0), &scalar(-5.0), &lim, &DVector::from_element(1, 1.0), &s, None).unwrap();
        assert!((tr.reach_time.unwrap() - 0.5).abs() <= s.step);
        assert!(tr.saturated_at_start());
        assert!(tr.sat_inputs.iter().all(|u| u[0].abs() <= 2.0));
    }

    #[test]
    fn start_inside_ball() {
        let lim = SaturationLimits::new(vec![1.0]).unwrap();
        let s = IntegratorSettings::default();
        let tr = simulate(&scalar(1.0), &scalar(-1.0), &lim, &DVector::from_element(1, 0.5e-5), &s, None).unwrap();
        assert_eq!(tr.reach_time, Some(0.0));
    }

    #[test]
    fn off_grid_start_still_lands() {
        // 0.50005 is not a multiple of the step: the last full step jumps
        // over the stop ball and must be refined
        let lim = SaturationLimits::new(vec![2.0]).unwrap();
        let s = IntegratorSettings {
            t_max: 2.0,
            ..IntegratorSettings::default()
        };
        let tr = simulate(&scalar(1.0), &scalar(-1.0), &lim, &DVector::from_element(1, 0.500_05), &s, None).unwrap();
        assert!((tr.reach_time.unwrap() - 0.500_05).abs() <= s.step);
    }

    #[test]
    fn unstable_gain_never_reaches() {
        let lim = SaturationLimits::new(vec![1.0]).unwrap();
        let s = IntegratorSettings {
            t_max: 0.1,
            ..IntegratorSettings::default()
        };
        let tr = simulate(&scalar(1.0), &scalar(1.0), &lim, &DVector::from_element(1, 0.5), &s, None).unwrap();
        assert!(tr.reach_time.is_none());
        assert!((tr.times.last().unwrap() - 0.1).abs() < 1e-9);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_input() {
        let lim = SaturationLimits::new(vec![1.0]).unwrap();
        let s = IntegratorSettings::default();
        assert!(simulate(&scalar(1.0), &scalar(-1.0), &lim, &DVector::zeros(1), &s, None).is_err());
        let bad = IntegratorSettings {
            step: 0.0,
            ..IntegratorSettings::default()
        };
        assert!(simulate(&scalar(1.0), &scalar(-1.0), &lim, &DVector::from_element(1, 1.0), &bad, None).is_err());
    }

    #[test]
    fn weights_are_reproducible() {
        let a = random_weights(10, 4, 42).unwrap();
        let b = random_weights(10, 4, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn blend_examples() {
        let b1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b2 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 5.0, 2.0]);
        let sys = PolytopicSystem::new(vec![b1.clone(), b2.clone()]).unwrap();
        assert_eq!(blend_vertices(&sys, &SimplexWeights::vertex(1, 2).unwrap()).unwrap(), b2);
        let mean = blend_vertices(&sys, &SimplexWeights::uniform(2).unwrap()).unwrap();
        assert_eq!(mean, (b1 + b2) * 0.5);
        assert!(blend_vertices(&sys, &SimplexWeights::uniform(3).unwrap()).is_err());
    }
}
