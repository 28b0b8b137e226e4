//! Time integration of the first- and second-order dynamics.
//!
//! The geometric Euler scheme advances the first-order flow through the
//! lifting map and therefore stays on the manifold by construction. Classical
//! RK4 integrates either system in the flat embedding; rows are renormalized
//! and floored after every full step (the velocity component is projected
//! back onto zero row sums). A trajectory can finally be reparametrized by
//! arc length of the Jacobi metric `(-G) g`, under which admissible flows
//! travel at constant speed.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMap;
use crate::error::{AfError, Result};
use crate::manifold::{
    fisher_rao_inner_raw, lift_counted, AssignmentMatrix, TangentMatrix,
};
use crate::mechanics::{
    a_bulk_raw, flow_field_raw, grad_potential_raw, potential, sequence_derivative,
    LagrangianState,
};

/// Abort threshold: fraction of entries clamped in a single step.
pub const FLOOR_STORM_FRACTION: f64 = 0.01;

/// Reparametrization refuses trajectories that approach the critical set
/// closer than this in potential gap `-G`.
pub const JACOBI_MIN_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GeometricEuler,
    Rk4,
}

/// Step size, horizon and stopping control for [`integrate_first_order`] and
/// [`integrate_second_order`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step size, strictly positive.
    pub h: f64,
    /// Integration horizon; rounded to a whole number of steps.
    pub t_end: f64,
    /// Record every `record_stride`-th step (the initial and final states are
    /// always recorded).
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Labeling convergence threshold: stop once `min_i max_j W_ij >= 1 -
    /// eps_conv`.
    #[serde(default = "default_eps_conv")]
    pub eps_conv: f64,
}

fn default_stride() -> usize {
    1
}

fn default_eps_conv() -> f64 {
    1e-3
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.h.is_finite() || self.h <= 0.0 {
            return Err(AfError::InvalidConfig(format!("step h must be positive, got {}", self.h)));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(AfError::InvalidConfig(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(AfError::InvalidConfig("record_stride must be >= 1".into()));
        }
        if !(self.eps_conv > 0.0 && self.eps_conv < 1.0) {
            return Err(AfError::InvalidConfig(format!(
                "eps_conv must lie in (0, 1), got {}",
                self.eps_conv
            )));
        }
        Ok(())
    }

    fn step_count(&self) -> usize {
        let steps = self.t_end / self.h;
        let rounded = steps.round();
        if (steps - rounded).abs() <= 1e-9 * steps.max(1.0) {
            rounded as usize
        } else {
            steps.ceil() as usize
        }
    }
}

/// Recorded samples of one integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<AssignmentMatrix>,
    /// Present for second-order runs.
    pub velocities: Option<Vec<TangentMatrix>>,
    /// Whether the labeling convergence criterion stopped the run.
    pub converged: bool,
    /// Total number of entries clamped by the positivity floor.
    pub floor_activations: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> &AssignmentMatrix {
        self.states.last().expect("trajectory has at least the initial sample")
    }

    /// The common spacing of the recorded samples; errors when the recording
    /// grid is not uniform (e.g. a final partial stride).
    pub fn sample_spacing(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(AfError::TooFewSamples { need: 2, got: self.times.len() });
        }
        let h = self.times[1] - self.times[0];
        for (i, pair) in self.times.windows(2).enumerate().skip(1) {
            let d = pair[1] - pair[0];
            if (d - h).abs() > 1e-9 * h.max(1.0) {
                return Err(AfError::NonUniformSampling { first: h, found: d, index: i + 1 });
            }
        }
        Ok(h)
    }
}

/// One step of the geometric Euler scheme: `lift(W, h F(W))`. Stays on the
/// manifold without any projection or renormalization.
pub fn geometric_euler_step(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
    h: f64,
) -> Result<AssignmentMatrix> {
    geometric_euler_step_counted(f, w, h).map(|(w, _)| w)
}

fn geometric_euler_step_counted(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
    h: f64,
) -> Result<(AssignmentMatrix, usize)> {
    let fw = f.eval(w.as_array());
    lift_counted(w, &(fw * h))
}

/// Classical RK4 on the first-order flow in the flat embedding, with rows
/// renormalized and floored after the full step.
pub fn rk4_step_first_order(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
    h: f64,
) -> Result<AssignmentMatrix> {
    rk4_step_first_order_counted(f, w, h).map(|(w, _)| w)
}

fn rk4_step_first_order_counted(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
    h: f64,
) -> Result<(AssignmentMatrix, usize)> {
    let w0 = w.as_array();
    let k1 = flow_field_raw(f, w0);
    let k2 = flow_field_raw(f, &(w0 + &(&k1 * (h / 2.0))));
    let k3 = flow_field_raw(f, &(w0 + &(&k2 * (h / 2.0))));
    let k4 = flow_field_raw(f, &(w0 + &(&k3 * h)));
    let next = w0 + &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
    AssignmentMatrix::repair(next)
}

fn xe_raw(f: &dyn AffinityMap, w: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let accel = a_bulk_raw(w, v) * 0.5 - grad_potential_raw(f, w);
    (v.clone(), accel)
}

/// Classical RK4 on the Lagrangian vector field. The state row sums are
/// repaired after the step and the velocity is projected back onto zero row
/// sums; both drifts are of the order of the local truncation error.
pub fn rk4_step_second_order(
    f: &dyn AffinityMap,
    s: &LagrangianState,
    h: f64,
) -> Result<LagrangianState> {
    rk4_step_second_order_counted(f, s, h).map(|(s, _)| s)
}

fn rk4_step_second_order_counted(
    f: &dyn AffinityMap,
    s: &LagrangianState,
    h: f64,
) -> Result<(LagrangianState, usize)> {
    let w0 = s.w.as_array();
    let v0 = s.v.as_array();
    let (kw1, kv1) = xe_raw(f, w0, v0);
    let (kw2, kv2) = xe_raw(f, &(w0 + &(&kw1 * (h / 2.0))), &(v0 + &(&kv1 * (h / 2.0))));
    let (kw3, kv3) = xe_raw(f, &(w0 + &(&kw2 * (h / 2.0))), &(v0 + &(&kv2 * (h / 2.0))));
    let (kw4, kv4) = xe_raw(f, &(w0 + &(&kw3 * h)), &(v0 + &(&kv3 * h)));
    let w_next = w0 + &((kw1 + kw2 * 2.0 + kw3 * 2.0 + kw4) * (h / 6.0));
    let v_next = v0 + &((kv1 + kv2 * 2.0 + kv3 * 2.0 + kv4) * (h / 6.0));
    let (w, floored) = AssignmentMatrix::repair(w_next)?;
    let v = crate::manifold::project_t0(&v_next)
        .map_err(|_| AfError::NonFinite("second-order velocity"))?;
    Ok((LagrangianState { w, v }, floored))
}

struct StepOutcome {
    floored: usize,
}

fn check_step(
    state: &AssignmentMatrix,
    floored: usize,
    step: usize,
) -> Result<StepOutcome> {
    let total = state.as_array().len();
    if state.as_array().iter().any(|x| !x.is_finite()) {
        return Err(AfError::Diverged { step, reason: "non-finite state".into() });
    }
    if floored as f64 > FLOOR_STORM_FRACTION * total as f64 {
        return Err(AfError::FloorStorm { step, floored, total });
    }
    Ok(StepOutcome { floored })
}

/// Integrates the first-order flow, recording every stride-th state. Stops at
/// the horizon or as soon as the labeling convergence criterion holds.
pub fn integrate_first_order(
    f: &dyn AffinityMap,
    w0: &AssignmentMatrix,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n_steps = cfg.step_count();
    let mut w = w0.clone();
    let mut times = vec![0.0];
    let mut states = vec![w.clone()];
    let mut converged = w.min_max_entry() >= 1.0 - cfg.eps_conv;
    let mut floor_total = 0usize;
    if !converged {
        for step in 1..=n_steps {
            let (next, floored) = match cfg.method {
                Method::GeometricEuler => geometric_euler_step_counted(f, &w, cfg.h)
                    .map_err(|e| step_error(e, step))?,
                Method::Rk4 => rk4_step_first_order_counted(f, &w, cfg.h)
                    .map_err(|e| step_error(e, step))?,
            };
            floor_total += check_step(&next, floored, step)?.floored;
            w = next;
            let done = w.min_max_entry() >= 1.0 - cfg.eps_conv;
            if step % cfg.record_stride == 0 || done || step == n_steps {
                times.push(step as f64 * cfg.h);
                states.push(w.clone());
            }
            if done {
                converged = true;
                break;
            }
        }
    }
    Ok(Trajectory { times, states, velocities: None, converged, floor_activations: floor_total })
}

/// Integrates the Lagrangian vector field, recording states and velocities.
pub fn integrate_second_order(
    f: &dyn AffinityMap,
    s0: &LagrangianState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.method != Method::Rk4 {
        return Err(AfError::InvalidConfig(
            "the second-order system is integrated with rk4; the lifting map only covers the first-order flow".into(),
        ));
    }
    let n_steps = cfg.step_count();
    let mut s = s0.clone();
    let mut times = vec![0.0];
    let mut states = vec![s.w.clone()];
    let mut velocities = vec![s.v.clone()];
    let mut converged = s.w.min_max_entry() >= 1.0 - cfg.eps_conv;
    let mut floor_total = 0usize;
    if !converged {
        for step in 1..=n_steps {
            let (next, floored) =
                rk4_step_second_order_counted(f, &s, cfg.h).map_err(|e| step_error(e, step))?;
            floor_total += check_step(&next.w, floored, step)?.floored;
            s = next;
            let done = s.w.min_max_entry() >= 1.0 - cfg.eps_conv;
            if step % cfg.record_stride == 0 || done || step == n_steps {
                times.push(step as f64 * cfg.h);
                states.push(s.w.clone());
                velocities.push(s.v.clone());
            }
            if done {
                converged = true;
                break;
            }
        }
    }
    Ok(Trajectory {
        times,
        states,
        velocities: Some(velocities),
        converged,
        floor_activations: floor_total,
    })
}

fn step_error(e: AfError, step: usize) -> AfError {
    match e {
        AfError::NonFinite(what) => {
            AfError::Diverged { step, reason: format!("non-finite {what}") }
        }
        other => other,
    }
}

/// A trajectory re-expressed in the arc-length parameter of the Jacobi metric
/// `(-G) g`, with the speed measured in that metric per sample.
#[derive(Debug, Clone)]
pub struct JacobiTrajectory {
    /// New parameter values `s(t) = ∫ 2 (-G) dτ` (trapezoid rule).
    pub s: Vec<f64>,
    pub states: Vec<AssignmentMatrix>,
    /// `||dW/ds||` in the Jacobi metric per sample.
    pub h0_speeds: Vec<f64>,
    pub mean_speed: f64,
    /// Relative standard deviation of the speeds: the convention-free content
    /// of the geodesic property is that this vanishes up to discretization.
    pub speed_rel_std: f64,
}

/// Reparametrizes a uniformly sampled first-order trajectory by the Jacobi
/// arc length, `ds/dt = 2 (-G(W))`.
///
/// The time derivative of the states is estimated by central differences, so
/// the constancy of the reported speed is a genuine numerical check rather
/// than an algebraic identity. Trajectories that touch the critical set
/// (`-G < 1e-8`) are refused, naming the offending sample.
pub fn jacobi_reparametrize(f: &dyn AffinityMap, traj: &Trajectory) -> Result<JacobiTrajectory> {
    let h = traj.sample_spacing()?;
    let k = traj.states.len();
    if k < 3 {
        return Err(AfError::TooFewSamples { need: 3, got: k });
    }
    let mut gaps = Vec::with_capacity(k);
    for (i, w) in traj.states.iter().enumerate() {
        let gap = -potential(f, w).value;
        if gap < JACOBI_MIN_GAP {
            return Err(AfError::CriticalSet { sample: i, gap, min: JACOBI_MIN_GAP });
        }
        gaps.push(gap);
    }
    let rates: Vec<f64> = gaps.iter().map(|g| 2.0 * g).collect();
    let mut s = Vec::with_capacity(k);
    s.push(0.0);
    for i in 1..k {
        let inc = 0.5 * h * (rates[i - 1] + rates[i]);
        s.push(s[i - 1] + inc);
    }

    let raw: Vec<&Array2<f64>> = traj.states.iter().map(|w| w.as_array()).collect();
    let wdot = sequence_derivative(&raw, h);
    let mut speeds = Vec::with_capacity(k);
    for i in 0..k {
        let speed_g_sq = fisher_rao_inner_raw(traj.states[i].as_array(), &wdot[i], &wdot[i]);
        speeds.push(speed_g_sq.sqrt() / (2.0 * gaps[i].sqrt()));
    }
    let mean = speeds.iter().sum::<f64>() / k as f64;
    let var = speeds.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k as f64;
    let rel_std = var.sqrt() / mean;
    Ok(JacobiTrajectory {
        s,
        states: traj.states.clone(),
        h0_speeds: speeds,
        mean_speed: mean,
        speed_rel_std: rel_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{CounterexampleAffinity, OmegaAffinity, RowLinearAffinity};
    use crate::manifold::frobenius_norm;
    use crate::mechanics::{energy, flow_field};
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(37)
    }

    fn random_state(rng: &mut ChaCha8Rng, m: usize, n: usize) -> AssignmentMatrix {
        let mut w = Array2::from_shape_fn((m, n), |_| 0.05 + rng.random::<f64>());
        for mut row in w.axis_iter_mut(ndarray::Axis(0)) {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        AssignmentMatrix::new(w).unwrap()
    }

    fn cycle_omega(m: usize) -> OmegaAffinity {
        let mut o = Array2::zeros((m, m));
        for i in 0..m {
            o[(i, i)] += 1.0 / 3.0;
            o[(i, (i + 1) % m)] += 1.0 / 3.0;
            o[(i, (i + m - 1) % m)] += 1.0 / 3.0;
        }
        OmegaAffinity::new(o).unwrap()
    }

    fn constant_affinity(c: &[f64]) -> RowLinearAffinity {
        let n = c.len();
        RowLinearAffinity::new(Array2::from_shape_fn((n, n), |(i, _)| c[i])).unwrap()
    }

    fn cfg(method: Method, h: f64, t_end: f64) -> IntegratorConfig {
        IntegratorConfig { method, h, t_end, record_stride: 1, eps_conv: 1e-3 }
    }

    #[test]
    fn euler_fixes_equilibria() {
        let o = cycle_omega(4);
        let bary = AssignmentMatrix::barycenter(4, 3);
        let next = geometric_euler_step(&o, &bary, 0.3).unwrap();
        assert!(frobenius_norm(&(next.as_array() - bary.as_array())) <= 1e-14);
    }

    #[test]
    fn euler_consistent_with_flow_field() {
        // (step(W, h) - W) / h approaches the vector field at first order.
        let mut r = rng();
        let o = cycle_omega(4);
        let w = random_state(&mut r, 4, 3);
        let ff = flow_field(&o, &w).unwrap();
        let err = |h: f64| {
            let next = geometric_euler_step(&o, &w, h).unwrap();
            let fd = (next.as_array() - w.as_array()) / h;
            frobenius_norm(&(&fd - ff.as_array()))
        };
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        let order = (e1 / e2).log2();
        assert!(order > 0.8 && order < 1.2, "observed order {order}");
    }

    #[test]
    fn euler_reproduces_lift_example() {
        // f = (1, 0) on p = (1/2, 1/2) with h = ln 3 lands on (3/4, 1/4).
        let f = constant_affinity(&[1.0, 0.0]);
        let w = AssignmentMatrix::barycenter(1, 2);
        let next = geometric_euler_step(&f, &w, 3.0_f64.ln()).unwrap();
        assert!((next.as_array()[(0, 0)] - 0.75).abs() <= 1e-15);
        assert!((next.as_array()[(0, 1)] - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn euler_preserves_row_sums_without_renormalization() {
        let mut r = rng();
        let o = cycle_omega(5);
        let mut w = random_state(&mut r, 5, 4);
        for _ in 0..50 {
            w = geometric_euler_step(&o, &w, 0.2).unwrap();
            for row in w.as_array().rows() {
                assert!((row.sum() - 1.0).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn rk4_fixes_equilibria() {
        let o = cycle_omega(4);
        let bary = AssignmentMatrix::barycenter(4, 3);
        let next = rk4_step_first_order(&o, &bary, 0.3).unwrap();
        assert!(frobenius_norm(&(next.as_array() - bary.as_array())) <= 1e-13);
    }

    #[test]
    fn rk4_first_order_is_fourth_order() {
        // Global error against a reference at h/64 on a single-simplex flow.
        let m_sym = array![[1.0, 0.3, 0.0], [0.3, 0.5, 0.1], [0.0, 0.1, 0.0]];
        let f = RowLinearAffinity::new(m_sym).unwrap();
        let w0 = AssignmentMatrix::new(array![[0.2, 0.3, 0.5]]).unwrap();
        let t_end = 1.0;
        let run = |h: f64| {
            let mut w = w0.clone();
            let steps = (t_end / h).round() as usize;
            for _ in 0..steps {
                w = rk4_step_first_order(&f, &w, h).unwrap();
            }
            w
        };
        let reference = run(0.1 / 64.0);
        let e = |h: f64| frobenius_norm(&(run(h).as_array() - reference.as_array()));
        let ratio = e(0.1) / e(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "observed ratio {ratio}");
    }

    #[test]
    fn rk4_and_euler_agree_at_first_order() {
        let o = cycle_omega(4);
        let mut r = rng();
        let w0 = random_state(&mut r, 4, 3);
        let diff = |h: f64| {
            let steps = (0.5 / h).round() as usize;
            let mut we = w0.clone();
            let mut wr = w0.clone();
            for _ in 0..steps {
                we = geometric_euler_step(&o, &we, h).unwrap();
                wr = rk4_step_first_order(&o, &wr, h).unwrap();
            }
            frobenius_norm(&(we.as_array() - wr.as_array()))
        };
        let d1 = diff(0.02);
        let d2 = diff(0.01);
        let order = (d1 / d2).log2();
        assert!(order > 0.7 && order < 1.3, "observed order {order}");
    }

    #[test]
    fn second_order_fixes_equilibria() {
        let o = cycle_omega(4);
        let s = LagrangianState::new(
            AssignmentMatrix::barycenter(4, 3),
            TangentMatrix::zero(4, 3),
        )
        .unwrap();
        let next = rk4_step_second_order(&o, &s, 0.2).unwrap();
        assert!(frobenius_norm(&(next.w.as_array() - s.w.as_array())) <= 1e-13);
        assert!(next.v.norm_frobenius() <= 1e-13);
    }

    #[test]
    fn second_order_base_curve_follows_first_order_flow() {
        // Initialized with the flow field of an admissible affinity, the base
        // curve of the second-order system retraces the first-order flow to
        // integrator accuracy.
        let o = cycle_omega(4);
        let mut r = rng();
        let w0 = random_state(&mut r, 4, 3);
        let v0 = flow_field(&o, &w0).unwrap();

        let diff = |h: f64| {
            let steps = (0.5 / h).round() as usize;
            let mut w1 = w0.clone();
            let mut s2 = LagrangianState::new(w0.clone(), v0.clone()).unwrap();
            for _ in 0..steps {
                w1 = rk4_step_first_order(&o, &w1, h).unwrap();
                s2 = rk4_step_second_order(&o, &s2, h).unwrap();
            }
            frobenius_norm(&(w1.as_array() - s2.w.as_array()))
        };
        let d1 = diff(0.02);
        let d2 = diff(0.01);
        assert!(d1 <= 1e-7, "difference {d1} too large");
        assert!(d1 / d2 > 8.0, "expected at least cubic decay, ratio {}", d1 / d2);
    }

    #[test]
    fn second_order_conserves_energy() {
        let o = cycle_omega(3);
        let mut r = rng();
        let w0 = random_state(&mut r, 3, 3);
        let v_raw = Array2::from_shape_fn((3, 3), |_| r.random::<f64>() * 0.4 - 0.2);
        let v0 = crate::manifold::project_t0(&v_raw).unwrap();
        let s0 = LagrangianState::new(w0, v0).unwrap();
        let e0 = energy(&o, &s0).unwrap();
        let traj = integrate_second_order(&o, &s0, &cfg(Method::Rk4, 1e-3, 1.0)).unwrap();
        let velocities = traj.velocities.as_ref().unwrap();
        let mut drift = 0.0f64;
        for (w, v) in traj.states.iter().zip(velocities.iter()) {
            let s = LagrangianState::new(w.clone(), v.clone()).unwrap();
            drift = drift.max((energy(&o, &s).unwrap() - e0).abs());
        }
        assert!(drift <= 1e-8, "energy drift {drift}");
    }

    #[test]
    fn integrate_zero_horizon_returns_initial_sample() {
        let o = cycle_omega(3);
        let w0 = AssignmentMatrix::barycenter(3, 3);
        let traj = integrate_first_order(&o, &w0, &cfg(Method::Rk4, 0.1, 0.0)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.times, vec![0.0]);
    }

    #[test]
    fn integrate_counterexample_selects_a_vertex() {
        let f = CounterexampleAffinity::new(3).unwrap();
        let w0 = AssignmentMatrix::new(array![[0.3, 0.3, 0.4]]).unwrap();
        let mut c = cfg(Method::GeometricEuler, 0.1, 2000.0);
        c.record_stride = 100;
        c.eps_conv = 0.01;
        let traj = integrate_first_order(&f, &w0, &c).unwrap();
        assert!(traj.converged, "flow did not converge");
        let last = traj.last_state();
        let max = last.as_array().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max >= 0.99);
        // The second label wins under p -> p^1 e_2.
        assert!(last.as_array()[(0, 1)] >= 0.99);
    }

    #[test]
    fn integrate_detects_floor_storm() {
        // A strongly repelling affinity drives most entries to the floor in
        // one lifted step.
        let f = constant_affinity(&[-1e6, 0.0, 1e6]);
        let w0 = AssignmentMatrix::barycenter(2, 3);
        let err = integrate_first_order(&f, &w0, &cfg(Method::GeometricEuler, 1.0, 5.0));
        assert!(matches!(err, Err(AfError::FloorStorm { .. })), "got {err:?}");
    }

    #[test]
    fn integrate_reports_divergence() {
        // An explosive field makes the embedded RK4 overflow to non-finite.
        let f = constant_affinity(&[0.0, 1e8, 0.0]);
        let w0 = AssignmentMatrix::barycenter(2, 3);
        let err = integrate_first_order(&f, &w0, &cfg(Method::Rk4, 10.0, 100.0));
        assert!(
            matches!(err, Err(AfError::Diverged { .. }) | Err(AfError::FloorStorm { .. })),
            "got {err:?}"
        );
    }

    #[test]
    fn jacobi_speed_is_constant_on_admissible_flow() {
        let o = cycle_omega(4);
        let mut r = rng();
        let w0 = random_state(&mut r, 4, 3);
        let traj = integrate_first_order(&o, &w0, &cfg(Method::Rk4, 1e-3, 1.0)).unwrap();
        let jac = jacobi_reparametrize(&o, &traj).unwrap();
        assert!(jac.speed_rel_std <= 1e-3, "relative std {}", jac.speed_rel_std);
        // With rate 2 (-G) the constant equals 1/sqrt(2); reported, and a
        // handy smoke value here.
        assert!((jac.mean_speed - 0.5f64.sqrt()).abs() <= 1e-3);
    }

    #[test]
    fn jacobi_refuses_equilibrium_start() {
        let o = cycle_omega(4);
        let bary = AssignmentMatrix::barycenter(4, 3);
        let traj = integrate_first_order(&o, &bary, &cfg(Method::Rk4, 0.01, 0.1)).unwrap();
        assert!(matches!(
            jacobi_reparametrize(&o, &traj),
            Err(AfError::CriticalSet { sample: 0, .. })
        ));
    }

    #[test]
    fn jacobi_scaling_covariance() {
        // Scaling the affinity by 2 and halving both step and horizon yields
        // bitwise identical states under the lifted Euler scheme; the arc
        // length doubles while the Jacobi speed is scale-free.
        let m_sym = array![[1.0, 0.3, 0.0], [0.3, 0.5, 0.1], [0.0, 0.1, 0.0]];
        let f1 = RowLinearAffinity::new(m_sym.clone()).unwrap();
        let f2 = RowLinearAffinity::new(m_sym * 2.0).unwrap();
        let w0 = AssignmentMatrix::new(array![[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]]).unwrap();
        let t1 = integrate_first_order(&f1, &w0, &cfg(Method::GeometricEuler, 0.02, 0.5)).unwrap();
        let t2 = integrate_first_order(&f2, &w0, &cfg(Method::GeometricEuler, 0.01, 0.25)).unwrap();
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.states.iter().zip(t2.states.iter()) {
            assert_eq!(a.as_array(), b.as_array());
        }
        let j1 = jacobi_reparametrize(&f1, &t1).unwrap();
        let j2 = jacobi_reparametrize(&f2, &t2).unwrap();
        for (s1, s2) in j1.s.iter().zip(j2.s.iter()) {
            assert!((2.0 * s1 - s2).abs() <= 1e-14 * s2.abs().max(1.0));
        }
        for (v1, v2) in j1.h0_speeds.iter().zip(j2.h0_speeds.iter()) {
            assert!((v1 - v2).abs() <= 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Method::Rk4, 0.1, 1.0);
        assert!(c.validate().is_ok());
        c.h = 0.0;
        assert!(c.validate().is_err());
        c.h = 0.1;
        c.eps_conv = 1.5;
        assert!(c.validate().is_err());
        c.eps_conv = 0.5;
        c.record_stride = 0;
        assert!(c.validate().is_err());
    }
}
