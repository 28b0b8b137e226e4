//! Lagrangian mechanics of the coupled replicator dynamics.
//!
//! The flow `dW/dt = R_W[F(W)]` is governed by the classical Lagrangian
//! `L(W, V) = 1/2 ||V||_g^2 - G(W)` with the nonpositive potential
//! `G(W) = -1/2 sum_i Var_{W_i}(F_i(W))`. This module provides the potential
//! and its Riemannian gradient, the quadratic operator `A(p, v) = v^2/p -
//! ||v||_g^2 p` entering the covariant derivative, the auxiliary matrix
//! `B(p, f) = Diag(f) - <p, f> I - p f^T` from the differential of the flow
//! field, the energy `E = 1/2 ||V||_g^2 + G`, the Lagrangian vector field
//! `X_E(W, V) = (V, 1/2 A(W, V) - grad G)`, and Euler-Lagrange residuals
//! along sampled trajectories.
//!
//! Time derivatives along sampled trajectories use central differences
//! (second order, one-sided at the ends) so the residual oracle stays
//! independent of whichever integrator produced the samples.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::affinity::{condition_operator, AffinityMap};
use crate::error::{AfError, Result};
use crate::manifold::{
    apply_replicator, apply_replicator_raw, fisher_rao_norm_sq, frobenius_norm, AssignmentMatrix,
    SimplexPoint, TangentMatrix, TangentVector, DIVISION_GUARD,
};

/// Point of the velocity phase space: a state together with a tangent.
#[derive(Debug, Clone)]
pub struct LagrangianState {
    pub w: AssignmentMatrix,
    pub v: TangentMatrix,
}

impl LagrangianState {
    pub fn new(w: AssignmentMatrix, v: TangentMatrix) -> Result<Self> {
        if w.as_array().dim() != v.as_array().dim() {
            return Err(AfError::ShapeMismatch {
                expected: format!("{:?}", w.as_array().dim()),
                got: format!("{:?}", v.as_array().dim()),
            });
        }
        Ok(Self { w, v })
    }
}

/// Value of the potential together with the per-node variance split.
/// `value = -1/2 * sum(variances)`, hence `value <= 0` with equality exactly
/// at equilibria of the flow.
#[derive(Debug, Clone)]
pub struct PotentialValue {
    pub value: f64,
    pub variances: Vec<f64>,
}

/// Variance of the vector `f` under the probability row `p`:
/// `<p, f^2> - <p, f>^2`. Coincides with the squared Fisher-Rao norm of
/// `R_p f`.
pub fn variance(p: &SimplexPoint, f: &Array1<f64>) -> f64 {
    variance_raw(p.as_array().view(), f.view())
}

pub(crate) fn variance_raw(p: ArrayView1<f64>, f: ArrayView1<f64>) -> f64 {
    let mut ef = 0.0;
    let mut ef2 = 0.0;
    for (&pi, &fi) in p.iter().zip(f.iter()) {
        ef += pi * fi;
        ef2 += pi * fi * fi;
    }
    ef2 - ef * ef
}

/// The potential of the flow: minus half the summed per-node variances of the
/// affinities under the current assignment.
pub fn potential(f: &dyn AffinityMap, w: &AssignmentMatrix) -> PotentialValue {
    let fw = f.eval(w.as_array());
    let variances: Vec<f64> = w
        .as_array()
        .axis_iter(Axis(0))
        .zip(fw.axis_iter(Axis(0)))
        .map(|(p, fr)| variance_raw(p, fr))
        .collect();
    let value = -0.5 * variances.iter().sum::<f64>();
    PotentialValue { value, variances }
}

fn a_row(p: ArrayView1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
    let mut norm_sq = 0.0;
    let mut out = Array1::zeros(p.len());
    for (o, (&pi, &vi)) in out.iter_mut().zip(p.iter().zip(v.iter())) {
        let q = vi * vi / pi.max(DIVISION_GUARD);
        norm_sq += q;
        *o = q;
    }
    for (o, &pi) in out.iter_mut().zip(p.iter()) {
        *o -= norm_sq * pi;
    }
    out
}

/// `A(p, v) = v^2 / p - ||v||_g^2 p`. Lands in the tangent space since
/// `<v^2/p, 1> = ||v||_g^2`.
pub fn a_operator(p: &SimplexPoint, v: &TangentVector) -> Result<TangentVector> {
    let min = p.as_array().iter().cloned().fold(f64::INFINITY, f64::min);
    if min < DIVISION_GUARD {
        return Err(AfError::Singular { value: min, guard: DIVISION_GUARD });
    }
    Ok(TangentVector::from_raw(a_row(
        p.as_array().view(),
        v.as_array().view(),
    )))
}

pub(crate) fn a_bulk_raw(w: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(w.raw_dim());
    for ((mut orow, p), vr) in out
        .axis_iter_mut(Axis(0))
        .zip(w.axis_iter(Axis(0)))
        .zip(v.axis_iter(Axis(0)))
    {
        orow.assign(&a_row(p, vr));
    }
    out
}

/// Rowwise application of [`a_operator`].
pub fn a_operator_bulk(w: &AssignmentMatrix, v: &TangentMatrix) -> Result<TangentMatrix> {
    if w.as_array().dim() != v.as_array().dim() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{:?}", w.as_array().dim()),
            got: format!("{:?}", v.as_array().dim()),
        });
    }
    let min = w.min_entry();
    if min < DIVISION_GUARD {
        return Err(AfError::Singular { value: min, guard: DIVISION_GUARD });
    }
    Ok(TangentMatrix::from_raw(a_bulk_raw(w.as_array(), v.as_array())))
}

/// `B(p, f) = Diag(f) - <p, f> I - p f^T`, the per-row factor in the
/// differential of the flow field. Satisfies `B(p, f) R_p f = A(p, R_p f)`
/// and `B(p, f) R_p = R_p B(p, f)^T`.
pub fn b_matrix(p: &SimplexPoint, f: &Array1<f64>) -> Array2<f64> {
    let p = p.as_array();
    let n = p.len();
    let pf = p.dot(f);
    Array2::from_shape_fn((n, n), |(i, j)| {
        let diag = if i == j { f[i] - pf } else { 0.0 };
        diag - p[i] * f[j]
    })
}

/// Rowwise `B(W_i, F_i) V_i` without forming the matrices:
/// `f ⊙ v - <p, f> v - <f, v> p`.
pub fn b_operator_bulk(w: &Array2<f64>, f: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(w.raw_dim());
    for (((mut orow, p), fr), vr) in out
        .axis_iter_mut(Axis(0))
        .zip(w.axis_iter(Axis(0)))
        .zip(f.axis_iter(Axis(0)))
        .zip(v.axis_iter(Axis(0)))
    {
        let pf = p.dot(&fr);
        let fv = fr.dot(&vr);
        for (o, ((&fi, &vi), &pi)) in orow.iter_mut().zip(fr.iter().zip(vr.iter()).zip(p.iter())) {
            *o = fi * vi - pf * vi - fv * pi;
        }
    }
    out
}

/// The vector field of the flow, `R_W[F(W)]`.
pub fn flow_field(f: &dyn AffinityMap, w: &AssignmentMatrix) -> Result<TangentMatrix> {
    let fw = f.eval(w.as_array());
    apply_replicator(w, &fw)
}

pub(crate) fn flow_field_raw(f: &dyn AffinityMap, w: &Array2<f64>) -> Array2<f64> {
    apply_replicator_raw(w, &f.eval(w))
}

/// Differential of the flow field `W -> R_W[F(W)]` in the direction `v`:
/// `R_W[dF|_W[V]] + B(W, F(W))[V]`.
pub fn flow_field_differential(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
    v: &TangentMatrix,
) -> Result<TangentMatrix> {
    if w.as_array().dim() != v.as_array().dim() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{:?}", w.as_array().dim()),
            got: format!("{:?}", v.as_array().dim()),
        });
    }
    let fw = f.eval(w.as_array());
    let first = apply_replicator(w, &f.diff(w.as_array(), v.as_array()))?;
    let second = b_operator_bulk(w.as_array(), &fw, v.as_array());
    Ok(TangentMatrix::from_raw(first.into_array() + second))
}

/// Riemannian gradient of the potential:
/// `-R_W[dF|*_W[u]] - 1/2 A(W, u)` with `u = R_W[F(W)]`.
pub fn grad_potential(f: &dyn AffinityMap, w: &AssignmentMatrix) -> Result<TangentMatrix> {
    let min = w.min_entry();
    if min < DIVISION_GUARD {
        return Err(AfError::Singular { value: min, guard: DIVISION_GUARD });
    }
    Ok(TangentMatrix::from_raw(grad_potential_raw(f, w.as_array())))
}

pub(crate) fn grad_potential_raw(f: &dyn AffinityMap, w: &Array2<f64>) -> Array2<f64> {
    let u = flow_field_raw(f, w);
    let adj = f.adjoint_diff(w, &u);
    let first = apply_replicator_raw(w, &adj);
    let second = a_bulk_raw(w, &u);
    -first - second * 0.5
}

/// Total energy `E(W, V) = 1/2 ||V||_g^2 + G(W)`. Constant along integral
/// curves of the Lagrangian vector field; identically zero along the
/// first-order flow itself.
pub fn energy(f: &dyn AffinityMap, s: &LagrangianState) -> Result<f64> {
    let kinetic = 0.5 * fisher_rao_norm_sq(&s.w, &s.v)?;
    Ok(kinetic + potential(f, &s.w).value)
}

/// The Lagrangian vector field on the velocity phase space:
/// `X_E(W, V) = (V, 1/2 A(W, V) - grad G(W))`.
pub fn lagrangian_vector_field(
    f: &dyn AffinityMap,
    s: &LagrangianState,
) -> Result<(TangentMatrix, TangentMatrix)> {
    let accel = {
        let a = a_operator_bulk(&s.w, &s.v)?;
        let grad = grad_potential(f, &s.w)?;
        TangentMatrix::from_raw(a.into_array() * 0.5 - grad.into_array())
    };
    Ok((s.v.clone(), accel))
}

/// Second-order finite-difference time derivative of a matrix sequence.
pub(crate) fn sequence_derivative(seq: &[&Array2<f64>], h: f64) -> Vec<Array2<f64>> {
    let k = seq.len();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let d = if i == 0 {
            (seq[0] * (-3.0) + seq[1] * 4.0 - seq[2]) / (2.0 * h)
        } else if i == k - 1 {
            (seq[k - 1] * 3.0 - seq[k - 2] * 4.0 + seq[k - 3]) / (2.0 * h)
        } else {
            (seq[i + 1] - seq[i - 1]) / (2.0 * h)
        };
        out.push(d);
    }
    out
}

/// Covariant derivative `D_t V = dV/dt - 1/2 A(W(t), V(t))` of a vector field
/// sampled along a curve at uniform spacing `h`. The ordinary derivative is
/// estimated by central differences, one-sided second order at the ends.
pub fn covariant_derivative(
    states: &[AssignmentMatrix],
    fields: &[TangentMatrix],
    h: f64,
) -> Result<Vec<TangentMatrix>> {
    if states.len() < 3 {
        return Err(AfError::TooFewSamples { need: 3, got: states.len() });
    }
    if states.len() != fields.len() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{} samples", states.len()),
            got: format!("{} fields", fields.len()),
        });
    }
    if !h.is_finite() || h <= 0.0 {
        return Err(AfError::InvalidConfig(format!("step must be positive, got {h}")));
    }
    let raw: Vec<&Array2<f64>> = fields.iter().map(|v| v.as_array()).collect();
    let vdot = sequence_derivative(&raw, h);
    let mut out = Vec::with_capacity(states.len());
    for ((w, v), dv) in states.iter().zip(fields.iter()).zip(vdot) {
        let a = a_bulk_raw(w.as_array(), v.as_array());
        out.push(TangentMatrix::from_raw(dv - a * 0.5));
    }
    Ok(out)
}

/// Euler-Lagrange diagnostics for one trajectory sample.
#[derive(Debug, Clone)]
pub struct ElResidualSample {
    /// `||D_t dW/dt + grad G||_F` with the time derivative taken by finite
    /// differences. Decays at second order in the sampling step exactly when
    /// the affinity is admissible along the trajectory.
    pub residual: f64,
    /// `||D_t dW/dt + grad G - condition||_F` with the covariant derivative
    /// in closed form. An algebraic identity: stays at roundoff level whether
    /// or not the affinity is admissible.
    pub identity_gap: f64,
    /// `||R_W[(dF - dF*)(R_W[F(W)])]||_F`.
    pub condition_norm: f64,
}

/// Euler-Lagrange residuals along a uniformly sampled trajectory of the
/// first-order flow. The velocity at each sample is the exact vector field
/// `R_W[F(W)]`; its time derivative is estimated by finite differences.
pub fn euler_lagrange_residual(
    f: &dyn AffinityMap,
    states: &[AssignmentMatrix],
    h: f64,
) -> Result<Vec<ElResidualSample>> {
    let fields: Vec<TangentMatrix> =
        states.iter().map(|w| flow_field(f, w)).collect::<Result<_>>()?;
    let dtv = covariant_derivative(states, &fields, h)?;
    let mut out = Vec::with_capacity(states.len());
    for ((w, u), dt) in states.iter().zip(fields.iter()).zip(dtv) {
        let grad = grad_potential(f, w)?;
        let cond = condition_operator(f, w)?;
        let residual = frobenius_norm(&(dt.as_array() + grad.as_array()));

        // Closed-form acceleration of the flow:
        // R_W[dF[u]] + 1/2 A(W, u) with u the flow field.
        let closed = apply_replicator(w, &f.diff(w.as_array(), u.as_array()))?.into_array()
            + a_bulk_raw(w.as_array(), u.as_array()) * 0.5;
        let identity_gap =
            frobenius_norm(&(&closed + grad.as_array() - cond.as_array()));
        out.push(ElResidualSample {
            residual,
            identity_gap,
            condition_norm: cond.norm_frobenius(),
        });
    }
    Ok(out)
}
