//! Assignment-manifold primitives.
//!
//! A state is a row-stochastic positive matrix `W` (one probability row per
//! graph node, one column per label); a tangent is a matrix with zero row
//! sums. This module provides the simplex/tangent newtypes, the orthogonal
//! projection onto the tangent space, the replicator operator together with
//! its inverse on the tangent space, the Fisher-Rao metric, and the lifting
//! map `(W, V) -> (W ⊙ e^V) / <W, e^V>` used by the geometric Euler scheme.
//!
//! All operations are pure and act rowwise; rows never interact, so results
//! are deterministic under any row execution order. Values are immutable once
//! constructed and safe to share across threads.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{AfError, Result};

/// Row sums of states and tangents must hold to this absolute tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Entries of newly produced states are clamped up to this value (and the row
/// renormalized). The manifold is open; long integrations approach the
/// boundary and raw arithmetic underflows without the floor.
pub const POSITIVITY_FLOOR: f64 = 1e-14;

/// Componentwise division by state entries below this value is refused.
pub const DIVISION_GUARD: f64 = 1e-15;

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Array1<f64>);

impl SimplexPoint {
    /// Validates positivity and unit sum (to [`ROW_SUM_TOL`]).
    pub fn new(p: Array1<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(AfError::InvalidSimplex(format!(
                "need at least 2 labels, got {}",
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("simplex point"));
        }
        if let Some(&bad) = p.iter().find(|&&x| x <= 0.0) {
            return Err(AfError::InvalidSimplex(format!("entry {bad:e} is not positive")));
        }
        let s = p.sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(AfError::InvalidSimplex(format!("sum {s} deviates from 1")));
        }
        Ok(Self(p))
    }

    /// The barycenter `(1/n, ..., 1/n)`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 2, "need at least 2 labels");
        Self(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A vector with zero sum, an element of the common tangent space of the
/// simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(Array1<f64>);

impl TangentVector {
    /// Validates `|<v, 1>| <= ROW_SUM_TOL`.
    pub fn new(v: Array1<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("tangent vector"));
        }
        let s = v.sum();
        if s.abs() > ROW_SUM_TOL {
            return Err(AfError::InvalidTangent(format!("sum {s:e} exceeds tolerance")));
        }
        Ok(Self(v))
    }

    /// Orthogonal projection of an arbitrary vector: subtracts the mean.
    pub fn project(v: &Array1<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("tangent projection input"));
        }
        let mean = v.sum() / v.len() as f64;
        Ok(Self(v.mapv(|x| x - mean)))
    }

    pub fn zero(n: usize) -> Self {
        Self(Array1::zeros(n))
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub(crate) fn from_raw(v: Array1<f64>) -> Self {
        debug_assert!(v.sum().abs() <= 1e-9, "raw tangent with row sum {}", v.sum());
        Self(v)
    }
}

/// Row-stochastic matrix with full support: the state of the coupled
/// replicator dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix(Array2<f64>);

impl AssignmentMatrix {
    /// Validates every row as a simplex point; `m >= 1`, `n >= 2`.
    pub fn new(w: Array2<f64>) -> Result<Self> {
        let (m, n) = w.dim();
        if m < 1 || n < 2 {
            return Err(AfError::InvalidAssignment(format!(
                "need m >= 1 nodes and n >= 2 labels, got {m} x {n}"
            )));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("assignment matrix"));
        }
        for (i, row) in w.axis_iter(Axis(0)).enumerate() {
            if let Some(&bad) = row.iter().find(|&&x| x <= 0.0) {
                return Err(AfError::InvalidAssignment(format!(
                    "row {i} entry {bad:e} is not positive"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(AfError::InvalidAssignment(format!(
                    "row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self(w))
    }

    /// The barycenter: every entry `1/n`.
    pub fn barycenter(m: usize, n: usize) -> Self {
        assert!(m >= 1 && n >= 2, "need m >= 1 and n >= 2");
        Self(Array2::from_elem((m, n), 1.0 / n as f64))
    }

    /// Clamps entries up to [`POSITIVITY_FLOOR`], renormalizes every row and
    /// returns the number of clamped entries. This is the repair step used by
    /// integrators working in the flat embedding.
    pub fn repair(mut w: Array2<f64>) -> Result<(Self, usize)> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("assignment repair input"));
        }
        let mut floored = 0usize;
        for mut row in w.axis_iter_mut(Axis(0)) {
            for x in row.iter_mut() {
                if *x < POSITIVITY_FLOOR {
                    *x = POSITIVITY_FLOOR;
                    floored += 1;
                }
            }
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        Ok((Self(w), floored))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    /// Smallest entry; relevant for the division guards.
    pub fn min_entry(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `min_i max_j W_ij`: the labeling is considered converged once this
    /// reaches `1 - eps`.
    pub fn min_max_entry(&self) -> f64 {
        self.0
            .axis_iter(Axis(0))
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn from_raw(w: Array2<f64>) -> Self {
        Self(w)
    }
}

/// Matrix with zero row sums, an element of the tangent space of the
/// assignment manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix(Array2<f64>);

impl TangentMatrix {
    /// Validates `|row sum| <= ROW_SUM_TOL` for every row.
    pub fn new(v: Array2<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("tangent matrix"));
        }
        for (i, row) in v.axis_iter(Axis(0)).enumerate() {
            let s = row.sum();
            if s.abs() > ROW_SUM_TOL {
                return Err(AfError::InvalidTangent(format!(
                    "row {i} sums to {s:e}, exceeding tolerance"
                )));
            }
        }
        Ok(Self(v))
    }

    pub fn zero(m: usize, n: usize) -> Self {
        Self(Array2::zeros((m, n)))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub(crate) fn from_raw(v: Array2<f64>) -> Self {
        #[cfg(debug_assertions)]
        for row in v.axis_iter(Axis(0)) {
            debug_assert!(row.sum().abs() <= 1e-9, "raw tangent row sum {}", row.sum());
        }
        Self(v)
    }
}

/// Subtracts the row mean in place; the rowwise orthogonal projection.
pub(crate) fn project_rows_inplace(a: &mut Array2<f64>) {
    let n = a.ncols() as f64;
    for mut row in a.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / n;
        row.mapv_inplace(|x| x - mean);
    }
}

/// Orthogonal projection onto the tangent space: each output row is
/// `A_i - mean(A_i) * 1`. Idempotent.
pub fn project_t0(a: &Array2<f64>) -> Result<TangentMatrix> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(AfError::NonFinite("projection input"));
    }
    let mut out = a.clone();
    project_rows_inplace(&mut out);
    Ok(TangentMatrix::from_raw(out))
}

/// The replicator matrix `R_p = Diag(p) - p p^T`. Symmetric, kernel spanned
/// by the all-ones vector, and `R_p = R_p P = P R_p` for the orthogonal
/// projection `P` onto the tangent space.
pub fn replicator_matrix(p: &SimplexPoint) -> Array2<f64> {
    let p = p.as_array();
    let n = p.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let d = if i == j { p[i] } else { 0.0 };
        d - p[i] * p[j]
    })
}

/// One row of the replicator map: `R_p a = p ⊙ a - <p, a> p`, without forming
/// the matrix.
pub(crate) fn replicator_row(p: ArrayView1<f64>, a: ArrayView1<f64>) -> Array1<f64> {
    let pa = p.dot(&a);
    let mut out = Array1::zeros(p.len());
    for (o, (&pi, &ai)) in out.iter_mut().zip(p.iter().zip(a.iter())) {
        *o = pi * (ai - pa);
    }
    out
}

pub(crate) fn apply_replicator_raw(w: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(w.raw_dim());
    for ((mut orow, wrow), arow) in out
        .axis_iter_mut(Axis(0))
        .zip(w.axis_iter(Axis(0)))
        .zip(a.axis_iter(Axis(0)))
    {
        orow.assign(&replicator_row(wrow, arow));
    }
    out
}

/// The replicator map: row `i` of the result is `R_{W_i} A_i`. Maps arbitrary
/// matrices into the tangent space and is self-adjoint with respect to the
/// matrix inner product.
pub fn apply_replicator(w: &AssignmentMatrix, a: &Array2<f64>) -> Result<TangentMatrix> {
    if w.as_array().dim() != a.dim() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{:?}", w.as_array().dim()),
            got: format!("{:?}", a.dim()),
        });
    }
    Ok(TangentMatrix::from_raw(apply_replicator_raw(w.as_array(), a)))
}

/// Inverse of the replicator map restricted to the tangent space: the
/// componentwise quotient `U / W` followed by the orthogonal projection.
///
/// Entries of `W` below [`DIVISION_GUARD`] are refused.
pub fn inverse_replicator(w: &AssignmentMatrix, u: &TangentMatrix) -> Result<TangentMatrix> {
    if w.as_array().dim() != u.as_array().dim() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{:?}", w.as_array().dim()),
            got: format!("{:?}", u.as_array().dim()),
        });
    }
    let min = w.min_entry();
    if min < DIVISION_GUARD {
        return Err(AfError::Singular { value: min, guard: DIVISION_GUARD });
    }
    let mut q = u.as_array() / w.as_array();
    project_rows_inplace(&mut q);
    Ok(TangentMatrix::from_raw(q))
}

/// The Fisher-Rao product metric `g_W(U, V) = sum_ij U_ij V_ij / W_ij` on
/// tangents. Symmetric and positive definite on the tangent space.
pub fn fisher_rao_inner(
    w: &AssignmentMatrix,
    u: &TangentMatrix,
    v: &TangentMatrix,
) -> Result<f64> {
    let dim = w.as_array().dim();
    if dim != u.as_array().dim() || dim != v.as_array().dim() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{dim:?}"),
            got: format!("{:?} / {:?}", u.as_array().dim(), v.as_array().dim()),
        });
    }
    let min = w.min_entry();
    if min < DIVISION_GUARD {
        return Err(AfError::Singular { value: min, guard: DIVISION_GUARD });
    }
    Ok(fisher_rao_inner_raw(w.as_array(), u.as_array(), v.as_array()))
}

pub(crate) fn fisher_rao_inner_raw(w: &Array2<f64>, u: &Array2<f64>, v: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for ((&wi, &ui), &vi) in w.iter().zip(u.iter()).zip(v.iter()) {
        acc += ui * vi / wi;
    }
    acc
}

/// Squared Fisher-Rao norm of a tangent.
pub fn fisher_rao_norm_sq(w: &AssignmentMatrix, u: &TangentMatrix) -> Result<f64> {
    fisher_rao_inner(w, u, u)
}

/// Frobenius inner product of two matrices.
pub fn frobenius_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frobenius_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The lifting map `(W ⊙ e^V) / <W, e^V>`, applied rowwise.
///
/// `v` need not have zero row sums: the normalization cancels constants added
/// per row. Overflow is avoided by subtracting the per-row maximum before
/// exponentiation. Entries that underflow the positivity floor are clamped
/// and the affected row renormalized.
pub fn lift(w: &AssignmentMatrix, v: &Array2<f64>) -> Result<AssignmentMatrix> {
    lift_counted(w, v).map(|(m, _)| m)
}

/// Like [`lift`], additionally reporting how many entries hit the positivity
/// floor.
pub fn lift_counted(w: &AssignmentMatrix, v: &Array2<f64>) -> Result<(AssignmentMatrix, usize)> {
    if w.as_array().dim() != v.dim() {
        return Err(AfError::ShapeMismatch {
            expected: format!("{:?}", w.as_array().dim()),
            got: format!("{:?}", v.dim()),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(AfError::NonFinite("lift direction"));
    }
    let mut out = Array2::zeros(v.raw_dim());
    let mut floored = 0usize;
    for ((mut orow, wrow), vrow) in out
        .axis_iter_mut(Axis(0))
        .zip(w.as_array().axis_iter(Axis(0)))
        .zip(v.axis_iter(Axis(0)))
    {
        let vmax = vrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, (&wi, &vi)) in orow.iter_mut().zip(wrow.iter().zip(vrow.iter())) {
            *o = wi * (vi - vmax).exp();
            sum += *o;
        }
        orow.mapv_inplace(|x| x / sum);
        let row_floored = orow.iter().filter(|&&x| x < POSITIVITY_FLOOR).count();
        if row_floored > 0 {
            floored += row_floored;
            orow.mapv_inplace(|x| x.max(POSITIVITY_FLOOR));
            let s = orow.sum();
            orow.mapv_inplace(|x| x / s);
        }
    }
    Ok((AssignmentMatrix::from_raw(out), floored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn random_state(rng: &mut ChaCha8Rng, m: usize, n: usize) -> AssignmentMatrix {
        let mut w = Array2::from_shape_fn((m, n), |_| 0.05 + rng.random::<f64>());
        for mut row in w.axis_iter_mut(Axis(0)) {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        AssignmentMatrix::new(w).unwrap()
    }

    fn random_tangent(rng: &mut ChaCha8Rng, m: usize, n: usize) -> TangentMatrix {
        let a = Array2::from_shape_fn((m, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        project_t0(&a).unwrap()
    }

    #[test]
    fn project_kills_constant_rows() {
        let a = Array2::from_elem((3, 4), 1.0);
        let t = project_t0(&a).unwrap();
        assert!(t.norm_frobenius() <= 1e-12);
    }

    #[test]
    fn project_subtracts_mean() {
        let a = array![[1.0, 0.0]];
        let t = project_t0(&a).unwrap();
        assert_eq!(t.as_array(), &array![[0.5, -0.5]]);
    }

    #[test]
    fn project_is_idempotent() {
        let mut r = rng();
        for _ in 0..20 {
            let a = Array2::from_shape_fn((4, 5), |_| r.random::<f64>() * 4.0 - 2.0);
            let once = project_t0(&a).unwrap();
            let twice = project_t0(once.as_array()).unwrap();
            let diff = once.as_array() - twice.as_array();
            assert!(frobenius_norm(&diff) <= 1e-12);
            for row in once.as_array().axis_iter(Axis(0)) {
                assert!(row.sum().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn project_rejects_non_finite() {
        let a = array![[f64::NAN, 0.0]];
        assert!(matches!(project_t0(&a), Err(AfError::NonFinite(_))));
    }

    #[test]
    fn replicator_matrix_half_half() {
        let p = SimplexPoint::new(array![0.5, 0.5]).unwrap();
        let r = replicator_matrix(&p);
        let expect = array![[0.25, -0.25], [-0.25, 0.25]];
        assert_eq!(r, expect);
    }

    #[test]
    fn replicator_matrix_barycenter_three() {
        let p = SimplexPoint::uniform(3);
        let r = replicator_matrix(&p);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 / 9.0 } else { -1.0 / 9.0 };
                assert!((r[(i, j)] - expect).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn replicator_kernel_is_constants() {
        let mut r = rng();
        for _ in 0..20 {
            let w = random_state(&mut r, 1, 5);
            let p = SimplexPoint::new(w.row(0).to_owned()).unwrap();
            let rp = replicator_matrix(&p);
            let ones = Array1::from_elem(5, 1.0);
            let img = rp.dot(&ones);
            assert!(img.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12);
        }
    }

    #[test]
    fn replicator_projection_identities() {
        // R_p = R_p P = P R_p with P the orthogonal projection.
        let mut r = rng();
        let n = 4;
        let p_t0 = Array2::from_shape_fn((n, n), |(i, j)| {
            (if i == j { 1.0 } else { 0.0 }) - 1.0 / n as f64
        });
        for _ in 0..20 {
            let w = random_state(&mut r, 1, n);
            let p = SimplexPoint::new(w.row(0).to_owned()).unwrap();
            let rp = replicator_matrix(&p);
            let a = &rp - &rp.dot(&p_t0);
            let b = &rp - &p_t0.dot(&rp);
            assert!(frobenius_norm(&a) <= 1e-12);
            assert!(frobenius_norm(&b) <= 1e-12);
        }
    }

    #[test]
    fn apply_replicator_kills_constant_rows() {
        let mut r = rng();
        let w = random_state(&mut r, 3, 4);
        let a = Array2::from_shape_fn((3, 4), |(i, _)| i as f64 + 1.0);
        let t = apply_replicator(&w, &a).unwrap();
        assert!(t.norm_frobenius() <= 1e-12);
    }

    #[test]
    fn apply_replicator_matches_dense_route() {
        // Rowwise vectorized form against the explicit matrix product.
        let mut r = rng();
        for _ in 0..10 {
            let w = random_state(&mut r, 3, 4);
            let a = Array2::from_shape_fn((3, 4), |_| r.random::<f64>() * 2.0 - 1.0);
            let fast = apply_replicator(&w, &a).unwrap();
            for i in 0..3 {
                let p = SimplexPoint::new(w.row(i).to_owned()).unwrap();
                let dense = replicator_matrix(&p).dot(&a.row(i).to_owned());
                for j in 0..4 {
                    assert!((fast.as_array()[(i, j)] - dense[j]).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn apply_replicator_barycenter_oracle() {
        // At the barycenter the row image is f/n - mean(f)/n * 1.
        let w = AssignmentMatrix::barycenter(2, 4);
        let mut r = rng();
        let a = Array2::from_shape_fn((2, 4), |_| r.random::<f64>() * 3.0);
        let t = apply_replicator(&w, &a).unwrap();
        for i in 0..2 {
            let mean = a.row(i).sum() / 4.0;
            for j in 0..4 {
                let expect = a[(i, j)] / 4.0 - mean / 4.0;
                assert!((t.as_array()[(i, j)] - expect).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn apply_replicator_self_adjoint() {
        let mut r = rng();
        for _ in 0..20 {
            let w = random_state(&mut r, 3, 4);
            let a = Array2::from_shape_fn((3, 4), |_| r.random::<f64>() * 2.0 - 1.0);
            let b = Array2::from_shape_fn((3, 4), |_| r.random::<f64>() * 2.0 - 1.0);
            let ra = apply_replicator(&w, &a).unwrap();
            let rb = apply_replicator(&w, &b).unwrap();
            let lhs = frobenius_inner(&a, rb.as_array());
            let rhs = frobenius_inner(ra.as_array(), &b);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn apply_replicator_shape_mismatch() {
        let w = AssignmentMatrix::barycenter(2, 3);
        let a = Array2::zeros((3, 3));
        assert!(matches!(
            apply_replicator(&w, &a),
            Err(AfError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn inverse_replicator_zero() {
        let w = AssignmentMatrix::barycenter(2, 3);
        let u = TangentMatrix::zero(2, 3);
        let out = inverse_replicator(&w, &u).unwrap();
        assert!(out.norm_frobenius() == 0.0);
    }

    #[test]
    fn inverse_replicator_barycenter_scales() {
        // Division by 1/n then projection: n * U for U already tangent.
        let w = AssignmentMatrix::barycenter(1, 2);
        let u = TangentMatrix::new(array![[0.3, -0.3]]).unwrap();
        let out = inverse_replicator(&w, &u).unwrap();
        let expect = array![[0.6, -0.6]];
        let diff = out.as_array() - &expect;
        assert!(frobenius_norm(&diff) <= 1e-14);
    }

    #[test]
    fn inverse_replicator_roundtrips() {
        let mut r = rng();
        for _ in 0..20 {
            let w = random_state(&mut r, 3, 5);
            let u = random_tangent(&mut r, 3, 5);
            let inv = inverse_replicator(&w, &u).unwrap();
            let back = apply_replicator(&w, inv.as_array()).unwrap();
            let scale = u.norm_frobenius().max(1e-30);
            let diff = back.as_array() - u.as_array();
            assert!(frobenius_norm(&diff) / scale <= 1e-10);

            let fwd = apply_replicator(&w, u.as_array()).unwrap();
            let back2 = inverse_replicator(&w, &fwd).unwrap();
            let diff2 = back2.as_array() - u.as_array();
            assert!(frobenius_norm(&diff2) / scale <= 1e-10);
        }
    }

    #[test]
    fn inverse_replicator_guards_tiny_entries() {
        let eps = 1e-16;
        let w = AssignmentMatrix::new(array![[eps, 1.0 - eps]]).unwrap();
        let u = TangentMatrix::new(array![[0.1, -0.1]]).unwrap();
        assert!(matches!(
            inverse_replicator(&w, &u),
            Err(AfError::Singular { .. })
        ));
    }

    #[test]
    fn fisher_rao_positive_definite() {
        let mut r = rng();
        for _ in 0..20 {
            let w = random_state(&mut r, 2, 4);
            let u = random_tangent(&mut r, 2, 4);
            if u.norm_frobenius() > 1e-12 {
                assert!(fisher_rao_norm_sq(&w, &u).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn fisher_rao_metric_bridge() {
        // g_W(R_W[U], V) equals the matrix inner product <U, V>.
        let mut r = rng();
        for _ in 0..50 {
            let w = random_state(&mut r, 3, 4);
            let u = random_tangent(&mut r, 3, 4);
            let v = random_tangent(&mut r, 3, 4);
            let ru = apply_replicator(&w, u.as_array()).unwrap();
            let lhs = fisher_rao_inner(&w, &ru, &v).unwrap();
            let rhs = frobenius_inner(u.as_array(), v.as_array());
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn fisher_rao_at_barycenter_is_scaled_frobenius() {
        let mut r = rng();
        let w = AssignmentMatrix::barycenter(3, 5);
        let u = random_tangent(&mut r, 3, 5);
        let v = random_tangent(&mut r, 3, 5);
        let g = fisher_rao_inner(&w, &u, &v).unwrap();
        let f = 5.0 * frobenius_inner(u.as_array(), v.as_array());
        assert!((g - f).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn lift_identity_at_zero() {
        let mut r = rng();
        let w = random_state(&mut r, 2, 4);
        let v = Array2::zeros((2, 4));
        let out = lift(&w, &v).unwrap();
        let diff = out.as_array() - w.as_array();
        assert!(frobenius_norm(&diff) <= 1e-15);
    }

    #[test]
    fn lift_closed_form_example() {
        let w = AssignmentMatrix::new(array![[0.5, 0.5]]).unwrap();
        let h = 0.5 * 3.0_f64.ln();
        let v = array![[h, -h]];
        let out = lift(&w, &v).unwrap();
        assert!((out.as_array()[(0, 0)] - 0.75).abs() <= 1e-15);
        assert!((out.as_array()[(0, 1)] - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn lift_shift_invariance() {
        let mut r = rng();
        let w = random_state(&mut r, 3, 4);
        let v = Array2::from_shape_fn((3, 4), |_| r.random::<f64>() * 2.0 - 1.0);
        let shifted = &v + 5.0;
        let a = lift(&w, &v).unwrap();
        let b = lift(&w, &shifted).unwrap();
        let diff = a.as_array() - b.as_array();
        assert!(frobenius_norm(&diff) <= 1e-12);
    }

    #[test]
    fn lift_survives_large_directions() {
        let w = AssignmentMatrix::barycenter(1, 3);
        let v = array![[1e4, 0.0, -1e4]];
        let out = lift(&w, &v).unwrap();
        assert!(out.as_array().iter().all(|x| x.is_finite() && *x > 0.0));
        assert!((out.as_array().row(0).sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn repair_counts_floored_entries() {
        let raw = array![[1.0, -0.1, 0.1], [0.2, 0.3, 0.5]];
        let (w, floored) = AssignmentMatrix::repair(raw).unwrap();
        assert_eq!(floored, 1);
        for row in w.as_array().axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(SimplexPoint::new(array![0.5, 0.4]).is_err());
        assert!(SimplexPoint::new(array![1.5, -0.5]).is_err());
        assert!(SimplexPoint::new(array![1.0]).is_err());
        assert!(AssignmentMatrix::new(Array2::from_elem((0, 3), 0.0)).is_err());
        assert!(AssignmentMatrix::new(Array2::from_elem((2, 1), 1.0)).is_err());
        assert!(TangentMatrix::new(array![[0.5, 0.0]]).is_err());
        assert!(TangentVector::new(array![0.5, -0.2]).is_err());
    }

    #[test]
    fn barycenter_entries() {
        let w = AssignmentMatrix::barycenter(2, 4);
        assert!(w.as_array().iter().all(|&x| x == 0.25));
    }
}
