//! Affinity maps driving the coupled replicator dynamics.
//!
//! An affinity map assigns each node a vector of label affinities, coupling
//! nodes through neighborhoods. Three maps ship with the crate: the averaging
//! affinity `F(S) = Omega S` of the S-flow, a general per-row linear affinity
//! `(F[W])_i = M W_i`, and the rank-one map `p -> p^1 e_2` that violates the
//! admissibility condition for three or more labels.
//!
//! The admissibility condition itself is exposed as [`condition_operator`]:
//! an affinity is admissible at `W` exactly when
//! `R_W [(dF - dF*)(R_W[F(W)])]` vanishes.

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{AfError, Result};
use crate::manifold::{
    apply_replicator, frobenius_inner, project_rows_inplace, project_t0, AssignmentMatrix,
    TangentMatrix, ROW_SUM_TOL,
};

/// Tolerance for accepting a declared symmetry of an averaging matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Bundle of an affinity `F`, its differential `dF|_W` and the adjoint
/// `dF|*_W` with respect to the matrix inner product.
///
/// All methods work on raw matrices so integrators can evaluate intermediate
/// stages slightly off the manifold; rows of `w` are not required to be
/// normalized here. Implementations are immutable after construction and the
/// methods are pure, so values can be shared across threads freely.
pub trait AffinityMap: Send + Sync {
    /// `F(W)`.
    fn eval(&self, w: &Array2<f64>) -> Array2<f64>;

    /// `dF|_W[V]`, linear in `v`.
    fn diff(&self, w: &Array2<f64>, v: &Array2<f64>) -> Array2<f64>;

    /// `dF|*_W[A]`, the adjoint of the differential. The result is returned
    /// already projected into the tangent space (the codomain of the
    /// adjoint); downstream compositions with the replicator map absorb the
    /// projection either way.
    fn adjoint_diff(&self, w: &Array2<f64>, a: &Array2<f64>) -> Array2<f64>;
}

/// The S-flow affinity `F(S) = Omega S` for a nonnegative row-stochastic
/// averaging matrix.
#[derive(Debug, Clone)]
pub struct OmegaAffinity {
    omega: Array2<f64>,
    symmetric: bool,
}

impl OmegaAffinity {
    /// Validates nonnegativity and unit row sums; detects symmetry.
    pub fn new(omega: Array2<f64>) -> Result<Self> {
        let (m, mm) = omega.dim();
        if m != mm {
            return Err(AfError::InvalidOmega(format!("must be square, got {m} x {mm}")));
        }
        if omega.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("averaging matrix"));
        }
        if let Some(&bad) = omega.iter().find(|&&x| x < 0.0) {
            return Err(AfError::InvalidOmega(format!("negative entry {bad:e}")));
        }
        for (i, row) in omega.axis_iter(Axis(0)).enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(AfError::InvalidOmega(format!("row {i} sums to {s}, not 1")));
            }
        }
        let symmetric = symmetry_defect(&omega) <= SYMMETRY_TOL;
        Ok(Self { omega, symmetric })
    }

    /// Like [`OmegaAffinity::new`], additionally verifying a declared
    /// symmetry claim. A declaration of symmetry that the matrix does not
    /// satisfy is a hard error.
    pub fn new_declared(omega: Array2<f64>, declared_symmetric: bool) -> Result<Self> {
        let defect = symmetry_defect(&omega);
        let out = Self::new(omega)?;
        if declared_symmetric && defect > SYMMETRY_TOL {
            return Err(AfError::InvalidOmega(format!(
                "declared symmetric but max |Omega - Omega^T| = {defect:e}"
            )));
        }
        Ok(out)
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn node_count(&self) -> usize {
        self.omega.nrows()
    }

    /// Whether `Omega = Omega^T` holds to [`SYMMETRY_TOL`]. Symmetry makes
    /// the affinity admissible and the S-flow a Riemannian gradient ascent.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

fn symmetry_defect(a: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

impl AffinityMap for OmegaAffinity {
    fn eval(&self, w: &Array2<f64>) -> Array2<f64> {
        self.omega.dot(w)
    }

    fn diff(&self, _w: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        self.omega.dot(v)
    }

    fn adjoint_diff(&self, _w: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        let mut out = self.omega.t().dot(a);
        project_rows_inplace(&mut out);
        out
    }
}

/// Per-row linear affinity `(F[W])_i = M W_i` with a fixed `n x n` matrix.
#[derive(Debug, Clone)]
pub struct RowLinearAffinity {
    mat: Array2<f64>,
}

impl RowLinearAffinity {
    pub fn new(mat: Array2<f64>) -> Result<Self> {
        let (n, nn) = mat.dim();
        if n != nn {
            return Err(AfError::InvalidConfig(format!(
                "row-linear affinity matrix must be square, got {n} x {nn}"
            )));
        }
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("row-linear affinity matrix"));
        }
        Ok(Self { mat })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.mat
    }
}

impl AffinityMap for RowLinearAffinity {
    fn eval(&self, w: &Array2<f64>) -> Array2<f64> {
        // rows (M w_i)^T stacked: W M^T
        w.dot(&self.mat.t())
    }

    fn diff(&self, _w: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        v.dot(&self.mat.t())
    }

    fn adjoint_diff(&self, _w: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        // <A, V M^T> = <A M, V>
        let mut out = a.dot(&self.mat);
        project_rows_inplace(&mut out);
        out
    }
}

/// The rank-one affinity `p -> p^1 e_2` (per row), which fails the
/// admissibility condition everywhere for `n >= 3` labels. Along it the first
/// coordinate of the condition operator is `-(p^1)^2 p^2 (1 - p^1 - p^2)` on
/// each row.
#[derive(Debug, Clone)]
pub struct CounterexampleAffinity {
    inner: RowLinearAffinity,
    n: usize,
}

impl CounterexampleAffinity {
    /// Rejects `n < 3`: with two labels every affinity is admissible, so
    /// there is nothing to demonstrate.
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(AfError::CounterexampleLabels(n));
        }
        let mut mat = Array2::zeros((n, n));
        mat[(1, 0)] = 1.0; // e_2 e_1^T
        Ok(Self { inner: RowLinearAffinity::new(mat).expect("finite by construction"), n })
    }

    pub fn label_count(&self) -> usize {
        self.n
    }
}

impl AffinityMap for CounterexampleAffinity {
    fn eval(&self, w: &Array2<f64>) -> Array2<f64> {
        self.inner.eval(w)
    }

    fn diff(&self, w: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        self.inner.diff(w, v)
    }

    fn adjoint_diff(&self, w: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        self.inner.adjoint_diff(w, a)
    }
}

/// The admissibility defect `R_W [(dF|_W - dF|*_W)(R_W[F(W)])]`.
///
/// Zero (within solver tolerance) exactly when the affinity is admissible at
/// `W`, i.e. when solutions of the flow through `W` are critical points of
/// the action functional.
pub fn condition_operator(f: &dyn AffinityMap, w: &AssignmentMatrix) -> Result<TangentMatrix> {
    let fw = f.eval(w.as_array());
    let u = apply_replicator(w, &fw)?;
    let forward = f.diff(w.as_array(), u.as_array());
    let adjoint = f.adjoint_diff(w.as_array(), u.as_array());
    apply_replicator(w, &(forward - adjoint))
}

/// Maximum normalized adjoint discrepancy
/// `|<dF*[A], V> - <A, dF[V]>| / (1 + |<A, dF[V]>|)` over random pairs.
///
/// The adjoint returns tangent-projected values, so `V` is drawn from the
/// tangent space while `A` ranges over arbitrary matrices.
pub fn adjoint_selfcheck<R: Rng + ?Sized>(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
    trials: usize,
    rng: &mut R,
) -> f64 {
    assert!(trials >= 1, "need at least one trial");
    let (m, n) = w.as_array().dim();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a = Array2::from_shape_fn((m, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let v_raw = Array2::from_shape_fn((m, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let v = project_t0(&v_raw).expect("finite");
        let lhs = frobenius_inner(&f.adjoint_diff(w.as_array(), &a), v.as_array());
        let rhs = frobenius_inner(&a, &f.diff(w.as_array(), v.as_array()));
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::frobenius_norm;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn random_state(rng: &mut ChaCha8Rng, m: usize, n: usize) -> AssignmentMatrix {
        let mut w = Array2::from_shape_fn((m, n), |_| 0.05 + rng.random::<f64>());
        for mut row in w.axis_iter_mut(Axis(0)) {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        AssignmentMatrix::new(w).unwrap()
    }

    /// Symmetric row-stochastic averaging matrix on a cycle.
    fn cycle_omega(m: usize) -> OmegaAffinity {
        let mut o = Array2::zeros((m, m));
        for i in 0..m {
            o[(i, i)] += 1.0 / 3.0;
            o[(i, (i + 1) % m)] += 1.0 / 3.0;
            o[(i, (i + m - 1) % m)] += 1.0 / 3.0;
        }
        OmegaAffinity::new(o).unwrap()
    }

    #[test]
    fn omega_validation() {
        assert!(OmegaAffinity::new(array![[0.5, 0.6], [0.5, 0.5]]).is_err());
        assert!(OmegaAffinity::new(array![[1.1, -0.1], [0.5, 0.5]]).is_err());
        assert!(OmegaAffinity::new(array![[1.0, 0.0], [0.0, 1.0]]).is_ok());
    }

    #[test]
    fn omega_symmetry_declaration() {
        let asym = array![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        assert!(OmegaAffinity::new_declared(asym.clone(), false).is_ok());
        assert!(matches!(
            OmegaAffinity::new_declared(asym, true),
            Err(AfError::InvalidOmega(_))
        ));
        let sym = array![[0.5, 0.5], [0.5, 0.5]];
        let o = OmegaAffinity::new_declared(sym, true).unwrap();
        assert!(o.is_symmetric());
    }

    #[test]
    fn omega_fixes_barycenter() {
        let o = cycle_omega(4);
        let bary = AssignmentMatrix::barycenter(4, 3);
        let fw = o.eval(bary.as_array());
        let diff = &fw - bary.as_array();
        assert!(frobenius_norm(&diff) <= 1e-15);
    }

    #[test]
    fn omega_identity_is_identity() {
        let o = OmegaAffinity::new(Array2::eye(3)).unwrap();
        let mut r = rng();
        let w = random_state(&mut r, 3, 4);
        let fw = o.eval(w.as_array());
        assert_eq!(&fw, w.as_array());
    }

    #[test]
    fn omega_hand_product() {
        let o = OmegaAffinity::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let s = array![[0.5, 0.5], [0.75, 0.25]];
        let fs = o.eval(&s);
        for i in 0..2 {
            assert!((fs[(i, 0)] - 0.625).abs() <= 1e-15);
            assert!((fs[(i, 1)] - 0.375).abs() <= 1e-15);
        }
    }

    #[test]
    fn counterexample_needs_three_labels() {
        assert!(matches!(
            CounterexampleAffinity::new(2),
            Err(AfError::CounterexampleLabels(2))
        ));
        assert!(CounterexampleAffinity::new(3).is_ok());
    }

    #[test]
    fn counterexample_eval_examples() {
        let f = CounterexampleAffinity::new(3).unwrap();
        let near_vertex = array![[0.98, 0.01, 0.01]];
        let out = f.eval(&near_vertex);
        assert_eq!(out, array![[0.0, 0.98, 0.0]]);
        let bary = AssignmentMatrix::barycenter(1, 3);
        let out = f.eval(bary.as_array());
        assert!((out[(0, 1)] - 1.0 / 3.0).abs() <= 1e-15);
        assert_eq!(out[(0, 0)], 0.0);
        assert_eq!(out[(0, 2)], 0.0);
    }

    #[test]
    fn adjoint_consistency_all_maps() {
        let mut r = rng();
        let w4 = random_state(&mut r, 4, 3);
        let omega = cycle_omega(4);
        assert!(adjoint_selfcheck(&omega, &w4, 30, &mut r) <= 1e-12);

        let m_sym = array![[1.0, 0.2, 0.0], [0.2, -0.5, 0.3], [0.0, 0.3, 2.0]];
        let f = RowLinearAffinity::new(m_sym).unwrap();
        assert!(adjoint_selfcheck(&f, &w4, 30, &mut r) <= 1e-12);

        let m_rand = Array2::from_shape_fn((3, 3), |_| r.random::<f64>() * 2.0 - 1.0);
        let f = RowLinearAffinity::new(m_rand).unwrap();
        assert!(adjoint_selfcheck(&f, &w4, 30, &mut r) <= 1e-12);

        let ce = CounterexampleAffinity::new(3).unwrap();
        assert!(adjoint_selfcheck(&ce, &w4, 30, &mut r) <= 1e-12);
    }

    /// Central finite differences of `eval` along tangent directions must
    /// reproduce `diff` for every shipped affinity.
    #[test]
    fn differential_matches_finite_differences() {
        let mut r = rng();
        let h = 1e-6;
        let maps: Vec<Box<dyn AffinityMap>> = vec![
            Box::new(cycle_omega(5)),
            Box::new(
                RowLinearAffinity::new(Array2::from_shape_fn((4, 4), |_| {
                    r.random::<f64>() * 2.0 - 1.0
                }))
                .unwrap(),
            ),
            Box::new(CounterexampleAffinity::new(4).unwrap()),
        ];
        for f in &maps {
            for _ in 0..10 {
                let (m, n) = (5, 4);
                let w = random_state(&mut r, m, n);
                let v_raw = Array2::from_shape_fn((m, n), |_| r.random::<f64>() * 2.0 - 1.0);
                let v = project_t0(&v_raw).unwrap();
                let plus = f.eval(&(w.as_array() + &(v.as_array() * h)));
                let minus = f.eval(&(w.as_array() - &(v.as_array() * h)));
                let fd = (&plus - &minus) / (2.0 * h);
                let an = f.diff(w.as_array(), v.as_array());
                let scale = frobenius_norm(&an).max(1e-12);
                assert!(frobenius_norm(&(&fd - &an)) / scale <= 1e-5);
            }
        }
    }

    #[test]
    fn condition_vanishes_for_symmetric_omega() {
        let mut r = rng();
        let omega = cycle_omega(6);
        for _ in 0..100 {
            let n = r.random_range(2..=8);
            let w = random_state(&mut r, 6, n);
            let c = condition_operator(&omega, &w).unwrap();
            assert!(c.norm_frobenius() <= 1e-10);
        }
    }

    #[test]
    fn condition_counterexample_closed_form() {
        // First coordinate of R_p (F - F^T) R_p F p is -(p1)^2 p2 (1 - p1 - p2).
        let mut r = rng();
        for n in 3..=6 {
            let f = CounterexampleAffinity::new(n).unwrap();
            for _ in 0..100 {
                let w = random_state(&mut r, 1, n);
                let c = condition_operator(&f, &w).unwrap();
                let p1 = w.as_array()[(0, 0)];
                let p2 = w.as_array()[(0, 1)];
                let expect = -(p1 * p1) * p2 * (1.0 - p1 - p2);
                assert!((c.as_array()[(0, 0)] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn condition_counterexample_dense_oracle() {
        // Full vector against the brute-force matrix product
        // R_p (F - F^T) R_p F p, at the pinned dyadic point and on random
        // points for several label counts.
        use crate::manifold::{replicator_matrix, SimplexPoint};
        let dense = |n: usize, p_arr: &ndarray::Array1<f64>| {
            let p = SimplexPoint::new(p_arr.clone()).unwrap();
            let rp = replicator_matrix(&p);
            let mut fmat = Array2::<f64>::zeros((n, n));
            fmat[(1, 0)] = 1.0;
            let skew = &fmat - &fmat.t();
            rp.dot(&skew).dot(&rp).dot(&fmat).dot(p_arr)
        };

        let f = CounterexampleAffinity::new(3).unwrap();
        let p_arr = array![0.25, 0.25, 0.5];
        let w = AssignmentMatrix::new(p_arr.clone().insert_axis(Axis(0))).unwrap();
        let c = condition_operator(&f, &w).unwrap();
        let oracle = dense(3, &p_arr);
        for j in 0..3 {
            assert!((c.as_array()[(0, j)] - oracle[j]).abs() <= 1e-15);
        }
        // -(1/4)^2 (1/4) (1/2) = -1/128
        assert!((c.as_array()[(0, 0)] + 1.0 / 128.0).abs() <= 1e-15);

        let mut r = rng();
        for n in 3..=6 {
            let f = CounterexampleAffinity::new(n).unwrap();
            for _ in 0..25 {
                let w = random_state(&mut r, 1, n);
                let c = condition_operator(&f, &w).unwrap();
                let oracle = dense(n, &w.row(0).to_owned());
                for j in 0..n {
                    assert!((c.as_array()[(0, j)] - oracle[j]).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn condition_zero_when_affinity_constant_at_barycenter() {
        // The inner replicator map kills constant rows before dF ever acts.
        let omega = cycle_omega(4);
        let bary = AssignmentMatrix::barycenter(4, 3);
        let c = condition_operator(&omega, &bary).unwrap();
        assert!(c.norm_frobenius() <= 1e-15);
    }

    #[test]
    fn two_labels_make_every_affinity_admissible() {
        let mut r = rng();
        for _ in 0..50 {
            let m = Array2::from_shape_fn((2, 2), |_| r.random::<f64>() * 4.0 - 2.0);
            let f = RowLinearAffinity::new(m).unwrap();
            let w = random_state(&mut r, 3, 2);
            let c = condition_operator(&f, &w).unwrap();
            assert!(c.norm_frobenius() <= 1e-10);
        }
    }
}
