//! Metric data labeling via the S-flow.
//!
//! The pipeline: build a grid graph and a nonnegative row-stochastic
//! averaging matrix supported on its neighborhoods, turn data into a distance
//! matrix `D`, initialize `S(0) = lift(barycenter, -Omega D)` at the
//! barycenter, evolve the coupled system `dS/dt = R_S[Omega S]`,
//! `dW/dt = R_W[S]`, and read labels off the rows of `W`. The module also
//! analyzes the critical set of the averaging affinity: the equilibria form
//! the affine slice `barycenter + Sigma` with `Sigma = {V tangent : Omega V =
//! 0}`, whose dimension equals `(n-1) dim ker(Omega)`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityMap, OmegaAffinity};
use crate::error::{AfError, Result};
use crate::integrate::{IntegratorConfig, Method, Trajectory, FLOOR_STORM_FRACTION};
use crate::manifold::{
    apply_replicator_raw, frobenius_inner, lift_counted, project_t0, AssignmentMatrix,
};

/// Dense rank/nullspace computations refuse problems with `m * n` beyond this.
pub const MANE_SIZE_CAP: usize = 4096;

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    #[default]
    Torus,
    Clamped,
}

/// Regular grid graph with Manhattan-ball neighborhoods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridGraph {
    pub height: usize,
    pub width: usize,
    /// Manhattan radius of the neighborhoods; radius 1 is the 4-neighborhood
    /// plus the center.
    pub radius: usize,
    pub boundary: BoundaryMode,
}

impl GridGraph {
    pub fn new(height: usize, width: usize, radius: usize, boundary: BoundaryMode) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(AfError::InvalidConfig(format!(
                "grid must be nonempty, got {height} x {width}"
            )));
        }
        Ok(Self { height, width, radius, boundary })
    }

    pub fn node_count(&self) -> usize {
        self.height * self.width
    }

    pub fn node_index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Offsets `(dy, dx)` with `|dy| + |dx| <= radius` in lexicographic
    /// order. The center is always part of the neighborhood.
    pub fn offsets(radius: usize) -> Vec<(isize, isize)> {
        let r = radius as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dy.abs() + dx.abs() <= r {
                    out.push((dy, dx));
                }
            }
        }
        out
    }

    /// Maps an offset from `(row, col)` to a node index, wrapping on the
    /// torus and dropping out-of-range targets on clamped boundaries.
    fn target(&self, row: usize, col: usize, dy: isize, dx: isize) -> Option<usize> {
        let (h, w) = (self.height as isize, self.width as isize);
        let (mut y, mut x) = (row as isize + dy, col as isize + dx);
        match self.boundary {
            BoundaryMode::Torus => {
                y = y.rem_euclid(h);
                x = x.rem_euclid(w);
            }
            BoundaryMode::Clamped => {
                if y < 0 || y >= h || x < 0 || x >= w {
                    return None;
                }
            }
        }
        Some(self.node_index(y as usize, x as usize))
    }
}

/// Neighborhood weighting: uniform, or an explicit kernel over
/// [`GridGraph::offsets`] in the same order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaWeights {
    #[default]
    Uniform,
    Kernel(Vec<f64>),
}

/// Builds the averaging matrix of a grid graph. Weights falling off a clamped
/// boundary are dropped and the row renormalized, which keeps rows stochastic
/// but generally breaks symmetry near the boundary; on the torus with uniform
/// weights the result is a symmetric circulant.
pub fn build_omega(graph: &GridGraph, weights: &OmegaWeights) -> Result<OmegaAffinity> {
    let offsets = GridGraph::offsets(graph.radius);
    let kernel: Vec<f64> = match weights {
        OmegaWeights::Uniform => vec![1.0; offsets.len()],
        OmegaWeights::Kernel(k) => {
            if k.len() != offsets.len() {
                return Err(AfError::InvalidConfig(format!(
                    "kernel needs {} weights for radius {}, got {}",
                    offsets.len(),
                    graph.radius,
                    k.len()
                )));
            }
            if let Some(&bad) = k.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
                return Err(AfError::InvalidOmega(format!("kernel weight {bad} is invalid")));
            }
            let center = offsets.iter().position(|&(dy, dx)| dy == 0 && dx == 0).unwrap();
            if k[center] <= 0.0 {
                return Err(AfError::InvalidOmega(
                    "kernel must give the center node positive weight".into(),
                ));
            }
            k.clone()
        }
    };
    let m = graph.node_count();
    let mut omega = Array2::zeros((m, m));
    for row in 0..graph.height {
        for col in 0..graph.width {
            let i = graph.node_index(row, col);
            for (&(dy, dx), &wgt) in offsets.iter().zip(kernel.iter()) {
                if wgt == 0.0 {
                    continue;
                }
                if let Some(j) = graph.target(row, col, dy, dx) {
                    omega[(i, j)] += wgt;
                }
            }
            let mut r = omega.row_mut(i);
            let s = r.sum();
            if s <= 0.0 {
                return Err(AfError::InvalidOmega(format!("node {i} has zero total weight")));
            }
            r.mapv_inplace(|x| x / s);
        }
    }
    OmegaAffinity::new(omega)
}

/// Nonnegative distance matrix: entry `(i, j)` is the distance from datum `i`
/// to prototype `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(Array2<f64>);

impl DataMatrix {
    pub fn new(d: Array2<f64>) -> Result<Self> {
        if d.iter().any(|x| !x.is_finite()) {
            return Err(AfError::NonFinite("data matrix"));
        }
        if let Some(&bad) = d.iter().find(|&&x| x < 0.0) {
            return Err(AfError::InvalidConfig(format!("distance {bad} is negative")));
        }
        Ok(Self(d))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Deterministic synthetic labeling problem: a piecewise-constant label image
/// plus Gaussian feature noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub height: usize,
    pub width: usize,
    pub labels: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub data: DataMatrix,
    pub ground_truth: Vec<usize>,
}

/// Ground-truth pattern: horizontal bands of near-equal height.
pub fn band_label(row: usize, height: usize, labels: usize) -> usize {
    (row * labels) / height
}

/// Generates the dataset. Prototypes are the unit basis vectors of the
/// feature space, features are `e_label + sigma * z` with per-node Gaussian
/// noise, and distances are squared Euclidean. Noise is drawn from one
/// counter-based stream per node, so the result is independent of evaluation
/// order.
pub fn synth_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset> {
    if spec.labels < 2 {
        return Err(AfError::InvalidConfig(format!(
            "need at least 2 labels, got {}",
            spec.labels
        )));
    }
    if spec.height == 0 || spec.width == 0 {
        return Err(AfError::InvalidConfig("empty grid".into()));
    }
    if spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(AfError::InvalidConfig(format!(
            "noise sigma must be nonnegative, got {}",
            spec.noise_sigma
        )));
    }
    let m = spec.height * spec.width;
    let n = spec.labels;
    let mut gt = Vec::with_capacity(m);
    let mut d = Array2::zeros((m, n));
    for row in 0..spec.height {
        for col in 0..spec.width {
            let i = row * spec.width + col;
            let label = band_label(row, spec.height, spec.labels);
            gt.push(label);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let mut feature = Array1::zeros(n);
            feature[label] = 1.0;
            if spec.noise_sigma > 0.0 {
                for f in feature.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *f += spec.noise_sigma * z;
                }
            }
            for j in 0..n {
                let mut dist = 0.0;
                for k in 0..n {
                    let proto = if k == j { 1.0 } else { 0.0 };
                    let diff = feature[k] - proto;
                    dist += diff * diff;
                }
                d[(i, j)] = dist;
            }
        }
    }
    Ok(SyntheticDataset { data: DataMatrix::new(d)?, ground_truth: gt })
}

/// Everything the S-flow needs: graph, averaging matrix and distances.
#[derive(Debug, Clone)]
pub struct LabelingProblem {
    pub graph: GridGraph,
    pub omega: OmegaAffinity,
    pub data: DataMatrix,
}

/// Coupled state of the S-flow.
#[derive(Debug, Clone)]
pub struct SFlowState {
    pub s: AssignmentMatrix,
    pub w: AssignmentMatrix,
}

/// `S(0) = lift(barycenter, -Omega D)`, `W(0) = barycenter`. Invariant under
/// adding per-row constants to `D`.
pub fn sflow_init(omega: &OmegaAffinity, d: &DataMatrix) -> Result<SFlowState> {
    let m = omega.node_count();
    let (dm, n) = d.as_array().dim();
    if dm != m {
        return Err(AfError::ShapeMismatch {
            expected: format!("{m} data rows"),
            got: format!("{dm}"),
        });
    }
    if n < 2 {
        return Err(AfError::InvalidConfig(format!("need at least 2 labels, got {n}")));
    }
    let bary = AssignmentMatrix::barycenter(m, n);
    let direction = omega.omega().dot(d.as_array()) * (-1.0);
    let (s0, _) = lift_counted(&bary, &direction)?;
    Ok(SFlowState { s: s0, w: bary })
}

/// Recorded samples of a coupled S-flow run.
#[derive(Debug, Clone)]
pub struct SFlowTrajectory {
    pub times: Vec<f64>,
    pub s_states: Vec<AssignmentMatrix>,
    pub w_states: Vec<AssignmentMatrix>,
    pub converged: bool,
    pub floor_activations: usize,
}

impl SFlowTrajectory {
    /// The `S`-leg as a plain trajectory (for diagnostics that work on one
    /// flow, such as the Jacobi reparametrization).
    pub fn s_trajectory(&self) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.s_states.clone(),
            velocities: None,
            converged: self.converged,
            floor_activations: self.floor_activations,
        }
    }

    pub fn final_state(&self) -> SFlowState {
        SFlowState {
            s: self.s_states.last().expect("nonempty").clone(),
            w: self.w_states.last().expect("nonempty").clone(),
        }
    }
}

/// Integrates the coupled system. `S` drives `W` but not vice versa; both
/// legs use the same method, step and recording grid. Stops at the horizon or
/// once both legs pass the convergence threshold.
pub fn sflow_run(
    init: &SFlowState,
    omega: &OmegaAffinity,
    cfg: &IntegratorConfig,
) -> Result<SFlowTrajectory> {
    cfg.validate()?;
    let steps = {
        let x = cfg.t_end / cfg.h;
        let r = x.round();
        if (x - r).abs() <= 1e-9 * x.max(1.0) { r as usize } else { x.ceil() as usize }
    };
    let mut s = init.s.clone();
    let mut w = init.w.clone();
    let mut times = vec![0.0];
    let mut s_states = vec![s.clone()];
    let mut w_states = vec![w.clone()];
    let mut floor_total = 0usize;
    let threshold = 1.0 - cfg.eps_conv;
    let mut converged = s.min_max_entry() >= threshold && w.min_max_entry() >= threshold;
    if !converged {
        for step in 1..=steps {
            let floored = match cfg.method {
                Method::GeometricEuler => {
                    let fs = omega.eval(s.as_array());
                    let (s_next, f1) = lift_counted(&s, &(fs * cfg.h))?;
                    let (w_next, f2) = lift_counted(&w, &(s.as_array() * cfg.h))?;
                    s = s_next;
                    w = w_next;
                    f1 + f2
                }
                Method::Rk4 => {
                    let (s_next, w_next, fl) = rk4_coupled_step(omega, &s, &w, cfg.h)?;
                    s = s_next;
                    w = w_next;
                    fl
                }
            };
            let total = s.as_array().len() + w.as_array().len();
            if floored as f64 > FLOOR_STORM_FRACTION * total as f64 {
                return Err(AfError::FloorStorm { step, floored, total });
            }
            floor_total += floored;
            let done = s.min_max_entry() >= threshold && w.min_max_entry() >= threshold;
            if step % cfg.record_stride == 0 || done || step == steps {
                times.push(step as f64 * cfg.h);
                s_states.push(s.clone());
                w_states.push(w.clone());
            }
            if done {
                converged = true;
                break;
            }
        }
    }
    Ok(SFlowTrajectory { times, s_states, w_states, converged, floor_activations: floor_total })
}

fn rk4_coupled_step(
    omega: &OmegaAffinity,
    s: &AssignmentMatrix,
    w: &AssignmentMatrix,
    h: f64,
) -> Result<(AssignmentMatrix, AssignmentMatrix, usize)> {
    let field = |s_raw: &Array2<f64>, w_raw: &Array2<f64>| {
        let ds = apply_replicator_raw(s_raw, &omega.eval(s_raw));
        let dw = apply_replicator_raw(w_raw, s_raw);
        (ds, dw)
    };
    let (s0, w0) = (s.as_array(), w.as_array());
    let (ks1, kw1) = field(s0, w0);
    let (ks2, kw2) = field(&(s0 + &(&ks1 * (h / 2.0))), &(w0 + &(&kw1 * (h / 2.0))));
    let (ks3, kw3) = field(&(s0 + &(&ks2 * (h / 2.0))), &(w0 + &(&kw2 * (h / 2.0))));
    let (ks4, kw4) = field(&(s0 + &(&ks3 * h)), &(w0 + &(&kw3 * h)));
    let s_next = s0 + &((ks1 + ks2 * 2.0 + ks3 * 2.0 + ks4) * (h / 6.0));
    let w_next = w0 + &((kw1 + kw2 * 2.0 + kw3 * 2.0 + kw4) * (h / 6.0));
    let (s_rep, f1) = AssignmentMatrix::repair(s_next)?;
    let (w_rep, f2) = AssignmentMatrix::repair(w_next)?;
    Ok((s_rep, w_rep, f1 + f2))
}

/// Value of `J(S) = 1/2 <S, Omega S>` together with its decomposition into
/// the norm term and the neighborhood coupling term. The decomposition equals
/// `J` exactly when the averaging matrix is symmetric.
#[derive(Debug, Clone, Serialize)]
pub struct JObjective {
    pub value: f64,
    pub norm_term: f64,
    pub coupling_term: f64,
    pub decomposed: f64,
}

pub fn objective_j(omega: &Array2<f64>, s: &Array2<f64>) -> JObjective {
    let os = omega.dot(s);
    let value = 0.5 * frobenius_inner(s, &os);
    let norm_term = 0.5 * frobenius_inner(s, s);
    let mut coupling = 0.0;
    let m = omega.nrows();
    for i in 0..m {
        for j in 0..m {
            let wij = omega[(i, j)];
            if wij == 0.0 {
                continue;
            }
            let mut dist = 0.0;
            for k in 0..s.ncols() {
                let diff = s[(i, k)] - s[(j, k)];
                dist += diff * diff;
            }
            coupling += wij * dist;
        }
    }
    let coupling_term = 0.25 * coupling;
    JObjective { value, norm_term, coupling_term, decomposed: norm_term - coupling_term }
}

/// Hard labeling extracted from a soft assignment.
#[derive(Debug, Clone, Serialize)]
pub struct Labeling {
    /// Argmax per row; ties break toward the lowest index.
    pub labels: Vec<usize>,
    /// `min_i max_j W_ij`.
    pub confidence: f64,
    pub converged: bool,
}

pub fn extract_labels(w: &AssignmentMatrix, eps_conv: f64) -> Labeling {
    let mut labels = Vec::with_capacity(w.nrows());
    for row in w.as_array().axis_iter(Axis(0)) {
        let mut best = 0usize;
        let mut best_val = row[0];
        for (j, &x) in row.iter().enumerate().skip(1) {
            if x > best_val {
                best = j;
                best_val = x;
            }
        }
        labels.push(best);
    }
    let confidence = w.min_max_entry();
    Labeling { labels, confidence, converged: confidence >= 1.0 - eps_conv }
}

/// Critical-set geometry of the averaging affinity.
#[derive(Debug, Clone, Serialize)]
pub struct ManeCriticalReport {
    pub node_count: usize,
    pub label_count: usize,
    pub rank_omega: usize,
    pub dim_ker_omega: usize,
    /// Nullity of `V -> Omega V` on the tangent space, from a dense SVD.
    pub dim_sigma_brute: usize,
    /// `(n - 1) * dim ker(Omega)`.
    pub dim_sigma_formula: usize,
    /// Rank of the differential of the projected affinity.
    pub differential_rank: usize,
    /// Dimension of the critical set; equals `dim_sigma` for the averaging
    /// affinity.
    pub dim_mcrit: usize,
    pub query: Option<ManeQueryReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManeQueryReport {
    /// Frobenius distance of `W - barycenter` to the kernel slice, i.e. the
    /// distance of `W` to the affine hull of the critical set.
    pub distance_to_critical_affine: f64,
    /// `||P_T0[Omega W]||_F`; zero exactly on the critical set.
    pub tangent_image_norm: f64,
}

fn helmert_basis(n: usize) -> Vec<Array1<f64>> {
    let mut basis = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut q = Array1::zeros(n);
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[i] = scale;
        }
        q[k] = -(k as f64) * scale;
        basis.push(q);
    }
    basis
}

fn singular_values(mat: DMatrix<f64>) -> Vec<f64> {
    mat.svd(false, false).singular_values.iter().cloned().collect()
}

fn count_rank(sv: &[f64]) -> usize {
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * smax).count()
}

/// Analyzes the kernel slice `Sigma = {V tangent : Omega V = 0}` and the rank
/// of the projected affinity differential, computing the slice dimension both
/// by brute-force SVD of the full operator and by the rank formula, and
/// erroring if the two disagree. An optional query state is located relative
/// to the critical set.
pub fn mane_analysis(
    omega: &Array2<f64>,
    n: usize,
    query: Option<&AssignmentMatrix>,
) -> Result<ManeCriticalReport> {
    let m = omega.nrows();
    if omega.ncols() != m {
        return Err(AfError::InvalidOmega(format!(
            "must be square, got {m} x {}",
            omega.ncols()
        )));
    }
    if n < 2 {
        return Err(AfError::InvalidConfig(format!("need at least 2 labels, got {n}")));
    }
    let size = m * n;
    if size > MANE_SIZE_CAP {
        return Err(AfError::SizeCap { size, cap: MANE_SIZE_CAP });
    }
    if let Some(w) = query {
        if w.as_array().dim() != (m, n) {
            return Err(AfError::ShapeMismatch {
                expected: format!("({m}, {n})"),
                got: format!("{:?}", w.as_array().dim()),
            });
        }
    }

    // Rank of Omega itself.
    let omega_na = DMatrix::from_row_iterator(m, m, omega.iter().cloned());
    let rank_omega = count_rank(&singular_values(omega_na));
    let dim_ker_omega = m - rank_omega;

    // Brute force: the matrix of V -> Omega V on the tangent space, written
    // in orthonormal bases on both sides (standard basis of R^{m x n} as
    // rows, node x Helmert tangent basis as columns).
    let q = helmert_basis(n);
    let cols = m * (n - 1);
    let mut t = DMatrix::zeros(m * n, cols);
    for i in 0..m {
        for (k, qk) in q.iter().enumerate() {
            let c = i * (n - 1) + k;
            for a in 0..m {
                let oa = omega[(a, i)];
                if oa == 0.0 {
                    continue;
                }
                for (b, &qb) in qk.iter().enumerate() {
                    t[(a * n + b, c)] = oa * qb;
                }
            }
        }
    }
    let svd = t.svd(false, true);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let differential_rank = count_rank(&sv);
    let dim_sigma_brute = cols - differential_rank;
    let dim_sigma_formula = (n - 1) * dim_ker_omega;
    if dim_sigma_brute != dim_sigma_formula {
        return Err(AfError::KernelDimMismatch {
            brute: dim_sigma_brute,
            formula: dim_sigma_formula,
        });
    }

    let query = match query {
        None => None,
        Some(w) => {
            let smax = sv.iter().cloned().fold(0.0f64, f64::max);
            let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
            let bary = 1.0 / n as f64;
            let u = w.as_array().mapv(|x| x) - bary;
            let u_norm_sq = u.iter().map(|x| x * x).sum::<f64>();
            // Project onto the orthonormal kernel basis vectors.
            let mut proj_sq = 0.0;
            for (idx, &s) in sv.iter().enumerate() {
                if smax > 0.0 && s > RANK_REL_TOL * smax {
                    continue;
                }
                // Kernel coordinate vector -> tangent matrix B = sum y_(i,k) e_i q_k^T.
                let y = v_t.row(idx);
                let mut inner = 0.0;
                for i in 0..m {
                    for (k, qk) in q.iter().enumerate() {
                        let coeff = y[i * (n - 1) + k];
                        if coeff == 0.0 {
                            continue;
                        }
                        for (b, &qb) in qk.iter().enumerate() {
                            inner += coeff * qb * u[(i, b)];
                        }
                    }
                }
                proj_sq += inner * inner;
            }
            let dist_sq = (u_norm_sq - proj_sq).max(0.0);
            let image = project_t0(&omega.dot(w.as_array()))?;
            Some(ManeQueryReport {
                distance_to_critical_affine: dist_sq.sqrt(),
                tangent_image_norm: image.norm_frobenius(),
            })
        }
    };

    Ok(ManeCriticalReport {
        node_count: m,
        label_count: n,
        rank_omega,
        dim_ker_omega,
        dim_sigma_brute,
        dim_sigma_formula,
        differential_rank,
        dim_mcrit: dim_sigma_brute,
        query,
    })
}

/// Numerical rank of the projected affinity differential
/// `V -> P_T0[dF|_W[V]]` on the tangent space at one state.
///
/// For the averaging affinity this is state-independent and equals
/// `(n-1) rank(Omega)`; for general affinities the rank can vary with the
/// state, so callers sample it at several states. Constancy across the
/// manifold cannot be certified numerically.
pub fn projected_differential_rank(
    f: &dyn AffinityMap,
    w: &AssignmentMatrix,
) -> Result<usize> {
    let (m, n) = w.as_array().dim();
    let size = m * n;
    if size > MANE_SIZE_CAP {
        return Err(AfError::SizeCap { size, cap: MANE_SIZE_CAP });
    }
    let q = helmert_basis(n);
    let cols = m * (n - 1);
    let mut t = DMatrix::zeros(m * n, cols);
    let mut basis_vec = Array2::zeros((m, n));
    for i in 0..m {
        for (k, qk) in q.iter().enumerate() {
            basis_vec.row_mut(i).assign(qk);
            let image = project_t0(&f.diff(w.as_array(), &basis_vec))?;
            let c = i * (n - 1) + k;
            for (r, &x) in image.as_array().iter().enumerate() {
                t[(r, c)] = x;
            }
            basis_vec.row_mut(i).fill(0.0);
        }
    }
    Ok(count_rank(&singular_values(t)))
}

/// A labeling problem as a JSON document: grid, labels, noise, seed,
/// weighting, and integrator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub grid: GridGraph,
    pub labels: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: OmegaWeights,
    /// Declared symmetry of the averaging matrix, verified at build time.
    #[serde(default)]
    pub omega_symmetric: Option<bool>,
    pub integrator: IntegratorConfig,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<(LabelingProblem, Vec<usize>)> {
        self.integrator.validate()?;
        let omega = build_omega(&self.grid, &self.weights)?;
        if self.omega_symmetric == Some(true) && !omega.is_symmetric() {
            return Err(AfError::InvalidOmega(
                "declared symmetric but the built averaging matrix is not".into(),
            ));
        }
        let dataset = synth_dataset(&DatasetSpec {
            height: self.grid.height,
            width: self.grid.width,
            labels: self.labels,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        })?;
        Ok((
            LabelingProblem { graph: self.grid.clone(), omega, data: dataset.data },
            dataset.ground_truth,
        ))
    }
}
