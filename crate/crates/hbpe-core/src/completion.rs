//! Joint head/body matrix completion by ADMM.
//!
//! Each stream stacks one-hot labels, visual features, and a bias row into a
//! heterogeneous matrix `J = [Y; X; 1]` that a linear-classifier model makes
//! low-rank. Completion minimizes
//!
//! ```text
//! nu_h ||J_h||* + nu_b ||J_b||*
//!   + lambda_h/2 ||P_h (J_h - J_anchor_h)||_F^2
//!   + lambda_b/2 ||P_b (J_b - J_anchor_b)||_F^2
//!   + mu/2      ||P_h J_h - P_b J_b||_F^2
//! ```
//!
//! where `P` selects the label rows, the anchors carry temporally interpolated
//! labels, and the `mu` term couples head and body orientations. The solver
//! alternates a singular-value-thresholding step for each `J`, a closed-form
//! joint update of auxiliary variables `K_h, K_b`, and a scaled dual update of
//! the multipliers `M_h, M_b`.
//!
//! The `K` update exploits the projection structure: `P^T P` is a 0/1 diagonal
//! over rows, so the stationarity system decouples into one scalar equation
//! per feature/bias entry and one 2x2 system per label entry coupling the two
//! streams. The closed form is verified against a dense solve of the full
//! vectorized system in the test suite.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

/// Stacked `[Y; X; 1]` matrix for one stream, with the block boundaries
/// recorded. The bias row is exactly 1 at construction; solver iterates may
/// drift away from 1 (the drift is reported, not re-projected).
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousMatrix {
    data: DMatrix<f64>,
    label_rows: usize,
    feature_rows: usize,
}

impl HeterogeneousMatrix {
    /// Wraps raw data with given block boundaries, checking the row count.
    pub fn new(data: DMatrix<f64>, label_rows: usize, feature_rows: usize) -> Result<Self> {
        if data.nrows() != label_rows + feature_rows + 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} + {} + 1 rows, got {}",
                label_rows,
                feature_rows,
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidInput(
                "heterogeneous matrix needs at least one column".into(),
            ));
        }
        Ok(HeterogeneousMatrix {
            data,
            label_rows,
            feature_rows,
        })
    }

    /// Assembles `[Y; X; 1]` from a label block and a feature block.
    pub fn from_blocks(label_block: &DMatrix<f64>, features: &DMatrix<f64>) -> Result<Self> {
        if label_block.ncols() != features.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "label block has {} columns, features have {}",
                label_block.ncols(),
                features.ncols()
            )));
        }
        let (c, d, t) = (label_block.nrows(), features.nrows(), features.ncols());
        let mut data = DMatrix::zeros(c + d + 1, t);
        data.view_mut((0, 0), (c, t)).copy_from(label_block);
        data.view_mut((c, 0), (d, t)).copy_from(features);
        data.row_mut(c + d).fill(1.0);
        HeterogeneousMatrix::new(data, c, d)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn label_rows(&self) -> usize {
        self.label_rows
    }

    pub fn feature_rows(&self) -> usize {
        self.feature_rows
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    /// The label block `Y` (first `c` rows).
    pub fn label_block(&self) -> DMatrix<f64> {
        self.data.rows(0, self.label_rows).into_owned()
    }

    /// Largest deviation of the bias row from 1.
    pub fn bias_row_drift(&self) -> f64 {
        self.data
            .row(self.data.nrows() - 1)
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn data_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }
}

/// Builds the initial matrix `J_0 = [Y; X; 1]`: observed label columns are
/// exact one-hot, unobserved label columns come from `init` (for example
/// sensor-derived soft labels) or stay zero.
pub fn build_heterogeneous(
    labels: &LabelMatrix,
    features: &DMatrix<f64>,
    init: Option<&DMatrix<f64>>,
) -> Result<HeterogeneousMatrix> {
    let (c, t) = (labels.classes(), labels.samples());
    if features.ncols() != t {
        return Err(Error::ShapeMismatch(format!(
            "labels have {t} columns, features have {}",
            features.ncols()
        )));
    }
    let mut label_block = labels.values().clone();
    if let Some(init) = init {
        if init.nrows() != c || init.ncols() != t {
            return Err(Error::ShapeMismatch(format!(
                "init block is {}x{}, expected {c}x{t}",
                init.nrows(),
                init.ncols()
            )));
        }
        for (j, &observed) in labels.observed().iter().enumerate() {
            if !observed {
                label_block.set_column(j, &init.column(j));
            }
        }
    }
    HeterogeneousMatrix::from_blocks(&label_block, features)
}

/// The projection `P = [I, 0]` extracting the label rows of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelProjection {
    pub classes: usize,
    pub total_rows: usize,
}

impl LabelProjection {
    pub fn new(classes: usize, total_rows: usize) -> Self {
        assert!(classes <= total_rows, "label rows exceed matrix rows");
        LabelProjection {
            classes,
            total_rows,
        }
    }

    /// Applies `P` to a matrix: selects the first `classes` rows.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.total_rows, "projection shape mismatch");
        m.rows(0, self.classes).into_owned()
    }

    /// Dense `[I, 0]` matrix, mainly for oracle checks in tests.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.classes, self.total_rows);
        for i in 0..self.classes {
            p[(i, i)] = 1.0;
        }
        p
    }
}

/// Trade-off weights of the completion objective and the ADMM penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverWeights {
    /// Nuclear-norm weights per stream.
    pub nu_h: f64,
    pub nu_b: f64,
    /// Interpolation-anchor weights per stream (label rows only).
    pub lambda_h: f64,
    pub lambda_b: f64,
    /// Head/body coupling weight.
    pub mu: f64,
    /// Augmented-Lagrangian penalties per stream (fixed, no adaptive scheme).
    pub phi_h: f64,
    pub phi_b: f64,
}

impl SolverWeights {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.nu_h, self.nu_b, self.phi_h, self.phi_b];
        let nonnegative = [self.lambda_h, self.lambda_b, self.mu];
        if positive.iter().all(|v| v.is_finite() && *v > 0.0)
            && nonnegative.iter().all(|v| v.is_finite() && *v >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid solver weights: {self:?}"
            )))
        }
    }

    /// Symmetric weights, same value for head and body.
    pub fn symmetric(nu: f64, lambda: f64, mu: f64, phi: f64) -> Self {
        SolverWeights {
            nu_h: nu,
            nu_b: nu,
            lambda_h: lambda,
            lambda_b: lambda,
            mu,
            phi_h: phi,
            phi_b: phi,
        }
    }

    /// Tie-break key used by hyperparameter search: prefer smaller nu, then
    /// smaller lambda, then smaller mu.
    pub(crate) fn tie_break_key(&self) -> [f64; 5] {
        [self.nu_h, self.nu_b, self.lambda_h, self.lambda_b, self.mu]
    }
}

impl Default for SolverWeights {
    fn default() -> Self {
        SolverWeights::symmetric(2.0, 4.0, 4.0, 2.0)
    }
}

/// Singular value thresholding: SVD of `a` with the shrinkage
/// `max(sigma - tau, 0)` applied to each singular value. This is the proximal
/// operator of `tau * ||.||*`.
pub fn svt(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    svt_with_values(a, tau).map(|(m, _)| m)
}

/// As [`svt`], also returning the shrunk singular values (they are the
/// singular values of the output, which makes its nuclear norm free).
///
/// The iteration-capped `try_svd` can return an inconsistent factorization on
/// rank-deficient input, so this uses the uncapped path, which terminates for
/// any finite matrix; non-finite input is rejected up front.
pub fn svt_with_values(a: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::InvalidInput(format!(
            "shrinkage threshold must be >= 0, got {tau}"
        )));
    }
    ensure_finite(a, "svt input")?;
    let mut svd = a.clone().svd(true, true);
    svd.singular_values.apply(|s| *s = (*s - tau).max(0.0));
    let values = svd.singular_values.clone();
    let out = svd
        .recompose()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((out, values))
}

/// Sum of singular values.
pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    ensure_finite(a, "nuclear norm input")?;
    Ok(a.clone().singular_values().sum())
}

fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "{what} contains non-finite entries ({}x{})",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// One-stream `J` update: the proximal step
/// `argmin (nu/phi) ||J||* + 1/2 ||J - (K - M/phi)||_F^2 = svt(K - M/phi, nu/phi)`.
pub fn update_j(k: &DMatrix<f64>, m: &DMatrix<f64>, nu: f64, phi: f64) -> Result<DMatrix<f64>> {
    update_j_with_values(k, m, nu, phi).map(|(j, _)| j)
}

fn update_j_with_values(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    nu: f64,
    phi: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if k.shape() != m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "K is {:?} but M is {:?}",
            k.shape(),
            m.shape()
        )));
    }
    if phi <= 0.0 || phi.is_nan() {
        return Err(Error::InvalidInput(format!(
            "phi must be positive, got {phi}"
        )));
    }
    let target = k - m / phi;
    svt_with_values(&target, nu / phi)
}

/// Joint closed-form update of the auxiliary variables `(K_h, K_b)`.
///
/// Solves the stationarity conditions of the K subproblem exactly. Feature and
/// bias rows see no anchor or coupling, giving `K = J + M/phi` per entry; each
/// label entry `(i, t)` couples the two streams through a 2x2 system:
///
/// ```text
/// (lambda_h + mu + phi_h) k_h - mu k_b = lambda_h g_h + phi_h j_h + m_h
/// (lambda_b + mu + phi_b) k_b - mu k_h = lambda_b g_b + phi_b j_b + m_b
/// ```
///
/// whose determinant is strictly positive for positive penalties.
#[allow(clippy::too_many_arguments)]
pub fn update_k(
    j_h_next: &DMatrix<f64>,
    j_b_next: &DMatrix<f64>,
    j_anchor_h: &DMatrix<f64>,
    j_anchor_b: &DMatrix<f64>,
    m_h: &DMatrix<f64>,
    m_b: &DMatrix<f64>,
    classes: usize,
    w: &SolverWeights,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    w.validate()?;
    if j_h_next.shape() != j_anchor_h.shape() || j_h_next.shape() != m_h.shape() {
        return Err(Error::ShapeMismatch(
            "head-stream matrices disagree in shape".into(),
        ));
    }
    if j_b_next.shape() != j_anchor_b.shape() || j_b_next.shape() != m_b.shape() {
        return Err(Error::ShapeMismatch(
            "body-stream matrices disagree in shape".into(),
        ));
    }
    if j_h_next.ncols() != j_b_next.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "streams disagree in sample count: {} vs {}",
            j_h_next.ncols(),
            j_b_next.ncols()
        )));
    }
    if classes > j_h_next.nrows() || classes > j_b_next.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "label rows {classes} exceed stream row counts {} / {}",
            j_h_next.nrows(),
            j_b_next.nrows()
        )));
    }

    let t = j_h_next.ncols();
    let mut k_h = DMatrix::zeros(j_h_next.nrows(), t);
    let mut k_b = DMatrix::zeros(j_b_next.nrows(), t);

    // Label rows: per-entry 2x2 systems.
    let a11 = w.lambda_h + w.mu + w.phi_h;
    let a22 = w.lambda_b + w.mu + w.phi_b;
    let det = a11 * a22 - w.mu * w.mu;
    debug_assert!(
        det > 0.0,
        "2x2 determinant must be positive for valid weights"
    );
    for col in 0..t {
        for i in 0..classes {
            let rhs_h =
                w.lambda_h * j_anchor_h[(i, col)] + w.phi_h * j_h_next[(i, col)] + m_h[(i, col)];
            let rhs_b =
                w.lambda_b * j_anchor_b[(i, col)] + w.phi_b * j_b_next[(i, col)] + m_b[(i, col)];
            k_h[(i, col)] = (a22 * rhs_h + w.mu * rhs_b) / det;
            k_b[(i, col)] = (a11 * rhs_b + w.mu * rhs_h) / det;
        }
    }

    // Feature and bias rows: the anchor and coupling terms vanish.
    for col in 0..t {
        for i in classes..j_h_next.nrows() {
            k_h[(i, col)] = j_h_next[(i, col)] + m_h[(i, col)] / w.phi_h;
        }
        for i in classes..j_b_next.nrows() {
            k_b[(i, col)] = j_b_next[(i, col)] + m_b[(i, col)] / w.phi_b;
        }
    }

    Ok((k_h, k_b))
}

/// Scaled dual update `M + phi (J - K)`. Shapes must match.
pub fn update_multipliers(
    m: &DMatrix<f64>,
    j_next: &DMatrix<f64>,
    k_next: &DMatrix<f64>,
    phi: f64,
) -> DMatrix<f64> {
    assert_eq!(
        m.shape(),
        j_next.shape(),
        "multiplier update shape mismatch"
    );
    assert_eq!(
        m.shape(),
        k_next.shape(),
        "multiplier update shape mismatch"
    );
    m + phi * (j_next - k_next)
}

/// The five-term completion objective evaluated at `(J_h, J_b)`.
pub fn objective(
    j_h: &DMatrix<f64>,
    j_b: &DMatrix<f64>,
    j_anchor_h: &DMatrix<f64>,
    j_anchor_b: &DMatrix<f64>,
    classes: usize,
    w: &SolverWeights,
) -> Result<f64> {
    let nuclear = w.nu_h * nuclear_norm(j_h)? + w.nu_b * nuclear_norm(j_b)?;
    Ok(nuclear + quadratic_terms(j_h, j_b, j_anchor_h, j_anchor_b, classes, w))
}

/// Anchor and coupling terms of the objective (everything except the nuclear
/// norms), computed on the label blocks only.
fn quadratic_terms(
    j_h: &DMatrix<f64>,
    j_b: &DMatrix<f64>,
    j_anchor_h: &DMatrix<f64>,
    j_anchor_b: &DMatrix<f64>,
    classes: usize,
    w: &SolverWeights,
) -> f64 {
    let t = j_h.ncols();
    let mut anchor_h = 0.0;
    let mut anchor_b = 0.0;
    let mut coupling = 0.0;
    for col in 0..t {
        for i in 0..classes {
            let dh = j_h[(i, col)] - j_anchor_h[(i, col)];
            let db = j_b[(i, col)] - j_anchor_b[(i, col)];
            let dc = j_h[(i, col)] - j_b[(i, col)];
            anchor_h += dh * dh;
            anchor_b += db * db;
            coupling += dc * dc;
        }
    }
    0.5 * (w.lambda_h * anchor_h + w.lambda_b * anchor_b + w.mu * coupling)
}

/// Raw per-iteration residuals: `||J - K||_F` (primal) and
/// `phi ||K - K_prev||_F` (dual), per stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub primal_h: f64,
    pub primal_b: f64,
    pub dual_h: f64,
    pub dual_b: f64,
}

/// ADMM iterates for one joint solve. Checkpointable and resumable; the
/// problem data (anchors, weights) are supplied alongside on every call.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub(crate) j_h: HeterogeneousMatrix,
    pub(crate) j_b: HeterogeneousMatrix,
    pub(crate) k_h: DMatrix<f64>,
    pub(crate) k_b: DMatrix<f64>,
    pub(crate) m_h: DMatrix<f64>,
    pub(crate) m_b: DMatrix<f64>,
    pub(crate) iteration: usize,
    pub(crate) residuals: Vec<ResidualRecord>,
    pub(crate) objective_trace: Vec<f64>,
}

impl AdmmState {
    /// Fresh state: `K = J_0`, `M = 0`.
    pub fn new(j0_h: HeterogeneousMatrix, j0_b: HeterogeneousMatrix) -> Result<Self> {
        if j0_h.label_rows() != j0_b.label_rows() {
            return Err(Error::ShapeMismatch(format!(
                "streams disagree in label rows: {} vs {}",
                j0_h.label_rows(),
                j0_b.label_rows()
            )));
        }
        if j0_h.samples() != j0_b.samples() {
            return Err(Error::ShapeMismatch(format!(
                "streams disagree in sample count: {} vs {}",
                j0_h.samples(),
                j0_b.samples()
            )));
        }
        let k_h = j0_h.data().clone();
        let k_b = j0_b.data().clone();
        let m_h = DMatrix::zeros(k_h.nrows(), k_h.ncols());
        let m_b = DMatrix::zeros(k_b.nrows(), k_b.ncols());
        Ok(AdmmState {
            j_h: j0_h,
            j_b: j0_b,
            k_h,
            k_b,
            m_h,
            m_b,
            iteration: 0,
            residuals: Vec::new(),
            objective_trace: Vec::new(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn residuals(&self) -> &[ResidualRecord] {
        &self.residuals
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn j_h(&self) -> &HeterogeneousMatrix {
        &self.j_h
    }

    pub fn j_b(&self) -> &HeterogeneousMatrix {
        &self.j_b
    }

    pub(crate) fn label_rows(&self) -> usize {
        self.j_h.label_rows()
    }
}

/// Relative residuals after one iteration, used for the stopping test.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub primal_rel_h: f64,
    pub primal_rel_b: f64,
    pub dual_rel_h: f64,
    pub dual_rel_b: f64,
}

impl StepInfo {
    pub fn max_residual(&self) -> f64 {
        self.primal_rel_h
            .max(self.primal_rel_b)
            .max(self.dual_rel_h)
            .max(self.dual_rel_b)
    }
}

/// One ADMM iteration: J updates (both streams), joint K update, multiplier
/// updates, residual and objective bookkeeping.
pub fn admm_step(
    state: &mut AdmmState,
    j_anchor_h: &DMatrix<f64>,
    j_anchor_b: &DMatrix<f64>,
    w: &SolverWeights,
) -> Result<StepInfo> {
    let classes = state.label_rows();

    let (j_h_next, sv_h) = update_j_with_values(&state.k_h, &state.m_h, w.nu_h, w.phi_h)
        .map_err(|e| at_iteration(e, state.iteration))?;
    let (j_b_next, sv_b) = update_j_with_values(&state.k_b, &state.m_b, w.nu_b, w.phi_b)
        .map_err(|e| at_iteration(e, state.iteration))?;

    let (k_h_next, k_b_next) = update_k(
        &j_h_next, &j_b_next, j_anchor_h, j_anchor_b, &state.m_h, &state.m_b, classes, w,
    )?;

    let m_h_next = update_multipliers(&state.m_h, &j_h_next, &k_h_next, w.phi_h);
    let m_b_next = update_multipliers(&state.m_b, &j_b_next, &k_b_next, w.phi_b);

    for (name, m) in [
        ("J_h", &j_h_next),
        ("J_b", &j_b_next),
        ("K_h", &k_h_next),
        ("K_b", &k_b_next),
        ("M_h", &m_h_next),
        ("M_b", &m_b_next),
    ] {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                iteration: state.iteration,
                detail: format!("{name} became non-finite"),
            });
        }
    }

    let primal_h = (&j_h_next - &k_h_next).norm();
    let primal_b = (&j_b_next - &k_b_next).norm();
    let dual_h = w.phi_h * (&k_h_next - &state.k_h).norm();
    let dual_b = w.phi_b * (&k_b_next - &state.k_b).norm();

    let info = StepInfo {
        primal_rel_h: primal_h / j_h_next.norm().max(1e-12),
        primal_rel_b: primal_b / j_b_next.norm().max(1e-12),
        dual_rel_h: dual_h / m_h_next.norm().max(1.0),
        dual_rel_b: dual_b / m_b_next.norm().max(1.0),
    };

    // Nuclear norms of the fresh J iterates come free from the shrinkage.
    let nuclear = w.nu_h * sv_h.sum() + w.nu_b * sv_b.sum();
    let objective_value =
        nuclear + quadratic_terms(&j_h_next, &j_b_next, j_anchor_h, j_anchor_b, classes, w);

    state.j_h.data_mut().copy_from(&j_h_next);
    state.j_b.data_mut().copy_from(&j_b_next);
    state.k_h = k_h_next;
    state.k_b = k_b_next;
    state.m_h = m_h_next;
    state.m_b = m_b_next;
    state.iteration += 1;
    state.residuals.push(ResidualRecord {
        primal_h,
        primal_b,
        dual_h,
        dual_b,
    });
    state.objective_trace.push(objective_value);

    Ok(info)
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::Numerical(detail) => Error::Divergence { iteration, detail },
        other => other,
    }
}

/// Periodic checkpointing of a long solve.
#[derive(Debug, Clone)]
pub struct CheckpointOptions {
    pub path: PathBuf,
    pub every: usize,
}

/// Stopping configuration. Convergence requires all four relative residuals
/// (primal and dual, both streams) at or below `tol`.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub checkpoint: Option<CheckpointOptions>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-4,
            max_iter: 500,
            checkpoint: None,
        }
    }
}

/// Outcome of a joint solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Relative `||J - K||_F / ||J||_F` per stream at the last iteration.
    pub final_primal_residuals: (f64, f64),
    pub final_dual_residuals: (f64, f64),
    /// Objective value at each iterate.
    pub objective_trace: Vec<f64>,
    /// Raw residual history (Frobenius norms).
    pub residual_history: Vec<ResidualRecord>,
    /// Largest deviation of each stream's bias row from 1 at the solution.
    pub bias_row_drift: (f64, f64),
}

/// Runs ADMM from `J_0` with `K = J_0`, `M = 0`.
pub fn solve(
    j0_h: &HeterogeneousMatrix,
    j0_b: &HeterogeneousMatrix,
    j_anchor_h: &DMatrix<f64>,
    j_anchor_b: &DMatrix<f64>,
    w: &SolverWeights,
    opts: &SolveOptions,
) -> Result<(HeterogeneousMatrix, HeterogeneousMatrix, SolveReport)> {
    let state = AdmmState::new(j0_h.clone(), j0_b.clone())?;
    solve_from(state, j_anchor_h, j_anchor_b, w, opts)
}

/// Runs ADMM from an existing (possibly checkpointed) state.
pub fn solve_from(
    mut state: AdmmState,
    j_anchor_h: &DMatrix<f64>,
    j_anchor_b: &DMatrix<f64>,
    w: &SolverWeights,
    opts: &SolveOptions,
) -> Result<(HeterogeneousMatrix, HeterogeneousMatrix, SolveReport)> {
    w.validate()?;
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if j_anchor_h.shape() != state.j_h.data().shape()
        || j_anchor_b.shape() != state.j_b.data().shape()
    {
        return Err(Error::ShapeMismatch(
            "anchor shapes do not match the iterates".into(),
        ));
    }

    let mut converged = false;
    let mut last_info: Option<StepInfo> = None;
    while state.iteration < opts.max_iter {
        let info = admm_step(&mut state, j_anchor_h, j_anchor_b, w)?;
        if let Some(ck) = &opts.checkpoint {
            if ck.every > 0 && state.iteration.is_multiple_of(ck.every) {
                crate::checkpoint::save_checkpoint(&ck.path, &state)?;
            }
        }
        let done = info.max_residual() <= opts.tol;
        last_info = Some(info);
        if done {
            converged = true;
            break;
        }
    }

    if let Some(ck) = &opts.checkpoint {
        crate::checkpoint::save_checkpoint(&ck.path, &state)?;
    }

    let (primal, dual) = match last_info {
        Some(info) => (
            (info.primal_rel_h, info.primal_rel_b),
            (info.dual_rel_h, info.dual_rel_b),
        ),
        // Resumed state that was already past max_iter: nothing ran.
        None => ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN)),
    };

    let report = SolveReport {
        converged,
        iterations: state.iteration,
        final_primal_residuals: primal,
        final_dual_residuals: dual,
        objective_trace: state.objective_trace.clone(),
        residual_history: state.residuals.clone(),
        bias_row_drift: (state.j_h.bias_row_drift(), state.j_b.bias_row_drift()),
    };
    Ok((state.j_h, state.j_b, report))
}
