//! Temporal interpolation of sparse one-hot label rows.
//!
//! The main scheme is Gaussian process regression with an RBF kernel: one
//! independent GP per class row, all sharing a single kernel and a single
//! Cholesky factorization of the training Gram matrix. The posterior mean
//! fills the unobserved columns; observed columns keep their exact one-hot
//! targets. Laplacian smoothing and piecewise-linear interpolation are the
//! baseline interpolators used for comparisons.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

/// RBF kernel hyperparameters. The length scale is in units of sample index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernelParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl RbfKernelParams {
    pub fn new(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let params = RbfKernelParams {
            length_scale,
            signal_variance,
            noise_variance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale.is_finite()
            && self.length_scale > 0.0
            && self.signal_variance.is_finite()
            && self.signal_variance > 0.0
            && self.noise_variance.is_finite()
            && self.noise_variance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid kernel parameters: {self:?}"
            )))
        }
    }
}

/// Kernel grid searched when no hyperparameters are supplied. Length scales
/// bracket the 3-second annotation spacing up to roughly one-minute gaps.
pub fn default_kernel_grid() -> Vec<RbfKernelParams> {
    let mut grid = Vec::new();
    for &length_scale in &[2.0, 5.0, 10.0, 20.0, 40.0] {
        for &signal_variance in &[0.25, 1.0] {
            for &noise_variance in &[1e-4, 1e-2, 1e-1] {
                grid.push(RbfKernelParams {
                    length_scale,
                    signal_variance,
                    noise_variance,
                });
            }
        }
    }
    grid
}

/// Gram matrix `k(a, b) = signal_variance * exp(-(a-b)^2 / (2 length_scale^2))`.
pub fn rbf_kernel(t1: &[f64], t2: &[f64], params: &RbfKernelParams) -> DMatrix<f64> {
    let inv_two_ls2 = 1.0 / (2.0 * params.length_scale * params.length_scale);
    DMatrix::from_fn(t1.len(), t2.len(), |i, j| {
        let d = t1[i] - t2[j];
        params.signal_variance * (-d * d * inv_two_ls2).exp()
    })
}

/// Which interpolation scheme produced a label matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationSource {
    Gpr,
    Laplacian,
    Linear,
}

/// A dense `c x T` label matrix with the missing columns imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedLabels {
    pub values: DMatrix<f64>,
    pub source: InterpolationSource,
}

/// Jitter escalation ladder tried when the Gram factorization fails.
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

/// Per-class-row Gaussian process fitted to the observed label columns.
///
/// Fitting factorizes the `n x n` Gram matrix once (`O(n^3)`); predictions
/// reuse the factor for all class rows.
#[derive(Debug, Clone)]
pub struct GprModel {
    train_times: Vec<f64>,
    train_targets: DMatrix<f64>,
    kernel: RbfKernelParams,
    factor: Cholesky<f64, Dyn>,
    /// `(K + noise I)^-1 targets^T`, one column per class row.
    alpha: DMatrix<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

impl GprModel {
    /// Fits the per-row GPs. `times` must be strictly increasing and `targets`
    /// is `c x n` with one column per training time.
    pub fn fit(times: &[f64], targets: &DMatrix<f64>, params: &RbfKernelParams) -> Result<Self> {
        params.validate()?;
        let n = times.len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "GPR fit needs at least one observation".into(),
            ));
        }
        if targets.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "targets have {} columns but there are {n} training times",
                targets.ncols()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "training times must be strictly increasing (duplicates are not allowed)".into(),
            ));
        }

        let gram = rbf_kernel(times, times, params);
        let (factor, jitter) = factorize_with_jitter(&gram, params.noise_variance)?;

        let alpha = factor.solve(&targets.transpose());
        let log_det = 2.0
            * factor
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let c = targets.nrows() as f64;
        let data_fit: f64 = (0..targets.nrows())
            .map(|r| {
                let y = targets.row(r).transpose();
                -0.5 * y.dot(&alpha.column(r).into_owned())
            })
            .sum();
        let log_marginal_likelihood =
            data_fit - 0.5 * c * log_det - 0.5 * c * n as f64 * (2.0 * std::f64::consts::PI).ln();

        Ok(GprModel {
            train_times: times.to_vec(),
            train_targets: targets.clone(),
            kernel: *params,
            factor,
            alpha,
            jitter,
            log_marginal_likelihood,
        })
    }

    pub fn kernel(&self) -> &RbfKernelParams {
        &self.kernel
    }

    pub fn train_times(&self) -> &[f64] {
        &self.train_times
    }

    /// Jitter that had to be added to factorize the Gram matrix (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Cholesky factor of `K(train, train) + (noise + jitter) I`.
    pub fn gram_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }

    /// Log marginal likelihood summed over class rows.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Raw posterior mean `c x |query|`, with no special-casing of training
    /// times.
    pub fn posterior_mean(&self, query_times: &[f64]) -> DMatrix<f64> {
        let k_query = rbf_kernel(query_times, &self.train_times, &self.kernel);
        (k_query * &self.alpha).transpose()
    }

    /// Posterior-mean interpolation with observed columns copied verbatim from
    /// the training targets: only missing values are imputed. Query times are
    /// matched to training times by exact equality (both live on the integer
    /// sample grid in this pipeline).
    pub fn predict(&self, query_times: &[f64]) -> InterpolatedLabels {
        let mut values = self.posterior_mean(query_times);
        for (j, q) in query_times.iter().enumerate() {
            if let Some(i) = self.train_times.iter().position(|t| t == q) {
                values.set_column(j, &self.train_targets.column(i));
            }
        }
        InterpolatedLabels {
            values,
            source: InterpolationSource::Gpr,
        }
    }
}

fn factorize_with_jitter(
    gram: &DMatrix<f64>,
    noise_variance: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = gram.nrows();
    let mut jitter = 0.0;
    loop {
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += noise_variance + jitter;
        }
        if let Some(factor) = Cholesky::new(m) {
            return Ok((factor, jitter));
        }
        jitter = if jitter == 0.0 {
            JITTER_START
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX {
            return Err(Error::IllConditionedKernel {
                max_jitter: JITTER_MAX,
            });
        }
    }
}

/// Grid search over kernel hyperparameters by the summed per-row log marginal
/// likelihood. Grid points whose Gram matrix cannot be factorized are skipped.
pub fn fit_kernel_hyperparams(
    times: &[f64],
    targets: &DMatrix<f64>,
    grid: &[RbfKernelParams],
) -> Result<RbfKernelParams> {
    if grid.is_empty() {
        return Err(Error::InvalidInput(
            "empty kernel hyperparameter grid".into(),
        ));
    }
    let mut best: Option<(f64, RbfKernelParams)> = None;
    for params in grid {
        let Ok(model) = GprModel::fit(times, targets, params) else {
            continue;
        };
        let lml = model.log_marginal_likelihood();
        if best.is_none_or(|(b, _)| lml > b) {
            best = Some((lml, *params));
        }
    }
    best.map(|(_, p)| p).ok_or(Error::IllConditionedKernel {
        max_jitter: JITTER_MAX,
    })
}

/// Temporal smoothing baseline: per class row, minimizes
/// `sum_observed (x_t - y_t)^2 + weight * sum_t (x_{t+1} - x_t)^2`
/// by solving the tridiagonal normal equations `(D + weight L) x = D y`,
/// where `D` selects observed columns and `L` is the path-graph Laplacian.
pub fn laplacian_smooth(labels: &LabelMatrix, weight: f64) -> Result<InterpolatedLabels> {
    if weight <= 0.0 || !weight.is_finite() {
        return Err(Error::InvalidInput(format!(
            "smoothing weight must be positive, got {weight}"
        )));
    }
    if labels.observed_count() == 0 {
        return Err(Error::InvalidInput(
            "Laplacian smoothing needs at least one observed column".into(),
        ));
    }
    let t = labels.samples();
    let observed = labels.observed();

    // System coefficients are shared by all class rows.
    let diag: Vec<f64> = (0..t)
        .map(|i| {
            let degree = if t == 1 {
                0.0
            } else if i == 0 || i == t - 1 {
                1.0
            } else {
                2.0
            };
            (if observed[i] { 1.0 } else { 0.0 }) + weight * degree
        })
        .collect();

    let mut values = DMatrix::zeros(labels.classes(), t);
    let mut rhs = vec![0.0; t];
    for r in 0..labels.classes() {
        for i in 0..t {
            rhs[i] = if observed[i] {
                labels.values()[(r, i)]
            } else {
                0.0
            };
        }
        let solution = solve_tridiagonal(&diag, -weight, &rhs);
        for (i, v) in solution.into_iter().enumerate() {
            values[(r, i)] = v;
        }
    }
    Ok(InterpolatedLabels {
        values,
        source: InterpolationSource::Laplacian,
    })
}

/// Thomas algorithm for a symmetric tridiagonal system with constant
/// off-diagonal `off`. The matrix here is strictly diagonally dominant on the
/// rows that carry an observation, which keeps the sweep stable.
fn solve_tridiagonal(diag: &[f64], off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![rhs[0] / diag[0]];
    }
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    c_prime[0] = off / diag[0];
    d_prime[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - off * c_prime[i - 1];
        c_prime[i] = off / denom;
        d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    x
}

/// Piecewise-linear baseline: per class row, linear between observed columns
/// and constant beyond the first/last observation.
pub fn linear_interpolate(labels: &LabelMatrix) -> Result<InterpolatedLabels> {
    let obs = labels.observed_indices();
    if obs.is_empty() {
        return Err(Error::InvalidInput(
            "linear interpolation needs at least one observed column".into(),
        ));
    }
    let t = labels.samples();
    let mut values = DMatrix::zeros(labels.classes(), t);
    for r in 0..labels.classes() {
        let mut seg = 0usize;
        for col in 0..t {
            while seg + 1 < obs.len() && obs[seg + 1] <= col {
                seg += 1;
            }
            let v = if col <= obs[0] {
                labels.values()[(r, obs[0])]
            } else if col >= obs[obs.len() - 1] {
                labels.values()[(r, obs[obs.len() - 1])]
            } else {
                let (lo, hi) = (obs[seg], obs[seg + 1]);
                let w = (col - lo) as f64 / (hi - lo) as f64;
                (1.0 - w) * labels.values()[(r, lo)] + w * labels.values()[(r, hi)]
            };
            values[(r, col)] = v;
        }
    }
    Ok(InterpolatedLabels {
        values,
        source: InterpolationSource::Linear,
    })
}
