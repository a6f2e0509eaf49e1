//! Experiment harness: the per-person prediction pipeline, hyperparameter
//! search with k-fold cross-validation over the observed labels, and the
//! mask/repeat sweep with CSV/JSON result emission.
//!
//! Every randomized step derives its RNG seed deterministically from the
//! config seed and the unit coordinates (person, fraction, repeat, stream),
//! so sweeps are bit-reproducible, including under parallel execution.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{
    build_heterogeneous, solve, HeterogeneousMatrix, SolveOptions, SolveReport, SolverWeights,
};
use crate::dataset::PersonDataset;
use crate::error::{Error, Result};
use crate::gpr::{
    laplacian_smooth, linear_interpolate, GprModel, InterpolatedLabels, RbfKernelParams,
};
use crate::labels::{
    accuracy, decode_labels, generate_mask, label_entropy, LabelMatrix, ObservationMask,
};
use crate::preprocess::preprocess_features;

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// Prediction methods compared by the harness. The `*_mc` methods run the
/// full completion solver with different temporal anchors; the `*_only`
/// methods decode the interpolation directly without any completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GprMc,
    LaplacianMc,
    GprOnly,
    LinearOnly,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::GprMc,
        Method::LaplacianMc,
        Method::GprOnly,
        Method::LinearOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GprMc => "gpr_mc",
            Method::LaplacianMc => "laplacian_mc",
            Method::GprOnly => "gpr_only",
            Method::LinearOnly => "linear_only",
        }
    }

    pub fn uses_solver(self) -> bool {
        matches!(self, Method::GprMc | Method::LaplacianMc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gpr_mc" => Ok(Method::GprMc),
            "laplacian_mc" => Ok(Method::LaplacianMc),
            "gpr_only" => Ok(Method::GprOnly),
            "linear_only" => Ok(Method::LinearOnly),
            other => Err(Error::InvalidInput(format!(
                "unknown method '{other}' (expected gpr_mc, laplacian_mc, gpr_only or linear_only)"
            ))),
        }
    }
}

/// Full sweep configuration. Defaults follow the evaluation protocol:
/// 10 repeats with fresh diversity-checked masks, 5-fold cross-validation,
/// fractions from 5% up to 50%.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub classes: usize,
    pub fractions: Vec<f64>,
    pub repeats: usize,
    /// Required masked-in entropy as a fraction of the full-label entropy.
    pub diversity_threshold: f64,
    pub max_mask_retries: usize,
    pub weight_grid: Vec<SolverWeights>,
    pub kernel_grid: Vec<RbfKernelParams>,
    pub folds: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Re-run cross-validation for every repeat (true) or select once per
    /// (person, fraction) and reuse (false).
    pub cv_per_repeat: bool,
    /// Anchor smoothing weight for `laplacian_mc`.
    pub laplacian_weight: f64,
    /// Optional PCA preprocessing of the feature blocks (variance to keep).
    pub pca_variance: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            classes: 8,
            fractions: vec![0.05, 0.1, 0.2, 0.3, 0.5],
            repeats: 10,
            diversity_threshold: 0.75,
            max_mask_retries: 100,
            weight_grid: vec![SolverWeights::default()],
            kernel_grid: vec![default_pipeline_kernel()],
            folds: 5,
            tol: 1e-4,
            max_iter: 500,
            seed: 0,
            methods: Method::ALL.to_vec(),
            cv_per_repeat: true,
            laplacian_weight: 10.0,
            pca_variance: None,
        }
    }
}

/// Kernel used when no grid search is requested.
pub fn default_pipeline_kernel() -> RbfKernelParams {
    RbfKernelParams {
        length_scale: 30.0,
        signal_variance: 1.0,
        noise_variance: 1e-1,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidInput("need at least 2 classes".into()));
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::InvalidInput(
                "fractions must be non-empty with each value in (0, 1)".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidInput("repeats must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.diversity_threshold) {
            return Err(Error::InvalidInput(
                "diversity threshold must be in [0, 1]".into(),
            ));
        }
        if self.weight_grid.is_empty() || self.kernel_grid.is_empty() {
            return Err(Error::InvalidInput(
                "hyperparameter grids must be non-empty".into(),
            ));
        }
        for w in &self.weight_grid {
            w.validate()?;
        }
        for k in &self.kernel_grid {
            k.validate()?;
        }
        if self.folds < 2 {
            return Err(Error::InvalidInput(
                "cross-validation needs at least 2 folds".into(),
            ));
        }
        if self.tol <= 0.0 || self.tol.is_nan() || self.max_iter == 0 {
            return Err(Error::InvalidInput(
                "tol must be positive and max_iter at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no methods selected".into()));
        }
        if self.laplacian_weight <= 0.0 || self.laplacian_weight.is_nan() {
            return Err(Error::InvalidInput(
                "laplacian weight must be positive".into(),
            ));
        }
        if let Some(v) = self.pca_variance {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidInput("pca variance must be in (0, 1]".into()));
            }
        }
        Ok(())
    }

    fn grid_len(&self) -> usize {
        self.weight_grid.len() * self.kernel_grid.len()
    }
}

/// splitmix64 step, used to derive per-unit RNG seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for a work unit identified by `tags`.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &t in tags {
        state = splitmix64(state ^ t);
    }
    state
}

/// Decoded class predictions for both streams.
#[derive(Debug, Clone)]
pub struct PipelinePrediction {
    pub head_classes: Vec<usize>,
    pub body_classes: Vec<usize>,
    /// Present for solver-backed methods, absent for decode-only ablations.
    pub report: Option<SolveReport>,
}

/// Temporal interpolation of a sparse label matrix with the scheme the given
/// method uses for its anchor.
pub fn interpolate_labels(
    labels: &LabelMatrix,
    method: Method,
    kernel: &RbfKernelParams,
    laplacian_weight: f64,
) -> Result<InterpolatedLabels> {
    match method {
        Method::GprMc | Method::GprOnly => {
            let obs = labels.observed_indices();
            let times: Vec<f64> = obs.iter().map(|&i| i as f64).collect();
            let mut targets = DMatrix::zeros(labels.classes(), obs.len());
            for (col, &i) in obs.iter().enumerate() {
                targets.set_column(col, &labels.values().column(i));
            }
            let model = GprModel::fit(&times, &targets, kernel)?;
            let query: Vec<f64> = (0..labels.samples()).map(|i| i as f64).collect();
            Ok(model.predict(&query))
        }
        Method::LaplacianMc => laplacian_smooth(labels, laplacian_weight),
        Method::LinearOnly => linear_interpolate(labels),
    }
}

/// Runs the prediction pipeline for one method:
/// encode -> interpolate per stream -> build `J_0` -> solve -> decode.
/// Decode-only methods skip the completion solver.
#[allow(clippy::too_many_arguments)]
pub fn predict_labels(
    person: &PersonDataset,
    classes: usize,
    method: Method,
    mask_h: &ObservationMask,
    mask_b: &ObservationMask,
    weights: &SolverWeights,
    kernel: &RbfKernelParams,
    laplacian_weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PipelinePrediction> {
    person.validate(classes)?;
    let labels_h = LabelMatrix::from_masked_classes(&person.head_truth, classes, mask_h)?;
    let labels_b = LabelMatrix::from_masked_classes(&person.body_truth, classes, mask_b)?;

    let anchor_h = interpolate_labels(&labels_h, method, kernel, laplacian_weight)?;
    let anchor_b = interpolate_labels(&labels_b, method, kernel, laplacian_weight)?;

    if !method.uses_solver() {
        return Ok(PipelinePrediction {
            head_classes: decode_labels(&anchor_h.values),
            body_classes: decode_labels(&anchor_b.values),
            report: None,
        });
    }

    let j_anchor_h = HeterogeneousMatrix::from_blocks(&anchor_h.values, &person.head_features)?;
    let j_anchor_b = HeterogeneousMatrix::from_blocks(&anchor_b.values, &person.body_features)?;
    let j0_h = build_heterogeneous(&labels_h, &person.head_features, person.soft_head.as_ref())?;
    let j0_b = build_heterogeneous(&labels_b, &person.body_features, person.soft_body.as_ref())?;

    let opts = SolveOptions {
        tol,
        max_iter,
        checkpoint: None,
    };
    let (j_h, j_b, report) = solve(
        &j0_h,
        &j0_b,
        j_anchor_h.data(),
        j_anchor_b.data(),
        weights,
        &opts,
    )?;

    Ok(PipelinePrediction {
        head_classes: decode_labels(&j_h.label_block()),
        body_classes: decode_labels(&j_b.label_block()),
        report: Some(report),
    })
}

/// Accuracies over the unobserved columns, plus the solve report.
#[derive(Debug, Clone)]
pub struct SingleOutcome {
    pub head_accuracy: f64,
    pub body_accuracy: f64,
    pub eval_columns_head: usize,
    pub eval_columns_body: usize,
    pub report: Option<SolveReport>,
}

/// Full-pipeline run for one method, scored over the unobserved columns only.
#[allow(clippy::too_many_arguments)]
pub fn run_single_method(
    person: &PersonDataset,
    classes: usize,
    method: Method,
    mask_h: &ObservationMask,
    mask_b: &ObservationMask,
    weights: &SolverWeights,
    kernel: &RbfKernelParams,
    laplacian_weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SingleOutcome> {
    let prediction = predict_labels(
        person,
        classes,
        method,
        mask_h,
        mask_b,
        weights,
        kernel,
        laplacian_weight,
        tol,
        max_iter,
    )?;
    let t = person.samples();
    let eval_h = mask_h.complement(t);
    let eval_b = mask_b.complement(t);
    let head_accuracy = accuracy(&prediction.head_classes, &person.head_truth, &eval_h)?;
    let body_accuracy = accuracy(&prediction.body_classes, &person.body_truth, &eval_b)?;
    Ok(SingleOutcome {
        head_accuracy,
        body_accuracy,
        eval_columns_head: eval_h.iter().filter(|&&m| m).count(),
        eval_columns_body: eval_b.iter().filter(|&&m| m).count(),
        report: prediction.report,
    })
}

/// The main pipeline (GPR anchor + completion solver) for one mask pair.
#[allow(clippy::too_many_arguments)]
pub fn run_single(
    person: &PersonDataset,
    classes: usize,
    mask_h: &ObservationMask,
    mask_b: &ObservationMask,
    weights: &SolverWeights,
    kernel: &RbfKernelParams,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64, SolveReport)> {
    let outcome = run_single_method(
        person,
        classes,
        Method::GprMc,
        mask_h,
        mask_b,
        weights,
        kernel,
        10.0,
        tol,
        max_iter,
    )?;
    let report = outcome
        .report
        .expect("solver method always produces a report");
    Ok((outcome.head_accuracy, outcome.body_accuracy, report))
}

/// Splits `indices` into `folds` contiguous blocks, larger blocks first.
/// 32 observed labels over 5 folds give sizes 7,7,6,6,6.
fn block_folds(indices: &[usize], folds: usize) -> Result<Vec<Vec<usize>>> {
    if indices.len() < folds {
        return Err(Error::FoldConstruction(format!(
            "{} observed labels cannot fill {folds} folds",
            indices.len()
        )));
    }
    let base = indices.len() / folds;
    let remainder = indices.len() % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < remainder);
        out.push(indices[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

/// Selects solver weights and kernel hyperparameters by k-fold
/// cross-validation on the observed labels: folds are contiguous in time to
/// limit leakage through temporal smoothing, each grid point is scored by the
/// mean held-out-fold accuracy (head and body averaged), and ties break
/// toward smaller nu, then lambda, then mu.
pub fn cross_validate(
    person: &PersonDataset,
    mask_h: &ObservationMask,
    mask_b: &ObservationMask,
    config: &ExperimentConfig,
) -> Result<(SolverWeights, RbfKernelParams)> {
    config.validate()?;
    if config.grid_len() == 1 {
        return Ok((config.weight_grid[0], config.kernel_grid[0]));
    }
    let cv_method = config
        .methods
        .iter()
        .copied()
        .find(|m| m.uses_solver())
        .unwrap_or(Method::GprMc);

    let t = person.samples();
    let folds_h = block_folds(mask_h.indices(), config.folds)?;
    let folds_b = block_folds(mask_b.indices(), config.folds)?;

    let mut best: Option<(f64, SolverWeights, RbfKernelParams)> = None;
    for weights in &config.weight_grid {
        for kernel in &config.kernel_grid {
            let mut total = 0.0;
            let mut usable = true;
            for (fold_h, fold_b) in folds_h.iter().zip(folds_b.iter()) {
                let train_h: Vec<usize> = mask_h
                    .indices()
                    .iter()
                    .copied()
                    .filter(|i| !fold_h.contains(i))
                    .collect();
                let train_b: Vec<usize> = mask_b
                    .indices()
                    .iter()
                    .copied()
                    .filter(|i| !fold_b.contains(i))
                    .collect();
                let train_mask_h = ObservationMask::from_indices(train_h, t)?;
                let train_mask_b = ObservationMask::from_indices(train_b, t)?;

                let prediction = match predict_labels(
                    person,
                    config.classes,
                    cv_method,
                    &train_mask_h,
                    &train_mask_b,
                    weights,
                    kernel,
                    config.laplacian_weight,
                    config.tol,
                    config.max_iter,
                ) {
                    Ok(p) => p,
                    Err(Error::Divergence { .. })
                    | Err(Error::Numerical(_))
                    | Err(Error::IllConditionedKernel { .. }) => {
                        usable = false;
                        break;
                    }
                    Err(e) => return Err(e),
                };

                let mut eval_h = vec![false; t];
                for &i in fold_h {
                    eval_h[i] = true;
                }
                let mut eval_b = vec![false; t];
                for &i in fold_b {
                    eval_b[i] = true;
                }
                let acc_h = accuracy(&prediction.head_classes, &person.head_truth, &eval_h)?;
                let acc_b = accuracy(&prediction.body_classes, &person.body_truth, &eval_b)?;
                total += 0.5 * (acc_h + acc_b);
            }
            if !usable {
                continue;
            }
            let score = total / config.folds as f64;
            let candidate_key = (weights.tie_break_key(), kernel_key(kernel));
            let better = match &best {
                None => true,
                Some((best_score, bw, bk)) => {
                    score > *best_score + 1e-12
                        || ((score - best_score).abs() <= 1e-12
                            && candidate_key < (bw.tie_break_key(), kernel_key(bk)))
                }
            };
            if better {
                best = Some((score, *weights, *kernel));
            }
        }
    }
    best.map(|(_, w, k)| (w, k))
        .ok_or_else(|| Error::Numerical("every grid point failed during cross-validation".into()))
}

fn kernel_key(k: &RbfKernelParams) -> [f64; 3] {
    [k.length_scale, k.signal_variance, k.noise_variance]
}

/// One (person, fraction, method, repeat) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub person_id: String,
    pub fraction: f64,
    pub method: Method,
    pub repeat: usize,
    pub mask_seed_head: u64,
    pub mask_seed_body: u64,
    pub head_accuracy: Option<f64>,
    pub body_accuracy: Option<f64>,
    pub eval_columns_head: usize,
    pub eval_columns_body: usize,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

/// Aggregated row: mean and standard deviation over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub person_id: String,
    pub fraction: f64,
    pub method: Method,
    pub head_acc_mean: f64,
    pub head_acc_std: f64,
    pub body_acc_mean: f64,
    pub body_acc_std: f64,
    pub head_entropy: f64,
    pub body_entropy: f64,
}

/// Full sweep output: aggregates plus every per-repeat record, with the
/// configuration echoed for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub per_repeat: Vec<RepeatRecord>,
    pub failures: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the full sweep: for every person x fraction x repeat, draws fresh
/// diversity-checked masks, selects hyperparameters, and scores every
/// configured method. Per-unit failures are recorded and skipped in the
/// aggregation rather than aborting the sweep.
pub fn run_sweep(datasets: &[PersonDataset], config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidInput("no datasets supplied".into()));
    }

    let prepared: Vec<PersonDataset> = match config.pca_variance {
        None => datasets.to_vec(),
        Some(v) => datasets
            .iter()
            .map(|p| {
                let (head, _) = preprocess_features(&p.head_features, v)?;
                let (body, _) = preprocess_features(&p.body_features, v)?;
                Ok(PersonDataset {
                    head_features: head,
                    body_features: body,
                    ..p.clone()
                })
            })
            .collect::<Result<_>>()?,
    };
    for person in &prepared {
        person.validate(config.classes)?;
    }

    let entropies: Vec<(f64, f64)> = prepared
        .iter()
        .map(|p| {
            Ok((
                label_entropy(&p.head_truth, config.classes)?.value,
                label_entropy(&p.body_truth, config.classes)?.value,
            ))
        })
        .collect::<Result<_>>()?;

    let units: Vec<(usize, usize)> = (0..prepared.len())
        .flat_map(|p| (0..config.fractions.len()).map(move |f| (p, f)))
        .collect();

    let unit_records: Vec<Vec<RepeatRecord>> = units
        .par_iter()
        .map(|&(p_idx, f_idx)| run_unit(&prepared[p_idx], p_idx, f_idx, config))
        .collect::<Result<_>>()?;

    let per_repeat: Vec<RepeatRecord> = unit_records.into_iter().flatten().collect();
    let failures = per_repeat.iter().filter(|r| r.error.is_some()).count();

    let mut rows = Vec::new();
    for (p_idx, person) in prepared.iter().enumerate() {
        for &fraction in &config.fractions {
            for &method in &config.methods {
                let slice: Vec<&RepeatRecord> = per_repeat
                    .iter()
                    .filter(|r| {
                        r.person_id == person.person_id
                            && r.fraction == fraction
                            && r.method == method
                            && r.error.is_none()
                    })
                    .collect();
                if slice.is_empty() {
                    continue;
                }
                let heads: Vec<f64> = slice.iter().filter_map(|r| r.head_accuracy).collect();
                let bodies: Vec<f64> = slice.iter().filter_map(|r| r.body_accuracy).collect();
                let (head_acc_mean, head_acc_std) = mean_std(&heads);
                let (body_acc_mean, body_acc_std) = mean_std(&bodies);
                rows.push(SweepRow {
                    person_id: person.person_id.clone(),
                    fraction,
                    method,
                    head_acc_mean,
                    head_acc_std,
                    body_acc_mean,
                    body_acc_std,
                    head_entropy: entropies[p_idx].0,
                    body_entropy: entropies[p_idx].1,
                });
            }
        }
    }

    Ok(SweepResult {
        schema_version: SWEEP_SCHEMA_VERSION,
        config: config.clone(),
        rows,
        per_repeat,
        failures,
    })
}

fn run_unit(
    person: &PersonDataset,
    p_idx: usize,
    f_idx: usize,
    config: &ExperimentConfig,
) -> Result<Vec<RepeatRecord>> {
    let fraction = config.fractions[f_idx];
    let t = person.samples();
    let needs_cv = config.grid_len() > 1 && config.methods.iter().any(|m| m.uses_solver());
    let mut fixed_choice: Option<(SolverWeights, RbfKernelParams)> = None;
    let mut records = Vec::new();

    for repeat in 0..config.repeats {
        let seed_h = derive_seed(config.seed, &[p_idx as u64, f_idx as u64, repeat as u64, 0]);
        let seed_b = derive_seed(config.seed, &[p_idx as u64, f_idx as u64, repeat as u64, 1]);

        let base_record = |method: Method| RepeatRecord {
            person_id: person.person_id.clone(),
            fraction,
            method,
            repeat,
            mask_seed_head: seed_h,
            mask_seed_body: seed_b,
            head_accuracy: None,
            body_accuracy: None,
            eval_columns_head: 0,
            eval_columns_body: 0,
            iterations: None,
            converged: None,
            error: None,
        };

        let masks = generate_mask(
            t,
            fraction,
            &person.head_truth,
            config.diversity_threshold,
            seed_h,
            config.max_mask_retries,
        )
        .and_then(|mask_h| {
            let mask_b = generate_mask(
                t,
                fraction,
                &person.body_truth,
                config.diversity_threshold,
                seed_b,
                config.max_mask_retries,
            )?;
            Ok((mask_h, mask_b))
        });
        let (mask_h, mask_b) = match masks {
            Ok(m) => m,
            Err(e) => {
                for &method in &config.methods {
                    let mut record = base_record(method);
                    record.error = Some(e.to_string());
                    records.push(record);
                }
                continue;
            }
        };

        let choice = match (needs_cv, fixed_choice) {
            (false, _) => (config.weight_grid[0], config.kernel_grid[0]),
            (true, Some(fixed)) if !config.cv_per_repeat => fixed,
            (true, _) => match cross_validate(person, &mask_h, &mask_b, config) {
                Ok(c) => {
                    if !config.cv_per_repeat {
                        fixed_choice = Some(c);
                    }
                    c
                }
                Err(e) => {
                    for &method in &config.methods {
                        let mut record = base_record(method);
                        record.error = Some(format!("cross-validation failed: {e}"));
                        records.push(record);
                    }
                    continue;
                }
            },
        };

        for &method in &config.methods {
            let mut record = base_record(method);
            match run_single_method(
                person,
                config.classes,
                method,
                &mask_h,
                &mask_b,
                &choice.0,
                &choice.1,
                config.laplacian_weight,
                config.tol,
                config.max_iter,
            ) {
                Ok(outcome) => {
                    record.head_accuracy = Some(outcome.head_accuracy);
                    record.body_accuracy = Some(outcome.body_accuracy);
                    record.eval_columns_head = outcome.eval_columns_head;
                    record.eval_columns_body = outcome.eval_columns_body;
                    record.iterations = outcome.report.as_ref().map(|r| r.iterations);
                    record.converged = outcome.report.as_ref().map(|r| r.converged);
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            records.push(record);
        }
    }
    Ok(records)
}

impl SweepResult {
    /// Writes the aggregate table as `sweep.csv`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "person_id",
            "fraction",
            "method",
            "head_acc_mean",
            "head_acc_std",
            "body_acc_mean",
            "body_acc_std",
            "head_entropy",
            "body_entropy",
        ])
        .map_err(|e| Error::Numerical(e.to_string()))?;
        for row in &self.rows {
            w.write_record([
                row.person_id.clone(),
                row.fraction.to_string(),
                row.method.to_string(),
                row.head_acc_mean.to_string(),
                row.head_acc_std.to_string(),
                row.body_acc_mean.to_string(),
                row.body_acc_std.to_string(),
                row.head_entropy.to_string(),
                row.body_entropy.to_string(),
            ])
            .map_err(|e| Error::Numerical(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the full result (config echo plus per-repeat records) as JSON.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Numerical(format!("json write failed: {e}")))?;
        Ok(())
    }

    /// Parses a sweep JSON, checking the schema version before anything else.
    pub fn read_json(path: &Path) -> Result<SweepResult> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), "-", e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SWEEP_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "sweep schema version {v} is not supported (expected {SWEEP_SCHEMA_VERSION})"
                )))
            }
            None => {
                return Err(Error::Checkpoint(
                    "sweep json carries no schema_version".into(),
                ))
            }
        }
        serde_json::from_value(value).map_err(|e| Error::parse(path, 0, "-", e.to_string()))
    }

    /// Re-aggregates the per-repeat records into plot-ready rows, one per
    /// (fraction, method, stream). Macro statistics average person-level
    /// means; micro statistics pool every record weighted by its number of
    /// evaluated columns.
    pub fn aggregate_report(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for &fraction in &self.config.fractions {
            for &method in &self.config.methods {
                for stream in ["head", "body"] {
                    let records: Vec<(&RepeatRecord, f64, usize)> = self
                        .per_repeat
                        .iter()
                        .filter(|r| {
                            r.fraction == fraction && r.method == method && r.error.is_none()
                        })
                        .filter_map(|r| {
                            let (acc, cols) = match stream {
                                "head" => (r.head_accuracy, r.eval_columns_head),
                                _ => (r.body_accuracy, r.eval_columns_body),
                            };
                            acc.map(|a| (r, a, cols))
                        })
                        .collect();
                    if records.is_empty() {
                        continue;
                    }

                    // Macro: average within each person first.
                    let mut person_means: Vec<f64> = Vec::new();
                    let mut seen: Vec<&str> = Vec::new();
                    for (r, _, _) in &records {
                        if !seen.contains(&r.person_id.as_str()) {
                            seen.push(&r.person_id);
                        }
                    }
                    for person in seen {
                        let vals: Vec<f64> = records
                            .iter()
                            .filter(|(r, _, _)| r.person_id == person)
                            .map(|(_, a, _)| *a)
                            .collect();
                        person_means.push(vals.iter().sum::<f64>() / vals.len() as f64);
                    }
                    let (macro_mean, macro_std) = mean_std(&person_means);

                    // Micro: weight each record by its evaluated column count.
                    let total_cols: f64 = records.iter().map(|(_, _, c)| *c as f64).sum();
                    let micro_mean =
                        records.iter().map(|(_, a, c)| a * *c as f64).sum::<f64>() / total_cols;
                    let micro_var = records
                        .iter()
                        .map(|(_, a, c)| *c as f64 * (a - micro_mean) * (a - micro_mean))
                        .sum::<f64>()
                        / total_cols;

                    out.push(ReportRow {
                        fraction,
                        method,
                        stream: stream.to_string(),
                        macro_mean,
                        macro_std,
                        micro_mean,
                        micro_std: micro_var.sqrt(),
                        records: records.len(),
                    });
                }
            }
        }
        out
    }
}

/// Plot-ready aggregate for one (fraction, method, stream).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub fraction: f64,
    pub method: Method,
    pub stream: String,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub records: usize,
}

/// Writes report rows as CSV for external plotting.
pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "fraction",
        "method",
        "stream",
        "macro_mean",
        "macro_std",
        "micro_mean",
        "micro_std",
        "records",
    ])
    .map_err(|e| Error::Numerical(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.fraction.to_string(),
            r.method.to_string(),
            r.stream.clone(),
            r.macro_mean.to_string(),
            r.macro_std.to_string(),
            r.micro_mean.to_string(),
            r.micro_std.to_string(),
            r.records.to_string(),
        ])
        .map_err(|e| Error::Numerical(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
