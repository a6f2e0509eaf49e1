//! Shared fixtures for the solver benchmarks: a default-sized synthetic
//! person with masks, anchors, and assembled matrices.

use hbpe_core::*;
use nalgebra::DMatrix;

pub struct BenchProblem {
    pub person: PersonDataset,
    pub mask_h: ObservationMask,
    pub mask_b: ObservationMask,
    pub labels_h: LabelMatrix,
    pub labels_b: LabelMatrix,
    pub anchor_h: DMatrix<f64>,
    pub anchor_b: DMatrix<f64>,
    pub j0_h: HeterogeneousMatrix,
    pub j0_b: HeterogeneousMatrix,
    pub weights: SolverWeights,
    pub kernel: RbfKernelParams,
}

/// Default-sized instance (600 samples, 8 classes, 20-dim features, 5% masks).
pub fn default_problem() -> BenchProblem {
    let spec = SyntheticSpec::default();
    let person = generate_synthetic(&spec).expect("valid default spec");
    let t = person.samples();
    let mask_h = generate_mask(t, 0.05, &person.head_truth, 0.75, 1, 100).expect("mask");
    let mask_b = generate_mask(t, 0.05, &person.body_truth, 0.75, 2, 100).expect("mask");
    let kernel = hbpe_core::experiment::default_pipeline_kernel();

    let labels_h =
        LabelMatrix::from_masked_classes(&person.head_truth, 8, &mask_h).expect("labels");
    let labels_b =
        LabelMatrix::from_masked_classes(&person.body_truth, 8, &mask_b).expect("labels");
    let anchor_h = interpolate_labels(&labels_h, Method::GprMc, &kernel, 10.0)
        .expect("anchor")
        .values;
    let anchor_b = interpolate_labels(&labels_b, Method::GprMc, &kernel, 10.0)
        .expect("anchor")
        .values;
    let feat_h = person.head_features.clone();
    let feat_b = person.body_features.clone();
    let anchor_h = HeterogeneousMatrix::from_blocks(&anchor_h, &feat_h)
        .expect("anchor stack")
        .data()
        .clone();
    let anchor_b = HeterogeneousMatrix::from_blocks(&anchor_b, &feat_b)
        .expect("anchor stack")
        .data()
        .clone();
    let j0_h = build_heterogeneous(&labels_h, &feat_h, None).expect("j0");
    let j0_b = build_heterogeneous(&labels_b, &feat_b, None).expect("j0");

    BenchProblem {
        person,
        mask_h,
        mask_b,
        labels_h,
        labels_b,
        anchor_h,
        anchor_b,
        j0_h,
        j0_b,
        weights: SolverWeights::default(),
        kernel,
    }
}
