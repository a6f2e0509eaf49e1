//! Pose-angle discretization, one-hot label matrices, observation masks with
//! training-set diversity rejection, and label metrics (accuracy, entropy).
//!
//! Pose orientation is a `c`-class problem (default 8): class `k` covers the
//! angle sector `[k*360/c, (k+1)*360/c)` degrees, left-closed right-open,
//! starting at 0°. Entropy is reported in nats.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of orientation classes (360° split into eight sectors).
pub const DEFAULT_CLASSES: usize = 8;

/// A discretized pose orientation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoseClass {
    pub index: usize,
}

impl PoseClass {
    /// Discretizes an angle in degrees into one of `classes` sectors.
    ///
    /// The angle is normalized into `[0, 360)` first, so negative angles and
    /// angles above 360° are valid inputs.
    pub fn from_angle(angle_deg: f64, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if !angle_deg.is_finite() {
            return Err(Error::InvalidInput(format!(
                "pose angle must be finite, got {angle_deg}"
            )));
        }
        let mut normalized = angle_deg.rem_euclid(360.0);
        // rem_euclid of a tiny negative angle can round to exactly 360.0.
        if normalized >= 360.0 {
            normalized = 0.0;
        }
        let sector = 360.0 / classes as f64;
        let index = ((normalized / sector) as usize).min(classes - 1);
        Ok(PoseClass { index })
    }

    /// The `[lo, hi)` angle sector in degrees covered by this class.
    pub fn sector_deg(self, classes: usize) -> (f64, f64) {
        let width = 360.0 / classes as f64;
        (self.index as f64 * width, (self.index + 1) as f64 * width)
    }
}

/// One-hot encodes an angle: exactly one entry equals 1, at the sector index.
pub fn encode_angle(angle_deg: f64, classes: usize) -> Result<DVector<f64>> {
    let class = PoseClass::from_angle(angle_deg, classes)?;
    Ok(one_hot(class.index, classes))
}

/// One-hot vector with a 1 at `index`.
pub fn one_hot(index: usize, classes: usize) -> DVector<f64> {
    assert!(
        index < classes,
        "class index {index} out of range for {classes} classes"
    );
    let mut v = DVector::zeros(classes);
    v[index] = 1.0;
    v
}

/// Argmax readout of a (completed) label block, one class index per column.
/// Ties are broken toward the lowest index, so an all-equal column decodes to 0.
pub fn decode_labels(values: &DMatrix<f64>) -> Vec<usize> {
    (0..values.ncols())
        .map(|t| {
            let col = values.column(t);
            let mut best = 0usize;
            let mut best_val = col[0];
            for (i, &v) in col.iter().enumerate().skip(1) {
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            best
        })
        .collect()
}

/// One-hot pose labels `c x T` with an observation mask over the columns.
///
/// Observed columns are exact one-hot; unobserved columns are zero (they get
/// filled by interpolation or by the solver downstream).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: DMatrix<f64>,
    observed: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(values: DMatrix<f64>, observed: Vec<bool>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::InvalidInput(
                "label matrix needs at least one column".into(),
            ));
        }
        if values.ncols() != observed.len() {
            return Err(Error::ShapeMismatch(format!(
                "label matrix has {} columns but the mask has {} entries",
                values.ncols(),
                observed.len()
            )));
        }
        for (t, &obs) in observed.iter().enumerate() {
            if !obs {
                continue;
            }
            let col = values.column(t);
            let ones = col.iter().filter(|&&v| v == 1.0).count();
            let zeros = col.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != col.len() {
                return Err(Error::InvalidInput(format!(
                    "observed column {t} is not exact one-hot"
                )));
            }
        }
        Ok(LabelMatrix { values, observed })
    }

    /// Builds the partial label matrix from full ground-truth classes and an
    /// observation mask: one-hot at observed columns, zeros elsewhere.
    pub fn from_masked_classes(
        truth: &[usize],
        classes: usize,
        mask: &ObservationMask,
    ) -> Result<Self> {
        let t = truth.len();
        if t == 0 {
            return Err(Error::InvalidInput("empty label vector".into()));
        }
        let mut values = DMatrix::zeros(classes, t);
        let mut observed = vec![false; t];
        for &idx in mask.indices() {
            if idx >= t {
                return Err(Error::InvalidInput(format!(
                    "mask index {idx} out of range for {t} samples"
                )));
            }
            let class = truth[idx];
            if class >= classes {
                return Err(Error::InvalidInput(format!(
                    "class {class} at column {idx} out of range for {classes} classes"
                )));
            }
            values[(class, idx)] = 1.0;
            observed[idx] = true;
        }
        Ok(LabelMatrix { values, observed })
    }

    /// Label matrix with every column observed.
    pub fn fully_observed(truth: &[usize], classes: usize) -> Result<Self> {
        let mask = ObservationMask::full(truth.len());
        Self::from_masked_classes(truth, classes, &mask)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn classes(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        self.observed
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| o.then_some(i))
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }
}

/// A random train/test partition over time columns: the indexed columns carry
/// manual annotations, the rest are to be predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMask {
    indices: Vec<usize>,
    fraction: f64,
    seed: u64,
}

impl ObservationMask {
    /// Mask covering every column.
    pub fn full(t: usize) -> Self {
        ObservationMask {
            indices: (0..t).collect(),
            fraction: 1.0,
            seed: 0,
        }
    }

    /// Mask from explicit indices (sorted and deduplicated).
    pub fn from_indices(mut indices: Vec<usize>, t: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.last().is_some_and(|&i| i >= t) {
            return Err(Error::InvalidInput(format!(
                "mask index out of range for {t} samples"
            )));
        }
        let fraction = indices.len() as f64 / t as f64;
        Ok(ObservationMask {
            indices,
            fraction,
            seed: 0,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Boolean observed indicator of length `t`.
    pub fn to_bool(&self, t: usize) -> Vec<bool> {
        let mut mask = vec![false; t];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }

    /// Boolean indicator of the unobserved (test) columns.
    pub fn complement(&self, t: usize) -> Vec<bool> {
        self.to_bool(t).into_iter().map(|b| !b).collect()
    }
}

/// Draws a uniform random observation mask of size `round(fraction * t)`,
/// rejecting draws whose training labels have low diversity: the masked-in
/// label entropy must reach `diversity_threshold` times the entropy of
/// `full_labels`. Deterministic given `seed`; redraws consume the same RNG
/// stream, so retries stay reproducible.
pub fn generate_mask(
    t: usize,
    fraction: f64,
    full_labels: &[usize],
    diversity_threshold: f64,
    seed: u64,
    max_retries: usize,
) -> Result<ObservationMask> {
    if t == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if full_labels.len() != t {
        return Err(Error::ShapeMismatch(format!(
            "label vector length {} does not match t = {t}",
            full_labels.len()
        )));
    }
    if max_retries == 0 {
        return Err(Error::InvalidInput("max_retries must be at least 1".into()));
    }

    let classes = full_labels.iter().max().map_or(1, |&m| m + 1);
    let full_entropy = label_entropy(full_labels, classes)?.value;
    let required = diversity_threshold * full_entropy;

    let size = (fraction * t as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_entropy = f64::NEG_INFINITY;

    for _ in 0..max_retries {
        let mut indices: Vec<usize> = rand::seq::index::sample(&mut rng, t, size.min(t)).into_vec();
        indices.sort_unstable();
        let masked_entropy = if indices.is_empty() {
            0.0
        } else {
            let masked: Vec<usize> = indices.iter().map(|&i| full_labels[i]).collect();
            label_entropy(&masked, classes)?.value
        };
        if masked_entropy >= required {
            return Ok(ObservationMask {
                indices,
                fraction,
                seed,
            });
        }
        best_entropy = best_entropy.max(masked_entropy);
    }

    Err(Error::DiversityUnsatisfiable {
        retries: max_retries,
        best_entropy,
        required_entropy: required,
    })
}

/// Shannon entropy of a class distribution, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// `H = -sum_i P_i ln P_i` over classes with nonzero proportion.
    pub value: f64,
    /// Per-class proportions, summing to 1.
    pub class_proportions: Vec<f64>,
}

/// Entropy of a set of class labels. Uniform over `c` classes gives `ln c`
/// (about 2.08 for eight classes); a single repeated class gives 0.
pub fn label_entropy(labels: &[usize], classes: usize) -> Result<EntropyReport> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("entropy of an empty label set".into()));
    }
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::InvalidInput(format!(
                "class {l} out of range for {classes} classes"
            )));
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    let proportions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let value = -proportions
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>();
    Ok(EntropyReport {
        value: value.max(0.0),
        class_proportions: proportions,
    })
}

/// Fraction of positions selected by `eval_mask` where `predicted` matches
/// `truth`. The mask selects the unobserved (test) columns.
pub fn accuracy(predicted: &[usize], truth: &[usize], eval_mask: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.len() != eval_mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "accuracy inputs differ in length: {} vs {} vs {}",
            predicted.len(),
            truth.len(),
            eval_mask.len()
        )));
    }
    let total = eval_mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "accuracy over an empty evaluation set".into(),
        ));
    }
    let correct = eval_mask
        .iter()
        .zip(predicted.iter().zip(truth.iter()))
        .filter(|(&m, (p, t))| m && p == t)
        .count();
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_sector_example() {
        // 60 degrees falls in the second sector [45, 90).
        let v = encode_angle(60.0, 8).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_lower_boundary() {
        let v = encode_angle(0.0, 8).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v.sum(), 1.0);
    }

    #[test]
    fn encode_negative_angle_wraps() {
        // -45 normalizes to 315; 315 / 45 = 7.
        let expected = (-45.0f64).rem_euclid(360.0);
        assert_eq!(expected, 315.0);
        let v = encode_angle(-45.0, 8).unwrap();
        assert_eq!(v[7], 1.0);
        assert_eq!(v.sum(), 1.0);
    }

    #[test]
    fn sector_bounds_are_left_closed() {
        let class = PoseClass::from_angle(60.0, 8).unwrap();
        assert_eq!(class.sector_deg(8), (45.0, 90.0));
        let boundary = PoseClass::from_angle(45.0, 8).unwrap();
        assert_eq!(boundary.index, 1);
        let below = PoseClass::from_angle(44.9999, 8).unwrap();
        assert_eq!(below.index, 0);
    }

    #[test]
    fn encode_rejects_non_finite() {
        assert!(matches!(
            encode_angle(f64::NAN, 8),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            encode_angle(f64::INFINITY, 8),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn encode_tiny_negative_angle_stays_in_range() {
        for &a in &[-1e-300, -1e-16, -f64::MIN_POSITIVE] {
            let v = encode_angle(a, 8).unwrap();
            assert_eq!(v.sum(), 1.0);
        }
    }

    #[test]
    fn decode_unique_max() {
        let m = DMatrix::from_column_slice(4, 1, &[0.1, 0.9, 0.0, 0.3]);
        assert_eq!(decode_labels(&m), vec![1]);
    }

    #[test]
    fn decode_tie_takes_lowest_index() {
        let m = DMatrix::zeros(5, 2);
        assert_eq!(decode_labels(&m), vec![0, 0]);
    }

    #[test]
    fn encode_decode_round_trip_all_classes() {
        for classes in 2..=16 {
            for k in 0..classes {
                let m = DMatrix::from_column_slice(classes, 1, one_hot(k, classes).as_slice());
                assert_eq!(decode_labels(&m), vec![k], "c = {classes}, k = {k}");
            }
        }
    }

    #[test]
    fn mask_full_fraction_takes_everything() {
        let labels = vec![0, 1, 2, 3, 0, 1, 2, 3];
        let mask = generate_mask(8, 1.0, &labels, 0.75, 42, 100).unwrap();
        assert_eq!(mask.indices(), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn mask_size_matches_paper_setting() {
        // 5% of 645 annotated samples rounds to 32.
        let labels: Vec<usize> = (0..645).map(|i| i % 8).collect();
        let mask = generate_mask(645, 0.05, &labels, 0.75, 7, 100).unwrap();
        assert_eq!(mask.len(), 32);
    }

    #[test]
    fn mask_single_class_sequence_accepted_immediately() {
        // Full entropy is 0, so any draw satisfies the threshold.
        let labels = vec![3; 100];
        let mask = generate_mask(100, 0.05, &labels, 0.75, 1, 1).unwrap();
        assert_eq!(mask.len(), 5);
    }

    #[test]
    fn mask_deterministic_given_seed() {
        let labels: Vec<usize> = (0..200).map(|i| (i / 25) % 8).collect();
        let a = generate_mask(200, 0.1, &labels, 0.75, 99, 100).unwrap();
        let b = generate_mask(200, 0.1, &labels, 0.75, 99, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_diversity_rejection_reports_best_entropy() {
        // Two classes, the second occupies a single column. A 1-sample mask can
        // never achieve 90% of the full entropy.
        let mut labels = vec![0usize; 50];
        labels[25] = 1;
        let err = generate_mask(50, 0.02, &labels, 0.9, 5, 20).unwrap_err();
        match err {
            Error::DiversityUnsatisfiable {
                retries,
                best_entropy,
                required_entropy,
            } => {
                assert_eq!(retries, 20);
                assert!(best_entropy < required_entropy);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn entropy_uniform_eight_classes() {
        let labels: Vec<usize> = (0..800).map(|i| i % 8).collect();
        let report = label_entropy(&labels, 8).unwrap();
        assert!((report.value - 2.0794).abs() < 1e-3);
        assert!((report.value - (8.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_single_class_is_zero() {
        let report = label_entropy(&[5; 64], 8).unwrap();
        assert_eq!(report.value, 0.0);
    }

    #[test]
    fn entropy_two_even_classes_is_ln2() {
        let labels = vec![0, 1, 0, 1];
        let report = label_entropy(&labels, 8).unwrap();
        assert!((report.value - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(report.class_proportions[0], 0.5);
        assert_eq!(report.class_proportions[1], 0.5);
    }

    #[test]
    fn accuracy_examples() {
        let truth = vec![0, 1, 2, 3, 4];
        let mask = vec![true; 5];
        assert_eq!(accuracy(&truth, &truth, &mask).unwrap(), 1.0);
        let wrong = vec![1, 2, 3, 4, 5];
        assert_eq!(accuracy(&wrong, &truth, &mask).unwrap(), 0.0);
        // 3 correct of 4 masked positions.
        let predicted = vec![0, 1, 2, 9, 9];
        let mask = vec![true, true, true, true, false];
        assert_eq!(accuracy(&predicted, &truth, &mask).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_empty_mask_is_undefined() {
        let err = accuracy(&[0], &[0], &[false]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn label_matrix_validates_one_hot() {
        let mut values = DMatrix::zeros(3, 2);
        values[(0, 0)] = 0.5;
        assert!(LabelMatrix::new(values, vec![true, false]).is_err());

        let mut values = DMatrix::zeros(3, 2);
        values[(1, 0)] = 1.0;
        let lm = LabelMatrix::new(values, vec![true, false]).unwrap();
        assert_eq!(lm.observed_count(), 1);
        assert_eq!(lm.observed_indices(), vec![0]);
    }

    proptest! {
        #[test]
        fn mask_size_is_round_of_fraction(t in 1usize..400, frac in 0.01f64..1.0, seed in 0u64..1000) {
            let labels = vec![0usize; t];
            let mask = generate_mask(t, frac, &labels, 0.0, seed, 100).unwrap();
            prop_assert_eq!(mask.len(), (frac * t as f64).round() as usize);
            // Indices are sorted, unique, in range.
            prop_assert!(mask.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(mask.indices().iter().all(|&i| i < t));
        }

        #[test]
        fn entropy_permutation_invariant(labels in proptest::collection::vec(0usize..6, 1..200)) {
            let classes = 6;
            let base = label_entropy(&labels, classes).unwrap().value;
            // Relabel classes by a fixed permutation.
            let perm = [3usize, 0, 5, 1, 4, 2];
            let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
            let permuted = label_entropy(&relabeled, classes).unwrap().value;
            prop_assert!((base - permuted).abs() < 1e-12);
            prop_assert!(base <= (classes as f64).ln() + 1e-12);
        }

        #[test]
        fn accuracy_self_is_one_and_mask_local(
            truth in proptest::collection::vec(0usize..8, 2..100),
            seed in 0u64..500,
        ) {
            use rand::Rng;
            let t = truth.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mask: Vec<bool> = (0..t).map(|_| rng.random_bool(0.5)).collect();
            if mask.iter().all(|&m| !m) {
                mask[0] = true;
            }
            prop_assert_eq!(accuracy(&truth, &truth, &mask).unwrap(), 1.0);

            // Perturbing predictions outside the mask never changes the value.
            let mut perturbed = truth.clone();
            for (i, p) in perturbed.iter_mut().enumerate() {
                if !mask[i] {
                    *p = (*p + 1) % 8;
                }
            }
            prop_assert_eq!(accuracy(&perturbed, &truth, &mask).unwrap(), 1.0);
        }
    }
}
