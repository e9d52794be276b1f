//! Channel form of the distance-based classifier.
//!
//! Only the ancilla and feature registers are quantum. A training index is
//! drawn classically, the comparison state is prepared and interfered, and
//! ancilla outcome 0 emits that index's label. All probabilities here carry
//! the full `1/4` normalization of the two `1/sqrt(2)` stages, so they lie
//! in `[0, 1]`.

use rand::Rng;

use crate::data::{loocv_folds, Dataset, StatsScope};
use crate::encoding::{self, check_len, FeatureVector, Preprocessing};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::qstate::{self, gates};
use crate::ClassId;

pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Unit feature vectors with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    samples: Vec<FeatureVector>,
    labels: Vec<ClassId>,
    num_classes: usize,
}

impl TrainingSet {
    pub fn new(samples: Vec<FeatureVector>, labels: Vec<ClassId>, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if samples.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                found: labels.len(),
            });
        }
        let dim = samples[0].len();
        for x in &samples {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            if !x.is_unit() {
                return Err(Error::NotNormalized(x.norm().powi(2)));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {num_classes} classes"
            )));
        }
        Ok(TrainingSet {
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[FeatureVector] {
        &self.samples
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&FeatureVector, ClassId) {
        (&self.samples[i], self.labels[i])
    }

    pub fn feature_len(&self) -> usize {
        self.samples[0].len()
    }

    /// Amplitude normalization `1/sqrt(M)` of the superposed training state.
    pub fn amplitude_norm(&self) -> f64 {
        1.0 / (self.len() as f64).sqrt()
    }
}

/// Post-selection probability `|test + sample|^2 / 4` for one comparison.
pub fn success_probability(test: &FeatureVector, sample: &FeatureVector) -> Result<f64> {
    check_len(test, sample)?;
    let s: f64 = test
        .values()
        .iter()
        .zip(sample.values())
        .map(|(a, b)| (a + b).powi(2))
        .sum();
    Ok((s / 4.0).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution {
    /// `p(0, y)` per class.
    pub joint: Vec<f64>,
    /// `p(0)`.
    pub total: f64,
    /// `p(y | 0)` per class.
    pub conditional: Vec<f64>,
}

impl ClassDistribution {
    pub fn argmax(&self) -> ClassId {
        self.conditional
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }
}

/// Exact joint and conditional class probabilities for one test vector.
pub fn class_distribution(test: &FeatureVector, train: &TrainingSet) -> Result<ClassDistribution> {
    let m = train.len() as f64;
    let mut joint = vec![0.0; train.num_classes()];
    for (x, &y) in train.samples.iter().zip(&train.labels) {
        joint[y] += success_probability(test, x)? / m;
    }
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroSuccessProbability);
    }
    let conditional = joint.iter().map(|p| p / total).collect();
    Ok(ClassDistribution {
        joint,
        total,
        conditional,
    })
}

/// How the sampler prepares each comparison state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PrepPath {
    /// Build the state directly from the amplitudes.
    #[default]
    Direct,
    /// Run the synthesized preparation circuit.
    Circuit,
}

/// Ancilla branch probabilities `(p0, p1)` for one comparison, simulated on
/// the state-vector backend.
pub fn simulate_comparison(
    test: &FeatureVector,
    sample: &FeatureVector,
    path: PrepPath,
) -> Result<(f64, f64)> {
    let state = match path {
        PrepPath::Direct => {
            qstate::apply(&encoding::comparison_state(test, sample)?, &gates::h(), &[0])?
        }
        PrepPath::Circuit => encoding::prep_circuit(test, sample)?.run_from_zero()?,
    };
    let [b0, b1] = qstate::measure_qubit(&state, 0)?;
    Ok((b0.probability, b1.probability))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassificationTranscript {
    pub attempts: usize,
    pub sampled_indices: Vec<usize>,
    pub final_label: Option<ClassId>,
    pub succeeded: bool,
}

/// Repeat-until-success sampling: draw an index, interfere, measure the
/// ancilla, and emit the label on outcome 0.
pub fn sample_classify(
    test: &FeatureVector,
    train: &TrainingSet,
    seed: u64,
    max_attempts: usize,
) -> Result<ClassificationTranscript> {
    sample_classify_with(test, train, &mut stream_rng(seed, 0), max_attempts, PrepPath::Direct)
}

pub fn sample_classify_with<R: Rng>(
    test: &FeatureVector,
    train: &TrainingSet,
    rng: &mut R,
    max_attempts: usize,
    path: PrepPath,
) -> Result<ClassificationTranscript> {
    if max_attempts == 0 {
        return Err(Error::InvalidArgument("max_attempts must be at least 1".into()));
    }
    let mut sampled_indices = Vec::new();
    for attempt in 1..=max_attempts {
        let i = rng.random_range(0..train.len());
        sampled_indices.push(i);
        let (p0, _) = simulate_comparison(test, &train.samples[i], path)?;
        if rng.random::<f64>() < p0 {
            return Ok(ClassificationTranscript {
                attempts: attempt,
                sampled_indices,
                final_label: Some(train.labels[i]),
                succeeded: true,
            });
        }
    }
    Ok(ClassificationTranscript {
        attempts: max_attempts,
        sampled_indices,
        final_label: None,
        succeeded: false,
    })
}

/// Label counts from `runs` independent seeded classifications; the last
/// slot counts exhausted runs.
pub fn sample_label_counts(
    test: &FeatureVector,
    train: &TrainingSet,
    seed: u64,
    runs: usize,
    max_attempts: usize,
    exec: Execution,
) -> Result<Vec<u64>> {
    let outcomes = exec.try_map(runs, |r| {
        let mut rng = stream_rng(seed, r as u64);
        sample_classify_with(test, train, &mut rng, max_attempts, PrepPath::Direct)
            .map(|t| t.final_label)
    })?;
    let mut counts = vec![0u64; train.num_classes() + 1];
    for o in outcomes {
        counts[o.unwrap_or(train.num_classes())] += 1;
    }
    Ok(counts)
}

/// Leave-one-out summary tables, indexed `[test class][sample class]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoocvTables {
    pub class_names: Vec<String>,
    /// Mean post-selection probability over ordered (test, sample) pairs.
    pub post_selection: Vec<Vec<f64>>,
    /// Mean conditional output distribution per test class.
    pub conditional: Vec<Vec<f64>>,
    /// Mean probability of emitting the true class (diagonal of `conditional`).
    pub success: Vec<f64>,
}

struct FoldSummary {
    label: ClassId,
    pair_sums: Vec<f64>,
    pair_counts: Vec<usize>,
    conditional: Vec<f64>,
}

/// Exact leave-one-out evaluation of the channel classifier.
pub fn loocv_report(
    dataset: &Dataset,
    mode: Preprocessing,
    scope: StatsScope,
    exec: Execution,
) -> Result<LoocvTables> {
    dataset.require_per_class(2)?;
    let k = dataset.num_classes();
    let folds = loocv_folds(dataset, mode, scope)?;
    let summaries = exec.try_map(folds.len(), |f| -> Result<FoldSummary> {
        let fold = &folds[f];
        let mut pair_sums = vec![0.0; k];
        let mut pair_counts = vec![0; k];
        for (x, &y) in fold.train.samples().iter().zip(fold.train.labels()) {
            pair_sums[y] += success_probability(&fold.test, x)?;
            pair_counts[y] += 1;
        }
        let dist = class_distribution(&fold.test, &fold.train)?;
        Ok(FoldSummary {
            label: fold.test_label,
            pair_sums,
            pair_counts,
            conditional: dist.conditional,
        })
    })?;

    let mut sums = vec![vec![0.0; k]; k];
    let mut counts = vec![vec![0usize; k]; k];
    let mut cond = vec![vec![0.0; k]; k];
    let mut tests = vec![0usize; k];
    for s in &summaries {
        for d in 0..k {
            sums[s.label][d] += s.pair_sums[d];
            counts[s.label][d] += s.pair_counts[d];
            cond[s.label][d] += s.conditional[d];
        }
        tests[s.label] += 1;
    }
    let post_selection = sums
        .iter()
        .zip(&counts)
        .map(|(row, n)| row.iter().zip(n).map(|(s, &c)| s / c as f64).collect())
        .collect();
    let conditional: Vec<Vec<f64>> = cond
        .iter()
        .zip(&tests)
        .map(|(row, &n)| row.iter().map(|v| v / n as f64).collect())
        .collect();
    let success = (0..k).map(|c| conditional[c][c]).collect();
    Ok(LoocvTables {
        class_names: dataset.class_names().to_vec(),
        post_selection,
        conditional,
        success,
    })
}
