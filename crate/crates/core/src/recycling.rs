//! Reuse of the post-measurement state after a failed comparison.
//!
//! When the ancilla reads 1 the feature register is left in `(c - s)` up to
//! normalization. That state replaces the test vector in the next
//! comparison instead of preparing a fresh copy.

use rand::Rng;

use crate::classifier::{success_probability, TrainingSet};
use crate::data::{loocv_folds, Dataset, StatsScope};
use crate::encoding::{check_len, FeatureVector, Preprocessing};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::oqw::{Arrangement, GraphKind, WalkGraph};
use crate::ClassId;

/// Branch weights below this are treated as zero.
pub const BRANCH_TOL: f64 = 1e-15;

/// Probability of `outcome` when comparing `current` with `sample`, and the
/// feature state left behind.
pub fn post_measure_state(
    current: &FeatureVector,
    sample: &FeatureVector,
    outcome: u8,
) -> Result<(f64, FeatureVector)> {
    check_len(current, sample)?;
    let sign = match outcome {
        0 => 1.0,
        1 => -1.0,
        other => {
            return Err(Error::InvalidArgument(format!("outcome {other} is not a bit")));
        }
    };
    let v: Vec<f64> = current
        .values()
        .iter()
        .zip(sample.values())
        .map(|(c, s)| c + sign * s)
        .collect();
    let n2: f64 = v.iter().map(|x| x * x).sum();
    let p = n2 / 4.0;
    if p <= BRANCH_TOL {
        return Err(Error::ZeroProbabilityBranch);
    }
    let inv = n2.sqrt().recip();
    Ok((p.min(1.0), FeatureVector::new(v.into_iter().map(|x| x * inv).collect())?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecycleStep {
    pub sampled_index: usize,
    pub ancilla_outcome: u8,
    pub pre_state: FeatureVector,
    /// Equal to `pre_state` when the outcome is 0.
    pub post_state: FeatureVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecycleTranscript {
    /// Steps of the final attempt.
    pub steps: Vec<RecycleStep>,
    /// `None` when every step failed.
    pub label: Option<ClassId>,
    /// Attempts made, including the final one.
    pub attempts: usize,
}

fn check_graph(graph: Option<&WalkGraph>, train: &TrainingSet) -> Result<()> {
    match graph {
        Some(g) if g.len() != train.len() => Err(Error::DimensionMismatch {
            expected: train.len(),
            found: g.len(),
        }),
        _ => Ok(()),
    }
}

/// Seeded recycling run of at most `max_steps` comparisons. With a graph,
/// node `n` holds `train.sample(n)` and later indices are drawn from the
/// current node's out-neighbors; otherwise uniformly from the whole set.
pub fn recycle_classify(
    test: &FeatureVector,
    train: &TrainingSet,
    graph: Option<&WalkGraph>,
    seed: u64,
    max_steps: usize,
) -> Result<RecycleTranscript> {
    recycle_classify_with(test, train, graph, &mut stream_rng(seed, 0), max_steps)
}

pub fn recycle_classify_with<R: Rng>(
    test: &FeatureVector,
    train: &TrainingSet,
    graph: Option<&WalkGraph>,
    rng: &mut R,
    max_steps: usize,
) -> Result<RecycleTranscript> {
    if max_steps == 0 {
        return Err(Error::UnsupportedSteps(0));
    }
    check_graph(graph, train)?;
    check_len(test, train.sample(0).0)?;
    let mut state = test.clone();
    let mut index = rng.random_range(0..train.len());
    let mut steps = Vec::new();
    for step in 0..max_steps {
        if step > 0 {
            index = match graph {
                Some(g) => {
                    let out = g.neighbors(index);
                    out[rng.random_range(0..out.len())]
                }
                None => rng.random_range(0..train.len()),
            };
        }
        let (x, y) = train.sample(index);
        let p0 = success_probability(&state, x)?;
        if rng.random::<f64>() < p0 {
            steps.push(RecycleStep {
                sampled_index: index,
                ancilla_outcome: 0,
                pre_state: state.clone(),
                post_state: state,
            });
            return Ok(RecycleTranscript {
                steps,
                label: Some(y),
                attempts: 1,
            });
        }
        let (_, post) = post_measure_state(&state, x, 1)?;
        steps.push(RecycleStep {
            sampled_index: index,
            ancilla_outcome: 1,
            pre_state: state,
            post_state: post.clone(),
        });
        state = post;
    }
    Ok(RecycleTranscript {
        steps,
        label: None,
        attempts: 1,
    })
}

/// Restarts from a fresh test state whenever `max_steps` is exhausted.
pub fn recycle_until_label<R: Rng>(
    test: &FeatureVector,
    train: &TrainingSet,
    graph: Option<&WalkGraph>,
    rng: &mut R,
    max_steps: usize,
    max_attempts: usize,
) -> Result<RecycleTranscript> {
    for attempt in 1..=max_attempts {
        let mut t = recycle_classify_with(test, train, graph, rng, max_steps)?;
        if t.label.is_some() {
            t.attempts = attempt;
            return Ok(t);
        }
    }
    Err(Error::CapReached(max_attempts))
}

/// Probability of emitting `true_class` given that a label is emitted within
/// `steps` comparisons (1 or 2), by exact enumeration.
pub fn exact_multistep_success(
    test: &FeatureVector,
    true_class: ClassId,
    train: &TrainingSet,
    steps: usize,
    graph: Option<&WalkGraph>,
) -> Result<f64> {
    if train.num_classes() > 2 {
        return Err(Error::ClassCount(train.num_classes()));
    }
    if !(1..=2).contains(&steps) {
        return Err(Error::UnsupportedSteps(steps));
    }
    check_graph(graph, train)?;
    let m = train.len() as f64;
    let mut hit = 0.0;
    let mut all = 0.0;
    for i in 0..train.len() {
        let (x, y) = train.sample(i);
        let p0 = success_probability(test, x)?;
        let w = p0 / m;
        all += w;
        if y == true_class {
            hit += w;
        }
        if steps == 1 || 1.0 - p0 <= BRANCH_TOL {
            continue;
        }
        let (p1, rotated) = post_measure_state(test, x, 1)?;
        let mut second = |j: usize, q: f64| -> Result<()> {
            let (xj, yj) = train.sample(j);
            let w = p1 / m * q * success_probability(&rotated, xj)?;
            all += w;
            if yj == true_class {
                hit += w;
            }
            Ok(())
        };
        match graph {
            Some(g) => {
                let q = 1.0 / g.out_degree(i) as f64;
                for &j in g.neighbors(i) {
                    second(j, q)?;
                }
            }
            None => {
                for j in 0..train.len() {
                    second(j, 1.0 / m)?;
                }
            }
        }
    }
    if all <= 0.0 {
        return Err(Error::ZeroSuccessProbability);
    }
    Ok(hit / all)
}

/// Which samples a failed comparison may move to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Neighborhood {
    /// Uniform over the whole training set.
    #[default]
    Complete,
    /// Only samples of the other class.
    Bipartite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub index: usize,
    pub label: ClassId,
    pub one_step: f64,
    pub two_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeComparison {
    pub classes: [ClassId; 2],
    pub class_names: [String; 2],
    pub one_step: [f64; 2],
    pub two_step: [f64; 2],
    /// Fraction of each class's samples where two steps beat one.
    pub win_fraction: [f64; 2],
    pub samples: Vec<SampleOutcome>,
}

/// Leave-one-out comparison of one-step and two-step success on a pair of
/// classes. Preprocessing statistics come from the full `dataset`.
pub fn scheme_comparison(
    dataset: &Dataset,
    pair: (ClassId, ClassId),
    mode: Preprocessing,
    neighborhood: Neighborhood,
    exec: Execution,
) -> Result<SchemeComparison> {
    if pair.0 == pair.1 {
        return Err(Error::ClassCount(1));
    }
    let subset = dataset.preprocess(mode)?.select_classes(&[pair.0, pair.1])?;
    subset.require_per_class(2)?;
    // statistics already fitted on the full dataset; only normalize again
    let folds = loocv_folds(&subset, Preprocessing::Normalize, StatsScope::FullDataset)?;
    let samples = exec.try_map(folds.len(), |k| -> Result<SampleOutcome> {
        let f = &folds[k];
        let graph = match neighborhood {
            Neighborhood::Complete => None,
            Neighborhood::Bipartite => Some(WalkGraph::build(
                GraphKind::Bipartite,
                f.train.labels(),
                Arrangement::GivenOrder,
            )?),
        };
        Ok(SampleOutcome {
            index: f.held_out,
            label: f.test_label,
            one_step: exact_multistep_success(&f.test, f.test_label, &f.train, 1, graph.as_ref())?,
            two_step: exact_multistep_success(&f.test, f.test_label, &f.train, 2, graph.as_ref())?,
        })
    })?;
    let mut one = [0.0; 2];
    let mut two = [0.0; 2];
    let mut wins = [0.0; 2];
    let counts = subset.class_counts();
    for s in &samples {
        let w = 1.0 / counts[s.label] as f64;
        one[s.label] += w * s.one_step;
        two[s.label] += w * s.two_step;
        if s.two_step > s.one_step {
            wins[s.label] += w;
        }
    }
    let names = subset.class_names();
    Ok(SchemeComparison {
        classes: [pair.0, pair.1],
        class_names: [names[0].clone(), names[1].clone()],
        one_step: one,
        two_step: two,
        win_fraction: wins,
        samples,
    })
}

/// [`scheme_comparison`] for every unordered class pair.
pub fn scan_pairs(
    dataset: &Dataset,
    mode: Preprocessing,
    neighborhood: Neighborhood,
    exec: Execution,
) -> Result<Vec<SchemeComparison>> {
    let n = dataset.num_classes();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            out.push(scheme_comparison(dataset, (a, b), mode, neighborhood, exec)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap().normalized().unwrap()
    }

    #[test]
    fn orthogonal_pair_failure() {
        let (p, s) = post_measure_state(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0]), 1).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(s.values()[0], r, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values()[1], -r, epsilon = 1e-15);
    }

    #[test]
    fn identical_pair_success() {
        let c = fv(&[0.3, 0.4, 0.5]);
        let (p, s) = post_measure_state(&c, &c, 0).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
        for (a, b) in s.values().iter().zip(c.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(post_measure_state(&c, &c, 1), Err(Error::ZeroProbabilityBranch));
        assert_eq!(
            post_measure_state(&c, &c.negated(), 0),
            Err(Error::ZeroProbabilityBranch)
        );
        assert!(post_measure_state(&c, &c, 2).is_err());
    }

    #[test]
    fn rotation_law_example() {
        let phi = 0.7;
        let (_, s) =
            post_measure_state(&FeatureVector::from_angle(phi), &FeatureVector::from_angle(0.0), 1)
                .unwrap();
        assert_abs_diff_eq!(s.angle().unwrap(), phi / 2.0 + FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn single_sample_terminates() {
        let t = fv(&[0.2, 0.9]);
        let train = TrainingSet::new(vec![t.clone()], vec![0], 1).unwrap();
        let r = recycle_classify(&t, &train, None, 9, 3).unwrap();
        assert_eq!(r.label, Some(0));
        assert_eq!(r.steps.len(), 1);
        assert_abs_diff_eq!(exact_multistep_success(&t, 0, &train, 1, None).unwrap(), 1.0);
        assert!(recycle_classify(&t, &train, None, 9, 0).is_err());
    }

    #[test]
    fn antipodal_pair_leaves_state_in_place() {
        let t = fv(&[0.6, 0.8]);
        // comparing with -t fails for sure and (t - (-t)) is t again
        let (p, s) = post_measure_state(&t, &t.negated(), 1).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);
        for (a, b) in s.values().iter().zip(t.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let train = TrainingSet::new(vec![t.clone(), t.negated()], vec![0, 1], 2).unwrap();
        for seed in 0..50 {
            let r = recycle_classify(&t, &train, None, seed, 10).unwrap();
            assert!(r.steps.iter().all(|s| (s.ancilla_outcome == 1) == (s.sampled_index == 1)));
            if r.label.is_some() {
                assert_eq!(r.label, Some(0));
            }
        }
        assert_abs_diff_eq!(exact_multistep_success(&t, 0, &train, 2, None).unwrap(), 1.0);
    }

    #[test]
    fn exact_rejects_bad_input() {
        let t = fv(&[1.0, 0.0]);
        let train3 = TrainingSet::new(vec![t.clone()], vec![2], 3).unwrap();
        assert_eq!(
            exact_multistep_success(&t, 0, &train3, 1, None),
            Err(Error::ClassCount(3))
        );
        let train = TrainingSet::new(vec![t.clone()], vec![0], 2).unwrap();
        assert_eq!(
            exact_multistep_success(&t, 0, &train, 3, None),
            Err(Error::UnsupportedSteps(3))
        );
    }

    #[test]
    fn coincident_classes_gain_nothing() {
        let x = fv(&[0.4, 0.9]);
        let train = TrainingSet::new(vec![x.clone(); 4], vec![0, 1, 0, 1], 2).unwrap();
        let t = fv(&[0.9, 0.1]);
        let a = exact_multistep_success(&t, 0, &train, 1, None).unwrap();
        let b = exact_multistep_success(&t, 0, &train, 2, None).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn bipartite_neighborhood_changes_second_step() {
        let train = TrainingSet::new(
            vec![fv(&[1.0, 0.1]), fv(&[0.2, 1.0]), fv(&[1.0, 0.5]), fv(&[-0.3, 1.0])],
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        let g = WalkGraph::build(GraphKind::Bipartite, train.labels(), Arrangement::GivenOrder)
            .unwrap();
        let t = fv(&[0.6, 0.6]);
        let a = exact_multistep_success(&t, 0, &train, 2, None).unwrap();
        let b = exact_multistep_success(&t, 0, &train, 2, Some(&g)).unwrap();
        assert!((a - b).abs() > 1e-6);
        let r = recycle_classify(&t, &train, Some(&g), 4, 5).unwrap();
        for w in r.steps.windows(2) {
            assert_ne!(train.labels()[w[0].sampled_index], train.labels()[w[1].sampled_index]);
        }
    }

    #[test]
    fn iris_ab_recycling_helps() {
        let c = scheme_comparison(
            &Dataset::iris(),
            (0, 1),
            Preprocessing::MinMax,
            Neighborhood::Complete,
            Execution::default(),
        )
        .unwrap();
        assert_eq!(c.samples.len(), 100);
        for k in 0..2 {
            assert!(c.two_step[k] >= c.one_step[k]);
        }
        assert!(scheme_comparison(&Dataset::iris(), (1, 1), Preprocessing::MinMax,
            Neighborhood::Complete, Execution::Sequential).is_err());
    }

    proptest! {
        #[test]
        fn branch_weights_sum_to_one(a in 0.0..2.0 * PI, b in 0.0..2.0 * PI) {
            let c = FeatureVector::from_angle(a);
            let s = FeatureVector::from_angle(b);
            let p0 = post_measure_state(&c, &s, 0).map(|r| r.0).unwrap_or(0.0);
            let p1 = post_measure_state(&c, &s, 1).map(|r| r.0).unwrap_or(0.0);
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_law(phi in 1e-6..FRAC_PI_2, base in -PI..PI) {
            let s = FeatureVector::from_angle(base);
            let c = FeatureVector::from_angle(base + phi);
            let (_, post) = post_measure_state(&c, &s, 1).unwrap();
            let rel = (post.angle().unwrap() - base).rem_euclid(2.0 * PI);
            prop_assert!((rel - (phi / 2.0 + FRAC_PI_2)).abs() < 1e-12);
        }

        #[test]
        fn exact_success_is_probability(
            xs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..6),
            t in (-1.0f64..1.0, -1.0f64..1.0),
        ) {
            prop_assume!(xs.iter().all(|(a, b)| a * a + b * b > 1e-3) && t.0 * t.0 + t.1 * t.1 > 1e-3);
            let samples = xs.iter().map(|(a, b)| fv(&[*a, *b])).collect();
            let labels = (0..xs.len()).map(|i| i % 2).collect();
            let train = TrainingSet::new(samples, labels, 2).unwrap();
            let t = fv(&[t.0, t.1]);
            for steps in 1..=2 {
                let v0 = exact_multistep_success(&t, 0, &train, steps, None).unwrap();
                let v1 = exact_multistep_success(&t, 1, &train, steps, None).unwrap();
                prop_assert!((0.0..=1.0).contains(&v0));
                prop_assert!((v0 + v1 - 1.0).abs() < 1e-12);
            }
        }
    }
}
