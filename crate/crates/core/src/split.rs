//! Train/test splitting under the three evaluation paradigms: within one
//! subject, pooled across subjects, and leave-one-subject-out.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::formation::StateLabel;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    /// Train and test inside a single subject's frames.
    SubjectSpecific(String),
    /// Pool all subjects' frames before splitting.
    CommonSubject,
    /// Test on the named subject, train on everyone else.
    LeaveOneOut(String),
}

impl Paradigm {
    pub fn kind(&self) -> &'static str {
        match self {
            Paradigm::SubjectSpecific(_) => "subject-specific",
            Paradigm::CommonSubject => "common-subject",
            Paradigm::LeaveOneOut(_) => "leave-one-out",
        }
    }

    /// Kind plus the subject it applies to, e.g. `subject-specific:s03`.
    pub fn describe(&self) -> String {
        match self {
            Paradigm::SubjectSpecific(s) => format!("subject-specific:{s}"),
            Paradigm::CommonSubject => "common-subject".into(),
            Paradigm::LeaveOneOut(s) => format!("leave-one-out:{s}"),
        }
    }
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub paradigm: Paradigm,
    /// Share of each class routed to the test side; ignored by leave-one-out.
    pub test_fraction: f64,
    /// Shuffling seed; ignored by leave-one-out.
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(paradigm: Paradigm, seed: u64) -> SplitSpec {
        SplitSpec { paradigm, test_fraction: DEFAULT_TEST_FRACTION, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction.is_finite()
            && self.test_fraction > 0.0
            && self.test_fraction < 1.0)
        {
            return Err(Error::InvalidSplitSpec(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Row indices of the two sides, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Split a feature matrix according to the paradigm.
///
/// Random paradigms stratify by label: within each class the rows are
/// shuffled with a class-derived seed and `round(n_c * fraction)` of them go
/// to the test side, so class proportions carry over. Every class must be
/// present in the rows being stratified.
pub fn make_split(m: &FeatureMatrix, spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let all_rows: Vec<usize> = (0..m.num_rows()).collect();
    match &spec.paradigm {
        Paradigm::CommonSubject => stratified(m, &all_rows, spec),
        Paradigm::SubjectSpecific(subject) => {
            let rows = subject_rows(m, subject)?;
            stratified(m, &rows, spec)
        }
        Paradigm::LeaveOneOut(subject) => {
            let test_indices = subject_rows(m, subject)?;
            let train_indices: Vec<usize> = all_rows
                .into_iter()
                .filter(|&i| m.provenance[i].subject_id != *subject)
                .collect();
            if train_indices.is_empty() {
                return Err(Error::InvalidSplitSpec(
                    "leave-one-out needs at least two subjects".into(),
                ));
            }
            Ok(DatasetSplit { train_indices, test_indices })
        }
    }
}

fn subject_rows(m: &FeatureMatrix, subject: &str) -> Result<Vec<usize>> {
    let rows: Vec<usize> = (0..m.num_rows())
        .filter(|&i| m.provenance[i].subject_id == subject)
        .collect();
    if rows.is_empty() {
        return Err(Error::UnknownSubject(subject.to_string()));
    }
    Ok(rows)
}

fn stratified(m: &FeatureMatrix, rows: &[usize], spec: &SplitSpec) -> Result<DatasetSplit> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in StateLabel::ALL {
        let mut class_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| m.labels[i] == label)
            .collect();
        if class_rows.is_empty() {
            return Err(Error::ClassAbsent(label));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ label.code() as u64);
        class_rows.shuffle(&mut rng);
        let take = (class_rows.len() as f64 * spec.test_fraction).round() as usize;
        test.extend_from_slice(&class_rows[..take]);
        train.extend_from_slice(&class_rows[take..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidSplitSpec(format!(
            "fraction {} leaves an empty side for {} rows",
            spec.test_fraction,
            rows.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit { train_indices: train, test_indices: test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrameProvenance;
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::collections::HashSet;

    /// Matrix with the given (subject, label) per row; feature values are the
    /// row index so rows stay identifiable.
    fn matrix(rows: &[(&str, StateLabel)]) -> FeatureMatrix {
        FeatureMatrix {
            rows: Array2::from_shape_fn((rows.len(), 2), |(i, j)| (i * 2 + j) as f64),
            labels: rows.iter().map(|r| r.1).collect(),
            provenance: rows
                .iter()
                .enumerate()
                .map(|(i, r)| FrameProvenance {
                    subject_id: r.0.to_string(),
                    trial_index: 3,
                    frame_time_s: i as f64,
                })
                .collect(),
            feature_names: vec!["a".into(), "b".into()],
        }
    }

    fn balanced_matrix(subjects: &[&str], per_class: usize) -> FeatureMatrix {
        let mut rows = Vec::new();
        for s in subjects {
            for label in StateLabel::ALL {
                for _ in 0..per_class {
                    rows.push((*s, label));
                }
            }
        }
        matrix(&rows)
    }

    #[test]
    fn stratified_counts_follow_fraction() {
        let m = balanced_matrix(&["s1"], 10);
        let spec = SplitSpec::new(Paradigm::CommonSubject, 7);
        let split = make_split(&m, &spec).unwrap();
        assert_eq!(split.test_indices.len(), 6); // 2 per class
        assert_eq!(split.train_indices.len(), 24);
        for label in StateLabel::ALL {
            let test_c = split.test_indices.iter().filter(|&&i| m.labels[i] == label).count();
            assert_eq!(test_c, 2, "{label:?}");
        }
    }

    #[test]
    fn thousand_rows_per_class_gives_two_hundred_test_rows_each() {
        let m = balanced_matrix(&["s1"], 1000);
        let spec = SplitSpec::new(Paradigm::CommonSubject, 0);
        let split = make_split(&m, &spec).unwrap();
        assert_eq!(split.test_indices.len(), 600);
        assert_eq!(split.train_indices.len(), 2400);
        for label in StateLabel::ALL {
            let test_c = split.test_indices.iter().filter(|&&i| m.labels[i] == label).count();
            assert_eq!(test_c, 200, "{label:?}");
        }
    }

    #[test]
    fn sides_are_disjoint_and_cover() {
        let m = balanced_matrix(&["s1", "s2"], 7);
        let spec = SplitSpec::new(Paradigm::CommonSubject, 3);
        let split = make_split(&m, &spec).unwrap();
        let train: HashSet<_> = split.train_indices.iter().collect();
        let test: HashSet<_> = split.test_indices.iter().collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), m.num_rows());
    }

    #[test]
    fn subject_specific_stays_inside_the_subject() {
        let m = balanced_matrix(&["s1", "s2", "s3"], 5);
        let spec = SplitSpec::new(Paradigm::SubjectSpecific("s2".into()), 1);
        let split = make_split(&m, &spec).unwrap();
        for &i in split.train_indices.iter().chain(&split.test_indices) {
            assert_eq!(m.provenance[i].subject_id, "s2");
        }
        assert_eq!(split.train_indices.len() + split.test_indices.len(), 15);

        let unknown = SplitSpec::new(Paradigm::SubjectSpecific("s9".into()), 1);
        assert!(matches!(
            make_split(&m, &unknown).unwrap_err(),
            Error::UnknownSubject(s) if s == "s9"
        ));
    }

    #[test]
    fn leave_one_out_is_deterministic_and_seedless() {
        let m = balanced_matrix(&["s1", "s2", "s3"], 4);
        let a = make_split(&m, &SplitSpec::new(Paradigm::LeaveOneOut("s2".into()), 1)).unwrap();
        let b = make_split(&m, &SplitSpec::new(Paradigm::LeaveOneOut("s2".into()), 99)).unwrap();
        assert_eq!(a, b);
        for &i in &a.test_indices {
            assert_eq!(m.provenance[i].subject_id, "s2");
        }
        for &i in &a.train_indices {
            assert_ne!(m.provenance[i].subject_id, "s2");
        }
        assert_eq!(a.test_indices.len(), 12);
        assert_eq!(a.train_indices.len(), 24);

        let lone = balanced_matrix(&["s1"], 4);
        assert!(make_split(&lone, &SplitSpec::new(Paradigm::LeaveOneOut("s1".into()), 0)).is_err());
    }

    #[test]
    fn missing_class_is_named() {
        let m = matrix(&[
            ("s1", StateLabel::Focused),
            ("s1", StateLabel::Focused),
            ("s1", StateLabel::Unfocused),
        ]);
        let err = make_split(&m, &SplitSpec::new(Paradigm::CommonSubject, 0)).unwrap_err();
        assert!(matches!(err, Error::ClassAbsent(StateLabel::Drowsy)));
    }

    #[test]
    fn fraction_bounds_are_enforced() {
        let m = balanced_matrix(&["s1"], 5);
        for bad in [0.0, 1.0, -0.5, f64::NAN] {
            let spec = SplitSpec {
                paradigm: Paradigm::CommonSubject,
                test_fraction: bad,
                seed: 0,
            };
            assert!(make_split(&m, &spec).is_err(), "{bad}");
        }
    }

    #[test]
    fn same_seed_same_split_new_seed_new_split() {
        let m = balanced_matrix(&["s1", "s2"], 20);
        let a = make_split(&m, &SplitSpec::new(Paradigm::CommonSubject, 5)).unwrap();
        let b = make_split(&m, &SplitSpec::new(Paradigm::CommonSubject, 5)).unwrap();
        let c = make_split(&m, &SplitSpec::new(Paradigm::CommonSubject, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn paradigm_descriptions() {
        assert_eq!(Paradigm::CommonSubject.describe(), "common-subject");
        assert_eq!(
            Paradigm::SubjectSpecific("s7".into()).describe(),
            "subject-specific:s7"
        );
        assert_eq!(Paradigm::LeaveOneOut("s1".into()).kind(), "leave-one-out");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        // Per-class test counts always land within one row of the target
        // fraction, and the sides partition the pool.
        #[test]
        fn stratification_invariants(
            seed in 0u64..500,
            frac in 0.05f64..0.95,
            n0 in 2usize..30,
            n1 in 2usize..30,
            n2 in 2usize..30,
        ) {
            let mut rows = Vec::new();
            for (label, n) in StateLabel::ALL.iter().zip([n0, n1, n2]) {
                for _ in 0..n {
                    rows.push(("s1", *label));
                }
            }
            let m = matrix(&rows);
            let spec = SplitSpec { paradigm: Paradigm::CommonSubject, test_fraction: frac, seed };
            let split = match make_split(&m, &spec) {
                Ok(s) => s,
                // Extreme fractions can empty a side on tiny pools.
                Err(Error::InvalidSplitSpec(_)) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let train: HashSet<_> = split.train_indices.iter().copied().collect();
            let test: HashSet<_> = split.test_indices.iter().copied().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), m.num_rows());
            for (label, n) in StateLabel::ALL.iter().zip([n0, n1, n2]) {
                let test_c = split.test_indices.iter().filter(|&&i| m.labels[i] == *label).count();
                let target = n as f64 * frac;
                prop_assert!((test_c as f64 - target).abs() <= 1.0,
                    "{:?}: {} test rows for target {}", label, test_c, target);
            }
        }
    }
}
