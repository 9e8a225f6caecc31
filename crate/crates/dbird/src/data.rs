//! Response data containers and validation.
//!
//! A [`ResponseDataset`] holds dichotomous item responses indexed by
//! `(student, time, item)` together with the bank of known item difficulties.
//! Indices are dense and 0-based: `student < n_students`, `time < n_times`,
//! `item < item_bank.len()`. Sparsity is legal — any `(student, time)` cell may
//! have zero observations, and students with no observations at all are
//! retained so that cohort-level summaries keep a consistent shape.
//!
//! Construction always validates. A dataset that exists is a dataset whose
//! indices are in bounds, whose responses are binary, and whose observations
//! are free of `(student, time, item)` duplicates and stored in canonical
//! `(time, student, item)` order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single graded response: student `student` answered item `item` at
/// discrete time `time`, scored `correct` (0 or 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub student: usize,
    pub time: usize,
    pub item: usize,
    /// Binary score. Kept as an integer so that out-of-range input (e.g. a
    /// stray `2` in a CSV) survives long enough to be reported by validation.
    pub correct: u8,
}

impl Observation {
    pub fn new(student: usize, time: usize, item: usize, correct: u8) -> Self {
        Self { student, time, item, correct }
    }

    /// Centered response `y - 1/2`, the natural-parameter weight used by the
    /// logistic augmentation.
    pub fn kappa(&self) -> f64 {
        f64::from(self.correct) - 0.5
    }

    fn canonical_key(&self) -> (usize, usize, usize) {
        (self.time, self.student, self.item)
    }
}

/// Known item difficulties, indexed by dense item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    difficulties: Vec<f64>,
}

impl ItemBank {
    /// Builds a bank, rejecting non-finite difficulties.
    pub fn new(difficulties: Vec<f64>) -> Result<Self, DataError> {
        if let Some(item) = difficulties.iter().position(|d| !d.is_finite()) {
            return Err(DataError::NonFiniteDifficulty { item });
        }
        Ok(Self { difficulties })
    }

    pub fn len(&self) -> usize {
        self.difficulties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.difficulties.is_empty()
    }

    pub fn difficulty(&self, item: usize) -> f64 {
        self.difficulties[item]
    }

    pub fn difficulties(&self) -> &[f64] {
        &self.difficulties
    }
}

/// Validation failures for response data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("duplicate observation for student {student}, time {time}, item {item}")]
    DuplicateObservation { student: usize, time: usize, item: usize },
    #[error("{field} index {value} out of bounds (must be < {bound})")]
    IndexOutOfBounds { field: &'static str, value: usize, bound: usize },
    #[error("response for student {student}, time {time}, item {item} is {value}; must be 0 or 1")]
    NonBinaryResponse { student: usize, time: usize, item: usize, value: u8 },
    #[error("dataset has no students or no time points")]
    EmptyDataset,
    #[error("item {item} has a non-finite difficulty")]
    NonFiniteDifficulty { item: usize },
    #[error("dynamic model requires at least 2 time points, dataset has {n_times}")]
    TimeDimensionTooSmall { n_times: usize },
}

/// A validated panel of item responses.
///
/// `n_students` and `n_times` declare the latent grid; they may exceed the
/// indices actually observed (a student with no data still gets a trajectory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDataset {
    n_students: usize,
    n_times: usize,
    observations: Vec<Observation>,
    item_bank: ItemBank,
}

impl ResponseDataset {
    /// Validates and canonicalizes raw parts into a dataset.
    ///
    /// Checks, in order: a non-empty latent grid, in-bounds indices, binary
    /// responses, and absence of `(student, time, item)` duplicates. On
    /// success the observations are sorted by `(time, student, item)`.
    pub fn new(
        n_students: usize,
        n_times: usize,
        mut observations: Vec<Observation>,
        item_bank: ItemBank,
    ) -> Result<Self, DataError> {
        if n_students == 0 || n_times == 0 {
            return Err(DataError::EmptyDataset);
        }
        for obs in &observations {
            if obs.student >= n_students {
                return Err(DataError::IndexOutOfBounds {
                    field: "student",
                    value: obs.student,
                    bound: n_students,
                });
            }
            if obs.time >= n_times {
                return Err(DataError::IndexOutOfBounds {
                    field: "time",
                    value: obs.time,
                    bound: n_times,
                });
            }
            if obs.item >= item_bank.len() {
                return Err(DataError::IndexOutOfBounds {
                    field: "item",
                    value: obs.item,
                    bound: item_bank.len(),
                });
            }
            if obs.correct > 1 {
                return Err(DataError::NonBinaryResponse {
                    student: obs.student,
                    time: obs.time,
                    item: obs.item,
                    value: obs.correct,
                });
            }
        }
        observations.sort_unstable_by_key(Observation::canonical_key);
        for pair in observations.windows(2) {
            if pair[0].student == pair[1].student
                && pair[0].time == pair[1].time
                && pair[0].item == pair[1].item
            {
                return Err(DataError::DuplicateObservation {
                    student: pair[0].student,
                    time: pair[0].time,
                    item: pair[0].item,
                });
            }
        }
        Ok(Self { n_students, n_times, observations, item_bank })
    }

    pub fn n_students(&self) -> usize {
        self.n_students
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// Observations in canonical `(time, student, item)` order.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn item_bank(&self) -> &ItemBank {
        &self.item_bank
    }

    /// Errors unless the time dimension supports a random-walk fit.
    pub fn require_dynamic(&self) -> Result<(), DataError> {
        if self.n_times < 2 {
            return Err(DataError::TimeDimensionTooSmall { n_times: self.n_times });
        }
        Ok(())
    }
}

/// Re-runs every construction check on an existing dataset.
///
/// Idempotent: validating a validated dataset returns an equal dataset. This
/// exists for callers that deserialized a dataset through a path that bypassed
/// [`ResponseDataset::new`].
pub fn validate_dataset(dataset: ResponseDataset) -> Result<ResponseDataset, DataError> {
    ResponseDataset::new(
        dataset.n_students,
        dataset.n_times,
        dataset.observations,
        dataset.item_bank,
    )
}

/// Per-time views of the observation list.
///
/// Returns exactly `n_times` slices; slice `t` contains every observation at
/// time `t` (possibly empty). Together the slices partition the dataset, in
/// order, so conditional builders can visit one time point in O(slice length).
pub fn group_by_time(dataset: &ResponseDataset) -> Vec<&[Observation]> {
    let obs = dataset.observations();
    let mut slices = Vec::with_capacity(dataset.n_times());
    let mut start = 0;
    for t in 0..dataset.n_times() {
        let end = start + obs[start..].iter().take_while(|o| o.time == t).count();
        slices.push(&obs[start..end]);
        start = end;
    }
    slices
}

/// Which dynamic model a fit targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Cohort random walk plus per-student deviation walks with per-student
    /// innovation variances.
    DBird,
    /// No cohort component; one innovation variance shared by all students.
    GlobalRw,
    /// No cohort component; per-student innovation variances.
    HeteroRw,
}

impl ModelVariant {
    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::DBird => "D-BIRD",
            ModelVariant::GlobalRw => "Global-RW",
            ModelVariant::HeteroRw => "Hetero-RW",
        }
    }
}

/// How innovation variances are pooled across students.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnovationSharing {
    Shared,
    PerStudent,
}

/// Full model configuration handed to the sampler.
///
/// The fields are mutually constrained: the cohort walk exists exactly for
/// [`ModelVariant::DBird`], and [`ModelVariant::GlobalRw`] is the only variant
/// that pools innovation variances. Use the named constructors; they cannot
/// produce an inconsistent value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub include_cohort: bool,
    pub innovation_sharing: InnovationSharing,
}

impl ModelSpec {
    pub fn dbird() -> Self {
        Self {
            variant: ModelVariant::DBird,
            include_cohort: true,
            innovation_sharing: InnovationSharing::PerStudent,
        }
    }

    pub fn global_rw() -> Self {
        Self {
            variant: ModelVariant::GlobalRw,
            include_cohort: false,
            innovation_sharing: InnovationSharing::Shared,
        }
    }

    pub fn hetero_rw() -> Self {
        Self {
            variant: ModelVariant::HeteroRw,
            include_cohort: false,
            innovation_sharing: InnovationSharing::PerStudent,
        }
    }

    pub fn for_variant(variant: ModelVariant) -> Self {
        match variant {
            ModelVariant::DBird => Self::dbird(),
            ModelVariant::GlobalRw => Self::global_rw(),
            ModelVariant::HeteroRw => Self::hetero_rw(),
        }
    }

    /// True if the fields agree with each other.
    pub fn is_consistent(&self) -> bool {
        *self == Self::for_variant(self.variant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(n: usize) -> ItemBank {
        ItemBank::new((0..n).map(|j| j as f64 * 0.5 - 1.0).collect()).unwrap()
    }

    #[test]
    fn minimal_dataset_accepted() {
        let data = ResponseDataset::new(1, 2, vec![Observation::new(0, 0, 0, 1)], bank(1));
        assert!(data.is_ok());
    }

    #[test]
    fn duplicate_observation_rejected() {
        let obs = vec![Observation::new(0, 0, 0, 1), Observation::new(0, 0, 0, 0)];
        let err = ResponseDataset::new(1, 2, obs, bank(1)).unwrap_err();
        assert_eq!(err, DataError::DuplicateObservation { student: 0, time: 0, item: 0 });
    }

    #[test]
    fn same_item_different_times_is_not_a_duplicate() {
        let obs = vec![Observation::new(0, 0, 0, 1), Observation::new(0, 1, 0, 1)];
        assert!(ResponseDataset::new(1, 2, obs, bank(1)).is_ok());
    }

    #[test]
    fn out_of_bounds_indices_rejected() {
        let err = ResponseDataset::new(1, 2, vec![Observation::new(1, 0, 0, 1)], bank(1));
        assert_eq!(
            err.unwrap_err(),
            DataError::IndexOutOfBounds { field: "student", value: 1, bound: 1 }
        );
        let err = ResponseDataset::new(1, 2, vec![Observation::new(0, 2, 0, 1)], bank(1));
        assert_eq!(
            err.unwrap_err(),
            DataError::IndexOutOfBounds { field: "time", value: 2, bound: 2 }
        );
        let err = ResponseDataset::new(1, 2, vec![Observation::new(0, 0, 3, 1)], bank(1));
        assert_eq!(
            err.unwrap_err(),
            DataError::IndexOutOfBounds { field: "item", value: 3, bound: 1 }
        );
    }

    #[test]
    fn non_binary_response_rejected() {
        let err = ResponseDataset::new(1, 2, vec![Observation::new(0, 0, 0, 2)], bank(1));
        assert_eq!(
            err.unwrap_err(),
            DataError::NonBinaryResponse { student: 0, time: 0, item: 0, value: 2 }
        );
    }

    #[test]
    fn empty_grid_rejected() {
        let err = ResponseDataset::new(0, 2, vec![], bank(1)).unwrap_err();
        assert_eq!(err, DataError::EmptyDataset);
        let err = ResponseDataset::new(1, 0, vec![], bank(1)).unwrap_err();
        assert_eq!(err, DataError::EmptyDataset);
    }

    #[test]
    fn non_finite_difficulty_rejected() {
        let err = ItemBank::new(vec![0.0, f64::NAN]).unwrap_err();
        assert_eq!(err, DataError::NonFiniteDifficulty { item: 1 });
    }

    #[test]
    fn zero_observation_students_are_retained() {
        // Student 1 never answers anything; the latent grid still covers them.
        let data = ResponseDataset::new(2, 3, vec![Observation::new(0, 0, 0, 1)], bank(1)).unwrap();
        assert_eq!(data.n_students(), 2);
    }

    #[test]
    fn validation_is_idempotent() {
        let obs = vec![
            Observation::new(1, 1, 0, 0),
            Observation::new(0, 0, 1, 1),
            Observation::new(0, 1, 0, 1),
        ];
        let once = ResponseDataset::new(2, 2, obs, bank(2)).unwrap();
        let twice = validate_dataset(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn observations_are_sorted_canonically() {
        let obs = vec![
            Observation::new(1, 1, 0, 0),
            Observation::new(0, 1, 1, 1),
            Observation::new(1, 0, 0, 1),
            Observation::new(0, 0, 0, 1),
        ];
        let data = ResponseDataset::new(2, 2, obs, bank(2)).unwrap();
        let keys: Vec<_> = data.observations().iter().map(|o| (o.time, o.student, o.item)).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn group_by_time_partitions_everything() {
        let obs = vec![
            Observation::new(0, 0, 0, 1),
            Observation::new(1, 0, 1, 0),
            Observation::new(0, 2, 0, 1),
        ];
        let data = ResponseDataset::new(2, 4, obs, bank(2)).unwrap();
        let groups = group_by_time(&data);
        assert_eq!(groups.len(), 4);
        assert_eq!(groups[0].len(), 2);
        assert_eq!(groups[1].len(), 0);
        assert_eq!(groups[2].len(), 1);
        assert_eq!(groups[3].len(), 0);
        let total: usize = groups.iter().map(|g| g.len()).sum();
        assert_eq!(total, data.observations().len());
        for (t, group) in groups.iter().enumerate() {
            assert!(group.iter().all(|o| o.time == t));
        }
    }

    #[test]
    fn empty_observation_list_yields_empty_slices() {
        let data = ResponseDataset::new(2, 3, vec![], bank(1)).unwrap();
        let groups = group_by_time(&data);
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.is_empty()));
    }

    #[test]
    fn single_time_dataset_is_static_only() {
        let data = ResponseDataset::new(1, 1, vec![Observation::new(0, 0, 0, 1)], bank(1)).unwrap();
        assert_eq!(
            data.require_dynamic().unwrap_err(),
            DataError::TimeDimensionTooSmall { n_times: 1 }
        );
    }

    #[test]
    fn model_spec_constructors_are_consistent() {
        assert!(ModelSpec::dbird().is_consistent());
        assert!(ModelSpec::global_rw().is_consistent());
        assert!(ModelSpec::hetero_rw().is_consistent());
        assert!(ModelSpec::dbird().include_cohort);
        assert!(!ModelSpec::global_rw().include_cohort);
        assert_eq!(ModelSpec::global_rw().innovation_sharing, InnovationSharing::Shared);
        assert_eq!(ModelSpec::hetero_rw().innovation_sharing, InnovationSharing::PerStudent);
    }
}
