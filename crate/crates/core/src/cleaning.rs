//! Coincidental-correctness cleaning.
//!
//! Runs are grouped with k-means over their binary coverage rows. A passing
//! run that shares a cluster with at least one failing run is treated as
//! coincidentally correct and relabeled as failing.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoverageMatrix, Outcome, OutcomeVector};

const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CleanError {
    #[error("k = {k} exceeds the number of runs ({m})")]
    KTooLarge { k: usize, m: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("clustering needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("assignment covers {assigned} runs but outcomes have {outcomes}")]
    LengthMismatch { assigned: usize, outcomes: usize },
    #[error("run {0:?} is not a passing run")]
    NotAPassingRun(String),
}

/// Cluster index per run, in coverage-matrix row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub run_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }
}

/// `max(2, round(sqrt(m / 2)))`
pub fn default_k(m: usize) -> usize {
    ((m as f64 / 2.0).sqrt().round() as usize).max(2)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        // strict: ties go to the lower index
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = points.len();
    let mut chosen = vec![rng.gen_range(0..m)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                acc += d;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            let free: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn centroids_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(labels) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            let inv = 1.0 / n as f64;
            s.iter_mut().for_each(|v| *v *= inv);
        }
    }
    (sums, counts)
}

/// Refills each empty cluster with the point farthest from its own centroid,
/// taken from a cluster that keeps at least one member.
fn refill_empty(points: &[Vec<f64>], labels: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    loop {
        let (centroids, counts) = centroids_of(points, labels, k);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return centroids;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= m leaves a cluster with two members");
        labels[i] = empty;
    }
}

/// k-means over the binary run profiles with k-means++ seeding.
///
/// Deterministic for a given `(matrix, k, seed)`.
pub fn cluster_runs(matrix: &CoverageMatrix, k: usize, seed: u64) -> Result<ClusterAssignment, CleanError> {
    let m = matrix.n_runs();
    if k == 0 {
        return Err(CleanError::ZeroK);
    }
    if k > m {
        return Err(CleanError::KTooLarge { k, m });
    }
    if m < 2 {
        return Err(CleanError::TooFewRuns(m));
    }
    let points: Vec<Vec<f64>> = (0..m)
        .map(|i| matrix.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        centroids = refill_empty(&points, &mut labels, k);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    // the last reassignment may have emptied a cluster
    refill_empty(&points, &mut labels, k);

    Ok(ClusterAssignment {
        run_ids: matrix.run_ids().to_vec(),
        labels,
        k,
        seed,
        iterations,
    })
}

/// Passing runs whose cluster contains at least one failing run.
pub fn identify_coincidental(
    assignment: &ClusterAssignment,
    outcomes: &OutcomeVector,
) -> Result<BTreeSet<String>, CleanError> {
    if assignment.labels.len() != outcomes.len() {
        return Err(CleanError::LengthMismatch {
            assigned: assignment.labels.len(),
            outcomes: outcomes.len(),
        });
    }
    let by_run: HashMap<&str, Outcome> = outcomes.iter().collect();
    let label_of = |run: &str| {
        by_run.get(run).copied().ok_or(CleanError::LengthMismatch {
            assigned: assignment.labels.len(),
            outcomes: outcomes.len(),
        })
    };
    let mut has_fail = vec![false; assignment.k];
    for (run, &c) in assignment.run_ids.iter().zip(&assignment.labels) {
        if label_of(run)?.is_fail() {
            has_fail[c] = true;
        }
    }
    let mut cc = BTreeSet::new();
    for (run, &c) in assignment.run_ids.iter().zip(&assignment.labels) {
        if has_fail[c] && !label_of(run)?.is_fail() {
            cc.insert(run.clone());
        }
    }
    Ok(cc)
}

/// Returns a copy of `outcomes` with every run in `cc_runs` marked FAIL.
pub fn relabel(outcomes: &OutcomeVector, cc_runs: &BTreeSet<String>) -> Result<OutcomeVector, CleanError> {
    for run in cc_runs {
        if outcomes.get(run) != Some(Outcome::Pass) {
            return Err(CleanError::NotAPassingRun(run.clone()));
        }
    }
    let labels = outcomes
        .iter()
        .map(|(run, o)| if cc_runs.contains(run) { Outcome::Fail } else { o })
        .collect();
    Ok(OutcomeVector::new(outcomes.run_ids().to_vec(), labels).expect("ids unchanged"))
}

/// JSON report written by the `clean` stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub k: usize,
    pub seed: u64,
    pub cc_runs: Vec<String>,
}

/// Cluster, identify and relabel in one step. `k` defaults to [`default_k`]
/// (clamped to the run count).
pub fn clean(
    matrix: &CoverageMatrix,
    outcomes: &OutcomeVector,
    k: Option<usize>,
    seed: u64,
) -> Result<(OutcomeVector, CleaningReport), CleanError> {
    let k = k.unwrap_or_else(|| default_k(matrix.n_runs()).min(matrix.n_runs()));
    let assignment = cluster_runs(matrix, k, seed)?;
    let cc = identify_coincidental(&assignment, outcomes)?;
    let relabeled = relabel(outcomes, &cc)?;
    Ok((
        relabeled,
        CleaningReport {
            k,
            seed,
            cc_runs: cc.into_iter().collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[Vec<u8>]) -> CoverageMatrix {
        let runs = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let preds = (0..rows[0].len()).map(|j| format!("p{j}")).collect();
        CoverageMatrix::from_rows(runs, preds, rows).unwrap()
    }

    fn outcomes(labels: &[Outcome]) -> OutcomeVector {
        let runs = (0..labels.len()).map(|i| format!("r{i}")).collect();
        OutcomeVector::new(runs, labels.to_vec()).unwrap()
    }

    use Outcome::{Fail, Pass};

    #[test]
    fn separates_two_identical_groups() {
        let rows = vec![
            vec![0, 0, 0],
            vec![1, 1, 1],
            vec![0, 0, 0],
            vec![1, 1, 1],
            vec![0, 0, 0],
            vec![1, 1, 1],
        ];
        for seed in 0..20 {
            let a = cluster_runs(&matrix(&rows), 2, seed).unwrap();
            assert_eq!(a.labels[0], a.labels[2]);
            assert_eq!(a.labels[0], a.labels[4]);
            assert_eq!(a.labels[1], a.labels[3]);
            assert_eq!(a.labels[1], a.labels[5]);
            assert_ne!(a.labels[0], a.labels[1]);
        }
    }

    #[test]
    fn k_larger_than_m_is_rejected() {
        let m = matrix(&[vec![1, 0]]);
        assert_eq!(cluster_runs(&m, 2, 0), Err(CleanError::KTooLarge { k: 2, m: 1 }));
    }

    #[test]
    fn identical_rows_still_fill_every_cluster() {
        let m = matrix(&vec![vec![1, 0, 1]; 5]);
        let a = cluster_runs(&m, 3, 9).unwrap();
        assert!(a.cluster_sizes().iter().all(|&n| n > 0));
    }

    #[test]
    fn default_k_formula() {
        assert_eq!(default_k(2), 2);
        assert_eq!(default_k(8), 2);
        assert_eq!(default_k(100), 7);
        assert_eq!(default_k(4056), 45);
    }

    #[test]
    fn passes_sharing_a_cluster_with_a_failure_are_flagged() {
        let a = ClusterAssignment {
            run_ids: vec!["r0".into(), "r1".into(), "r2".into(), "r3".into(), "r4".into()],
            labels: vec![0, 0, 0, 1, 1],
            k: 2,
            seed: 0,
            iterations: 1,
        };
        let o = outcomes(&[Fail, Pass, Pass, Pass, Pass]);
        let cc = identify_coincidental(&a, &o).unwrap();
        assert_eq!(cc.into_iter().collect::<Vec<_>>(), ["r1", "r2"]);

        let all_fail = outcomes(&[Fail; 5]);
        assert!(identify_coincidental(&a, &all_fail).unwrap().is_empty());

        let short = outcomes(&[Fail, Pass]);
        assert!(matches!(
            identify_coincidental(&a, &short),
            Err(CleanError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn relabel_cases() {
        let o = outcomes(&[Pass, Fail, Pass]);
        assert_eq!(relabel(&o, &BTreeSet::new()).unwrap(), o);
        let cc: BTreeSet<String> = ["r2".to_string()].into();
        assert_eq!(relabel(&o, &cc).unwrap().labels(), [Pass, Fail, Fail]);
        let bad: BTreeSet<String> = ["r1".to_string()].into();
        assert_eq!(relabel(&o, &bad), Err(CleanError::NotAPassingRun("r1".into())));
        let unknown: BTreeSet<String> = ["zz".to_string()].into();
        assert!(relabel(&o, &unknown).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<bool>, usize, u64)> {
        (2usize..16, 1usize..6).prop_flat_map(|(m, n)| {
            (
                proptest::collection::vec(proptest::collection::vec(0u8..2, n), m),
                proptest::collection::vec(any::<bool>(), m),
                1..=m,
                any::<u64>(),
            )
        })
    }

    proptest! {
        #[test]
        fn cleaning_invariants((rows, fails, k, seed) in arb_instance()) {
            let mat = matrix(&rows);
            let labels: Vec<Outcome> = fails.iter().map(|&f| if f { Fail } else { Pass }).collect();
            let o = outcomes(&labels);
            let a = cluster_runs(&mat, k, seed).unwrap();
            prop_assert_eq!(&a, &cluster_runs(&mat, k, seed).unwrap());
            prop_assert!(a.labels.iter().all(|&c| c < k));
            let cc = identify_coincidental(&a, &o).unwrap();
            for r in &cc {
                prop_assert_eq!(o.get(r), Some(Pass));
            }
            let after = relabel(&o, &cc).unwrap();
            prop_assert_eq!(after.n_fail(), o.n_fail() + cc.len());
            for ((_, before), (_, now)) in o.iter().zip(after.iter()) {
                if before.is_fail() {
                    prop_assert!(now.is_fail());
                }
            }
        }
    }
}
