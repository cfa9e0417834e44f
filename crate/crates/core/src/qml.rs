//! K-means and k-NN over motional states with SWAP-test overlaps.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{make_fock, ComplexParam, MotionalState, StateSpec, Truncation, WeightedSpec};
use crate::swap_test::{OverlapEstimate, OverlapFn, PairKey};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataEntry {
    pub id: String,
    pub spec: StateSpec,
    pub state: MotionalState,
    /// Cluster labels start at 1.
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    entries: Vec<DataEntry>,
}

impl Dataset {
    pub fn new(entries: Vec<DataEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_specs(specs: Vec<(String, StateSpec, Option<usize>)>, truncation: &Truncation) -> Result<Self> {
        let entries = specs
            .into_iter()
            .map(|(id, spec, label)| {
                let state = spec.realize_with(truncation)?;
                Ok(DataEntry { id, spec, state, label })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[DataEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn states(&self) -> Vec<&MotionalState> {
        self.entries.iter().map(|e| &e.state).collect()
    }

    /// Replace labels, e.g. with a clustering result.
    pub fn with_labels(&self, labels: &[usize]) -> Self {
        let entries = self
            .entries
            .iter()
            .zip(labels)
            .map(|(e, &l)| DataEntry {
                label: Some(l),
                ..e.clone()
            })
            .collect();
        Self { entries }
    }
}

pub const SQUEEZING: [f64; 5] = [1.5, 1.1, 1.2, 1.3, 1.4];
/// Superposition angles in units of π.
pub const FOCK_ANGLES: [f64; 5] = [0.37, 0.45, 0.47, 0.72, 0.55];
pub const DISPLACEMENTS: [f64; 5] = [1.5, 1.3, 1.0, 1.2, 1.1];

pub fn standard_dataset_specs() -> Vec<(String, StateSpec, Option<usize>)> {
    let mut v = Vec::with_capacity(15);
    for (i, &r) in SQUEEZING.iter().enumerate() {
        v.push((format!("sqz{}", i + 1), StateSpec::SqueezedVacuum { r, phase: PI }, Some(1)));
    }
    for (i, &a) in FOCK_ANGLES.iter().enumerate() {
        v.push((format!("fock{}", i + 1), StateSpec::FockSuperposition { angle: a * PI }, Some(2)));
    }
    for (i, &a) in DISPLACEMENTS.iter().enumerate() {
        v.push((format!("coh{}", i + 1), StateSpec::Coherent { alpha: a.into() }, Some(3)));
    }
    v
}

/// Fifteen states: squeezed vacua, Fock superpositions and coherent states,
/// labelled 1, 2, 3 by family.
pub fn standard_dataset() -> Dataset {
    Dataset::from_specs(standard_dataset_specs(), &Truncation::default()).expect("fixed dataset is valid")
}

/// The five k-NN trial states, with the family each is expected to join.
pub fn standard_trial_specs() -> Vec<(String, StateSpec, usize)> {
    let w = |x: f64| ComplexParam::Real(x.sqrt());
    vec![
        ("trial1".into(), StateSpec::SqueezedVacuum { r: 1.25, phase: PI }, 1),
        ("trial2".into(), StateSpec::FockSuperposition { angle: PI / 2.0 }, 2),
        ("trial3".into(), StateSpec::Coherent { alpha: 1.25.into() }, 3),
        (
            "trial4".into(),
            StateSpec::Displaced {
                alpha: 1.0.into(),
                base: Box::new(StateSpec::Explicit {
                    amplitudes: vec![1.0.into(), (-1.0).into()],
                }),
            },
            2,
        ),
        (
            "trial5".into(),
            // √0.2(|0⟩+|1⟩) is √0.4 times the normalized superposition
            StateSpec::Superposition {
                terms: vec![
                    WeightedSpec {
                        weight: w(0.3),
                        state: StateSpec::SqueezedVacuum { r: 0.8, phase: PI },
                    },
                    WeightedSpec {
                        weight: w(0.4),
                        state: StateSpec::FockSuperposition { angle: PI / 2.0 },
                    },
                    WeightedSpec {
                        weight: w(0.5),
                        state: StateSpec::Coherent { alpha: 1.7.into() },
                    },
                ],
            },
            2,
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Normalized mean of member amplitude vectors.
    #[default]
    Mean,
    /// Leading eigenvector of the members' summed projector.
    PrincipalEigenvector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmptyClusterPolicy {
    /// Restart an empty cluster at the worst-fitting data state.
    #[default]
    Reseed,
    RetainPrevious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CentroidSource {
    /// Member amplitude vectors as prepared.
    #[default]
    TrueState,
    /// Square roots of member populations, as recovered by sideband
    /// characterization.
    PopulationSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub centroid_dim: usize,
    pub max_iter: usize,
    pub update_rule: UpdateRule,
    pub empty_policy: EmptyClusterPolicy,
    pub source: CentroidSource,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            centroid_dim: 5,
            max_iter: 10,
            update_rule: UpdateRule::Mean,
            empty_policy: EmptyClusterPolicy::Reseed,
            source: CentroidSource::TrueState,
        }
    }
}

/// One assignment step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringState {
    pub iteration: usize,
    /// Centroids the step measured against.
    pub centroids: Vec<MotionalState>,
    /// Cluster index (from 1) of each data state, in dataset order.
    pub assignments: Vec<usize>,
    /// `overlaps[m][k]`: data state `m` against centroid `k`.
    pub overlaps: Vec<Vec<OverlapEstimate>>,
    /// The assignment repeated the previous step's.
    pub converged: bool,
}

/// Index of the largest value; the first one wins ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn source_vector(s: &MotionalState, source: CentroidSource, dim: usize) -> Vec<C64> {
    match source {
        CentroidSource::TrueState => s.padded(dim),
        CentroidSource::PopulationSqrt => {
            let mut v: Vec<C64> = s.populations().iter().map(|p| C64::new(p.sqrt(), 0.0)).collect();
            v.resize(dim, C64::default());
            v
        }
    }
}

fn update_centroid(members: &[&MotionalState], config: &KMeansConfig) -> Result<MotionalState> {
    let d = config.centroid_dim;
    match config.update_rule {
        UpdateRule::Mean => {
            let mut acc = vec![C64::default(); d];
            for m in members {
                for (a, c) in acc.iter_mut().zip(source_vector(m, config.source, d)) {
                    *a += c;
                }
            }
            MotionalState::new(acc)
        }
        UpdateRule::PrincipalEigenvector => {
            let mut rho = DMatrix::<C64>::zeros(d, d);
            for m in members {
                let v = source_vector(m, config.source, d);
                for i in 0..d {
                    for j in 0..d {
                        rho[(i, j)] += v[i] * v[j].conj();
                    }
                }
            }
            let eig = SymmetricEigen::new(rho);
            let top = argmax(eig.eigenvalues.iter().copied());
            MotionalState::new(eig.eigenvectors.column(top).iter().copied().collect())
        }
    }
}

pub fn kmeans(
    data: &Dataset,
    k: usize,
    init: &[MotionalState],
    overlap: &dyn OverlapFn,
    config: &KMeansConfig,
) -> Result<Vec<ClusteringState>> {
    if k == 0 {
        return Err(Error::NoClusters);
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if init.len() != k {
        return Err(Error::CentroidCount {
            expected: k,
            got: init.len(),
        });
    }
    if config.centroid_dim == 0 {
        return Err(Error::InvalidParameter {
            name: "centroid_dim",
            reason: "must be at least 1".into(),
        });
    }
    let states = data.states();
    let mut centroids = init.to_vec();
    let mut trajectory: Vec<ClusteringState> = Vec::new();
    for l in 0..config.max_iter.max(1) {
        let overlaps = states
            .iter()
            .enumerate()
            .map(|(m, s)| {
                centroids
                    .iter()
                    .enumerate()
                    .map(|(c, cent)| overlap.overlap(s, cent, PairKey::new(l, m, c)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let assignments: Vec<usize> = overlaps
            .iter()
            .map(|row| argmax(row.iter().map(|e| e.estimate)) + 1)
            .collect();
        let converged = trajectory.last().is_some_and(|p| p.assignments == assignments);
        let step = ClusteringState {
            iteration: l,
            centroids: centroids.clone(),
            assignments,
            overlaps,
            converged,
        };
        let next = if converged {
            None
        } else {
            Some(next_centroids(&states, &step, config)?)
        };
        trajectory.push(step);
        match next {
            Some(c) => centroids = c,
            None => break,
        }
    }
    Ok(trajectory)
}

fn next_centroids(
    states: &[&MotionalState],
    step: &ClusteringState,
    config: &KMeansConfig,
) -> Result<Vec<MotionalState>> {
    let k = step.centroids.len();
    let mut out = Vec::with_capacity(k);
    let mut reseeded: HashSet<usize> = HashSet::new();
    for c in 1..=k {
        let members: Vec<&MotionalState> = states
            .iter()
            .zip(&step.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(s, _)| *s)
            .collect();
        if !members.is_empty() {
            out.push(update_centroid(&members, config)?);
            continue;
        }
        let previous = step.centroids[c - 1].clone();
        match config.empty_policy {
            EmptyClusterPolicy::RetainPrevious => out.push(previous),
            EmptyClusterPolicy::Reseed => {
                // the state that fits its own centroid worst
                let pick = (0..states.len())
                    .filter(|m| !reseeded.contains(m))
                    .map(|m| (m, step.overlaps[m][step.assignments[m] - 1].estimate))
                    .fold(None::<(usize, f64)>, |best, cur| match best {
                        Some(b) if b.1 <= cur.1 => Some(b),
                        _ => Some(cur),
                    });
                let seeded = pick.and_then(|(m, _)| {
                    reseeded.insert(m);
                    let v = source_vector(states[m], config.source, config.centroid_dim);
                    MotionalState::new(v).ok()
                });
                out.push(seeded.unwrap_or(previous));
            }
        }
    }
    Ok(out)
}

/// Fock basis states `|0⟩..|k-1⟩` used as initial centroids.
pub fn fock_centroids(k: usize) -> Vec<MotionalState> {
    (0..k).map(|j| make_fock(j, j + 1).expect("level within dim")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: String,
    pub label: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnResult {
    pub trial_id: String,
    pub k: usize,
    /// `proportions[c - 1]` is the share of cluster `c` among the k nearest.
    pub proportions: Vec<f64>,
    pub winner: usize,
    /// All training states, by decreasing overlap.
    pub neighbors: Vec<Neighbor>,
}

/// Classify by majority among the `k` highest-overlap training states.
///
/// Overlap ties go to the earlier training state; a tied majority goes to the
/// cluster of the single nearest neighbour if it is among the tied clusters,
/// otherwise to the lowest tied cluster index.
pub fn knn_classify(
    trial_id: &str,
    trial: &MotionalState,
    training: &Dataset,
    k: usize,
    overlap: &dyn OverlapFn,
    round: usize,
) -> Result<KnnResult> {
    if k == 0 || k > training.len() {
        return Err(Error::NeighborCount {
            k,
            len: training.len(),
        });
    }
    let mut scored = training
        .entries()
        .iter()
        .enumerate()
        .map(|(m, e)| {
            let label = e.label.filter(|&l| l >= 1).ok_or_else(|| Error::InvalidParameter {
                name: "label",
                reason: format!("training state `{}` has no cluster label", e.id),
            })?;
            let o = overlap.overlap(trial, &e.state, PairKey::new(round, m, 0))?;
            Ok((m, label, o.estimate))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let clusters = scored.iter().map(|s| s.1).max().unwrap_or(1);
    let mut counts = vec![0usize; clusters];
    for s in &scored[..k] {
        counts[s.1 - 1] += 1;
    }
    let best = *counts.iter().max().unwrap_or(&0);
    let tied: Vec<usize> = (1..=clusters).filter(|&c| counts[c - 1] == best).collect();
    let nearest = scored[0].1;
    let winner = if tied.contains(&nearest) { nearest } else { tied[0] };
    let neighbors = scored
        .iter()
        .map(|&(m, label, overlap)| Neighbor {
            id: training.entries()[m].id.clone(),
            label,
            overlap,
        })
        .collect();
    Ok(KnnResult {
        trial_id: trial_id.to_string(),
        k,
        proportions: counts.iter().map(|&c| c as f64 / k as f64).collect(),
        winner,
        neighbors,
    })
}
