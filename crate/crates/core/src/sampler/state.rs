//! Nested partition bookkeeping and the auxiliary-parameter membership update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    covariate_loglik, outcome_loglik, sample_prior_covariate, sample_prior_outcome, CovariateParams, Observations,
    OutcomeParams, PriorSpec,
};
use crate::math::sample_log_weights;

/// An x-subcluster: its size and covariate parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XCluster {
    pub n: usize,
    pub omega: CovariateParams,
}

/// A y-cluster: its size, outcome parameters and nested subclusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YCluster {
    pub n: usize,
    pub theta: OutcomeParams,
    pub subclusters: Vec<XCluster>,
}

/// Zero-based `(y-cluster, x-subcluster)` labels of one subject.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Membership {
    pub y: usize,
    pub x: usize,
}

impl Membership {
    const UNASSIGNED: Membership = Membership {
        y: usize::MAX,
        x: usize::MAX,
    };
}

/// Nested partition `s_i = (s_y, s_x)` with per-cluster parameters.
///
/// Labels are dense: y-clusters are `0..k`, subclusters of `j` are
/// `0..k_j`, and every listed (sub)cluster is occupied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    assignments: Vec<Membership>,
    clusters: Vec<YCluster>,
}

impl ClusterState {
    /// All `n` subjects in one cluster and one subcluster.
    pub fn single(n: usize, theta: OutcomeParams, omega: CovariateParams) -> Self {
        Self {
            assignments: vec![Membership { y: 0, x: 0 }; n],
            clusters: vec![YCluster {
                n,
                theta,
                subclusters: vec![XCluster { n, omega }],
            }],
        }
    }

    /// Builds a state from explicit labels; parameters are given per
    /// y-cluster and per subcluster. Fails unless the labels are dense.
    pub fn from_parts(assignments: Vec<Membership>, params: Vec<(OutcomeParams, Vec<CovariateParams>)>) -> Result<Self> {
        let mut clusters: Vec<YCluster> = params
            .into_iter()
            .map(|(theta, omegas)| YCluster {
                n: 0,
                theta,
                subclusters: omegas.into_iter().map(|omega| XCluster { n: 0, omega }).collect(),
            })
            .collect();
        for (i, s) in assignments.iter().enumerate() {
            let sub = clusters
                .get_mut(s.y)
                .and_then(|c| {
                    c.n += 1;
                    c.subclusters.get_mut(s.x)
                })
                .ok_or_else(|| Error::Validation(format!("subject {i} has an out-of-range label")))?;
            sub.n += 1;
        }
        let state = Self { assignments, clusters };
        state.check_invariants().map_err(Error::Validation)?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Number of occupied y-clusters.
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[YCluster] {
        &self.clusters
    }

    pub(crate) fn clusters_mut(&mut self) -> &mut [YCluster] {
        &mut self.clusters
    }

    pub fn assignments(&self) -> &[Membership] {
        &self.assignments
    }

    pub fn membership(&self, i: usize) -> Membership {
        self.assignments[i]
    }

    pub fn subcluster_counts(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.subclusters.len()).collect()
    }

    /// Parameters governing subject `i`.
    pub fn params_of(&self, i: usize) -> (&OutcomeParams, &CovariateParams) {
        let s = self.assignments[i];
        let c = &self.clusters[s.y];
        (&c.theta, &c.subclusters[s.x].omega)
    }

    /// Member lists indexed `[j][l]`.
    pub fn members(&self) -> Vec<Vec<Vec<usize>>> {
        let mut out: Vec<Vec<Vec<usize>>> = self
            .clusters
            .iter()
            .map(|c| c.subclusters.iter().map(|s| Vec::with_capacity(s.n)).collect())
            .collect();
        for (i, s) in self.assignments.iter().enumerate() {
            out[s.y][s.x].push(i);
        }
        out
    }

    /// Verifies the count identities and label density.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut counts: Vec<Vec<usize>> = self.clusters.iter().map(|c| vec![0; c.subclusters.len()]).collect();
        for (i, s) in self.assignments.iter().enumerate() {
            match counts.get_mut(s.y).and_then(|c| c.get_mut(s.x)) {
                Some(c) => *c += 1,
                None => return Err(format!("subject {i} label {s:?} is out of range")),
            }
        }
        let mut total = 0;
        for (j, c) in self.clusters.iter().enumerate() {
            if c.subclusters.is_empty() {
                return Err(format!("y-cluster {j} has no subclusters"));
            }
            let mut sum = 0;
            for (l, sub) in c.subclusters.iter().enumerate() {
                if sub.n == 0 || sub.n != counts[j][l] {
                    return Err(format!("subcluster ({j},{l}) count {} vs {} members", sub.n, counts[j][l]));
                }
                sum += sub.n;
            }
            if sum != c.n {
                return Err(format!("y-cluster {j} count {} vs subcluster total {sum}", c.n));
            }
            total += c.n;
        }
        if total != self.n() {
            return Err(format!("cluster sizes sum to {total}, expected {}", self.n()));
        }
        Ok(())
    }
}

/// Auxiliary parameters offered to one subject: `m` fresh y-clusters (each
/// with one subcluster) and `m` fresh subclusters for every occupied
/// y-cluster.
#[derive(Clone, Debug, Default)]
pub struct ProposalTable {
    pub aux_y: Vec<(OutcomeParams, CovariateParams)>,
    pub aux_x: Vec<Vec<CovariateParams>>,
    seeded_y: bool,
    seeded_x: Option<usize>,
}

impl ProposalTable {
    pub fn m(&self) -> usize {
        self.aux_y.len()
    }
}

/// Where a subject was placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Existing { j: usize, l: usize },
    NewSubcluster { j: usize, aux: usize },
    NewCluster { aux: usize },
}

/// Removes subject `i`, compacts labels and fills the auxiliary table.
///
/// A vacated y-cluster's parameters seed auxiliary y-slot 0; a vacated
/// subcluster's parameters seed auxiliary x-slot 0 of its y-cluster.
pub fn relabel_and_augment<R: Rng + ?Sized>(
    i: usize,
    state: &mut ClusterState,
    prior: &PriorSpec,
    m: usize,
    rng: &mut R,
) -> ProposalTable {
    let mut table = ProposalTable::default();
    relabel_into(i, state, prior, m, &mut table, rng);
    table
}

pub(crate) fn relabel_into<R: Rng + ?Sized>(
    i: usize,
    state: &mut ClusterState,
    prior: &PriorSpec,
    m: usize,
    table: &mut ProposalTable,
    rng: &mut R,
) {
    table.seeded_y = false;
    table.seeded_x = None;
    let s = state.assignments[i];
    if s != Membership::UNASSIGNED {
        state.assignments[i] = Membership::UNASSIGNED;
        remove_member(s, state, table);
    }
    fill_aux(state, prior, m, table, rng);
}

fn remove_member(s: Membership, state: &mut ClusterState, table: &mut ProposalTable) {
    let cluster = &mut state.clusters[s.y];
    cluster.n -= 1;
    cluster.subclusters[s.x].n -= 1;
    if cluster.n == 0 {
        let last = state.clusters.len() - 1;
        let mut removed = state.clusters.swap_remove(s.y);
        if s.y != last {
            for a in state.assignments.iter_mut().filter(|a| a.y == last) {
                a.y = s.y;
            }
        }
        let omega = removed.subclusters.swap_remove(s.x).omega;
        if table.aux_y.is_empty() {
            table.aux_y.push((removed.theta, omega));
        } else {
            table.aux_y[0] = (removed.theta, omega);
        }
        table.seeded_y = true;
    } else if cluster.subclusters[s.x].n == 0 {
        let last = cluster.subclusters.len() - 1;
        let removed = cluster.subclusters.swap_remove(s.x);
        if s.x != last {
            for a in state.assignments.iter_mut().filter(|a| a.y == s.y && a.x == last) {
                a.x = s.x;
            }
        }
        if table.aux_x.len() <= s.y {
            table.aux_x.resize_with(s.y + 1, Vec::new);
        }
        let slots = &mut table.aux_x[s.y];
        if slots.is_empty() {
            slots.push(removed.omega);
        } else {
            slots[0] = removed.omega;
        }
        table.seeded_x = Some(s.y);
    }
}

fn fill_aux<R: Rng + ?Sized>(state: &ClusterState, prior: &PriorSpec, m: usize, table: &mut ProposalTable, rng: &mut R) {
    let k = state.clusters.len();
    let y_start = usize::from(table.seeded_y);
    for slot in y_start..m {
        if let Some((theta, omega)) = table.aux_y.get_mut(slot) {
            theta.redraw_from_prior(prior, rng);
            omega.redraw_from_prior(prior, rng);
        } else {
            let theta = sample_prior_outcome(prior, rng);
            let omega = sample_prior_covariate(prior, rng);
            table.aux_y.push((theta, omega));
        }
    }
    table.aux_y.truncate(m);
    table.aux_x.resize_with(k, Vec::new);
    for (j, slots) in table.aux_x.iter_mut().enumerate() {
        let start = usize::from(table.seeded_x == Some(j));
        for slot in start..m {
            if let Some(omega) = slots.get_mut(slot) {
                omega.redraw_from_prior(prior, rng);
            } else {
                slots.push(sample_prior_covariate(prior, rng));
            }
        }
        slots.truncate(m);
    }
}

/// Unnormalized log-probabilities of every placement for subject `i`, in
/// table order: for each y-cluster its occupied then auxiliary subclusters,
/// followed by the auxiliary y-clusters.
pub fn membership_log_weights(
    i: usize,
    state: &ClusterState,
    table: &ProposalTable,
    obs: &Observations<'_>,
    alpha_theta: f64,
    alpha_omega: f64,
) -> Vec<(Choice, f64)> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    log_weights_into(i, state, table, obs, alpha_theta, alpha_omega, &mut buf);
    let m = table.m();
    let mut idx = 0;
    for (j, c) in state.clusters.iter().enumerate() {
        for l in 0..c.subclusters.len() {
            out.push((Choice::Existing { j, l }, buf[idx]));
            idx += 1;
        }
        for aux in 0..m {
            out.push((Choice::NewSubcluster { j, aux }, buf[idx]));
            idx += 1;
        }
    }
    for aux in 0..m {
        out.push((Choice::NewCluster { aux }, buf[idx]));
        idx += 1;
    }
    out
}

fn log_weights_into(
    i: usize,
    state: &ClusterState,
    table: &ProposalTable,
    obs: &Observations<'_>,
    alpha_theta: f64,
    alpha_omega: f64,
    buf: &mut Vec<f64>,
) {
    let (y, a, l) = (obs.y[i], obs.a[i], obs.row(i));
    let m = table.m();
    let ln_aux_x = (alpha_omega / m as f64).ln();
    let ln_aux_y = (alpha_theta / m as f64).ln();
    buf.clear();
    for (j, c) in state.clusters.iter().enumerate() {
        let nj = c.n as f64;
        let base = nj.ln() - (nj + alpha_omega).ln() + outcome_loglik(y, a, l, &c.theta);
        for sub in &c.subclusters {
            buf.push(base + (sub.n as f64).ln() + covariate_loglik(a, l, &sub.omega));
        }
        for omega in &table.aux_x[j] {
            buf.push(base + ln_aux_x + covariate_loglik(a, l, omega));
        }
    }
    for (theta, omega) in &table.aux_y {
        buf.push(ln_aux_y + outcome_loglik(y, a, l, theta) + covariate_loglik(a, l, omega));
    }
}

/// Draws a placement for the removed subject `i` and commits it.
pub fn update_cluster_membership<R: Rng + ?Sized>(
    i: usize,
    state: &mut ClusterState,
    table: &ProposalTable,
    obs: &Observations<'_>,
    alpha_theta: f64,
    alpha_omega: f64,
    rng: &mut R,
) -> Result<Choice> {
    let mut buf = Vec::new();
    membership_step(i, state, table, obs, alpha_theta, alpha_omega, &mut buf, rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn membership_step<R: Rng + ?Sized>(
    i: usize,
    state: &mut ClusterState,
    table: &ProposalTable,
    obs: &Observations<'_>,
    alpha_theta: f64,
    alpha_omega: f64,
    buf: &mut Vec<f64>,
    rng: &mut R,
) -> Result<Choice> {
    debug_assert_eq!(state.assignments[i], Membership::UNASSIGNED);
    log_weights_into(i, state, table, obs, alpha_theta, alpha_omega, buf);
    let idx = sample_log_weights(buf, rng).ok_or(Error::Underflow { subject: i })?;
    let m = table.m();
    let mut offset = 0;
    let mut choice = None;
    for (j, c) in state.clusters.iter().enumerate() {
        let kj = c.subclusters.len();
        if idx < offset + kj {
            choice = Some(Choice::Existing { j, l: idx - offset });
            break;
        }
        if idx < offset + kj + m {
            choice = Some(Choice::NewSubcluster {
                j,
                aux: idx - offset - kj,
            });
            break;
        }
        offset += kj + m;
    }
    let choice = choice.unwrap_or(Choice::NewCluster { aux: idx - offset });
    commit(i, state, table, choice);
    Ok(choice)
}

fn commit(i: usize, state: &mut ClusterState, table: &ProposalTable, choice: Choice) {
    match choice {
        Choice::Existing { j, l } => {
            let c = &mut state.clusters[j];
            c.n += 1;
            c.subclusters[l].n += 1;
            state.assignments[i] = Membership { y: j, x: l };
        }
        Choice::NewSubcluster { j, aux } => {
            let c = &mut state.clusters[j];
            c.n += 1;
            c.subclusters.push(XCluster {
                n: 1,
                omega: table.aux_x[j][aux].clone(),
            });
            state.assignments[i] = Membership {
                y: j,
                x: c.subclusters.len() - 1,
            };
        }
        Choice::NewCluster { aux } => {
            let (theta, omega) = table.aux_y[aux].clone();
            state.clusters.push(YCluster {
                n: 1,
                theta,
                subclusters: vec![XCluster { n: 1, omega }],
            });
            state.assignments[i] = Membership {
                y: state.clusters.len() - 1,
                x: 0,
            };
        }
    }
}
