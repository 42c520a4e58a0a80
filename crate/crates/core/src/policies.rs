//! Dispatch rules: MPMP, JSQ and PAS with lowest-label or shortest-queue tie-breaking.
//!
//! The free functions are direct linear scans over the eligible components.
//! [`Dispatcher`] makes the same decisions from occupancy buckets so that
//! farms with thousands of components can be simulated quickly.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::indices::{solve_e0, solve_indices, FluidAllocation, FluidOptions, IndexTable, DEFAULT_EPSILON};
use crate::markov::Scaling;
use crate::model::{FarmInstance, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct FarmState {
    /// `N_j` per component label.
    pub occupancy: Vec<usize>,
    pub time: f64,
}

impl FarmState {
    pub fn empty(topology: &Topology) -> FarmState {
        FarmState {
            occupancy: vec![0; topology.total_components()],
            time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DispatchDecision {
    Component(usize),
    /// Sent to the class's virtual component.
    Reject { class: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lowest label.
    #[default]
    Lltb,
    /// Shortest queue, then lowest label.
    Sqtb,
}

impl FromStr for TieBreak {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lltb" => Ok(TieBreak::Lltb),
            "sqtb" => Ok(TieBreak::Sqtb),
            other => Err(format!("unknown tie-break rule '{other}' (expected lltb or sqtb)")),
        }
    }
}

impl std::fmt::Display for TieBreak {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieBreak::Lltb => "lltb",
            TieBreak::Sqtb => "sqtb",
        })
    }
}

/// Scans eligible, non-full components for the largest key; `better(a, b)` breaks equal keys.
fn scan(
    topology: &Topology,
    occupancy: &[usize],
    class: usize,
    tiebreak: TieBreak,
    key: impl Fn(usize, usize) -> f64,
) -> DispatchDecision {
    let mut best: Option<(f64, usize)> = None;
    for &j in &topology.class_components[class - 1] {
        let n = occupancy[j];
        if n >= topology.component_capacity[j] {
            continue;
        }
        let k = key(topology.component_cluster[j], n);
        let take = match best {
            None => true,
            Some((bk, bj)) => k > bk || (k == bk && tiebreak == TieBreak::Sqtb && n < occupancy[bj]),
        };
        if take {
            best = Some((k, j));
        }
    }
    match best {
        Some((_, j)) => DispatchDecision::Component(j),
        None => DispatchDecision::Reject { class },
    }
}

/// Largest current-state index among eligible non-full components.
pub fn mpmp_dispatch(
    topology: &Topology,
    occupancy: &[usize],
    class: usize,
    table: &IndexTable,
    tiebreak: TieBreak,
) -> DispatchDecision {
    scan(topology, occupancy, class, tiebreak, |i, n| table.index(class, i, n))
}

/// Fewest jobs among eligible non-full components, ties by label.
pub fn jsq_dispatch(topology: &Topology, occupancy: &[usize], class: usize, tiebreak: TieBreak) -> DispatchDecision {
    scan(topology, occupancy, class, tiebreak, |_, n| -(n as f64))
}

/// Highest-priority cluster with room (cluster ties by id), then the tie-break rule inside it.
pub fn pas_dispatch(
    topology: &Topology,
    occupancy: &[usize],
    class: usize,
    priorities: &[f64],
    tiebreak: TieBreak,
) -> DispatchDecision {
    let mut best: Option<(usize, usize)> = None;
    for &j in &topology.class_components[class - 1] {
        let n = occupancy[j];
        if n >= topology.component_capacity[j] {
            continue;
        }
        let i = topology.component_cluster[j];
        let take = match best {
            None => true,
            Some((bi, bj)) => {
                let (p, bp) = (priorities[i - 1], priorities[bi - 1]);
                p > bp || (p == bp && i < bi) || (i == bi && tiebreak == TieBreak::Sqtb && n < occupancy[bj])
            }
        };
        if take {
            best = Some((i, j));
        }
    }
    match best {
        Some((_, j)) => DispatchDecision::Component(j),
        None => DispatchDecision::Reject { class },
    }
}

/// `r_i = mu(C) / (eps(C) - eps(0))` per cluster.
pub fn default_pas_priorities(instance: &FarmInstance) -> Vec<f64> {
    instance.clusters.iter().map(|c| c.peak_ratio()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Mpmp(IndexTable),
    Jsq,
    Pas(Vec<f64>),
}

impl Policy {
    /// MPMP at the fluid estimate of `e*`, with indices solved at the instance's own `h`.
    pub fn mpmp_auto(instance: &FarmInstance) -> crate::Result<Policy> {
        let estimate = solve_e0(instance, FluidOptions::default())?;
        let table = solve_indices(instance, estimate.e0, Scaling::from_h(instance.scaling), DEFAULT_EPSILON)?;
        Ok(Policy::Mpmp(table))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Mpmp(_) => "mpmp",
            Policy::Jsq => "jsq",
            Policy::Pas(_) => "pas",
        }
    }

    pub fn dispatch(&self, topology: &Topology, occupancy: &[usize], class: usize, tiebreak: TieBreak) -> DispatchDecision {
        match self {
            Policy::Mpmp(table) => mpmp_dispatch(topology, occupancy, class, table, tiebreak),
            Policy::Jsq => jsq_dispatch(topology, occupancy, class, tiebreak),
            Policy::Pas(p) => pas_dispatch(topology, occupancy, class, p, tiebreak),
        }
    }

    /// Priority of a cluster-`cluster` component holding `n` jobs for an arriving class-`class` job.
    /// Ties between clusters with equal PAS priority are split by cluster id.
    fn key(&self, class: usize, cluster: usize, n: usize, num_clusters: usize) -> (f64, usize) {
        match self {
            Policy::Mpmp(table) => (table.index(class, cluster, n), 0),
            Policy::Jsq => (-(n as f64), 0),
            Policy::Pas(p) => (p[cluster - 1], num_clusters - cluster),
        }
    }
}

/// Incremental dispatcher holding the farm occupancy.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    tiebreak: TieBreak,
    /// Per class, groups of equal-priority `(cluster, n)` types in descending priority.
    levels: Vec<Vec<Vec<(usize, usize)>>>,
    /// Labels of the cluster-`i` components holding `n` jobs, at `buckets[i-1][n]`.
    buckets: Vec<Vec<BTreeSet<usize>>>,
    occupancy: Vec<usize>,
    cluster_of: Vec<usize>,
}

impl Dispatcher {
    pub fn new(instance: &FarmInstance, topology: &Topology, policy: &Policy, tiebreak: TieBreak) -> Dispatcher {
        let num_clusters = instance.num_clusters();
        let levels = instance
            .classes
            .iter()
            .map(|class| {
                let mut types: Vec<((f64, usize), usize, usize)> = class
                    .eligible_clusters
                    .iter()
                    .flat_map(|&i| {
                        (0..instance.cluster(i).capacity).map(move |n| (policy.key(class.id, i, n, num_clusters), i, n))
                    })
                    .collect();
                types.sort_by(|a, b| b.0 .0.total_cmp(&a.0 .0).then(b.0 .1.cmp(&a.0 .1)));
                let mut grouped: Vec<Vec<(usize, usize)>> = Vec::new();
                let mut last: Option<(f64, usize)> = None;
                for (key, i, n) in types {
                    if last == Some(key) {
                        grouped.last_mut().expect("group exists").push((i, n));
                    } else {
                        grouped.push(vec![(i, n)]);
                        last = Some(key);
                    }
                }
                for group in &mut grouped {
                    group.sort_by_key(|&(i, n)| (n, i));
                }
                grouped
            })
            .collect();
        let mut buckets: Vec<Vec<BTreeSet<usize>>> = instance
            .clusters
            .iter()
            .map(|c| vec![BTreeSet::new(); c.capacity + 1])
            .collect();
        for (i, range) in topology.cluster_ranges.iter().enumerate() {
            buckets[i][0].extend(range.clone());
        }
        Dispatcher {
            tiebreak,
            levels,
            buckets,
            occupancy: vec![0; topology.total_components()],
            cluster_of: topology.component_cluster.clone(),
        }
    }

    pub fn occupancy(&self) -> &[usize] {
        &self.occupancy
    }

    pub fn select(&self, class: usize) -> DispatchDecision {
        for group in &self.levels[class - 1] {
            let mut best: Option<usize> = None;
            let mut best_n = usize::MAX;
            // groups are sorted by n, so under SQTB the first occupied n wins
            for &(i, n) in group {
                if self.tiebreak == TieBreak::Sqtb && n > best_n {
                    break;
                }
                if let Some(&j) = self.buckets[i - 1][n].first() {
                    if best.is_none_or(|b| j < b) {
                        best = Some(j);
                        best_n = n;
                    }
                }
            }
            if let Some(j) = best {
                return DispatchDecision::Component(j);
            }
        }
        DispatchDecision::Reject { class }
    }

    pub fn admit(&mut self, label: usize) {
        let n = self.occupancy[label];
        self.move_label(label, n, n + 1);
    }

    pub fn release(&mut self, label: usize) {
        let n = self.occupancy[label];
        self.move_label(label, n, n - 1);
    }

    fn move_label(&mut self, label: usize, from: usize, to: usize) {
        let row = &mut self.buckets[self.cluster_of[label] - 1];
        row[from].remove(&label);
        row[to].insert(label);
        self.occupancy[label] = to;
    }
}

/// Fluid attractor over state-cluster pairs, cluster-major with states `0..=C`.
pub fn attractor_point(alloc: &FluidAllocation, instance: &FarmInstance) -> Vec<f64> {
    let total = instance.total_base_components() as f64;
    let mut z = Vec::new();
    for c in &instance.clusters {
        let mut block = vec![0.0; c.capacity + 1];
        let (q, u) = (alloc.q[c.id - 1], alloc.u[c.id - 1]);
        let w = c.component_count_base as f64 / total;
        block[q] += w * (1.0 - u);
        if u > 0.0 {
            block[q + 1] += w * u;
        }
        z.extend(block);
    }
    z
}

/// Offset of cluster `i`'s block in the state-cluster vector.
pub fn sc_offsets(instance: &FarmInstance) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(instance.num_clusters());
    let mut acc = 0;
    for c in &instance.clusters {
        offsets.push(acc);
        acc += c.capacity + 1;
    }
    offsets
}
