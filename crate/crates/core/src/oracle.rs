//! Exact solves of small farms with exponential job sizes.
//!
//! The farm is a continuous-time Markov chain on component occupancies. Fixed
//! policies are evaluated by Gauss–Seidel on the global-balance equations; the
//! `e`-weighted control problem is solved by relative value iteration on the
//! uniformized chain, and the ratio optimum by Dinkelbach's iteration.
//! Only states reachable from the empty farm are enumerated.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, FarmInstance, Topology};
use crate::policies::{DispatchDecision, Policy, TieBreak};

pub const DEFAULT_STATE_CAP: usize = 200_000;
const GS_TOLERANCE: f64 = 1e-13;
const GS_MAX_SWEEPS: usize = 500_000;
const RVI_TOLERANCE: f64 = 1e-10;
const RVI_MAX_ITERATIONS: usize = 5_000_000;
const DINKELBACH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Representation {
    /// One coordinate per component label.
    #[default]
    Product,
    /// Per cluster, the number of components at each occupancy level.
    Counts,
}

/// Enumerated chain with every admissible arrival target kept.
#[derive(Debug, Clone)]
struct Chain {
    states: Vec<Vec<usize>>,
    throughput: Vec<f64>,
    energy: Vec<f64>,
    /// `h * lambda_l`.
    arrival_rates: Vec<f64>,
    /// `[state][class]` admissible targets; empty means the job is blocked.
    options: Vec<Vec<Vec<usize>>>,
    departures: Vec<Vec<(f64, usize)>>,
}

/// Product-space size `prod_j (C_j + 1)`, saturating.
fn product_size(instance: &FarmInstance) -> usize {
    instance.clusters.iter().fold(1usize, |acc, c| {
        let mut acc = acc;
        for _ in 0..instance.component_count(c.id) {
            acc = acc.saturating_mul(c.capacity + 1);
        }
        acc
    })
}

fn binomial(n: usize, k: usize) -> usize {
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Size of the counts space `prod_i binom(M_i + C_i, C_i)`, saturating.
fn counts_size(instance: &FarmInstance) -> usize {
    instance.clusters.iter().fold(1usize, |acc, c| {
        acc.saturating_mul(binomial(instance.component_count(c.id) + c.capacity, c.capacity))
    })
}

/// Breadth-first enumeration from `start`, given a successor function.
fn explore(start: Vec<usize>, mut successors: impl FnMut(&[usize]) -> Vec<Vec<usize>>) -> (Vec<Vec<usize>>, HashMap<Vec<usize>, usize>) {
    let mut index = HashMap::new();
    let mut states = vec![start.clone()];
    index.insert(start, 0);
    let mut k = 0;
    while k < states.len() {
        let next = successors(&states[k]);
        for s in next {
            if !index.contains_key(&s) {
                index.insert(s.clone(), states.len());
                states.push(s);
            }
        }
        k += 1;
    }
    (states, index)
}

fn check_cap(instance: &FarmInstance, representation: Representation, cap: usize) -> Result<()> {
    let states = match representation {
        Representation::Product => product_size(instance),
        Representation::Counts => counts_size(instance),
    };
    if states > cap {
        return Err(Error::StateCapExceeded { states, cap });
    }
    Ok(())
}

fn class_rates(instance: &FarmInstance) -> Vec<f64> {
    let h = instance.scaling as f64;
    instance.classes.iter().map(|c| h * c.arrival_rate_base).collect()
}

/// Product chain with all admissible targets.
fn product_chain(instance: &FarmInstance, topology: &Topology) -> Chain {
    let moves = |s: &[usize], class: usize| -> Vec<Vec<usize>> {
        topology.class_components[class]
            .iter()
            .filter(|&&j| s[j] < topology.component_capacity[j])
            .map(|&j| {
                let mut t = s.to_vec();
                t[j] += 1;
                t
            })
            .collect()
    };
    let downs = |s: &[usize]| -> Vec<(f64, Vec<usize>)> {
        (0..s.len())
            .filter(|&j| s[j] > 0)
            .map(|j| {
                let mut t = s.to_vec();
                t[j] -= 1;
                (instance.cluster(topology.component_cluster[j]).service_rates[s[j]], t)
            })
            .collect()
    };
    let num_classes = instance.num_classes();
    let rates = class_rates(instance);
    let (states, index) = explore(vec![0; topology.total_components()], |s| {
        let mut out: Vec<Vec<usize>> = (0..num_classes)
            .filter(|&l| rates[l] > 0.0)
            .flat_map(|l| moves(s, l))
            .collect();
        out.extend(downs(s).into_iter().map(|(_, t)| t));
        out
    });
    let rate_of = |s: &[usize], f: &dyn Fn(&ClusterSpec, usize) -> f64| -> f64 {
        s.iter()
            .enumerate()
            .map(|(j, &n)| f(instance.cluster(topology.component_cluster[j]), n))
            .sum()
    };
    Chain {
        throughput: states.iter().map(|s| rate_of(s, &|c, n| c.service_rates[n])).collect(),
        energy: states.iter().map(|s| rate_of(s, &|c, n| c.energy_rates[n])).collect(),
        options: states
            .iter()
            .map(|s| {
                (0..num_classes)
                    .map(|l| if rates[l] > 0.0 { moves(s, l).iter().map(|t| index[t]).collect() } else { vec![] })
                    .collect()
            })
            .collect(),
        departures: states
            .iter()
            .map(|s| downs(s).into_iter().map(|(r, t)| (r, index[&t])).collect())
            .collect(),
        arrival_rates: rates,
        states,
    }
}

/// Counts chain: coordinates are `c[i][n]` flattened cluster-major with levels `0..=C_i`.
fn counts_chain(instance: &FarmInstance) -> Chain {
    let mut offsets = Vec::new();
    let mut width = 0;
    for c in &instance.clusters {
        offsets.push(width);
        width += c.capacity + 1;
    }
    let shift = |s: &[usize], at: usize, from: usize, to: usize| -> Vec<usize> {
        let mut t = s.to_vec();
        t[at + from] -= 1;
        t[at + to] += 1;
        t
    };
    let moves = |s: &[usize], class: usize| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for &i in &instance.classes[class].eligible_clusters {
            let c = instance.cluster(i);
            for n in 0..c.capacity {
                if s[offsets[i - 1] + n] > 0 {
                    out.push(shift(s, offsets[i - 1], n, n + 1));
                }
            }
        }
        out
    };
    let downs = |s: &[usize]| -> Vec<(f64, Vec<usize>)> {
        let mut out = Vec::new();
        for c in &instance.clusters {
            for n in 1..=c.capacity {
                let k = s[offsets[c.id - 1] + n];
                if k > 0 {
                    out.push((k as f64 * c.service_rates[n], shift(s, offsets[c.id - 1], n, n - 1)));
                }
            }
        }
        out
    };
    let mut start = vec![0; width];
    for c in &instance.clusters {
        start[offsets[c.id - 1]] = instance.component_count(c.id);
    }
    let num_classes = instance.num_classes();
    let rates = class_rates(instance);
    let (states, index) = explore(start, |s| {
        let mut out: Vec<Vec<usize>> = (0..num_classes)
            .filter(|&l| rates[l] > 0.0)
            .flat_map(|l| moves(s, l))
            .collect();
        out.extend(downs(s).into_iter().map(|(_, t)| t));
        out
    });
    let rate_of = |s: &[usize], f: &dyn Fn(&ClusterSpec, usize) -> f64| -> f64 {
        instance
            .clusters
            .iter()
            .map(|c| (0..=c.capacity).map(|n| s[offsets[c.id - 1] + n] as f64 * f(c, n)).sum::<f64>())
            .sum()
    };
    Chain {
        throughput: states.iter().map(|s| rate_of(s, &|c, n| c.service_rates[n])).collect(),
        energy: states.iter().map(|s| rate_of(s, &|c, n| c.energy_rates[n])).collect(),
        options: states
            .iter()
            .map(|s| {
                (0..num_classes)
                    .map(|l| if rates[l] > 0.0 { moves(s, l).iter().map(|t| index[t]).collect() } else { vec![] })
                    .collect()
            })
            .collect(),
        departures: states
            .iter()
            .map(|s| downs(s).into_iter().map(|(r, t)| (r, index[&t])).collect())
            .collect(),
        arrival_rates: rates,
        states,
    }
}

fn build_chain(instance: &FarmInstance, representation: Representation, cap: usize) -> Result<Chain> {
    check_cap(instance, representation, cap)?;
    Ok(match representation {
        Representation::Product => product_chain(instance, &instance.topology()),
        Representation::Counts => counts_chain(instance),
    })
}

/// Stationary law of the chain when class `l` in state `s` is sent to
/// `choice[s][l]` (blocked when `None`). The choices must keep every state
/// reachable from state 0 recurrent, which holds for any work-conserving rule.
fn stationary(chain: &Chain, choice: &[Vec<Option<usize>>]) -> Result<Vec<f64>> {
    let n = chain.states.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut out_rate = vec![0.0; n];
    for s in 0..n {
        for (l, target) in choice[s].iter().enumerate() {
            if let Some(t) = *target {
                incoming[t].push((s, chain.arrival_rates[l]));
                out_rate[s] += chain.arrival_rates[l];
            }
        }
        for &(r, t) in &chain.departures[s] {
            incoming[t].push((s, r));
            out_rate[s] += r;
        }
    }
    if n == 1 || out_rate[0] == 0.0 {
        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        return Ok(pi);
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for sweep in 0..GS_MAX_SWEEPS {
        for s in 0..n {
            if out_rate[s] > 0.0 {
                pi[s] = incoming[s].iter().map(|&(src, r)| pi[src] * r).sum::<f64>() / out_rate[s];
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if sweep % 8 == 7 {
            residual = (0..n)
                .map(|s| (incoming[s].iter().map(|&(src, r)| pi[src] * r).sum::<f64>() - pi[s] * out_rate[s]).abs())
                .fold(0.0, f64::max);
            let scale = out_rate.iter().cloned().fold(0.0, f64::max);
            if residual <= GS_TOLERANCE * scale {
                return Ok(pi);
            }
        }
    }
    Err(Error::NotConverged {
        iterations: GS_MAX_SWEEPS,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    /// Occupancy per component label of each enumerated state.
    pub states: Vec<Vec<usize>>,
    pub pi: Vec<f64>,
    pub throughput: f64,
    pub energy: f64,
    pub efficiency: f64,
    pub blocking: Vec<f64>,
}

impl ExactSolution {
    /// Expected fraction of components in each state-cluster pair, cluster-major.
    pub fn expected_z(&self, instance: &FarmInstance) -> Vec<f64> {
        let topology = instance.topology();
        let offsets = crate::policies::sc_offsets(instance);
        let total = topology.total_components() as f64;
        let mut z = vec![0.0; instance.clusters.iter().map(|c| c.capacity + 1).sum()];
        for (s, &p) in self.states.iter().zip(&self.pi) {
            for (j, &n) in s.iter().enumerate() {
                z[offsets[topology.component_cluster[j] - 1] + n] += p / total;
            }
        }
        z
    }
}

/// Steady state of the farm under a fixed policy.
pub fn exact_steady_state(instance: &FarmInstance, policy: &Policy, tiebreak: TieBreak, cap: usize) -> Result<ExactSolution> {
    let topology = instance.topology();
    let chain = build_chain(instance, Representation::Product, cap)?;
    let index: HashMap<&[usize], usize> = chain.states.iter().enumerate().map(|(k, s)| (s.as_slice(), k)).collect();
    let mut choice = Vec::with_capacity(chain.states.len());
    for s in &chain.states {
        let row: Vec<Option<usize>> = (1..=instance.num_classes())
            .map(|l| {
                if chain.arrival_rates[l - 1] == 0.0 {
                    return None;
                }
                match policy.dispatch(&topology, s, l, tiebreak) {
                    DispatchDecision::Component(j) => {
                        let mut t = s.clone();
                        t[j] += 1;
                        Some(index[t.as_slice()])
                    }
                    DispatchDecision::Reject { .. } => None,
                }
            })
            .collect();
        choice.push(row);
    }
    let pi = stationary(&chain, &choice)?;
    let throughput: f64 = pi.iter().zip(&chain.throughput).map(|(p, v)| p * v).sum();
    let energy: f64 = pi.iter().zip(&chain.energy).map(|(p, v)| p * v).sum();
    let blocking = (0..instance.num_classes())
        .map(|l| pi.iter().zip(&choice).filter(|(_, c)| c[l].is_none()).map(|(p, _)| p).sum())
        .collect();
    Ok(ExactSolution {
        states: chain.states,
        pi,
        throughput,
        energy,
        efficiency: throughput / energy,
        blocking,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    /// Optimal long-run average of `L - e E`, divided by `h`.
    pub gain: f64,
    pub span: f64,
    pub iterations: usize,
    /// Throughput and energy of the returned policy.
    pub throughput: f64,
    pub energy: f64,
    pub representation: Representation,
    pub states: Vec<Vec<usize>>,
    /// `[state][class]` index of the state the optimal policy moves to on an arrival.
    pub choice: Vec<Vec<Option<usize>>>,
}

impl OptimalSolution {
    pub fn efficiency(&self) -> f64 {
        self.throughput / self.energy
    }
}

/// Maximum average of `L - e E` over stationary deterministic policies.
/// An arriving job must be admitted whenever an eligible component has room.
pub fn exact_optimal_avg_reward(instance: &FarmInstance, e: f64, representation: Representation, cap: usize) -> Result<OptimalSolution> {
    let chain = build_chain(instance, representation, cap)?;
    let n = chain.states.len();
    let reward: Vec<f64> = (0..n).map(|s| chain.throughput[s] - e * chain.energy[s]).collect();
    let out_rate: Vec<f64> = (0..n)
        .map(|s| {
            let arr: f64 = (0..chain.arrival_rates.len())
                .map(|l| if chain.options[s][l].is_empty() { 0.0 } else { chain.arrival_rates[l] })
                .sum();
            arr + chain.departures[s].iter().map(|d| d.0).sum::<f64>()
        })
        .collect();
    let uniform = 1.01 * out_rate.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut span = f64::INFINITY;
    let mut iterations = 0;
    let mut gain = 0.0;
    while iterations < RVI_MAX_ITERATIONS {
        iterations += 1;
        for s in 0..n {
            let mut acc = reward[s] + (uniform - out_rate[s]) * v[s];
            for (l, opts) in chain.options[s].iter().enumerate() {
                if let Some(best) = opts.iter().map(|&t| v[t]).max_by(f64::total_cmp) {
                    acc += chain.arrival_rates[l] * best;
                }
            }
            for &(r, t) in &chain.departures[s] {
                acc += r * v[t];
            }
            next[s] = acc / uniform;
        }
        let (lo, hi) = (0..n)
            .map(|s| next[s] - v[s])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        span = uniform * (hi - lo);
        gain = uniform * 0.5 * (hi + lo);
        let base = next[0];
        for s in 0..n {
            v[s] = next[s] - base;
        }
        if span < RVI_TOLERANCE {
            break;
        }
    }
    if span >= RVI_TOLERANCE {
        return Err(Error::NotConverged {
            iterations,
            residual: span,
        });
    }
    let choice: Vec<Vec<Option<usize>>> = chain
        .options
        .iter()
        .map(|row| {
            row.iter()
                .map(|opts| opts.iter().copied().reduce(|a, b| if v[b] > v[a] { b } else { a }))
                .collect()
        })
        .collect();
    let pi = stationary(&chain, &choice)?;
    let throughput = pi.iter().zip(&chain.throughput).map(|(p, x)| p * x).sum();
    let energy = pi.iter().zip(&chain.energy).map(|(p, x)| p * x).sum();
    Ok(OptimalSolution {
        gain: gain / instance.scaling as f64,
        span,
        iterations,
        throughput,
        energy,
        representation,
        states: chain.states,
        choice,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioOptimum {
    pub e_star: f64,
    /// Normalized optimal gain at `e_star`.
    pub gain: f64,
    pub iterations: usize,
    pub policy: OptimalSolution,
}

/// Dinkelbach iteration `e <- L/E` of the current `e`-optimal policy, from `e = 0`.
pub fn dinkelbach_optimal_ratio(instance: &FarmInstance, representation: Representation, cap: usize) -> Result<RatioOptimum> {
    let mut e = 0.0;
    for iterations in 1..=100 {
        let sol = exact_optimal_avg_reward(instance, e, representation, cap)?;
        if sol.gain.abs() < DINKELBACH_TOLERANCE {
            return Ok(RatioOptimum {
                e_star: e,
                gain: sol.gain,
                iterations,
                policy: sol,
            });
        }
        let next = sol.efficiency();
        if (next - e).abs() <= 1e-15 * next.abs() {
            return Ok(RatioOptimum {
                e_star: next,
                gain: sol.gain,
                iterations,
                policy: sol,
            });
        }
        e = next;
    }
    Err(Error::NotConverged {
        iterations: 100,
        residual: e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVerdict {
    /// Some optimal policy activates exactly the states below `active_below`.
    pub threshold_optimal: bool,
    pub active_below: Option<usize>,
    /// Greedy actions from the relative values; `None` marks a tie.
    pub actions: Vec<Option<bool>>,
    pub gain: f64,
}

/// Solves the single-component relaxed problem: in state `n < C` the component
/// may be active, receiving arrivals at rate `h lambda_hat` and paying
/// `h nu lambda_hat` per unit time, with reward rate `mu(n) - e eps(n)`.
pub fn verify_threshold_structure(cluster: &ClusterSpec, lambda_hat0: f64, e: f64, nu: f64, h: f64) -> Result<ThresholdVerdict> {
    let c = cluster.capacity;
    let birth = h * lambda_hat0;
    let cost = h * nu * lambda_hat0;
    let uniform = 1.01 * (0..=c).map(|n| cluster.service_rates[n] + if n < c { birth } else { 0.0 }).fold(0.0, f64::max);
    let base = |n: usize| cluster.service_rates[n] - e * cluster.energy_rates[n];
    let mut v = vec![0.0; c + 1];
    let mut next = vec![0.0; c + 1];
    let q = |v: &[f64], n: usize, active: bool| -> f64 {
        let down = cluster.service_rates[n];
        let mut acc = base(n) + down * if n > 0 { v[n - 1] } else { 0.0 };
        let mut stay = uniform - down;
        if active {
            acc += birth * v[n + 1] - cost;
            stay -= birth;
        }
        (acc + stay * v[n]) / uniform
    };
    let scale = (0..=c).map(|n| base(n).abs()).fold(cost.abs(), f64::max).max(1.0);
    let mut gain = 0.0;
    let mut converged = false;
    for _ in 0..RVI_MAX_ITERATIONS {
        for n in 0..=c {
            next[n] = if n < c { q(&v, n, true).max(q(&v, n, false)) } else { q(&v, n, false) };
        }
        let (lo, hi) = (0..=c)
            .map(|n| next[n] - v[n])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        gain = uniform * 0.5 * (hi + lo);
        let b = next[0];
        for n in 0..=c {
            v[n] = next[n] - b;
        }
        if uniform * (hi - lo) < RVI_TOLERANCE * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: RVI_MAX_ITERATIONS,
            residual: gain,
        });
    }
    let tie = 1e-9 * scale / uniform;
    let actions: Vec<Option<bool>> = (0..c)
        .map(|n| {
            let d = q(&v, n, true) - q(&v, n, false);
            if d.abs() <= tie {
                None
            } else {
                Some(d > 0.0)
            }
        })
        .collect();
    let fits = |k: usize| actions.iter().enumerate().all(|(n, a)| a.is_none_or(|a| a == (n < k)));
    let active_below = (0..=c).find(|&k| fits(k));
    Ok(ThresholdVerdict {
        threshold_optimal: active_below.is_some(),
        active_below,
        actions,
        gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JobClassSpec;

    fn cluster(id: usize, capacity: usize, mu: Vec<f64>, eps: Vec<f64>, m: usize) -> ClusterSpec {
        ClusterSpec {
            id,
            capacity,
            service_rates: mu,
            energy_rates: eps,
            component_count_base: m,
        }
    }

    fn single(rate: f64) -> FarmInstance {
        FarmInstance {
            clusters: vec![cluster(1, 1, vec![0.0, 1.0], vec![0.0, 1.0], 1)],
            classes: vec![JobClassSpec {
                id: 1,
                arrival_rate_base: rate,
                eligible_clusters: vec![1],
            }],
            scaling: 1,
        }
    }

    fn pair() -> FarmInstance {
        FarmInstance {
            clusters: vec![cluster(1, 2, vec![0.0, 1.0, 1.5], vec![0.2, 1.0, 1.4], 2)],
            classes: vec![
                JobClassSpec {
                    id: 1,
                    arrival_rate_base: 0.7,
                    eligible_clusters: vec![1],
                },
                JobClassSpec {
                    id: 2,
                    arrival_rate_base: 0.7,
                    eligible_clusters: vec![1],
                },
            ],
            scaling: 1,
        }
    }

    #[test]
    fn loss_system_balance() {
        let sol = exact_steady_state(&single(2.0), &Policy::Jsq, TieBreak::Lltb, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(sol.states, vec![vec![0], vec![1]]);
        assert!((sol.pi[0] - 1.0 / 3.0).abs() < 1e-12 && (sol.pi[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.efficiency - 1.0).abs() < 1e-12);
        assert!((sol.blocking[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn jsq_symmetric_under_swap() {
        let c = |id| cluster(id, 2, vec![0.0, 1.0, 1.5], vec![0.2, 1.0, 1.4], 1);
        let class = |id| JobClassSpec {
            id,
            arrival_rate_base: 0.9,
            eligible_clusters: vec![id],
        };
        let inst = FarmInstance {
            clusters: vec![c(1), c(2)],
            classes: vec![class(1), class(2)],
            scaling: 1,
        };
        let sol = exact_steady_state(&inst, &Policy::Jsq, TieBreak::Sqtb, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(sol.states.len(), 9);
        for (s, &p) in sol.states.iter().zip(&sol.pi) {
            let swapped = vec![s[1], s[0]];
            let k = sol.states.iter().position(|t| *t == swapped).unwrap();
            assert!((p - sol.pi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let big = pair().with_scaling(20);
        assert!(matches!(
            exact_steady_state(&big, &Policy::Jsq, TieBreak::Lltb, 1000),
            Err(Error::StateCapExceeded { cap: 1000, .. })
        ));
    }

    #[test]
    fn single_component_optimum_matches_best_threshold() {
        let c = cluster(1, 3, vec![0.0, 1.0, 1.8, 2.4], vec![0.3, 1.0, 1.5, 2.2], 1);
        let inst = FarmInstance {
            clusters: vec![c.clone()],
            classes: vec![JobClassSpec {
                id: 1,
                arrival_rate_base: 1.3,
                eligible_clusters: vec![1],
            }],
            scaling: 1,
        };
        for e in [0.0, 0.6, 1.1] {
            let opt = exact_optimal_avg_reward(&inst, e, Representation::Product, DEFAULT_STATE_CAP).unwrap();
            // admission is forced, so the only policy admits up to capacity
            let full = crate::markov::threshold_avg_reward(&c, crate::markov::ThresholdPolicy { m: 2 }, 0.0, e, 1.0, 1.3).unwrap();
            assert!((opt.gain - full).abs() < 1e-9, "e={e}: {} vs {full}", opt.gain);
        }
    }

    #[test]
    fn large_e_gives_negative_gain() {
        let opt = exact_optimal_avg_reward(&pair(), 50.0, Representation::Product, DEFAULT_STATE_CAP).unwrap();
        assert!(opt.gain < 0.0);
        // forced admission: the empty state still sends arrivals somewhere
        assert!(opt.choice[0].iter().all(|c| c.is_some()));
    }

    #[test]
    fn representations_agree() {
        for e in [0.0, 0.7, 1.2] {
            let a = exact_optimal_avg_reward(&pair(), e, Representation::Product, DEFAULT_STATE_CAP).unwrap();
            let b = exact_optimal_avg_reward(&pair(), e, Representation::Counts, DEFAULT_STATE_CAP).unwrap();
            assert!((a.gain - b.gain).abs() < 1e-9);
            assert!(b.states.len() < a.states.len());
        }
    }

    #[test]
    fn ratio_optimum_single_server() {
        let r = dinkelbach_optimal_ratio(&single(2.0), Representation::Product, DEFAULT_STATE_CAP).unwrap();
        assert!((r.e_star - 1.0).abs() < 1e-9);
        assert!(r.gain.abs() < 1e-9);
    }

    #[test]
    fn ratio_optimum_scales_inversely_with_energy() {
        let base = dinkelbach_optimal_ratio(&pair(), Representation::Counts, DEFAULT_STATE_CAP).unwrap();
        let mut scaled = pair();
        for c in &mut scaled.clusters {
            c.energy_rates.iter_mut().for_each(|x| *x *= 2.5);
        }
        let s = dinkelbach_optimal_ratio(&scaled, Representation::Counts, DEFAULT_STATE_CAP).unwrap();
        assert!((s.e_star - base.e_star / 2.5).abs() < 1e-8);
        let sol = exact_steady_state(&pair(), &Policy::Jsq, TieBreak::Sqtb, DEFAULT_STATE_CAP).unwrap();
        assert!(sol.efficiency <= base.e_star + 1e-8);
    }

    #[test]
    fn two_state_threshold_flip() {
        let c = cluster(1, 1, vec![0.0, 1.0], vec![0.0, 1.0], 1);
        let low = verify_threshold_structure(&c, 2.0, 0.5, 0.45, 1.0).unwrap();
        assert_eq!(low.active_below, Some(1));
        let high = verify_threshold_structure(&c, 2.0, 0.5, 0.55, 1.0).unwrap();
        assert_eq!(high.active_below, Some(0));
        assert!(low.threshold_optimal && high.threshold_optimal);
    }

    #[test]
    fn extreme_subsidies() {
        let c = cluster(1, 4, vec![0.0, 1.0, 1.9, 2.7, 3.4], vec![0.2, 1.0, 1.6, 2.1, 2.7], 1);
        let active = verify_threshold_structure(&c, 3.0, 0.8, -1e3, 1.0).unwrap();
        assert_eq!(active.active_below, Some(4));
        let passive = verify_threshold_structure(&c, 3.0, 0.8, 1e3, 1.0).unwrap();
        assert_eq!(passive.active_below, Some(0));
    }
}
