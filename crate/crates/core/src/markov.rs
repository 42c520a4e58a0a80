//! Steady states of single-component birth–death chains and the threshold
//! rewards built on them.

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, FarmInstance};

/// Scaling regime for evaluations that depend on `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scaling {
    Finite(f64),
    /// The `h -> infinity` limit.
    Limit,
}

impl Scaling {
    pub fn from_h(h: usize) -> Scaling {
        Scaling::Finite(h as f64)
    }
}

impl std::fmt::Display for Scaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scaling::Finite(h) => write!(f, "{h}"),
            Scaling::Limit => write!(f, "limit"),
        }
    }
}

const RESCALE_AT: f64 = 1e200;

/// Stationary distribution of a birth–death chain on states `0..len`.
///
/// `births[n]` is the rate `n -> n+1`, `deaths[n]` the rate `n -> n-1`
/// (`deaths[0]` is ignored). States beyond the first zero birth rate are
/// unreachable from 0 and get probability 0.
pub fn bd_steady_state(births: &[f64], deaths: &[f64]) -> Result<Vec<f64>> {
    if births.is_empty() || births.len() != deaths.len() {
        return Err(Error::InvalidInput(format!(
            "birth and death vectors must be non-empty and of equal length (got {} and {})",
            births.len(),
            deaths.len()
        )));
    }
    for (name, rates) in [("birth", births), ("death", deaths)] {
        if let Some(n) = rates.iter().position(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidInput(format!("{name} rate at state {n} is {}", rates[n])));
        }
    }
    let len = births.len();
    let mut w = vec![0.0; len];
    w[0] = 1.0;
    for n in 0..len - 1 {
        if births[n] == 0.0 {
            break;
        }
        if deaths[n + 1] == 0.0 {
            return Err(Error::InvalidInput(format!(
                "state {} is reachable but has zero death rate; chain is not irreducible",
                n + 1
            )));
        }
        w[n + 1] = w[n] * (births[n] / deaths[n + 1]);
        if w[n + 1] > RESCALE_AT {
            for x in &mut w[..=n + 1] {
                *x /= RESCALE_AT;
            }
        }
    }
    let mut sorted = w.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Active (admitting) in states `n <= m`, passive above.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub m: usize,
}

/// Stationary distribution of one component under threshold `m` with birth rate `h * lambda_hat0`.
pub fn threshold_distribution(cluster: &ClusterSpec, m: usize, h: f64, lambda_hat0: f64) -> Result<Vec<f64>> {
    let c = cluster.capacity;
    let births: Vec<f64> = (0..=c).map(|n| if n <= m && n < c { h * lambda_hat0 } else { 0.0 }).collect();
    bd_steady_state(&births, &cluster.service_rates)
}

/// Long-run average of `mu(N) - e eps(N) - h eta0 1{N <= m}` under threshold `m`.
pub fn threshold_avg_reward(
    cluster: &ClusterSpec,
    policy: ThresholdPolicy,
    eta0: f64,
    e: f64,
    h: f64,
    lambda_hat0: f64,
) -> Result<f64> {
    if !eta0.is_finite() || !e.is_finite() {
        return Err(Error::InvalidInput(format!("eta0 = {eta0} and e = {e} must be finite")));
    }
    if !(h > 0.0 && lambda_hat0 > 0.0) {
        return Err(Error::InvalidInput(format!("h = {h} and lambda_hat0 = {lambda_hat0} must be positive")));
    }
    let pi = threshold_distribution(cluster, policy.m, h, lambda_hat0)?;
    Ok(threshold_reward_from(cluster, &pi, policy.m, eta0, e, h))
}

fn threshold_reward_from(cluster: &ClusterSpec, pi: &[f64], m: usize, eta0: f64, e: f64, h: f64) -> f64 {
    let reward: f64 = pi.iter().enumerate().map(|(n, p)| p * cluster.reward(n, e)).sum();
    let active: f64 = pi[..=m].iter().sum();
    reward - h * eta0 * active
}

/// Maximum threshold reward over `m in 0..C`, together with the smallest maximizing `m`.
pub fn gamma_bar_with_threshold(
    cluster: &ClusterSpec,
    eta0: f64,
    e: f64,
    scaling: Scaling,
    lambda_hat0: f64,
) -> Result<(f64, usize)> {
    if !eta0.is_finite() || !e.is_finite() {
        return Err(Error::InvalidInput(format!("eta0 = {eta0} and e = {e} must be finite")));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for m in 0..cluster.capacity {
        let value = match scaling {
            Scaling::Finite(h) => threshold_avg_reward(cluster, ThresholdPolicy { m }, eta0, e, h, lambda_hat0)?,
            Scaling::Limit => {
                let mu = cluster.service_rates[m + 1];
                mu - e * cluster.energy_rates[m + 1] - eta0 * mu / lambda_hat0
            }
        };
        if value > best.0 {
            best = (value, m);
        }
    }
    Ok(best)
}

/// The attached-criterion value: best threshold reward at multiplier `eta0`.
pub fn gamma_bar(cluster: &ClusterSpec, eta0: f64, e: f64, scaling: Scaling, lambda_hat0: f64) -> Result<f64> {
    gamma_bar_with_threshold(cluster, eta0, e, scaling, lambda_hat0).map(|(v, _)| v)
}

/// Per-class availability under the policy that admits whenever a slot is free.
#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    /// `A_l = sum_{j in J_l} P(N_j < C)` at the instance's `h`.
    pub per_class: Vec<f64>,
    /// `A_l <= 1` for every class.
    pub heavy_traffic: bool,
    /// `h -> infinity` limit `sum_{i in I_l} M_i mu_i(C) / lambda_hat_i`.
    pub limit_per_class: Vec<f64>,
    pub limit_heavy_traffic: bool,
}

pub fn availability(instance: &FarmInstance) -> Result<Availability> {
    let h = instance.scaling as f64;
    let mut free = Vec::with_capacity(instance.num_clusters());
    let mut free_limit = Vec::with_capacity(instance.num_clusters());
    for cluster in &instance.clusters {
        let lh = instance.lambda_hat(cluster.id);
        let c = cluster.capacity;
        if lh > 0.0 {
            let pi = threshold_distribution(cluster, c - 1, h, lh)?;
            free.push((1.0 - pi[c]) * instance.component_count(cluster.id) as f64);
            free_limit.push(cluster.component_count_base as f64 * cluster.service_rates[c] / lh);
        } else {
            free.push(instance.component_count(cluster.id) as f64);
            free_limit.push(f64::INFINITY);
        }
    }
    let sum = |v: &[f64], ids: &[usize]| ids.iter().map(|&i| v[i - 1]).sum::<f64>();
    let per_class: Vec<f64> = instance.classes.iter().map(|c| sum(&free, &c.eligible_clusters)).collect();
    let limit_per_class: Vec<f64> = instance.classes.iter().map(|c| sum(&free_limit, &c.eligible_clusters)).collect();
    Ok(Availability {
        heavy_traffic: per_class.iter().all(|&a| a <= 1.0),
        limit_heavy_traffic: limit_per_class.iter().all(|&a| a <= 1.0),
        per_class,
        limit_per_class,
    })
}
