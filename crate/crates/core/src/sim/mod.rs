//! Discrete-event simulation of a farm under a dispatch policy.
//!
//! Service is egalitarian processor sharing: a component holding `n` jobs
//! serves each at rate `mu(n) / n`. Exponential unit-mean sizes make the
//! occupancy process the usual birth–death product chain; other size
//! distributions run through the same engine.

pub mod arrivals;
mod engine;
pub mod sizes;

use std::collections::HashMap;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub use arrivals::{poisson_stream, read_trace, trace_stream, write_trace, ArrivalEvent, DiurnalProfile};
pub use sizes::SizeDistribution;

use crate::error::{Error, Result};
use crate::model::FarmInstance;
use crate::policies::{Policy, TieBreak};

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSource {
    /// Class `l` arrives at rate `h * lambda_l`.
    Poisson,
    /// Arrivals replayed verbatim.
    Trace(Arc<Vec<ArrivalEvent>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    /// Metrics cover `[warmup, horizon]`.
    pub warmup: f64,
    pub seed: u64,
    /// One entry for all classes, or one per class.
    pub sizes: Vec<SizeDistribution>,
    pub arrivals: ArrivalSource,
    pub tiebreak: TieBreak,
    /// Minimum number of replications.
    pub replications: usize,
    pub max_replications: usize,
    /// Target 95% half-width of efficiency relative to its mean.
    pub ci_target: f64,
    /// Fluid point `z` over state-cluster pairs; when set, the time-average of `||Z(t) - z||` is reported.
    pub attractor: Option<Vec<f64>>,
    /// Keep a `Z` snapshot at every event.
    pub record_z: bool,
    /// Width of the plot-data time bins.
    pub bin_width: Option<f64>,
    /// Accumulate the measured time spent in each full occupancy vector.
    pub record_states: bool,
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64) -> SimConfig {
        SimConfig {
            horizon,
            warmup: 0.1 * horizon,
            seed,
            sizes: vec![SizeDistribution::Exponential],
            arrivals: ArrivalSource::Poisson,
            tiebreak: TieBreak::Lltb,
            replications: 5,
            max_replications: 50,
            ci_target: 0.03,
            attractor: None,
            record_z: false,
            bin_width: None,
            record_states: false,
        }
    }

    fn sizes_per_class(&self, num_classes: usize) -> Vec<SizeDistribution> {
        if self.sizes.len() == 1 {
            vec![self.sizes[0]; num_classes]
        } else {
            self.sizes.clone()
        }
    }

    pub fn validate(&self, instance: &FarmInstance) -> Result<()> {
        engine::check_window(self.warmup, self.horizon)?;
        let l = instance.num_classes();
        if self.sizes.len() != 1 && self.sizes.len() != l {
            return Err(Error::Config(format!(
                "{} size distributions given for {l} classes",
                self.sizes.len()
            )));
        }
        if let Some(z) = &self.attractor {
            let expected: usize = instance.clusters.iter().map(|c| c.capacity + 1).sum();
            if z.len() != expected {
                return Err(Error::Config(format!("attractor has {} entries, expected {expected}", z.len())));
            }
        }
        if self.replications == 0 || self.max_replications < self.replications {
            return Err(Error::Config(format!(
                "need 1 <= replications <= max_replications (got {} and {})",
                self.replications, self.max_replications
            )));
        }
        if !(self.ci_target > 0.0) {
            return Err(Error::Config("ci_target must be positive".into()));
        }
        if let Some(w) = self.bin_width {
            if !(w > 0.0) {
                return Err(Error::Config("bin width must be positive".into()));
            }
        }
        if let ArrivalSource::Trace(events) = &self.arrivals {
            if let Some(e) = events.iter().find(|e| e.class == 0 || e.class > l) {
                return Err(Error::Config(format!("trace references unknown class {}", e.class)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiSummary {
    pub replications: usize,
    pub efficiency_halfwidth: f64,
    pub throughput_halfwidth: f64,
    pub energy_halfwidth: f64,
    /// The replication cap was reached before the target half-width.
    pub cap_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Time-average of `sum_j mu(N_j)`.
    pub throughput: f64,
    /// Time-average of `sum_j eps(N_j)`.
    pub energy: f64,
    pub efficiency: f64,
    /// Completed jobs per unit time, for cross-checking `throughput`.
    pub completion_rate: f64,
    pub arrivals: Vec<u64>,
    pub blocks: Vec<u64>,
    pub completions: Vec<u64>,
    pub blocking_prob: Vec<f64>,
    pub z_deviation: Option<f64>,
    /// Length of the measured window.
    pub window: f64,
    pub ci: Option<CiSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZSample {
    pub time: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub start: f64,
    pub end: f64,
    pub throughput: f64,
    pub energy: f64,
    pub efficiency: f64,
    pub arrivals: Vec<u64>,
    pub blocks: Vec<u64>,
    pub blocking_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub z_samples: Vec<ZSample>,
    pub bins: Vec<BinStats>,
    /// Time inside `[warmup, horizon]` per occupancy vector, when `record_states` is set.
    pub state_time: HashMap<Vec<usize>, f64>,
}

/// One run from the empty farm with `config.seed`.
pub fn run_simulation(instance: &FarmInstance, policy: &Policy, config: &SimConfig) -> Result<SimOutput> {
    engine::run(instance, policy, config, config.seed)
}

/// Seed of replication `r`; replication streams are disjoint from the run streams.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    arrivals::stream_rng(seed, (1 << 40) + r as u64).next_u64()
}

/// Two-sided 95% Student-t quantile with `df` degrees of freedom.
pub fn t_quantile_95(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

fn halfwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    t_quantile_95(n - 1) * (var / n as f64).sqrt()
}

/// Independent replications until the 95% half-width of efficiency is within
/// `ci_target` of its mean, or `max_replications` is reached. Replication `r`
/// always uses `replication_seed(seed, r)`, so results do not depend on thread
/// scheduling. Pooled throughput and energy are replication means and the
/// pooled efficiency is their ratio.
pub fn replicate_until_ci(instance: &FarmInstance, policy: &Policy, config: &SimConfig) -> Result<Metrics> {
    config.validate(instance)?;
    let mut runs: Vec<Metrics> = Vec::new();
    let mut target = config.replications.max(2).min(config.max_replications.max(2));
    loop {
        let start = runs.len();
        let batch: Vec<Result<SimOutput>> = (start..target)
            .into_par_iter()
            .map(|r| engine::run(instance, policy, config, replication_seed(config.seed, r)))
            .collect();
        for out in batch {
            runs.push(out?.metrics);
        }
        let effs: Vec<f64> = runs.iter().map(|m| m.efficiency).collect();
        let mean = effs.iter().sum::<f64>() / effs.len() as f64;
        let hw = halfwidth(&effs);
        let done = hw <= config.ci_target * mean.abs();
        let cap = runs.len() >= config.max_replications.max(2);
        if done || cap {
            return Ok(pool(&runs, !done));
        }
        target = (runs.len() + (runs.len() / 2).max(2)).min(config.max_replications);
    }
}

fn pool(runs: &[Metrics], cap_hit: bool) -> Metrics {
    let n = runs.len() as f64;
    let avg = |f: &dyn Fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let sum_vec = |f: &dyn Fn(&Metrics) -> &Vec<u64>| {
        let mut out = vec![0u64; f(&runs[0]).len()];
        for m in runs {
            for (o, v) in out.iter_mut().zip(f(m)) {
                *o += v;
            }
        }
        out
    };
    let throughput = avg(&|m| m.throughput);
    let energy = avg(&|m| m.energy);
    let arrivals = sum_vec(&|m| &m.arrivals);
    let blocks = sum_vec(&|m| &m.blocks);
    let collect = |f: &dyn Fn(&Metrics) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    Metrics {
        throughput,
        energy,
        efficiency: if energy > 0.0 { throughput / energy } else { 0.0 },
        completion_rate: avg(&|m| m.completion_rate),
        blocking_prob: arrivals
            .iter()
            .zip(&blocks)
            .map(|(&a, &b)| if a > 0 { b as f64 / a as f64 } else { 0.0 })
            .collect(),
        arrivals,
        blocks,
        completions: sum_vec(&|m| &m.completions),
        z_deviation: runs[0].z_deviation.map(|_| avg(&|m| m.z_deviation.unwrap_or(0.0))),
        window: runs[0].window,
        ci: Some(CiSummary {
            replications: runs.len(),
            efficiency_halfwidth: halfwidth(&collect(&|m| m.efficiency)),
            throughput_halfwidth: halfwidth(&collect(&|m| m.throughput)),
            energy_halfwidth: halfwidth(&collect(&|m| m.energy)),
            cap_hit,
        }),
    }
}

/// `(eff1 - eff2) / eff2`.
pub fn compute_relative_difference(m1: &Metrics, m2: &Metrics) -> Result<f64> {
    if !(m2.efficiency > 0.0 && m2.efficiency.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "reference efficiency {} must be positive",
            m2.efficiency
        )));
    }
    Ok((m1.efficiency - m2.efficiency) / m2.efficiency)
}

/// Time-average of `||Z(t) - z||` by the trapezoid rule over the sample epochs.
pub fn z_deviation_stats(samples: &[ZSample], z: &[f64]) -> f64 {
    let dist = |s: &ZSample| s.z.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    match samples {
        [] => 0.0,
        [only] => dist(only),
        _ => {
            let span = samples[samples.len() - 1].time - samples[0].time;
            if span <= 0.0 {
                return dist(&samples[0]);
            }
            let area: f64 = samples
                .windows(2)
                .map(|w| 0.5 * (dist(&w[0]) + dist(&w[1])) * (w[1].time - w[0].time))
                .sum();
            area / span
        }
    }
}
