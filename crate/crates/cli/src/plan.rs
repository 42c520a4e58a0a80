//! Resolved commands. A plan holds the instance and every setting, so the
//! manifest that stores it is enough to rerun the command.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use powerfarm::indices::{fluid_fit, solve_e0, solve_indices, FluidOptions};
use powerfarm::markov::Scaling;
use powerfarm::model::{generate_scenario1, validate_instance, FarmInstance};
use powerfarm::numfmt::g12;
use powerfarm::oracle::{dinkelbach_optimal_ratio, Representation};
use powerfarm::policies::{default_pas_priorities, Policy};
use powerfarm::sim::{
    compute_relative_difference, read_trace, replicate_until_ci, run_simulation, ArrivalSource, BinStats, DiurnalProfile,
    Metrics, SimConfig,
};
use powerfarm::verify::{run_criterion, Level, CRITERIA};

use crate::output::{sha256_hex, OutputSink};
use crate::settings::SimSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    /// Where the instance came from (file path, preset or generator call).
    pub source: String,
    pub instance: FarmInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalsSpec {
    Poisson,
    TraceFile { path: String, sha256: String },
    Diurnal { amplitude: f64, period: f64, peak_time: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSettings {
    pub epsilon: f64,
    pub limit_scaling: f64,
    /// Criterion value for MPMP; `None` means the fluid estimate.
    pub e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Plan {
    Indices {
        instance: InstanceDoc,
        index: IndexSettings,
        /// `None` for the `h -> infinity` limit.
        h: Option<usize>,
    },
    Efit {
        instance: InstanceDoc,
        index: IndexSettings,
        e_min: f64,
        e_max: f64,
        points: usize,
    },
    Estar {
        instance: InstanceDoc,
        representation: String,
        state_cap: usize,
    },
    Simulate {
        instance: InstanceDoc,
        policy: String,
        compare: Option<String>,
        index: IndexSettings,
        sim: SimSettings,
        arrivals: ArrivalsSpec,
        record_z: bool,
    },
    Scenario1 {
        first_seed: u64,
        count: u64,
        rho: f64,
        policies: Vec<String>,
        index: IndexSettings,
        sim: SimSettings,
    },
    Scenario2 {
        instance: InstanceDoc,
        policies: Vec<String>,
        index: IndexSettings,
        sim: SimSettings,
        arrivals: ArrivalsSpec,
    },
    Verify {
        level: String,
    },
}

/// Failure of the instance itself; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct BadInstance(pub String);

pub fn check_instance(doc: &InstanceDoc) -> Result<()> {
    let violations = validate_instance(&doc.instance);
    if violations.is_empty() {
        return Ok(());
    }
    let list: String = violations.iter().map(|v| format!("\n  {v}")).collect();
    Err(BadInstance(format!("invalid instance from {}:{list}", doc.source)).into())
}

pub const POLICY_NAMES: [&str; 3] = ["mpmp", "jsq", "pas"];

pub fn check_policy_name(name: &str) -> Result<()> {
    if POLICY_NAMES.contains(&name) {
        Ok(())
    } else {
        bail!("unknown policy '{name}' (expected mpmp, jsq or pas)")
    }
}

fn build_policy(name: &str, instance: &FarmInstance, index: &IndexSettings) -> Result<Policy> {
    Ok(match name {
        "mpmp" => {
            let e = match index.e {
                Some(e) => e,
                None => solve_e0(instance, fluid_options(index))?.e0,
            };
            Policy::Mpmp(solve_indices(instance, e, Scaling::from_h(instance.scaling), index.epsilon)?)
        }
        "jsq" => Policy::Jsq,
        "pas" => Policy::Pas(default_pas_priorities(instance)),
        other => bail!("unknown policy '{other}'"),
    })
}

fn fluid_options(index: &IndexSettings) -> FluidOptions {
    FluidOptions {
        limit_scaling: index.limit_scaling,
        epsilon: index.epsilon,
    }
}

fn arrival_source(spec: &ArrivalsSpec, instance: &FarmInstance, horizon: f64) -> Result<ArrivalSource> {
    Ok(match spec {
        ArrivalsSpec::Poisson => ArrivalSource::Poisson,
        ArrivalsSpec::TraceFile { path, sha256 } => {
            let bytes = std::fs::read(path).with_context(|| format!("reading trace {path}"))?;
            let actual = sha256_hex(&bytes);
            if &actual != sha256 {
                bail!("trace {path} has SHA-256 {actual}, the manifest expects {sha256}");
            }
            ArrivalSource::Trace(Arc::new(read_trace(bytes.as_slice(), instance.num_classes())?))
        }
        ArrivalsSpec::Diurnal {
            amplitude,
            period,
            peak_time,
            seed,
        } => {
            let h = instance.scaling as f64;
            let profile = DiurnalProfile {
                mean_rates: instance.classes.iter().map(|c| h * c.arrival_rate_base).collect(),
                amplitude: *amplitude,
                period: *period,
                peak_time: *peak_time,
            };
            ArrivalSource::Trace(Arc::new(profile.generate(horizon, *seed)))
        }
    })
}

/// Trace-file arrivals as stored in a plan.
pub fn trace_spec(path: &std::path::Path) -> Result<ArrivalsSpec> {
    let bytes = std::fs::read(path).with_context(|| format!("reading trace {}", path.display()))?;
    Ok(ArrivalsSpec::TraceFile {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Result of a run that completed but found failures worth a nonzero exit.
pub struct Completion {
    pub failures: usize,
}

const METRICS_HEADER: [&str; 14] = [
    "policy",
    "replications",
    "cap_hit",
    "throughput",
    "throughput_halfwidth",
    "energy",
    "energy_halfwidth",
    "efficiency",
    "efficiency_halfwidth",
    "completion_rate",
    "arrivals",
    "blocks",
    "blocking_prob",
    "relative_difference",
];

const BINS_HEADER: [&str; 10] = [
    "policy",
    "bin",
    "start",
    "end",
    "throughput",
    "energy",
    "efficiency",
    "arrivals",
    "blocks",
    "blocking_prob",
];

pub const SCENARIO1_RUNS_HEADER: [&str; 8] = [
    "seed",
    "policy",
    "throughput",
    "energy",
    "efficiency",
    "efficiency_halfwidth",
    "replications",
    "relative_difference_vs_pas",
];

pub const CDF_HEADER: [&str; 4] = ["pair", "rank", "relative_difference", "cdf"];

pub fn metrics_header() -> &'static [&'static str] {
    &METRICS_HEADER
}

pub fn bins_header() -> &'static [&'static str] {
    &BINS_HEADER
}

fn blocking_total(m: &Metrics) -> f64 {
    let a: u64 = m.arrivals.iter().sum();
    let b: u64 = m.blocks.iter().sum();
    if a > 0 {
        b as f64 / a as f64
    } else {
        0.0
    }
}

fn metrics_row(policy: &str, m: &Metrics, rd: Option<f64>) -> Vec<String> {
    let ci = m.ci.as_ref();
    vec![
        policy.to_string(),
        ci.map_or(1, |c| c.replications).to_string(),
        ci.is_some_and(|c| c.cap_hit).to_string(),
        g12(m.throughput),
        ci.map_or(String::new(), |c| g12(c.throughput_halfwidth)),
        g12(m.energy),
        ci.map_or(String::new(), |c| g12(c.energy_halfwidth)),
        g12(m.efficiency),
        ci.map_or(String::new(), |c| g12(c.efficiency_halfwidth)),
        g12(m.completion_rate),
        m.arrivals.iter().sum::<u64>().to_string(),
        m.blocks.iter().sum::<u64>().to_string(),
        g12(blocking_total(m)),
        rd.map(g12).unwrap_or_default(),
    ]
}

fn bin_rows(policy: &str, bins: &[BinStats]) -> Vec<Vec<String>> {
    bins.iter()
        .enumerate()
        .map(|(k, b)| {
            vec![
                policy.to_string(),
                k.to_string(),
                g12(b.start),
                g12(b.end),
                g12(b.throughput),
                g12(b.energy),
                g12(b.efficiency),
                b.arrivals.iter().sum::<u64>().to_string(),
                b.blocks.iter().sum::<u64>().to_string(),
                g12(b.blocking_prob),
            ]
        })
        .collect()
}

impl Plan {
    pub fn name(&self) -> &'static str {
        match self {
            Plan::Indices { .. } => "indices",
            Plan::Efit { .. } => "efit",
            Plan::Estar { .. } => "estar",
            Plan::Simulate { .. } => "simulate",
            Plan::Scenario1 { .. } => "scenario1",
            Plan::Scenario2 { .. } => "scenario2",
            Plan::Verify { .. } => "verify",
        }
    }

    fn instance(&self) -> Option<&InstanceDoc> {
        match self {
            Plan::Indices { instance, .. }
            | Plan::Efit { instance, .. }
            | Plan::Estar { instance, .. }
            | Plan::Simulate { instance, .. }
            | Plan::Scenario2 { instance, .. } => Some(instance),
            Plan::Scenario1 { .. } | Plan::Verify { .. } => None,
        }
    }

    pub fn execute(&self, sink: &mut OutputSink) -> Result<Completion> {
        if let Some(doc) = self.instance() {
            check_instance(doc)?;
        }
        let mut failures = 0;
        match self {
            Plan::Indices { instance, index, h } => {
                let inst = &instance.instance;
                let e = match index.e {
                    Some(e) => e,
                    None => {
                        let est = solve_e0(inst, fluid_options(index))?;
                        println!("e0 = {}  Gamma(e0) = {}", g12(est.e0), g12(est.gamma));
                        est.e0
                    }
                };
                let scaling = h.map_or(Scaling::Limit, Scaling::from_h);
                let table = solve_indices(inst, e, scaling, index.epsilon)?;
                for d in &table.diagnostics {
                    eprintln!("note: {d}");
                }
                let path = sink.write_text("indices.txt", &table.to_text())?;
                println!("index table written to {}", path.display());
            }
            Plan::Efit {
                instance,
                index,
                e_min,
                e_max,
                points,
            } => {
                if *points < 2 || !(e_max > e_min) {
                    bail!("need at least 2 points and e_max > e_min");
                }
                let mut rows = Vec::with_capacity(*points);
                for k in 0..*points {
                    let e = e_min + (e_max - e_min) * k as f64 / (*points - 1) as f64;
                    let alloc = fluid_fit(&instance.instance, e, fluid_options(index))?;
                    rows.push(vec![g12(e), g12(alloc.gamma)]);
                }
                let path = sink.write_csv("gamma.csv", &["e", "gamma"], &rows)?;
                println!("Gamma(e) on {points} points written to {}", path.display());
            }
            Plan::Estar {
                instance,
                representation,
                state_cap,
            } => {
                let repr = match representation.as_str() {
                    "product" => Representation::Product,
                    "counts" => Representation::Counts,
                    other => bail!("unknown representation '{other}' (expected product or counts)"),
                };
                let opt = dinkelbach_optimal_ratio(&instance.instance, repr, *state_cap)?;
                let fluid = solve_e0(&instance.instance, FluidOptions::default()).ok();
                println!("e* = {}  ({} Dinkelbach iterations)", g12(opt.e_star), opt.iterations);
                if let Some(f) = &fluid {
                    println!("fluid estimate e0 = {}", g12(f.e0));
                }
                let row = vec![
                    g12(opt.e_star),
                    g12(opt.gain),
                    opt.iterations.to_string(),
                    opt.policy.states.len().to_string(),
                    representation.clone(),
                    fluid.as_ref().map(|f| g12(f.e0)).unwrap_or_default(),
                ];
                sink.write_csv(
                    "estar.csv",
                    &["e_star", "gain", "iterations", "states", "representation", "fluid_e0"],
                    &[row],
                )?;
            }
            Plan::Simulate {
                instance,
                policy,
                compare,
                index,
                sim,
                arrivals,
                record_z,
            } => {
                let inst = &instance.instance;
                let config = SimConfig {
                    arrivals: arrival_source(arrivals, inst, sim.horizon)?,
                    ..sim.to_config(inst.num_classes())?
                };
                let primary = build_policy(policy, inst, index)?;
                let m = replicate_until_ci(inst, &primary, &config)?;
                let mut rows = Vec::new();
                let mut single = vec![(policy.as_str(), &primary)];
                let other = compare.as_deref().map(|name| build_policy(name, inst, index)).transpose()?;
                match (compare, &other) {
                    (Some(name), Some(p)) => {
                        let m2 = replicate_until_ci(inst, p, &config)?;
                        let rd = compute_relative_difference(&m, &m2)?;
                        println!("{policy} vs {name}: relative difference {}", g12(rd));
                        rows.push(metrics_row(policy, &m, Some(rd)));
                        rows.push(metrics_row(name, &m2, None));
                        single.push((name.as_str(), p));
                    }
                    _ => rows.push(metrics_row(policy, &m, None)),
                }
                println!("{policy}: efficiency {}", g12(m.efficiency));
                sink.write_csv("metrics.csv", metrics_header(), &rows)?;
                if config.bin_width.is_some() || *record_z {
                    let mut bin_data = Vec::new();
                    for (k, (name, p)) in single.iter().enumerate() {
                        let cfg = SimConfig {
                            record_z: *record_z && k == 0,
                            ..config.clone()
                        };
                        let out = run_simulation(inst, p, &cfg)?;
                        bin_data.extend(bin_rows(name, &out.bins));
                        if cfg.record_z {
                            let mut header = vec!["time".to_string()];
                            for c in &inst.clusters {
                                header.extend((0..=c.capacity).map(|n| format!("z_{}_{n}", c.id)));
                            }
                            let header: Vec<&str> = header.iter().map(String::as_str).collect();
                            let z_rows: Vec<Vec<String>> = out
                                .z_samples
                                .iter()
                                .map(|s| std::iter::once(g12(s.time)).chain(s.z.iter().map(|&x| g12(x))).collect())
                                .collect();
                            sink.write_csv("z.csv", &header, &z_rows)?;
                        }
                    }
                    if config.bin_width.is_some() {
                        sink.write_csv("bins.csv", bins_header(), &bin_data)?;
                    }
                }
            }
            Plan::Scenario1 {
                first_seed,
                count,
                rho,
                policies,
                index,
                sim,
            } => {
                let mut run_rows = Vec::new();
                let mut rds: Vec<(String, Vec<f64>)> = policies
                    .iter()
                    .filter(|p| p.as_str() != "pas")
                    .map(|p| (format!("{p}-pas"), Vec::new()))
                    .collect();
                for seed in *first_seed..first_seed + count {
                    match scenario1_seed(seed, *rho, policies, index, sim) {
                        Ok(results) => {
                            let pas = results.iter().find(|r| r.0 == "pas").map(|r| r.1.clone());
                            for (name, m) in &results {
                                let rd = match (&pas, name.as_str()) {
                                    (Some(reference), n) if n != "pas" => Some(compute_relative_difference(m, reference)?),
                                    _ => None,
                                };
                                if let Some(rd) = rd {
                                    let pair = format!("{name}-pas");
                                    rds.iter_mut().find(|r| r.0 == pair).expect("pair listed").1.push(rd);
                                }
                                run_rows.push(vec![
                                    seed.to_string(),
                                    name.clone(),
                                    g12(m.throughput),
                                    g12(m.energy),
                                    g12(m.efficiency),
                                    m.ci.as_ref().map_or(String::new(), |c| g12(c.efficiency_halfwidth)),
                                    m.ci.as_ref().map_or(1, |c| c.replications).to_string(),
                                    rd.map(g12).unwrap_or_default(),
                                ]);
                            }
                        }
                        Err(err) => {
                            eprintln!("seed {seed}: {err:#}");
                            failures += 1;
                        }
                    }
                }
                sink.write_csv("scenario1_runs.csv", &SCENARIO1_RUNS_HEADER, &run_rows)?;
                let mut cdf_rows = Vec::new();
                for (pair, mut values) in rds {
                    values.sort_by(f64::total_cmp);
                    let n = values.len();
                    for (k, v) in values.iter().enumerate() {
                        cdf_rows.push(vec![pair.clone(), (k + 1).to_string(), g12(*v), g12((k + 1) as f64 / n as f64)]);
                    }
                    if n > 0 {
                        println!("{pair}: median relative difference {}", g12(values[n / 2]));
                    }
                }
                sink.write_csv("scenario1_cdf.csv", &CDF_HEADER, &cdf_rows)?;
            }
            Plan::Scenario2 {
                instance,
                policies,
                index,
                sim,
                arrivals,
            } => {
                let inst = &instance.instance;
                let config = SimConfig {
                    arrivals: arrival_source(arrivals, inst, sim.horizon)?,
                    ..sim.to_config(inst.num_classes())?
                };
                let mut results = Vec::new();
                for name in policies {
                    let p = build_policy(name, inst, index)?;
                    results.push((name.clone(), run_simulation(inst, &p, &config)?));
                }
                let pas = results.iter().find(|r| r.0 == "pas").map(|r| r.1.metrics.clone());
                let mut rows = Vec::new();
                let mut bins = Vec::new();
                for (name, out) in &results {
                    let rd = match &pas {
                        Some(reference) if name != "pas" => Some(compute_relative_difference(&out.metrics, reference)?),
                        _ => None,
                    };
                    println!(
                        "{name}: efficiency {}, blocking {}{}",
                        g12(out.metrics.efficiency),
                        g12(blocking_total(&out.metrics)),
                        rd.map(|r| format!(", relative difference to pas {}", g12(r))).unwrap_or_default()
                    );
                    rows.push(metrics_row(name, &out.metrics, rd));
                    bins.extend(bin_rows(name, &out.bins));
                }
                sink.write_csv("scenario2_summary.csv", metrics_header(), &rows)?;
                sink.write_csv("scenario2_bins.csv", bins_header(), &bins)?;
            }
            Plan::Verify { level } => {
                let level: Level = level.parse().map_err(anyhow::Error::msg)?;
                let mut reports = Vec::new();
                for &(id, _, _) in &CRITERIA {
                    let report = run_criterion(id, level);
                    println!("{report}");
                    failures += usize::from(!report.passed);
                    reports.push(report);
                }
                let body = serde_json::json!({ "level": level, "all_passed": failures == 0, "criteria": reports });
                sink.write_json("report.json", body)?;
            }
        }
        Ok(Completion { failures })
    }
}

fn scenario1_seed(
    seed: u64,
    rho: f64,
    policies: &[String],
    index: &IndexSettings,
    sim: &SimSettings,
) -> Result<Vec<(String, Metrics)>> {
    let inst = generate_scenario1(seed, rho);
    let config = SimConfig {
        seed,
        ..sim.to_config(inst.num_classes())?
    };
    policies
        .iter()
        .map(|name| {
            let p = build_policy(name, &inst, index)?;
            Ok((name.clone(), replicate_until_ci(&inst, &p, &config)?))
        })
        .collect()
}

pub fn default_out_dir(command: &str) -> PathBuf {
    PathBuf::from("out").join(command)
}
