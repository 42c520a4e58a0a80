mod output;
mod plan;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use powerfarm::indices::{DEFAULT_EPSILON, DEFAULT_LIMIT_SCALING};
use powerfarm::model::{preset_appendix_k, FarmInstance};
use powerfarm::oracle::DEFAULT_STATE_CAP;

use output::{plan_hash, OutputSink, RunManifest};
use plan::{check_instance, check_policy_name, trace_spec, ArrivalsSpec, BadInstance, IndexSettings, InstanceDoc, Plan};
use settings::{ConfigFile, SimDefaults, SimFlags, SimSettings};

/// Energy-efficient job assignment in multi-power-mode server farms.
#[derive(Debug, Parser)]
#[command(name = "powerfarm", version)]
struct Cli {
    /// TOML config file with `[simulation]` and `[indices]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files and the manifest (default: out/<command>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the MPMP indices for a given or estimated criterion value.
    Indices {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Criterion value, or `auto` for the fluid estimate.
        #[arg(long, default_value = "auto")]
        e: String,
        /// Scaling used in the index equations: an integer or `limit` (default: the instance's h).
        #[arg(long = "index-h")]
        index_h: Option<String>,
        #[command(flatten)]
        index: IndexFlags,
    },
    /// Fluid fit Gamma(e) over an evenly spaced grid.
    Efit {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 0.0)]
        e_min: f64,
        /// Default: the upper end of the estimate's bracket.
        #[arg(long)]
        e_max: Option<f64>,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[command(flatten)]
        index: IndexFlags,
    },
    /// Exact optimal efficiency of a small instance.
    Estar {
        #[command(flatten)]
        instance: InstanceArgs,
        /// product or counts.
        #[arg(long, default_value = "product")]
        representation: String,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        state_cap: usize,
    },
    /// Simulate one policy, optionally against a second.
    Simulate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "mpmp")]
        policy: String,
        /// Reference policy for the relative difference.
        #[arg(long)]
        compare: Option<String>,
        /// Arrival trace (`timestamp_seconds,class_id` CSV) instead of Poisson arrivals.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write every Z snapshot of one run of the first policy.
        #[arg(long)]
        z: bool,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        index: IndexFlags,
    },
    /// Relative differences to PAS over seeded Scenario-I instances. Each instance
    /// seed also seeds its simulations.
    Scenario1 {
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 0.2)]
        rho: f64,
        #[arg(long, value_delimiter = ',', default_value = "mpmp,jsq,pas")]
        policies: Vec<String>,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        index: IndexFlags,
    },
    /// The ten-cluster trace farm over one day, with hourly plot data.
    Scenario2 {
        #[arg(long, default_value_t = 10)]
        capacity: usize,
        #[arg(long, default_value_t = 1250)]
        h: usize,
        /// Arrival trace; without it a sinusoidal daily profile is generated.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        amplitude: f64,
        #[arg(long, default_value_t = 24.0)]
        period: f64,
        #[arg(long, default_value_t = 14.0)]
        peak_time: f64,
        #[arg(long, value_delimiter = ',', default_value = "mpmp,jsq,pas")]
        policies: Vec<String>,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        index: IndexFlags,
    },
    /// Run the acceptance checks and write a JSON report.
    Verify {
        #[arg(long, default_value = "quick")]
        level: String,
    },
    /// Rerun the command recorded in a manifest.
    Replay { manifest: PathBuf },
    /// Write the ten-cluster trace farm as an instance file.
    Preset {
        #[arg(long, default_value_t = 10)]
        capacity: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
struct InstanceArgs {
    /// Instance file (TOML).
    #[arg(long, conflicts_with_all = ["preset", "scenario1_seed"])]
    instance: Option<PathBuf>,
    /// Built-in instance: `appendix-k`.
    #[arg(long)]
    preset: Option<String>,
    /// Capacity used with `--preset`.
    #[arg(long, default_value_t = 10)]
    capacity: usize,
    /// Generate a Scenario-I instance with this seed.
    #[arg(long, conflicts_with = "preset")]
    scenario1_seed: Option<u64>,
    /// Normalized offered traffic for `--scenario1-seed`.
    #[arg(long, default_value_t = 0.2)]
    scenario1_rho: f64,
    /// Override the instance's scaling parameter.
    #[arg(long)]
    h: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
struct IndexFlags {
    /// Bisection precision.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Finite h standing in for the limit in the fluid fit.
    #[arg(long)]
    limit_scaling: Option<f64>,
    /// Criterion value for MPMP in simulations (default: the fluid estimate).
    #[arg(long)]
    mpmp_e: Option<f64>,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<InstanceDoc> {
        let mut doc = if let Some(path) = &self.instance {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let instance = FarmInstance::from_toml_str(&text).map_err(|e| BadInstance(format!("{}: {e}", path.display())))?;
            InstanceDoc {
                source: path.display().to_string(),
                instance,
            }
        } else if let Some(name) = &self.preset {
            match name.as_str() {
                "appendix-k" | "appendix_k" => InstanceDoc {
                    source: format!("preset appendix-k, capacity {}", self.capacity),
                    instance: preset_appendix_k(self.capacity),
                },
                other => bail!("unknown preset '{other}' (expected appendix-k)"),
            }
        } else if let Some(seed) = self.scenario1_seed {
            InstanceDoc {
                source: format!("scenario1 seed {seed}, rho {}", self.scenario1_rho),
                instance: powerfarm::model::generate_scenario1(seed, self.scenario1_rho),
            }
        } else {
            bail!("give one of --instance, --preset or --scenario1-seed");
        };
        if let Some(h) = self.h {
            doc.instance.scaling = h;
            doc.source.push_str(&format!(", h = {h}"));
        }
        check_instance(&doc)?;
        Ok(doc)
    }
}

fn index_settings(flags: &IndexFlags, file: &settings::IndexFile) -> IndexSettings {
    IndexSettings {
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
        limit_scaling: flags.limit_scaling.or(file.limit_scaling).unwrap_or(DEFAULT_LIMIT_SCALING),
        e: flags.mpmp_e,
    }
}

fn check_policies(names: &[String]) -> Result<()> {
    for n in names {
        check_policy_name(n)?;
    }
    Ok(())
}

fn plan(command: Command, file: &ConfigFile) -> Result<Plan> {
    Ok(match command {
        Command::Indices {
            instance,
            e,
            index_h,
            index,
        } => {
            let doc = instance.resolve()?;
            let mut index = index_settings(&index, &file.indices);
            index.e = match e.as_str() {
                "auto" => None,
                v => Some(v.parse().with_context(|| format!("--e expects a number or auto, got '{v}'"))?),
            };
            let h = match index_h.as_deref() {
                None => Some(doc.instance.scaling),
                Some("limit") => None,
                Some(v) => Some(v.parse().with_context(|| format!("--index-h expects an integer or limit, got '{v}'"))?),
            };
            Plan::Indices { instance: doc, index, h }
        }
        Command::Efit {
            instance,
            e_min,
            e_max,
            points,
            index,
        } => {
            let doc = instance.resolve()?;
            let e_max = e_max.unwrap_or_else(|| powerfarm::indices::e0_upper_bound(&doc.instance));
            Plan::Efit {
                instance: doc,
                index: index_settings(&index, &file.indices),
                e_min,
                e_max,
                points,
            }
        }
        Command::Estar {
            instance,
            representation,
            state_cap,
        } => Plan::Estar {
            instance: instance.resolve()?,
            representation,
            state_cap,
        },
        Command::Simulate {
            instance,
            policy,
            compare,
            trace,
            z,
            sim,
            index,
        } => {
            check_policy_name(&policy)?;
            if let Some(c) = &compare {
                check_policy_name(c)?;
            }
            let defaults = SimDefaults {
                horizon: 1000.0,
                replications: 5,
                max_replications: 50,
                bin_width: None,
            };
            Plan::Simulate {
                instance: instance.resolve()?,
                policy,
                compare,
                index: index_settings(&index, &file.indices),
                sim: SimSettings::resolve(&sim, &file.simulation, defaults)?,
                arrivals: trace.as_deref().map_or(Ok(ArrivalsSpec::Poisson), trace_spec)?,
                record_z: z,
            }
        }
        Command::Scenario1 {
            first_seed,
            count,
            rho,
            policies,
            sim,
            index,
        } => {
            check_policies(&policies)?;
            let defaults = SimDefaults {
                horizon: 100.0,
                replications: 3,
                max_replications: 30,
                bin_width: None,
            };
            Plan::Scenario1 {
                first_seed,
                count,
                rho,
                policies,
                index: index_settings(&index, &file.indices),
                sim: SimSettings::resolve(&sim, &file.simulation, defaults)?,
            }
        }
        Command::Scenario2 {
            capacity,
            h,
            trace,
            amplitude,
            period,
            peak_time,
            policies,
            sim,
            index,
        } => {
            check_policies(&policies)?;
            let defaults = SimDefaults {
                horizon: 24.0,
                replications: 1,
                max_replications: 1,
                bin_width: Some(1.0),
            };
            let sim = SimSettings::resolve(&sim, &file.simulation, defaults)?;
            let arrivals = match trace {
                Some(path) => trace_spec(&path)?,
                None => ArrivalsSpec::Diurnal {
                    amplitude,
                    period,
                    peak_time,
                    seed: sim.seed,
                },
            };
            Plan::Scenario2 {
                instance: InstanceDoc {
                    source: format!("preset appendix-k, capacity {capacity}, h = {h}"),
                    instance: preset_appendix_k(capacity).with_scaling(h),
                },
                policies,
                index: index_settings(&index, &file.indices),
                sim,
                arrivals,
            }
        }
        Command::Verify { level } => Plan::Verify { level },
        Command::Replay { .. } | Command::Preset { .. } => unreachable!("handled before planning"),
    })
}

fn run_plan(plan: Plan, out_dir: &Path) -> Result<usize> {
    let mut sink = OutputSink::new(out_dir, plan_hash(&plan))?;
    let completion = plan.execute(&mut sink)?;
    let manifest = sink.finish(plan)?;
    println!("manifest written to {}", manifest.display());
    Ok(completion.failures)
}

fn run(cli: Cli) -> Result<usize> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let (plan, name) = match cli.command {
        Command::Replay { manifest } => {
            let m = RunManifest::load(&manifest)?;
            let name = m.plan.name();
            (m.plan, name)
        }
        Command::Preset { capacity, output } => {
            preset_appendix_k(capacity)
                .save(&output)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("preset written to {}", output.display());
            return Ok(0);
        }
        command => {
            let p = plan(command, &file)?;
            let name = p.name();
            (p, name)
        }
    };
    let out_dir = cli.out_dir.unwrap_or_else(|| plan::default_out_dir(name));
    run_plan(plan, &out_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} failure(s)");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let bad_instance = err.chain().any(|c| {
                c.downcast_ref::<BadInstance>().is_some()
                    || matches!(
                        c.downcast_ref::<powerfarm::Error>(),
                        Some(powerfarm::Error::Invalid(_) | powerfarm::Error::Parse(_))
                    )
            });
            ExitCode::from(if bad_instance { 2 } else { 1 })
        }
    }
}
