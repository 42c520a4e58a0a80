use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand_chacha::ChaCha8Rng;

use super::arrivals::{stream_rng, ArrivalEvent, PoissonStream};
use super::{ArrivalSource, BinStats, Metrics, SimConfig, SimOutput, ZSample};
use crate::error::{Error, Result};
use crate::model::FarmInstance;
use crate::policies::{sc_offsets, DispatchDecision, Dispatcher, Policy};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Departure {
    time: f64,
    seq: u64,
    label: usize,
    version: u64,
}

impl Eq for Departure {}

impl Ord for Departure {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Egalitarian processor sharing: every job on the component has received
/// `attained` units of service; a job admitted at attained service `a` with
/// size `s` leaves once `attained` reaches `a + s`.
#[derive(Debug, Clone, Default)]
struct Component {
    attained: f64,
    since: f64,
    finish_tags: Vec<f64>,
    version: u64,
}

enum Arrivals<'a> {
    Poisson(PoissonStream),
    Trace(std::slice::Iter<'a, ArrivalEvent>),
}

impl Iterator for Arrivals<'_> {
    type Item = ArrivalEvent;
    fn next(&mut self) -> Option<ArrivalEvent> {
        match self {
            Arrivals::Poisson(p) => p.next(),
            Arrivals::Trace(t) => t.next().copied(),
        }
    }
}

struct Integrals {
    throughput: f64,
    energy: f64,
    z_deviation: f64,
}

pub(super) fn run(instance: &FarmInstance, policy: &Policy, config: &SimConfig, seed: u64) -> Result<SimOutput> {
    config.validate(instance)?;
    let topology = instance.topology();
    let num_components = topology.total_components();
    let num_classes = instance.num_classes();
    let h = instance.scaling as f64;
    let (warmup, horizon) = (config.warmup, config.horizon);

    let mu: Vec<&[f64]> = topology
        .component_cluster
        .iter()
        .map(|&i| instance.cluster(i).service_rates.as_slice())
        .collect();
    let eps: Vec<&[f64]> = topology
        .component_cluster
        .iter()
        .map(|&i| instance.cluster(i).energy_rates.as_slice())
        .collect();

    let mut dispatcher = Dispatcher::new(instance, &topology, policy, config.tiebreak);
    let mut components = vec![Component::default(); num_components];
    let mut heap: BinaryHeap<Departure> = BinaryHeap::new();
    let mut seq = 0u64;

    let mut arrivals = match &config.arrivals {
        ArrivalSource::Poisson => {
            let rates: Vec<f64> = instance.classes.iter().map(|c| h * c.arrival_rate_base).collect();
            Arrivals::Poisson(PoissonStream::new(&rates, seed))
        }
        ArrivalSource::Trace(events) => Arrivals::Trace(events.iter()),
    };
    let mut size_rngs: Vec<ChaCha8Rng> = (0..num_classes).map(|l| stream_rng(seed, 2 * l as u64 + 1)).collect();
    let sizes = config.sizes_per_class(num_classes);

    // state-cluster occupancy tracking
    let offsets = sc_offsets(instance);
    let sc_of = |label: usize, n: usize| offsets[topology.component_cluster[label] - 1] + n;
    let num_sc = offsets.last().map_or(0, |&o| o + instance.clusters.last().map_or(0, |c| c.capacity + 1));
    let mut sc_counts = vec![0usize; num_sc];
    for (i, range) in topology.cluster_ranges.iter().enumerate() {
        sc_counts[offsets[i]] = range.len();
    }
    let z_target = config.attractor.as_deref();
    let inv_j = 1.0 / num_components as f64;
    let mut z_ssq = z_target.map_or(0.0, |z| {
        sc_counts
            .iter()
            .zip(z)
            .map(|(&c, &zi)| (c as f64 * inv_j - zi).powi(2))
            .sum()
    });
    let mut z_samples = Vec::new();
    let record_z = |t: f64, counts: &[usize], out: &mut Vec<ZSample>| {
        out.push(ZSample {
            time: t,
            z: counts.iter().map(|&c| c as f64 * inv_j).collect(),
        });
    };
    if config.record_z {
        record_z(0.0, &sc_counts, &mut z_samples);
    }

    let mut total_mu = 0.0;
    let mut total_eps: f64 = eps.iter().map(|e| e[0]).sum();
    let mut integrals = Integrals {
        throughput: 0.0,
        energy: 0.0,
        z_deviation: 0.0,
    };
    let mut arrivals_count = vec![0u64; num_classes];
    let mut blocks = vec![0u64; num_classes];
    let mut completions = vec![0u64; num_classes];
    let mut job_class: Vec<Vec<usize>> = vec![Vec::new(); num_components];

    let mut bins = config.bin_width.map(|w| BinAccumulator::new(w, horizon, num_classes));
    let mut state_time: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut now: f64 = 0.0;
    let mut next_arrival = arrivals.next();
    let mut events_since_resync = 0usize;

    loop {
        let dep_time = heap.peek().map_or(f64::INFINITY, |d| d.time);
        let arr_time = next_arrival.map_or(f64::INFINITY, |a| a.time);
        let t = dep_time.min(arr_time);
        if t > horizon {
            break;
        }
        // integrate piecewise-constant rates over [now, t]
        let overlap = (t.min(horizon) - now.max(warmup)).max(0.0);
        if overlap > 0.0 {
            integrals.throughput += total_mu * overlap;
            integrals.energy += total_eps * overlap;
            if z_target.is_some() {
                integrals.z_deviation += z_ssq.max(0.0).sqrt() * overlap;
            }
            if config.record_states {
                add_state_time(&mut state_time, dispatcher.occupancy(), overlap);
            }
        }
        if let Some(b) = bins.as_mut() {
            b.integrate(now, t, total_mu, total_eps);
        }
        now = t;

        let (label, before, after) = if arr_time <= dep_time {
            let arrival = next_arrival.expect("arrival pending");
            next_arrival = arrivals.next();
            let class = arrival.class;
            let size = sizes[class - 1].sample(&mut size_rngs[class - 1]);
            let counted = t >= warmup;
            if counted {
                arrivals_count[class - 1] += 1;
            }
            let decision = dispatcher.select(class);
            if let Some(b) = bins.as_mut() {
                b.arrival(t, class, matches!(decision, DispatchDecision::Reject { .. }));
            }
            match decision {
                DispatchDecision::Reject { .. } => {
                    debug_assert!(topology.class_components[class - 1]
                        .iter()
                        .all(|&j| dispatcher.occupancy()[j] == topology.component_capacity[j]));
                    if counted {
                        blocks[class - 1] += 1;
                    }
                    continue;
                }
                DispatchDecision::Component(j) => {
                    let n = dispatcher.occupancy()[j];
                    debug_assert!(n < topology.component_capacity[j]);
                    let comp = &mut components[j];
                    advance(comp, t, mu[j], n);
                    comp.finish_tags.push(comp.attained + size);
                    job_class[j].push(class);
                    dispatcher.admit(j);
                    (j, n, n + 1)
                }
            }
        } else {
            let dep = heap.pop().expect("departure pending");
            let j = dep.label;
            if dep.version != components[j].version {
                continue;
            }
            let n = dispatcher.occupancy()[j];
            let comp = &mut components[j];
            advance(comp, t, mu[j], n);
            let (k, _) = comp
                .finish_tags
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("busy component");
            comp.finish_tags.swap_remove(k);
            let class = job_class[j].swap_remove(k);
            if t >= warmup {
                completions[class - 1] += 1;
            }
            dispatcher.release(j);
            (j, n, n - 1)
        };

        // reschedule the touched component
        let comp = &mut components[label];
        comp.version += 1;
        if after > 0 {
            let next_tag = comp.finish_tags.iter().copied().fold(f64::INFINITY, f64::min);
            let rate = mu[label][after] / after as f64;
            let time = t + (next_tag - comp.attained).max(0.0) / rate;
            seq += 1;
            heap.push(Departure {
                time,
                seq,
                label,
                version: comp.version,
            });
        }

        total_mu += mu[label][after] - mu[label][before];
        total_eps += eps[label][after] - eps[label][before];
        let (a, b) = (sc_of(label, before), sc_of(label, after));
        if let Some(z) = z_target {
            let old = (sc_counts[a] as f64 * inv_j - z[a]).powi(2) + (sc_counts[b] as f64 * inv_j - z[b]).powi(2);
            sc_counts[a] -= 1;
            sc_counts[b] += 1;
            let new = (sc_counts[a] as f64 * inv_j - z[a]).powi(2) + (sc_counts[b] as f64 * inv_j - z[b]).powi(2);
            z_ssq += new - old;
        } else {
            sc_counts[a] -= 1;
            sc_counts[b] += 1;
        }
        events_since_resync += 1;
        if events_since_resync >= 100_000 {
            events_since_resync = 0;
            total_mu = (0..num_components).map(|j| mu[j][dispatcher.occupancy()[j]]).sum();
            total_eps = (0..num_components).map(|j| eps[j][dispatcher.occupancy()[j]]).sum();
            if let Some(z) = z_target {
                z_ssq = sc_counts.iter().zip(z).map(|(&c, &zi)| (c as f64 * inv_j - zi).powi(2)).sum();
            }
        }
        if config.record_z {
            record_z(t, &sc_counts, &mut z_samples);
        }
    }

    let overlap = (horizon - now.max(warmup)).max(0.0);
    integrals.throughput += total_mu * overlap;
    integrals.energy += total_eps * overlap;
    if z_target.is_some() {
        integrals.z_deviation += z_ssq.max(0.0).sqrt() * overlap;
    }
    if config.record_states && overlap > 0.0 {
        add_state_time(&mut state_time, dispatcher.occupancy(), overlap);
    }
    if let Some(b) = bins.as_mut() {
        b.integrate(now, horizon, total_mu, total_eps);
    }
    if config.record_z {
        record_z(horizon, &sc_counts, &mut z_samples);
    }

    let window = horizon - warmup;
    let throughput = integrals.throughput / window;
    let energy = integrals.energy / window;
    let metrics = Metrics {
        throughput,
        energy,
        efficiency: if energy > 0.0 { throughput / energy } else { 0.0 },
        completion_rate: completions.iter().sum::<u64>() as f64 / window,
        blocking_prob: arrivals_count
            .iter()
            .zip(&blocks)
            .map(|(&a, &b)| if a > 0 { b as f64 / a as f64 } else { 0.0 })
            .collect(),
        arrivals: arrivals_count,
        blocks,
        completions,
        z_deviation: z_target.map(|_| integrals.z_deviation / window),
        window,
        ci: None,
    };
    Ok(SimOutput {
        metrics,
        z_samples,
        bins: bins.map(BinAccumulator::finish).unwrap_or_default(),
        state_time,
    })
}

fn add_state_time(state_time: &mut HashMap<Vec<usize>, f64>, occupancy: &[usize], dt: f64) {
    match state_time.get_mut(occupancy) {
        Some(t) => *t += dt,
        None => {
            state_time.insert(occupancy.to_vec(), dt);
        }
    }
}

fn advance(comp: &mut Component, t: f64, mu: &[f64], n: usize) {
    if n > 0 {
        comp.attained += (t - comp.since) * mu[n] / n as f64;
    }
    comp.since = t;
}

struct BinAccumulator {
    width: f64,
    bins: Vec<BinStats>,
}

impl BinAccumulator {
    fn new(width: f64, horizon: f64, num_classes: usize) -> BinAccumulator {
        let count = (horizon / width).ceil().max(1.0) as usize;
        let bins = (0..count)
            .map(|k| BinStats {
                start: k as f64 * width,
                end: ((k + 1) as f64 * width).min(horizon),
                throughput: 0.0,
                energy: 0.0,
                efficiency: 0.0,
                arrivals: vec![0; num_classes],
                blocks: vec![0; num_classes],
                blocking_prob: 0.0,
            })
            .collect();
        BinAccumulator { width, bins }
    }

    fn index(&self, t: f64) -> usize {
        ((t / self.width) as usize).min(self.bins.len() - 1)
    }

    fn integrate(&mut self, from: f64, to: f64, mu: f64, eps: f64) {
        let mut a = from;
        while a < to {
            let k = self.index(a);
            let b = to.min(self.bins[k].end);
            let b = if b <= a { to } else { b };
            self.bins[k].throughput += mu * (b - a);
            self.bins[k].energy += eps * (b - a);
            a = b;
        }
    }

    fn arrival(&mut self, t: f64, class: usize, blocked: bool) {
        let k = self.index(t);
        self.bins[k].arrivals[class - 1] += 1;
        if blocked {
            self.bins[k].blocks[class - 1] += 1;
        }
    }

    fn finish(mut self) -> Vec<BinStats> {
        for b in &mut self.bins {
            let width = b.end - b.start;
            if width > 0.0 {
                b.throughput /= width;
                b.energy /= width;
            }
            b.efficiency = if b.energy > 0.0 { b.throughput / b.energy } else { 0.0 };
            let (a, k): (u64, u64) = (b.arrivals.iter().sum(), b.blocks.iter().sum());
            b.blocking_prob = if a > 0 { k as f64 / a as f64 } else { 0.0 };
        }
        self.bins
    }
}

pub(super) fn check_window(warmup: f64, horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && warmup >= 0.0 && warmup < horizon) {
        return Err(Error::Config(format!(
            "need 0 <= warmup < horizon (got warmup {warmup}, horizon {horizon})"
        )));
    }
    Ok(())
}
