//! Arrival streams: superposed Poisson processes, replayed traces and a
//! synthetic diurnal trace generator.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalEvent {
    pub time: f64,
    /// 1-based class id.
    pub class: usize,
}

/// RNG for a numbered stream of one seed; streams are independent of each other.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Superposition of independent per-class Poisson processes. Class `l` draws its
/// inter-arrival times from its own stream, so its arrivals do not depend on
/// the other classes' rates.
#[derive(Debug, Clone)]
pub struct PoissonStream {
    rates: Vec<f64>,
    next: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
}

impl PoissonStream {
    pub fn new(rates: &[f64], seed: u64) -> PoissonStream {
        let mut rngs: Vec<ChaCha8Rng> = (0..rates.len()).map(|l| stream_rng(seed, 2 * l as u64)).collect();
        let next = rates
            .iter()
            .zip(rngs.iter_mut())
            .map(|(&r, rng)| draw_gap(r, rng))
            .collect();
        PoissonStream {
            rates: rates.to_vec(),
            next,
            rngs,
        }
    }
}

fn draw_gap(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate > 0.0 {
        let e: f64 = Exp1.sample(rng);
        e / rate
    } else {
        f64::INFINITY
    }
}

impl Iterator for PoissonStream {
    type Item = ArrivalEvent;

    fn next(&mut self) -> Option<ArrivalEvent> {
        let (l, &time) = self.next.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        if !time.is_finite() {
            return None;
        }
        self.next[l] = time + draw_gap(self.rates[l], &mut self.rngs[l]);
        Some(ArrivalEvent { time, class: l + 1 })
    }
}

/// Poisson arrivals with the given per-class rates, cut at `horizon`.
pub fn poisson_stream(rates: &[f64], seed: u64, horizon: f64) -> Vec<ArrivalEvent> {
    PoissonStream::new(rates, seed).take_while(|a| a.time <= horizon).collect()
}

/// Parses `timestamp_seconds,class_id` lines. Blank lines and lines starting
/// with `#` are skipped; a first line that does not parse as numbers is taken
/// as a header.
pub fn read_trace(reader: impl BufRead, num_classes: usize) -> Result<Vec<ArrivalEvent>> {
    let mut events = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::Trace {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let trace_err = |message: String| Error::Trace { line: lineno, message };
        let (ts, class) = line
            .split_once(',')
            .ok_or_else(|| trace_err(format!("expected 'timestamp,class', got '{line}'")))?;
        let time: f64 = match ts.trim().parse() {
            Ok(t) => t,
            Err(_) if lineno == 1 => continue,
            Err(_) => return Err(trace_err(format!("bad timestamp '{}'", ts.trim()))),
        };
        let class: usize = class
            .trim()
            .parse()
            .map_err(|_| trace_err(format!("bad class id '{}'", class.trim())))?;
        if !time.is_finite() || time < 0.0 {
            return Err(trace_err(format!("timestamp {time} must be finite and non-negative")));
        }
        if time < last {
            return Err(trace_err(format!("timestamp {time} is earlier than the previous {last}")));
        }
        if class == 0 || class > num_classes {
            return Err(trace_err(format!("unknown class {class} (instance has {num_classes})")));
        }
        last = time;
        events.push(ArrivalEvent { time, class });
    }
    Ok(events)
}

pub fn trace_stream(path: &Path, num_classes: usize) -> Result<Vec<ArrivalEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_trace(std::io::BufReader::new(file), num_classes)
}

pub fn write_trace(path: &Path, events: &[ArrivalEvent]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "timestamp_seconds,class_id").map_err(io)?;
    for a in events {
        writeln!(w, "{},{}", a.time, a.class).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Sinusoidal daily intensity `mean_l * (1 + amplitude * cos(2 pi (t - peak_time) / period))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiurnalProfile {
    pub mean_rates: Vec<f64>,
    /// In `[0, 1]`.
    pub amplitude: f64,
    pub period: f64,
    pub peak_time: f64,
}

impl DiurnalProfile {
    pub fn rate(&self, class: usize, t: f64) -> f64 {
        self.mean_rates[class - 1] * (1.0 + self.amplitude * (TAU * (t - self.peak_time) / self.period).cos())
    }

    pub fn total_rate(&self, t: f64) -> f64 {
        (1..=self.mean_rates.len()).map(|l| self.rate(l, t)).sum()
    }

    /// Expected number of arrivals of all classes in `[a, b]`.
    pub fn expected_count(&self, a: f64, b: f64) -> f64 {
        let total: f64 = self.mean_rates.iter().sum();
        let w = TAU / self.period;
        let phase = |t: f64| ((t - self.peak_time) * w).sin() / w;
        total * ((b - a) + self.amplitude * (phase(b) - phase(a)))
    }

    /// Non-homogeneous Poisson arrivals on `[0, horizon]` by thinning a
    /// homogeneous stream at the peak rate. Class `l` uses its own stream.
    pub fn generate(&self, horizon: f64, seed: u64) -> Vec<ArrivalEvent> {
        let mut events = Vec::new();
        for (k, &mean) in self.mean_rates.iter().enumerate() {
            let peak = mean * (1.0 + self.amplitude);
            if peak <= 0.0 {
                continue;
            }
            let mut rng = stream_rng(seed, 2 * k as u64);
            let mut t = 0.0;
            loop {
                t += draw_gap(peak, &mut rng);
                if t > horizon {
                    break;
                }
                let accept: f64 = rng.random();
                if accept * peak < self.rate(k + 1, t) {
                    events.push(ArrivalEvent { time: t, class: k + 1 });
                }
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.class.cmp(&b.class)));
        events
    }
}
