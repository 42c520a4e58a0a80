//! Index computation: the scalar function `f`, the per-state index bisection,
//! the closed form for constant-efficiency clusters, the fluid fit of `Gamma(e)`
//! and the bisection for its zero `e0`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{gamma_bar, gamma_bar_with_threshold, threshold_distribution, Scaling};
use crate::model::{ClusterSpec, FarmInstance};
use crate::numfmt::g12;

pub const DEFAULT_EPSILON: f64 = 1e-15;
pub const DEFAULT_LIMIT_SCALING: f64 = 1e6;
const MAX_DOUBLINGS: usize = 128;

/// `min_{n' = n+1..C} (gbar + e eps(n')) / mu(n')`.
fn tail_min(cluster: &ClusterSpec, n: usize, gbar: f64, e: f64) -> f64 {
    ((n + 1)..=cluster.capacity)
        .map(|k| tail_term(cluster, k, gbar, e))
        .fold(f64::INFINITY, f64::min)
}

fn tail_term(cluster: &ClusterSpec, k: usize, gbar: f64, e: f64) -> f64 {
    (gbar + e * cluster.energy_rates[k]) / cluster.service_rates[k]
}

/// `f(eta0) = eta0 + lambda_hat * (min_{n'>n} (gbar(eta0) + e eps(n')) / mu(n') - 1)`
/// for a cluster whose aggregate arrival rate is `lambda_hat`.
pub fn f_cluster(cluster: &ClusterSpec, lambda_hat: f64, n: usize, eta0: f64, e: f64, scaling: Scaling) -> Result<f64> {
    if n >= cluster.capacity {
        return Err(Error::InvalidInput(format!(
            "state {n} is outside 0..{} for cluster {}",
            cluster.capacity, cluster.id
        )));
    }
    let (gbar, m) = gamma_bar_with_threshold(cluster, eta0, e, scaling, lambda_hat)?;
    let k = ((n + 1)..=cluster.capacity)
        .min_by(|&a, &b| tail_term(cluster, a, gbar, e).total_cmp(&tail_term(cluster, b, gbar, e)))
        .expect("n < capacity");
    let pi = match scaling {
        Scaling::Finite(h) => threshold_distribution(cluster, m, h, lambda_hat)?,
        Scaling::Limit => {
            let mut delta = vec![0.0; cluster.capacity + 1];
            delta[m + 1] = 1.0;
            delta
        }
    };
    // flow balance h lambda_hat P(active) = sum pi mu turns gbar into
    // R - eta0 T / lambda_hat, so f splits into two sums of small terms
    let (mu, eps) = (&cluster.service_rates, &cluster.energy_rates);
    let (slack, gap) = pi.iter().enumerate().fold((0.0, 0.0), |(s, g), (j, &p)| {
        (s + p * (mu[k] - mu[j]), g + p * ((mu[j] - mu[k]) - e * (eps[j] - eps[k])))
    });
    Ok((eta0 * slack + lambda_hat * gap) / mu[k])
}

pub fn f_value(instance: &FarmInstance, cluster_id: usize, n: usize, eta0: f64, e: f64, scaling: Scaling) -> Result<f64> {
    f_cluster(instance.cluster(cluster_id), instance.lambda_hat(cluster_id), n, eta0, e, scaling)
}

/// Solved indices for one criterion value `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    pub e: f64,
    pub scaling: Scaling,
    pub precision: f64,
    /// `eta0[i-1][n]` for `n in 0..C_i`.
    pub eta0: Vec<Vec<f64>>,
    /// `u[l-1][i-1][n]`; empty when cluster `i` is not eligible for class `l`.
    pub u: Vec<Vec<Vec<f64>>>,
    /// Non-fatal bracketing events, one line each.
    pub diagnostics: Vec<String>,
}

impl IndexTable {
    /// Index of class `class` at a cluster-`cluster` component holding `n` jobs.
    pub fn index(&self, class: usize, cluster: usize, n: usize) -> f64 {
        self.u[class - 1][cluster - 1][n]
    }

    /// Tabular text: one row per (cluster, state), columns `cluster state eta0 u_1 .. u_L`,
    /// `-` where the class is not eligible.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# e={} h={} precision={}", g12(self.e), self.scaling, g12(self.precision));
        let mut header = String::from("cluster\tstate\teta0");
        for l in 1..=self.u.len() {
            let _ = write!(header, "\tu_{l}");
        }
        out.push_str(&header);
        out.push('\n');
        for (i, row) in self.eta0.iter().enumerate() {
            for (n, eta) in row.iter().enumerate() {
                let _ = write!(out, "{}\t{}\t{}", i + 1, n, g12(*eta));
                for class in &self.u {
                    let cell = class[i].get(n).map(|v| g12(*v)).unwrap_or_else(|| "-".into());
                    let _ = write!(out, "\t{cell}");
                }
                out.push('\n');
            }
        }
        out
    }
}

struct ClusterSolve {
    eta0: Vec<f64>,
    diagnostics: Vec<String>,
}

/// Index bisection for every cluster: for each cluster the states are solved
/// from `C-1` down to `0`, each zero serving as the lower bracket of the next.
pub fn solve_indices(instance: &FarmInstance, e: f64, scaling: Scaling, epsilon: f64) -> Result<IndexTable> {
    if !(epsilon > 0.0) || !e.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon} must be positive and e = {e} finite")));
    }
    let solves: Vec<Result<ClusterSolve>> = instance
        .clusters
        .par_iter()
        .map(|cluster| {
            let lh = instance.lambda_hat(cluster.id);
            if lh > 0.0 {
                solve_cluster(cluster, lh, e, scaling, epsilon)
            } else {
                Ok(ClusterSolve {
                    eta0: vec![0.0; cluster.capacity],
                    diagnostics: vec![format!("cluster {}: no eligible class, indices left at 0", cluster.id)],
                })
            }
        })
        .collect();
    let mut eta0 = Vec::with_capacity(solves.len());
    let mut diagnostics = Vec::new();
    for solve in solves {
        let solve = solve?;
        eta0.push(solve.eta0);
        diagnostics.extend(solve.diagnostics);
    }
    let u = instance
        .classes
        .iter()
        .map(|class| {
            instance
                .clusters
                .iter()
                .map(|cluster| {
                    if class.is_eligible(cluster.id) {
                        let lh = instance.lambda_hat(cluster.id);
                        eta0[cluster.id - 1].iter().map(|eta| eta * class.arrival_rate_base / lh).collect()
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        })
        .collect();
    Ok(IndexTable {
        e,
        scaling,
        precision: epsilon,
        eta0,
        u,
        diagnostics,
    })
}

fn initial_upper(cluster: &ClusterSpec, lh: f64, n: usize, e: f64) -> f64 {
    lh * (1.0 - e * (cluster.energy_rates[n] - cluster.energy_rates[0]) / cluster.service_rates[n])
}

fn solve_cluster(cluster: &ClusterSpec, lh: f64, e: f64, scaling: Scaling, epsilon: f64) -> Result<ClusterSolve> {
    let c = cluster.capacity;
    let id = cluster.id;
    let mut diagnostics = Vec::new();
    let f = |n: usize, eta: f64| -> Result<f64> {
        let v = f_cluster(cluster, lh, n, eta, e, scaling)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                cluster: id,
                state: n,
                eta0: eta,
            })
        }
    };

    // initial bracket for the top state
    let mut step = 1.0;
    let mut hi = initial_upper(cluster, lh, c, e);
    let mut cap = hi;
    let mut doublings = 0;
    while f(c - 1, hi - step)? > 0.0 {
        hi -= step;
        step *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::BracketFailure {
                cluster: id,
                state: c - 1,
                doublings,
            });
        }
    }
    let mut lo = hi - step;

    let mut eta0 = vec![0.0; c];
    for n in (0..c).rev() {
        if n + 1 < c {
            let prev = eta0[n + 1];
            // the new tail term does not bind at the previous zero: same zero
            let gbar = gamma_bar(cluster, prev, e, scaling, lh)?;
            if tail_term(cluster, n + 1, gbar, e) >= tail_min(cluster, n + 1, gbar, e) {
                eta0[n] = prev;
                lo = prev;
                if n > 0 {
                    hi = initial_upper(cluster, lh, n, e).max(cap);
                    cap = hi;
                }
                continue;
            }
        }
        let (a, b) = ensure_bracket(&f, n, lo, hi, id, &mut diagnostics)?;
        let root = bisect(|x| f(n, x), a, b, epsilon)?;
        eta0[n] = root;
        lo = root;
        if n > 0 {
            hi = initial_upper(cluster, lh, n, e).max(cap);
            cap = hi;
        }
    }
    Ok(ClusterSolve { eta0, diagnostics })
}

/// Widens `[lo, hi]` by doubling steps until `f(lo) <= 0 <= f(hi)`.
fn ensure_bracket(
    f: &impl Fn(usize, f64) -> Result<f64>,
    n: usize,
    mut lo: f64,
    mut hi: f64,
    cluster: usize,
    diagnostics: &mut Vec<String>,
) -> Result<(f64, f64)> {
    if hi < lo {
        hi = lo;
    }
    let fail = |doublings| Error::BracketFailure {
        cluster,
        state: n,
        doublings,
    };
    if f(n, hi)? < 0.0 {
        let start = hi;
        let mut step = 1.0;
        let mut doublings = 0;
        while f(n, hi)? < 0.0 {
            lo = hi;
            hi += step;
            step *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(fail(doublings));
            }
        }
        diagnostics.push(format!(
            "cluster {cluster} state {n}: upper bracket {} had f < 0, expanded to {}",
            g12(start),
            g12(hi)
        ));
    }
    if f(n, lo)? > 0.0 {
        let start = lo;
        let mut step = 1.0;
        let mut doublings = 0;
        while f(n, lo)? > 0.0 {
            hi = lo;
            lo -= step;
            step *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(fail(doublings));
            }
        }
        diagnostics.push(format!(
            "cluster {cluster} state {n}: lower bracket {} had f > 0, expanded to {}",
            g12(start),
            g12(lo)
        ));
    }
    Ok((lo, hi))
}

/// Bisection on a bracket with `g(lo) <= 0 <= g(hi)`; stops at width `epsilon`,
/// an exact zero, or when the bracket cannot be split further in floating point.
pub fn bisect(mut g: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64, epsilon: f64) -> Result<f64> {
    while hi - lo > epsilon {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid)?;
        if v < 0.0 {
            lo = mid;
        } else if v > 0.0 {
            hi = mid;
        } else {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `lambda_l (1 - e / r_i)` with `r_i = mu(C) / (eps(C) - eps(0))`, available when
/// `mu(n) / (eps(n) - eps(0))` is non-decreasing over `n = 1..C`.
pub fn closed_form_index(cluster: &ClusterSpec, lambda_l: f64, e: f64) -> Option<f64> {
    let ratios = cluster.incremental_ratios();
    let monotone = ratios.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    monotone.then(|| lambda_l * (1.0 - e / cluster.peak_ratio()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidOptions {
    /// Finite `h` standing in for the `h -> infinity` limit of the indices.
    pub limit_scaling: f64,
    pub epsilon: f64,
}

impl Default for FluidOptions {
    fn default() -> Self {
        FluidOptions {
            limit_scaling: DEFAULT_LIMIT_SCALING,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Fluid occupancy produced by the greedy fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidAllocation {
    pub e: f64,
    /// Fluid level per cluster.
    pub q: Vec<usize>,
    /// Fraction of the cluster's components at level `q + 1`.
    pub u: Vec<f64>,
    /// Served fraction per class.
    pub s: Vec<f64>,
    pub gamma: f64,
}

impl FluidAllocation {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# e={} gamma={}", g12(self.e), g12(self.gamma));
        out.push_str("cluster\tq\tu\n");
        for (i, (q, u)) in self.q.iter().zip(&self.u).enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", i + 1, q, g12(*u));
        }
        out.push_str("class\ts\n");
        for (l, s) in self.s.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}", l + 1, g12(*s));
        }
        out
    }
}

/// Greedy fluid fit of `Gamma(e)` by filling state-cluster pairs in descending index order.
pub fn fluid_fit(instance: &FarmInstance, e: f64, options: FluidOptions) -> Result<FluidAllocation> {
    let table = solve_indices(instance, e, Scaling::Finite(options.limit_scaling), options.epsilon)?;
    Ok(fluid_fit_with(instance, e, &table.eta0))
}

/// The greedy fill on precomputed aggregate indices `eta[i-1][n]`.
pub fn fluid_fit_with(instance: &FarmInstance, e: f64, eta: &[Vec<f64>]) -> FluidAllocation {
    let num_clusters = instance.num_clusters();
    let mut pairs: Vec<(f64, usize, usize)> = instance
        .clusters
        .iter()
        .flat_map(|c| (0..c.capacity).map(move |n| (eta[c.id - 1][n], c.id, n)))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let lambda_hat: Vec<f64> = (1..=num_clusters).map(|i| instance.lambda_hat(i)).collect();
    let eligible: Vec<Vec<usize>> = (1..=num_clusters).map(|i| instance.classes_for_cluster(i)).collect();
    let mut s: Vec<f64> = vec![0.0; instance.num_classes()];
    let mut q = vec![0usize; num_clusters];
    let mut u: Vec<f64> = vec![0.0; num_clusters];

    for &(_, i, n) in &pairs {
        if s.iter().all(|&x| x >= 1.0) {
            break;
        }
        let classes = &eligible[i - 1];
        let Some(&x) = classes.iter().min_by(|&&a, &&b| (1.0 - s[a - 1]).total_cmp(&(1.0 - s[b - 1]))) else {
            continue;
        };
        let sx = s[x - 1];
        if sx >= 1.0 {
            continue;
        }
        let cluster = instance.cluster(i);
        let room = cluster.component_count_base as f64 * (cluster.service_rates[n + 1] - cluster.service_rates[n]);
        let demand = lambda_hat[i - 1] * (1.0 - sx);
        if room >= demand {
            for &l in classes {
                s[l - 1] = (s[l - 1] + 1.0 - sx).min(1.0);
            }
            u[i - 1] = demand / room;
            q[i - 1] = n;
        } else {
            for &l in classes {
                s[l - 1] = (s[l - 1] + room / lambda_hat[i - 1]).min(1.0);
            }
            u[i - 1] = 0.0;
            q[i - 1] = n + 1;
        }
    }

    let gamma = instance
        .clusters
        .iter()
        .map(|c| {
            let (qi, ui) = (q[c.id - 1], u[c.id - 1]);
            let mut r = c.reward(qi, e) * (1.0 - ui);
            if ui > 0.0 {
                r += c.reward(qi + 1, e) * ui;
            }
            r * c.component_count_base as f64
        })
        .sum();
    FluidAllocation { e, q, u, s, gamma }
}

/// Right end of the `e` bracket: `sum_i M_i max_{n >= 1, eps(n) > 0} mu(n) / eps(n)`.
pub fn e0_upper_bound(instance: &FarmInstance) -> f64 {
    instance
        .clusters
        .iter()
        .map(|c| {
            let best = (1..=c.capacity)
                .filter(|&n| c.energy_rates[n] > 0.0)
                .map(|n| c.service_rates[n] / c.energy_rates[n])
                .fold(0.0, f64::max);
            best * c.component_count_base as f64
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct E0Estimate {
    pub e0: f64,
    /// `Gamma` at the returned estimate.
    pub gamma: f64,
    pub bracket: (f64, f64),
    pub gamma_at_ends: (f64, f64),
}

/// Bisection for the zero of `Gamma(e)` on `[0, e0_upper_bound]`.
pub fn solve_e0(instance: &FarmInstance, options: FluidOptions) -> Result<E0Estimate> {
    let gamma = |e: f64| fluid_fit(instance, e, options).map(|a| a.gamma);
    let (low, high) = (0.0, e0_upper_bound(instance));
    let (g_low, g_high) = (gamma(low)?, gamma(high)?);
    if g_low < 0.0 || g_high > 0.0 {
        return Err(Error::NoSignChange {
            low,
            high,
            gamma_low: g_low,
            gamma_high: g_high,
        });
    }
    // Gamma is non-increasing, so its negation fits the bisection sign convention
    let e0 = bisect(|e| gamma(e).map(|g| -g), low, high, options.epsilon)?;
    Ok(E0Estimate {
        e0,
        gamma: gamma(e0)?,
        bracket: (low, high),
        gamma_at_ends: (g_low, g_high),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JobClassSpec;
    use approx::assert_relative_eq;

    fn instance(clusters: Vec<ClusterSpec>, classes: Vec<(f64, Vec<usize>)>) -> FarmInstance {
        FarmInstance {
            clusters,
            classes: classes
                .into_iter()
                .enumerate()
                .map(|(k, (rate, eligible))| JobClassSpec {
                    id: k + 1,
                    arrival_rate_base: rate,
                    eligible_clusters: eligible,
                })
                .collect(),
            scaling: 1,
        }
    }

    fn cluster(id: usize, mu: &[f64], eps: &[f64]) -> ClusterSpec {
        ClusterSpec {
            id,
            capacity: mu.len() - 1,
            service_rates: mu.to_vec(),
            energy_rates: eps.to_vec(),
            component_count_base: 1,
        }
    }

    fn unit(rate: f64) -> FarmInstance {
        instance(vec![cluster(1, &[0.0, 1.0], &[0.0, 1.0])], vec![(rate, vec![1])])
    }

    #[test]
    fn f_on_unit_cluster() {
        let inst = unit(2.0);
        let s = Scaling::Finite(1.0);
        assert!(f_value(&inst, 1, 0, 1.0, 0.5, s).unwrap().abs() < 1e-15);
        assert!(f_value(&inst, 1, 0, 2.0, 0.5, s).unwrap() > 0.0);
        assert!(f_value(&inst, 1, 0, 0.0, 0.5, s).unwrap() < 0.0);
        assert!(f_value(&inst, 1, 0, 2.0 * 1.0 * 1.0 * 10.0, 0.0, s).unwrap() > 0.0);
        assert!(f_value(&inst, 1, 1, 1.0, 0.5, s).is_err());
    }

    #[test]
    fn unit_cluster_index_is_one_at_every_scale() {
        for h in [1.0, 7.0, 1e3, 1e6] {
            let t = solve_indices(&unit(2.0), 0.5, Scaling::Finite(h), DEFAULT_EPSILON).unwrap();
            // f flattens like 1/h around its zero, so rounding in f moves the root by ~h ulps
            let tol = 1e-14 * h;
            assert!((t.eta0[0][0] - 1.0).abs() <= tol, "h={h}: {}", t.eta0[0][0]);
            assert!((t.index(1, 1, 0) - 1.0).abs() <= tol);
        }
    }

    #[test]
    fn indices_are_class_proportional() {
        let c = cluster(1, &[0.0, 1.0, 2.0, 2.5], &[0.1, 0.5, 0.8, 1.3]);
        let inst = instance(vec![c], vec![(1.0, vec![1]), (3.0, vec![1])]);
        let t = solve_indices(&inst, 0.7, Scaling::Finite(4.0), DEFAULT_EPSILON).unwrap();
        for n in 0..3 {
            assert_relative_eq!(t.index(2, 1, n), 3.0 * t.index(1, 1, n), max_relative = 1e-15);
            assert_relative_eq!(t.index(1, 1, n) + t.index(2, 1, n), t.eta0[0][n], max_relative = 1e-15);
        }
    }

    #[test]
    fn constant_ratio_cluster_matches_closed_form() {
        // mu(n) / (eps(n) - eps(0)) = 2 for every n
        let c = cluster(1, &[0.0, 1.0, 1.8, 2.2], &[0.3, 0.8, 1.2, 1.4]);
        let inst = instance(vec![c.clone()], vec![(1.5, vec![1])]);
        for h in [1.0, 10.0, 1e6] {
            let t = solve_indices(&inst, 0.9, Scaling::Finite(h), DEFAULT_EPSILON).unwrap();
            let expected = closed_form_index(&c, 1.5, 0.9).unwrap();
            for n in 0..3 {
                assert!((t.index(1, 1, n) - expected).abs() <= 1e-13 * h, "h={h} n={n}");
            }
        }
    }

    #[test]
    fn zero_criterion_gives_positive_indices() {
        let c = cluster(1, &[0.0, 1.0, 1.5, 1.7], &[0.05, 1.0, 1.2, 2.0]);
        let inst = instance(vec![c], vec![(0.8, vec![1])]);
        let t = solve_indices(&inst, 0.0, Scaling::Finite(3.0), DEFAULT_EPSILON).unwrap();
        assert!(t.eta0[0].iter().all(|&x| x > 0.0), "{:?}", t.eta0);
    }

    #[test]
    fn closed_form_cases() {
        let c = cluster(1, &[0.0, 1.0, 2.0], &[0.0, 0.5, 1.0]);
        assert_relative_eq!(closed_form_index(&c, 3.0, 1.0).unwrap(), 1.5);
        assert_eq!(closed_form_index(&c, 3.0, 0.0).unwrap(), 3.0);
        let dec = cluster(1, &[0.0, 1.0, 1.5], &[0.0, 0.5, 1.0]);
        assert_eq!(closed_form_index(&dec, 3.0, 1.0), None);
    }

    #[test]
    fn fluid_fit_hand_traces() {
        let heavy = fluid_fit(&unit(2.0), 0.3, FluidOptions::default()).unwrap();
        assert_eq!((heavy.q[0], heavy.u[0]), (1, 0.0));
        assert_relative_eq!(heavy.s[0], 0.5);
        assert_relative_eq!(heavy.gamma, 0.7, max_relative = 1e-15);

        let light = fluid_fit(&unit(0.5), 0.3, FluidOptions::default()).unwrap();
        assert_eq!(light.q[0], 0);
        assert_relative_eq!(light.u[0], 0.5);
        assert_eq!(light.s[0], 1.0);
        assert_relative_eq!(light.gamma, 0.5 * 0.7, max_relative = 1e-15);
    }

    #[test]
    fn fluid_fit_at_zero_is_non_negative() {
        let inst = crate::model::generate_scenario1(5, 0.4);
        let a = fluid_fit(&inst, 0.0, FluidOptions::default()).unwrap();
        assert!(a.gamma >= 0.0);
        assert!(a.u.iter().all(|&u| (0.0..=1.0).contains(&u)));
        assert!(a.s.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn untouched_clusters_stay_idle() {
        // cluster 2 is far less efficient and never needed by the light class
        let inst = instance(
            vec![
                cluster(1, &[0.0, 5.0], &[0.0, 1.0]),
                cluster(2, &[0.0, 1.0], &[0.5, 4.0]),
            ],
            vec![(0.5, vec![1, 2])],
        );
        let a = fluid_fit(&inst, 1.0, FluidOptions::default()).unwrap();
        assert_eq!((a.q[1], a.u[1]), (0, 0.0));
        assert_relative_eq!(a.gamma, 0.1 * 4.0 - 0.5, max_relative = 1e-12);
    }

    #[test]
    fn e0_on_unit_cluster() {
        let options = FluidOptions::default();
        for rate in [2.0, 0.5] {
            let est = solve_e0(&unit(rate), options).unwrap();
            assert!((est.e0 - 1.0).abs() <= 1e-14, "{rate}: {}", est.e0);
        }
    }

    #[test]
    fn e0_symmetric_clusters() {
        let c = |id| cluster(id, &[0.0, 1.0, 1.6], &[0.2, 0.9, 1.3]);
        let one = instance(vec![c(1)], vec![(1.2, vec![1])]);
        let two = instance(vec![c(1), c(2)], vec![(1.2, vec![1]), (1.2, vec![2])]);
        let a = solve_e0(&one, FluidOptions::default()).unwrap().e0;
        let b = solve_e0(&two, FluidOptions::default()).unwrap().e0;
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn table_text_layout() {
        let inst = instance(
            vec![cluster(1, &[0.0, 1.0], &[0.0, 1.0]), cluster(2, &[0.0, 1.0], &[0.0, 2.0])],
            vec![(1.0, vec![1]), (1.0, vec![1, 2])],
        );
        let t = solve_indices(&inst, 0.25, Scaling::Finite(1.0), DEFAULT_EPSILON).unwrap();
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "cluster\tstate\teta0\tu_1\tu_2");
        assert!(lines[3].starts_with("2\t0\t"));
        assert!(lines[3].contains("\t-\t"));
    }
}
