//! Server-farm instances: clusters of identical components, job classes and
//! the scaling parameter `h`.
//!
//! Cluster and class ids are 1-based everywhere a user sees them (instance
//! files, CSV output, error messages). Internally both are stored in id order,
//! so cluster `i` lives at `clusters[i - 1]`. Components are labelled
//! `0..J` cluster by cluster: the `h * M_1` components of cluster 1 come first,
//! then those of cluster 2, and so on.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One cluster of identical physical components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub id: usize,
    /// Maximum number of jobs a component can hold at once.
    pub capacity: usize,
    /// Aggregate service rate `mu(n)` of a component holding `n` jobs, `n = 0..=capacity`.
    pub service_rates: Vec<f64>,
    /// Power draw `eps(n)` of a component holding `n` jobs, `n = 0..=capacity`.
    pub energy_rates: Vec<f64>,
    /// Components per unit of scale; the cluster holds `component_count_base * h` components.
    pub component_count_base: usize,
}

impl ClusterSpec {
    /// Peak-to-idle efficiency `mu(C) / (eps(C) - eps(0))`.
    pub fn peak_ratio(&self) -> f64 {
        let c = self.capacity;
        self.service_rates[c] / (self.energy_rates[c] - self.energy_rates[0])
    }

    /// `mu(n) / (eps(n) - eps(0))` for `n = 1..=capacity`.
    pub fn incremental_ratios(&self) -> Vec<f64> {
        (1..=self.capacity)
            .map(|n| self.service_rates[n] / (self.energy_rates[n] - self.energy_rates[0]))
            .collect()
    }

    /// Reward rate `mu(n) - e * eps(n)`.
    pub fn reward(&self, n: usize, e: f64) -> f64 {
        self.service_rates[n] - e * self.energy_rates[n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobClassSpec {
    pub id: usize,
    /// Arrival rate at `h = 1`; the actual Poisson rate is `h * arrival_rate_base`.
    #[serde(rename = "arrival_rate")]
    pub arrival_rate_base: f64,
    /// 1-based ids of the clusters whose components may serve this class.
    pub eligible_clusters: Vec<usize>,
}

impl JobClassSpec {
    pub fn is_eligible(&self, cluster_id: usize) -> bool {
        self.eligible_clusters.contains(&cluster_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmInstance {
    #[serde(rename = "cluster")]
    pub clusters: Vec<ClusterSpec>,
    #[serde(rename = "class")]
    pub classes: Vec<JobClassSpec>,
    /// Scaling parameter `h`.
    pub scaling: usize,
}

/// A real component label or the virtual rejection component of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentRef {
    Real { label: usize, cluster: usize },
    /// Virtual component `j_l = J + l`; capacity 0, zero rates.
    Virtual { class: usize },
}

impl ComponentRef {
    /// Global id: real labels are `0..J`, virtual component of class `l` is `J + l - 1`.
    pub fn global_id(&self, total_components: usize) -> usize {
        match *self {
            ComponentRef::Real { label, .. } => label,
            ComponentRef::Virtual { class } => total_components + class - 1,
        }
    }
}

impl FarmInstance {
    pub fn cluster(&self, id: usize) -> &ClusterSpec {
        &self.clusters[id - 1]
    }

    pub fn class(&self, id: usize) -> &JobClassSpec {
        &self.classes[id - 1]
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// `lambda_hat_i^0`: summed base arrival rate of every class that may use cluster `id`.
    pub fn lambda_hat(&self, cluster_id: usize) -> f64 {
        self.classes
            .iter()
            .filter(|c| c.is_eligible(cluster_id))
            .map(|c| c.arrival_rate_base)
            .sum()
    }

    /// Ids of the classes eligible for a cluster, ascending.
    pub fn classes_for_cluster(&self, cluster_id: usize) -> Vec<usize> {
        self.classes
            .iter()
            .filter(|c| c.is_eligible(cluster_id))
            .map(|c| c.id)
            .collect()
    }

    pub fn component_count(&self, cluster_id: usize) -> usize {
        self.cluster(cluster_id).component_count_base * self.scaling
    }

    pub fn total_components(&self) -> usize {
        self.clusters.iter().map(|c| c.component_count_base).sum::<usize>() * self.scaling
    }

    pub fn total_base_components(&self) -> usize {
        self.clusters.iter().map(|c| c.component_count_base).sum()
    }

    pub fn max_capacity(&self) -> usize {
        self.clusters.iter().map(|c| c.capacity).max().unwrap_or(0)
    }

    /// Same instance at a different scale.
    pub fn with_scaling(&self, scaling: usize) -> FarmInstance {
        FarmInstance {
            scaling,
            ..self.clone()
        }
    }

    pub fn topology(&self) -> Topology {
        Topology::new(self)
    }

    pub fn from_toml_str(text: &str) -> Result<FarmInstance, Error> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("instance serializes")
    }

    /// Reads an instance document and rejects it if any invariant is violated.
    pub fn load(path: &Path) -> Result<FarmInstance, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let instance = FarmInstance::from_toml_str(&text)?;
        let violations = validate_instance(&instance);
        if violations.is_empty() {
            Ok(instance)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_toml_string())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Label layout of the real components.
#[derive(Debug, Clone)]
pub struct Topology {
    /// 1-based cluster id of each component label.
    pub component_cluster: Vec<usize>,
    /// Label range of each cluster, indexed by `cluster_id - 1`.
    pub cluster_ranges: Vec<Range<usize>>,
    /// Capacity of each component label.
    pub component_capacity: Vec<usize>,
    /// Eligible component labels per class (indexed by `class_id - 1`), ascending.
    pub class_components: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(instance: &FarmInstance) -> Topology {
        let mut component_cluster = Vec::new();
        let mut component_capacity = Vec::new();
        let mut cluster_ranges = Vec::new();
        for cluster in &instance.clusters {
            let start = component_cluster.len();
            for _ in 0..cluster.component_count_base * instance.scaling {
                component_cluster.push(cluster.id);
                component_capacity.push(cluster.capacity);
            }
            cluster_ranges.push(start..component_cluster.len());
        }
        let class_components = instance
            .classes
            .iter()
            .map(|class| {
                let mut labels: Vec<usize> = class
                    .eligible_clusters
                    .iter()
                    .flat_map(|&i| cluster_ranges[i - 1].clone())
                    .collect();
                labels.sort_unstable();
                labels
            })
            .collect();
        Topology {
            component_cluster,
            cluster_ranges,
            component_capacity,
            class_components,
        }
    }

    pub fn total_components(&self) -> usize {
        self.component_cluster.len()
    }

    pub fn component(&self, label: usize) -> ComponentRef {
        ComponentRef::Real {
            label,
            cluster: self.component_cluster[label],
        }
    }
}

/// A broken instance invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub cluster: Option<usize>,
    pub class: Option<usize>,
    pub state: Option<usize>,
    pub rule: String,
}

impl Violation {
    fn cluster(cluster: usize, state: Option<usize>, rule: String) -> Violation {
        Violation {
            cluster: Some(cluster),
            class: None,
            state,
            rule,
        }
    }

    fn class(class: usize, rule: String) -> Violation {
        Violation {
            cluster: None,
            class: Some(class),
            state: None,
            rule,
        }
    }

    fn instance(rule: String) -> Violation {
        Violation {
            cluster: None,
            class: None,
            state: None,
            rule,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.cluster, self.class) {
            (Some(i), _) => write!(f, "cluster {i}: {}", self.rule),
            (None, Some(l)) => write!(f, "class {l}: {}", self.rule),
            (None, None) => write!(f, "{}", self.rule),
        }
    }
}

/// Checks every cluster and instance invariant; an empty list means the instance is valid.
pub fn validate_instance(instance: &FarmInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if instance.scaling == 0 {
        out.push(Violation::instance("scaling must be a positive integer".into()));
    }
    if instance.clusters.is_empty() {
        out.push(Violation::instance("instance has no clusters".into()));
    }
    if instance.classes.is_empty() {
        out.push(Violation::instance("instance has no job classes".into()));
    }
    for (k, cluster) in instance.clusters.iter().enumerate() {
        if cluster.id != k + 1 {
            out.push(Violation::cluster(
                cluster.id,
                None,
                format!("cluster ids must be 1..I in order (found {} at position {})", cluster.id, k + 1),
            ));
        }
        validate_cluster(cluster, &mut out);
    }
    let num_clusters = instance.clusters.len();
    for (k, class) in instance.classes.iter().enumerate() {
        if class.id != k + 1 {
            out.push(Violation::class(
                class.id,
                format!("class ids must be 1..L in order (found {} at position {})", class.id, k + 1),
            ));
        }
        if !(class.arrival_rate_base.is_finite() && class.arrival_rate_base > 0.0) {
            out.push(Violation::class(class.id, "arrival_rate must be positive and finite".into()));
        }
        if class.eligible_clusters.is_empty() {
            out.push(Violation::class(class.id, "eligible_clusters is empty".into()));
        }
        for &i in &class.eligible_clusters {
            if i == 0 || i > num_clusters {
                out.push(Violation::class(class.id, format!("eligible cluster {i} is not declared")));
            }
        }
        let mut sorted = class.eligible_clusters.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != class.eligible_clusters.len() {
            out.push(Violation::class(class.id, "eligible_clusters lists a cluster twice".into()));
        }
    }
    out
}

fn validate_cluster(cluster: &ClusterSpec, out: &mut Vec<Violation>) {
    let id = cluster.id;
    let c = cluster.capacity;
    if c == 0 {
        out.push(Violation::cluster(id, None, "capacity must be positive".into()));
    }
    if cluster.component_count_base == 0 {
        out.push(Violation::cluster(id, None, "component_count_base must be positive".into()));
    }
    let mu = &cluster.service_rates;
    let eps = &cluster.energy_rates;
    if mu.len() != c + 1 {
        out.push(Violation::cluster(
            id,
            None,
            format!("service_rates has length {} but capacity + 1 = {}", mu.len(), c + 1),
        ));
    }
    if eps.len() != c + 1 {
        out.push(Violation::cluster(
            id,
            None,
            format!("energy_rates has length {} but capacity + 1 = {}", eps.len(), c + 1),
        ));
    }
    for (name, rates) in [("service_rates", mu), ("energy_rates", eps)] {
        for (n, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                out.push(Violation::cluster(id, Some(n), format!("{name}[{n}] must be finite and non-negative")));
            }
        }
        for n in 1..rates.len() {
            if rates[n] < rates[n - 1] {
                out.push(Violation::cluster(id, Some(n), format!("{name} not non-decreasing at n={n}")));
            }
        }
    }
    if let Some(&mu0) = mu.first() {
        if mu0 != 0.0 {
            out.push(Violation::cluster(id, Some(0), "service_rates[0] must be 0".into()));
        }
    }
    for (n, &r) in mu.iter().enumerate().skip(1) {
        if r <= 0.0 {
            out.push(Violation::cluster(id, Some(n), format!("service_rates[{n}] must be positive")));
        }
    }
    if let Some(&eps0) = eps.first() {
        for (n, &r) in eps.iter().enumerate().skip(1) {
            if r <= eps0 {
                out.push(Violation::cluster(id, Some(n), format!("energy_rates[{n}] not > energy_rates[0]")));
            }
        }
    }
}

/// Outcome of the energy-efficient unimodality test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnimodalCheck {
    pub holds: bool,
    /// First pair `(n1, n2)`, `n1 < n2`, at which the defining inequality fails.
    pub violation: Option<(usize, usize)>,
}

/// Exhaustive O(C^2) evaluation of the energy-efficient unimodality inequality
/// over all `n1 < n2` in `0..C`:
///
/// `(mu(n2+1)-mu(n2)) (eps(n1+1) mu(n1) - eps(n1) mu(n1+1))
///   <= (mu(n1+1)-mu(n1)) (eps(n2+1) mu(n2) - eps(n2) mu(n2+1))`.
pub fn check_unimodal(cluster: &ClusterSpec) -> UnimodalCheck {
    let mu = &cluster.service_rates;
    let eps = &cluster.energy_rates;
    let cross = |n: usize| eps[n + 1] * mu[n] - eps[n] * mu[n + 1];
    // relative slack so that exact algebraic equality survives rounding
    let tol = 1e-12;
    for n1 in 0..cluster.capacity {
        let d1 = mu[n1 + 1] - mu[n1];
        let x1 = cross(n1);
        for n2 in (n1 + 1)..cluster.capacity {
            let lhs = (mu[n2 + 1] - mu[n2]) * x1;
            let rhs = d1 * cross(n2);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            if lhs > rhs + tol * scale {
                return UnimodalCheck {
                    holds: false,
                    violation: Some((n1, n2)),
                };
            }
        }
    }
    UnimodalCheck {
        holds: true,
        violation: None,
    }
}

/// Random Scenario-I instance: ten clusters of
/// capacity 5, one component per unit scale, `h = 10`, four classes.
///
/// Generator: ChaCha8 seeded with `seed`. Draw order is fixed: for each
/// cluster in id order, `mu(C) ~ U[10, 15]` then `mu(C)/eps(C) ~ U[0.5, 1]`;
/// then for each class in id order, `kappa ~ U{1..10}` followed by a
/// without-replacement sample of `kappa` cluster ids. Class rates are set so
/// that `lambda_l / sum_{j in J_l} mu_{i_j}(C) = rho`.
pub fn generate_scenario1(seed: u64, rho: f64) -> FarmInstance {
    const CLUSTERS: usize = 10;
    const CAPACITY: usize = 5;
    const CLASSES: usize = 4;
    const SCALING: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters = Vec::with_capacity(CLUSTERS);
    for id in 1..=CLUSTERS {
        let mu_peak: f64 = rng.random_range(10.0..=15.0);
        let peak_efficiency: f64 = rng.random_range(0.5..=1.0);
        let eps_peak = mu_peak / peak_efficiency;
        // (0.9 - 0.1 k) with k = id - 1 keeps eps(0) >= 0 for all ten clusters
        let eps_idle = 0.3 * eps_peak * (0.9 - 0.1 * (id - 1) as f64);
        let mut mu = vec![0.0; CAPACITY + 1];
        let mut eps = vec![0.0; CAPACITY + 1];
        mu[CAPACITY] = mu_peak;
        eps[CAPACITY] = eps_peak;
        eps[0] = eps_idle;
        for n in (1..CAPACITY).rev() {
            let frac = n as f64 / (n + 1) as f64;
            mu[n] = mu[n + 1] * frac;
            eps[n] = (eps[n + 1] - eps_idle) * frac.sqrt() + eps_idle;
        }
        clusters.push(ClusterSpec {
            id,
            capacity: CAPACITY,
            service_rates: mu,
            energy_rates: eps,
            component_count_base: 1,
        });
    }
    let mut classes = Vec::with_capacity(CLASSES);
    for id in 1..=CLASSES {
        let kappa = rng.random_range(1..=CLUSTERS);
        let mut eligible: Vec<usize> = sample(&mut rng, CLUSTERS, kappa).into_iter().map(|k| k + 1).collect();
        eligible.sort_unstable();
        let peak: f64 = eligible
            .iter()
            .map(|&i| clusters[i - 1].service_rates[CAPACITY] * clusters[i - 1].component_count_base as f64)
            .sum();
        classes.push(JobClassSpec {
            id,
            arrival_rate_base: rho * peak,
            eligible_clusters: eligible,
        });
    }
    FarmInstance {
        clusters,
        classes,
        scaling: SCALING,
    }
}

/// Normalized offered traffic `lambda_l / sum_{j in J_l} mu_{i_j}(C_{i_j})` of each class.
pub fn normalized_offered_traffic(instance: &FarmInstance) -> Vec<f64> {
    instance
        .classes
        .iter()
        .map(|class| {
            let peak: f64 = class
                .eligible_clusters
                .iter()
                .map(|&i| {
                    let c = instance.cluster(i);
                    c.service_rates[c.capacity] * instance.component_count(i) as f64
                })
                .sum();
            class.arrival_rate_base * instance.scaling as f64 / peak
        })
        .collect()
}

/// Peak service rate, idle power and peak-to-idle ratio of the ten Google-trace clusters.
/// Service rates are in units of 1e-10 jobs per second.
pub const APPENDIX_K_CLUSTERS: [(f64, f64, f64); 10] = [
    (2.425, 0.0655, 13.699),
    (1.620, 0.0333, 15.338),
    (1.758, 0.0315, 14.845),
    (1.600, 0.0189, 18.562),
    (1.728, 0.0116, 26.225),
    (1.668, 0.0069, 33.166),
    (2.390, 0.0055, 43.127),
    (2.116, 0.0026, 51.306),
    (2.416, 0.0011, 70.356),
    (2.224, 0.0, 97.625),
];

/// Eligible clusters of the four trace job classes.
pub const APPENDIX_K_CLASSES: [&[usize]; 4] = [&[1, 5, 6, 10], &[1, 2, 3, 4, 5, 7, 8, 9], &[1, 6, 7, 10], &[2]];

/// Base arrival rates used with the preset when no trace is supplied. The
/// trace itself is not published, so these are chosen to load the farm to
/// roughly 55% of its peak service rate on average.
pub const APPENDIX_K_BASE_RATES: [f64; 4] = [3.0, 4.0, 3.0, 1.0];

/// The ten-cluster Google-trace farm with capacity `capacity` per component
/// (the published experiments use 10) and `h = 1250`.
pub fn preset_appendix_k(capacity: usize) -> FarmInstance {
    let clusters = APPENDIX_K_CLUSTERS
        .iter()
        .enumerate()
        .map(|(k, &(mu_peak, eps_idle, ratio))| {
            let mut mu = vec![0.0; capacity + 1];
            let mut eps = vec![0.0; capacity + 1];
            mu[capacity] = mu_peak;
            eps[capacity] = eps_idle + mu_peak / ratio;
            eps[0] = eps_idle;
            for n in (1..capacity).rev() {
                let frac = n as f64 / (n + 1) as f64;
                mu[n] = frac * mu[n + 1];
                eps[n] = frac * (eps[n + 1] - eps_idle) + eps_idle;
            }
            ClusterSpec {
                id: k + 1,
                capacity,
                service_rates: mu,
                energy_rates: eps,
                component_count_base: 1,
            }
        })
        .collect();
    let classes = APPENDIX_K_CLASSES
        .iter()
        .zip(APPENDIX_K_BASE_RATES)
        .enumerate()
        .map(|(k, (eligible, rate))| JobClassSpec {
            id: k + 1,
            arrival_rate_base: rate,
            eligible_clusters: eligible.to_vec(),
        })
        .collect();
    FarmInstance {
        clusters,
        classes,
        scaling: 1250,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(mu: &[f64], eps: &[f64]) -> ClusterSpec {
        ClusterSpec {
            id: 1,
            capacity: mu.len() - 1,
            service_rates: mu.to_vec(),
            energy_rates: eps.to_vec(),
            component_count_base: 1,
        }
    }

    fn single(mu: &[f64], eps: &[f64]) -> FarmInstance {
        FarmInstance {
            clusters: vec![cluster(mu, eps)],
            classes: vec![JobClassSpec {
                id: 1,
                arrival_rate_base: 1.0,
                eligible_clusters: vec![1],
            }],
            scaling: 1,
        }
    }

    fn rules(v: &[Violation]) -> Vec<String> {
        v.iter().map(|v| v.rule.clone()).collect()
    }

    #[test]
    fn valid_cluster_has_no_violations() {
        assert!(validate_instance(&single(&[0.0, 1.0, 2.0], &[0.1, 0.5, 1.0])).is_empty());
    }

    #[test]
    fn decreasing_service_rate_is_reported() {
        let v = validate_instance(&single(&[0.0, 2.0, 1.0], &[0.1, 0.5, 1.0]));
        assert_eq!(rules(&v), vec!["service_rates not non-decreasing at n=2"]);
        assert_eq!(v[0].cluster, Some(1));
        assert_eq!(v[0].state, Some(2));
    }

    #[test]
    fn flat_idle_power_is_reported() {
        let v = validate_instance(&single(&[0.0, 1.0, 2.0], &[0.5, 0.5, 1.0]));
        assert_eq!(rules(&v), vec!["energy_rates[1] not > energy_rates[0]"]);
    }

    #[test]
    fn bad_class_references_are_reported() {
        let mut inst = single(&[0.0, 1.0], &[0.0, 1.0]);
        inst.classes[0].eligible_clusters = vec![3];
        let v = validate_instance(&inst);
        assert!(v.iter().any(|v| v.rule.contains("not declared")), "{v:?}");
        inst.classes[0].eligible_clusters.clear();
        assert!(validate_instance(&inst).iter().any(|v| v.rule.contains("empty")));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let mut inst = single(&[0.0, 1.0], &[0.0, 1.0]);
        inst.clusters[0].capacity = 2;
        assert!(validate_instance(&inst).iter().any(|v| v.rule.contains("length")));
    }

    #[test]
    fn constant_service_rate_is_unimodal_for_any_power() {
        for eps in [[0.0, 1.0, 5.0, 5.5], [0.3, 0.4, 0.9, 3.0], [0.0, 2.0, 2.0, 2.0]] {
            assert!(check_unimodal(&cluster(&[0.0, 1.0, 1.0, 1.0], &eps)).holds, "{eps:?}");
        }
    }

    #[test]
    fn linear_service_convex_power_is_unimodal() {
        let c = cluster(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 3.0, 6.0]);
        assert_eq!(check_unimodal(&c), UnimodalCheck { holds: true, violation: None });
    }

    #[test]
    fn linear_service_concave_start_fails_at_zero() {
        let c = cluster(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 3.0, 6.0]);
        let check = check_unimodal(&c);
        assert!(!check.holds);
        assert_eq!(check.violation, Some((0, 1)));
    }

    #[test]
    fn scenario1_is_deterministic_and_valid() {
        let a = generate_scenario1(7, 0.2);
        let b = generate_scenario1(7, 0.2);
        assert_eq!(a, b);
        assert_ne!(a, generate_scenario1(8, 0.2));
        assert!(validate_instance(&a).is_empty(), "{:?}", validate_instance(&a));
        for rho in normalized_offered_traffic(&a) {
            assert!((rho - 0.2).abs() < 1e-12);
        }
        assert_eq!(a.total_components(), 100);
    }

    #[test]
    fn scenario1_idle_power_follows_cluster_position() {
        let inst = generate_scenario1(3, 0.5);
        for c in &inst.clusters {
            let expected = 0.3 * c.energy_rates[5] * (0.9 - 0.1 * (c.id - 1) as f64);
            assert!((c.energy_rates[0] - expected).abs() < 1e-12);
        }
        assert_eq!(inst.clusters[9].energy_rates[0], 0.0);
    }

    #[test]
    fn appendix_k_matches_published_values() {
        let inst = preset_appendix_k(10);
        assert!(validate_instance(&inst).is_empty());
        let c10 = inst.cluster(10);
        assert_eq!(c10.energy_rates[0], 0.0);
        assert!((c10.peak_ratio() - 97.625).abs() < 1e-9);
        let c4 = inst.cluster(4);
        assert_eq!(c4.service_rates[10], 1.600);
        assert_eq!(c4.energy_rates[0], 0.0189);
        let c1 = inst.cluster(1);
        assert!((c1.peak_ratio() - 13.699).abs() < 1e-9);
        assert_eq!(inst.scaling, 1250);
        assert_eq!(inst.total_components(), 12_500);
        assert_eq!(inst.class(2).eligible_clusters, vec![1, 2, 3, 4, 5, 7, 8, 9]);
        // interior states are linear in n
        assert!((c1.service_rates[5] - 2.425 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn topology_labels_clusters_contiguously() {
        let mut inst = generate_scenario1(1, 0.2);
        inst.clusters[1].component_count_base = 3;
        let topo = inst.topology();
        assert_eq!(topo.cluster_ranges[0], 0..10);
        assert_eq!(topo.cluster_ranges[1], 10..40);
        assert_eq!(topo.total_components(), inst.total_components());
        assert_eq!(topo.component_cluster[15], 2);
        for (l, labels) in topo.class_components.iter().enumerate() {
            let expected: usize = inst.classes[l].eligible_clusters.iter().map(|&i| inst.component_count(i)).sum();
            assert_eq!(labels.len(), expected);
            assert!(labels.windows(2).all(|w| w[0] < w[1]));
        }
        let j = topo.total_components();
        assert_eq!(ComponentRef::Virtual { class: 2 }.global_id(j), j + 1);
    }

    #[test]
    fn toml_roundtrip_preserves_instance() {
        let inst = preset_appendix_k(4);
        let back = FarmInstance::from_toml_str(&inst.to_toml_string()).unwrap();
        assert_eq!(inst, back);
    }
}
