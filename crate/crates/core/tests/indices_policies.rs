mod common;

use common::{cluster_strategy, single_cluster_instance};
use powerfarm::indices::{f_value, fluid_fit, solve_e0, solve_indices, FluidOptions};
use powerfarm::markov::Scaling;
use powerfarm::model::{generate_scenario1, FarmInstance};
use powerfarm::policies::{default_pas_priorities, DispatchDecision, Dispatcher, Policy, TieBreak};
use powerfarm::verify::random_tiny_instance;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest |slope| of `f` over a symmetric grid around `x`.
fn grid_lipschitz(f: impl Fn(f64) -> f64, x: f64, half: f64) -> f64 {
    let pts: Vec<f64> = (0..=40).map(|k| x - half + 2.0 * half * k as f64 / 40.0).collect();
    pts.windows(2)
        .map(|w| ((f(w[1]) - f(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solved_zero_within_lipschitz_times_precision(
        c in cluster_strategy(4),
        lambda in 0.3f64..3.0,
        e in 0.0f64..1.5,
        h in 1usize..30,
    ) {
        let epsilon = 1e-9;
        let inst = single_cluster_instance(c.clone(), lambda, h);
        let scaling = Scaling::from_h(h);
        let table = solve_indices(&inst, e, scaling, epsilon).unwrap();
        for n in 0..c.capacity {
            let eta = table.eta0[0][n];
            let f = |x: f64| f_value(&inst, 1, n, x, e, scaling).unwrap();
            let lip = grid_lipschitz(f, eta, 1e-3 * eta.abs().max(lambda));
            prop_assert!(f(eta).abs() <= lip * epsilon + 1e-13, "state {n}: f = {:e}, L = {lip:e}", f(eta));
            let ahead = eta + 1e-3 * eta.abs().max(lambda);
            prop_assert!(f(ahead) > f(eta - 1e-3 * eta.abs().max(lambda)));
        }
    }
}

#[test]
fn indices_are_class_proportional() {
    for seed in 0..20 {
        let inst = generate_scenario1(seed, 0.3);
        let table = solve_indices(&inst, 0.4, Scaling::from_h(inst.scaling), 1e-12).unwrap();
        for cluster in &inst.clusters {
            let classes = inst.classes_for_cluster(cluster.id);
            let Some((&first, rest)) = classes.split_first() else { continue };
            let base = inst.class(first).arrival_rate_base;
            for &l in rest {
                let lam = inst.class(l).arrival_rate_base;
                for n in 0..cluster.capacity {
                    let a = table.index(first, cluster.id, n) / base;
                    let b = table.index(l, cluster.id, n) / lam;
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "seed {seed} cluster {} n {n}", cluster.id);
                }
            }
        }
    }
}

#[test]
fn gamma_non_increasing_and_small_at_estimate() {
    let options = FluidOptions::default();
    for seed in 0..5 {
        let inst = generate_scenario1(seed, 0.5);
        let est = solve_e0(&inst, options).unwrap();
        let grid: Vec<f64> = (0..=30).map(|k| est.bracket.1 * k as f64 / 30.0).collect();
        let gammas: Vec<f64> = grid.iter().map(|&e| fluid_fit(&inst, e, options).unwrap().gamma).collect();
        for w in gammas.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "seed {seed}: {gammas:?}");
        }
        let lip = grid
            .windows(2)
            .zip(gammas.windows(2))
            .map(|(e, g)| ((g[1] - g[0]) / (e[1] - e[0])).abs())
            .fold(0.0, f64::max);
        assert!(est.gamma.abs() <= lip * (options.epsilon * est.bracket.1.max(1.0)) + 1e-9, "seed {seed}: {est:?}");
    }
}

fn tiny_policies(inst: &FarmInstance) -> Vec<Policy> {
    vec![Policy::mpmp_auto(inst).unwrap(), Policy::Jsq, Policy::Pas(default_pas_priorities(inst))]
}

fn random_occupancy(inst: &FarmInstance, rng: &mut impl Rng) -> Vec<usize> {
    let topo = inst.topology();
    (0..topo.total_components())
        .map(|j| rng.random_range(0..=topo.component_capacity[j]))
        .collect()
}

#[test]
fn dispatch_respects_capacity_and_admission() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..60 {
        let inst = random_tiny_instance(&mut rng).with_scaling(rng.random_range(1..=3));
        let topo = inst.topology();
        for policy in tiny_policies(&inst) {
            for tb in [TieBreak::Lltb, TieBreak::Sqtb] {
                for _ in 0..50 {
                    let occ = random_occupancy(&inst, &mut rng);
                    for class in 1..=inst.num_classes() {
                        let comps = &topo.class_components[class - 1];
                        let free = comps.iter().any(|&j| occ[j] < topo.component_capacity[j]);
                        match policy.dispatch(&topo, &occ, class, tb) {
                            DispatchDecision::Component(j) => {
                                assert!(comps.contains(&j));
                                assert!(occ[j] < topo.component_capacity[j]);
                            }
                            DispatchDecision::Reject { class: c } => {
                                assert_eq!(c, class);
                                assert!(!free, "rejected with a free eligible slot");
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn mpmp_ignores_ineligible_components_and_index_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let inst = random_tiny_instance(&mut rng).with_scaling(2);
        let topo = inst.topology();
        let Policy::Mpmp(table) = Policy::mpmp_auto(&inst).unwrap() else { unreachable!() };
        let mut scaled = table.clone();
        let factor = rng.random_range(0.01..100.0);
        for row in scaled.u.iter_mut().flatten().flatten() {
            *row *= factor;
        }
        let (a, b) = (Policy::Mpmp(table), Policy::Mpmp(scaled));
        for _ in 0..50 {
            let occ = random_occupancy(&inst, &mut rng);
            for class in 1..=inst.num_classes() {
                for tb in [TieBreak::Lltb, TieBreak::Sqtb] {
                    let d = a.dispatch(&topo, &occ, class, tb);
                    assert_eq!(d, b.dispatch(&topo, &occ, class, tb));
                    let mut other = occ.clone();
                    for j in 0..other.len() {
                        if !topo.class_components[class - 1].contains(&j) {
                            other[j] = rng.random_range(0..=topo.component_capacity[j]);
                        }
                    }
                    assert_eq!(d, a.dispatch(&topo, &other, class, tb));
                }
            }
        }
    }
}

#[test]
fn dispatcher_agrees_with_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..30 {
        let inst = if k % 3 == 0 {
            generate_scenario1(k, 0.4).with_scaling(2)
        } else {
            random_tiny_instance(&mut rng).with_scaling(rng.random_range(1..=4))
        };
        let topo = inst.topology();
        for policy in tiny_policies(&inst) {
            for tb in [TieBreak::Lltb, TieBreak::Sqtb] {
                let mut d = Dispatcher::new(&inst, &topo, &policy, tb);
                for _ in 0..400 {
                    let class = rng.random_range(1..=inst.num_classes());
                    let fast = d.select(class);
                    assert_eq!(fast, policy.dispatch(&topo, d.occupancy(), class, tb), "{} {tb}", policy.name());
                    if rng.random_bool(0.6) {
                        if let DispatchDecision::Component(j) = fast {
                            d.admit(j);
                        }
                    } else {
                        let busy: Vec<usize> = (0..topo.total_components()).filter(|&j| d.occupancy()[j] > 0).collect();
                        if !busy.is_empty() {
                            d.release(busy[rng.random_range(0..busy.len())]);
                        }
                    }
                }
            }
        }
    }
}
