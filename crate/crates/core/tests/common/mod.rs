#![allow(dead_code)]

use powerfarm::model::{ClusterSpec, FarmInstance, JobClassSpec};
use proptest::prelude::*;

/// Random valid cluster: non-decreasing rates, `mu(0) = 0`.
pub fn cluster_strategy(max_capacity: usize) -> impl Strategy<Value = ClusterSpec> {
    (1..=max_capacity).prop_flat_map(|c| {
        (
            prop::collection::vec(0.05f64..2.0, c),
            prop::collection::vec(0.0f64..1.5, c),
            0.0f64..1.0,
        )
            .prop_map(move |(dmu, deps, eps0)| {
                let mut mu = vec![0.0];
                let mut eps = vec![eps0];
                for k in 0..c {
                    mu.push(mu[k] + dmu[k]);
                    eps.push(eps[k] + deps[k]);
                }
                ClusterSpec {
                    id: 1,
                    capacity: c,
                    service_rates: mu,
                    energy_rates: eps,
                    component_count_base: 1,
                }
            })
    })
}

pub fn single_cluster_instance(cluster: ClusterSpec, lambda: f64, scaling: usize) -> FarmInstance {
    FarmInstance {
        clusters: vec![cluster],
        classes: vec![JobClassSpec {
            id: 1,
            arrival_rate_base: lambda,
            eligible_clusters: vec![1],
        }],
        scaling,
    }
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Stationary law of a generator matrix `q` by replacing one balance equation with normalisation.
pub fn stationary_dense(q: &[Vec<f64>]) -> Vec<f64> {
    let n = q.len();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| q[j][i]).collect()).collect();
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    solve_dense(a, b)
}
