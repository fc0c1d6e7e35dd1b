#![allow(dead_code)]

use grf_active::graph::{build_laplacian, LaplacianMode};
use grf_active::{Laplacian, WeightedGraph};
use proptest::prelude::*;

/// Connected graph: a random spanning tree plus extra edges with density `p`.
pub fn connected_graph(n_min: usize, n_max: usize, p: f64) -> impl Strategy<Value = WeightedGraph> {
    (n_min..=n_max).prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(any::<prop::sample::Index>(), n.saturating_sub(1)),
            proptest::collection::vec(0.0..1.0f64, pairs),
            proptest::collection::vec(0.1..2.0f64, pairs),
        )
            .prop_map(move |(parents, coins, weights)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for j in 1..n {
                    let parent = parents[j - 1].index(j);
                    for i in 0..j {
                        if i == parent || coins[k] < p {
                            edges.push((i, j, weights[k]));
                        }
                        k += 1;
                    }
                }
                WeightedGraph::new(n, edges).expect("valid edges")
            })
    })
}

/// Any simple graph, possibly disconnected, with isolated nodes allowed.
pub fn any_graph(n_max: usize) -> impl Strategy<Value = WeightedGraph> {
    (1..=n_max).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(0.0..1.0f64, pairs),
            proptest::collection::vec(0.1..2.0f64, pairs),
        )
            .prop_map(move |(coins, weights)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for j in 1..n {
                    for i in 0..j {
                        if coins[k] < 0.15 {
                            edges.push((i, j, weights[k]));
                        }
                        k += 1;
                    }
                }
                WeightedGraph::new(n, edges).expect("valid edges")
            })
    })
}

pub fn regularized(g: &WeightedGraph, sigma: f64) -> Laplacian {
    build_laplacian(g, &LaplacianMode::uniform(g.node_count(), sigma)).expect("regularized Laplacian")
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn assert_close(a: f64, b: f64, rtol: f64) {
    assert!(
        relative_gap(a, b) <= rtol,
        "{a} vs {b} (relative gap {})",
        relative_gap(a, b)
    );
}
