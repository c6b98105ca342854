//! Shared helpers for integration tests: an exponential-time Shapley oracle
//! and random tree builders.
#![allow(dead_code)]

use dashlab::boost::{Node, Tree};
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut Xoshiro256PlusPlus, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Interventional Shapley values by enumerating all `2^p` coalitions:
/// `v(S) = mean_z f(x_S, z_rest)`.
pub fn brute_force_shapley(f: &dyn Fn(&[f64]) -> f64, x: ArrayView1<f64>, background: ArrayView2<f64>) -> Vec<f64> {
    let p = x.len();
    assert!(p <= 16, "oracle is exponential in the number of features");
    let n_sets = 1usize << p;
    let mut value = vec![0.0; n_sets];
    let mut buf = vec![0.0; p];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for z in background.rows() {
            for j in 0..p {
                buf[j] = if mask & (1 << j) != 0 { x[j] } else { z[j] };
            }
            total += f(&buf);
        }
        *v = total / background.nrows() as f64;
    }
    let fact: Vec<f64> = (0..=p).scan(1.0, |acc, i| {
        let out = *acc;
        *acc *= (i + 1) as f64;
        Some(out)
    }).collect();
    let mut phi = vec![0.0; p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        for mask in 0..n_sets {
            if mask & (1 << j) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[p - s - 1] / fact[p];
            *phi_j += w * (value[mask | (1 << j)] - value[mask]);
        }
    }
    phi
}

/// Random binary tree of at most `depth` levels over `p` features. Features
/// may repeat along a path, which exercises the pinned-feature bookkeeping.
pub fn random_tree(rng: &mut Xoshiro256PlusPlus, p: usize, depth: usize) -> Tree {
    let mut nodes = Vec::new();
    grow(rng, p, depth, &mut nodes);
    Tree { nodes }
}

fn grow(rng: &mut Xoshiro256PlusPlus, p: usize, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let idx = nodes.len();
    if depth == 0 || (idx > 0 && rng.random_bool(0.2)) {
        nodes.push(Node::Leaf {
            value: rng.sample::<f64, _>(StandardNormal) * 3.0,
            cover: 1,
        });
        return idx;
    }
    nodes.push(Node::Leaf { value: 0.0, cover: 0 });
    let feature = rng.random_range(0..p);
    let threshold = rng.sample::<f64, _>(StandardNormal) * 0.8;
    let left = grow(rng, p, depth - 1, nodes);
    let right = grow(rng, p, depth - 1, nodes);
    nodes[idx] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    idx
}
