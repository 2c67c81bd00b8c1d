#![allow(dead_code)]

use proptest::prelude::*;

use fdivkit_core::{CostMatrix, DiscreteExperiment, Quantizer};

/// Normalize nonnegative weights; an all-zero draw becomes a vertex.
pub fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        w[0] = 1.0;
        return w;
    }
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Points of Δ_k, sometimes with zero coordinates.
pub fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.01f64..1.0], k).prop_map(normalize)
}

pub fn positive_simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(normalize)
}

pub fn experiment(k: usize, m: usize) -> impl Strategy<Value = DiscreteExperiment> {
    (positive_simplex(k), prop::collection::vec(simplex(m), k))
        .prop_map(|(prior, conds)| DiscreteExperiment::new(prior, conds).unwrap())
}

pub fn any_experiment() -> impl Strategy<Value = DiscreteExperiment> {
    (2usize..=4, 1usize..=6).prop_flat_map(|(k, m)| experiment(k, m))
}

pub fn quantizer(m: usize) -> impl Strategy<Value = Quantizer> {
    prop::collection::vec(0..m, m).prop_map(|a| Quantizer::from_assignment(a).unwrap())
}

pub fn cost(k: usize) -> impl Strategy<Value = CostMatrix> {
    prop::collection::vec(0.1f64..2.0, k * k).prop_map(move |v| {
        CostMatrix::new((0..k).map(|y| (0..k).map(|i| if i == y { 0.0 } else { v[y * k + i] }).collect()).collect())
            .unwrap()
    })
}

pub fn vector(k: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, k)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
