#![allow(dead_code)]

use std::path::PathBuf;

use mnum_core::choice::ChoiceModel;
use mnum_core::io::load_network;
use mnum_core::{Instance, Network};
use rand::Rng;

pub const SHIPPED: [&str; 7] = [
    "symmetric",
    "braess",
    "grid3x3",
    "two_source",
    "chain",
    "mixed",
    "wardrop2",
];

pub fn network_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("networks")
        .join(format!("{name}.json"))
}

pub fn load(name: &str) -> (Network, ChoiceModel) {
    let (net, choice) = load_network(network_path(name)).unwrap();
    (net, choice.unwrap_or(ChoiceModel::Logit { beta: 1.0 }))
}

pub fn instance(name: &str) -> Instance {
    let (net, choice) = load(name);
    Instance::new(net, choice).unwrap()
}

/// Shipped networks with a Logit choice model.
pub fn logit_instances() -> Vec<(&'static str, Instance)> {
    SHIPPED
        .iter()
        .map(|&n| (n, instance(n)))
        .filter(|(_, i)| matches!(i.choice(), ChoiceModel::Logit { .. }))
        .collect()
}

/// Point with every link strictly above its free-flow delay.
pub fn interior_point<R: Rng>(inst: &Instance, rng: &mut R) -> Vec<f64> {
    inst.lower_bound()
        .iter()
        .map(|&l| l + rng.random_range(0.05..1.5))
        .collect()
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
    let h = 1e-5 * x[i].abs().max(1.0);
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Every origin-destination path made of the given arcs, by depth-first search.
pub fn enumerate_paths(
    net: &Network,
    allowed: &[bool],
    origin: usize,
    dest: usize,
) -> Vec<Vec<usize>> {
    fn go(
        net: &Network,
        allowed: &[bool],
        at: usize,
        dest: usize,
        seen: &mut Vec<bool>,
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == dest {
            out.push(stack.clone());
            return;
        }
        for (a, arc) in net.arcs().iter().enumerate() {
            if arc.tail != at || !allowed[a] || seen[arc.head] {
                continue;
            }
            seen[arc.head] = true;
            stack.push(a);
            go(net, allowed, arc.head, dest, seen, stack, out);
            stack.pop();
            seen[arc.head] = false;
        }
    }
    let mut seen = vec![false; net.node_count()];
    seen[origin] = true;
    let mut out = Vec::new();
    go(
        net,
        allowed,
        origin,
        dest,
        &mut seen,
        &mut Vec::new(),
        &mut out,
    );
    out
}

/// Logit route flows spread over arcs, computed from explicit path enumeration.
pub fn path_logit_flows(
    net: &Network,
    paths: &[Vec<usize>],
    lambda: &[f64],
    beta: f64,
    x: f64,
) -> Vec<f64> {
    let costs: Vec<f64> = paths
        .iter()
        .map(|p| p.iter().map(|&a| lambda[a]).sum())
        .collect();
    let m = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = costs.iter().map(|c| (-beta * (c - m)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut flows = vec![0.0; net.arc_count()];
    for (p, w) in paths.iter().zip(&weights) {
        for &a in p {
            flows[a] += x * w / total;
        }
    }
    flows
}

/// Root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
