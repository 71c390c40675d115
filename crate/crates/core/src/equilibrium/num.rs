//! Rate control with one fixed route per source.
//!
//! Minimizes `Σ_a ∫_0^{p_a} ψ_a⁻¹ − Σ_k F_k(Σ_{b∈k} p_b)` over queueing delays `p ≥ 0`.
//! It is solved in total-delay coordinates `λ = λ⁰ + p` so that it shares the descent
//! machinery with the multipath problem.

use crate::error::{Error, Result};
use crate::network::Network;
use crate::routing::free_flow_distances;

use super::descent::{descend, Point};
use super::{SolverOptions, Q_FLOOR};

#[derive(Debug, Clone)]
pub struct NumSolution {
    /// Queueing delay per arc.
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
    /// Queueing delay along each route.
    pub q: Vec<f64>,
    pub routes: Vec<Vec<usize>>,
    pub objective: f64,
    /// `max_a |ψ_a⁻¹(p_a) − Σ_{k∋a} f_k(q_k)|`.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Route of each source: the declared one, else a free-flow shortest path.
pub fn default_routes(net: &Network) -> Result<Vec<Vec<usize>>> {
    let lambda0 = net.free_flow_delays();
    (0..net.sources().len())
        .map(|k| {
            let src = net.source(k);
            if let Some(r) = &src.route {
                return Ok(r.clone());
            }
            let dist = free_flow_distances(net, &lambda0, k)?;
            let mut route = Vec::new();
            let mut at = src.origin;
            while at != src.destination {
                let next = net
                    .out_star(at)
                    .iter()
                    .copied()
                    .filter(|&a| dist[net.arc(a).head].is_finite())
                    .min_by(|&a, &b| {
                        let ca = lambda0[a] + dist[net.arc(a).head];
                        let cb = lambda0[b] + dist[net.arc(b).head];
                        ca.total_cmp(&cb)
                    })
                    .ok_or_else(|| Error::Structural("no route to destination".into()))?;
                route.push(next);
                at = net.arc(next).head;
            }
            Ok(route)
        })
        .collect()
}

pub fn solve_num_singlepath(
    net: &Network,
    routes: &[Vec<usize>],
    opts: &SolverOptions,
) -> Result<NumSolution> {
    if routes.len() != net.sources().len() {
        return Err(Error::InvalidInput("one route per source required".into()));
    }
    let checked = net.with_sources(
        net.sources()
            .iter()
            .zip(routes)
            .map(|(s, r)| {
                let mut s = s.clone();
                s.route = Some(r.clone());
                s
            })
            .collect(),
    )?;
    let net = &checked;
    let lower = net.free_flow_delays();

    let route_delays = |lambda: &[f64]| -> Vec<f64> {
        routes
            .iter()
            .map(|r| r.iter().map(|&a| lambda[a] - lower[a]).sum())
            .collect()
    };
    let eval = |lambda: &[f64]| -> Result<Point> {
        let q = route_delays(lambda);
        if q.iter().any(|&qk| qk < Q_FLOOR) {
            return Ok(Point {
                value: f64::INFINITY,
                gradient: vec![f64::NAN; lambda.len()],
            });
        }
        let mut value = 0.0;
        let mut gradient = Vec::with_capacity(lambda.len());
        for (arc, &l) in net.arcs().iter().zip(lambda) {
            value += arc.latency.latency_inverse_integral(l)?;
            gradient.push(arc.latency.latency_inverse(l)?);
        }
        for ((src, route), &qk) in net.sources().iter().zip(routes).zip(&q) {
            value -= src.rate.rate_primitive(qk)?;
            let x = src.rate.rate(qk)?;
            for &a in route {
                gradient[a] -= x;
            }
        }
        Ok(Point { value, gradient })
    };

    let start = match &opts.start {
        Some(s) => s.clone(),
        None if net.sources().is_empty() => lower.clone(),
        None => net
            .arcs()
            .iter()
            .map(|a| a.latency.latency_clamped(0.5 * a.latency.capacity()))
            .collect(),
    };
    let out = descend(eval, &lower, start, opts.step, opts.tol, opts.max_iter)?;
    let q = route_delays(&out.lambda);
    let x = net
        .sources()
        .iter()
        .zip(&q)
        .map(|(s, &qk)| s.rate.rate(qk))
        .collect::<Result<Vec<_>>>()?;
    let mut loads = vec![0.0; net.arc_count()];
    for (route, &xk) in routes.iter().zip(&x) {
        for &a in route {
            loads[a] += xk;
        }
    }
    let kkt_residual = net
        .arcs()
        .iter()
        .zip(&out.lambda)
        .zip(&loads)
        .map(|((arc, &l), &w)| Ok((arc.latency.latency_inverse(l)? - w).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(NumSolution {
        p: out
            .lambda
            .iter()
            .zip(&lower)
            .map(|(l, lo)| l - lo)
            .collect(),
        lambda: out.lambda,
        x,
        q,
        routes: routes.to_vec(),
        objective: out.value,
        kkt_residual,
        iterations: out.iterations,
    })
}
