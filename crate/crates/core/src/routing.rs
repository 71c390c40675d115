//! Per-source dynamic programming, routing supports and Markov-chain flow loading.
//!
//! For a fixed delay vector `λ`, each source `k` solves `τ_i = φ_i((λ_a + τ_{j_a})_a)`
//! over its support, which gives the expected delay-to-destination at every node. The
//! choice probabilities at `z_a = λ_a + τ_{j_a}` define an absorbing Markov chain whose
//! expected visit counts, scaled by the source rate, are the node throughputs `φ` and
//! the arc flows `v`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};

use crate::choice::ChoiceModel;
use crate::error::{Error, Result};
use crate::network::Network;

/// Spectral radius bound required of `P̂` when supports may contain cycles.
pub const SPECTRAL_MARGIN: f64 = 1e-8;

/// How the per-source arc subsets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportMode {
    /// Keep only arcs that strictly decrease the free-flow distance to the destination.
    #[default]
    Acyclic,
    /// Keep every arc whose head can reach the destination. Cycles are allowed and each
    /// routing solve certifies that the chain is absorbing. Experimental.
    FullGraph,
}

/// Per-source arc subset `A^k` with its restricted out-stars.
#[derive(Debug, Clone)]
pub struct SupportDag {
    pub source: usize,
    pub origin: usize,
    pub destination: usize,
    pub in_support: Vec<bool>,
    pub out_star: Vec<Vec<usize>>,
    /// Free-flow distances `τ̄(λ⁰)`; `+∞` where the destination is unreachable.
    pub free_flow: Vec<f64>,
    /// Nodes that can reach the destination, by increasing free-flow distance.
    pub order: Vec<usize>,
    pub acyclic: bool,
}

impl SupportDag {
    /// Non-absorbing nodes that take part in the chain.
    pub fn transient_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.order
            .iter()
            .copied()
            .filter(move |&i| i != self.destination)
    }

    pub fn arc_count(&self) -> usize {
        self.in_support.iter().filter(|&&b| b).count()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra towards `dest` over the arcs accepted by `keep`.
fn distances_to(
    net: &Network,
    lambda: &[f64],
    dest: usize,
    keep: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; net.node_count()];
    let mut heap = BinaryHeap::new();
    dist[dest] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: dest,
    });
    while let Some(HeapEntry { dist: d, node: j }) = heap.pop() {
        if d > dist[j] {
            continue;
        }
        for &a in net.in_star(j) {
            if !keep(a) {
                continue;
            }
            let i = net.arc(a).tail;
            let cand = lambda[a] + d;
            if cand < dist[i] {
                dist[i] = cand;
                heap.push(HeapEntry {
                    dist: cand,
                    node: i,
                });
            }
        }
    }
    dist
}

fn check_lambda(net: &Network, lambda: &[f64]) -> Result<()> {
    if lambda.len() != net.arc_count() {
        return Err(Error::InvalidInput(format!(
            "delay vector has {} entries for {} arcs",
            lambda.len(),
            net.arc_count()
        )));
    }
    if let Some(&bad) = lambda.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::domain(
            "link delay",
            bad,
            "must be finite and nonnegative",
        ));
    }
    Ok(())
}

/// Shortest-path distance from every node to the destination of source `k`, arc costs `λ`.
pub fn free_flow_distances(net: &Network, lambda: &[f64], k: usize) -> Result<Vec<f64>> {
    check_lambda(net, lambda)?;
    let src = net.source(k);
    let dist = distances_to(net, lambda, src.destination, |_| true);
    if !dist[src.origin].is_finite() {
        return Err(Error::Structural(format!(
            "origin of source `{}` cannot reach its destination",
            src.id
        )));
    }
    Ok(dist)
}

/// Builds the routing support of source `k` from the free-flow distances `τ̄(λ⁰)`.
pub fn build_supports(net: &Network, k: usize, mode: SupportMode) -> Result<SupportDag> {
    let src = net.source(k);
    let free_flow = free_flow_distances(net, &net.free_flow_delays(), k)?;
    let in_support: Vec<bool> = net
        .arcs()
        .iter()
        .map(|arc| {
            let (ti, tj) = (free_flow[arc.tail], free_flow[arc.head]);
            match mode {
                SupportMode::Acyclic => tj.is_finite() && tj < ti,
                SupportMode::FullGraph => tj.is_finite() && arc.tail != src.destination,
            }
        })
        .collect();
    let mut out_star = vec![Vec::new(); net.node_count()];
    for (a, arc) in net.arcs().iter().enumerate() {
        if in_support[a] {
            out_star[arc.tail].push(a);
        }
    }
    let mut order: Vec<usize> = (0..net.node_count())
        .filter(|&i| free_flow[i].is_finite())
        .collect();
    order.sort_by(|&a, &b| free_flow[a].total_cmp(&free_flow[b]).then(a.cmp(&b)));
    for &i in &order {
        if i != src.destination && out_star[i].is_empty() {
            return Err(Error::Structural(format!(
                "node `{}` has an empty restricted out-star for source `{}`",
                net.node_ids()[i],
                src.id
            )));
        }
    }
    Ok(SupportDag {
        source: k,
        origin: src.origin,
        destination: src.destination,
        in_support,
        out_star,
        free_flow,
        order,
        acyclic: mode == SupportMode::Acyclic,
    })
}

/// Shortest distances to the destination using only support arcs.
pub fn support_distances(net: &Network, dag: &SupportDag, lambda: &[f64]) -> Vec<f64> {
    if dag.acyclic {
        sweep(net, dag, lambda, |z| {
            z.iter().copied().fold(f64::INFINITY, f64::min)
        })
    } else {
        distances_to(net, lambda, dag.destination, |a| dag.in_support[a])
    }
}

/// One pass in increasing free-flow order, exact on acyclic supports.
fn sweep(net: &Network, dag: &SupportDag, lambda: &[f64], phi: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut tau = vec![f64::INFINITY; net.node_count()];
    tau[dag.destination] = 0.0;
    let mut z = Vec::new();
    for i in dag.transient_nodes() {
        z.clear();
        z.extend(
            dag.out_star[i]
                .iter()
                .map(|&a| lambda[a] + tau[net.arc(a).head]),
        );
        tau[i] = phi(&z);
    }
    tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauMethod {
    /// Single pass in topological order; requires an acyclic support.
    #[default]
    Sweep,
    /// Jacobi value iteration started from the support shortest-path distances.
    ValueIteration,
}

#[derive(Debug, Clone, Copy)]
pub struct TauOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: TauMethod,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            method: TauMethod::Sweep,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TauSolution {
    /// Expected delay to destination per node; `+∞` off the support.
    pub tau: Vec<f64>,
    /// Arc labels `λ_a + τ_{j_a}` for every arc.
    pub z: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
    /// Largest componentwise increase between consecutive iterates.
    pub max_increase: f64,
    /// Sup-norm change per sweep (value iteration only).
    pub history: Vec<f64>,
}

/// Solves the expected-delay fixed point of source `dag.source` at delays `λ`.
pub fn solve_tau(
    net: &Network,
    choice: &ChoiceModel,
    dag: &SupportDag,
    lambda: &[f64],
    opts: &TauOptions,
) -> Result<TauSolution> {
    check_lambda(net, lambda)?;
    let method = if dag.acyclic {
        opts.method
    } else {
        TauMethod::ValueIteration
    };
    let (tau, sweeps, residual, max_increase, history) = match method {
        TauMethod::Sweep => {
            let tau = sweep(net, dag, lambda, |z| choice.value_unchecked(z));
            (tau, 1, 0.0, 0.0, Vec::new())
        }
        TauMethod::ValueIteration => {
            let mut tau = support_distances(net, dag, lambda);
            let mut next = tau.clone();
            let mut z = Vec::new();
            let mut max_increase = 0.0f64;
            let mut history = Vec::new();
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                let mut residual = 0.0f64;
                for i in dag.transient_nodes() {
                    z.clear();
                    z.extend(
                        dag.out_star[i]
                            .iter()
                            .map(|&a| lambda[a] + tau[net.arc(a).head]),
                    );
                    next[i] = choice.value_unchecked(&z);
                    residual = residual.max((next[i] - tau[i]).abs());
                    max_increase = max_increase.max(next[i] - tau[i]);
                }
                std::mem::swap(&mut tau, &mut next);
                history.push(residual);
                if residual < opts.tol {
                    break (tau, sweeps, residual, max_increase, history);
                }
                if sweeps >= opts.max_iter {
                    return Err(Error::Convergence {
                        iterations: sweeps,
                        residual,
                    });
                }
            }
        }
    };
    let z = net
        .arcs()
        .iter()
        .enumerate()
        .map(|(a, arc)| lambda[a] + tau[arc.head])
        .collect();
    Ok(TauSolution {
        tau,
        z,
        sweeps,
        residual,
        max_increase,
        history,
    })
}

/// Routing solution for one source: delays, transition structure and loaded flows.
#[derive(Debug, Clone)]
pub struct RoutingState {
    pub source: usize,
    pub tau: Vec<f64>,
    pub z: Vec<f64>,
    /// Node indices of the rows and columns of `p_hat` (transient nodes).
    pub states: Vec<usize>,
    /// Transitions among transient nodes.
    pub p_hat: DMatrix<f64>,
    /// Splitting probabilities, transient nodes × arcs.
    pub q_hat: DMatrix<f64>,
    pub rate: f64,
    /// Throughput per node; zero at the destination and off the support.
    pub phi: Vec<f64>,
    /// Flow per arc.
    pub v: Vec<f64>,
}

impl RoutingState {
    /// Assembles `P̂` and `Q̂` at the solved labels. Flows start at zero.
    pub fn new(
        net: &Network,
        choice: &ChoiceModel,
        dag: &SupportDag,
        solution: TauSolution,
    ) -> Result<Self> {
        let states: Vec<usize> = dag.transient_nodes().collect();
        let mut row_of = vec![usize::MAX; net.node_count()];
        for (r, &i) in states.iter().enumerate() {
            row_of[i] = r;
        }
        let n = states.len();
        let mut p_hat = DMatrix::zeros(n, n);
        let mut q_hat = DMatrix::zeros(n, net.arc_count());
        let mut z = Vec::new();
        let mut probs = Vec::new();
        for (r, &i) in states.iter().enumerate() {
            let star = &dag.out_star[i];
            z.clear();
            z.extend(star.iter().map(|&a| solution.z[a]));
            if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
                return Err(Error::domain(
                    "arc label",
                    *bad,
                    "labels on the support must be finite",
                ));
            }
            probs.resize(star.len(), 0.0);
            choice.gradient_into(&z, &mut probs);
            for (&a, &p) in star.iter().zip(&probs) {
                q_hat[(r, a)] = p;
                let j = net.arc(a).head;
                if j != dag.destination {
                    p_hat[(r, row_of[j])] += p;
                }
            }
        }
        let state = RoutingState {
            source: dag.source,
            tau: solution.tau,
            z: solution.z,
            states,
            p_hat,
            q_hat,
            rate: 0.0,
            phi: vec![0.0; net.node_count()],
            v: vec![0.0; net.arc_count()],
        };
        if !dag.acyclic {
            let rho = state.spectral_radius();
            if rho >= 1.0 - SPECTRAL_MARGIN {
                return Err(Error::domain(
                    "spectral radius",
                    rho,
                    "transition matrix is not absorbing; delays lie outside the admissible domain",
                ));
            }
        }
        Ok(state)
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.p_hat.is_empty() {
            return 0.0;
        }
        self.p_hat
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    }

    /// Solves `(I - P̂ᵀ) φ = δ x` and sets `v = Q̂ᵀ φ`.
    pub fn load_flows(&mut self, net: &Network, x: f64) -> Result<()> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::domain(
                "source rate",
                x,
                "must be finite and nonnegative",
            ));
        }
        let origin = net.source(self.source).origin;
        let n = self.states.len();
        let mut rhs = DVector::zeros(n);
        if let Some(r) = self.states.iter().position(|&i| i == origin) {
            rhs[r] = x;
        }
        let system = DMatrix::identity(n, n) - self.p_hat.transpose();
        let phi = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Structural("flow conservation system is singular".into()))?;
        let v = self.q_hat.tr_mul(&phi);
        let floor = -1e-12 * x.max(1.0);
        self.phi.iter_mut().for_each(|p| *p = 0.0);
        for (r, &i) in self.states.iter().enumerate() {
            let p = phi[r];
            if p < floor {
                return Err(Error::Structural(format!(
                    "negative throughput {p} at node {i}"
                )));
            }
            self.phi[i] = p.max(0.0);
        }
        for (a, out) in self.v.iter_mut().enumerate() {
            *out = v[a].max(0.0);
        }
        self.rate = x;
        Ok(())
    }

    /// Largest violation of `φ_i = x δ_i + Σ_{a ∈ A_i⁻} v_a` over transient nodes.
    pub fn conservation_residual(&self, net: &Network) -> f64 {
        let origin = net.source(self.source).origin;
        self.states
            .iter()
            .map(|&i| {
                let inflow: f64 = net.in_star(i).iter().map(|&a| self.v[a]).sum();
                let injected = if i == origin { self.rate } else { 0.0 };
                (self.phi[i] - injected - inflow).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves delays and transition structure for one source at `λ` (flows not yet loaded).
pub fn route_source(
    net: &Network,
    choice: &ChoiceModel,
    dag: &SupportDag,
    lambda: &[f64],
    opts: &TauOptions,
) -> Result<RoutingState> {
    let sol = solve_tau(net, choice, dag, lambda, opts)?;
    RoutingState::new(net, choice, dag, sol)
}

/// Route-based Logit assignment over all origin-destination paths of an acyclic support.
///
/// Independent of the Markov-chain loading: on acyclic supports the two must agree.
pub fn path_logit_oracle(
    net: &Network,
    dag: &SupportDag,
    lambda: &[f64],
    beta: f64,
    x: f64,
    max_paths: usize,
) -> Result<Vec<f64>> {
    check_lambda(net, lambda)?;
    if !dag.acyclic {
        return Err(Error::Structural(
            "path enumeration requires an acyclic support".into(),
        ));
    }
    struct Walk<'a> {
        net: &'a Network,
        dag: &'a SupportDag,
        lambda: &'a [f64],
        cap: usize,
        stack: Vec<usize>,
        paths: Vec<(Vec<usize>, f64)>,
    }

    impl Walk<'_> {
        fn visit(&mut self, node: usize, cost: f64) -> Result<()> {
            if node == self.dag.destination {
                if self.paths.len() >= self.cap {
                    return Err(Error::OracleUnavailable { cap: self.cap });
                }
                self.paths.push((self.stack.clone(), cost));
                return Ok(());
            }
            for &a in &self.dag.out_star[node] {
                self.stack.push(a);
                self.visit(self.net.arc(a).head, cost + self.lambda[a])?;
                self.stack.pop();
            }
            Ok(())
        }
    }

    let mut walk = Walk {
        net,
        dag,
        lambda,
        cap: max_paths,
        stack: Vec::new(),
        paths: Vec::new(),
    };
    walk.visit(dag.origin, 0.0)?;
    let paths = walk.paths;
    let best = paths.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = paths.iter().map(|p| (-beta * (p.1 - best)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut flows = vec![0.0; net.arc_count()];
    for ((path, _), w) in paths.iter().zip(&weights) {
        let h = x * w / total;
        for &a in path {
            flows[a] += h;
        }
    }
    Ok(flows)
}

/// Total expected link loads `w_a = Σ_k v_a^k`.
pub fn aggregate_link_loads(states: &[RoutingState], arc_count: usize) -> Vec<f64> {
    let mut w = vec![0.0; arc_count];
    for s in states {
        for (t, v) in w.iter_mut().zip(&s.v) {
            *t += v;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LatencyModel, NetworkBuilder, RateModel};

    fn vegas() -> RateModel {
        RateModel::vegas(1.0, 1.0)
    }

    fn chain() -> Network {
        NetworkBuilder::new()
            .nodes(["s", "m", "d"])
            .arc("a1", "s", "m", LatencyModel::mm1(2.0, 1.0))
            .arc("a2", "m", "d", LatencyModel::mm1(2.0, 2.0))
            .source("k", "s", "d", vegas())
            .build()
            .unwrap()
    }

    fn parallel(l1: f64, l2: f64) -> Network {
        NetworkBuilder::new()
            .nodes(["s", "d"])
            .arc("a1", "s", "d", LatencyModel::mm1(2.0, l1))
            .arc("a2", "s", "d", LatencyModel::mm1(2.0, l2))
            .source("k", "s", "d", vegas())
            .build()
            .unwrap()
    }

    fn triangle(detour: f64) -> Network {
        NetworkBuilder::new()
            .nodes(["s", "m", "d"])
            .arc("sm", "s", "m", LatencyModel::mm1(2.0, detour))
            .arc("md", "m", "d", LatencyModel::mm1(2.0, 1.0))
            .arc("sd", "s", "d", LatencyModel::mm1(2.0, 1.5))
            .arc("ds", "d", "s", LatencyModel::mm1(2.0, 1.0))
            .source("k", "s", "d", vegas())
            .build()
            .unwrap()
    }

    fn logit(beta: f64) -> ChoiceModel {
        ChoiceModel::Logit { beta }
    }

    #[test]
    fn distances_on_chain_and_parallel() {
        let net = chain();
        assert_eq!(
            free_flow_distances(&net, &[1.0, 2.0], 0).unwrap(),
            vec![3.0, 2.0, 0.0]
        );
        let net = parallel(1.0, 2.0);
        assert_eq!(free_flow_distances(&net, &[1.0, 2.0], 0).unwrap()[0], 1.0);
    }

    #[test]
    fn supports_of_small_graphs() {
        let dag = build_supports(&parallel(1.0, 1.0), 0, SupportMode::Acyclic).unwrap();
        assert_eq!(dag.in_support, vec![true, true]);

        // τ̄_m = 1 < τ̄_s = 1.5 always, so the detour stays in the support.
        for detour in [0.2, 3.0] {
            let net = triangle(detour);
            let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
            let keep_sm = dag.free_flow[1] < dag.free_flow[0];
            assert_eq!(dag.in_support[0], keep_sm);
            assert!(dag.in_support[1] && dag.in_support[2]);
            assert!(!dag.in_support[3], "reversed arc d→s must be excluded");
        }
    }

    #[test]
    fn tau_examples() {
        let net = chain();
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        for choice in [logit(1.0), ChoiceModel::DeterministicMin] {
            let sol = solve_tau(&net, &choice, &dag, &[1.0, 2.0], &TauOptions::default()).unwrap();
            assert_eq!(sol.tau, vec![3.0, 2.0, 0.0]);
        }
        let net = parallel(1.0, 1.0);
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let sol = solve_tau(&net, &logit(1.0), &dag, &[1.0, 1.0], &TauOptions::default()).unwrap();
        assert!((sol.tau[0] - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((sol.tau[0] - 0.306853).abs() < 1e-6);
    }

    #[test]
    fn deterministic_min_recovers_shortest_paths() {
        let net = triangle(0.2);
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let lambda = [0.4, 1.3, 1.5, 1.0];
        let sol = solve_tau(
            &net,
            &ChoiceModel::DeterministicMin,
            &dag,
            &lambda,
            &TauOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.tau, support_distances(&net, &dag, &lambda));
    }

    #[test]
    fn value_iteration_matches_sweep() {
        let net = triangle(0.2);
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let lambda = [0.4, 1.3, 1.5, 1.0];
        let exact = solve_tau(&net, &logit(2.0), &dag, &lambda, &TauOptions::default()).unwrap();
        let vi = solve_tau(
            &net,
            &logit(2.0),
            &dag,
            &lambda,
            &TauOptions {
                method: TauMethod::ValueIteration,
                ..TauOptions::default()
            },
        )
        .unwrap();
        assert!(vi.sweeps <= net.node_count());
        assert!(vi.max_increase <= 0.0);
        for (a, b) in exact.tau.iter().zip(&vi.tau) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loading_examples() {
        let net = parallel(1.0, 1.0);
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let mut st =
            route_source(&net, &logit(1.0), &dag, &[1.0, 1.0], &TauOptions::default()).unwrap();
        st.load_flows(&net, 2.0).unwrap();
        assert_eq!(st.v, vec![1.0, 1.0]);
        assert_eq!(st.phi[0], 2.0);

        let net = chain();
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let mut st =
            route_source(&net, &logit(1.0), &dag, &[1.0, 2.0], &TauOptions::default()).unwrap();
        st.load_flows(&net, 3.0).unwrap();
        assert_eq!(st.v, vec![3.0, 3.0]);
        assert_eq!(&st.phi[..2], &[3.0, 3.0]);
        assert!(st.conservation_residual(&net) < 1e-12);
        assert!(st.load_flows(&net, -1.0).is_err());
    }

    #[test]
    fn oracle_two_parallel_arcs() {
        let net = parallel(1.0, 2.0);
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let h = path_logit_oracle(&net, &dag, &[1.0, 2.0], 1.0, 1.0, 100).unwrap();
        let e1 = (-1f64).exp();
        let e2 = (-2f64).exp();
        assert!((h[0] - e1 / (e1 + e2)).abs() < 1e-15);
        assert!((h[0] - 0.731059).abs() < 1e-6);
        let mut st =
            route_source(&net, &logit(1.0), &dag, &[1.0, 2.0], &TauOptions::default()).unwrap();
        st.load_flows(&net, 1.0).unwrap();
        assert!((st.v[0] - h[0]).abs() < 1e-10 && (st.v[1] - h[1]).abs() < 1e-10);

        let sym = path_logit_oracle(&net, &dag, &[1.0, 1.0], 1.0, 2.0, 100).unwrap();
        assert_eq!(sym, vec![1.0, 1.0]);
        assert!(matches!(
            path_logit_oracle(&net, &dag, &[1.0, 1.0], 1.0, 2.0, 1),
            Err(Error::OracleUnavailable { cap: 1 })
        ));
    }

    #[test]
    fn aggregation_is_additive() {
        let net = parallel(1.0, 1.0);
        let dag = build_supports(&net, 0, SupportMode::Acyclic).unwrap();
        let mut st =
            route_source(&net, &logit(1.0), &dag, &[1.0, 1.3], &TauOptions::default()).unwrap();
        st.load_flows(&net, 1.5).unwrap();
        let one = aggregate_link_loads(std::slice::from_ref(&st), 2);
        assert_eq!(one, st.v);
        let two = aggregate_link_loads(&[st.clone(), st.clone()], 2);
        assert_eq!(two, vec![2.0 * one[0], 2.0 * one[1]]);
    }

    #[test]
    fn full_graph_mode_certifies_absorption() {
        // Two-way link between the middle nodes creates a cycle in the full support.
        let net = NetworkBuilder::new()
            .nodes(["s", "a", "b", "d"])
            .arc("sa", "s", "a", LatencyModel::mm1(3.0, 1.0))
            .arc("sb", "s", "b", LatencyModel::mm1(3.0, 1.0))
            .arc("ab", "a", "b", LatencyModel::mm1(3.0, 0.5))
            .arc("ba", "b", "a", LatencyModel::mm1(3.0, 0.5))
            .arc("ad", "a", "d", LatencyModel::mm1(3.0, 1.0))
            .arc("bd", "b", "d", LatencyModel::mm1(3.0, 1.2))
            .source("k", "s", "d", vegas())
            .build()
            .unwrap();
        let dag = build_supports(&net, 0, SupportMode::FullGraph).unwrap();
        assert!(dag.in_support[2] && dag.in_support[3]);
        let lambda = net.free_flow_delays();
        let mut st =
            route_source(&net, &logit(2.0), &dag, &lambda, &TauOptions::default()).unwrap();
        assert!(st.spectral_radius() < 1.0);
        st.load_flows(&net, 1.0).unwrap();
        assert!(st.conservation_residual(&net) < 1e-10);
        let into_d = st.v[4] + st.v[5];
        assert!((into_d - 1.0).abs() < 1e-10);
    }
}
