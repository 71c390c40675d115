//! The dual objective over link delays and its minimizers.
//!
//! `Φ(λ) = Σ_a ∫_{λ_a⁰}^{λ_a} s_a⁻¹ − Σ_k F_k(q_k(λ))` with `q_k(λ) = τ_k(λ) − τ_k⁰`.
//! Its gradient is `s_a⁻¹(λ_a) − w̃_a(λ)`, where `w̃` are the link loads obtained by
//! routing the rates `f_k(q_k(λ))`, so `∇Φ = 0` is exactly `λ = s(w̃(λ))`.
//! With fixed demands the rate term becomes `Σ_k x_k τ_k(λ)`.

mod descent;
mod num;

pub use descent::StepRule;
pub use num::{default_routes, solve_num_singlepath, NumSolution};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::choice::ChoiceModel;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::Network;
use crate::routing::{
    aggregate_link_loads, build_supports, route_source, solve_tau, RoutingState, SupportDag,
    SupportMode, TauOptions,
};

use descent::{descend, projected_norm, Point};

/// Points where a source's queueing delay falls below this are outside the domain.
pub const Q_FLOOR: f64 = 1e-10;

/// Free-flow end-to-end delay `τ_k⁰ = τ_{s_k}(λ⁰)` of one source.
pub fn free_flow_tau0(
    net: &Network,
    choice: &ChoiceModel,
    dag: &SupportDag,
    opts: &TauOptions,
) -> Result<f64> {
    let sol = solve_tau(net, choice, dag, &net.free_flow_delays(), opts)?;
    Ok(sol.tau[dag.origin])
}

/// Demand side of the dual objective.
#[derive(Debug, Clone, Copy)]
pub enum Demand<'a> {
    /// Rates respond to queueing delay through each source's rate model.
    Elastic,
    /// Fixed rates per source.
    Fixed(&'a [f64]),
}

/// Everything computed at one delay vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `+∞` when some source's queueing delay is below [`Q_FLOOR`].
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub states: Vec<RoutingState>,
}

/// A validated network with its choice model, routing supports and free-flow delays.
#[derive(Debug, Clone)]
pub struct Instance {
    net: Network,
    choice: ChoiceModel,
    supports: Vec<SupportDag>,
    tau0: Vec<f64>,
    tau_opts: TauOptions,
    exec: Execution,
}

impl Instance {
    pub fn new(net: Network, choice: ChoiceModel) -> Result<Self> {
        Self::with_mode(net, choice, SupportMode::Acyclic)
    }

    pub fn with_mode(net: Network, choice: ChoiceModel, mode: SupportMode) -> Result<Self> {
        let tau_opts = TauOptions::default();
        let supports = (0..net.sources().len())
            .map(|k| build_supports(&net, k, mode))
            .collect::<Result<Vec<_>>>()?;
        let tau0 = supports
            .iter()
            .map(|dag| free_flow_tau0(&net, &choice, dag, &tau_opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance {
            net,
            choice,
            supports,
            tau0,
            tau_opts,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Same network and supports under another choice model.
    pub fn with_choice(&self, choice: ChoiceModel) -> Result<Self> {
        let tau0 = self
            .supports
            .iter()
            .map(|dag| free_flow_tau0(&self.net, &choice, dag, &self.tau_opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance {
            choice,
            tau0,
            ..self.clone()
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn choice(&self) -> &ChoiceModel {
        &self.choice
    }

    pub fn supports(&self) -> &[SupportDag] {
        &self.supports
    }

    pub fn support(&self, k: usize) -> &SupportDag {
        &self.supports[k]
    }

    /// Free-flow end-to-end delays `τ_k⁰`.
    pub fn tau0(&self) -> &[f64] {
        &self.tau0
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn tau_options(&self) -> &TauOptions {
        &self.tau_opts
    }

    pub fn lower_bound(&self) -> Vec<f64> {
        self.net.free_flow_delays()
    }

    fn check_feasible(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.net.arc_count() {
            return Err(Error::InvalidInput(format!(
                "delay vector has {} entries for {} arcs",
                lambda.len(),
                self.net.arc_count()
            )));
        }
        for (a, (&l, arc)) in lambda.iter().zip(self.net.arcs()).enumerate() {
            if l.is_nan() || l < arc.latency.free_flow() || l.is_infinite() {
                return Err(Error::domain(
                    "link delay",
                    l,
                    format!("arc {a} requires a finite delay of at least its free-flow delay"),
                ));
            }
        }
        Ok(())
    }

    /// End-to-end expected delay `τ_k(λ)`.
    pub fn end_to_end(&self, lambda: &[f64], k: usize) -> Result<f64> {
        let dag = &self.supports[k];
        Ok(solve_tau(&self.net, &self.choice, dag, lambda, &self.tau_opts)?.tau[dag.origin])
    }

    /// Queueing delay `q_k(λ) = τ_k(λ) − τ_k⁰`.
    pub fn q_of_lambda(&self, lambda: &[f64], k: usize) -> Result<f64> {
        self.check_feasible(lambda)?;
        Ok(self.end_to_end(lambda, k)? - self.tau0[k])
    }

    /// Routing states of all sources at `λ`, flows not loaded.
    pub fn routing_states(&self, lambda: &[f64]) -> Result<Vec<RoutingState>> {
        self.exec.try_map_range(self.net.sources().len(), |k| {
            route_source(
                &self.net,
                &self.choice,
                &self.supports[k],
                lambda,
                &self.tau_opts,
            )
        })
    }

    /// Objective, gradient and loaded flows at `λ`.
    pub fn evaluate(&self, lambda: &[f64], demand: Demand<'_>) -> Result<Evaluation> {
        self.check_feasible(lambda)?;
        if let Demand::Fixed(x) = demand {
            if x.len() != self.net.sources().len() {
                return Err(Error::InvalidInput("one demand per source required".into()));
            }
        }
        let mut states = self.routing_states(lambda)?;
        let q: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(k, st)| st.tau[self.supports[k].origin] - self.tau0[k])
            .collect();

        let mut objective = 0.0;
        for (arc, &l) in self.net.arcs().iter().zip(lambda) {
            objective += arc.latency.latency_inverse_integral(l)?;
        }

        let x: Vec<f64> = match demand {
            Demand::Fixed(x) => {
                for (k, st) in states.iter().enumerate() {
                    objective -= x[k] * st.tau[self.supports[k].origin];
                }
                x.to_vec()
            }
            Demand::Elastic => {
                if q.iter().any(|&qk| qk < Q_FLOOR) {
                    return Ok(Evaluation {
                        objective: f64::INFINITY,
                        gradient: vec![f64::NAN; lambda.len()],
                        w: vec![f64::NAN; lambda.len()],
                        x: vec![f64::NAN; q.len()],
                        q,
                        states,
                    });
                }
                let mut x = Vec::with_capacity(q.len());
                for (src, &qk) in self.net.sources().iter().zip(&q) {
                    objective -= src.rate.rate_primitive(qk)?;
                    x.push(src.rate.rate(qk)?);
                }
                x
            }
        };

        let net = &self.net;
        states = self.exec.try_map_range(states.len(), |k| {
            let mut st = states[k].clone();
            st.load_flows(net, x[k])?;
            Ok::<_, Error>(st)
        })?;
        let w = aggregate_link_loads(&states, net.arc_count());
        let mut gradient = Vec::with_capacity(lambda.len());
        for ((arc, &l), &wa) in net.arcs().iter().zip(lambda).zip(&w) {
            gradient.push(arc.latency.latency_inverse(l)? - wa);
        }
        Ok(Evaluation {
            objective,
            gradient,
            w,
            x,
            q,
            states,
        })
    }

    /// `Φ(λ)`; `+∞` where some queueing delay vanishes.
    pub fn objective(&self, lambda: &[f64]) -> Result<f64> {
        Ok(self.evaluate(lambda, Demand::Elastic)?.objective)
    }

    /// `∇Φ(λ)`.
    pub fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let ev = self.evaluate(lambda, Demand::Elastic)?;
        if !ev.objective.is_finite() {
            let q = ev.q.iter().copied().fold(f64::INFINITY, f64::min);
            return Err(Error::domain(
                "queueing delay",
                q,
                "gradient needs every q_k > 0",
            ));
        }
        Ok(ev.gradient)
    }

    /// A strictly interior point: every arc at half capacity.
    pub fn default_start(&self) -> Vec<f64> {
        self.net
            .arcs()
            .iter()
            .map(|a| a.latency.latency_clamped(0.5 * a.latency.capacity()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Projected descent on the dual objective.
    Descent,
    /// Damped fixed point `λ ← (1 − θ) λ + θ s(w̃(λ))`.
    FixedPoint { theta: f64 },
}

/// Continuation schedule used when the choice model has no noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub beta_start: f64,
    pub beta_max: f64,
    pub factor: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self {
            beta_start: 1.0,
            beta_max: 1e7,
            factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Target sup-norm of the projected gradient (descent) or of `λ − s(w̃(λ))` (fixed point).
    pub tol: f64,
    pub max_iter: usize,
    pub step: StepRule,
    pub solver: SolverKind,
    pub smoothing: Smoothing,
    /// Starting delays; defaults to [`Instance::default_start`].
    pub start: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            step: StepRule::default(),
            solver: SolverKind::Descent,
            smoothing: Smoothing::default(),
            start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: f64,
    pub grad_norm: f64,
    /// `max_a |λ_a − s_a(w_a)|`.
    pub rmnum_residual: f64,
    /// Largest flow conservation violation over all sources and nodes.
    pub conservation_residual: f64,
    pub iterations: usize,
    /// Logit parameter of the last continuation stage when the choice model is noiseless.
    pub smoothing_beta: Option<f64>,
}

/// Solution of the dual program together with the primal quantities it induces.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub lambda: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    /// End-to-end expected delays `τ_k(λ*)`.
    pub tau: Vec<f64>,
    pub states: Vec<RoutingState>,
    pub diagnostics: Diagnostics,
    /// Objective after each accepted descent step.
    pub history: Vec<f64>,
}

impl Equilibrium {
    fn assemble(
        inst: &Instance,
        lambda: Vec<f64>,
        ev: Evaluation,
        iterations: usize,
        history: Vec<f64>,
        smoothing_beta: Option<f64>,
    ) -> Self {
        let net = inst.network();
        let rmnum_residual = net
            .arcs()
            .iter()
            .zip(&lambda)
            .zip(&ev.w)
            .map(|((arc, &l), &w)| (l - arc.latency.latency_clamped(w)).abs())
            .fold(0.0, f64::max);
        let conservation_residual = ev
            .states
            .iter()
            .map(|s| s.conservation_residual(net))
            .fold(0.0, f64::max);
        let tau = ev
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| s.tau[inst.support(k).origin])
            .collect();
        let grad_norm = projected_norm(&lambda, &inst.lower_bound(), &ev.gradient);
        Equilibrium {
            diagnostics: Diagnostics {
                objective: ev.objective,
                grad_norm,
                rmnum_residual,
                conservation_residual,
                iterations,
                smoothing_beta,
            },
            lambda,
            w: ev.w,
            x: ev.x,
            q: ev.q,
            tau,
            states: ev.states,
            history,
        }
    }
}

fn solve_with(inst: &Instance, demand: Demand<'_>, opts: &SolverOptions) -> Result<Equilibrium> {
    if let ChoiceModel::DeterministicMin = inst.choice() {
        return solve_smoothed(inst, demand, opts);
    }
    let lower = inst.lower_bound();
    let start = match &opts.start {
        Some(s) if s.len() == lower.len() => s.clone(),
        Some(_) => {
            return Err(Error::InvalidInput(
                "start vector has the wrong length".into(),
            ))
        }
        None if inst.network().sources().is_empty() => lower.clone(),
        None => inst.default_start(),
    };
    match opts.solver {
        SolverKind::Descent => {
            let eval = |l: &[f64]| {
                let ev = inst.evaluate(l, demand)?;
                Ok(Point {
                    value: ev.objective,
                    gradient: ev.gradient,
                })
            };
            let out = descend(eval, &lower, start, opts.step, opts.tol, opts.max_iter)?;
            info!(
                "descent converged in {} iterations, |g| = {:.3e}",
                out.iterations, out.grad_norm
            );
            let ev = inst.evaluate(&out.lambda, demand)?;
            Ok(Equilibrium::assemble(
                inst,
                out.lambda,
                ev,
                out.iterations,
                out.history,
                None,
            ))
        }
        SolverKind::FixedPoint { theta } => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "damping must lie in (0, 1], got {theta}"
                )));
            }
            let mut lambda: Vec<f64> = start.iter().zip(&lower).map(|(l, lo)| l.max(*lo)).collect();
            let mut history = Vec::new();
            for iteration in 0..=opts.max_iter {
                let ev = inst.evaluate(&lambda, demand)?;
                if !ev.objective.is_finite() {
                    return Err(Error::domain(
                        "queueing delay",
                        ev.q.iter().copied().fold(f64::INFINITY, f64::min),
                        "fixed-point iterate left the domain",
                    ));
                }
                history.push(ev.objective);
                let target: Vec<f64> = inst
                    .network()
                    .arcs()
                    .iter()
                    .zip(&ev.w)
                    .map(|(arc, &w)| arc.latency.latency_clamped(w))
                    .collect();
                let residual = lambda
                    .iter()
                    .zip(&target)
                    .map(|(l, t)| (l - t).abs())
                    .fold(0.0, f64::max);
                if residual < opts.tol {
                    return Ok(Equilibrium::assemble(
                        inst, lambda, ev, iteration, history, None,
                    ));
                }
                if iteration == opts.max_iter {
                    return Err(Error::Convergence {
                        iterations: iteration,
                        residual,
                    });
                }
                for ((l, t), lo) in lambda.iter_mut().zip(&target).zip(&lower) {
                    *l = ((1.0 - theta) * *l + theta * t).max(*lo);
                }
            }
            unreachable!("loop returns on its last iteration")
        }
    }
}

/// Noiseless routing makes `τ` piecewise linear and the objective nondifferentiable at
/// every tie. Solve a sequence of Logit problems with growing `β` instead, warm-starting
/// each stage from the previous one, and report the last stage.
fn solve_smoothed(
    inst: &Instance,
    demand: Demand<'_>,
    opts: &SolverOptions,
) -> Result<Equilibrium> {
    let sm = opts.smoothing;
    if !(sm.beta_start > 0.0 && sm.beta_max >= sm.beta_start && sm.factor > 1.0) {
        return Err(Error::InvalidInput(format!(
            "invalid smoothing schedule {sm:?}"
        )));
    }
    let mut beta = sm.beta_start;
    let mut start = opts.start.clone();
    let mut total_iter = 0;
    loop {
        let last = beta >= sm.beta_max;
        let stage = inst.with_choice(ChoiceModel::Logit { beta })?;
        let stage_opts = SolverOptions {
            step: StepRule::barzilai_borwein(),
            start: start.take(),
            max_iter: opts.max_iter.saturating_sub(total_iter),
            ..opts.clone()
        };
        let mut eq = solve_with(&stage, demand, &stage_opts)?;
        total_iter += eq.diagnostics.iterations;
        debug!(
            "smoothing stage beta={beta:e}: {} iterations",
            eq.diagnostics.iterations
        );
        if last {
            eq.diagnostics.iterations = total_iter;
            eq.diagnostics.smoothing_beta = Some(beta);
            return Ok(eq);
        }
        start = Some(eq.lambda);
        beta = (beta * sm.factor).min(sm.beta_max);
    }
}

/// Joint rate-control and routing equilibrium: the minimizer of `Φ`.
pub fn solve_mnum(inst: &Instance, opts: &SolverOptions) -> Result<Equilibrium> {
    solve_with(inst, Demand::Elastic, opts)
}

/// Routing equilibrium for fixed source demands.
pub fn solve_mte(inst: &Instance, demands: &[f64], opts: &SolverOptions) -> Result<Equilibrium> {
    if demands.len() != inst.network().sources().len() {
        return Err(Error::InvalidInput("one demand per source required".into()));
    }
    if let Some(&bad) = demands.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::domain(
            "demand",
            bad,
            "demands must be finite and nonnegative",
        ));
    }
    solve_with(inst, Demand::Fixed(demands), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LatencyModel, NetworkBuilder, RateModel};

    fn symmetric(beta: f64) -> Instance {
        let net = NetworkBuilder::new()
            .nodes(["s", "d"])
            .arc("a1", "s", "d", LatencyModel::mm1(2.0, 1.0))
            .arc("a2", "s", "d", LatencyModel::mm1(2.0, 1.0))
            .source("k", "s", "d", RateModel::vegas(1.0, 1.0))
            .build()
            .unwrap();
        Instance::new(net, ChoiceModel::Logit { beta }).unwrap()
    }

    fn chain() -> Instance {
        let net = NetworkBuilder::new()
            .nodes(["s", "m", "d"])
            .arc("a1", "s", "m", LatencyModel::mm1(2.0, 1.0))
            .arc("a2", "m", "d", LatencyModel::mm1(2.0, 2.0))
            .source("k", "s", "d", RateModel::vegas(1.0, 1.0))
            .build()
            .unwrap();
        Instance::new(net, ChoiceModel::Logit { beta: 1.0 }).unwrap()
    }

    #[test]
    fn tau0_examples() {
        assert_eq!(chain().tau0(), &[3.0]);
        assert!((symmetric(1.0).tau0()[0] - (1.0 - 2f64.ln())).abs() < 1e-15);
        let det = symmetric(1.0)
            .with_choice(ChoiceModel::DeterministicMin)
            .unwrap();
        assert_eq!(det.tau0(), &[1.0]);
    }

    #[test]
    fn q_examples() {
        let inst = chain();
        assert_eq!(inst.q_of_lambda(&[1.0, 2.0], 0).unwrap(), 0.0);
        assert_eq!(inst.q_of_lambda(&[1.5, 2.0], 0).unwrap(), 0.5);
        assert!(inst.q_of_lambda(&[0.5, 2.0], 0).is_err());
    }

    #[test]
    fn objective_without_sources() {
        let net = NetworkBuilder::new()
            .nodes(["s", "d"])
            .arc("a1", "s", "d", LatencyModel::mm1(2.0, 1.0))
            .build()
            .unwrap();
        let inst = Instance::new(net, ChoiceModel::Logit { beta: 1.0 }).unwrap();
        assert_eq!(inst.objective(&[1.0]).unwrap(), 0.0);
        let eq = solve_mnum(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(eq.lambda, vec![1.0]);
        assert_eq!(eq.w, vec![0.0]);
    }

    #[test]
    fn objective_is_infinite_at_free_flow() {
        let inst = symmetric(1.0);
        assert_eq!(inst.objective(&[1.0, 1.0]).unwrap(), f64::INFINITY);
        assert!(inst.gradient(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn symmetric_equilibrium() {
        for beta in [0.5, 1.0, 4.0] {
            let eq = solve_mnum(&symmetric(beta), &SolverOptions::default()).unwrap();
            assert!((eq.x[0] - 2.0).abs() < 1e-6, "beta={beta} x={}", eq.x[0]);
            for a in 0..2 {
                assert!((eq.w[a] - 1.0).abs() < 1e-6);
                assert!((eq.lambda[a] - 1.5).abs() < 1e-6);
            }
            assert!((eq.q[0] - 0.5).abs() < 1e-6);
            assert!(eq.diagnostics.rmnum_residual < 1e-6);
        }
    }

    #[test]
    fn converges_from_off_center_starts() {
        for start in [vec![2.0, 2.2], vec![1.05, 4.0], vec![30.0, 1.2]] {
            let opts = SolverOptions {
                start: Some(start),
                ..SolverOptions::default()
            };
            let eq = solve_mnum(&symmetric(1.0), &opts).unwrap();
            assert!((eq.x[0] - 2.0).abs() < 1e-6);
            assert!(eq
                .history
                .windows(2)
                .all(|w| w[1] <= w[0] + 4.0 * f64::EPSILON * w[0].abs()));
        }
    }

    #[test]
    fn fixed_point_solver_agrees() {
        let opts = SolverOptions {
            solver: SolverKind::FixedPoint { theta: 0.5 },
            tol: 1e-10,
            ..SolverOptions::default()
        };
        let eq = solve_mnum(&symmetric(1.0), &opts).unwrap();
        assert!((eq.x[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn mte_examples() {
        let inst = symmetric(1.0);
        let eq = solve_mte(&inst, &[0.0], &SolverOptions::default()).unwrap();
        assert!(eq.lambda.iter().all(|&l| (l - 1.0).abs() < 1e-9));
        let eq = solve_mte(&inst, &[2.0], &SolverOptions::default()).unwrap();
        for a in 0..2 {
            assert!((eq.w[a] - 1.0).abs() < 1e-7);
            assert!((eq.lambda[a] - 1.5).abs() < 1e-7);
        }
        assert!(solve_mte(&inst, &[-1.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_is_a_convergence_error() {
        let opts = SolverOptions {
            max_iter: 1,
            start: Some(vec![2.0, 2.2]),
            ..SolverOptions::default()
        };
        assert!(matches!(
            solve_mnum(&symmetric(1.0), &opts),
            Err(Error::Convergence { .. })
        ));
    }
}
