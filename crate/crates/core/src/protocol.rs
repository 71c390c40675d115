//! Flow-level simulation of the distributed two time-scale scheme.
//!
//! Routers keep estimates of the expected delay to each destination and refresh them
//! slowly by exponential smoothing; sources adjust their rates quickly with the
//! stochastic-approximation step `x ← (1 − δ) x + δ f(Q)`, where `Q` is the observed
//! end-to-end delay minus an estimate of its free-flow value. Packets are infinitesimal:
//! link delays are obtained by loading the current rates through the routing chains
//! instead of simulating queues.

use std::io::Write;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::choice::{sample_noise, ChoiceModel};
use crate::equilibrium::{Demand, Equilibrium, Instance};
use crate::error::{Error, Result};
use crate::routing::{aggregate_link_loads, support_distances, RoutingState, TauSolution};

/// Observed queueing delays are floored here to keep rates finite.
pub const Q_OBS_FLOOR: f64 = 1e-10;

const BISECTION_STEPS: usize = 60;
const MAX_BACKOFFS: usize = 200;

/// Where sources take their free-flow delay from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tau0Mode {
    /// Running minimum of observed end-to-end delays.
    #[default]
    Estimated,
    /// The exact free-flow value computed by the solver.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    /// Router smoothing factor.
    pub alpha: f64,
    /// Source step size.
    pub delta: f64,
    /// Source updates per router update.
    pub inner: usize,
    /// Router updates after warmup.
    pub outer: usize,
    /// Router-only updates at zero load before sources start sending.
    pub warmup: usize,
    /// Standard deviation of additive Gaussian noise on observed end-to-end delays.
    pub noise_sigma: f64,
    /// Draw Gumbel-perturbed next-hop delays at routers instead of using expectations.
    pub sample_routes: bool,
    /// Number of perturbed samples averaged per router observation.
    pub window: usize,
    pub initial_rate: f64,
    pub seed: u64,
    pub tau0: Tau0Mode,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            delta: 0.2,
            inner: 50,
            outer: 500,
            warmup: 100,
            noise_sigma: 0.0,
            sample_routes: false,
            window: 1,
            initial_rate: 0.1,
            seed: 42,
            tau0: Tau0Mode::Estimated,
        }
    }
}

impl ProtocolOptions {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.inner == 0 {
            return bad("at least one inner step per outer step is required".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            ));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if !(self.initial_rate > 0.0 && self.initial_rate.is_finite()) {
            return bad(format!(
                "initial rate must be positive, got {}",
                self.initial_rate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolState {
    /// Router estimates `τ_i^k`, indexed `[source][node]`; `+∞` off the support.
    pub tau_est: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    /// Link delays `s(w)` induced by the last loading.
    pub lambda_est: Vec<f64>,
    /// Smoothed link delays held by routers; next hops are chosen on these.
    pub lambda_router: Vec<f64>,
    /// Running minimum of observed end-to-end delays.
    pub tau0_est: Vec<f64>,
    /// Last observed end-to-end delay per source.
    pub last_observed: Vec<f64>,
    pub outer_step: usize,
    pub inner_step: usize,
    rng: ChaCha8Rng,
}

impl ProtocolState {
    /// Free-flow start: no traffic, router estimates at the shortest free-flow distances.
    pub fn new(inst: &Instance, initial_rate: f64, seed: u64) -> Self {
        let net = inst.network();
        let lambda0 = net.free_flow_delays();
        let k = net.sources().len();
        ProtocolState {
            tau_est: inst
                .supports()
                .iter()
                .map(|dag| support_distances(net, dag, &lambda0))
                .collect(),
            rates: vec![initial_rate; k],
            lambda_router: lambda0.clone(),
            lambda_est: lambda0,
            tau0_est: vec![f64::INFINITY; k],
            last_observed: vec![f64::NAN; k],
            outer_step: 0,
            inner_step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// State sitting exactly on a solved equilibrium, with exact free-flow delays.
    pub fn at_equilibrium(inst: &Instance, eq: &Equilibrium, seed: u64) -> Self {
        ProtocolState {
            tau_est: eq.states.iter().map(|s| s.tau.clone()).collect(),
            rates: eq.x.clone(),
            lambda_est: eq.lambda.clone(),
            lambda_router: eq.lambda.clone(),
            tau0_est: inst.tau0().to_vec(),
            last_observed: eq.tau.clone(),
            outer_step: 0,
            inner_step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Routers blend the measured link delays and the observed next-hop minimum into their
    /// estimates.
    pub fn router_update(&mut self, inst: &Instance, alpha: f64, sample: bool, window: usize) {
        let net = inst.network();
        let choice = inst.choice();
        let mut z = Vec::new();
        for (k, dag) in inst.supports().iter().enumerate() {
            let old = &self.tau_est[k];
            let mut new = old.clone();
            for i in dag.transient_nodes() {
                z.clear();
                z.extend(
                    dag.out_star[i]
                        .iter()
                        .map(|&a| self.lambda_est[a] + old[net.arc(a).head]),
                );
                let observed = match (*choice, sample) {
                    (ChoiceModel::Logit { beta }, true) => {
                        let mut acc = 0.0;
                        for _ in 0..window {
                            let m = z
                                .iter()
                                .map(|&za| za + sample_noise(beta, &mut self.rng))
                                .fold(f64::INFINITY, f64::min);
                            acc += m;
                        }
                        acc / window as f64
                    }
                    _ => choice.value_unchecked(&z),
                };
                new[i] = (1.0 - alpha) * old[i] + alpha * observed;
            }
            new[dag.destination] = 0.0;
            self.tau_est[k] = new;
        }
        for (r, &l) in self.lambda_router.iter_mut().zip(&self.lambda_est) {
            *r = (1.0 - alpha) * *r + alpha * l;
        }
    }

    /// End-to-end delay seen by source `k`, optionally noisy; feeds the running minimum.
    fn observe(&mut self, inst: &Instance, k: usize, noise: Option<&Normal<f64>>) -> f64 {
        let origin = inst.support(k).origin;
        let mut t = self.tau_est[k][origin];
        if let Some(n) = noise {
            t += n.sample(&mut self.rng);
        }
        self.last_observed[k] = t;
        self.tau0_est[k] = self.tau0_est[k].min(t);
        t
    }

    /// One stochastic-approximation step for every source.
    pub fn source_update(
        &mut self,
        inst: &Instance,
        delta: f64,
        tau0: Tau0Mode,
        noise: Option<&Normal<f64>>,
    ) -> Result<()> {
        let net = inst.network();
        for k in 0..net.sources().len() {
            let t = self.observe(inst, k, noise);
            let base = match tau0 {
                Tau0Mode::Estimated => self.tau0_est[k],
                Tau0Mode::Exact => inst.tau0()[k],
            };
            let q = (t - base).max(Q_OBS_FLOOR);
            let target = net.source(k).rate.rate(q)?;
            self.rates[k] = (1.0 - delta) * self.rates[k] + delta * target;
        }
        Ok(())
    }

    /// Source step followed by a reload. If the step overloads a link, the largest feasible
    /// fraction of it is found by bisection; if the current rates already overload the
    /// network, all sources back off by half until the load fits. Returns the number of
    /// overloaded reloads.
    pub fn damped_source_step(
        &mut self,
        inst: &Instance,
        opts: &ProtocolOptions,
        noise: Option<&Normal<f64>>,
    ) -> Result<usize> {
        let saved = self.clone();
        self.source_update(inst, opts.delta, opts.tau0, noise)?;
        if !self.refresh_loads(inst)? {
            return Ok(0);
        }
        let mut events = 1;
        *self = saved.clone();
        if self.refresh_loads(inst)? {
            for _ in 0..MAX_BACKOFFS {
                for r in &mut self.rates {
                    *r *= 0.5;
                }
                events += 1;
                if !self.refresh_loads(inst)? {
                    debug!("rates backed off to {:?}", self.rates);
                    return Ok(events);
                }
            }
            warn!("overload persists after backing off");
            return Ok(events);
        }
        let (mut lo, mut hi) = (0.0, opts.delta);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            *self = saved.clone();
            self.source_update(inst, mid, opts.tau0, noise)?;
            if self.refresh_loads(inst)? {
                events += 1;
                hi = mid;
            } else {
                lo = mid;
            }
        }
        debug!("overload: step damped to {lo}");
        *self = saved;
        self.source_update(inst, lo, opts.tau0, noise)?;
        if self.refresh_loads(inst)? {
            events += 1;
        }
        Ok(events)
    }

    /// Current queueing-delay estimate of source `k`.
    pub fn q_estimate(&self, inst: &Instance, k: usize, tau0: Tau0Mode) -> f64 {
        let base = match tau0 {
            Tau0Mode::Estimated => self.tau0_est[k],
            Tau0Mode::Exact => inst.tau0()[k],
        };
        self.last_observed[k] - base
    }

    /// Routes the current rates on the router estimates and refreshes `lambda_est`.
    /// Returns whether some link was loaded at or above capacity.
    pub fn refresh_loads(&mut self, inst: &Instance) -> Result<bool> {
        let net = inst.network();
        let states = inst.execution().try_map_range(net.sources().len(), |k| {
            let tau = self.tau_est[k].clone();
            let z = net
                .arcs()
                .iter()
                .enumerate()
                .map(|(a, arc)| self.lambda_router[a] + tau[arc.head])
                .collect();
            let sol = TauSolution {
                tau,
                z,
                sweeps: 0,
                residual: 0.0,
                max_increase: 0.0,
                history: Vec::new(),
            };
            let mut st = RoutingState::new(net, inst.choice(), inst.support(k), sol)?;
            st.load_flows(net, self.rates[k])?;
            Ok::<_, Error>(st)
        })?;
        let w = aggregate_link_loads(&states, net.arc_count());
        let overload = net
            .arcs()
            .iter()
            .zip(&w)
            .any(|(arc, &wa)| wa >= arc.latency.capacity());
        for ((l, arc), &wa) in self.lambda_est.iter_mut().zip(net.arcs()).zip(&w) {
            *l = arc.latency.latency_clamped(wa);
        }
        Ok(overload)
    }
}

/// Free-flow delay estimate from recorded end-to-end delays: their minimum.
pub fn estimate_tau0(samples: &[f64]) -> Option<f64> {
    samples.iter().copied().reduce(f64::min)
}

/// Residuals of the equilibrium conditions evaluated at the protocol's link delays:
/// `max_a |λ_a − s_a(w̃_a(λ))|` and `max_k |x_k − f_k(q_k(λ))|`.
pub fn fixed_point_residuals(inst: &Instance, state: &ProtocolState) -> Result<(f64, f64)> {
    let ev = inst.evaluate(&state.lambda_est, Demand::Elastic)?;
    if !ev.objective.is_finite() {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let rmnum = inst
        .network()
        .arcs()
        .iter()
        .zip(&state.lambda_est)
        .zip(&ev.w)
        .map(|((arc, &l), &w)| (l - arc.latency.latency_clamped(w)).abs())
        .fold(0.0, f64::max);
    let rate = state
        .rates
        .iter()
        .zip(&ev.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((rmnum, rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_step: usize,
    pub inner_step: usize,
    pub source: usize,
    pub rate: f64,
    pub q_est: f64,
    /// `‖x_t − x*‖∞` over all sources after this inner step.
    pub dist_to_eq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer_step: usize,
    pub rate_dist: f64,
    /// `max_k max_i |τ̂_i^k − τ_i^k(λ*)|` over nodes on the support.
    pub tau_dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSummary {
    pub rates: Vec<f64>,
    pub reference_rates: Vec<f64>,
    pub rate_dist: f64,
    /// `max_k |x_k − x_k*| / x_k*`.
    pub relative_rate_dist: f64,
    pub tau_dist: f64,
    pub tau0_estimate: Vec<f64>,
    pub tau0_exact: Vec<f64>,
    pub tau0_bias: Vec<f64>,
    pub rmnum_residual: f64,
    pub rate_residual: f64,
    pub overload_events: usize,
    /// Increases of the rate distance over the last 10% of outer steps.
    pub tail_violations: usize,
    pub outer_steps: usize,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub trace: Vec<TraceRow>,
    pub outer: Vec<OuterRecord>,
    pub state: ProtocolState,
    pub summary: ProtocolSummary,
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn tau_dist(state: &ProtocolState, reference: &Equilibrium) -> f64 {
    state
        .tau_est
        .iter()
        .zip(&reference.states)
        .flat_map(|(est, st)| {
            est.iter()
                .zip(&st.tau)
                .filter(|(_, t)| t.is_finite())
                .map(|(e, t)| (e - t).abs())
        })
        .fold(0.0, f64::max)
}

/// Runs the scheme from the free-flow state: `warmup` router-only steps at zero load,
/// then `outer` rounds of `inner` source steps followed by one router step.
pub fn run(
    inst: &Instance,
    opts: &ProtocolOptions,
    reference: &Equilibrium,
) -> Result<ProtocolRun> {
    opts.validate()?;
    let mut state = ProtocolState::new(inst, opts.initial_rate, opts.seed);
    let noise = noise_model(opts)?;
    for _ in 0..opts.warmup {
        for k in 0..inst.network().sources().len() {
            state.observe(inst, k, noise.as_ref());
        }
        state.router_update(inst, opts.alpha, opts.sample_routes, opts.window);
    }
    run_from(inst, state, opts, reference)
}

fn noise_model(opts: &ProtocolOptions) -> Result<Option<Normal<f64>>> {
    if opts.noise_sigma > 0.0 {
        Ok(Some(Normal::new(0.0, opts.noise_sigma).map_err(|e| {
            Error::InvalidInput(format!("noise model: {e}"))
        })?))
    } else {
        Ok(None)
    }
}

/// Runs `outer` rounds starting from an arbitrary state.
pub fn run_from(
    inst: &Instance,
    mut state: ProtocolState,
    opts: &ProtocolOptions,
    reference: &Equilibrium,
) -> Result<ProtocolRun> {
    opts.validate()?;
    let noise = noise_model(opts)?;
    let x_star = &reference.x;
    let n_src = inst.network().sources().len();
    let mut trace = Vec::with_capacity(opts.outer * opts.inner * n_src);
    let mut outer = Vec::with_capacity(opts.outer);
    let mut overload_events = 0;

    for o in 0..opts.outer {
        state.outer_step = o;
        for j in 0..opts.inner {
            state.inner_step = j;
            overload_events += state.damped_source_step(inst, opts, noise.as_ref())?;
            let dist = sup_dist(&state.rates, x_star);
            for k in 0..n_src {
                trace.push(TraceRow {
                    outer_step: o,
                    inner_step: j,
                    source: k,
                    rate: state.rates[k],
                    q_est: state.q_estimate(inst, k, opts.tau0),
                    dist_to_eq: dist,
                });
            }
        }
        state.router_update(inst, opts.alpha, opts.sample_routes, opts.window);
        outer.push(OuterRecord {
            outer_step: o,
            rate_dist: sup_dist(&state.rates, x_star),
            tau_dist: tau_dist(&state, reference),
        });
    }

    let tail_start = outer.len() - outer.len() / 10;
    let tail_violations = outer[tail_start.saturating_sub(1)..]
        .windows(2)
        .filter(|w| w[1].rate_dist > w[0].rate_dist + 1e-12)
        .count();
    let (rmnum_residual, rate_residual) = fixed_point_residuals(inst, &state)?;
    let tau0_exact = inst.tau0().to_vec();
    let tau0_estimate = match opts.tau0 {
        Tau0Mode::Estimated => state.tau0_est.clone(),
        Tau0Mode::Exact => tau0_exact.clone(),
    };
    let summary = ProtocolSummary {
        rates: state.rates.clone(),
        reference_rates: x_star.clone(),
        rate_dist: sup_dist(&state.rates, x_star),
        relative_rate_dist: state
            .rates
            .iter()
            .zip(x_star)
            .map(|(x, s)| (x - s).abs() / s.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max),
        tau_dist: tau_dist(&state, reference),
        tau0_bias: tau0_estimate
            .iter()
            .zip(&tau0_exact)
            .map(|(e, t)| e - t)
            .collect(),
        tau0_estimate,
        tau0_exact,
        rmnum_residual,
        rate_residual,
        overload_events,
        tail_violations,
        outer_steps: opts.outer,
    };
    Ok(ProtocolRun {
        trace,
        outer,
        state,
        summary,
    })
}

/// Writes the trace as CSV with a header row.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "outer_step,inner_step,source,rate,q_est,dist_to_eq")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.outer_step, r.inner_step, r.source, r.rate, r.q_est, r.dist_to_eq
        )?;
    }
    Ok(())
}
