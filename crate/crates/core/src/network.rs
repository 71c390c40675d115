//! Graph, link latency functions and source rate functions.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Flows are held strictly below capacity inside evaluations.
pub const CAPACITY_GUARD: f64 = 1e-9;

/// Total link delay as a function of link flow: `s(w) = λ⁰ + ψ(w)` on `[0, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyModel {
    /// M/M/1 queue: `ψ(w) = w / (c (c - w))`.
    Mm1 { capacity: f64, lambda0: f64 },
    /// `ψ(w) = slope · w / (1 - w/c)`: affine at light load, blowing up at capacity.
    AffineCapped {
        lambda0: f64,
        slope: f64,
        capacity: f64,
    },
}

impl LatencyModel {
    pub fn mm1(capacity: f64, lambda0: f64) -> Self {
        LatencyModel::Mm1 { capacity, lambda0 }
    }

    pub fn affine_capped(lambda0: f64, slope: f64, capacity: f64) -> Self {
        LatencyModel::AffineCapped {
            lambda0,
            slope,
            capacity,
        }
    }

    pub fn free_flow(&self) -> f64 {
        match *self {
            LatencyModel::Mm1 { lambda0, .. } | LatencyModel::AffineCapped { lambda0, .. } => {
                lambda0
            }
        }
    }

    pub fn capacity(&self) -> f64 {
        match *self {
            LatencyModel::Mm1 { capacity, .. } | LatencyModel::AffineCapped { capacity, .. } => {
                capacity
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LatencyModel::Mm1 { capacity, lambda0 } => {
                capacity > 0.0 && capacity.is_finite() && lambda0 > 0.0 && lambda0.is_finite()
            }
            LatencyModel::AffineCapped {
                lambda0,
                slope,
                capacity,
            } => {
                capacity > 0.0
                    && capacity.is_finite()
                    && lambda0 > 0.0
                    && lambda0.is_finite()
                    && slope > 0.0
                    && slope.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "latency parameters must be positive and finite: {self:?}"
            )))
        }
    }

    /// Queueing part `ψ(w)` without range checks.
    fn queueing_unchecked(&self, w: f64) -> f64 {
        match *self {
            LatencyModel::Mm1 { capacity: c, .. } => w / (c * (c - w)),
            LatencyModel::AffineCapped {
                slope, capacity: c, ..
            } => slope * w * c / (c - w),
        }
    }

    /// Queueing delay `ψ(w)`.
    pub fn queueing_delay(&self, w: f64) -> Result<f64> {
        let c = self.capacity();
        if !(0.0..c).contains(&w) {
            return Err(Error::domain(
                "latency",
                w,
                format!("flow must lie in [0, {c})"),
            ));
        }
        Ok(self.queueing_unchecked(w))
    }

    /// Total delay `s(w) = λ⁰ + ψ(w)`.
    pub fn latency(&self, w: f64) -> Result<f64> {
        Ok(self.free_flow() + self.queueing_delay(w)?)
    }

    /// `s(w)` with the flow clamped into `[0, (1 - 1e-9) c]`.
    pub fn latency_clamped(&self, w: f64) -> f64 {
        let w = w.clamp(0.0, (1.0 - CAPACITY_GUARD) * self.capacity());
        self.free_flow() + self.queueing_unchecked(w)
    }

    /// The flow `w` with `s(w) = λ`. Always strictly below capacity.
    pub fn latency_inverse(&self, lambda: f64) -> Result<f64> {
        let u = self.excess(lambda, "latency_inverse")?;
        Ok(match *self {
            LatencyModel::Mm1 { capacity: c, .. } => {
                if u.is_infinite() {
                    c
                } else {
                    c * c * u / (1.0 + c * u)
                }
            }
            LatencyModel::AffineCapped {
                slope, capacity: c, ..
            } => {
                if u.is_infinite() {
                    c
                } else {
                    c * u / (slope * c + u)
                }
            }
        })
    }

    /// `∫_{λ⁰}^{λ} s⁻¹(z) dz`.
    pub fn latency_inverse_integral(&self, lambda: f64) -> Result<f64> {
        let u = self.excess(lambda, "latency_inverse_integral")?;
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            LatencyModel::Mm1 { capacity: c, .. } => c * u - (c * u).ln_1p(),
            LatencyModel::AffineCapped {
                slope, capacity: c, ..
            } => {
                let m = slope * c;
                c * (u - m * (u / m).ln_1p())
            }
        })
    }

    fn excess(&self, lambda: f64, what: &'static str) -> Result<f64> {
        let lambda0 = self.free_flow();
        if lambda.is_nan() || lambda < lambda0 {
            return Err(Error::domain(
                what,
                lambda,
                format!("delay must be at least the free-flow delay {lambda0}"),
            ));
        }
        Ok(lambda - lambda0)
    }
}

/// Source rate as a function of end-to-end queueing delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateModel {
    /// TCP Vegas steady state: `f(q) = α D / q`.
    Vegas { alpha: f64, d: f64 },
    /// `f(q) = scale · q^(-exponent)`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl RateModel {
    pub fn vegas(alpha: f64, d: f64) -> Self {
        RateModel::Vegas { alpha, d }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RateModel::Vegas { alpha, d } => {
                alpha > 0.0 && d > 0.0 && alpha.is_finite() && d.is_finite()
            }
            RateModel::PowerLaw { scale, exponent } => {
                scale > 0.0 && exponent > 0.0 && scale.is_finite() && exponent.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "rate parameters must be positive and finite: {self:?}"
            )))
        }
    }

    fn check(q: f64, what: &'static str) -> Result<()> {
        if q > 0.0 {
            Ok(())
        } else {
            Err(Error::domain(what, q, "queueing delay must be positive"))
        }
    }

    /// `f(q)`.
    pub fn rate(&self, q: f64) -> Result<f64> {
        Self::check(q, "rate")?;
        Ok(match *self {
            RateModel::Vegas { alpha, d } => alpha * d / q,
            RateModel::PowerLaw { scale, exponent } => scale * q.powf(-exponent),
        })
    }

    /// Primitive `F` of `f`, normalized so that `F(1) = 0`.
    pub fn rate_primitive(&self, q: f64) -> Result<f64> {
        Self::check(q, "rate_primitive")?;
        Ok(match *self {
            RateModel::Vegas { alpha, d } => alpha * d * q.ln(),
            RateModel::PowerLaw { scale, exponent } => {
                if (exponent - 1.0).abs() < 1e-12 {
                    scale * q.ln()
                } else {
                    let e = 1.0 - exponent;
                    scale * (q.powf(e) - 1.0) / e
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    pub latency: LatencyModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    pub origin: usize,
    pub destination: usize,
    pub rate: RateModel,
    /// Fixed demand, used when solving with inelastic rates.
    pub demand: Option<f64>,
    /// Fixed arc sequence, used by the single-path rate control solver.
    pub route: Option<Vec<usize>>,
}

/// A validated directed network. Immutable once built.
#[derive(Debug, Clone)]
pub struct Network {
    node_ids: Vec<String>,
    node_index: HashMap<String, usize>,
    arcs: Vec<Arc>,
    out_star: Vec<Vec<usize>>,
    in_star: Vec<Vec<usize>>,
    sources: Vec<Source>,
}

impl Network {
    pub fn new(node_ids: Vec<String>, arcs: Vec<Arc>, sources: Vec<Source>) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(node_ids.len());
        for (i, id) in node_ids.iter().enumerate() {
            if node_index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate node id `{id}`")));
            }
        }
        let n = node_ids.len();
        let mut out_star = vec![Vec::new(); n];
        let mut in_star = vec![Vec::new(); n];
        let mut arc_ids = HashMap::new();
        for (a, arc) in arcs.iter().enumerate() {
            if arc.tail >= n || arc.head >= n {
                return Err(Error::Structural(format!(
                    "arc `{}` references an undeclared node",
                    arc.id
                )));
            }
            if arc.tail == arc.head {
                return Err(Error::Structural(format!(
                    "arc `{}` is a self-loop",
                    arc.id
                )));
            }
            if arc_ids.insert(arc.id.clone(), a).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate arc id `{}`",
                    arc.id
                )));
            }
            arc.latency.validate()?;
            out_star[arc.tail].push(a);
            in_star[arc.head].push(a);
        }

        let net = Network {
            node_ids,
            node_index,
            arcs,
            out_star,
            in_star,
            sources: Vec::new(),
        };

        let mut source_ids = HashMap::new();
        for src in &sources {
            if source_ids.insert(src.id.clone(), ()).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate source id `{}`",
                    src.id
                )));
            }
            net.validate_source(src)?;
        }
        Ok(Network { sources, ..net })
    }

    fn validate_source(&self, src: &Source) -> Result<()> {
        let n = self.node_count();
        if src.origin >= n || src.destination >= n {
            return Err(Error::Structural(format!(
                "source `{}` references an undeclared node",
                src.id
            )));
        }
        if src.origin == src.destination {
            return Err(Error::Structural(format!(
                "source `{}` has identical origin and destination",
                src.id
            )));
        }
        src.rate.validate()?;
        if let Some(x) = src.demand {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "source `{}` has invalid demand {x}",
                    src.id
                )));
            }
        }
        if !self.reachable_from(src.origin)[src.destination] {
            return Err(Error::Structural(format!(
                "destination of source `{}` is unreachable from its origin",
                src.id
            )));
        }
        if let Some(route) = &src.route {
            let mut at = src.origin;
            for &a in route {
                let arc = self.arcs.get(a).ok_or_else(|| {
                    Error::Structural(format!("route of source `{}` uses unknown arc", src.id))
                })?;
                if arc.tail != at {
                    return Err(Error::Structural(format!(
                        "route of source `{}` is not a contiguous path",
                        src.id
                    )));
                }
                at = arc.head;
            }
            if at != src.destination {
                return Err(Error::Structural(format!(
                    "route of source `{}` does not end at its destination",
                    src.id
                )));
            }
        }
        Ok(())
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for &a in &self.out_star[i] {
                let j = self.arcs[a].head;
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn arc_index(&self, id: &str) -> Option<usize> {
        self.arcs.iter().position(|a| a.id == id)
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: usize) -> &Arc {
        &self.arcs[a]
    }

    /// Arcs leaving node `i`.
    pub fn out_star(&self, i: usize) -> &[usize] {
        &self.out_star[i]
    }

    /// Arcs entering node `i`.
    pub fn in_star(&self, i: usize) -> &[usize] {
        &self.in_star[i]
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn source(&self, k: usize) -> &Source {
        &self.sources[k]
    }

    /// Free-flow delays `λ⁰` indexed by arc.
    pub fn free_flow_delays(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.latency.free_flow()).collect()
    }

    /// Same network with the source list replaced.
    pub fn with_sources(&self, sources: Vec<Source>) -> Result<Self> {
        Network::new(self.node_ids.clone(), self.arcs.clone(), sources)
    }
}

/// Incremental construction with string ids, mostly for tests and examples.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    nodes: Vec<String>,
    arcs: Vec<(String, String, String, LatencyModel)>,
    sources: Vec<(String, String, String, RateModel, Option<f64>)>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.nodes.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn arc(mut self, id: &str, tail: &str, head: &str, latency: LatencyModel) -> Self {
        self.arcs
            .push((id.into(), tail.into(), head.into(), latency));
        self
    }

    pub fn source(mut self, id: &str, origin: &str, destination: &str, rate: RateModel) -> Self {
        self.sources
            .push((id.into(), origin.into(), destination.into(), rate, None));
        self
    }

    pub fn source_with_demand(
        mut self,
        id: &str,
        origin: &str,
        destination: &str,
        rate: RateModel,
        demand: f64,
    ) -> Self {
        self.sources.push((
            id.into(),
            origin.into(),
            destination.into(),
            rate,
            Some(demand),
        ));
        self
    }

    pub fn build(self) -> Result<Network> {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Structural(format!("undeclared node `{id}`")))
        };
        let arcs = self
            .arcs
            .iter()
            .map(|(id, t, h, lat)| {
                Ok(Arc {
                    id: id.clone(),
                    tail: lookup(t)?,
                    head: lookup(h)?,
                    latency: *lat,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sources = self
            .sources
            .iter()
            .map(|(id, o, d, rate, demand)| {
                Ok(Source {
                    id: id.clone(),
                    origin: lookup(o)?,
                    destination: lookup(d)?,
                    rate: *rate,
                    demand: *demand,
                    route: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(self.nodes.clone(), arcs, sources)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MM1: LatencyModel = LatencyModel::Mm1 {
        capacity: 2.0,
        lambda0: 1.0,
    };

    #[test]
    fn mm1_latency_values() {
        assert!((MM1.latency(1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((MM1.latency(1.5).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(MM1.latency(0.0).unwrap(), 1.0);
        let aff = LatencyModel::affine_capped(0.7, 3.0, 4.0);
        assert_eq!(aff.latency(0.0).unwrap(), 0.7);
    }

    #[test]
    fn latency_rejects_out_of_range_flow() {
        assert!(matches!(MM1.latency(2.0), Err(Error::Domain { .. })));
        assert!(matches!(MM1.latency(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn mm1_inverse_values() {
        assert!((MM1.latency_inverse(1.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(MM1.latency_inverse(1.0).unwrap(), 0.0);
        let far = MM1.latency_inverse(1e12).unwrap();
        assert!(far < 2.0 && far > 2.0 - 1e-9);
        assert_eq!(MM1.latency_inverse(f64::INFINITY).unwrap(), 2.0);
        assert!(matches!(
            MM1.latency_inverse(0.5),
            Err(Error::Domain { .. })
        ));
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fs: [f64; 3],
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let [fa, fm, fb] = fs;
            let m = 0.5 * (a + b);
            let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            recurse(f, a, m, [fa, flm, fm], left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, [fm, frm, fb], right, 0.5 * tol, depth - 1)
        }
        let fs = [f(a), f(0.5 * (a + b)), f(b)];
        let whole = (b - a) / 6.0 * (fs[0] + 4.0 * fs[1] + fs[2]);
        recurse(f, a, b, fs, whole, tol, 50)
    }

    fn bisect_queueing(m: &LatencyModel, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, m.capacity());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if m.queueing_delay(mid).unwrap() < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn mm1_integral_matches_closed_form_and_quadrature() {
        let closed = MM1.latency_inverse_integral(1.5).unwrap();
        assert!((closed - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((closed - 0.306853).abs() < 1e-6);
        let quad = simpson(&|z| MM1.latency_inverse(z).unwrap(), 1.0, 1.5, 1e-12);
        assert!((closed - quad).abs() < 1e-11);
        assert_eq!(MM1.latency_inverse_integral(1.0).unwrap(), 0.0);
        assert!(MM1.latency_inverse_integral(0.9).is_err());
    }

    #[test]
    fn affine_inverse_and_integral_against_numeric_oracles() {
        let m = LatencyModel::affine_capped(0.7, 3.0, 4.0);
        for &p in &[0.0, 0.01, 0.5, 2.0, 50.0] {
            let w = m.latency_inverse(0.7 + p).unwrap();
            assert!((w - bisect_queueing(&m, p)).abs() < 1e-11, "p={p}");
        }
        for &p in &[0.3, 1.3, 9.0] {
            let quad = simpson(&|z| bisect_queueing(&m, z - 0.7), 0.7, 0.7 + p, 1e-11);
            let exact = m.latency_inverse_integral(0.7 + p).unwrap();
            assert!((quad - exact).abs() < 1e-9, "{quad} vs {exact}");
        }
    }

    #[test]
    fn integral_derivative_is_inverse() {
        for m in [MM1, LatencyModel::affine_capped(0.5, 1.0, 3.0)] {
            for &lam in &[
                m.free_flow() + 0.2,
                m.free_flow() + 1.0,
                m.free_flow() + 7.0,
            ] {
                let h = 1e-5;
                let fd = (m.latency_inverse_integral(lam + h).unwrap()
                    - m.latency_inverse_integral(lam - h).unwrap())
                    / (2.0 * h);
                let exact = m.latency_inverse(lam).unwrap();
                assert!((fd - exact).abs() < 1e-6 * exact.max(1.0), "{m:?} {lam}");
            }
        }
    }

    #[test]
    fn vegas_rate_and_primitive() {
        let v = RateModel::vegas(1.0, 1.0);
        assert_eq!(v.rate(0.5).unwrap(), 2.0);
        assert_eq!(v.rate(1.0).unwrap(), 1.0);
        assert!(v.rate(0.3).unwrap() > v.rate(0.4).unwrap());
        assert_eq!(v.rate_primitive(1.0).unwrap(), 0.0);
        assert!((v.rate_primitive(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(v.rate(0.0), Err(Error::Domain { .. })));
        assert!(matches!(v.rate_primitive(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn primitive_central_differences() {
        let models = [
            RateModel::vegas(2.0, 0.7),
            RateModel::PowerLaw {
                scale: 1.5,
                exponent: 2.0,
            },
            RateModel::PowerLaw {
                scale: 0.5,
                exponent: 1.0,
            },
        ];
        for m in models {
            for &q in &[0.1, 0.5, 1.0, 3.0] {
                let h = 1e-6 * q;
                let fd = (m.rate_primitive(q + h).unwrap() - m.rate_primitive(q - h).unwrap())
                    / (2.0 * h);
                let f = m.rate(q).unwrap();
                assert!(((fd - f) / f).abs() < 1e-6, "{m:?} q={q}");
            }
        }
    }

    #[test]
    fn validation_rejects_unreachable_destination() {
        let err = NetworkBuilder::new()
            .nodes(["s", "m", "d"])
            .arc("a", "s", "m", MM1)
            .arc("b", "d", "m", MM1)
            .source("k", "s", "d", RateModel::vegas(1.0, 1.0))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn validation_rejects_zero_free_flow() {
        let err = NetworkBuilder::new()
            .nodes(["s", "d"])
            .arc("a", "s", "d", LatencyModel::mm1(2.0, 0.0))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn stars_are_consistent() {
        let net = NetworkBuilder::new()
            .nodes(["s", "m", "d"])
            .arc("a", "s", "m", MM1)
            .arc("b", "m", "d", MM1)
            .arc("c", "s", "d", MM1)
            .build()
            .unwrap();
        for i in 0..net.node_count() {
            for &a in net.out_star(i) {
                assert_eq!(net.arc(a).tail, i);
            }
            for &a in net.in_star(i) {
                assert_eq!(net.arc(a).head, i);
            }
        }
        assert_eq!(net.out_star(0).len(), 2);
    }

    proptest! {
        #[test]
        fn latency_round_trip(c in 0.5f64..20.0, l0 in 0.01f64..5.0, frac in 0.0f64..0.95) {
            let m = LatencyModel::mm1(c, l0);
            let w = frac * c;
            let back = m.latency_inverse(m.latency(w).unwrap()).unwrap();
            prop_assert!((back - w).abs() <= 1e-10 * c.max(1.0));
        }

        #[test]
        fn affine_round_trip(c in 0.5f64..20.0, k in 0.1f64..5.0, frac in 0.0f64..0.95) {
            let m = LatencyModel::affine_capped(1.0, k, c);
            let w = frac * c;
            let back = m.latency_inverse(m.latency(w).unwrap()).unwrap();
            prop_assert!((back - w).abs() <= 1e-10 * c.max(1.0));
        }

        #[test]
        fn integral_is_convex(c in 0.5f64..10.0, u in 0.0f64..5.0, h in 1e-3f64..0.1) {
            let m = LatencyModel::mm1(c, 1.0);
            let f = |x: f64| m.latency_inverse_integral(1.0 + x).unwrap();
            prop_assert!(f(u) + f(u + 2.0 * h) - 2.0 * f(u + h) >= -1e-12);
        }

        #[test]
        fn primitive_is_concave(alpha in 0.1f64..5.0, q in 0.05f64..5.0, h in 1e-3f64..0.1) {
            let m = RateModel::vegas(alpha, 1.0);
            let f = |x: f64| m.rate_primitive(x).unwrap();
            prop_assert!(f(q) + f(q + 2.0 * h) - 2.0 * f(q + h) <= 1e-12);
        }
    }
}
