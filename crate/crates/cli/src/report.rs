//! Machine-readable run reports.

use anyhow::{ensure, Result};
use mnum_core::equilibrium::NumSolution;
use mnum_core::protocol::ProtocolSummary;
use mnum_core::Equilibrium;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumReport {
    pub lambda: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub rmnum_residual: f64,
    pub iterations: usize,
}

impl From<&Equilibrium> for EquilibriumReport {
    fn from(eq: &Equilibrium) -> Self {
        EquilibriumReport {
            lambda: eq.lambda.clone(),
            w: eq.w.clone(),
            x: eq.x.clone(),
            q: eq.q.clone(),
            objective: eq.diagnostics.objective,
            grad_norm: eq.diagnostics.grad_norm,
            rmnum_residual: eq.diagnostics.rmnum_residual,
            iterations: eq.diagnostics.iterations,
        }
    }
}

impl EquilibriumReport {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lambda.len() == self.w.len(),
            "lambda and w differ in length"
        );
        ensure!(self.x.len() == self.q.len(), "x and q differ in length");
        let all = self
            .lambda
            .iter()
            .chain(&self.w)
            .chain(&self.x)
            .chain(&self.q);
        ensure!(all.clone().all(|v| v.is_finite()), "non-finite entry");
        ensure!(
            self.w.iter().chain(&self.x).all(|&v| v >= 0.0),
            "negative flow or rate"
        );
        ensure!(
            self.q.iter().all(|&v| v > 0.0),
            "nonpositive queueing delay"
        );
        ensure!(
            self.grad_norm >= 0.0 && self.rmnum_residual >= 0.0,
            "negative residual"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumReport {
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub routes: Vec<Vec<String>>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl NumReport {
    pub fn new(sol: &NumSolution, arc_ids: &[String]) -> Self {
        NumReport {
            p: sol.p.clone(),
            lambda: sol.lambda.clone(),
            x: sol.x.clone(),
            q: sol.q.clone(),
            routes: sol
                .routes
                .iter()
                .map(|r| r.iter().map(|&a| arc_ids[a].clone()).collect())
                .collect(),
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationReport {
    pub seed: u64,
    pub band: f64,
    pub within_band: bool,
    pub summary: ProtocolSummary,
}

/// Serializes with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EquilibriumReport {
        EquilibriumReport {
            lambda: vec![1.5, 1.5],
            w: vec![1.0, 1.0],
            x: vec![2.0],
            q: vec![0.5],
            objective: 0.1,
            grad_norm: 1e-9,
            rmnum_residual: 1e-10,
            iterations: 3,
        }
    }

    #[test]
    fn report_round_trips() {
        let r = sample();
        let text = to_json(&r).unwrap();
        let back: EquilibriumReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        back.validate().unwrap();
    }

    #[test]
    fn unknown_report_fields_are_rejected() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<EquilibriumReport>(v).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut r = sample();
        r.q[0] = -1.0;
        assert!(r.validate().is_err());
        let mut r = sample();
        r.w.pop();
        assert!(r.validate().is_err());
    }
}
