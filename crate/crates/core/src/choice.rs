//! Expected-utility maps `φ(z) = E[min_a (z_a + ε_a)]` and their gradients.
//!
//! The gradient of `φ` at `z` is the vector of probabilities that each alternative is
//! the cheapest one after the noise is drawn, which is what drives next-hop routing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Euler–Mascheroni constant, the mean of a standard Gumbel variable.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChoiceModel {
    /// i.i.d. zero-mean Gumbel noise with scale `1/β`: `φ(z) = -(1/β) ln Σ exp(-β z_a)`.
    Logit { beta: f64 },
    /// No noise: `φ(z) = min z`. Ties split uniformly in the gradient.
    DeterministicMin,
}

fn check(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::Structural(
            "expected-utility map evaluated over an empty out-star".into(),
        ));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("choice", *bad, "arc labels must be finite"));
    }
    Ok(())
}

fn min_of(z: &[f64]) -> f64 {
    z.iter().copied().fold(f64::INFINITY, f64::min)
}

impl ChoiceModel {
    pub fn logit(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(ChoiceModel::Logit { beta })
        } else {
            Err(Error::InvalidInput(format!(
                "logit beta must be positive, got {beta}"
            )))
        }
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        check(z)?;
        Ok(self.value_unchecked(z))
    }

    pub(crate) fn value_unchecked(&self, z: &[f64]) -> f64 {
        let m = min_of(z);
        match *self {
            ChoiceModel::DeterministicMin => m,
            ChoiceModel::Logit { beta } => {
                if z.len() == 1 {
                    return z[0];
                }
                let s: f64 = z.iter().map(|&v| (-beta * (v - m)).exp()).sum();
                m - s.ln() / beta
            }
        }
    }

    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check(z)?;
        let mut out = vec![0.0; z.len()];
        self.gradient_into(z, &mut out);
        Ok(out)
    }

    /// Writes the choice probabilities for `z` into `out`.
    pub(crate) fn gradient_into(&self, z: &[f64], out: &mut [f64]) {
        let m = min_of(z);
        match *self {
            ChoiceModel::DeterministicMin => {
                let ties = z.iter().filter(|&&v| v == m).count() as f64;
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = if v == m { 1.0 / ties } else { 0.0 };
                }
            }
            ChoiceModel::Logit { beta } => {
                let mut s = 0.0;
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = (-beta * (v - m)).exp();
                    s += *o;
                }
                for o in out.iter_mut() {
                    *o /= s;
                }
            }
        }
    }

    /// Checks the defining properties of an expected-utility map at `z`.
    pub fn check_class_e(&self, z: &[f64], c: f64, tol: f64) -> ClassEReport {
        let (Ok(v), Ok(g)) = (self.value(z), self.gradient(z)) else {
            return ClassEReport::default();
        };
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        let translation = self
            .value(&shifted)
            .map(|vs| (vs - v - c).abs() <= tol * (1.0 + c.abs()))
            .unwrap_or(false);
        let bounded_by_min = v <= min_of(z) + tol;
        let sum: f64 = g.iter().sum();
        let gradient_simplex =
            g.iter().all(|&p| (-tol..=1.0 + tol).contains(&p)) && (sum - 1.0).abs() <= tol;
        let monotone = (0..z.len()).all(|a| {
            let mut bumped = z.to_vec();
            bumped[a] += 0.1;
            self.value(&bumped).map(|vb| vb >= v - tol).unwrap_or(false)
        });
        ClassEReport {
            translation,
            bounded_by_min,
            gradient_simplex,
            monotone,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEReport {
    pub translation: bool,
    pub bounded_by_min: bool,
    pub gradient_simplex: bool,
    pub monotone: bool,
}

impl ClassEReport {
    pub fn all_pass(&self) -> bool {
        self.translation && self.bounded_by_min && self.gradient_simplex && self.monotone
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Fraction of samples in which each alternative was the minimum.
    pub argmin_freq: Vec<f64>,
    pub samples: usize,
}

const MC_CHUNK: usize = 1 << 16;

/// Monte Carlo estimate of `E[min_a (z_a + ε_a)]` with zero-mean Gumbel noise of scale `1/β`.
///
/// Samples are drawn in fixed-size chunks, each with its own ChaCha stream derived from
/// `seed`, and reduced in chunk order, so the result does not depend on `exec`.
pub fn mc_oracle(
    beta: f64,
    z: &[f64],
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    check(z)?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let partial = exec.map_range(chunks, |ci| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ci as u64);
        let len = MC_CHUNK.min(n_samples - ci * MC_CHUNK);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut counts = vec![0u64; z.len()];
        for _ in 0..len {
            let (mut best, mut arg) = (f64::INFINITY, 0);
            for (a, &za) in z.iter().enumerate() {
                // Max-Gumbel G has mean γ; -(G - γ)/β is zero-mean and turns the argmax
                // of -βz + G into the argmin of z + ε.
                let g: f64 = gumbel.sample(&mut rng);
                let v = za - (g - EULER_GAMMA) / beta;
                if v < best {
                    best = v;
                    arg = a;
                }
            }
            sum += best;
            sum_sq += best * best;
            counts[arg] += 1;
        }
        (sum, sum_sq, counts)
    });
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut counts = vec![0u64; z.len()];
    for (s, s2, c) in partial {
        sum += s;
        sum_sq += s2;
        for (t, v) in counts.iter_mut().zip(c) {
            *t += v;
        }
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        argmin_freq: counts.iter().map(|&c| c as f64 / n).collect(),
        samples: n_samples,
    })
}

/// One zero-mean Gumbel perturbation of scale `1/β`.
pub(crate) fn sample_noise<R: Rng>(beta: f64, rng: &mut R) -> f64 {
    let g: f64 = Gumbel::new(0.0, 1.0).expect("unit Gumbel").sample(rng);
    -(g - EULER_GAMMA) / beta
}
