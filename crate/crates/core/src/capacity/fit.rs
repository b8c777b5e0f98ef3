//! Nonlinear least-squares fitting of saturating exponential capacity
//! models `bits ≈ S·(1 − Σ aᵢ·exp(−bᵢ·γ))` with `Σ aᵢ = 1`.
//!
//! The solver is a damped Gauss-Newton (Levenberg-Marquardt) iteration over
//! transformed parameters: `ln S`, `ln bᵢ` and softmax logits for the
//! amplitudes, which keeps decay rates and saturation positive and the
//! amplitudes on the simplex without explicit constraints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    POLARIZATION_RATE, QPSK_FAST_AMPLITUDE, QPSK_FAST_RATE, QPSK_SLOW_AMPLITUDE, QPSK_SLOW_RATE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub amplitude: f64,
    pub decay_rate: f64,
}

/// `saturation · (1 − Σ amplitude·exp(−decay_rate·γ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFitModel {
    pub saturation: f64,
    pub terms: Vec<ExpTerm>,
}

impl ExpFitModel {
    /// The published QPSK symbol-capacity model.
    pub fn qpsk_reference() -> Self {
        ExpFitModel {
            saturation: 2.0,
            terms: vec![
                ExpTerm { amplitude: QPSK_SLOW_AMPLITUDE, decay_rate: QPSK_SLOW_RATE },
                ExpTerm { amplitude: QPSK_FAST_AMPLITUDE, decay_rate: QPSK_FAST_RATE },
            ],
        }
    }

    /// The published polarization-bit capacity model.
    pub fn polarization_reference() -> Self {
        ExpFitModel {
            saturation: 1.0,
            terms: vec![ExpTerm { amplitude: 1.0, decay_rate: POLARIZATION_RATE }],
        }
    }

    pub fn eval(&self, gamma: f64) -> f64 {
        let tail: f64 = self
            .terms
            .iter()
            .map(|t| t.amplitude * (-t.decay_rate * gamma).exp())
            .sum();
        self.saturation * (1.0 - tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    /// Fit the asymptote along with the exponentials.
    Free,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub saturation: Saturation,
    pub max_iterations: usize,
    /// Relative cost decrease below which the iteration stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            saturation: Saturation::Free,
            max_iterations: 500,
            tolerance: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: ExpFitModel,
    pub rms_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples span {span_db:.1} dB, need at least {needed_db} dB")]
    InsufficientSpan { span_db: f64, needed_db: f64 },
    #[error("sample SNRs must be finite, nonnegative and strictly increasing")]
    NotMonotone,
    #[error("term count must be positive")]
    NoTerms,
    #[error("degenerate samples: {0}")]
    Degenerate(&'static str),
    #[error("no convergence after {} iterations (rms {:.3e})", .best.iterations, .best.rms_residual)]
    NoConvergence { best: FitReport },
}

pub const MIN_SAMPLES: usize = 10;
pub const MIN_SPAN_DB: f64 = 20.0;

/// Fits `n_terms` exponentials to `(γ, bits)` samples with a free
/// saturation level.
pub fn fit_exponential_capacity(samples: &[(f64, f64)], n_terms: usize) -> Result<FitReport, FitError> {
    fit_exponential_capacity_with(samples, n_terms, &FitOptions::default())
}

pub fn fit_exponential_capacity_with(
    samples: &[(f64, f64)],
    n_terms: usize,
    options: &FitOptions,
) -> Result<FitReport, FitError> {
    validate(samples, n_terms)?;
    let param = Parameterization {
        n_terms,
        saturation: options.saturation,
    };
    let mut theta = param.initial(samples);
    let mut cost = param.cost(&theta, samples);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (jac, res) = param.jacobian(&theta, samples);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &res;
        if grad.amax() <= 1e-15 {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = solve(damped, &grad) else {
                lambda *= 4.0;
                continue;
            };
            let trial = &theta + &step;
            let trial_cost = param.cost(&trial, samples);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.amax() <= 1e-12 * (1.0 + theta.amax());
                theta = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel <= options.tolerance || small_step || cost <= 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let report = FitReport {
        model: param.model(&theta),
        rms_residual: (cost / samples.len() as f64).sqrt(),
        iterations,
    };
    if converged {
        Ok(report)
    } else {
        Err(FitError::NoConvergence { best: report })
    }
}

fn validate(samples: &[(f64, f64)], n_terms: usize) -> Result<(), FitError> {
    if n_terms == 0 {
        return Err(FitError::NoTerms);
    }
    if samples.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let ordered = samples
        .windows(2)
        .all(|w| w[1].0 > w[0].0)
        && samples
            .iter()
            .all(|&(g, b)| g.is_finite() && g >= 0.0 && b.is_finite());
    if !ordered {
        return Err(FitError::NotMonotone);
    }
    let lo = samples
        .iter()
        .map(|s| s.0)
        .find(|&g| g > 0.0)
        .unwrap_or(0.0);
    let hi = samples[samples.len() - 1].0;
    let span_db = if samples[0].0 == 0.0 && hi > 0.0 {
        f64::INFINITY
    } else if lo > 0.0 {
        10.0 * (hi / lo).log10()
    } else {
        0.0
    };
    if span_db < MIN_SPAN_DB {
        return Err(FitError::InsufficientSpan {
            span_db,
            needed_db: MIN_SPAN_DB,
        });
    }
    let peak = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if peak <= 1e-12 {
        return Err(FitError::Degenerate("no positive capacity values"));
    }
    Ok(())
}

fn solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match a.clone().cholesky() {
        Some(chol) => Some(chol.solve(b)),
        None => a.lu().solve(b),
    }
    .filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Layout of θ: `[ln S]? ++ [ln b_1..ln b_n] ++ [z_2..z_n]` with amplitudes
/// `softmax(0, z_2, .., z_n)`.
struct Parameterization {
    n_terms: usize,
    saturation: Saturation,
}

impl Parameterization {
    fn offset(&self) -> usize {
        match self.saturation {
            Saturation::Free => 1,
            Saturation::Fixed(_) => 0,
        }
    }

    fn len(&self) -> usize {
        self.offset() + 2 * self.n_terms - 1
    }

    fn initial(&self, samples: &[(f64, f64)]) -> DVector<f64> {
        let mut theta = DVector::zeros(self.len());
        if let Saturation::Free = self.saturation {
            let peak = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            theta[0] = peak.ln();
        }
        // Decay rates log-spaced over [0.1, 3] (cell midpoints), equal amplitudes.
        let n = self.n_terms as f64;
        for i in 0..self.n_terms {
            let b = 0.1 * 30f64.powf((i as f64 + 0.5) / n);
            theta[self.offset() + i] = b.ln();
        }
        theta
    }

    fn unpack(&self, theta: &DVector<f64>) -> (f64, Vec<f64>, Vec<f64>) {
        let s = match self.saturation {
            Saturation::Free => theta[0].exp(),
            Saturation::Fixed(s) => s,
        };
        let o = self.offset();
        let rates: Vec<f64> = (0..self.n_terms).map(|i| theta[o + i].exp()).collect();
        let logits: Vec<f64> = std::iter::once(0.0)
            .chain((1..self.n_terms).map(|j| theta[o + self.n_terms + j - 1]))
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = w.iter().sum();
        (s, rates, w.into_iter().map(|v| v / total).collect())
    }

    fn model(&self, theta: &DVector<f64>) -> ExpFitModel {
        let (saturation, rates, amps) = self.unpack(theta);
        let mut terms: Vec<ExpTerm> = amps
            .into_iter()
            .zip(rates)
            .map(|(amplitude, decay_rate)| ExpTerm { amplitude, decay_rate })
            .collect();
        terms.sort_by(|a, b| a.decay_rate.total_cmp(&b.decay_rate));
        ExpFitModel { saturation, terms }
    }

    fn cost(&self, theta: &DVector<f64>, samples: &[(f64, f64)]) -> f64 {
        let model = self.model(theta);
        samples
            .iter()
            .map(|&(g, y)| (y - model.eval(g)).powi(2))
            .sum()
    }

    /// Jacobian of the model (not the residual) and the residual vector.
    fn jacobian(&self, theta: &DVector<f64>, samples: &[(f64, f64)]) -> (DMatrix<f64>, DVector<f64>) {
        let (s, rates, amps) = self.unpack(theta);
        let o = self.offset();
        let n = self.n_terms;
        let mut jac = DMatrix::zeros(samples.len(), self.len());
        let mut res = DVector::zeros(samples.len());
        let mut e = vec![0.0; n];
        for (row, &(g, y)) in samples.iter().enumerate() {
            for i in 0..n {
                e[i] = (-rates[i] * g).exp();
            }
            let tail: f64 = amps.iter().zip(&e).map(|(a, e)| a * e).sum();
            let f = s * (1.0 - tail);
            res[row] = y - f;
            if o == 1 {
                jac[(row, 0)] = f;
            }
            for i in 0..n {
                jac[(row, o + i)] = s * amps[i] * g * rates[i] * e[i];
            }
            for j in 1..n {
                jac[(row, o + n + j - 1)] = -s * amps[j] * (e[j] - tail);
            }
        }
        (jac, res)
    }
}
