//! Monte Carlo mutual-information estimators for discrete inputs on the
//! AWGN model `y = √γ·H·x + w`, `w ~ CN(0, I)`.
//!
//! Every estimator averages, over drawn (input, noise) pairs, the quantity
//! `log2 M − log2 Σ_j exp(|w|² − |y − x_j|²)`, where `x_j` runs over the
//! noiseless received points of the hypotheses the receiver must separate.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::CapacityError;
use crate::matrix::ChannelMatrix;
use crate::units::LinearSnr;

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub bits: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Half-width of the 95% normal confidence interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_error
    }
}

/// Unit-energy Gray QPSK.
pub fn qpsk() -> [Complex64; 4] {
    let a = FRAC_1_SQRT_2;
    [
        Complex64::new(a, a),
        Complex64::new(-a, a),
        Complex64::new(-a, -a),
        Complex64::new(a, -a),
    ]
}

fn complex_noise(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// `log2 Σ_j exp(|w|² − |y − x_j|²)` over 2-vectors, stabilized by the max term.
fn log2_sum_exp<'a>(
    y: [Complex64; 2],
    noise_energy: f64,
    points: impl Iterator<Item = &'a [Complex64; 2]> + Clone,
) -> f64 {
    let metric = |x: &[Complex64; 2]| noise_energy - (y[0] - x[0]).norm_sqr() - (y[1] - x[1]).norm_sqr();
    let max = points.clone().map(metric).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = points.map(|x| (metric(x) - max).exp()).sum();
    (max + sum.ln()) / LN_2
}

struct Accumulator {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator { sum: 0.0, sum_sq: 0.0, n: 0 }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.n += 1;
    }

    fn finish(self) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            bits: mean,
            std_error: (var / n).sqrt(),
            n_samples: self.n,
        }
    }
}

fn check_inputs(n_samples: usize, constellation: &[Complex64]) -> Result<(), CapacityError> {
    if n_samples == 0 {
        return Err(CapacityError::Domain {
            what: "sample count",
            value: 0.0,
        });
    }
    if constellation.is_empty() {
        return Err(CapacityError::Domain {
            what: "constellation size",
            value: 0.0,
        });
    }
    Ok(())
}

/// QPSK constrained capacity on the scalar AWGN channel `y = √γ·s + w`.
pub fn mc_qpsk_mi(gamma: LinearSnr, n_samples: usize, seed: u64) -> Result<McEstimate, CapacityError> {
    let constellation = qpsk();
    check_inputs(n_samples, &constellation)?;
    let amp = gamma.value().sqrt();
    let zero = Complex64::new(0.0, 0.0);
    let points: Vec<[Complex64; 2]> = constellation.iter().map(|&s| [amp * s, zero]).collect();
    let prior = (points.len() as f64).log2();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::new();
    for _ in 0..n_samples {
        let sent = rng.random_range(0..points.len());
        let w = complex_noise(&mut rng);
        let y = [points[sent][0] + w, zero];
        acc.push(prior - log2_sum_exp(y, w.norm_sqr(), points.iter()));
    }
    Ok(acc.finish())
}

/// Polarization-bit mutual information `I(y; l | s)` for an equiprobable
/// hop index `l ∈ {1, 2}` and equiprobable symbols: the receiver separates
/// `√γ·h1·s` from `√γ·h2·s` for the symbol actually sent.
///
/// This is the quantity the closed-form `phi_p` tracks on `√2·I`; the
/// blind variant `I(y; l)` is [`mc_polarization_mi_blind`].
pub fn mc_polarization_mi(
    gamma: LinearSnr,
    channel: &ChannelMatrix,
    constellation: &[Complex64],
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate, CapacityError> {
    check_inputs(n_samples, constellation)?;
    let amp = gamma.value().sqrt();
    let cols = [
        channel.column(crate::matrix::Polarization::First),
        channel.column(crate::matrix::Polarization::Second),
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::new();
    for _ in 0..n_samples {
        let s = constellation[rng.random_range(0..constellation.len())];
        let l = rng.random_range(0..2usize);
        let w = [complex_noise(&mut rng), complex_noise(&mut rng)];
        let hyp = cols.map(|h| [amp * h[0] * s, amp * h[1] * s]);
        let y = [hyp[l][0] + w[0], hyp[l][1] + w[1]];
        let noise_energy = w[0].norm_sqr() + w[1].norm_sqr();
        acc.push(1.0 - log2_sum_exp(y, noise_energy, hyp.iter()));
    }
    Ok(acc.finish())
}

/// Blind polarization-index information `I(y; l) = I(y; s, l) − I(y; s | l)`
/// with the symbol unknown at the receiver.
pub fn mc_polarization_mi_blind(
    gamma: LinearSnr,
    channel: &ChannelMatrix,
    constellation: &[Complex64],
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate, CapacityError> {
    check_inputs(n_samples, constellation)?;
    let amp = gamma.value().sqrt();
    let m = constellation.len();
    // Hypothesis j = l·M + s.
    let points: Vec<[Complex64; 2]> = crate::matrix::Polarization::BOTH
        .iter()
        .flat_map(|&k| {
            let h = channel.column(k);
            constellation.iter().map(move |&s| [amp * h[0] * s, amp * h[1] * s])
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::new();
    for _ in 0..n_samples {
        let s = rng.random_range(0..m);
        let l = rng.random_range(0..2usize);
        let w = [complex_noise(&mut rng), complex_noise(&mut rng)];
        let x = points[l * m + s];
        let y = [x[0] + w[0], x[1] + w[1]];
        let noise_energy = w[0].norm_sqr() + w[1].norm_sqr();
        let joint = log2_sum_exp(y, noise_energy, points.iter());
        let given_l = log2_sum_exp(y, noise_energy, points[l * m..(l + 1) * m].iter());
        acc.push(1.0 - joint + given_l);
    }
    Ok(acc.finish())
}
