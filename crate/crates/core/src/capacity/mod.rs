//! Closed-form capacity models for the two PMod information streams.
//!
//! `phi_s` is the QPSK constrained capacity on an AWGN channel (0..2 bits)
//! approximated by a two-exponential sum, `phi_p` the polarization-bit
//! capacity on the diagonal reference channel (0..1 bit). Both take linear
//! SNR. Monte Carlo oracles live in [`monte_carlo`], curve fitting in [`fit`].

pub mod fit;
pub mod monte_carlo;

use num_complex::Complex64;
use thiserror::Error;

use crate::units::LinearSnr;

pub use fit::{
    fit_exponential_capacity, fit_exponential_capacity_with, ExpFitModel, ExpTerm, FitError, FitOptions, FitReport, Saturation,
};
pub use monte_carlo::{mc_polarization_mi, mc_polarization_mi_blind, mc_qpsk_mi, qpsk, McEstimate};

/// Saturation of the QPSK symbol capacity.
pub const SYMBOL_CAPACITY_MAX: f64 = 2.0;
/// Saturation of the polarization-bit capacity.
pub const POLARIZATION_CAPACITY_MAX: f64 = 1.0;

pub const QPSK_SLOW_AMPLITUDE: f64 = 0.8551;
pub const QPSK_SLOW_RATE: f64 = 0.5718;
/// Printed as `1 − 0.8551`; kept as the literal.
pub const QPSK_FAST_AMPLITUDE: f64 = 0.1449;
pub const QPSK_FAST_RATE: f64 = 1.55;
pub const POLARIZATION_RATE: f64 = 1.30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("capacity {bits} bits is at or beyond saturation {limit} bits")]
    Saturated { bits: f64, limit: f64 },
    #[error("root finder failed to converge for {bits} bits")]
    NoConvergence { bits: f64 },
}

/// QPSK constrained capacity on AWGN, in bits per channel use.
pub fn phi_s(gamma: LinearSnr) -> f64 {
    phi_s_raw(gamma.value())
}

pub(crate) fn phi_s_raw(g: f64) -> f64 {
    SYMBOL_CAPACITY_MAX * (1.0 - phi_s_tail(g))
}

/// `1 − phi_s/2`, evaluated without cancellation.
fn phi_s_tail(g: f64) -> f64 {
    QPSK_SLOW_AMPLITUDE * (-QPSK_SLOW_RATE * g).exp() + QPSK_FAST_AMPLITUDE * (-QPSK_FAST_RATE * g).exp()
}

fn phi_s_derivative(g: f64) -> f64 {
    SYMBOL_CAPACITY_MAX
        * (QPSK_SLOW_AMPLITUDE * QPSK_SLOW_RATE * (-QPSK_SLOW_RATE * g).exp()
            + QPSK_FAST_AMPLITUDE * QPSK_FAST_RATE * (-QPSK_FAST_RATE * g).exp())
}

/// `2 − phi_s(γ)`: the capacity deficit, exact far into saturation where
/// `phi_s` itself rounds to 2.
pub fn phi_s_deficit(gamma: LinearSnr) -> f64 {
    SYMBOL_CAPACITY_MAX * phi_s_tail(gamma.value())
}

/// Polarization-bit capacity on the diagonal reference channel.
pub fn phi_p(gamma: LinearSnr) -> f64 {
    phi_p_raw(gamma.value())
}

pub(crate) fn phi_p_raw(g: f64) -> f64 {
    -(-POLARIZATION_RATE * g).exp_m1()
}

/// Inverse of [`phi_s`] for `0 ≤ bits < 2`.
pub fn phi_s_inv(bits: f64) -> Result<LinearSnr, CapacityError> {
    if bits.is_nan() || bits < 0.0 {
        return Err(CapacityError::Domain {
            what: "symbol capacity",
            value: bits,
        });
    }
    if bits >= SYMBOL_CAPACITY_MAX {
        return Err(CapacityError::Saturated {
            bits,
            limit: SYMBOL_CAPACITY_MAX,
        });
    }
    phi_s_inv_from_deficit(SYMBOL_CAPACITY_MAX - bits)
}

/// Inverse of [`phi_s_deficit`] for `0 < deficit ≤ 2`.
pub fn phi_s_inv_from_deficit(deficit: f64) -> Result<LinearSnr, CapacityError> {
    if deficit.is_nan() || deficit > SYMBOL_CAPACITY_MAX {
        return Err(CapacityError::Domain {
            what: "symbol capacity deficit",
            value: deficit,
        });
    }
    if deficit <= 0.0 {
        return Err(CapacityError::Saturated {
            bits: SYMBOL_CAPACITY_MAX - deficit,
            limit: SYMBOL_CAPACITY_MAX,
        });
    }
    if deficit == SYMBOL_CAPACITY_MAX {
        return Ok(LinearSnr::ZERO);
    }
    // Solve tail(γ) = deficit/2 on the log scale, where the slow exponential
    // makes the residual nearly linear in γ.
    let target = (deficit / SYMBOL_CAPACITY_MAX).ln();
    let residual = |g: f64| phi_s_tail(g).ln() - target;

    let mut lo = 0.0;
    let mut hi = 1e4;
    while residual(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(CapacityError::NoConvergence {
                bits: SYMBOL_CAPACITY_MAX - deficit,
            });
        }
    }
    let mut g = (-target / QPSK_SLOW_RATE).clamp(lo, hi);
    for _ in 0..200 {
        let r = residual(g);
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        // d/dγ ln tail = −(a1 b1 e1 + a2 b2 e2)/tail
        let slope = -phi_s_derivative(g) / (SYMBOL_CAPACITY_MAX * phi_s_tail(g));
        let newton = g - r / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - g).abs() <= 1e-15 * g.max(1.0) || hi - lo <= 1e-15 * hi.max(1.0) {
            g = next;
            break;
        }
        g = next;
    }
    LinearSnr::new(g)
}

/// Closed-form inverse of [`phi_p`] for `0 ≤ bits < 1`.
pub fn phi_p_inv(bits: f64) -> Result<LinearSnr, CapacityError> {
    if bits.is_nan() || bits < 0.0 {
        return Err(CapacityError::Domain {
            what: "polarization capacity",
            value: bits,
        });
    }
    if bits >= POLARIZATION_CAPACITY_MAX {
        return Err(CapacityError::Saturated {
            bits,
            limit: POLARIZATION_CAPACITY_MAX,
        });
    }
    LinearSnr::new(-(-bits).ln_1p() / POLARIZATION_RATE)
}

/// First-order polarization-bit capacity approximation for one channel use:
/// `log2(2 / (1 + exp(−γ·|s|²·‖h1 − h2‖²)))`. Always in `[0, 1]`.
pub fn pmod_ip_bound(
    gamma: LinearSnr,
    symbol_energy: f64,
    h1: [Complex64; 2],
    h2: [Complex64; 2],
) -> Result<f64, CapacityError> {
    if !(symbol_energy > 0.0 && symbol_energy.is_finite()) {
        return Err(CapacityError::Domain {
            what: "symbol energy",
            value: symbol_energy,
        });
    }
    let distance = (h1[0] - h2[0]).norm_sqr() + (h1[1] - h2[1]).norm_sqr();
    Ok(ip_bound_from_exponent(gamma.value() * symbol_energy * distance))
}

/// `1 − log2(1 + e^{−x})`, i.e. the bound for exponent `x = γ|s|²‖h1−h2‖²`.
pub(crate) fn ip_bound_from_exponent(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    -((-x).exp_m1() / 2.0).ln_1p() / std::f64::consts::LN_2
}
