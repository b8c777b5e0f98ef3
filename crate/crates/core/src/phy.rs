//! Physical-layer abstraction: a frame's per-symbol channel realizations
//! are condensed into one effective SNR per codeword (QPSK symbols and
//! polarization bits) by averaging mutual information and inverting the
//! AWGN capacity curve. Decode success is a threshold comparison.

use serde::{Deserialize, Serialize};

use crate::adaptation::McsEntry;
use crate::capacity::{self, CapacityError};
use crate::matrix::{ChannelMatrix, FrameChannel, Polarization};
use crate::units::{linear_to_db, LinearSnr};

/// Mean symbol capacity is clamped here before inversion.
pub const SYMBOL_MEAN_CAP: f64 = capacity::SYMBOL_CAPACITY_MAX - 1e-6;
/// Mean polarization capacity is clamped here before inversion.
pub const POLARIZATION_MEAN_CAP: f64 = capacity::POLARIZATION_CAPACITY_MAX - 1e-9;

/// Outcome of decoding one codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AckNak {
    Ack,
    Nak,
}

impl AckNak {
    pub fn is_nak(self) -> bool {
        self == AckNak::Nak
    }

    /// `ε` in the margin recursion: 1 for NAK, 0 for ACK.
    pub fn epsilon(self) -> f64 {
        match self {
            AckNak::Ack => 0.0,
            AckNak::Nak => 1.0,
        }
    }
}

/// An effective SNR plus the diagnostics raised while computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedSnr {
    pub snr: LinearSnr,
    /// The mean capacity hit the clamp before inversion.
    pub saturated: bool,
    /// Symbols whose combining branch had zero gain.
    pub unrecoverable_symbols: usize,
}

impl MappedSnr {
    pub fn db(&self) -> f64 {
        self.snr.db()
    }

    pub fn linear(&self) -> f64 {
        self.snr.value()
    }
}

/// Effective SNRs of the two PMod codewords, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSnrPair {
    pub symbols_db: f64,
    pub polarization_db: f64,
}

/// Post-MRC SNR of a symbol sent on polarization `k`, in the expanded form
/// `γ·(|H1k|⁴ + |H2k|⁴ + 2|H1k|²|H2k|²)/(|H1k|² + |H2k|²)`.
///
/// A zero column returns 0.
pub fn mrc_symbol_snr(gamma: LinearSnr, h: &ChannelMatrix, k: Polarization) -> f64 {
    let c = k.index();
    let a = h.entry(0, c).norm_sqr();
    let b = h.entry(1, c).norm_sqr();
    let den = a + b;
    if den == 0.0 {
        return 0.0;
    }
    gamma.value() * (a * a + b * b + 2.0 * a * b) / den
}

/// Mutual-information effective SNR of a sequence of per-symbol SNRs on the
/// QPSK capacity curve: `Φ_S⁻¹(mean Φ_S(γ_n))`.
pub fn map_qpsk_snrs(snrs: impl IntoIterator<Item = f64>) -> MappedSnr {
    let mut total = 0.0;
    let mut n = 0usize;
    let mut unrecoverable = 0usize;
    for g in snrs {
        if g <= 0.0 {
            unrecoverable += 1;
        }
        total += capacity::phi_s_raw(g.max(0.0));
        n += 1;
    }
    let mean = if n == 0 { 0.0 } else { total / n as f64 };
    let saturated = mean > SYMBOL_MEAN_CAP;
    let mean = mean.clamp(0.0, SYMBOL_MEAN_CAP);
    let snr = capacity::phi_s_inv(mean).expect("clamped mean is inside the inverse domain");
    MappedSnr {
        snr,
        saturated,
        unrecoverable_symbols: unrecoverable,
    }
}

/// Effective SNR of polarization `k`'s symbols over all `N` snapshots.
pub fn effective_snr_symbols_on(gamma: LinearSnr, frame: &FrameChannel, k: Polarization) -> MappedSnr {
    map_qpsk_snrs(frame.snapshots().iter().map(|h| mrc_symbol_snr(gamma, h, k)))
}

/// Effective SNR of the symbol codeword: the worse of the two
/// polarizations, each mapped over the whole frame.
pub fn effective_snr_symbols(gamma: LinearSnr, frame: &FrameChannel) -> MappedSnr {
    let per_pol = Polarization::BOTH.map(|k| effective_snr_symbols_on(gamma, frame, k));
    worse(per_pol[0], per_pol[1])
}

/// Variant of [`effective_snr_symbols`] that averages each polarization
/// only over the symbol instants the hop pattern assigned to it. A
/// polarization that carried no symbols is left out of the min rule.
pub fn effective_snr_symbols_hopped(
    gamma: LinearSnr,
    frame: &FrameChannel,
    hops: &[Polarization],
) -> MappedSnr {
    assert_eq!(hops.len(), frame.len(), "one hop index per snapshot");
    let per_pol: Vec<MappedSnr> = Polarization::BOTH
        .iter()
        .filter(|&&k| hops.contains(&k))
        .map(|&k| {
            map_qpsk_snrs(
                frame
                    .snapshots()
                    .iter()
                    .zip(hops)
                    .filter(|(_, &hop)| hop == k)
                    .map(|(h, _)| mrc_symbol_snr(gamma, h, k)),
            )
        })
        .collect();
    per_pol.into_iter().reduce(worse).expect("frame is nonempty")
}

fn worse(a: MappedSnr, b: MappedSnr) -> MappedSnr {
    let mut out = if b.snr < a.snr { b } else { a };
    out.saturated = a.saturated && b.saturated;
    out.unrecoverable_symbols = a.unrecoverable_symbols.max(b.unrecoverable_symbols);
    out
}

/// Effective SNR of the polarization codeword:
/// `Φ_P⁻¹(mean_n I_P(H_n))` with the per-snapshot first-order bound.
pub fn effective_snr_polarization(
    gamma: LinearSnr,
    frame: &FrameChannel,
    symbol_energy: f64,
) -> Result<MappedSnr, CapacityError> {
    if !(symbol_energy > 0.0 && symbol_energy.is_finite()) {
        return Err(CapacityError::Domain {
            what: "symbol energy",
            value: symbol_energy,
        });
    }
    let scale = gamma.value() * symbol_energy;
    let total: f64 = frame
        .snapshots()
        .iter()
        .map(|h| capacity::ip_bound_from_exponent(scale * h.column_distance_sq()))
        .sum();
    let mean = total / frame.len() as f64;
    let saturated = mean > POLARIZATION_MEAN_CAP;
    let snr = capacity::phi_p_inv(mean.clamp(0.0, POLARIZATION_MEAN_CAP))?;
    Ok(MappedSnr {
        snr,
        saturated,
        unrecoverable_symbols: 0,
    })
}

/// Both PMod effective SNRs in dB.
pub fn effective_snr_pair(
    gamma: LinearSnr,
    frame: &FrameChannel,
    symbol_energy: f64,
) -> Result<EffectiveSnrPair, CapacityError> {
    Ok(EffectiveSnrPair {
        symbols_db: effective_snr_symbols(gamma, frame).db(),
        polarization_db: effective_snr_polarization(gamma, frame, symbol_energy)?.db(),
    })
}

/// A codeword decodes iff its effective SNR reaches the MCS threshold.
pub fn predict_decode(effective_snr_db: f64, mcs: &McsEntry) -> AckNak {
    if effective_snr_db >= mcs.threshold_db {
        AckNak::Ack
    } else {
        AckNak::Nak
    }
}

/// dB value of a linear SNR for feedback reports.
pub fn report_db(linear: f64) -> f64 {
    linear_to_db(linear)
}
