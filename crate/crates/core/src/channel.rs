//! Dual-polarized Rician fading with Doppler-correlated diffuse scattering.
//!
//! `H_n = √(K/(K+1))·H_LOS + √(1/(K+1))·D_n`, where the diffuse matrix
//! follows the AR(1) recursion `D_n = ρ·D_{n−1} + √(1−ρ²)·W_n` per symbol,
//! `ρ = J0(2π·f_D/R_s)`. Co-polar entries have unit mean power and
//! cross-polar entries `10^(−XPD/10)` in both the LOS and diffuse parts.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{ChannelMatrix, FrameChannel};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter {name} = {value}")]
    Invalid { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Linear Rician K factor; `inf` gives a pure LOS channel.
    pub rician_k: f64,
    /// Mean cross-polar discrimination in dB; `inf` removes coupling.
    pub xpd_db: f64,
    /// Maximum Doppler. Derived from speed and carrier when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doppler_hz: Option<f64>,
    /// Snapshot (symbol) rate.
    pub symbol_rate_hz: f64,
    pub carrier_hz: f64,
    pub speed_kmh: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            rician_k: 10.0,
            xpd_db: 15.0,
            doppler_hz: None,
            symbol_rate_hz: 32_000.0,
            carrier_hz: 1.6e9,
            speed_kmh: 50.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let checks: [(&'static str, f64, bool); 6] = [
            ("rician_k", self.rician_k, self.rician_k >= 0.0),
            ("xpd_db", self.xpd_db, !self.xpd_db.is_nan() && self.xpd_db != f64::NEG_INFINITY),
            ("doppler_hz", self.doppler_hz.unwrap_or(0.0), self.doppler_hz.is_none_or(|d| d >= 0.0 && d.is_finite())),
            ("symbol_rate_hz", self.symbol_rate_hz, self.symbol_rate_hz > 0.0 && self.symbol_rate_hz.is_finite()),
            ("carrier_hz", self.carrier_hz, self.carrier_hz >= 0.0 && self.carrier_hz.is_finite()),
            ("speed_kmh", self.speed_kmh, self.speed_kmh >= 0.0 && self.speed_kmh.is_finite()),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(ChannelError::Invalid { name, value });
            }
        }
        Ok(())
    }

    pub fn doppler(&self) -> f64 {
        self.doppler_hz
            .unwrap_or_else(|| derive_doppler(self.speed_kmh, self.carrier_hz))
    }

    /// Lag-one correlation of the diffuse component.
    pub fn correlation(&self) -> f64 {
        let fd = self.doppler();
        if fd == 0.0 {
            return 1.0;
        }
        bessel_j0(2.0 * PI * fd / self.symbol_rate_hz).clamp(0.0, 1.0 - 1e-15)
    }

    /// Cross-polar power relative to co-polar.
    pub fn cross_polar_power(&self) -> f64 {
        10f64.powf(-self.xpd_db / 10.0)
    }
}

/// Maximum Doppler shift `v·f/c` for a speed in km/h.
pub fn derive_doppler(speed_kmh: f64, carrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 12.0 {
        // Power series; terms alternate and stay well inside f64 range here.
        let q = -(ax * ax) / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..80 {
            term *= q / (m as f64 * m as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // Hankel asymptotic expansion.
        let z = 1.0 / ax;
        let z2 = z * z;
        let p = 1.0 - z2 * (9.0 / 128.0) + z2 * z2 * (3675.0 / 32768.0);
        let q = -z / 8.0 + z2 * z * (75.0 / 1024.0);
        let chi = ax - PI / 4.0;
        (2.0 / (PI * ax)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Anything that can hand out consecutive frames of channel snapshots.
pub trait FrameSource {
    fn next_frame(&mut self, n_symbols: usize) -> FrameChannel;
}

/// Stateful fading generator. One instance per link; continuity is kept
/// across frames.
#[derive(Debug, Clone)]
pub struct FadingChannel {
    config: ChannelConfig,
    rho: f64,
    innovation: f64,
    los: [[Complex64; 2]; 2],
    los_weight: f64,
    diffuse_weight: f64,
    entry_std: [[f64; 2]; 2],
    diffuse: [[Complex64; 2]; 2],
    rng: ChaCha8Rng,
}

impl FadingChannel {
    pub fn new(config: ChannelConfig) -> Result<Self, ChannelError> {
        config.validate()?;
        let rho = config.correlation();
        let cross_amp = 10f64.powf(-config.xpd_db / 20.0);
        let cross_std = cross_amp;
        let (los_weight, diffuse_weight) = if config.rician_k.is_infinite() {
            (1.0, 0.0)
        } else {
            let k = config.rician_k;
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        };
        let c = Complex64::new(cross_amp, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let mut ch = FadingChannel {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            rho,
            innovation: (1.0 - rho * rho).max(0.0).sqrt(),
            los: [[one, c], [c, one]],
            los_weight,
            diffuse_weight,
            entry_std: [[1.0, cross_std], [cross_std, 1.0]],
            diffuse: [[Complex64::new(0.0, 0.0); 2]; 2],
        };
        // Start from the stationary distribution.
        ch.diffuse = ch.draw_innovation();
        Ok(ch)
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn correlation(&self) -> f64 {
        self.rho
    }

    pub fn los(&self) -> ChannelMatrix {
        ChannelMatrix(self.los)
    }

    pub fn diffuse(&self) -> ChannelMatrix {
        ChannelMatrix(self.diffuse)
    }

    fn draw_innovation(&mut self) -> [[Complex64; 2]; 2] {
        let std = self.entry_std;
        let rng = &mut self.rng;
        std.map(|row| {
            row.map(|s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * (FRAC_1_SQRT_2 * s)
            })
        })
    }

    /// Advances the diffuse state by one symbol and returns the snapshot.
    pub fn next_snapshot(&mut self) -> ChannelMatrix {
        if self.rho < 1.0 {
            let w = self.draw_innovation();
            for (d_row, w_row) in self.diffuse.iter_mut().zip(w) {
                for (d, w) in d_row.iter_mut().zip(w_row) {
                    *d = *d * self.rho + w * self.innovation;
                }
            }
        }
        ChannelMatrix(std::array::from_fn(|r| {
            std::array::from_fn(|c| self.los[r][c] * self.los_weight + self.diffuse[r][c] * self.diffuse_weight)
        }))
    }
}

impl FrameSource for FadingChannel {
    fn next_frame(&mut self, n_symbols: usize) -> FrameChannel {
        assert!(n_symbols > 0, "frames span at least one symbol");
        FrameChannel::new((0..n_symbols).map(|_| self.next_snapshot()).collect())
            .expect("nonempty frame")
    }
}

/// Time-invariant channel: every snapshot equals `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticChannel(pub ChannelMatrix);

impl FrameSource for StaticChannel {
    fn next_frame(&mut self, n_symbols: usize) -> FrameChannel {
        static_channel(self.0, n_symbols)
    }
}

/// `n_symbols` identical snapshots of `h`.
pub fn static_channel(h: ChannelMatrix, n_symbols: usize) -> FrameChannel {
    assert!(n_symbols > 0, "frames span at least one symbol");
    FrameChannel::new(vec![h; n_symbols]).expect("nonempty frame")
}

/// Bytes per snapshot in a trace: 4 entries × (re, im) as little-endian f32,
/// row-major.
pub const TRACE_RECORD_BYTES: usize = 32;

pub fn write_trace<W: Write>(mut out: W, snapshots: &[ChannelMatrix]) -> io::Result<()> {
    let mut buf = [0u8; TRACE_RECORD_BYTES];
    for h in snapshots {
        for (i, z) in h.0.iter().flatten().enumerate() {
            buf[8 * i..8 * i + 4].copy_from_slice(&(z.re as f32).to_le_bytes());
            buf[8 * i + 4..8 * i + 8].copy_from_slice(&(z.im as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(mut input: R) -> io::Result<Vec<ChannelMatrix>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % TRACE_RECORD_BYTES != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("trace length {} is not a multiple of {TRACE_RECORD_BYTES}", bytes.len()),
        ));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    Ok(bytes
        .chunks_exact(TRACE_RECORD_BYTES)
        .map(|rec| {
            let z = |i: usize| Complex64::new(f(&rec[8 * i..]), f(&rec[8 * i + 4..]));
            ChannelMatrix([[z(0), z(1)], [z(2), z(3)]])
        })
        .collect())
}

/// Replays recorded snapshots frame by frame, wrapping at the end.
#[derive(Debug, Clone)]
pub struct TraceReplay {
    snapshots: Vec<ChannelMatrix>,
    cursor: usize,
}

impl TraceReplay {
    pub fn new(snapshots: Vec<ChannelMatrix>) -> Option<Self> {
        (!snapshots.is_empty()).then_some(TraceReplay { snapshots, cursor: 0 })
    }
}

impl FrameSource for TraceReplay {
    fn next_frame(&mut self, n_symbols: usize) -> FrameChannel {
        let snaps = (0..n_symbols)
            .map(|_| {
                let h = self.snapshots[self.cursor];
                self.cursor = (self.cursor + 1) % self.snapshots.len();
                h
            })
            .collect();
        FrameChannel::new(snaps).expect("nonempty frame")
    }
}
