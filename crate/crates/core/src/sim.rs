//! Frame-loop campaign engine.
//!
//! Each frame: the transmitter picks a mode and MCS from the effective SNRs
//! and ACK/NAKs measured `d` frames earlier, the receiver measures the
//! current frame and predicts decoding, and the report is queued on the
//! return link. SNR points are independent and may run concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{ControllerParams, FeedbackChannel, Margin};
use crate::channel::{ChannelConfig, FadingChannel, FrameSource};
use crate::matrix::Polarization;
use crate::modes::{default_model, predict_from_snrs, select_mode, MimoMode, ModeModel, ModeTables, PmodModel};
use crate::phy::{predict_decode, AckNak};
use crate::units::LinearSnr;

/// Margin traces keep one sample every this many frames.
pub const TRACE_DECIMATION: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid simulation config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub avg_snr_db: Vec<f64>,
    pub frames_per_point: usize,
    pub symbols_per_frame: usize,
    pub frame_duration_s: f64,
    /// PMod symbol energy `|s|²`.
    pub symbol_energy: f64,
    /// Average each polarization's symbol SNR only over the symbols it
    /// actually carried, using a random hop pattern per frame.
    pub hop_weighted_symbols: bool,
    pub controller: ControllerParams,
    pub channel: ChannelConfig,
    pub modes: Vec<MimoMode>,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            avg_snr_db: (-5..=25).map(f64::from).collect(),
            frames_per_point: 40_000,
            symbols_per_frame: 2560,
            frame_duration_s: 0.08,
            symbol_energy: 1.0,
            hop_weighted_symbols: false,
            controller: ControllerParams::default(),
            channel: ChannelConfig::default(),
            modes: vec![MimoMode::Pmod],
            master_seed: 0,
        }
    }
}

impl SimConfig {
    /// Scaled-down setup used by the acceptance suite: 5000 frames of 256
    /// symbols with the same frame duration, so the fading per frame
    /// matches the full setup.
    pub fn ci() -> Self {
        SimConfig {
            frames_per_point: 5000,
            symbols_per_frame: 256,
            channel: ChannelConfig {
                symbol_rate_hz: 3200.0,
                ..ChannelConfig::default()
            },
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.avg_snr_db.is_empty() {
            return invalid("avg_snr_db is empty");
        }
        if let Some(bad) = self.avg_snr_db.iter().find(|v| !v.is_finite()) {
            return invalid(format!("avg_snr_db entry {bad} is not finite"));
        }
        if self.frames_per_point == 0 {
            return invalid("frames_per_point must be positive");
        }
        if self.symbols_per_frame == 0 {
            return invalid("symbols_per_frame must be positive");
        }
        if !(self.frame_duration_s > 0.0 && self.frame_duration_s.is_finite()) {
            return invalid(format!("frame_duration_s must be positive, got {}", self.frame_duration_s));
        }
        if !(self.symbol_energy > 0.0 && self.symbol_energy.is_finite()) {
            return invalid(format!("symbol_energy must be positive, got {}", self.symbol_energy));
        }
        self.controller.validate().map_err(ConfigError::Invalid)?;
        if self.controller.delay_frames == 0 {
            return invalid("delay_frames must be at least 1");
        }
        self.channel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let implied = self.symbols_per_frame as f64 / self.channel.symbol_rate_hz;
        if (implied / self.frame_duration_s - 1.0).abs() > 1e-6 {
            return invalid(format!(
                "symbols_per_frame / symbol_rate_hz = {implied} s does not match frame_duration_s = {}",
                self.frame_duration_s
            ));
        }
        if self.modes.is_empty() {
            return invalid("no MIMO mode enabled");
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return invalid(format!("mode {m} listed twice"));
            }
        }
        Ok(())
    }

    /// Seed of the point at `snr_db`; independent of the mode set so that
    /// different mode sets see the same channel realizations.
    pub fn point_seed(&self, snr_db: f64) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(snr_db.to_bits()))
    }

    fn pmod_model(&self) -> PmodModel {
        PmodModel {
            symbol_energy: self.symbol_energy,
            hop_weighted: self.hop_weighted_symbols,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What the receiver measured on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub mode: MimoMode,
    /// Selected MCS index per stream of `mode`.
    pub mcs: Vec<usize>,
    pub acks: Vec<AckNak>,
    /// Effective SNR per stream of `mode`, dB.
    pub effective_snrs_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSample {
    pub frame: usize,
    pub mode: MimoMode,
    pub margins_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMedians {
    pub mode: MimoMode,
    pub effective_snr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub snr_db: f64,
    pub seed: u64,
    pub frames: usize,
    /// Average spectral efficiency, bits/symbol.
    pub spectral_efficiency: f64,
    /// Cumulative FER over all frames (either stream failing).
    pub fer: f64,
    /// NAK rate of the first stream over all frames.
    pub fer_s: f64,
    /// NAK rate of the second stream over the frames that carried one.
    pub fer_p: f64,
    /// Same three rates over the last half of the frames.
    pub fer_window: f64,
    pub fer_s_window: f64,
    pub fer_p_window: f64,
    pub two_stream_frames: usize,
    pub below_range_frames: usize,
    /// Largest `r_S + r_P` selected on any frame.
    pub max_frame_se: f64,
    /// Symbol-table index of the first stream, every frame.
    pub mcs_hist_s: Vec<u64>,
    /// Polarization-table index on PMod frames.
    pub mcs_hist_p: Vec<u64>,
    /// Frames per mode, indexed like `MimoMode::ALL`.
    pub mode_hist: [u64; 4],
    pub modal_rate_s: f64,
    pub modal_rate_p: Option<f64>,
    pub median_effective_snr: Vec<ModeMedians>,
    pub margin_trace: Vec<MarginSample>,
}

impl PointMetrics {
    pub fn mode_share(&self, mode: MimoMode) -> f64 {
        self.mode_hist[mode.index()] as f64 / self.frames as f64
    }

    pub fn median_snr(&self, mode: MimoMode, stream: usize) -> Option<f64> {
        self.median_effective_snr
            .iter()
            .find(|m| m.mode == mode)
            .and_then(|m| m.effective_snr_db.get(stream).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignMetrics {
    pub modes: Vec<MimoMode>,
    pub master_seed: u64,
    pub points: Vec<PointMetrics>,
}

#[derive(Debug, Clone)]
struct Feedback {
    mode: MimoMode,
    acks: Vec<AckNak>,
    /// Measured effective SNRs per enabled mode, aligned with the config.
    snrs_db: Vec<Vec<f64>>,
}

/// Runs one SNR point on the configured fading channel.
pub fn run_point(config: &SimConfig, snr_db: f64) -> Result<PointMetrics, ConfigError> {
    config.validate()?;
    let seed = config.point_seed(snr_db);
    let mut channel = FadingChannel::new(ChannelConfig {
        seed: splitmix64(seed ^ config.channel.seed),
        ..config.channel.clone()
    })
    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(simulate(config, snr_db, &mut channel, None))
}

/// Runs one SNR point on an arbitrary frame source, optionally recording
/// every frame. The config is assumed valid.
pub fn simulate(
    config: &SimConfig,
    snr_db: f64,
    source: &mut dyn FrameSource,
    mut reports: Option<&mut Vec<FrameReport>>,
) -> PointMetrics {
    let gamma = LinearSnr::from_db(snr_db).expect("finite SNR");
    let seed = config.point_seed(snr_db);
    let mut hop_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 1));
    let tables = ModeTables::default();
    let params = &config.controller;
    let models: Vec<Box<dyn ModeModel>> = config.modes.iter().map(|&m| default_model(m, config.pmod_model())).collect();
    let mut margins = [[Margin::default(); 2]; 4];
    let mut feedback: FeedbackChannel<Option<Feedback>> = FeedbackChannel::new(params.delay_frames - 1, Some(None));
    let mut incoming: Option<Feedback> = None;

    let m = config.frames_per_point;
    let window_start = m / 2;
    let mut acc = Accumulator::new(&tables, config.modes.len(), m);
    let floor = vec![f64::NEG_INFINITY; 2];
    let mut hops = Vec::new();

    for frame in 0..m {
        if let Some(fb) = &incoming {
            for (k, &ack) in fb.acks.iter().enumerate() {
                margins[fb.mode.index()][k].update(ack, params);
            }
        }
        let predictions: Vec<_> = config
            .modes
            .iter()
            .enumerate()
            .map(|(j, &mode)| {
                let snrs = incoming.as_ref().map_or(&floor, |fb| &fb.snrs_db[j]);
                predict_from_snrs(mode, snrs, &margins[mode.index()], &tables)
            })
            .collect();
        let mode = select_mode(&predictions, &config.modes).expect("validated mode set");
        let chosen = predictions.iter().find(|p| p.mode == mode).expect("prediction per mode");

        let channel = source.next_frame(config.symbols_per_frame);
        let hop_pattern = if config.hop_weighted_symbols {
            hops.clear();
            hops.extend((0..channel.len()).map(|_| {
                if hop_rng.random::<bool>() {
                    Polarization::Second
                } else {
                    Polarization::First
                }
            }));
            Some(hops.as_slice())
        } else {
            None
        };
        let measured: Vec<Vec<f64>> = models.iter().map(|mdl| mdl.effective_snrs_db(gamma, &channel, hop_pattern)).collect();
        let used = config.modes.iter().position(|&x| x == mode).expect("enabled");
        let acks: Vec<AckNak> = chosen
            .selections
            .iter()
            .enumerate()
            .map(|(k, sel)| predict_decode(measured[used][k], &sel.entry))
            .collect();

        acc.record(frame, frame >= window_start, mode, chosen, &acks, &measured, &margins[mode.index()]);
        if let Some(out) = reports.as_deref_mut() {
            out.push(FrameReport {
                frame,
                mode,
                mcs: chosen.selections.iter().map(|s| s.index).collect(),
                acks: acks.clone(),
                effective_snrs_db: measured[used].clone(),
            });
        }

        feedback.push(Some(Feedback {
            mode,
            acks,
            snrs_db: measured,
        }));
        incoming = feedback.pop().expect("cold start default present");
    }
    acc.finish(snr_db, seed, &config.modes, &tables)
}

struct Accumulator {
    frames: usize,
    se_sum: f64,
    errors: [usize; 2],
    errors_s: [usize; 2],
    errors_p: [usize; 2],
    frames_in: [usize; 2],
    two_stream: [usize; 2],
    below_range: usize,
    max_frame_se: f64,
    hist_s: Vec<u64>,
    hist_p: Vec<u64>,
    mode_hist: [u64; 4],
    snrs: Vec<[Vec<f64>; 2]>,
    trace: Vec<MarginSample>,
}

impl Accumulator {
    fn new(tables: &ModeTables, n_modes: usize, m: usize) -> Self {
        Accumulator {
            frames: 0,
            se_sum: 0.0,
            errors: [0; 2],
            errors_s: [0; 2],
            errors_p: [0; 2],
            frames_in: [0; 2],
            two_stream: [0; 2],
            below_range: 0,
            max_frame_se: 0.0,
            hist_s: vec![0; tables.symbols.len()],
            hist_p: vec![0; tables.polarization.len()],
            mode_hist: [0; 4],
            snrs: (0..n_modes).map(|_| [Vec::with_capacity(m), Vec::with_capacity(m)]).collect(),
            trace: Vec::with_capacity(m / TRACE_DECIMATION + 1),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        frame: usize,
        late: bool,
        mode: MimoMode,
        chosen: &crate::modes::ModePrediction,
        acks: &[AckNak],
        measured: &[Vec<f64>],
        margins: &[Margin; 2],
    ) {
        let any_nak = acks.iter().any(|a| a.is_nak());
        self.frames += 1;
        if !any_nak {
            self.se_sum += chosen.predicted_se;
        }
        self.max_frame_se = self.max_frame_se.max(chosen.predicted_se);
        if chosen.selections.iter().any(|s| s.below_range) {
            self.below_range += 1;
        }
        let windows: &[usize] = if late { &[0, 1] } else { &[0] };
        for &w in windows {
            self.frames_in[w] += 1;
            self.errors[w] += usize::from(any_nak);
            self.errors_s[w] += usize::from(acks[0].is_nak());
            if acks.len() > 1 {
                self.two_stream[w] += 1;
                self.errors_p[w] += usize::from(acks[1].is_nak());
            }
        }
        self.hist_s[chosen.selections[0].index] += 1;
        if mode == MimoMode::Pmod {
            self.hist_p[chosen.selections[1].index] += 1;
        }
        self.mode_hist[mode.index()] += 1;
        for (j, snrs) in measured.iter().enumerate() {
            for (k, &v) in snrs.iter().enumerate() {
                self.snrs[j][k].push(v);
            }
        }
        if frame.is_multiple_of(TRACE_DECIMATION) {
            self.trace.push(MarginSample {
                frame,
                mode,
                margins_db: margins[..mode.streams()].iter().map(|m| m.db()).collect(),
            });
        }
    }

    fn finish(mut self, snr_db: f64, seed: u64, modes: &[MimoMode], tables: &ModeTables) -> PointMetrics {
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let median_effective_snr = modes
            .iter()
            .zip(self.snrs.iter_mut())
            .map(|(&mode, per_stream)| ModeMedians {
                mode,
                effective_snr_db: per_stream[..mode.streams()].iter_mut().map(|v| median(v)).collect(),
            })
            .collect();
        let modal_rate_s = tables.symbols.entries()[modal_index(&self.hist_s).expect("at least one frame")].coding_rate;
        let modal_rate_p = modal_index(&self.hist_p).map(|i| tables.polarization.entries()[i].coding_rate);
        PointMetrics {
            snr_db,
            seed,
            frames: self.frames,
            spectral_efficiency: self.se_sum / self.frames as f64,
            fer: rate(self.errors[0], self.frames_in[0]),
            fer_s: rate(self.errors_s[0], self.frames_in[0]),
            fer_p: rate(self.errors_p[0], self.two_stream[0]),
            fer_window: rate(self.errors[1], self.frames_in[1]),
            fer_s_window: rate(self.errors_s[1], self.frames_in[1]),
            fer_p_window: rate(self.errors_p[1], self.two_stream[1]),
            two_stream_frames: self.two_stream[0],
            below_range_frames: self.below_range,
            max_frame_se: self.max_frame_se,
            mcs_hist_s: self.hist_s,
            mcs_hist_p: self.hist_p,
            mode_hist: self.mode_hist,
            modal_rate_s,
            modal_rate_p,
            median_effective_snr,
            margin_trace: self.trace,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// Most frequent index; ties go to the lower index.
fn modal_index(hist: &[u64]) -> Option<usize> {
    let (i, &count) = hist.iter().enumerate().rev().max_by_key(|(_, &c)| c)?;
    (count > 0).then_some(i)
}

/// Runs every SNR point of the config, concurrently when `jobs` allows.
/// `None` uses the global thread pool.
pub fn run_campaign(config: &SimConfig, jobs: Option<usize>) -> Result<CampaignMetrics, ConfigError> {
    use rayon::prelude::*;
    config.validate()?;
    let work = || -> Result<Vec<PointMetrics>, ConfigError> {
        config.avg_snr_db.par_iter().map(|&snr| run_point(config, snr)).collect()
    };
    let points = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(CampaignMetrics {
        modes: config.modes.clone(),
        master_seed: config.master_seed,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::StaticChannel;
    use crate::matrix::ChannelMatrix;

    fn small(modes: Vec<MimoMode>) -> SimConfig {
        SimConfig {
            avg_snr_db: vec![5.0],
            frames_per_point: 400,
            symbols_per_frame: 32,
            frame_duration_s: 0.01,
            channel: ChannelConfig {
                symbol_rate_hz: 3200.0,
                ..ChannelConfig::default()
            },
            modes,
            ..SimConfig::default()
        }
    }

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        SimConfig::ci().validate().unwrap();
        small(MimoMode::ALL.to_vec()).validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = SimConfig::ci();
        let cases = [
            SimConfig { avg_snr_db: vec![], ..base.clone() },
            SimConfig { avg_snr_db: vec![f64::NAN], ..base.clone() },
            SimConfig { frames_per_point: 0, ..base.clone() },
            SimConfig { modes: vec![], ..base.clone() },
            SimConfig { modes: vec![MimoMode::Siso, MimoMode::Siso], ..base.clone() },
            SimConfig { symbols_per_frame: 255, ..base.clone() },
            SimConfig { symbol_energy: 0.0, ..base.clone() },
            SimConfig {
                controller: ControllerParams { delay_frames: 0, ..ControllerParams::default() },
                ..base.clone()
            },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn static_channel_saturates_pmod() {
        let cfg = SimConfig { avg_snr_db: vec![20.0], ..small(vec![MimoMode::Pmod]) };
        let mut src = StaticChannel(ChannelMatrix::diagonal(2f64.sqrt()));
        let mut reports = Vec::new();
        let m = simulate(&cfg, 20.0, &mut src, Some(&mut reports));
        let d = cfg.controller.delay_frames;
        for r in &reports[d..] {
            assert_eq!(r.mcs, vec![8, 8]);
            assert!(r.acks.iter().all(|a| !a.is_nak()));
        }
        for r in &reports[..d] {
            assert_eq!(r.mcs, vec![0, 0]);
        }
        assert_eq!(m.fer, 0.0);
        let want = (d as f64 * 0.78 + (cfg.frames_per_point - d) as f64 * 2.64) / cfg.frames_per_point as f64;
        assert!((m.spectral_efficiency - want).abs() < 1e-12);
    }

    #[test]
    fn histograms_sum_to_frames() {
        for modes in [vec![MimoMode::Pmod], MimoMode::ALL.to_vec()] {
            let cfg = small(modes.clone());
            let m = run_point(&cfg, 5.0).unwrap();
            assert_eq!(m.mode_hist.iter().sum::<u64>(), cfg.frames_per_point as u64);
            assert_eq!(m.mcs_hist_s.iter().sum::<u64>(), cfg.frames_per_point as u64);
            assert_eq!(m.mcs_hist_p.iter().sum::<u64>(), m.mode_hist[MimoMode::Pmod.index()]);
            assert!((0.0..=1.0).contains(&m.fer));
            assert!(m.spectral_efficiency >= 0.0 && m.spectral_efficiency <= m.max_frame_se + 1e-12);
            assert_eq!(m.margin_trace.len(), cfg.frames_per_point.div_ceil(TRACE_DECIMATION));
        }
    }

    #[test]
    fn hopeless_channel_gives_zero_se() {
        let cfg = small(vec![MimoMode::Pmod]);
        let mut src = StaticChannel(ChannelMatrix::ZERO);
        let m = simulate(&cfg, 5.0, &mut src, None);
        assert_eq!(m.fer, 1.0);
        assert_eq!(m.spectral_efficiency, 0.0);
    }

    #[test]
    fn single_point_campaign_matches_run_point() {
        let cfg = small(vec![MimoMode::Siso, MimoMode::Pmod]);
        let c = run_campaign(&cfg, Some(2)).unwrap();
        assert_eq!(c.points, vec![run_point(&cfg, 5.0).unwrap()]);
    }

    #[test]
    fn hop_weighted_option_runs() {
        let cfg = SimConfig { hop_weighted_symbols: true, ..small(vec![MimoMode::Pmod]) };
        let a = run_point(&cfg, 5.0).unwrap();
        assert_eq!(a, run_point(&cfg, 5.0).unwrap());
        assert_ne!(a, run_point(&small(vec![MimoMode::Pmod]), 5.0).unwrap());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut [f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_eq!(modal_index(&[1, 3, 3, 0]), Some(1));
        assert_eq!(modal_index(&[0, 0]), None);
    }
}
