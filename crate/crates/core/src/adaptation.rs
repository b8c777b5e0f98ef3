//! Dual-LUT MCS selection with independent outer-loop margins.
//!
//! Each stream (QPSK symbols, polarization bits) has its own MCS table and
//! its own dB margin. The transmitter adds the margin to the effective SNR
//! reported `d` frames ago and picks the fastest MCS whose threshold is
//! reached. Margins move by `−μ(ε − p0/2)` per acknowledgement, so each
//! stream settles where its NAK rate is `p0/2`.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity;
use crate::phy::AckNak;
use crate::units::db_to_linear;

/// Margins are clamped to `±MARGIN_LIMIT_DB`.
pub const MARGIN_LIMIT_DB: f64 = 20.0;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("MCS table is empty")]
    Empty,
    #[error("MCS table row {row}: rates and thresholds must both strictly increase")]
    NotIncreasing { row: usize },
    #[error("MCS table row {row}: coding rate {rate} outside (0, 1)")]
    BadRate { row: usize, rate: f64 },
    #[error("MCS table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading MCS table: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeedbackError {
    #[error("feedback requested before any was delivered and no cold-start default is configured")]
    NoColdStartDefault,
}

/// Which codeword of a frame a table or margin applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    /// QPSK symbol codeword.
    Symbols,
    /// Polarization-hop codeword.
    Polarization,
}

impl StreamKind {
    /// AWGN capacity curve the table thresholds refer to.
    pub fn capacity_at_db(self, snr_db: f64) -> f64 {
        let g = db_to_linear(snr_db);
        match self {
            StreamKind::Symbols => capacity::phi_s_raw(g),
            StreamKind::Polarization => capacity::phi_p_raw(g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub coding_rate: f64,
    /// Information bits per channel use carried by this stream.
    pub spectral_efficiency: f64,
    pub threshold_db: f64,
}

/// MCS entries sorted by threshold, fastest last.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

const SYMBOL_RATES: [f64; 9] = [0.34, 0.40, 0.48, 0.55, 0.63, 0.70, 0.77, 0.83, 0.87];
const SYMBOL_SE: [f64; 9] = [0.68, 0.80, 0.96, 1.10, 1.26, 1.40, 1.54, 1.66, 1.74];
const SYMBOL_THRESHOLDS_DB: [f64; 9] = [-2.15, -1.21, -0.09, 0.83, 1.84, 2.74, 3.67, 4.54, 5.19];
const POLARIZATION_RATES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const POLARIZATION_THRESHOLDS_DB: [f64; 9] = [-10.91, -7.03, -5.02, -4.00, -2.13, -1.32, -0.55, 0.93, 2.40];

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self, TableError> {
        if entries.is_empty() {
            return Err(TableError::Empty);
        }
        for (row, e) in entries.iter().enumerate() {
            if !(e.coding_rate > 0.0 && e.coding_rate < 1.0) {
                return Err(TableError::BadRate { row, rate: e.coding_rate });
            }
            if !e.threshold_db.is_finite() || !e.spectral_efficiency.is_finite() {
                return Err(TableError::NotIncreasing { row });
            }
        }
        for (row, w) in entries.windows(2).enumerate() {
            if !(w[1].coding_rate > w[0].coding_rate && w[1].threshold_db > w[0].threshold_db) {
                return Err(TableError::NotIncreasing { row: row + 1 });
            }
        }
        Ok(McsTable { entries })
    }

    /// QPSK symbol MCS set (spectral efficiency = 2 × coding rate).
    pub fn symbols_default() -> Self {
        let entries = (0..9)
            .map(|i| McsEntry {
                coding_rate: SYMBOL_RATES[i],
                spectral_efficiency: SYMBOL_SE[i],
                threshold_db: SYMBOL_THRESHOLDS_DB[i],
            })
            .collect();
        McsTable { entries }
    }

    /// Polarization-bit MCS set (spectral efficiency = coding rate).
    pub fn polarization_default() -> Self {
        let entries = (0..9)
            .map(|i| McsEntry {
                coding_rate: POLARIZATION_RATES[i],
                spectral_efficiency: POLARIZATION_RATES[i],
                threshold_db: POLARIZATION_THRESHOLDS_DB[i],
            })
            .collect();
        McsTable { entries }
    }

    pub fn default_for(kind: StreamKind) -> Self {
        match kind {
            StreamKind::Symbols => Self::symbols_default(),
            StreamKind::Polarization => Self::polarization_default(),
        }
    }

    /// Parses `rate spectral_efficiency threshold_db` rows separated by
    /// whitespace or commas. `#` starts a comment; one leading header row
    /// of non-numeric labels is allowed.
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut entries = Vec::new();
        let mut seen_row = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => {
                    entries.push(McsEntry {
                        coding_rate: v[0],
                        spectral_efficiency: v[1],
                        threshold_db: v[2],
                    });
                    seen_row = true;
                }
                Ok(v) => {
                    return Err(TableError::Parse {
                        line: idx + 1,
                        message: format!("expected 3 columns, found {}", v.len()),
                    })
                }
                Err(_) if !seen_row && entries.is_empty() && fields.iter().all(|f| f.parse::<f64>().is_err()) => {
                    seen_row = true;
                }
                Err(e) => {
                    return Err(TableError::Parse {
                        line: idx + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lowest(&self) -> &McsEntry {
        &self.entries[0]
    }

    pub fn highest(&self) -> &McsEntry {
        &self.entries[self.entries.len() - 1]
    }

    /// `|Φ(threshold) − target|` per row, with target the spectral
    /// efficiency for symbols and the coding rate for polarization bits.
    pub fn consistency(&self, kind: StreamKind) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| {
                let target = match kind {
                    StreamKind::Symbols => e.spectral_efficiency,
                    StreamKind::Polarization => e.coding_rate,
                };
                (kind.capacity_at_db(e.threshold_db) - target).abs()
            })
            .collect()
    }
}

impl fmt::Display for McsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:.2} {:.2} {:.2}", e.coding_rate, e.spectral_efficiency, e.threshold_db)?;
        }
        Ok(())
    }
}

/// Result of a LUT lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutSelection {
    pub index: usize,
    pub entry: McsEntry,
    /// The input SNR was below every threshold; the most protected MCS was
    /// returned anyway.
    pub below_range: bool,
}

/// Highest-rate entry whose threshold is at or below `snr_db`.
pub fn lut_lookup(table: &McsTable, snr_db: f64) -> LutSelection {
    let reached = table
        .entries
        .partition_point(|e| e.threshold_db <= snr_db);
    match reached {
        0 => LutSelection {
            index: 0,
            entry: table.entries[0],
            below_range: true,
        },
        n => LutSelection {
            index: n - 1,
            entry: table.entries[n - 1],
            below_range: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    /// Adaptation step `μ`, dB per unit error.
    pub mu: f64,
    /// Target global frame error rate `p0`; each stream aims at `p0/2`.
    pub p0: f64,
    /// Feedback round trip `d`, in frames.
    pub delay_frames: usize,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            mu: 0.05,
            p0: 0.01,
            delay_frames: 7,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(format!("p0 must lie in (0, 1), got {}", self.p0));
        }
        Ok(())
    }
}

/// One outer-loop margin in dB.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Margin(f64);

impl Margin {
    pub fn new(db: f64) -> Self {
        Margin(db.clamp(-MARGIN_LIMIT_DB, MARGIN_LIMIT_DB))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    /// `c ← clamp(c − μ(ε − p0/2))`.
    pub fn update(&mut self, outcome: AckNak, params: &ControllerParams) {
        *self = Margin::new(self.0 - params.mu * (outcome.epsilon() - params.p0 / 2.0));
    }
}

/// Receiver report for one PMod frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub frame_index: u64,
    pub eff_snr_s_db: f64,
    pub eff_snr_p_db: f64,
    pub ack_s: AckNak,
    pub ack_p: AckNak,
}

/// Controller state of a PMod link: one margin per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationState {
    pub margin_s: Margin,
    pub margin_p: Margin,
    pub params: ControllerParams,
    pub table_s: McsTable,
    pub table_p: McsTable,
}

impl AdaptationState {
    pub fn new(params: ControllerParams) -> Self {
        AdaptationState {
            margin_s: Margin::default(),
            margin_p: Margin::default(),
            params,
            table_s: McsTable::symbols_default(),
            table_p: McsTable::polarization_default(),
        }
    }

    /// MCS pair for the current frame from the feedback of frame `i − d`.
    pub fn select_mcs(&self, fb: &FeedbackRecord) -> (LutSelection, LutSelection) {
        (
            lut_lookup(&self.table_s, fb.eff_snr_s_db + self.margin_s.db()),
            lut_lookup(&self.table_p, fb.eff_snr_p_db + self.margin_p.db()),
        )
    }

    /// Each margin moves only with its own stream's acknowledgement.
    pub fn update_margins(&mut self, ack_s: AckNak, ack_p: AckNak) {
        self.margin_s.update(ack_s, &self.params);
        self.margin_p.update(ack_p, &self.params);
    }
}

/// Fixed-delay feedback path. A record pushed at frame `i` is popped at
/// frame `i + d` (push first, then pop, within a frame). Until then the
/// cold-start default is returned.
#[derive(Debug, Clone)]
pub struct FeedbackChannel<T> {
    delay: usize,
    queue: VecDeque<T>,
    cold_start: Option<T>,
}

impl<T: Clone> FeedbackChannel<T> {
    pub fn new(delay: usize, cold_start: Option<T>) -> Self {
        FeedbackChannel {
            delay,
            queue: VecDeque::with_capacity(delay + 1),
            cold_start,
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn push(&mut self, record: T) {
        self.queue.push_back(record);
    }

    pub fn pop(&mut self) -> Result<T, FeedbackError> {
        if self.queue.len() > self.delay {
            Ok(self.queue.pop_front().expect("queue longer than delay"))
        } else {
            self.cold_start.clone().ok_or(FeedbackError::NoColdStartDefault)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fb(s: f64, p: f64) -> FeedbackRecord {
        FeedbackRecord {
            frame_index: 0,
            eff_snr_s_db: s,
            eff_snr_p_db: p,
            ack_s: AckNak::Ack,
            ack_p: AckNak::Ack,
        }
    }

    #[test]
    fn default_tables_reproduce_printed_values() {
        let s = McsTable::symbols_default();
        assert_eq!(s.len(), 9);
        for e in s.entries() {
            assert!((e.spectral_efficiency - 2.0 * e.coding_rate).abs() < 1e-12);
        }
        assert_eq!(s.lowest().threshold_db, -2.15);
        assert_eq!(s.highest().threshold_db, 5.19);
        let p = McsTable::polarization_default();
        assert_eq!(p.len(), 9);
        assert_eq!(p.lowest().threshold_db, -10.91);
        assert_eq!(p.highest().coding_rate, 0.9);
        assert!(McsTable::new(s.entries().to_vec()).is_ok());
        assert!(McsTable::new(p.entries().to_vec()).is_ok());
    }

    #[test]
    fn table_consistency_with_capacity_curves() {
        for d in McsTable::symbols_default().consistency(StreamKind::Symbols) {
            assert!(d <= 0.01, "{d}");
        }
        for d in McsTable::polarization_default().consistency(StreamKind::Polarization) {
            assert!(d <= 0.06, "{d}");
        }
    }

    #[test]
    fn lookup_examples() {
        let s = McsTable::symbols_default();
        assert_eq!(lut_lookup(&s, -2.15).entry.coding_rate, 0.34);
        assert!(!lut_lookup(&s, -2.15).below_range);
        assert_eq!(lut_lookup(&s, 6.0).entry.coding_rate, 0.87);
        let p = McsTable::polarization_default();
        let low = lut_lookup(&p, -15.0);
        assert_eq!(low.entry.coding_rate, 0.1);
        assert!(low.below_range);
        assert!(lut_lookup(&p, f64::NEG_INFINITY).below_range);
    }

    #[test]
    fn select_examples() {
        let mut st = AdaptationState::new(ControllerParams::default());
        let (ms, _) = st.select_mcs(&fb(1.0, 0.0));
        assert_eq!(ms.entry.coding_rate, 0.55);
        st.margin_p = Margin::new(-0.5);
        let (_, mp) = st.select_mcs(&fb(0.0, 2.40));
        assert_eq!(mp.entry.coding_rate, 0.8);
        st.margin_s = Margin::new(100.0);
        assert_eq!(st.margin_s.db(), 20.0);
        let (ms, _) = st.select_mcs(&fb(1.0, 0.0));
        assert_eq!(ms.index, 8);
    }

    #[test]
    fn margin_update_examples() {
        let params = ControllerParams::default();
        let mut m = Margin::default();
        m.update(AckNak::Ack, &params);
        assert!((m.db() - 0.00025).abs() < 1e-15);
        let mut m = Margin::default();
        m.update(AckNak::Nak, &params);
        assert!((m.db() + 0.04975).abs() < 1e-15);

        let mut m = Margin::default();
        for _ in 0..199 {
            m.update(AckNak::Ack, &params);
        }
        m.update(AckNak::Nak, &params);
        assert!(m.db().abs() <= 1e-9, "{}", m.db());
    }

    #[test]
    fn margins_are_independent() {
        let mut st = AdaptationState::new(ControllerParams::default());
        st.update_margins(AckNak::Ack, AckNak::Nak);
        assert!(st.margin_s.db() > 0.0);
        assert!(st.margin_p.db() < 0.0);
        let before = st.margin_s;
        st.update_margins(AckNak::Ack, AckNak::Nak);
        assert!(st.margin_s.db() > before.db());
    }

    #[test]
    fn margins_are_clamped() {
        let params = ControllerParams { mu: 50.0, ..Default::default() };
        let mut m = Margin::default();
        m.update(AckNak::Nak, &params);
        assert_eq!(m.db(), -MARGIN_LIMIT_DB);
    }

    #[test]
    fn bernoulli_target_has_zero_drift() {
        // At NAK rate p0/2 the margin is a driftless random walk: the
        // ensemble mean stays at the start and the spread grows like
        // μ·sqrt(n·p(1−p)).
        let params = ControllerParams::default();
        let p = params.p0 / 2.0;
        let (runs, steps) = (400, 20_000);
        let mut finals = Vec::with_capacity(runs);
        for seed in 0..runs as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Margin::default();
            for _ in 0..steps {
                let nak = rng.random_bool(p);
                m.update(if nak { AckNak::Nak } else { AckNak::Ack }, &params);
            }
            finals.push(m.db());
        }
        let mean = finals.iter().sum::<f64>() / runs as f64;
        let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let theory = params.mu.powi(2) * steps as f64 * p * (1.0 - p);
        assert!(mean.abs() < 4.0 * (theory / runs as f64).sqrt(), "mean {mean}");
        assert!((var / theory - 1.0).abs() < 0.25, "var {var} vs {theory}");
    }

    #[test]
    fn error_rate_above_target_drifts_down() {
        let params = ControllerParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Margin::default();
        for _ in 0..10_000 {
            let nak = rng.random_bool(params.p0);
            m.update(if nak { AckNak::Nak } else { AckNak::Ack }, &params);
        }
        // Expected drift −μ·p0/2 per update = −2.5 dB over 10^4 updates.
        assert!(m.db() < -1.0, "{}", m.db());
    }

    #[test]
    fn feedback_fifo() {
        let mut ch = FeedbackChannel::new(0, None);
        ch.push(3);
        assert_eq!(ch.pop(), Ok(3));

        let mut ch = FeedbackChannel::new(7, Some(-1));
        let mut popped = Vec::new();
        for i in 0..10 {
            ch.push(i);
            popped.push(ch.pop().unwrap());
        }
        assert_eq!(popped, vec![-1, -1, -1, -1, -1, -1, -1, 0, 1, 2]);

        let mut ch: FeedbackChannel<i32> = FeedbackChannel::new(2, None);
        ch.push(1);
        assert_eq!(ch.pop(), Err(FeedbackError::NoColdStartDefault));
    }

    #[test]
    fn table_file_round_trip() {
        let text = "# rate se threshold\nrate,spectral_efficiency,threshold_db\n0.1, 0.1, -10.91\n0.2 0.2 -7.03\n\n0.3,0.3,-5.02 # trailing\n";
        let t = McsTable::parse(text).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.entries()[2].threshold_db, -5.02);
        let printed = McsTable::polarization_default().to_string();
        assert_eq!(McsTable::parse(&printed).unwrap(), McsTable::polarization_default());
        assert!(matches!(McsTable::parse("0.1 0.1\n"), Err(TableError::Parse { line: 1, .. })));
        assert!(matches!(McsTable::parse("0.2 0.2 1\n0.1 0.1 2\n"), Err(TableError::NotIncreasing { .. })));
        assert!(matches!(McsTable::parse("# nothing\n"), Err(TableError::Empty)));
    }

    proptest! {
        #[test]
        fn lookup_is_monotone(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for t in [McsTable::symbols_default(), McsTable::polarization_default()] {
                prop_assert!(lut_lookup(&t, lo).entry.coding_rate <= lut_lookup(&t, hi).entry.coding_rate);
            }
        }
    }
}
