//! MIMO transmission modes of the dual-polarized link and predicted
//! spectral-efficiency mode switching.
//!
//! Every mode reduces a frame to one effective SNR per codeword stream.
//! Non-PMod modes reuse the QPSK symbol table for every stream. The
//! per-symbol SNR models for OPTBC (Alamouti combining) and V-BLAST (linear
//! MMSE per layer) sit behind [`ModeModel`] so they can be replaced.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{lut_lookup, LutSelection, Margin, McsTable, StreamKind};
use crate::matrix::{ChannelMatrix, FrameChannel, Polarization};
use crate::phy::{self, map_qpsk_snrs};
use crate::units::LinearSnr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MimoMode {
    #[serde(rename = "SISO")]
    Siso,
    #[serde(rename = "OPTBC")]
    Optbc,
    #[serde(rename = "VBLAST")]
    Vblast,
    #[serde(rename = "PMOD")]
    Pmod,
}

impl MimoMode {
    pub const ALL: [MimoMode; 4] = [MimoMode::Siso, MimoMode::Optbc, MimoMode::Vblast, MimoMode::Pmod];

    pub fn name(self) -> &'static str {
        match self {
            MimoMode::Siso => "SISO",
            MimoMode::Optbc => "OPTBC",
            MimoMode::Vblast => "VBLAST",
            MimoMode::Pmod => "PMOD",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Codeword streams per frame and the table each one uses.
    pub fn stream_kinds(self) -> &'static [StreamKind] {
        match self {
            MimoMode::Siso | MimoMode::Optbc => &[StreamKind::Symbols],
            MimoMode::Vblast => &[StreamKind::Symbols, StreamKind::Symbols],
            MimoMode::Pmod => &[StreamKind::Symbols, StreamKind::Polarization],
        }
    }

    pub fn streams(self) -> usize {
        self.stream_kinds().len()
    }

    /// Tie-break rank; higher wins.
    pub fn priority(self) -> u8 {
        match self {
            MimoMode::Pmod => 3,
            MimoMode::Vblast => 2,
            MimoMode::Optbc => 1,
            MimoMode::Siso => 0,
        }
    }
}

impl fmt::Display for MimoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MimoMode {
    type Err = ModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MimoMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModeError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModeError {
    #[error("no MIMO mode is enabled")]
    NoneEnabled,
    #[error("unknown MIMO mode {0:?}")]
    Unknown(String),
}

/// The MCS tables shared by all modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTables {
    pub symbols: McsTable,
    pub polarization: McsTable,
}

impl Default for ModeTables {
    fn default() -> Self {
        ModeTables {
            symbols: McsTable::symbols_default(),
            polarization: McsTable::polarization_default(),
        }
    }
}

impl ModeTables {
    pub fn table(&self, kind: StreamKind) -> &McsTable {
        match kind {
            StreamKind::Symbols => &self.symbols,
            StreamKind::Polarization => &self.polarization,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModePrediction {
    pub mode: MimoMode,
    /// Effective SNR per stream, dB, before margins.
    pub effective_snrs_db: Vec<f64>,
    /// LUT choice per stream after adding the stream margin.
    pub selections: Vec<LutSelection>,
    /// Sum of the selected spectral efficiencies, bits/symbol.
    pub predicted_se: f64,
}

/// Effective-SNR model of one transmission mode.
pub trait ModeModel: Send + Sync {
    fn mode(&self) -> MimoMode;

    /// One effective SNR per stream, in dB. `hops` is the polarization
    /// pattern actually transmitted, when the caller tracks it.
    fn effective_snrs_db(&self, gamma: LinearSnr, frame: &FrameChannel, hops: Option<&[Polarization]>) -> Vec<f64>;
}

/// Single polarization: co-polar entry only.
pub fn siso_symbol_snr(gamma: LinearSnr, h: &ChannelMatrix) -> f64 {
    gamma.value() * h.entry(0, 0).norm_sqr()
}

/// Alamouti across the two polarizations: full diversity with the power
/// split between branches.
pub fn optbc_symbol_snr(gamma: LinearSnr, h: &ChannelMatrix) -> f64 {
    gamma.value() * h.frobenius_sq() / 2.0
}

/// Per-layer linear MMSE SINR with power `γ/2` per layer:
/// `1/[(I + (γ/2)·HᴴH)⁻¹]_kk − 1`.
pub fn vblast_layer_sinr(gamma: LinearSnr, h: &ChannelMatrix) -> [f64; 2] {
    let g = gamma.value() / 2.0;
    let h1 = h.column(Polarization::First);
    let h2 = h.column(Polarization::Second);
    let a11 = 1.0 + g * h.column_norm_sq(Polarization::First);
    let a22 = 1.0 + g * h.column_norm_sq(Polarization::Second);
    let cross = (h1[0].conj() * h2[0] + h1[1].conj() * h2[1]) * g;
    let det = a11 * a22 - cross.norm_sqr();
    let sinr = |other: f64| {
        let v = det / other - 1.0;
        if v.is_finite() && v > 0.0 {
            v
        } else {
            0.0
        }
    };
    [sinr(a22), sinr(a11)]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SisoModel;

#[derive(Debug, Clone, Copy, Default)]
pub struct AlamoutiModel;

#[derive(Debug, Clone, Copy, Default)]
pub struct MmseVblastModel;

#[derive(Debug, Clone, Copy)]
pub struct PmodModel {
    pub symbol_energy: f64,
    /// Average each polarization's symbol SNR only over the instants it
    /// was actually used (requires hops).
    pub hop_weighted: bool,
}

impl Default for PmodModel {
    fn default() -> Self {
        PmodModel {
            symbol_energy: 1.0,
            hop_weighted: false,
        }
    }
}

impl ModeModel for SisoModel {
    fn mode(&self) -> MimoMode {
        MimoMode::Siso
    }

    fn effective_snrs_db(&self, gamma: LinearSnr, frame: &FrameChannel, _: Option<&[Polarization]>) -> Vec<f64> {
        vec![map_qpsk_snrs(frame.snapshots().iter().map(|h| siso_symbol_snr(gamma, h))).db()]
    }
}

impl ModeModel for AlamoutiModel {
    fn mode(&self) -> MimoMode {
        MimoMode::Optbc
    }

    fn effective_snrs_db(&self, gamma: LinearSnr, frame: &FrameChannel, _: Option<&[Polarization]>) -> Vec<f64> {
        vec![map_qpsk_snrs(frame.snapshots().iter().map(|h| optbc_symbol_snr(gamma, h))).db()]
    }
}

impl ModeModel for MmseVblastModel {
    fn mode(&self) -> MimoMode {
        MimoMode::Vblast
    }

    fn effective_snrs_db(&self, gamma: LinearSnr, frame: &FrameChannel, _: Option<&[Polarization]>) -> Vec<f64> {
        let sinrs: Vec<[f64; 2]> = frame.snapshots().iter().map(|h| vblast_layer_sinr(gamma, h)).collect();
        (0..2)
            .map(|k| map_qpsk_snrs(sinrs.iter().map(|s| s[k])).db())
            .collect()
    }
}

impl ModeModel for PmodModel {
    fn mode(&self) -> MimoMode {
        MimoMode::Pmod
    }

    fn effective_snrs_db(&self, gamma: LinearSnr, frame: &FrameChannel, hops: Option<&[Polarization]>) -> Vec<f64> {
        let symbols = match (self.hop_weighted, hops) {
            (true, Some(hops)) => phy::effective_snr_symbols_hopped(gamma, frame, hops),
            _ => phy::effective_snr_symbols(gamma, frame),
        };
        let polarization = phy::effective_snr_polarization(gamma, frame, self.symbol_energy)
            .expect("symbol energy validated at construction");
        vec![symbols.db(), polarization.db()]
    }
}

/// The default model for `mode`.
pub fn default_model(mode: MimoMode, pmod: PmodModel) -> Box<dyn ModeModel> {
    match mode {
        MimoMode::Siso => Box::new(SisoModel),
        MimoMode::Optbc => Box::new(AlamoutiModel),
        MimoMode::Vblast => Box::new(MmseVblastModel),
        MimoMode::Pmod => Box::new(pmod),
    }
}

/// LUT selections and predicted SE from per-stream effective SNRs.
///
/// Panics if fewer SNRs or margins than the mode's streams are given.
pub fn predict_from_snrs(mode: MimoMode, snrs_db: &[f64], margins: &[Margin], tables: &ModeTables) -> ModePrediction {
    let kinds = mode.stream_kinds();
    assert!(snrs_db.len() >= kinds.len() && margins.len() >= kinds.len());
    let selections: Vec<LutSelection> = kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| lut_lookup(tables.table(kind), snrs_db[k] + margins[k].db()))
        .collect();
    ModePrediction {
        mode,
        effective_snrs_db: snrs_db[..kinds.len()].to_vec(),
        predicted_se: selections.iter().map(|s| s.entry.spectral_efficiency).sum(),
        selections,
    }
}

pub fn predict(
    model: &dyn ModeModel,
    gamma: LinearSnr,
    frame: &FrameChannel,
    tables: &ModeTables,
    margins: &[Margin],
) -> ModePrediction {
    let snrs = model.effective_snrs_db(gamma, frame, None);
    predict_from_snrs(model.mode(), &snrs, margins, tables)
}

pub fn pmod_prediction(gamma: LinearSnr, frame: &FrameChannel, tables: &ModeTables, margins: [Margin; 2]) -> ModePrediction {
    predict(&PmodModel::default(), gamma, frame, tables, &margins)
}

pub fn siso_prediction(gamma: LinearSnr, frame: &FrameChannel, table_s: &McsTable, margin: Margin) -> ModePrediction {
    predict(&SisoModel, gamma, frame, &symbol_only(table_s), &[margin])
}

pub fn optbc_prediction(gamma: LinearSnr, frame: &FrameChannel, table_s: &McsTable, margin: Margin) -> ModePrediction {
    predict(&AlamoutiModel, gamma, frame, &symbol_only(table_s), &[margin])
}

pub fn vblast_prediction(gamma: LinearSnr, frame: &FrameChannel, table_s: &McsTable, margins: [Margin; 2]) -> ModePrediction {
    predict(&MmseVblastModel, gamma, frame, &symbol_only(table_s), &margins)
}

fn symbol_only(table_s: &McsTable) -> ModeTables {
    ModeTables {
        symbols: table_s.clone(),
        polarization: McsTable::polarization_default(),
    }
}

/// Mode with the highest predicted SE among `enabled`; exact ties go to
/// the higher-priority mode (PMOD > VBLAST > OPTBC > SISO).
pub fn select_mode(predictions: &[ModePrediction], enabled: &[MimoMode]) -> Result<MimoMode, ModeError> {
    predictions
        .iter()
        .filter(|p| enabled.contains(&p.mode))
        .max_by(|a, b| {
            a.predicted_se
                .total_cmp(&b.predicted_se)
                .then(a.mode.priority().cmp(&b.mode.priority()))
        })
        .map(|p| p.mode)
        .ok_or(ModeError::NoneEnabled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::static_channel;
    use crate::units::db_to_linear;
    use nalgebra::Matrix2;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn snr(v: f64) -> LinearSnr {
        LinearSnr::new(v).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zero_margins() -> [Margin; 2] {
        [Margin::default(); 2]
    }

    #[test]
    fn pmod_examples() {
        let tables = ModeTables::default();
        let d = static_channel(ChannelMatrix::diagonal(2f64.sqrt()), 64);
        let p = pmod_prediction(snr(db_to_linear(20.0)), &d, &tables, zero_margins());
        assert!((p.predicted_se - 2.64).abs() < 1e-12);

        let h = ChannelMatrix::from_columns([c(1.0, 0.0), c(0.5, 0.5)], [c(1.0, 0.0), c(0.5, 0.5)]);
        let p = pmod_prediction(snr(db_to_linear(10.0)), &static_channel(h, 32), &tables, zero_margins());
        assert!(p.selections[1].below_range);
        assert_eq!(p.selections[1].entry.coding_rate, 0.1);
        assert_eq!(p.selections[0].index, 8);

        let p = pmod_prediction(LinearSnr::ZERO, &d, &tables, zero_margins());
        assert!((p.predicted_se - 0.78).abs() < 1e-12);
        assert!(p.selections.iter().all(|s| s.below_range));
    }

    #[test]
    fn siso_examples() {
        let table = McsTable::symbols_default();
        let d = static_channel(ChannelMatrix::identity(), 16);
        let p = siso_prediction(snr(db_to_linear(6.0)), &d, &table, Margin::default());
        assert_eq!(p.predicted_se, 1.74);
        let z = static_channel(ChannelMatrix::ZERO, 16);
        let p = siso_prediction(snr(10.0), &z, &table, Margin::default());
        assert_eq!(p.predicted_se, 0.68);
        assert!(p.selections[0].below_range);
        assert!((2.64f64 / 1.74 - 1.517).abs() < 1e-3);
    }

    #[test]
    fn optbc_examples() {
        let h = ChannelMatrix::diagonal(2f64.sqrt());
        assert!((optbc_symbol_snr(snr(1.0), &h) - 2.0).abs() < 1e-12);
        assert_eq!(optbc_symbol_snr(snr(5.0), &ChannelMatrix::ZERO), 0.0);
    }

    #[test]
    fn vblast_examples() {
        let table = McsTable::symbols_default();
        let d = static_channel(ChannelMatrix::diagonal(2f64.sqrt()), 16);
        let p = vblast_prediction(snr(db_to_linear(25.0)), &d, &table, zero_margins());
        assert!((p.predicted_se - 3.48).abs() < 1e-12);

        let h1 = [c(1.0, 0.2), c(-0.3, 0.8)];
        let rank1 = ChannelMatrix::from_columns(h1, h1);
        let s = vblast_layer_sinr(snr(100.0), &rank1);
        assert!(s[1] < 1.0, "{s:?}");
        let p = vblast_prediction(snr(100.0), &static_channel(rank1, 8), &table, zero_margins());
        assert!(p.predicted_se < 2.0 * 1.0);

        let p = vblast_prediction(LinearSnr::ZERO, &d, &table, zero_margins());
        assert!(p.selections.iter().all(|s| s.below_range && s.index == 0));
    }

    fn mmse_oracle(gamma: f64, h: &ChannelMatrix) -> [f64; 2] {
        let m = Matrix2::new(h.entry(0, 0), h.entry(0, 1), h.entry(1, 0), h.entry(1, 1));
        let a = Matrix2::identity() + m.adjoint() * m * Complex64::new(gamma / 2.0, 0.0);
        let inv = a.try_inverse().unwrap();
        [1.0 / inv[(0, 0)].re - 1.0, 1.0 / inv[(1, 1)].re - 1.0]
    }

    fn arb_matrix() -> impl Strategy<Value = ChannelMatrix> {
        proptest::array::uniform8(-2.0f64..2.0)
            .prop_map(|v| ChannelMatrix::new([[c(v[0], v[1]), c(v[2], v[3])], [c(v[4], v[5]), c(v[6], v[7])]]))
    }

    #[test]
    fn selection_examples() {
        let tables = ModeTables::default();
        let d = static_channel(ChannelMatrix::identity(), 64);
        let preds = |g: f64| -> Vec<ModePrediction> {
            let g = snr(db_to_linear(g));
            vec![
                siso_prediction(g, &d, &tables.symbols, Margin::default()),
                optbc_prediction(g, &d, &tables.symbols, Margin::default()),
                vblast_prediction(g, &d, &tables.symbols, zero_margins()),
                pmod_prediction(g, &d, &tables, zero_margins()),
            ]
        };
        assert_eq!(select_mode(&preds(3.0), &[MimoMode::Pmod]).unwrap(), MimoMode::Pmod);
        assert_eq!(select_mode(&preds(25.0), &MimoMode::ALL).unwrap(), MimoMode::Vblast);
        for g in [2.0, 3.0, 4.0, 5.0] {
            assert_eq!(
                select_mode(&preds(g), &[MimoMode::Optbc, MimoMode::Vblast, MimoMode::Pmod]).unwrap(),
                MimoMode::Pmod,
                "{g} dB"
            );
        }
        assert_eq!(select_mode(&preds(3.0), &[]), Err(ModeError::NoneEnabled));
    }

    #[test]
    fn ties_follow_priority() {
        let mk = |mode, se| ModePrediction { mode, effective_snrs_db: vec![], selections: vec![], predicted_se: se };
        let preds = vec![mk(MimoMode::Siso, 1.0), mk(MimoMode::Optbc, 1.0)];
        assert_eq!(select_mode(&preds, &MimoMode::ALL).unwrap(), MimoMode::Optbc);
        let preds = vec![mk(MimoMode::Vblast, 2.0), mk(MimoMode::Pmod, 2.0)];
        assert_eq!(select_mode(&preds, &MimoMode::ALL).unwrap(), MimoMode::Pmod);
    }

    #[test]
    fn mode_names_parse() {
        for m in MimoMode::ALL {
            assert_eq!(m.name().parse::<MimoMode>().unwrap(), m);
        }
        assert!("MISO".parse::<MimoMode>().is_err());
    }

    proptest! {
        #[test]
        fn mmse_matches_matrix_inverse(h in arb_matrix(), g in 0.0f64..100.0) {
            let got = vblast_layer_sinr(snr(g), &h);
            let want = mmse_oracle(g, &h);
            for k in 0..2 {
                let w = want[k].max(0.0);
                prop_assert!((got[k] - w).abs() <= 1e-9 * w.max(1.0), "{:?} vs {:?}", got, want);
            }
        }

        #[test]
        fn optbc_beats_siso_when_energy_allows(h in arb_matrix(), g in 0.0f64..100.0) {
            if h.frobenius_sq() >= 2.0 * h.entry(0, 0).norm_sqr() {
                prop_assert!(optbc_symbol_snr(snr(g), &h) >= siso_symbol_snr(snr(g), &h));
            }
        }

        #[test]
        fn prediction_bounds(h in arb_matrix(), gdb in -20.0f64..40.0, ms in -20.0f64..20.0, mp in -20.0f64..20.0) {
            let tables = ModeTables::default();
            let f = static_channel(h, 4);
            let g = snr(db_to_linear(gdb));
            let m = [Margin::new(ms), Margin::new(mp)];
            prop_assert!(vblast_prediction(g, &f, &tables.symbols, m).predicted_se <= 3.48 + 1e-12);
            prop_assert!(pmod_prediction(g, &f, &tables, m).predicted_se <= 2.64 + 1e-12);
            prop_assert!(siso_prediction(g, &f, &tables.symbols, m[0]).predicted_se <= 1.74);
            prop_assert!(optbc_prediction(g, &f, &tables.symbols, m[0]).predicted_se <= 1.74);
        }

        #[test]
        fn argmax_scale_invariant_and_subset_monotone(
            ses in proptest::array::uniform4(0.0f64..4.0),
            scale in 0.01f64..100.0,
            mask in 1u8..16,
        ) {
            let mk = |mode: MimoMode, se: f64| ModePrediction { mode, effective_snrs_db: vec![], selections: vec![], predicted_se: se };
            let preds: Vec<_> = MimoMode::ALL.iter().zip(ses).map(|(&m, s)| mk(m, s)).collect();
            let scaled: Vec<_> = MimoMode::ALL.iter().zip(ses).map(|(&m, s)| mk(m, s * scale)).collect();
            let all = select_mode(&preds, &MimoMode::ALL).unwrap();
            prop_assert_eq!(all, select_mode(&scaled, &MimoMode::ALL).unwrap());
            let subset: Vec<MimoMode> = MimoMode::ALL.iter().copied().filter(|m| mask & (1 << m.index()) != 0).collect();
            let sub = select_mode(&preds, &subset).unwrap();
            prop_assert!(ses[sub.index()] <= ses[all.index()]);
        }
    }

    #[test]
    fn optbc_not_worse_on_balanced_diagonal() {
        for gdb in [-5.0, 0.0, 5.0, 10.0] {
            let g = snr(db_to_linear(gdb));
            let f = static_channel(ChannelMatrix::diagonal(0.9), 32);
            let s = SisoModel.effective_snrs_db(g, &f, None)[0];
            let o = AlamoutiModel.effective_snrs_db(g, &f, None)[0];
            assert!(o >= s - 1e-12);
        }
    }
}
