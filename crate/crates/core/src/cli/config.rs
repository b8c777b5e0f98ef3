//! Campaign files: a TOML document with `[link]`, `[channel]`,
//! `[controller]`, `[modes]` and `[output]` sections.
//!
//! Every key is optional and unknown keys are rejected. Defaults are the
//! full-scale maritime setup with PMod alone.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::ControllerParams;
use crate::channel::ChannelConfig;
use crate::modes::MimoMode;
use crate::sim::{ConfigError, SimConfig};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error("unknown preset {0:?} (expected one of fig2, fig3, fig4, fig5, ci)")]
    UnknownPreset(String),
    #[error("preset fig2 describes a capacity sweep; use `capacity --preset fig2`")]
    CapacityPreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    /// Average SNR points, dB.
    pub avg_snr_db: Vec<f64>,
    pub frames_per_point: usize,
    pub symbols_per_frame: usize,
    pub frame_duration_s: f64,
    pub symbol_energy: f64,
    pub hop_weighted_symbols: bool,
    pub master_seed: u64,
}

impl Default for LinkSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        LinkSection {
            avg_snr_db: sim.avg_snr_db,
            frames_per_point: sim.frames_per_point,
            symbols_per_frame: sim.symbols_per_frame,
            frame_duration_s: sim.frame_duration_s,
            symbol_energy: sim.symbol_energy,
            hop_weighted_symbols: sim.hop_weighted_symbols,
            master_seed: sim.master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    /// Each entry is one simulated curve with its own enabled-mode set.
    pub sets: Vec<Vec<MimoMode>>,
}

impl Default for ModesSection {
    fn default() -> Self {
        ModesSection {
            sets: vec![vec![MimoMode::Pmod]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Optional binary dump of the first point's channel, relative to `dir`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_trace: Option<PathBuf>,
    /// Frames included in the channel dump.
    pub trace_frames: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            channel_trace: None,
            trace_frames: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignFile {
    pub link: LinkSection,
    pub channel: ChannelConfig,
    pub controller: ControllerParams,
    pub modes: ModesSection,
    pub output: OutputSection,
}

const PRESET_FIG3: &str = include_str!("../../presets/fig3.toml");
const PRESET_FIG4: &str = include_str!("../../presets/fig4.toml");
const PRESET_FIG5: &str = include_str!("../../presets/fig5.toml");
const PRESET_CI: &str = include_str!("../../presets/ci.toml");

/// Source text of a bundled campaign preset.
pub fn preset_text(name: &str) -> Result<&'static str, CampaignError> {
    match name {
        "fig3" => Ok(PRESET_FIG3),
        "fig4" => Ok(PRESET_FIG4),
        "fig5" => Ok(PRESET_FIG5),
        "ci" => Ok(PRESET_CI),
        "fig2" => Err(CampaignError::CapacityPreset),
        other => Err(CampaignError::UnknownPreset(other.to_string())),
    }
}

impl CampaignFile {
    /// Parses and validates a campaign document.
    pub fn parse(text: &str) -> Result<Self, CampaignError> {
        let file: CampaignFile = toml::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn preset(name: &str) -> Result<Self, CampaignError> {
        Self::parse(preset_text(name)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("campaign file is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modes.sets.is_empty() {
            return Err(ConfigError::Invalid("[modes] sets is empty".into()));
        }
        for cfg in self.sim_configs() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// One simulation config per mode set, in file order.
    pub fn sim_configs(&self) -> Vec<SimConfig> {
        self.modes
            .sets
            .iter()
            .map(|modes| SimConfig {
                avg_snr_db: self.link.avg_snr_db.clone(),
                frames_per_point: self.link.frames_per_point,
                symbols_per_frame: self.link.symbols_per_frame,
                frame_duration_s: self.link.frame_duration_s,
                symbol_energy: self.link.symbol_energy,
                hop_weighted_symbols: self.link.hop_weighted_symbols,
                controller: self.controller,
                channel: self.channel.clone(),
                modes: modes.clone(),
                master_seed: self.link.master_seed,
            })
            .collect()
    }
}
