//! Frame-level link adaptation for dual-polarized mobile satellite links
//! using Polarized Modulation (PMod).
//!
//! The crate is organized bottom-up:
//!
//! - [`capacity`]: closed-form capacity models, their inverses, Monte Carlo
//!   oracles and exponential curve fitting.
//! - [`phy`]: effective-SNR abstraction of a frame and decode prediction.
//! - [`channel`]: Rician, Doppler-correlated dual-polarized fading.
//! - [`adaptation`]: MCS tables, LUT selection, outer-loop margins and the
//!   delayed feedback path.
//! - [`modes`]: per-MIMO-mode effective SNRs and mode switching.
//! - [`sim`]: the frame loop and campaign metrics.
//! - [`cli`]: campaign files, output writers and subcommands.

pub mod adaptation;
pub mod capacity;
pub mod channel;
pub mod cli;
pub mod matrix;
pub mod modes;
pub mod phy;
pub mod sim;
pub mod units;

pub use matrix::{ChannelMatrix, FrameChannel, Polarization};
pub use units::{db_to_linear, linear_to_db, LinearSnr};
