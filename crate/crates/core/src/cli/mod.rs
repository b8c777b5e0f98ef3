//! Command-line front end: `run`, `capacity`, `tables` and `fit`.

pub mod config;
pub mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adaptation::{McsTable, StreamKind};
use crate::capacity::{
    fit_exponential_capacity_with, mc_polarization_mi, mc_qpsk_mi, phi_p, phi_s, pmod_ip_bound,
    qpsk, FitOptions, Saturation,
};
use crate::channel::{write_trace, FadingChannel, FrameSource};
use crate::matrix::{ChannelMatrix, Polarization};
use crate::sim::run_campaign;
use crate::units::LinearSnr;

use config::CampaignFile;

/// Environment variable overriding the campaign output directory.
pub const OUT_DIR_ENV: &str = "PMOD_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "pmod-link", version, about = "Link adaptation simulator for dual-polarized satellite links with PMod")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation campaign and write metrics and plot data.
    Run(RunArgs),
    /// Tabulate capacity models against Monte Carlo estimates.
    Capacity(CapacityArgs),
    /// Print a built-in MCS table with its consistency column.
    Tables(TablesArgs),
    /// Fit an exponential capacity model to Monte Carlo or tabulated samples.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Campaign file (TOML).
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled campaign: fig3, fig4, fig5 or ci.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory; overrides the campaign file.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the campaign file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Frames per SNR point; overrides the campaign file.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Worker threads for SNR points (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write into an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    /// First SNR, dB.
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub from: f64,
    /// Last SNR, dB (inclusive).
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub to: f64,
    /// Grid step, dB.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Monte Carlo samples per point.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `fig2` selects the -10..10 dB grid in 0.5 dB steps.
    #[arg(long)]
    pub preset: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableWhich {
    #[value(name = "S", alias = "s")]
    S,
    #[value(name = "P", alias = "p")]
    P,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[arg(value_enum)]
    pub which: TableWhich,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Which capacity to sample with Monte Carlo.
    #[arg(long, value_enum, default_value = "P")]
    pub stream: TableWhich,
    /// Number of exponential terms.
    #[arg(long, default_value_t = 1)]
    pub terms: usize,
    /// Fix the asymptote instead of fitting it (2 for S, 1 for P).
    #[arg(long)]
    pub fixed_saturation: bool,
    /// CSV with `gamma_db,bits` rows to fit instead of Monte Carlo samples.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub from: f64,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    pub to: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Run(args) => cmd_run(&args, &mut out),
        Command::Capacity(args) => cmd_capacity(&args, &mut out),
        Command::Tables(args) => cmd_tables(args.which, &mut out),
        Command::Fit(args) => cmd_fit(&args, &mut out),
    }
}

/// Loads the campaign with command-line overrides applied.
pub fn resolve_campaign(args: &RunArgs) -> Result<CampaignFile> {
    let mut file = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            CampaignFile::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(name)) => CampaignFile::preset(name)?,
        (None, None) => bail!("give a campaign file or --preset"),
    };
    if let Some(seed) = args.seed {
        file.link.master_seed = seed;
    }
    if let Some(frames) = args.frames {
        file.link.frames_per_point = frames;
    }
    if let Some(dir) = &args.out {
        file.output.dir = dir.clone();
    }
    file.validate()?;
    Ok(file)
}

pub fn cmd_run(args: &RunArgs, log: &mut dyn Write) -> Result<()> {
    let file = resolve_campaign(args)?;
    let dir = file.output.dir.clone();
    if dir.exists() && !args.force {
        bail!("output directory {} exists; pass --force to overwrite", dir.display());
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut campaigns = Vec::new();
    for cfg in file.sim_configs() {
        writeln!(log, "running {} over {} SNR points", output::set_label(&cfg.modes), cfg.avg_snr_db.len())?;
        campaigns.push(run_campaign(&cfg, args.jobs)?);
    }
    if let Some(trace) = &file.output.channel_trace {
        dump_trace(&dir.join(trace), &file)?;
    }
    output::write_all(&dir, &file, &campaigns).with_context(|| format!("writing results to {}", dir.display()))?;
    writeln!(log, "wrote {}", dir.display())?;
    Ok(())
}

fn dump_trace(path: &Path, file: &CampaignFile) -> Result<()> {
    let cfg = &file.sim_configs()[0];
    let mut channel = FadingChannel::new(crate::channel::ChannelConfig {
        seed: cfg.point_seed(cfg.avg_snr_db[0]) ^ cfg.channel.seed,
        ..cfg.channel.clone()
    })?;
    let mut snaps = Vec::with_capacity(file.output.trace_frames * cfg.symbols_per_frame);
    for _ in 0..file.output.trace_frames {
        snaps.extend(channel.next_frame(cfg.symbols_per_frame).into_snapshots());
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trace(io::BufWriter::new(f), &snaps)?;
    Ok(())
}

/// Inclusive grid from `from` to `to`.
pub fn snr_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        bail!("step must be positive, got {step}");
    }
    if !(from.is_finite() && to.is_finite()) || to < from {
        bail!("invalid range {from}..{to}");
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| from + i as f64 * step).collect())
}

pub fn cmd_capacity(args: &CapacityArgs, out: &mut dyn Write) -> Result<()> {
    let (from, to, step) = match args.preset.as_deref() {
        None => (args.from, args.to, args.step),
        Some("fig2") => (-10.0, 10.0, 0.5),
        Some(other) => bail!("unknown capacity preset {other:?} (expected fig2)"),
    };
    let grid = snr_grid(from, to, step)?;
    let h = ChannelMatrix::diagonal(2f64.sqrt());
    let constellation = qpsk();
    let mut rows = vec![vec![
        "gamma_db".to_string(),
        "phi_s".into(),
        "phi_p".into(),
        "eq4_bound".into(),
        "mc_polarization_mi".into(),
        "mc_polarization_ci95".into(),
        "mc_qpsk_mi".into(),
        "mc_qpsk_ci95".into(),
    ]];
    for (i, &g_db) in grid.iter().enumerate() {
        let g = LinearSnr::from_db(g_db)?;
        let seed = args.seed.wrapping_add(i as u64);
        let pol = mc_polarization_mi(g, &h, &constellation, args.samples, seed)?;
        let sym = mc_qpsk_mi(g, args.samples, seed)?;
        let bound = pmod_ip_bound(g, 1.0, h.column(Polarization::First), h.column(Polarization::Second))?;
        rows.push(
            [g_db, phi_s(g), phi_p(g), bound, pol.bits, pol.ci95(), sym.bits, sym.ci95()]
                .iter()
                .map(|v| v.to_string())
                .collect(),
        );
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.write_record(r)?;
    }
    let body = w.into_inner()?;
    match &args.out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display()))?,
        None => out.write_all(&body)?,
    }
    Ok(())
}

pub fn cmd_tables(which: TableWhich, out: &mut dyn Write) -> Result<()> {
    let (table, kind) = match which {
        TableWhich::S => (McsTable::symbols_default(), StreamKind::Symbols),
        TableWhich::P => (McsTable::polarization_default(), StreamKind::Polarization),
    };
    writeln!(out, "{:>6} {:>6} {:>9} {:>12}", "rate", "se", "snr_th_db", "consistency")?;
    for (e, c) in table.entries().iter().zip(table.consistency(kind)) {
        writeln!(out, "{:>6.2} {:>6.2} {:>9.2} {:>12.4}", e.coding_rate, e.spectral_efficiency, e.threshold_db, c)?;
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(db), Some(bits)) => samples.push((crate::units::db_to_linear(db), bits)),
            _ if i == 0 => continue,
            _ => bail!("{}: record {} is not `gamma_db,bits`", path.display(), i + 1),
        }
    }
    Ok(samples)
}

pub fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let samples = match &args.input {
        Some(path) => read_samples(path)?,
        None => {
            let h = ChannelMatrix::diagonal(2f64.sqrt());
            let constellation = qpsk();
            snr_grid(args.from, args.to, args.step)?
                .into_iter()
                .enumerate()
                .map(|(i, db)| {
                    let g = LinearSnr::from_db(db)?;
                    let seed = args.seed.wrapping_add(i as u64);
                    let est = match args.stream {
                        TableWhich::S => mc_qpsk_mi(g, args.samples, seed)?,
                        TableWhich::P => mc_polarization_mi(g, &h, &constellation, args.samples, seed)?,
                    };
                    Ok((g.value(), est.bits))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let saturation = match (args.fixed_saturation, args.stream) {
        (false, _) => Saturation::Free,
        (true, TableWhich::S) => Saturation::Fixed(2.0),
        (true, TableWhich::P) => Saturation::Fixed(1.0),
    };
    let report = fit_exponential_capacity_with(&samples, args.terms, &FitOptions { saturation, ..FitOptions::default() })?;
    writeln!(out, "saturation {:.6}", report.model.saturation)?;
    for t in &report.model.terms {
        writeln!(out, "amplitude {:.6} decay_rate {:.6}", t.amplitude, t.decay_rate)?;
    }
    writeln!(out, "rms_residual {:.3e} iterations {}", report.rms_residual, report.iterations)?;
    Ok(())
}
