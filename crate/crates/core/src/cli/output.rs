//! Result persistence: JSON metrics, per-point CSV, per-figure plot data
//! and gnuplot scripts. Every file opens with the resolved campaign and
//! seed so it can be regenerated.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::modes::MimoMode;
use crate::sim::CampaignMetrics;

use super::config::CampaignFile;

/// Joins a mode set into a column-safe label, e.g. `OPTBC+VBLAST`.
pub fn set_label(modes: &[MimoMode]) -> String {
    modes.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
}

/// `# `-prefixed stamp with the resolved config and seed.
pub fn header(file: &CampaignFile) -> String {
    let mut out = format!("# pmod-link {}\n# seed = {}\n", env!("CARGO_PKG_VERSION"), file.link.master_seed);
    for line in file.to_toml().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn csv_body(rows: &[Vec<String>]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

fn write_with_header(path: &Path, stamp: &str, body: &[u8]) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(stamp.as_bytes())?;
    f.write_all(body)?;
    f.flush()
}

fn num(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    seed: u64,
    config: String,
    campaigns: &'a [CampaignMetrics],
}

/// Per-point CSV rows, one per (mode set, SNR).
pub fn metrics_rows(campaigns: &[CampaignMetrics]) -> Vec<Vec<String>> {
    let mut rows = vec![[
        "mode_set", "snr_db", "se", "fer", "fer_s", "fer_p", "fer_window", "fer_s_window", "fer_p_window",
        "top_mcs_s", "top_mcs_p", "share_SISO", "share_OPTBC", "share_VBLAST", "share_PMOD",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()];
    for c in campaigns {
        let label = set_label(&c.modes);
        for p in &c.points {
            let mut row = vec![
                label.clone(),
                num(p.snr_db),
                num(p.spectral_efficiency),
                num(p.fer),
                num(p.fer_s),
                num(p.fer_p),
                num(p.fer_window),
                num(p.fer_s_window),
                num(p.fer_p_window),
                num(p.modal_rate_s),
                p.modal_rate_p.map(num).unwrap_or_default(),
            ];
            row.extend(MimoMode::ALL.iter().map(|&m| num(p.mode_share(m))));
            rows.push(row);
        }
    }
    rows
}

/// Wide table: `snr_db` then one column per campaign produced by `cols`.
fn figure_rows(
    campaigns: &[CampaignMetrics],
    names: &[&str],
    cols: impl Fn(&crate::sim::PointMetrics) -> Vec<String>,
) -> Vec<Vec<String>> {
    let mut head = vec!["snr_db".to_string()];
    for c in campaigns {
        let label = set_label(&c.modes);
        head.extend(names.iter().map(|n| if n.is_empty() { label.clone() } else { format!("{label}_{n}") }));
    }
    let mut rows = vec![head];
    let n_points = campaigns.first().map_or(0, |c| c.points.len());
    for i in 0..n_points {
        let mut row = vec![num(campaigns[0].points[i].snr_db)];
        for c in campaigns {
            row.extend(cols(&c.points[i]));
        }
        rows.push(row);
    }
    rows
}

fn gnuplot(data: &str, ylabel: &str, logscale: bool) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead outside\n");
    s.push_str("set xlabel 'Average SNR (dB)'\n");
    s.push_str(&format!("set ylabel '{ylabel}'\n"));
    s.push_str("set grid\n");
    if logscale {
        s.push_str("set logscale y\n");
    }
    s.push_str(&format!("stats '{data}' nooutput\n"));
    s.push_str(&format!("plot for [i=2:STATS_columns] '{data}' using 1:i with linespoints\n"));
    s
}

/// Writes every campaign artifact into `dir`, which must exist.
pub fn write_all(dir: &Path, file: &CampaignFile, campaigns: &[CampaignMetrics]) -> io::Result<()> {
    let stamp = header(file);

    let doc = MetricsDocument {
        seed: file.link.master_seed,
        config: file.to_toml(),
        campaigns,
    };
    let mut json = serde_json::to_vec_pretty(&doc).map_err(io::Error::other)?;
    json.push(b'\n');
    fs::write(dir.join("metrics.json"), json)?;

    write_with_header(&dir.join("metrics.csv"), &stamp, &csv_body(&metrics_rows(campaigns))?)?;

    let fig3 = figure_rows(campaigns, &[""], |p| vec![num(p.spectral_efficiency)]);
    write_with_header(&dir.join("fig3_se.csv"), &stamp, &csv_body(&fig3)?)?;
    let fig4 = figure_rows(campaigns, &["fer", "fer_window"], |p| vec![num(p.fer), num(p.fer_window)]);
    write_with_header(&dir.join("fig4_fer.csv"), &stamp, &csv_body(&fig4)?)?;
    let fig5 = figure_rows(campaigns, &["rate_s", "rate_p"], |p| {
        vec![num(p.modal_rate_s), p.modal_rate_p.map(num).unwrap_or_default()]
    });
    write_with_header(&dir.join("fig5_mcs.csv"), &stamp, &csv_body(&fig5)?)?;

    fs::write(dir.join("fig3_se.gp"), stamp.clone() + &gnuplot("fig3_se.csv", "Spectral efficiency (bits/symbol)", false))?;
    fs::write(dir.join("fig4_fer.gp"), stamp.clone() + &gnuplot("fig4_fer.csv", "FER", true))?;
    fs::write(dir.join("fig5_mcs.gp"), stamp + &gnuplot("fig5_mcs.csv", "Most used coding rate", false))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_campaign, SimConfig};

    #[test]
    fn header_is_comment_block() {
        let h = header(&CampaignFile::default());
        assert!(h.lines().all(|l| l.starts_with('#')));
        assert!(h.contains("# seed = 0"));
        assert!(h.contains("[link]"));
    }

    #[test]
    fn rows_have_consistent_width() {
        let cfg = SimConfig {
            avg_snr_db: vec![0.0, 10.0],
            frames_per_point: 50,
            symbols_per_frame: 8,
            frame_duration_s: 8.0 / 3200.0,
            channel: crate::channel::ChannelConfig { symbol_rate_hz: 3200.0, ..Default::default() },
            modes: vec![MimoMode::Siso],
            ..SimConfig::default()
        };
        let a = run_campaign(&cfg, Some(1)).unwrap();
        let b = run_campaign(&SimConfig { modes: vec![MimoMode::Pmod], ..cfg }, Some(1)).unwrap();
        let rows = metrics_rows(&[a.clone(), b.clone()]);
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.len() == rows[0].len()));
        let fig = figure_rows(&[a, b], &["x", "y"], |p| vec![num(p.fer), num(p.fer)]);
        assert_eq!(fig[0], ["snr_db", "SISO_x", "SISO_y", "PMOD_x", "PMOD_y"]);
        assert_eq!(fig.len(), 3);
    }
}
