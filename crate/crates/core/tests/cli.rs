use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pmod-link"));
    cmd.env_remove("PMOD_OUT_DIR");
    cmd
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
[link]
avg_snr_db = [0.0, 10.0]
frames_per_point = 60
symbols_per_frame = 16
frame_duration_s = 0.005
master_seed = 4

[channel]
symbol_rate_hz = 3200.0

[modes]
sets = [["SISO"], ["OPTBC", "VBLAST", "PMOD"]]
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("campaign.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_all_outputs_with_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    ok(bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap());
    for name in ["metrics.csv", "fig3_se.csv", "fig4_fer.csv", "fig5_mcs.csv", "fig3_se.gp", "fig4_fer.gp", "fig5_mcs.gp"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with("# pmod-link"), "{name}");
        assert!(text.contains("# seed = 4"), "{name}");
        assert!(text.contains("# avg_snr_db = [0.0, 10.0]"), "{name}");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("mode_set,snr_db,se,fer,fer_s,fer_p"));
    assert_eq!(data.len(), 1 + 2 * 2);
    let fig3 = fs::read_to_string(out.join("fig3_se.csv")).unwrap();
    assert!(fig3.lines().any(|l| l == "snr_db,SISO,OPTBC+VBLAST+PMOD"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 4);
    assert_eq!(json["campaigns"].as_array().unwrap().len(), 2);
}

#[test]
fn existing_output_needs_force_and_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    ok(bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap());
    let first = fs::read(out.join("metrics.csv")).unwrap();

    let refused = bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));

    ok(bin().arg("run").arg(&cfg).arg("--out").arg(&out).args(["--force", "--jobs", "3"]).output().unwrap());
    assert_eq!(first, fs::read(out.join("metrics.csv")).unwrap());
}

#[test]
fn env_var_sets_output_dir_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let env_out = tmp.path().join("from_env");
    ok(bin().arg("run").arg(&cfg).env("PMOD_OUT_DIR", &env_out).args(["--seed", "9", "--frames", "20"]).output().unwrap());
    let csv = fs::read_to_string(env_out.join("metrics.csv")).unwrap();
    assert!(csv.contains("# seed = 9"));
    assert!(csv.contains("# frames_per_point = 20"));
}

#[test]
fn invalid_configs_fail_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[link]\nframes_per_point = 10\nunknown_key = 3\n");
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let cfg = write_config(tmp.path(), "[link]\navg_snr_db = []\n");
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("avg_snr_db is empty"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn channel_trace_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[output]\nchannel_trace = \"channel.bin\"\ntrace_frames = 3\n");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    ok(bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap());
    let bytes = fs::read(out.join("channel.bin")).unwrap();
    assert_eq!(bytes.len(), 3 * 16 * pmod_link::channel::TRACE_RECORD_BYTES);
    let snaps = pmod_link::channel::read_trace(bytes.as_slice()).unwrap();
    assert_eq!(snaps.len(), 48);
}

#[test]
fn capacity_table() {
    let text = ok(bin().args(["capacity", "--from", "-10", "--to", "10", "--step", "0.5", "--samples", "20000"]).output().unwrap());
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 41);
    for r in &rows {
        let v = |i: usize| r[i].parse::<f64>().unwrap();
        assert!((v(4) - v(2)).abs() <= 0.05, "polarization row {r:?}");
        assert!((v(6) - v(1)).abs() <= 0.05, "symbol row {r:?}");
    }
    let high = rows.iter().find(|r| &r[0] == "5").unwrap();
    assert!(high[3].parse::<f64>().unwrap() >= high[2].parse::<f64>().unwrap());

    let one = ok(bin().args(["capacity", "--from", "0", "--to", "0", "--samples", "1000"]).output().unwrap());
    assert_eq!(one.lines().count(), 2);
    let fig2 = ok(bin().args(["capacity", "--preset", "fig2", "--samples", "500"]).output().unwrap());
    assert_eq!(fig2.lines().count(), 42);

    let bad = bin().args(["capacity", "--step", "0"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn tables_match_printed_values() {
    let s = ok(bin().args(["tables", "S"]).output().unwrap());
    let rows: Vec<&str> = s.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].split_whitespace().take(3).eq(["0.34", "0.68", "-2.15"]));
    assert!(rows[8].split_whitespace().take(3).eq(["0.87", "1.74", "5.19"]));
    for r in &rows {
        let c: f64 = r.split_whitespace().nth(3).unwrap().parse().unwrap();
        assert!(c <= 0.01);
    }
    let p = ok(bin().args(["tables", "P"]).output().unwrap());
    let rows: Vec<&str> = p.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].split_whitespace().take(3).eq(["0.10", "0.10", "-10.91"]));
    assert!(rows[8].split_whitespace().take(3).eq(["0.90", "0.90", "2.40"]));
}

#[test]
fn fit_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("samples.csv");
    let mut text = String::from("gamma_db,bits\n");
    for i in 0..=50 {
        let db = -10.0 + 0.5 * i as f64;
        let g = 10f64.powf(db / 10.0);
        text.push_str(&format!("{db},{}\n", 1.0 - (-1.3 * g).exp()));
    }
    fs::write(&path, text).unwrap();
    let out = ok(bin().args(["fit", "--terms", "1", "--input"]).arg(&path).output().unwrap());
    assert!(out.contains("decay_rate 1.300000"), "{out}");
}
