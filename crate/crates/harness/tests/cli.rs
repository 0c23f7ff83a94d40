use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relay-ofdma"))
        .args(args)
        .output()
        .expect("spawn relay-ofdma")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader.records().map(Result::unwrap).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader.headers().unwrap().iter().map(str::to_owned).collect()
}

#[test]
fn solve_prints_reports() {
    let out = cli(&[
        "solve",
        "--k",
        "8",
        "--users",
        "3",
        "--protocol",
        "proposed,bp2",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["report"]["protocol"], "proposed");
    assert!(results[0]["report"]["wsr"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["weights"].as_array().unwrap().len(), 3);
}

#[test]
fn empty_protocol_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[experiment]\nprotocols = []\n").unwrap();
    let out_path = dir.path().join("never.csv");
    let out = cli(&[
        "--config",
        cfg.to_str().unwrap(),
        "gap-pdf",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol"));
    assert!(!out_path.exists(), "no work before configuration is validated");
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(code(&cli(&["validate", "--k", "5"])), 2);
    assert_eq!(code(&cli(&["sweep", "--trials", "0"])), 2);
    assert_eq!(code(&cli(&["sweep", "--raw", "--trials", "1"])), 2);
    assert_eq!(code(&cli(&["gap-pdf", "--protocol", "bp7"])), 2);
    assert_eq!(code(&cli(&["--config", "/nonexistent/run.toml", "solve"])), 3);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let target = blocker.join("out.csv");
    let out = cli(&[
        "gap-pdf",
        "--trials",
        "1",
        "--k",
        "8",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("file"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[system]\nk = 16\nseed = 3\n\n[experiment]\ntrials = 2\nprotocols = [\"bp1\"]\n",
    )
    .unwrap();
    let out_path = dir.path().join("gap.csv");
    let out = cli(&[
        "--config",
        cfg.to_str().unwrap(),
        "gap-pdf",
        "--trials",
        "3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&out_path);
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(&row[0], i.to_string());
        assert_eq!(&row[1], (3 + i).to_string(), "trial i uses seed base + i");
        assert_eq!(&row[2], "bp1");
        assert_eq!(&row[4], "16");
    }
}

#[test]
fn gap_pdf_writes_histogram_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("runs/gap.csv");
    let out = cli(&[
        "gap-pdf",
        "--trials",
        "30",
        "--k",
        "8,16",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(
        header(&out_path),
        [
            "trial",
            "seed",
            "protocol",
            "d_km",
            "k",
            "ptot_db",
            "wsr",
            "delta",
            "n_sp_over_k",
            "iterations",
            "exit"
        ]
    );
    let records = read_csv(&out_path);
    assert_eq!(records.len(), 60);
    let counted = records
        .iter()
        .filter(|r| &r[10] == "approx" && r[7].parse::<f64>().unwrap() > 0.0)
        .count();

    let hist = dir.path().join("runs/gap.hist.csv");
    assert_eq!(header(&hist), ["protocol", "lo_db", "hi_db", "count", "density"]);
    let binned: u64 = read_csv(&hist).iter().map(|r| r[3].parse::<u64>().unwrap()).sum();
    assert_eq!(binned as usize, counted);

    let sidecar: Value = serde_json::from_slice(&std::fs::read(dir.path().join("runs/gap.json")).unwrap()).unwrap();
    assert_eq!(sidecar["spec"]["kind"], "gap-pdf");
    assert_eq!(sidecar["spec"]["trials"], 30);
    assert_eq!(sidecar["spec"]["k_values"], serde_json::json!([8, 16]));
    assert_eq!(sidecar["summary"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_aggregates_recompute_from_raw_records() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.csv");
    let out = cli(&[
        "sweep",
        "--trials",
        "4",
        "--k",
        "8",
        "--d-km",
        "0.2,0.5,0.8",
        "--raw",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&out_path);
    let raw = read_csv(&dir.path().join("sweep.raw.csv"));
    assert_eq!(rows.len(), 9);
    assert_eq!(raw.len(), 36);
    for row in &rows {
        let cell: Vec<_> = raw.iter().filter(|r| r[3] == row[0] && r[2] == row[1]).collect();
        assert_eq!(cell.len(), 4);
        let mean = |col: usize| cell.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / cell.len() as f64;
        assert_eq!(row[5].parse::<f64>().unwrap(), mean(6), "mean wsr");
        assert_eq!(row[6].parse::<f64>().unwrap(), mean(8), "mean n_sp/K");
        assert_eq!(row[7].parse::<f64>().unwrap(), mean(7), "mean delta");
    }
}

#[test]
fn validate_verdicts_and_fault_injection() {
    let ok = cli(&["validate", "--trials", "3"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let verdict: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(verdict["pass"], true);
    assert_eq!(verdict["comparisons"].as_array().unwrap().len(), 9);

    let bad = cli(&["validate", "--trials", "2", "--inject-fault"]);
    assert_eq!(code(&bad), 1);
    let verdict: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(verdict["pass"], false);
    let failure = verdict["comparisons"][0]["audit_failure"].as_str().unwrap();
    assert!(failure.contains("total-power"), "{failure}");
}

#[test]
fn timing_column_is_opt_in() {
    let out = cli(&["gap-pdf", "--trials", "1", "--k", "8", "--timing"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",wall_time_ms"));
}

#[test]
fn range_flags_take_lo_comma_hi() {
    let out = cli(&[
        "gap-pdf",
        "--trials",
        "4",
        "--k",
        "8",
        "--d-range",
        "0.2,0.3",
        "--snr-db-range",
        "-5,0",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    for row in reader.records().map(Result::unwrap) {
        let d: f64 = row[3].parse().unwrap();
        let snr: f64 = row[5].parse().unwrap();
        assert!((0.2..=0.3).contains(&d) && (-5.0..=0.0).contains(&snr), "{d} {snr}");
    }
    assert_eq!(code(&cli(&["gap-pdf", "--d-range", "0.2"])), 2);
}
