//! End-to-end tests of the external surfaces: CLI subcommands, exit
//! codes, config files, run manifests, CSV and SVG outputs, and the
//! equivalence of the single-shot and sweep paths.

use ringrc::readout::TrainTestProtocol;
use ringrc::sweep::{
    export_results_csv, parse_results_csv, run_configuration, run_sweep, GridPoint, PipelineModels,
    SweepGrid,
};
use ringrc::waveform::OpticalWaveform;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringrc"))
}

/// Short train/test protocol so CLI invocations stay fast; the BER floor
/// moves accordingly but none of these tests assert absolute BER values.
const FAST_CONFIG: &str = r#"
[readout]
train_bits = 510
test_bits = 510

[sweep]
bitrates_mbps = [1000.0]
detunings_ghz = [-20.0]
powers_dbm = [12.0, 16.0]
n_v = [5]
tasks = ["AND:1:1"]
seeds = [1]
"#;

fn write_fast_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, FAST_CONFIG).unwrap();
    path
}

fn fast_models() -> PipelineModels {
    PipelineModels {
        protocol: TrainTestProtocol {
            warmup_bits: 255,
            train_bits: 510,
            test_bits: 510,
        },
        ..PipelineModels::default()
    }
}

#[test]
fn simulate_smoke_run_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fast_config(dir.path());
    let out = bin()
        .args([
            "simulate",
            "--bitrate",
            "1000",
            "--detuning",
            "-20",
            "--power",
            "16",
            "--task",
            "XOR:2:3",
            "--nv",
            "5",
            "--config",
        ])
        .arg(&config)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    for key in [
        "task=XOR:2:3",
        "ber_out=",
        "ber_in=",
        "rb_log10=",
        "self_pulsing=",
    ] {
        assert!(stdout.contains(key), "missing {key} in: {stdout}");
    }
    assert!(dir.path().join("manifest.toml").exists());
}

#[test]
fn simulate_rejects_malformed_task_with_exit_2() {
    let out = bin()
        .args([
            "simulate",
            "--bitrate",
            "100",
            "--detuning",
            "0",
            "--power",
            "8",
            "--task",
            "XOR:2",
            "--nv",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("n2"),
        "stderr should name the field: {stderr}"
    );
}

#[test]
fn simulate_dump_traces_writes_parseable_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fast_config(dir.path());
    let out = bin()
        .args([
            "simulate",
            "--bitrate",
            "1000",
            "--detuning",
            "0",
            "--power",
            "12",
            "--task",
            "AND:1:1",
            "--nv",
            "5",
            "--dump-traces",
            "--config",
        ])
        .arg(&config)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["trace_input.csv", "trace_output.csv"] {
        let wf = OpticalWaveform::read_dump_file(&dir.path().join(name)).unwrap();
        assert!(wf.len() > 1000, "{name} too short");
        assert_eq!(wf.sample_rate, 20e9);
    }
}

#[test]
fn sweep_cli_is_deterministic_across_worker_counts_and_manifest_replays() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fast_config(dir.path());
    let run = |out_name: &str, workers: &str, cfg: &Path| {
        let out_dir = dir.path().join(out_name);
        let out = bin()
            .args(["sweep", "--workers", workers, "--config"])
            .arg(cfg)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out_dir
    };
    let d1 = run("w1", "1", &config);
    let d2 = run("w2", "2", &config);
    let csv1 = std::fs::read(d1.join("results.csv")).unwrap();
    let csv2 = std::fs::read(d2.join("results.csv")).unwrap();
    assert_eq!(csv1, csv2, "worker count changed the CSV bytes");

    // Re-running from the manifest reproduces the same bytes.
    let d3 = run("replay", "2", &d1.join("manifest.toml"));
    let csv3 = std::fs::read(d3.join("results.csv")).unwrap();
    assert_eq!(csv1, csv3, "manifest replay changed the CSV bytes");

    let rows = parse_results_csv(csv1.as_slice()).unwrap();
    assert_eq!(rows.len(), 2);
}

#[test]
fn sweep_cli_missing_config_exits_2() {
    let out = bin()
        .args(["sweep", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_cli_renders_channels_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    // Build a small result set in-process to plot.
    let grid = SweepGrid {
        bitrates_mbps: vec![100.0, 1000.0],
        detunings_ghz: vec![-20.0, 20.0],
        powers_dbm: vec![12.0],
        n_v_list: vec![5],
        tasks: vec!["AND:1:1".parse().unwrap()],
        seeds: vec![1],
    };
    let models = fast_models();
    let cells = run_sweep(&grid, &models, 2).unwrap();
    let csv_path = dir.path().join("results.csv");
    let mut buf = Vec::new();
    export_results_csv(&cells, &mut buf).unwrap();
    std::fs::write(&csv_path, &buf).unwrap();

    for channel in ["ber_out", "power", "rb"] {
        let svg_path = dir.path().join(format!("{channel}.svg"));
        let out = bin()
            .args(["plot", "--channel", channel, "--task", "AND:1:1", "--csv"])
            .arg(&csv_path)
            .arg("--out")
            .arg(&svg_path)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{channel}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let svg = std::fs::read_to_string(&svg_path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("</svg>"));
    }

    // Unknown channel and schema mismatch both exit 2.
    let out = bin()
        .args(["plot", "--channel", "banana", "--task", "AND:1:1", "--csv"])
        .arg(&csv_path)
        .arg("--out")
        .arg(dir.path().join("x.svg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "a,b,c\n1,2,3\n").unwrap();
    let out = bin()
        .args(["plot", "--channel", "rb", "--task", "AND:1:1", "--csv"])
        .arg(&bad_csv)
        .arg("--out")
        .arg(dir.path().join("y.svg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_shot_matches_the_sweep_path() {
    // run_configuration and the trace-sharing sweep must produce identical
    // numbers for the same grid point.
    let grid = SweepGrid {
        bitrates_mbps: vec![1000.0],
        detunings_ghz: vec![-20.0],
        powers_dbm: vec![16.0],
        n_v_list: vec![5],
        tasks: vec!["XOR:1:2".parse().unwrap()],
        seeds: vec![1],
    };
    let models = fast_models();
    let cells = run_sweep(&grid, &models, 2).unwrap();
    assert_eq!(cells.len(), 1);
    let sweep_eval = cells[0].outcome.as_ref().unwrap();

    let point = GridPoint {
        task: "XOR:1:2".parse().unwrap(),
        n_v: 5,
        bitrate_mbps: 1000.0,
        detuning_ghz: -20.0,
        power_dbm: 16.0,
        seed: 1,
    };
    let single = run_configuration(&point, &models).unwrap();
    assert_eq!(single.eval.ber_out, sweep_eval.ber_out);
    assert_eq!(single.eval.ber_in, sweep_eval.ber_in);
    assert_eq!(single.eval.lambda_out, sweep_eval.lambda_out);
    assert_eq!(single.eval.lambda_in, sweep_eval.lambda_in);
    assert_eq!(single.eval.self_pulsing, sweep_eval.self_pulsing);
}

#[test]
fn failed_cells_stay_isolated() {
    // A pathological parameter set (absurd nonlinear strength) blows up
    // the integration at high power but must not poison the other cells.
    let mut models = fast_models();
    models.ring = models.ring.with_nonlinear_scale(1e9);
    let grid = SweepGrid {
        bitrates_mbps: vec![1000.0],
        detunings_ghz: vec![0.0],
        powers_dbm: vec![16.0],
        n_v_list: vec![5],
        tasks: vec!["AND:1:1".parse().unwrap()],
        seeds: vec![1],
    };
    let cells = run_sweep(&grid, &models, 1).unwrap();
    assert_eq!(cells.len(), 1);
    // Whether this cell failed or produced garbage BER, the CSV must stay
    // writable and parseable.
    let mut buf = Vec::new();
    export_results_csv(&cells, &mut buf).unwrap();
    let rows = parse_results_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
}
