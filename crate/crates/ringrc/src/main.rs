//! Command-line front end: single-configuration runs, parameter sweeps,
//! and SVG maps from result CSVs.

use clap::{Args, Parser, Subcommand};
use ringrc::config::{Config, GridKind, RunManifest};
use ringrc::plot::{render_heatmap_svg, MapChannel};
use ringrc::sweep::{
    build_map_grid, evaluate_from_traces, export_results_csv_path, parse_results_csv, run_sweep,
    simulate_traces, GridPoint, SweepError, TraceKey,
};
use ringrc::tasks::TaskSpec;
use std::path::PathBuf;

const EXIT_OK: i32 = 0;
/// Usage or configuration problems.
const EXIT_CONFIG: i32 = 2;
/// Numeric failures during simulation.
const EXIT_NUMERIC: i32 = 3;

#[derive(Parser)]
#[command(
    name = "ringrc",
    version,
    about = "Microring reservoir-computing bench: simulate, sweep, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration and report both branches' BER.
    Simulate(SimulateArgs),
    /// Run the factorial sweep and write results.csv plus a run manifest.
    Sweep(SweepArgs),
    /// Render an SVG heatmap from a results CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Bit rate in Mbps.
    #[arg(long)]
    bitrate: f64,
    /// Laser detuning from the cold resonance in GHz.
    #[arg(long, allow_negative_numbers = true)]
    detuning: f64,
    /// Average optical power in dBm.
    #[arg(long, allow_negative_numbers = true)]
    power: f64,
    /// Task as OP:n1:n2, e.g. XOR:2:3.
    #[arg(long)]
    task: String,
    /// Number of virtual nodes per bit.
    #[arg(long)]
    nv: usize,
    /// RNG seed for the detection noise.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Optional config file (plain config or run manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the detected input/output traces to the output directory.
    #[arg(long)]
    dump_traces: bool,
    /// Output directory for the manifest and optional traces.
    #[arg(long, default_value = "ringrc-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Config file (plain config or run manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base grid when the config does not override the axes.
    #[arg(long, value_parser = parse_grid_kind, default_value = "desk")]
    grid: GridKind,
    /// Worker threads; defaults to RINGRC_WORKERS or the CPU count.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for results.csv and manifest.toml.
    #[arg(long, default_value = "ringrc-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV produced by `ringrc sweep`.
    #[arg(long)]
    csv: PathBuf,
    /// Map channel: ber_out, power, or rb.
    #[arg(long)]
    channel: String,
    /// Task filter as OP:n1:n2.
    #[arg(long)]
    task: String,
    /// Virtual-node filter; may be omitted when the CSV holds only one.
    #[arg(long)]
    nv: Option<usize>,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_grid_kind(s: &str) -> Result<GridKind, String> {
    match s {
        "desk" => Ok(GridKind::Desk),
        "full" => Ok(GridKind::Full),
        other => Err(format!("expected 'desk' or 'full', got '{other}'")),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Plot(args) => cmd_plot(args),
    };
    std::process::exit(code);
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, i32> {
    match path {
        Some(p) => Config::load(p).map_err(|e| {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }),
        None => Ok(Config::default()),
    }
}

fn numeric_exit(e: &SweepError) -> i32 {
    match e {
        SweepError::InvalidGrid(_) | SweepError::Csv(_) | SweepError::EmptyInput => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn cmd_simulate(args: SimulateArgs) -> i32 {
    let task: TaskSpec = match args.task.parse() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let models = config.models();
    let point = GridPoint {
        task,
        n_v: args.nv,
        bitrate_mbps: args.bitrate,
        detuning_ghz: args.detuning,
        power_dbm: args.power,
        seed: args.seed,
    };
    if let Err(e) = std::fs::create_dir_all(&args.out_dir) {
        eprintln!("error: cannot create {}: {e}", args.out_dir.display());
        return EXIT_CONFIG;
    }

    let traces = match simulate_traces(&TraceKey::of(&point), &models) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return numeric_exit(&e);
        }
    };
    let result = match evaluate_from_traces(&point, &models, &traces) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return numeric_exit(&e);
        }
    };

    if args.dump_traces {
        for (name, wf) in [
            ("trace_input.csv", &traces.input),
            ("trace_output.csv", &traces.output),
        ] {
            if let Err(e) = wf.write_dump_file(&args.out_dir.join(name)) {
                eprintln!("error: {e}");
                return EXIT_NUMERIC;
            }
        }
    }

    let mut grid = ringrc::sweep::SweepGrid::desk();
    grid.tasks = vec![task];
    grid.bitrates_mbps = vec![args.bitrate];
    grid.detunings_ghz = vec![args.detuning];
    grid.powers_dbm = vec![args.power];
    grid.n_v_list = vec![args.nv];
    grid.seeds = vec![args.seed];
    let manifest = RunManifest::new(&config, &grid, 1);
    if let Err(e) = manifest.write(&args.out_dir.join("manifest.toml")) {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }

    let e = &result.eval;
    println!(
        "task={} nv={} bitrate_mbps={} detuning_ghz={} power_dbm={} \
         ber_out={:.6e} at_floor_out={} ber_in={:.6e} at_floor_in={} \
         rb_log10={:+.3} lambda_out={:.3e} lambda_in={:.3e} self_pulsing={}",
        point.task,
        point.n_v,
        point.bitrate_mbps,
        point.detuning_ghz,
        point.power_dbm,
        e.ber_out.ber,
        e.ber_out.at_floor,
        e.ber_in.ber,
        e.ber_in.at_floor,
        e.rb_log10(),
        e.lambda_out,
        e.lambda_in,
        e.self_pulsing,
    );
    EXIT_OK
}

fn default_workers() -> usize {
    std::env::var("RINGRC_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn cmd_sweep(args: SweepArgs) -> i32 {
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let grid = match config.resolve_grid(args.grid) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let workers = args.workers.unwrap_or_else(default_workers);
    if let Err(e) = std::fs::create_dir_all(&args.out_dir) {
        eprintln!("error: cannot create {}: {e}", args.out_dir.display());
        return EXIT_CONFIG;
    }

    let models = config.models();
    let started = std::time::Instant::now();
    let cells = match run_sweep(&grid, &models, workers) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return numeric_exit(&e);
        }
    };
    let failed: Vec<&ringrc::sweep::SweepCell> =
        cells.iter().filter(|c| c.outcome.is_err()).collect();

    let csv_path = args.out_dir.join("results.csv");
    if let Err(e) = export_results_csv_path(&cells, &csv_path) {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }
    let manifest = RunManifest::new(&config, &grid, workers);
    if let Err(e) = manifest.write(&args.out_dir.join("manifest.toml")) {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }

    println!(
        "sweep: {} cells ({} failed) in {:.1} s on {} workers -> {}",
        cells.len(),
        failed.len(),
        started.elapsed().as_secs_f64(),
        workers,
        csv_path.display()
    );
    for cell in failed.iter().take(10) {
        let p = &cell.point;
        eprintln!(
            "failed: {} nv={} {} Mbps {} GHz {} dBm: {}",
            p.task,
            p.n_v,
            p.bitrate_mbps,
            p.detuning_ghz,
            p.power_dbm,
            cell.outcome.as_ref().unwrap_err()
        );
    }
    if !cells.is_empty() && failed.len() == cells.len() {
        return EXIT_NUMERIC;
    }
    EXIT_OK
}

fn cmd_plot(args: PlotArgs) -> i32 {
    let channel: MapChannel = match args.channel.parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let task: TaskSpec = match args.task.parse() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let file = match std::fs::File::open(&args.csv) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}: {e}", args.csv.display());
            return EXIT_CONFIG;
        }
    };
    let rows = match parse_results_csv(std::io::BufReader::new(file)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let n_v = match args.nv {
        Some(n) => n,
        None => {
            let mut n_vs: Vec<usize> = rows
                .iter()
                .filter(|r| r.task == task)
                .map(|r| r.n_v)
                .collect();
            n_vs.sort_unstable();
            n_vs.dedup();
            match n_vs.as_slice() {
                [only] => *only,
                [] => {
                    eprintln!("error: no rows for task {task}");
                    return EXIT_CONFIG;
                }
                many => {
                    eprintln!("error: CSV holds several N_v values {many:?} for {task}; pass --nv");
                    return EXIT_CONFIG;
                }
            }
        }
    };
    let map = match build_map_grid(&rows, &task, n_v) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let svg = match render_heatmap_svg(&map, channel) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = std::fs::write(&args.out, svg) {
        eprintln!("error: {}: {e}", args.out.display());
        return EXIT_NUMERIC;
    }
    println!("wrote {}", args.out.display());
    EXIT_OK
}
