//! Full-factorial experiment runner: bitrate x detuning x power x task x
//! N_v, with BER evaluated on both the input and output branches of every
//! configuration, best-over-power aggregation, and deterministic CSV
//! export.
//!
//! One physical trace per (bitrate, detuning, power, seed) is shared by
//! every task and N_v, exactly as the bench acquires one input/output
//! recording per parameter combination and trains all tasks offline on
//! the stored data. Cells run in parallel with no shared mutable state;
//! output bytes are independent of the worker count.

use crate::nodes::{assemble_design_matrix, rebin_to_nodes, Branch, NodeError, NodeMatrix};
use crate::readout::{
    train_test_evaluate, BranchEvaluation, Evaluation, ReadoutError, ReadoutSettings,
    TrainTestProtocol,
};
use crate::ring::{
    integrate_trace, probe_self_pulsing, OutputPort, RingError, RingParams, SolverSettings,
};
use crate::signal::{
    encode_ook, photodetect, prbs8_generate, DetectorModel, ModulatorModel, PrbsError, SignalError,
};
use crate::tasks::{build_targets, TaskError, TaskSpec};
use crate::waveform::{OpticalWaveform, WaveformError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid: {0}")]
    InvalidGrid(String),
    #[error("no results for the requested selection")]
    EmptyInput,
    #[error("input and output branches evaluated different test rows")]
    BranchMisalignment,
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Prbs(#[from] PrbsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Exact CSV header, fixed by the file contract.
pub const CSV_HEADER: &str = "task,n1,n2,n_v,bitrate_mbps,detuning_ghz,power_dbm,ber_out,errors_out,ntest,at_floor_out,ber_in,errors_in,at_floor_in,lambda_out,lambda_in,rb_log10,self_pulsing,seed";

/// The swept parameter axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub bitrates_mbps: Vec<f64>,
    pub detunings_ghz: Vec<f64>,
    pub powers_dbm: Vec<f64>,
    pub n_v_list: Vec<usize>,
    pub tasks: Vec<TaskSpec>,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self::paper_full()
    }
}

impl SweepGrid {
    /// The measured parameter space: 13 bitrates, 13 detunings, 11 powers,
    /// and all task cases up to bit distance 3.
    pub fn paper_full() -> Self {
        let mut tasks = Vec::new();
        for op in ["AND", "OR", "XOR"] {
            for n1 in 1..=3usize {
                for n2 in 1..=n1 + 1 {
                    tasks.push(format!("{op}:{n1}:{n2}").parse().unwrap());
                }
            }
        }
        Self {
            bitrates_mbps: vec![
                20.0, 40.0, 50.0, 80.0, 100.0, 200.0, 250.0, 400.0, 500.0, 800.0, 1000.0, 2000.0,
                4000.0,
            ],
            detunings_ghz: (-6..=6).map(|i| 5.0 * i as f64).collect(),
            powers_dbm: (8..=18).map(f64::from).collect(),
            n_v_list: vec![3, 4, 5, 10, 15, 20, 30],
            tasks,
            seeds: vec![1],
        }
    }

    /// CI-sized grid: minutes instead of hours, still wide enough to show
    /// the memory and nonlinearity signatures.
    pub fn desk() -> Self {
        let tasks = [
            "AND:1:1", "AND:1:2", "AND:2:1", "AND:3:1", "XOR:1:1", "XOR:1:2", "XOR:2:1", "XOR:2:2",
            "XOR:2:3",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        Self {
            bitrates_mbps: vec![50.0, 100.0, 250.0, 1000.0],
            detunings_ghz: vec![-20.0, 0.0, 20.0],
            powers_dbm: vec![8.0, 12.0, 16.0],
            n_v_list: vec![5],
            tasks,
            seeds: vec![1],
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let need = |name: &str, empty: bool| {
            if empty {
                Err(SweepError::InvalidGrid(format!("{name} list is empty")))
            } else {
                Ok(())
            }
        };
        need("bitrates_mbps", self.bitrates_mbps.is_empty())?;
        need("detunings_ghz", self.detunings_ghz.is_empty())?;
        need("powers_dbm", self.powers_dbm.is_empty())?;
        need("n_v", self.n_v_list.is_empty())?;
        need("seeds", self.seeds.is_empty())?;
        // An empty task list is allowed and yields an empty result set.
        for &b in &self.bitrates_mbps {
            if !(b > 0.0) || !b.is_finite() {
                return Err(SweepError::InvalidGrid(format!("bad bitrate {b} Mbps")));
            }
        }
        for &d in &self.detunings_ghz {
            if !d.is_finite() {
                return Err(SweepError::InvalidGrid(format!("bad detuning {d} GHz")));
            }
        }
        for &p in &self.powers_dbm {
            if !p.is_finite() {
                return Err(SweepError::InvalidGrid(format!("bad power {p} dBm")));
            }
        }
        for &v in &self.n_v_list {
            if v == 0 {
                return Err(SweepError::InvalidGrid("n_v must be >= 1".into()));
            }
        }
        for t in &self.tasks {
            t.validate()
                .map_err(|e| SweepError::InvalidGrid(e.to_string()))?;
        }
        Ok(())
    }

    /// All grid points in the canonical result order:
    /// (task, n_v, bitrate, detuning, power, seed).
    pub fn points(&self) -> Vec<GridPoint> {
        let mut tasks = self.tasks.clone();
        tasks.sort();
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let bitrates = sorted(&self.bitrates_mbps);
        let detunings = sorted(&self.detunings_ghz);
        let powers = sorted(&self.powers_dbm);
        let mut n_vs = self.n_v_list.clone();
        n_vs.sort_unstable();
        n_vs.dedup();
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();

        let mut out = Vec::new();
        for task in &tasks {
            for &n_v in &n_vs {
                for &bitrate in &bitrates {
                    for &detuning in &detunings {
                        for &power in &powers {
                            for &seed in &seeds {
                                out.push(GridPoint {
                                    task: *task,
                                    n_v,
                                    bitrate_mbps: bitrate,
                                    detuning_ghz: detuning,
                                    power_dbm: power,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One cell of the factorial experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub task: TaskSpec,
    pub n_v: usize,
    pub bitrate_mbps: f64,
    pub detuning_ghz: f64,
    pub power_dbm: f64,
    pub seed: u64,
}

/// Everything the pipeline needs besides the grid.
#[derive(Debug, Clone)]
pub struct PipelineModels {
    pub ring: RingParams,
    pub modulator: ModulatorModel,
    pub detector: DetectorModel,
    pub solver: SolverSettings,
    pub readout: ReadoutSettings,
    pub protocol: TrainTestProtocol,
    /// Rate at which the optical input is synthesized and integrated.
    pub sim_sample_rate: f64,
    pub output_port: OutputPort,
}

impl Default for PipelineModels {
    fn default() -> Self {
        Self {
            ring: RingParams::default(),
            modulator: ModulatorModel::default(),
            detector: DetectorModel::default(),
            solver: SolverSettings::default(),
            readout: ReadoutSettings::default(),
            protocol: TrainTestProtocol::default(),
            sim_sample_rate: 40e9,
            output_port: OutputPort::Through,
        }
    }
}

impl PipelineModels {
    pub fn validate(&self) -> Result<(), SweepError> {
        self.ring.validate()?;
        self.modulator.validate()?;
        self.detector.validate()?;
        self.solver.validate()?;
        if !(self.sim_sample_rate >= self.detector.adc_sample_rate) {
            return Err(SweepError::InvalidGrid(format!(
                "sim_sample_rate ({}) must be >= the ADC rate ({})",
                self.sim_sample_rate, self.detector.adc_sample_rate
            )));
        }
        Ok(())
    }
}

/// Numbers produced by evaluating one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEval {
    pub ber_out: Evaluation,
    pub ber_in: Evaluation,
    pub lambda_out: f64,
    pub lambda_in: f64,
    pub self_pulsing: bool,
}

impl CellEval {
    /// Row-level RB: log10(ber_in / ber_out) at this cell's power.
    pub fn rb_log10(&self) -> f64 {
        rb_ratio(&self.ber_in, &self.ber_out)
    }
}

/// log10(BER_in / BER_out); positive means the ring helps. Floors keep
/// both BERs strictly positive.
pub fn rb_ratio(ber_in: &Evaluation, ber_out: &Evaluation) -> f64 {
    ber_in.ber.log10() - ber_out.ber.log10()
}

/// A grid point plus its outcome; numeric failures (for example a diverged
/// integration) mark the cell failed without touching any other cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub point: GridPoint,
    pub outcome: Result<CellEval, String>,
}

/// Flattened single-configuration result used by the CLI.
#[derive(Debug, Clone)]
pub struct ConfigResult {
    pub point: GridPoint,
    pub eval: CellEval,
}

fn noise_seed(
    master: u64,
    bitrate_mbps: f64,
    detuning_ghz: f64,
    power_dbm: f64,
    branch: u64,
) -> u64 {
    // splitmix64 chain over the trace identity; task and n_v deliberately
    // excluded so every task trains on the same recorded trace.
    let mut h = 0x9e3779b97f4a7c15u64 ^ master;
    for v in [
        bitrate_mbps.to_bits(),
        detuning_ghz.to_bits(),
        power_dbm.to_bits(),
        branch,
    ] {
        h ^= v;
        h = h.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Identity of one physical acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceKey {
    pub bitrate_mbps: f64,
    pub detuning_ghz: f64,
    pub power_dbm: f64,
    pub seed: u64,
}

impl TraceKey {
    pub fn of(p: &GridPoint) -> Self {
        Self {
            bitrate_mbps: p.bitrate_mbps,
            detuning_ghz: p.detuning_ghz,
            power_dbm: p.power_dbm,
            seed: p.seed,
        }
    }

    fn bits(&self) -> (u64, u64, u64, u64) {
        (
            self.bitrate_mbps.to_bits(),
            self.detuning_ghz.to_bits(),
            self.power_dbm.to_bits(),
            self.seed,
        )
    }
}

/// Detected input/output traces of one acquisition, before re-binning.
#[derive(Debug, Clone)]
pub struct DetectedTraces {
    pub input: OpticalWaveform,
    pub output: OpticalWaveform,
    pub input_field: OpticalWaveform,
    pub output_field: OpticalWaveform,
    pub self_pulsing: bool,
}

/// Run the signal chain and the ring for one acquisition: encode the PRBS,
/// detect the input branch, integrate the ring, detect the output branch,
/// and probe the CW self-pulsing flag at this detuning/power.
pub fn simulate_traces(
    key: &TraceKey,
    models: &PipelineModels,
) -> Result<DetectedTraces, SweepError> {
    simulate_traces_with_sp(key, models, None)
}

fn simulate_traces_with_sp(
    key: &TraceKey,
    models: &PipelineModels,
    known_sp: Option<bool>,
) -> Result<DetectedTraces, SweepError> {
    let prbs_seed = (key.seed % 255 + 1) as u8;
    let bits = prbs8_generate(prbs_seed)?;
    let periods = models.protocol.periods(bits.period());
    let bitrate = key.bitrate_mbps * 1e6;
    let detuning = key.detuning_ghz * 1e9;
    let power_w = models.ring.waveguide_power_w(key.power_dbm);

    let input_field = encode_ook(
        &bits,
        periods,
        bitrate,
        power_w,
        &models.modulator,
        models.sim_sample_rate,
    )?;
    let input = photodetect(
        &input_field,
        &models.detector,
        noise_seed(
            key.seed,
            key.bitrate_mbps,
            key.detuning_ghz,
            key.power_dbm,
            0,
        ),
    )?;
    let ring_out = integrate_trace(&input_field, detuning, &models.ring, &models.solver)?;
    let output_field = ring_out.port(models.output_port).clone();
    let output = photodetect(
        &output_field,
        &models.detector,
        noise_seed(
            key.seed,
            key.bitrate_mbps,
            key.detuning_ghz,
            key.power_dbm,
            1,
        ),
    )?;
    let self_pulsing = match known_sp {
        Some(flag) => flag,
        None => probe_self_pulsing(&models.ring, detuning, power_w, &models.solver)?.is_pulsing,
    };

    Ok(DetectedTraces {
        input,
        output,
        input_field,
        output_field,
        self_pulsing,
    })
}

/// Node matrices of one acquisition for every requested N_v.
struct UnitNodes {
    per_n_v: Vec<(usize, Arc<NodeMatrix>, Arc<NodeMatrix>)>,
    self_pulsing: bool,
    bits: Vec<u8>,
}

fn build_unit_nodes(
    key: &TraceKey,
    models: &PipelineModels,
    n_v_list: &[usize],
    known_sp: Option<bool>,
) -> Result<UnitNodes, SweepError> {
    let traces = simulate_traces_with_sp(key, models, known_sp)?;
    let bitrate = key.bitrate_mbps * 1e6;
    let prbs_seed = (key.seed % 255 + 1) as u8;
    let seq = prbs8_generate(prbs_seed)?;
    let periods = models.protocol.periods(seq.period());
    let bits = seq.repeated(periods);

    let mut per_n_v = Vec::with_capacity(n_v_list.len());
    for &n_v in n_v_list {
        let input = rebin_to_nodes(&traces.input, bitrate, n_v, 0, Branch::Input)?;
        let output = rebin_to_nodes(&traces.output, bitrate, n_v, 0, Branch::Output)?;
        per_n_v.push((n_v, Arc::new(input), Arc::new(output)));
    }
    Ok(UnitNodes {
        per_n_v,
        self_pulsing: traces.self_pulsing,
        bits,
    })
}

fn evaluate_cell(
    point: &GridPoint,
    models: &PipelineModels,
    input_nodes: &NodeMatrix,
    output_nodes: &NodeMatrix,
    bits: &[u8],
    self_pulsing: bool,
) -> Result<CellEval, SweepError> {
    let task = point.task;
    let targets = build_targets(bits, &task)?;
    let guard = task.n1.max(task.n2);

    let design_in = assemble_design_matrix(input_nodes, task.n2)?;
    let design_out = assemble_design_matrix(output_nodes, task.n2)?;
    let run = |design| -> Result<BranchEvaluation, SweepError> {
        Ok(train_test_evaluate(
            design,
            &targets,
            &models.protocol,
            guard,
            &models.readout,
        )?)
    };
    let out_branch = run(&design_out)?;
    let in_branch = run(&design_in)?;
    if out_branch.test_bit_index != in_branch.test_bit_index {
        return Err(SweepError::BranchMisalignment);
    }

    Ok(CellEval {
        ber_out: out_branch.eval,
        ber_in: in_branch.eval,
        lambda_out: out_branch.weights.lambda,
        lambda_in: in_branch.weights.lambda,
        self_pulsing,
    })
}

/// Evaluate one grid point from already-detected traces (used when the
/// caller also wants to keep or dump the traces themselves).
pub fn evaluate_from_traces(
    point: &GridPoint,
    models: &PipelineModels,
    traces: &DetectedTraces,
) -> Result<ConfigResult, SweepError> {
    point
        .task
        .validate()
        .map_err(|e| SweepError::InvalidGrid(e.to_string()))?;
    let bitrate = point.bitrate_mbps * 1e6;
    let input_nodes = rebin_to_nodes(&traces.input, bitrate, point.n_v, 0, Branch::Input)?;
    let output_nodes = rebin_to_nodes(&traces.output, bitrate, point.n_v, 0, Branch::Output)?;
    let seq = prbs8_generate((point.seed % 255 + 1) as u8)?;
    let bits = seq.repeated(models.protocol.periods(seq.period()));
    let eval = evaluate_cell(
        point,
        models,
        &input_nodes,
        &output_nodes,
        &bits,
        traces.self_pulsing,
    )?;
    Ok(ConfigResult {
        point: *point,
        eval,
    })
}

/// Run one grid point end to end. This is the single-shot path used by the
/// CLI; sweeps share traces across tasks instead of calling this in a loop.
pub fn run_configuration(
    point: &GridPoint,
    models: &PipelineModels,
) -> Result<ConfigResult, SweepError> {
    models.validate()?;
    let traces = simulate_traces(&TraceKey::of(point), models)?;
    evaluate_from_traces(point, models, &traces)
}

/// Execute the whole grid on `workers` threads. Results come back in the
/// canonical point order with failures isolated per cell, and the values
/// are identical for any worker count.
pub fn run_sweep(
    grid: &SweepGrid,
    models: &PipelineModels,
    workers: usize,
) -> Result<Vec<SweepCell>, SweepError> {
    grid.validate()?;
    models.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    pool.install(|| run_sweep_inner(grid, models))
}

fn run_sweep_inner(
    grid: &SweepGrid,
    models: &PipelineModels,
) -> Result<Vec<SweepCell>, SweepError> {
    use rayon::prelude::*;

    let points = grid.points();
    if points.is_empty() {
        return Ok(Vec::new());
    }

    // Stage 0: CW self-pulsing flags per unique (detuning, power); cheap
    // relative to the trace integrations and shared across bitrates.
    let mut dp: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.detuning_ghz, p.power_dbm))
        .collect();
    dp.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    dp.dedup();
    let sp_flags: HashMap<(u64, u64), bool> = dp
        .par_iter()
        .map(|&(det, pow)| {
            let flag = probe_self_pulsing(
                &models.ring,
                det * 1e9,
                models.ring.waveguide_power_w(pow),
                &models.solver,
            )
            .map(|sp| sp.is_pulsing)
            .unwrap_or(false);
            ((det.to_bits(), pow.to_bits()), flag)
        })
        .collect();

    // Stage 1: one physical trace per unique acquisition, longest first so
    // the expensive low-bitrate traces do not straggle at the end.
    let mut keys: Vec<TraceKey> = points.iter().map(TraceKey::of).collect();
    keys.sort_by(|a, b| {
        a.bitrate_mbps
            .total_cmp(&b.bitrate_mbps)
            .then(a.detuning_ghz.total_cmp(&b.detuning_ghz))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
            .then(a.seed.cmp(&b.seed))
    });
    keys.dedup_by(|a, b| a.bits() == b.bits());

    let n_v_list: Vec<usize> = {
        let mut v = grid.n_v_list.clone();
        v.sort_unstable();
        v.dedup();
        v
    };

    type UnitMap = HashMap<(u64, u64, u64, u64), Result<Arc<UnitNodes>, String>>;
    let units: UnitMap = keys
        .par_iter()
        .map(|key| {
            let sp = sp_flags
                .get(&(key.detuning_ghz.to_bits(), key.power_dbm.to_bits()))
                .copied();
            let unit = build_unit_nodes(key, models, &n_v_list, sp)
                .map(Arc::new)
                .map_err(|e| e.to_string());
            (key.bits(), unit)
        })
        .collect();

    // Stage 2: evaluate every cell from the shared node matrices.
    let cells: Vec<SweepCell> = points
        .par_iter()
        .map(|point| {
            let outcome = match units.get(&TraceKey::of(point).bits()) {
                Some(Ok(unit)) => {
                    let nodes = unit
                        .per_n_v
                        .iter()
                        .find(|(n_v, _, _)| *n_v == point.n_v)
                        .expect("n_v present by construction");
                    evaluate_cell(
                        point,
                        models,
                        &nodes.1,
                        &nodes.2,
                        &unit.bits,
                        unit.self_pulsing,
                    )
                    .map_err(|e| e.to_string())
                }
                Some(Err(e)) => Err(e.clone()),
                None => Err("internal: missing trace unit".into()),
            };
            SweepCell {
                point: *point,
                outcome,
            }
        })
        .collect();

    Ok(cells)
}

// ---------------------------------------------------------------------------
// CSV export / import
// ---------------------------------------------------------------------------

/// Write results in the canonical schema and order. Failed cells carry NaN
/// in the numeric columns and ntest = 0.
pub fn export_results_csv<W: Write>(cells: &[SweepCell], writer: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| SweepError::Csv(e.to_string()))?;
    for cell in cells {
        let p = &cell.point;
        let mut record: Vec<String> = vec![
            p.task.op.name().to_string(),
            p.task.n1.to_string(),
            p.task.n2.to_string(),
            p.n_v.to_string(),
            format_float(p.bitrate_mbps),
            format_float(p.detuning_ghz),
            format_float(p.power_dbm),
        ];
        match &cell.outcome {
            Ok(eval) => {
                record.extend([
                    format_float(eval.ber_out.ber),
                    eval.ber_out.errors.to_string(),
                    eval.ber_out.n_test.to_string(),
                    eval.ber_out.at_floor.to_string(),
                    format_float(eval.ber_in.ber),
                    eval.ber_in.errors.to_string(),
                    eval.ber_in.at_floor.to_string(),
                    format_float(eval.lambda_out),
                    format_float(eval.lambda_in),
                    format_float(eval.rb_log10()),
                    eval.self_pulsing.to_string(),
                    p.seed.to_string(),
                ]);
            }
            Err(_) => {
                record.extend([
                    "NaN".into(),
                    "0".into(),
                    "0".into(),
                    "false".into(),
                    "NaN".into(),
                    "0".into(),
                    "false".into(),
                    "NaN".into(),
                    "NaN".into(),
                    "NaN".into(),
                    "false".into(),
                    p.seed.to_string(),
                ]);
            }
        }
        w.write_record(&record)
            .map_err(|e| SweepError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SweepError::Csv(e.to_string()))?;
    Ok(())
}

pub fn export_results_csv_path(
    cells: &[SweepCell],
    path: &std::path::Path,
) -> Result<(), SweepError> {
    let file = std::fs::File::create(path).map_err(|source| SweepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    export_results_csv(cells, std::io::BufWriter::new(file))
}

fn format_float(v: f64) -> String {
    // Shortest round-trippable representation; stable across runs.
    format!("{v}")
}

/// One parsed CSV row. `ntest == 0` marks a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub task: TaskSpec,
    pub n_v: usize,
    pub bitrate_mbps: f64,
    pub detuning_ghz: f64,
    pub power_dbm: f64,
    pub ber_out: f64,
    pub errors_out: usize,
    pub ntest: usize,
    pub at_floor_out: bool,
    pub ber_in: f64,
    pub errors_in: usize,
    pub at_floor_in: bool,
    pub lambda_out: f64,
    pub lambda_in: f64,
    pub rb_log10: f64,
    pub self_pulsing: bool,
    pub seed: u64,
}

impl ResultRow {
    pub fn is_failed(&self) -> bool {
        self.ntest == 0
    }
}

/// Parse a results CSV produced by [`export_results_csv`]. Strict about
/// the header and field syntax, tolerant of nothing else.
pub fn parse_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>, SweepError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    {
        let headers = r.headers().map_err(|e| SweepError::Csv(e.to_string()))?;
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(SweepError::Csv(format!(
                "unexpected header: got '{}'",
                got.join(",")
            )));
        }
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| SweepError::Csv(e.to_string()))?;
        if record.len() != 19 {
            return Err(SweepError::Csv(format!(
                "row {line}: expected 19 fields, got {}",
                record.len()
            )));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let err = |i: usize, what: &str| {
            SweepError::Csv(format!("row {line}, column {i}: bad {what} '{}'", field(i)))
        };
        let parse_f64 = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| err(i, what));
        let parse_usize =
            |i: usize, what: &str| field(i).parse::<usize>().map_err(|_| err(i, what));
        let parse_bool = |i: usize, what: &str| field(i).parse::<bool>().map_err(|_| err(i, what));

        let task: TaskSpec = format!("{}:{}:{}", field(0), field(1), field(2))
            .parse()
            .map_err(|e| SweepError::Csv(format!("row {line}: {e}")))?;
        rows.push(ResultRow {
            task,
            n_v: parse_usize(3, "n_v")?,
            bitrate_mbps: parse_f64(4, "bitrate")?,
            detuning_ghz: parse_f64(5, "detuning")?,
            power_dbm: parse_f64(6, "power")?,
            ber_out: parse_f64(7, "ber_out")?,
            errors_out: parse_usize(8, "errors_out")?,
            ntest: parse_usize(9, "ntest")?,
            at_floor_out: parse_bool(10, "at_floor_out")?,
            ber_in: parse_f64(11, "ber_in")?,
            errors_in: parse_usize(12, "errors_in")?,
            at_floor_in: parse_bool(13, "at_floor_in")?,
            lambda_out: parse_f64(14, "lambda_out")?,
            lambda_in: parse_f64(15, "lambda_in")?,
            rb_log10: parse_f64(16, "rb_log10")?,
            self_pulsing: parse_bool(17, "self_pulsing")?,
            seed: field(18).parse().map_err(|_| err(18, "seed"))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Best-over-power aggregation and map grids
// ---------------------------------------------------------------------------

/// Power-axis aggregate for one (task, n_v, bitrate, detuning) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BestCell {
    /// Minimal output BER over the power axis.
    pub ber_out: f64,
    pub floor_out: bool,
    /// Lowest power achieving that BER.
    pub power_dbm: f64,
    /// Input-branch BER at that same power (stored to disambiguate RB).
    pub ber_in_at_best_power: f64,
    /// Minimal input BER over the power axis (best-vs-best RB numerator).
    pub best_ber_in: f64,
    pub floor_in: bool,
}

impl BestCell {
    /// Best-vs-best RB in decades.
    pub fn rb_log10(&self) -> f64 {
        self.best_ber_in.log10() - self.ber_out.log10()
    }
}

/// Reduce the rows of one (task, n_v, bitrate, detuning) cell over power.
/// Ties in BER go to the lowest power. Failed rows are skipped; if every
/// row failed the cell has no best entry.
pub fn best_over_power(rows: &[&ResultRow]) -> Result<Option<BestCell>, SweepError> {
    if rows.is_empty() {
        return Err(SweepError::EmptyInput);
    }
    let mut ok: Vec<&&ResultRow> = rows.iter().filter(|r| !r.is_failed()).collect();
    if ok.is_empty() {
        return Ok(None);
    }
    ok.sort_by(|a, b| a.power_dbm.total_cmp(&b.power_dbm));
    let mut best = ok[0];
    for row in &ok[1..] {
        if row.ber_out < best.ber_out {
            best = row;
        }
    }
    let mut best_in = ok[0];
    for row in &ok[1..] {
        if row.ber_in < best_in.ber_in {
            best_in = row;
        }
    }
    Ok(Some(BestCell {
        ber_out: best.ber_out,
        floor_out: best.at_floor_out,
        power_dbm: best.power_dbm,
        ber_in_at_best_power: best.ber_in,
        best_ber_in: best_in.ber_in,
        floor_in: best_in.at_floor_in,
    }))
}

/// Bitrate x detuning map of best-over-power values for one task and N_v.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub task: TaskSpec,
    pub n_v: usize,
    pub bitrates_mbps: Vec<f64>,
    pub detunings_ghz: Vec<f64>,
    /// Row-major [bitrate][detuning]; `None` marks a failed cell.
    pub cells: Vec<Option<BestCell>>,
}

impl MapGrid {
    pub fn cell(&self, bitrate_idx: usize, detuning_idx: usize) -> &Option<BestCell> {
        &self.cells[bitrate_idx * self.detunings_ghz.len() + detuning_idx]
    }
}

/// Aggregate parsed rows into the map for one (task, n_v).
pub fn build_map_grid(
    rows: &[ResultRow],
    task: &TaskSpec,
    n_v: usize,
) -> Result<MapGrid, SweepError> {
    let selected: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.task == *task && r.n_v == n_v)
        .collect();
    if selected.is_empty() {
        return Err(SweepError::EmptyInput);
    }
    let mut bitrates: Vec<f64> = selected.iter().map(|r| r.bitrate_mbps).collect();
    bitrates.sort_by(f64::total_cmp);
    bitrates.dedup();
    let mut detunings: Vec<f64> = selected.iter().map(|r| r.detuning_ghz).collect();
    detunings.sort_by(f64::total_cmp);
    detunings.dedup();

    let mut cells = Vec::with_capacity(bitrates.len() * detunings.len());
    for &b in &bitrates {
        for &d in &detunings {
            let cell_rows: Vec<&ResultRow> = selected
                .iter()
                .copied()
                .filter(|r| r.bitrate_mbps == b && r.detuning_ghz == d)
                .collect();
            if cell_rows.is_empty() {
                cells.push(None);
            } else {
                cells.push(best_over_power(&cell_rows)?);
            }
        }
    }
    Ok(MapGrid {
        task: *task,
        n_v,
        bitrates_mbps: bitrates,
        detunings_ghz: detunings,
        cells,
    })
}
