//! Command implementations behind the binary: decomposition runs, layer-count
//! sweeps, unitary generation, verification, and the bound table.
//!
//! Everything here is also the test surface for the acceptance suite, so the
//! functions take plain argument structs and return data instead of printing.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::decomposer::{decompose, DecompositionConfig, DecompositionResult};
use crate::error::{Error, Result};
use crate::gates::GateKind;
use crate::numerics::{
    haar_random_unitary, read_umat, spectral_error, write_umat, RandomSource,
};
use crate::optimizer::OptimizerConfig;
use crate::qasm::{circuit_matrix_from_qasm, export_qasm, parse_qasm};
use crate::structure::{cnot_lower_bound, GateStructure};
use crate::topology::Topology;

pub fn parse_entangler(name: &str) -> Result<GateKind> {
    match name.to_ascii_lowercase().as_str() {
        "cnot" | "cx" => Ok(GateKind::Cnot),
        "cz" => Ok(GateKind::Cz),
        "ch" => Ok(GateKind::Ch),
        other => Err(Error::Parse(format!(
            "unknown entangler `{other}` (expected cnot, cz, or ch)"
        ))),
    }
}

/// `--jobs`, overridden by the UNITARY_SYNTH_THREADS environment variable.
pub fn effective_jobs(flag: usize) -> usize {
    std::env::var("UNITARY_SYNTH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(flag)
        .max(1)
}

#[derive(Debug, Clone)]
pub struct DecomposeRequest {
    pub input: PathBuf,
    pub seed: u64,
    pub topology: Option<String>,
    pub layer_counts: Option<Vec<usize>>,
    pub entangler: GateKind,
    pub optimizer: OptimizerConfig,
    pub fine_tune: bool,
    pub fine_tune_max_iter: usize,
    pub invert_input: bool,
    pub strict_qelib1: bool,
    pub out_qasm: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
}

impl DecomposeRequest {
    pub fn new(input: PathBuf) -> Self {
        DecomposeRequest {
            input,
            seed: 0,
            topology: None,
            layer_counts: None,
            entangler: GateKind::Cnot,
            optimizer: OptimizerConfig::default(),
            fine_tune: true,
            fine_tune_max_iter: 2500,
            invert_input: false,
            strict_qelib1: false,
            out_qasm: None,
            out_report: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReportConfig {
    pub optimizer: OptimizerConfig,
    pub fine_tune: bool,
    pub fine_tune_max_iter: usize,
    pub invert_input: bool,
    pub strict_qelib1: bool,
}

/// The JSON report written next to the QASM output. Wall time is printed to
/// stdout instead of being stored here, so identical-seed runs produce
/// byte-identical reports.
#[derive(Debug, Serialize)]
pub struct DecomposeReport {
    pub tool: &'static str,
    pub command: &'static str,
    pub input: String,
    pub n_qubits: usize,
    pub seed: u64,
    pub entangler: &'static str,
    pub topology: Option<String>,
    pub layer_counts: Vec<usize>,
    pub cnot_count: usize,
    pub converged: bool,
    pub spectral_error: f64,
    pub fidelity_cost: f64,
    pub stage_costs: Vec<f64>,
    pub stage_sweeps: Vec<usize>,
    pub stage_restarts: Vec<usize>,
    pub fine_tuned: bool,
    pub topology_violations: usize,
    pub qasm_path: String,
    pub config: ReportConfig,
}

pub struct DecomposeOutcome {
    pub result: DecompositionResult,
    pub report_json: String,
    pub qasm: String,
    pub qasm_path: PathBuf,
    pub report_path: PathBuf,
    pub exit_code: i32,
}

/// Runs a decomposition request end to end and writes both output files.
pub fn run_decompose(req: &DecomposeRequest) -> Result<DecomposeOutcome> {
    let mut u = read_umat(&req.input)?;
    if req.invert_input {
        u = u.dagger();
    }
    if !u.is_square() || !u.rows().is_power_of_two() || u.rows() < 4 {
        return Err(Error::DimensionMismatch(format!(
            "input must be a 2^n x 2^n matrix with n >= 2, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    let n_qubits = u.rows().trailing_zeros() as usize;
    let topology = match &req.topology {
        Some(arg) => Some(Topology::load(arg, n_qubits)?),
        None => None,
    };
    let config = DecompositionConfig {
        optimizer: OptimizerConfig {
            seed: req.seed,
            ..req.optimizer.clone()
        },
        layer_counts: req.layer_counts.clone(),
        topology: topology.clone(),
        entangler: req.entangler,
        fine_tune: req.fine_tune,
        fine_tune_max_iter: req.fine_tune_max_iter,
    };
    let mut rng = RandomSource::new(req.seed);
    let result = decompose(&u, &config, &mut rng)?;

    let qasm = export_qasm(
        &result.structure,
        &result.params,
        topology.as_ref(),
        req.strict_qelib1,
    )?;
    let qasm_path = req
        .out_qasm
        .clone()
        .unwrap_or_else(|| req.input.with_extension("qasm"));
    let report_path = req
        .out_report
        .clone()
        .unwrap_or_else(|| req.input.with_extension("report.json"));
    let violations = match &topology {
        Some(t) => crate::structure::validate_structure(&result.structure, t).len(),
        None => 0,
    };
    let report = DecomposeReport {
        tool: "unitary-synth",
        command: "decompose",
        input: req.input.display().to_string(),
        n_qubits,
        seed: req.seed,
        entangler: req.entangler.name(),
        topology: req.topology.clone(),
        layer_counts: result
            .structure
            .stages
            .iter()
            .map(|s| s.layers.len())
            .collect(),
        cnot_count: result.cnot_count,
        converged: result.converged,
        spectral_error: result.spectral_error,
        fidelity_cost: result.fidelity_cost,
        stage_costs: result.stages.iter().map(|s| s.final_cost).collect(),
        stage_sweeps: result.stages.iter().map(|s| s.sweeps).collect(),
        stage_restarts: result.stages.iter().map(|s| s.restarts).collect(),
        fine_tuned: result.fine_tuned,
        topology_violations: violations,
        qasm_path: qasm_path.display().to_string(),
        config: ReportConfig {
            optimizer: config.optimizer.clone(),
            fine_tune: config.fine_tune,
            fine_tune_max_iter: config.fine_tune_max_iter,
            invert_input: req.invert_input,
            strict_qelib1: req.strict_qelib1,
        },
    };
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Parse(format!("report serialization: {e}")))?
        + "\n";
    std::fs::write(&qasm_path, &qasm)?;
    std::fs::write(&report_path, &report_json)?;
    let exit_code = if result.converged { 0 } else { 2 };
    Ok(DecomposeOutcome {
        result,
        report_json,
        qasm,
        qasm_path,
        report_path,
        exit_code,
    })
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n_qubits: usize,
    pub layer_min: usize,
    pub layer_max: usize,
    pub layer_step: usize,
    pub trials: usize,
    pub topology: Option<String>,
    pub seed: u64,
    pub jobs: usize,
    pub timeout_s: f64,
    pub timing: bool,
    pub entangler: GateKind,
    pub optimizer: OptimizerConfig,
}

impl SweepSpec {
    pub fn new(n_qubits: usize, layer_min: usize, layer_max: usize) -> Self {
        SweepSpec {
            n_qubits,
            layer_min,
            layer_max,
            layer_step: 1,
            trials: 10,
            topology: None,
            seed: 0,
            jobs: 1,
            timeout_s: 600.0,
            timing: false,
            entangler: GateKind::Cnot,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parse("sweep needs at least one trial".into()));
        }
        if self.layer_step == 0 || self.layer_min == 0 || self.layer_max < self.layer_min {
            return Err(Error::Parse("invalid layer range".into()));
        }
        if self.n_qubits < 2 {
            return Err(Error::Parse("sweep needs at least two qubits".into()));
        }
        self.optimizer.validate()
    }
}

/// One (n, layers) sweep point. `eps_mean` is empty when the point blew its
/// wall-time budget (timeouts are recorded as missing values).
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub n_qubits: usize,
    pub layers: usize,
    pub eps_values: Vec<f64>,
    pub eps_mean: Option<f64>,
    pub eps_std: Option<f64>,
    pub seconds_mean: Option<f64>,
    pub timed_out: bool,
}

/// Disentanglement sweep: for each layer count, minimizes the top-qubit
/// disentanglement cost for `trials` fresh Haar unitaries and averages the
/// reached minima.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let topology = match &spec.topology {
        Some(arg) => Some(Topology::load(arg, spec.n_qubits)?),
        None => None,
    };
    let jobs = effective_jobs(spec.jobs);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Optimizer(format!("thread pool: {e}")))?;
    let mut points = Vec::new();
    let mut layers = spec.layer_min;
    while layers <= spec.layer_max {
        let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout_s);
        let trial_ids: Vec<usize> = (0..spec.trials).collect();
        let run_trial = |&t: &usize| -> Result<(f64, bool, f64)> {
            let tag = ((layers as u64) << 32) ^ t as u64;
            let mut rng = RandomSource::new(spec.seed).derive(tag);
            let u = haar_random_unitary(spec.n_qubits, &mut rng)?;
            let structure = GateStructure::single_stage(
                spec.n_qubits,
                topology.as_ref(),
                layers,
                spec.entangler,
            )?;
            let t0 = Instant::now();
            let state = crate::optimizer::sequential_sweep(
                &structure,
                0,
                &u,
                &spec.optimizer,
                &mut rng,
                Some(deadline),
            )?;
            Ok((state.best_value, state.timed_out, t0.elapsed().as_secs_f64()))
        };
        let outcomes: Result<Vec<(f64, bool, f64)>> = if jobs > 1 {
            pool.install(|| trial_ids.par_iter().map(run_trial).collect())
        } else {
            trial_ids.iter().map(run_trial).collect()
        };
        let outcomes = outcomes?;
        let timed_out = outcomes.iter().any(|o| o.1);
        let eps_values: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
        let (eps_mean, eps_std) = if timed_out {
            (None, None)
        } else {
            let mean = eps_values.iter().sum::<f64>() / eps_values.len() as f64;
            let var = eps_values.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                / eps_values.len() as f64;
            (Some(mean), Some(var.sqrt()))
        };
        let seconds_mean = if spec.timing && !timed_out {
            Some(outcomes.iter().map(|o| o.2).sum::<f64>() / outcomes.len() as f64)
        } else {
            None
        };
        points.push(SweepPoint {
            n_qubits: spec.n_qubits,
            layers,
            eps_values,
            eps_mean,
            eps_std,
            seconds_mean,
            timed_out,
        });
        layers += spec.layer_step;
    }
    Ok(points)
}

/// Stable-ordered, locale-independent CSV rendering of sweep results.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("n,layers,eps_mean,eps_std,seconds_mean\n");
    for p in points {
        let eps_mean = p.eps_mean.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let eps_std = p.eps_std.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let secs = p
            .seconds_mean
            .map(|v| format!("{v:.3}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.n_qubits, p.layers, eps_mean, eps_std, secs
        ));
    }
    out
}

/// Writes a Haar-random unitary in .umat format.
pub fn run_random(n_qubits: usize, seed: u64, out: &Path) -> Result<()> {
    let mut rng = RandomSource::new(seed);
    let u = haar_random_unitary(n_qubits, &mut rng)?;
    write_umat(&u, out)
}

pub fn run_bound(n_qubits: u32) -> u64 {
    cnot_lower_bound(n_qubits)
}

#[derive(Debug)]
pub struct VerifyOutcome {
    pub spectral_error: f64,
    pub threshold: f64,
    pub n_qubits: usize,
    pub gate_count: usize,
    pub passed: bool,
}

/// Rebuilds the circuit from QASM and measures its spectral error against the
/// target unitary, as a realization of the target's inverse.
pub fn run_verify(qasm_path: &Path, umat_path: &Path, threshold: f64) -> Result<VerifyOutcome> {
    let src = std::fs::read_to_string(qasm_path)?;
    let parsed = parse_qasm(&src)?;
    let circuit = circuit_matrix_from_qasm(&parsed, true)?;
    let target = read_umat(umat_path)?;
    if circuit.rows() != target.rows() {
        return Err(Error::DimensionMismatch(format!(
            "circuit acts on {} dimensions, target on {}",
            circuit.rows(),
            target.rows()
        )));
    }
    let err = spectral_error(&target.dagger(), &circuit)?;
    Ok(VerifyOutcome {
        spectral_error: err,
        threshold,
        n_qubits: circuit.rows().trailing_zeros() as usize,
        gate_count: parsed.gates.len(),
        passed: err <= threshold,
    })
}

/// Parses "a,b,c" layer-count lists.
pub fn parse_layer_list(arg: &str) -> Result<Vec<usize>> {
    arg.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("layer count `{tok}`: {e}")))
        })
        .collect()
}

/// Parses "min:max" or "min:max:step" layer ranges.
pub fn parse_layer_range(arg: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = arg.split(':').collect();
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("layer range `{s}`: {e}")))
    };
    match parts.as_slice() {
        [min, max] => Ok((parse(min)?, parse(max)?, 1)),
        [min, max, step] => Ok((parse(min)?, parse(max)?, parse(step)?)),
        _ => Err(Error::Parse(format!(
            "layer range `{arg}` must be min:max or min:max:step"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entangler_names() {
        assert_eq!(parse_entangler("cnot").unwrap(), GateKind::Cnot);
        assert_eq!(parse_entangler("CX").unwrap(), GateKind::Cnot);
        assert_eq!(parse_entangler("cz").unwrap(), GateKind::Cz);
        assert_eq!(parse_entangler("ch").unwrap(), GateKind::Ch);
        assert!(parse_entangler("swap").is_err());
    }

    #[test]
    fn layer_parsers() {
        assert_eq!(parse_layer_list("48,12,3").unwrap(), vec![48, 12, 3]);
        assert!(parse_layer_list("a,b").is_err());
        assert_eq!(parse_layer_range("6:16").unwrap(), (6, 16, 1));
        assert_eq!(parse_layer_range("6:16:2").unwrap(), (6, 16, 2));
        assert!(parse_layer_range("6").is_err());
    }

    #[test]
    fn bound_values() {
        assert_eq!(run_bound(1), 0);
        assert_eq!(run_bound(3), 14);
        assert_eq!(run_bound(5), 252);
    }

    #[test]
    fn sweep_two_qubits_hits_threshold() {
        let mut spec = SweepSpec::new(2, 3, 3);
        spec.trials = 3;
        spec.seed = 9;
        let points = run_sweep(&spec).unwrap();
        assert_eq!(points.len(), 1);
        let p = &points[0];
        assert!(!p.timed_out);
        assert!(p.eps_mean.unwrap() <= 1e-8, "eps = {:?}", p.eps_mean);
        // Timing off by default: deterministic CSV.
        assert!(p.seconds_mean.is_none());
        let csv = sweep_csv(&points);
        assert!(csv.starts_with("n,layers,eps_mean,eps_std,seconds_mean\n"));
        assert!(csv.lines().nth(1).unwrap().starts_with("2,3,"));
    }

    #[test]
    fn sweep_is_deterministic() {
        let mut spec = SweepSpec::new(2, 3, 3);
        spec.trials = 2;
        spec.seed = 4;
        let a = sweep_csv(&run_sweep(&spec).unwrap());
        let b = sweep_csv(&run_sweep(&spec).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn jobs_env_override() {
        // No env set in tests normally; flag passes through.
        std::env::remove_var("UNITARY_SYNTH_THREADS");
        assert_eq!(effective_jobs(3), 3);
        assert_eq!(effective_jobs(0), 1);
        std::env::set_var("UNITARY_SYNTH_THREADS", "2");
        assert_eq!(effective_jobs(7), 2);
        std::env::remove_var("UNITARY_SYNTH_THREADS");
    }
}
