use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unitary_synth::cli::{
    parse_entangler, parse_layer_list, parse_layer_range, run_bound, run_decompose, run_random,
    run_sweep, run_verify, sweep_csv, DecomposeRequest, SweepSpec,
};
use unitary_synth::optimizer::OptimizerConfig;

#[derive(Parser)]
#[command(
    name = "unitary-synth",
    version,
    about = "Synthesizes n-qubit unitaries into u3 + two-qubit controlled gate circuits by sequential block optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OptimizerArgs {
    /// Stage stop threshold on the disentanglement cost
    #[arg(long, default_value_t = 1e-8)]
    epsilon0: f64,
    /// Sweep budget per stage
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    /// BFGS iteration cap per block
    #[arg(long, default_value_t = 100)]
    bfgs_max_iter: usize,
    /// Gradient norm stopping tolerance
    #[arg(long, default_value_t = 1e-10)]
    grad_tol: f64,
    /// Layers optimized jointly per block
    #[arg(long, default_value_t = 1)]
    block_layers: usize,
    /// Sweeps without improvement before a restart
    #[arg(long, default_value_t = 200)]
    restart_patience: usize,
    /// Re-randomization budget per stage
    #[arg(long, default_value_t = 5)]
    max_restarts: usize,
    /// Start from zero angles instead of random ones
    #[arg(long)]
    zero_init: bool,
    /// Shuffle the block visiting order each sweep
    #[arg(long)]
    shuffle_blocks: bool,
    /// Disable whole-stage polish optimizations
    #[arg(long)]
    no_polish: bool,
    /// Cost level that triggers a whole-stage polish
    #[arg(long, default_value_t = 1e-1)]
    polish_threshold: f64,
    /// BFGS iteration cap for polish runs
    #[arg(long, default_value_t = 1000)]
    polish_max_iter: usize,
}

impl OptimizerArgs {
    fn to_config(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            epsilon0: self.epsilon0,
            max_sweeps: self.max_sweeps,
            bfgs_max_iter: self.bfgs_max_iter,
            grad_tol: self.grad_tol,
            block_size_layers: self.block_layers,
            restart_patience: self.restart_patience,
            max_restarts: self.max_restarts,
            seed,
            zero_init: self.zero_init,
            shuffle_blocks: self.shuffle_blocks,
            polish: !self.no_polish,
            polish_threshold: self.polish_threshold,
            polish_max_iter: self.polish_max_iter,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a .umat unitary into a circuit (.qasm + JSON report)
    Decompose {
        /// Input unitary in .umat format
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Topology file path or preset name (qx2, heavy_hex4)
        #[arg(long)]
        topology: Option<String>,
        /// Per-stage layer counts, e.g. 48,12,3 (defaults per register size)
        #[arg(long)]
        layers: Option<String>,
        /// Two-qubit gate kind: cnot, cz, or ch
        #[arg(long, default_value = "cnot")]
        entangler: String,
        /// Skip the final all-parameter fidelity fine-tuning
        #[arg(long)]
        no_fine_tune: bool,
        #[arg(long, default_value_t = 2500)]
        fine_tune_max_iter: usize,
        /// Decompose the inverse of the input instead
        #[arg(long)]
        invert_input: bool,
        /// Expand ch gates into the standard-header decomposition
        #[arg(long)]
        strict_qelib1: bool,
        /// Output circuit path (default: input with .qasm extension)
        #[arg(long)]
        out_qasm: Option<PathBuf>,
        /// Output report path (default: input with .report.json extension)
        #[arg(long)]
        out_report: Option<PathBuf>,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Sweep layer counts and report reached disentanglement minima as CSV
    Sweep {
        /// Register size
        #[arg(long)]
        n: usize,
        /// Layer range min:max or min:max:step
        #[arg(long)]
        layers: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        topology: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Concurrent trials (UNITARY_SYNTH_THREADS overrides)
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Wall-time budget per sweep point, seconds
        #[arg(long, default_value_t = 600.0)]
        timeout_s: f64,
        /// Record per-point mean runtimes (makes CSV timing-dependent)
        #[arg(long)]
        timing: bool,
        #[arg(long, default_value = "cnot")]
        entangler: String,
        /// Output CSV path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Generate a Haar-random unitary .umat file
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a circuit from QASM and report its error against a target
    Verify {
        qasm: PathBuf,
        umat: PathBuf,
        /// Error threshold for exit code 0
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
    },
    /// Print the theoretical CNOT lower bound for n qubits
    Bound {
        n: u32,
    },
}

fn dispatch(cli: Cli) -> unitary_synth::Result<i32> {
    match cli.command {
        Command::Decompose {
            input,
            seed,
            topology,
            layers,
            entangler,
            no_fine_tune,
            fine_tune_max_iter,
            invert_input,
            strict_qelib1,
            out_qasm,
            out_report,
            optimizer,
        } => {
            let mut req = DecomposeRequest::new(input);
            req.seed = seed;
            req.topology = topology;
            req.layer_counts = layers.as_deref().map(parse_layer_list).transpose()?;
            req.entangler = parse_entangler(&entangler)?;
            req.optimizer = optimizer.to_config(seed);
            req.fine_tune = !no_fine_tune;
            req.fine_tune_max_iter = fine_tune_max_iter;
            req.invert_input = invert_input;
            req.strict_qelib1 = strict_qelib1;
            req.out_qasm = out_qasm;
            req.out_report = out_report;
            let outcome = run_decompose(&req)?;
            println!(
                "decomposed {} qubits with {} two-qubit gates in {:.3} s",
                outcome.result.structure.n_qubits,
                outcome.result.cnot_count,
                outcome.result.wall_time.as_secs_f64()
            );
            println!(
                "spectral_error = {:.6e}, fidelity_cost = {:.6e}, converged = {}",
                outcome.result.spectral_error,
                outcome.result.fidelity_cost,
                outcome.result.converged
            );
            println!(
                "wrote {} and {}",
                outcome.qasm_path.display(),
                outcome.report_path.display()
            );
            Ok(outcome.exit_code)
        }
        Command::Sweep {
            n,
            layers,
            trials,
            topology,
            seed,
            jobs,
            timeout_s,
            timing,
            entangler,
            out,
            optimizer,
        } => {
            let (layer_min, layer_max, layer_step) = parse_layer_range(&layers)?;
            let mut spec = SweepSpec::new(n, layer_min, layer_max);
            spec.layer_step = layer_step;
            spec.trials = trials;
            spec.topology = topology;
            spec.seed = seed;
            spec.jobs = jobs;
            spec.timeout_s = timeout_s;
            spec.timing = timing;
            spec.entangler = parse_entangler(&entangler)?;
            spec.optimizer = optimizer.to_config(seed);
            let points = run_sweep(&spec)?;
            let csv = sweep_csv(&points);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Random { n, seed, out } => {
            run_random(n, seed, &out)?;
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Verify {
            qasm,
            umat,
            threshold,
        } => {
            let outcome = run_verify(&qasm, &umat, threshold)?;
            println!(
                "gates = {}, qubits = {}, spectral_error = {:.6e} (threshold {:.1e})",
                outcome.gate_count, outcome.n_qubits, outcome.spectral_error, outcome.threshold
            );
            println!("{}", if outcome.passed { "PASS" } else { "FAIL" });
            Ok(if outcome.passed { 0 } else { 2 })
        }
        Command::Bound { n } => {
            println!("{}", run_bound(n));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
