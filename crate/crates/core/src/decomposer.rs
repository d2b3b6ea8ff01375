//! Full synthesis pipeline: disentangle the top qubit stage by stage, carry
//! the extracted subblock forward, close with per-qubit rotations, and
//! fine-tune every parameter against the trace fidelity.
//!
//! The produced circuit C satisfies C * U ~ e^{i phi} I, i.e. it realizes
//! U^dag up to a global phase; errors are reported against that contract.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::cost::{
    circuit_matrix, fidelity_cost, partition_blocks, separability_cost, stage_product,
};
use crate::error::{Error, Result};
use crate::gates::{u3_params_from_2x2, GateKind};
use crate::numerics::{closest_unitary, spectral_error, ComplexMatrix, RandomSource};
use crate::optimizer::{bfgs_minimize, sequential_sweep, BfgsOptions, OptimizerConfig, SweepState};
use crate::structure::{
    assemble_structure, default_layer_counts, validate_structure, GateStructure, TopologyClass,
    Violation,
};
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct DecompositionConfig {
    pub optimizer: OptimizerConfig,
    /// Layers per stage; defaults to `default_layer_counts` when empty.
    pub layer_counts: Option<Vec<usize>>,
    pub topology: Option<Topology>,
    pub entangler: GateKind,
    pub fine_tune: bool,
    pub fine_tune_max_iter: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig {
            optimizer: OptimizerConfig::default(),
            layer_counts: None,
            topology: None,
            entangler: GateKind::Cnot,
            fine_tune: true,
            fine_tune_max_iter: 2500,
        }
    }
}

/// Diagnostics of one disentanglement stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub target: usize,
    pub layers_used: usize,
    pub final_cost: f64,
    pub sub_unitary: ComplexMatrix,
    pub residual_1q: ComplexMatrix,
    pub sweeps: usize,
    pub restarts: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub structure: GateStructure,
    pub params: Vec<f64>,
    pub stages: Vec<StageResult>,
    pub spectral_error: f64,
    pub fidelity_cost: f64,
    pub cnot_count: usize,
    pub wall_time: Duration,
    pub converged: bool,
    pub fine_tuned: bool,
    pub seed: u64,
}

/// Runs one stage's sweep and returns the optimized stage parameters, the
/// stage product U-bar, and sweep diagnostics.
pub fn disentangle_qubit(
    u: &ComplexMatrix,
    structure: &GateStructure,
    stage_index: usize,
    config: &OptimizerConfig,
    rng: &mut RandomSource,
) -> Result<(Vec<f64>, ComplexMatrix, SweepState)> {
    let state = sequential_sweep(structure, stage_index, u, config, rng, None)?;
    let range = structure.stage_param_range(stage_index);
    let mut full = vec![0.0; range.end];
    full[range.clone()].copy_from_slice(&state.params);
    let ubar = stage_product(structure, stage_index, &full, u)?;
    Ok((state.params.clone(), ubar, state))
}

/// Extracts the carried-forward subblock and the top qubit's residual 2x2
/// factor from a disentangled product: picks the diagonal block pair with the
/// largest proportionality coefficient, normalizes it, and reads the residual
/// from the normalized traces of all four blocks, so U-bar ~ residual (x) sub.
pub fn extract_subunitary(ubar: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let parts = partition_blocks(ubar)?;
    let h = parts.half;
    let mut best = (0usize, 0usize);
    let mut best_kappa = -1.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let kappa: f64 = parts.block(i, j).row(0).iter().map(|e| e.norm_sqr()).sum();
            if kappa > best_kappa {
                best_kappa = kappa;
                best = (i, j);
            }
        }
    }
    if best_kappa < 1e-12 {
        return Err(Error::Linalg(
            "all diagonal proportionality coefficients vanish; blocks are degenerate".into(),
        ));
    }
    let scale = Complex64::new(1.0 / best_kappa.sqrt(), 0.0);
    let sub = parts.block(best.0, best.1).scale(scale);
    let mut residual = ComplexMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            let b = parts.block(i, j);
            for r in 0..h {
                for c in 0..h {
                    acc += b[(r, c)] * sub[(r, c)].conj();
                }
            }
            residual[(i, j)] = acc / h as f64;
        }
    }
    Ok((sub, residual))
}

/// Full decomposition of `u` into the layered circuit.
pub fn decompose(
    u: &ComplexMatrix,
    config: &DecompositionConfig,
    rng: &mut RandomSource,
) -> Result<DecompositionResult> {
    let start = Instant::now();
    if !u.is_square() || !u.rows().is_power_of_two() || u.rows() < 4 {
        return Err(Error::DimensionMismatch(format!(
            "decomposition needs a 2^n x 2^n unitary with n >= 2, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    let n_qubits = u.rows().trailing_zeros() as usize;
    if n_qubits > 5 {
        return Err(Error::UnsupportedQubitCount(
            n_qubits,
            "decomposition supports 2..=5 qubits".into(),
        ));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-8 {
        return Err(Error::NotUnitary { defect, tol: 1e-8 });
    }
    let layer_counts = match &config.layer_counts {
        Some(c) => c.clone(),
        None => {
            let class = TopologyClass::of(config.topology.as_ref()).ok_or_else(|| {
                Error::Topology(
                    "no default layer counts for a custom topology; set layer_counts".into(),
                )
            })?;
            default_layer_counts(n_qubits, class)?
        }
    };
    let structure = assemble_structure(
        n_qubits,
        config.topology.as_ref(),
        &layer_counts,
        config.entangler,
    )?;
    let mut params = vec![0.0; structure.total_params];
    let mut stages = Vec::with_capacity(structure.stages.len());
    let mut current = u.clone();

    for stage_index in 0..structure.stages.len() {
        let (stage_params, ubar, state) =
            disentangle_qubit(&current, &structure, stage_index, &config.optimizer, rng)?;
        let range = structure.stage_param_range(stage_index);
        params[range].copy_from_slice(&stage_params);
        let (sub, residual) = extract_subunitary(&ubar)?;
        stages.push(StageResult {
            target: structure.stages[stage_index].target,
            layers_used: structure.stages[stage_index].layers.len(),
            final_cost: state.best_value,
            sub_unitary: sub.clone(),
            residual_1q: residual,
            sweeps: state.sweep_count,
            restarts: state.restarts_used,
            converged: state.converged,
        });
        current = sub;
    }

    // Closing rotations: invert each qubit's residual factor. Qubit 0 closes
    // the final 2x2 subblock; every other qubit closes its stage residual.
    for stage in &stages {
        let inv = closest_unitary(&stage.residual_1q)?.dagger();
        let (theta, phi, lambda, _) = u3_params_from_2x2(&inv)?;
        let off = structure.closing_param_offset(stage.target);
        params[off] = theta;
        params[off + 1] = phi;
        params[off + 2] = lambda;
    }
    {
        let inv = closest_unitary(&current)?.dagger();
        let (theta, phi, lambda, _) = u3_params_from_2x2(&inv)?;
        let off = structure.closing_param_offset(0);
        params[off] = theta;
        params[off + 1] = phi;
        params[off + 2] = lambda;
    }

    let mut fine_tuned = false;
    if config.fine_tune {
        let opts = BfgsOptions {
            max_iter: config.fine_tune_max_iter,
            grad_tol: config.optimizer.grad_tol,
            c1: config.optimizer.wolfe_c1,
            c2: config.optimizer.wolfe_c2,
            target_value: None,
        };
        let outcome = bfgs_minimize(
            |x| {
                let report = fidelity_cost(&structure, x, u).expect("validated shapes");
                (report.value, report.gradient.expect("gradient requested"))
            },
            &params,
            &opts,
        )?;
        params = outcome.x;
        fine_tuned = true;
    }

    let circuit = circuit_matrix(&structure, &params, None)?;
    let spec_err = spectral_error(&u.dagger(), &circuit)?;
    let fid = fidelity_cost(&structure, &params, u)?.value;
    let converged = stages.iter().all(|s| s.converged);
    Ok(DecompositionResult {
        cnot_count: structure.two_qubit_gate_count(),
        structure,
        params,
        stages,
        spectral_error: spec_err,
        fidelity_cost: fid,
        wall_time: start.elapsed(),
        converged,
        fine_tuned,
        seed: rng.seed(),
    })
}

/// Recomputed diagnostics for a finished decomposition.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub spectral_error: f64,
    pub fidelity_cost: f64,
    pub stage_costs: Vec<f64>,
    pub violations: Vec<Violation>,
}

/// Rebuilds everything from scratch: circuit product, spectral error,
/// fidelity, per-stage disentanglement costs, and topology violations.
pub fn verify(
    result: &DecompositionResult,
    u: &ComplexMatrix,
    topology: Option<&Topology>,
) -> Result<VerifyReport> {
    let circuit = circuit_matrix(&result.structure, &result.params, None)?;
    let spec_err = spectral_error(&u.dagger(), &circuit)?;
    let fid = fidelity_cost(&result.structure, &result.params, u)?.value;
    let mut stage_costs = Vec::with_capacity(result.stages.len());
    let mut current = u.clone();
    for (i, stage) in result.stages.iter().enumerate() {
        let ubar = stage_product(&result.structure, i, &result.params, &current)?;
        stage_costs.push(separability_cost(&ubar)?);
        current = stage.sub_unitary.clone();
    }
    let violations = match topology {
        Some(t) => validate_structure(&result.structure, t),
        None => Vec::new(),
    };
    Ok(VerifyReport {
        spectral_error: spec_err,
        fidelity_cost: fid,
        stage_costs,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::haar_random_unitary;

    #[test]
    fn extract_identity() {
        let (sub, residual) = extract_subunitary(&ComplexMatrix::identity(4)).unwrap();
        assert!(sub.sub(&ComplexMatrix::identity(2)).unwrap().max_entry_norm() <= 1e-14);
        assert!(residual.sub(&ComplexMatrix::identity(2)).unwrap().max_entry_norm() <= 1e-14);
    }

    #[test]
    fn extract_recovers_tensor_factors() {
        let mut rng = RandomSource::new(13);
        for _ in 0..20 {
            let a = haar_random_unitary(1, &mut rng).unwrap();
            let v = haar_random_unitary(2, &mut rng).unwrap();
            let ubar = a.kron(&v);
            let (sub, residual) = extract_subunitary(&ubar).unwrap();
            // Factors are recovered up to a shared phase.
            let rebuilt = residual.kron(&sub);
            assert!(
                rebuilt.sub(&ubar).unwrap().max_entry_norm() <= 1e-10,
                "tensor reconstruction failed"
            );
            assert!(crate::numerics::spectral_error(&sub, &v).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn extract_degenerate_errors() {
        let z = ComplexMatrix::zeros(4, 4);
        assert!(extract_subunitary(&z).is_err());
    }

    #[test]
    fn extract_near_disentangled_defect_scales_as_sqrt() {
        // f_sub ~ 1e-8 perturbations leave a sub-unitary defect well under 1e-3.
        let mut rng = RandomSource::new(19);
        let a = haar_random_unitary(1, &mut rng).unwrap();
        let v = haar_random_unitary(2, &mut rng).unwrap();
        let mut ubar = a.kron(&v);
        for r in 0..8 {
            for c in 0..8 {
                let eps = 2.5e-5 * rng.uniform(-1.0, 1.0);
                ubar[(r, c)] += Complex64::new(eps, -eps);
            }
        }
        let f = separability_cost(&ubar).unwrap();
        assert!(f < 1e-6, "perturbation too large: {f}");
        let (sub, _) = extract_subunitary(&ubar).unwrap();
        assert!(sub.unitarity_defect() <= 1e-3);
    }

    #[test]
    fn decompose_rejects_bad_inputs() {
        let mut rng = RandomSource::new(1);
        let not_unitary = ComplexMatrix::zeros(4, 4);
        assert!(decompose(&not_unitary, &DecompositionConfig::default(), &mut rng).is_err());
        let odd = ComplexMatrix::identity(6);
        assert!(decompose(&odd, &DecompositionConfig::default(), &mut rng).is_err());
        let single = ComplexMatrix::identity(2);
        assert!(decompose(&single, &DecompositionConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn decompose_two_qubit_haar() {
        let mut rng = RandomSource::new(1001);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let result = decompose(&u, &DecompositionConfig::default(), &mut rng).unwrap();
        assert_eq!(result.cnot_count, 3);
        assert!(result.converged);
        assert!(result.spectral_error <= 1e-6, "err = {}", result.spectral_error);
        // End-to-end identity: C * U ~ e^{i phi} I within the reported error.
        let circuit = circuit_matrix(&result.structure, &result.params, None).unwrap();
        let product = circuit.matmul(&u).unwrap();
        let id = ComplexMatrix::identity(4);
        assert!(spectral_error(&id, &product).unwrap() <= result.spectral_error + 1e-9);
    }

    #[test]
    fn decompose_identity_register() {
        let mut rng = RandomSource::new(7);
        let config = DecompositionConfig {
            optimizer: OptimizerConfig {
                zero_init: true,
                ..OptimizerConfig::default()
            },
            ..DecompositionConfig::default()
        };
        let u = ComplexMatrix::identity(8);
        let result = decompose(&u, &config, &mut rng).unwrap();
        assert!(result.converged);
        assert!(result.spectral_error <= 1e-6, "err = {}", result.spectral_error);
    }

    #[test]
    fn verify_is_consistent_and_detects_tampering() {
        let mut rng = RandomSource::new(23);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let result = decompose(&u, &DecompositionConfig::default(), &mut rng).unwrap();
        let report = verify(&result, &u, None).unwrap();
        assert!((report.spectral_error - result.spectral_error).abs() <= 1e-12);
        assert!(report.violations.is_empty());

        let mut tampered = result.clone();
        tampered.params[0] += std::f64::consts::PI;
        let bad = verify(&tampered, &u, None).unwrap();
        assert!(bad.spectral_error > 1e-2);
    }

    #[test]
    fn fine_tune_never_worsens_fidelity() {
        let mut rng = RandomSource::new(31);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let no_ft = DecompositionConfig {
            fine_tune: false,
            ..DecompositionConfig::default()
        };
        let mut rng2 = rng.clone();
        let coarse = decompose(&u, &no_ft, &mut rng).unwrap();
        let fine = decompose(&u, &DecompositionConfig::default(), &mut rng2).unwrap();
        assert!(fine.fidelity_cost <= coarse.fidelity_cost + 1e-12);
    }
}
