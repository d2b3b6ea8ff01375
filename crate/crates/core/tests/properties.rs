//! Invariant and property tests: oracle equivalences, gradient checks,
//! algebraic identities, and structural bookkeeping over randomized inputs.

mod common;

use proptest::prelude::*;
use unitary_synth::cost::{
    circuit_matrix, fidelity_cost, partition_blocks, separability_cost, separability_cost_grad,
    stage_product,
};
use unitary_synth::gates::{embed_gate, u3_matrix, Gate, GateKind};
use unitary_synth::numerics::{
    haar_random_unitary, spectral_error, Complex64, ComplexMatrix, RandomSource,
};
use unitary_synth::qasm::{circuit_matrix_from_qasm, export_qasm, parse_qasm};
use unitary_synth::structure::{
    assemble_structure, build_full_period, validate_structure, GateStructure,
};
use unitary_synth::topology::Topology;

use common::{
    brute_force_separability, fd_gradient, gradient_rel_error, naive_matmul, oracle_spectral_norm,
    random_general_matrix,
};

#[test]
fn matmul_matches_naive_oracle() {
    let mut rng = RandomSource::new(501);
    for _ in 0..10 {
        let a = random_general_matrix(8, &mut rng);
        let b = random_general_matrix(8, &mut rng);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        assert!(fast.sub(&slow).unwrap().max_entry_norm() <= 1e-13);
    }
}

#[test]
fn matmul_is_associative() {
    let mut rng = RandomSource::new(502);
    for _ in 0..10 {
        let a = haar_random_unitary(3, &mut rng).unwrap();
        let b = haar_random_unitary(3, &mut rng).unwrap();
        let c = haar_random_unitary(3, &mut rng).unwrap();
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        assert!(left.sub(&right).unwrap().max_entry_norm() <= 1e-12);
    }
}

#[test]
fn spectral_error_matches_jacobi_oracle() {
    let mut rng = RandomSource::new(503);
    // Grid-search branch: Tr(Z) = 0, minimum at phase pi/2 is sqrt(2).
    let z = ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ],
    )
    .unwrap();
    let id = ComplexMatrix::identity(2);
    let found = spectral_error(&id, &z).unwrap();
    let phase = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2);
    let oracle = oracle_spectral_norm(&id.sub(&z.scale(phase)).unwrap());
    assert!((found - oracle).abs() <= 1e-9, "{found} vs {oracle}");

    // Trace branch against the oracle on random unitary pairs.
    for _ in 0..10 {
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let v = haar_random_unitary(2, &mut rng).unwrap();
        let t = unitary_synth::numerics::trace_dagger_product(&u, &v);
        let aligned = v.scale(Complex64::from_polar(1.0, -t.arg()));
        let oracle = oracle_spectral_norm(&u.sub(&aligned).unwrap());
        let found = spectral_error(&u, &v).unwrap();
        assert!((found - oracle).abs() <= 1e-10);
        // Symmetry.
        let flipped = spectral_error(&v, &u).unwrap();
        assert!((found - flipped).abs() <= 1e-12);
    }
}

#[test]
fn separability_cost_matches_brute_force() {
    // Route equivalence on random (not necessarily unitary) matrices.
    let mut rng = RandomSource::new(504);
    for dim in [4usize, 8] {
        for _ in 0..50 {
            let m = random_general_matrix(dim, &mut rng);
            let fast = separability_cost(&m).unwrap();
            let slow = brute_force_separability(&m);
            assert!((fast - slow).abs() <= 1e-12, "dim {dim}: {fast} vs {slow}");
        }
    }
}

#[test]
fn separability_cost_zero_on_tensor_products() {
    let mut rng = RandomSource::new(505);
    for _ in 0..50 {
        let a = haar_random_unitary(1, &mut rng).unwrap();
        let b = haar_random_unitary(2, &mut rng).unwrap();
        assert!(separability_cost(&a.kron(&b)).unwrap() <= 1e-12);
    }
}

#[test]
fn separability_cost_invariant_under_low_qubit_right_action() {
    // U-bar -> U-bar (I (x) W) preserves the cost exactly.
    let mut rng = RandomSource::new(506);
    for _ in 0..20 {
        let u = haar_random_unitary(3, &mut rng).unwrap();
        let w = haar_random_unitary(2, &mut rng).unwrap();
        let action = ComplexMatrix::identity(2).kron(&w);
        let moved = u.matmul(&action).unwrap();
        let before = separability_cost(&u).unwrap();
        let after = separability_cost(&moved).unwrap();
        assert!((before - after).abs() <= 1e-10 * before.max(1.0));
    }
}

#[test]
fn evaluator_value_equals_full_rebuild() {
    let mut rng = RandomSource::new(507);
    let s = assemble_structure(3, None, &[12, 3], GateKind::Cnot).unwrap();
    let u = haar_random_unitary(3, &mut rng).unwrap();
    let params: Vec<f64> = (0..s.total_params)
        .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
        .collect();
    let report = separability_cost_grad(&s, 0, &params, &u, 4..5).unwrap();
    let rebuilt = separability_cost(&stage_product(&s, 0, &params, &u).unwrap()).unwrap();
    assert!((report.value - rebuilt).abs() <= 1e-12 * rebuilt.max(1.0));
}

#[test]
fn stage_gradients_match_finite_differences_across_configurations() {
    // Random stages, blocks, and entangler kinds for both register sizes.
    let mut rng = RandomSource::new(508);
    let mut checked = 0;
    for kind in [GateKind::Cnot, GateKind::Cz, GateKind::Ch] {
        for n in [2usize, 3] {
            let counts: Vec<usize> = match n {
                2 => vec![3],
                _ => vec![6, 3],
            };
            let s = assemble_structure(n, None, &counts, kind).unwrap();
            let u = haar_random_unitary(n, &mut rng).unwrap();
            for _ in 0..6 {
                let params: Vec<f64> = (0..s.total_params)
                    .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
                    .collect();
                let stage = rng.index(s.stages.len());
                let layers = s.stages[stage].layers.len();
                let start = rng.index(layers);
                let width = 1 + rng.index((layers - start).min(3));
                let block = start..start + width;
                let u_init = if stage == 0 {
                    u.clone()
                } else {
                    haar_random_unitary(n - stage, &mut rng).unwrap()
                };
                let report =
                    separability_cost_grad(&s, stage, &params, &u_init, block.clone()).unwrap();
                let grad = report.gradient.unwrap();
                let range = s.stage_param_range(stage);
                let base = range.start + 4 * block.start;
                let x0: Vec<f64> = params[base..base + 4 * width].to_vec();
                let fd = fd_gradient(
                    |x| {
                        let mut p = params.clone();
                        p[base..base + 4 * width].copy_from_slice(x);
                        separability_cost(&stage_product(&s, stage, &p, &u_init).unwrap()).unwrap()
                    },
                    &x0,
                    1e-6,
                );
                assert!(
                    gradient_rel_error(&grad, &fd) <= 1e-5,
                    "kind {kind:?} n {n} stage {stage} block {block:?}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 36);
}

#[test]
fn fidelity_gradients_match_finite_differences() {
    let mut rng = RandomSource::new(509);
    let s = assemble_structure(2, None, &[3], GateKind::Cnot).unwrap();
    let u = haar_random_unitary(2, &mut rng).unwrap();
    for _ in 0..20 {
        let params: Vec<f64> = (0..s.total_params)
            .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
            .collect();
        let report = fidelity_cost(&s, &params, &u).unwrap();
        let grad = report.gradient.unwrap();
        let fd = fd_gradient(|x| fidelity_cost(&s, x, &u).unwrap().value, &params, 1e-6);
        assert!(gradient_rel_error(&grad, &fd) <= 1e-5);
    }
}

#[test]
fn parameter_bookkeeping_holds_for_assembled_structures() {
    let topo = Topology::preset("qx2", 4).unwrap();
    let cases: Vec<GateStructure> = vec![
        assemble_structure(2, None, &[3], GateKind::Cnot).unwrap(),
        assemble_structure(3, None, &[12, 3], GateKind::Cz).unwrap(),
        assemble_structure(4, None, &[48, 12, 3], GateKind::Cnot).unwrap(),
        assemble_structure(4, Some(&topo), &[54, 14, 3], GateKind::Cnot).unwrap(),
        assemble_structure(5, None, &[204, 48, 12, 3], GateKind::Cnot).unwrap(),
    ];
    for s in cases {
        let layers = s.total_layers();
        assert_eq!(s.total_params, 4 * layers + 3 * s.n_qubits);
        assert_eq!(s.two_qubit_gate_count(), layers);
        // Stage targets strictly descend.
        for w in s.stages.windows(2) {
            assert!(w[0].target > w[1].target);
        }
    }
}

#[test]
fn full_periods_obey_coverage_rules() {
    // Rule (iii): the target sits in every layer; rule (iv): every other
    // qubit appears exactly once per period.
    for n in 2..=5usize {
        for target in 0..n {
            if n < 2 {
                continue;
            }
            let p = build_full_period(n, target, GateKind::Cnot).unwrap();
            assert_eq!(p.layers.len(), n - 1);
            let mut seen = vec![0usize; n];
            for layer in &p.layers {
                assert!(layer.qubit_a == target || layer.qubit_b == target);
                let partner = if layer.qubit_a == target {
                    layer.qubit_b
                } else {
                    layer.qubit_a
                };
                seen[partner] += 1;
            }
            for (q, &count) in seen.iter().enumerate() {
                assert_eq!(count, if q == target { 0 } else { 1 });
            }
        }
    }
}

#[test]
fn topology_structures_validate_clean() {
    for (preset, n) in [("qx2", 3usize), ("qx2", 4), ("heavy_hex4", 3), ("heavy_hex4", 4)] {
        let topo = Topology::preset(preset, n).unwrap();
        let counts = unitary_synth::structure::default_layer_counts(
            n,
            unitary_synth::structure::TopologyClass::of(Some(&topo)).unwrap(),
        )
        .unwrap();
        let s = assemble_structure(n, Some(&topo), &counts, GateKind::Cnot).unwrap();
        assert!(validate_structure(&s, &topo).is_empty());
    }
}

#[test]
fn qasm_round_trip_on_random_structures() {
    let mut rng = RandomSource::new(510);
    for (n, counts, kind) in [
        (2usize, vec![3usize], GateKind::Cnot),
        (3, vec![4, 3], GateKind::Cz),
        (3, vec![6, 3], GateKind::Ch),
    ] {
        let s = assemble_structure(n, None, &counts, kind).unwrap();
        let params: Vec<f64> = (0..s.total_params)
            .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
            .collect();
        let direct = circuit_matrix(&s, &params, None).unwrap();
        for strict in [false, true] {
            let text = export_qasm(&s, &params, None, strict).unwrap();
            let rebuilt = circuit_matrix_from_qasm(&parse_qasm(&text).unwrap(), true).unwrap();
            // Strict ch expansion differs by a global phase only.
            assert!(spectral_error(&direct, &rebuilt).unwrap() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn u3_matrices_stay_unitary(theta in 0.0..std::f64::consts::TAU,
                                phi in 0.0..std::f64::consts::TAU,
                                lambda in 0.0..std::f64::consts::TAU) {
        let m = u3_matrix(theta, phi, lambda);
        prop_assert!(m.unitarity_defect() <= 1e-13);
    }

    #[test]
    fn embedded_layers_stay_unitary(seed in 0u64..1u64 << 48) {
        let mut rng = RandomSource::new(seed);
        let s = assemble_structure(3, None, &[2, 3], GateKind::Cnot).unwrap();
        let params: Vec<f64> = (0..s.total_params)
            .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
            .collect();
        let m = circuit_matrix(&s, &params, None).unwrap();
        prop_assert!(m.unitarity_defect() <= 1e-12);
    }

    #[test]
    fn partition_reassembles_exactly(seed in 0u64..1u64 << 48) {
        let mut rng = RandomSource::new(seed);
        let m = random_general_matrix(8, &mut rng);
        let parts = partition_blocks(&m).unwrap();
        prop_assert!(parts.assemble().sub(&m).unwrap().max_entry_norm() == 0.0);
    }

    #[test]
    fn embeddings_on_disjoint_qubits_commute(seed in 0u64..1u64 << 48) {
        let mut rng = RandomSource::new(seed);
        let params = [
            rng.uniform(0.0, std::f64::consts::TAU),
            rng.uniform(0.0, std::f64::consts::TAU),
        ];
        let a = embed_gate(&Gate::u3_layer(0, 0), &params, 3).unwrap();
        let b = embed_gate(&Gate::u3_layer(2, 0), &params, 3).unwrap();
        let ab = a.matmul(&b).unwrap();
        let ba = b.matmul(&a).unwrap();
        prop_assert!(ab.sub(&ba).unwrap().max_entry_norm() <= 1e-14);
    }

    #[test]
    fn umat_text_round_trips(seed in 0u64..1u64 << 48) {
        let mut rng = RandomSource::new(seed);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let text = unitary_synth::numerics::umat_to_string(&u);
        let back = unitary_synth::numerics::parse_umat(&text).unwrap();
        prop_assert!(back == u);
    }
}
