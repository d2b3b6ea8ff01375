//! Cost functions driving the synthesis: the block-proportionality
//! disentanglement cost, the trace-fidelity fine-tuning cost, and their
//! analytic gradients.
//!
//! For a register of m qubits the combined circuit-and-target product U-bar
//! splits into four 2^{m-1} blocks indexed by the top qubit's in/out states.
//! The top qubit factors out exactly when every block pair satisfies
//! `B_i B_j^dag = kappa_ij I`; the disentanglement cost sums the squared
//! deviation from that proportionality over all 16 ordered block pairs.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::Gate;
use crate::numerics::ComplexMatrix;
use crate::structure::{GateStructure, Layer, PARAMS_PER_LAYER};

/// The four quadrants of an even-dimensional square matrix; block (i, j) is
/// rows [i*h, (i+1)*h) x cols [j*h, (j+1)*h) with h = dim/2.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub blocks: [ComplexMatrix; 4],
    pub half: usize,
}

impl BlockPartition {
    pub fn block(&self, i: usize, j: usize) -> &ComplexMatrix {
        &self.blocks[2 * i + j]
    }

    /// Reassembles the original matrix exactly.
    pub fn assemble(&self) -> ComplexMatrix {
        let h = self.half;
        let mut out = ComplexMatrix::zeros(2 * h, 2 * h);
        for i in 0..2 {
            for j in 0..2 {
                let b = self.block(i, j);
                for r in 0..h {
                    for c in 0..h {
                        out[(i * h + r, j * h + c)] = b[(r, c)];
                    }
                }
            }
        }
        out
    }
}

pub fn partition_blocks(u: &ComplexMatrix) -> Result<BlockPartition> {
    if !u.is_square() || u.rows() % 2 != 0 || u.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "block partition needs an even square matrix, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    let h = u.rows() / 2;
    let mut blocks = Vec::with_capacity(4);
    for i in 0..2 {
        for j in 0..2 {
            let mut b = ComplexMatrix::zeros(h, h);
            for r in 0..h {
                for c in 0..h {
                    b[(r, c)] = u[(i * h + r, j * h + c)];
                }
            }
            blocks.push(b);
        }
    }
    let blocks: [ComplexMatrix; 4] = blocks.try_into().unwrap();
    Ok(BlockPartition { blocks, half: h })
}

/// The scalar relating two blocks when they are proportional: the upper-left
/// entry of `a * b^dag`.
pub fn proportionality_coeff(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Complex64> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(
            "proportionality coefficient needs equal square shapes".into(),
        ));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.row(0).iter().zip(b.row(0).iter()) {
        acc += x * y.conj();
    }
    Ok(acc)
}

/// Disentanglement cost of the top qubit: sum over all 16 ordered block
/// pairs of `|| B_i B_j^dag - kappa_ij I ||_F^2`. Zero exactly when the top
/// qubit is separable.
pub fn separability_cost(u: &ComplexMatrix) -> Result<f64> {
    let parts = partition_blocks(u)?;
    let h = parts.half;
    let mut total = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let m = parts.blocks[i].matmul_dagger(&parts.blocks[j])?;
            let kappa = m[(0, 0)];
            let mut acc = 0.0;
            for r in 0..h {
                for c in 0..h {
                    let mut v = m[(r, c)];
                    if r == c {
                        v -= kappa;
                    }
                    acc += v.norm_sqr();
                }
            }
            total += acc;
        }
    }
    Ok(total)
}

/// Cost value with an optional gradient over the active parameters.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

/// Product of the structure's layers (stages in order), optionally limited to
/// the first `stage_limit` stages. With no limit the closing rotations are
/// included, giving the complete circuit matrix.
pub fn circuit_matrix(
    structure: &GateStructure,
    params: &[f64],
    stage_limit: Option<usize>,
) -> Result<ComplexMatrix> {
    let stages = stage_limit.unwrap_or(structure.stages.len());
    if stages > structure.stages.len() {
        return Err(Error::Structure(format!(
            "stage limit {stages} exceeds {} stages",
            structure.stages.len()
        )));
    }
    let needed = if stage_limit.is_none() {
        structure.total_params
    } else {
        structure
            .stages
            .iter()
            .take(stages)
            .map(|s| PARAMS_PER_LAYER * s.layers.len())
            .sum()
    };
    if params.len() < needed || (stage_limit.is_none() && params.len() != structure.total_params) {
        return Err(Error::Structure(format!(
            "parameter vector has {} entries, structure needs {needed}",
            params.len()
        )));
    }
    let mut m = ComplexMatrix::identity(1 << structure.n_qubits);
    for stage in structure.stages.iter().take(stages) {
        for layer in &stage.layers {
            apply_layer_left(&mut m, layer, params);
        }
    }
    if stage_limit.is_none() {
        for gate in &structure.closing {
            gate.apply_left(&mut m, params);
        }
    }
    Ok(m)
}

fn apply_layer_left(m: &mut ComplexMatrix, layer: &Layer, params: &[f64]) {
    layer.gate_a.apply_left(m, params);
    layer.gate_b.apply_left(m, params);
    layer.entangler.apply_left(m, params);
}

/// Applies one layer whose gates index a stage-local parameter slice.
fn apply_layer_shifted(m: &mut ComplexMatrix, layer: &Layer, stage_params: &[f64], base: usize) {
    let ga = Gate {
        param_offset: layer.gate_a.param_offset - base,
        ..layer.gate_a
    };
    let gb = Gate {
        param_offset: layer.gate_b.param_offset - base,
        ..layer.gate_b
    };
    ga.apply_left(m, stage_params);
    gb.apply_left(m, stage_params);
    layer.entangler.apply_left(m, stage_params);
}

/// Fast repeated evaluation of the disentanglement cost and its gradient for
/// one block of consecutive layers, with everything outside the block frozen
/// into cached prefix and suffix products.
pub struct StageEvaluator<'a> {
    layers: &'a [Layer],
    param_base: usize,
    dim: usize,
    block: std::ops::Range<usize>,
    /// Frozen layers before the block applied to the stage input.
    prefix: ComplexMatrix,
    /// Frozen layers after the block.
    suffix: ComplexMatrix,
    suffix_dag: ComplexMatrix,
    prefix_dag: ComplexMatrix,
    suffix_is_identity: bool,
}

impl<'a> StageEvaluator<'a> {
    /// `stage_params` are the stage's own parameters; layer gates inside the
    /// stage index them through `param_base` (the stage's global offset).
    pub fn new(
        structure: &'a GateStructure,
        stage_index: usize,
        u_initial: &ComplexMatrix,
        stage_params: &[f64],
        block: std::ops::Range<usize>,
    ) -> Result<Self> {
        let stage = &structure.stages[stage_index];
        let dim = 1usize << (stage.target + 1);
        if u_initial.rows() != dim || u_initial.cols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "stage {stage_index} works on {dim}x{dim} inputs, got {}x{}",
                u_initial.rows(),
                u_initial.cols()
            )));
        }
        let param_base = structure.stage_param_range(stage_index).start;
        if stage_params.len() != PARAMS_PER_LAYER * stage.layers.len() {
            return Err(Error::Structure(format!(
                "stage {stage_index} expects {} parameters, got {}",
                PARAMS_PER_LAYER * stage.layers.len(),
                stage_params.len()
            )));
        }
        if block.end > stage.layers.len() || block.start >= block.end {
            return Err(Error::Structure(format!(
                "block {block:?} out of range for {} layers",
                stage.layers.len()
            )));
        }
        let mut ev = StageEvaluator {
            layers: &stage.layers,
            param_base,
            dim,
            block: block.clone(),
            prefix: ComplexMatrix::identity(dim),
            suffix: ComplexMatrix::identity(dim),
            suffix_dag: ComplexMatrix::identity(dim),
            prefix_dag: ComplexMatrix::identity(dim),
            suffix_is_identity: true,
        };
        ev.rebuild(u_initial, stage_params, block);
        Ok(ev)
    }

    /// Re-freezes the prefix/suffix caches around a new active block.
    pub fn rebuild(
        &mut self,
        u_initial: &ComplexMatrix,
        stage_params: &[f64],
        block: std::ops::Range<usize>,
    ) {
        let layers = self.layers;
        let base = self.param_base;
        self.block = block.clone();
        let mut prefix = u_initial.clone();
        for layer in &layers[..block.start] {
            apply_layer_shifted(&mut prefix, layer, stage_params, base);
        }
        self.prefix = prefix;
        self.suffix_is_identity = block.end == layers.len();
        let mut suffix = ComplexMatrix::identity(self.dim);
        if !self.suffix_is_identity {
            for layer in &layers[block.end..] {
                apply_layer_shifted(&mut suffix, layer, stage_params, base);
            }
        }
        self.suffix = suffix;
        self.suffix_dag = self.suffix.dagger();
        self.prefix_dag = self.prefix.dagger();
    }

    pub fn block(&self) -> std::ops::Range<usize> {
        self.block.clone()
    }

    pub fn block_param_count(&self) -> usize {
        PARAMS_PER_LAYER * (self.block.end - self.block.start)
    }

    /// Full product for the given active-block parameters.
    fn assemble_product(&self, block_params: &[f64]) -> ComplexMatrix {
        let mut w = self.prefix.clone();
        for (k, layer) in self.layers[self.block.clone()].iter().enumerate() {
            let local = |g: &Gate| Gate {
                param_offset: PARAMS_PER_LAYER * k + (g.param_offset % PARAMS_PER_LAYER),
                ..*g
            };
            local(&layer.gate_a).apply_left(&mut w, block_params);
            local(&layer.gate_b).apply_left(&mut w, block_params);
            layer.entangler.apply_left(&mut w, block_params);
        }
        if self.suffix_is_identity {
            w
        } else {
            self.suffix.matmul(&w).expect("cached shapes agree")
        }
    }

    pub fn value(&self, block_params: &[f64]) -> f64 {
        separability_cost(&self.assemble_product(block_params)).expect("even dimension")
    }

    /// Cost and gradient with respect to the active block parameters, for any
    /// block size from one layer to the whole stage.
    ///
    /// The ordered-pair chain rule is contracted once into an adjoint matrix
    /// W-hat with df = 2 Re <W-hat, dU-bar>; a backward recursion
    /// K_{j-1} = L_j^dag K_j L_{j-1} then yields each layer's parameter
    /// derivatives from strided 2x2 contractions, so the cost per evaluation
    /// is O(layers * dim^2) plus a few dense products.
    pub fn value_and_grad(&self, block_params: &[f64]) -> (f64, Vec<f64>) {
        let nblock = self.block.end - self.block.start;
        // Forward pass: state before each block layer.
        let mut before: Vec<ComplexMatrix> = Vec::with_capacity(nblock);
        let mut w = self.prefix.clone();
        for (k, layer) in self.layers[self.block.clone()].iter().enumerate() {
            before.push(w.clone());
            self.apply_block_layer(&mut w, layer, k, block_params);
        }
        let ubar = if self.suffix_is_identity {
            w
        } else {
            self.suffix.matmul(&w).expect("cached shapes agree")
        };

        let (value, w_hat) = separability_value_and_adjoint(&ubar);

        // K at the last block layer: suffix^dag * W-hat * before[last]^dag.
        let mut k_ctx = w_hat
            .matmul_dagger(before.last().expect("non-empty block"))
            .expect("shapes agree");
        if !self.suffix_is_identity {
            k_ctx = self.suffix_dag.matmul(&k_ctx).expect("shapes agree");
        }

        let mut grad = vec![0.0; PARAMS_PER_LAYER * nblock];
        for k in (0..nblock).rev() {
            let layer = &self.layers[self.block.start + k];
            let base = PARAMS_PER_LAYER * k;
            // t = E^dag K (fixed entanglers here are Hermitian).
            let mut t = k_ctx.clone();
            layer.entangler.apply_left(&mut t, block_params);
            // a-gate derivatives from Ub^dag t on qubit a.
            let mut ta = t.clone();
            self.local_gate(&layer.gate_b, k)
                .apply_left_dagger(&mut ta, block_params);
            let tau_a = tau_contract(&ta, layer.gate_a.target);
            let ga = self.local_gate(&layer.gate_a, k);
            let (ath, aph, ala) = ga.angles(block_params);
            for which in ga.free_angles() {
                let dg = crate::gates::u3_derivative_kernel(ath, aph, ala, *which);
                let slot = ga.param_index(*which).expect("free angle");
                grad[base + slot] = 2.0 * contract_kernel(&tau_a, &dg);
            }
            // b-gate derivatives from t Ua^dag on qubit b.
            let mut tb = t;
            self.local_gate(&layer.gate_a, k)
                .apply_right_dagger(&mut tb, block_params);
            let tau_b = tau_contract(&tb, layer.gate_b.target);
            let gb = self.local_gate(&layer.gate_b, k);
            let (bth, bph, bla) = gb.angles(block_params);
            for which in gb.free_angles() {
                let dg = crate::gates::u3_derivative_kernel(bth, bph, bla, *which);
                let slot = gb.param_index(*which).expect("free angle");
                grad[base + 2 + slot] = 2.0 * contract_kernel(&tau_b, &dg);
            }
            // Recurse: K_{k-1} = L_k^dag K_k L_{k-1}.
            if k > 0 {
                self.local_gate(&layer.entangler, k)
                    .apply_left_dagger(&mut k_ctx, block_params);
                self.local_gate(&layer.gate_b, k)
                    .apply_left_dagger(&mut k_ctx, block_params);
                self.local_gate(&layer.gate_a, k)
                    .apply_left_dagger(&mut k_ctx, block_params);
                let prev = &self.layers[self.block.start + k - 1];
                self.local_gate(&prev.entangler, k - 1)
                    .apply_right(&mut k_ctx, block_params);
                self.local_gate(&prev.gate_b, k - 1)
                    .apply_right(&mut k_ctx, block_params);
                self.local_gate(&prev.gate_a, k - 1)
                    .apply_right(&mut k_ctx, block_params);
            }
        }
        (value, grad)
    }

    fn local_gate(&self, gate: &Gate, block_layer: usize) -> Gate {
        Gate {
            param_offset: PARAMS_PER_LAYER * block_layer + (gate.param_offset % PARAMS_PER_LAYER),
            ..*gate
        }
    }

    fn apply_block_layer(
        &self,
        m: &mut ComplexMatrix,
        layer: &Layer,
        block_layer: usize,
        block_params: &[f64],
    ) {
        self.local_gate(&layer.gate_a, block_layer)
            .apply_left(m, block_params);
        self.local_gate(&layer.gate_b, block_layer)
            .apply_left(m, block_params);
        layer.entangler.apply_left(m, block_params);
    }
}

/// Disentanglement cost together with the adjoint matrix W-hat satisfying
/// df = 2 Re <W-hat, dU-bar> over all 16 ordered block pairs.
fn separability_value_and_adjoint(ubar: &ComplexMatrix) -> (f64, ComplexMatrix) {
    let parts = partition_blocks(ubar).expect("even dimension");
    let h = parts.half;
    let b = &parts.blocks;

    // Deviation matrices X_ij = B_i B_j^dag - kappa I for ordered pairs.
    // The (j, i) pair is the dagger of (i, j), so only i <= j is formed.
    let mut value = 0.0;
    let mut xs: Vec<Vec<ComplexMatrix>> = vec![Vec::new(); 4];
    let mut traces = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let mut m = b[i].matmul_dagger(&b[j]).expect("blocks are square");
            let kappa = m[(0, 0)];
            for r in 0..h {
                m[(r, r)] -= kappa;
            }
            let norm: f64 = m.entries().iter().map(|e| e.norm_sqr()).sum();
            value += if i == j { norm } else { 2.0 * norm };
            traces[i][j] = m.trace();
            traces[j][i] = m.trace().conj();
            xs[i].push(m);
        }
    }
    let x = |i: usize, j: usize| -> &ComplexMatrix { &xs[i][j - i] };

    let mut w_blocks: Vec<ComplexMatrix> = (0..4).map(|_| ComplexMatrix::zeros(h, h)).collect();
    for i in 0..4 {
        for j in i..4 {
            let xij = x(i, j);
            let y = xij.matmul(&b[j]).expect("shapes agree");
            let z = xij.dagger().matmul(&b[i]).expect("shapes agree");
            let weight = if i == j { 1.0 } else { 2.0 };
            accumulate(&mut w_blocks[i], &y, weight);
            accumulate(&mut w_blocks[j], &z, weight);
            // Row-0 corrections from the kappa dependence.
            let tij = traces[i][j];
            for c in 0..h {
                let wi = w_blocks[i].row_mut(0);
                wi[c] -= weight * tij * b[j][(0, c)];
            }
            for c in 0..h {
                let wj = w_blocks[j].row_mut(0);
                wj[c] -= weight * tij.conj() * b[i][(0, c)];
            }
        }
    }
    let mut w_hat = ComplexMatrix::zeros(2 * h, 2 * h);
    for i in 0..2 {
        for j in 0..2 {
            let blk = &w_blocks[2 * i + j];
            for r in 0..h {
                for c in 0..h {
                    w_hat[(i * h + r, j * h + c)] = blk[(r, c)];
                }
            }
        }
    }
    (value, w_hat)
}

/// tau[a][b] = sum over rows with the qubit bit clear of
/// conj(T[r0 + a*e, r0 + b*e]): the strided contraction such that
/// <T, embed(dg)> = sum_ab tau[a][b] * dg[a][b].
fn tau_contract(t: &ComplexMatrix, qubit: usize) -> [[Complex64; 2]; 2] {
    let e = 1usize << qubit;
    let mut tau = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r0 in 0..t.rows() {
        if r0 & e != 0 {
            continue;
        }
        for (a, row) in tau.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell += t[(r0 + a * e, r0 + b * e)].conj();
            }
        }
    }
    tau
}

fn contract_kernel(tau: &[[Complex64; 2]; 2], dg: &[Complex64; 4]) -> f64 {
    (tau[0][0] * dg[0] + tau[0][1] * dg[1] + tau[1][0] * dg[2] + tau[1][1] * dg[3]).re
}

fn accumulate(acc: &mut ComplexMatrix, add: &ComplexMatrix, weight: f64) {
    for r in 0..acc.rows() {
        let dst = acc.row_mut(r);
        let src = add.row(r);
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d += weight * s;
        }
    }
}


/// Disentanglement cost and gradient over one block of layers of a stage,
/// from the global parameter vector. Gradient entries cover only the active
/// block (inactive parameters are not differentiated).
pub fn separability_cost_grad(
    structure: &GateStructure,
    stage_index: usize,
    params: &[f64],
    u_initial: &ComplexMatrix,
    active_layers: std::ops::Range<usize>,
) -> Result<CostReport> {
    if stage_index >= structure.stages.len() {
        return Err(Error::Structure(format!(
            "stage {stage_index} out of range"
        )));
    }
    let range = structure.stage_param_range(stage_index);
    if params.len() < range.end {
        return Err(Error::Structure(format!(
            "parameter vector has {} entries, stage {stage_index} ends at {}",
            params.len(),
            range.end
        )));
    }
    let stage_params = &params[range];
    let ev = StageEvaluator::new(structure, stage_index, u_initial, stage_params, active_layers.clone())?;
    let active = &stage_params
        [PARAMS_PER_LAYER * active_layers.start..PARAMS_PER_LAYER * active_layers.end];
    let (value, grad) = ev.value_and_grad(active);
    Ok(CostReport {
        value,
        gradient: Some(grad),
    })
}

/// Stage product U-bar = (stage layers) * u_initial under the global
/// parameter vector.
pub fn stage_product(
    structure: &GateStructure,
    stage_index: usize,
    params: &[f64],
    u_initial: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let stage = &structure.stages[stage_index];
    let dim = 1usize << (stage.target + 1);
    if u_initial.rows() != dim {
        return Err(Error::DimensionMismatch(format!(
            "stage {stage_index} expects dimension {dim}, got {}",
            u_initial.rows()
        )));
    }
    let mut m = u_initial.clone();
    for layer in &stage.layers {
        apply_layer_left(&mut m, layer, params);
    }
    Ok(m)
}

/// Trace-fidelity cost `1 - |Tr(C(params) * U)| / 2^n` over the complete
/// circuit, with its analytic gradient over all parameters.
pub fn fidelity_cost(
    structure: &GateStructure,
    params: &[f64],
    u_initial: &ComplexMatrix,
) -> Result<CostReport> {
    let dim = 1usize << structure.n_qubits;
    if params.len() != structure.total_params {
        return Err(Error::Structure(format!(
            "parameter vector has {} entries, structure needs {}",
            params.len(),
            structure.total_params
        )));
    }
    if u_initial.rows() != dim || u_initial.cols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "target must be {dim}x{dim}, got {}x{}",
            u_initial.rows(),
            u_initial.cols()
        )));
    }
    let gates = structure.gates_in_order();
    // Forward pass: state before each parametric gate.
    let mut forward: Vec<Option<ComplexMatrix>> = Vec::with_capacity(gates.len());
    let mut acc = u_initial.clone();
    for gate in &gates {
        if gate.param_count > 0 {
            forward.push(Some(acc.clone()));
        } else {
            forward.push(None);
        }
        gate.apply_left(&mut acc, params);
    }
    let trace = acc.trace();
    let norm = trace.norm();
    // Clamp away the -1e-16 rounding leak at the exact optimum.
    let value = (1.0 - norm / dim as f64).max(0.0);

    // Backward pass: suffix products, consumed in reverse.
    let mut grad = vec![0.0; params.len()];
    let mut suffix = ComplexMatrix::identity(dim);
    let safe_norm = norm.max(1e-300);
    for (gate, before) in gates.iter().zip(forward.iter()).rev() {
        if let Some(a) = before {
            // tau[b][a] = sum_r (A * suffix)[r + b*e, r + a*e] over rows with
            // the gate's qubit bit clear; Tr(dg_emb * A * suffix) then reads
            // off from the 2x2 derivative kernel.
            let e = 1usize << gate.target;
            let mut tau = [[Complex64::new(0.0, 0.0); 2]; 2];
            for r0 in 0..dim {
                if r0 & e != 0 {
                    continue;
                }
                for (bi, tb) in tau.iter_mut().enumerate() {
                    let row = a.row(r0 + bi * e);
                    for (ai, t) in tb.iter_mut().enumerate() {
                        let mut acc2 = Complex64::new(0.0, 0.0);
                        for (k, av) in row.iter().enumerate() {
                            acc2 += av * suffix[(k, r0 + ai * e)];
                        }
                        *t += acc2;
                    }
                }
            }
            let (t, p, l) = gate.angles(params);
            for which in gate.free_angles() {
                let dg = crate::gates::u3_derivative_kernel(t, p, l, *which);
                let dtrace = dg[0] * tau[0][0]
                    + dg[1] * tau[1][0]
                    + dg[2] * tau[0][1]
                    + dg[3] * tau[1][1];
                let slot = gate.param_index(*which).expect("free angle");
                grad[gate.param_offset + slot] =
                    -(trace.conj() * dtrace).re / (safe_norm * dim as f64);
            }
        }
        gate.apply_right(&mut suffix, params);
    }
    Ok(CostReport {
        value,
        gradient: Some(grad),
    })
}
