//! Builders for the layered decomposition template: periods, stages, the
//! global parameter layout, and topology validation.
//!
//! A layer is two u3 gates plus one fixed two-qubit controlled gate on a
//! qubit pair and carries 4 free parameters. A period is the shortest layer
//! sequence that couples a disentanglement target to every remaining qubit;
//! stages repeat their period until the requested layer count is reached.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::gates::{Gate, GateKind};
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct Layer {
    pub qubit_a: usize,
    pub qubit_b: usize,
    pub gate_a: Gate,
    pub gate_b: Gate,
    pub entangler: Gate,
}

pub const PARAMS_PER_LAYER: usize = 4;
pub const PARAMS_PER_CLOSING: usize = 3;

impl Layer {
    fn new(qubit_a: usize, qubit_b: usize, control: usize, target: usize, kind: GateKind) -> Result<Layer> {
        Ok(Layer {
            qubit_a,
            qubit_b,
            gate_a: Gate::u3_layer(qubit_a, 0),
            gate_b: Gate::u3_layer(qubit_b, 2),
            entangler: Gate::entangler(kind, control, target)?,
        })
    }

    fn at_offset(&self, offset: usize) -> Layer {
        let mut l = self.clone();
        l.gate_a.param_offset = offset;
        l.gate_b.param_offset = offset + 2;
        l
    }
}

#[derive(Debug, Clone)]
pub struct Period {
    pub layers: Vec<Layer>,
    pub disentangle_target: usize,
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub target: usize,
    pub layers: Vec<Layer>,
}

/// The full decomposing template: one stage per disentangled qubit plus one
/// closing 3-parameter u3 per qubit, with the global parameter layout fixed.
#[derive(Debug, Clone)]
pub struct GateStructure {
    pub n_qubits: usize,
    pub stages: Vec<Stage>,
    pub closing: Vec<Gate>,
    pub total_params: usize,
}

impl GateStructure {
    pub fn total_layers(&self) -> usize {
        self.stages.iter().map(|s| s.layers.len()).sum()
    }

    /// Two-qubit gate count; one per layer by construction.
    pub fn two_qubit_gate_count(&self) -> usize {
        self.total_layers()
    }

    /// Range of the global parameter vector owned by stage `s`.
    pub fn stage_param_range(&self, s: usize) -> std::ops::Range<usize> {
        let before: usize = self.stages[..s].iter().map(|st| st.layers.len()).sum();
        let start = PARAMS_PER_LAYER * before;
        start..start + PARAMS_PER_LAYER * self.stages[s].layers.len()
    }

    pub fn closing_param_offset(&self, qubit: usize) -> usize {
        PARAMS_PER_LAYER * self.total_layers() + PARAMS_PER_CLOSING * qubit
    }

    /// Gates in application order: each stage's layers (u3 a, u3 b,
    /// entangler), then the closing rotations.
    pub fn gates_in_order(&self) -> Vec<Gate> {
        let mut out = Vec::with_capacity(3 * self.total_layers() + self.closing.len());
        for stage in &self.stages {
            for layer in &stage.layers {
                out.push(layer.gate_a);
                out.push(layer.gate_b);
                out.push(layer.entangler);
            }
        }
        out.extend(self.closing.iter().copied());
        out
    }

    /// A structure holding a single disentanglement stage (no closing
    /// parameters are optimized, but the layout still reserves them).
    pub fn single_stage(
        n_qubits: usize,
        topology: Option<&Topology>,
        layers: usize,
        kind: GateKind,
    ) -> Result<GateStructure> {
        let target = n_qubits - 1;
        let period = match topology {
            None => build_full_period(n_qubits, target, kind)?,
            Some(t) => {
                let remaining: Vec<usize> = (0..target).collect();
                build_topology_period(t, target, &remaining, kind)?
            }
        };
        let stage = instantiate_stage(&period, layers, 0)?;
        let closing = closing_gates(n_qubits, layers);
        Ok(GateStructure {
            n_qubits,
            stages: vec![stage],
            closing,
            total_params: PARAMS_PER_LAYER * layers + PARAMS_PER_CLOSING * n_qubits,
        })
    }
}

fn closing_gates(n_qubits: usize, total_layers: usize) -> Vec<Gate> {
    (0..n_qubits)
        .map(|q| Gate::u3_closing(q, PARAMS_PER_LAYER * total_layers + PARAMS_PER_CLOSING * q))
        .collect()
}

fn instantiate_stage(period: &Period, count: usize, first_layer_index: usize) -> Result<Stage> {
    let plen = period.layers.len();
    if count < plen {
        return Err(Error::Structure(format!(
            "stage for qubit {} needs at least one full period ({plen} layers), got {count}",
            period.disentangle_target
        )));
    }
    let layers = (0..count)
        .map(|i| period.layers[i % plen].at_offset(PARAMS_PER_LAYER * (first_layer_index + i)))
        .collect();
    Ok(Stage {
        target: period.disentangle_target,
        layers,
    })
}

/// Period for full connectivity: one layer per partner qubit, in descending
/// partner order, entangler controlled by the disentanglement target.
pub fn build_full_period(n_qubits: usize, target: usize, kind: GateKind) -> Result<Period> {
    if n_qubits < 2 {
        return Err(Error::UnsupportedQubitCount(
            n_qubits,
            "a period needs at least two qubits".into(),
        ));
    }
    if target >= n_qubits {
        return Err(Error::QubitOutOfRange {
            index: target,
            n_qubits,
        });
    }
    let mut layers = Vec::with_capacity(n_qubits - 1);
    for partner in (0..n_qubits).rev().filter(|&q| q != target) {
        layers.push(Layer::new(target, partner, target, partner, kind)?);
    }
    Ok(Period {
        layers,
        disentangle_target: target,
    })
}

/// Period on a sparse topology: a BFS tree from the target spans the
/// remaining qubits, with one layer per tree edge, ordered by BFS distance.
/// Pairs not containing the target mediate interactions through intermediate
/// qubits. Entangler orientation follows the hardware-allowed direction,
/// preferring the end nearer the target as control.
pub fn build_topology_period(
    topology: &Topology,
    target: usize,
    remaining: &[usize],
    kind: GateKind,
) -> Result<Period> {
    let mut verts: Vec<usize> = remaining.to_vec();
    verts.push(target);
    let mut dist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    dist.insert(target, 0);
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        let mut neighbors: Vec<usize> = verts
            .iter()
            .copied()
            .filter(|&v| v != u && !dist.contains_key(&v) && topology.usable_local(u, v))
            .collect();
        neighbors.sort_unstable_by(|a, b| b.cmp(a));
        for v in neighbors {
            dist.insert(v, dist[&u] + 1);
            parent.insert(v, u);
            queue.push_back(v);
        }
    }
    if let Some(&missing) = remaining.iter().find(|v| !dist.contains_key(v)) {
        return Err(Error::Topology(format!(
            "topology cannot disentangle target {target}: qubit {missing} unreachable"
        )));
    }
    let mut order: Vec<usize> = remaining.to_vec();
    order.sort_unstable_by(|a, b| dist[a].cmp(&dist[b]).then(b.cmp(a)));
    let mut layers = Vec::with_capacity(order.len());
    for v in order {
        let u = parent[&v];
        let (control, gate_target) = topology.orient_local(u, v)?;
        layers.push(Layer::new(u, v, control, gate_target, kind)?);
    }
    Ok(Period {
        layers,
        disentangle_target: target,
    })
}

/// Assembles the full structure: stages for targets n-1 down to 1, each
/// repeating its period up to the requested layer count (the last period may
/// be truncated), then one closing u3 per qubit.
pub fn assemble_structure(
    n_qubits: usize,
    topology: Option<&Topology>,
    layers_per_stage: &[usize],
    kind: GateKind,
) -> Result<GateStructure> {
    if n_qubits < 2 {
        return Err(Error::UnsupportedQubitCount(
            n_qubits,
            "decomposition needs at least two qubits".into(),
        ));
    }
    if layers_per_stage.len() != n_qubits - 1 {
        return Err(Error::Structure(format!(
            "expected {} stage layer counts, got {}",
            n_qubits - 1,
            layers_per_stage.len()
        )));
    }
    if let Some(t) = topology {
        if t.n_local() != n_qubits {
            return Err(Error::Topology(format!(
                "topology is laid out for {} qubits, program has {n_qubits}",
                t.n_local()
            )));
        }
    }
    let mut stages = Vec::with_capacity(n_qubits - 1);
    let mut layer_cursor = 0usize;
    for (s, &count) in layers_per_stage.iter().enumerate() {
        let target = n_qubits - 1 - s;
        let period = match topology {
            None => build_full_period(target + 1, target, kind)?,
            Some(t) => {
                let remaining: Vec<usize> = (0..target).collect();
                build_topology_period(t, target, &remaining, kind)?
            }
        };
        let stage = instantiate_stage(&period, count, layer_cursor)?;
        layer_cursor += count;
        stages.push(stage);
    }
    let closing = closing_gates(n_qubits, layer_cursor);
    Ok(GateStructure {
        n_qubits,
        stages,
        closing,
        total_params: PARAMS_PER_LAYER * layer_cursor + PARAMS_PER_CLOSING * n_qubits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyClass {
    Full,
    Qx2,
    HeavyHex,
}

impl TopologyClass {
    pub fn of(topology: Option<&Topology>) -> Option<TopologyClass> {
        match topology {
            None => Some(TopologyClass::Full),
            Some(t) => match t.preset_name() {
                Some("full") => Some(TopologyClass::Full),
                Some("qx2") => Some(TopologyClass::Qx2),
                Some("heavy_hex4") => Some(TopologyClass::HeavyHex),
                _ => None,
            },
        }
    }
}

/// Per-stage layer counts that reach the saturated precision for each
/// supported register size and connectivity class.
pub fn default_layer_counts(n_qubits: usize, class: TopologyClass) -> Result<Vec<usize>> {
    let counts: &[usize] = match (class, n_qubits) {
        (TopologyClass::Full, 2) => &[3],
        (TopologyClass::Full, 3) => &[12, 3],
        (TopologyClass::Full, 4) => &[48, 12, 3],
        (TopologyClass::Full, 5) => &[204, 48, 12, 3],
        (TopologyClass::Qx2 | TopologyClass::HeavyHex, 2) => &[3],
        (TopologyClass::Qx2 | TopologyClass::HeavyHex, 3) => &[14, 3],
        (TopologyClass::Qx2 | TopologyClass::HeavyHex, 4) => &[54, 14, 3],
        _ => {
            return Err(Error::UnsupportedQubitCount(
                n_qubits,
                "no default layer counts for this connectivity; pass explicit counts".into(),
            ))
        }
    };
    Ok(counts.to_vec())
}

/// Theoretical minimum number of CNOT gates sufficient to realize an
/// arbitrary n-qubit unitary: ceil((4^n - 3n - 1) / 4).
pub fn cnot_lower_bound(n_qubits: u32) -> u64 {
    let four_n = 4u64.pow(n_qubits);
    let num = four_n - 3 * n_qubits as u64 - 1;
    num.div_ceil(4)
}

/// One two-qubit gate placed outside the allowed edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub stage: usize,
    pub layer: usize,
    pub control_local: usize,
    pub target_local: usize,
    pub control_physical: usize,
    pub target_physical: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage {} layer {}: gate {}->{} (physical {}->{}) is not an allowed edge",
            self.stage,
            self.layer,
            self.control_local,
            self.target_local,
            self.control_physical,
            self.target_physical
        )
    }
}

/// Checks every two-qubit gate against the topology through the relabeling.
/// Violations are reported, not thrown.
pub fn validate_structure(structure: &GateStructure, topology: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    for (si, stage) in structure.stages.iter().enumerate() {
        for (li, layer) in stage.layers.iter().enumerate() {
            let control = layer.entangler.control.expect("entangler has a control");
            let target = layer.entangler.target;
            let n = topology.n_local();
            let bad = control >= n || target >= n || {
                let (pc, pt) = (topology.physical_of(control), topology.physical_of(target));
                !topology.allows_physical(pc, pt)
            };
            if bad {
                let (pc, pt) = if control < n && target < n {
                    (topology.physical_of(control), topology.physical_of(target))
                } else {
                    (usize::MAX, usize::MAX)
                };
                out.push(Violation {
                    stage: si,
                    layer: li,
                    control_local: control,
                    target_local: target,
                    control_physical: pc,
                    target_physical: pt,
                });
            }
        }
    }
    out
}
