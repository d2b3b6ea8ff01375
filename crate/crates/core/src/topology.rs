//! Hardware connectivity graphs, qubit relabeling, and the bundled presets.
//!
//! A topology file fixes the physical device graph plus the subset of qubits
//! a program runs on and the order in which they are disentangled. Loading
//! canonicalizes the labels: local qubit `n-1` is always disentangled first,
//! so `relabel[local]` gives the physical wire of each local qubit.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const QX2_JSON: &str = include_str!("../data/qx2.json");
pub const HEAVY_HEX4_JSON: &str = include_str!("../data/heavy_hex4.json");

/// On-disk topology description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub n_physical: usize,
    /// Directed `[control, target]` pairs.
    pub edges: Vec<[usize; 2]>,
    /// When true every edge is usable in both orientations.
    pub bidirectional: bool,
    /// Physical qubits the program may use; `subset[i]` is file-local qubit `i`.
    pub subset: Vec<usize>,
    /// File-local indices in disentanglement order.
    pub disentangle_order: Vec<usize>,
}

/// Directed connectivity over physical qubits together with the local-to-
/// physical relabeling for one problem size.
#[derive(Debug, Clone)]
pub struct Topology {
    n_physical: usize,
    allowed: BTreeSet<(usize, usize)>,
    relabel: Vec<usize>,
    disentangle_order: Vec<usize>,
    preset: Option<String>,
}

impl Topology {
    /// All-to-all connectivity with identity relabeling.
    pub fn full(n_qubits: usize) -> Topology {
        let mut allowed = BTreeSet::new();
        for c in 0..n_qubits {
            for t in 0..n_qubits {
                if c != t {
                    allowed.insert((c, t));
                }
            }
        }
        Topology {
            n_physical: n_qubits,
            allowed,
            relabel: (0..n_qubits).collect(),
            disentangle_order: (0..n_qubits).rev().collect(),
            preset: Some("full".into()),
        }
    }

    pub fn from_spec(file: &TopologyFile, n_qubits: usize, preset: Option<String>) -> Result<Topology> {
        let k = file.subset.len();
        if file.subset.iter().any(|&q| q >= file.n_physical) {
            return Err(Error::Topology("subset qubit out of physical range".into()));
        }
        if file.subset.iter().collect::<BTreeSet<_>>().len() != k {
            return Err(Error::Topology("subset contains duplicates".into()));
        }
        let order_set: BTreeSet<_> = file.disentangle_order.iter().collect();
        if file.disentangle_order.len() != k || order_set.len() != k
            || file.disentangle_order.iter().any(|&i| i >= k)
        {
            return Err(Error::Topology(
                "disentangle_order must be a permutation of the subset indices".into(),
            ));
        }
        if n_qubits < 2 || n_qubits > k {
            return Err(Error::Topology(format!(
                "topology subset has {k} qubits; cannot host a {n_qubits}-qubit program"
            )));
        }
        let mut allowed = BTreeSet::new();
        for e in &file.edges {
            let (c, t) = (e[0], e[1]);
            if c >= file.n_physical || t >= file.n_physical || c == t {
                return Err(Error::Topology(format!("invalid edge [{c}, {t}]")));
            }
            allowed.insert((c, t));
            if file.bidirectional {
                allowed.insert((t, c));
            }
        }
        // Physical qubits in disentanglement order; the last n entries are the
        // active core, and the first of them becomes local qubit n-1.
        let phys_order: Vec<usize> = file
            .disentangle_order
            .iter()
            .map(|&i| file.subset[i])
            .collect();
        let active = &phys_order[k - n_qubits..];
        let mut relabel = vec![0usize; n_qubits];
        for (pos, &phys) in active.iter().enumerate() {
            relabel[n_qubits - 1 - pos] = phys;
        }
        let topo = Topology {
            n_physical: file.n_physical,
            allowed,
            relabel,
            disentangle_order: (0..n_qubits).rev().collect(),
            preset,
        };
        if !topo.usable_local(1, 0) {
            return Err(Error::Topology(
                "the final two qubits in disentangle order must share an edge".into(),
            ));
        }
        Ok(topo)
    }

    pub fn from_json(src: &str, n_qubits: usize, preset: Option<String>) -> Result<Topology> {
        let file: TopologyFile =
            serde_json::from_str(src).map_err(|e| Error::Parse(format!("topology JSON: {e}")))?;
        Topology::from_spec(&file, n_qubits, preset)
    }

    pub fn from_file(path: &Path, n_qubits: usize) -> Result<Topology> {
        let src = std::fs::read_to_string(path)?;
        let preset = preset_name_of(path);
        Topology::from_json(&src, n_qubits, preset)
    }

    pub fn preset(name: &str, n_qubits: usize) -> Result<Topology> {
        match normalize_preset(name) {
            Some("qx2") => Topology::from_json(QX2_JSON, n_qubits, Some("qx2".into())),
            Some("heavy_hex4") => {
                Topology::from_json(HEAVY_HEX4_JSON, n_qubits, Some("heavy_hex4".into()))
            }
            _ => Err(Error::Topology(format!("unknown topology preset `{name}`"))),
        }
    }

    /// Resolves a CLI argument: an existing file path, else a preset name.
    pub fn load(arg: &str, n_qubits: usize) -> Result<Topology> {
        let path = Path::new(arg);
        if path.exists() {
            Topology::from_file(path, n_qubits)
        } else {
            Topology::preset(arg, n_qubits).map_err(|_| {
                Error::Topology(format!(
                    "`{arg}` is neither a readable file nor a known preset (qx2, heavy_hex4)"
                ))
            })
        }
    }

    pub fn n_physical(&self) -> usize {
        self.n_physical
    }

    pub fn n_local(&self) -> usize {
        self.relabel.len()
    }

    pub fn relabel(&self) -> &[usize] {
        &self.relabel
    }

    pub fn physical_of(&self, local: usize) -> usize {
        self.relabel[local]
    }

    pub fn disentangle_order(&self) -> &[usize] {
        &self.disentangle_order
    }

    pub fn preset_name(&self) -> Option<&str> {
        self.preset.as_deref()
    }

    pub fn allows_physical(&self, control: usize, target: usize) -> bool {
        self.allowed.contains(&(control, target))
    }

    /// True when the two local qubits are joined by an edge in either
    /// orientation.
    pub fn usable_local(&self, a: usize, b: usize) -> bool {
        let (pa, pb) = (self.relabel[a], self.relabel[b]);
        self.allows_physical(pa, pb) || self.allows_physical(pb, pa)
    }

    /// Picks the hardware-allowed (control, target) orientation for a local
    /// pair, preferring `preferred` as control.
    pub fn orient_local(&self, preferred: usize, other: usize) -> Result<(usize, usize)> {
        let (pp, po) = (self.relabel[preferred], self.relabel[other]);
        if self.allows_physical(pp, po) {
            Ok((preferred, other))
        } else if self.allows_physical(po, pp) {
            Ok((other, preferred))
        } else {
            Err(Error::Topology(format!(
                "no edge between local qubits {preferred} and {other} (physical {pp}, {po})"
            )))
        }
    }
}

fn normalize_preset(name: &str) -> Option<&'static str> {
    let base = name.strip_suffix(".json").unwrap_or(name);
    match base {
        "qx2" => Some("qx2"),
        "heavy_hex4" | "heavy_hex" => Some("heavy_hex4"),
        _ => None,
    }
}

fn preset_name_of(path: &Path) -> Option<String> {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(normalize_preset)
        .map(str::to_owned)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_topology_allows_everything() {
        let t = Topology::full(3);
        assert!(t.allows_physical(0, 2) && t.allows_physical(2, 0));
        assert_eq!(t.relabel(), &[0, 1, 2]);
        assert_eq!(t.disentangle_order(), &[2, 1, 0]);
    }

    #[test]
    fn qx2_preset_relabeling_4q() {
        let t = Topology::preset("qx2", 4).unwrap();
        // Disentangle Q0 first, then Q1, Q3, Q2.
        assert_eq!(t.relabel(), &[2, 3, 1, 0]);
        assert!(t.allows_physical(0, 1));
        assert!(!t.allows_physical(1, 0));
        // Local q3 (Q0) has no edge to local q1 (Q3).
        assert!(!t.usable_local(3, 1));
        assert!(t.usable_local(3, 2) && t.usable_local(3, 0) && t.usable_local(1, 0));
    }

    #[test]
    fn qx2_preset_relabeling_3q() {
        let t = Topology::preset("qx2", 3).unwrap();
        // Tail of the order: Q1, Q3, Q2.
        assert_eq!(t.relabel(), &[2, 3, 1]);
        assert!(t.usable_local(2, 0));
        assert!(!t.usable_local(2, 1));
        assert!(t.usable_local(1, 0));
    }

    #[test]
    fn heavy_hex_preset_is_bidirectional_path() {
        let t = Topology::preset("heavy_hex4", 4).unwrap();
        assert_eq!(t.relabel(), &[0, 1, 2, 3]);
        assert!(t.usable_local(3, 0) && t.usable_local(0, 1) && t.usable_local(1, 2));
        assert!(!t.usable_local(3, 2));
        assert!(t.allows_physical(0, 1) && t.allows_physical(1, 0));
    }

    #[test]
    fn orientation_respects_hardware_direction() {
        let t = Topology::preset("qx2", 4).unwrap();
        // Mediated pair (local 0 = Q2, local 1 = Q3): only Q3 -> Q2 exists.
        assert_eq!(t.orient_local(0, 1).unwrap(), (1, 0));
        // Direct pair (local 3 = Q0, local 2 = Q1): Q0 -> Q1 as preferred.
        assert_eq!(t.orient_local(3, 2).unwrap(), (3, 2));
    }

    #[test]
    fn rejects_bad_files() {
        let bad = r#"{"n_physical": 2, "edges": [[0,1]], "bidirectional": false,
                      "subset": [0, 0], "disentangle_order": [0, 1]}"#;
        assert!(Topology::from_json(bad, 2, None).is_err());
        let bad_order = r#"{"n_physical": 2, "edges": [[0,1]], "bidirectional": false,
                            "subset": [0, 1], "disentangle_order": [1, 1]}"#;
        assert!(Topology::from_json(bad_order, 2, None).is_err());
        // Final two in order share no edge.
        let no_edge = r#"{"n_physical": 3, "edges": [[0,1],[1,2]], "bidirectional": true,
                          "subset": [0, 1, 2], "disentangle_order": [1, 0, 2]}"#;
        assert!(Topology::from_json(no_edge, 3, None).is_err());
        assert!(Topology::preset("nope", 3).is_err());
    }
}
