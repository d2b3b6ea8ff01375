//! Gate kernels, their analytic parameter derivatives, and embedding into the
//! full register.
//!
//! Conventions: `u3(theta, phi, lambda)` follows the OpenQASM 2.0 definition,
//!
//! ```text
//! [ cos(t/2)              -e^{i l} sin(t/2)      ]
//! [ e^{i p} sin(t/2)       e^{i(p+l)} cos(t/2)   ]
//! ```
//!
//! and qubit `q` owns bit `2^q` of the basis index, so the highest-index qubit
//! is the most significant bit.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    U3,
    H,
    Cnot,
    Cz,
    Ch,
}

impl GateKind {
    pub fn is_two_qubit(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Cz | GateKind::Ch)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::U3 => "u3",
            GateKind::H => "h",
            GateKind::Cnot => "cx",
            GateKind::Cz => "cz",
            GateKind::Ch => "ch",
        }
    }
}

/// One placed gate. `param_offset` indexes the global parameter vector;
/// `param_count` is 2 for in-layer u3 gates (theta, lambda; phi fixed to 0),
/// 3 for closing u3 gates, and 0 for fixed gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub param_offset: usize,
    pub param_count: usize,
}

impl Gate {
    pub fn u3_layer(target: usize, param_offset: usize) -> Gate {
        Gate {
            kind: GateKind::U3,
            target,
            control: None,
            param_offset,
            param_count: 2,
        }
    }

    pub fn u3_closing(target: usize, param_offset: usize) -> Gate {
        Gate {
            kind: GateKind::U3,
            target,
            control: None,
            param_offset,
            param_count: 3,
        }
    }

    pub fn entangler(kind: GateKind, control: usize, target: usize) -> Result<Gate> {
        if !kind.is_two_qubit() {
            return Err(Error::Structure(format!(
                "{} is not a two-qubit gate kind",
                kind.name()
            )));
        }
        if control == target {
            return Err(Error::Structure("control and target must differ".into()));
        }
        Ok(Gate {
            kind,
            target,
            control: Some(control),
            param_offset: 0,
            param_count: 0,
        })
    }

    /// (theta, phi, lambda) for this gate under the given global parameters.
    pub fn angles(&self, params: &[f64]) -> (f64, f64, f64) {
        match self.param_count {
            2 => (params[self.param_offset], 0.0, params[self.param_offset + 1]),
            3 => (
                params[self.param_offset],
                params[self.param_offset + 1],
                params[self.param_offset + 2],
            ),
            _ => (0.0, 0.0, 0.0),
        }
    }

    fn kernel_1q(&self, params: &[f64]) -> [Complex64; 4] {
        match self.kind {
            GateKind::U3 => {
                let (t, p, l) = self.angles(params);
                u3_kernel(t, p, l)
            }
            GateKind::H => h_kernel(),
            _ => unreachable!("kernel_1q on a two-qubit gate"),
        }
    }

    /// Applies this gate from the left: `m <- G_embedded * m`.
    pub fn apply_left(&self, m: &mut ComplexMatrix, params: &[f64]) {
        match self.kind {
            GateKind::U3 | GateKind::H => m.apply_1q_left(&self.kernel_1q(params), self.target),
            GateKind::Cnot => m.apply_cnot_left(self.control.unwrap(), self.target),
            GateKind::Cz => m.apply_cz(self.control.unwrap(), self.target, true),
            GateKind::Ch => m.apply_2q_left(
                &two_qubit_kernel_array(GateKind::Ch),
                self.control.unwrap(),
                self.target,
            ),
        }
    }

    /// Applies this gate from the right: `m <- m * G_embedded`.
    pub fn apply_right(&self, m: &mut ComplexMatrix, params: &[f64]) {
        match self.kind {
            GateKind::U3 | GateKind::H => m.apply_1q_right(&self.kernel_1q(params), self.target),
            GateKind::Cnot => m.apply_cnot_right(self.control.unwrap(), self.target),
            GateKind::Cz => m.apply_cz(self.control.unwrap(), self.target, false),
            GateKind::Ch => m.apply_2q_right(
                &two_qubit_kernel_array(GateKind::Ch),
                self.control.unwrap(),
                self.target,
            ),
        }
    }

    /// Applies the inverse gate from the right: `m <- m * G_embedded^dag`.
    pub fn apply_right_dagger(&self, m: &mut ComplexMatrix, params: &[f64]) {
        match self.kind {
            GateKind::U3 | GateKind::H => {
                let k = self.kernel_1q(params);
                let kd = [k[0].conj(), k[2].conj(), k[1].conj(), k[3].conj()];
                m.apply_1q_right(&kd, self.target);
            }
            // The fixed two-qubit kernels used here are Hermitian.
            GateKind::Cnot => m.apply_cnot_right(self.control.unwrap(), self.target),
            GateKind::Cz => m.apply_cz(self.control.unwrap(), self.target, false),
            GateKind::Ch => m.apply_2q_right(
                &two_qubit_kernel_array(GateKind::Ch),
                self.control.unwrap(),
                self.target,
            ),
        }
    }

    /// Applies the inverse gate from the left: `m <- G_embedded^dag * m`.
    pub fn apply_left_dagger(&self, m: &mut ComplexMatrix, params: &[f64]) {
        match self.kind {
            GateKind::U3 | GateKind::H => {
                let k = self.kernel_1q(params);
                let kd = [k[0].conj(), k[2].conj(), k[1].conj(), k[3].conj()];
                m.apply_1q_left(&kd, self.target);
            }
            GateKind::Cnot => m.apply_cnot_left(self.control.unwrap(), self.target),
            GateKind::Cz => m.apply_cz(self.control.unwrap(), self.target, true),
            GateKind::Ch => m.apply_2q_left(
                &two_qubit_kernel_array(GateKind::Ch),
                self.control.unwrap(),
                self.target,
            ),
        }
    }

    /// Applies the elementwise parameter derivative of a u3 gate from the
    /// left. `which` selects the angle; the kernel is not unitary.
    pub fn apply_left_derivative(&self, m: &mut ComplexMatrix, params: &[f64], which: U3Param) {
        debug_assert_eq!(self.kind, GateKind::U3);
        let (t, p, l) = self.angles(params);
        m.apply_1q_left(&u3_derivative_kernel(t, p, l, which), self.target);
    }

    /// Index of `which` within this gate's parameter block.
    pub fn param_index(&self, which: U3Param) -> Option<usize> {
        match (self.param_count, which) {
            (2, U3Param::Theta) => Some(0),
            (2, U3Param::Lambda) => Some(1),
            (2, U3Param::Phi) => None,
            (3, U3Param::Theta) => Some(0),
            (3, U3Param::Phi) => Some(1),
            (3, U3Param::Lambda) => Some(2),
            _ => None,
        }
    }

    /// The angles this gate actually optimizes, in parameter-vector order.
    pub fn free_angles(&self) -> &'static [U3Param] {
        match self.param_count {
            2 => &[U3Param::Theta, U3Param::Lambda],
            3 => &[U3Param::Theta, U3Param::Phi, U3Param::Lambda],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum U3Param {
    Theta,
    Phi,
    Lambda,
}

pub fn u3_kernel(theta: f64, phi: f64, lambda: f64) -> [Complex64; 4] {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    let el = Complex64::from_polar(1.0, lambda);
    let ep = Complex64::from_polar(1.0, phi);
    [
        Complex64::new(c, 0.0),
        -el * s,
        ep * s,
        ep * el * c,
    ]
}

pub fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> ComplexMatrix {
    let k = u3_kernel(theta, phi, lambda);
    ComplexMatrix::new(2, 2, k.to_vec()).unwrap()
}

pub fn u3_derivative_kernel(theta: f64, phi: f64, lambda: f64, which: U3Param) -> [Complex64; 4] {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    let el = Complex64::from_polar(1.0, lambda);
    let ep = Complex64::from_polar(1.0, phi);
    let i = Complex64::new(0.0, 1.0);
    match which {
        U3Param::Theta => [
            Complex64::new(-s / 2.0, 0.0),
            -el * (c / 2.0),
            ep * (c / 2.0),
            -ep * el * (s / 2.0),
        ],
        U3Param::Phi => [ZERO, ZERO, i * ep * s, i * ep * el * c],
        U3Param::Lambda => [ZERO, -i * el * s, ZERO, i * ep * el * c],
    }
}

/// Elementwise partial derivative of `u3_matrix` with respect to one angle.
pub fn u3_derivative(theta: f64, phi: f64, lambda: f64, which: U3Param) -> ComplexMatrix {
    let k = u3_derivative_kernel(theta, phi, lambda, which);
    ComplexMatrix::new(2, 2, k.to_vec()).unwrap()
}

pub fn h_kernel() -> [Complex64; 4] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [h, h, h, -h]
}

pub(crate) fn two_qubit_kernel_array(kind: GateKind) -> [Complex64; 16] {
    let mut k = [ZERO; 16];
    match kind {
        GateKind::Cnot => {
            // |c,t>: identity on c=0, X on c=1.
            k[0] = ONE;
            k[5] = ONE;
            k[2 * 4 + 3] = ONE;
            k[3 * 4 + 2] = ONE;
        }
        GateKind::Cz => {
            k[0] = ONE;
            k[5] = ONE;
            k[10] = ONE;
            k[15] = -ONE;
        }
        GateKind::Ch => {
            let h = h_kernel();
            k[0] = ONE;
            k[5] = ONE;
            k[2 * 4 + 2] = h[0];
            k[2 * 4 + 3] = h[1];
            k[3 * 4 + 2] = h[2];
            k[3 * 4 + 3] = h[3];
        }
        _ => unreachable!(),
    }
    k
}

/// 4x4 kernel of a two-qubit controlled gate in the |control,target> basis.
pub fn two_qubit_kernel(kind: GateKind) -> Result<ComplexMatrix> {
    if !kind.is_two_qubit() {
        return Err(Error::Structure(format!(
            "{} is not a two-qubit gate kind",
            kind.name()
        )));
    }
    Ok(ComplexMatrix::new(4, 4, two_qubit_kernel_array(kind).to_vec()).unwrap())
}

/// Dense 2^n x 2^n matrix acting as `gate` on its qubit(s) and as identity
/// elsewhere.
pub fn embed_gate(gate: &Gate, params: &[f64], n_qubits: usize) -> Result<ComplexMatrix> {
    let check = |q: usize| -> Result<()> {
        if q >= n_qubits {
            Err(Error::QubitOutOfRange {
                index: q,
                n_qubits,
            })
        } else {
            Ok(())
        }
    };
    check(gate.target)?;
    if let Some(c) = gate.control {
        check(c)?;
    }
    let mut m = ComplexMatrix::identity(1 << n_qubits);
    gate.apply_left(&mut m, params);
    Ok(m)
}

/// Inverts a 2x2 unitary into u3 parameters and a global phase, so that
/// `e^{i phase} * u3(theta, phi, lambda) = u`. At theta = 0 or pi the
/// (phi, lambda) pair is gauge-degenerate; phi is fixed to 0 there.
pub fn u3_params_from_2x2(u: &ComplexMatrix) -> Result<(f64, f64, f64, f64)> {
    if u.rows() != 2 || u.cols() != 2 {
        return Err(Error::DimensionMismatch(
            "u3 extraction requires a 2x2 matrix".into(),
        ));
    }
    let defect = u.unitarity_defect();
    let tol = 1e-7;
    if defect > tol {
        return Err(Error::NotUnitary { defect, tol });
    }
    let u00 = u[(0, 0)];
    let u01 = u[(0, 1)];
    let u10 = u[(1, 0)];
    let u11 = u[(1, 1)];
    let c = u00.norm();
    let s = u10.norm();
    let theta = 2.0 * s.atan2(c);
    let eps = 1e-12;
    let (phase, phi, lambda) = if s <= eps {
        // theta ~ 0: only the column phases matter.
        let phase = u00.arg();
        (phase, 0.0, u11.arg() - phase)
    } else if c <= eps {
        // theta ~ pi: phi absorbed into lambda.
        let phase = u10.arg();
        (phase, 0.0, (-u01).arg() - phase)
    } else {
        let phase = u00.arg();
        (phase, u10.arg() - phase, (-u01).arg() - phase)
    };
    Ok((theta, wrap_angle(phi), wrap_angle(lambda), phase))
}

fn wrap_angle(a: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut w = a % tau;
    if w < 0.0 {
        w += tau;
    }
    if w >= tau {
        w -= tau;
    }
    w
}
