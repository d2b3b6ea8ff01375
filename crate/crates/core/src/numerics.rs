//! Dense complex linear algebra, seeded random unitary generation, and the
//! distance metrics used by every other module.
//!
//! Matrices are row-major `Complex64` buffers. Everything here is sized for
//! registers of at most six qubits (64x64), so dense algorithms are used
//! throughout and exact SVD beats iterative methods.

use std::fmt;
use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use nalgebra::DMatrix;
pub use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense square or rectangular complex matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^dag` computed from rows of both operands.
    pub fn matmul_dagger(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by dagger of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, b) in a_row.iter().zip(b_row.iter()) {
                    acc += a * b.conj();
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, c: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e * c).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("subtraction shapes differ".into()));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Tensor product with `other`; `self` occupies the high-order qubits.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for ra in 0..self.rows {
            for ca in 0..self.cols {
                let a = self[(ra, ca)];
                for rb in 0..other.rows {
                    for cb in 0..other.cols {
                        out[(ra * other.rows + rb, ca * other.cols + cb)] = a * other[(rb, cb)];
                    }
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_entry_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    /// max |(A^dag A - I)_{ij}| -- zero for exactly unitary matrices.
    pub fn unitarity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.cols {
            for j in 0..self.cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..self.rows {
                    acc += self[(k, i)].conj() * self[(k, j)];
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.unitarity_defect() <= tol
    }

    /// Left-multiplies by a single-qubit gate embedded on `qubit`:
    /// `self <- (I (x) k (x) I) * self`. Kernel layout is row-major 2x2.
    pub fn apply_1q_left(&mut self, k: &[Complex64; 4], qubit: usize) {
        let e = 1usize << qubit;
        for r0 in 0..self.rows {
            if r0 & e != 0 {
                continue;
            }
            let r1 = r0 | e;
            for c in 0..self.cols {
                let t0 = self[(r0, c)];
                let t1 = self[(r1, c)];
                self[(r0, c)] = k[0] * t0 + k[1] * t1;
                self[(r1, c)] = k[2] * t0 + k[3] * t1;
            }
        }
    }

    /// Right-multiplies by an embedded single-qubit gate: `self <- self * (I (x) k (x) I)`.
    pub fn apply_1q_right(&mut self, k: &[Complex64; 4], qubit: usize) {
        let e = 1usize << qubit;
        for r in 0..self.rows {
            let row = self.row_mut(r);
            for c0 in 0..row.len() {
                if c0 & e != 0 {
                    continue;
                }
                let c1 = c0 | e;
                let t0 = row[c0];
                let t1 = row[c1];
                row[c0] = t0 * k[0] + t1 * k[2];
                row[c1] = t0 * k[1] + t1 * k[3];
            }
        }
    }

    /// Left-multiplies by an embedded two-qubit kernel (row-major 4x4 in the
    /// |control,target> basis).
    pub fn apply_2q_left(&mut self, k: &[Complex64; 16], control: usize, target: usize) {
        let ec = 1usize << control;
        let et = 1usize << target;
        for base in 0..self.rows {
            if base & ec != 0 || base & et != 0 {
                continue;
            }
            let idx = [base, base | et, base | ec, base | ec | et];
            for c in 0..self.cols {
                let t = [
                    self[(idx[0], c)],
                    self[(idx[1], c)],
                    self[(idx[2], c)],
                    self[(idx[3], c)],
                ];
                for (row_out, &i_out) in idx.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (row_in, &tv) in t.iter().enumerate() {
                        acc += k[row_out * 4 + row_in] * tv;
                    }
                    self[(i_out, c)] = acc;
                }
            }
        }
    }

    /// Right-multiplies by an embedded two-qubit kernel.
    pub fn apply_2q_right(&mut self, k: &[Complex64; 16], control: usize, target: usize) {
        let ec = 1usize << control;
        let et = 1usize << target;
        for r in 0..self.rows {
            for base in 0..self.cols {
                if base & ec != 0 || base & et != 0 {
                    continue;
                }
                let idx = [base, base | et, base | ec, base | ec | et];
                let t = [
                    self[(r, idx[0])],
                    self[(r, idx[1])],
                    self[(r, idx[2])],
                    self[(r, idx[3])],
                ];
                for (col_out, &c_out) in idx.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (col_in, &tv) in t.iter().enumerate() {
                        acc += tv * k[col_in * 4 + col_out];
                    }
                    self[(r, c_out)] = acc;
                }
            }
        }
    }

    /// Left-multiplies by an embedded CNOT (pure row swaps).
    pub fn apply_cnot_left(&mut self, control: usize, target: usize) {
        let ec = 1usize << control;
        let et = 1usize << target;
        for r in 0..self.rows {
            if r & ec != 0 && r & et == 0 {
                let partner = r | et;
                for c in 0..self.cols {
                    let tmp = self[(r, c)];
                    self[(r, c)] = self[(partner, c)];
                    self[(partner, c)] = tmp;
                }
            }
        }
    }

    /// Right-multiplies by an embedded CNOT (pure column swaps).
    pub fn apply_cnot_right(&mut self, control: usize, target: usize) {
        let ec = 1usize << control;
        let et = 1usize << target;
        for r in 0..self.rows {
            let row = self.row_mut(r);
            for c in 0..row.len() {
                if c & ec != 0 && c & et == 0 {
                    row.swap(c, c | et);
                }
            }
        }
    }

    /// Embedded CZ is diagonal, so left and right application coincide.
    pub fn apply_cz(&mut self, control: usize, target: usize, from_left: bool) {
        let ec = 1usize << control;
        let et = 1usize << target;
        if from_left {
            for r in 0..self.rows {
                if r & ec != 0 && r & et != 0 {
                    for c in 0..self.cols {
                        self[(r, c)] = -self[(r, c)];
                    }
                }
            }
        } else {
            for r in 0..self.rows {
                let row = self.row_mut(r);
                for (c, v) in row.iter_mut().enumerate() {
                    if c & ec != 0 && c & et != 0 {
                        *v = -*v;
                    }
                }
            }
        }
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    fn from_nalgebra(m: &DMatrix<Complex64>) -> ComplexMatrix {
        ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.entries[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let v = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Seeded, reproducible random stream. ChaCha20 keyed by the 64-bit seed, so
/// identical seeds reproduce identical sequences bit-for-bit on any platform.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `tag` (used for per-trial streams).
    pub fn derive(&self, tag: u64) -> RandomSource {
        RandomSource::new(splitmix64(self.seed.wrapping_add(splitmix64(tag))))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Haar-distributed random unitary on `n_qubits`, by QR factorization of a
/// complex Ginibre matrix with the R diagonal phase-normalized.
pub fn haar_random_unitary(n_qubits: usize, rng: &mut RandomSource) -> Result<ComplexMatrix> {
    if !(1..=6).contains(&n_qubits) {
        return Err(Error::UnsupportedQubitCount(
            n_qubits,
            "random unitary generation supports 1..=6 qubits".into(),
        ));
    }
    let d = 1usize << n_qubits;
    let norm = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re = rng.standard_normal();
            let im = rng.standard_normal();
            g[(i, j)] = Complex64::new(re * norm, im * norm);
        }
    }
    let qr = g.to_nalgebra().qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = ComplexMatrix::from_nalgebra(&q);
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 {
            diag / diag.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    Ok(u)
}

/// Tr(u^dag v) without forming the product.
pub fn trace_dagger_product(u: &ComplexMatrix, v: &ComplexMatrix) -> Complex64 {
    u.entries
        .iter()
        .zip(v.entries.iter())
        .map(|(a, b)| a.conj() * b)
        .sum()
}

/// Phase-invariant normalized Frobenius-type distance `1 - |Tr(u^dag v)| / rows`.
pub fn frobenius_distance(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.rows != v.rows || u.cols != v.cols {
        return Err(Error::DimensionMismatch(
            "frobenius_distance requires equal shapes".into(),
        ));
    }
    Ok(1.0 - trace_dagger_product(u, v).norm() / u.rows as f64)
}

/// Largest singular value, by full SVD.
pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    let svd = m.to_nalgebra().svd(false, false);
    svd.singular_values.iter().cloned().fold(0.0, f64::max)
}

/// min over a global phase of `||u - e^{i phi} v||_2`. The optimal phase is
/// read from Tr(u^dag v) when the trace is nonzero; otherwise the phase is
/// grid-searched over 1024 points.
pub fn spectral_error(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if !u.is_square() || !v.is_square() {
        return Err(Error::DimensionMismatch(
            "spectral_error requires square matrices".into(),
        ));
    }
    if u.rows != v.rows {
        return Err(Error::DimensionMismatch(
            "spectral_error requires equal shapes".into(),
        ));
    }
    let t = trace_dagger_product(u, v);
    if t.norm() > 1e-12 {
        let phase = Complex64::from_polar(1.0, -t.arg());
        let diff = u.sub(&v.scale(phase))?;
        Ok(spectral_norm(&diff))
    } else {
        let mut best = f64::INFINITY;
        for k in 0..1024 {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / 1024.0;
            let diff = u.sub(&v.scale(Complex64::from_polar(1.0, phi)))?;
            best = best.min(spectral_norm(&diff));
        }
        Ok(best)
    }
}

/// Nearest unitary in Frobenius norm (polar factor via SVD).
pub fn closest_unitary(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let svd = m.to_nalgebra().svd(true, true);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Linalg("SVD did not produce U".into()))?;
    let vt = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Linalg("SVD did not produce V^H".into()))?;
    let polar = u * vt;
    Ok(ComplexMatrix::from_nalgebra(&polar))
}

/// Serializes a matrix in the `.umat` format: a `rows cols` header line, then
/// row-major `re,im` tokens with 17 significant digits (exact f64 round trip).
pub fn umat_to_string(m: &ComplexMatrix) -> String {
    let mut out = format!("{} {}\n", m.rows, m.cols);
    for i in 0..m.rows {
        let mut line = String::new();
        for j in 0..m.cols {
            if j > 0 {
                line.push(' ');
            }
            let v = m[(i, j)];
            line.push_str(&format!("{:.16e},{:.16e}", v.re, v.im));
        }
        line.push('\n');
        out.push_str(&line);
    }
    out
}

pub fn parse_umat(src: &str) -> Result<ComplexMatrix> {
    let mut tokens = src.split_whitespace();
    let rows: usize = tokens
        .next()
        .ok_or_else(|| Error::Parse("empty .umat input".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad row count: {e}")))?;
    let cols: usize = tokens
        .next()
        .ok_or_else(|| Error::Parse(".umat header missing column count".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad column count: {e}")))?;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse(".umat dimensions must be positive".into()));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for k in 0..rows * cols {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {} entries, got {k}", rows * cols)))?;
        let (re, im) = tok
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("entry {k} is not `re,im`: {tok}")))?;
        let re: f64 = re
            .parse()
            .map_err(|e| Error::Parse(format!("entry {k} real part: {e}")))?;
        let im: f64 = im
            .parse()
            .map_err(|e| Error::Parse(format!("entry {k} imag part: {e}")))?;
        entries.push(Complex64::new(re, im));
    }
    if tokens.next().is_some() {
        return Err(Error::Parse("trailing data after final .umat entry".into()));
    }
    ComplexMatrix::new(rows, cols, entries)
}

pub fn write_umat(m: &ComplexMatrix, path: &Path) -> Result<()> {
    fs::write(path, umat_to_string(m))?;
    Ok(())
}

pub fn read_umat(path: &Path) -> Result<ComplexMatrix> {
    let src = fs::read_to_string(path)?;
    parse_umat(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::new(
            2,
            2,
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap()
    }

    fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::new(
            2,
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-1.0, 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn matmul_identity_passthrough() {
        let mut rng = RandomSource::new(7);
        let m = haar_random_unitary(2, &mut rng).unwrap();
        let id = ComplexMatrix::identity(4);
        let prod = id.matmul(&m).unwrap();
        assert!(prod.sub(&m).unwrap().max_entry_norm() == 0.0);
    }

    #[test]
    fn pauli_x_squares_to_identity() {
        let x = pauli_x();
        let prod = x.matmul(&x).unwrap();
        assert!(prod.sub(&ComplexMatrix::identity(2)).unwrap().max_entry_norm() < 1e-15);
    }

    #[test]
    fn matmul_dimension_mismatch_errors() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn dagger_involution_and_unitarity() {
        let mut rng = RandomSource::new(11);
        let u = haar_random_unitary(3, &mut rng).unwrap();
        let back = u.dagger().dagger();
        assert!(back.sub(&u).unwrap().max_entry_norm() == 0.0);
        let prod = u.dagger().matmul(&u).unwrap();
        assert!(prod.sub(&ComplexMatrix::identity(8)).unwrap().max_entry_norm() <= 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary_and_deterministic() {
        let mut rng = RandomSource::new(42);
        let u1 = haar_random_unitary(2, &mut rng).unwrap();
        assert!(u1.unitarity_defect() <= 1e-12);
        let mut rng2 = RandomSource::new(42);
        let u2 = haar_random_unitary(2, &mut rng2).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn haar_rejects_out_of_range() {
        let mut rng = RandomSource::new(1);
        assert!(haar_random_unitary(0, &mut rng).is_err());
        assert!(haar_random_unitary(7, &mut rng).is_err());
    }

    #[test]
    fn haar_first_entry_moment() {
        // E|U_00|^2 = 1/2 for 2x2 Haar; Monte-Carlo over 1e4 samples.
        let mut rng = RandomSource::new(1234);
        let samples = 10_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let u = haar_random_unitary(1, &mut rng).unwrap();
            acc += u[(0, 0)].norm_sqr();
        }
        let mean = acc / samples as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn frobenius_distance_cases() {
        let mut rng = RandomSource::new(3);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        assert!(frobenius_distance(&u, &u).unwrap().abs() <= 1e-14);
        let phased = u.scale(Complex64::from_polar(1.0, 1.234));
        assert!(frobenius_distance(&u, &phased).unwrap().abs() <= 1e-14);
        let d = frobenius_distance(&ComplexMatrix::identity(2), &pauli_x()).unwrap();
        assert!((d - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn spectral_error_cases() {
        let mut rng = RandomSource::new(5);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        assert!(spectral_error(&u, &u).unwrap() <= 1e-12);
        let phased = u.scale(Complex64::from_polar(1.0, 0.7));
        assert!(spectral_error(&u, &phased).unwrap() <= 1e-12);
        // Tr(Z) = 0 exercises the grid-search branch; the minimum is sqrt(2).
        let e = spectral_error(&ComplexMatrix::identity(2), &pauli_z()).unwrap();
        assert!((e - 2f64.sqrt()).abs() <= 1e-9, "e = {e}");
    }

    #[test]
    fn spectral_error_shape_errors() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(spectral_error(&a, &b).is_err());
        let c = ComplexMatrix::identity(2);
        let d = ComplexMatrix::identity(4);
        assert!(spectral_error(&c, &d).is_err());
    }

    #[test]
    fn umat_round_trip_is_exact() {
        let mut rng = RandomSource::new(77);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let text = umat_to_string(&u);
        let back = parse_umat(&text).unwrap();
        assert_eq!(u, back);
    }

    #[test]
    fn umat_rejects_malformed_input() {
        assert!(parse_umat("").is_err());
        assert!(parse_umat("2 2\n1,0 0,0 0,0").is_err());
        assert!(parse_umat("1 1\n1.0").is_err());
        assert!(parse_umat("1 1\n1,0 extra,0").is_err());
    }

    #[test]
    fn closest_unitary_projects() {
        let mut rng = RandomSource::new(9);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let perturbed = u.scale(Complex64::new(1.01, 0.0));
        let proj = closest_unitary(&perturbed).unwrap();
        assert!(proj.unitarity_defect() <= 1e-12);
        assert!(spectral_error(&proj, &u).unwrap() <= 1e-10);
    }

    #[test]
    fn derived_streams_are_stable() {
        let a = RandomSource::new(1).derive(3);
        let b = RandomSource::new(1).derive(3);
        assert_eq!(a.seed(), b.seed());
        assert_ne!(RandomSource::new(1).derive(4).seed(), a.seed());
    }
}
