//! Independent oracles for the integration and acceptance suites. These
//! deliberately avoid the library's optimized code paths: plain scalar loops
//! and a self-contained Jacobi SVD, so disagreements point at real defects.

#![allow(dead_code)]

use unitary_synth::numerics::{Complex64, ComplexMatrix, RandomSource};

/// Reference triple-loop matrix product.
pub fn naive_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = ComplexMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..a.cols() {
                acc += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Central finite differences of a scalar function.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut pt = x.to_vec();
    for i in 0..x.len() {
        pt[i] = x[i] + h;
        let fp = f(&pt);
        pt[i] = x[i] - h;
        let fm = f(&pt);
        pt[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// Relative L2 deviation between an analytic gradient and its oracle.
pub fn gradient_rel_error(analytic: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    let diff: f64 = analytic
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

/// Literal four-nested-loop implementation of the block-proportionality cost:
/// sum over ordered block pairs (i,j),(p,q) of |(B_ij B_pq^dag - kappa I)_lm|^2
/// with kappa the upper-left entry of the product. Index arithmetic is done
/// inline so this shares nothing with the library's partition/matmul helpers.
pub fn brute_force_separability(u: &ComplexMatrix) -> f64 {
    let d = u.rows();
    assert_eq!(d % 2, 0);
    let h = d / 2;
    let block = |bi: usize, bj: usize, r: usize, c: usize| u[(bi * h + r, bj * h + c)];
    let mut total = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    // product[l][m] = sum_k B_ij[l,k] * conj(B_pq[m,k])
                    let prod = |l: usize, m: usize| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for k in 0..h {
                            acc += block(i, j, l, k) * block(p, q, m, k).conj();
                        }
                        acc
                    };
                    let kappa = prod(0, 0);
                    for l in 0..h {
                        for m in 0..h {
                            let mut v = prod(l, m);
                            if l == m {
                                v -= kappa;
                            }
                            total += v.norm_sqr();
                        }
                    }
                }
            }
        }
    }
    total
}

/// Singular values by one-sided complex Jacobi: rotate column pairs until all
/// are mutually orthogonal, then read off the column norms. Descending order.
pub fn jacobi_singular_values(a: &ComplexMatrix) -> Vec<f64> {
    let rows = a.rows();
    let cols = a.cols();
    let mut m = a.clone();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = Complex64::new(0.0, 0.0);
                for r in 0..rows {
                    let up = m[(r, p)];
                    let uq = m[(r, q)];
                    alpha += up.norm_sqr();
                    beta += uq.norm_sqr();
                    gamma += up.conj() * uq;
                }
                let scale = (alpha * beta).sqrt();
                if scale <= 0.0 || gamma.norm() <= 1e-15 * scale {
                    continue;
                }
                off = off.max(gamma.norm() / scale);
                // 2x2 Hermitian [[alpha, gamma], [conj(gamma), beta]]:
                // complex Jacobi rotation zeroing the off-diagonal.
                let phase = gamma / gamma.norm();
                let tau = (beta - alpha) / (2.0 * gamma.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let up = m[(r, p)];
                    let uq = m[(r, q)];
                    m[(r, p)] = c * up - s * phase * uq;
                    m[(r, q)] = s * phase.conj() * up + c * uq;
                }
            }
        }
        if off <= 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols)
        .map(|j| {
            (0..rows)
                .map(|r| m[(r, j)].norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Largest singular value via the Jacobi oracle.
pub fn oracle_spectral_norm(a: &ComplexMatrix) -> f64 {
    jacobi_singular_values(a)[0]
}

/// Gaussian matrix with entries scaled to keep block products O(1).
pub fn random_general_matrix(dim: usize, rng: &mut RandomSource) -> ComplexMatrix {
    let scale = 1.0 / (2.0 * dim as f64).sqrt();
    ComplexMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(
            rng.standard_normal() * scale,
            rng.standard_normal() * scale,
        )
    })
}

/// Median of a sample (not in-place).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
