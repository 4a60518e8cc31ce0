//! Reference implementations used only by tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use optics_tcn::spin::{Drive, SpinChainConfig};

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Single-site operator `op` on `site` of `n` spins, site 0 leftmost.
fn embed(op: &DMatrix<f64>, site: usize, n: usize) -> DMatrix<f64> {
    let id = DMatrix::<f64>::identity(2, 2);
    let mut m = DMatrix::<f64>::identity(1, 1);
    for s in 0..n {
        m = kron(&m, if s == site { op } else { &id });
    }
    m
}

pub fn pauli_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

/// Σ σ_x(n) built from Kronecker products.
pub fn sum_x(n: usize) -> DMatrix<f64> {
    (0..n).fold(DMatrix::zeros(1 << n, 1 << n), |acc, s| acc + embed(&pauli_x(), s, n))
}

/// Static Hamiltonian assembled term by term from Kronecker products.
pub fn dense_static(cfg: &SpinChainConfig) -> DMatrix<f64> {
    let n = cfg.n_sites;
    let mut h = DMatrix::zeros(1 << n, 1 << n);
    for s in 0..n {
        let zz = embed(&pauli_z(), s, n) * embed(&pauli_z(), (s + 1) % n, n);
        h -= zz * (0.5 * cfg.couplings[s]);
        h -= embed(&pauli_z(), s, n) * (0.5 * cfg.hz);
    }
    h - sum_x(n) * (0.5 * cfg.h1)
}

fn expect(op: &DMatrix<f64>, psi: &[Complex64]) -> f64 {
    let mut e = 0.0;
    for i in 0..psi.len() {
        for j in 0..psi.len() {
            e += op[(i, j)] * (psi[i].conj() * psi[j]).re;
        }
    }
    e
}

/// exp(−i H τ) ψ through a dense eigendecomposition.
fn apply_exp(h: DMatrix<f64>, tau: f64, psi: &[Complex64]) -> Vec<Complex64> {
    let eig = SymmetricEigen::new(h);
    let v = &eig.eigenvectors;
    let dim = psi.len();
    let mut coeff = vec![Complex64::default(); dim];
    for k in 0..dim {
        let mut c = Complex64::default();
        for i in 0..dim {
            c += psi[i] * v[(i, k)];
        }
        coeff[k] = c * Complex64::from_polar(1.0, -eig.eigenvalues[k] * tau);
    }
    (0..dim)
        .map(|i| (0..dim).map(|k| coeff[k] * v[(i, k)]).sum())
        .collect()
}

/// Magnetization trace from piecewise-constant midpoint Hamiltonians on
/// `substeps` equal pieces per sample interval.
pub fn midpoint_trace(
    cfg: &SpinChainConfig,
    dt: f64,
    t_steps: usize,
    drive: &Drive,
    psi0: &[Complex64],
    substeps: usize,
) -> Vec<f64> {
    let h0 = dense_static(cfg);
    let x = sum_x(cfg.n_sites);
    let d = &x * -0.5;
    let tau = dt / substeps as f64;
    let mut psi = psi0.to_vec();
    let mut out = vec![expect(&x, &psi)];
    for k in 1..t_steps {
        let t0 = (k - 1) as f64 * dt;
        for s in 0..substeps {
            let mid = t0 + (s as f64 + 0.5) * tau;
            psi = apply_exp(&h0 + &d * drive.at(mid), tau, &psi);
        }
        out.push(expect(&x, &psi));
    }
    out
}

/// Richardson-extrapolated midpoint trace; the midpoint rule has an error
/// expansion in even powers of the substep.
pub fn reference_trace(
    cfg: &SpinChainConfig,
    dt: f64,
    t_steps: usize,
    drive: &Drive,
    psi0: &[Complex64],
    substeps: usize,
) -> Vec<f64> {
    let coarse = midpoint_trace(cfg, dt, t_steps, drive, psi0, substeps);
    let fine = midpoint_trace(cfg, dt, t_steps, drive, psi0, 2 * substeps);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}
