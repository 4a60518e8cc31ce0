use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{build_static_hamiltonian, drive_operator, QuantumState, SpinChainConfig};
use crate::{Error, Result};

/// Differences below this are treated as degenerate levels.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Ascending eigenvalues of the static Hamiltonian.
    pub eigenvalues: Vec<f64>,
    /// ω_kl = E_k − E_l over every pair with E_k > E_l, ascending.
    pub transition_frequencies: Vec<f64>,
}

/// Spectrum and transition frequencies of an arbitrary real symmetric matrix.
pub fn spectrum_of(h: &DMatrix<f64>) -> Result<SpectralData> {
    if h.nrows() != h.ncols() || h.nrows() == 0 {
        return Err(Error::Shape(format!(
            "Hamiltonian must be square, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let mut eigenvalues: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    eigenvalues.sort_by(f64::total_cmp);
    let scale = eigenvalues
        .iter()
        .fold(1.0f64, |acc, e| acc.max(e.abs()));
    let tol = DEGENERACY_TOL * scale;

    let mut transition_frequencies = Vec::new();
    for (l, el) in eigenvalues.iter().enumerate() {
        for ek in &eigenvalues[l + 1..] {
            let w = ek - el;
            if w > tol {
                transition_frequencies.push(w);
            }
        }
    }
    transition_frequencies.sort_by(f64::total_cmp);
    Ok(SpectralData {
        eigenvalues,
        transition_frequencies,
    })
}

/// Full spectrum of the static Hamiltonian and its transition frequencies.
pub fn transition_spectrum(cfg: &SpinChainConfig) -> Result<SpectralData> {
    spectrum_of(&build_static_hamiltonian(cfg)?)
}

/// Initial state: the ε → 0⁺ limit of the lowest eigenvector of
/// H_static − ε Σ σ_x(n).
///
/// The result is an exact eigenvector of H_static, so it is stationary under
/// zero drive. The ε term only decides between degenerate ground states:
///
/// * when H_static commutes with the global spin flip (h_z = 0) the two
///   flip-parity sectors are diagonalised separately and the even sector wins
///   ties (in the degenerate ferromagnet the splitting is of order ε^N, far
///   below what a dense solve can resolve);
/// * any degeneracy left within the chosen block is lifted at first order by
///   diagonalising −Σ σ_x inside it.
pub fn ground_state(cfg: &SpinChainConfig) -> Result<QuantumState> {
    let h = build_static_hamiltonian(cfg)?;
    let dim = cfg.dim();

    let (energy, vector) = if cfg.flip_symmetric() {
        let even = lowest_in_sector(&h, cfg.n_sites, 1.0)?;
        let odd = lowest_in_sector(&h, cfg.n_sites, -1.0)?;
        let tol = DEGENERACY_TOL * even.0.abs().max(1.0);
        if odd.0 < even.0 - tol {
            odd
        } else {
            even
        }
    } else {
        let eig = solve(h.clone())?;
        let (e, basis) = ground_manifold(&eig);
        (e, lift_degeneracy(basis, cfg.n_sites))
    };

    let residual = (&h * &vector - &vector * energy).norm();
    if !(residual <= 1e-8) {
        return Err(Error::Eigen(format!(
            "ground-state residual {residual:.3e} exceeds 1e-8"
        )));
    }
    let norm = vector.norm();
    let amplitudes = (0..dim)
        .map(|s| Complex64::new(vector[s] / norm, 0.0))
        .collect();
    Ok(QuantumState { amplitudes })
}

fn solve(h: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))
}

/// Lowest eigenvalue and an orthonormal basis of its eigenspace.
fn ground_manifold(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> (f64, Vec<DVector<f64>>) {
    let e0 = eig.eigenvalues.min();
    let tol = DEGENERACY_TOL * e0.abs().max(1.0);
    let basis = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, e)| **e <= e0 + tol)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    (e0, basis)
}

/// Picks the combination of degenerate vectors with the lowest ⟨−Σσ_x⟩.
fn lift_degeneracy(basis: Vec<DVector<f64>>, n_sites: usize) -> DVector<f64> {
    if basis.len() == 1 {
        return basis.into_iter().next().expect("one vector");
    }
    let d = drive_operator(n_sites);
    let k = basis.len();
    let p = DMatrix::from_fn(k, k, |i, j| basis[i].dot(&(&d * &basis[j])));
    let eig = SymmetricEigen::new(p);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let coeffs = eig.eigenvectors.column(idx);
    basis
        .iter()
        .zip(coeffs.iter())
        .fold(DVector::zeros(basis[0].len()), |acc, (v, c)| acc + v * *c)
}

/// Ground state within the flip-parity sector `parity` (±1), expanded back to
/// the full basis.
fn lowest_in_sector(h: &DMatrix<f64>, n_sites: usize, parity: f64) -> Result<(f64, DVector<f64>)> {
    let dim = 1usize << n_sites;
    let half = dim / 2;
    let all = dim - 1;
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // Representatives have the top bit (site 1) clear.
    let sector = DMatrix::from_fn(half, half, |a, b| h[(a, b)] + parity * h[(a, b ^ all)]);
    let eig = solve(sector)?;
    let (e, basis) = ground_manifold(&eig);
    let expand = |v: &DVector<f64>| {
        let mut full = DVector::zeros(dim);
        for a in 0..half {
            full[a] = v[a] * scale;
            full[a ^ all] = parity * v[a] * scale;
        }
        full
    };
    let full: Vec<DVector<f64>> = basis.iter().map(expand).collect();
    Ok((e, lift_degeneracy(full, n_sites)))
}
