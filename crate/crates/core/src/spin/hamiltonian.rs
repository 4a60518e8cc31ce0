use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{check_dense_size, SpinChainConfig};
use crate::Result;

#[inline]
fn site_mask(n_sites: usize, site: usize) -> usize {
    1 << (n_sites - 1 - site)
}

#[inline]
fn z_value(state: usize, mask: usize) -> f64 {
    if state & mask == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Diagonal (σ_z) part of the static Hamiltonian:
/// −½ Σ J_n σ_z(n)σ_z(n+1) − ½ h_z Σ σ_z(n), ring closed by J_N.
pub fn static_diagonal(cfg: &SpinChainConfig) -> Vec<f64> {
    let n = cfg.n_sites;
    (0..cfg.dim())
        .map(|s| {
            let mut e = 0.0;
            for site in 0..n {
                let zi = z_value(s, site_mask(n, site));
                let zj = z_value(s, site_mask(n, (site + 1) % n));
                e -= 0.5 * cfg.couplings[site] * zi * zj;
                e -= 0.5 * cfg.hz * zi;
            }
            e
        })
        .collect()
}

/// −½ Σ_n σ_x(n) on `n_sites` spins.
pub fn drive_operator(n_sites: usize) -> DMatrix<f64> {
    let dim = 1usize << n_sites;
    let mut m = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        for site in 0..n_sites {
            m[(s, s ^ site_mask(n_sites, site))] -= 0.5;
        }
    }
    m
}

/// The drive-independent Hamiltonian as a dense real symmetric matrix.
pub fn build_static_hamiltonian(cfg: &SpinChainConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    check_dense_size(cfg.n_sites)?;
    let mut h = drive_operator(cfg.n_sites) * cfg.h1;
    for (s, e) in static_diagonal(cfg).into_iter().enumerate() {
        h[(s, s)] += e;
    }
    Ok(h)
}

/// The operator multiplying h(t): H(t) = H_static + h(t) · D.
pub fn build_drive_operator(cfg: &SpinChainConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    check_dense_size(cfg.n_sites)?;
    Ok(drive_operator(cfg.n_sites))
}

/// Σ_n ⟨ψ|σ_x(n)|ψ⟩ for a state on `amplitudes.len() = 2^N` entries.
pub fn x_magnetization(amplitudes: &[Complex64]) -> f64 {
    let dim = amplitudes.len();
    let mut total = 0.0;
    let mut mask = 1;
    while mask < dim {
        let mut block = 0;
        while block < dim {
            for i in block..block + mask {
                let a = amplitudes[i];
                let b = amplitudes[i | mask];
                total += a.re * b.re + a.im * b.im;
            }
            block += 2 * mask;
        }
        mask <<= 1;
    }
    2.0 * total
}
