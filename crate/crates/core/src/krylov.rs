//! Lanczos approximation of `exp(-i t H) v` for Hermitian `H` given as a
//! matrix-free action. Used for the local TDVP updates and for the exact
//! reference propagator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Outcome of a successful Krylov exponential.
#[derive(Clone, Copy, Debug)]
pub struct KrylovInfo {
    pub dim: usize,
    pub error_estimate: f64,
}

/// One Lanczos exponential without substepping. Returns `Err(estimate)` when
/// `kmax` vectors were not enough.
fn expm_single<F>(apply: &mut F, v: &[C64], t: f64, kmax: usize, tol: f64) -> Result<(Vec<C64>, KrylovInfo), f64>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let beta0 = norm(v);
    if beta0 == 0.0 || t == 0.0 {
        return Ok((v.to_vec(), KrylovInfo { dim: 0, error_estimate: 0.0 }));
    }
    let kmax = kmax.min(v.len()).max(1);
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    loop {
        let k = basis.len() - 1;
        let mut w = apply(&basis[k]);
        alpha.push(dot(&basis[k], &w).re);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        let coeffs = tridiagonal_expm_first_column(&alpha, &beta, t);
        let invariant = b < 1e-13 * alpha.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        let estimate = if invariant { 0.0 } else { b * coeffs[m - 1].norm() * beta0 };
        if estimate <= tol || invariant || m == kmax {
            if estimate > tol && !invariant {
                return Err(estimate);
            }
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            for (c, q) in coeffs.iter().zip(&basis) {
                let c = c * beta0;
                out.iter_mut().zip(q).for_each(|(o, qi)| *o += c * qi);
            }
            return Ok((out, KrylovInfo { dim: m, error_estimate: estimate }));
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
}

/// First column of `exp(-i t T)` for the real symmetric tridiagonal `T`.
fn tridiagonal_expm_first_column(alpha: &[f64], beta: &[f64], t: f64) -> Vec<C64> {
    let m = alpha.len();
    let mut tm = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        tm[(i, i)] = alpha[i];
        if i + 1 < m {
            tm[(i, i + 1)] = beta[i];
            tm[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(tm);
    (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let ph = C64::from_polar(1.0, -t * eig.eigenvalues[k]);
                    ph * eig.eigenvectors[(i, k)] * eig.eigenvectors[(0, k)]
                })
                .sum()
        })
        .collect()
}

/// `exp(-i t H) v`. When `kmax` Lanczos vectors do not reach `tol`, the
/// interval is split into halves (up to `max_splits` times) before giving up.
pub fn expm_krylov<F>(
    mut apply: F,
    v: &[C64],
    t: f64,
    kmax: usize,
    tol: f64,
    max_splits: u32,
) -> Result<(Vec<C64>, KrylovInfo), f64>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let mut pieces = 1usize;
    let mut last = f64::INFINITY;
    for _ in 0..=max_splits {
        let dt = t / pieces as f64;
        let mut state = v.to_vec();
        let mut info = KrylovInfo { dim: 0, error_estimate: 0.0 };
        let mut ok = true;
        for _ in 0..pieces {
            match expm_single(&mut apply, &state, dt, kmax, tol / pieces as f64) {
                Ok((next, i)) => {
                    state = next;
                    info.dim = info.dim.max(i.dim);
                    info.error_estimate += i.error_estimate;
                }
                Err(e) => {
                    last = e;
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok((state, info));
        }
        pieces *= 2;
    }
    Err(last)
}
