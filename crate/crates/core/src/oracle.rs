//! Exact reference dynamics on a uniformly truncated Fock space: a
//! matrix-free Hamiltonian, exactly prepared initial states and Lanczos
//! propagation, plus trajectory comparison reports.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::krylov::expm_krylov;
use crate::model::{InitialKind, InitialStateSpec};
use crate::spectral::{displacement_to_chain, ChainSystem};

/// Default upper bound on the Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4_000_000;

const CHUNK: usize = 1 << 14;

/// Spin ⊗ `n_bosons` chain sites, each truncated to `d` Fock levels. Basis
/// index: spin most significant, then chain site 0, 1, ...; spin index 0 is
/// `|↑⟩`.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub n_bosons: usize,
    pub d: usize,
    pub dim: usize,
    delta: f64,
    c0: f64,
    hop: Vec<f64>,
    /// `strides[k] = d^(n_bosons - 1 - k)`.
    strides: Vec<usize>,
    diag: Vec<f64>,
}

impl DenseSystem {
    /// Spin–boson Hamiltonian on the first `n_bosons` sites of `chain`.
    pub fn new(delta: f64, chain: &ChainSystem, n_bosons: usize, d: usize, cap: usize) -> Result<Self> {
        if n_bosons == 0 || n_bosons > chain.n_sites() {
            return Err(Error::Domain(format!("need 1 <= n_bosons <= {}, got {n_bosons}", chain.n_sites())));
        }
        if d < 2 {
            return Err(Error::Domain(format!("Fock cutoff must be >= 2, got {d}")));
        }
        let dim = (d as u128).checked_pow(n_bosons as u32).map(|x| 2 * x);
        let dim = match dim {
            Some(x) if x <= cap as u128 => x as usize,
            _ => return Err(Error::Domain(format!("dimension 2*{d}^{n_bosons} exceeds the cap {cap}"))),
        };
        let strides: Vec<usize> = (0..n_bosons).map(|k| d.pow((n_bosons - 1 - k) as u32)).collect();
        let eps = chain.eps[..n_bosons].to_vec();
        let half = dim / 2;
        let mut diag = vec![0.0; dim];
        diag.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            for (j, x) in out.iter_mut().enumerate() {
                let i = c * CHUNK + j;
                let (spin, mut rest) = (i / half, i % half);
                let mut e = if spin == 0 { 0.5 * delta } else { -0.5 * delta };
                for (k, &s) in strides.iter().enumerate() {
                    e += eps[k] * (rest / s) as f64;
                    rest %= s;
                }
                *x = e;
            }
        });
        Ok(Self { n_bosons, d, dim, delta, c0: chain.c0, hop: chain.hop[..n_bosons - 1].to_vec(), strides, diag })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn digits(&self, mut rest: usize, out: &mut [usize]) {
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = rest / s;
            rest %= s;
        }
    }

    /// `H x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        let half = self.dim / 2;
        let nb = self.n_bosons;
        let s0 = self.strides[0];
        let g = 0.5 * self.c0;
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let start = c * CHUNK;
            let mut n = vec![0usize; nb];
            self.digits(start % half, &mut n);
            for (j, yi) in out.iter_mut().enumerate() {
                let i = start + j;
                if j > 0 {
                    if i.is_multiple_of(half) {
                        n.iter_mut().for_each(|x| *x = 0);
                    } else {
                        // odometer increment, last site fastest
                        let mut k = nb - 1;
                        loop {
                            n[k] += 1;
                            if n[k] < self.d {
                                break;
                            }
                            n[k] = 0;
                            k -= 1;
                        }
                    }
                }
                let mut acc = self.diag[i] * x[i];
                // σ_x (b_0 + b_0†): flip the spin, move one quantum on site 0
                let f = if i < half { i + half } else { i - half };
                if n[0] > 0 {
                    acc += g * (n[0] as f64).sqrt() * x[f - s0];
                }
                if n[0] + 1 < self.d {
                    acc += g * ((n[0] + 1) as f64).sqrt() * x[f + s0];
                }
                for (k, &t) in self.hop.iter().enumerate() {
                    let (a, b) = (n[k], n[k + 1]);
                    let (sa, sb) = (self.strides[k], self.strides[k + 1]);
                    // b_k† b_{k+1}: source has one less on k, one more on k+1
                    if a > 0 && b + 1 < self.d {
                        acc += t * ((a * (b + 1)) as f64).sqrt() * x[i - sa + sb];
                    }
                    if b > 0 && a + 1 < self.d {
                        acc += t * (((a + 1) * b) as f64).sqrt() * x[i + sa - sb];
                    }
                }
                *yi = acc;
            }
        });
        y
    }

    /// `|spin⟩ ⊗ |0…0⟩`.
    pub fn spin_vacuum(&self, spin: [C64; 2]) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.dim];
        v[0] = spin[0];
        v[self.dim / 2] = spin[1];
        v
    }

    /// `-i·(σ_x ⊗ Σ_k μ_k (b_k† - b_k))`, Hermitian, so that
    /// `exp(-i·1·G) = exp(-σ_x Σ μ_k (b_k† - b_k))`.
    fn apply_polaron_generator(&self, mu: &[f64], x: &[C64]) -> Vec<C64> {
        let half = self.dim / 2;
        let mi = C64::new(0.0, -1.0);
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let mut n = vec![0usize; self.n_bosons];
            for (j, yi) in out.iter_mut().enumerate() {
                let i = c * CHUNK + j;
                self.digits(i % half, &mut n);
                let f = if i < half { i + half } else { i - half };
                let mut acc = C64::new(0.0, 0.0);
                for (k, &m) in mu.iter().enumerate() {
                    let s = self.strides[k];
                    // b†: source one lower; -b: source one higher
                    if n[k] > 0 {
                        acc += m * (n[k] as f64).sqrt() * x[f - s];
                    }
                    if n[k] + 1 < self.d {
                        acc -= m * ((n[k] + 1) as f64).sqrt() * x[f + s];
                    }
                }
                *yi = mi * acc;
            }
        });
        y
    }

    /// `⟨σ_z⟩`.
    pub fn sigma_z(&self, v: &[C64]) -> f64 {
        let half = self.dim / 2;
        let up: f64 = v[..half].iter().map(|z| z.norm_sqr()).sum();
        let down: f64 = v[half..].iter().map(|z| z.norm_sqr()).sum();
        up - down
    }

    /// `⟨σ_x⟩`.
    pub fn sigma_x(&self, v: &[C64]) -> f64 {
        let half = self.dim / 2;
        2.0 * v[..half].iter().zip(&v[half..]).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
    }

    pub fn energy(&self, v: &[C64]) -> f64 {
        dot(v, &self.apply(v)).re
    }

    /// `exp(-iHt) v` with Lanczos substeps of at most `max_step`.
    pub fn propagate(&self, v: &[C64], t: f64, tol: f64, max_step: f64) -> Result<Vec<C64>> {
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        let pieces = (t.abs() / max_step).ceil().max(1.0) as usize;
        let h = t / pieces as f64;
        let mut cur = v.to_vec();
        for _ in 0..pieces {
            cur = expm_krylov(|x| self.apply(x), &cur, h, KRYLOV_DIM, tol / pieces as f64, 8)
                .map_err(|estimate| Error::KrylovNonConvergence { site: 0, estimate })?
                .0;
        }
        Ok(cur)
    }
}

const KRYLOV_DIM: usize = 24;

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.par_iter().zip(b.par_iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.par_iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `1 - Σ_{n<d} e^{-μ²} μ^{2n}/n!`, the weight of a coherent state beyond
/// the cutoff.
fn coherent_tail(mu: f64, d: usize) -> f64 {
    let x = mu * mu;
    let mut term = (-x).exp();
    let mut sum = 0.0;
    for n in 0..d {
        if n > 0 {
            term *= x / n as f64;
        }
        sum += term;
    }
    (1.0 - sum).max(0.0)
}

/// Initial state in the truncated basis. Displaced states are produced by
/// exponentiating the polaron generator on the truncated space; the
/// truncation deficit must stay below `1e-8`.
pub fn dense_state(spec: &InitialStateSpec, chain: &ChainSystem, sys: &DenseSystem) -> Result<Vec<C64>> {
    let up = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let down = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let (spin, sign) = match spec.kind {
        InitialKind::BareBath => return Ok(sys.spin_vacuum(up)),
        InitialKind::PhysicalBath => (up, 1.0),
        InitialKind::CoherencePlus => (down, 1.0),
    };
    let ut = spec.ut.as_ref().ok_or_else(|| Error::Domain(format!("{} state needs UT parameters", spec.kind.name())))?;
    let mu: Vec<f64> = displacement_to_chain(chain, &ut.lambda_star)?[..sys.n_bosons].iter().map(|m| sign * m).collect();
    let weight: f64 = mu.iter().map(|&m| 1.0 - coherent_tail(m, sys.d)).product();
    let deficit = 1.0 - weight;
    if deficit > 1e-8 {
        return Err(Error::TruncationUnreachable { site: 0, deficit, max_dim: sys.d });
    }
    let v0 = sys.spin_vacuum(spin);
    let (mut v, _) = expm_krylov(|x| sys.apply_polaron_generator(&mu, x), &v0, 1.0, KRYLOV_DIM, 1e-13, 8)
        .map_err(|estimate| Error::KrylovNonConvergence { site: 0, estimate })?;
    if spec.kind == InitialKind::CoherencePlus {
        // (1 + σ_x)/√2 on the displaced |↓⟩ state
        let half = sys.dim / 2;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b) = v.split_at_mut(half);
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let sum = (*x + *y) * s;
            *x = sum;
            *y = sum;
        }
    }
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    Ok(v)
}

/// Exact observables on a uniform time grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DenseTrajectory {
    pub times: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy: Vec<f64>,
    pub survival: Vec<C64>,
}

/// Propagate `v0` to `t_final`, recording every `dt_record`.
pub fn dense_trajectory(sys: &DenseSystem, v0: &[C64], t_final: f64, dt_record: f64, tol: f64) -> Result<DenseTrajectory> {
    let n = (t_final / dt_record).round() as usize;
    if n == 0 || ((n as f64) * dt_record - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::Domain(format!("t_final {t_final} is not a multiple of the record step {dt_record}")));
    }
    let mut tr = DenseTrajectory::default();
    let mut v = v0.to_vec();
    let mut record = |t: f64, v: &[C64]| {
        tr.times.push(t);
        tr.sigma_z.push(sys.sigma_z(v));
        tr.sigma_x.push(sys.sigma_x(v));
        tr.norm.push(norm(v));
        tr.energy.push(sys.energy(v));
        tr.survival.push(dot(v0, v));
    };
    record(0.0, &v);
    for k in 1..=n {
        v = sys.propagate(&v, dt_record, tol, 1.0)?;
        record(k as f64 * dt_record, &v);
    }
    Ok(tr)
}

/// Per-time deviations between two samplings of one observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub observable: String,
    /// `(t, value_mps, value_dense, abs_diff)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub max_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value_mps,value_dense,abs_diff\n");
        for (t, a, b, d) in &self.rows {
            let _ = writeln!(out, "{t},{a},{b},{d}");
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}: max |{}_mps - {}_dense| = {:.3e} (tol {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.observable,
            self.observable,
            self.observable,
            self.max_deviation,
            self.tol
        )
    }
}

/// Compare `(t, value)` series sampled on the same grid.
pub fn compare(observable: &str, mps: &[(f64, f64)], dense: &[(f64, f64)], tol: f64) -> Result<ComparisonReport> {
    if mps.len() != dense.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", mps.len(), dense.len())));
    }
    let mut rows = Vec::with_capacity(mps.len());
    for (&(ta, a), &(tb, b)) in mps.iter().zip(dense) {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("t = {ta} vs t = {tb}")));
        }
        rows.push((ta, a, b, (a - b).abs()));
    }
    let max_deviation = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    Ok(ComparisonReport { observable: observable.to_string(), rows, max_deviation, tol, pass: max_deviation <= tol })
}
