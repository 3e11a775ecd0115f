//! Power-law bath spectral density, its discretization into star modes, and
//! the orthogonal star-to-chain mapping.
//!
//! The bath couples to the qubit through
//! `J(ω) = 2 α ω^s ω_c^(1-s) Θ(ω_c - ω)`. It is discretized by a graded
//! Gauss–Legendre rule and then tridiagonalized by Lanczos with full
//! reorthogonalization, which yields the nearest-neighbour chain
//! `(ε_k, t_k, c_0)` together with the orthogonal matrix `U` whose columns are
//! the Lanczos vectors. `U` is reused to carry displacements into the chain
//! picture and to reconstruct per-frequency occupations from chain
//! correlators.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Hard-cutoff power-law spectral density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralDensity {
    pub s: f64,
    pub alpha: f64,
    pub omega_c: f64,
}

impl SpectralDensity {
    pub fn new(s: f64, alpha: f64, omega_c: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("bath exponent s must be > 0, got {s}")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Domain(format!("coupling alpha must be >= 0, got {alpha}")));
        }
        if !(omega_c > 0.0) {
            return Err(Error::Domain(format!("cutoff omega_c must be > 0, got {omega_c}")));
        }
        Ok(Self { s, alpha, omega_c })
    }

    /// Ohmic-family density with the cutoff as energy unit.
    pub fn unit_cutoff(s: f64, alpha: f64) -> Result<Self> {
        Self::new(s, alpha, 1.0)
    }

    /// `J(ω)`; zero at and beyond the cutoff.
    pub fn evaluate(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain(format!("frequency must be >= 0, got {omega}")));
        }
        Ok(self.eval_unchecked(omega))
    }

    fn eval_unchecked(&self, omega: f64) -> f64 {
        if omega >= self.omega_c {
            0.0
        } else {
            2.0 * self.alpha * omega.powf(self.s) * self.omega_c.powf(1.0 - self.s)
        }
    }

    /// Closed form of `∫_0^{ω_c} J(ω) dω`.
    pub fn integral(&self) -> f64 {
        2.0 * self.alpha * self.omega_c * self.omega_c / (self.s + 1.0)
    }

    /// Variance `⟨H²⟩ - ⟨H⟩²` of the chain Hamiltonian on `|↑⟩ ⊗ vacuum`,
    /// which is `c_0² / 4 = (1/4) ∫ J`.
    pub fn bare_bath_energy_variance(&self) -> f64 {
        0.25 * self.integral()
    }
}

/// Free-function form of [`SpectralDensity::evaluate`].
pub fn evaluate_j(sd: &SpectralDensity, omega: f64) -> Result<f64> {
    sd.evaluate(omega)
}

/// Gauss–Legendre nodes and weights on `(0, 1)`, nodes ascending.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let nf = m as f64;
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut z = theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(m, z);
                dp = d;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1, 1] -> (0, 1); z > 0 for the first half
        x[m - 1 - i] = 0.5 * (1.0 + z);
        x[i] = 0.5 * (1.0 - z);
        w[m - 1 - i] = 0.5 * wi;
        w[i] = 0.5 * wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Grading exponent `q` for the substitution `ω = ω_c u^q`.
///
/// When `q (s + 1)` is an integer the graded integrand `ω^(s+k) dω` is a
/// polynomial in `u`, so the Gauss–Legendre rule integrates every moment up
/// to degree `2M - 1` exactly. Falls back to `q = 8` for exponents without a
/// small denominator.
pub fn grading_exponent(s: f64) -> u32 {
    for q in 1..=8u32 {
        let v = q as f64 * (s + 1.0);
        if (v - v.round()).abs() < 1e-12 {
            return q;
        }
    }
    8
}

/// Star-mode discretization of a spectral density.
#[derive(Clone, Debug)]
pub struct DiscretizedBath {
    pub density: SpectralDensity,
    /// Mode frequencies, strictly increasing inside `(0, ω_c)`.
    pub omega: Vec<f64>,
    /// Couplings `g_j = sqrt(w_j J(ω_j))`.
    pub g: Vec<f64>,
    /// Quadrature weights in `ω`.
    pub weight: Vec<f64>,
}

impl DiscretizedBath {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `Σ g_j²`.
    pub fn coupling_sum(&self) -> f64 {
        self.g.iter().map(|g| g * g).sum()
    }

    /// Unit-norm Lanczos start vector. Falls back to the shape of `J` when
    /// the coupling vanishes so the chain geometry stays defined at `α = 0`.
    fn start_vector(&self) -> Vec<f64> {
        let norm = self.coupling_sum().sqrt();
        if norm > 0.0 {
            return self.g.iter().map(|g| g / norm).collect();
        }
        let shape: Vec<f64> = self
            .omega
            .iter()
            .zip(&self.weight)
            .map(|(w, q)| (q * w.powf(self.density.s)).sqrt())
            .collect();
        let n = shape.iter().map(|x| x * x).sum::<f64>().sqrt();
        shape.into_iter().map(|x| x / n).collect()
    }
}

/// Discretize `J` into `m` star modes with the graded Gauss–Legendre rule.
pub fn discretize(sd: &SpectralDensity, m: usize) -> Result<DiscretizedBath> {
    discretize_graded(sd, m, grading_exponent(sd.s))
}

/// Same as [`discretize`] with an explicit grading exponent (`q = 1` is the
/// plain Gauss–Legendre rule on `(0, ω_c)`).
pub fn discretize_graded(sd: &SpectralDensity, m: usize, q: u32) -> Result<DiscretizedBath> {
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 star modes, got {m}")));
    }
    if q == 0 {
        return Err(Error::Domain("grading exponent must be >= 1".into()));
    }
    let (u, wu) = gauss_legendre_unit(m);
    let qf = q as f64;
    let mut omega = Vec::with_capacity(m);
    let mut weight = Vec::with_capacity(m);
    let mut g = Vec::with_capacity(m);
    for (&ui, &wi) in u.iter().zip(&wu) {
        let om = sd.omega_c * ui.powi(q as i32);
        let wt = wi * sd.omega_c * qf * ui.powi(q as i32 - 1);
        omega.push(om);
        weight.push(wt);
        g.push((wt * sd.eval_unchecked(om)).sqrt());
    }
    Ok(DiscretizedBath { density: *sd, omega, g, weight })
}

/// Nearest-neighbour chain obtained from the star bath.
#[derive(Clone, Debug)]
pub struct ChainSystem {
    pub density: SpectralDensity,
    /// On-site frequencies `ε_0..ε_L`.
    pub eps: Vec<f64>,
    /// Hoppings `t_0..t_{L-1}`.
    pub hop: Vec<f64>,
    /// System–chain coupling `c_0 = ‖g‖`.
    pub c0: f64,
    /// Star frequencies the chain was built from.
    pub omega: Vec<f64>,
    /// `M × (L+1)` orthogonal matrix of Lanczos vectors.
    pub star_to_chain: DMatrix<f64>,
    /// Number of boson sites requested; larger than `eps.len()` after a
    /// Lanczos breakdown.
    pub requested_sites: usize,
}

impl ChainSystem {
    /// Number of boson sites, `L + 1`.
    pub fn n_sites(&self) -> usize {
        self.eps.len()
    }

    /// `L`, the index of the last chain site.
    pub fn chain_length(&self) -> usize {
        self.eps.len() - 1
    }

    pub fn is_truncated(&self) -> bool {
        self.eps.len() < self.requested_sites
    }

    /// The first `n` sites of the chain.
    pub fn truncated(&self, n: usize) -> ChainSystem {
        let n = n.clamp(1, self.n_sites());
        ChainSystem {
            density: self.density,
            eps: self.eps[..n].to_vec(),
            hop: self.hop[..n - 1].to_vec(),
            c0: self.c0,
            omega: self.omega.clone(),
            star_to_chain: self.star_to_chain.columns(0, n).into_owned(),
            requested_sites: n,
        }
    }

    /// CSV export: a comment header with the bath parameters, then
    /// `k,eps_k,t_k` rows (`t_L` is empty).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let d = &self.density;
        let _ = writeln!(
            out,
            "# s={} alpha={} omega_c={} M={} c0={}",
            d.s,
            d.alpha,
            d.omega_c,
            self.omega.len(),
            self.c0
        );
        out.push_str("k,eps_k,t_k\n");
        for (k, e) in self.eps.iter().enumerate() {
            match self.hop.get(k) {
                Some(t) => {
                    let _ = writeln!(out, "{k},{e},{t}");
                }
                None => {
                    let _ = writeln!(out, "{k},{e},");
                }
            }
        }
        out
    }
}

const BREAKDOWN: f64 = 1e-14;

/// Lanczos tridiagonalization of `diag(ω)` started from `g / ‖g‖`, producing
/// `n_sites = L + 1` chain sites.
pub fn chain_map(bath: &DiscretizedBath, n_sites: usize) -> Result<ChainSystem> {
    let m = bath.len();
    if n_sites == 0 || n_sites > m {
        return Err(Error::Domain(format!(
            "chain needs 1 <= L+1 <= M sites, got L+1={n_sites}, M={m}"
        )));
    }
    let omega = &bath.omega;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_sites);
    let mut eps = Vec::with_capacity(n_sites);
    let mut hop = Vec::with_capacity(n_sites);
    let mut v = bath.start_vector();
    loop {
        let a: f64 = v.iter().zip(omega).map(|(x, w)| x * x * w).sum();
        eps.push(a);
        basis.push(v);
        if basis.len() == n_sites {
            break;
        }
        let k = basis.len() - 1;
        let mut r: Vec<f64> = basis[k].iter().zip(omega).map(|(x, w)| x * w).collect();
        // two passes of classical Gram–Schmidt against every previous vector
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&r).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        let b = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b < BREAKDOWN {
            log::warn!("Lanczos breakdown after {} sites (requested {n_sites})", basis.len());
            break;
        }
        hop.push(b);
        v = r.into_iter().map(|x| x / b).collect();
    }
    let n = basis.len();
    let u = DMatrix::from_fn(m, n, |j, k| basis[k][j]);
    Ok(ChainSystem {
        density: bath.density,
        eps,
        hop,
        c0: bath.coupling_sum().sqrt(),
        omega: omega.clone(),
        star_to_chain: u,
        requested_sites: n_sites,
    })
}

/// Default chain size rule `L = ceil((2/3) ω_c T)`, returned as a number of
/// boson sites `L + 1`.
pub fn chain_sites_for_time(omega_c: f64, t_max: f64) -> usize {
    (2.0 / 3.0 * omega_c * t_max).ceil().max(0.0) as usize + 1
}

/// Carry star-mode displacements `λ` into chain displacements `μ = Uᵀ λ`.
pub fn displacement_to_chain(cs: &ChainSystem, lambda_star: &[f64]) -> Result<Vec<f64>> {
    let m = cs.star_to_chain.nrows();
    if lambda_star.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: lambda_star.len() });
    }
    let u = &cs.star_to_chain;
    Ok((0..u.ncols())
        .map(|k| u.column(k).iter().zip(lambda_star).map(|(a, b)| a * b).sum())
        .collect())
}

/// Adjoint of [`displacement_to_chain`]: `U μ`.
pub fn displacement_to_star(cs: &ChainSystem, mu: &[f64]) -> Result<Vec<f64>> {
    let n = cs.star_to_chain.ncols();
    if mu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.len() });
    }
    let v = nalgebra::DVector::from_column_slice(mu);
    Ok((&cs.star_to_chain * v).iter().copied().collect())
}

/// Photon numbers of the original star modes, `diag(U C Uᵀ)`, from the chain
/// correlation matrix `C_jk = ⟨b_j† b_k⟩`. Returns `(ω_j, n_j)` pairs.
pub fn star_occupations(cs: &ChainSystem, chain_corr: &DMatrix<C64>) -> Result<Vec<(f64, f64)>> {
    let n = cs.n_sites();
    if chain_corr.nrows() != n || chain_corr.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: chain_corr.nrows() });
    }
    let scale = chain_corr.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let herm = (chain_corr - chain_corr.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm > 1e-10 * scale {
        return Err(Error::NotHermitian(herm));
    }
    // Only the real symmetric part contributes to diag(U C Uᵀ) with U real.
    let c_re = chain_corr.map(|z| z.re);
    let uc = &cs.star_to_chain * c_re;
    Ok((0..cs.star_to_chain.nrows())
        .map(|j| {
            let nj: f64 = uc.row(j).iter().zip(cs.star_to_chain.row(j).iter()).map(|(a, b)| a * b).sum();
            (cs.omega[j], nj)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Monic recurrence of the measure `ω^s` on `(0, ω_c)` (shifted Jacobi
    /// with parameters `(0, s)`), written out independently of the Lanczos
    /// path.
    fn jacobi_oracle(s: f64, n: usize) -> (f64, f64) {
        let nf = n as f64;
        let eps = 0.5 * (1.0 + s * s / ((s + 2.0 * nf) * (2.0 + s + 2.0 * nf)));
        let t = (nf + 1.0) * (nf + 1.0 + s) / ((s + 2.0 + 2.0 * nf) * (3.0 + s + 2.0 * nf))
            * ((3.0 + s + 2.0 * nf) / (1.0 + s + 2.0 * nf)).sqrt();
        (eps, t)
    }

    #[test]
    fn evaluate_examples() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.05).unwrap();
        assert_relative_eq!(sd.evaluate(0.5).unwrap(), 0.05, epsilon = 1e-15);
        assert_eq!(sd.evaluate(1.5).unwrap(), 0.0);
        assert_eq!(sd.evaluate(1.0).unwrap(), 0.0);
        let sd = SpectralDensity::unit_cutoff(0.5, 0.2).unwrap();
        assert_relative_eq!(sd.evaluate(0.25).unwrap(), 0.2, epsilon = 1e-15);
        assert!(matches!(sd.evaluate(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(7);
        for k in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert_relative_eq!(q, 1.0 / (k as f64 + 1.0), max_relative = 1e-13);
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn sum_rules() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.05).unwrap();
        let b = discretize(&sd, 500).unwrap();
        assert!((b.coupling_sum() - 0.05).abs() < 1e-10);
        let sd = SpectralDensity::unit_cutoff(0.75, 0.025).unwrap();
        let b = discretize(&sd, 500).unwrap();
        assert!((b.coupling_sum() - 2.0 * 0.025 / 1.75).abs() < 1e-9);
        for s in [0.3, 0.5, 0.75, 1.0, 1.7] {
            let sd = SpectralDensity::unit_cutoff(s, 0.1).unwrap();
            let b = discretize(&sd, 200).unwrap();
            assert_relative_eq!(b.coupling_sum(), sd.integral(), max_relative = 1e-10);
            assert!(b.omega.windows(2).all(|p| p[0] < p[1]));
            assert!(b.omega[0] > 0.0 && *b.omega.last().unwrap() < 1.0);
        }
    }

    #[test]
    fn zero_coupling_bath() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.0).unwrap();
        let b = discretize(&sd, 50).unwrap();
        assert!(b.g.iter().all(|&g| g == 0.0));
        let cs = chain_map(&b, 10).unwrap();
        assert_eq!(cs.c0, 0.0);
        assert_relative_eq!(cs.eps[0], 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn chain_matches_jacobi_recurrence() {
        for s in [0.5, 0.75, 1.0] {
            let sd = SpectralDensity::unit_cutoff(s, 0.2).unwrap();
            let cs = chain_map(&discretize(&sd, 2000).unwrap(), 21).unwrap();
            for n in 0..=20 {
                let (e, t) = jacobi_oracle(s, n);
                assert_relative_eq!(cs.eps[n], e, max_relative = 1e-8);
                if n < 20 {
                    assert_relative_eq!(cs.hop[n], t, max_relative = 1e-8);
                }
            }
            assert_relative_eq!(cs.c0, sd.integral().sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn chain_coupling_and_orthogonality() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.05).unwrap();
        let b = discretize(&sd, 400).unwrap();
        let cs = chain_map(&b, 30).unwrap();
        assert_relative_eq!(cs.c0, 0.223_606_797_749_979, epsilon = 1e-10);
        let u = &cs.star_to_chain;
        let gram = u.transpose() * u;
        let id = DMatrix::<f64>::identity(30, 30);
        assert!((gram - id).amax() < 1e-12);
        let t = u.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.omega.clone())) * u;
        for i in 0..30 {
            for j in 0..30 {
                let expect = if i == j {
                    cs.eps[i]
                } else if j == i + 1 {
                    cs.hop[i]
                } else if i == j + 1 {
                    cs.hop[j]
                } else {
                    0.0
                };
                assert!((t[(i, j)] - expect).abs() < 1e-10);
            }
        }
        assert!(cs.eps.iter().all(|&e| e > 0.0) && cs.hop.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn convergence_in_mode_count() {
        for s in [0.5, 0.75, 1.0] {
            let sd = SpectralDensity::unit_cutoff(s, 0.1).unwrap();
            let a = chain_map(&discretize(&sd, 1000).unwrap(), 31).unwrap();
            let b = chain_map(&discretize(&sd, 2000).unwrap(), 31).unwrap();
            for k in 0..31 {
                assert!((a.eps[k] - b.eps[k]).abs() < 1e-8);
                if k < 30 {
                    assert!((a.hop[k] - b.hop[k]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn breakdown_reports_shorter_chain() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.1).unwrap();
        let b = discretize(&sd, 4).unwrap();
        let cs = chain_map(&b, 4).unwrap();
        assert_eq!(cs.n_sites(), 4);
        assert!(chain_map(&b, 5).is_err());
    }

    #[test]
    fn displacement_examples() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.05).unwrap();
        let b = discretize(&sd, 200).unwrap();
        let cs = chain_map(&b, 12).unwrap();
        let mu = displacement_to_chain(&cs, &vec![0.0; 200]).unwrap();
        assert!(mu.iter().all(|&x| x == 0.0));
        let gn = b.coupling_sum().sqrt();
        let start: Vec<f64> = b.g.iter().map(|g| g / gn).collect();
        let mu = displacement_to_chain(&cs, &start).unwrap();
        assert_relative_eq!(mu[0], 1.0, epsilon = 1e-12);
        assert!(mu[1..].iter().all(|x| x.abs() < 1e-12));
        let back = displacement_to_star(&cs, &mu).unwrap();
        for (x, y) in back.iter().zip(&start) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(displacement_to_chain(&cs, &[1.0; 3]).is_err());
    }

    #[test]
    fn occupation_examples() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.05).unwrap();
        let b = discretize(&sd, 100).unwrap();
        let cs = chain_map(&b, 8).unwrap();
        let zero = DMatrix::<C64>::zeros(8, 8);
        assert!(star_occupations(&cs, &zero).unwrap().iter().all(|&(_, n)| n == 0.0));
        let mut e0 = DMatrix::<C64>::zeros(8, 8);
        e0[(0, 0)] = C64::new(1.0, 0.0);
        let occ = star_occupations(&cs, &e0).unwrap();
        let gs = b.coupling_sum();
        for (j, &(w, n)) in occ.iter().enumerate() {
            assert_eq!(w, b.omega[j]);
            assert_relative_eq!(n, b.g[j] * b.g[j] / gs, epsilon = 1e-14);
        }
        let mut bad = DMatrix::<C64>::zeros(8, 8);
        bad[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(star_occupations(&cs, &bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn csv_header_carries_parameters() {
        let sd = SpectralDensity::unit_cutoff(1.0, 0.05).unwrap();
        let cs = chain_map(&discretize(&sd, 100).unwrap(), 4).unwrap();
        let csv = cs.to_csv();
        let mut lines = csv.lines();
        let head = lines.next().unwrap();
        assert!(head.starts_with("# s=1 alpha=0.05 omega_c=1 M=100 c0=0.2236"));
        assert_eq!(lines.next().unwrap(), "k,eps_k,t_k");
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().last().unwrap().ends_with(','));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn displacement_preserves_norm_in_krylov_space(coef in proptest::collection::vec(-1.0f64..1.0, 10)) {
                let sd = SpectralDensity::unit_cutoff(0.75, 0.1).unwrap();
                let b = discretize(&sd, 60).unwrap();
                let cs = chain_map(&b, 10).unwrap();
                let lam = displacement_to_star(&cs, &coef).unwrap();
                let mu = displacement_to_chain(&cs, &lam).unwrap();
                let n1: f64 = lam.iter().map(|x| x * x).sum::<f64>().sqrt();
                let n2: f64 = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n1 - n2).abs() < 1e-12);
            }

            #[test]
            fn occupations_preserve_trace(seed in proptest::collection::vec(-1.0f64..1.0, 2 * 36)) {
                let sd = SpectralDensity::unit_cutoff(1.0, 0.1).unwrap();
                let cs = chain_map(&discretize(&sd, 40).unwrap(), 6).unwrap();
                let a = DMatrix::from_fn(6, 6, |i, j| C64::new(seed[i * 6 + j], seed[36 + i * 6 + j]));
                let c = &a * a.adjoint();
                let occ = star_occupations(&cs, &c).unwrap();
                let total: f64 = occ.iter().map(|p| p.1).sum();
                prop_assert!((total - c.trace().re).abs() < 1e-10);
            }
        }
    }
}
