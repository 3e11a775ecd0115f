//! Chain Hamiltonian, variational polaron parameters and initial states.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mpo::{ops, real, Mpo, MpoSite, MpoTerm, ONE};
use crate::mps::{transfer_left, MpsConfig, MpsState, ProductBranch};
use crate::spectral::{displacement_to_chain, ChainSystem, DiscretizedBath};

/// Qubit splitting plus the chain it couples to.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub delta: f64,
    pub chain: ChainSystem,
}

impl ModelParams {
    pub fn new(delta: f64, chain: ChainSystem) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Domain(format!("qubit splitting must be > 0, got {delta}")));
        }
        Ok(Self { delta, chain })
    }
}

/// MPO of
/// `(Δ/2)σ_z + (c_0/2)σ_x(b_0 + b_0†) + Σ ε_k n_k + Σ t_k (b_k† b_{k+1} + h.c.)`
/// over `[spin, b_0, ..]`. `fock_dims[0]` must be 2; `fock_dims[1 + k]` is the
/// Fock dimension of chain site `k`.
pub fn build_mpo(mp: &ModelParams, fock_dims: &[usize]) -> Result<Mpo> {
    if fock_dims.first() != Some(&2) {
        return Err(Error::Domain("first site must be the spin (dimension 2)".into()));
    }
    let nb = fock_dims.len() - 1;
    if nb > mp.chain.n_sites() {
        return Err(Error::DimensionMismatch { expected: mp.chain.n_sites(), got: nb });
    }
    let mut sites = Vec::with_capacity(nb + 1);
    let hspin = ops::sigma_z() * real(0.5 * mp.delta);
    if nb == 0 {
        sites.push(MpoSite {
            left_dim: 1,
            right_dim: 1,
            phys_dim: 2,
            terms: vec![MpoTerm { left: 0, right: 0, op: hspin }],
        });
        return Ok(Mpo { sites });
    }
    let cx = ops::sigma_x() * real(0.5 * mp.chain.c0);
    sites.push(MpoSite {
        left_dim: 1,
        right_dim: 4,
        phys_dim: 2,
        terms: vec![
            MpoTerm { left: 0, right: 0, op: hspin },
            MpoTerm { left: 0, right: 1, op: cx.clone() },
            MpoTerm { left: 0, right: 2, op: cx },
            MpoTerm { left: 0, right: 3, op: ops::identity(2) },
        ],
    });
    for k in 0..nb {
        let d = fock_dims[k + 1];
        let last = k + 1 == nb;
        let mut terms = vec![
            MpoTerm { left: 0, right: 0, op: ops::identity(d) },
            MpoTerm { left: 1, right: 0, op: ops::annihilate(d) },
            MpoTerm { left: 2, right: 0, op: ops::create(d) },
            MpoTerm { left: 3, right: 0, op: ops::number(d) * real(mp.chain.eps[k]) },
        ];
        if !last {
            let t = mp.chain.hop[k];
            terms.push(MpoTerm { left: 3, right: 1, op: ops::create(d) * real(t) });
            terms.push(MpoTerm { left: 3, right: 2, op: ops::annihilate(d) * real(t) });
            terms.push(MpoTerm { left: 3, right: 3, op: ops::identity(d) });
        }
        sites.push(MpoSite { left_dim: 4, right_dim: if last { 1 } else { 4 }, phys_dim: d, terms });
    }
    Ok(Mpo { sites })
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn expect_mpo(psi: &MpsState, mpo: &Mpo) -> C64 {
    let mut envs: Vec<DMatrix<C64>> = vec![DMatrix::from_element(1, 1, ONE)];
    let mut norm = DMatrix::from_element(1, 1, ONE);
    for (s, w) in psi.sites.iter().zip(&mpo.sites) {
        let mut next = vec![DMatrix::zeros(s.tensor.right_dim(), s.tensor.right_dim()); w.right_dim];
        for t in &w.terms {
            let op = s.local_op(&t.op);
            next[t.right] += transfer_left(&envs[t.left], &s.tensor, Some(&op), &s.tensor);
        }
        envs = next;
        norm = transfer_left(&norm, &s.tensor, None, &s.tensor);
    }
    envs[0][(0, 0)] / norm[(0, 0)]
}

/// `⟨H²⟩ - ⟨H⟩²`, with the intermediate `H|ψ⟩` kept in the full Fock basis.
pub fn variance_of_h(psi: &MpsState, mpo: &Mpo) -> f64 {
    let mut envs: Vec<Vec<Option<DMatrix<C64>>>> = vec![vec![Some(DMatrix::from_element(1, 1, ONE))]];
    let mut norm = DMatrix::from_element(1, 1, ONE);
    for (s, w) in psi.sites.iter().zip(&mpo.sites) {
        let r = s.tensor.right_dim();
        let mut next: Vec<Vec<Option<DMatrix<C64>>>> = vec![vec![None; w.right_dim]; w.right_dim];
        for t1 in &w.terms {
            for t2 in &w.terms {
                let Some(e) = &envs[t1.left][t2.left] else { continue };
                let op = s.local_op(&(&t1.op * &t2.op));
                let x = transfer_left(e, &s.tensor, Some(&op), &s.tensor);
                let slot = &mut next[t1.right][t2.right];
                match slot {
                    Some(acc) => *acc += x,
                    None => *slot = Some(x),
                }
            }
        }
        for row in next.iter_mut() {
            for slot in row.iter_mut() {
                if slot.is_none() {
                    *slot = Some(DMatrix::zeros(r, r));
                }
            }
        }
        envs = next;
        norm = transfer_left(&norm, &s.tensor, None, &s.tensor);
    }
    let n = norm[(0, 0)].re;
    let h2 = envs[0][0].as_ref().map_or(0.0, |m| m[(0, 0)].re) / n;
    let h = expect_mpo(psi, mpo).re;
    h2 - h * h
}

/// Variational polaron displacements for `S = Σ λ_k (a_k† - a_k) σ_x`.
#[derive(Clone, Debug)]
pub struct UtParameters {
    pub omega: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: f64,
    pub lambda_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl UtParameters {
    /// CSV with columns `k,omega_k,xi_k,lambda_k` and `η` in the header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# eta={} residual={} converged={}", self.eta, self.residual, self.converged);
        out.push_str("k,omega_k,xi_k,lambda_k\n");
        for (k, ((w, x), l)) in self.omega.iter().zip(&self.xi).zip(&self.lambda_star).enumerate() {
            let _ = writeln!(out, "{k},{w},{x},{l}");
        }
        out
    }
}

/// One application of the self-consistency map: returns `(ξ, λ, η_new)`.
fn ut_map(delta: f64, bath: &DiscretizedBath, eta: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let xi: Vec<f64> = bath.omega.iter().map(|&w| w / (w + eta * delta)).collect();
    let lambda: Vec<f64> = bath.g.iter().zip(&bath.omega).zip(&xi).map(|((g, w), x)| g * x / (2.0 * w)).collect();
    let s2: f64 = lambda.iter().map(|l| l * l).sum();
    (xi, lambda, (-2.0 * s2).exp())
}

/// Solve `ξ_k = ω_k / (ω_k + ηΔ)`, `λ_k = g_k ξ_k / (2ω_k)`,
/// `η = exp(-2 Σ λ_k²)` by fixed-point iteration from `η = 1`, switching to
/// 0.5 mixing once the iterates start to oscillate. Non-convergence is
/// reported through `converged = false` with the last iterate.
pub fn solve_ut(delta: f64, bath: &DiscretizedBath, tol: f64, max_iter: usize) -> Result<UtParameters> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {tol}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("qubit splitting must be >= 0, got {delta}")));
    }
    let mut eta = 1.0;
    let mut mixing = 1.0;
    let mut last_step = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let (_, _, next) = ut_map(delta, bath, eta);
        let step = next - eta;
        if step.abs() <= tol {
            eta = next;
            converged = true;
            break;
        }
        if last_step * step < 0.0 {
            mixing = 0.5;
        }
        last_step = step;
        eta += mixing * step;
    }
    let (xi, lambda_star, next) = ut_map(delta, bath, eta);
    Ok(UtParameters {
        omega: bath.omega.clone(),
        xi,
        eta,
        lambda_star,
        residual: (next - eta).abs(),
        iterations,
        converged,
    })
}

/// Which initial state to prepare.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    /// `|↑⟩ ⊗ |vacuum⟩`.
    BareBath,
    /// `exp(-S) |↑⟩|vacuum⟩`.
    PhysicalBath,
    /// `(1 + σ_x)/√2 exp(-S) |↓⟩|vacuum⟩ = |+⟩ ⊗ Coh(-μ)`.
    CoherencePlus,
}

impl InitialKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bare" | "barebath" => Ok(Self::BareBath),
            "physical" | "physicalbath" => Ok(Self::PhysicalBath),
            "coherenceplus" | "coherence" => Ok(Self::CoherencePlus),
            _ => Err(Error::Config(format!("unknown initial state '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BareBath => "bare",
            Self::PhysicalBath => "physical",
            Self::CoherencePlus => "coherence_plus",
        }
    }

    pub fn needs_ut(&self) -> bool {
        !matches!(self, Self::BareBath)
    }
}

#[derive(Clone, Debug)]
pub struct InitialStateSpec {
    pub kind: InitialKind,
    pub ut: Option<UtParameters>,
}

/// Prepared state plus bookkeeping from the Fock truncation.
#[derive(Clone, Debug)]
pub struct PreparedState {
    pub state: MpsState,
    /// `1 - ‖ψ‖²` of the truncated (unnormalized) construction.
    pub deficit: f64,
    /// Chain displacements `μ` (empty for the bare bath).
    pub mu: Vec<f64>,
}

/// Truncated coherent state `D(μ)|0⟩` over `d` Fock levels (real `μ`).
pub fn coherent_vector(mu: f64, d: usize) -> Vec<C64> {
    let mut v = Vec::with_capacity(d);
    let mut c = (-0.5 * mu * mu).exp();
    for n in 0..d {
        if n > 0 {
            c *= mu / (n as f64).sqrt();
        }
        v.push(real(c));
    }
    v
}

/// Smallest Fock dimension `>= floor` whose coherent-state deficit is at
/// most `target`.
fn coherent_dim(mu: f64, floor: usize, target: f64, max_dim: usize, site: usize) -> Result<usize> {
    let mut d = floor.max(1);
    loop {
        let w: f64 = coherent_vector(mu, d).iter().map(|c| c.norm_sqr()).sum();
        let deficit = 1.0 - w;
        if deficit <= target {
            return Ok(d);
        }
        if d >= max_dim {
            return Err(Error::TruncationUnreachable { site, deficit, max_dim });
        }
        d += 1;
    }
}

pub const SPIN_PLUS: [C64; 2] = [C64 { re: std::f64::consts::FRAC_1_SQRT_2, im: 0.0 }, C64 { re: std::f64::consts::FRAC_1_SQRT_2, im: 0.0 }];
pub const SPIN_MINUS: [C64; 2] = [C64 { re: std::f64::consts::FRAC_1_SQRT_2, im: 0.0 }, C64 { re: -std::f64::consts::FRAC_1_SQRT_2, im: 0.0 }];

/// Build one of the three initial states on `n_bosons` chain sites and pad
/// it to the working dimensions of `cfg`.
pub fn prepare_initial_state(spec: &InitialStateSpec, mp: &ModelParams, n_bosons: usize, cfg: &MpsConfig) -> Result<PreparedState> {
    cfg.validate()?;
    if n_bosons > mp.chain.n_sites() {
        return Err(Error::DimensionMismatch { expected: mp.chain.n_sites(), got: n_bosons });
    }
    let mu: Vec<f64> = match (spec.kind, &spec.ut) {
        (InitialKind::BareBath, _) => Vec::new(),
        (_, None) => return Err(Error::Domain(format!("{} state needs UT parameters", spec.kind.name()))),
        (_, Some(ut)) => displacement_to_chain(&mp.chain, &ut.lambda_star)?[..n_bosons].to_vec(),
    };
    let per_site = cfg.deficit_target / n_bosons.max(1) as f64;
    let dims: Vec<usize> = (0..n_bosons)
        .map(|k| {
            let m = mu.get(k).copied().unwrap_or(0.0);
            coherent_dim(m, cfg.local_dim, per_site, cfg.max_local_dim, k)
        })
        .collect::<Result<_>>()?;
    let coherent = |sign: f64| -> Vec<Vec<C64>> { dims.iter().enumerate().map(|(k, &d)| coherent_vector(sign * mu[k], d)).collect() };
    let branches = match spec.kind {
        InitialKind::BareBath => {
            let vac = dims.iter().map(|&d| coherent_vector(0.0, d)).collect();
            vec![ProductBranch { spin: crate::mps::SPIN_UP, bosons: vac }]
        }
        InitialKind::PhysicalBath => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let scale = |v: [C64; 2]| [v[0] * s, v[1] * s];
            vec![
                ProductBranch { spin: scale(SPIN_PLUS), bosons: coherent(-1.0) },
                ProductBranch { spin: scale(SPIN_MINUS), bosons: coherent(1.0) },
            ]
        }
        InitialKind::CoherencePlus => vec![ProductBranch { spin: SPIN_PLUS, bosons: coherent(-1.0) }],
    };
    let raw = MpsState::from_branches(&branches)?;
    let deficit = 1.0 - raw.norm_sqr();
    let obb: Vec<usize> = (0..n_bosons).map(|k| cfg.obb_dim_at(k)).collect();
    let mut state = raw.padded(cfg.bond_dim, &obb);
    state.normalize();
    Ok(PreparedState { state, deficit, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::SPIN_UP;
    use crate::spectral::{chain_map, discretize, SpectralDensity};
    use approx::assert_relative_eq;

    fn chain(s: f64, alpha: f64, m: usize, n: usize) -> (DiscretizedBath, ChainSystem) {
        let sd = SpectralDensity::unit_cutoff(s, alpha).unwrap();
        let b = discretize(&sd, m).unwrap();
        let c = chain_map(&b, n).unwrap();
        (b, c)
    }

    /// Kronecker construction of the chain Hamiltonian, written without the
    /// MPO machinery.
    fn dense_hamiltonian(mp: &ModelParams, d: usize, nb: usize) -> DMatrix<C64> {
        let dims: Vec<usize> = std::iter::once(2).chain(std::iter::repeat_n(d, nb)).collect();
        let embed = |site: usize, op: &DMatrix<C64>| {
            let mut m = DMatrix::from_element(1, 1, ONE);
            for (i, &di) in dims.iter().enumerate() {
                m = if i == site { m.kronecker(op) } else { m.kronecker(&ops::identity(di)) };
            }
            m
        };
        let embed2 = |s1: usize, o1: &DMatrix<C64>, s2: usize, o2: &DMatrix<C64>| embed(s1, o1) * embed(s2, o2);
        let mut h = embed(0, &ops::sigma_z()) * real(mp.delta / 2.0);
        let x = ops::annihilate(d) + ops::create(d);
        h += embed2(0, &ops::sigma_x(), 1, &x) * real(mp.chain.c0 / 2.0);
        for k in 0..nb {
            h += embed(k + 1, &ops::number(d)) * real(mp.chain.eps[k]);
            if k + 1 < nb {
                let hop = embed2(k + 1, &ops::create(d), k + 2, &ops::annihilate(d));
                h += (&hop + hop.adjoint()) * real(mp.chain.hop[k]);
            }
        }
        h
    }

    #[test]
    fn mpo_matches_dense_construction() {
        let (_, c) = chain(1.0, 0.3, 60, 4);
        let mp = ModelParams::new(0.1, c).unwrap();
        for (d, nb) in [(2, 1), (3, 2), (4, 3), (2, 4)] {
            let dims: Vec<usize> = std::iter::once(2).chain(std::iter::repeat_n(d, nb)).collect();
            let mpo = build_mpo(&mp, &dims).unwrap();
            assert!(mpo.max_bond_dim() <= 4);
            let diff = crate::mps::max_abs(&(mpo.to_dense() - dense_hamiltonian(&mp, d, nb)));
            assert!(diff < 1e-14, "d={d} nb={nb} diff={diff}");
        }
    }

    #[test]
    fn decoupled_qubit_ground_energy() {
        let (_, mut c) = chain(1.0, 0.0, 40, 3);
        c.c0 = 0.0;
        let mp = ModelParams::new(0.2, c).unwrap();
        let mpo = build_mpo(&mp, &[2, 3, 3, 3]).unwrap();
        let h = mpo.to_dense();
        let eig = nalgebra::SymmetricEigen::new(h);
        let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(e0, -0.1, epsilon = 1e-14);
    }

    #[test]
    fn vacuum_expectation_is_half_delta() {
        let (_, c) = chain(1.0, 0.2, 60, 5);
        let mp = ModelParams::new(0.1, c).unwrap();
        let psi = MpsState::spin_vacuum(SPIN_UP, &[6; 5]).unwrap();
        let mpo = build_mpo(&mp, &psi.fock_dims()).unwrap();
        assert_relative_eq!(expect_mpo(&psi, &mpo).re, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn ut_decoupled_and_polaron_limits() {
        let (b, _) = chain(1.0, 0.0, 100, 2);
        let ut = solve_ut(0.1, &b, 1e-13, 100).unwrap();
        assert_eq!(ut.eta, 1.0);
        assert_eq!(ut.iterations, 1);
        for (x, w) in ut.xi.iter().zip(&b.omega) {
            assert_relative_eq!(*x, w / (w + 0.1), epsilon = 1e-15);
        }
        let (b, _) = chain(1.0, 0.05, 100, 2);
        let ut = solve_ut(1e-12, &b, 1e-13, 100).unwrap();
        for ((x, l), (g, w)) in ut.xi.iter().zip(&ut.lambda_star).zip(b.g.iter().zip(&b.omega)) {
            assert!((x - 1.0).abs() < 1e-8);
            assert_relative_eq!(*l, g / (2.0 * w), max_relative = 1e-8);
        }
    }

    #[test]
    fn ut_matches_bisection_oracle() {
        let (b, _) = chain(1.0, 0.05, 2000, 2);
        let delta = 0.1;
        // independent scalar root of f(η) = η - exp(-2 Σ (g ξ(η) / 2ω)²)
        let f = |eta: f64| {
            let s: f64 = b
                .g
                .iter()
                .zip(&b.omega)
                .map(|(g, w)| {
                    let l = g / (2.0 * (w + eta * delta));
                    l * l
                })
                .sum();
            eta - (-2.0 * s).exp()
        };
        let (mut lo, mut hi) = (1e-6, 1.0);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let ut = solve_ut(delta, &b, 1e-14, 1000).unwrap();
        assert!(ut.converged);
        assert!(ut.residual <= 1e-12);
        assert!((ut.eta - 0.5 * (lo + hi)).abs() < 1e-10, "{} vs {}", ut.eta, lo);
        for ((l, g), (w, x)) in ut.lambda_star.iter().zip(&b.g).zip(b.omega.iter().zip(&ut.xi)) {
            assert_eq!(*l, g * x / (2.0 * w));
        }
        // re-inserting the fixed point moves η by at most the tolerance
        let (_, _, again) = ut_map(delta, &b, ut.eta);
        assert!((again - ut.eta).abs() <= 1e-12);
    }

    #[test]
    fn ut_reports_nonconvergence() {
        let (b, _) = chain(1.0, 0.3, 200, 2);
        let ut = solve_ut(0.1, &b, 1e-15, 2).unwrap();
        assert!(!ut.converged);
        assert_eq!(ut.iterations, 2);
        assert!(solve_ut(0.1, &b, 0.0, 2).is_err());
    }

    #[test]
    fn ut_csv() {
        let (b, _) = chain(1.0, 0.05, 10, 2);
        let ut = solve_ut(0.1, &b, 1e-13, 100).unwrap();
        let csv = ut.to_csv();
        assert!(csv.starts_with("# eta="));
        assert_eq!(csv.lines().nth(1), Some("k,omega_k,xi_k,lambda_k"));
        assert_eq!(csv.lines().count(), 12);
    }

    fn setup(alpha: f64, nb: usize) -> (ModelParams, UtParameters) {
        let (b, c) = chain(1.0, alpha, 400, nb.max(2));
        let ut = solve_ut(0.1, &b, 1e-13, 500).unwrap();
        (ModelParams::new(0.1, c).unwrap(), ut)
    }

    #[test]
    fn bare_bath_state() {
        let (mp, _) = setup(0.1, 6);
        let cfg = MpsConfig { local_dim: 8, obb_dim: 4, ..Default::default() };
        let spec = InitialStateSpec { kind: InitialKind::BareBath, ut: None };
        let p = prepare_initial_state(&spec, &mp, 6, &cfg).unwrap();
        assert_eq!(p.deficit.abs(), 0.0);
        assert_relative_eq!(p.state.norm_sqr(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.state.sigma_z(), 1.0, epsilon = 1e-14);
        assert!(p.state.occupations().iter().all(|n| n.abs() < 1e-14));
    }

    #[test]
    fn physical_bath_at_zero_coupling_is_bare() {
        let (mp, ut) = setup(0.0, 5);
        let cfg = MpsConfig { local_dim: 6, obb_dim: 4, ..Default::default() };
        let phys = prepare_initial_state(&InitialStateSpec { kind: InitialKind::PhysicalBath, ut: Some(ut) }, &mp, 5, &cfg).unwrap();
        let bare = prepare_initial_state(&InitialStateSpec { kind: InitialKind::BareBath, ut: None }, &mp, 5, &cfg).unwrap();
        assert_relative_eq!(phys.state.overlap(&bare.state).unwrap().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn physical_bath_matches_dense_bloch_form() {
        let nb = 3;
        let (mp, ut) = setup(0.2, nb);
        let cfg = MpsConfig { local_dim: 10, obb_dim: 6, ..Default::default() };
        let spec = InitialStateSpec { kind: InitialKind::PhysicalBath, ut: Some(ut) };
        let p = prepare_initial_state(&spec, &mp, nb, &cfg).unwrap();
        assert!(p.deficit <= 1e-10);
        assert_relative_eq!(p.state.norm_sqr(), 1.0, epsilon = 1e-10);
        assert!(p.state.sigma_x().abs() < 1e-10);
        // dense cosh/sinh form: exp(-B σ_x) with B = Σ μ (b† - b) on |↑⟩|0⟩;
        // the modes commute, so exp(±B)|0⟩ is a Kronecker product of
        // single-mode exponentials built from the Hermitian i·μ(b† - b)
        let dims = p.state.fock_dims();
        let displaced = |sign: f64| {
            let mut out = nalgebra::DVector::from_element(1, ONE);
            for k in 0..nb {
                let d = dims[k + 1];
                let herm = (ops::create(d) - ops::annihilate(d)) * C64::new(0.0, p.mu[k]);
                let eig = nalgebra::SymmetricEigen::new(herm);
                let u = &eig.eigenvectors;
                let dg = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -sign * e)));
                let col = (u * dg * u.adjoint()).column(0).into_owned();
                out = out.kronecker(&col);
            }
            out
        };
        let dim: usize = dims[1..].iter().product();
        let cosh = (displaced(1.0) + displaced(-1.0)) * real(0.5);
        let sinh = (displaced(1.0) - displaced(-1.0)) * real(0.5);
        // ψ = cosh(B)|0⟩|↑⟩ - sinh(B)|0⟩|↓⟩, spin most significant
        let mut want = vec![C64::new(0.0, 0.0); 2 * dim];
        for i in 0..dim {
            want[i] = cosh[i];
            want[dim + i] = -sinh[i];
        }
        let nrm: f64 = want.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let got = p.state.to_dense();
        let ov: C64 = got.iter().zip(&want).map(|(a, b)| a.conj() * b).sum::<C64>() / nrm;
        assert!((ov.norm() - 1.0).abs() < 1e-8, "overlap {ov}");
        let sz_dense: f64 = want[..dim].iter().map(|z| z.norm_sqr()).sum::<f64>() / (nrm * nrm) - want[dim..].iter().map(|z| z.norm_sqr()).sum::<f64>() / (nrm * nrm);
        assert!((p.state.sigma_z() - sz_dense).abs() < 1e-8);
    }

    #[test]
    fn coherence_plus_is_product() {
        let (mp, ut) = setup(0.05, 5);
        let cfg = MpsConfig { local_dim: 8, obb_dim: 4, ..Default::default() };
        let p = prepare_initial_state(&InitialStateSpec { kind: InitialKind::CoherencePlus, ut: Some(ut) }, &mp, 5, &cfg).unwrap();
        assert_relative_eq!(p.state.sigma_x(), 1.0, epsilon = 1e-10);
        let occ = p.state.occupations();
        for (n, m) in occ.iter().zip(&p.mu) {
            assert!((n - m * m).abs() < 1e-9);
        }
        assert!(prepare_initial_state(&InitialStateSpec { kind: InitialKind::CoherencePlus, ut: None }, &mp, 5, &cfg).is_err());
    }

    #[test]
    fn truncation_unreachable() {
        let (mp, ut) = setup(0.8, 3);
        let cfg = MpsConfig { local_dim: 2, obb_dim: 2, max_local_dim: 2, ..Default::default() };
        let r = prepare_initial_state(&InitialStateSpec { kind: InitialKind::PhysicalBath, ut: Some(ut) }, &mp, 3, &cfg);
        assert!(matches!(r, Err(Error::TruncationUnreachable { .. })));
    }

    #[test]
    fn bare_bath_variance() {
        for (s, alpha, want) in [(1.0, 0.1, 0.025), (0.75, 0.025, 0.25 * 2.0 * 0.025 / 1.75)] {
            let (_, c) = chain(s, alpha, 500, 4);
            let mp = ModelParams::new(0.1, c).unwrap();
            let psi = MpsState::spin_vacuum(SPIN_UP, &[5; 4]).unwrap();
            let mpo = build_mpo(&mp, &psi.fock_dims()).unwrap();
            assert!((variance_of_h(&psi, &mpo) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenstate_has_zero_variance() {
        let (_, c) = chain(1.0, 0.0, 50, 3);
        let mp = ModelParams::new(0.1, c).unwrap();
        let psi = MpsState::spin_vacuum(crate::mps::SPIN_DOWN, &[4; 3]).unwrap();
        let mpo = build_mpo(&mp, &psi.fock_dims()).unwrap();
        let v = variance_of_h(&psi, &mpo);
        assert!(v.abs() < 1e-14 && v >= -1e-12);
    }
}
