//! One-site projector-splitting TDVP. Boson sites carry their optimized
//! basis as a leaf of a small tree (`site tensor — isometry`), and the leaf is
//! evolved and re-split alongside the site tensor in every local update.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::krylov::expm_krylov;
use crate::model::expect_mpo;
use crate::linalg::{conj, gemm, mul, mul_acc, Mat};
use crate::mpo::{Mpo, MpoSite, ONE};
use crate::mps::{MpsState, Tensor3};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const MAX_SPLITS: u32 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct TdvpConfig {
    pub dt: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    /// Second-order left-right/right-left sweep; `false` gives a single
    /// first-order left-to-right sweep per step.
    pub symmetric: bool,
}

impl Default for TdvpConfig {
    fn default() -> Self {
        Self { dt: 0.1, krylov_dim: 20, krylov_tol: 1e-12, symmetric: true }
    }
}

impl TdvpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!("time step must be > 0, got {}", self.dt)));
        }
        if self.krylov_dim < 3 {
            return Err(Error::Domain(format!("Krylov dimension must be >= 3, got {}", self.krylov_dim)));
        }
        if !(self.krylov_tol > 0.0) {
            return Err(Error::Domain(format!("Krylov tolerance must be > 0, got {}", self.krylov_tol)));
        }
        Ok(())
    }
}

type Env = Vec<DMatrix<C64>>;

/// Distinct local operator (up to a scalar) among the MPO blocks of a site,
/// in the Fock basis (sparse) and in the site basis (dense, transposed).
struct ClassOp {
    identity: bool,
    fock: Vec<(usize, usize, C64)>,
    site_t: DMatrix<C64>,
}

/// MPO block `W[left][right] = scale · classes[class]`.
struct TermRef {
    left: usize,
    right: usize,
    class: usize,
    scale: C64,
}

struct LocalOps {
    terms: Vec<TermRef>,
    classes: Vec<ClassOp>,
}

fn is_identity(m: &DMatrix<C64>) -> bool {
    let n = m.nrows();
    m.ncols() == n && m.iter().enumerate().all(|(k, z)| *z == if k % n == k / n { ONE } else { ZERO })
}

fn sparse(op: &DMatrix<C64>) -> Vec<(usize, usize, C64)> {
    (0..op.ncols())
        .flat_map(|j| (0..op.nrows()).map(move |i| (i, j)))
        .filter(|&(i, j)| op[(i, j)] != ZERO).map(|(i, j)| (i, j, op[(i, j)]))
        .collect()
}

/// `c` with `a = c · b` when the two sparse operators are proportional.
fn ratio(a: &[(usize, usize, C64)], b: &[(usize, usize, C64)]) -> Option<C64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let c = a[0].2 / b[0].2;
    let same = a.iter().zip(b).all(|(x, y)| x.0 == y.0 && x.1 == y.1 && (x.2 - c * y.2).norm() <= 1e-14 * x.2.norm());
    same.then_some(c)
}

/// `(conj(V) O Vᵀ)ᵀ` for a sparse Fock-basis `O`.
fn project_t(fock: &[(usize, usize, C64)], v: &DMatrix<C64>) -> DMatrix<C64> {
    let (k, d) = v.shape();
    // ov = O Vᵀ, d × k
    let mut ov = DMatrix::<C64>::zeros(d, k);
    for &(i, j, x) in fock {
        for a in 0..k {
            ov[(i, a)] += x * v[(a, j)];
        }
    }
    let vc = conj(v.as_slice());
    mul(Mat::of(&ov).t(), Mat::new(&vc, k, d).t())
}

impl LocalOps {
    fn new(w: &MpoSite, basis: Option<&DMatrix<C64>>) -> Self {
        let mut classes: Vec<ClassOp> = Vec::new();
        let mut terms = Vec::with_capacity(w.terms.len());
        for t in &w.terms {
            let fock = sparse(&t.op);
            if fock.is_empty() {
                continue;
            }
            let found = classes.iter().enumerate().find_map(|(c, cl)| ratio(&fock, &cl.fock).map(|x| (c, x)));
            let (class, scale) = match found {
                Some(f) => f,
                None => {
                    let identity = is_identity(&t.op);
                    let site_t = match basis {
                        _ if identity => DMatrix::zeros(0, 0),
                        Some(v) => project_t(&fock, v),
                        None => t.op.transpose(),
                    };
                    classes.push(ClassOp { identity, fock, site_t });
                    (classes.len() - 1, ONE)
                }
            };
            terms.push(TermRef { left: t.left, right: t.right, class, scale });
        }
        Self { terms, classes }
    }

    fn reproject(&mut self, v: &DMatrix<C64>) {
        for c in self.classes.iter_mut().filter(|c| !c.identity) {
            c.site_t = project_t(&c.fock, v);
        }
    }
}

/// Per operator class, `Σ_t scale_t L_{w_t} X^s R_{w'_t}ᵀ` for a tensor
/// stored as `(a, b, s)`. Results are laid out as `(s, a, b)`.
fn sandwich(x: &[C64], (l, p, r): (usize, usize, usize), lenv: &Env, renv: &Env, ops: &LocalOps) -> Vec<Option<Vec<C64>>> {
    let n = l * r * p;
    // rows (b, s), cols a
    let xt = Mat::strided(x, r * p, l, l, 1);
    let mut lx: Vec<Option<Vec<C64>>> = vec![None; lenv.len()];
    let mut acc: Vec<Option<Vec<C64>>> = vec![None; ops.classes.len()];
    for t in &ops.terms {
        let y = lx[t.left].get_or_insert_with(|| {
            // layout (b, s, a)
            let mut y = vec![ZERO; n];
            gemm(ONE, xt, Mat::of(&lenv[t.left]).t(), ZERO, &mut y);
            y
        });
        // rows (s, a), cols b  ->  output (s, a, b)
        let yv = Mat::strided(y, p * l, r, r, 1);
        let dst = acc[t.class].get_or_insert_with(|| vec![ZERO; n]);
        gemm(t.scale, yv, Mat::of(&renv[t.right]).t(), ONE, dst);
    }
    acc
}

/// Effective one-site Hamiltonian `y^s = Σ_t Σ_s' Õ_t[s,s'] L_w X^{s'} R_{w'}ᵀ`.
fn apply_site(x: &[C64], dims: (usize, usize, usize), lenv: &Env, renv: &Env, ops: &LocalOps) -> Vec<C64> {
    let (l, p, r) = dims;
    let lr = l * r;
    let acc = sandwich(x, dims, lenv, renv, ops);
    let mut out = vec![ZERO; x.len()];
    for (cl, z) in ops.classes.iter().zip(&acc) {
        let Some(z) = z else { continue };
        if cl.identity {
            for s in 0..p {
                for ab in 0..lr {
                    out[ab + lr * s] += z[s + p * ab];
                }
            }
        } else {
            // rows (a, b), cols s
            mul_acc(Mat::strided(z, lr, p, p, 1), Mat::of(&cl.site_t), &mut out);
        }
    }
    out
}

/// Zero-site bond Hamiltonian `y = Σ_w L_w C R_wᵀ`.
fn apply_bond(c: &[C64], rows: usize, cols: usize, lenv: &Env, renv: &Env) -> Vec<C64> {
    let cm = Mat::new(c, rows, cols);
    let mut out = vec![ZERO; rows * cols];
    for (lw, rw) in lenv.iter().zip(renv) {
        let lc = mul(Mat::of(lw), cm);
        mul_acc(Mat::of(&lc), Mat::of(rw).t(), &mut out);
    }
    out
}

/// Per class, `E_c[ñ, ñ'] = Σ_t scale_t ⟨Q^ñ, L_w Q^{ñ'} R_{w'}ᵀ⟩`, with `Q`
/// given as an `(l·r) × k` matrix.
fn leaf_envs(q: &DMatrix<C64>, l: usize, r: usize, lenv: &Env, renv: &Env, ops: &LocalOps) -> Vec<Option<DMatrix<C64>>> {
    let k = q.ncols();
    let lr = l * r;
    let qc = conj(q.as_slice());
    sandwich(q.as_slice(), (l, k, r), lenv, renv, ops)
        .into_iter()
        .map(|y| y.map(|y| mul(Mat::new(&qc, lr, k).t(), Mat::new(&y, k, lr).t())))
        .collect()
}

/// Leaf Hamiltonian on `C` (`k × d_k`): `y = Σ_c E_c C O_cᵀ` with Fock-basis `O_c`.
fn apply_leaf(c: &[C64], k: usize, d: usize, es: &[Option<DMatrix<C64>>], ops: &LocalOps) -> Vec<C64> {
    let mut out = vec![ZERO; k * d];
    let mut co = vec![ZERO; k * d];
    for (e, cl) in es.iter().zip(&ops.classes) {
        let Some(e) = e else { continue };
        if cl.identity {
            mul_acc(Mat::of(e), Mat::new(c, k, d), &mut out);
            continue;
        }
        co.iter_mut().for_each(|z| *z = ZERO);
        for &(i, j, v) in &cl.fock {
            let (dst, src) = (i * k, j * k);
            for a in 0..k {
                co[dst + a] += v * c[src + a];
            }
        }
        mul_acc(Mat::of(e), Mat::new(&co, k, d), &mut out);
    }
    out
}

/// Bond between the site tensor and its leaf, `R` of shape `k × p`:
/// `y = Σ_c E_c R Õ_cᵀ`.
fn apply_leaf_bond(x: &[C64], k: usize, p: usize, es: &[Option<DMatrix<C64>>], ops: &LocalOps) -> Vec<C64> {
    let xm = Mat::new(x, k, p);
    let mut out = vec![ZERO; k * p];
    for (e, cl) in es.iter().zip(&ops.classes) {
        let Some(e) = e else { continue };
        if cl.identity {
            mul_acc(Mat::of(e), xm, &mut out);
        } else {
            let xo = mul(xm, Mat::of(&cl.site_t));
            mul_acc(Mat::of(e), Mat::of(&xo), &mut out);
        }
    }
    out
}

/// `Σ_t scale_t Õ_t[s, s'] M_{key(t)} X^{s'}` accumulated per `group(t)` as
/// `(l·r) × p` buffers, with the products `M_w X` from `side`, cached.
fn mixed_by(
    len: usize,
    lr: usize,
    p: usize,
    ops: &LocalOps,
    n_groups: usize,
    key: impl Fn(&TermRef) -> usize,
    group: impl Fn(&TermRef) -> usize,
    side: impl Fn(usize) -> Vec<C64>,
) -> Vec<Option<Vec<C64>>> {
    let mut cache: Vec<Option<Vec<C64>>> = Vec::new();
    let mut acc: Vec<Option<Vec<C64>>> = vec![None; n_groups];
    for t in &ops.terms {
        let w = key(t);
        if cache.len() <= w {
            cache.resize(w + 1, None);
        }
        let m = cache[w].get_or_insert_with(|| side(w));
        let cl = &ops.classes[t.class];
        let dst = acc[group(t)].get_or_insert_with(|| vec![ZERO; len]);
        if cl.identity {
            dst.iter_mut().zip(m.iter()).for_each(|(d, v)| *d += t.scale * v);
        } else {
            gemm(t.scale, Mat::new(m, lr, p), Mat::of(&cl.site_t), ONE, dst);
        }
    }
    acc
}

/// Left environment of sites `<= i` from that of sites `< i` and the
/// left-orthonormal tensor of site `i`.
fn grow_left(lenv: &Env, q: &Tensor3, ops: &LocalOps, n_right: usize) -> Env {
    let (l, p, r) = (q.left_dim(), q.phys_dim(), q.right_dim());
    let n = l * r;
    let qv = q.to_vec();
    let qc = conj(&qv);
    let side = |w: usize| mul(Mat::of(&lenv[w]), Mat::new(&qv, l, r * p)).as_slice().to_vec();
    mixed_by(qv.len(), n, p, ops, n_right, |t| t.left, |t| t.right, side)
        .into_iter()
        .map(|a| {
            let mut out = DMatrix::<C64>::zeros(r, r);
            if let Some(a) = a {
                for s in 0..p {
                    mul_acc(Mat::new(&qc[s * n..], l, r).t(), Mat::new(&a[s * n..], l, r), out.as_mut_slice());
                }
            }
            out
        })
        .collect()
}

/// Right environment of sites `>= i` from that of sites `> i` and the
/// right-orthonormal tensor of site `i`.
fn grow_right(renv: &Env, q: &Tensor3, ops: &LocalOps, n_left: usize) -> Env {
    let (l, p, r) = (q.left_dim(), q.phys_dim(), q.right_dim());
    let n = l * r;
    let qv = q.to_vec();
    let qc = conj(&qv);
    let side = |w: usize| {
        let mut z = vec![ZERO; n * p];
        for s in 0..p {
            gemm(ONE, Mat::new(&qv[s * n..], l, r), Mat::of(&renv[w]).t(), ZERO, &mut z[s * n..(s + 1) * n]);
        }
        z
    };
    mixed_by(qv.len(), n, p, ops, n_left, |t| t.right, |t| t.left, side)
        .into_iter()
        .map(|a| {
            let mut out = DMatrix::<C64>::zeros(l, l);
            if let Some(a) = a {
                for s in 0..p {
                    mul_acc(Mat::new(&qc[s * n..], l, r), Mat::new(&a[s * n..], l, r).t(), out.as_mut_slice());
                }
            }
            out
        })
        .collect()
}

/// A state together with the environments needed to advance it.
pub struct Evolver {
    state: MpsState,
    mpo: Mpo,
    cfg: TdvpConfig,
    lenv: Vec<Env>,
    renv: Vec<Env>,
    time: f64,
}

impl Evolver {
    pub fn new(mut state: MpsState, mpo: &Mpo, cfg: &TdvpConfig) -> Result<Self> {
        cfg.validate()?;
        if state.len() != mpo.len() {
            return Err(Error::DimensionMismatch { expected: mpo.len(), got: state.len() });
        }
        for (s, w) in state.sites.iter().zip(&mpo.sites) {
            if s.fock_dim() != w.phys_dim {
                return Err(Error::DimensionMismatch { expected: w.phys_dim, got: s.fock_dim() });
            }
        }
        state.canonicalize(0);
        let n = state.len();
        let unit = vec![DMatrix::from_element(1, 1, ONE)];
        let mut ev = Self {
            state,
            mpo: mpo.clone(),
            cfg: cfg.clone(),
            lenv: vec![Vec::new(); n + 1],
            renv: vec![Vec::new(); n + 1],
            time: 0.0,
        };
        ev.lenv[0] = unit.clone();
        ev.renv[n] = unit;
        ev.rebuild_right();
        Ok(ev)
    }

    fn rebuild_right(&mut self) {
        for i in (1..self.state.len()).rev() {
            let terms = self.terms(i);
            self.renv[i] = grow_right(&self.renv[i + 1], &self.state.sites[i].tensor, &terms, self.mpo.sites[i].left_dim);
        }
    }

    pub fn state(&self) -> &MpsState {
        &self.state
    }

    pub fn into_state(self) -> MpsState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn mpo(&self) -> &Mpo {
        &self.mpo
    }

    fn terms(&self, i: usize) -> LocalOps {
        LocalOps::new(&self.mpo.sites[i], self.state.sites[i].basis.as_ref())
    }

    fn expm<F: FnMut(&[C64]) -> Vec<C64>>(&self, site: usize, apply: F, v: &[C64], t: f64) -> Result<Vec<C64>> {
        expm_krylov(apply, v, t, self.cfg.krylov_dim, self.cfg.krylov_tol, MAX_SPLITS)
            .map(|(x, _)| x)
            .map_err(|estimate| Error::KrylovNonConvergence { site, estimate })
    }

    /// Evolve the center tensor of site `i` forward by `h`.
    fn site_forward(&mut self, i: usize, h: f64, terms: &LocalOps) -> Result<()> {
        let a = &self.state.sites[i].tensor;
        let dims = (a.left_dim(), a.phys_dim(), a.right_dim());
        let (lenv, renv) = (&self.lenv[i], &self.renv[i + 1]);
        let x = self.expm(i, |v| apply_site(v, dims, lenv, renv, terms), &a.to_vec(), h)?;
        self.state.sites[i].tensor = Tensor3::from_vec(&x, dims.0, dims.1, dims.2);
        Ok(())
    }

    /// Leaf update of boson site `i`. With `leaf_first` the leaf is evolved
    /// forward and the leaf bond backward (left-to-right order); otherwise
    /// the reverse.
    fn leaf_update(&mut self, i: usize, h: f64, terms: &mut LocalOps, leaf_first: bool) -> Result<()> {
        let a = &self.state.sites[i].tensor;
        let (l, r) = (a.left_dim(), a.right_dim());
        let qr = a.phys_matrix().qr();
        let q = qr.q();
        let mut rr = qr.r();
        let k = q.ncols();
        let es = leaf_envs(&q, l, r, &self.lenv[i], &self.renv[i + 1], terms);
        let mut v = self.state.sites[i].basis.clone().expect("boson site without basis");
        let d = v.ncols();
        if !leaf_first {
            let p = rr.ncols();
            let x = self.expm(i, |y| apply_leaf_bond(y, k, p, &es, terms), rr.as_slice(), -h)?;
            rr = DMatrix::from_column_slice(k, p, &x);
        }
        let c = &rr * &v;
        let c = self.expm(i, |y| apply_leaf(y, k, d, &es, terms), c.as_slice(), h)?;
        let split = DMatrix::from_column_slice(k, d, &c).adjoint().qr();
        v = split.q().adjoint();
        let mut rnew = split.r().adjoint();
        terms.reproject(&v);
        if leaf_first {
            let x = self.expm(i, |y| apply_leaf_bond(y, k, k, &es, terms), rnew.as_slice(), -h)?;
            rnew = DMatrix::from_column_slice(k, k, &x);
        }
        self.state.sites[i].tensor = Tensor3::from_phys_matrix(&(q * rnew), l, r);
        self.state.sites[i].basis = Some(v);
        Ok(())
    }

    fn sweep_right(&mut self, h: f64) -> Result<()> {
        let n = self.state.len();
        for i in 0..n {
            let mut terms = self.terms(i);
            if i > 0 {
                self.leaf_update(i, h, &mut terms, true)?;
            }
            self.site_forward(i, h, &terms)?;
            if i + 1 == n {
                break;
            }
            let (q, r) = self.state.sites[i].tensor.left_qr();
            self.lenv[i + 1] = grow_left(&self.lenv[i], &q, &terms, self.mpo.sites[i].right_dim);
            let (lenv, renv) = (&self.lenv[i + 1], &self.renv[i + 1]);
            let (rows, cols) = r.shape();
            let x = self.expm(i, |v| apply_bond(v, rows, cols, lenv, renv), r.as_slice(), -h)?;
            let r = DMatrix::from_column_slice(rows, cols, &x);
            self.state.sites[i].tensor = q;
            self.state.sites[i + 1].tensor = self.state.sites[i + 1].tensor.mul_left(&r);
            self.state.center = i + 1;
        }
        Ok(())
    }

    fn sweep_left(&mut self, h: f64) -> Result<()> {
        let n = self.state.len();
        for i in (0..n).rev() {
            let mut terms = self.terms(i);
            self.site_forward(i, h, &terms)?;
            if i > 0 {
                self.leaf_update(i, h, &mut terms, false)?;
            } else {
                break;
            }
            let (lm, q) = self.state.sites[i].tensor.right_lq();
            self.renv[i] = grow_right(&self.renv[i + 1], &q, &terms, self.mpo.sites[i].left_dim);
            let (lenv, renv) = (&self.lenv[i], &self.renv[i]);
            let (rows, cols) = lm.shape();
            let x = self.expm(i, |v| apply_bond(v, rows, cols, lenv, renv), lm.as_slice(), -h)?;
            let lm = DMatrix::from_column_slice(rows, cols, &x);
            self.state.sites[i].tensor = q;
            self.state.sites[i - 1].tensor = self.state.sites[i - 1].tensor.mul_right(&lm);
            self.state.center = i - 1;
        }
        Ok(())
    }

    /// Advance by `dt` (negative values evolve backwards).
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if self.cfg.symmetric {
            self.sweep_right(0.5 * dt)?;
            self.sweep_left(0.5 * dt)?;
        } else {
            self.sweep_right(dt)?;
            self.state.canonicalize(0);
            self.rebuild_right();
        }
        self.time += dt;
        Ok(())
    }

    /// Advance by `duration` in `ceil(duration / dt)` equal steps.
    pub fn advance(&mut self, duration: f64) -> Result<()> {
        let (n, dt) = split_interval(duration, self.cfg.dt);
        for _ in 0..n {
            self.step(dt)?;
        }
        Ok(())
    }
}

/// Number of steps and the step length covering `duration` with steps no
/// longer than `dt`.
pub fn split_interval(duration: f64, dt: f64) -> (usize, f64) {
    if duration <= 0.0 {
        return (0, dt);
    }
    let n = ((duration / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, duration / n as f64)
}

/// One symmetric TDVP step of length `cfg.dt`.
pub fn step(psi: &MpsState, mpo: &Mpo, cfg: &TdvpConfig) -> Result<MpsState> {
    let mut ev = Evolver::new(psi.clone(), mpo, cfg)?;
    ev.step(cfg.dt)?;
    Ok(ev.into_state())
}

/// Observables recorded along a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy: Vec<f64>,
    /// `⟨ψ(0)|ψ(t)⟩`.
    pub survival_amp: Vec<C64>,
    pub fidelity: Vec<f64>,
    pub chain_occ: Vec<Vec<f64>>,
    /// `(t, [(ω_k, n_k)])` snapshots of star-mode occupations.
    pub star_occ: Vec<(f64, Vec<(f64, f64)>)>,
}

impl TrajectoryRecord {
    pub fn push(&mut self, t: f64, psi0: &MpsState, psi: &MpsState, mpo: &Mpo) -> Result<()> {
        let amp = psi0.overlap(psi)?;
        self.times.push(t);
        self.sigma_z.push(psi.sigma_z());
        self.sigma_x.push(psi.sigma_x());
        self.norm.push(psi.norm_sqr().sqrt());
        self.energy.push(expect_mpo(psi, mpo).re);
        self.survival_amp.push(amp);
        self.fidelity.push(amp.norm_sqr());
        self.chain_occ.push(psi.occupations());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|E(t) - E(0)| / |E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        let scale = if e0.abs() > 0.0 { e0.abs() } else { 1.0 };
        self.energy.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max)
    }

    /// Largest `|‖ψ(t)‖ - 1|`.
    pub fn norm_deviation(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sigma_z,sigma_x,norm,energy,re_survival,im_survival,fidelity\n");
        for i in 0..self.len() {
            let a = self.survival_amp[i];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.times[i], self.sigma_z[i], self.sigma_x[i], self.norm[i], self.energy[i], a.re, a.im, self.fidelity[i]
            );
        }
        out
    }

    pub fn occupations_csv(&self) -> String {
        let mut out = String::from("t,site,n\n");
        for (t, occ) in self.times.iter().zip(&self.chain_occ) {
            for (k, n) in occ.iter().enumerate() {
                let _ = writeln!(out, "{t},{k},{n}");
            }
        }
        out
    }
}

/// Evolve `psi0` to `t_final`, recording every `record_every` steps and at
/// the end. Returns the final state and the record.
pub fn evolve(psi0: &MpsState, mpo: &Mpo, cfg: &TdvpConfig, t_final: f64, record_every: usize) -> Result<(MpsState, TrajectoryRecord)> {
    if !(t_final >= 0.0) {
        return Err(Error::Domain(format!("final time must be >= 0, got {t_final}")));
    }
    let every = record_every.max(1);
    let mut ev = Evolver::new(psi0.clone(), mpo, cfg)?;
    let mut rec = TrajectoryRecord::default();
    rec.push(0.0, psi0, ev.state(), mpo)?;
    let (n, dt) = split_interval(t_final, cfg.dt);
    for k in 1..=n {
        ev.step(dt)?;
        if k % every == 0 || k == n {
            rec.push(k as f64 * dt, psi0, ev.state(), mpo)?;
        }
    }
    Ok((ev.into_state(), rec))
}

/// Warn when the chain is too short to keep excitations from reflecting off
/// its end before `t_max`.
pub fn check_chain_length(n_bosons: usize, omega_c: f64, t_max: f64) -> bool {
    let need = crate::spectral::chain_sites_for_time(omega_c, t_max);
    if n_bosons < need {
        log::warn!("chain of {n_bosons} sites is shorter than the {need} needed to reach t = {t_max} without reflections");
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_mpo, prepare_initial_state, InitialKind, InitialStateSpec, ModelParams};
    use crate::mps::{MpsConfig, SPIN_UP};
    use crate::spectral::{chain_map, discretize, SpectralDensity};
    use nalgebra::{DVector, SymmetricEigen};

    fn model(s: f64, alpha: f64, nb: usize) -> ModelParams {
        let sd = SpectralDensity::unit_cutoff(s, alpha).unwrap();
        let chain = chain_map(&discretize(&sd, 400).unwrap(), nb.max(1)).unwrap();
        ModelParams::new(0.1, chain).unwrap()
    }

    fn bare(mp: &ModelParams, nb: usize, d: usize, d_o: usize, bond: usize) -> (MpsState, Mpo) {
        let cfg = MpsConfig { bond_dim: bond, local_dim: d, obb_dim: d_o, ..Default::default() };
        let p = prepare_initial_state(&InitialStateSpec { kind: InitialKind::BareBath, ut: None }, mp, nb, &cfg).unwrap();
        let mpo = build_mpo(mp, &p.state.fock_dims()).unwrap();
        (p.state, mpo)
    }

    fn dense_evolve(h: &DMatrix<C64>, v: &[C64], t: f64) -> Vec<C64> {
        let eig = SymmetricEigen::new(h.clone());
        let u = &eig.eigenvectors;
        let c = u.adjoint() * DVector::from_column_slice(v);
        let ph = DVector::from_fn(v.len(), |k, _| C64::from_polar(1.0, -t * eig.eigenvalues[k]) * c[k]);
        (u * ph).iter().copied().collect()
    }

    #[test]
    fn exact_on_a_complete_manifold() {
        let mp = model(1.0, 0.2, 3);
        let (psi, mpo) = bare(&mp, 3, 3, 3, 64);
        let h = mpo.to_dense();
        let v0 = psi.to_dense();
        let (fin, rec) = evolve(&psi, &mpo, &TdvpConfig::default(), 3.0, 10).unwrap();
        let want = dense_evolve(&h, &v0, 3.0);
        let ov: C64 = want.iter().zip(fin.to_dense()).map(|(a, b)| a.conj() * b).sum();
        assert!((ov.norm() - 1.0).abs() < 1e-9, "{ov}");
        assert!((ov - 1.0).norm() < 1e-6, "global phase {ov}");
        assert_eq!(rec.len(), 4);
    }

    #[test]
    fn rabi_oscillation_of_free_qubit() {
        let mp = model(1.0, 0.0, 3);
        let cfg = MpsConfig { bond_dim: 4, local_dim: 4, obb_dim: 2, ..Default::default() };
        let plus = [C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2];
        let psi = MpsState::spin_vacuum(plus, &[4; 3]).unwrap().padded(cfg.bond_dim, &[2; 3]);
        let mpo = build_mpo(&mp, &psi.fock_dims()).unwrap();
        let (_, rec) = evolve(&psi, &mpo, &TdvpConfig::default(), 20.0, 5).unwrap();
        for (t, sx) in rec.times.iter().zip(&rec.sigma_x) {
            assert!((sx - (0.1 * t).cos()).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn decoupled_excited_state_only_picks_up_a_phase() {
        let mp = model(1.0, 0.0, 4);
        let (psi, mpo) = bare(&mp, 4, 5, 3, 6);
        let (_, rec) = evolve(&psi, &mpo, &TdvpConfig::default(), 10.0, 10).unwrap();
        for ((t, sz), a) in rec.times.iter().zip(&rec.sigma_z).zip(&rec.survival_amp) {
            assert!((sz - 1.0).abs() < 1e-12);
            assert!((a - C64::from_polar(1.0, -0.05 * t)).norm() < 1e-10, "t={t} a={a}");
        }
    }

    #[test]
    fn norm_and_energy_are_conserved() {
        let mp = model(1.0, 0.1, 6);
        let (psi, mpo) = bare(&mp, 6, 10, 4, 6);
        let (_, rec) = evolve(&psi, &mpo, &TdvpConfig::default(), 5.0, 5).unwrap();
        assert!(rec.norm_deviation() < 1e-10, "{}", rec.norm_deviation());
        assert!(rec.energy_drift() < 1e-8, "{}", rec.energy_drift());
        assert!(rec.fidelity.iter().all(|f| *f <= 1.0 + 1e-10));
        assert!(rec.sigma_z.last().unwrap() < &0.999);
    }

    #[test]
    fn forward_then_backward_returns() {
        let mp = model(1.0, 0.3, 5);
        let (psi, mpo) = bare(&mp, 5, 8, 4, 6);
        let mut ev = Evolver::new(psi.clone(), &mpo, &TdvpConfig::default()).unwrap();
        for _ in 0..5 {
            ev.step(0.1).unwrap();
        }
        let mid = ev.state().clone();
        ev.step(0.1).unwrap();
        ev.step(-0.1).unwrap();
        assert!(ev.state().overlap(&mid).unwrap().norm() >= 1.0 - 1e-8);
    }

    #[test]
    fn second_order_in_dt() {
        let mp = model(1.0, 0.2, 4);
        let (psi, mpo) = bare(&mp, 4, 6, 3, 3);
        let run = |dt: f64| {
            let cfg = TdvpConfig { dt, ..Default::default() };
            let (fin, _) = evolve(&psi, &mpo, &cfg, 4.0, 1000).unwrap();
            fin
        };
        let (a, b, c) = (run(0.2), run(0.1), run(0.05));
        let e1 = (a.sigma_z() - b.sigma_z()).abs() + (a.sigma_x() - b.sigma_x()).abs();
        let e2 = (b.sigma_z() - c.sigma_z()).abs() + (b.sigma_x() - c.sigma_x()).abs();
        assert!(e1 / e2 >= 4.0, "{e1} {e2}");
    }

    #[test]
    fn zero_time_records_initial_snapshot() {
        let mp = model(1.0, 0.1, 3);
        let (psi, mpo) = bare(&mp, 3, 4, 2, 4);
        let (fin, rec) = evolve(&psi, &mpo, &TdvpConfig::default(), 0.0, 1).unwrap();
        assert_eq!(rec.len(), 1);
        assert!((fin.overlap(&psi).unwrap() - 1.0).norm() < 1e-14);
        assert!(rec.to_csv().starts_with("t,sigma_z,sigma_x,norm,energy,re_survival,im_survival,fidelity\n"));
        assert_eq!(rec.occupations_csv().lines().count(), 4);
    }

    #[test]
    fn config_checks() {
        assert!(TdvpConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(TdvpConfig { krylov_dim: 2, ..Default::default() }.validate().is_err());
        assert_eq!(split_interval(1.0, 0.3), (4, 0.25));
        assert_eq!(split_interval(1.0, 0.1).0, 10);
        let _ = SPIN_UP;
    }
}
