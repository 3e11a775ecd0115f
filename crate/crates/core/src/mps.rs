//! Matrix product states over `[spin, b_0, ..., b_L]` with an optimized boson
//! basis (OBB) on every boson site.
//!
//! Boson site `k` stores a tensor `A[l, ñ, r]` over a compressed local index
//! `ñ` and an isometry `V` (`d_O × d_k`, orthonormal rows) mapping it to the
//! Fock basis: `|ñ⟩ = Σ_n V[ñ, n] |n⟩`. The spin site has no isometry.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mpo::{ops, ONE, ZERO};

/// Truncation parameters of the variational manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsConfig {
    /// Maximum bond dimension `D`.
    pub bond_dim: usize,
    /// Fock dimension `d_k` of every boson site.
    pub local_dim: usize,
    /// Optimized-basis dimension `d_O,k` used where no per-site value is set.
    pub obb_dim: usize,
    /// Per-boson-site override of `d_O,k` (index = chain site).
    pub obb_dims: Option<Vec<usize>>,
    /// Discarded-weight threshold for decompositions that truncate.
    pub svd_cutoff: f64,
    /// Upper bound when raising `d_k` to fit coherent states.
    pub max_local_dim: usize,
    /// Target for the coherent-state truncation deficit `1 - ‖ψ‖²`.
    pub deficit_target: f64,
}

impl Default for MpsConfig {
    fn default() -> Self {
        Self {
            bond_dim: 6,
            local_dim: 40,
            obb_dim: 16,
            obb_dims: None,
            svd_cutoff: 1e-12,
            max_local_dim: 200,
            deficit_target: 1e-10,
        }
    }
}

impl MpsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bond_dim == 0 {
            return Err(Error::Domain("bond dimension must be >= 1".into()));
        }
        if self.obb_dim == 0 || self.obb_dim > self.local_dim {
            return Err(Error::Domain(format!(
                "need 1 <= d_O <= d_k, got d_O={} d_k={}",
                self.obb_dim, self.local_dim
            )));
        }
        if let Some(v) = &self.obb_dims {
            if v.iter().any(|&d| d == 0 || d > self.local_dim) {
                return Err(Error::Domain("per-site d_O must lie in [1, d_k]".into()));
            }
        }
        Ok(())
    }

    /// `d_O` for chain site `k`.
    pub fn obb_dim_at(&self, k: usize) -> usize {
        self.obb_dims.as_ref().and_then(|v| v.get(k).copied()).unwrap_or(self.obb_dim)
    }
}

/// Site tensor stored as one `l × r` matrix per physical index.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub slices: Vec<DMatrix<C64>>,
}

impl Tensor3 {
    pub fn zeros(l: usize, p: usize, r: usize) -> Self {
        Self { slices: vec![DMatrix::zeros(l, r); p] }
    }

    pub fn left_dim(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn right_dim(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn phys_dim(&self) -> usize {
        self.slices.len()
    }

    pub fn len(&self) -> usize {
        self.left_dim() * self.right_dim() * self.phys_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.slices.iter().map(|m| m.norm_squared()).sum()
    }

    pub fn scale(&mut self, c: C64) {
        self.slices.iter_mut().for_each(|m| *m *= c);
    }

    /// Flattened entries, physical index outermost.
    pub fn to_vec(&self) -> Vec<C64> {
        self.slices.iter().flat_map(|m| m.iter().copied()).collect()
    }

    pub fn from_vec(v: &[C64], l: usize, p: usize, r: usize) -> Self {
        let n = l * r;
        Self { slices: (0..p).map(|s| DMatrix::from_column_slice(l, r, &v[s * n..(s + 1) * n])).collect() }
    }

    /// Physical-index change `A'^s = Σ_t m[s, t] A^t`.
    pub fn map_phys(&self, m: &DMatrix<C64>) -> Tensor3 {
        let (l, r) = (self.left_dim(), self.right_dim());
        let slices = (0..m.nrows())
            .map(|s| {
                let mut acc = DMatrix::zeros(l, r);
                for (t, a) in self.slices.iter().enumerate() {
                    let c = m[(s, t)];
                    if c != ZERO {
                        acc += a * c;
                    }
                }
                acc
            })
            .collect();
        Tensor3 { slices }
    }

    /// `(p·l) × r` matrix, rows ordered `s * l + a`.
    pub fn left_matrix(&self) -> DMatrix<C64> {
        let (l, r, p) = (self.left_dim(), self.right_dim(), self.phys_dim());
        let mut m = DMatrix::zeros(p * l, r);
        for (s, a) in self.slices.iter().enumerate() {
            m.view_mut((s * l, 0), (l, r)).copy_from(a);
        }
        m
    }

    pub fn from_left_matrix(m: &DMatrix<C64>, l: usize, p: usize) -> Self {
        Self { slices: (0..p).map(|s| m.view((s * l, 0), (l, m.ncols())).into_owned()).collect() }
    }

    /// `l × (p·r)` matrix, columns ordered `s * r + b`.
    pub fn right_matrix(&self) -> DMatrix<C64> {
        let (l, r, p) = (self.left_dim(), self.right_dim(), self.phys_dim());
        let mut m = DMatrix::zeros(l, p * r);
        for (s, a) in self.slices.iter().enumerate() {
            m.view_mut((0, s * r), (l, r)).copy_from(a);
        }
        m
    }

    pub fn from_right_matrix(m: &DMatrix<C64>, p: usize, r: usize) -> Self {
        Self { slices: (0..p).map(|s| m.view((0, s * r), (m.nrows(), r)).into_owned()).collect() }
    }

    /// `(l·r) × p` matrix whose column `s` is `vec(A^s)`.
    pub fn phys_matrix(&self) -> DMatrix<C64> {
        let n = self.left_dim() * self.right_dim();
        let mut m = DMatrix::zeros(n, self.phys_dim());
        for (s, a) in self.slices.iter().enumerate() {
            m.column_mut(s).copy_from_slice(a.as_slice());
        }
        m
    }

    pub fn from_phys_matrix(m: &DMatrix<C64>, l: usize, r: usize) -> Self {
        Self { slices: (0..m.ncols()).map(|s| DMatrix::from_column_slice(l, r, m.column(s).as_slice())).collect() }
    }

    pub fn mul_right(&self, m: &DMatrix<C64>) -> Tensor3 {
        Tensor3 { slices: self.slices.iter().map(|a| a * m).collect() }
    }

    pub fn mul_left(&self, m: &DMatrix<C64>) -> Tensor3 {
        Tensor3 { slices: self.slices.iter().map(|a| m * a).collect() }
    }

    /// Thin QR over `(s, l) | r`: `A = Q R` with `Q` left-orthonormal.
    pub fn left_qr(&self) -> (Tensor3, DMatrix<C64>) {
        let (l, p) = (self.left_dim(), self.phys_dim());
        let qr = self.left_matrix().qr();
        (Tensor3::from_left_matrix(&qr.q(), l, p), qr.r())
    }

    /// Thin LQ over `l | (s, r)`: `A = L Q` with `Q` right-orthonormal.
    pub fn right_lq(&self) -> (DMatrix<C64>, Tensor3) {
        let (r, p) = (self.right_dim(), self.phys_dim());
        let qr = self.right_matrix().adjoint().qr();
        let q = qr.q().adjoint();
        (qr.r().adjoint(), Tensor3::from_right_matrix(&q, p, r))
    }
}

/// Left transfer `E' = Σ_{s,t} (bra^s)† op[s,t] E ket^t`; `op = None` means
/// the identity on matching physical indices.
pub(crate) fn transfer_left(e: &DMatrix<C64>, bra: &Tensor3, op: Option<&DMatrix<C64>>, ket: &Tensor3) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(bra.right_dim(), ket.right_dim());
    match op {
        None => {
            for (b, k) in bra.slices.iter().zip(&ket.slices) {
                out += b.adjoint() * (e * k);
            }
        }
        Some(op) => {
            let ek: Vec<DMatrix<C64>> = ket.slices.iter().map(|k| e * k).collect();
            for (s, b) in bra.slices.iter().enumerate() {
                let mut acc = DMatrix::zeros(e.nrows(), ket.right_dim());
                for (t, x) in ek.iter().enumerate() {
                    let c = op[(s, t)];
                    if c != ZERO {
                        acc += x * c;
                    }
                }
                out += b.adjoint() * acc;
            }
        }
    }
    out
}

/// Right transfer `R[a, a'] = Σ conj(bra^s[a, c]) op[s,t] ket^t[a', c'] R'[c, c']`.
pub(crate) fn transfer_right(r: &DMatrix<C64>, bra: &Tensor3, op: Option<&DMatrix<C64>>, ket: &Tensor3) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(bra.left_dim(), ket.left_dim());
    let kr: Vec<DMatrix<C64>> = ket.slices.iter().map(|k| k * r.transpose()).collect();
    for (s, b) in bra.slices.iter().enumerate() {
        let z = match op {
            None => kr[s].clone(),
            Some(op) => {
                let mut acc = DMatrix::zeros(ket.left_dim(), r.nrows());
                for (t, x) in kr.iter().enumerate() {
                    let c = op[(s, t)];
                    if c != ZERO {
                        acc += x * c;
                    }
                }
                acc
            }
        };
        out += b.conjugate() * z.transpose();
    }
    out
}

fn frobenius_dot(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Orthonormal rows spanning `vectors` (in order), completed with Fock
/// states up to `rows` rows. Vectors are rows of length `d`.
pub(crate) fn complete_basis(vectors: &[Vec<C64>], rows: usize, d: usize) -> DMatrix<C64> {
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(rows.min(d));
    let fock = if rows > vectors.len() { d } else { 0 };
    let candidates = vectors.iter().cloned().chain((0..fock).map(|n| {
        let mut e = vec![ZERO; d];
        e[n] = ONE;
        e
    }));
    for mut v in candidates {
        if basis.len() == rows {
            break;
        }
        for _ in 0..2 {
            for q in &basis {
                let c: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    DMatrix::from_fn(basis.len(), d, |i, n| basis[i][n])
}

/// One MPS site: tensor plus optional OBB isometry.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsSite {
    pub tensor: Tensor3,
    /// `d_O × d_k` isometry for boson sites, `None` for the spin.
    pub basis: Option<DMatrix<C64>>,
}

impl MpsSite {
    pub fn fock_dim(&self) -> usize {
        self.basis.as_ref().map_or(self.tensor.phys_dim(), |v| v.ncols())
    }

    /// Local operator given in the Fock basis, expressed in the site basis.
    pub fn local_op(&self, op: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.basis {
            None => op.clone(),
            Some(v) => v.conjugate() * op * v.transpose(),
        }
    }

    /// Tensor with the physical index in the Fock basis.
    pub fn fock_tensor(&self) -> Tensor3 {
        match &self.basis {
            None => self.tensor.clone(),
            Some(v) => self.tensor.map_phys(&v.transpose()),
        }
    }
}

/// Branch of a sum-of-products state: a spin vector and one Fock vector per
/// boson site.
#[derive(Clone, Debug)]
pub struct ProductBranch {
    pub spin: [C64; 2],
    pub bosons: Vec<Vec<C64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpsState {
    pub sites: Vec<MpsSite>,
    pub center: usize,
}

impl MpsState {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Number of boson sites.
    pub fn n_bosons(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn fock_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.fock_dim()).collect()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.tensor.phys_dim()).collect()
    }

    /// Bond dimensions between consecutive sites.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|s| s.tensor.right_dim()).collect()
    }

    /// Sum of product states; bond dimension equals the number of branches.
    /// Each boson site gets the minimal OBB spanning its branch vectors; use
    /// [`MpsState::padded`] to reach working dimensions.
    pub fn from_branches(branches: &[ProductBranch]) -> Result<Self> {
        let nb = branches.len();
        if nb == 0 {
            return Err(Error::Domain("need at least one branch".into()));
        }
        let n_bosons = branches[0].bosons.len();
        if let Some(b) = branches.iter().find(|b| b.bosons.len() != n_bosons) {
            return Err(Error::DimensionMismatch { expected: n_bosons, got: b.bosons.len() });
        }
        let mut sites = Vec::with_capacity(n_bosons + 1);
        let last = n_bosons == 0;
        let mut spin = Tensor3::zeros(1, 2, if last { 1 } else { nb });
        for (b, br) in branches.iter().enumerate() {
            for s in 0..2 {
                let col = if last { 0 } else { b };
                spin.slices[s][(0, col)] += br.spin[s];
            }
        }
        sites.push(MpsSite { tensor: spin, basis: None });
        for k in 0..n_bosons {
            let d = branches[0].bosons[k].len();
            if branches.iter().any(|b| b.bosons[k].len() != d) {
                return Err(Error::Domain(format!("branches disagree on Fock dimension at chain site {k}")));
            }
            let vecs: Vec<Vec<C64>> = branches.iter().map(|b| b.bosons[k].clone()).collect();
            let v = complete_basis(&vecs, vecs.len(), d);
            let is_last = k + 1 == n_bosons;
            let r = if is_last { 1 } else { nb };
            let mut t = Tensor3::zeros(nb, v.nrows(), r);
            for (b, vec) in vecs.iter().enumerate() {
                for s in 0..v.nrows() {
                    let c: C64 = v.row(s).iter().zip(vec).map(|(a, x)| a.conj() * x).sum();
                    t.slices[s][(b, if is_last { 0 } else { b })] = c;
                }
            }
            sites.push(MpsSite { tensor: t, basis: Some(v) });
        }
        let mut st = MpsState { sites, center: 0 };
        st.canonicalize(0);
        Ok(st)
    }

    /// Product state `|spin⟩ ⊗ |vacuum⟩` with the given Fock dimensions.
    pub fn spin_vacuum(spin: [C64; 2], fock_dims: &[usize]) -> Result<Self> {
        let bosons = fock_dims
            .iter()
            .map(|&d| {
                let mut v = vec![ZERO; d];
                v[0] = ONE;
                v
            })
            .collect();
        Self::from_branches(&[ProductBranch { spin, bosons }])
    }

    /// Enlarge bond dimensions to `min(D, largest possible)` and OBB
    /// dimensions to the requested values, padding with zeros (tensors) and
    /// Fock completions (bases). The state is unchanged.
    pub fn padded(&self, bond_dim: usize, obb_dims: &[usize]) -> MpsState {
        let n = self.sites.len();
        let fock = self.fock_dims();
        let mut phys: Vec<usize> = (0..n)
            .map(|i| if i == 0 { 2 } else { obb_dims[i - 1].min(fock[i]).max(self.sites[i].tensor.phys_dim()) })
            .collect();
        let mut bonds = vec![1usize; n + 1];
        loop {
            for b in 1..n {
                let left: f64 = phys[..b].iter().map(|&p| p as f64).product();
                let right: f64 = phys[b..].iter().map(|&p| p as f64).product();
                bonds[b] = (bond_dim as f64).min(left).min(right) as usize;
                bonds[b] = bonds[b].max(self.sites[b].tensor.left_dim());
            }
            let mut changed = false;
            for i in 1..n {
                let cap = (bonds[i] * bonds[i + 1]).max(self.sites[i].tensor.phys_dim());
                if phys[i] > cap {
                    phys[i] = cap;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let sites = self
            .sites
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let basis = s.basis.as_ref().map(|v| {
                    let rows: Vec<Vec<C64>> = v.row_iter().map(|r| r.iter().copied().collect()).collect();
                    complete_basis(&rows, phys[i], v.ncols())
                });
                let p = phys[i];
                let mut t = Tensor3::zeros(bonds[i], p, bonds[i + 1]);
                for (sidx, a) in s.tensor.slices.iter().enumerate() {
                    t.slices[sidx].view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
                }
                MpsSite { tensor: t, basis }
            })
            .collect();
        let mut st = MpsState { sites, center: self.center };
        st.canonicalize(0);
        st
    }

    /// Move the orthogonality center to `new_center`.
    pub fn canonicalize(&mut self, new_center: usize) {
        let n = self.sites.len();
        let c = new_center.min(n - 1);
        for i in 0..c {
            let (q, r) = self.sites[i].tensor.left_qr();
            self.sites[i].tensor = q;
            self.sites[i + 1].tensor = self.sites[i + 1].tensor.mul_left(&r);
        }
        for i in (c + 1..n).rev() {
            let (l, q) = self.sites[i].tensor.right_lq();
            self.sites[i].tensor = q;
            self.sites[i - 1].tensor = self.sites[i - 1].tensor.mul_right(&l);
        }
        self.center = c;
    }

    /// `⟨ψ|ψ⟩` from a full contraction.
    pub fn norm_sqr(&self) -> f64 {
        self.overlap_same_basis().re
    }

    fn overlap_same_basis(&self) -> C64 {
        let mut e = DMatrix::from_element(1, 1, ONE);
        for s in &self.sites {
            e = transfer_left(&e, &s.tensor, None, &s.tensor);
        }
        e[(0, 0)]
    }

    /// Norm read off the center tensor (valid in canonical form).
    pub fn center_norm_sqr(&self) -> f64 {
        self.sites[self.center].tensor.norm_sqr()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.sites[self.center].tensor.scale(C64::new(1.0 / n, 0.0));
        }
        n
    }

    /// `⟨self|other⟩`, contracting through the two sets of OBB isometries.
    pub fn overlap(&self, other: &MpsState) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        let mut e = DMatrix::from_element(1, 1, ONE);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            let op = basis_overlap(a, b);
            e = transfer_left(&e, &a.tensor, Some(&op), &b.tensor);
        }
        Ok(e[(0, 0)])
    }

    /// Left environments of identity transfers: `env[i]` contracts sites `< i`.
    fn left_identity_envs(&self) -> Vec<DMatrix<C64>> {
        let mut envs = Vec::with_capacity(self.sites.len() + 1);
        envs.push(DMatrix::from_element(1, 1, ONE));
        for s in &self.sites {
            let e = transfer_left(envs.last().unwrap(), &s.tensor, None, &s.tensor);
            envs.push(e);
        }
        envs
    }

    /// `env[i]` contracts sites `>= i`.
    fn right_identity_envs(&self) -> Vec<DMatrix<C64>> {
        let n = self.sites.len();
        let mut envs = vec![DMatrix::from_element(1, 1, ONE); n + 1];
        for i in (0..n).rev() {
            envs[i] = transfer_right(&envs[i + 1], &self.sites[i].tensor, None, &self.sites[i].tensor);
        }
        envs
    }

    /// `⟨ψ|op_site|ψ⟩ / ⟨ψ|ψ⟩` for an operator given in the Fock basis.
    pub fn expect_local(&self, op: &DMatrix<C64>, site: usize) -> Result<C64> {
        let s = self.sites.get(site).ok_or(Error::DimensionMismatch { expected: self.len(), got: site })?;
        if op.nrows() != s.fock_dim() || op.ncols() != s.fock_dim() {
            return Err(Error::DimensionMismatch { expected: s.fock_dim(), got: op.nrows() });
        }
        let local = s.local_op(op);
        let mut e = DMatrix::from_element(1, 1, ONE);
        let mut norm = DMatrix::from_element(1, 1, ONE);
        for (i, st) in self.sites.iter().enumerate() {
            let o = if i == site { Some(&local) } else { None };
            e = transfer_left(&e, &st.tensor, o, &st.tensor);
            norm = transfer_left(&norm, &st.tensor, None, &st.tensor);
        }
        Ok(e[(0, 0)] / norm[(0, 0)])
    }

    pub fn sigma_z(&self) -> f64 {
        self.expect_local(&ops::sigma_z(), 0).map(|z| z.re).unwrap_or(f64::NAN)
    }

    pub fn sigma_x(&self) -> f64 {
        self.expect_local(&ops::sigma_x(), 0).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// Photon number on every chain site.
    pub fn occupations(&self) -> Vec<f64> {
        let left = self.left_identity_envs();
        let right = self.right_identity_envs();
        let norm = left[self.len()][(0, 0)].re;
        (1..self.len())
            .map(|i| {
                let s = &self.sites[i];
                let nop = s.local_op(&ops::number(s.fock_dim()));
                let e = transfer_left(&left[i], &s.tensor, Some(&nop), &s.tensor);
                frobenius_dot(&e, &right[i + 1]).re / norm
            })
            .collect()
    }

    /// `C[j, k] = ⟨b_j† b_k⟩` over chain sites.
    pub fn one_body_correlations(&self) -> DMatrix<C64> {
        let nb = self.n_bosons();
        let left = self.left_identity_envs();
        let right = self.right_identity_envs();
        let norm = left[self.len()][(0, 0)].re;
        let mut c = DMatrix::zeros(nb, nb);
        let cre: Vec<DMatrix<C64>> = self.sites[1..].iter().map(|s| s.local_op(&ops::create(s.fock_dim()))).collect();
        let ann: Vec<DMatrix<C64>> = self.sites[1..].iter().map(|s| s.local_op(&ops::annihilate(s.fock_dim()))).collect();
        for j in 0..nb {
            let sj = &self.sites[j + 1];
            let num = sj.local_op(&ops::number(sj.fock_dim()));
            let diag = transfer_left(&left[j + 1], &sj.tensor, Some(&num), &sj.tensor);
            c[(j, j)] = C64::new(frobenius_dot(&diag, &right[j + 2]).re / norm, 0.0);
            let mut x = transfer_left(&left[j + 1], &sj.tensor, Some(&cre[j]), &sj.tensor);
            for k in j + 1..nb {
                let sk = &self.sites[k + 1];
                let closed = transfer_left(&x, &sk.tensor, Some(&ann[k]), &sk.tensor);
                let v = frobenius_dot(&closed, &right[k + 2]) / norm;
                c[(j, k)] = v;
                c[(k, j)] = v.conj();
                if k + 1 < nb {
                    x = transfer_left(&x, &sk.tensor, None, &sk.tensor);
                }
            }
        }
        c
    }

    /// Apply `|χ⟩⟨χ| ⊗ 1` and renormalize. Returns the success probability.
    pub fn project_qubit(&self, chi: [C64; 2]) -> Result<(MpsState, f64)> {
        let nchi = (chi[0].norm_sqr() + chi[1].norm_sqr()).sqrt();
        if (nchi - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("spin state must be normalized, norm {nchi}")));
        }
        let mut st = self.clone();
        st.canonicalize(0);
        let n0 = st.center_norm_sqr();
        let proj = DMatrix::from_fn(2, 2, |s, t| chi[s] * chi[t].conj());
        st.sites[0].tensor = st.sites[0].tensor.map_phys(&proj);
        let p = st.center_norm_sqr() / n0;
        if p < 1e-14 {
            return Err(Error::MeasurementAnnihilated(p));
        }
        let inv = 1.0 / st.center_norm_sqr().sqrt();
        st.sites[0].tensor.scale(C64::new(inv, 0.0));
        Ok((st, p))
    }

    /// Full state vector in the Fock product basis (site 0 most significant).
    /// Only for small systems.
    pub fn to_dense(&self) -> Vec<C64> {
        let first = self.sites[0].fock_tensor();
        let mut cur: DMatrix<C64> = first.left_matrix();
        // rows: physical index of sites so far, cols: right bond
        for s in &self.sites[1..] {
            let t = s.fock_tensor();
            let d = t.phys_dim();
            let mut next = DMatrix::zeros(cur.nrows() * d, t.right_dim());
            for row in 0..cur.nrows() {
                let v = cur.row(row);
                for n in 0..d {
                    let w = v * &t.slices[n];
                    next.row_mut(row * d + n).copy_from(&w);
                }
            }
            cur = next;
        }
        cur.column(0).iter().copied().collect()
    }

    /// Largest deviation of the isometry and gauge conditions from exactness.
    pub fn gauge_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (i, s) in self.sites.iter().enumerate() {
            if let Some(v) = &s.basis {
                let g = v * v.adjoint();
                err = err.max(max_abs(&(g - DMatrix::identity(v.nrows(), v.nrows()))));
            }
            let t = &s.tensor;
            if i < self.center {
                let m = t.left_matrix();
                err = err.max(max_abs(&(m.adjoint() * m - DMatrix::identity(t.right_dim(), t.right_dim()))));
            } else if i > self.center {
                let m = t.right_matrix();
                err = err.max(max_abs(&(&m * m.adjoint() - DMatrix::identity(t.left_dim(), t.left_dim()))));
            }
        }
        err
    }

    const MAGIC: &'static [u8; 8] = b"SBZMPS\0\0";
    const VERSION: u32 = 1;

    /// Binary checkpoint: magic, version, site count, center, then per site
    /// the dimensions `(l, r, p, d_k or 0)` followed by the tensor in
    /// row-major `(l, r, p)` order and the isometry in row-major order, all as
    /// little-endian `f64` (re, im) pairs.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        for x in [Self::VERSION, self.sites.len() as u32, self.center as u32] {
            w.write_all(&x.to_le_bytes())?;
        }
        for s in &self.sites {
            let t = &s.tensor;
            let fock = s.basis.as_ref().map_or(0, |v| v.ncols());
            for x in [t.left_dim(), t.right_dim(), t.phys_dim(), fock] {
                w.write_all(&(x as u32).to_le_bytes())?;
            }
            for a in 0..t.left_dim() {
                for b in 0..t.right_dim() {
                    for p in 0..t.phys_dim() {
                        write_c64(&mut w, t.slices[p][(a, b)])?;
                    }
                }
            }
            if let Some(v) = &s.basis {
                for i in 0..v.nrows() {
                    for j in 0..v.ncols() {
                        write_c64(&mut w, v[(i, j)])?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != Self::VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let center = read_u32(&mut r)? as usize;
        if n == 0 || center >= n {
            return Err(Error::Checkpoint(format!("invalid site count {n} / center {center}")));
        }
        let mut sites = Vec::with_capacity(n);
        for _ in 0..n {
            let l = read_u32(&mut r)? as usize;
            let rd = read_u32(&mut r)? as usize;
            let p = read_u32(&mut r)? as usize;
            let fock = read_u32(&mut r)? as usize;
            if l == 0 || rd == 0 || p == 0 || l * rd * p > 1 << 28 {
                return Err(Error::Checkpoint(format!("invalid tensor shape ({l}, {rd}, {p})")));
            }
            let mut t = Tensor3::zeros(l, p, rd);
            for a in 0..l {
                for b in 0..rd {
                    for s in 0..p {
                        t.slices[s][(a, b)] = read_c64(&mut r)?;
                    }
                }
            }
            let basis = if fock > 0 {
                let mut v = DMatrix::zeros(p, fock);
                for i in 0..p {
                    for j in 0..fock {
                        v[(i, j)] = read_c64(&mut r)?;
                    }
                }
                Some(v)
            } else {
                None
            };
            if let Some(prev) = sites.last().map(|s: &MpsSite| s.tensor.right_dim()) {
                if prev != l {
                    return Err(Error::Checkpoint(format!("bond mismatch: {prev} vs {l}")));
                }
            }
            sites.push(MpsSite { tensor: t, basis });
        }
        if sites[0].tensor.left_dim() != 1 || sites[n - 1].tensor.right_dim() != 1 {
            return Err(Error::Checkpoint("open boundary bonds must be 1".into()));
        }
        Ok(MpsState { sites, center })
    }
}

/// `⟨ñ_a|ñ_b⟩` between the local bases of two sites, over their common Fock
/// range.
fn basis_overlap(a: &MpsSite, b: &MpsSite) -> DMatrix<C64> {
    let va = a.basis.clone().unwrap_or_else(|| DMatrix::identity(a.tensor.phys_dim(), a.tensor.phys_dim()));
    let vb = b.basis.clone().unwrap_or_else(|| DMatrix::identity(b.tensor.phys_dim(), b.tensor.phys_dim()));
    let d = va.ncols().min(vb.ncols());
    va.columns(0, d).conjugate() * vb.columns(0, d).transpose()
}

fn write_c64<W: Write>(w: &mut W, z: C64) -> Result<()> {
    w.write_all(&z.re.to_le_bytes())?;
    w.write_all(&z.im.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_c64<R: Read>(r: &mut R) -> Result<C64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let re = f64::from_le_bytes(b);
    r.read_exact(&mut b)?;
    Ok(C64::new(re, f64::from_le_bytes(b)))
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub const SPIN_UP: [C64; 2] = [ONE, ZERO];
pub const SPIN_DOWN: [C64; 2] = [ZERO, ONE];
