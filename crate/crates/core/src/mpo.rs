//! Matrix product operators stored as sparse grids of local operators.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub(crate) fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Fixed local operators.
pub mod ops {
    use super::*;

    pub fn identity(d: usize) -> DMatrix<C64> {
        DMatrix::identity(d, d)
    }

    /// `σ_z` with `|↑⟩ = (1, 0)`.
    pub fn sigma_z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    pub fn sigma_x() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn sigma_y() -> DMatrix<C64> {
        let i = C64::new(0.0, 1.0);
        DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO])
    }

    /// Annihilator truncated to `d` Fock states.
    pub fn annihilate(d: usize) -> DMatrix<C64> {
        DMatrix::from_fn(d, d, |i, j| if j == i + 1 { real((j as f64).sqrt()) } else { ZERO })
    }

    pub fn create(d: usize) -> DMatrix<C64> {
        annihilate(d).transpose()
    }

    pub fn number(d: usize) -> DMatrix<C64> {
        DMatrix::from_fn(d, d, |i, j| if i == j { real(i as f64) } else { ZERO })
    }
}

/// One non-zero block `W[left][right] = op`.
#[derive(Clone, Debug)]
pub struct MpoTerm {
    pub left: usize,
    pub right: usize,
    pub op: DMatrix<C64>,
}

/// Site of an MPO: bond dimensions and its non-zero blocks.
#[derive(Clone, Debug)]
pub struct MpoSite {
    pub left_dim: usize,
    pub right_dim: usize,
    pub phys_dim: usize,
    pub terms: Vec<MpoTerm>,
}

impl MpoSite {
    /// Same site with every block replaced by `conj(V) op Vᵀ`.
    pub fn projected(&self, v: &DMatrix<C64>) -> MpoSite {
        let vc = v.conjugate();
        let vt = v.transpose();
        MpoSite {
            left_dim: self.left_dim,
            right_dim: self.right_dim,
            phys_dim: v.nrows(),
            terms: self
                .terms
                .iter()
                .map(|t| MpoTerm { left: t.left, right: t.right, op: &vc * &t.op * &vt })
                .collect(),
        }
    }
}

/// Operator `Σ W_0 W_1 ... W_{N-1}` contracted over bond indices, with a
/// `1 × w` first site and a `w × 1` last site.
#[derive(Clone, Debug)]
pub struct Mpo {
    pub sites: Vec<MpoSite>,
}

impl Mpo {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.sites.iter().map(|s| s.left_dim.max(s.right_dim)).max().unwrap_or(0)
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.phys_dim).collect()
    }

    /// Dense matrix in the product basis, site 0 most significant.
    /// Only meant for small systems.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut partial: Vec<Option<DMatrix<C64>>> = vec![None; self.sites[0].right_dim];
        for t in &self.sites[0].terms {
            accumulate(&mut partial[t.right], t.op.clone());
        }
        for site in &self.sites[1..] {
            let mut next: Vec<Option<DMatrix<C64>>> = vec![None; site.right_dim];
            for t in &site.terms {
                if let Some(p) = &partial[t.left] {
                    accumulate(&mut next[t.right], p.kronecker(&t.op));
                }
            }
            partial = next;
        }
        let dim: usize = self.phys_dims().iter().product();
        partial.swap_remove(0).unwrap_or_else(|| DMatrix::zeros(dim, dim))
    }
}

fn accumulate(slot: &mut Option<DMatrix<C64>>, m: DMatrix<C64>) {
    match slot {
        Some(acc) => *acc += m,
        None => *slot = Some(m),
    }
}
