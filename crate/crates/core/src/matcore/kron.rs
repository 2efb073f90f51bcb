//! Kronecker products, dense and matrix-free.
//!
//! Index convention: in `A₁ ⊗ A₂ ⊗ … ⊗ A_v` the first factor varies slowest,
//! so coordinate `(i₁, …, i_v)` sits at `((i₁·n₂ + i₂)·n₃ + …)`.

use nalgebra::{DMatrix, DVector};

use super::{SymMatrix, MATERIALIZATION_LIMIT};
use crate::error::{Error, Result};

pub fn kron_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Materialized `F₁ ⊗ … ⊗ F_v`.
pub fn kron_chain(factors: &[SymMatrix]) -> Result<SymMatrix> {
    let n: usize = factors.iter().map(SymMatrix::dim).product();
    if n > MATERIALIZATION_LIMIT {
        return Err(Error::DimensionOverflow {
            what: "Kronecker materialization",
            requested: n,
            limit: MATERIALIZATION_LIMIT,
        });
    }
    let mut acc = DMatrix::from_element(1, 1, 1.0);
    for f in factors {
        acc = acc.kronecker(f.matrix());
    }
    SymMatrix::from_lower(acc)
}

/// `(A₁ ⊗ … ⊗ A_v) x` without forming the product.
pub fn kron_apply(factors: &[DMatrix<f64>], x: &DVector<f64>) -> DVector<f64> {
    let mut out = x.clone();
    let mut scratch = Vec::new();
    apply_in_place(factors, out.as_mut_slice(), &mut scratch);
    out
}

/// Applies `A₁ ⊗ … ⊗ A_v` to every column of `x`.
pub fn kron_apply_columns(factors: &[DMatrix<f64>], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let n = x.nrows();
    let mut scratch = Vec::new();
    for col in out.as_mut_slice().chunks_mut(n) {
        apply_in_place(factors, col, &mut scratch);
    }
    out
}

fn apply_in_place(factors: &[DMatrix<f64>], x: &mut [f64], scratch: &mut Vec<f64>) {
    let n = x.len();
    debug_assert_eq!(n, factors.iter().map(|f| f.ncols()).product::<usize>());
    let mut stride = n;
    for a in factors {
        let m = a.nrows();
        debug_assert_eq!(m, a.ncols(), "kron_apply expects square factors");
        stride /= m;
        let block = m * stride;
        scratch.resize(2 * m, 0.0);
        let (g, y) = scratch.split_at_mut(m);
        for base in (0..n).step_by(block) {
            for r in 0..stride {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = x[base + i * stride + r];
                }
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (k, gk) in g.iter().enumerate() {
                        s += a[(i, k)] * gk;
                    }
                    *yi = s;
                }
                for (i, yi) in y.iter().enumerate() {
                    x[base + i * stride + r] = *yi;
                }
            }
        }
    }
}
