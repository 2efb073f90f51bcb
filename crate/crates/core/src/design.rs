//! Linear structure of the log-parameterization.
//!
//! A Kronecker product `Θ = Θ₁ ⊗ … ⊗ Θ_v` has logarithm
//! `Ω = Σ_j I ⊗ … ⊗ Ω_j ⊗ … ⊗ I`, which is linear in the entries of the
//! factor logs `Ω_j`. The matrix `E_*` maps the stacked factor coordinates to
//! `vech Ω`; adding `c I` to one factor log and `−c I` to another leaves `Ω`
//! unchanged, so `E_*` has a `(v − 1)`-dimensional null space. The reduced
//! design `E` removes it by keeping one global identity coefficient and the
//! non-identity coordinates of each factor.
//!
//! Factor coordinates depend on the [`FactorStructure`]. Under
//! `Correlation`, a 2×2 factor log is persymmetric, `[[a, b], [b, a]]`, and
//! carries the two coordinates `(a, b)`; under `Covariance` (and for every
//! factor of size ≥ 3) each factor carries its full half-vectorization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    kron_apply, kron_apply_columns, kron_chain, spd_eigen, sym_eigen, sym_exp, unvech, EigenBasis, HalfVecIndex,
    SparseMatrix, SymMatrix, MATERIALIZATION_LIMIT,
};

/// Default cap on `Π n_j` for any construction that indexes vech space.
pub const DIMENSION_CAP: usize = MATERIALIZATION_LIMIT;

/// How each factor log is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorStructure {
    /// 2×2 factors use the persymmetric `(a, b)` coordinates; larger factors
    /// use the full vech.
    #[default]
    Correlation,
    /// Every factor uses the full vech.
    Covariance,
}

/// Ordered factor dimensions plus the number of appended pseudo-variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactorizationSpec {
    dims: Vec<usize>,
    pad: usize,
}

impl FactorizationSpec {
    /// A spec with no padding.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        Self::with_pad(dims, 0)
    }

    pub fn with_pad(dims: Vec<usize>, pad: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpec("at least one factor is required".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidSpec(format!("factor dimension {d} is below 2")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidSpec("product of dimensions overflows".into()))?;
        if pad >= n {
            return Err(Error::InvalidSpec(format!("padding {pad} leaves no data columns in {n}")));
        }
        Ok(FactorizationSpec { dims, pad })
    }

    /// Spec whose padding brings `data_dim` up to the product of `dims`.
    pub fn for_data(dims: Vec<usize>, data_dim: usize) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n < data_dim {
            return Err(Error::InvalidSpec(format!(
                "factorization of size {n} is smaller than the data dimension {data_dim}"
            )));
        }
        Self::with_pad(dims, n - data_dim)
    }

    /// `v` binary factors.
    pub fn binary(v: usize) -> Result<Self> {
        Self::new(vec![2; v])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn v(&self) -> usize {
        self.dims.len()
    }

    pub fn n_effective(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data_dim(&self) -> usize {
        self.n_effective() - self.pad
    }

    pub fn is_binary(&self) -> bool {
        self.dims.iter().all(|&d| d == 2)
    }

    /// Free correlation parameters `Σ n_j(n_j − 1)/2`.
    pub fn correlation_param_count(&self) -> usize {
        self.dims.iter().map(|d| d * (d - 1) / 2).sum()
    }

    /// Identified parameter count under `structure`, equal to `rank(E)`.
    pub fn param_count(&self, structure: FactorStructure) -> usize {
        1 + self.dims.iter().map(|&d| factor_coordinate_count(d, structure) - 1).sum::<usize>()
    }

    /// Human-readable label such as `2x2x2` or `4x2+1`.
    pub fn label(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let mut s = dims.join("x");
        if self.pad > 0 {
            s.push_str(&format!("+{}", self.pad));
        }
        s
    }
}

fn factor_coordinate_count(d: usize, structure: FactorStructure) -> usize {
    if d == 2 && structure == FactorStructure::Correlation {
        2
    } else {
        d * (d + 1) / 2
    }
}

/// Symmetric 0/1 basis matrices for one factor log; the identity direction is
/// expressed separately by [`identity_coordinates`].
fn factor_basis(d: usize, structure: FactorStructure) -> Vec<DMatrix<f64>> {
    if d == 2 && structure == FactorStructure::Correlation {
        let i = DMatrix::identity(2, 2);
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        return vec![i, j];
    }
    HalfVecIndex::new(d)
        .pairs()
        .map(|(r, c)| {
            let mut u = DMatrix::zeros(d, d);
            u[(r, c)] = 1.0;
            u[(c, r)] = 1.0;
            u
        })
        .collect()
}

/// Coordinates of `I_{n_j}` in the factor basis.
fn identity_coordinates(d: usize, structure: FactorStructure) -> Vec<f64> {
    if d == 2 && structure == FactorStructure::Correlation {
        return vec![1.0, 0.0];
    }
    HalfVecIndex::new(d).pairs().map(|(r, c)| if r == c { 1.0 } else { 0.0 }).collect()
}

/// One column of the reduced design.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignColumn {
    /// Coefficient on `I_n`.
    Global,
    /// Coefficient on `I ⊗ … ⊗ U ⊗ … ⊗ I` with `U` in position `factor`.
    Factor { factor: usize, element: DMatrix<f64> },
}

/// `E_*`, the reduced `E`, and the null space of `E_*`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    spec: FactorizationSpec,
    structure: FactorStructure,
    star_columns: Vec<(usize, DMatrix<f64>)>,
    columns: Vec<DesignColumn>,
    e_star: SparseMatrix,
    e: SparseMatrix,
    null_basis: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(spec: FactorizationSpec, structure: FactorStructure) -> Result<Self> {
        Self::with_cap(spec, structure, DIMENSION_CAP)
    }

    pub fn with_cap(spec: FactorizationSpec, structure: FactorStructure, cap: usize) -> Result<Self> {
        let n = spec.n_effective();
        if n > cap {
            return Err(Error::DimensionOverflow { what: "design matrix", requested: n, limit: cap });
        }
        let mut star_columns = Vec::new();
        for (j, &d) in spec.dims().iter().enumerate() {
            for u in factor_basis(d, structure) {
                star_columns.push((j, u));
            }
        }
        let mut columns = vec![DesignColumn::Global];
        for (j, &d) in spec.dims().iter().enumerate() {
            let basis = factor_basis(d, structure);
            let ident = identity_coordinates(d, structure);
            // Drop the first identity-carrying coordinate of each factor; the
            // remaining elements together with the global column span the
            // factor's log space.
            let drop = ident.iter().position(|&c| c != 0.0).expect("identity has support");
            for (k, u) in basis.into_iter().enumerate() {
                if k != drop {
                    columns.push(DesignColumn::Factor { factor: j, element: u });
                }
            }
        }

        let dims = spec.dims().to_vec();
        let e_star = SparseMatrix::new(
            n * (n + 1) / 2,
            star_columns.len(),
            star_columns
                .iter()
                .enumerate()
                .flat_map(|(c, (j, u))| lifted_vech_entries(&dims, *j, u).map(move |r| (r, c, 1.0)))
                .collect(),
        );
        let e = SparseMatrix::new(
            n * (n + 1) / 2,
            columns.len(),
            columns
                .iter()
                .enumerate()
                .flat_map(|(c, col)| {
                    let entries: Vec<usize> = match col {
                        DesignColumn::Global => {
                            let idx = HalfVecIndex::new(n);
                            (0..n).map(|i| idx.pos(i, i)).collect()
                        }
                        DesignColumn::Factor { factor, element } => {
                            lifted_vech_entries(&dims, *factor, element).collect()
                        }
                    };
                    entries.into_iter().map(move |r| (r, c, 1.0))
                })
                .collect(),
        );

        let v = spec.v();
        let mut offsets = Vec::with_capacity(v);
        let mut acc = 0;
        for &d in spec.dims() {
            offsets.push(acc);
            acc += factor_coordinate_count(d, structure);
        }
        let mut null_basis = DMatrix::zeros(star_columns.len(), v.saturating_sub(1));
        let id0 = identity_coordinates(spec.dims()[0], structure);
        for j in 1..v {
            for (k, c) in id0.iter().enumerate() {
                null_basis[(offsets[0] + k, j - 1)] += c;
            }
            for (k, c) in identity_coordinates(spec.dims()[j], structure).iter().enumerate() {
                null_basis[(offsets[j] + k, j - 1)] -= c;
            }
        }
        let gram = e.gram();
        Ok(DesignMatrix { spec, structure, star_columns, columns, e_star, e, null_basis, gram })
    }

    /// `v` binary factors with the correlation structure.
    pub fn binary(v: usize) -> Result<Self> {
        Self::new(FactorizationSpec::binary(v)?, FactorStructure::Correlation)
    }

    pub fn spec(&self) -> &FactorizationSpec {
        &self.spec
    }

    pub fn structure(&self) -> FactorStructure {
        self.structure
    }

    pub fn n(&self) -> usize {
        self.spec.n_effective()
    }

    pub fn q(&self) -> usize {
        self.columns.len()
    }

    pub fn q_star(&self) -> usize {
        self.star_columns.len()
    }

    pub fn columns(&self) -> &[DesignColumn] {
        &self.columns
    }

    pub fn e_star(&self) -> &SparseMatrix {
        &self.e_star
    }

    pub fn e(&self) -> &SparseMatrix {
        &self.e
    }

    /// Columns span the null space of `E_*`.
    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    /// `E'E`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// True when the spec is binary and the structure is `Correlation`, i.e.
    /// `θ = (Σ a_j, b_1, …, b_v)`.
    pub fn is_binary_correlation(&self) -> bool {
        self.spec.is_binary() && self.structure == FactorStructure::Correlation
    }

    /// `E'WE` for a dense weight on vech space.
    pub fn weighted_gram(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let e = self.e.to_dense();
        e.transpose() * w * e
    }

    /// Maps stacked factor coordinates `θ†` to the reduced `θ` with
    /// `E θ = E_* θ†`.
    pub fn project(&self, theta_star: &[f64]) -> Result<DVector<f64>> {
        if theta_star.len() != self.q_star() {
            return Err(Error::DimensionMismatch(format!(
                "θ† has length {}, expected {}",
                theta_star.len(),
                self.q_star()
            )));
        }
        let mut out = Vec::with_capacity(self.q());
        out.push(0.0);
        let mut offset = 0;
        for &d in self.spec.dims() {
            let k = factor_coordinate_count(d, self.structure);
            let coords = &theta_star[offset..offset + k];
            offset += k;
            let ident = identity_coordinates(d, self.structure);
            let drop = ident.iter().position(|&c| c != 0.0).expect("identity has support");
            let shift = coords[drop];
            out[0] += shift;
            for (i, (&c, &id)) in coords.iter().zip(&ident).enumerate() {
                if i != drop {
                    out.push(c - shift * id);
                }
            }
        }
        Ok(DVector::from_vec(out))
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.q() {
            return Err(Error::DimensionMismatch(format!("θ has length {}, expected {}", theta.len(), self.q())));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("θ has non-finite entries".into()));
        }
        Ok(())
    }

    /// Factor logs `Ω_j`; the global coefficient is carried by the first factor.
    pub fn factor_logs(&self, theta: &[f64]) -> Result<Vec<SymMatrix>> {
        self.check_theta(theta)?;
        let mut logs: Vec<DMatrix<f64>> = self.spec.dims().iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (col, &t) in self.columns.iter().zip(theta) {
            match col {
                DesignColumn::Global => logs[0] += DMatrix::identity(self.spec.dims()[0], self.spec.dims()[0]) * t,
                DesignColumn::Factor { factor, element } => logs[*factor] += element * t,
            }
        }
        logs.into_iter().map(SymMatrix::from_lower).collect()
    }

    /// `unvech(E θ)`, materialized.
    pub fn omega(&self, theta: &[f64]) -> Result<SymMatrix> {
        self.check_theta(theta)?;
        unvech(self.n(), self.e.mul_vec(theta).as_slice())
    }

    /// `vech(Ω)` from the factor logs, via `E θ`.
    pub fn forward(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        Ok(self.e.mul_vec(theta))
    }

    /// `E'D_n' vec X`: entry `k` is `⟨B_k, X⟩` for the full-space basis
    /// matrix `B_k` of column `k`.
    pub fn adjoint(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let traces: Vec<DMatrix<f64>> = (0..self.spec.v()).map(|j| partial_trace(self.spec.dims(), j, x)).collect();
        DVector::from_iterator(
            self.q(),
            self.columns.iter().map(|col| match col {
                DesignColumn::Global => x.trace(),
                DesignColumn::Factor { factor, element } => traces[*factor].dot(element),
            }),
        )
    }

    /// `E' vech X`.
    pub fn vech_adjoint(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let n = x.nrows();
        let halved = DMatrix::from_fn(n, n, |i, j| if i == j { x[(i, j)] } else { 0.5 * x[(i, j)] });
        self.adjoint(&halved)
    }

    /// Dense full-space basis matrix `B_k` of column `k`.
    pub fn column_matrix(&self, k: usize) -> DMatrix<f64> {
        let factors = self.column_factors(k);
        factors.iter().fold(DMatrix::from_element(1, 1, 1.0), |acc, f| acc.kronecker(f))
    }

    fn column_factors(&self, k: usize) -> Vec<DMatrix<f64>> {
        let dims = self.spec.dims();
        let mut factors: Vec<DMatrix<f64>> = dims.iter().map(|&d| DMatrix::identity(d, d)).collect();
        if let DesignColumn::Factor { factor, element } = &self.columns[k] {
            factors[*factor] = element.clone();
        }
        factors
    }

    /// `Q' B_k Q` for an eigenbasis `Q`; Kronecker bases aligned with the
    /// spec are handled factorwise.
    pub fn column_in_basis(&self, k: usize, basis: &EigenBasis) -> DMatrix<f64> {
        match basis {
            EigenBasis::Kron { factors, transposed }
                if factors.len() == self.spec.v()
                    && factors.iter().zip(self.spec.dims()).all(|(q, &d)| q.nrows() == d) =>
            {
                let rotated: Vec<DMatrix<f64>> = self
                    .column_factors(k)
                    .iter()
                    .zip(factors.iter().zip(transposed))
                    .map(|(u, (q, qt))| qt * u * q)
                    .collect();
                rotated.iter().fold(DMatrix::from_element(1, 1, 1.0), |acc, f| acc.kronecker(f))
            }
            _ => basis.to_eigen(&self.column_matrix(k)),
        }
    }
}

/// vech positions of the lower-triangle ones of `I ⊗ … ⊗ U ⊗ … ⊗ I`, with `U`
/// a 0/1 symmetric matrix in position `j`.
fn lifted_vech_entries<'a>(dims: &'a [usize], j: usize, u: &'a DMatrix<f64>) -> impl Iterator<Item = usize> + 'a {
    let n: usize = dims.iter().product();
    let before: usize = dims[..j].iter().product();
    let after: usize = dims[j + 1..].iter().product();
    let d = dims[j];
    let idx = HalfVecIndex::new(n);
    (0..d).flat_map(move |l| (l..d).map(move |k| (k, l))).filter(move |&(k, l)| u[(k, l)] != 0.0).flat_map(
        move |(k, l)| {
            (0..before)
                .flat_map(move |a| (0..after).map(move |c| idx.pos((a * d + k) * after + c, (a * d + l) * after + c)))
        },
    )
}

/// Contraction of `X` over every factor except `j`:
/// `P[k, l] = Σ_{a, c} X[(a n_j + k) m + c, (a n_j + l) m + c]`.
pub fn partial_trace(dims: &[usize], j: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let before: usize = dims[..j].iter().product();
    let after: usize = dims[j + 1..].iter().product();
    let d = dims[j];
    DMatrix::from_fn(d, d, |k, l| {
        let mut s = 0.0;
        for a in 0..before {
            for c in 0..after {
                s += x[((a * d + k) * after + c, (a * d + l) * after + c)];
            }
        }
        s
    })
}

/// Kronecker product of SPD factors, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerCorrelation {
    factors: Vec<SymMatrix>,
}

impl KroneckerCorrelation {
    pub fn new(factors: Vec<SymMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSpec("at least one factor is required".into()));
        }
        for f in &factors {
            spd_eigen(f)?;
        }
        Ok(KroneckerCorrelation { factors })
    }

    pub fn factors(&self) -> &[SymMatrix] {
        &self.factors
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(SymMatrix::dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(SymMatrix::dim).product()
    }

    pub fn materialize(&self) -> Result<SymMatrix> {
        kron_chain(&self.factors)
    }

    /// Factorwise inverses.
    pub fn inverse(&self) -> Result<KroneckerCorrelation> {
        Ok(KroneckerCorrelation {
            factors: self.factors.iter().map(|f| spd_eigen(f).map(|e| e.inverse())).collect::<Result<_>>()?,
        })
    }

    /// `log |Θ| = Σ_j (n / n_j) log |Θ_j|`.
    pub fn log_det(&self) -> Result<f64> {
        let n = self.dim() as f64;
        self.factors.iter().try_fold(0.0, |acc, f| {
            let e = spd_eigen(f)?;
            Ok(acc + n / f.dim() as f64 * e.values.iter().map(|l| l.ln()).sum::<f64>())
        })
    }

    /// `Θ x` without materializing `Θ`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        kron_apply(&self.raw_factors(), x)
    }

    /// `Θ X` column by column.
    pub fn apply_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        kron_apply_columns(&self.raw_factors(), x)
    }

    fn raw_factors(&self) -> Vec<DMatrix<f64>> {
        self.factors.iter().map(|f| f.matrix().clone()).collect()
    }

    /// All eigenvalues, sorted ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals = vec![1.0];
        for f in &self.factors {
            let e = sym_eigen(f);
            vals = vals.iter().flat_map(|a| e.values.iter().map(move |b| a * b)).collect();
        }
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Same factors rescaled to unit diagonal.
    pub fn to_correlation(&self) -> KroneckerCorrelation {
        KroneckerCorrelation {
            factors: self
                .factors
                .iter()
                .map(|f| {
                    let d: Vec<f64> = (0..f.dim()).map(|i| 1.0 / f.get(i, i)).collect();
                    f.scale_by_diagonal_sqrt(&d)
                })
                .collect(),
        }
    }
}

/// `Θ(θ) = exp(unvech(E θ))` in factored form.
pub fn theta_to_factors(theta: &[f64], design: &DesignMatrix) -> Result<KroneckerCorrelation> {
    let logs = design.factor_logs(theta)?;
    Ok(KroneckerCorrelation { factors: logs.iter().map(sym_exp).collect() })
}

/// `Θ(θ)` with every factor rescaled to unit diagonal.
pub fn theta_to_correlation(theta: &[f64], design: &DesignMatrix) -> Result<KroneckerCorrelation> {
    Ok(theta_to_factors(theta, design)?.to_correlation())
}

/// Binary-case map `θ ↦ ρ`, `ρ_j = tanh θ_{j+1}`.
pub fn theta_to_rho(theta: &[f64]) -> Vec<f64> {
    theta.iter().skip(1).map(|b| b.tanh()).collect()
}

/// Binary-case map `ρ ↦ θ = (Σ ½ log(1 − ρ_j²), atanh ρ_1, …)`.
pub fn rho_to_theta(rho: &[f64]) -> Result<Vec<f64>> {
    let mut theta = Vec::with_capacity(rho.len() + 1);
    theta.push(0.0);
    for (index, &r) in rho.iter().enumerate() {
        if !(r.abs() < 1.0) {
            return Err(Error::RhoOutOfRange { index, value: r });
        }
        theta[0] += 0.5 * (-r * r).ln_1p();
        theta.push(r.atanh());
    }
    Ok(theta)
}

/// Binary correlation factors `[[1, ρ_j], [ρ_j, 1]]`.
pub fn binary_correlation(rho: &[f64]) -> Result<KroneckerCorrelation> {
    for (index, &r) in rho.iter().enumerate() {
        if !(r.abs() < 1.0) {
            return Err(Error::RhoOutOfRange { index, value: r });
        }
    }
    Ok(KroneckerCorrelation {
        factors: rho.iter().map(|&r| SymMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { r })).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{spd_log, vech};

    #[test]
    fn single_binary_factor() {
        let d = DesignMatrix::binary(1).unwrap();
        assert_eq!(d.e_star().to_dense(), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));
        assert_eq!(d.e().to_dense(), d.e_star().to_dense());
    }

    #[test]
    fn param_counts() {
        let s = FactorizationSpec::new(vec![4, 2]).unwrap();
        assert_eq!(s.param_count(FactorStructure::Covariance), 12);
        assert_eq!(s.param_count(FactorStructure::Correlation), 11);
        assert_eq!(FactorizationSpec::binary(3).unwrap().param_count(FactorStructure::Covariance), 7);
        assert_eq!(FactorizationSpec::binary(3).unwrap().param_count(FactorStructure::Correlation), 4);
    }

    #[test]
    fn rho_theta_example() {
        let t = rho_to_theta(&[0.6]).unwrap();
        assert!((t[0] - 0.5 * 0.64f64.ln()).abs() < 1e-15);
        assert!((t[1] - 0.5 * (1.6f64 / 0.4).ln()).abs() < 1e-15);
        assert!(matches!(rho_to_theta(&[0.2, -1.0]), Err(Error::RhoOutOfRange { index: 1, .. })));
    }

    #[test]
    fn binary_theta_reproduces_log() {
        let design = DesignMatrix::binary(2).unwrap();
        let rho = [0.3, -0.5];
        let theta = rho_to_theta(&rho).unwrap();
        let theta0 = binary_correlation(&rho).unwrap().materialize().unwrap();
        let lhs = vech(&spd_log(&theta0).unwrap());
        let rhs = design.forward(&theta).unwrap();
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn adjoint_matches_sparse_transpose() {
        let design =
            DesignMatrix::new(FactorizationSpec::new(vec![3, 2]).unwrap(), FactorStructure::Covariance).unwrap();
        let x = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 + (i + j) as f64 * 0.1);
        let x = &x + x.transpose();
        let lhs = design.vech_adjoint(&x);
        let rhs = design.e().tr_mul_vec(vech(&SymMatrix::from_lower(x).unwrap()).as_slice());
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn padding_bookkeeping() {
        let s = FactorizationSpec::for_data(vec![2, 2, 2], 7).unwrap();
        assert_eq!((s.pad(), s.data_dim(), s.label()), (1, 7, "2x2x2+1".to_string()));
        assert!(FactorizationSpec::for_data(vec![2, 2], 5).is_err());
        assert!(FactorizationSpec::new(vec![2, 1]).is_err());
    }
}
