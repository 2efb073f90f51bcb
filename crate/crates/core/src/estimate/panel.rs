use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matcore::SymMatrix;

/// `T × n` observations with the centering vector `μ` and the diagonal
/// scaling `D` used to standardize them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    x: DMatrix<f64>,
    names: Vec<String>,
    mu: DVector<f64>,
    d: DVector<f64>,
}

impl ReturnPanel {
    /// Panel standardized by the sample mean and the sample variances (1/T).
    pub fn new(x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        Self::with_moments(x, names, None, None)
    }

    /// Panel with optionally known `μ` and `D`; missing ones are estimated.
    pub fn with_moments(
        x: DMatrix<f64>,
        names: Vec<String>,
        mu: Option<DVector<f64>>,
        d: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (t, n) = x.shape();
        if t < 2 {
            return Err(Error::InvalidPanel(format!("need at least 2 observations, got {t}")));
        }
        if n == 0 {
            return Err(Error::InvalidPanel("panel has no columns".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("panel contains non-finite values".into()));
        }
        let names = if names.is_empty() { (0..n).map(|i| format!("x{i}")).collect() } else { names };
        if names.len() != n {
            return Err(Error::InvalidPanel(format!("{} names for {n} columns", names.len())));
        }
        let mu = match mu {
            Some(m) if m.len() != n => {
                return Err(Error::InvalidPanel(format!("mean has length {}, expected {n}", m.len())))
            }
            Some(m) => m,
            None => DVector::from_iterator(n, x.column_iter().map(|c| c.sum() / t as f64)),
        };
        let d = match d {
            Some(d) if d.len() != n => {
                return Err(Error::InvalidPanel(format!("scaling has length {}, expected {n}", d.len())))
            }
            Some(d) => d,
            None => DVector::from_iterator(
                n,
                x.column_iter()
                    .zip(mu.iter())
                    .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t as f64),
            ),
        };
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPanel(format!("column {} has scale {v}", names[i])));
        }
        Ok(ReturnPanel { x, names, mu, d })
    }

    /// Panel with `μ = 0` and `D = I` taken as known.
    pub fn standardized_known(x: DMatrix<f64>) -> Result<Self> {
        let n = x.ncols();
        Self::with_moments(x, Vec::new(), Some(DVector::zeros(n)), Some(DVector::from_element(n, 1.0)))
    }

    pub fn t(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// Rows `y_t = D^{-1/2}(x_t − μ)`.
    pub fn standardized(&self) -> DMatrix<f64> {
        let scale: Vec<f64> = self.d.iter().map(|v| 1.0 / v.sqrt()).collect();
        DMatrix::from_fn(self.t(), self.n(), |t, i| (self.x[(t, i)] - self.mu[i]) * scale[i])
    }

    /// Appends `pad` independent standard normal columns with known zero
    /// mean and unit variance.
    pub fn padded(&self, pad: usize, seed: u64) -> ReturnPanel {
        if pad == 0 {
            return self.clone();
        }
        let (t, n) = self.x.shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.x.clone().resize_horizontally(n + pad, 0.0);
        for j in n..n + pad {
            for i in 0..t {
                x[(i, j)] = StandardNormal.sample(&mut rng);
            }
        }
        let mut names = self.names.clone();
        names.extend((0..pad).map(|k| format!("pad{k}")));
        let mu = self.mu.clone().resize_vertically(n + pad, 0.0);
        let d = self.d.clone().resize_vertically(n + pad, 1.0);
        ReturnPanel { x, names, mu, d }
    }

    /// Sub-panel of consecutive rows with freshly estimated moments.
    pub fn window(&self, start: usize, len: usize) -> Result<ReturnPanel> {
        if start + len > self.t() {
            return Err(Error::InvalidConfig(format!(
                "window {start}..{} exceeds {} observations",
                start + len,
                self.t()
            )));
        }
        ReturnPanel::new(self.x.rows(start, len).into_owned(), self.names.clone())
    }
}

/// `M_T = D^{-1/2}[(1/T) Σ (x_t − μ)(x_t − μ)'] D^{-1/2}`.
pub fn sample_moment_matrix(panel: &ReturnPanel) -> SymMatrix {
    let y = panel.standardized();
    let m = y.tr_mul(&y) / panel.t() as f64;
    SymMatrix::symmetrize(&m).expect("Gram matrix is square")
}

/// Everything the likelihood needs from a panel.
#[derive(Debug, Clone)]
pub struct SampleStats {
    pub m: SymMatrix,
    pub t: usize,
    pub log_det_d: f64,
}

impl SampleStats {
    pub fn from_panel(panel: &ReturnPanel) -> Self {
        SampleStats { m: sample_moment_matrix(panel), t: panel.t(), log_det_d: panel.d().iter().map(|v| v.ln()).sum() }
    }

    /// Statistics for a known `M_T` with `D = I`.
    pub fn from_moment(m: SymMatrix, t: usize) -> Self {
        SampleStats { m, t, log_det_d: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.m.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_moments_give_raw_gram() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
        let p = ReturnPanel::standardized_known(x.clone()).unwrap();
        let m = sample_moment_matrix(&p);
        assert!((m.matrix() - x.tr_mul(&x) / 3.0).amax() < 1e-15);
    }

    #[test]
    fn sample_moments_give_unit_diagonal() {
        let x = DMatrix::from_fn(50, 3, |i, j| ((i * 13 + j * 7) % 11) as f64 - 4.0 + j as f64);
        let m = sample_moment_matrix(&ReturnPanel::new(x, Vec::new()).unwrap());
        for i in 0..3 {
            assert!((m.get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_panels() {
        assert!(ReturnPanel::new(DMatrix::from_element(1, 2, 1.0), Vec::new()).is_err());
        assert!(ReturnPanel::new(DMatrix::from_element(4, 2, 1.0), Vec::new()).is_err());
        let mut x = DMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        x[(0, 0)] = f64::NAN;
        assert!(ReturnPanel::new(x, Vec::new()).is_err());
    }

    #[test]
    fn padding_appends_known_columns() {
        let x = DMatrix::from_fn(10, 3, |i, j| (i * j) as f64 + (i % 3) as f64);
        let p = ReturnPanel::new(x, Vec::new()).unwrap().padded(2, 1);
        assert_eq!(p.n(), 5);
        assert_eq!(p.d()[4], 1.0);
        assert_eq!(p.names()[3], "pad0");
    }
}
