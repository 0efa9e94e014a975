use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-8;
pub const SQRT_JITTER: f64 = 1e-6;

/// Gaussian fit of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl DistributionStats {
    /// Mean and unbiased covariance of the rows of `features`.
    pub fn from_features(features: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = features.shape();
        if n < 2 {
            return Err(Error::Argument(format!("need at least 2 samples, got {n}")));
        }
        let mean = DVector::from_iterator(d, features.column_iter().map(|c| c.sum() / n as f64));
        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
        symmetrize(&mut cov);
        Ok(Self { mean, cov, n })
    }

    /// Stats given directly; the covariance must be symmetric.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::dim(format!("({d}, {d})"), format!("{:?}", cov.shape())));
        }
        check_symmetric(&cov)?;
        Ok(Self { mean, cov, n })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::Argument(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `Tr((A^½ B A^½)^½)`, or `None` when the decomposition yields non-finite values.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ah = sqrtm_psd(a);
    let mut m = &ah * b * &ah;
    symmetrize(&mut m);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)?;
    let tr: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    tr.is_finite().then_some(tr)
}

pub fn frechet_distance(a: &DistributionStats, b: &DistributionStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dim(format!("dimension {}", a.dim()), format!("dimension {}", b.dim())));
    }
    check_symmetric(&a.cov)?;
    check_symmetric(&b.cov)?;
    let tr = match trace_sqrt_product(&a.cov, &b.cov) {
        Some(t) => t,
        None => {
            let eps = DMatrix::identity(a.dim(), a.dim()) * SQRT_JITTER;
            trace_sqrt_product(&(&a.cov + &eps), &(&b.cov + &eps))
                .ok_or(Error::Numeric { component: "frechet matrix square root".into() })?
        }
    };
    let dist = (&a.mean - &b.mean).norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * tr;
    Ok(dist.max(0.0))
}
